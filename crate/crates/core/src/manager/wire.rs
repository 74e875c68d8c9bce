//! Newline-delimited ASCII protocol between controllers and the manager.
//!
//! Request: decimal controller id, then `\n`.
//! Reply: `ROLE:count:order\n` with ROLE one of MASTER, SLAVE, EQUAL, or
//! `REDRAW\n` when the id is already held by another live connection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("empty message")]
    Empty,
    #[error("controller id must be a positive decimal integer, got {0:?}")]
    BadId(String),
    #[error("malformed reply {0:?}")]
    BadReply(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Master,
    Slave,
    Equal,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Master => "MASTER",
            Role::Slave => "SLAVE",
            Role::Equal => "EQUAL",
        })
    }
}

impl FromStr for Role {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "MASTER" => Ok(Role::Master),
            "SLAVE" => Ok(Role::Slave),
            "EQUAL" => Ok(Role::Equal),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub role: Role,
    pub count: usize,
    pub order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reply {
    Assign(Assignment),
    Redraw,
}

fn strip_line(line: &str) -> &str {
    line.strip_suffix('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).unwrap_or(line)
}

pub fn encode_request(cont_id: u32) -> String {
    format!("{cont_id}\n")
}

pub fn parse_request(line: &str) -> Result<u32, WireError> {
    let body = strip_line(line);
    if body.is_empty() {
        return Err(WireError::Empty);
    }
    if !body.bytes().all(|b| b.is_ascii_digit()) {
        return Err(WireError::BadId(body.to_string()));
    }
    match body.parse::<u32>() {
        Ok(0) | Err(_) => Err(WireError::BadId(body.to_string())),
        Ok(id) => Ok(id),
    }
}

pub fn encode_reply(reply: &Reply) -> String {
    match reply {
        Reply::Assign(a) => format!("{}:{}:{}\n", a.role, a.count, a.order),
        Reply::Redraw => "REDRAW\n".to_string(),
    }
}

pub fn parse_reply(line: &str) -> Result<Reply, WireError> {
    let body = strip_line(line);
    if body == "REDRAW" {
        return Ok(Reply::Redraw);
    }
    let bad = || WireError::BadReply(body.to_string());
    let mut parts = body.split(':');
    let (Some(role), Some(count), Some(order), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    let role: Role = role.parse().map_err(|_| bad())?;
    let count: usize = count.parse().map_err(|_| bad())?;
    let order: usize = order.parse().map_err(|_| bad())?;
    if count == 0 || order >= count {
        return Err(bad());
    }
    Ok(Reply::Assign(Assignment { role, count, order }))
}
