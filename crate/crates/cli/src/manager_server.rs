//! Cluster manager over real TCP sockets.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use edgesim_core::manager::{encode_reply, ClusterManager, ConnId, ConnMode};

pub struct ServerConfig {
    pub mode: ConnMode,
    pub equal: bool,
    /// Serial mode forgets ids not heard from for this many seconds.
    pub stale_after: f64,
}

/// Binds `127.0.0.1:port`, announces the bound port on stdout and serves forever.
pub fn serve(port: u16, cfg: ServerConfig) -> io::Result<()> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    let bound = listener.local_addr()?.port();
    println!("{bound}");
    io::stdout().flush()?;
    log::info!("manager listening on 127.0.0.1:{bound} ({:?})", cfg.mode);

    let state = Arc::new(Mutex::new(ClusterManager::new(cfg.equal, cfg.mode)));
    let started = Instant::now();
    for (conn, stream) in (1..).zip(listener.incoming()) {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        match cfg.mode {
            ConnMode::Serial => {
                if let Err(e) = serve_serial(&state, conn, stream, started, cfg.stale_after) {
                    log::warn!("conn {conn}: {e}");
                }
            }
            ConnMode::Concurrent => {
                let state = Arc::clone(&state);
                thread::spawn(move || {
                    if let Err(e) = serve_persistent(&state, conn, stream, started) {
                        log::warn!("conn {conn}: {e}");
                    }
                });
            }
        }
    }
    Ok(())
}

/// One request, one reply, then the manager closes the connection.
fn serve_serial(
    state: &Mutex<ClusterManager>,
    conn: ConnId,
    stream: TcpStream,
    started: Instant,
    stale_after: f64,
) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut line = String::new();
    if BufReader::new(stream).read_line(&mut line)? == 0 {
        return Ok(());
    }
    let now = started.elapsed().as_secs_f64();
    let reply = {
        let mut m = state.lock().expect("manager lock");
        m.prune_stale(now, stale_after);
        m.handle_line(conn, &line, now)
    };
    let routine = reply.is_ok();
    if let Ok(r) = reply {
        writer.write_all(encode_reply(&r).as_bytes())?;
    }
    state.lock().expect("manager lock").on_disconnect(conn, routine);
    Ok(())
}

/// A controller keeps its connection open and sends one line per heartbeat.
fn serve_persistent(state: &Mutex<ClusterManager>, conn: ConnId, stream: TcpStream, started: Instant) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    let result = (|| {
        for line in reader.lines() {
            let line = line?;
            let now = started.elapsed().as_secs_f64();
            let reply = state.lock().expect("manager lock").handle_line(conn, &line, now);
            match reply {
                Ok(r) => writer.write_all(encode_reply(&r).as_bytes())?,
                Err(_) => break,
            }
        }
        Ok(())
    })();
    state.lock().expect("manager lock").on_disconnect(conn, false);
    result
}
