//! Acceptance run over the bundled scenarios.
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fail.
//! Tolerances are pinned as constants next to each check.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use edgesim_core::manager::Role;
use edgesim_core::scenario::{parse_scenario, Scenario};
use edgesim_core::sim::{run_scenario, ByteClass, MetricsReport};

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

type Check = Result<String, String>;
type Criterion = (&'static str, fn(&mut Runs) -> Check);

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn load(name: &str) -> Scenario {
    let text = std::fs::read_to_string(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    parse_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

struct Runs {
    cache: BTreeMap<String, MetricsReport>,
}

impl Runs {
    fn get(&mut self, name: &str) -> Result<&MetricsReport, String> {
        if !self.cache.contains_key(name) {
            let r = run_scenario(&load(name)).map_err(|e| format!("{name}: {e}"))?;
            self.cache.insert(name.to_string(), r);
        }
        Ok(&self.cache[name])
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rtts(r: &MetricsReport, label: &str) -> Result<Vec<Option<f64>>, String> {
    r.rtt.get(label).cloned().ok_or_else(|| format!("no ping train `{label}`"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Round-trip propagation between two hosts, from the scenario's link delays
/// along the path the report recorded or, for pings, the given node chain.
fn chain_rtt_ms(s: &Scenario, chain: &[&str]) -> f64 {
    let node = |end: &str| end.split(':').next().unwrap().to_string();
    let mut one_way = 0.0;
    for w in chain.windows(2) {
        let l = s
            .topology
            .links
            .iter()
            .find(|l| {
                let (a, b) = (node(&l.a), node(&l.b));
                (a == w[0] && b == w[1]) || (a == w[1] && b == w[0])
            })
            .unwrap_or_else(|| panic!("no link {} - {}", w[0], w[1]));
        one_way += l.delay_ms;
    }
    2.0 * one_way
}

// ---- criteria ---------------------------------------------------------------

/// Standalone switches keep forwarding after every control channel is cut;
/// secure ones drop everything.
fn standalone_continuity(runs: &mut Runs) -> Check {
    const SPREAD_FACTOR: f64 = 2.0;
    const MAX_RUNTIME: Duration = Duration::from_secs(5);

    let s = load("failover_standalone");
    let r = runs.get("failover_standalone")?;
    let after = rtts(r, "after")?;
    ensure(after.len() == 4 && after.iter().all(Option::is_some), || format!("standalone losses: {after:?}"))?;
    let after: Vec<f64> = after.into_iter().flatten().collect();
    let baseline = chain_rtt_ms(&s, &["h1", "s1", "s2", "h2"]);
    let spread = after.iter().cloned().fold(f64::MIN, f64::max) - after.iter().cloned().fold(f64::MAX, f64::min);
    let worst = after.iter().cloned().fold(f64::MIN, f64::max);
    ensure(worst <= SPREAD_FACTOR * baseline, || format!("rtt {worst} ms > {SPREAD_FACTOR}x {baseline} ms"))?;

    let secure = runs.get("failover_secure")?;
    let lost = rtts(secure, "after")?;
    ensure(lost.len() == 4 && lost.iter().all(Option::is_none), || format!("secure mode delivered: {lost:?}"))?;

    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_edgesim"))
        .arg("run")
        .arg(scenario_path("failover_standalone"))
        .arg("--out-dir")
        .arg(out.path())
        .status()
        .map_err(|e| e.to_string())?;
    let took = t0.elapsed();
    ensure(status.success(), || format!("cli exited {status}"))?;
    ensure(took < MAX_RUNTIME, || format!("runtime {took:?}"))?;
    Ok(format!(
        "standalone 4/4 delivered, max {worst:.3} ms (baseline {baseline:.3}, spread {spread:.3}); secure 4/4 lost; runtime {:.0} ms",
        took.as_secs_f64() * 1e3
    ))
}

fn reactive_rtt_shape(runs: &mut Runs) -> Check {
    const FACTOR: f64 = 5.0;
    let r = runs.get("reactive_first_ping")?;
    let v: Vec<f64> = rtts(r, "ping0")?.into_iter().collect::<Option<_>>().ok_or("lost ping")?;
    let first = v[0];
    let rest = median(v[1..].to_vec());
    ensure(first >= FACTOR * rest, || format!("first {first} ms < {FACTOR}x median {rest} ms"))?;
    Ok(format!("first {first:.3} ms, later median {rest:.3} ms ({:.0}x)", first / rest))
}

fn elastic_activation(runs: &mut Runs) -> Check {
    const MIN_FIRST_MS: f64 = 500.0;
    const STEADY_MAX_MS: f64 = 10.0;
    let s = load("elastic_activation");
    let r = runs.get("elastic_activation")?;
    let cold: Vec<f64> = rtts(r, "cold")?.into_iter().collect::<Option<_>>().ok_or("cold ping lost")?;
    ensure(cold[0] >= MIN_FIRST_MS, || format!("first {} ms", cold[0]))?;
    ensure(cold[0] > cold[1] && cold[1] > cold[2], || format!("not decreasing: {:?}", &cold[..3]))?;
    let steady = *cold.last().unwrap();
    ensure(steady < STEADY_MAX_MS, || format!("steady {steady} ms"))?;

    let farm = r.farm.as_ref().ok_or("no farm report")?;
    let idle = s.farm.as_ref().unwrap().idle_timer.ok_or("scenario has no idle timer")?;
    let last_cold = s.demands.iter().find(|d| d.label(0) == "cold").map(|d| match d {
        edgesim_core::scenario::Demand::Ping { start, count, interval, .. } => start + (*count as f64 - 1.0) * interval,
        _ => unreachable!(),
    });
    let off = farm.power_events.iter().find(|e| e.state == "off").ok_or("segment never reported off")?;
    ensure(off.time >= last_cold.unwrap() + idle, || format!("off at {} before idle timer", off.time))?;
    let rewake: Vec<Option<f64>> = rtts(r, "rewake")?;
    let first_rewake = rewake[0].ok_or("rewake ping lost")?;
    ensure(first_rewake >= MIN_FIRST_MS, || format!("rewake first {first_rewake} ms"))?;
    ensure(farm.activations == 2, || format!("{} activations", farm.activations))?;
    Ok(format!(
        "cold {:.1}/{:.1}/{:.1} ms, steady {steady:.2} ms; off at {:.1} s; rewake {first_rewake:.1} ms",
        cold[0], cold[1], cold[2], off.time
    ))
}

/// Mean aggregate rate over the seconds in which every flow is running.
fn busy_aggregate(r: &MetricsReport) -> Result<f64, String> {
    let from = r.flows.values().map(|f| f.start).fold(0.0, f64::max).ceil() as usize;
    let to = r.flows.values().map(|f| f.start + f.duration).fold(f64::MAX, f64::min).floor() as usize;
    ensure(to > from + 5, || format!("window {from}..{to} too short"))?;
    Ok(mean(&r.throughput_series[from..to]))
}

fn farm_select_throughput(runs: &mut Runs) -> Check {
    const BASE_MBPS: f64 = 10.0;
    const BASE_TOL: f64 = 0.05;
    const FARM_MBPS: f64 = 30.0;
    const FARM_TOL: f64 = 0.10;
    const MIN_GAIN: f64 = 1.5;
    let base = busy_aggregate(runs.get("farm_single_baseline")?)? / 1e6;
    let farm = busy_aggregate(runs.get("farm_single_vs_select")?)? / 1e6;
    ensure((base - BASE_MBPS).abs() <= BASE_TOL * BASE_MBPS, || format!("baseline {base} Mbps"))?;
    ensure((farm - FARM_MBPS).abs() <= FARM_TOL * FARM_MBPS, || format!("farm {farm} Mbps"))?;
    let gain = farm / base - 1.0;
    ensure(gain >= MIN_GAIN, || format!("gain {gain}"))?;
    Ok(format!("baseline {base:.2} Mbps, farm+select {farm:.2} Mbps (+{:.0}%)", gain * 100.0))
}

/// TCP rate once every UDP flow is up.
fn tcp_rate_with_all_udp(r: &MetricsReport) -> Result<f64, String> {
    let tcp = r.flows.get("tcp").ok_or("no tcp flow")?;
    let from = r
        .flows
        .values()
        .filter(|f| f.kind == "udp")
        .map(|f| f.established_at.unwrap_or(f64::MAX))
        .fold(0.0, f64::max)
        .ceil() as usize
        + 1;
    let to = (tcp.start + tcp.duration).floor() as usize;
    ensure(to > from + 5, || format!("window {from}..{to} too short"))?;
    Ok(mean(&tcp.rate_series[from..to]))
}

fn udp_unfairness(runs: &mut Runs) -> Check {
    const TOL: f64 = 0.02;
    const SELECT_GAIN: f64 = 2.0;
    let s = load("udp_unfairness");
    // Max-min with inelastic flows first: the path capacity minus the offered UDP load.
    let cap = 10e6;
    let udp: f64 = s
        .demands
        .iter()
        .filter_map(|d| match d {
            edgesim_core::scenario::Demand::Udp { rate_mbps, .. } => Some(rate_mbps * 1e6),
            _ => None,
        })
        .sum();
    let oracle = cap - udp;
    let plain = tcp_rate_with_all_udp(runs.get("udp_unfairness")?)?;
    ensure((plain - oracle).abs() <= TOL * oracle, || format!("tcp {plain} vs oracle {oracle}"))?;
    let select = tcp_rate_with_all_udp(runs.get("udp_unfairness_select")?)?;
    ensure(select >= SELECT_GAIN * plain, || format!("select tcp {select} < {SELECT_GAIN}x {plain}"))?;
    Ok(format!(
        "tcp {:.3} Mbps (oracle {:.3}); with select {:.3} Mbps ({:.2}x)",
        plain / 1e6,
        oracle / 1e6,
        select / 1e6,
        select / plain
    ))
}

fn arbitration_exactness(runs: &mut Runs) -> Check {
    let mut parts = vec![];
    for name in ["arbitration_fairness", "arbitration_fairness_dpid", "failover_election", "manager_modes"] {
        let p = &runs.get(name)?.packet_in;
        ensure(p.processed_by_none == 0 && p.processed_by_many == 0 && p.order_mismatches == 0, || {
            format!("{name}: none {} many {} mismatched {}", p.processed_by_none, p.processed_by_many, p.order_mismatches)
        })?;
        parts.push(format!("{name} {}", p.events));
    }
    Ok(format!("zero violations over Packet-In events: {}", parts.join(", ")))
}

fn processed(r: &MetricsReport) -> Vec<u64> {
    r.packet_in.per_controller.values().map(|c| c.processed).collect()
}

fn arbitration_fairness(runs: &mut Runs) -> Check {
    const MIN_EVENTS: u64 = 1000;
    const MAX_RR_DIFF: u64 = 1;
    const MIN_DPID_SKEW: f64 = 0.10;
    let rr = processed(runs.get("arbitration_fairness")?);
    let total: u64 = rr.iter().sum();
    ensure(rr.len() == 2 && total >= MIN_EVENTS, || format!("by_counter counts {rr:?}"))?;
    ensure(rr[0].abs_diff(rr[1]) <= MAX_RR_DIFF, || format!("by_counter counts {rr:?}"))?;
    let dp = processed(runs.get("arbitration_fairness_dpid")?);
    let dtotal: u64 = dp.iter().sum();
    let skew = dp[0].abs_diff(dp[1]) as f64 / dtotal as f64;
    ensure(skew >= MIN_DPID_SKEW, || format!("by_dpid counts {dp:?}"))?;
    Ok(format!("by_counter {rr:?}; by_dpid {dp:?} (skew {:.1}%)", skew * 100.0))
}

fn dpc_plus_other(r: &MetricsReport) -> u64 {
    r.control_bytes.class(ByteClass::DataPathControl) + r.control_bytes.class(ByteClass::OtherControlMsg)
}

fn overhead_tradeoff(runs: &mut Runs) -> Check {
    let rr = dpc_plus_other(runs.get("arbitration_fairness")?);
    let dp = dpc_plus_other(runs.get("arbitration_fairness_dpid")?);
    ensure(rr >= dp, || format!("by_counter {rr} < by_dpid {dp}"))?;
    Ok(format!("data-path + other bytes: by_counter {rr} >= by_dpid {dp}"))
}

/// Shares are taken in the busiest second of the run, the way the reference
/// decomposition of the peak load is reported. Whole-run shares are printed
/// alongside.
fn byte_decomposition(runs: &mut Runs) -> Check {
    const MAX_MANAGE: f64 = 0.02;
    const MIN_DPC: f64 = 0.70;
    let mut parts = vec![];
    for name in ["arbitration_fairness", "arbitration_fairness_dpid"] {
        let b = &runs.get(name)?.control_bytes;
        let (peak_s, peak) = b
            .per_second
            .iter()
            .enumerate()
            .max_by_key(|(_, row)| row.values().sum::<u64>())
            .ok_or("no per-second bytes")?;
        let total: u64 = peak.values().sum();
        let share = |c| peak.get(&c).copied().unwrap_or(0) as f64 / total as f64;
        let (m, d) = (share(ByteClass::ManageCluster), share(ByteClass::DataPathControl));
        let run_share = |c| b.class(c) as f64 / b.total as f64;
        let (rm, rd) = (run_share(ByteClass::ManageCluster), run_share(ByteClass::DataPathControl));
        ensure(m < MAX_MANAGE && d > MIN_DPC, || {
            format!("{name} peak second {peak_s}: manage {m:.4}, data-path {d:.4}")
        })?;
        parts.push(format!(
            "{name} peak s{peak_s}: manage {:.2}%, data-path {:.1}% (whole run {:.2}% / {:.1}%)",
            m * 100.0,
            d * 100.0,
            rm * 100.0,
            rd * 100.0
        ));
    }
    Ok(parts.join("; "))
}

fn with_seed(name: &str, seed: u64) -> Scenario {
    let mut s = load(name);
    s.seed = seed;
    s
}

fn election_and_failover(runs: &mut Runs) -> Check {
    const SEEDS: u64 = 12;
    let s = load("failover_election");
    let period = s.controllers.period;
    let r = runs.get("failover_election")?;
    let kill = r.failover.master_kill_time.ok_or("no master was killed")?;
    let elected = r.failover.new_master_time.ok_or("no new master")?;
    ensure(elected - kill <= 2.0 * period, || format!("re-election took {} s", elected - kill))?;
    ensure(r.failover.dataplane_loss_count == 0, || format!("{} pings lost", r.failover.dataplane_loss_count))?;
    let train = rtts(r, "ping0")?;
    let lost = train.iter().filter(|x| x.is_none()).count();
    ensure(lost == 0, || format!("{lost} pings lost in the run"))?;

    // The revived controller announces a fresh id; it must be MASTER on its
    // first heartbeat iff that id beats the survivor's.
    let revive_at = s
        .failures
        .iter()
        .find(|f| matches!(f.kind, edgesim_core::scenario::FailureKind::ReviveKilled))
        .map(|f| f.at)
        .ok_or("scenario has no revive")?;
    let (mut higher, mut lower) = (0, 0);
    for seed in 0..SEEDS {
        let r = run_scenario(&with_seed("failover_election", seed)).map_err(|e| e.to_string())?;
        let kill_at = r.failover.master_kill_time.ok_or("no kill")?;
        let victim = r
            .role_events
            .iter()
            .rev()
            .find(|e| e.time <= kill_at && e.role == Role::Master)
            .ok_or("no master before kill")?
            .controller
            .clone();
        let survivor_id = r
            .role_events
            .iter()
            .rfind(|e| e.controller != victim && e.time < revive_at)
            .ok_or("no survivor role")?
            .cont_id;
        let first = r
            .role_events
            .iter()
            .find(|e| e.controller == victim && e.time >= revive_at)
            .ok_or_else(|| format!("seed {seed}: revived controller never got a role"))?;
        ensure(first.time <= revive_at + period, || format!("seed {seed}: first role at {}", first.time))?;
        if first.cont_id > survivor_id {
            higher += 1;
            ensure(first.role == Role::Master, || format!("seed {seed}: higher id got {:?}", first.role))?;
        } else {
            lower += 1;
            ensure(first.role == Role::Slave, || format!("seed {seed}: lower id got {:?}", first.role))?;
        }
    }
    ensure(higher > 0 && lower > 0, || format!("seeds covered higher {higher}, lower {lower}"))?;
    Ok(format!(
        "new master {:.3} s after kill (bound {:.1} s), 0/{} pings lost; revive: {higher} higher-id MASTER, {lower} lower-id SLAVE",
        elected - kill,
        2.0 * period,
        train.len()
    ))
}

fn manager_modes(runs: &mut Runs) -> Check {
    let serial = runs.get("manager_modes")?.clone();
    let conc = runs.get("manager_modes_concurrent")?;
    let (bs, bc) = (serial.control_bytes.class(ByteClass::ManageCluster), conc.control_bytes.class(ByteClass::ManageCluster));
    ensure(bs > bc, || format!("serial {bs} <= concurrent {bc}"))?;
    ensure(serial.manager.heartbeats == conc.manager.heartbeats, || "heartbeat schedules differ".into())?;
    let controllers = serial.packet_in.per_controller.len() as u64;
    let per_controller = serial.manager.heartbeats / controllers;
    let (ss, sc) = (serial.manager.connection_setups, conc.manager.connection_setups);
    ensure(ss == per_controller * sc, || format!("setups {ss}/{sc} vs {per_controller} heartbeats per controller"))?;
    Ok(format!("manage bytes serial {bs} > concurrent {bc}; setups {ss}/{sc} = {per_controller} heartbeats per controller"))
}

fn loop_guard(runs: &mut Runs) -> Check {
    const MAX_PACKET_OUTS: u64 = 3;
    let s = load("loop_guard_ring");
    let r = runs.get("loop_guard_ring")?;
    let outs = r.packet_in.packet_outs;
    ensure(outs <= MAX_PACKET_OUTS, || format!("{outs} packet-outs"))?;
    ensure(r.quiescence.pending_at_end == 0, || format!("{} pending", r.quiescence.pending_at_end))?;
    const QUIET_WITHIN_S: f64 = 1.0;
    let sent = s.demands.first().ok_or("no demand")?.start();
    let quiet = r.quiescence.last_activity - sent;
    ensure(quiet <= QUIET_WITHIN_S, || format!("still active {quiet} s after the broadcast"))?;
    Ok(format!("{outs} packet-outs, quiet at {:.4} s, nothing pending", r.quiescence.last_activity))
}

fn oracle_suites(_: &mut Runs) -> Check {
    let a = oracles::check_shortest_paths(0xacce, 200)?;
    let b = oracles::check_maxmin(0xacce, 200)?;
    let c = oracles::check_cost_vectors()?;
    Ok(format!("{a}; {b}; {c}"))
}

const ALL_SCENARIOS: [&str; 14] = [
    "arbitration_fairness",
    "arbitration_fairness_dpid",
    "elastic_activation",
    "failover_election",
    "failover_secure",
    "failover_standalone",
    "farm_single_baseline",
    "farm_single_vs_select",
    "loop_guard_ring",
    "manager_modes",
    "manager_modes_concurrent",
    "reactive_first_ping",
    "udp_unfairness",
    "udp_unfairness_select",
];

fn determinism(runs: &mut Runs) -> Check {
    for name in ALL_SCENARIOS {
        let a = serde_json::to_string(runs.get(name)?).map_err(|e| e.to_string())?;
        let b = serde_json::to_string(&run_scenario(&load(name)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name}: reports differ"))?;
    }
    Ok(format!("{} scenarios byte-identical across two runs", ALL_SCENARIOS.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 14] = [
        ("standalone continuity", standalone_continuity),
        ("reactive first-ping RTT", reactive_rtt_shape),
        ("elastic activation", elastic_activation),
        ("farm + select throughput", farm_select_throughput),
        ("udp unfairness protection", udp_unfairness),
        ("arbitration exactness", arbitration_exactness),
        ("arbitration fairness", arbitration_fairness),
        ("overhead trade-off", overhead_tradeoff),
        ("control-byte decomposition", byte_decomposition),
        ("election and failover", election_and_failover),
        ("manager modes", manager_modes),
        ("loop guard", loop_guard),
        ("oracle suites", oracle_suites),
        ("determinism", determinism),
    ];
    let mut runs = Runs { cache: BTreeMap::new() };
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check(&mut runs) {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
