//! Max-min fair rate allocation over shared resources.

use std::collections::{BTreeMap, BTreeSet};

pub type FlowId = usize;

/// Relative slack when deciding that a resource or cap is exhausted.
const REL_EPS: f64 = 1e-12;

/// Allocates rates to flows whose routes cross capacity-limited resources.
///
/// Flows listed in `udp_rates` are inelastic: they are filled first, each
/// capped at its offered rate. Every other flow is elastic and shares the
/// residual capacity by progressive filling. An elastic flow with an empty
/// route is unconstrained and receives 0 (there is nothing to measure it by);
/// an inelastic one receives its offered rate.
pub fn maxmin_allocate<R: Ord + Clone>(
    routes: &BTreeMap<FlowId, Vec<R>>,
    capacities: &BTreeMap<R, f64>,
    udp_rates: &BTreeMap<FlowId, f64>,
) -> BTreeMap<FlowId, f64> {
    let mut residual: BTreeMap<R, f64> = capacities.iter().map(|(r, c)| (r.clone(), c.max(0.0))).collect();
    let mut out = BTreeMap::new();

    let inelastic: Vec<(FlowId, &[R], f64)> = routes
        .iter()
        .filter_map(|(&f, route)| udp_rates.get(&f).map(|&rate| (f, route.as_slice(), rate.max(0.0))))
        .collect();
    out.extend(fill(&inelastic, &mut residual));

    let elastic: Vec<(FlowId, &[R], f64)> = routes
        .iter()
        .filter(|(f, _)| !udp_rates.contains_key(f))
        .map(|(&f, route)| (f, route.as_slice(), f64::INFINITY))
        .collect();
    for (f, r, _) in &elastic {
        if r.is_empty() {
            out.insert(*f, 0.0);
        }
    }
    let constrained: Vec<_> = elastic.into_iter().filter(|(_, r, _)| !r.is_empty()).collect();
    out.extend(fill(&constrained, &mut residual));
    out
}

/// Progressive filling with per-flow caps. Consumes capacity from `residual`.
fn fill<R: Ord + Clone>(flows: &[(FlowId, &[R], f64)], residual: &mut BTreeMap<R, f64>) -> BTreeMap<FlowId, f64> {
    let mut alloc: BTreeMap<FlowId, f64> = flows.iter().map(|(f, _, _)| (*f, 0.0)).collect();
    let mut active: BTreeSet<usize> = (0..flows.len()).collect();

    // Flows crossing an unknown or zero-capacity resource are stuck at 0.
    active.retain(|&i| flows[i].1.iter().all(|r| residual.get(r).is_some_and(|&c| c > 0.0)));
    active.retain(|&i| flows[i].2 > 0.0 || flows[i].1.is_empty());

    while !active.is_empty() {
        let mut users: BTreeMap<&R, usize> = BTreeMap::new();
        for &i in &active {
            for r in flows[i].1 {
                *users.entry(r).or_default() += 1;
            }
        }
        let link_step = users
            .iter()
            .map(|(r, &n)| residual[*r] / n as f64)
            .fold(f64::INFINITY, f64::min);
        let cap_step = active
            .iter()
            .map(|&i| flows[i].2 - alloc[&flows[i].0])
            .fold(f64::INFINITY, f64::min);
        let step = link_step.min(cap_step);
        if !step.is_finite() {
            // Only uncapped flows with empty routes remain.
            break;
        }

        for &i in &active {
            *alloc.get_mut(&flows[i].0).expect("present") += step;
        }
        let mut saturated = BTreeSet::new();
        for (r, &n) in &users {
            let c = residual.get_mut(*r).expect("present");
            let before = *c;
            *c -= step * n as f64;
            if *c <= REL_EPS * before.max(1.0) || before / n as f64 <= step * (1.0 + REL_EPS) {
                *c = 0.0;
                saturated.insert((*r).clone());
            }
        }
        active.retain(|&i| {
            let (f, route, cap) = flows[i];
            let capped = cap.is_finite() && cap - alloc[&f] <= REL_EPS * cap.max(1.0);
            let blocked = route.iter().any(|r| saturated.contains(r));
            !(capped || blocked)
        });
    }
    alloc
}
