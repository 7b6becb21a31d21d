//! Exact event-driven solver for counting networks: every primitive is a
//! scaled counting path (uniform jumps of size 1/scale), and departures are
//! produced tick by tick.
//!
//! Tie rule: all events sharing one instant are resolved jointly. Exogenous
//! arrivals at t land first, then service ticks at t fire repeatedly while
//! their station holds a customer, feeding routed customers back into the
//! same instant, until nothing more can fire. The result is the least fixed
//! point of the two flow maps at that instant: order of scanning does not
//! matter, and no customer is ever created by circular reasoning (a feedback
//! loop with an empty queue stays empty).
//!
//! All tie detection uses exact equality of event times. Builders must
//! produce scaled times with a single rounding (raw_time / scale) so that
//! raw-time coincidences survive scaling; `build_counting_net` does this.

use super::FlowSolution;
use crate::network::NetworkPaths;
use crate::paths::{Curve, RoutingPath, StepPath, StepVector, VectorPath};
use crate::{Error, Result};

/// Routing decision value for "leaves the network".
pub const EXIT: u32 = u32::MAX;

fn exit_of(k: usize) -> u32 {
    k as u32
}

/// The customer jump size shared by every counting path in the network:
/// the smallest increment present. Simultaneous events may merge into one
/// jump of an integer multiple; `counts_of` validates each increment against
/// the size found here.
fn uniform_jump_size(net: &NetworkPaths<StepPath>) -> Result<f64> {
    let mut size = f64::INFINITY;
    let mut scan = |p: &StepPath| {
        for &(_, inc) in p.jumps() {
            if inc < size {
                size = inc;
            }
        }
    };
    for c in net.n.components.iter().chain(net.s.components.iter()) {
        scan(c);
    }
    for j in 0..net.dim() {
        for e in net.p.row(j) {
            scan(e);
        }
    }
    if size.is_finite() {
        Ok(size)
    } else {
        Ok(1.0)
    }
}

/// Jump list as (time, integer multiplicity), merging exactly equal times.
fn counts_of(p: &StepPath, size: f64, what: &str) -> Result<Vec<(f64, i64)>> {
    let mut out: Vec<(f64, i64)> = Vec::new();
    for &(t, inc) in p.jumps() {
        let m = inc / size;
        let r = m.round();
        if (m - r).abs() > 1e-6 || r < 1.0 {
            return Err(Error::invalid(format!(
                "{what}: jump {inc} at t={t} is not a positive multiple of the jump size {size}"
            )));
        }
        match out.last_mut() {
            Some(last) if last.0 == t => last.1 += r as i64,
            _ => out.push((t, r as i64)),
        }
    }
    Ok(out)
}

fn integer_initial(v: f64, size: f64, what: &str) -> Result<i64> {
    let m = v / size;
    let r = m.round();
    if (m - r).abs() > 1e-6 || r < -0.5 {
        return Err(Error::invalid(format!(
            "{what}: initial value {v} is not a multiple of the jump size {size}"
        )));
    }
    Ok(r as i64)
}

/// Decodes which departure index (1-based) a routing-path jump at `u`
/// belongs to.
fn departure_index(u: f64, size: f64) -> Result<i64> {
    let m = u / size;
    let r = m.round();
    if (m - r).abs() > 1e-6 || r < 1.0 {
        return Err(Error::invalid(format!(
            "routing path jump at u={u} does not sit on the departure grid (size {size})"
        )));
    }
    Ok(r as i64)
}

/// Checks that the routing paths are the counting paths of the decision
/// sequences: the m-th routed jump of row j (in u order) must target the
/// station named by the m-th non-exit decision and sit at u = r/scale for
/// that decision's index r.
fn check_decisions_match_routing(
    net: &NetworkPaths<StepPath>,
    decisions: &[Vec<u32>],
    size: f64,
) -> Result<()> {
    let k = net.dim();
    let exit = exit_of(k);
    for (j, dec) in decisions.iter().enumerate() {
        for (r, &v) in dec.iter().enumerate() {
            if v != EXIT && v > exit {
                return Err(Error::invalid(format!(
                    "station {j}: decision {r} targets station {v}, but K = {k}"
                )));
            }
        }
        let mut jumps: Vec<(f64, i64, usize)> = Vec::new();
        for i in 0..k {
            for (u, m) in counts_of(net.p.entry(j, i), size, "routing path")? {
                if m != 1 {
                    return Err(Error::validation(format!(
                        "routing path ({j},{i}) jumps by {m} departures at once at u={u}"
                    )));
                }
                jumps.push((u, departure_index(u, size)?, i));
            }
        }
        jumps.sort_by(|a, b| a.1.cmp(&b.1));
        for w in jumps.windows(2) {
            if w[0].1 == w[1].1 {
                return Err(Error::validation(format!(
                    "station {j}: two routing jumps share departure index {}",
                    w[0].1
                )));
            }
        }
        let row_span = net
            .p
            .row(j)
            .iter()
            .map(|e| e.horizon())
            .fold(f64::INFINITY, f64::min);
        let mut jump_iter = jumps.iter().peekable();
        for (idx0, &v) in dec.iter().enumerate() {
            let r = (idx0 + 1) as i64;
            if r as f64 * size > row_span * (1.0 + 1e-12) + 1e-12 {
                break;
            }
            let expect_station = if v == EXIT || v == exit { None } else { Some(v as usize) };
            let jump_here = match jump_iter.peek() {
                Some(&&(_, jr, ji)) if jr == r => {
                    jump_iter.next();
                    Some(ji)
                }
                _ => None,
            };
            if jump_here != expect_station {
                return Err(Error::validation(format!(
                    "station {j}: routing paths disagree with decision {r} (path says {jump_here:?}, sequence says {expect_station:?})"
                )));
            }
        }
        if let Some(&&(u, _, i)) = jump_iter.peek() {
            return Err(Error::validation(format!(
                "station {j}: routing path ({j},{i}) jumps at u={u} beyond the decision sequence"
            )));
        }
    }
    Ok(())
}

struct EventTape {
    instants: Vec<f64>,
    // per instant: (station, count) pairs
    arrivals: Vec<Vec<(usize, i64)>>,
    ticks: Vec<Vec<(usize, i64)>>,
}

fn build_tape(
    net: &NetworkPaths<StepPath>,
    size: f64,
    horizon: f64,
) -> Result<EventTape> {
    let k = net.dim();
    let mut times: Vec<f64> = Vec::new();
    let mut arr: Vec<Vec<(f64, i64)>> = Vec::with_capacity(k);
    let mut tick: Vec<Vec<(f64, i64)>> = Vec::with_capacity(k);
    for i in 0..k {
        let a = counts_of(&net.n.components[i], size, "exogenous path")?;
        let s = counts_of(&net.s.components[i], size, "service path")?;
        times.extend(a.iter().chain(&s).map(|&(t, _)| t).filter(|&t| t <= horizon));
        arr.push(a);
        tick.push(s);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut tape = EventTape {
        arrivals: vec![Vec::new(); times.len()],
        ticks: vec![Vec::new(); times.len()],
        instants: times,
    };
    for i in 0..k {
        for &(t, m) in &arr[i] {
            if t <= horizon {
                let idx = tape.instants.binary_search_by(|x| x.partial_cmp(&t).unwrap()).unwrap();
                tape.arrivals[idx].push((i, m));
            }
        }
        for &(t, m) in &tick[i] {
            if t <= horizon {
                let idx = tape.instants.binary_search_by(|x| x.partial_cmp(&t).unwrap()).unwrap();
                tape.ticks[idx].push((i, m));
            }
        }
    }
    Ok(tape)
}

/// Exact solver for counting networks. `decisions[j]` lists where each
/// departure from station j goes: a station index, or K (or `EXIT`) for
/// leaving the network. The routing paths in `net` must be the counting
/// paths of the decision sequences; a mismatch is an error, as is running
/// out of decisions before the horizon.
pub fn solve_counting(
    net: &NetworkPaths<StepPath>,
    decisions: &[Vec<u32>],
    horizon: f64,
) -> Result<FlowSolution<StepPath>> {
    let k = net.dim();
    if decisions.len() != k {
        return Err(Error::invalid("solve_counting: one decision sequence per station required"));
    }
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::invalid("solve_counting: horizon must be finite and positive"));
    }
    for (i, si) in net.s.components.iter().enumerate() {
        if si.eval(0.0) != 0.0 {
            return Err(Error::invalid(format!("service path {i} must start at 0")));
        }
    }
    let size = uniform_jump_size(net)?;
    check_decisions_match_routing(net, decisions, size)?;
    let tape = build_tape(net, size, horizon)?;
    let exit = exit_of(k);

    let mut a_cnt: Vec<i64> = (0..k)
        .map(|i| integer_initial(net.n.components[i].eval(0.0), size, "exogenous path"))
        .collect::<Result<Vec<_>>>()?;
    let mut d_cnt = vec![0i64; k];
    let mut used = vec![0usize; k];
    let mut a_jumps: Vec<Vec<(f64, i64)>> = vec![Vec::new(); k];
    let mut d_jumps: Vec<Vec<(f64, i64)>> = vec![Vec::new(); k];
    let mut landed = vec![0i64; k];
    let mut fired = vec![0i64; k];
    let mut pending = vec![0i64; k];

    for (idx, &t) in tape.instants.iter().enumerate() {
        landed.iter_mut().for_each(|v| *v = 0);
        fired.iter_mut().for_each(|v| *v = 0);
        pending.iter_mut().for_each(|v| *v = 0);
        for &(i, m) in &tape.arrivals[idx] {
            landed[i] += m;
        }
        for &(i, m) in &tape.ticks[idx] {
            pending[i] = m;
        }
        // fire until stable: a tick consumes a waiting customer and routes it
        loop {
            let mut progress = false;
            for i in 0..k {
                while pending[i] > 0 && a_cnt[i] + landed[i] > d_cnt[i] + fired[i] {
                    pending[i] -= 1;
                    fired[i] += 1;
                    let r = used[i];
                    let Some(&target) = decisions[i].get(r) else {
                        return Err(Error::validation(format!(
                            "station {i}: decision sequence exhausted at t={t} (needs more than {r} entries)"
                        )));
                    };
                    used[i] += 1;
                    if target != EXIT && target != exit {
                        landed[target as usize] += 1;
                        progress = true;
                    }
                }
            }
            if !progress {
                break;
            }
        }
        for i in 0..k {
            if landed[i] > 0 {
                a_cnt[i] += landed[i];
                a_jumps[i].push((t, landed[i]));
            }
            if fired[i] > 0 {
                d_cnt[i] += fired[i];
                d_jumps[i].push((t, fired[i]));
            }
        }
    }

    let to_path = |initial: f64, jumps: &[(f64, i64)]| -> Result<StepPath> {
        let js: Vec<(f64, f64)> = jumps
            .iter()
            .filter(|&&(t, _)| t > 0.0)
            .map(|&(t, m)| (t, m as f64 * size))
            .collect();
        // events exactly at t=0 fold into the starting value
        let at_zero: i64 = jumps.iter().take_while(|&&(t, _)| t == 0.0).map(|&(_, m)| m).sum();
        StepPath::new(initial + at_zero as f64 * size, js, horizon)
    };
    let arrivals = VectorPath::new(
        (0..k)
            .map(|i| to_path(net.n.components[i].eval(0.0), &a_jumps[i]))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let departures = VectorPath::new(
        (0..k)
            .map(|i| to_path(0.0, &d_jumps[i]))
            .collect::<Result<Vec<_>>>()?,
    )?;
    Ok(FlowSolution {
        arrivals,
        departures,
    })
}

/// Integer fixed-point residual of a candidate counting solution: both flow
/// maps are re-evaluated in whole customer counts on the merged instant
/// grid, so 0 means the fixed point holds exactly, with no float tolerance.
pub fn count_residual(
    net: &NetworkPaths<StepPath>,
    a: &StepVector,
    d: &StepVector,
    horizon: f64,
) -> Result<i64> {
    let k = net.dim();
    if a.dim() != k || d.dim() != k {
        return Err(Error::invalid("count_residual: dimension mismatch"));
    }
    let size = uniform_jump_size(net)?;
    let mut instants: Vec<f64> = Vec::new();
    let mut collect = |p: &StepPath| -> Result<Vec<(f64, i64)>> {
        let c = counts_of(p, size, "candidate path")?;
        instants.extend(c.iter().map(|&(t, _)| t).filter(|&t| t <= horizon));
        Ok(c)
    };
    let mut n_j: Vec<Vec<(f64, i64)>> = Vec::new();
    let mut s_j: Vec<Vec<(f64, i64)>> = Vec::new();
    let mut a_j: Vec<Vec<(f64, i64)>> = Vec::new();
    let mut d_j: Vec<Vec<(f64, i64)>> = Vec::new();
    for i in 0..k {
        n_j.push(collect(&net.n.components[i])?);
        s_j.push(collect(&net.s.components[i])?);
        a_j.push(collect(&a.components[i])?);
        d_j.push(collect(&d.components[i])?);
    }
    instants.sort_by(|x, y| x.partial_cmp(y).unwrap());
    instants.dedup();

    // routing rows as (departure index -> target) maps
    let mut routed: Vec<Vec<(i64, usize)>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut row: Vec<(i64, usize)> = Vec::new();
        for i in 0..k {
            for (u, m) in counts_of(net.p.entry(j, i), size, "routing path")? {
                if m != 1 {
                    return Err(Error::validation(format!(
                        "routing path ({j},{i}) jumps by {m} departures at once at u={u}"
                    )));
                }
                row.push((departure_index(u, size)?, i));
            }
        }
        row.sort();
        routed.push(row);
    }

    let cum = |jumps: &[(f64, i64)], t: f64, base: i64| -> i64 {
        base + jumps
            .iter()
            .take_while(|&&(u, _)| u <= t)
            .map(|&(_, m)| m)
            .sum::<i64>()
    };
    let mut worst: i64 = 0;
    let mut running_min = vec![0i64; k];
    let n0: Vec<i64> = (0..k)
        .map(|i| integer_initial(net.n.components[i].eval(0.0), size, "exogenous path"))
        .collect::<Result<Vec<_>>>()?;
    let a0: Vec<i64> = (0..k)
        .map(|i| integer_initial(a.components[i].eval(0.0), size, "arrival path"))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..k {
        let d0 = integer_initial(d.components[i].eval(0.0), size, "departure path")?;
        worst = worst.max(d0.abs());
        running_min[i] = a0[i]; // value of A - S at t = 0 (S starts at 0)
    }
    let mut grid = vec![0.0];
    grid.extend(instants.iter().copied());
    grid.dedup();
    for &t in &grid {
        for i in 0..k {
            let (av, sv) = (cum(&a_j[i], t, a0[i]), cum(&s_j[i], t, 0));
            running_min[i] = running_min[i].min(av - sv);
            let phi_i = sv + running_min[i].min(0);
            let dv = cum(&d_j[i], t, 0);
            worst = worst.max((dv - phi_i).abs());
            let mut gamma_i = cum(&n_j[i], t, n0[i]);
            for j in 0..k {
                let dj = cum(&d_j[j], t, 0);
                gamma_i += routed[j]
                    .iter()
                    .take_while(|&&(r, _)| r <= dj)
                    .filter(|&&(_, tgt)| tgt == i)
                    .count() as i64;
            }
            worst = worst.max((av - gamma_i).abs());
        }
    }
    Ok(worst)
}

/// Builds a counting network from raw (unscaled) event times: arrivals and
/// service ticks per station, a decision sequence per station, and initial
/// customer counts. Times are divided by `scale` exactly once, so raw-time
/// ties stay ties after scaling. Routing paths are generated from the
/// decisions, hence always consistent. The returned horizon is raw/scale.
pub fn build_counting_net(
    scale: u64,
    initial: &[i64],
    arrival_times: &[Vec<f64>],
    tick_times: &[Vec<f64>],
    decisions: &[Vec<u32>],
    raw_horizon: f64,
    exogenous: Vec<bool>,
) -> Result<(NetworkPaths<StepPath>, f64)> {
    let k = initial.len();
    if arrival_times.len() != k || tick_times.len() != k || decisions.len() != k {
        return Err(Error::invalid("build_counting_net: per-station inputs must share length K"));
    }
    if scale == 0 {
        return Err(Error::invalid("build_counting_net: scale must be >= 1"));
    }
    if !raw_horizon.is_finite() || raw_horizon <= 0.0 {
        return Err(Error::invalid("build_counting_net: horizon must be finite and positive"));
    }
    let n = scale as f64;
    let size = 1.0 / n;
    let horizon = raw_horizon / n;
    let exit = exit_of(k);

    let scaled_counting = |raw: &[f64], initial: f64, what: &str| -> Result<StepPath> {
        let mut ts: Vec<f64> = raw.to_vec();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut jumps: Vec<(f64, f64)> = Vec::new();
        let mut extra0 = 0.0;
        for &rt in &ts {
            if !(0.0..=raw_horizon).contains(&rt) {
                return Err(Error::invalid(format!(
                    "{what}: event time {rt} outside [0, {raw_horizon}]"
                )));
            }
            let t = rt / n;
            if t == 0.0 {
                extra0 += size;
                continue;
            }
            match jumps.last_mut() {
                Some(last) if last.0 == t => last.1 += size,
                _ => jumps.push((t, size)),
            }
        }
        StepPath::new(initial + extra0, jumps, horizon)
    };

    let mut n_comps = Vec::with_capacity(k);
    let mut s_comps = Vec::with_capacity(k);
    for i in 0..k {
        if initial[i] < 0 {
            return Err(Error::invalid("build_counting_net: initial counts must be >= 0"));
        }
        n_comps.push(scaled_counting(
            &arrival_times[i],
            initial[i] as f64 * size,
            "arrivals",
        )?);
        s_comps.push(scaled_counting(&tick_times[i], 0.0, "service ticks")?);
    }

    let mut entries: Vec<StepPath> = Vec::with_capacity(k * k);
    for j in 0..k {
        let row_horizon = (decisions[j].len() as f64 + 1.0) / n;
        let mut per_target: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
        for (idx0, &v) in decisions[j].iter().enumerate() {
            if v != EXIT && v > exit {
                return Err(Error::invalid(format!(
                    "station {j}: decision {idx0} targets station {v}, but K = {k}"
                )));
            }
            if v != EXIT && v != exit {
                let u = (idx0 as f64 + 1.0) / n;
                per_target[v as usize].push((u, size));
            }
        }
        for tgt in per_target {
            entries.push(StepPath::new(0.0, tgt, row_horizon)?);
        }
    }
    let p = RoutingPath::new(k, entries)?;
    let net = NetworkPaths::new(
        VectorPath::new(n_comps)?,
        VectorPath::new(s_comps)?,
        p,
        exogenous,
    )?;
    Ok((net, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::residual_g_step;
    use crate::testkit;
    use rand::Rng;

    fn simple_net(
        initial: &[i64],
        arrivals: &[Vec<f64>],
        ticks: &[Vec<f64>],
        decisions: &[Vec<u32>],
        horizon: f64,
    ) -> (NetworkPaths<StepPath>, f64) {
        let k = initial.len();
        build_counting_net(
            1,
            initial,
            arrivals,
            ticks,
            decisions,
            horizon,
            vec![true; k],
        )
        .unwrap()
    }

    /// Independent oracle: iterate the two flow maps in whole counts on the
    /// instant grid, starting from zero departures, until stable.
    fn picard_counts(
        initial: &[i64],
        arr: &[Vec<(f64, i64)>],
        tick: &[Vec<(f64, i64)>],
        decisions: &[Vec<u32>],
        instants: &[f64],
    ) -> (Vec<Vec<i64>>, Vec<Vec<i64>>) {
        let k = initial.len();
        let m = instants.len();
        let cum = |jumps: &[(f64, i64)], t: f64| -> i64 {
            jumps
                .iter()
                .take_while(|&&(u, _)| u <= t)
                .map(|&(_, c)| c)
                .sum()
        };
        let exit = k as u32;
        let mut d = vec![vec![0i64; m]; k];
        loop {
            // a = Gamma(d)
            let mut a = vec![vec![0i64; m]; k];
            for i in 0..k {
                for (ti, &t) in instants.iter().enumerate() {
                    let mut v = initial[i] + cum(&arr[i], t);
                    for j in 0..k {
                        v += decisions[j][..d[j][ti] as usize]
                            .iter()
                            .filter(|&&x| x == i as u32)
                            .count() as i64;
                    }
                    let _ = exit;
                    a[i][ti] = v;
                }
            }
            // d' = Phi(a)
            let mut d2 = vec![vec![0i64; m]; k];
            for i in 0..k {
                let mut rmin = i64::MAX;
                for (ti, &t) in instants.iter().enumerate() {
                    let s = cum(&tick[i], t);
                    rmin = rmin.min(a[i][ti] - s);
                    d2[i][ti] = s + rmin.min(0);
                }
            }
            if d2 == d {
                return (a, d2);
            }
            d = d2;
        }
    }

    #[test]
    fn empty_system_stays_empty() {
        let (net, horizon) = simple_net(
            &[0],
            &[vec![]],
            &[vec![0.5, 1.5, 2.5]],
            &[vec![]],
            3.0,
        );
        let sol = solve_counting(&net, &[vec![]], horizon).unwrap();
        assert_eq!(sol.departures.components[0].jumps().len(), 0);
        assert_eq!(sol.arrivals.components[0].jumps().len(), 0);
        assert_eq!(count_residual(&net, &sol.arrivals, &sol.departures, horizon).unwrap(), 0);
    }

    #[test]
    fn arrivals_wait_for_the_next_tick() {
        let dec = vec![vec![1, 1, 1, 1]]; // K=1: value 1 = exit
        let (net, horizon) = simple_net(
            &[0],
            &[vec![1.0, 2.0, 3.0]],
            &[vec![0.5, 1.5, 2.5, 3.5]],
            &dec,
            4.0,
        );
        let sol = solve_counting(&net, &dec, horizon).unwrap();
        let times: Vec<f64> = sol.departures.components[0]
            .jumps()
            .iter()
            .map(|&(t, _)| t)
            .collect();
        assert_eq!(times, vec![1.5, 2.5, 3.5]);
        assert_eq!(count_residual(&net, &sol.arrivals, &sol.departures, horizon).unwrap(), 0);
    }

    #[test]
    fn simultaneous_arrival_and_tick_serve_immediately() {
        // the arrival at t=1 is counted by the tick at t=1
        let dec = vec![vec![1]];
        let (net, horizon) = simple_net(&[0], &[vec![1.0]], &[vec![1.0]], &dec, 2.0);
        let sol = solve_counting(&net, &dec, horizon).unwrap();
        assert_eq!(sol.departures.components[0].jumps(), &[(1.0, 1.0)]);
        assert_eq!(count_residual(&net, &sol.arrivals, &sol.departures, horizon).unwrap(), 0);
    }

    #[test]
    fn same_instant_feedback_chain_fires() {
        // a departure from station 0 at t=1 feeds station 1, whose tick at
        // the same instant serves it and feeds station 0's second tick
        let dec = vec![vec![1, 2], vec![0]];
        let (net, horizon) = simple_net(
            &[1, 0],
            &[vec![], vec![]],
            &[vec![1.0, 1.0], vec![1.0]],
            &dec,
            2.0,
        );
        let sol = solve_counting(&net, &dec, horizon).unwrap();
        assert_eq!(sol.departures.components[0].eval(1.0), 2.0);
        assert_eq!(sol.departures.components[1].eval(1.0), 1.0);
        assert_eq!(count_residual(&net, &sol.arrivals, &sol.departures, horizon).unwrap(), 0);
    }

    #[test]
    fn self_loop_with_no_customers_stays_empty() {
        // a full self-loop and a tick admit a phantom solution where a
        // customer circulates out of nothing; the solver must not create it
        let dec = vec![vec![0]];
        let (net, horizon) = simple_net(&[0], &[vec![]], &[vec![1.0]], &dec, 2.0);
        let sol = solve_counting(&net, &dec, horizon).unwrap();
        assert_eq!(sol.departures.components[0].eval(2.0), 0.0);
        assert_eq!(sol.arrivals.components[0].eval(2.0), 0.0);
        assert_eq!(count_residual(&net, &sol.arrivals, &sol.departures, horizon).unwrap(), 0);
    }

    #[test]
    fn exhausted_decisions_error() {
        let dec = vec![vec![1]];
        let (net, horizon) = simple_net(
            &[0],
            &[vec![0.5, 1.5]],
            &[vec![1.0, 2.0]],
            &dec,
            3.0,
        );
        let err = solve_counting(&net, &dec, horizon).unwrap_err();
        assert!(format!("{err}").contains("exhausted"), "{err}");
    }

    #[test]
    fn inconsistent_routing_path_rejected() {
        let dec_build = vec![vec![0u32, 1]];
        let (net, horizon) = simple_net(
            &[2],
            &[vec![]],
            &[vec![1.0, 2.0]],
            &dec_build,
            3.0,
        );
        // claim the first departure exits even though the path routes it back
        let err = solve_counting(&net, &[vec![1, 1]], horizon).unwrap_err();
        assert!(format!("{err}").contains("disagree"), "{err}");
    }

    #[test]
    fn ties_survive_scaling() {
        // raw times on a half-integer grid, scale 2000: 0.5/2000 is not
        // representable, but the tie between arrival and tick must survive
        let dec = vec![vec![1]];
        let (net, horizon) = build_counting_net(
            2000,
            &[0],
            &[vec![7.5]],
            &[vec![7.5]],
            &dec,
            20.0,
            vec![true],
        )
        .unwrap();
        let sol = solve_counting(&net, &dec, horizon).unwrap();
        let d = &sol.departures.components[0];
        assert_eq!(d.jumps().len(), 1);
        assert_eq!(d.jumps()[0].0, 7.5 / 2000.0);
        assert_eq!(count_residual(&net, &sol.arrivals, &sol.departures, horizon).unwrap(), 0);
    }

    #[test]
    fn random_networks_match_count_picard_oracle() {
        let mut rng = testkit::rng(61);
        for trial in 0..40 {
            let k = rng.gen_range(1..4usize);
            let scale = [1u64, 3, 4, 100][rng.gen_range(0..4)];
            let raw_horizon = 8.0 * scale as f64;
            let mut arrivals: Vec<Vec<f64>> = Vec::new();
            let mut ticks: Vec<Vec<f64>> = Vec::new();
            let mut initial: Vec<i64> = Vec::new();
            for _ in 0..k {
                // mix of random times and deliberate collisions on a coarse grid
                let mut at: Vec<f64> = Vec::new();
                let mut st: Vec<f64> = Vec::new();
                for _ in 0..rng.gen_range(0..10) {
                    at.push(if rng.gen_bool(0.5) {
                        rng.gen_range(1..=16) as f64 * (raw_horizon / 16.0)
                    } else {
                        rng.gen_range(0.0..raw_horizon)
                    });
                }
                for _ in 0..rng.gen_range(0..12) {
                    st.push(if rng.gen_bool(0.5) {
                        rng.gen_range(1..=16) as f64 * (raw_horizon / 16.0)
                    } else {
                        rng.gen_range(0.0..raw_horizon)
                    });
                }
                arrivals.push(at);
                ticks.push(st);
                initial.push(rng.gen_range(0..3));
            }
            let decisions: Vec<Vec<u32>> = (0..k)
                .map(|_| (0..40).map(|_| rng.gen_range(0..=k) as u32).collect())
                .collect();
            let (net, horizon) = build_counting_net(
                scale,
                &initial,
                &arrivals,
                &ticks,
                &decisions,
                raw_horizon,
                vec![true; k],
            )
            .unwrap();
            let sol = solve_counting(&net, &decisions, horizon).unwrap();

            assert_eq!(
                count_residual(&net, &sol.arrivals, &sol.departures, horizon).unwrap(),
                0,
                "trial {trial}: nonzero integer residual"
            );
            let res = residual_g_step(&net, &sol.arrivals, &sol.departures, horizon).unwrap();
            assert!(res <= 1e-12, "trial {trial}: float residual {res}");

            // least-fixed-point oracle on the instant grid
            let size = 1.0 / scale as f64;
            let jump_counts = |p: &StepPath| -> Vec<(f64, i64)> {
                p.jumps()
                    .iter()
                    .map(|&(t, inc)| (t, (inc / size).round() as i64))
                    .collect()
            };
            let arr_j: Vec<Vec<(f64, i64)>> =
                net.n.components.iter().map(|c| jump_counts(c)).collect();
            let tick_j: Vec<Vec<(f64, i64)>> =
                net.s.components.iter().map(|c| jump_counts(c)).collect();
            let mut instants: Vec<f64> = arr_j
                .iter()
                .chain(&tick_j)
                .flatten()
                .map(|&(t, _)| t)
                .collect();
            instants.sort_by(|a, b| a.partial_cmp(b).unwrap());
            instants.dedup();
            let (a_tab, d_tab) =
                picard_counts(&initial, &arr_j, &tick_j, &decisions, &instants);
            for i in 0..k {
                for (ti, &t) in instants.iter().enumerate() {
                    let av = (sol.arrivals.components[i].eval(t)
                        / size)
                        .round() as i64;
                    let dv = (sol.departures.components[i].eval(t) / size).round() as i64;
                    assert_eq!(av, a_tab[i][ti], "trial {trial} station {i} t={t}: arrivals");
                    assert_eq!(dv, d_tab[i][ti], "trial {trial} station {i} t={t}: departures");
                }
            }
            sol.check_invariants(&net.s, horizon).unwrap();
        }
    }

    #[test]
    fn phi_step_cross_check_at_jump_times() {
        let mut rng = testkit::rng(67);
        for _ in 0..25 {
            let a = VectorPath::new(vec![testkit::rand_step(&mut rng, 4.0, 2.0, 0.25)]).unwrap();
            let s = VectorPath::new(vec![testkit::rand_step(&mut rng, 4.0, 3.0, 0.25)]).unwrap();
            let d = crate::dynamics::phi_step(&a, &s, 4.0).unwrap();
            for &(t, _) in a.components[0].jumps().iter().chain(s.components[0].jumps()) {
                let want = testkit::phi_value_bruteforce(&a.components[0], &s.components[0], t);
                let got = d.components[0].eval(t);
                assert!(
                    (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                    "t={t}: {got} vs {want}"
                );
            }
        }
    }
}
