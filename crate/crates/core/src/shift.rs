//! Extremal shift: steering the original system with a lattice-chain model.
//!
//! At each partition time `t_l` the first player picks the `u` minimizing
//! `max_v ϖ(t_l, x, y, u, v)`, with `ϖ(t, z, ξ, u, v) = ⟨z − ξ, f(t, z, u, v)⟩`,
//! and holds it until `t_{l+1}`. Meanwhile the model chain `y` runs under the
//! argmin of the upper Hamiltonian of the solved `η⁺` and the `v` maximizing
//! `min_u ϖ`. Because the first player's choice keeps `x` close to `y` in
//! mean square, the payoff of `x` inherits the value of the model.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{dot, GameSpec};
use crate::hjb::{maximin, minimax, upper_argmin, SolveResult};
use crate::lattice::{chain_characteristics, LatticeDomain};
use crate::rng::{derive_seed, GameRng};
use crate::sim::{advance_chain, pairwise_sum, rk4_step_in_place, OutcomeEstimate, Rk4Scratch, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub times: Vec<f64>,
    pub diameter: f64,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidInput("a partition needs at least two times".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("partition times must increase strictly".into()));
        }
        let diameter = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(Partition { times, diameter })
    }

    /// Equal steps of at most `delta` from `t0` to `horizon`.
    pub fn uniform(t0: f64, horizon: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !(horizon > t0) {
            return Err(Error::InvalidInput(format!(
                "bad partition request t0={t0}, T={horizon}, delta={delta}"
            )));
        }
        let n = (((horizon - t0) / delta) - 1e-9).ceil().max(1.0) as usize;
        let step = (horizon - t0) / n as f64;
        let mut times: Vec<f64> = (0..n).map(|k| t0 + k as f64 * step).collect();
        times.push(horizon);
        Self::new(times)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }
}

/// Which characteristic enters the alignment functional.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum Branch {
    /// Drift of the original system at `z`.
    #[default]
    One,
    /// Drift characteristic of the chain with mesh `h` at `ξ`.
    Two { h: f64 },
}

pub fn varpi(
    spec: &GameSpec,
    t: f64,
    z: &[f64],
    xi: &[f64],
    ui: usize,
    vi: usize,
    branch: Branch,
) -> Result<f64> {
    let diff: Vec<f64> = z.iter().zip(xi).map(|(a, b)| a - b).collect();
    let b = match branch {
        Branch::One => {
            let mut f = vec![0.0; spec.dim];
            spec.drift_at(t, z, ui, vi, &mut f);
            f
        }
        Branch::Two { h } => chain_characteristics(spec, t, xi, ui, vi, h)?.0,
    };
    Ok(dot(&diff, &b))
}

fn varpi_table(spec: &GameSpec, t: f64, z: &[f64], xi: &[f64], branch: Branch) -> Result<Vec<f64>> {
    let nv = spec.v_grid.len();
    let mut table = vec![0.0; spec.u_grid.len() * nv];
    for ui in 0..spec.u_grid.len() {
        for vi in 0..nv {
            table[ui * nv + vi] = varpi(spec, t, z, xi, ui, vi, branch)?;
        }
    }
    Ok(table)
}

/// `argmin_u max_v ϖ`, ties to the lowest index.
pub fn select_u(spec: &GameSpec, t: f64, z: &[f64], xi: &[f64], branch: Branch) -> Result<usize> {
    let table = varpi_table(spec, t, z, xi, branch)?;
    Ok(minimax(&table, spec.u_grid.len(), spec.v_grid.len()).0)
}

/// `argmax_v min_u ϖ`, ties to the lowest index.
pub fn select_v(spec: &GameSpec, t: f64, z: &[f64], xi: &[f64], branch: Branch) -> Result<usize> {
    let table = varpi_table(spec, t, z, xi, branch)?;
    Ok(maximin(&table, spec.u_grid.len(), spec.v_grid.len()).0)
}

/// Minimizing `u` of the upper Hamiltonian of the stored slice at or below `t`.
pub fn model_feedback(eta: &SolveResult, spec: &GameSpec, t: f64, point: &[i64]) -> Result<usize> {
    let slice = eta.slice_at_or_below(t)?;
    if !slice.domain.contains(point) {
        return Err(Error::Truncation(format!(
            "model state {point:?} at t={t} left the solved box {:?}..={:?}",
            slice.domain.lo, slice.domain.hi
        )));
    }
    upper_argmin(slice, spec, t, point, eta.boundary_policy)
}

/// Second-player behaviour against which the strategy is tested.
#[derive(Debug, Clone, PartialEq)]
pub enum Adversary {
    Constant(usize),
    /// `pos` while `x₁ ≥ 0`, `neg` otherwise.
    BangBang { pos: usize, neg: usize },
    /// Uniform grid index, redrawn every `hold` time units.
    Random { seed: u64, hold: f64 },
    /// The `v` maximizing `min_u ϖ` at each partition time.
    WorstCase,
}

impl Adversary {
    pub fn name(&self) -> &'static str {
        match self {
            Adversary::Constant(_) => "constant",
            Adversary::BangBang { .. } => "bang_bang",
            Adversary::Random { .. } => "random",
            Adversary::WorstCase => "worst_case",
        }
    }

    /// The four-policy panel: `v` maximal, bang-bang away from the origin,
    /// random switching every `hold`, and the worst-case selection.
    pub fn panel(spec: &GameSpec, seed: u64, hold: f64) -> Vec<Adversary> {
        let nv = spec.v_grid.len();
        let first = |v: &Vec<f64>| v.first().copied().unwrap_or(0.0);
        let (mut lo, mut hi) = (0, 0);
        for (i, v) in spec.v_grid.iter().enumerate() {
            if first(v) < first(&spec.v_grid[lo]) {
                lo = i;
            }
            if first(v) > first(&spec.v_grid[hi]) {
                hi = i;
            }
        }
        debug_assert!(lo < nv && hi < nv);
        vec![
            Adversary::Constant(hi),
            Adversary::BangBang { pos: hi, neg: lo },
            Adversary::Random { seed, hold },
            Adversary::WorstCase,
        ]
    }

    fn validate(&self, spec: &GameSpec) -> Result<()> {
        let nv = spec.v_grid.len();
        let ok = match self {
            Adversary::Constant(i) => *i < nv,
            Adversary::BangBang { pos, neg } => *pos < nv && *neg < nv,
            Adversary::Random { hold, .. } => *hold > 0.0,
            Adversary::WorstCase => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("adversary {self:?} does not fit the v grid")))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShiftOptions {
    pub branch: Branch,
    /// Keep the sub-step trajectory and the dump rows.
    pub record_path: bool,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions { branch: Branch::One, record_path: false }
    }
}

/// One row of the trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DumpRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u_index: usize,
    pub v_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedTrajectory {
    pub h: f64,
    pub partition: Vec<f64>,
    /// Original system at every partition time.
    pub x_at: Vec<Vec<f64>>,
    /// Model chain at every partition time.
    pub y_at: Vec<Vec<i64>>,
    /// First-player control per partition interval.
    pub u_log: Vec<usize>,
    /// Model second-player control per partition interval.
    pub v_model_log: Vec<usize>,
    /// Original system at every sub-step (only with `record_path`).
    pub x_path: Vec<(f64, Vec<f64>)>,
    /// Model chain segments (only with `record_path`).
    pub y_path: Vec<Segment>,
    /// Partition and jump times (only with `record_path`).
    pub dump: Vec<DumpRow>,
    pub outcome: f64,
    pub model_outcome: f64,
}

impl PairedTrajectory {
    pub fn y_state(&self, l: usize) -> Vec<f64> {
        self.y_at[l].iter().map(|&p| p as f64 * self.h).collect()
    }

    /// `‖X(t_l) − Y(t_l)‖²`
    pub fn gap_sq(&self, l: usize) -> f64 {
        self.x_at[l]
            .iter()
            .zip(&self.y_at[l])
            .map(|(x, &p)| {
                let d = x - p as f64 * self.h;
                d * d
            })
            .sum()
    }
}

/// Sub-step ceiling for the original system, `min(δ/4, 10⁻³ T)`.
pub fn ode_substep(partition: &Partition, horizon: f64) -> f64 {
    (partition.diameter / 4.0).min(1e-3 * horizon)
}

/// One replica of the coupled original/model dynamics.
pub fn run_extremal_shift(
    spec: &GameSpec,
    partition: &Partition,
    x0: &[f64],
    eta: &SolveResult,
    adversary: &Adversary,
    h: f64,
    rng: &mut GameRng,
    options: ShiftOptions,
) -> Result<PairedTrajectory> {
    if x0.len() != spec.dim {
        return Err(Error::InvalidInput("x0 has the wrong dimension".into()));
    }
    if (eta.h - h).abs() > 1e-12 * h {
        return Err(Error::InvalidInput(format!("value grids use h={} but h={h} was requested", eta.h)));
    }
    if (partition.end() - spec.horizon).abs() > 1e-12 || partition.start() < 0.0 {
        return Err(Error::InvalidInput("partition must end at T and start at t0 >= 0".into()));
    }
    adversary.validate(spec)?;
    let t0 = partition.start();
    let y0 = LatticeDomain::round_to_lattice(x0, h);
    if !eta.domain().contains(&y0) {
        return Err(Error::Truncation(format!("x0 = {x0:?} lies outside the solved box")));
    }
    let random_salt: u64 = match adversary {
        Adversary::Random { seed, .. } => derive_seed(*seed, rng.random()),
        _ => 0,
    };
    let nv = spec.v_grid.len() as u64;
    let sub_max = ode_substep(partition, spec.horizon);
    let r = partition.times.len() - 1;

    let mut x = x0.to_vec();
    let mut y = y0;
    let mut out = PairedTrajectory {
        h,
        partition: partition.times.clone(),
        x_at: Vec::with_capacity(r + 1),
        y_at: Vec::with_capacity(r + 1),
        u_log: Vec::with_capacity(r),
        v_model_log: Vec::with_capacity(r),
        x_path: Vec::new(),
        y_path: Vec::new(),
        dump: Vec::new(),
        outcome: f64::NAN,
        model_outcome: f64::NAN,
    };
    let branch = options.branch;
    let mut segments = Vec::new();
    let mut scratch = Rk4Scratch::new(spec.dim);
    for l in 0..r {
        let (ta, tb) = (partition.times[l], partition.times[l + 1]);
        let y_state: Vec<f64> = y.iter().map(|&p| p as f64 * h).collect();
        let u_l = select_u(spec, ta, &x, &y_state, branch)?;
        let v_l = select_v(spec, ta, &x, &y_state, branch)?;
        out.x_at.push(x.clone());
        out.y_at.push(y.clone());
        out.u_log.push(u_l);
        out.v_model_log.push(v_l);

        let adv = |t: f64, x: &[f64]| -> usize {
            match adversary {
                Adversary::Constant(i) => *i,
                Adversary::BangBang { pos, neg } => {
                    if x[0] >= 0.0 {
                        *pos
                    } else {
                        *neg
                    }
                }
                Adversary::Random { hold, .. } => {
                    let piece = ((t - t0) / hold + 1e-9).floor() as u64;
                    (derive_seed(random_salt, piece) % nv) as usize
                }
                Adversary::WorstCase => v_l,
            }
        };

        // model chain over [ta, tb)
        segments.clear();
        let mut controls = |t: f64, p: &[i64]| -> Result<(usize, usize)> {
            Ok((model_feedback(eta, spec, t, p)?, v_l))
        };
        let log = if options.record_path { Some(&mut segments) } else { None };
        advance_chain(spec, &mut y, ta, tb, h, rng, &mut controls, log)?;

        // original system on uniform sub-steps merged with jump times
        let n_sub = (((tb - ta) / sub_max) - 1e-9).ceil().max(1.0) as usize;
        let step = (tb - ta) / n_sub as f64;
        let mut stops: Vec<f64> = (1..n_sub).map(|k| ta + k as f64 * step).collect();
        stops.push(tb);
        let mut jump_times: Vec<(f64, usize)> = Vec::new();
        if options.record_path {
            jump_times = segments.iter().enumerate().skip(1).map(|(k, s)| (s.t, k)).collect();
            stops.extend(jump_times.iter().map(|e| e.0));
            stops.sort_by(|a, b| a.total_cmp(b));
            stops.dedup();
            out.x_path.push((ta, x.clone()));
            out.dump.push(DumpRow { t: ta, x: x.clone(), y: y_state.clone(), u_index: u_l, v_index: adv(ta, &x) });
        }
        let mut t = ta;
        let mut next_event = 0;
        for &s in &stops {
            let vi = adv(t, &x);
            rk4_step_in_place(spec, t, &mut x, s - t, u_l, vi, &mut scratch);
            t = s;
            if options.record_path {
                out.x_path.push((t, x.clone()));
                while next_event < jump_times.len() && jump_times[next_event].0 <= t {
                    let seg = &segments[jump_times[next_event].1];
                    out.dump.push(DumpRow {
                        t,
                        x: x.clone(),
                        y: seg.point.iter().map(|&p| p as f64 * h).collect(),
                        u_index: u_l,
                        v_index: adv(t, &x),
                    });
                    next_event += 1;
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("original system diverged before t={tb}")));
        }
        if options.record_path {
            out.y_path.extend(segments.drain(..));
        }
    }
    out.x_at.push(x.clone());
    out.y_at.push(y.clone());
    let y_state: Vec<f64> = y.iter().map(|&p| p as f64 * h).collect();
    if options.record_path {
        out.dump.push(DumpRow {
            t: spec.horizon,
            x: x.clone(),
            y: y_state.clone(),
            u_index: *out.u_log.last().unwrap_or(&0),
            v_index: *out.v_model_log.last().unwrap_or(&0),
        });
    }
    out.outcome = spec.payoff_at(&x);
    out.model_outcome = spec.payoff_at(&y_state);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingReport {
    pub delta: f64,
    pub beta: f64,
    pub theta: f64,
    /// Smallest nonnegative `ε` for which every interval passes at 3 SE.
    pub eps_hat: f64,
    pub worst_interval: usize,
}

/// Fits the slack in
/// `E‖X_{l+1} − Y_{l+1}‖² ≤ E‖X_l − Y_l‖² (1 + β δ_l) + (Θ + ε) δ_l`
/// from paired per-replica differences.
pub fn coupling_check(paths: &[PairedTrajectory], beta: f64, theta: f64) -> Result<CouplingReport> {
    let first = paths.first().ok_or_else(|| Error::InvalidInput("no paths".into()))?;
    if paths.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 paths".into()));
    }
    let times = &first.partition;
    let mut eps_hat: f64 = 0.0;
    let mut worst = 0;
    let mut delta: f64 = 0.0;
    for l in 0..times.len() - 1 {
        let dl = times[l + 1] - times[l];
        delta = delta.max(dl);
        let diffs: Vec<f64> = paths
            .iter()
            .map(|p| p.gap_sq(l + 1) - p.gap_sq(l) * (1.0 + beta * dl))
            .collect();
        let est = OutcomeEstimate::from_samples(&diffs)?;
        let eps = ((est.mean - 3.0 * est.std_error) / dl - theta).max(0.0);
        if eps > eps_hat {
            eps_hat = eps;
            worst = l;
        }
    }
    Ok(CouplingReport { delta, beta, theta, eps_hat, worst_interval: worst })
}

/// Mean outcome of a set of replicas.
pub fn outcome_estimate(paths: &[PairedTrajectory]) -> Result<OutcomeEstimate> {
    let xs: Vec<f64> = paths.iter().map(|p| p.outcome).collect();
    OutcomeEstimate::from_samples(&xs)
}

/// Mean model outcome (diagnostic).
pub fn model_outcome_mean(paths: &[PairedTrajectory]) -> f64 {
    let xs: Vec<f64> = paths.iter().map(|p| p.model_outcome).collect();
    pairwise_sum(&xs) / xs.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::game::catalog;
    use crate::hjb::{solve_backward, SolverOptions, ValueGrid, ValueKind};
    use crate::rng;

    #[test]
    fn partition_invariants() {
        let p = Partition::uniform(0.0, 1.0, 0.3).unwrap();
        assert_eq!(p.times.len(), 5);
        assert_eq!(p.end(), 1.0);
        assert!((p.diameter - 0.25).abs() < 1e-15);
        assert!(Partition::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn varpi_examples() {
        let spec = catalog::g1();
        assert_eq!(varpi(&spec, 0.0, &[0.3], &[0.3], 2, 2, Branch::One).unwrap(), 0.0);
        assert_eq!(varpi(&spec, 0.0, &[1.0], &[0.0], 2, 2, Branch::One).unwrap(), 1.5);
        // branch two evaluates at ξ, but the drift of g1 does not depend on the state
        let b2 = varpi(&spec, 0.0, &[1.0], &[0.0], 2, 2, Branch::Two { h: 0.05 }).unwrap();
        assert_eq!(b2, 1.5);
    }

    #[test]
    fn selection_examples() {
        let spec = catalog::g1();
        assert_eq!(select_u(&spec, 0.0, &[0.2], &[0.2], Branch::One).unwrap(), 0);
        assert_eq!(select_v(&spec, 0.0, &[0.2], &[0.2], Branch::One).unwrap(), 0);
        assert_eq!(spec.u_grid[select_u(&spec, 0.0, &[1.0], &[0.0], Branch::One).unwrap()], vec![-1.0]);
        assert_eq!(spec.u_grid[select_u(&spec, 0.0, &[-1.0], &[0.0], Branch::One).unwrap()], vec![1.0]);
        assert_eq!(spec.v_grid[select_v(&spec, 0.0, &[1.0], &[0.0], Branch::One).unwrap()], vec![0.5]);
        assert_eq!(spec.v_grid[select_v(&spec, 0.0, &[-1.0], &[0.0], Branch::One).unwrap()], vec![-0.5]);
    }

    fn g1_eta(h: f64) -> SolveResult {
        let spec = catalog::g1();
        let n = (3.0 / h).round() as i64;
        let dom = Arc::new(LatticeDomain::new(h, vec![-n], vec![n]).unwrap());
        let opts = SolverOptions { keep_all_steps: true, ..Default::default() };
        solve_backward(&spec, dom, h / 3.0, ValueKind::Upper, &[0.0], opts).unwrap()
    }

    #[test]
    fn model_feedback_examples() {
        let spec = catalog::g1();
        let eta = g1_eta(0.05);
        assert_eq!(spec.u_grid[model_feedback(&eta, &spec, 1.0, &[4]).unwrap()], vec![-1.0]);
        assert_eq!(spec.u_grid[model_feedback(&eta, &spec, 0.2, &[40]).unwrap()], vec![-1.0]);
        assert!(matches!(model_feedback(&eta, &spec, 0.2, &[400]), Err(Error::Truncation(_))));

        let mut flat = eta.clone();
        for s in &mut flat.slices {
            *s = ValueGrid::from_fn(s.t, s.domain.clone(), |_| 1.0);
        }
        assert_eq!(model_feedback(&flat, &spec, 0.5, &[3]).unwrap(), 0);
    }

    #[test]
    fn frozen_dynamics() {
        let spec = catalog::constant_drift(vec![0.0], 1.0);
        let dom = Arc::new(LatticeDomain::new(0.1, vec![-10], vec![10]).unwrap());
        let eta = solve_backward(&spec, dom, 0.01, ValueKind::Upper, &[0.0], SolverOptions::default()).unwrap();
        let part = Partition::uniform(0.0, 1.0, 0.1).unwrap();
        let mut r = rng::seeded(3);
        let p = run_extremal_shift(&spec, &part, &[0.3], &eta, &Adversary::Constant(0), 0.1, &mut r, ShiftOptions::default())
            .unwrap();
        assert_eq!(p.x_at.last().unwrap(), &vec![0.3]);
        assert_eq!(p.y_at.last().unwrap(), &vec![3]);
        assert_eq!(p.outcome, 0.3);
    }

    #[test]
    fn start_coupling_and_saddle_by_construction() {
        let spec = catalog::g1();
        let eta = g1_eta(0.05);
        let part = Partition::uniform(0.0, 1.0, 0.05).unwrap();
        let mut r = rng::replica(9, 0);
        let opts = ShiftOptions { record_path: true, ..Default::default() };
        let p = run_extremal_shift(&spec, &part, &[0.5], &eta, &Adversary::WorstCase, 0.05, &mut r, opts).unwrap();
        assert_eq!(p.gap_sq(0), 0.0);
        for l in 0..p.u_log.len() {
            let y = p.y_state(l);
            let x = &p.x_at[l];
            let t = p.partition[l];
            let best = (0..3)
                .map(|u| (0..3).map(|v| varpi(&spec, t, x, &y, u, v, Branch::One).unwrap()).fold(f64::MIN, f64::max))
                .fold(f64::MAX, f64::min);
            let chosen = (0..3)
                .map(|v| varpi(&spec, t, x, &y, p.u_log[l], v, Branch::One).unwrap())
                .fold(f64::MIN, f64::max);
            assert_eq!(chosen, best);
        }
        assert!(!p.dump.is_empty());
        assert!(p.dump.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn replica_is_bitwise_reproducible() {
        let spec = catalog::g1();
        let eta = g1_eta(0.05);
        let part = Partition::uniform(0.0, 1.0, 0.02).unwrap();
        let adv = Adversary::Random { seed: 4, hold: 0.1 };
        let run = || {
            let mut r = rng::replica(21, 5);
            run_extremal_shift(&spec, &part, &[0.0], &eta, &adv, 0.05, &mut r, ShiftOptions::default()).unwrap()
        };
        assert_eq!(run(), run());
    }
}
