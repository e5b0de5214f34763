//! Trajectories of the original system and of the lattice chain, Monte
//! Carlo estimation, and martingale / moment diagnostics.
//!
//! The chain is simulated by thinning: proposals arrive at the constant rate
//! `Λ = d·M1/h`, which dominates the total jump rate because every
//! `|f_i| ≤ ‖f‖ ≤ M1`. A proposal at time `τ` evaluates the controls and the
//! rates there and is accepted with probability `rate/Λ`. This is exact for
//! rates that vary in time through the controls or through `t`.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::lattice::{warn_coarse_mesh, RateList};
use crate::rng::{self, GameRng};

/// A feedback rule returning a control grid index.
pub trait Policy {
    fn select(&mut self, t: f64, x: &[f64]) -> Result<usize>;
}

impl<F> Policy for F
where
    F: FnMut(f64, &[f64]) -> Result<usize>,
{
    fn select(&mut self, t: f64, x: &[f64]) -> Result<usize> {
        self(t, x)
    }
}

/// Always the same grid index.
#[derive(Debug, Clone, Copy)]
pub struct Fixed(pub usize);

impl Policy for Fixed {
    fn select(&mut self, _t: f64, _x: &[f64]) -> Result<usize> {
        Ok(self.0)
    }
}

/// Prefixes an error message with the time at which it occurred.
pub(crate) fn stamp(e: Error, t: f64) -> Error {
    let at = |m: String| format!("at t={t}: {m}");
    match e {
        Error::InvalidSpec(m) => Error::InvalidSpec(at(m)),
        Error::Domain(m) => Error::Domain(at(m)),
        Error::Truncation(m) => Error::Truncation(at(m)),
        Error::StepSize(m) => Error::StepSize(at(m)),
        Error::InvalidInput(m) => Error::InvalidInput(at(m)),
        other => other,
    }
}

fn check_index(spec: &GameSpec, ui: usize, vi: usize, t: f64) -> Result<()> {
    if ui >= spec.u_grid.len() || vi >= spec.v_grid.len() {
        return Err(Error::Domain(format!(
            "at t={t}: control index ({ui}, {vi}) outside the grids ({}, {})",
            spec.u_grid.len(),
            spec.v_grid.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ODE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub u_log: Vec<usize>,
    pub v_log: Vec<usize>,
}

impl OdeTrajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has a start point")
    }

    /// Linear interpolation between step points.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k == self.times.len() {
            return self.final_state().to_vec();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.states[k - 1]
            .iter()
            .zip(&self.states[k])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

/// Scratch space for [`rk4_step_in_place`].
#[derive(Debug, Clone)]
pub struct Rk4Scratch {
    k: [Vec<f64>; 4],
    y: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(d: usize) -> Self {
        Rk4Scratch { k: std::array::from_fn(|_| vec![0.0; d]), y: vec![0.0; d] }
    }
}

/// One classical RK4 step with the controls held fixed, overwriting `x`.
pub fn rk4_step_in_place(
    spec: &GameSpec,
    t: f64,
    x: &mut [f64],
    dt: f64,
    ui: usize,
    vi: usize,
    s: &mut Rk4Scratch,
) {
    let d = x.len();
    let [k1, k2, k3, k4] = &mut s.k;
    let y = &mut s.y;
    spec.drift_at(t, x, ui, vi, k1);
    for i in 0..d {
        y[i] = x[i] + 0.5 * dt * k1[i];
    }
    spec.drift_at(t + 0.5 * dt, y, ui, vi, k2);
    for i in 0..d {
        y[i] = x[i] + 0.5 * dt * k2[i];
    }
    spec.drift_at(t + 0.5 * dt, y, ui, vi, k3);
    for i in 0..d {
        y[i] = x[i] + dt * k3[i];
    }
    spec.drift_at(t + dt, y, ui, vi, k4);
    for i in 0..d {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// One classical RK4 step with the controls held fixed.
pub fn rk4_step(spec: &GameSpec, t: f64, x: &[f64], dt: f64, ui: usize, vi: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    rk4_step_in_place(spec, t, &mut out, dt, ui, vi, &mut Rk4Scratch::new(x.len()));
    out
}

/// Fixed-step RK4 from `t0` to `T`; controls are evaluated at each step start.
pub fn integrate_ode(
    spec: &GameSpec,
    u_policy: &mut impl Policy,
    v_policy: &mut impl Policy,
    x0: &[f64],
    t0: f64,
    dt: f64,
) -> Result<OdeTrajectory> {
    if x0.len() != spec.dim {
        return Err(Error::InvalidInput("x0 has the wrong dimension".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::StepSize(format!("dt = {dt} must be > 0")));
    }
    if !(t0 >= 0.0 && t0 <= spec.horizon) {
        return Err(Error::Domain(format!("t0 = {t0} outside [0, {}]", spec.horizon)));
    }
    let span = spec.horizon - t0;
    let n = if span > 0.0 { ((span / dt) - 1e-9).ceil().max(1.0) as usize } else { 0 };
    let step = if n > 0 { span / n as f64 } else { 0.0 };
    let mut traj = OdeTrajectory {
        times: vec![t0],
        states: vec![x0.to_vec()],
        u_log: Vec::with_capacity(n),
        v_log: Vec::with_capacity(n),
    };
    let mut x = x0.to_vec();
    for k in 0..n {
        let t = t0 + k as f64 * step;
        let ui = u_policy.select(t, &x).map_err(|e| stamp(e, t))?;
        let vi = v_policy.select(t, &x).map_err(|e| stamp(e, t))?;
        check_index(spec, ui, vi, t)?;
        x = rk4_step(spec, t, &x, step, ui, vi);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("trajectory left the finite range at t={t}")));
        }
        traj.times.push(if k + 1 == n { spec.horizon } else { t + step });
        traj.states.push(x.clone());
        traj.u_log.push(ui);
        traj.v_log.push(vi);
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Chain
// ---------------------------------------------------------------------------

/// The chain sits at `point` with controls `(ui, vi)` from time `t` until the
/// next segment starts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub t: f64,
    pub point: Vec<i64>,
    pub ui: usize,
    pub vi: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpTrajectory {
    pub h: f64,
    pub t_end: f64,
    pub segments: Vec<Segment>,
    pub jumps: usize,
}

impl JumpTrajectory {
    pub fn t0(&self) -> f64 {
        self.segments[0].t
    }

    fn segment_index(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.t <= t).saturating_sub(1)
    }

    pub fn point_at(&self, t: f64) -> &[i64] {
        &self.segments[self.segment_index(t)].point
    }

    pub fn state_at(&self, t: f64) -> Vec<f64> {
        self.point_at(t).iter().map(|&p| p as f64 * self.h).collect()
    }

    pub fn final_point(&self) -> &[i64] {
        &self.segments.last().expect("nonempty").point
    }
}

/// Proposal rate that dominates every total jump rate.
pub fn rate_majorant(spec: &GameSpec, h: f64) -> f64 {
    spec.dim as f64 * spec.drift_bound / h
}

/// Runs the chain from `point` over `[t0, t1)`, updating `point` in place.
/// `controls` is consulted at `t0` and at every proposal. Returns the
/// number of jumps.
pub fn advance_chain<R, C>(
    spec: &GameSpec,
    point: &mut Vec<i64>,
    t0: f64,
    t1: f64,
    h: f64,
    rng: &mut R,
    controls: &mut C,
    mut log: Option<&mut Vec<Segment>>,
) -> Result<usize>
where
    R: Rng + ?Sized,
    C: FnMut(f64, &[i64]) -> Result<(usize, usize)> + ?Sized,
{
    let lambda = rate_majorant(spec, h);
    let d = spec.dim;
    let mut state = vec![0.0; d];
    let mut f = vec![0.0; d];
    let mut jumps = 0;
    let mut last = controls(t0, point).map_err(|e| stamp(e, t0))?;
    check_index(spec, last.0, last.1, t0)?;
    if let Some(log) = log.as_deref_mut() {
        log.push(Segment { t: t0, point: point.clone(), ui: last.0, vi: last.1 });
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let mut t = t0;
    loop {
        let wait: f64 = rng.sample::<f64, _>(Exp1) / lambda;
        t += wait;
        if t >= t1 {
            return Ok(jumps);
        }
        let (ui, vi) = controls(t, point).map_err(|e| stamp(e, t))?;
        check_index(spec, ui, vi, t)?;
        for (s, p) in state.iter_mut().zip(point.iter()) {
            *s = *p as f64 * h;
        }
        spec.drift_at(t, &state, ui, vi, &mut f);
        let rates = RateList::from_drift(point, &f, h);
        if !rates.total_rate.is_finite() {
            return Err(Error::InvalidSpec(format!("non-finite rate at t={t}, x={state:?}")));
        }
        if rates.total_rate > lambda * (1.0 + 1e-9) {
            return Err(Error::InvalidSpec(format!(
                "total rate {} at t={t}, x={state:?} exceeds d·M1/h = {lambda}; M1 understated",
                rates.total_rate
            )));
        }
        let mut pick = rng.random::<f64>() * lambda;
        let mut jumped = false;
        for entry in &rates.entries {
            if pick < entry.rate {
                point[entry.axis] += entry.step as i64;
                jumps += 1;
                jumped = true;
                break;
            }
            pick -= entry.rate;
        }
        if jumped || (ui, vi) != last {
            last = (ui, vi);
            if let Some(log) = log.as_deref_mut() {
                log.push(Segment { t, point: point.clone(), ui, vi });
            }
        }
    }
}

/// Full chain path from `xi0` at `t0` to `T` under feedback policies.
pub fn simulate_chain(
    spec: &GameSpec,
    u_policy: &mut impl Policy,
    v_policy: &mut impl Policy,
    xi0: &[i64],
    h: f64,
    t0: f64,
    rng: &mut GameRng,
) -> Result<JumpTrajectory> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("mesh h = {h} must be > 0")));
    }
    if xi0.len() != spec.dim {
        return Err(Error::InvalidInput("xi0 has the wrong dimension".into()));
    }
    if !(t0 >= 0.0 && t0 <= spec.horizon) {
        return Err(Error::Domain(format!("t0 = {t0} outside [0, {}]", spec.horizon)));
    }
    warn_coarse_mesh(h);
    let mut point = xi0.to_vec();
    let mut segments = Vec::new();
    let mut x = vec![0.0; spec.dim];
    let mut controls = |t: f64, p: &[i64]| -> Result<(usize, usize)> {
        for (xi, pi) in x.iter_mut().zip(p) {
            *xi = *pi as f64 * h;
        }
        Ok((u_policy.select(t, &x)?, v_policy.select(t, &x)?))
    };
    let jumps = advance_chain(spec, &mut point, t0, spec.horizon, h, rng, &mut controls, Some(&mut segments))?;
    Ok(JumpTrajectory { h, t_end: spec.horizon, segments, jumps })
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Pairwise (cascade) summation; the split points depend only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub ci95: (f64, f64),
}

impl OutcomeEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 replicas, got {n}")));
        }
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        let std_error = (var / n as f64).sqrt();
        Ok(OutcomeEstimate {
            mean,
            std_error,
            n,
            ci95: (mean - 1.96 * std_error, mean + 1.96 * std_error),
        })
    }
}

/// Runs `n` replicas in parallel, replica `i` on stream `i` of `seed`.
/// Results come back in replica order.
pub fn run_replicas<T, F>(n: usize, seed: u64, run: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut GameRng) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::replica(seed, i as u64);
            run(i, &mut r).map_err(|e| Error::Replica { index: i, source: Box::new(e) })
        })
        .collect()
}

pub fn monte_carlo_outcome<F>(run: F, n: usize, seed: u64) -> Result<OutcomeEstimate>
where
    F: Fn(usize, &mut GameRng) -> Result<f64> + Sync,
{
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 replicas, got {n}")));
    }
    let xs = run_replicas(n, seed, run)?;
    OutcomeEstimate::from_samples(&xs)
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Anything that can report its state at a time.
pub trait SamplePath {
    fn state(&self, t: f64) -> Vec<f64>;
}

impl SamplePath for OdeTrajectory {
    fn state(&self, t: f64) -> Vec<f64> {
        self.state_at(t)
    }
}

impl SamplePath for JumpTrajectory {
    fn state(&self, t: f64) -> Vec<f64> {
        self.state_at(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentReport {
    pub mean: f64,
    pub std_error: f64,
    /// `m0 (t − s)`, the leading term of the bound.
    pub leading_bound: f64,
    /// `max(0, mean − leading_bound) / (t − s)`, absorbing the unspecified modulus.
    pub fitted_slack: f64,
    pub within_leading: bool,
}

/// Compares `E‖X(t) − X(s)‖²` with `m0 (t − s)`.
pub fn moment_growth_check<P: SamplePath>(paths: &[P], s: f64, t: f64, m0: f64) -> Result<MomentReport> {
    if t < s {
        return Err(Error::InvalidInput(format!("need s <= t, got s={s}, t={t}")));
    }
    let sq: Vec<f64> = paths
        .iter()
        .map(|p| {
            let a = p.state(s);
            let b = p.state(t);
            a.iter().zip(&b).map(|(x, y)| (y - x) * (y - x)).sum()
        })
        .collect();
    let est = OutcomeEstimate::from_samples(&sq)?;
    let leading = m0 * (t - s);
    let fitted_slack = if t > s { (est.mean - leading).max(0.0) / (t - s) } else { 0.0 };
    Ok(MomentReport {
        mean: est.mean,
        std_error: est.std_error,
        leading_bound: leading,
        fitted_slack,
        within_leading: est.mean <= leading + 3.0 * est.std_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `⟨a, x⟩`
    Linear(Vec<f64>),
    /// `‖x − a‖²`
    Quadratic(Vec<f64>),
}

impl TestFunction {
    pub fn tag(&self) -> &'static str {
        match self {
            TestFunction::Linear(_) => "linear-a",
            TestFunction::Quadratic(_) => "quadratic-a",
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Linear(a) => a.iter().zip(x).map(|(a, x)| a * x).sum(),
            TestFunction::Quadratic(a) => a.iter().zip(x).map(|(a, x)| (x - a) * (x - a)).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub test_function: String,
    pub checkpoints: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub max_abs_residual: f64,
    pub ci_contains_zero: Vec<bool>,
}

/// Generator of the chain applied to `phi` at `point`.
fn chain_generator(spec: &GameSpec, phi: &TestFunction, t: f64, point: &[i64], ui: usize, vi: usize, h: f64) -> f64 {
    let x: Vec<f64> = point.iter().map(|&p| p as f64 * h).collect();
    let mut f = vec![0.0; spec.dim];
    spec.drift_at(t, &x, ui, vi, &mut f);
    let here = phi.eval(&x);
    RateList::from_drift(point, &f, h)
        .entries
        .iter()
        .map(|e| {
            let y: Vec<f64> = e.target.iter().map(|&p| p as f64 * h).collect();
            e.rate * (phi.eval(&y) - here)
        })
        .sum()
}

/// `∫_{a}^{b} L φ` along one path, Simpson's rule on every segment.
fn compensator(spec: &GameSpec, path: &JumpTrajectory, phi: &TestFunction, b: f64) -> f64 {
    let mut acc = 0.0;
    for (k, seg) in path.segments.iter().enumerate() {
        let lo = seg.t;
        if lo >= b {
            break;
        }
        let hi = path.segments.get(k + 1).map_or(path.t_end, |s| s.t).min(b);
        if hi <= lo {
            continue;
        }
        let g = |t: f64| chain_generator(spec, phi, t, &seg.point, seg.ui, seg.vi, path.h);
        acc += (hi - lo) / 6.0 * (g(lo) + 4.0 * g(0.5 * (lo + hi)) + g(hi));
    }
    acc
}

/// Per checkpoint `c`: the replica mean of
/// `φ(Y(c)) − φ(Y(t0)) − ∫_{t0}^{c} Lφ(Y) dτ` and whether 0 lies within 3 SE.
pub fn martingale_residual(
    spec: &GameSpec,
    paths: &[JumpTrajectory],
    phi: &TestFunction,
    checkpoints: &[f64],
) -> Result<ResidualReport> {
    if paths.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 paths".into()));
    }
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut inside = Vec::new();
    for &c in checkpoints {
        let r: Vec<f64> = paths
            .par_iter()
            .map(|p| phi.eval(&p.state_at(c)) - phi.eval(&p.state_at(p.t0())) - compensator(spec, p, phi, c))
            .collect();
        let est = OutcomeEstimate::from_samples(&r)?;
        if !est.mean.is_finite() {
            return Err(Error::InvalidSpec("non-finite martingale residual".into()));
        }
        let tol = if est.std_error == 0.0 { 1e-12 } else { 3.0 * est.std_error };
        inside.push(est.mean.abs() <= tol);
        means.push(est.mean);
        ses.push(est.std_error);
    }
    Ok(ResidualReport {
        test_function: phi.tag().to_string(),
        checkpoints: checkpoints.to_vec(),
        max_abs_residual: means.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        means,
        std_errors: ses,
        ci_contains_zero: inside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::catalog;

    #[test]
    fn ode_constant_controls_are_exact() {
        let spec = catalog::g1();
        let tr = integrate_ode(&spec, &mut Fixed(2), &mut Fixed(2), &[0.0], 0.0, 0.01).unwrap();
        assert!((tr.final_state()[0] - 1.5).abs() < 1e-10);
        let tr = integrate_ode(&spec, &mut Fixed(0), &mut Fixed(2), &[0.0], 0.0, 0.01).unwrap();
        assert!((tr.final_state()[0] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn ode_zero_drift_is_constant() {
        let spec = catalog::constant_drift(vec![0.0, 0.0], 1.0);
        let tr = integrate_ode(&spec, &mut Fixed(0), &mut Fixed(0), &[0.3, -0.2], 0.0, 0.1).unwrap();
        assert!(tr.states.iter().all(|s| s == &vec![0.3, -0.2]));
    }

    #[test]
    fn ode_policy_errors_carry_the_time() {
        let spec = catalog::g1();
        let mut bad = |t: f64, _: &[f64]| -> Result<usize> {
            if t > 0.5 {
                Err(Error::Domain("no control".into()))
            } else {
                Ok(1)
            }
        };
        let err = integrate_ode(&spec, &mut bad, &mut Fixed(1), &[0.0], 0.0, 0.1).unwrap_err();
        assert!(err.to_string().contains("at t=0.6"), "{err}");
    }

    #[test]
    fn ode_speed_bound() {
        let spec = catalog::g1();
        let paths: Vec<OdeTrajectory> = (0..3)
            .map(|k| integrate_ode(&spec, &mut Fixed(k), &mut Fixed(2 - k), &[0.1], 0.0, 0.05).unwrap())
            .collect();
        let r = moment_growth_check(&paths, 0.2, 0.7, 0.0).unwrap();
        assert!(r.mean <= 1.5 * 1.5 * 0.25 + 1e-12);
        let r0 = moment_growth_check(&paths, 0.4, 0.4, 0.0).unwrap();
        assert_eq!(r0.mean, 0.0);
    }

    #[test]
    fn zero_drift_chain_never_jumps() {
        let spec = catalog::constant_drift(vec![0.0], 1.0);
        let mut r = rng::seeded(1);
        let tr = simulate_chain(&spec, &mut Fixed(0), &mut Fixed(0), &[3], 0.1, 0.0, &mut r).unwrap();
        assert_eq!(tr.jumps, 0);
        assert_eq!(tr.final_point(), &[3]);
    }

    #[test]
    fn chain_paths_make_unit_axis_jumps() {
        let spec = catalog::g2();
        let mut r = rng::seeded(5);
        let mut u = |t: f64, _: &[f64]| -> Result<usize> { Ok(if t < 0.5 { 0 } else { 2 }) };
        let tr = simulate_chain(&spec, &mut u, &mut Fixed(1), &[0, 0], 0.1, 0.0, &mut r).unwrap();
        assert!(tr.jumps > 0);
        for w in tr.segments.windows(2) {
            let diff: i64 = w[0].point.iter().zip(&w[1].point).map(|(a, b)| (a - b).abs()).sum();
            assert!(diff <= 1);
        }
    }

    #[test]
    fn chain_is_reproducible() {
        let spec = catalog::g1();
        let run = |seed| {
            let mut r = rng::replica(seed, 3);
            simulate_chain(&spec, &mut Fixed(2), &mut Fixed(0), &[0], 0.05, 0.0, &mut r).unwrap()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn estimate_examples() {
        let e = OutcomeEstimate::from_samples(&[0.0, 1.0]).unwrap();
        assert_eq!((e.mean, e.std_error), (0.5, 0.5));
        assert_eq!(e.ci95, (0.5 - 0.98, 0.5 + 0.98));
        let e = monte_carlo_outcome(|_, _| Ok(4.0), 10, 0).unwrap();
        assert_eq!((e.mean, e.std_error), (4.0, 0.0));
        assert!(monte_carlo_outcome(|_, _| Ok(1.0), 1, 0).is_err());
    }

    #[test]
    fn replica_failure_names_the_index() {
        let err = monte_carlo_outcome(
            |i, _| if i == 7 { Err(Error::Domain("x".into())) } else { Ok(0.0) },
            20,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Replica { index: 7, .. }));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn zero_rate_residual_is_zero() {
        let spec = catalog::constant_drift(vec![0.0], 1.0);
        let paths = run_replicas(4, 1, |_, r| simulate_chain(&spec, &mut Fixed(0), &mut Fixed(0), &[2], 0.1, 0.0, r))
            .unwrap();
        for phi in [TestFunction::Linear(vec![1.0]), TestFunction::Quadratic(vec![0.3])] {
            let rep = martingale_residual(&spec, &paths, &phi, &[0.5, 1.0]).unwrap();
            assert_eq!(rep.max_abs_residual, 0.0);
            assert!(rep.ci_contains_zero.iter().all(|&b| b));
        }
    }
}
