//! The lattice Markov chain on `hℤ^d` that replaces the ODE dynamics.
//!
//! From state `x` under controls `(u, v)` the chain jumps along axis `i` by
//! `h·sign(f_i)` at rate `|f_i|/h`. Its generator is
//!
//! ```text
//! L φ(x) = Σ_i |f_i| (φ(x + h χ_i) − φ(x)) / h
//! ```
//!
//! so the drift characteristic is exactly `f` (every jump lies inside the
//! unit ball when `h < 1`) and the quadratic characteristic is `h Σ|f_i|`.

use crate::error::{Error, Result};
use crate::game::GameSpec;

/// Drift components with magnitude below this are treated as zero.
pub const RATE_FLOOR: f64 = 1e-14;

/// Largest point count a domain may have before construction is refused.
pub const DEFAULT_POINT_BUDGET: usize = 20_000_000;

/// A box `lo ..= hi` of lattice coordinates; the state of index vector `k`
/// is `h·k`. Dense indices run in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDomain {
    pub h: f64,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl LatticeDomain {
    pub fn new(h: f64, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        Self::with_budget(h, lo, hi, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(h: f64, lo: Vec<i64>, hi: Vec<i64>, budget: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("mesh h = {h} must be > 0")));
        }
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidInput("box corners must share a nonzero dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidInput(format!("box corners out of order: {lo:?} > {hi:?}")));
        }
        let d = lo.len();
        let mut strides = vec![1usize; d];
        let mut len: usize = 1;
        for i in (0..d).rev() {
            strides[i] = len;
            let extent = usize::try_from(hi[i] - lo[i] + 1)
                .map_err(|_| Error::Resource("box extent overflows".into()))?;
            len = len
                .checked_mul(extent)
                .filter(|&n| n <= budget)
                .ok_or_else(|| {
                    let widest = lo
                        .iter()
                        .zip(&hi)
                        .map(|(a, b)| (b - a) as f64 * h)
                        .fold(0.0, f64::max);
                    let suggested = widest / (budget as f64).powf(1.0 / d as f64);
                    Error::Resource(format!(
                        "lattice box exceeds the budget of {budget} points; try h >= {suggested:.3e}"
                    ))
                })?;
        }
        Ok(LatticeDomain { h, lo, hi, strides, len })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        point
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(p, (a, b))| p >= a && p <= b)
    }

    pub fn index_of(&self, point: &[i64]) -> Option<usize> {
        if !self.contains(point) {
            return None;
        }
        Some(
            point
                .iter()
                .zip(&self.lo)
                .zip(&self.strides)
                .map(|((p, a), s)| (p - a) as usize * s)
                .sum(),
        )
    }

    pub fn point_of(&self, index: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        self.point_into(index, &mut out);
        out
    }

    pub fn point_into(&self, mut index: usize, out: &mut [i64]) {
        for i in 0..self.dim() {
            let q = index / self.strides[i];
            index -= q * self.strides[i];
            out[i] = self.lo[i] + q as i64;
        }
    }

    pub fn state_of(&self, index: usize) -> Vec<f64> {
        self.point_of(index).iter().map(|&k| k as f64 * self.h).collect()
    }

    pub fn state_of_point(&self, point: &[i64]) -> Vec<f64> {
        point.iter().map(|&k| k as f64 * self.h).collect()
    }

    /// Dense index of the neighbour one step along `axis` in direction
    /// `step` (±1), or `None` when it leaves the box.
    #[inline]
    pub fn neighbor(&self, index: usize, point: &[i64], axis: usize, step: i8) -> Option<usize> {
        let target = point[axis] + step as i64;
        if target < self.lo[axis] || target > self.hi[axis] {
            None
        } else if step > 0 {
            Some(index + self.strides[axis])
        } else {
            Some(index - self.strides[axis])
        }
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Nearest lattice point to `x`, with ties rounded toward −∞.
    pub fn round_to_lattice(x: &[f64], h: f64) -> Vec<i64> {
        x.iter().map(|xi| (xi / h - 0.5).ceil() as i64).collect()
    }
}

/// `sign(f)` with `sign(0) = 0`.
pub fn chi(f_component: f64) -> i8 {
    if f_component > 0.0 {
        1
    } else if f_component < 0.0 {
        -1
    } else {
        0
    }
}

#[inline]
fn effective_chi(f: f64) -> i8 {
    if f.abs() < RATE_FLOOR {
        0
    } else {
        chi(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEntry {
    pub target: Vec<i64>,
    pub axis: usize,
    pub step: i8,
    pub rate: f64,
}

/// Outgoing transition rates from one lattice state; `total_rate` is the
/// negated diagonal of the rate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RateList {
    pub entries: Vec<RateEntry>,
    pub total_rate: f64,
}

impl RateList {
    /// Rates from `point` for an already evaluated drift vector.
    pub fn from_drift(point: &[i64], f: &[f64], h: f64) -> Self {
        let mut entries = Vec::with_capacity(f.len());
        let mut total_rate = 0.0;
        for (axis, &fi) in f.iter().enumerate() {
            let step = effective_chi(fi);
            if step == 0 {
                continue;
            }
            let rate = fi.abs() / h;
            let mut target = point.to_vec();
            target[axis] += step as i64;
            entries.push(RateEntry { target, axis, step, rate });
            total_rate += rate;
        }
        RateList { entries, total_rate }
    }
}

fn check_mesh(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("mesh h = {h} must be > 0")));
    }
    Ok(())
}

/// Warn when `h ≥ 1`: jumps then leave the unit ball and the chain's drift
/// no longer coincides with `f` under the truncated-compensator convention.
pub fn warn_coarse_mesh(h: f64) {
    if h >= 1.0 {
        log::warn!("mesh h = {h} >= 1: lattice jumps leave the unit ball");
    }
}

/// Jump measure `(1/h) Σ |f_i| δ_{h χ_i e_i}` as `(offset, mass)` atoms.
pub fn jump_measure(
    spec: &GameSpec,
    t: f64,
    x: &[f64],
    ui: usize,
    vi: usize,
    h: f64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    check_mesh(h)?;
    let mut f = vec![0.0; spec.dim];
    spec.drift_at(t, x, ui, vi, &mut f);
    Ok(f.iter()
        .enumerate()
        .filter_map(|(axis, &fi)| {
            let s = effective_chi(fi);
            (s != 0).then(|| {
                let mut offset = vec![0.0; spec.dim];
                offset[axis] = h * s as f64;
                (offset, fi.abs() / h)
            })
        })
        .collect())
}

pub fn kolmogorov_rates(
    spec: &GameSpec,
    t: f64,
    point: &[i64],
    ui: usize,
    vi: usize,
    h: f64,
) -> Result<RateList> {
    check_mesh(h)?;
    let x: Vec<f64> = point.iter().map(|&k| k as f64 * h).collect();
    let mut f = vec![0.0; spec.dim];
    spec.drift_at(t, &x, ui, vi, &mut f);
    if f.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidSpec(format!("non-finite drift at t={t}, x={x:?}")));
    }
    Ok(RateList::from_drift(point, &f, h))
}

/// `Σ rate · (φ(target) − φ(x))`; `values` returns `None` for points it
/// does not know, which is reported as a truncation error.
pub fn apply_generator<F>(
    values: F,
    spec: &GameSpec,
    t: f64,
    point: &[i64],
    ui: usize,
    vi: usize,
    h: f64,
) -> Result<f64>
where
    F: Fn(&[i64]) -> Option<f64>,
{
    let rates = kolmogorov_rates(spec, t, point, ui, vi, h)?;
    let here = values(point)
        .ok_or_else(|| Error::Truncation(format!("no value at lattice point {point:?}")))?;
    let mut acc = 0.0;
    for e in &rates.entries {
        let there = values(&e.target).ok_or_else(|| {
            Error::Truncation(format!("jump target {:?} outside the value domain", e.target))
        })?;
        acc += e.rate * (there - here);
    }
    Ok(acc)
}

/// Drift `b²` and quadratic characteristic `Σ²` of the chain at `x`.
pub fn chain_characteristics(
    spec: &GameSpec,
    t: f64,
    x: &[f64],
    ui: usize,
    vi: usize,
    h: f64,
) -> Result<(Vec<f64>, f64)> {
    check_mesh(h)?;
    warn_coarse_mesh(h);
    let mut f = vec![0.0; spec.dim];
    spec.drift_at(t, x, ui, vi, &mut f);
    Ok(characteristics_of(&f, h))
}

pub(crate) fn characteristics_of(f: &[f64], h: f64) -> (Vec<f64>, f64) {
    let mut b = vec![0.0; f.len()];
    let mut sigma2 = 0.0;
    for (i, &fi) in f.iter().enumerate() {
        let s = effective_chi(fi);
        if s == 0 {
            continue;
        }
        let mass = fi.abs() / h;
        let jump = h * s as f64;
        b[i] = jump * mass;
        sigma2 += jump * jump * mass;
    }
    (b, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{catalog, Drift, GameSpec, Payoff};
    use std::sync::Arc;

    fn constant(c: Vec<f64>) -> GameSpec {
        catalog::constant_drift(c, 1.0)
    }

    #[test]
    fn chi_signs() {
        assert_eq!(chi(2.0), 1);
        assert_eq!(chi(-0.3), -1);
        assert_eq!(chi(0.0), 0);
    }

    #[test]
    fn jump_measure_examples() {
        let g = constant(vec![2.0]);
        assert_eq!(jump_measure(&g, 0.0, &[0.0], 0, 0, 0.5).unwrap(), vec![(vec![0.5], 4.0)]);
        let g = constant(vec![1.0, -1.0]);
        assert_eq!(
            jump_measure(&g, 0.0, &[0.0, 0.0], 0, 0, 0.25).unwrap(),
            vec![(vec![0.25, 0.0], 4.0), (vec![0.0, -0.25], 4.0)]
        );
        let g = constant(vec![0.0, 0.0]);
        assert!(jump_measure(&g, 0.0, &[0.0, 0.0], 0, 0, 0.25).unwrap().is_empty());
    }

    #[test]
    fn rate_examples() {
        let g = constant(vec![2.0]);
        let r = kolmogorov_rates(&g, 0.0, &[0], 0, 0, 0.5).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].target, vec![1]);
        assert_eq!(r.entries[0].rate, 4.0);
        assert_eq!(r.total_rate, 4.0);

        let r = kolmogorov_rates(&constant(vec![0.0]), 0.0, &[3], 0, 0, 0.5).unwrap();
        assert!(r.entries.is_empty());
        assert_eq!(r.total_rate, 0.0);

        let g1 = catalog::g1();
        let r = kolmogorov_rates(&g1, 0.0, &[0], 2, 2, 0.1).unwrap();
        assert_eq!(r.entries[0].target, vec![1]);
        assert!((r.entries[0].rate - 15.0).abs() < 1e-12);
        assert!((r.total_rate - 15.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_drift_components_dropped() {
        let r = RateList::from_drift(&[0, 0], &[1e-15, -2.0], 0.5);
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].axis, 1);
    }

    #[test]
    fn generator_examples() {
        let g = constant(vec![2.0]);
        let h = 0.5;
        let lin = |p: &[i64]| Some(3.0 * p[0] as f64 * h);
        assert_eq!(apply_generator(lin, &g, 0.0, &[4], 0, 0, h).unwrap(), 6.0);
        assert_eq!(apply_generator(|_| Some(7.0), &g, 0.0, &[4], 0, 0, h).unwrap(), 0.0);
        // ϑ_a with a = x: the generator returns Σ² = h|f| = 1.
        let a = 2.0;
        let quad = |p: &[i64]| Some((p[0] as f64 * h - a).powi(2));
        assert_eq!(apply_generator(quad, &g, 0.0, &[4], 0, 0, h).unwrap(), 1.0);
    }

    #[test]
    fn generator_missing_target_is_truncation() {
        let g = constant(vec![2.0]);
        let vals = |p: &[i64]| (p[0] <= 0).then_some(0.0);
        assert!(matches!(
            apply_generator(vals, &g, 0.0, &[0], 0, 0, 0.5),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn characteristic_examples() {
        let (b, s) = chain_characteristics(&constant(vec![2.0]), 0.0, &[0.0], 0, 0, 0.5).unwrap();
        assert_eq!((b, s), (vec![2.0], 1.0));
        let (b, s) = chain_characteristics(&constant(vec![0.0]), 0.0, &[0.0], 0, 0, 0.5).unwrap();
        assert_eq!((b, s), (vec![0.0], 0.0));
        let (b, s) =
            chain_characteristics(&constant(vec![1.0, -1.0]), 0.0, &[0.0, 0.0], 0, 0, 0.1).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-15 && (b[1] + 1.0).abs() < 1e-15);
        assert!((s - 0.2).abs() < 1e-15);
    }

    #[test]
    fn domain_index_round_trip() {
        let d = LatticeDomain::new(0.1, vec![-2, 0, 3], vec![1, 2, 4]).unwrap();
        assert_eq!(d.len(), 4 * 3 * 2);
        for k in 0..d.len() {
            assert_eq!(d.index_of(&d.point_of(k)), Some(k));
        }
        assert_eq!(d.index_of(&[2, 0, 3]), None);
    }

    #[test]
    fn domain_budget_enforced() {
        let err = LatticeDomain::with_budget(0.001, vec![-5000, -5000], vec![5000, 5000], 1_000_000)
            .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Resource(_)));
        assert!(msg.contains("try h >="), "{msg}");
    }

    #[test]
    fn rounding_ties_go_down() {
        assert_eq!(LatticeDomain::round_to_lattice(&[0.25, -0.25, 0.26], 0.5), vec![0, -1, 1]);
    }

    #[test]
    fn state_dependent_drift_rates() {
        let g = GameSpec::new(
            1,
            1.0,
            Drift::Custom(Arc::new(|_, x, _, _, out| out[0] = -x[0])),
            vec![vec![0.0]],
            vec![vec![0.0]],
            Payoff::Constant(0.0),
            0.0,
            10.0,
            1.0,
        )
        .unwrap();
        let r = kolmogorov_rates(&g, 0.0, &[3], 0, 0, 0.5).unwrap();
        assert_eq!(r.entries[0].target, vec![2]);
        assert_eq!(r.total_rate, 3.0);
    }
}
