//! Error constants of the lattice approximation.
//!
//! ```text
//! β  = 2 + 2K            C  = √(T e^{βT})
//! C₁ = C √d              C₂ = d^{3/4} √M1 · C
//! Θ  = κ + M₀¹ + M₀²     M₀² = d^{3/2} M1 h
//! ```
//!
//! For the lattice chain the drift characteristic equals `f`, so `κ = 0`;
//! the original system is deterministic, so `M₀¹ = 0`.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{dist, GameSpec};
use crate::lattice::{characteristics_of, warn_coarse_mesh};
use crate::rng;

pub fn beta(lipschitz: f64) -> f64 {
    2.0 + 2.0 * lipschitz
}

/// `√(T e^{βT})`
pub fn c_const(horizon: f64, beta: f64) -> f64 {
    (horizon * (beta * horizon).exp()).sqrt()
}

/// `d^{3/2} M1 h`, the certified bound on the chain's quadratic characteristic.
pub fn m0_2_bound(spec: &GameSpec, h: f64) -> f64 {
    (spec.dim as f64).powf(1.5) * spec.drift_bound * h
}

/// `(2/3) M1 M′ √δ` with `M′ = (M₀¹ + M1²) e^T`.
pub fn alpha2(spec: &GameSpec, m0_1: f64, delta: f64) -> f64 {
    let m1 = spec.drift_bound;
    let m_prime = (m0_1 + m1 * m1) * spec.horizon.exp();
    2.0 / 3.0 * m1 * m_prime * delta.sqrt()
}

/// `sup ‖f − b‖²` over `n_samples` random arguments for an arbitrary model
/// drift `b(t, x, u_index, v_index)`.
pub fn kappa_sampled<B>(spec: &GameSpec, model_drift: B, n_samples: usize, seed: u64) -> Result<f64>
where
    B: Fn(f64, &[f64], usize, usize) -> Vec<f64>,
{
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be >= 1".into()));
    }
    let mut r = rng::replica(seed, rng::DIAGNOSTIC_STREAM);
    let mut f = vec![0.0; spec.dim];
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples {
        let t = r.random_range(0.0..=spec.horizon);
        let x: Vec<f64> = (0..spec.dim)
            .map(|_| r.random_range(-spec.sample_radius..=spec.sample_radius))
            .collect();
        let ui = r.random_range(0..spec.u_grid.len());
        let vi = r.random_range(0..spec.v_grid.len());
        spec.drift_at(t, &x, ui, vi, &mut f);
        let b = model_drift(t, &x, ui, vi);
        let d = dist(&f, &b);
        worst = worst.max(d * d);
    }
    Ok(worst)
}

/// `κ` for the lattice chain with mesh `h`: exactly zero when `h < 1`,
/// where the drift characteristic matches `f` by construction; sampled
/// otherwise.
pub fn kappa(spec: &GameSpec, h: f64, n_samples: usize, seed: u64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("mesh h = {h} must be > 0")));
    }
    if h < 1.0 {
        return Ok(0.0);
    }
    warn_coarse_mesh(h);
    kappa_sampled(
        spec,
        |t, x, ui, vi| {
            let mut f = vec![0.0; spec.dim];
            spec.drift_at(t, x, ui, vi, &mut f);
            characteristics_of(&f, h).0
        },
        n_samples,
        seed,
    )
}

/// Sampled `sup Σ²` of the chain, `sup h Σ|f_i|`.
pub fn empirical_m0_2(spec: &GameSpec, h: f64, n_samples: usize, seed: u64) -> f64 {
    let mut r = rng::replica(seed, rng::DIAGNOSTIC_STREAM - 2);
    let mut f = vec![0.0; spec.dim];
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples {
        let t = r.random_range(0.0..=spec.horizon);
        let x: Vec<f64> = (0..spec.dim)
            .map(|_| r.random_range(-spec.sample_radius..=spec.sample_radius))
            .collect();
        let ui = r.random_range(0..spec.u_grid.len());
        let vi = r.random_range(0..spec.v_grid.len());
        spec.drift_at(t, &x, ui, vi, &mut f);
        worst = worst.max(characteristics_of(&f, h).1);
    }
    // exhaustive over the grids at the origin as well
    let origin = vec![0.0; spec.dim];
    for ui in 0..spec.u_grid.len() {
        for vi in 0..spec.v_grid.len() {
            spec.drift_at(0.0, &origin, ui, vi, &mut f);
            worst = worst.max(characteristics_of(&f, h).1);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub h: f64,
    pub sigma: Option<f64>,
    pub kappa: f64,
    pub m0_1: f64,
    pub m0_2: f64,
    pub theta: f64,
    pub beta: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub guarantee_thm1: f64,
    pub bound_thm2: f64,
    pub bound_visc: f64,
    pub empirical_m0_2: f64,
}

pub const DEFAULT_SAMPLES: usize = 10_000;

/// All constants for mesh `h` and, optionally, viscosity `sigma`.
pub fn assemble(spec: &GameSpec, h: f64, sigma: Option<f64>) -> Result<BoundsReport> {
    assemble_with(spec, h, sigma, DEFAULT_SAMPLES, 0)
}

pub fn assemble_with(
    spec: &GameSpec,
    h: f64,
    sigma: Option<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<BoundsReport> {
    if let Some(s) = sigma {
        if !(s >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma = {s} must be >= 0")));
        }
    }
    let d = spec.dim as f64;
    let kappa = kappa(spec, h, n_samples, seed)?;
    let m0_1 = 0.0;
    let m0_2 = m0_2_bound(spec, h);
    let theta = kappa + m0_1 + m0_2;
    let beta = beta(spec.drift_lipschitz);
    let c = c_const(spec.horizon, beta);
    let c1 = c * d.sqrt();
    let c2 = d.powf(0.75) * spec.drift_bound.sqrt() * c;
    let r = spec.payoff_lipschitz;
    Ok(BoundsReport {
        h,
        sigma,
        kappa,
        m0_1,
        m0_2,
        theta,
        beta,
        c,
        c1,
        c2,
        guarantee_thm1: r * c * theta.sqrt(),
        bound_thm2: r * c2 * h.sqrt(),
        bound_visc: r * c1 * sigma.unwrap_or(0.0),
        empirical_m0_2: empirical_m0_2(spec, h, n_samples, seed),
    })
}

impl BoundsReport {
    /// `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: f64| {
            let _ = writeln!(s, "{k}={v:.16e}");
        };
        put("h", self.h);
        if let Some(sig) = self.sigma {
            put("sigma", sig);
        }
        put("kappa", self.kappa);
        put("m0_1", self.m0_1);
        put("m0_2", self.m0_2);
        put("theta", self.theta);
        put("beta", self.beta);
        put("c", self.c);
        put("c1", self.c1);
        put("c2", self.c2);
        put("guarantee_thm1", self.guarantee_thm1);
        put("bound_thm2", self.bound_thm2);
        put("bound_visc", self.bound_visc);
        put("empirical_m0_2", self.empirical_m0_2);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::catalog;

    #[test]
    fn beta_examples() {
        assert_eq!(beta(0.0), 2.0);
        assert_eq!(beta(1.0), 4.0);
        assert_eq!(beta(0.5), 3.0);
    }

    #[test]
    fn kappa_examples() {
        let spec = catalog::g1();
        assert_eq!(kappa(&spec, 0.05, 100, 1).unwrap(), 0.0);
        let same = kappa_sampled(
            &spec,
            |t, x, u, v| {
                let mut f = vec![0.0];
                spec.drift_at(t, x, u, v, &mut f);
                f
            },
            500,
            1,
        )
        .unwrap();
        assert_eq!(same, 0.0);
        let g2 = catalog::g2();
        let shifted = kappa_sampled(
            &g2,
            |t, x, u, v| {
                let mut f = vec![0.0; 2];
                g2.drift_at(t, x, u, v, &mut f);
                f[0] += 0.1;
                f
            },
            500,
            1,
        )
        .unwrap();
        assert!((shifted - 0.01).abs() < 1e-15, "{shifted}");
    }

    #[test]
    fn g1_report() {
        let spec = catalog::g1();
        let r = assemble(&spec, 0.04, None).unwrap();
        let e = std::f64::consts::E;
        assert_eq!(r.beta, 2.0);
        assert!((r.c - e).abs() < 1e-15);
        assert!((r.c2 - 1.5f64.sqrt() * e).abs() < 1e-14);
        assert!((r.bound_thm2 - 0.665_84).abs() < 1e-4);
        assert_eq!(r.bound_visc, 0.0);
        assert_eq!(r.theta, r.kappa + r.m0_1 + r.m0_2);
        assert_eq!(r.theta, r.m0_2);
        assert!(r.empirical_m0_2 <= r.m0_2 + 1e-15);
        assert!(r.guarantee_thm1 <= r.bound_thm2 * (1.0 + 1e-12));
    }

    #[test]
    fn bound_scales_with_root_h() {
        let spec = catalog::g2();
        let a = assemble_with(&spec, 0.01, None, 100, 0).unwrap();
        let b = assemble_with(&spec, 0.04, None, 100, 0).unwrap();
        assert!((b.bound_thm2 - 2.0 * a.bound_thm2).abs() <= 1e-15 * b.bound_thm2);
        let tiny = assemble_with(&spec, 1e-12, None, 10, 0).unwrap();
        assert!(tiny.bound_thm2 < 1e-4);
    }

    #[test]
    fn text_block_lists_all_keys() {
        let r = assemble_with(&catalog::g1(), 0.1, Some(0.2), 10, 0).unwrap();
        let text = r.to_text();
        for k in ["kappa=", "theta=", "c2=", "bound_visc=", "sigma="] {
            assert!(text.contains(k));
        }
        let back: BoundsReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn alpha2_reference() {
        let spec = catalog::g1();
        let a = alpha2(&spec, 0.0, 0.04);
        let expect = 2.0 / 3.0 * 1.5 * (2.25 * std::f64::consts::E) * 0.2;
        assert!((a - expect).abs() < 1e-14);
    }
}
