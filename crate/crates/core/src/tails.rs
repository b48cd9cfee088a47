//! Gaussian tail inequalities: one-dimensional sandwich, bivariate and
//! multivariate orthant bounds, Paley–Zygmund and a Monte Carlo reference.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{normal, uniform, Stream};

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSandwich {
    pub lower: f64,
    pub upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    /// Threshold(s) the bounds were evaluated at.
    pub at: Vec<f64>,
}

impl TailSandwich {
    fn new(lower: f64, upper: f64, at: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            estimate: None,
            std_error: None,
            at,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    /// Attaches a Monte Carlo estimate.
    pub fn with_estimate(mut self, est: &OrthantEstimate) -> Self {
        self.estimate = Some(est.estimate);
        self.std_error = Some(est.std_error);
        self
    }

    /// `lower − k·se ≤ estimate ≤ upper + k·se`; true when no estimate is attached.
    pub fn consistent(&self, k: f64) -> bool {
        match (self.estimate, self.std_error) {
            (Some(e), Some(se)) => self.lower - k * se <= e && e <= self.upper + k * se,
            _ => true,
        }
    }
}

/// `φ(x)(1/x − 1/x³) ≤ P[Z ≥ x] ≤ φ(x)/x` for `x > 0`; the lower side is clamped at 0.
pub fn gauss_tail_bounds(x: f64) -> Result<TailSandwich> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid("x", format!("{x} is not a positive finite number")));
    }
    let phi = std_normal_pdf(x);
    Ok(TailSandwich::new(
        (phi * (1.0 / x - 1.0 / (x * x * x))).max(0.0),
        phi / x,
        vec![x],
    ))
}

/// Upper bound on `P[X ≥ t, Y ≥ t]` for a standard pair with correlation `ρ`.
pub fn bivariate_tail_bound(t: f64, rho: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("{t} is not a positive finite number")));
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(invalid("rho", format!("{rho} is not in (-1, 1)")));
    }
    Ok((1.0 + rho).powi(2) / (2.0 * PI * t * t * (1.0 - rho * rho).sqrt()) * (-t * t / (1.0 + rho)).exp())
}

/// Orthant bounds for `P[X ≥ t]`, `X ~ N(0, Σ)`, in natural logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavageLogBounds {
    pub ln_lower: f64,
    pub ln_upper: f64,
    /// `1 − ⟨1/a, Σ⁻¹(1/a)⟩` with `a = Σ⁻¹t`; may be negative.
    pub lower_factor: f64,
}

/// Requires `Σ⁻¹t > 0` componentwise. The upper bound is `φ_Σ(t) / Π(Σ⁻¹t)ᵢ`,
/// the lower bound that times `1 − ⟨1/a, Σ⁻¹(1/a)⟩`, clamped at 0.
pub fn savage_bounds(sigma: &DMatrix<f64>, t: &DVector<f64>) -> Result<TailSandwich> {
    let b = savage_log_bounds(sigma, t)?;
    Ok(TailSandwich::new(b.ln_lower.exp(), b.ln_upper.exp(), t.iter().copied().collect()))
}

/// [`savage_bounds`] in natural logs, for thresholds where the bounds underflow.
pub fn savage_log_bounds(sigma: &DMatrix<f64>, t: &DVector<f64>) -> Result<SavageLogBounds> {
    let m = t.len();
    if sigma.nrows() != m || sigma.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: sigma.nrows(),
        });
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?;
    let a = chol.solve(t);
    if let Some(i) = a.iter().position(|&v| v <= 0.0) {
        return Err(Error::Precondition(format!(
            "component {i} of Σ⁻¹t is {}, need all positive",
            a[i]
        )));
    }
    let ln_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let ln_phi = -0.5 * m as f64 * (2.0 * PI).ln() - 0.5 * ln_det - 0.5 * t.dot(&a);
    let ln_upper = ln_phi - a.iter().map(|v| v.ln()).sum::<f64>();
    let inv_a = a.map(|v| 1.0 / v);
    let lower_factor = 1.0 - inv_a.dot(&chol.solve(&inv_a));
    let ln_lower = if lower_factor > 0.0 {
        ln_upper + lower_factor.ln()
    } else {
        f64::NEG_INFINITY
    };
    Ok(SavageLogBounds {
        ln_lower,
        ln_upper,
        lower_factor,
    })
}

/// `P[Z > θ E Z] ≥ (1−θ)² (E Z)² / E Z²` for nonnegative `Z`.
pub fn paley_zygmund(mean: f64, second_moment: f64, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid("theta", format!("{theta} is not in [0, 1]")));
    }
    if !(mean >= 0.0 && second_moment > 0.0) {
        return Err(invalid("second_moment", "need E Z ≥ 0 and E Z² > 0"));
    }
    if mean * mean > second_moment * (1.0 + 1e-12) {
        return Err(invalid("second_moment", format!("(E Z)² = {} exceeds E Z² = {second_moment}", mean * mean)));
    }
    Ok((1.0 - theta).powi(2) * mean * mean / second_moment)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthantEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub hits: u64,
    pub draws: u64,
}

const ORTHANT_CHUNK: u64 = 4096;

pub const MIN_ORTHANT_SAMPLES: u64 = 10_000;

/// Antithetic Monte Carlo estimate of `P[X ≥ t]` from `samples / 2` pairs `(Lz, −Lz)`.
///
/// Draws are indexed by counter, so the result does not depend on the thread count.
/// The standard error is computed over pair averages.
pub fn mc_orthant(sigma: &DMatrix<f64>, t: &DVector<f64>, samples: u64, seed: u64) -> Result<OrthantEstimate> {
    let m = t.len();
    if sigma.nrows() != m || sigma.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: sigma.nrows(),
        });
    }
    if samples < MIN_ORTHANT_SAMPLES {
        return Err(invalid("samples", format!("{samples} is below {MIN_ORTHANT_SAMPLES}")));
    }
    let pairs = samples / 2;
    let l = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?
        .l();
    let chunks = pairs.div_ceil(ORTHANT_CHUNK);
    let (hits, pair_sq) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut z = DVector::zeros(m);
            let (mut hits, mut sq) = (0u64, 0u64);
            for i in c * ORTHANT_CHUNK..((c + 1) * ORTHANT_CHUNK).min(pairs) {
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk = normal(seed, Stream::Orthant, i * m as u64 + k as u64);
                }
                let x = &l * &z;
                let plus = x.iter().zip(t.iter()).all(|(a, b)| a >= b) as u64;
                let minus = x.iter().zip(t.iter()).all(|(a, b)| -a >= *b) as u64;
                hits += plus + minus;
                sq += (plus + minus) * (plus + minus);
            }
            (hits, sq)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let np = pairs as f64;
    let mean_pair = hits as f64 / np;
    let var_pair = (pair_sq as f64 / np - mean_pair * mean_pair).max(0.0);
    Ok(OrthantEstimate {
        estimate: mean_pair / 2.0,
        std_error: (var_pair / np).sqrt() / 2.0,
        hits,
        draws: 2 * pairs,
    })
}

/// Settings for [`check_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub seed: u64,
    /// Monte Carlo draws per bivariate point.
    pub bivariate_samples: u64,
    /// Monte Carlo draws per random orthant case.
    pub savage_samples: u64,
    /// Number of random `(Σ, t)` orthant cases.
    pub savage_cases: usize,
    /// Slack in standard errors.
    pub k: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            bivariate_samples: 1_000_000,
            savage_samples: 40_000,
            savage_cases: 1000,
            k: 4.0,
        }
    }
}

/// One row of the sandwich check table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub bound: String,
    pub point: String,
    pub lower: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub upper: f64,
    pub pass: bool,
}

impl SandwichCheck {
    pub const HEADER: &'static str = "bound,point,lower,estimate,upper,verdict";

    fn new(bound: &str, point: String, s: &TailSandwich, k: f64) -> Self {
        Self {
            bound: bound.to_string(),
            point,
            lower: s.lower,
            estimate: s.estimate.unwrap_or(f64::NAN),
            std_error: s.std_error.unwrap_or(0.0),
            upper: s.upper,
            pass: s.consistent(k),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            self.bound,
            self.point,
            self.lower,
            self.estimate,
            self.upper,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn upper_tail(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Random unit-diagonal covariance of size `m` with a threshold `t = Σw`, `w > 0`.
fn random_orthant_case(seed: u64, m: usize) -> (DMatrix<f64>, DVector<f64>) {
    let u = |i: u64| uniform(seed, Stream::Sampling, i);
    let a = DMatrix::from_fn(m, m, |i, j| 2.0 * u((i * m + j) as u64) - 1.0);
    let g = &a * a.transpose() + DMatrix::identity(m, m) * 0.5;
    let d = g.diagonal().map(|v| 1.0 / v.sqrt());
    let sigma = DMatrix::from_fn(m, m, |i, j| g[(i, j)] * d[i] * d[j]);
    let base = (m * m) as u64;
    let w = DVector::from_fn(m, |i, _| 0.2 + u(base + i as u64));
    let t = &sigma * w;
    let scale = (0.5 + 2.0 * u(base + m as u64)) / t.max();
    (sigma, t * scale)
}

/// Checks every tail bound against an oracle: erfc for the one-dimensional
/// sandwich, Monte Carlo for the bivariate and orthant bounds.
pub fn check_suite(cfg: &CheckConfig) -> Result<Vec<SandwichCheck>> {
    let mut rows = Vec::new();
    for i in 1..=100 {
        let x = f64::from(i) * 0.1;
        let mut s = gauss_tail_bounds(x)?;
        s.estimate = Some(upper_tail(x));
        s.std_error = Some(0.0);
        rows.push(SandwichCheck::new("gauss", format!("x={x}"), &s, cfg.k));
    }
    let mut tag = 0u64;
    for t in [1.0, 1.5, 2.0, 2.5, 3.0] {
        for rho in [-0.5, 0.0, 0.3, 0.6] {
            tag += 1;
            let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let est = mc_orthant(
                &sigma,
                &DVector::from_element(2, t),
                cfg.bivariate_samples,
                crate::rng::derive_seed(cfg.seed, tag),
            )?;
            let s = TailSandwich::new(0.0, bivariate_tail_bound(t, rho)?, vec![t, rho]).with_estimate(&est);
            rows.push(SandwichCheck::new("bivariate", format!("t={t};rho={rho}"), &s, cfg.k));
        }
    }
    let cases: Vec<_> = (0..cfg.savage_cases)
        .map(|c| {
            let seed = crate::rng::derive_seed(cfg.seed, 1000 + c as u64);
            let m = 2 + (uniform(seed, Stream::Sampling, u64::MAX) * 4.0) as usize;
            // Redraw until the orthant is resolvable at this sample size.
            let floor = 100.0 / cfg.savage_samples as f64;
            let (sigma, t, s) = (0u64..)
                .map(|attempt| {
                    let (sigma, t) = random_orthant_case(crate::rng::derive_seed(seed, attempt), m);
                    let s = savage_bounds(&sigma, &t);
                    (sigma, t, s)
                })
                .find(|(_, _, s)| s.as_ref().map_or(true, |s| s.upper >= floor))
                .expect("unbounded search");
            let est = mc_orthant(&sigma, &t, cfg.savage_samples, seed)?;
            let s = s?.with_estimate(&est);
            Ok(SandwichCheck::new("savage", format!("case={c};m={m}"), &s, cfg.k))
        })
        .collect::<Result<_>>()?;
    rows.extend(cases);
    Ok(rows)
}
