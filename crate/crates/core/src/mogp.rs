//! Multi-overlap gap machinery: the equicorrelated covariance, its
//! perturbations, the first-moment exponent Ψ and its tuner, and an
//! exhaustive search for admissible m-tuples on small instances.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{h, min_p_where};
use crate::disorder::{build_energy_table_with, BuildLimits, EnergyTable, EnsembleAngle, Mode};
use crate::error::{invalid, open_unit, Error, Result};
use crate::landscape::{level_set, EnergyUnit};
use crate::rng::{derive_seed, uniform, Stream};
use crate::tails::savage_log_bounds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MogpParams {
    pub m: usize,
    pub gamma: f64,
    pub xi: f64,
    pub eta: f64,
    pub c_rate: f64,
    pub p: u32,
}

impl MogpParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(invalid("m", "must be at least 1"));
        }
        if !(self.gamma * (self.m as f64).sqrt() > 1.0) {
            return Err(Error::Precondition(format!(
                "γ√m = {} must exceed 1",
                self.gamma * (self.m as f64).sqrt()
            )));
        }
        open_unit("xi", self.xi)?;
        if !(self.eta > 0.0 && self.eta < self.xi) {
            return Err(invalid("eta", format!("{} is not in (0, ξ)", self.eta)));
        }
        if !(self.c_rate >= 0.0) {
            return Err(invalid("c_rate", format!("{} is negative", self.c_rate)));
        }
        if self.p < 2 {
            return Err(invalid("p", format!("{} is below 2", self.p)));
        }
        Ok(())
    }

    /// `η < (1 − ξᵖ)/(m p ξ^{p−1})`, which keeps every `Σ(η)` positive definite.
    pub fn pd_certified(&self) -> bool {
        pd_condition(self.m, self.xi, self.eta, self.p)
    }
}

fn pd_condition(m: usize, xi: f64, eta: f64, p: u32) -> bool {
    let pf = f64::from(p);
    eta < (1.0 - xi.powf(pf)) / (m as f64 * pf * xi.powf(pf - 1.0))
}

/// `Σ = (1−ξᵖ)I + ξᵖ𝟏𝟏ᵀ` with closed-form determinant and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub m: usize,
    pub rho: f64,
    pub sigma: DMatrix<f64>,
    pub det: f64,
    pub inverse: DMatrix<f64>,
    /// `𝟏ᵀΣ⁻¹𝟏 = m / (1 − ξᵖ + mξᵖ)`.
    pub one_inv_one: f64,
    pub lambda_min_lb: f64,
    pub lambda_max_ub: f64,
}

pub fn base_covariance(m: usize, xi: f64, p: u32) -> Result<CovarianceModel> {
    if m < 1 {
        return Err(invalid("m", "must be at least 1"));
    }
    open_unit("xi", xi)?;
    if p < 2 {
        return Err(invalid("p", format!("{p} is below 2")));
    }
    let rho = xi.powf(f64::from(p));
    let off = 1.0 - rho;
    if m > 1 && off <= f64::EPSILON {
        return Err(Error::Precondition(format!("ξᵖ = {rho} is numerically 1")));
    }
    let mf = m as f64;
    let sigma = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho });
    let top = 1.0 + (mf - 1.0) * rho;
    let det = off.powi(m as i32 - 1) * top;
    let k = rho / (off * top);
    let inverse = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 / off - k } else { -k });
    let (lambda_min_lb, lambda_max_ub) = if m == 1 { (1.0, 1.0) } else { (off, top) };
    Ok(CovarianceModel {
        m,
        rho,
        sigma,
        det,
        inverse,
        one_inv_one: mf / (off + mf * rho),
        lambda_min_lb,
        lambda_max_ub,
    })
}

/// Eigenvalue bounds for every `Σ(η)` with off-diagonal overlaps in `[ξ−η, ξ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBounds {
    /// `1 − ξᵖ − m p η ξ^{p−1}`.
    pub lambda_min_lb: f64,
    /// `1 + (m−1)ξᵖ + m p η ξ^{p−1}`.
    pub lambda_max_ub: f64,
    /// `1 − 2mpξᵖ`.
    pub loose_min_lb: f64,
    /// `1 + 2mpξᵖ`.
    pub loose_max_ub: f64,
    pub pd: bool,
}

pub fn perturbation_bounds(m: usize, xi: f64, eta: f64, p: u32) -> Result<PerturbationBounds> {
    if m < 1 {
        return Err(invalid("m", "must be at least 1"));
    }
    open_unit("xi", xi)?;
    if !(eta >= 0.0 && eta < xi) {
        return Err(invalid("eta", format!("{eta} is not in [0, ξ)")));
    }
    let (mf, pf) = (m as f64, f64::from(p));
    let rho = xi.powf(pf);
    let spread = mf * pf * eta * xi.powf(pf - 1.0);
    let (base_min, base_max) = if m == 1 { (1.0, 1.0) } else { (1.0 - rho, 1.0 + (mf - 1.0) * rho) };
    Ok(PerturbationBounds {
        lambda_min_lb: base_min - spread,
        lambda_max_ub: base_max + spread,
        loose_min_lb: 1.0 - 2.0 * mf * pf * rho,
        loose_max_ub: 1.0 + 2.0 * mf * pf * rho,
        pd: pd_condition(m, xi, eta, p),
    })
}

/// Number of unordered pairs `k < ℓ` among `m` indices.
pub fn pair_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// `Σ(η)` with entries `(ξ − η_kℓ)ᵖ`; `etas` lists pairs `(0,1), (0,2), …, (1,2), …`.
pub fn sigma_eta(m: usize, xi: f64, p: u32, etas: &[f64]) -> Result<DMatrix<f64>> {
    if etas.len() != pair_count(m) {
        return Err(Error::DimensionMismatch {
            expected: pair_count(m),
            actual: etas.len(),
        });
    }
    let pf = f64::from(p);
    let mut s = DMatrix::identity(m, m);
    let mut it = etas.iter();
    for k in 0..m {
        for l in k + 1..m {
            let v = (xi - it.next().expect("length checked")).powf(pf);
            s[(k, l)] = v;
            s[(l, k)] = v;
        }
    }
    Ok(s)
}

/// `Ψ = 1 + m h((1−ξ+η)/2) − mγ²/(1 + 2mpξᵖ) + cm`, in bits per spin.
pub fn psi_exponent(params: &MogpParams) -> Result<f64> {
    params.validate()?;
    Ok(psi_raw(params))
}

fn psi_raw(q: &MogpParams) -> f64 {
    let mf = q.m as f64;
    let pf = f64::from(q.p);
    1.0 + mf * h((1.0 - q.xi + q.eta) / 2.0) - mf * q.gamma * q.gamma / (1.0 + 2.0 * mf * pf * q.xi.powf(pf))
        + q.c_rate * mf
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MogpTuning {
    pub xi: f64,
    pub eta: f64,
    #[serde(rename = "c")]
    pub c_rate: f64,
    pub p_star: u32,
    pub psi: f64,
    pub delta: f64,
    pub pd: bool,
}

impl MogpTuning {
    pub fn params(&self, m: usize, gamma: f64) -> MogpParams {
        MogpParams {
            m,
            gamma,
            xi: self.xi,
            eta: self.eta,
            c_rate: self.c_rate,
            p: self.p_star,
        }
    }
}

/// `0.99, 0.98, …, 0.01`, then `1 − j·10⁻ᵈ` for `d = 3..=12`, `j = 9..=1`.
fn xi_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (1..100).rev().map(|k| k as f64 / 100.0).collect();
    for d in 3..=12 {
        for j in (1..10).rev() {
            g.push(1.0 - j as f64 * 10f64.powi(-d));
        }
    }
    g
}

const ETA_HALVINGS: i32 = 60;
const P_CAP: u64 = u32::MAX as u64;

/// Smallest `P` with `pξᵖ ≤ target` for every `p ≥ P`.
fn p_threshold(xi: f64, target: f64) -> Option<u64> {
    let g = |p: u64| p as f64 * xi.powf(p as f64) <= target;
    let peak = -1.0 / xi.ln();
    if !peak.is_finite() || peak > P_CAP as f64 {
        return None;
    }
    let lo = (peak.floor() as u64).max(2);
    if g(2) && g(lo) && g(lo + 1) {
        return Some(2);
    }
    min_p_where(lo + 1, P_CAP, g)
}

/// Follows the recipe `mh(·) ≤ δ/4`, `c = δ/(8m)`, `mγ²/(1+2mpξᵖ) ≥ 1 + δ/2`, with `δ = mγ² − 1`.
///
/// Among grid values of `ξ` that admit some `η = ξ/2ᵏ`, picks the smallest
/// resulting order, then bumps it until `Ψ ≤ −δ/8` holds after rounding.
pub fn tune_mogp(m: usize, gamma: f64) -> Result<MogpTuning> {
    if m < 1 {
        return Err(invalid("m", "must be at least 1"));
    }
    let mf = m as f64;
    let delta = mf * gamma * gamma - 1.0;
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("γ√m = {} must exceed 1", gamma * mf.sqrt())));
    }
    let c_rate = delta / (8.0 * mf);
    let target = delta / ((2.0 + delta) * 2.0 * mf);
    let mut best: Option<(u64, f64, f64)> = None;
    for xi in xi_grid() {
        let Some(eta) = (1..=ETA_HALVINGS)
            .map(|k| xi / 2f64.powi(k))
            .find(|&eta| mf * h((1.0 - xi + eta) / 2.0) <= delta / 4.0)
        else {
            continue;
        };
        let Some(p) = p_threshold(xi, target) else {
            continue;
        };
        if best.map_or(true, |(bp, _, _)| p < bp) {
            best = Some((p, xi, eta));
        }
    }
    let (p0, xi, eta) = best.ok_or_else(|| Error::Infeasible(format!("no grid ξ works for m = {m}, γ = {gamma}")))?;
    let mut q = MogpParams {
        m,
        gamma,
        xi,
        eta,
        c_rate,
        p: p0 as u32,
    };
    while psi_raw(&q) > -delta / 8.0 {
        if q.p == u32::MAX {
            return Err(Error::Infeasible("Ψ stays above −δ/8 up to the order cap".into()));
        }
        q.p += 1;
    }
    Ok(MogpTuning {
        xi,
        eta,
        c_rate,
        p_star: q.p,
        psi: psi_raw(&q),
        delta,
        pd: q.pd_certified(),
    })
}

struct Prepared {
    sigma: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    a: DVector<f64>,
}

fn prepare(params: &MogpParams, etas: &[f64]) -> Result<Prepared> {
    params.validate()?;
    if let Some(e) = etas.iter().find(|&&e| !(0.0..=params.eta).contains(&e)) {
        return Err(invalid("etas", format!("{e} is not in [0, η]")));
    }
    let s = sigma_eta(params.m, params.xi, params.p, etas)?;
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("Σ(η) is not positive definite".into()))?;
    let a = chol.solve(&DVector::from_element(params.m, 1.0));
    if let Some(i) = a.iter().position(|&v| v <= 0.0) {
        return Err(Error::Precondition(format!(
            "component {i} of Σ(η)⁻¹𝟏 is {}, need all positive",
            a[i]
        )));
    }
    Ok(Prepared { sigma: s, chol, a })
}

fn check_n(n: u64) -> Result<f64> {
    if n == 0 {
        Err(invalid("n", "must be at least 1"))
    } else {
        Ok(n as f64)
    }
}

/// `log₂` of the orthant upper bound `φ_{Σ(η)}(t) / Π(Σ(η)⁻¹t)ᵢ` at `t = γ√(2n ln 2)𝟏`.
pub fn probability_upper_bound(params: &MogpParams, etas: &[f64], n: u64) -> Result<f64> {
    let nf = check_n(n)?;
    let prep = prepare(params, etas)?;
    let t = DVector::from_element(params.m, params.gamma * (2.0 * nf * LN_2).sqrt());
    Ok(savage_log_bounds(&prep.sigma, &t)?.ln_upper / LN_2)
}

/// `log₂` of `n^{m/2}(γ√(ln 2/π))ᵐ Π⟨eᵢ, Σ(η)⁻¹𝟏⟩ |Σ(η)|^{−1/2} 2^{−γ²n𝟏ᵀΣ(η)⁻¹𝟏}`,
/// the form with the product in the numerator.
pub fn probability_upper_bound_as_displayed(params: &MogpParams, etas: &[f64], n: u64) -> Result<f64> {
    let nf = check_n(n)?;
    let prep = prepare(params, etas)?;
    let mf = params.m as f64;
    let log2_det: f64 = prep.chol.l().diagonal().iter().map(|d| 2.0 * d.log2()).sum();
    Ok(mf / 2.0 * nf.log2() + mf * (params.gamma * (LN_2 / PI).sqrt()).log2()
        + prep.a.iter().map(|v| v.log2()).sum::<f64>()
        - 0.5 * log2_det
        - params.gamma * params.gamma * nf * prep.a.sum())
}

/// `𝟏ᵀΣ(η)⁻¹𝟏`.
pub fn one_inv_one(params: &MogpParams, etas: &[f64]) -> Result<f64> {
    params.validate()?;
    let s = sigma_eta(params.m, params.xi, params.p, etas)?;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Factorization("Σ(η) is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_element(params.m, 1.0)).sum())
}

/// Covariance of `(H_{τ₁}(σ¹), …, H_{τₘ}(σᵐ))·√n` when each index mixes a shared
/// disorder with its own fresh copy: `cos τₖ cos τₗ Rₖₗᵖ` off the diagonal.
pub fn interpolated_covariance(overlaps: &DMatrix<f64>, angles: &[EnsembleAngle], p: u32) -> Result<DMatrix<f64>> {
    let m = angles.len();
    if overlaps.nrows() != m || overlaps.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: overlaps.nrows(),
        });
    }
    Ok(DMatrix::from_fn(m, m, |k, l| {
        if k == l {
            1.0
        } else {
            angles[k].cos() * angles[l].cos() * overlaps[(k, l)].powi(p as i32)
        }
    }))
}

pub const MAX_ANGLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// `None` picks exact tensors when affordable, else the REM proxy.
    pub mode: Option<Mode>,
    /// Largest candidate-tuple space searched exhaustively; above it, this many tuples are sampled.
    pub tuple_budget: u64,
    pub limits: BuildLimits,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            mode: None,
            tuple_budget: 100_000_000,
            limits: BuildLimits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MogpSearch {
    pub count: u64,
    pub tuples_examined: f64,
    pub coverage: f64,
    pub exhaustive: bool,
}

/// Counts m-tuples `(σ¹, …, σᵐ)` and angle choices `τₜ ∈ angles` with
/// `H_{τₜ}(σᵗ) ≥ γ√(2 ln 2)` and every overlap in `[ξ − η, ξ]`.
///
/// Index `t` uses the table `cos τ·H₀ + sin τ·Hₜ` with its own fresh `Hₜ`.
/// Only superlevel members can appear in a tuple, so the search is exhaustive
/// over them whenever their product space fits the budget.
#[allow(clippy::too_many_arguments)]
pub fn empirical_mogp_search(
    n: usize,
    p: usize,
    m: usize,
    gamma: f64,
    xi: f64,
    eta: f64,
    angles: &[EnsembleAngle],
    seed: u64,
    opts: &SearchOptions,
) -> Result<MogpSearch> {
    if m < 1 {
        return Err(invalid("m", "must be at least 1"));
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(invalid("xi", format!("{xi} is not in (0, 1]")));
    }
    if !(eta >= 0.0 && eta <= xi) {
        return Err(invalid("eta", format!("{eta} is not in [0, ξ]")));
    }
    if angles.is_empty() {
        return Err(invalid("angles", "must not be empty"));
    }
    if angles.len() > MAX_ANGLES {
        return Err(Error::BudgetExceeded {
            what: "angle set size",
            required: angles.len() as f64,
            limit: MAX_ANGLES as f64,
        });
    }
    let mode = match opts.mode {
        Some(Mode::GramCholesky) => {
            return Err(invalid("mode", "the tuple search uses exact or REM tables"));
        }
        Some(mode) => mode,
        None => match opts.limits.select_mode(n, p) {
            Mode::ExactTensor => Mode::ExactTensor,
            _ => Mode::RemLimit,
        },
    };
    let build = |tag: u64| build_energy_table_with(n, p, derive_seed(seed, tag), mode, &opts.limits);
    let base = build(0)?;
    let mut slots: Vec<Vec<u64>> = Vec::with_capacity(m);
    for t in 0..m {
        let fresh = build(t as u64 + 1)?;
        let mut cands = Vec::new();
        for &angle in angles {
            let table = EnergyTable::correlated(&base, &fresh, angle)?;
            cands.extend_from_slice(level_set(&table, gamma, f64::INFINITY, EnergyUnit::SqrtTwoLnTwo)?.members());
        }
        slots.push(cands);
    }
    let space: f64 = slots.iter().map(|s| s.len() as f64).product();
    let ok = |a: u64, b: u64| {
        let r = 1.0 - 2.0 * f64::from((a ^ b).count_ones()) / n as f64;
        r >= xi - eta - 1e-12 && r <= xi + 1e-12
    };
    if space <= opts.tuple_budget as f64 {
        let count = slots[0]
            .par_iter()
            .map(|&first| {
                let mut chosen = vec![first];
                count_extensions(&slots, &mut chosen, &ok)
            })
            .sum();
        return Ok(MogpSearch {
            count,
            tuples_examined: space,
            coverage: 1.0,
            exhaustive: true,
        });
    }
    let samples = opts.tuple_budget;
    let key = derive_seed(seed, u64::MAX);
    let count = (0..samples)
        .into_par_iter()
        .filter(|&i| {
            let tuple: Vec<u64> = slots
                .iter()
                .enumerate()
                .map(|(t, s)| {
                    let u = uniform(key, Stream::Sampling, i * m as u64 + t as u64);
                    s[((u * s.len() as f64) as usize).min(s.len() - 1)]
                })
                .collect();
            (0..m).all(|k| (k + 1..m).all(|l| ok(tuple[k], tuple[l])))
        })
        .count() as u64;
    Ok(MogpSearch {
        count,
        tuples_examined: samples as f64,
        coverage: samples as f64 / space,
        exhaustive: false,
    })
}

fn count_extensions(slots: &[Vec<u64>], chosen: &mut Vec<u64>, ok: &impl Fn(u64, u64) -> bool) -> u64 {
    let t = chosen.len();
    if t == slots.len() {
        return 1;
    }
    let mut total = 0;
    for &c in &slots[t] {
        if chosen.iter().all(|&prev| ok(prev, c)) {
            chosen.push(c);
            total += count_extensions(slots, chosen, ok);
            chosen.pop();
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::superlevel_set;
    use crate::tails::{gauss_tail_bounds, mc_orthant};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(m: usize, gamma: f64, xi: f64, eta: f64, p: u32) -> MogpParams {
        MogpParams {
            m,
            gamma,
            xi,
            eta,
            c_rate: 0.0,
            p,
        }
    }

    #[test]
    fn base_covariance_small_cases() {
        let one = base_covariance(1, 0.5, 4).unwrap();
        assert_eq!(one.det, 1.0);
        assert_eq!(one.inverse[(0, 0)], 1.0);
        let two = base_covariance(2, 0.9, 3).unwrap();
        assert_relative_eq!(two.det, 1.0 - two.rho * two.rho, epsilon = 1e-15);
        let five = base_covariance(5, 0.9, 8).unwrap();
        let prod = &five.sigma * &five.inverse;
        assert!((prod - DMatrix::identity(5, 5)).norm() < 1e-12);
        assert_relative_eq!(five.det, five.sigma.clone().lu().determinant(), max_relative = 1e-12);
        let s = DVector::from_element(5, 1.0);
        assert_relative_eq!(five.one_inv_one, (&five.inverse * &s).sum(), max_relative = 1e-13);
        assert!(base_covariance(3, 1.0 - 1e-18, 2).is_err());
    }

    #[test]
    fn perturbation_examples() {
        let b = perturbation_bounds(3, 0.8, 0.0, 20).unwrap();
        let rho = 0.8f64.powi(20);
        assert_relative_eq!(b.lambda_min_lb, 1.0 - rho);
        assert_relative_eq!(b.lambda_max_ub, 1.0 + 2.0 * rho);
        assert_relative_eq!(b.loose_max_ub - 1.0, 120.0 * rho, max_relative = 1e-14);
        assert!((b.loose_max_ub - 1.0 - 1.383).abs() < 1e-3);
        assert!(perturbation_bounds(3, 0.8, 0.8, 20).is_err());
    }

    #[test]
    fn psi_examples() {
        let q = params(1, 1.5, 0.9, 0.05, 30);
        let expect = 1.0 + h(0.075) - 2.25 / (1.0 + 60.0 * 0.9f64.powi(30));
        assert_relative_eq!(psi_exponent(&q).unwrap(), expect, epsilon = 1e-12);
        let mut c = q;
        c.c_rate = 0.25;
        assert_relative_eq!(psi_exponent(&c).unwrap() - psi_exponent(&q).unwrap(), 0.25, epsilon = 1e-14);
        let limit = params(3, 0.7, 1.0 - 1e-6, 1e-9, u32::MAX);
        assert!((psi_exponent(&limit).unwrap() - (1.0 - 3.0 * 0.49)).abs() < 1e-4);
    }

    #[test]
    fn tuner_cases() {
        for &(m, gamma) in &[(2, 0.8), (3, 0.65), (4, 0.55), (4, 0.6), (9, 0.35)] {
            let t = tune_mogp(m, gamma).unwrap();
            let q = t.params(m, gamma);
            assert!(psi_exponent(&q).unwrap() <= -t.delta / 8.0);
            assert_relative_eq!(t.c_rate, t.delta / (8.0 * m as f64));
        }
        assert!(matches!(tune_mogp(4, 0.5), Err(Error::Precondition(_))));
        let nine = tune_mogp(9, 0.35).unwrap();
        assert!(nine.xi > 0.999 && nine.p_star > 1000);
    }

    #[test]
    fn tuner_order_is_minimal_for_its_xi() {
        let t = tune_mogp(2, 0.8).unwrap();
        let q = MogpParams {
            p: t.p_star - 1,
            ..t.params(2, 0.8)
        };
        let target = t.delta / ((2.0 + t.delta) * 4.0);
        let pf = f64::from(q.p);
        assert!(t.p_star == 2 || pf * q.xi.powf(pf) > target || psi_raw(&q) > -t.delta / 8.0);
    }

    #[test]
    fn probability_bound_m1_reduces_to_scalar() {
        let q = params(1, 1.2, 0.5, 0.1, 2);
        let n = 20;
        let t = 1.2 * (2.0 * n as f64 * LN_2).sqrt();
        let scalar = gauss_tail_bounds(t).unwrap().upper.log2();
        assert_relative_eq!(probability_upper_bound(&q, &[], n).unwrap(), scalar, epsilon = 1e-10);
    }

    #[test]
    fn zero_perturbation_closed_form() {
        let q = params(4, 0.6, 0.7, 0.1, 6);
        let base = base_covariance(4, 0.7, 6).unwrap();
        assert_relative_eq!(one_inv_one(&q, &[0.0; 6]).unwrap(), base.one_inv_one, max_relative = 1e-13);
    }

    #[test]
    fn probability_bound_dominates_mc() {
        let q = params(2, 0.8, 0.6, 0.2, 3);
        let etas = [0.13];
        let n = 8;
        let bound = probability_upper_bound(&q, &etas, n).unwrap().exp2();
        let sigma = sigma_eta(2, 0.6, 3, &etas).unwrap();
        let t = DVector::from_element(2, 0.8 * (2.0 * n as f64 * LN_2).sqrt());
        let mc = mc_orthant(&sigma, &t, 1_000_000, 9).unwrap();
        assert!(mc.estimate <= bound + 4.0 * mc.std_error);
        assert!(probability_upper_bound(&q, &[0.3], n).is_err());
    }

    #[test]
    fn search_trivial_cases() {
        let zero = [EnsembleAngle::new(0.0).unwrap()];
        let opts = SearchOptions::default();
        let none = empirical_mogp_search(10, 3, 2, 10.0, 0.9, 0.1, &zero, 1, &opts).unwrap();
        assert_eq!(none.count, 0);
        let single = empirical_mogp_search(10, 3, 1, 0.5, 1.0, 1.0, &zero, 1, &opts).unwrap();
        let base = build_energy_table_with(10, 3, derive_seed(1, 0), Mode::ExactTensor, &opts.limits).unwrap();
        assert_eq!(single.count, superlevel_set(&base, 0.5).unwrap().len() as u64);
        assert!(single.exhaustive);
    }

    #[test]
    fn search_thread_independent() {
        let angles: Vec<_> = [0.0, 0.3, 0.8].iter().map(|&t| EnsembleAngle::new(t).unwrap()).collect();
        let opts = SearchOptions {
            mode: Some(Mode::RemLimit),
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| empirical_mogp_search(12, 10, 2, 0.6, 0.5, 0.5, &angles, 3, &opts).unwrap())
        };
        assert_eq!(run(1), run(5));
        let sampled = SearchOptions {
            tuple_budget: 50,
            ..opts
        };
        let s = empirical_mogp_search(12, 10, 2, 0.6, 0.5, 0.5, &angles, 3, &sampled).unwrap();
        assert!(!s.exhaustive && s.coverage < 1.0);
    }

    #[test]
    fn search_rejects_bad_input() {
        let zero = [EnsembleAngle::new(0.0).unwrap()];
        let opts = SearchOptions {
            mode: Some(Mode::GramCholesky),
            ..Default::default()
        };
        assert!(empirical_mogp_search(8, 3, 2, 0.5, 0.9, 0.1, &zero, 1, &opts).is_err());
        let many = vec![zero[0]; MAX_ANGLES + 1];
        assert!(matches!(
            empirical_mogp_search(8, 3, 2, 0.5, 0.9, 0.1, &many, 1, &SearchOptions::default()),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eigenvalues_bracketed(m in 2usize..6, xi in 0.3f64..0.95, p in 2u32..12, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let eta = frac * xi * 0.99;
            let b = perturbation_bounds(m, xi, eta, p).unwrap();
            let etas: Vec<f64> = (0..pair_count(m)).map(|i| eta * uniform(seed, Stream::Sampling, i as u64)).collect();
            let s = sigma_eta(m, xi, p, &etas).unwrap();
            let ev = s.symmetric_eigenvalues();
            let (lo, hi) = (ev.min(), ev.max());
            prop_assert!(lo >= b.lambda_min_lb - 1e-12 && hi <= b.lambda_max_ub + 1e-12);
            prop_assert!(lo >= b.loose_min_lb - 1e-12 && hi <= b.loose_max_ub + 1e-12);
        }

        #[test]
        fn sherman_morrison_matches_dense(m in 1usize..8, xi in 0.05f64..0.98, p in 2u32..40) {
            let c = base_covariance(m, xi, p).unwrap();
            let dense = c.sigma.clone().try_inverse().unwrap();
            prop_assert!((dense - &c.inverse).norm() < 1e-10 * (1.0 + c.inverse.norm()));
        }

        #[test]
        fn integrand_lower_bound(m in 2usize..6, xi in 0.3f64..0.95, p in 2u32..12, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let eta = frac * xi * 0.99;
            prop_assume!(pd_condition(m, xi, eta, p));
            let q = MogpParams { m, gamma: 1.0, xi, eta: eta.max(1e-12), c_rate: 0.0, p };
            let etas: Vec<f64> = (0..pair_count(m)).map(|i| eta * uniform(seed, Stream::Sampling, i as u64)).collect();
            let v = one_inv_one(&q, &etas).unwrap();
            let mf = m as f64;
            prop_assert!(v >= mf / (1.0 + 2.0 * mf * f64::from(p) * xi.powi(p as i32)) - 1e-12);
        }
    }
}
