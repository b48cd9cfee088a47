//! Closed-form exponents and threshold constants for the clustering, second
//! moment and band-dominance arguments. Exponents are in bits unless noted.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, open_unit, Error, Result};
use crate::landscape::SQRT_2LN2;

/// `h(q)` without range checks; `q` is clamped into `[0, 1]`.
#[inline]
pub(crate) fn h(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Binary entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid("q", format!("{q} is not in [0, 1]")));
    }
    Ok(h(q))
}

/// `1 − α²/(2 ln 2) − α⁴/(12 ln 2)`, an upper bound on `h((1 − α)/2)`.
pub fn entropy_taylor_upper(alpha: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("{alpha} is not in [-1, 1]")));
    }
    let a2 = alpha * alpha;
    Ok(1.0 - a2 / (2.0 * LN_2) - a2 * a2 / (12.0 * LN_2))
}

/// `log₂` of `√(n / (2π k (n−k))) · 2^{n h(k/n)}`, an upper bound on `log₂ C(n, k)`.
pub fn binomial_upper_log2(n: u64, k: u64) -> Result<f64> {
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 ≤ k ≤ n − 1, got k = {k}, n = {n}")));
    }
    let (nf, kf) = (n as f64, k as f64);
    Ok(0.5 * (nf / (2.0 * PI * kf * (nf - kf))).log2() + nf * h(kf / nf))
}

/// `1 + h(ν₂) − 2(1−ε)² + (1 − 2ν₂/3)ᵖ`, the pair-count exponent with `ν₁ = ν₂/3`.
pub fn pair_ogp_exponent(epsilon: f64, nu2: f64, p: u32) -> Result<f64> {
    open_unit("epsilon", epsilon)?;
    if !(nu2 > 0.0 && nu2 < 0.5) {
        return Err(invalid("nu2", format!("{nu2} is not in (0, 1/2)")));
    }
    Ok(pair_ogp_raw(epsilon, nu2, f64::from(p)))
}

fn pair_ogp_raw(epsilon: f64, nu2: f64, p: f64) -> f64 {
    let e = 1.0 - epsilon;
    1.0 + h(nu2) - 2.0 * e * e + (1.0 - 2.0 * nu2 / 3.0).powf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeBranch {
    /// `1 + h(δ) − (1−ε)²`, pairs closer than `δ`.
    Near,
    /// `1 + h(ν₁) − 2(1−ε)² + (1−2δ)ᵖ`, pairs between `δ` and `ν₁`.
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSizeExponent {
    pub value: f64,
    pub near: f64,
    pub far: f64,
    pub active: SizeBranch,
}

/// Exponent bounding the expected number of pairs within distance `ν₁ n`.
pub fn cluster_size_exponent(epsilon: f64, nu1: f64, delta: f64, p: u32) -> Result<ClusterSizeExponent> {
    open_unit("epsilon", epsilon)?;
    if !(nu1 > 0.0 && nu1 < 0.5) {
        return Err(invalid("nu1", format!("{nu1} is not in (0, 1/2)")));
    }
    if !(delta > 0.0 && delta < nu1) {
        return Err(invalid("delta", format!("need 0 < δ < ν₁, got δ = {delta}, ν₁ = {nu1}")));
    }
    let e2 = (1.0 - epsilon).powi(2);
    let near = 1.0 + h(delta) - e2;
    let far = 1.0 + h(nu1) - 2.0 * e2 + (1.0 - 2.0 * delta).powf(f64::from(p));
    let (value, active) = if near >= far {
        (near, SizeBranch::Near)
    } else {
        (far, SizeBranch::Far)
    };
    Ok(ClusterSizeExponent {
        value,
        near,
        far,
        active,
    })
}

/// `Ξ(ε) = min(ε¹⁰, (1−ε)¹⁰) / 100`.
pub fn xi_eps(epsilon: f64) -> f64 {
    epsilon.powi(10).min((1.0 - epsilon).powi(10)) / 100.0
}

/// Largest `ε` for which level sets are clustered: `1 − 1/√2`.
pub const EPSILON_MAX: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConstants {
    pub epsilon: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub delta: f64,
    pub xi_eps: f64,
    pub gamma_margin: f64,
    /// Exponent of the typical level-set size, `ε(2−ε) − γ`.
    pub c1: f64,
    /// Exponent of the largest cluster, `c/2 + γ`.
    pub c2: f64,
    /// The cluster-size exponent `c` at `p = p_hat`.
    pub c: f64,
    pub p_hat: u32,
    /// Smallest `p` with a negative pair-OGP exponent.
    pub p_ogp: u32,
    /// Smallest `p` with `(1−2δ)ᵖ < (1 − h(ν₁))/5`.
    pub p_2: u32,
    /// Smallest `p` with `(1−2δ)ᵖ < 1 − h(ν₁) − 4γ − 2Ξ`.
    pub p_verify: u32,
}

/// Smallest `p ≥ lo` where a predicate that is monotone in `p` turns true.
pub(crate) fn min_p_where(lo: u64, cap: u64, pred: impl Fn(u64) -> bool) -> Option<u64> {
    if pred(lo) {
        return Some(lo);
    }
    let (mut bad, mut good) = (lo, lo.max(1));
    loop {
        good = good.saturating_mul(2);
        if good > cap {
            if pred(cap) {
                good = cap;
                break;
            }
            return None;
        }
        if pred(good) {
            break;
        }
        bad = good;
    }
    while good - bad > 1 {
        let mid = bad + (good - bad) / 2;
        if pred(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

const P_CAP: u64 = u32::MAX as u64;

fn min_p(pred: impl Fn(f64) -> bool, what: &str) -> Result<u32> {
    min_p_where(2, P_CAP, |p| pred(p as f64))
        .map(|p| p as u32)
        .ok_or_else(|| Error::Infeasible(format!("no order p ≤ {P_CAP} satisfies {what}")))
}

/// Smallest `ν₂ ∈ {0.01k : k = 1..49}` for which some finite `p` makes the pair exponent negative.
pub fn search_nu2(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let e2 = (1.0 - epsilon).powi(2);
    (1..50)
        .map(|k| k as f64 / 100.0)
        .find(|&nu2| 1.0 + h(nu2) - 2.0 * e2 < 0.0)
        .ok_or_else(|| Error::Infeasible(format!("no ν₂ on the 0.01 grid works for ε = {epsilon}")))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < EPSILON_MAX {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("{epsilon} is not in (0, 1 − 1/√2)")))
    }
}

/// Largest `δ < ν₁` with `h(δ) < cap` on the `0.001` grid, refining by decades down to `1e-9`.
fn search_delta(nu1: f64, cap: f64) -> Option<f64> {
    if cap <= 0.0 {
        return None;
    }
    // h is increasing on (0, 1/2): bisect for the crossing, then round down to each grid.
    let (mut lo, mut hi) = (0.0, nu1.min(0.5));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let limit = hi.min(nu1);
    (3..=9).find_map(|d| {
        let step = 10f64.powi(-d);
        let k = (limit / step).ceil() as u64;
        (k.saturating_sub(2)..=k)
            .rev()
            .filter(|&k| k > 0)
            .map(|k| k as f64 * step)
            .find(|&x| x < nu1 && h(x) < cap)
    })
}

/// Constants for the clustered level set at `ε`, with `ν₂` from [`search_nu2`] and `ν₁ = ν₂/3`.
pub fn clustering_constants(epsilon: f64) -> Result<ClusteringConstants> {
    let nu2 = search_nu2(epsilon)?;
    clustering_constants_with(epsilon, nu2 / 3.0, nu2)
}

/// Constants for explicit `(ν₁, ν₂)` with `ν₁ = ν₂/3`.
pub fn clustering_constants_with(epsilon: f64, nu1: f64, nu2: f64) -> Result<ClusteringConstants> {
    check_epsilon(epsilon)?;
    if !(nu2 > 0.0 && nu2 < 0.5) {
        return Err(invalid("nu2", format!("{nu2} is not in (0, 1/2)")));
    }
    if (nu1 - nu2 / 3.0).abs() > 1e-12 {
        return Err(invalid("nu1", format!("{nu1} is not ν₂/3 = {}", nu2 / 3.0)));
    }
    let e2 = (1.0 - epsilon).powi(2);
    if 1.0 + h(nu2) - 2.0 * e2 >= 0.0 {
        return Err(Error::Infeasible(format!(
            "pair exponent at ν₂ = {nu2} stays nonnegative for every p"
        )));
    }
    let xi = xi_eps(epsilon);
    let hn1 = h(nu1);
    let gamma = ((1.0 - hn1 - 2.0 * xi) / 5.0).min((1.0 - e2 - 2.0 * xi) / 5.0);
    let delta_cap = 1.0 - e2 - 2.0 * xi - 4.0 * gamma;
    let delta = search_delta(nu1, delta_cap)
        .ok_or_else(|| Error::Infeasible(format!("no δ ≥ 1e-9 below ν₁ = {nu1} has h(δ) < {delta_cap}")))?;

    let p_ogp = min_p(|p| pair_ogp_raw(epsilon, nu2, p) < 0.0, "the pair OGP exponent")?;
    let base = 1.0 - 2.0 * delta;
    let p_2 = min_p(|p| base.powf(p) < (1.0 - hn1) / 5.0, "the (1−2δ)ᵖ margin")?;
    let verify_cap = 1.0 - hn1 - 4.0 * gamma - 2.0 * xi;
    let p_verify = min_p(|p| base.powf(p) < verify_cap, "the second c₁ > c₂ check")?;
    let p_hat = p_ogp.max(p_2).max(p_verify);

    let c = cluster_size_exponent(epsilon, nu1, delta, p_hat)?.value;
    let c1 = epsilon * (2.0 - epsilon) - gamma;
    let c2 = c / 2.0 + gamma;
    if c1 - c2 <= xi {
        return Err(Error::Infeasible(format!(
            "c₁ − c₂ = {} does not exceed Ξ(ε) = {xi}",
            c1 - c2
        )));
    }
    Ok(ClusteringConstants {
        epsilon,
        nu1,
        nu2,
        delta,
        xi_eps: xi,
        gamma_margin: gamma,
        c1,
        c2,
        c,
        p_hat,
        p_ogp,
        p_2,
        p_verify,
    })
}

/// `α*` and `ι` for the second-moment argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRegimeConfig {
    pub alpha_star: f64,
    pub iota: f64,
}

/// `−1 + h((1−α*)/2) + (1−ε)²`; must be negative.
pub fn alpha_star_exponent(epsilon: f64, alpha_star: f64) -> f64 {
    -1.0 + h((1.0 - alpha_star) / 2.0) + (1.0 - epsilon).powi(2)
}

impl MomentRegimeConfig {
    /// Smallest `α* ∈ {0.01k}` with a negative [`alpha_star_exponent`], and `ι = 1/4`.
    ///
    /// The smallest valid `α*` gives the smallest order threshold.
    pub fn default_for(epsilon: f64) -> Result<Self> {
        open_unit("epsilon", epsilon)?;
        let alpha_star = (1..100)
            .map(|k| k as f64 / 100.0)
            .find(|&a| alpha_star_exponent(epsilon, a) < 0.0)
            .ok_or_else(|| Error::Infeasible(format!("no α* on the 0.01 grid for ε = {epsilon}")))?;
        Ok(Self {
            alpha_star,
            iota: 0.25,
        })
    }
}

/// `ln(24 ln 2 / α*⁴) / ln(1/α*)`.
pub fn lemma_neg_threshold(alpha_star: f64) -> f64 {
    (24.0 * LN_2 / alpha_star.powi(4)).ln() / (1.0 / alpha_star).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRegimeVerdict {
    pub alpha_star_ok: bool,
    pub alpha_star_exponent: f64,
    pub p_ok_lemma_neg: bool,
    pub lemma_neg_threshold: f64,
    pub p_ok_iota: bool,
    pub overall: bool,
}

pub fn second_moment_regime(epsilon: f64, cfg: MomentRegimeConfig, p: u32) -> Result<MomentRegimeVerdict> {
    open_unit("epsilon", epsilon)?;
    open_unit("alpha_star", cfg.alpha_star)?;
    if !(cfg.iota > 0.0 && cfg.iota < 0.5) {
        return Err(invalid("iota", format!("{} is not in (0, 1/2)", cfg.iota)));
    }
    let exponent = alpha_star_exponent(epsilon, cfg.alpha_star);
    let threshold = lemma_neg_threshold(cfg.alpha_star);
    let pf = f64::from(p);
    let alpha_star_ok = exponent < 0.0;
    let p_ok_lemma_neg = pf >= threshold;
    let p_ok_iota = pf > 1.0 / cfg.iota;
    Ok(MomentRegimeVerdict {
        alpha_star_ok,
        alpha_star_exponent: exponent,
        p_ok_lemma_neg,
        lemma_neg_threshold: threshold,
        p_ok_iota,
        overall: alpha_star_ok && p_ok_lemma_neg && p_ok_iota,
    })
}

/// `φ(γ) = (1 − γ²) ln 2 + βγ√(2 ln 2)`, in nats.
pub fn band_quadratic(gamma: f64, beta: f64) -> f64 {
    (1.0 - gamma * gamma) * LN_2 + beta * gamma * SQRT_2LN2
}

/// `γ* = β / √(2 ln 2)`, the maximizer of [`band_quadratic`].
pub fn gamma_star(beta: f64) -> f64 {
    beta / SQRT_2LN2
}

/// `κ* = (ln 2 / (2β²))^{1/4}`.
pub fn kappa_star(beta: f64) -> f64 {
    (LN_2 / (2.0 * beta * beta)).powf(0.25)
}

/// `C₁ = (1−ε)√(4π ln 2)`.
pub fn c1_constant(epsilon: f64) -> f64 {
    (1.0 - epsilon) * (4.0 * PI * LN_2).sqrt()
}

/// `log₂ E|S(ε)| ≈ n(1 − (1−ε)²) − log₂((1−ε)√(4πn ln 2))`.
pub fn first_moment_count(epsilon: f64, n: u64) -> Result<f64> {
    open_unit("epsilon", epsilon)?;
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let nf = n as f64;
    let e = 1.0 - epsilon;
    Ok(nf * (1.0 - e * e) - (e * (4.0 * PI * nf * LN_2).sqrt()).log2())
}

/// Upper bound on `p(α) = P[Z ≥ t, Z_α ≥ t]` at `t = (1−ε)√(2n ln 2)` and correlation `αᵖ`.
pub fn pair_probability_upper(epsilon: f64, n: u64, alpha: f64, p: u32) -> Result<f64> {
    open_unit("epsilon", epsilon)?;
    let rho = alpha.powi(p as i32);
    if !(rho > -1.0 && rho < 1.0) {
        return Err(invalid("alpha", format!("correlation {rho} is not in (-1, 1)")));
    }
    let nf = n as f64;
    let c1 = c1_constant(epsilon);
    let e2 = (1.0 - epsilon).powi(2);
    Ok((1.0 + rho).powi(2) / (c1 * c1 * nf * (1.0 - rho * rho).sqrt()) * (-2.0 * nf * e2 / (1.0 + rho)).exp2())
}

/// One named constant of an [`ExponentReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEntry {
    pub name: String,
    pub formula: String,
    pub value: f64,
}

/// Every closed-form constant at a parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub epsilon: f64,
    pub p: u32,
    pub beta: Option<f64>,
    pub n: Option<u64>,
    pub entries: Vec<ExponentEntry>,
}

impl ExponentReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }

    fn push(&mut self, name: &str, formula: &str, value: f64) {
        self.entries.push(ExponentEntry {
            name: name.into(),
            formula: formula.into(),
            value,
        });
    }
}

/// Evaluates the clustering, second-moment and (when `beta` is given) band constants.
pub fn exponent_report(epsilon: f64, p: u32, beta: Option<f64>, n: Option<u64>) -> Result<ExponentReport> {
    let cc = clustering_constants(epsilon)?;
    let cfg = MomentRegimeConfig::default_for(epsilon)?;
    let regime = second_moment_regime(epsilon, cfg, p)?;
    let mut r = ExponentReport {
        epsilon,
        p,
        beta,
        n,
        entries: Vec::new(),
    };
    r.push("nu2", "smallest 0.01k with 1+h(nu2)-2(1-eps)^2 < 0", cc.nu2);
    r.push("nu1", "nu2/3", cc.nu1);
    r.push("pair_ogp_exponent", "1+h(nu2)-2(1-eps)^2+(1-2nu2/3)^p", pair_ogp_raw(epsilon, cc.nu2, f64::from(p)));
    r.push("xi_eps", "min(eps^10,(1-eps)^10)/100", cc.xi_eps);
    r.push("gamma", "min((1-h(nu1)-2Xi)/5,(1-(1-eps)^2-2Xi)/5)", cc.gamma_margin);
    r.push("delta", "largest grid delta < nu1 with h(delta) < 1-(1-eps)^2-2Xi-4gamma", cc.delta);
    r.push(
        "cluster_size_exponent",
        "max(1+h(delta)-(1-eps)^2, 1+h(nu1)-2(1-eps)^2+(1-2delta)^p)",
        cluster_size_exponent(epsilon, cc.nu1, cc.delta, p)?.value,
    );
    r.push("c1", "eps(2-eps)-gamma", cc.c1);
    r.push("c2", "c/2+gamma at p_hat", cc.c2);
    r.push("p_hat", "max(p_ogp, p_2, p_verify)", f64::from(cc.p_hat));
    r.push("alpha_star", "smallest 0.01k with -1+h((1-a)/2)+(1-eps)^2 < 0", cfg.alpha_star);
    r.push("alpha_star_exponent", "-1+h((1-a)/2)+(1-eps)^2", regime.alpha_star_exponent);
    r.push("lemma_neg_threshold", "ln(24 ln2/a^4)/ln(1/a)", regime.lemma_neg_threshold);
    r.push("iota", "default", cfg.iota);
    r.push("C1", "(1-eps)sqrt(4 pi ln2)", c1_constant(epsilon));
    if let Some(n) = n {
        r.push("first_moment_log2", "n(1-(1-eps)^2)-log2((1-eps)sqrt(4 pi n ln2))", first_moment_count(epsilon, n)?);
    }
    if let Some(beta) = beta {
        let g = gamma_star(beta);
        r.push("gamma_star", "beta/sqrt(2 ln2)", g);
        r.push("kappa_star", "(ln2/(2 beta^2))^(1/4)", kappa_star(beta));
        r.push("phi_gamma_star", "(1-g^2)ln2+beta g sqrt(2 ln2)", band_quadratic(g, beta));
    }
    Ok(r)
}
