//! Arbitrary-precision re-derivation of the closed-form exponents, used as an
//! independent reference for the f64 implementations.

use std::f64::consts::PI;

use std::cell::RefCell;
use std::rc::Rc;

use dashu_float::round::mode::HalfEven;
use dashu_float::{CachedFBig, ConstCache, FBig};
use pspin::bounds;
use pspin::mogp::{self, MogpParams};
use pspin::rng::{uniform, Stream};
use pspin::tails;

type F = CachedFBig<HalfEven, 2>;

thread_local! {
    static CACHE: Rc<RefCell<ConstCache>> = Rc::new(RefCell::new(ConstCache::new()));
}

const PREC: usize = 96;
pub const REL_TOL: f64 = 1e-9;

fn f(x: f64) -> F {
    FBig::<HalfEven, 2>::try_from(x)
        .expect("finite input")
        .with_precision(PREC)
        .value()
        .into_cached(CACHE.with(Rc::clone))
}

fn v(x: &F) -> f64 {
    x.to_f64().value()
}

fn min(a: F, b: F) -> F {
    if a < b {
        a
    } else {
        b
    }
}

struct Hp {
    ln2: F,
}

/// Natural log from an f64 seed and one Halley step, `y + 2(x − eʸ)/(x + eʸ)`,
/// which takes the seed's 1e-16 relative error below 1e-45.
fn ln(x: &F) -> F {
    let y = f(v(x).ln());
    let ey = y.exp();
    &y + f(2.0) * (x - &ey) / (x + &ey)
}

impl Hp {
    fn new() -> Self {
        Self { ln2: ln(&f(2.0)) }
    }

    fn log2(&self, x: &F) -> F {
        ln(x) / &self.ln2
    }

    fn pow(&self, base: f64, e: f64) -> F {
        if base == 0.0 {
            return f(0.0);
        }
        if e.fract() == 0.0 && e.abs() < 1e9 {
            return f(base).powi((e as i64).into());
        }
        (f(e) * ln(&f(base))).exp()
    }

    fn h(&self, q: f64) -> F {
        if q <= 0.0 || q >= 1.0 {
            return f(0.0);
        }
        let (a, b) = (f(q), f(1.0) - f(q));
        -(&a * self.log2(&a)) - &b * self.log2(&b)
    }

    fn sq(&self, x: f64) -> F {
        f(x) * f(x)
    }
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub checks: usize,
    pub failures: Vec<String>,
    pub worst: f64,
}

impl OracleReport {
    fn cmp(&mut self, name: &str, got: f64, want: &F, ctx: impl Fn() -> String) {
        let w = v(want);
        let rel = if w == 0.0 { got.abs() } else { ((got - w) / w).abs() };
        self.checks += 1;
        if rel.is_nan() || rel > REL_TOL {
            self.failures.push(format!("{name}({}) = {got}, reference {w}", ctx()));
        }
        if rel > self.worst {
            self.worst = rel;
        }
    }
}

/// Uniform draws for point `i`, indexed so every point is reproducible on its own.
struct Draws {
    seed: u64,
    base: u64,
    k: u64,
}

impl Draws {
    fn next(&mut self, lo: f64, hi: f64) -> f64 {
        let u = uniform(self.seed, Stream::Sampling, self.base + self.k);
        self.k += 1;
        lo + (hi - lo) * u
    }

    fn int(&mut self, lo: u64, hi: u64) -> u64 {
        lo + ((self.next(0.0, 1.0) * (hi - lo + 1) as f64) as u64).min(hi - lo)
    }
}

/// Compares every `bounds` and `mogp` closed form at `points` random parameter points.
pub fn run(points: u64, seed: u64) -> OracleReport {
    let hp = Hp::new();
    let mut r = OracleReport::default();
    for i in 0..points {
        let mut d = Draws { seed, base: i * 64, k: 0 };
        let eps = d.next(0.01, 0.99);
        let nu2 = d.next(0.02, 0.49);
        let p = d.int(2, 200) as u32;
        let pf = f64::from(p);
        let n = d.int(4, 400);
        let alpha = d.next(-0.99, 0.99);
        let beta = d.next(0.05, 1.6);
        let gam = d.next(-1.5, 1.5);
        let ctx = || format!("eps={eps}, nu2={nu2}, p={p}, n={n}, alpha={alpha}, beta={beta}");
        let e2 = hp.sq(1.0 - eps);

        r.cmp("binary_entropy", bounds::binary_entropy(nu2).unwrap(), &hp.h(nu2), ctx);
        let a2 = hp.sq(alpha);
        let taylor = f(1.0) - &a2 / (f(2.0) * &hp.ln2) - &a2 * &a2 / (f(12.0) * &hp.ln2);
        r.cmp("entropy_taylor_upper", bounds::entropy_taylor_upper(alpha).unwrap(), &taylor, ctx);

        let k = d.int(1, n - 1);
        let (nn, kk) = (f(n as f64), f(k as f64));
        let binom = hp.log2(&(&nn / (f(2.0 * PI) * &kk * (&nn - &kk)))) / f(2.0) + &nn * hp.h(k as f64 / n as f64);
        r.cmp("binomial_upper_log2", bounds::binomial_upper_log2(n, k).unwrap(), &binom, ctx);

        let pair = f(1.0) + hp.h(nu2) - f(2.0) * &e2 + hp.pow(1.0 - 2.0 * nu2 / 3.0, pf);
        r.cmp("pair_ogp_exponent", bounds::pair_ogp_exponent(eps, nu2, p).unwrap(), &pair, ctx);

        let nu1 = nu2 / 3.0;
        let delta = d.next(0.001, nu1 * 0.999);
        let cs = bounds::cluster_size_exponent(eps, nu1, delta, p).unwrap();
        r.cmp("cluster_size_near", cs.near, &(f(1.0) + hp.h(delta) - &e2), ctx);
        let far = f(1.0) + hp.h(nu1) - f(2.0) * &e2 + hp.pow(1.0 - 2.0 * delta, pf);
        r.cmp("cluster_size_far", cs.far, &far, ctx);

        let xi = min(hp.pow(eps, 10.0), hp.pow(1.0 - eps, 10.0)) / f(100.0);
        r.cmp("xi_eps", bounds::xi_eps(eps), &xi, ctx);

        let a_star = d.next(0.01, 0.99);
        let ase = -f(1.0) + hp.h((1.0 - a_star) / 2.0) + &e2;
        r.cmp("alpha_star_exponent", bounds::alpha_star_exponent(eps, a_star), &ase, ctx);
        let lnt = ln(&(f(24.0) * &hp.ln2 / hp.pow(a_star, 4.0))) / ln(&(f(1.0) / f(a_star)));
        r.cmp("lemma_neg_threshold", bounds::lemma_neg_threshold(a_star), &lnt, ctx);

        let s2l = (f(2.0) * &hp.ln2).sqrt();
        let bq = (f(1.0) - hp.sq(gam)) * &hp.ln2 + f(beta) * f(gam) * &s2l;
        r.cmp("band_quadratic", bounds::band_quadratic(gam, beta), &bq, ctx);
        r.cmp("gamma_star", bounds::gamma_star(beta), &(f(beta) / &s2l), ctx);
        let ks = (&hp.ln2 / (f(2.0) * hp.sq(beta))).sqrt().sqrt();
        r.cmp("kappa_star", bounds::kappa_star(beta), &ks, ctx);

        let four_pi_ln2 = f(4.0 * PI) * &hp.ln2;
        let c1 = f(1.0 - eps) * four_pi_ln2.clone().sqrt();
        r.cmp("c1_constant", bounds::c1_constant(eps), &c1, ctx);
        let fm = &nn * (f(1.0) - &e2) - hp.log2(&(f(1.0 - eps) * (&four_pi_ln2 * &nn).sqrt()));
        r.cmp("first_moment_count", bounds::first_moment_count(eps, n).unwrap(), &fm, ctx);

        let a_pos = alpha.abs().max(0.01);
        let rho = hp.pow(a_pos, pf);
        let one_rho = f(1.0) + &rho;
        let ppu = &one_rho * &one_rho / (&c1 * &c1 * &nn * (f(1.0) - &rho * &rho).sqrt())
            * (-(f(2.0) * &nn * &e2 / &one_rho) * &hp.ln2).exp();
        r.cmp(
            "pair_probability_upper",
            bounds::pair_probability_upper(eps, n, a_pos, p).unwrap(),
            &ppu,
            ctx,
        );

        let t = d.next(0.2, 12.0);
        let phi = (-(f(t) * f(t)) / f(2.0)).exp() / f(2.0 * PI).sqrt();
        let gs = tails::gauss_tail_bounds(t).unwrap();
        r.cmp("gauss_tail_upper", gs.upper, &(&phi / f(t)), ctx);
        if t > 1.0 {
            let lower = &phi * (f(1.0) / f(t) - f(1.0) / (f(t) * f(t) * f(t)));
            r.cmp("gauss_tail_lower", gs.lower, &lower, ctx);
        }
        let rb = d.next(-0.95, 0.95);
        let biv = hp.sq(1.0 + rb) / (f(2.0 * PI) * f(t) * f(t) * (f(1.0) - hp.sq(rb)).sqrt())
            * (-(f(t) * f(t)) / (f(1.0) + f(rb))).exp();
        r.cmp("bivariate_tail_bound", tails::bivariate_tail_bound(t, rb).unwrap(), &biv, ctx);

        mogp_points(&hp, &mut d, &mut r);

        if eps < 0.26 && i % 8 == 0 {
            let cc = bounds::clustering_constants(eps).unwrap();
            let xi = f(cc.xi_eps);
            let g = min(
                (f(1.0) - hp.h(cc.nu1) - f(2.0) * &xi) / f(5.0),
                (f(1.0) - &e2 - f(2.0) * &xi) / f(5.0),
            );
            r.cmp("clustering_gamma", cc.gamma_margin, &g, ctx);
            let c1 = f(eps) * f(2.0 - eps) - &g;
            r.cmp("clustering_c1", cc.c1, &c1, ctx);
            let near = f(1.0) + hp.h(cc.delta) - &e2;
            let far = f(1.0) + hp.h(cc.nu1) - f(2.0) * &e2 + hp.pow(1.0 - 2.0 * cc.delta, f64::from(cc.p_hat));
            let c = if near > far { near } else { far };
            r.cmp("clustering_c2", cc.c2, &(&c / f(2.0) + &g), ctx);
        }
    }
    r
}

fn mogp_points(hp: &Hp, d: &mut Draws, r: &mut OracleReport) {
    let m = d.int(2, 8) as usize;
    let mf = m as f64;
    let xi = d.next(0.05, 0.99);
    let p = d.int(2, 120) as u32;
    let pf = f64::from(p);
    let eta = d.next(0.0, 1.0) * xi * 0.5 + 1e-6;
    let gamma = d.next(1.0 / mf.sqrt() + 1e-3, 1.5);
    let c_rate = d.next(0.0, 0.2);
    let n = d.int(2, 60);
    let q = MogpParams {
        m,
        gamma,
        xi,
        eta,
        c_rate,
        p,
    };
    let ctx = || format!("m={m}, xi={xi}, p={p}, eta={eta}, gamma={gamma}, c={c_rate}, n={n}");

    let rho = hp.pow(xi, pf);
    let mm = f(mf);
    let psi = f(1.0) + &mm * hp.h((1.0 - xi + eta) / 2.0)
        - &mm * hp.sq(gamma) / (f(1.0) + f(2.0) * &mm * f(pf) * &rho)
        + f(c_rate) * &mm;
    r.cmp("psi_exponent", mogp::psi_exponent(&q).unwrap(), &psi, ctx);

    if let Ok(cov) = mogp::base_covariance(m, xi, p) {
        let off = f(1.0) - &rho;
        let top = f(1.0) + (&mm - f(1.0)) * &rho;
        let det = off.powi((m as i64 - 1).into()) * &top;
        r.cmp("base_covariance_det", cov.det, &det, ctx);
        r.cmp("base_covariance_one_inv_one", cov.one_inv_one, &(&mm / (&off + &mm * &rho)), ctx);
    }

    let pb = mogp::perturbation_bounds(m, xi, eta, p).unwrap();
    let spread = &mm * f(pf) * f(eta) * hp.pow(xi, pf - 1.0);
    r.cmp("perturbation_min", pb.lambda_min_lb, &(f(1.0) - &rho - &spread), ctx);
    r.cmp(
        "perturbation_max",
        pb.lambda_max_ub,
        &(f(1.0) + (&mm - f(1.0)) * &rho + &spread),
        ctx,
    );
    let loose = f(2.0) * &mm * f(pf) * &rho;
    r.cmp("perturbation_loose_max", pb.loose_max_ub, &(f(1.0) + &loose), ctx);

    // Two-point bound against the explicit 2×2 inverse.
    let eta2 = d.next(0.0, eta);
    let q2 = MogpParams {
        m: 2,
        gamma: gamma.max(0.75),
        ..q
    };
    let r2 = hp.pow(xi - eta2, pf);
    let nn = f(n as f64);
    let g2 = f(q2.gamma);
    let t0 = &g2 * (f(2.0) * &nn * &hp.ln2).sqrt();
    let one_r = f(1.0) + &r2;
    let det = f(1.0) - &r2 * &r2;
    let ln_upper = -ln(&f(2.0 * PI)) - ln(&det) / f(2.0) - &t0 * &t0 / &one_r - f(2.0) * ln(&(&t0 / &one_r));
    if let Ok(got) = mogp::probability_upper_bound(&q2, &[eta2], n) {
        r.cmp("probability_upper_bound", got, &(&ln_upper / &hp.ln2), ctx);
    }
    let shown = hp.log2(&nn) + f(2.0) * hp.log2(&(&g2 * (&hp.ln2 / f(PI)).sqrt()))
        - f(2.0) * hp.log2(&one_r)
        - hp.log2(&det) / f(2.0)
        - &g2 * &g2 * &nn * f(2.0) / &one_r;
    if let Ok(got) = mogp::probability_upper_bound_as_displayed(&q2, &[eta2], n) {
        r.cmp("probability_upper_bound_as_displayed", got, &shown, ctx);
    }
}
