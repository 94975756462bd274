//! Tail-first view of univariate laws.
//!
//! Everything is evaluated in log space. Asymptotic checks compare tails at
//! points like `x` and `x - h(x)` with `x` up to 1e300, where the plain
//! difference `log_tail(x) - log_tail(y)` would be pure rounding noise, so
//! every law supplies a stable [`TailDistribution::log_tail_ratio`].

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{domain, Error, Result};
use crate::expint::{expint_e1_scaled, ln_expint_e1};
use crate::integrate::{integrate, Tolerance};
use crate::rng::{open_uniform, SimRng};

pub trait TailDistribution: Send + Sync + fmt::Debug {
    fn label(&self) -> String;

    /// Left end of the support; the tail is exactly 1 at or below it.
    fn support_lower(&self) -> f64;

    /// `ln F̄(x)`, `-inf` where the tail vanishes.
    fn log_tail(&self, x: f64) -> f64;

    fn tail(&self, x: f64) -> f64 {
        if x <= self.support_lower() {
            1.0
        } else {
            self.log_tail(x).exp()
        }
    }

    /// `ln(F̄(x) / F̄(y))` where `d = x - y` is known more precisely than
    /// the rounded difference of `x` and `y`.
    fn log_tail_ratio_with(&self, x: f64, y: f64, _d: f64) -> f64 {
        self.log_tail(x) - self.log_tail(y)
    }

    /// `ln(F̄(x) / F̄(y))`.
    fn log_tail_ratio(&self, x: f64, y: f64) -> f64 {
        self.log_tail_ratio_with(x, y, x - y)
    }

    /// `ln(F̄(x - h) / F̄(x))`, meaningful even when `x - h` rounds to `x`.
    fn log_tail_shift(&self, x: f64, h: f64) -> f64 {
        self.log_tail_ratio_with(x - h, x, -h)
    }

    /// `ln(F̄(a) - F̄(b))` for `a < b`.
    fn log_tail_diff(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return f64::NEG_INFINITY;
        }
        let r = self.log_tail_ratio(b, a);
        self.log_tail(a) + ln_one_minus_exp(r)
    }

    fn log_density(&self, _x: f64) -> Option<f64> {
        None
    }

    fn density(&self, x: f64) -> Option<f64> {
        self.log_density(x).map(f64::exp)
    }

    fn has_density(&self) -> bool {
        self.log_density(self.support_lower().max(0.0) + 1.0).is_some()
    }

    /// `ln q(x)`; the default subtracts the log tail from the log density,
    /// which cancels badly once both are huge.
    fn log_hazard(&self, x: f64) -> Option<f64> {
        Some(self.log_density(x)? - self.log_tail(x))
    }
}

/// `ln(1 - e^r)` for `r <= 0`.
pub fn ln_one_minus_exp(r: f64) -> f64 {
    if r >= 0.0 {
        f64::NEG_INFINITY
    } else if r > -LN_2 {
        (-r.exp_m1()).ln()
    } else {
        (-r.exp()).ln_1p()
    }
}

/// `a^p - b^p` for `a, b > 0` given `d = a - b` to full precision.
pub fn pow_diff(a: f64, d: f64, p: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    a.powf(p) * -(p * (-d / a).ln_1p()).exp_m1()
}

/// `ln(a / b)` for positive `a, b` with `d = a - b`.
fn ln_ratio(d: f64, b: f64) -> f64 {
    (d / b).ln_1p()
}

pub fn tail_at(dist: &dyn TailDistribution, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("tail requires finite x, got {x}")));
    }
    Ok(dist.tail(x))
}

/// Hazard function `Q(x) = -ln F̄(x)`.
pub fn hazard_fn(dist: &dyn TailDistribution, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("hazard requires finite x, got {x}")));
    }
    let lt = dist.log_tail(x);
    if lt == f64::NEG_INFINITY {
        return Err(Error::InfiniteHazard(x));
    }
    Ok(-lt)
}

/// Hazard rate `q(x) = f(x)/F̄(x)`, by a centred difference of `Q` when the
/// law has no closed-form density.
pub fn hazard_rate_at(dist: &dyn TailDistribution, x: f64) -> Result<f64> {
    let lower = dist.support_lower();
    if !x.is_finite() || x <= lower {
        return Err(domain(format!("hazard rate needs x > {lower}, got {x}")));
    }
    if dist.has_density() {
        if dist.log_tail(x) == f64::NEG_INFINITY {
            return Err(Error::InfiniteHazard(x));
        }
        if let Some(lq) = dist.log_hazard(x) {
            return Ok(lq.exp());
        }
    }
    let h = (1e-4 * x.abs()).max(1e-6);
    let lo = (x - h).max(lower + 0.5 * (x - lower));
    let q = -dist.log_tail_ratio(x + h, lo) / (x + h - lo);
    Ok(q.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    /// `F̄(x) = (x/xmin)^-alpha`
    Pareto {
        alpha: f64,
        xmin: f64,
    },
    /// `F̄(x) = exp(-gamma x^beta)`
    Weibull {
        gamma: f64,
        beta: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// `F̄(x) = (1+x)^-alpha`
    Lomax {
        alpha: f64,
    },
    /// `F̄(x) = exp(-gamma (ln x)^alpha)` on `x >= 1`
    LogWeibull {
        gamma: f64,
        alpha: f64,
    },
    /// `∫_1^2 (1+x)^-η dη`
    BoundedParetoMixture,
    /// `∫_a^b exp(-gamma x^β) dβ / (b-a)`
    WeibullMixture {
        a: f64,
        b: f64,
        gamma: f64,
    },
    /// `F̄(x) = k / ln x` above `e^k`
    SlowlyVaryingLogTail {
        k: f64,
    },
    Shifted {
        shift: f64,
        inner: Box<Law>,
    },
}

impl Law {
    pub fn pareto(alpha: f64) -> Law {
        Law::Pareto { alpha, xmin: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(domain(format!("{}: {m}", self.label())));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match self {
            Law::Pareto { alpha, xmin } if !(pos(*alpha) && pos(*xmin)) => bad("alpha, xmin > 0"),
            Law::Weibull { gamma, beta } if !(pos(*gamma) && pos(*beta)) => bad("gamma, beta > 0"),
            Law::LogNormal { mu, sigma } if !(mu.is_finite() && pos(*sigma)) => bad("sigma > 0"),
            Law::Lomax { alpha } if !pos(*alpha) => bad("alpha > 0"),
            Law::LogWeibull { gamma, alpha } if !(pos(*gamma) && *alpha >= 1.0) => bad("gamma > 0, alpha >= 1"),
            Law::WeibullMixture { a, b, gamma } if !(*a >= 0.0 && b > a && pos(*gamma)) => bad("0 <= a < b, gamma > 0"),
            Law::SlowlyVaryingLogTail { k } if !pos(*k) => bad("k > 0"),
            Law::Shifted { shift, inner } => {
                if !shift.is_finite() {
                    return bad("finite shift");
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    /// Inverse of the tail: the `x` with `F̄(x) = u`, `u` in (0, 1].
    pub fn quantile_from_tail(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(domain(format!("tail level must be in (0,1], got {u}")));
        }
        Ok(match self {
            Law::Pareto { alpha, xmin } => xmin * u.powf(-1.0 / alpha),
            Law::Weibull { gamma, beta } => (-u.ln() / gamma).powf(1.0 / beta),
            Law::LogNormal { mu, sigma } => {
                let mut z = SQRT_2 * erfc_inv(2.0 * u);
                // one Newton polish against the accurate tail
                z += (normal_tail(z) - u) / normal_log_density(z).exp();
                (mu + sigma * z).exp()
            }
            Law::Lomax { alpha } => (-u.ln() / alpha).exp_m1(),
            Law::LogWeibull { gamma, alpha } => ((-u.ln() / gamma).powf(1.0 / alpha)).exp(),
            Law::SlowlyVaryingLogTail { k } => (k / u).exp(),
            Law::Shifted { shift, inner } => shift + inner.quantile_from_tail(u)?,
            Law::BoundedParetoMixture | Law::WeibullMixture { .. } => self.invert_by_bisection(u),
        })
    }

    fn invert_by_bisection(&self, u: f64) -> f64 {
        let target = u.ln();
        if target >= 0.0 {
            return self.support_lower();
        }
        let mut lo = self.support_lower().max(0.0);
        let mut hi = lo + 1.0;
        while self.log_tail(hi) > target && hi < 1e300 {
            lo = hi;
            hi *= 4.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.log_tail(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match self {
            Law::LogNormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            Law::BoundedParetoMixture => {
                let eta = 1.0 + rng.random::<f64>();
                open_uniform(rng).powf(-1.0 / eta) - 1.0
            }
            Law::WeibullMixture { a, b, gamma } => {
                let beta = a + (b - a) * open_uniform(rng);
                (-open_uniform(rng).ln() / gamma).powf(1.0 / beta)
            }
            Law::Shifted { shift, inner } => shift + inner.sample(rng),
            _ => {
                let u = open_uniform(rng);
                self.quantile_from_tail(u).expect("closed-form quantile")
            }
        }
    }
}

fn lognormal_z(mu: f64, sigma: f64, x: f64) -> f64 {
    (x.ln() - mu) / sigma
}

/// Mills ratio `Φ̄(z)/φ(z)` by continued fraction, for `z >= 2`.
fn mills_ratio(z: f64) -> f64 {
    // Φ̄/φ = 1/(z+ 1/(z+ 2/(z+ 3/(z+ ...))))
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = c * d;
        f *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

const MILLS_CUTOFF: f64 = 2.0;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `erf(t)` by its Maclaurin series, for `|t| <= √2`.
fn erf_series(t: f64) -> f64 {
    let t2 = t * t;
    let mut term = t;
    let mut sum = t;
    for n in 1..60 {
        let nf = n as f64;
        term *= -t2 / nf;
        let add = term / (2.0 * nf + 1.0);
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum * std::f64::consts::FRAC_2_SQRT_PI
}

/// `Φ̄(z)` accurate to a few ulps in relative terms.
pub fn normal_tail(z: f64) -> f64 {
    if z >= MILLS_CUTOFF {
        (-0.5 * z * z - LN_SQRT_2PI).exp() * mills_ratio(z)
    } else if z > -MILLS_CUTOFF {
        0.5 * (1.0 - erf_series(z / SQRT_2))
    } else {
        1.0 - normal_tail(-z)
    }
}

/// `ln Φ̄(z)`.
pub fn ln_normal_tail(z: f64) -> f64 {
    if z < MILLS_CUTOFF {
        normal_tail(z).ln()
    } else {
        -0.5 * z * z - LN_SQRT_2PI + mills_ratio(z).ln()
    }
}

/// `ln(Φ̄(z1)/Φ̄(z2))` given `d = z1 - z2` precisely.
fn ln_normal_tail_ratio(z1: f64, z2: f64, d: f64) -> f64 {
    if d.abs() < 1e-3 {
        // -∫ φ/Φ̄ over [z2, z1], two-point Gauss
        let inv_mills = |z: f64| {
            if z >= MILLS_CUTOFF {
                1.0 / mills_ratio(z)
            } else {
                (normal_log_density(z) - ln_normal_tail(z)).exp()
            }
        };
        let (mid, half) = (z2 + 0.5 * d, 0.5 * d / 3f64.sqrt());
        return -0.5 * d * (inv_mills(mid - half) + inv_mills(mid + half));
    }
    if z1.min(z2) >= MILLS_CUTOFF {
        -0.5 * d * (z1 + z2) + (mills_ratio(z1) / mills_ratio(z2)).ln()
    } else {
        ln_normal_tail(z1) - ln_normal_tail(z2)
    }
}

/// Integral `∫_1^2 η e^{-ηL} dη`.
fn bpm_eta_moment(l: f64) -> f64 {
    if l < 0.5 {
        // Σ_k (2^{k+2}-1)/(k+2) (-L)^k / k!
        let mut sum = 0.0;
        let mut pow2 = 4.0;
        let mut term = 1.0;
        for k in 0..40 {
            let kf = k as f64;
            if k > 0 {
                term *= -l / kf;
            }
            sum += (pow2 - 1.0) / (kf + 2.0) * term;
            pow2 *= 2.0;
            if term.abs() * pow2 < 1e-18 {
                break;
            }
        }
        sum
    } else {
        let e1 = (-l).exp();
        e1 * ((1.0 / l + 1.0 / (l * l)) - e1 * (2.0 / l + 1.0 / (l * l)))
    }
}

fn weibull_mixture_log_tail(a: f64, b: f64, gamma: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let lx = x.ln();
    if lx.abs() < 0.1 {
        let r = integrate(|beta: f64| (-gamma * x.powf(beta)).exp(), a, b, Tolerance::rel(1e-13));
        return (r.value / (b - a)).ln();
    }
    let (lo, hi) = {
        let ua = gamma * x.powf(a);
        let ub = gamma * x.powf(b);
        if ua < ub {
            (ua, ub)
        } else {
            (ub, ua)
        }
    };
    let l_lo = ln_expint_e1(lo).expect("positive argument");
    let l_hi = ln_expint_e1(hi).expect("positive argument");
    l_lo + ln_one_minus_exp(l_hi - l_lo) - ((b - a) * lx.abs()).ln()
}

impl TailDistribution for Law {
    fn label(&self) -> String {
        match self {
            Law::Pareto { alpha, xmin } => format!("pareto(alpha={alpha},xmin={xmin})"),
            Law::Weibull { gamma, beta } => format!("weibull(gamma={gamma},beta={beta})"),
            Law::LogNormal { mu, sigma } => format!("lognormal(mu={mu},sigma={sigma})"),
            Law::Lomax { alpha } => format!("lomax(alpha={alpha})"),
            Law::LogWeibull { gamma, alpha } => format!("log_weibull(gamma={gamma},alpha={alpha})"),
            Law::BoundedParetoMixture => "bounded_pareto_mixture".into(),
            Law::WeibullMixture { a, b, gamma } => {
                format!("weibull_mixture(a={a},b={b},gamma={gamma})")
            }
            Law::SlowlyVaryingLogTail { k } => format!("slowly_varying_log_tail(k={k})"),
            Law::Shifted { shift, inner } => format!("{}+{shift}", inner.label()),
        }
    }

    fn support_lower(&self) -> f64 {
        match self {
            Law::Pareto { xmin, .. } => *xmin,
            Law::LogWeibull { .. } => 1.0,
            Law::SlowlyVaryingLogTail { k } => k.exp(),
            Law::Shifted { shift, inner } => shift + inner.support_lower(),
            _ => 0.0,
        }
    }

    fn log_tail(&self, x: f64) -> f64 {
        if x <= self.support_lower() {
            return 0.0;
        }
        match self {
            Law::Pareto { alpha, xmin } => -alpha * (x / xmin).ln(),
            Law::Weibull { gamma, beta } => -gamma * x.powf(*beta),
            Law::LogNormal { mu, sigma } => ln_normal_tail(lognormal_z(*mu, *sigma, x)),
            Law::Lomax { alpha } => -alpha * x.ln_1p(),
            Law::LogWeibull { gamma, alpha } => -gamma * x.ln().powf(*alpha),
            Law::BoundedParetoMixture => {
                let l = x.ln_1p();
                -l + (-(-l).exp_m1() / l).ln()
            }
            Law::WeibullMixture { a, b, gamma } => weibull_mixture_log_tail(*a, *b, *gamma, x),
            Law::SlowlyVaryingLogTail { k } => (k / x.ln()).ln(),
            Law::Shifted { shift, inner } => inner.log_tail(x - shift),
        }
    }

    fn log_tail_ratio_with(&self, x: f64, y: f64, d: f64) -> f64 {
        let lower = self.support_lower();
        let d = if x < lower || y < lower { x.max(lower) - y.max(lower) } else { d };
        let (x, y) = (x.max(lower), y.max(lower));
        if d == 0.0 {
            return 0.0;
        }
        match self {
            Law::Pareto { alpha, .. } => -alpha * ln_ratio(d, y),
            Law::Weibull { gamma, beta } => {
                if y <= 0.0 {
                    return self.log_tail(x);
                }
                -gamma * pow_diff(x, d, *beta)
            }
            Law::LogNormal { mu, sigma } => {
                if y <= 0.0 {
                    return self.log_tail(x);
                }
                let z1 = lognormal_z(*mu, *sigma, x);
                let z2 = lognormal_z(*mu, *sigma, y);
                ln_normal_tail_ratio(z1, z2, ln_ratio(d, y) / sigma)
            }
            Law::Lomax { alpha } => -alpha * (d / (1.0 + y)).ln_1p(),
            Law::LogWeibull { gamma, alpha } => {
                if y <= 1.0 {
                    return self.log_tail(x);
                }
                -gamma * pow_diff(x.ln(), ln_ratio(d, y), *alpha)
            }
            Law::BoundedParetoMixture => {
                if y <= 0.0 {
                    return self.log_tail(x);
                }
                let (lx, ly) = (x.ln_1p(), y.ln_1p());
                let dl = (d / (1.0 + y)).ln_1p();
                let rest = |l: f64| (-(-l).exp_m1() / l).ln();
                -dl + rest(lx) - rest(ly)
            }
            Law::WeibullMixture { a, b, gamma } => {
                let cf_region = |v: f64| v.ln() > 0.1 && gamma * v.powf(*a) > 1.1;
                if !(cf_region(x) && cf_region(y)) {
                    return self.log_tail(x) - self.log_tail(y);
                }
                // split off the exponential factor of ln E1 so the huge
                // `γ x^a` parts cancel analytically
                let part = |v: f64| {
                    let ua = gamma * v.powf(*a);
                    let ub = gamma * v.powf(*b);
                    let la = ln_expint_e1(ua).expect("positive");
                    let lb = ln_expint_e1(ub).expect("positive");
                    expint_e1_scaled(ua).expect("positive").ln() + ln_one_minus_exp(lb - la) - v.ln().ln()
                };
                -gamma * pow_diff(x, d, *a) + part(x) - part(y)
            }
            Law::SlowlyVaryingLogTail { .. } => -(ln_ratio(d, y) / y.ln()).ln_1p(),
            Law::Shifted { shift, inner } => inner.log_tail_ratio_with(x - shift, y - shift, d),
        }
    }

    fn log_density(&self, x: f64) -> Option<f64> {
        let lower = self.support_lower();
        let below = if x < lower || (x == lower && lower <= 0.0) { Some(f64::NEG_INFINITY) } else { None };
        match self {
            Law::Pareto { alpha, xmin } => {
                Some(below.unwrap_or_else(|| alpha.ln() + alpha * xmin.ln() - (alpha + 1.0) * x.ln()))
            }
            Law::Weibull { gamma, beta } => {
                Some(below.unwrap_or_else(|| (gamma * beta).ln() + (beta - 1.0) * x.ln() - gamma * x.powf(*beta)))
            }
            Law::LogNormal { mu, sigma } => Some(below.unwrap_or_else(|| {
                let z = lognormal_z(*mu, *sigma, x);
                -0.5 * z * z - LN_SQRT_2PI - (sigma * x).ln()
            })),
            Law::Lomax { alpha } => Some(below.unwrap_or_else(|| alpha.ln() - (alpha + 1.0) * x.ln_1p())),
            Law::LogWeibull { gamma, alpha } => Some(below.unwrap_or_else(|| {
                let l = x.ln();
                (gamma * alpha).ln() + (alpha - 1.0) * l.ln() - l - gamma * l.powf(*alpha)
            })),
            Law::BoundedParetoMixture => Some(below.unwrap_or_else(|| {
                let l = x.ln_1p();
                bpm_eta_moment(l).ln() - l
            })),
            Law::WeibullMixture { .. } => None,
            Law::SlowlyVaryingLogTail { k } => Some(if x <= lower {
                f64::NEG_INFINITY
            } else {
                let l = x.ln();
                k.ln() - l - 2.0 * l.ln()
            }),
            Law::Shifted { shift, inner } => inner.log_density(x - shift),
        }
    }

    fn has_density(&self) -> bool {
        match self {
            Law::WeibullMixture { .. } => false,
            Law::Shifted { inner, .. } => inner.has_density(),
            _ => true,
        }
    }

    fn log_hazard(&self, x: f64) -> Option<f64> {
        match self {
            Law::Weibull { gamma, beta } if x > 0.0 => Some((gamma * beta).ln() + (beta - 1.0) * x.ln()),
            Law::Pareto { alpha, xmin } if x > *xmin => Some(alpha.ln() - x.ln()),
            Law::Shifted { shift, inner } => inner.log_hazard(x - shift),
            _ => Some(self.log_density(x)? - self.log_tail(x)),
        }
    }
}

type LogTailFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type LogRatioFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A tail given by closures, for reference curves that are not laws of any
/// named family (e.g. an asymptotic form capped at 1).
#[derive(Clone)]
pub struct TailCurve {
    pub label: String,
    pub lower: f64,
    log_tail: LogTailFn,
    log_tail_ratio: Option<LogRatioFn>,
    log_density: Option<LogTailFn>,
}

impl fmt::Debug for TailCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TailCurve").field("label", &self.label).field("lower", &self.lower).finish()
    }
}

impl TailCurve {
    pub fn new(label: impl Into<String>, lower: f64, log_tail: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TailCurve { label: label.into(), lower, log_tail: Arc::new(log_tail), log_tail_ratio: None, log_density: None }
    }

    /// Stable `ln(F̄(x)/F̄(y))` given `(x, y, x - y)`.
    pub fn with_ratio(mut self, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.log_tail_ratio = Some(Arc::new(f));
        self
    }

    pub fn with_log_density(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.log_density = Some(Arc::new(f));
        self
    }
}

impl TailDistribution for TailCurve {
    fn label(&self) -> String {
        self.label.clone()
    }
    fn support_lower(&self) -> f64 {
        self.lower
    }
    fn log_tail(&self, x: f64) -> f64 {
        if x <= self.lower {
            0.0
        } else {
            (self.log_tail)(x).min(0.0)
        }
    }
    fn log_tail_ratio_with(&self, x: f64, y: f64, d: f64) -> f64 {
        match &self.log_tail_ratio {
            Some(f) if x > self.lower && y > self.lower => f(x, y, d),
            _ => self.log_tail(x) - self.log_tail(y),
        }
    }
    fn log_density(&self, x: f64) -> Option<f64> {
        let f = self.log_density.as_ref()?;
        Some(if x <= self.lower { f64::NEG_INFINITY } else { f(x) })
    }
    fn has_density(&self) -> bool {
        self.log_density.is_some()
    }
}

/// Standard normal log density.
pub fn normal_log_density(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expint::expint_e1;
    use crate::integrate::integrate_pieces;
    use crate::rng::stream;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn tail_formulas() {
        assert!(rel(Law::pareto(2.0).tail(10.0), 0.01) < 1e-15);
        let w = Law::Weibull { gamma: 1.0, beta: 0.5 };
        assert!(rel(w.tail(4.0), (-2f64).exp()) < 1e-15);
        assert_eq!(Law::pareto(2.0).tail(0.5), 1.0);
    }

    #[test]
    fn weibull_mixture_matches_direct_quadrature() {
        let law = Law::WeibullMixture { a: 0.2, b: 1.0, gamma: 1.0 };
        let x: f64 = 100.0;
        let direct = integrate(|b: f64| (-x.powf(b)).exp(), 0.2, 1.0, Tolerance::rel(1e-13)).value / 0.8;
        assert!(rel(law.tail(x), direct) < 1e-8, "{} vs {direct}", law.tail(x));
        // near x = 1 the quadrature branch takes over
        for x in [0.5f64, 0.95, 1.0, 1.05, 2.0] {
            let direct = integrate(|b: f64| (-x.powf(b)).exp(), 0.2, 1.0, Tolerance::rel(1e-13)).value / 0.8;
            assert!(rel(law.tail(x), direct) < 1e-9, "x={x}");
        }
    }

    #[test]
    fn weibull_mixture_slowly_varying_case() {
        let law = Law::WeibullMixture { a: 0.0, b: 1.0, gamma: 1.0 };
        let x: f64 = 1e6;
        let want = (expint_e1(1.0).unwrap() - expint_e1(x).unwrap()) / x.ln();
        assert!(rel(law.tail(x), want) < 1e-12);
    }

    #[test]
    fn hazard_examples() {
        assert!(rel(hazard_fn(&Law::pareto(2.0), std::f64::consts::E).unwrap(), 2.0) < 1e-15);
        let w = Law::Weibull { gamma: 3.0, beta: 0.5 };
        assert!(rel(hazard_fn(&w, 4.0).unwrap(), 6.0) < 1e-15);
        let q = hazard_fn(&Law::BoundedParetoMixture, 10.0).unwrap();
        let want = -((1.0 / 11.0 - 1.0 / 121.0) / 11f64.ln()).ln();
        assert!(rel(q, want) < 1e-13);
        let bounded = TailCurve::new("bounded", 0.0, |x| if x < 1.0 { (-x).ln_1p() } else { f64::NEG_INFINITY });
        assert!(matches!(hazard_fn(&bounded, 2.0), Err(Error::InfiniteHazard(_))));
        assert!(hazard_fn(&w, 1e6).unwrap() > 0.0);
    }

    #[test]
    fn hazard_rate_examples() {
        assert!(rel(hazard_rate_at(&Law::pareto(2.0), 5.0).unwrap(), 0.4) < 1e-12);
        let w = Law::Weibull { gamma: 1.0, beta: 0.5 };
        assert!(rel(hazard_rate_at(&w, 4.0).unwrap(), 0.25) < 1e-12);
        assert!(hazard_rate_at(&Law::pareto(2.0), 1.0).is_err());

        // five-point stencil on Q as oracle
        let ln = Law::LogNormal { mu: 0.0, sigma: 1.0 };
        let q = |x: f64| hazard_fn(&ln, x).unwrap();
        let (x, h) = (10.0, 1e-2);
        let fd = (-q(x + 2.0 * h) + 8.0 * q(x + h) - 8.0 * q(x - h) + q(x - 2.0 * h)) / (12.0 * h);
        assert!(rel(hazard_rate_at(&ln, x).unwrap(), fd) < 1e-6);
    }

    #[test]
    fn finite_difference_fallback_close_to_density() {
        let law = Law::WeibullMixture { a: 0.2, b: 1.0, gamma: 1.0 };
        let x: f64 = 50.0;
        let f =
            integrate(|b: f64| b * x.powf(b - 1.0) * (-x.powf(b)).exp(), 0.2, 1.0, Tolerance::rel(1e-13)).value / 0.8;
        let q = hazard_rate_at(&law, x).unwrap();
        assert!(rel(q, f / law.tail(x)) < 1e-6);
    }

    #[test]
    fn lognormal_branches_join() {
        let ln = Law::LogNormal { mu: 0.0, sigma: 1.0 };
        // 40-digit reference values
        for (z, want) in [(2.0f64, -3.783_184_333_682_032), (5.0, -15.064_998_393_988_726)] {
            let got = ln.log_tail(z.exp());
            assert!(((got - want) / want).abs() < 1e-13, "z={z}: {got}");
        }
        let below = ln_normal_tail(MILLS_CUTOFF - 1e-12);
        let above = ln_normal_tail(MILLS_CUTOFF);
        assert!((below - above).abs() < 1e-11, "{below} {above}");
        // Φ̄(-1), Φ̄(0.5), Φ̄(-3) to 16 digits
        for (z, want) in
            [(-1.0, 0.841_344_746_068_542_9), (0.5, 0.308_537_538_725_986_9), (-3.0, 0.998_650_101_968_369_9)]
        {
            assert!(((normal_tail(z) - want) / want).abs() < 1e-14, "z={z}");
        }
        assert!(ln.log_tail(1e300) < -1e5);
    }

    #[test]
    fn stable_ratios_agree_with_plain_differences_at_moderate_x() {
        let laws = all_laws();
        for law in &laws {
            for (x, y) in [(50.0, 30.0), (1e3, 999.0), (200.0, 400.0)] {
                let stable = law.log_tail_ratio(x, y);
                let plain = law.log_tail(x) - law.log_tail(y);
                assert!((stable - plain).abs() < 1e-9 * plain.abs().max(1e-3), "{law:?} {x} {y}: {stable} {plain}");
            }
        }
    }

    #[test]
    fn stable_ratio_resolves_tiny_offsets() {
        let w = Law::Weibull { gamma: 1.0, beta: 0.5 };
        let x: f64 = 1e40;
        let h = x.powf(0.4);
        assert_eq!(x - h, x);
        let r = w.log_tail_shift(x, h);
        assert!(rel(r, 0.5 * h / x.sqrt()) < 1e-6, "{r}");
    }

    #[test]
    fn density_integrates_to_tail_difference() {
        for law in all_laws() {
            if !law.has_density() {
                continue;
            }
            let lo = law.support_lower().max(0.0);
            for (a, b) in [(lo + 0.5, lo + 7.0), (lo + 10.0, 1e3), (1e3, 1e6)] {
                let pts = crate::integrate::two_sided_breaks(a, b, 1e-3);
                let r = integrate_pieces(|y| law.density(y).unwrap(), &pts, Tolerance::rel(1e-12));
                let want = law.tail(a) - law.tail(b);
                assert!(rel(r.value, want) < 1e-8, "{law:?} [{a},{b}] {} vs {want}", r.value);
            }
        }
    }

    #[test]
    fn quantile_examples() {
        assert!(rel(Law::pareto(1.0).quantile_from_tail(0.25).unwrap(), 4.0) < 1e-15);
        let w = Law::Weibull { gamma: 1.0, beta: 0.5 };
        assert!(rel(w.quantile_from_tail((-3f64).exp()).unwrap(), 9.0) < 1e-14);
        for law in all_laws() {
            for u in [0.9, 0.5, 0.1, 1e-2] {
                let x = law.quantile_from_tail(u).unwrap();
                assert!(rel(law.tail(x), u) < 1e-9, "{law:?} u={u}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        for law in all_laws() {
            let a: Vec<f64> = {
                let mut r = stream(11, 2);
                (0..50).map(|_| law.sample(&mut r)).collect()
            };
            let b: Vec<f64> = {
                let mut r = stream(11, 2);
                (0..50).map(|_| law.sample(&mut r)).collect()
            };
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bpm_moment_series_and_closed_form_meet() {
        let l: f64 = 0.5;
        let e1 = (-l).exp();
        let closed = e1 * ((1.0 / l + 1.0 / (l * l)) - e1 * (2.0 / l + 1.0 / (l * l)));
        let series = bpm_eta_moment(0.5 - 1e-15);
        assert!(rel(series, closed) < 1e-12);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(Law::Pareto { alpha: -1.0, xmin: 1.0 }.validate().is_err());
        assert!(Law::WeibullMixture { a: 0.5, b: 0.4, gamma: 1.0 }.validate().is_err());
        assert!(tail_at(&Law::pareto(1.0), f64::INFINITY).is_err());
    }

    pub(crate) fn all_laws() -> Vec<Law> {
        vec![
            Law::pareto(2.0),
            Law::Pareto { alpha: 0.5, xmin: 3.0 },
            Law::Weibull { gamma: 1.0, beta: 0.5 },
            Law::Weibull { gamma: 2.0, beta: 0.3 },
            Law::LogNormal { mu: 0.0, sigma: 1.0 },
            Law::LogNormal { mu: 1.0, sigma: 2.0 },
            Law::Lomax { alpha: 1.5 },
            Law::LogWeibull { gamma: 1.0, alpha: 2.0 },
            Law::BoundedParetoMixture,
            Law::WeibullMixture { a: 0.2, b: 1.0, gamma: 1.0 },
            Law::WeibullMixture { a: 0.0, b: 1.0, gamma: 1.0 },
            Law::SlowlyVaryingLogTail { k: 0.5 },
            Law::Shifted { shift: 2.0, inner: Box::new(Law::pareto(1.5)) },
        ]
    }

    #[test]
    fn lognormal_ratio_at_tiny_offsets() {
        // -d q(x - d/2) is exact to O(d^3) here, far below the rounding of
        // the plain log-tail difference
        let ln = Law::LogNormal { mu: 0.0, sigma: 1.0 };
        for (x, d) in [(1e3, 1e-7), (1e8, 1e-3), (1e20, 1e9)] {
            let y = x - d;
            let want = -d * ln.log_hazard(x - 0.5 * d).unwrap().exp();
            let got = ln.log_tail_ratio_with(x, y, d);
            assert!(rel(got, want) < 1e-8, "x={x}: {got} vs {want}");
        }
    }
}
