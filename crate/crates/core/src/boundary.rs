//! Little-h functions and boundary classes generated by `H = 1/q`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::dist::{hazard_rate_at, TailDistribution};
use crate::error::{Error, Result};
use crate::verdict::{decade_grid, judge_values, last_decades, ls_slope, LimitRule, LimitVerdict};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Candidate `h(x)`: non-decreasing, `0 < h(x) < x/2` eventually, `h → ∞`.
#[derive(Clone)]
pub struct LittleH {
    pub label: String,
    f: RealFn,
}

impl fmt::Debug for LittleH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LittleH({})", self.label)
    }
}

impl LittleH {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        LittleH { label: label.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// `c x^p`
    pub fn power(c: f64, p: f64) -> Self {
        LittleH::new(format!("{c}*x^{p}"), move |x: f64| c * x.powf(p))
    }

    /// `c (ln x)^p`
    pub fn log_power(c: f64, p: f64) -> Self {
        LittleH::new(format!("{c}*ln(x)^{p}"), move |x: f64| c * x.ln().powf(p))
    }

    /// `c x^p (ln x)^q`
    pub fn power_log(c: f64, p: f64, q: f64) -> Self {
        LittleH::new(format!("{c}*x^{p}*ln(x)^{q}"), move |x: f64| c * x.powf(p) * x.ln().powf(q))
    }

    /// Checks the defining invariants on the grid.
    pub fn validate(&self, xs: &[f64]) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for &x in xs {
            let h = self.eval(x);
            if !(h > 0.0 && h < x / 2.0) {
                return Err(Error::Precondition(format!("{}: need 0 < h(x) < x/2, got h({x:e}) = {h:e}", self.label)));
            }
            if h < prev {
                return Err(Error::Precondition(format!("{} decreases at x = {x:e}", self.label)));
            }
            prev = h;
        }
        Ok(())
    }
}

/// The family `{cH(x)}` together with the multiples used in checks.
#[derive(Clone)]
pub struct BoundaryGenerator {
    pub label: String,
    base: RealFn,
    pub multiples: Vec<f64>,
}

impl fmt::Debug for BoundaryGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryGenerator").field("label", &self.label).field("multiples", &self.multiples).finish()
    }
}

pub fn default_multiples() -> Vec<f64> {
    (-6..=1).map(|k| 2f64.powi(k)).collect()
}

impl BoundaryGenerator {
    pub fn new(label: impl Into<String>, base: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryGenerator { label: label.into(), base: Arc::new(base), multiples: default_multiples() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.base)(x)
    }

    /// `cH` as a little-h candidate.
    pub fn multiple(&self, c: f64) -> LittleH {
        let base = self.base.clone();
        LittleH { label: format!("{c}*{}", self.label), f: Arc::new(move |x| c * base(x)) }
    }

    /// `k H`, a different generator of the same class.
    pub fn scaled(&self, k: f64) -> BoundaryGenerator {
        let base = self.base.clone();
        BoundaryGenerator {
            label: format!("{k}*{}", self.label),
            base: Arc::new(move |x| k * base(x)),
            multiples: self.multiples.clone(),
        }
    }

    /// Multiples with `cH(x) < x/2` at every point of the last three decades.
    pub fn usable_multiples(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let idx = last_decades(xs);
        self.multiples.iter().partition(|&&c| idx.iter().all(|&i| c * self.eval(xs[i]) < xs[i] / 2.0))
    }
}

/// Grid used for little-h style limits: one point per decade, `1e2..1e40`.
pub fn asymptotic_grid() -> Vec<f64> {
    decade_grid(2, 40)
}

/// Grid for weak equivalence, `1e2..1e8`.
pub fn weak_equiv_grid() -> Vec<f64> {
    decade_grid(2, 8)
}

/// True when `x/4` already satisfies the long-tail insensitivity, which only
/// happens for slowly varying tails.
pub fn is_slowly_varying(dist: &dyn TailDistribution) -> bool {
    let xs = decade_grid(2, 300);
    let h = LittleH::power(0.25, 1.0);
    is_little_h(dist, &h, &xs).map(|v| v.passed()).unwrap_or(false)
}

pub fn boundary_generator(dist: Arc<dyn TailDistribution>) -> Result<BoundaryGenerator> {
    if is_slowly_varying(dist.as_ref()) {
        return Err(Error::NoBoundaryClass(dist.label()));
    }
    let label = format!("1/q[{}]", dist.label());
    let lower = dist.support_lower();
    let d = dist.clone();
    Ok(BoundaryGenerator::new(label, move |x| {
        if x <= lower {
            return 0.0;
        }
        match hazard_rate_at(d.as_ref(), x) {
            Ok(q) if q > 0.0 => 1.0 / q,
            _ => f64::INFINITY,
        }
    }))
}

/// Decides `F̄(x - h(x)) / F̄(x) → 1` on the grid.
pub fn is_little_h(dist: &dyn TailDistribution, h: &LittleH, xs: &[f64]) -> Result<LimitVerdict> {
    let decades = xs.last().zip(xs.first()).map_or(0.0, |(a, b)| (a / b).log10());
    if decades < 6.0 - 1e-9 || *xs.last().unwrap_or(&0.0) < 1e6 {
        return Err(Error::Precondition("grid must span 6 decades and reach 1e6".into()));
    }
    h.validate(xs)?;
    let values: Vec<f64> = xs.iter().map(|&x| dist.log_tail_shift(x, h.eval(x)).exp()).collect();
    Ok(judge_values(&format!("tail(x-{})/tail(x)", h.label), xs, &values, 1.0, LimitRule::default()))
}

/// Weak equivalence on the last three decades of `xs`: ratio inside
/// `[1/100, 100]` and log-ratio slope against `ln x` below 0.05 in size.
pub fn weak_equiv(f: &dyn Fn(f64) -> f64, g: &dyn Fn(f64) -> f64, xs: &[f64]) -> bool {
    const K: f64 = 100.0;
    const DRIFT: f64 = 0.05;
    let idx = last_decades(xs);
    let lx: Vec<f64> = idx.iter().map(|&i| xs[i].ln()).collect();
    let mut lr = Vec::with_capacity(idx.len());
    for &i in &idx {
        let (a, b) = (f(xs[i]), g(xs[i]));
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return false;
        }
        let r = a / b;
        if !(1.0 / K..=K).contains(&r) {
            return false;
        }
        lr.push(r.ln());
    }
    ls_slope(&lx, &lr).abs() < DRIFT
}

/// `h = o(H)` on the asymptotic grid, with the same tolerance as
/// [`is_little_h`] so the two criteria can be compared.
pub fn membership_via_boundary(dist: Arc<dyn TailDistribution>, h: &LittleH) -> Result<bool> {
    let gen = boundary_generator(dist)?;
    Ok(membership_given(&gen, h, &asymptotic_grid()).passed())
}

pub fn membership_given(gen: &BoundaryGenerator, h: &LittleH, xs: &[f64]) -> LimitVerdict {
    let values: Vec<f64> = xs.iter().map(|&x| h.eval(x) / gen.eval(x)).collect();
    judge_values(&format!("{}/H", h.label), xs, &values, 0.0, LimitRule::with_zero_tol(1e-3))
}

/// Battery of test functions mixing powers, logs and products.
pub fn battery() -> Vec<LittleH> {
    vec![
        LittleH::log_power(1.0, 1.0),
        LittleH::log_power(1.0, 2.0),
        LittleH::log_power(0.1, 3.0),
        LittleH::power(1.0, 0.1),
        LittleH::power(1.0, 0.25),
        LittleH::power(1.0, 0.5),
        LittleH::power(1.0, 0.75),
        LittleH::power(0.5, 0.9),
        LittleH::power_log(1.0, 0.25, 1.0),
        LittleH::power_log(1.0, 0.5, 1.0),
        LittleH::power_log(1.0, 1.0, -2.0),
        LittleH::power(0.25, 1.0),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct BatteryRow {
    pub h: String,
    pub little_h: bool,
    pub membership: bool,
}

/// Runs [`battery`] through both criteria.
pub fn equivalence_battery(dist: Arc<dyn TailDistribution>) -> Result<Vec<BatteryRow>> {
    let gen = boundary_generator(dist.clone())?;
    let xs = asymptotic_grid();
    battery()
        .into_iter()
        .map(|h| {
            let lh = is_little_h(dist.as_ref(), &h, &xs)?.passed();
            let mem = membership_given(&gen, &h, &xs).passed();
            Ok(BatteryRow { h: h.label.clone(), little_h: lh, membership: mem })
        })
        .collect()
}
