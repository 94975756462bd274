//! Conditionally independent models: a latent variable `G` plus, for each
//! index `i`, the conditional law of `X_i` given `G`.
//!
//! Indices are 0-based throughout (`X_1` of the usual notation is `i = 0`).

mod additive_shock;
mod discount_product;
mod lognormal_copula;
mod moving_average;
mod pareto_mixture;
mod weibull_mixture;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use additive_shock::AdditiveShock;
pub use discount_product::{DiscountProduct, ProductTails};
pub use lognormal_copula::LognormalCopula;
pub use moving_average::MovingAverage;
pub use pareto_mixture::ParetoMixture;
pub use weibull_mixture::WeibullMixture;

use serde::{Deserialize, Serialize};

use crate::boundary::{boundary_generator, BoundaryGenerator};
use crate::conditions::BoundingSpec;
use crate::dist::{Law, TailDistribution};
use crate::error::{Error, Result};
use crate::integrate::{integrate_pieces_auto, QuadResult};
use crate::quadrature::{conv_tail2, p1_independent};
use crate::rng::SimRng;

/// One draw of the latent variable. Its meaning is model specific.
pub type Latent = Vec<f64>;

pub trait CondIndepModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Number of summands the model defines.
    fn n_max(&self) -> usize;

    fn sample_latent(&self, rng: &mut SimRng) -> Latent;

    /// Latent draw under a proposal aimed at level `x`, with its likelihood
    /// ratio. Only models that need it for rare events override this.
    fn sample_latent_biased(&self, _x: f64, rng: &mut SimRng) -> (Latent, f64) {
        (self.sample_latent(rng), 1.0)
    }

    /// `P(X_i > x | G)`.
    fn cond_tail(&self, i: usize, x: f64, g: &Latent) -> f64;

    /// `P(X_i <= x | G)`.
    fn cond_cdf(&self, i: usize, x: f64, g: &Latent) -> f64 {
        1.0 - self.cond_tail(i, x, g)
    }

    fn cond_sample(&self, i: usize, g: &Latent, rng: &mut SimRng) -> f64;

    /// A draw of `X_i` given `G` and `X_i > x`, where the model can do it
    /// exactly. `None` when unsupported or `P(X_i > x | G) = 0`.
    fn cond_sample_above(&self, _i: usize, _x: f64, _g: &Latent, _rng: &mut SimRng) -> Option<f64> {
        None
    }

    /// Conditional law as a named family, when it is one.
    fn cond_law(&self, _i: usize, _g: &Latent) -> Option<Law> {
        None
    }

    /// The reference tail `F̄`.
    fn reference(&self) -> Arc<dyn TailDistribution>;

    /// `c_i = lim P(X_i > x) / F̄(x)`.
    fn c(&self) -> Vec<f64>;

    fn bounding(&self) -> BoundingSpec;

    /// Whether `g` lies in `B_i(x)`.
    fn in_bounding_set(&self, i: usize, x: f64, g: &Latent) -> bool;

    fn real_valued(&self) -> bool {
        false
    }

    /// `P(X_i > x)`.
    fn marginal_tail(&self, i: usize, x: f64) -> f64;

    /// 200 latent values spaced by quantiles of the latent law.
    fn latent_grid(&self) -> Vec<Latent>;

    /// `E f(G)` by quadrature, for one-dimensional latents.
    fn latent_expectation(&self, _f: &dyn Fn(&Latent) -> f64, _rel: f64) -> Option<QuadResult> {
        None
    }

    fn boundary(&self) -> Result<BoundaryGenerator> {
        boundary_generator(self.reference())
    }

    /// Parameters, echoed in reports.
    fn params(&self) -> BTreeMap<String, serde_json::Value>;
}

pub(crate) const LATENT_GRID: usize = 200;

/// Midpoint quantile levels `(k + 1/2) / 200`.
pub(crate) fn grid_levels() -> impl Iterator<Item = f64> {
    (0..LATENT_GRID).map(|k| (k as f64 + 0.5) / LATENT_GRID as f64)
}

/// `E f(Q(U))` for `U ~ U(0,1)` with breakpoints refined towards both ends.
pub(crate) fn quantile_expectation(f: impl Fn(f64) -> f64, rel: f64) -> QuadResult {
    let mut pts = vec![0.0];
    for k in (1..=16).rev() {
        pts.push(10f64.powi(-k));
    }
    pts.extend([0.25, 0.5, 0.75]);
    for k in 1..=15 {
        pts.push(1.0 - 10f64.powi(-k));
    }
    pts.push(1.0);
    integrate_pieces_auto(f, &pts, rel)
}

/// Standard normal quantile, accurate in both tails.
pub(crate) fn normal_quantile(u: f64) -> f64 {
    let unit = Law::LogNormal { mu: 0.0, sigma: 1.0 };
    if u < 0.5 {
        -unit.quantile_from_tail(u).expect("u in (0, 0.5)").ln()
    } else {
        unit.quantile_from_tail(1.0 - u).expect("u in [0.5, 1)").ln()
    }
}

/// Quadrature values of the two-summand objects at `x`, for models with a
/// one-dimensional latent and conditional laws in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPoint {
    pub x: f64,
    /// `P(X_1 + X_2 > x)` from the conditional convolution.
    pub p_sum: f64,
    /// `P(X_1 ∨ X_2 <= x, X_1 + X_2 > x)`
    pub p1: f64,
    /// `P(X_1 ∧ X_2 > x)`
    pub p2: f64,
    pub t1: f64,
    pub t2: f64,
    pub err: f64,
}

pub fn decomposition_quadrature(model: &dyn CondIndepModel, x: f64, rel: f64) -> Result<DecompositionPoint> {
    if model.real_valued() {
        return Err(Error::Unsupported(format!(
            "{}: quadrature decomposition needs non-negative summands",
            model.name()
        )));
    }
    let probe = model.latent_grid().remove(0);
    if model.cond_law(0, &probe).is_none() || model.latent_expectation(&|_| 0.0, rel).is_none() {
        return Err(Error::Unsupported(format!("{}: no one-dimensional latent quadrature", model.name())));
    }
    let laws = |g: &Latent| (model.cond_law(0, g).unwrap(), model.cond_law(1, g).unwrap());
    let e = |f: &dyn Fn(&Latent) -> f64| model.latent_expectation(f, rel).unwrap();
    let t1 = e(&|g| model.cond_tail(0, x, g));
    let t2 = e(&|g| model.cond_tail(1, x, g));
    let p2 = e(&|g| model.cond_tail(0, x, g) * model.cond_tail(1, x, g));
    let p1 = e(&|g| {
        let (a, b) = laws(g);
        p1_independent(&a, &b, x).value
    });
    let p_sum = e(&|g| {
        let (a, b) = laws(g);
        conv_tail2(&a, &b, x).map(|r| r.value).unwrap_or(f64::NAN)
    });
    Ok(DecompositionPoint {
        x,
        p_sum: p_sum.value,
        p1: p1.value,
        p2: p2.value,
        t1: t1.value,
        t2: t2.value,
        err: t1.abs_error_est + t2.abs_error_est + p1.abs_error_est + p2.abs_error_est + p_sum.abs_error_est,
    })
}

/// Named presets with default parameters, addressable from configuration.
pub const PRESETS: [&str; 6] =
    ["additive_shock", "pareto_mixture", "weibull_mixture", "discount_product", "lognormal_copula", "moving_average"];

fn num(params: &BTreeMap<String, serde_json::Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| Error::Config(format!("parameter {key} must be a number"))),
    }
}

fn count(params: &BTreeMap<String, serde_json::Value>, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| Error::Config(format!("parameter {key} must be a non-negative integer"))),
    }
}

fn list(params: &BTreeMap<String, serde_json::Value>, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    match params.get(key) {
        None => Ok(default.to_vec()),
        Some(serde_json::Value::Array(a)) => {
            a.iter().map(|v| v.as_f64().ok_or_else(|| Error::Config(format!("{key} must hold numbers")))).collect()
        }
        Some(_) => Err(Error::Config(format!("parameter {key} must be a list"))),
    }
}

/// Builds a preset by name from a parameter map; missing keys take defaults.
pub fn from_preset(name: &str, params: &BTreeMap<String, serde_json::Value>) -> Result<Arc<dyn CondIndepModel>> {
    let allowed: &[&str] = match name {
        "additive_shock" => &["alpha", "beta", "n"],
        "pareto_mixture" => &["n"],
        "weibull_mixture" => &["a", "b", "gamma", "n"],
        "discount_product" => &["xi_alpha", "eta", "n"],
        "lognormal_copula" => &["s", "mu", "sigma"],
        "moving_average" => &["alpha", "beta", "n"],
        _ => return Err(Error::Config(format!("unknown model {name}; expected one of {}", PRESETS.join(", ")))),
    };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Config(format!("{name} has no parameter {k}")));
    }
    Ok(match name {
        "additive_shock" => {
            Arc::new(AdditiveShock::new(num(params, "alpha", 1.0)?, num(params, "beta", 2.0)?, count(params, "n", 2)?)?)
        }
        "pareto_mixture" => Arc::new(ParetoMixture::new(count(params, "n", 2)?)?),
        "weibull_mixture" => Arc::new(WeibullMixture::new(
            num(params, "a", 0.0)?,
            num(params, "b", 1.0)?,
            num(params, "gamma", 1.0)?,
            count(params, "n", 2)?,
        )?),
        "discount_product" => {
            let eta = match params.get("eta") {
                None => Law::Weibull { gamma: 1.0, beta: 0.5 },
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("eta: {e}")))?,
            };
            Arc::new(DiscountProduct::new(num(params, "xi_alpha", 1.0)?, eta, count(params, "n", 3)?)?)
        }
        "lognormal_copula" => Arc::new(LognormalCopula::new(
            list(params, "s", &[1.0, 1.0])?,
            list(params, "mu", &[0.0, 0.0])?,
            list(params, "sigma", &[1.0, 1.0])?,
        )?),
        _ => {
            Arc::new(MovingAverage::new(num(params, "alpha", 2.0)?, num(params, "beta", 1.5)?, count(params, "n", 2)?)?)
        }
    })
}

pub(crate) fn check_n(n: usize, max: usize) -> Result<()> {
    if n == 0 || n > max {
        return Err(Error::Config(format!("n must be in 1..={max}, got {n}")));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::stream;

    pub(crate) fn all_models() -> Vec<Arc<dyn CondIndepModel>> {
        let none = BTreeMap::new();
        let mut v: Vec<Arc<dyn CondIndepModel>> = PRESETS.iter().map(|p| from_preset(p, &none).unwrap()).collect();
        v.push(Arc::new(WeibullMixture::new(0.2, 1.0, 1.0, 2).unwrap()));
        v.push(Arc::new(AdditiveShock::new(2.0, 1.0, 2).unwrap()));
        v
    }

    fn x_grid() -> Vec<f64> {
        crate::verdict::grid(10.0, 1e8, LATENT_GRID, true)
    }

    #[test]
    fn bounding_inequality_holds_exactly_on_the_grid() {
        for m in all_models() {
            let b = m.bounding();
            let f = m.reference();
            for x in x_grid().into_iter().filter(|&x| x >= b.valid_from) {
                let cap = (b.log_r(x) + f.log_tail(x)).exp();
                for g in m.latent_grid() {
                    for i in 0..m.n_max() {
                        let lhs = if m.in_bounding_set(i, x, &g) { m.cond_tail(i, x, &g) } else { 0.0 };
                        assert!(lhs <= cap, "{} i={i} x={x} g={g:?}: {lhs} > {cap}", m.name());
                    }
                }
            }
        }
    }

    #[test]
    fn cond_tail_is_a_tail() {
        for m in all_models() {
            for g in m.latent_grid().iter().step_by(20) {
                for i in 0..m.n_max() {
                    let mut prev = 1.0;
                    for x in crate::verdict::grid(-10.0, 1e6, 300, false) {
                        let t = m.cond_tail(i, x, g);
                        assert!((0.0..=1.0).contains(&t) && t <= prev, "{} i={i} x={x}", m.name());
                        prev = t;
                    }
                }
            }
        }
    }

    #[test]
    fn total_probability_at_deciles() {
        let reps = 100_000;
        for m in all_models() {
            for i in 0..m.n_max().min(4) {
                let mut xs: Vec<f64> = (0..reps)
                    .map(|r| {
                        let mut rng = stream(11, r);
                        let g = m.sample_latent(&mut rng);
                        m.cond_sample(i, &g, &mut rng)
                    })
                    .collect();
                xs.sort_by(f64::total_cmp);
                for d in 1..10 {
                    let x = xs[d * reps as usize / 10];
                    let vals: Vec<f64> = (0..reps)
                        .map(|r| {
                            let mut rng = stream(12, r);
                            m.cond_tail(i, x, &m.sample_latent(&mut rng))
                        })
                        .collect();
                    let mean = vals.iter().sum::<f64>() / reps as f64;
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
                    let se = (var / reps as f64).sqrt();
                    let exact = m.marginal_tail(i, x);
                    assert!(
                        (mean - exact).abs() <= 4.0 * se + 1e-12,
                        "{} i={i} decile {d}: {mean} vs {exact} (se {se})",
                        m.name()
                    );
                }
            }
        }
    }

    #[test]
    fn summands_are_conditionally_uncorrelated() {
        let reps = 100_000;
        for m in all_models() {
            let g = m.latent_grid()[LATENT_GRID / 2].clone();
            let mut rng = stream(5, 0);
            let pairs: Vec<(f64, f64)> = (0..reps)
                .map(|_| (m.cond_sample(0, &g, &mut rng).min(1e3), m.cond_sample(1, &g, &mut rng).min(1e3)))
                .collect();
            let n = reps as f64;
            let (ma, mb) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
            let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
            let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
            let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
            if va == 0.0 || vb == 0.0 {
                continue;
            }
            let corr = cov / (va * vb).sqrt();
            assert!(corr.abs() < 4.0 / n.sqrt(), "{}: corr {corr}", m.name());
        }
    }

    #[test]
    fn presets_reject_unknown_names_and_keys() {
        let none = BTreeMap::new();
        assert!(matches!(from_preset("nope", &none), Err(Error::Config(_))));
        let mut p = BTreeMap::new();
        p.insert("zeta".to_string(), serde_json::json!(1.0));
        assert!(matches!(from_preset("pareto_mixture", &p), Err(Error::Config(_))));
    }

    #[test]
    fn quadrature_decomposition_is_consistent() {
        for m in all_models() {
            let Ok(d) = decomposition_quadrature(m.as_ref(), 1e3, 1e-8) else { continue };
            let rhs = d.t1 + d.t2 - d.p2 + d.p1;
            assert!((d.p_sum - rhs).abs() < 1e-6 * d.p_sum, "{}: {} vs {rhs}", m.name(), d.p_sum);
            assert!((d.t1 - m.marginal_tail(0, 1e3)).abs() < 1e-7 * d.t1, "{}", m.name());
        }
    }

    #[test]
    fn normal_quantile_both_tails() {
        for u in [1e-12, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-12] {
            let z = normal_quantile(u);
            let back = crate::dist::normal_tail(-z);
            assert!((back - u).abs() < 1e-12 * u.max(1e-3), "{u}");
        }
    }
}
