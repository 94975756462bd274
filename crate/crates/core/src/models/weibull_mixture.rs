use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use super::{check_n, grid_levels, CondIndepModel, Latent};
use crate::boundary::BoundaryGenerator;
use crate::conditions::BoundingSpec;
use crate::dist::{pow_diff, Law, TailCurve, TailDistribution};
use crate::error::{Error, Result};
use crate::expint::expint_e1;
use crate::integrate::{integrate_pieces_auto, two_sided_breaks, QuadResult};
use crate::rng::{open_uniform, SimRng};

/// `P(X_i > x | β) = exp(-γ x^β)` with `β ~ U(a, b)`.
///
/// For `a > 0` the reference is the asymptotic form of the mixture tail;
/// for `a = 0` the mixture is slowly varying with `F̄(x) ~ E1(γ) / (b ln x)`.
#[derive(Debug, Clone)]
pub struct WeibullMixture {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub n: usize,
    e1_gamma: f64,
}

impl WeibullMixture {
    pub fn new(a: f64, b: f64, gamma: f64, n: usize) -> Result<Self> {
        if !(a >= 0.0 && b > a && gamma > 0.0) {
            return Err(Error::Config(format!("need 0 <= a < b and gamma > 0, got a={a}, b={b}, gamma={gamma}")));
        }
        if b > 1.0 {
            return Err(Error::Unsupported(format!("b = {b} > 1")));
        }
        check_n(n, 64)?;
        Ok(WeibullMixture { a, b, gamma, n, e1_gamma: expint_e1(gamma)? })
    }

    pub fn slowly_varying(&self) -> bool {
        self.a == 0.0
    }

    pub fn marginal_law(&self) -> Law {
        Law::WeibullMixture { a: self.a, b: self.b, gamma: self.gamma }
    }

    fn reference_curve(&self) -> TailCurve {
        let (a, b, g) = (self.a, self.b, self.gamma);
        if self.slowly_varying() {
            let k = self.e1_gamma / b;
            return TailCurve::new(format!("{k:.5}/ln x"), k.exp(), move |x| (k / x.ln()).ln())
                .with_ratio(|_x, y, d| -((d / y).ln_1p() / y.ln()).ln_1p())
                .with_log_density(move |x| k.ln() - x.ln() - 2.0 * x.ln().ln());
        }
        let c = ((b - a) * g).ln();
        TailCurve::new(format!("exp(-{g}x^{a})/(({b}-{a}){g}x^{a} ln x)"), 1.0, move |x| {
            let l = x.ln();
            -g * x.powf(a) - c - a * l - l.ln()
        })
        .with_ratio(move |x, y, d| {
            let lr = (d / y).ln_1p();
            -g * pow_diff(x, d, a) - a * lr - (lr / y.ln()).ln_1p()
        })
        .with_log_density(move |x| {
            let l = x.ln();
            let q = a * g * x.powf(a - 1.0) + a / x + 1.0 / (x * l);
            q.ln() + g * -x.powf(a) - c - a * l - l.ln()
        })
    }
}

impl CondIndepModel for WeibullMixture {
    fn name(&self) -> &'static str {
        "weibull_mixture"
    }

    fn n_max(&self) -> usize {
        self.n
    }

    fn sample_latent(&self, rng: &mut SimRng) -> Latent {
        vec![self.b - (self.b - self.a) * open_uniform(rng)]
    }

    fn cond_tail(&self, _i: usize, x: f64, g: &Latent) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-self.gamma * x.powf(g[0])).exp()
        }
    }

    fn cond_sample(&self, _i: usize, g: &Latent, rng: &mut SimRng) -> f64 {
        (-open_uniform(rng).ln() / self.gamma).powf(1.0 / g[0])
    }

    fn cond_law(&self, _i: usize, g: &Latent) -> Option<Law> {
        Some(Law::Weibull { gamma: self.gamma, beta: g[0] })
    }

    fn reference(&self) -> Arc<dyn TailDistribution> {
        Arc::new(self.reference_curve())
    }

    fn c(&self) -> Vec<f64> {
        vec![1.0; self.n]
    }

    /// `B = Ω` with `r(x) = γ(b-a) x^a ln x`; for `a = 0` this `r` is not
    /// large enough, and `r(x) = e^{-γ} b ln x / E1(γ)` is used instead.
    fn bounding(&self) -> BoundingSpec {
        let (a, b, g) = (self.a, self.b, self.gamma);
        if self.slowly_varying() {
            let c = -g + b.ln() - self.e1_gamma.ln();
            return BoundingSpec::omega("omega", move |x: f64| c + x.ln().ln());
        }
        BoundingSpec::omega("omega", move |x: f64| (g * (b - a)).ln() + a * x.ln() + x.ln().ln())
            .with_valid_from(std::f64::consts::E)
    }

    fn in_bounding_set(&self, _i: usize, _x: f64, _g: &Latent) -> bool {
        true
    }

    fn marginal_tail(&self, _i: usize, x: f64) -> f64 {
        self.marginal_law().tail(x)
    }

    fn latent_grid(&self) -> Vec<Latent> {
        grid_levels().map(|u| vec![self.a + (self.b - self.a) * u]).collect()
    }

    fn latent_expectation(&self, f: &dyn Fn(&Latent) -> f64, rel: f64) -> Option<QuadResult> {
        let pts = two_sided_breaks(self.a, self.b, 1e-6 * (self.b - self.a));
        let mut r = integrate_pieces_auto(|beta| f(&vec![beta]), &pts, rel);
        r.value /= self.b - self.a;
        r.abs_error_est /= self.b - self.a;
        Some(r)
    }

    fn boundary(&self) -> Result<BoundaryGenerator> {
        if self.slowly_varying() {
            return Err(Error::NoBoundaryClass(self.reference_curve().label));
        }
        let (a, g) = (self.a, self.gamma);
        Ok(BoundaryGenerator::new(format!("x^{}/({a}*{g})", 1.0 - a), move |x: f64| x.powf(1.0 - a) / (a * g)))
    }

    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("a".into(), json!(self.a)),
            ("b".into(), json!(self.b)),
            ("gamma".into(), json!(self.gamma)),
            ("n".into(), json!(self.n)),
        ])
    }
}
