use std::collections::BTreeMap;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::{grid_levels, normal_quantile, CondIndepModel, Latent};
use crate::conditions::BoundingSpec;
use crate::dist::{ln_normal_tail, normal_log_density, normal_tail, Law, TailDistribution};
use crate::error::{Error, Result};
use crate::integrate::{integrate_pieces_auto, QuadResult};
use crate::rng::SimRng;

/// `X_i = exp(s_i W + μ_i + σ_i N_i)` with a common standard normal `W`
/// and independent standard normals `N_i`; the latent variable is `W`.
#[derive(Debug, Clone)]
pub struct LognormalCopula {
    pub s: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// heaviest location `max μ_i`
    pub mu_star: f64,
    /// `max σ_i`
    pub sigma_z: f64,
    /// reference scale, `σ² = max s_i² + max σ_i²`
    pub sigma_ref: f64,
    pub delta: f64,
    c: Vec<f64>,
}

impl LognormalCopula {
    pub fn new(s: Vec<f64>, mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if s.is_empty() || s.len() != mu.len() || s.len() != sigma.len() {
            return Err(Error::Config("s, mu and sigma must be non-empty and of equal length".into()));
        }
        if sigma.iter().any(|&v| !(v > 0.0)) || s.iter().chain(&mu).any(|v| !v.is_finite()) {
            return Err(Error::Config("need finite s, mu and sigma > 0".into()));
        }
        let s_max = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sigma_z = sigma.iter().fold(0.0f64, |m, &v| m.max(v));
        let mu_star = mu.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let var = s_max * s_max + sigma_z * sigma_z;
        let sigma_ref = var.sqrt();
        let lower = (s_max / sigma_ref).max(1.0 - sigma_z * sigma_z / var);
        if lower >= 1.0 {
            return Err(Error::Config(format!("admissible delta interval ({lower}, 1) is empty")));
        }
        let delta = 0.5 * (lower + 1.0);
        let c: Vec<f64> = (0..s.len())
            .map(|i| {
                let v = s[i] * s[i] + sigma[i] * sigma[i];
                if mu[i] == mu_star && (v - var).abs() <= 1e-12 * var {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        if c.iter().all(|&v| v == 0.0) {
            return Err(Error::Config(format!(
                "no summand attains both max mu = {mu_star} and max s^2 + sigma^2 = {var}; every c_i is 0"
            )));
        }
        Ok(LognormalCopula { s, mu, sigma, mu_star, sigma_z, sigma_ref, delta, c })
    }

    pub fn marginal_law(&self, i: usize) -> Law {
        Law::LogNormal { mu: self.mu[i], sigma: self.s[i].hypot(self.sigma[i]) }
    }

    /// `x` from which the bound `r` holds for every summand.
    pub fn valid_from(&self) -> f64 {
        (self.mu_star.max(0.0) / (1.0 - self.delta)).exp().max(1.0)
    }
}

impl CondIndepModel for LognormalCopula {
    fn name(&self) -> &'static str {
        "lognormal_copula"
    }

    fn n_max(&self) -> usize {
        self.s.len()
    }

    fn sample_latent(&self, rng: &mut SimRng) -> Latent {
        vec![StandardNormal.sample(rng)]
    }

    fn cond_tail(&self, i: usize, x: f64, g: &Latent) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        normal_tail((x.ln() - self.s[i] * g[0] - self.mu[i]) / self.sigma[i])
    }

    fn cond_sample(&self, i: usize, g: &Latent, rng: &mut SimRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        (self.s[i] * g[0] + self.mu[i] + self.sigma[i] * z).exp()
    }

    fn cond_law(&self, i: usize, g: &Latent) -> Option<Law> {
        Some(Law::LogNormal { mu: self.s[i] * g[0] + self.mu[i], sigma: self.sigma[i] })
    }

    fn reference(&self) -> Arc<dyn TailDistribution> {
        Arc::new(Law::LogNormal { mu: self.mu_star, sigma: self.sigma_ref })
    }

    fn c(&self) -> Vec<f64> {
        self.c.clone()
    }

    /// `B_i(x) = {s_i W <= δ ln x}` (`Ω` when `s_i = 0`) and
    /// `r(x) = F̄_ξ(x^{1-δ}) / F̄(x)` with `ξ ~ LN(μ*, σ_Z²)`.
    fn bounding(&self) -> BoundingSpec {
        let (d, mu, sz, sr) = (self.delta, self.mu_star, self.sigma_z, self.sigma_ref);
        let s_max = self.s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        BoundingSpec::new(
            format!("s_i W <= {d:.4} ln x"),
            move |x: f64| {
                let l = x.ln();
                ln_normal_tail(((1.0 - d) * l - mu) / sz) - ln_normal_tail((l - mu) / sr)
            },
            move |x: f64| {
                if s_max == 0.0 {
                    f64::NEG_INFINITY
                } else if x <= 1.0 {
                    0.0
                } else {
                    ln_normal_tail(d * x.ln() / s_max)
                }
            },
        )
        .with_valid_from(self.valid_from())
    }

    fn in_bounding_set(&self, i: usize, x: f64, g: &Latent) -> bool {
        self.s[i] == 0.0 || self.s[i] * g[0] <= self.delta * x.ln()
    }

    fn marginal_tail(&self, i: usize, x: f64) -> f64 {
        self.marginal_law(i).tail(x)
    }

    fn latent_grid(&self) -> Vec<Latent> {
        grid_levels().map(|u| vec![normal_quantile(u)]).collect()
    }

    fn latent_expectation(&self, f: &dyn Fn(&Latent) -> f64, rel: f64) -> Option<QuadResult> {
        // unit pieces in the bulk, coarser ones where the density is tiny
        let outer = [18.0, 24.0, 32.0, 40.0];
        let pts: Vec<f64> = outer.iter().rev().map(|v| -v).chain((-15..=15).map(|k| k as f64)).chain(outer).collect();
        Some(integrate_pieces_auto(|w| normal_log_density(w).exp() * f(&vec![w]), &pts, rel))
    }

    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("s".into(), json!(self.s)),
            ("mu".into(), json!(self.mu)),
            ("sigma".into(), json!(self.sigma)),
        ])
    }
}
