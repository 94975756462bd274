use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use super::{check_n, grid_levels, quantile_expectation, CondIndepModel, Latent};
use crate::conditions::BoundingSpec;
use crate::dist::{Law, TailDistribution};
use crate::error::{Error, Result};
use crate::integrate::QuadResult;
use crate::quadrature::conv_tail2;
use crate::rng::{open_uniform, SimRng};

/// `X_i = ξ_i + η` with `ξ_i ~ Pareto(α)` i.i.d. and a common shock
/// `η ~ Pareto(β)`; the latent variable is `η`.
#[derive(Debug, Clone)]
pub struct AdditiveShock {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
}

impl AdditiveShock {
    pub fn new(alpha: f64, beta: f64, n: usize) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Config(format!("alpha and beta must be positive, got {alpha}, {beta}")));
        }
        if alpha == beta {
            return Err(Error::Unsupported("additive shock needs alpha != beta".into()));
        }
        check_n(n, 64)?;
        Ok(AdditiveShock { alpha, beta, n })
    }

    fn xi(&self) -> Law {
        Law::pareto(self.alpha)
    }

    fn eta(&self) -> Law {
        Law::pareto(self.beta)
    }
}

impl CondIndepModel for AdditiveShock {
    fn name(&self) -> &'static str {
        "additive_shock"
    }

    fn n_max(&self) -> usize {
        self.n
    }

    fn sample_latent(&self, rng: &mut SimRng) -> Latent {
        vec![open_uniform(rng).powf(-1.0 / self.beta)]
    }

    fn cond_tail(&self, _i: usize, x: f64, g: &Latent) -> f64 {
        let y = x - g[0];
        if y <= 1.0 {
            1.0
        } else {
            y.powf(-self.alpha)
        }
    }

    fn cond_sample(&self, _i: usize, g: &Latent, rng: &mut SimRng) -> f64 {
        g[0] + open_uniform(rng).powf(-1.0 / self.alpha)
    }

    fn cond_law(&self, _i: usize, g: &Latent) -> Option<Law> {
        Some(Law::Shifted { shift: g[0], inner: Box::new(self.xi()) })
    }

    fn reference(&self) -> Arc<dyn TailDistribution> {
        Arc::new(Law::pareto(self.alpha.min(self.beta)))
    }

    fn c(&self) -> Vec<f64> {
        vec![1.0; self.n]
    }

    /// `B(x) = {η <= x/2}`, `r(x) = 2^β`.
    fn bounding(&self) -> BoundingSpec {
        let beta = self.beta;
        BoundingSpec::new(
            "eta <= x/2",
            move |_| beta * std::f64::consts::LN_2,
            move |x| if x > 2.0 { beta * (2.0 / x).ln() } else { 0.0 },
        )
    }

    fn in_bounding_set(&self, _i: usize, x: f64, g: &Latent) -> bool {
        g[0] <= x / 2.0
    }

    fn marginal_tail(&self, _i: usize, x: f64) -> f64 {
        conv_tail2(&self.xi(), &self.eta(), x).map(|r| r.value).unwrap_or(f64::NAN)
    }

    fn latent_grid(&self) -> Vec<Latent> {
        grid_levels().map(|u| vec![u.powf(-1.0 / self.beta)]).collect()
    }

    fn latent_expectation(&self, f: &dyn Fn(&Latent) -> f64, rel: f64) -> Option<QuadResult> {
        Some(quantile_expectation(|u| if u <= 0.0 { 0.0 } else { f(&vec![u.powf(-1.0 / self.beta)]) }, rel))
    }

    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("alpha".into(), json!(self.alpha)),
            ("beta".into(), json!(self.beta)),
            ("n".into(), json!(self.n)),
        ])
    }
}
