use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use super::{check_n, grid_levels, CondIndepModel, Latent};
use crate::conditions::BoundingSpec;
use crate::dist::{Law, TailDistribution};
use crate::error::Result;
use crate::integrate::{integrate, QuadResult, Tolerance};
use crate::rng::{open_uniform, SimRng};

/// `P(X_i > x | η) = (1+x)^-η` with `η ~ U(1, 2)`.
#[derive(Debug, Clone)]
pub struct ParetoMixture {
    pub n: usize,
}

impl ParetoMixture {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n, 64)?;
        Ok(ParetoMixture { n })
    }
}

impl CondIndepModel for ParetoMixture {
    fn name(&self) -> &'static str {
        "pareto_mixture"
    }

    fn n_max(&self) -> usize {
        self.n
    }

    fn sample_latent(&self, rng: &mut SimRng) -> Latent {
        vec![2.0 - open_uniform(rng)]
    }

    fn cond_tail(&self, _i: usize, x: f64, g: &Latent) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-g[0] * x.ln_1p()).exp()
        }
    }

    fn cond_sample(&self, _i: usize, g: &Latent, rng: &mut SimRng) -> f64 {
        (-open_uniform(rng).ln() / g[0]).exp_m1()
    }

    fn cond_law(&self, _i: usize, g: &Latent) -> Option<Law> {
        Some(Law::Lomax { alpha: g[0] })
    }

    fn reference(&self) -> Arc<dyn TailDistribution> {
        Arc::new(Law::BoundedParetoMixture)
    }

    fn c(&self) -> Vec<f64> {
        vec![1.0; self.n]
    }

    /// `B = Ω`, `r(x) = 2 ln(1+x)`.
    fn bounding(&self) -> BoundingSpec {
        BoundingSpec::omega("omega", |x| (2.0 * x.ln_1p()).ln())
    }

    fn in_bounding_set(&self, _i: usize, _x: f64, _g: &Latent) -> bool {
        true
    }

    fn marginal_tail(&self, _i: usize, x: f64) -> f64 {
        Law::BoundedParetoMixture.tail(x)
    }

    fn latent_grid(&self) -> Vec<Latent> {
        grid_levels().map(|u| vec![1.0 + u]).collect()
    }

    fn latent_expectation(&self, f: &dyn Fn(&Latent) -> f64, rel: f64) -> Option<QuadResult> {
        Some(integrate(|eta| f(&vec![eta]), 1.0, 2.0, Tolerance::rel(rel)))
    }

    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([("n".into(), json!(self.n))])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_one_is_lomax_one() {
        let m = ParetoMixture::new(2).unwrap();
        for x in [1.0, 10.0, 1e5] {
            assert!((m.cond_tail(0, x, &vec![1.0]) - 1.0 / (1.0 + x)).abs() < 1e-16);
        }
    }

    #[test]
    fn ratio_bound_two_log() {
        let m = ParetoMixture::new(2).unwrap();
        for x in crate::verdict::grid(1.0 + 1e-9, 1e10, 100, true) {
            let f = m.marginal_tail(0, x);
            for g in m.latent_grid() {
                assert!(m.cond_tail(0, x, &g) / f <= 2.0 * x.ln_1p() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn marginal_times_x_log_tends_to_one() {
        let m = ParetoMixture::new(2).unwrap();
        let v: Vec<f64> = [1e4, 1e6, 1e8, 1e10].iter().map(|&x| m.marginal_tail(0, x) * x * x.ln_1p()).collect();
        assert!(v.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs()));
        assert!((v[3] - 1.0).abs() < 1e-9);
    }
}
