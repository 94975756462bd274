//! One function per subcommand. Each returns the CSV table, a JSON value
//! with the full result, and the exit code.

use std::collections::BTreeMap;
use std::sync::Arc;

use bigjump::boundary::{boundary_generator, equivalence_battery, is_little_h, membership_given};
use bigjump::dist::{hazard_rate_at, Law, TailDistribution};
use bigjump::models::{from_preset, CondIndepModel};
use bigjump::simulate::{
    big_jump_decomposition, kesten_probe, mc_sum_tail, random_sum_tail, Estimator, SumQuery, TauKind, TauLaw,
};
use bigjump::verdict::{ConvergenceTable, TableRow};
use bigjump::Error;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::examples::{check_conditions, mc_grid, run_example, ExampleVerdict};
use crate::expr::parse_h;
use crate::CliError;

pub struct Outcome {
    pub table: ConvergenceTable,
    pub results: Value,
    pub exit_code: i32,
}

fn outcome(table: ConvergenceTable, results: Value) -> Outcome {
    Outcome { table, results, exit_code: 0 }
}

type Params = BTreeMap<String, Value>;

fn take(p: &mut Params, key: &str, default: f64) -> Result<f64, CliError> {
    match p.remove(key) {
        None => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| CliError::Usage(format!("parameter {key} must be a number"))),
    }
}

/// Distribution family by name with its parameters.
pub fn law_from(name: &str, params: &Params) -> Result<Law, CliError> {
    let mut p = params.clone();
    let law = match name {
        "pareto" => Law::Pareto { alpha: take(&mut p, "alpha", 1.0)?, xmin: take(&mut p, "xmin", 1.0)? },
        "weibull" => Law::Weibull { gamma: take(&mut p, "gamma", 1.0)?, beta: take(&mut p, "beta", 0.5)? },
        "lognormal" => Law::LogNormal { mu: take(&mut p, "mu", 0.0)?, sigma: take(&mut p, "sigma", 1.0)? },
        "lomax" => Law::Lomax { alpha: take(&mut p, "alpha", 1.0)? },
        "log_weibull" => Law::LogWeibull { gamma: take(&mut p, "gamma", 1.0)?, alpha: take(&mut p, "alpha", 2.0)? },
        "bounded_pareto_mixture" => Law::BoundedParetoMixture,
        "weibull_mixture" => Law::WeibullMixture {
            a: take(&mut p, "a", 0.0)?,
            b: take(&mut p, "b", 1.0)?,
            gamma: take(&mut p, "gamma", 1.0)?,
        },
        "slowly_varying" => Law::SlowlyVaryingLogTail { k: take(&mut p, "k", 1.0)? },
        _ => return Err(CliError::Usage(format!("unknown law `{name}`"))),
    };
    if let Some(k) = p.keys().next() {
        return Err(CliError::Usage(format!("unknown parameter `{k}` for law {name}")));
    }
    law.validate()?;
    Ok(law)
}

fn law_of(cfg: &RunConfig) -> Result<Law, CliError> {
    let name = cfg.law.as_deref().ok_or_else(|| CliError::Usage("`law` is required".into()))?;
    law_from(name, &cfg.params)
}

fn model_of(cfg: &RunConfig, min_n: Option<usize>) -> Result<Arc<dyn CondIndepModel>, CliError> {
    let name = cfg.model.as_deref().ok_or_else(|| CliError::Usage("`model` is required".into()))?;
    let mut params = cfg.params.clone();
    if let Some(n) = min_n {
        if name != "lognormal_copula" && !params.contains_key("n") {
            params.insert("n".into(), json!(n.max(2)));
        }
    }
    Ok(from_preset(name, &params)?)
}

fn parse_count(raw: Option<&str>) -> Result<Count, CliError> {
    let raw = raw.unwrap_or("2");
    let bad = || CliError::Usage(format!("n must be a count or kind:value, got `{raw}`"));
    let Some((kind, v)) = raw.split_once(':') else {
        return raw.parse().map(Count::N).map_err(|_| bad());
    };
    let kind = match kind {
        "geometric" => TauKind::Geometric { p: v.parse().map_err(|_| bad())? },
        "poisson" => TauKind::Poisson { lambda: v.parse().map_err(|_| bad())? },
        "fixed" => TauKind::Fixed { n: v.parse().map_err(|_| bad())? },
        _ => return Err(bad()),
    };
    Ok(Count::Tau(TauLaw::new(kind)?))
}

enum Count {
    N(usize),
    Tau(TauLaw),
}

fn estimator_of(cfg: &RunConfig) -> Result<Estimator, CliError> {
    match cfg.estimator.as_deref().unwrap_or("cond_last_step") {
        "plain" => Ok(Estimator::Plain),
        "cond_last_step" => Ok(Estimator::CondLastStep),
        e => Err(CliError::Usage(format!("unknown estimator `{e}`"))),
    }
}

pub fn dist(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let law = law_of(cfg)?;
    let xs = cfg.grid_or(8)?;
    let mut table = ConvergenceTable::default();
    let mut rows = vec![];
    for &x in &xs {
        let tail = law.tail(x);
        let hazard = hazard_rate_at(&law, x).ok();
        table.push(TableRow::exact(x, "tail", tail, 0.0, 0.0));
        if let Some(q) = hazard {
            table.push(TableRow::exact(x, "hazard_rate", q, 0.0, 0.0));
        }
        rows.push(json!({"x": x, "tail": tail, "log_tail": law.log_tail(x), "density": law.density(x), "hazard_rate": hazard}));
    }
    Ok(outcome(table, json!({"law": law.label(), "support_lower": law.support_lower(), "rows": rows})))
}

pub fn boundary(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let law: Arc<dyn TailDistribution> = Arc::new(law_of(cfg)?);
    let xs = cfg.grid_or(8)?;
    let gen = match boundary_generator(law.clone()) {
        Ok(g) => g,
        Err(Error::NoBoundaryClass(why)) => {
            eprintln!("no boundary class: {why}");
            return Ok(outcome(
                ConvergenceTable::default(),
                json!({"law": law.label(), "boundary": null, "reason": why}),
            ));
        }
        Err(e) => return Err(e.into()),
    };
    let mut table = ConvergenceTable::default();
    for &x in &xs {
        table.push(TableRow::exact(x, "H", gen.eval(x), 0.0, 0.0));
    }
    let battery = equivalence_battery(law.clone())?;
    let mut results =
        json!({"law": law.label(), "boundary": gen.label, "multiples": gen.multiples, "battery": battery});
    if let Some(src) = &cfg.h_expr {
        let h = parse_h(src)?;
        let member = membership_given(&gen, &h, &xs);
        let direct = is_little_h(law.as_ref(), &h, &xs)?;
        eprintln!("h(x) = {src}: o(H) {:?}, direct {:?}", member.verdict, direct.verdict);
        table.extend(member.table.clone());
        results["h"] = json!({"expr": src, "o_of_boundary": member, "direct": direct});
    }
    Ok(outcome(table, results))
}

pub fn check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model_of(cfg, None)?;
    let summary = check_conditions(model.as_ref(), cfg.seed, cfg.replications)?;
    let mut table = ConvergenceTable::default();
    if let Some(d3) = &summary.d3 {
        for m in &d3.per_multiple {
            for v in [&m.d3i, &m.d3ii, &m.d3iii] {
                table.extend(v.table.clone());
            }
        }
    }
    table.extend(summary.d4.table.clone());
    eprintln!(
        "{}: conditions {}; failing {:?}",
        model.name(),
        if summary.passed { "pass" } else { "fail" },
        summary.failing
    );
    let exit_code = if summary.inconclusive { 3 } else { 0 };
    Ok(Outcome { table, results: serde_json::to_value(&summary)?, exit_code })
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let count = parse_count(cfg.n.as_deref())?;
    let needed = match &count {
        Count::N(n) => *n,
        Count::Tau(t) => t.cap,
    };
    let model = model_of(cfg, Some(needed))?;
    let xs = cfg.grid_or(6)?;
    let est = estimator_of(cfg)?;
    let (table, results) = match count {
        Count::N(n) => {
            let q = SumQuery::new(model, n, xs, cfg.replications, cfg.seed).with_estimator(est);
            let t = mc_sum_tail(&q)?;
            (t.clone(), json!({"table": t}))
        }
        Count::Tau(tau) => {
            let r = random_sum_tail(model, tau, xs, cfg.replications, cfg.seed, est)?;
            (r.table.clone(), serde_json::to_value(&r)?)
        }
    };
    Ok(outcome(table, results))
}

pub fn decompose(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model_of(cfg, Some(2))?;
    let xs = match &cfg.x_grid {
        Some(g) => g.values()?,
        None => mc_grid(model.as_ref()),
    };
    let rep = big_jump_decomposition(model, &xs, cfg.replications, cfg.seed)?;
    eprintln!("big jump {}; single big jump {}", rep.big_jump, rep.single_big_jump);
    Ok(outcome(rep.table(), serde_json::to_value(&rep)?))
}

pub fn kesten(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n_max = cfg.n_max.unwrap_or(10);
    let model = model_of(cfg, Some(n_max))?;
    let xs = cfg.grid_or(4)?;
    let x0 = cfg.x0.unwrap_or(xs[0]);
    let eps = cfg.eps.unwrap_or(0.5);
    let rep = kesten_probe(model, eps, n_max, x0, &xs, cfg.replications, cfg.seed)?;
    let mut table = ConvergenceTable::default();
    for r in &rep.rows {
        let target = rep.v * (1.0 + eps).powi(r.n as i32);
        let mut row = TableRow::exact(r.x_at_sup, "sup_ratio", r.sup_ratio, 0.0, target);
        row.n_or_tau = r.n.to_string();
        table.push(row);
    }
    eprintln!("V = {:.4}, bound_ok {}, growth slope {:.4}", rep.v, rep.bound_ok, rep.growth_slope);
    Ok(outcome(table, serde_json::to_value(&rep)?))
}

pub fn examples(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ids: Vec<u8> = if cfg.ids.is_empty() { (1..=6).collect() } else { cfg.ids.clone() };
    let mut table = ConvergenceTable::default();
    let mut verdicts: Vec<ExampleVerdict> = vec![];
    for id in ids {
        let v = run_example(id, &cfg.params, cfg.seed, cfg.replications)?;
        eprintln!(
            "example {id} ({}): conclusion {:?}, expected {:?}, failing conditions {:?}{}",
            v.model,
            v.conclusion,
            v.expected,
            v.conditions.failing,
            if v.unreliable { ", UNRELIABLE" } else { "" }
        );
        for mut row in v.asymptotics.rows.clone() {
            row.n_or_tau = format!("ex{id}");
            table.push(row);
        }
        verdicts.push(v);
    }
    let exit_code = verdicts.iter().map(ExampleVerdict::exit_code).max().unwrap_or(0);
    Ok(Outcome { table, results: serde_json::to_value(&verdicts)?, exit_code })
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Dist => dist(cfg),
        Command::Boundary => boundary(cfg),
        Command::Check => check(cfg),
        Command::Simulate => simulate(cfg),
        Command::Decompose => decompose(cfg),
        Command::Kesten => kesten(cfg),
        Command::Examples => examples(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laws_by_name() {
        let p: Params = [("alpha".to_string(), json!(2.0))].into();
        assert_eq!(law_from("pareto", &p).unwrap(), Law::Pareto { alpha: 2.0, xmin: 1.0 });
        assert!(matches!(law_from("pareto", &[("beta".to_string(), json!(1))].into()), Err(CliError::Usage(_))));
        assert!(matches!(law_from("cauchy", &Params::new()), Err(CliError::Usage(_))));
        assert!(law_from("pareto", &[("alpha".to_string(), json!(-1))].into()).is_err());
    }

    #[test]
    fn counts() {
        assert!(matches!(parse_count(Some("3")), Ok(Count::N(3))));
        assert!(matches!(parse_count(Some("geometric:0.5")), Ok(Count::Tau(t)) if t.cap == 10));
        assert!(parse_count(Some("binomial:3")).is_err());
        assert!(parse_count(Some("x")).is_err());
    }
}
