//! Grids, convergence tables and the last-three-decades limit rule.

use serde::{Deserialize, Serialize};

/// `10^lo, 10^(lo+1), ..., 10^hi`.
pub fn decade_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 10f64.powi(k)).collect()
}

/// `points` values from `start` to `stop`, geometric or linear.
pub fn grid(start: f64, stop: f64, points: usize, geometric: bool) -> Vec<f64> {
    if points <= 1 {
        return vec![start];
    }
    let n = (points - 1) as f64;
    (0..points)
        .map(|k| {
            let t = k as f64 / n;
            if k + 1 == points {
                stop
            } else if geometric {
                // base 10 keeps decade points exact
                10f64.powf(start.log10() + t * (stop.log10() - start.log10()))
            } else {
                start + t * (stop - start)
            }
        })
        .collect()
}

/// Indices of the grid points lying in the last three decades.
pub fn last_decades(xs: &[f64]) -> Vec<usize> {
    let Some(&top) = xs.last() else { return vec![] };
    let cut = top / 1e3 * (1.0 - 1e-12);
    let mut idx: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= cut).collect();
    if idx.len() < 3 {
        idx = (xs.len().saturating_sub(3)..xs.len()).collect();
    }
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConvergesToTarget,
    Diverges,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub x: f64,
    pub n_or_tau: String,
    pub estimator: String,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub target: f64,
    pub ratio: f64,
    pub reliable: bool,
}

impl TableRow {
    /// Deterministic row: `se` carries the quadrature error estimate.
    pub fn exact(x: f64, label: &str, value: f64, err: f64, target: f64) -> Self {
        TableRow {
            x,
            n_or_tau: String::new(),
            estimator: label.to_string(),
            estimate: value,
            se: err,
            lo: value - err,
            hi: value + err,
            target,
            ratio: if target != 0.0 { value / target } else { value },
            reliable: value.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<TableRow>,
}

pub const CSV_HEADER: &str = "x,n_or_tau,estimator,estimate,se,lo,hi,target,ratio";

impl ConvergenceTable {
    pub fn push(&mut self, row: TableRow) {
        self.rows.push(row);
    }

    pub fn xs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.x).collect()
    }

    pub fn csv_body(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "{:e},{},{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.x, r.n_or_tau, r.estimator, r.estimate, r.se, r.lo, r.hi, r.target, r.ratio
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}", self.csv_body())
    }

    pub fn extend(&mut self, other: ConvergenceTable) {
        self.rows.extend(other.rows);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitVerdict {
    pub verdict: Verdict,
    pub table: ConvergenceTable,
    pub target: f64,
    /// Value at the largest grid point used.
    pub limit: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl LimitVerdict {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::ConvergesToTarget
    }
}

/// Tolerances for the limit rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRule {
    /// Distance to a non-zero target allowed at the last three points.
    pub tol: f64,
    /// Ceiling for the final value when the target is zero.
    pub zero_tol: f64,
    /// Multiples of the standard error used for MC tables.
    pub se_mult_final: f64,
    pub se_mult_step: f64,
}

impl Default for LimitRule {
    fn default() -> Self {
        LimitRule { tol: 1e-3, zero_tol: 1e-2, se_mult_final: 5.0, se_mult_step: 3.0 }
    }
}

impl LimitRule {
    pub fn with_zero_tol(zero_tol: f64) -> Self {
        LimitRule { zero_tol, ..Default::default() }
    }
}

/// Judges `values → target` from the last three decades of `table`,
/// reading the `ratio` column. Only rows marked reliable are used.
pub fn judge(table: ConvergenceTable, target: f64, rule: LimitRule, stochastic: bool) -> LimitVerdict {
    let mut notes = vec![];
    let usable: Vec<&TableRow> = table.rows.iter().filter(|r| r.reliable).collect();
    if usable.len() < table.rows.len() {
        notes.push(format!("{} unreliable row(s) excluded", table.rows.len() - usable.len()));
    }
    let xs: Vec<f64> = usable.iter().map(|r| r.x).collect();
    let idx = last_decades(&xs);
    if idx.len() < 3 {
        notes.push("fewer than three usable grid points".into());
        let limit = usable.last().map_or(f64::NAN, |r| r.ratio);
        return LimitVerdict { verdict: Verdict::Inconclusive, table, target, limit, notes };
    }
    let v: Vec<f64> = idx.iter().map(|&i| usable[i].ratio).collect();
    let se: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let r = usable[i];
            if stochastic && r.target != 0.0 {
                r.se / r.target.abs()
            } else if stochastic {
                r.se
            } else {
                0.0
            }
        })
        .collect();
    let last = *v.last().unwrap();
    let verdict = if target == 0.0 { zero_rule(&v, &se, rule, stochastic) } else { target_rule(&v, target, rule) };
    LimitVerdict { verdict, table, target, limit: last, notes }
}

fn slack(a: f64, b: f64, sa: f64, sb: f64, rule: LimitRule, stochastic: bool) -> f64 {
    let rounding = 1e-9 * a.abs().max(b.abs());
    if stochastic {
        rounding + rule.se_mult_step * (sa * sa + sb * sb).sqrt()
    } else {
        rounding
    }
}

fn zero_rule(v: &[f64], se: &[f64], rule: LimitRule, stochastic: bool) -> Verdict {
    let n = v.len();
    if v.iter().any(|x| x.is_nan()) {
        return Verdict::Inconclusive;
    }
    let last = v[n - 1].abs();
    let ceiling = if stochastic { rule.zero_tol.max(rule.se_mult_final * se[n - 1]) } else { rule.zero_tol };
    let non_increasing =
        (1..n).all(|k| v[k].abs() <= v[k - 1].abs() + slack(v[k], v[k - 1], se[k], se[k - 1], rule, stochastic));
    let non_decreasing =
        (1..n).all(|k| v[k].abs() + slack(v[k], v[k - 1], se[k], se[k - 1], rule, stochastic) >= v[k - 1].abs());
    // a level that has settled away from zero does not vanish either;
    // 1/ln x style decay fails this over three decades
    let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x.abs()), hi.max(x.abs())));
    let settled = lo >= SETTLED_SPREAD * hi;
    if last < ceiling && non_increasing {
        Verdict::ConvergesToTarget
    } else if last >= ceiling && (non_decreasing || settled) {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    }
}

/// Min/max over the window above which a non-zero level counts as settled.
pub const SETTLED_SPREAD: f64 = 0.9;

fn target_rule(v: &[f64], target: f64, rule: LimitRule) -> Verdict {
    let d: Vec<f64> = v.iter().map(|x| (x - target).abs()).collect();
    if d.iter().any(|x| x.is_nan()) {
        return Verdict::Inconclusive;
    }
    let n = d.len();
    // same rounding allowance as the zero rule
    let tiny = 1e-9 * target.abs();
    let approaching = (1..n).all(|k| d[k] <= d[k - 1] + tiny);
    let receding = (1..n).all(|k| d[k] + tiny >= d[k - 1]);
    if d.iter().all(|&x| x <= rule.tol) && approaching {
        Verdict::ConvergesToTarget
    } else if d[n - 1] > rule.tol && receding {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    }
}

/// Deterministic helper: build a table from `(x, value)` pairs and judge it.
pub fn judge_values(label: &str, xs: &[f64], values: &[f64], target: f64, rule: LimitRule) -> LimitVerdict {
    let mut t = ConvergenceTable::default();
    for (&x, &v) in xs.iter().zip(values) {
        t.push(TableRow::exact(x, label, v, 0.0, 0.0));
    }
    judge(t, target, rule, false)
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
