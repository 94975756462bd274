use std::process::ExitCode;
use std::time::Instant;

use bigjump_cli::commands::run;
use bigjump_cli::config::load;
use bigjump_cli::report::emit_report;
use bigjump_cli::CliError;
use clap::{Args, Parser, Subcommand};

/// Tail asymptotics of sums of conditionally independent heavy-tailed variables.
///
/// Every option maps onto a key of the JSON run configuration; values given
/// on the command line override the file given with --config.
#[derive(Parser)]
#[command(name = "bigjump", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tail, density and hazard rate of a distribution on a grid
    Dist(Common),
    /// Boundary class of a distribution; membership of --h-expr
    Boundary(Common),
    /// Dependence conditions (D1)-(D4) for a model preset
    Check(Common),
    /// Monte Carlo sum tails, fixed or random number of summands
    Simulate(Common),
    /// Two-summand big-jump decomposition
    Decompose(Common),
    /// Fit of the geometric-in-n bound on sum tails
    Kesten(Common),
    /// Run the six example models end to end
    Examples(Common),
}

#[derive(Args, Default)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: Option<String>,
    /// Dotted override, e.g. params.alpha=2 or x_grid.stop=1e6
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    law: Option<String>,
    /// Model or law parameter, e.g. --param alpha=2
    #[arg(long = "param", value_name = "NAME=VALUE")]
    param: Vec<String>,
    /// Grid as start:stop:points (geometric)
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u64>,
    /// Number of summands, or geometric:p, poisson:lambda, fixed:n
    #[arg(long)]
    n: Option<String>,
    /// plain or cond_last_step
    #[arg(long)]
    estimator: Option<String>,
    /// Candidate h(x), e.g. "x^0.5" or "sqrt(x)/ln(x)"
    #[arg(long = "h-expr")]
    h_expr: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    #[arg(long)]
    x0: Option<f64>,
    /// Example id (repeatable); all six by default
    #[arg(long)]
    id: Vec<u8>,
    #[arg(long)]
    csv: Option<String>,
    #[arg(long)]
    json: Option<String>,
}

impl Common {
    fn assignments(&self, command: &str) -> Result<Vec<String>, CliError> {
        let mut a = vec![format!("command={command}")];
        a.extend(self.set.iter().cloned());
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                a.push(format!("{k}={v}"));
            }
        };
        let quoted = |s: &Option<String>| s.as_ref().map(|v| serde_json::Value::String(v.clone()).to_string());
        put("model", quoted(&self.model));
        put("law", quoted(&self.law));
        put("seed", self.seed.map(|v| v.to_string()));
        put("replications", self.replications.map(|v| v.to_string()));
        put("n", quoted(&self.n));
        put("estimator", quoted(&self.estimator));
        put("h_expr", quoted(&self.h_expr));
        put("eps", self.eps.map(|v| v.to_string()));
        put("n_max", self.n_max.map(|v| v.to_string()));
        put("x0", self.x0.map(|v| v.to_string()));
        put("output.csv_path", quoted(&self.csv));
        put("output.json_path", quoted(&self.json));
        if !self.id.is_empty() {
            put("ids", Some(serde_json::to_string(&self.id).unwrap()));
        }
        for p in &self.param {
            a.push(format!("params.{p}"));
        }
        if let Some(g) = &self.grid {
            let parts: Vec<&str> = g.split(':').collect();
            if parts.len() != 3 {
                return Err(CliError::Usage(format!("--grid expects start:stop:points, got `{g}`")));
            }
            for (k, v) in ["start", "stop", "points"].iter().zip(parts) {
                a.push(format!("x_grid.{k}={v}"));
            }
        }
        Ok(a)
    }
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("BIGJUMP_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Usage(format!("BIGJUMP_THREADS must be a count, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn real_main() -> Result<i32, CliError> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return Ok(if usage { 1 } else { 0 });
        }
    };
    let (name, common) = match &cli.command {
        Cmd::Dist(c) => ("dist", c),
        Cmd::Boundary(c) => ("boundary", c),
        Cmd::Check(c) => ("check", c),
        Cmd::Simulate(c) => ("simulate", c),
        Cmd::Decompose(c) => ("decompose", c),
        Cmd::Kesten(c) => ("kesten", c),
        Cmd::Examples(c) => ("examples", c),
    };
    configure_threads()?;
    let file = match &common.config {
        Some(p) => Some(std::fs::read_to_string(p)?),
        None => None,
    };
    let mut assignments = common.assignments(name)?;
    // the subcommand wins over a `command` key in the file
    let cmd = assignments.remove(0);
    assignments.push(cmd);
    let cfg = load(file.as_deref(), &assignments)?;
    let start = Instant::now();
    let out = run(&cfg)?;
    emit_report(&cfg, &out.table, &out.results, start.elapsed())?;
    Ok(out.exit_code)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
