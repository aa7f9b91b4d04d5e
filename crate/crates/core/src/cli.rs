//! Command-line front end. Every output echoes the parameters that produced
//! it so a row can be regenerated.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::constellation::Constellation;
use crate::denoiser::MseModel;
use crate::error::{Error, Result};
use crate::mimo::{monte_carlo_ser, verify_decoupling, DetectorConfig};
use crate::quadrature::DEFAULT_QUAD_ORDER;
use crate::search::log_grid;
use crate::state_evolution::{find_fixed_points, g_function, run_se, GridSpec, SeConfig};
use crate::thresholds::ThresholdAnalyzer;

pub const QUAD_ORDER_ENV: &str = "LAMA_QUAD_ORDER";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "iolama", version, about = "IO-LAMA threshold analysis and MIMO detection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Lower end of the σ² grid (default: 1e-9·Var).
    #[arg(long)]
    pub sigma_lo: Option<f64>,
    /// Upper end of the σ² grid (default: 10·(N0 + β·Var)).
    #[arg(long)]
    pub sigma_hi: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub grid_points: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact-recovery and minimum-recovery thresholds with critical noise levels.
    #[command(allow_negative_numbers = true)]
    Thresholds {
        /// Builtin ids (bpsk, qpsk, 16qam, 64qam, 8psk, 16psk) or JSON alphabet files.
        #[arg(required = true)]
        constellations: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// g(σ²) = N0 + βΨ(σ²) − σ² on a log grid, with its roots.
    #[command(allow_negative_numbers = true)]
    Gcurve {
        #[arg(long)]
        constellation: String,
        #[arg(long)]
        beta: f64,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        n0: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// Where to write the roots table (default: next to --out, else appended to stdout).
        #[arg(long)]
        roots_out: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// State-evolution trajectory from σ_1² = N0 + βVar.
    #[command(allow_negative_numbers = true)]
    SeTrace {
        #[arg(long)]
        constellation: String,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n0: f64,
        #[arg(long, default_value_t = crate::state_evolution::DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = crate::state_evolution::DEFAULT_REL_TOL)]
        rel_tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// All fixed points of the state evolution with their stability.
    #[command(allow_negative_numbers = true)]
    FixedPoints {
        #[arg(long)]
        constellation: String,
        #[arg(long)]
        beta: f64,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        n0: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo symbol error rate of the detector.
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[arg(long)]
        constellation: String,
        #[arg(long)]
        mt: usize,
        #[arg(long)]
        mr: usize,
        #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "snr_db", required_unless_present = "snr_db")]
        n0: Vec<f64>,
        /// SNR = β·E_s/N0 in dB, as an alternative to --n0.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        snr_db: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        stop_tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Optimality regime of (β, N0).
    #[command(allow_negative_numbers = true)]
    Regime {
        #[arg(long)]
        constellation: String,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n0: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Empirical matched-filter error versus the state-evolution prediction.
    #[command(allow_negative_numbers = true)]
    Decouple {
        #[arg(long)]
        constellation: String,
        #[arg(long)]
        mt: usize,
        #[arg(long)]
        mr: usize,
        #[arg(long)]
        n0: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 10)]
        iter_probe: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Quadrature order from the environment, or the default.
pub fn quad_order() -> Result<usize> {
    match std::env::var(QUAD_ORDER_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::param("LAMA_QUAD_ORDER", format!("not a positive integer: `{v}`"))),
        Err(_) => Ok(DEFAULT_QUAD_ORDER),
    }
}

fn model_for(spec: &str, order: usize) -> Result<MseModel> {
    MseModel::with_order(Constellation::resolve(spec)?, order)
}

#[derive(Debug, Clone)]
enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Text("none".into()), Cell::Num)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.12e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn text(&self) -> String {
        match self {
            Cell::Num(v) if *v == 0.0 => "0".into(),
            Cell::Num(v) if (1e-3..1e5).contains(&v.abs()) => format!("{v:.6}"),
            Cell::Num(v) => format!("{v:.4e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::text).collect()).collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|k| cells.iter().map(|r| r[k].len()).chain([self.columns[k].len()]).max().unwrap_or(0))
            .collect();
        let line = |items: Vec<&str>| {
            let padded: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut s = line(self.columns.clone());
        for r in &cells {
            s.push_str(&line(r.iter().map(String::as_str).collect()));
        }
        s
    }
}

/// What a command produced, before formatting.
pub struct Report {
    command: &'static str,
    config: Value,
    result: Value,
    tables: Vec<(&'static str, Table)>,
    /// Written to a separate file when one is requested.
    side_table: Option<(PathBuf, &'static str, Table)>,
}

impl Report {
    fn header(&self, prefix: &str) -> String {
        format!(
            "{prefix} iolama {}\n{prefix} command: {}\n{prefix} config: {}\n",
            crate::VERSION,
            self.command,
            self.config
        )
    }

    fn render_table(&self, format: Format, name: &str, table: &Table) -> String {
        let mut s = String::new();
        match format {
            Format::Csv => {
                s.push_str(&self.header("#"));
                if self.tables.len() > 1 || self.side_table.is_some() {
                    let _ = writeln!(s, "# table: {name}");
                }
                s.push_str(&table.csv());
            }
            Format::Text => {
                s.push_str(&table.text());
            }
            Format::Json => unreachable!("tables are not rendered as json"),
        }
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let doc = json!({
                    "version": crate::VERSION,
                    "command": self.command,
                    "config": self.config,
                    "result": self.result,
                });
                serde_json::to_string_pretty(&doc).expect("json values always serialize") + "\n"
            }
            Format::Csv => {
                let blocks: Vec<String> =
                    self.tables.iter().map(|(name, t)| self.render_table(format, name, t)).collect();
                blocks.join("\n")
            }
            Format::Text => {
                let mut s = self.header("#");
                for (name, t) in &self.tables {
                    if self.tables.len() > 1 {
                        let _ = writeln!(s, "\n[{name}]");
                    }
                    s.push_str(&self.render_table(format, name, t));
                }
                s
            }
        }
    }

    /// Main output plus any companion file, as (path, contents) pairs. A
    /// `None` path means stdout.
    pub fn outputs(&self, output: &OutputArgs) -> Vec<(Option<PathBuf>, String)> {
        let mut out = vec![(output.out.clone(), self.render(output.format))];
        if let Some((path, name, table)) = &self.side_table {
            let body = match output.format {
                Format::Json => {
                    let doc = json!({"version": crate::VERSION, "command": self.command, "config": self.config,
                        "result": self.result.get(*name).cloned().unwrap_or(Value::Null)});
                    serde_json::to_string_pretty(&doc).expect("json values always serialize") + "\n"
                }
                f => self.render_table(if f == Format::Text { Format::Csv } else { f }, name, table),
            };
            out.push((Some(path.clone()), body));
        }
        out
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data always serializes")
}

fn grid_for(grid: &GridArgs, var: f64, beta: f64, n0: f64) -> GridSpec {
    let d = GridSpec::default_for(var, beta, n0);
    GridSpec { lo: grid.sigma_lo.unwrap_or(d.lo), hi: grid.sigma_hi.unwrap_or(d.hi), points: grid.grid_points }
}

fn stability(root: &crate::state_evolution::FixedPoint) -> &'static str {
    if root.marginal {
        "marginal"
    } else if root.stable {
        "stable"
    } else {
        "unstable"
    }
}

fn base_config(order: usize) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("quad_order".into(), json!(order));
    m
}

/// Runs one parsed command and returns its report together with the output
/// options it was given.
pub fn execute(command: &Command) -> Result<(Report, OutputArgs)> {
    let order = quad_order()?;
    let mut config = base_config(order);
    match command {
        Command::Thresholds { constellations, output } => {
            config.insert("constellations".into(), to_value(constellations));
            config.insert("output".into(), to_value(output));
            let mut table =
                Table::new(vec!["constellation", "beta_min", "n0_min_at_beta_min", "beta_max", "n0_max_at_beta_max"]);
            let mut reports = Vec::new();
            for spec in constellations {
                let analyzer = ThresholdAnalyzer::new(model_for(spec, order)?)?;
                let r = analyzer.report(None)?;
                table.push(vec![
                    r.constellation.clone().into(),
                    r.beta_min.into(),
                    r.n0_at_beta_min.into(),
                    r.beta_max.into(),
                    r.n0_max_at_beta_max.into(),
                ]);
                reports.push(r);
            }
            let report = Report {
                command: "thresholds",
                config: Value::Object(config),
                result: to_value(&reports),
                tables: vec![("thresholds", table)],
                side_table: None,
            };
            Ok((report, output.clone()))
        }
        Command::Gcurve { constellation, beta, n0, grid, roots_out, output } => {
            let model = model_for(constellation, order)?;
            let var = model.constellation().variance();
            let roots_path = roots_out
                .clone()
                .or_else(|| output.out.as_ref().map(|p| PathBuf::from(format!("{}.roots.csv", p.display()))));
            config.insert("constellation".into(), json!(constellation));
            config.insert("beta".into(), json!(beta));
            config.insert("n0".into(), to_value(n0));
            config.insert("grid".into(), to_value(grid));
            config.insert("roots_out".into(), to_value(&roots_path));
            config.insert("output".into(), to_value(output));
            let mut curve = Table::new(vec!["n0", "sigma_sq", "g"]);
            let mut roots_table = Table::new(vec!["n0", "sigma_sq", "g_at_root", "slope", "stability"]);
            let mut curves = Vec::new();
            let mut root_sets = Vec::new();
            for &n in n0 {
                let spec = grid_for(grid, var, *beta, n);
                let sigmas = log_grid(spec.lo, spec.hi, spec.points)?;
                let mut values = Vec::with_capacity(sigmas.len());
                for &s in &sigmas {
                    let g = g_function(&model, s, *beta, n)?;
                    curve.push(vec![n.into(), s.into(), g.into()]);
                    values.push(json!({"sigma_sq": s, "g": g}));
                }
                curves.push(json!({"n0": n, "points": values}));
                let fps = find_fixed_points(&model, *beta, n, spec)?;
                for r in &fps.roots {
                    // Ψ(0) = 0, so g(0) = N0
                    let g = if r.sigma_sq == 0.0 { n } else { g_function(&model, r.sigma_sq, *beta, n)? };
                    roots_table.push(vec![n.into(), r.sigma_sq.into(), g.into(), r.slope.into(), stability(r).into()]);
                }
                root_sets.push(fps);
            }
            let result = json!({"curves": curves, "roots": to_value(&root_sets)});
            let (tables, side_table) = match roots_path {
                Some(p) => (vec![("gcurve", curve)], Some((p, "roots", roots_table))),
                None => (vec![("gcurve", curve), ("roots", roots_table)], None),
            };
            let report = Report { command: "gcurve", config: Value::Object(config), result, tables, side_table };
            Ok((report, output.clone()))
        }
        Command::SeTrace { constellation, beta, n0, max_iter, rel_tol, output } => {
            let model = model_for(constellation, order)?;
            config.insert("constellation".into(), json!(constellation));
            config.insert("beta".into(), json!(beta));
            config.insert("n0".into(), json!(n0));
            config.insert("max_iter".into(), json!(max_iter));
            config.insert("rel_tol".into(), json!(rel_tol));
            config.insert("output".into(), to_value(output));
            let trace = run_se(&model, *beta, *n0, SeConfig { max_iter: *max_iter, rel_tol: *rel_tol })?;
            let mut table = Table::new(vec!["iteration", "sigma_sq"]);
            for (t, s) in trace.sigma_sq_seq.iter().enumerate() {
                table.push(vec![(t + 1).into(), (*s).into()]);
            }
            let report = Report {
                command: "se-trace",
                config: Value::Object(config),
                result: to_value(&trace),
                tables: vec![("se-trace", table)],
                side_table: None,
            };
            Ok((report, output.clone()))
        }
        Command::FixedPoints { constellation, beta, n0, grid, output } => {
            let model = model_for(constellation, order)?;
            let var = model.constellation().variance();
            config.insert("constellation".into(), json!(constellation));
            config.insert("beta".into(), json!(beta));
            config.insert("n0".into(), to_value(n0));
            config.insert("grid".into(), to_value(grid));
            config.insert("output".into(), to_value(output));
            let mut table = Table::new(vec!["n0", "index", "sigma_sq", "slope", "stability", "role"]);
            let mut sets = Vec::new();
            for &n in n0 {
                let fps = find_fixed_points(&model, *beta, n, grid_for(grid, var, *beta, n))?;
                let last = fps.roots.len() - 1;
                for (k, r) in fps.roots.iter().enumerate() {
                    let role = match (k == 0, k == last) {
                        (true, true) => "optimal+se-reachable",
                        (true, false) => "optimal",
                        (false, true) => "se-reachable",
                        _ => "intermediate",
                    };
                    table.push(vec![n.into(), k.into(), r.sigma_sq.into(), r.slope.into(), stability(r).into(), role.into()]);
                }
                sets.push(fps);
            }
            let report = Report {
                command: "fixed-points",
                config: Value::Object(config),
                result: to_value(&sets),
                tables: vec![("fixed-points", table)],
                side_table: None,
            };
            Ok((report, output.clone()))
        }
        Command::Simulate { constellation, mt, mr, n0, snr_db, trials, seed, max_iter, stop_tol, output } => {
            let c = Constellation::resolve(constellation)?;
            if *mr == 0 {
                return Err(Error::param("mr", "must be at least 1"));
            }
            let beta = *mt as f64 / *mr as f64;
            let signal = beta * c.energy();
            let n0_list: Vec<f64> = if snr_db.is_empty() {
                n0.clone()
            } else {
                snr_db.iter().map(|db| signal / 10f64.powf(db / 10.0)).collect()
            };
            config.insert("constellation".into(), json!(constellation));
            config.insert("mt".into(), json!(mt));
            config.insert("mr".into(), json!(mr));
            config.insert("n0".into(), to_value(&n0_list));
            config.insert("snr_db".into(), to_value(snr_db));
            config.insert("trials".into(), json!(trials));
            config.insert("seed".into(), json!(seed));
            config.insert("max_iter".into(), json!(max_iter));
            config.insert("stop_tol".into(), json!(stop_tol));
            config.insert("snr_definition".into(), json!("beta*E_s/N0"));
            config.insert("output".into(), to_value(output));
            let det = DetectorConfig { max_iter: *max_iter, stop_tol: *stop_tol, ..Default::default() };
            let mut table =
                Table::new(vec!["n0", "snr", "snr_db", "ser", "std_err", "trials", "errors", "mean_iterations"]);
            let mut rows = Vec::new();
            for &n in &n0_list {
                let est = monte_carlo_ser(&c, *mt, *mr, n, *trials, &det, *seed)?;
                let snr = signal / n;
                let snr_db = 10.0 * snr.log10();
                table.push(vec![
                    n.into(),
                    snr.into(),
                    snr_db.into(),
                    est.ser.into(),
                    est.std_err.into(),
                    est.trials.into(),
                    est.errors.into(),
                    est.mean_iterations.into(),
                ]);
                rows.push(json!({"n0": n, "snr": snr, "snr_db": snr_db, "estimate": to_value(&est)}));
            }
            let report = Report {
                command: "simulate",
                config: Value::Object(config),
                result: Value::Array(rows),
                tables: vec![("simulate", table)],
                side_table: None,
            };
            Ok((report, output.clone()))
        }
        Command::Regime { constellation, beta, n0, output } => {
            let model = model_for(constellation, order)?;
            config.insert("constellation".into(), json!(constellation));
            config.insert("beta".into(), json!(beta));
            config.insert("n0".into(), json!(n0));
            config.insert("output".into(), to_value(output));
            let var = model.constellation().variance();
            let fps = find_fixed_points(&model, *beta, *n0, GridSpec::default_for(var, *beta, *n0))?;
            let analyzer = ThresholdAnalyzer::new(model)?;
            let regime = analyzer.classify(*beta, *n0)?;
            let crit = analyzer.critical_noise(*beta)?;
            let mut table = Table::new(vec![
                "regime",
                "beta",
                "n0",
                "beta_min",
                "beta_max",
                "n0_min",
                "n0_max",
                "fixed_points",
            ]);
            table.push(vec![
                regime.label().into(),
                (*beta).into(),
                (*n0).into(),
                analyzer.beta_min().into(),
                analyzer.beta_max().into(),
                crit.n0_min.into(),
                crit.n0_max.into(),
                fps.count().into(),
            ]);
            let result = json!({
                "regime": regime,
                "beta_min": analyzer.beta_min(),
                "beta_max": analyzer.beta_max(),
                "critical_noise": crit,
                "fixed_points": to_value(&fps),
            });
            let report =
                Report { command: "regime", config: Value::Object(config), result, tables: vec![("regime", table)], side_table: None };
            Ok((report, output.clone()))
        }
        Command::Decouple { constellation, mt, mr, n0, trials, iter_probe, seed, output } => {
            let model = model_for(constellation, order)?;
            config.insert("constellation".into(), json!(constellation));
            config.insert("mt".into(), json!(mt));
            config.insert("mr".into(), json!(mr));
            config.insert("n0".into(), json!(n0));
            config.insert("trials".into(), json!(trials));
            config.insert("iter_probe".into(), json!(iter_probe));
            config.insert("seed".into(), json!(seed));
            config.insert("output".into(), to_value(output));
            let rep = verify_decoupling(&model, *mt, *mr, *n0, *trials, *iter_probe, *seed)?;
            let mut per_iter = Table::new(vec!["iteration", "empirical_var", "se_var", "relative_gap"]);
            for (t, (e, s)) in rep.per_iter_empirical.iter().zip(&rep.per_iter_se).enumerate() {
                per_iter.push(vec![(t + 1).into(), (*e).into(), (*s).into(), (e / s - 1.0).into()]);
            }
            let mut summary =
                Table::new(vec!["iter_probe", "empirical_var", "se_var", "kurtosis_re", "kurtosis_im", "samples"]);
            summary.push(vec![
                rep.iter_probe.into(),
                rep.empirical_var.into(),
                rep.se_var.into(),
                rep.kurtosis_re.into(),
                rep.kurtosis_im.into(),
                rep.samples.into(),
            ]);
            let report = Report {
                command: "decouple",
                config: Value::Object(config),
                result: to_value(&rep),
                tables: vec![("summary", summary), ("per-iteration", per_iter)],
                side_table: None,
            };
            Ok((report, output.clone()))
        }
    }
}

/// Executes the command and writes every output. Returns the text meant for
/// stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let (report, output) = execute(&cli.command)?;
    let mut stdout = String::new();
    for (path, body) in report.outputs(&output) {
        match path {
            Some(p) => std::fs::write(p, body)?,
            None => stdout.push_str(&body),
        }
    }
    Ok(stdout)
}
