//! Command-line front end. `run` parses arguments, dispatches to the library
//! and maps failures to exit codes: 0 success, 1 computation error, 2 bad input.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::kernel::KernelContext;
use crate::ladder;
use crate::model::MapModel;
use crate::renewal;
use crate::simulator;
use crate::spectral;

#[derive(Debug, Parser)]
#[command(name = "mapruin", version, about = "Upward hitting probabilities of Markov additive processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check a model description.
    Validate,
    /// Stationary distribution and mean drift.
    Drift,
    /// First-passage matrices K, L and k⁻.
    Ladder,
    /// Decay rate α and the total prefactor.
    Decay,
    /// Hitting probabilities Ψ(x) on a grid.
    Hitting,
    /// Asymptotic prefactors and their diagnostics.
    Asymptotics,
    /// Stationary buffer tail coefficients.
    Fluid,
    /// Monte Carlo hitting estimates.
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Record,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Model file (TOML) or one of the built-in names `cl`, `onoff`, `mixed`.
    #[arg(long, global = true, default_value = "cl")]
    pub model: String,
    #[arg(long, global = true)]
    pub xmax: Option<f64>,
    #[arg(long, global = true)]
    pub h: Option<f64>,
    /// Tolerance for reported invariant checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 100_000)]
    pub reps: u64,
    /// Levels for `simulate`.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 5.0])]
    pub levels: Vec<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Defaults to `csv` for `hitting` and `simulate`, `record` otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Emit every invariant residual as one record instead of the command output.
    #[arg(long, global = true)]
    pub report: bool,
}

impl RunConfig {
    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("--tol must be positive, got {}", self.tol)));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return Err(Error::BadGrid(format!("--h must be positive, got {h}")));
            }
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("--reps must be positive".into()));
        }
        Ok(())
    }

    pub fn load_model(&self) -> Result<MapModel> {
        match self.model.as_str() {
            "cl" => Ok(fixtures::classical()),
            "onoff" => Ok(fixtures::onoff()),
            "mixed" => Ok(fixtures::mixed()),
            path => MapModel::from_path(std::path::Path::new(path)),
        }
    }

    /// `(xmax, h)`, defaulting to `h = 0.01 min(1, 1/α)` and `xmax ≈ 10/α`.
    fn grid(&self, model: &MapModel) -> Result<(f64, f64)> {
        let alpha = || spectral::decay_rate(model);
        let h = match self.h {
            Some(h) => h,
            None => 0.01 * (1.0f64).min(1.0 / alpha()?),
        };
        let xmax = match self.xmax {
            Some(x) => x,
            None => (10.0 / alpha()? / h).ceil() * h,
        };
        renewal::grid_steps(xmax, h)?;
        Ok((xmax, h))
    }
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().collect::<Vec<_>>())
}

fn mat_json(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn csv_line(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Table of `Ψ` as CSV with columns `x, psi_i_j…, rowsum_i…`.
pub fn hitting_csv(table: &renewal::HittingTable) -> String {
    let n = table.psi[0].nrows();
    let mut head = vec!["x".to_string()];
    head.extend((0..n).flat_map(|i| (0..n).map(move |j| format!("psi_{i}_{j}"))));
    head.extend((0..n).map(|i| format!("rowsum_{i}")));
    let mut out = head.join(",");
    out.push('\n');
    for (k, x) in table.grid.iter().enumerate() {
        let p = &table.psi[k];
        let sums = table.row_sums(k);
        let row = std::iter::once(*x)
            .chain((0..n).flat_map(|i| (0..n).map(move |j| p[(i, j)])))
            .chain(sums.iter().copied());
        out.push_str(&csv_line(row));
        out.push('\n');
    }
    out
}

fn render(format: Format, record: Value, csv: impl FnOnce() -> String) -> String {
    match format {
        Format::Record => format!("{}\n", serde_json::to_string_pretty(&record).expect("json values serialize")),
        Format::Csv => csv(),
    }
}

fn key_value_csv(record: &Value) -> String {
    let mut out = String::from("key,value\n");
    if let Value::Object(map) = record {
        for (k, v) in map {
            out.push_str(&format!("{k},{v}\n"));
        }
    }
    out
}

fn cmd_validate(model: &MapModel, format: Format) -> Result<String> {
    let part = model.partition();
    let rec = json!({ "states": model.n(), "minus": part.minus, "plus": part.plus, "valid": true });
    Ok(render(format, rec.clone(), || key_value_csv(&rec)))
}

fn cmd_drift(model: &MapModel, format: Format) -> Result<String> {
    let pi = model.stationary_dist()?;
    let drift = model.mean_drift()?;
    let rec = json!({ "pi": vec_json(&pi), "mean_drift": drift });
    Ok(render(format, rec, || {
        let mut s = String::from("state,pi\n");
        for (i, p) in pi.iter().enumerate() {
            s.push_str(&format!("{i},{p}\n"));
        }
        s.push_str(&format!("mean_drift,{drift}\n"));
        s
    }))
}

fn cmd_ladder(model: &MapModel, format: Format) -> Result<String> {
    let sol = ladder::solve_ladder(model)?;
    let rec = json!({
        "minus": model.partition().minus,
        "plus": model.partition().plus,
        "K": mat_json(&sol.k),
        "L": mat_json(&sol.l),
        "k_minus": sol.kminus.as_ref().map(vec_json),
        "residual": sol.residual,
        "iterations": sol.iterations,
    });
    Ok(render(format, rec.clone(), || key_value_csv(&rec)))
}

fn cmd_decay(model: &MapModel, format: Format) -> Result<String> {
    let ctx = KernelContext::new(model)?;
    let a = renewal::asymptotics(&ctx)?;
    let rec = json!({
        "alpha": a.alpha,
        "kappa_at_alpha": a.point.kappa,
        "prefactor_total": vec_json(&a.prefactor_total),
    });
    Ok(render(format, rec.clone(), || key_value_csv(&rec)))
}

fn cmd_hitting(model: &MapModel, cfg: &RunConfig) -> Result<String> {
    let (xmax, h) = cfg.grid(model)?;
    let ctx = KernelContext::new(model)?;
    let table = renewal::solve_hitting(&ctx, xmax, h)?;
    Ok(match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => hitting_csv(&table),
        Format::Record => {
            let rec = json!({
                "step": table.step,
                "grid": table.grid,
                "psi": table.psi.iter().map(mat_json).collect::<Vec<_>>(),
            });
            render(Format::Record, rec, String::new)
        }
    })
}

fn asymptotics_json(a: &renewal::AsymptoticResult) -> Value {
    json!({
        "alpha": a.alpha,
        "nu": vec_json(&a.nu),
        "mu": vec_json(&a.point.mu),
        "h": vec_json(&a.point.h),
        "eta_alpha": a.eta_alpha,
        "eta_zero": a.eta_zero,
        "gamma": mat_json(&a.gamma),
        "prefactor_full": mat_json(&a.prefactor_full),
        "prefactor_total": vec_json(&a.prefactor_total),
        "prefactor_continuous": mat_json(&a.prefactor_continuous),
    })
}

fn cmd_asymptotics(model: &MapModel, format: Format) -> Result<String> {
    let a = renewal::asymptotics(&KernelContext::new(model)?)?;
    let rec = asymptotics_json(&a);
    Ok(render(format, rec, || {
        let mut s = String::from("state,prefactor_total,nu\n");
        for i in 0..a.nu.len() {
            s.push_str(&format!("{i},{},{}\n", a.prefactor_total[i], a.nu[i]));
        }
        s
    }))
}

fn cmd_fluid(model: &MapModel, format: Format) -> Result<String> {
    let f = renewal::fluid_tail(model)?;
    let rec = json!({
        "alpha": f.alpha,
        "coefficients": vec_json(&f.coefficients),
        "beta_minus": vec_json(&f.beta),
        "Q": mat_json(&f.q),
        "R": mat_json(&f.r),
        "beta_residual": f.beta_residual,
    });
    Ok(render(format, rec, || {
        let mut s = String::from("state,coefficient\n");
        for (i, c) in f.coefficients.iter().enumerate() {
            s.push_str(&format!("{i},{c}\n"));
        }
        s
    }))
}

fn cmd_simulate(model: &MapModel, cfg: &RunConfig) -> Result<String> {
    let mut levels = cfg.levels.clone();
    levels.sort_by(f64::total_cmp);
    let n = model.n();
    let mut rows = Vec::new();
    for i in 0..n {
        let counts = simulator::estimate_hitting(model, &levels, i, cfg.reps, cfg.seed)?;
        for (l, &x) in levels.iter().enumerate() {
            for j in 0..n {
                rows.push((i, x, j, counts.estimate(l, j, 0.99)));
            }
        }
    }
    let rec = json!({
        "reps": cfg.reps,
        "seed": cfg.seed,
        "truncation_bias": simulator::TRUNCATION_EPS,
        "estimates": rows.iter().map(|(i, x, j, e)| json!({
            "start": i, "level": x, "state": j, "estimate": e.value,
            "std_error": e.std_error, "lower": e.lower, "upper": e.upper,
        })).collect::<Vec<_>>(),
    });
    Ok(render(cfg.format.unwrap_or(Format::Csv), rec, || {
        let mut s = String::from("start,level,state,estimate,std_error,lower99,upper99\n");
        for (i, x, j, e) in &rows {
            s.push_str(&format!("{i},{x},{j},{},{},{},{}\n", e.value, e.std_error, e.lower, e.upper));
        }
        s
    }))
}

/// Every invariant residual that can be computed for the model.
pub fn invariant_report(model: &MapModel, tol: f64) -> Result<Value> {
    let sol = ladder::solve_ladder(model)?;
    let mut rec = json!({
        "ladder_residual": ladder::ladder_residual(model, &sol.k, &sol.l)?,
        "mean_drift": model.mean_drift()?,
        "tolerance": tol,
    });
    let drift = model.mean_drift()?;
    if drift <= 0.0 {
        rec["pi_relation_residual"] = json!(ladder::pi_relation_residual(model, &sol.k, &sol.l)?);
    }
    let dual = model.dual_model()?;
    let (q, r) = ladder::dual_ladder(model, &sol.k, &sol.l)?;
    let col = ladder::solve_column_equation(&dual)?;
    rec["dual_consistency"] = json!(crate::linalg::sup_norm(&(q - &col.q)).max(crate::linalg::sup_norm(&(r - &col.r))));
    if drift < 0.0 {
        let ctx = KernelContext::with_ladder(model, sol)?;
        let a = renewal::asymptotics(&ctx)?;
        let bound = ctx.theta_bound().min(a.alpha * 1.5);
        let wh = (1..=10)
            .map(|k| ctx.wiener_hopf_residual(bound * k as f64 / 11.0))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let c = &a.checks;
        rec["alpha"] = json!(a.alpha);
        rec["wiener_hopf_residual"] = json!(wh);
        rec["nu_invariance"] = json!(c.nu_invariance);
        rec["h_invariance"] = json!(c.h_invariance);
        rec["nu_kminus"] = json!(c.nu_kminus);
        rec["twisted_row_sums"] = json!(c.twisted_row_sums);
        rec["transform_route"] = json!(c.transform_route);
        rec["full_vs_total"] = json!(c.full_vs_total);
        let f = renewal::fluid_tail(model)?;
        rec["fluid_beta_residual"] = json!(f.beta_residual);
        let worst = [wh, c.nu_invariance, c.h_invariance, c.nu_kminus, c.transform_route, c.full_vs_total]
            .into_iter()
            .fold(rec["dual_consistency"].as_f64().unwrap_or(0.0), f64::max);
        rec["max_residual"] = json!(worst);
        rec["pass"] = json!(worst <= tol);
    }
    Ok(rec)
}

fn execute(cli: &Cli) -> Result<String> {
    let cfg = &cli.config;
    cfg.check()?;
    let model = cfg.load_model()?;
    if cfg.report {
        let rec = invariant_report(&model, cfg.tol)?;
        return Ok(format!("{}\n", serde_json::to_string(&rec).expect("json values serialize")));
    }
    let format = cfg.format.unwrap_or(match cli.command {
        Command::Hitting | Command::Simulate => Format::Csv,
        _ => Format::Record,
    });
    let cfg = &RunConfig { format: Some(format), ..cfg.clone() };
    match cli.command {
        Command::Validate => cmd_validate(&model, format),
        Command::Drift => cmd_drift(&model, format),
        Command::Ladder => cmd_ladder(&model, format),
        Command::Decay => cmd_decay(&model, format),
        Command::Hitting => cmd_hitting(&model, cfg),
        Command::Asymptotics => cmd_asymptotics(&model, format),
        Command::Fluid => cmd_fluid(&model, format),
        Command::Simulate => cmd_simulate(&model, cfg),
    }
}

/// Runs the command line `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(stderr, "ERROR:Usage: {first}");
            return 2;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let written = match &cli.config.out {
                Some(path) => std::fs::write(path, text).map_err(Error::from),
                None => stdout.write_all(text.as_bytes()).map_err(Error::from),
            };
            match written {
                Ok(()) => 0,
                Err(e) => report_error(&e, stderr),
            }
        }
        Err(e) => report_error(&e, stderr),
    }
}

fn report_error(e: &Error, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "ERROR:{}: {}", e.code(), e.to_string().replace('\n', " "));
    if e.is_input_error() {
        2
    } else {
        1
    }
}
