//! `modcom`: modular commutators of the cluster-chain and honeycomb
//! counterexample states, from the command line.
//!
//! Every record carries a `schema_version`; CSV column sets change only with it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use modcom_core::dense::{DenseLimits, RegulatorConfig};
use modcom_core::modular::{
    modcom_custom_gate, modcom_perturbed, sensitivity_scan, MethodChoice, ModcomResult,
    PerturbationSpec, Problem,
};
use modcom_core::pauli::SiteId;
use modcom_core::states::{two_qubit_gate_from_json, BlueGate, HoneycombConfig};
use modcom_core::verify::{run_verification, Faults, Status};
use modcom_core::Error;

const SCHEMA_VERSION: u32 = 1;

/// Largest disagreement tolerated between the symbolic and dense routes.
const AGREEMENT_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(
    name = "modcom",
    version,
    about = "Modular commutators of stabilizer counterexample states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute J(A,B,C) for one state.
    #[command(alias = "modcom")]
    Compute {
        #[command(flatten)]
        geometry: Geometry,
        #[command(flatten)]
        output: Output,
    },
    /// Perturbed chain over a θ grid and a list of M.
    Sweep {
        /// Fixed chain half-length; defaults to M+1 for each row.
        #[arg(long = "N")]
        n: Option<usize>,
        /// Comma-separated M values; `a-b` ranges allowed.
        #[arg(long = "M", default_value = "1")]
        m: String,
        #[arg(long, conflicts_with = "theta_grid")]
        theta: Option<f64>,
        /// `start:stop:steps`, endpoints included.
        #[arg(long)]
        theta_grid: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Recompute J after moving single sites between regions.
    Sensitivity {
        #[command(flatten)]
        geometry: Geometry,
        /// Comma-separated sites to scan (default: all). An empty list scans nothing.
        #[arg(long, allow_hyphen_values = true)]
        sites: Option<String>,
        /// Also move D sites into the regions they touch.
        #[arg(long)]
        move_in: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Run the self-check suite.
    Verify {
        #[arg(long, default_value_t = 14)]
        max_qubits: usize,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `json` prints the JSON report to stdout instead of the text one.
        #[arg(long, value_enum, default_value_t = VerifyFormat::Text)]
        format: VerifyFormat,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// 1D chain with a user-supplied 4×4 gate in place of V (dense only).
    CustomGate {
        /// JSON 4×4 array of `[re, im]` in the (site 1, site 0) basis.
        #[arg(long)]
        gate: PathBuf,
        #[arg(long = "N", default_value_t = 1)]
        n: usize,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args, Debug, Clone)]
struct Geometry {
    #[arg(long, value_enum, default_value_t = Model::OneD)]
    model: Model,
    #[arg(long = "N", default_value_t = 1)]
    n: usize,
    /// Half-width of B; 0 gives the unperturbed regions.
    #[arg(long = "M", default_value_t = 0)]
    m: usize,
    /// Perturbation angle (1D only).
    #[arg(long)]
    theta: Option<f64>,
    /// Honeycomb configuration (2D only).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Output {
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Regulator for singular densities.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Dense ceiling in qubits (overrides MODCOM_MAX_DENSE_QUBITS).
    #[arg(long)]
    max_qubits: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Model {
    #[value(name = "1d")]
    #[serde(rename = "1d")]
    OneD,
    #[value(name = "2d")]
    #[serde(rename = "2d")]
    TwoD,
    Cluster,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MethodArg {
    Auto,
    Symbolic,
    Dense,
}

impl From<MethodArg> for MethodChoice {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => MethodChoice::Auto,
            MethodArg::Symbolic => MethodChoice::Symbolic,
            MethodArg::Dense => MethodChoice::Dense,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum VerifyFormat {
    Text,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Fault {
    FlipClosedSign,
}

/// Failure with its exit code and a short machine-readable kind.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "InvalidInput".into(),
            message: message.into(),
        }
    }

    fn flagged(kind: &str, message: impl Into<String>) -> Self {
        Self {
            code: 3,
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnknownSite(_)
            | Error::Parse { .. }
            | Error::InvalidXString { .. }
            | Error::NotUnitary(_)
            | Error::InvalidGenerators(_)
            | Error::InvalidParameter(_)
            | Error::InvalidConfig(_)
            | Error::EmptyComplement => 2,
            _ => 3,
        };
        Self {
            code,
            kind: error_kind(&e),
            message: e.to_string(),
        }
    }
}

/// Variant name of an error, e.g. `EpsilonSensitive`.
fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("Error")
        .to_string()
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let record = json!({
                "schema_version": SCHEMA_VERSION,
                "error": { "kind": f.kind, "message": f.message },
            });
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Compute { geometry, output } => cmd_compute(&geometry, &output),
        Command::Sweep {
            n,
            m,
            theta,
            theta_grid,
            output,
        } => cmd_sweep(n, &m, theta, theta_grid.as_deref(), &output),
        Command::Sensitivity {
            geometry,
            sites,
            move_in,
            output,
        } => cmd_sensitivity(&geometry, sites.as_deref(), move_in, &output),
        Command::Verify {
            max_qubits,
            out,
            format,
            inject_fault,
        } => cmd_verify(max_qubits, out.as_deref(), format, inject_fault),
        Command::CustomGate { gate, n, output } => cmd_custom_gate(&gate, n, &output),
    }
}

fn limits(output: &Output) -> DenseLimits {
    let limits = DenseLimits::from_env();
    match output.max_qubits {
        Some(n) => limits.with_max_qubits(n),
        None => limits,
    }
}

fn regulator(output: &Output) -> Result<RegulatorConfig, Failure> {
    match output.epsilon {
        Some(e) => Ok(RegulatorConfig::with_epsilon(e)?),
        None => Ok(RegulatorConfig::default()),
    }
}

fn build_problem(g: &Geometry) -> Result<Problem, Failure> {
    match g.model {
        Model::OneD => {
            if g.config.is_some() {
                return Err(Failure::input("--config applies to the 2d model only"));
            }
            Ok(Problem::chain_1d(g.n, g.m, g.theta)?)
        }
        Model::Cluster => {
            if g.theta.is_some() || g.config.is_some() {
                return Err(Failure::input("the cluster model takes only --N and --M"));
            }
            Ok(Problem::cluster(g.n, g.m)?)
        }
        Model::TwoD => {
            let path = g
                .config
                .as_ref()
                .ok_or_else(|| Failure::input("the 2d model needs --config"))?;
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
            Ok(Problem::honeycomb(&HoneycombConfig::from_json(&text)?)?)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::flagged("Io", e.to_string()))
        }
    }
}

fn to_csv<T: Serialize>(rows: &[T], header_if_empty: &[&str]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header_if_empty).map_err(csv_failure)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_failure)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::flagged("Io", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::flagged("Io", e.to_string())
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct ComputeRow {
    schema_version: u32,
    model: Model,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    theta: Option<f64>,
    method: &'static str,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "J_over_pi_thirds")]
    j_over_pi_thirds: f64,
}

fn result_json(command: &str, params: serde_json::Value, r: &ModcomResult) -> serde_json::Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "params": params,
        "J": r.value,
        "J_over_pi_thirds": r.over_pi_thirds(),
        "method": r.method.as_str(),
        "deltas": r.deltas,
        "epsilon": r.epsilon,
        "imaginary_part": r.imaginary_part,
        "epsilon_sweep": r.epsilon_sweep,
    })
}

fn cmd_compute(g: &Geometry, output: &Output) -> CmdResult {
    let problem = build_problem(g)?;
    let r = problem.modcom(output.method.into(), &regulator(output)?, &limits(output))?;
    let text = match output.format {
        Format::Json => pretty(&result_json(
            "modcom",
            json!({
                "model": g.model,
                "N": g.n,
                "M": g.m,
                "theta": g.theta,
                "config": g.config.as_ref().map(|p| p.display().to_string()),
                "method_requested": format!("{:?}", output.method).to_lowercase(),
            }),
            &r,
        )),
        Format::Csv => to_csv(
            &[ComputeRow {
                schema_version: SCHEMA_VERSION,
                model: g.model,
                n: g.n,
                m: g.m,
                theta: g.theta,
                method: r.method.as_str(),
                j: r.value,
                j_over_pi_thirds: r.over_pi_thirds(),
            }],
            &[],
        )?,
    };
    emit(output.out.as_deref(), &text)?;
    Ok(0)
}

/// Parses `1,2,5-7`.
fn parse_m_list(text: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::input(format!("cannot parse M list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Parses `start:stop:steps` into `steps` evenly spaced values, endpoints included.
fn parse_theta_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::input(format!("theta grid must be start:stop:steps, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, k] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let k: usize = k.trim().parse().map_err(|_| bad())?;
    if k == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    if k == 1 {
        return Ok(vec![a]);
    }
    Ok((0..k)
        .map(|i| a + (b - a) * i as f64 / (k - 1) as f64)
        .collect())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    theta: f64,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "J_closed")]
    j_closed: f64,
    #[serde(rename = "J_symbolic")]
    j_symbolic: Option<f64>,
    #[serde(rename = "J_dense")]
    j_dense: Option<f64>,
    /// Largest deviation from the closed form, relative to max(|J_closed|, 1).
    rel_gap: f64,
    /// Empty unless the cell was flagged.
    flag: String,
}

fn sweep_cell(
    theta: f64,
    m: usize,
    n: usize,
    output: &Output,
    reg: &RegulatorConfig,
    limits: &DenseLimits,
) -> Result<SweepRow, Failure> {
    let j_closed = modcom_perturbed(&PerturbationSpec::new(theta, m)?);
    let problem = Problem::chain_1d(n, m, Some(theta))?;
    let mut flag = String::new();
    let mut run = |want: bool,
                   f: &dyn Fn() -> modcom_core::Result<ModcomResult>|
     -> Result<Option<f64>, Failure> {
        if !want {
            return Ok(None);
        }
        match f() {
            Ok(r) => Ok(Some(r.value)),
            Err(e @ Error::EpsilonSensitive { .. }) => {
                flag = error_kind(&e);
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    };
    // Dense is skipped in auto mode when the state vector would not fit.
    let dense_fits =
        limits.check_state(problem.n_qubits()).is_ok() && limits.check_operator(2 * n + 1).is_ok();
    let (want_sym, want_dense) = match output.method {
        MethodArg::Auto => (true, dense_fits),
        MethodArg::Symbolic => (true, false),
        MethodArg::Dense => (false, true),
    };
    let j_symbolic = run(want_sym, &|| problem.modcom_symbolic(Some(reg.epsilon)))?;
    let j_dense = run(want_dense, &|| problem.modcom_dense(reg, limits))?;
    let gap = [j_symbolic, j_dense]
        .into_iter()
        .flatten()
        .map(|j| (j - j_closed).abs())
        .fold(0.0, f64::max);
    if let (Some(s), Some(d)) = (j_symbolic, j_dense) {
        if (s - d).abs() >= AGREEMENT_TOL && flag.is_empty() {
            flag = "MethodDisagreement".into();
        }
    }
    Ok(SweepRow {
        theta,
        m,
        n,
        j_closed,
        j_symbolic,
        j_dense,
        rel_gap: gap / j_closed.abs().max(1.0),
        flag,
    })
}

fn cmd_sweep(
    n: Option<usize>,
    m_list: &str,
    theta: Option<f64>,
    grid: Option<&str>,
    output: &Output,
) -> CmdResult {
    let ms = parse_m_list(m_list)?;
    let thetas = match (theta, grid) {
        (_, Some(g)) => parse_theta_grid(g)?,
        (Some(t), None) => vec![t],
        (None, None) => return Err(Failure::input("sweep needs --theta or --theta-grid")),
    };
    let reg = regulator(output)?;
    let limits = limits(output);
    let cells: Vec<(f64, usize, usize)> = thetas
        .iter()
        .flat_map(|&t| ms.iter().map(move |&m| (t, m, n.unwrap_or(m + 1))))
        .collect();
    // Rayon's indexed collect keeps grid order.
    let rows = cells
        .par_iter()
        .map(|&(t, m, nn)| sweep_cell(t, m, nn, output, &reg, &limits))
        .collect::<Result<Vec<_>, _>>()?;
    let text = match output.format {
        Format::Csv => to_csv(&rows, &[])?,
        Format::Json => pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "sweep",
            "rows": rows,
        })),
    };
    emit(output.out.as_deref(), &text)?;
    let flagged: Vec<String> = rows
        .iter()
        .filter(|r| !r.flag.is_empty())
        .map(|r| format!("theta={} M={}: {}", r.theta, r.m, r.flag))
        .collect();
    if flagged.is_empty() {
        Ok(0)
    } else {
        Err(Failure::flagged("SweepFlagged", flagged.join("; ")))
    }
}

#[derive(Serialize)]
struct SensitivityOut {
    site: SiteId,
    from: String,
    to: String,
    #[serde(rename = "J")]
    j: f64,
    method: &'static str,
}

fn parse_sites(text: &str) -> Result<Vec<SiteId>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Failure::input(format!("bad site {s:?}")))
        })
        .collect()
}

fn cmd_sensitivity(g: &Geometry, sites: Option<&str>, move_in: bool, output: &Output) -> CmdResult {
    let problem = build_problem(g)?;
    let sites = sites.map(parse_sites).transpose()?;
    let rows = sensitivity_scan(
        &problem,
        sites.as_deref(),
        move_in,
        output.method.into(),
        &regulator(output)?,
        &limits(output),
    )?;
    let rows: Vec<SensitivityOut> = rows
        .into_iter()
        .map(|r| SensitivityOut {
            site: r.site,
            from: r.from.to_string(),
            to: r.to.to_string(),
            j: r.value,
            method: r.method.as_str(),
        })
        .collect();
    let text = match output.format {
        Format::Csv => to_csv(&rows, &["site", "from", "to", "J", "method"])?,
        Format::Json => pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "sensitivity",
            "params": { "model": g.model, "N": g.n, "M": g.m, "theta": g.theta, "move_in": move_in },
            "rows": rows,
        })),
    };
    emit(output.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_verify(
    max_qubits: usize,
    out: Option<&Path>,
    format: VerifyFormat,
    fault: Option<Fault>,
) -> CmdResult {
    let faults = Faults {
        flip_closed_sign: fault == Some(Fault::FlipClosedSign),
    };
    let report = run_verification(max_qubits, faults);
    let record = pretty(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "passed": report.passed(),
        "report": report,
    }));
    let mut text = String::new();
    for c in &report.checks {
        let tag = match c.status {
            Status::Passed => "PASS",
            Status::Failed => "FAIL",
            Status::Skipped => "SKIP",
        };
        text.push_str(&format!("{tag} {} — {}\n", c.name, c.detail));
    }
    let verdict = if report.passed() {
        "all checks passed"
    } else {
        "verification FAILED"
    };
    text.push_str(&format!("{verdict} (max qubits {max_qubits})\n"));
    if let Some(path) = out {
        emit(Some(path), &record)?;
    }
    match format {
        VerifyFormat::Text => emit(None, &text)?,
        VerifyFormat::Json => {
            eprint!("{text}");
            emit(None, &record)?;
        }
    }
    if report.passed() {
        Ok(0)
    } else {
        for c in report.failures() {
            eprintln!("failed invariant: {}", c.name);
        }
        Ok(1)
    }
}

fn cmd_custom_gate(gate: &Path, n: usize, output: &Output) -> CmdResult {
    if output.method == MethodArg::Symbolic {
        return Err(Failure::input("custom gates are evaluated densely only"));
    }
    let text = fs::read_to_string(gate)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", gate.display())))?;
    let matrix = two_qubit_gate_from_json(&text)?;
    let r = modcom_custom_gate(
        n,
        &BlueGate::Custom(matrix),
        &regulator(output)?,
        &limits(output),
    )?;
    let params = json!({ "model": "1d", "N": n, "gate": gate.display().to_string() });
    let text = match output.format {
        Format::Json => pretty(&result_json("custom-gate", params, &r)),
        Format::Csv => to_csv(
            &[ComputeRow {
                schema_version: SCHEMA_VERSION,
                model: Model::OneD,
                n,
                m: 0,
                theta: None,
                method: r.method.as_str(),
                j: r.value,
                j_over_pi_thirds: r.over_pi_thirds(),
            }],
            &[],
        )?,
    };
    emit(output.out.as_deref(), &text)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_lists() {
        assert_eq!(parse_m_list("1,3-5").unwrap(), vec![1, 3, 4, 5]);
        assert_eq!(parse_m_list(" 2 ").unwrap(), vec![2]);
        assert!(parse_m_list("").is_err());
        assert!(parse_m_list("5-3").is_err());
        assert!(parse_m_list("x").is_err());
    }

    #[test]
    fn theta_grids() {
        assert_eq!(parse_theta_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_theta_grid("0.3:9:1").unwrap(), vec![0.3]);
        assert!(parse_theta_grid("0:1").is_err());
        assert!(parse_theta_grid("0:1:0").is_err());
    }

    #[test]
    fn error_kinds_and_codes() {
        let e = Error::EpsilonSensitive {
            deviation: 1.0,
            values: vec![],
        };
        assert_eq!(error_kind(&e), "EpsilonSensitive");
        assert_eq!(Failure::from(e).code, 3);
        assert_eq!(Failure::from(Error::NotUnitary(0.5)).code, 2);
        assert_eq!(Failure::from(Error::EmptyComplement).code, 2);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
