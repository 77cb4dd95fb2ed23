use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use tqd::analytic::analytic_curve;
use tqd::fitting::solve_sigma3;
use tqd::{fit_dephasing, fit_rabi, p0_mc, solve_sigmas, Curve, FitResult, Measurement, Method, SigmaKind, Trace};

use crate::config::{MethodName, RunConfig};
use crate::failure::Failure;
use crate::units::Units;

/// Either `--out` or stdout.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::io(format!("cannot write stdout: {e}")))
        }
    }
}

pub fn warn(message: &str) {
    eprintln!("{}", json!({ "warning": message }));
}

/// Runs `f` on a dedicated pool when a worker count is configured.
fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> Result<T, Failure> + Send,
) -> Result<T, Failure> {
    match workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::config(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}

pub struct NamedCurve {
    pub name: MethodName,
    pub curve: Curve,
}

pub fn compute_curves(cfg: &RunConfig) -> Result<Vec<NamedCurve>, Failure> {
    cfg.validate_methods()?;
    let sigmas = cfg.sigmas()?;
    let spec = cfg.experiment()?;
    with_workers(cfg.workers, || {
        cfg.methods
            .iter()
            .map(|&name| {
                let curve = match name {
                    MethodName::Mc => p0_mc(&spec, &sigmas, &cfg.mc_config())?,
                    MethodName::Exact => analytic_curve(Method::Quadrature, &sigmas, &spec, &cfg.quadrature)?,
                    MethodName::InfJ => analytic_curve(Method::InfJ, &sigmas, &spec, &cfg.quadrature)?,
                    MethodName::HighJ => analytic_curve(Method::HighJ, &sigmas, &spec, &cfg.quadrature)?,
                    MethodName::LowJ => analytic_curve(Method::LowJ, &sigmas, &spec, &cfg.quadrature)?,
                    MethodName::ZeroJ => analytic_curve(Method::ZeroJ, &sigmas, &spec, &cfg.quadrature)?,
                };
                Ok(NamedCurve { name, curve })
            })
            .collect()
    })
}

/// 17 significant digits: enough to round-trip any double.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn curves_csv(curves: &[NamedCurve], units: Units) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(vec![]);
    let mut header = vec!["t".to_string()];
    header.extend(curves.iter().map(|c| c.name.column().to_string()));
    let mc = curves.iter().find(|c| c.name == MethodName::Mc);
    if mc.is_some() {
        header.push("mc_stderr".into());
    }
    let csv_err = |e: csv::Error| Failure::io(format!("csv output: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let times = &curves[0].curve.times;
    let scale = units.time_scale();
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![fmt_num(t * scale)];
        row.extend(curves.iter().map(|c| fmt_num(c.curve.values[i])));
        if let Some(mc) = mc {
            let se = mc.curve.stderr.as_ref().map_or(f64::NAN, |s| s[i]);
            row.push(fmt_num(se));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Failure::io(format!("csv output: {e}")))
}

pub fn cmd_curve(cfg: &RunConfig) -> Result<(), Failure> {
    let curves = compute_curves(cfg)?;
    for c in &curves {
        for w in &c.curve.warnings {
            warn(w);
        }
    }
    emit(cfg.out.as_deref(), &curves_csv(&curves, cfg.units)?)
}

#[derive(Debug, Serialize)]
pub struct PairReport {
    pub a: MethodName,
    pub b: MethodName,
    pub max_dev: f64,
    pub mean_dev: f64,
    /// `"max_abs"` or `"mc_band"`.
    pub criterion: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_sigmas: Option<f64>,
    /// Largest deviation in units of the combined Monte Carlo standard error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_z: Option<f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub j: f64,
    pub points: usize,
    pub units: Units,
    pub pairs: Vec<PairReport>,
    pub all_passed: bool,
}

const ROUNDING_SLACK: f64 = 1e-12;

pub fn compare(cfg: &RunConfig) -> Result<CompareReport, Failure> {
    if cfg.methods.len() < 2 {
        return Err(Failure::config("compare needs at least two methods"));
    }
    let curves = compute_curves(cfg)?;
    let mut pairs = vec![];
    for (i, a) in curves.iter().enumerate() {
        for b in &curves[i + 1..] {
            let devs: Vec<f64> = a
                .curve
                .values
                .iter()
                .zip(&b.curve.values)
                .map(|(x, y)| (x - y).abs())
                .collect();
            let max_dev = devs.iter().copied().fold(0.0, f64::max);
            let mean_dev = devs.iter().sum::<f64>() / devs.len() as f64;
            let notes: Vec<String> = a.curve.warnings.iter().chain(&b.curve.warnings).cloned().collect();
            let se = |c: &NamedCurve, k: usize| c.curve.stderr.as_ref().map_or(0.0, |s| s[k]);
            let report = if a.name == MethodName::Mc || b.name == MethodName::Mc {
                let band = cfg.compare.mc_band;
                let mut max_z = 0.0f64;
                let mut passed = true;
                for (k, d) in devs.iter().enumerate() {
                    let combined = (se(a, k).powi(2) + se(b, k).powi(2)).sqrt();
                    // rounding-level differences (e.g. t = 0) are not deviations
                    let excess = (d - ROUNDING_SLACK).max(0.0);
                    if excess > band * combined {
                        passed = false;
                    }
                    if excess > 0.0 {
                        max_z = max_z.max(excess / combined);
                    }
                }
                PairReport {
                    a: a.name,
                    b: b.name,
                    max_dev,
                    mean_dev,
                    criterion: "mc_band",
                    tolerance: None,
                    band_sigmas: Some(band),
                    max_z: Some(max_z),
                    passed,
                    notes,
                }
            } else {
                let tol = cfg.compare.tolerance(a.name, b.name);
                PairReport {
                    a: a.name,
                    b: b.name,
                    max_dev,
                    mean_dev,
                    criterion: "max_abs",
                    tolerance: Some(tol),
                    band_sigmas: None,
                    max_z: None,
                    passed: max_dev <= tol,
                    notes,
                }
            };
            pairs.push(report);
        }
    }
    Ok(CompareReport {
        j: curves[0].curve.meta["j"].as_f64().unwrap_or(f64::NAN),
        points: curves[0].curve.times.len(),
        units: cfg.units,
        all_passed: pairs.iter().all(|p| p.passed),
        pairs,
    })
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<(), Failure> {
    let report = compare(cfg)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    emit(cfg.out.as_deref(), text.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitModel {
    Dephasing,
    Rabi,
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::io(format!("cannot read stdin: {e}")))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))
    }
}

/// Parses `t, p0[, weight]`. A header row is recognized when its first
/// field is not a number; with a header the value column may be chosen by
/// name and a column named `weight` supplies weights.
pub fn parse_trace(text: &str, value_column: Option<&str>, units: Units) -> Result<Trace, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = vec![];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::csv(format!("malformed CSV: {e}"), i + 1, None))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((i + 1, rec));
    }
    if records.is_empty() {
        return Err(Failure::csv("empty trace", 0, None));
    }
    let has_header = records[0].1.get(0).is_some_and(|f| f.parse::<f64>().is_err());
    let (value_idx, weight_idx, data) = if has_header {
        let header: Vec<String> = records[0].1.iter().map(str::to_string).collect();
        let value_idx = match value_column {
            Some(name) => header.iter().position(|h| h == name).ok_or_else(|| {
                Failure::usage(format!("no column named '{name}' (have {header:?})"))
            })?,
            None => 1,
        };
        (value_idx, header.iter().position(|h| h == "weight"), &records[1..])
    } else {
        if value_column.is_some() {
            return Err(Failure::usage("--column needs a header row"));
        }
        let weight = (records[0].1.len() >= 3).then_some(2);
        (1, weight, &records[..])
    };

    let scale = units.time_scale();
    let field = |row: usize, rec: &csv::StringRecord, col: usize| -> Result<f64, Failure> {
        let raw = rec
            .get(col)
            .ok_or_else(|| Failure::csv(format!("row {row} has no column {}", col + 1), row, Some(col + 1)))?;
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Failure::csv(format!("row {row}, column {}: not a number: '{raw}'", col + 1), row, Some(col + 1)))
    };
    let mut times = Vec::with_capacity(data.len());
    let mut values = Vec::with_capacity(data.len());
    let mut weights = weight_idx.map(|_| Vec::with_capacity(data.len()));
    for (row, rec) in data {
        times.push(field(*row, rec, 0)? / scale);
        values.push(field(*row, rec, value_idx)?);
        if let (Some(ws), Some(k)) = (weights.as_mut(), weight_idx) {
            ws.push(field(*row, rec, k)?);
        }
    }
    Ok(Trace::new(times, values, weights)?)
}

pub struct FitArgs {
    pub trace: PathBuf,
    pub model: FitModel,
    pub j_guess: Option<f64>,
    pub column: Option<String>,
    pub units: Units,
    pub out: Option<PathBuf>,
}

pub fn fit(args: &FitArgs) -> Result<FitResult, Failure> {
    let trace = parse_trace(&read_input(&args.trace)?, args.column.as_deref(), args.units)?;
    Ok(match args.model {
        FitModel::Dephasing => fit_dephasing(&trace)?,
        FitModel::Rabi => {
            let guess = args
                .j_guess
                .ok_or_else(|| Failure::usage("rabi fits need --j-guess"))?;
            fit_rabi(&trace, guess)?
        }
    })
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    let result = fit(args)?;
    for w in &result.warnings {
        warn(w);
    }
    let mut text = serde_json::to_string_pretty(&result).expect("fit serializes");
    text.push('\n');
    emit(args.out.as_deref(), text.as_bytes())?;
    if result.converged {
        Ok(())
    } else {
        Err(Failure::not_converged(format!("fit did not converge after {} iterations", result.n_iter))
            .with_context(json!({ "n_iter": result.n_iter, "warnings": result.warnings })))
    }
}

/// One entry of the measurements file. `value`/`stderr` are decay constants
/// in units of σ_hf; `value_sq`/`stderr_sq` give the squares directly.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementInput {
    pub kind: SigmaKind,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub stderr: Option<f64>,
    #[serde(default)]
    pub value_sq: Option<f64>,
    #[serde(default)]
    pub stderr_sq: Option<f64>,
}

impl MeasurementInput {
    fn resolve(&self, index: usize) -> Result<Measurement, Failure> {
        let bad = |msg: &str| Failure::usage(format!("measurement {index}: {msg}")).with_context(json!({ "index": index }));
        match (self.value, self.value_sq) {
            (Some(v), None) => {
                if self.stderr_sq.is_some() {
                    return Err(bad("stderr_sq goes with value_sq"));
                }
                Ok(Measurement::from_sigma(self.kind, v, self.stderr))
            }
            (None, Some(v2)) => {
                if self.stderr.is_some() {
                    return Err(bad("stderr goes with value"));
                }
                Ok(Measurement { kind: self.kind, value_sq: v2, stderr_sq: self.stderr_sq })
            }
            _ => Err(bad("give exactly one of value, value_sq")),
        }
    }
}

pub fn parse_measurements(text: &str) -> Result<Vec<Measurement>, Failure> {
    let inputs: Vec<MeasurementInput> = serde_json::from_str(text).map_err(|e| {
        Failure::usage(format!("invalid measurements: {e}"))
            .with_context(json!({ "line": e.line(), "column": e.column() }))
    })?;
    inputs.iter().enumerate().map(|(i, m)| m.resolve(i)).collect()
}

pub fn solve(text: &str, sigma3_only: bool) -> Result<serde_json::Value, Failure> {
    let measurements = parse_measurements(text)?;
    if sigma3_only {
        let (v, e) = solve_sigma3(&measurements)?;
        return Ok(json!({
            "sigma3_sq": v,
            "sigma3_sq_stderr": e,
            "sigma3": v.max(0.0).sqrt(),
            "feasible": v >= 0.0,
        }));
    }
    Ok(serde_json::to_value(solve_sigmas(&measurements)?).expect("solution serializes"))
}

pub fn cmd_solve(path: &Path, sigma3_only: bool, out: Option<&Path>) -> Result<(), Failure> {
    let value = solve(&read_input(path)?, sigma3_only)?;
    let mut text = serde_json::to_string_pretty(&value).expect("json");
    text.push('\n');
    emit(out, text.as_bytes())
}
