//! The `afm-doctor` command line.
//!
//! Exit codes: 0 clean, 1 anomalies found, 2 parse, validation or usage
//! error, 3 void model, 4 anomaly not reproducible.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::compiler::compile;
use crate::detector::{detect, detect_naive, expand_aftereffects, AnomalyKind, DetectOptions};
use crate::explainer::{explain_in, ExplainMode};
use crate::generate::{generate, CtcMode, GeneratorSpec};
use crate::model::FeatureModel;
use crate::parser;
use crate::reduce::{reduce, ModelSize};
use crate::report::ReportDocument;
use crate::solver::{Branching, LabelingOptions, ValueOrder, VarOrder};
use crate::Error;

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_ANOMALIES: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_VOID: i32 = 3;
pub const EXIT_NOT_REPRODUCIBLE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "afm-doctor", version, about = "Find and explain contradictions in attributed feature models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect void models, dead and false-optional features and values.
    Analyze(AnalyzeArgs),
    /// Print a minimal set of constraints causing one anomaly.
    Explain(ExplainArgs),
    /// Remove elements that cannot take part in a contradiction.
    Reduce { path: PathBuf },
    /// Write a synthetic model.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct StrategyArgs {
    /// Variable order for feature variables.
    #[arg(long, value_enum)]
    feature_order: Option<VarOrderArg>,
    /// Variable order for attribute variables.
    #[arg(long, value_enum)]
    attribute_order: Option<VarOrderArg>,
    /// Value order for attribute variables
    #[arg(long, value_enum)]
    attribute_values: Option<ValueOrderArg>,
    #[arg(long, value_enum)]
    attribute_branching: Option<BranchingArg>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    path: PathBuf,
    /// One check per candidate on the full model.
    #[arg(long)]
    naive: bool,
    /// Analyze the model as written, without reduction first
    #[arg(long)]
    no_reduce: bool,
    /// Also list anomalies implied by the reported ones.
    #[arg(long)]
    expand: bool,
    /// Print the JSON report instead of text
    #[arg(long)]
    json: bool,
    /// Include wall-clock time.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    strategy: StrategyArgs,
}

#[derive(Args, Debug)]
#[group(id = "selector", required = true, multiple = false)]
struct Selector {
    #[arg(long, value_name = "FEATURE")]
    dead_feature: Option<String>,
    #[arg(long, value_name = "FEATURE")]
    false_optional: Option<String>,
    /// `Feature:attr=value`
    #[arg(long, value_name = "F:A=V")]
    dead_value: Option<String>,
    #[arg(long, value_name = "F:A=V")]
    false_optional_value: Option<String>,
    #[arg(long)]
    void: bool,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    path: PathBuf,
    #[command(flatten)]
    selector: Selector,
    #[arg(long, value_enum, default_value = "simple")]
    mode: ModeArg,
    /// Print the JSON report instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    features: usize,
    #[arg(long, default_value_t = 10)]
    attributes: usize,
    #[arg(long, default_value_t = 0.5)]
    optional_ratio: f64,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 3)]
    group_size: usize,
    #[arg(long, default_value_t = 5)]
    ctcs: usize,
    #[arg(long, default_value_t = 0)]
    modules: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    max_domain: usize,
    /// Draw arbitrary constraints instead of tautologies.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 0)]
    plant_dead_features: usize,
    #[arg(long, default_value_t = 0)]
    plant_dead_values: usize,
    #[arg(long, default_value_t = 0)]
    plant_false_optional: usize,
    /// Model file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Manifest file; defaults to `<output>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VarOrderArg {
    SmallestDomain,
    MostConstrained,
    Declaration,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ValueOrderArg {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BranchingArg {
    Enumerate,
    Bisect,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Simple,
    Cascade,
}

impl From<VarOrderArg> for VarOrder {
    fn from(v: VarOrderArg) -> Self {
        match v {
            VarOrderArg::SmallestDomain => VarOrder::SmallestDomainFirst,
            VarOrderArg::MostConstrained => VarOrder::MostConstrainedFirst,
            VarOrderArg::Declaration => VarOrder::DeclarationOrder,
        }
    }
}

impl StrategyArgs {
    fn labeling(&self) -> LabelingOptions {
        let mut l = LabelingOptions::default();
        if let Some(o) = self.feature_order {
            l.features.var_order = o.into();
        }
        if let Some(o) = self.attribute_order {
            l.attributes.var_order = o.into();
        }
        if let Some(v) = self.attribute_values {
            l.attributes.value_order = match v {
                ValueOrderArg::Up => ValueOrder::UpFirst,
                ValueOrderArg::Down => ValueOrder::DownFirst,
            };
        }
        if let Some(b) = self.attribute_branching {
            l.attributes.branching = match b {
                BranchingArg::Enumerate => Branching::Enumerate,
                BranchingArg::Bisect => Branching::Bisect,
            };
        }
        l
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_CLEAN };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let path = match &cli.command {
        Command::Analyze(a) => Some(a.path.clone()),
        Command::Explain(a) => Some(a.path.clone()),
        Command::Reduce { path } => Some(path.clone()),
        Command::Generate(_) => None,
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(&a, out),
        Command::Explain(a) => explain(&a, out),
        Command::Reduce { path } => reduce_cmd(&path, out),
        Command::Generate(a) => generate_cmd(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(Error::Parse(errs)) => {
            let label = path.map(|p| p.display().to_string()).unwrap_or_default();
            for e in errs {
                let _ = writeln!(err, "{label}:{e}");
            }
            EXIT_INVALID
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::AnomalyNotReproducible => EXIT_NOT_REPRODUCIBLE,
                _ => EXIT_INVALID,
            }
        }
    }
}

fn load(path: &Path) -> Result<FeatureModel, Error> {
    let text = std::fs::read_to_string(path)?;
    parser::parse(&text).map_err(Error::Parse)
}

fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let model = load(&a.path)?;
    let opts = DetectOptions { reduce: !a.no_reduce, labeling: a.strategy.labeling(), threads: None };
    let start = Instant::now();
    let mut report = if a.naive { detect_naive(&model, &opts) } else { detect(&model, &opts) };
    if a.expand && !a.naive {
        report = expand_aftereffects(&model, &report);
    }
    let elapsed = start.elapsed();
    let mut doc = ReportDocument::new(&model, Some(&a.path.display().to_string()), &report);
    if a.timing {
        doc.stats.wall_time_ms = Some(elapsed.as_secs_f64() * 1000.0);
    }
    emit(&doc, a.json, out)?;
    Ok(if report.is_void() {
        EXIT_VOID
    } else if report.active().next().is_some() {
        EXIT_ANOMALIES
    } else {
        EXIT_CLEAN
    })
}

/// Splits `F:a=v`.
fn value_selector(s: &str) -> Result<(String, String, i64), Error> {
    let bad = || Error::UnknownValue { attr: s.to_string(), value: 0 };
    let (fa, v) = s.split_once('=').ok_or_else(bad)?;
    let (f, a) = fa.split_once(':').ok_or_else(bad)?;
    let v = v.trim().parse().map_err(|_| bad())?;
    Ok((f.trim().to_string(), a.trim().to_string(), v))
}

impl Selector {
    fn anomaly(&self) -> Result<AnomalyKind, Error> {
        if let Some(f) = &self.dead_feature {
            return Ok(AnomalyKind::DeadFeature { feature: f.clone() });
        }
        if let Some(f) = &self.false_optional {
            return Ok(AnomalyKind::FalseOptionalFeature { feature: f.clone() });
        }
        if let Some(s) = &self.dead_value {
            let (f, a, v) = value_selector(s)?;
            return Ok(AnomalyKind::dead_value(&f, &a, v));
        }
        if let Some(s) = &self.false_optional_value {
            let (f, a, v) = value_selector(s)?;
            return Ok(AnomalyKind::false_optional_value(&f, &a, v));
        }
        Ok(AnomalyKind::VoidModel)
    }
}

fn explain(a: &ExplainArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let model = load(&a.path)?;
    let anomaly = a.selector.anomaly()?;
    let mode = match a.mode {
        ModeArg::Simple => ExplainMode::Simple,
        ModeArg::Cascade => ExplainMode::Cascading,
    };
    let csp = compile(&model);
    let conflict = explain_in(&csp, &model, &anomaly, mode)?;
    let report = crate::detector::AnomalyReport {
        anomalies: Vec::new(),
        stats: conflict.stats,
        reduced_size: ModelSize::of(&model),
        checks_performed: conflict.total_checks(),
        checks_pruned: 0,
        reduced: false,
        initial_sets: None,
    };
    let mut doc = ReportDocument::new(&model, Some(&a.path.display().to_string()), &report);
    doc.add_explanation(&csp, &model, &anomaly, mode, &conflict);
    emit(&doc, a.json, out)?;
    Ok(EXIT_CLEAN)
}

fn reduce_cmd(path: &Path, out: &mut dyn Write) -> Result<i32, Error> {
    let model = load(path)?;
    let reduced = reduce(&model);
    let (before, after) = (ModelSize::of(&model), ModelSize::of(&reduced));
    writeln!(out, "// features {}->{}", before.features, after.features)?;
    writeln!(out, "// attributes {}->{}", before.attributes, after.attributes)?;
    writeln!(out, "// constraints {}->{}", before.constraints, after.constraints)?;
    out.write_all(parser::serialize(&reduced).as_bytes())?;
    Ok(EXIT_CLEAN)
}

fn generate_cmd(a: &GenerateArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let spec = GeneratorSpec {
        features: a.features,
        attributes: a.attributes,
        optional_ratio: a.optional_ratio,
        alternative_groups: a.groups,
        group_size: a.group_size,
        ctcs: a.ctcs,
        modules: a.modules,
        seed: a.seed,
        max_domain: a.max_domain,
        mode: if a.random { CtcMode::Random } else { CtcMode::Safe },
        plant_dead_features: a.plant_dead_features,
        plant_dead_values: a.plant_dead_values,
        plant_false_optional: a.plant_false_optional,
    };
    let (model, manifest) = generate(&spec);
    let text = parser::serialize(&model);
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    match &a.output {
        Some(path) => {
            std::fs::write(path, text)?;
            let mpath = a.manifest.clone().unwrap_or_else(|| {
                let mut p = path.clone().into_os_string();
                p.push(".manifest.json");
                p.into()
            });
            std::fs::write(mpath, manifest_json)?;
        }
        None => {
            out.write_all(text.as_bytes())?;
            if let Some(mpath) = &a.manifest {
                std::fs::write(mpath, manifest_json)?;
            }
        }
    }
    Ok(EXIT_CLEAN)
}

fn emit(doc: &ReportDocument, json: bool, out: &mut dyn Write) -> Result<(), Error> {
    if json {
        writeln!(out, "{}", doc.to_json())?;
    } else {
        out.write_all(doc.to_text().as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn selectors() {
        assert_eq!(value_selector("Motor:pwr=10").unwrap(), ("Motor".into(), "pwr".into(), 10));
        assert!(value_selector("Motor=10").is_err());
        let (code, _, _) = run_str(&["afm-doctor", "explain", "x.afm"]);
        assert_eq!(code, EXIT_INVALID);
    }

    #[test]
    fn missing_file() {
        let (code, _, err) = run_str(&["afm-doctor", "analyze", "/nonexistent/model.afm"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn generate_stdout() {
        let (code, out, _) = run_str(&[
            "afm-doctor",
            "generate",
            "--features",
            "1",
            "--attributes",
            "0",
            "--groups",
            "0",
            "--ctcs",
            "0",
        ]);
        assert_eq!(code, 0);
        assert_eq!(out, "feature F0 {}\n");
    }
}
