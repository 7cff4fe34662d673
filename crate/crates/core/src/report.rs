//! Report documents shared by the text and JSON outputs.
//!
//! The JSON schema is described in `docs/report.md`. Field names are stable;
//! `stats.wall_time_ms` is only present when timing was requested, so that
//! documents for a fixed model and fixed options are byte-identical.

use std::fmt::Write as _;

use serde::Serialize;

use crate::compiler::{CompiledConstraint, Csp, Origin, RelationKind};
use crate::detector::{AnomalyKind, AnomalyReport};
use crate::explainer::{ConflictSet, ExplainMode};
use crate::model::{FeatureModel, SourceSpan};
use crate::quickxplain::QxStats;
use crate::reduce::ModelSize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub model: ModelSummary,
    pub void: bool,
    pub anomalies: Vec<AnomalyEntry>,
    pub explanations: Vec<ExplanationEntry>,
    pub stats: StatsEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub path: Option<String>,
    pub features: usize,
    pub attributes: usize,
    /// Cross-tree constraints as written.
    pub constraints: usize,
    pub compiled_constraints: usize,
    /// Size after reduction, when the detector reduced the model.
    pub reduced: Option<ModelSize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyEntry {
    #[serde(flatten)]
    pub kind: AnomalyKind,
    pub suppressed: bool,
    pub module: Option<String>,
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintEntry {
    pub text: String,
    pub origin: String,
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationEntry {
    pub anomaly: AnomalyKind,
    pub mode: ExplainMode,
    pub background: Vec<ConstraintEntry>,
    pub constraints: Vec<ConstraintEntry>,
    pub checks: u64,
    pub passes: Vec<QxStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StatsEntry {
    pub checks_performed: u64,
    pub checks_pruned: u64,
    pub propagation_steps: u64,
    pub backtracks: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// Where an element is written. `None` for assumptions and unknown names.
pub fn anomaly_span(model: &FeatureModel, kind: &AnomalyKind) -> Option<SourceSpan> {
    let f = model.find(kind.feature()?)?;
    let feature = model.feature(f);
    match kind {
        AnomalyKind::DeadAttributeValue { attr, .. } | AnomalyKind::FalseOptionalAttributeValue { attr, .. } => {
            feature.attribute(attr).map(|a| a.span)
        }
        _ => Some(feature.span),
    }
}

pub fn constraint_span(model: &FeatureModel, c: &CompiledConstraint) -> Option<SourceSpan> {
    match &c.origin {
        Origin::Tree { kind, features, attr } => {
            let f = match kind {
                RelationKind::Mandatory | RelationKind::Optional | RelationKind::Alternative => features.get(1)?,
                _ => &features[0],
            };
            let feature = model.feature(model.find(f)?);
            match attr {
                Some(a) => feature.attribute(a).map(|a| a.span),
                None => Some(feature.span),
            }
        }
        Origin::Ctc { name } => model.constraints.iter().find(|k| &k.name == name).map(|k| k.span),
        Origin::Assumption { .. } => None,
    }
}

pub fn constraint_entry(csp: &Csp, model: &FeatureModel, c: &CompiledConstraint) -> ConstraintEntry {
    ConstraintEntry { text: csp.display(c), origin: c.origin.describe(), span: constraint_span(model, c) }
}

impl ReportDocument {
    pub fn new(model: &FeatureModel, path: Option<&str>, report: &AnomalyReport) -> ReportDocument {
        let size = ModelSize::of(model);
        ReportDocument {
            model: ModelSummary {
                path: path.map(str::to_string),
                features: size.features,
                attributes: size.attributes,
                constraints: model.constraints.len(),
                compiled_constraints: size.constraints,
                reduced: report.reduced.then_some(report.reduced_size),
            },
            void: report.is_void(),
            anomalies: report
                .anomalies
                .iter()
                .map(|a| AnomalyEntry {
                    kind: a.kind.clone(),
                    suppressed: a.suppressed,
                    module: a
                        .kind
                        .feature()
                        .and_then(|f| model.find(f))
                        .and_then(|f| model.module_of(f))
                        .map(str::to_string),
                    span: anomaly_span(model, &a.kind),
                })
                .collect(),
            explanations: Vec::new(),
            stats: StatsEntry {
                checks_performed: report.checks_performed,
                checks_pruned: report.checks_pruned,
                propagation_steps: report.stats.propagation_steps,
                backtracks: report.stats.backtracks,
                wall_time_ms: None,
            },
        }
    }

    pub fn add_explanation(
        &mut self,
        csp: &Csp,
        model: &FeatureModel,
        anomaly: &AnomalyKind,
        mode: ExplainMode,
        conflict: &ConflictSet,
    ) {
        self.explanations.push(ExplanationEntry {
            anomaly: anomaly.clone(),
            mode,
            background: conflict.background.iter().map(|c| constraint_entry(csp, model, c)).collect(),
            constraints: conflict.constraints.iter().map(|c| constraint_entry(csp, model, c)).collect(),
            checks: conflict.total_checks(),
            passes: conflict.passes.clone(),
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let path = self.model.path.as_deref();
        let at = |span: &Option<SourceSpan>| match (span, path) {
            (Some(s), Some(p)) if s.line > 0 => format!("  ({p}:{s})"),
            (Some(s), None) if s.line > 0 => format!("  ({s})"),
            _ => String::new(),
        };
        let m = &self.model;
        let _ = write!(
            out,
            "{}: {} features, {} attributes, {} constraints",
            path.unwrap_or("model"),
            m.features,
            m.attributes,
            m.constraints
        );
        if let Some(r) = m.reduced {
            let _ = write!(out, "; reduced to {} features, {} attributes", r.features, r.attributes);
        }
        out.push('\n');
        if self.void {
            out.push_str("the model is void: it admits no product\n");
        }
        for a in &self.anomalies {
            let mut line = a.kind.to_string();
            if a.suppressed {
                line.push_str(" [suppressed]");
            }
            let _ = writeln!(out, "{line}{}", at(&a.span));
        }
        if self.explanations.is_empty() {
            let active = self.anomalies.iter().filter(|a| !a.suppressed).count();
            let _ = writeln!(
                out,
                "anomalies: {active} active, {} suppressed; checks: {} performed, {} pruned; backtracks: {}",
                self.anomalies.len() - active,
                self.stats.checks_performed,
                self.stats.checks_pruned,
                self.stats.backtracks
            );
        }
        if let Some(ms) = self.stats.wall_time_ms {
            let _ = writeln!(out, "time {ms:.1} ms");
        }
        for e in &self.explanations {
            let mode = match e.mode {
                ExplainMode::Simple => "simple",
                ExplainMode::Cascading => "cascading",
            };
            let passes = if e.passes.len() == 1 { "pass" } else { "passes" };
            let _ = writeln!(
                out,
                "\nconflict for {} ({mode}, {} checks over {} {passes})",
                e.anomaly,
                e.checks,
                e.passes.len()
            );
            let width = e.background.iter().chain(&e.constraints).map(|c| c.text.len()).max().unwrap_or(0);
            for (i, c) in e.background.iter().chain(&e.constraints).enumerate() {
                let _ = writeln!(out, "{:>3}  {:<width$}  {}{}", i + 1, c.text, c.origin, at(&c.span));
            }
        }
        out
    }
}
