//! Build the JSON report the CLI emits, including an explanation for every
//! active anomaly.

use afm_doctor::compiler::compile;
use afm_doctor::detector::{detect, DetectOptions};
use afm_doctor::explainer::{explain_in, ExplainMode};
use afm_doctor::report::ReportDocument;
use afm_doctor::{fixtures, parser};

fn main() {
    let model = parser::parse(fixtures::ROBOT_MODULAR).unwrap();
    let report = detect(&model, &DetectOptions::default());
    let mut doc = ReportDocument::new(&model, Some("robot_modular.afm"), &report);

    let csp = compile(&model);
    for a in report.active() {
        let conflict = explain_in(&csp, &model, &a.kind, ExplainMode::Cascading).unwrap();
        doc.add_explanation(&csp, &model, &a.kind, ExplainMode::Cascading, &conflict);
    }
    println!("{}", doc.to_json());
    eprint!("{}", doc.to_text());
}
