//! Explain an anomaly as a minimal set of conflicting constraints, once with
//! a single QuickXplain pass and once cascaded over modules.

use afm_doctor::detector::AnomalyKind;
use afm_doctor::explainer::{explain, ExplainMode};
use afm_doctor::{fixtures, parser};

fn main() {
    let model = parser::parse(fixtures::ROBOT_NO_GLUE).unwrap();
    let anomaly = AnomalyKind::FalseOptionalFeature { feature: "Protective_grid".into() };
    show(&model, &anomaly, ExplainMode::Simple);

    let modular = parser::parse(fixtures::ROBOT_MODULAR).unwrap();
    let anomaly = AnomalyKind::dead_value("Motor", "pwr", 10);
    show(&modular, &anomaly, ExplainMode::Simple);
    show(&modular, &anomaly, ExplainMode::Cascading);
}

fn show(model: &afm_doctor::FeatureModel, anomaly: &AnomalyKind, mode: ExplainMode) {
    let conflict = explain(model, anomaly, mode).expect("anomaly is present");
    println!("{anomaly} ({mode:?}, {} checks)", conflict.total_checks());
    for c in &conflict.background {
        println!("  assume  {}", c.origin.describe());
    }
    for c in &conflict.constraints {
        println!("          {}", c.origin.describe());
    }
}
