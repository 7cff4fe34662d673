//! Run the optimized detector next to the naive one and compare the number
//! of solver calls each needs for the same verdict.
//!
//!     cargo run --example detect_anomalies -- models/robot_noglue.afm

use afm_doctor::detector::{detect, detect_naive, expand_aftereffects, DetectOptions};
use afm_doctor::{fixtures, parser};

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable model"),
        None => fixtures::ROBOT_NO_GLUE.to_string(),
    };
    let model = parser::parse(&text).expect("valid model");
    let opts = DetectOptions::default();

    let fast = detect(&model, &opts);
    let naive = detect_naive(&model, &opts);

    println!("optimized ({} checks, {} pruned):", fast.checks_performed, fast.checks_pruned);
    for a in &fast.anomalies {
        println!("  {}{}", a.kind, if a.suppressed { "  [suppressed]" } else { "" });
    }
    println!("naive ({} checks):", naive.checks_performed);
    for a in &naive.anomalies {
        println!("  {}", a.kind);
    }

    // the optimized detector reports chain heads only; expanding them gives
    // the naive set back
    assert_eq!(expand_aftereffects(&model, &fast).kinds(), naive.kinds());
}
