//! Generate a seeded modular model with planted anomalies and confirm the
//! detector finds exactly what the manifest says.
//!
//!     cargo run --release --example generate_models -- 7

use std::collections::BTreeSet;

use afm_doctor::detector::{detect, DetectOptions};
use afm_doctor::generate::{generate, GeneratorSpec};
use afm_doctor::reduce::ModelSize;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = GeneratorSpec {
        seed,
        features: 150,
        attributes: 400,
        ctcs: 50,
        modules: 6,
        plant_dead_features: 2,
        plant_dead_values: 2,
        plant_false_optional: 1,
        ..Default::default()
    };
    let (model, manifest) = generate(&spec);
    let size = ModelSize::of(&model);
    println!(
        "seed {seed}: {} features, {} attributes, {} constraints",
        size.features, size.attributes, size.constraints
    );

    // chain heads only, so a dead feature does not drag its subtree along
    let report = detect(&model, &DetectOptions::default());
    let found = report.kinds();
    let planted: BTreeSet<_> = manifest.planted.iter().map(|p| p.anomaly.clone()).collect();
    for p in &manifest.planted {
        let hit = if found.contains(&p.anomaly) { "found" } else { "MISSED" };
        println!("  {hit}  {} via {} in {}", p.anomaly, p.constraint, p.module.as_deref().unwrap_or("-"));
    }
    assert_eq!(found, planted);
}
