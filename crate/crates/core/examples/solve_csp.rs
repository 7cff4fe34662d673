//! Work with the compiled constraint problem directly: inspect variables,
//! propagate, and find a configuration under two labeling strategies.

use afm_doctor::compiler::compile;
use afm_doctor::solver::{propagate, solve, LabelingOptions, ValueOrder};
use afm_doctor::{fixtures, parser};

fn main() {
    let model = parser::parse(fixtures::ROBOT).unwrap();
    let csp = compile(&model);
    println!("{} variables, {} constraints, nil = {}", csp.vars.len(), csp.constraints.len(), csp.nil);
    for c in &csp.constraints {
        println!("  {:<40} {}", csp.display(c), c.origin.describe());
    }

    let initial: Vec<_> = csp.vars.iter().map(|v| v.domain.clone()).collect();
    let domains = propagate(&csp, &initial).expect("model is not void");
    println!("after propagation:");
    for (v, d) in csp.vars.iter().zip(&domains) {
        println!("  {:<16} {:?}", v.name, d.as_slice());
    }

    for order in [ValueOrder::UpFirst, ValueOrder::DownFirst] {
        let opts = LabelingOptions::default().with_feature_values(order);
        let (sol, stats) = solve(&csp, &opts);
        let sol = sol.expect("a configuration exists");
        let chosen: Vec<&str> = csp
            .vars
            .iter()
            .zip(&sol.values)
            .filter(|(v, x)| v.is_feature() && **x == 1)
            .map(|(v, _)| v.name.as_str())
            .collect();
        println!("{order:?}: {} ({} backtracks)", chosen.join(" "), stats.backtracks);
    }
}
