//! Strip everything no constraint can touch. The result has the same
//! anomalies as the input, up to the removed features.

use afm_doctor::reduce::{reduce, ModelSize};
use afm_doctor::{fixtures, parser};

fn main() {
    for (name, text) in [("robot", fixtures::ROBOT), ("tree_only", fixtures::TREE_ONLY)] {
        let model = parser::parse(text).unwrap();
        let reduced = reduce(&model);
        let (a, b) = (ModelSize::of(&model), ModelSize::of(&reduced));
        println!(
            "{name}: features {}->{}, attributes {}->{}, constraints {}->{}",
            a.features, b.features, a.attributes, b.attributes, a.constraints, b.constraints
        );
        print!("{}", parser::serialize(&reduced));
    }
}
