//! Parse a model file (or the built-in robot model), print its size and
//! the canonical serialization. Syntax errors come back with line and column.
//!
//!     cargo run --example parse_model -- models/robot.afm

use afm_doctor::{fixtures, parser, reduce::ModelSize};

fn main() {
    let (label, text) = match std::env::args().nth(1) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
            (path, text)
        }
        None => ("robot".to_string(), fixtures::ROBOT.to_string()),
    };
    match parser::parse(&text) {
        Ok(model) => {
            let size = ModelSize::of(&model);
            println!(
                "// {label}: {} features, {} attributes, {} constraints",
                size.features, size.attributes, size.constraints
            );
            print!("{}", parser::serialize(&model));
        }
        Err(errors) => {
            for e in errors {
                eprintln!("{label}:{e}");
            }
            std::process::exit(2);
        }
    }

    // a typo is reported at its position
    let broken = "feature Robot {\n    mandatory Motor {\n        attr pwr in {10, 20;\n    }\n}\n";
    if let Err(errors) = parser::parse(broken) {
        println!("// broken input: {}", errors[0]);
    }
}
