//! Assemble a model in code instead of parsing it, then analyze it.

use afm_doctor::detector::{detect, DetectOptions};
use afm_doctor::model::{Attachment, CmpOp, Expr, Term};
use afm_doctor::{parser, FeatureModel};

fn main() {
    let mut m = FeatureModel::with_root("Bike");
    let root = m.root;
    let frame = m.add_child(root, "Frame", Attachment::Mandatory);
    m.add_attribute(frame, "kg", [2, 3, 4]);
    let gears = m.add_child(root, "Gears", Attachment::Optional);
    let kinds = m.add_alternative(gears, &["Hub", "Derailleur"]);
    m.add_attribute(kinds[0], "kg", [2]);
    m.add_attribute(kinds[1], "kg", [1]);
    m.add_abstract_attribute(gears, "kg");

    // light frames cannot carry a hub gear
    m.add_constraint(
        "hub_needs_steel",
        Expr::implies(Expr::exist("Hub"), Expr::Cmp(CmpOp::Ge, Term::attr("Frame", "kg"), Term::Int(3))),
    );
    m.add_constraint("weight_limit", Expr::Cmp(CmpOp::Le, Term::attr("Frame", "kg"), Term::Int(2)));

    assert!(m.validate().is_empty());
    print!("{}", parser::serialize(&m));

    let report = detect(&m, &DetectOptions::default());
    for a in report.active() {
        println!("{}", a.kind);
    }
}
