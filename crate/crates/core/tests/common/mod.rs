//! Test oracles: exhaustive product enumeration straight from the model
//! semantics, and exhaustive minimal-conflict enumeration over a compiled CSP.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use afm_doctor::compiler::{CompiledConstraint, ConstraintId, Csp};
use afm_doctor::detector::AnomalyKind;
use afm_doctor::generate::{generate, CtcMode, GeneratorSpec};
use afm_doctor::model::{ArithOp, ChildRelation, CmpOp, Expr, FeatureId, FeatureModel, Term};

/// One product: presence per feature and values of the attributes of
/// present features (abstract attributes included).
#[derive(Debug, Clone)]
pub struct Product {
    pub present: Vec<bool>,
    pub values: HashMap<(usize, String), i64>,
}

impl Product {
    pub fn value(&self, f: FeatureId, attr: &str) -> Option<i64> {
        self.values.get(&(f.0, attr.to_string())).copied()
    }
}

/// Every presence vector allowed by the tree alone, the empty one included.
fn configurations(m: &FeatureModel) -> Vec<Vec<bool>> {
    fn below(m: &FeatureModel, f: FeatureId, acc: Vec<Vec<bool>>) -> Vec<Vec<bool>> {
        // `acc` has `f` present; expand its child relations
        let mut acc = acc;
        for rel in &m.feature(f).children {
            let mut next = Vec::new();
            match rel {
                ChildRelation::Mandatory(c) => {
                    let mut with: Vec<Vec<bool>> = acc;
                    for v in &mut with {
                        v[c.0] = true;
                    }
                    next = below(m, *c, with);
                }
                ChildRelation::Optional(c) => {
                    next.extend(acc.iter().cloned());
                    let mut with = acc;
                    for v in &mut with {
                        v[c.0] = true;
                    }
                    next.extend(below(m, *c, with));
                }
                ChildRelation::Alternative(cs) => {
                    for c in cs {
                        let mut with = acc.clone();
                        for v in &mut with {
                            v[c.0] = true;
                        }
                        next.extend(below(m, *c, with));
                    }
                }
            }
            acc = next;
        }
        acc
    }
    let n = m.features.len();
    let mut root_on = vec![false; n];
    root_on[m.root.0] = true;
    let mut out = vec![vec![false; n]];
    out.extend(below(m, m.root, vec![root_on]));
    out
}

/// All products of the tree and attributes, before cross-tree constraints.
pub fn tree_products(m: &FeatureModel) -> Vec<Product> {
    let mut out = Vec::new();
    for present in configurations(m) {
        let mut slots: Vec<(usize, String, Vec<i64>)> = Vec::new();
        for f in m.ids() {
            if !present[f.0] {
                continue;
            }
            for a in &m.feature(f).attributes {
                if !a.is_abstract {
                    slots.push((f.0, a.name.clone(), a.domain.clone()));
                }
            }
        }
        let mut partial = vec![HashMap::new()];
        for (f, a, dom) in &slots {
            let mut next = Vec::with_capacity(partial.len() * dom.len());
            for p in &partial {
                for v in dom {
                    let mut q: HashMap<(usize, String), i64> = p.clone();
                    q.insert((*f, a.clone()), *v);
                    next.push(q);
                }
            }
            partial = next;
        }
        for mut values in partial {
            // abstract attributes take the value of the selected member, deepest first
            for f in m.postorder() {
                if !present[f.0] {
                    continue;
                }
                for a in m.feature(f).attributes.iter().filter(|a| a.is_abstract) {
                    let group = m.feature(f).alternative_groups().next().unwrap();
                    let chosen = group.iter().find(|c| present[c.0]).unwrap();
                    let v = values[&(chosen.0, a.name.clone())];
                    values.insert((f.0, a.name.clone()), v);
                }
            }
            out.push(Product { present: present.clone(), values });
        }
    }
    out
}

/// Exact rational, reduced, positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Q(i128, i128);

impl Q {
    fn new(n: i128, d: i128) -> Option<Q> {
        if d == 0 {
            return None;
        }
        let (mut a, mut b) = (n.abs(), d.abs());
        while b != 0 {
            (a, b) = (b, a % b);
        }
        let g = a.max(1);
        let s = if d < 0 { -1 } else { 1 };
        Some(Q(s * n / g, s * d / g))
    }
    fn cmp(self, o: Q) -> std::cmp::Ordering {
        (self.0 * o.1).cmp(&(o.0 * self.1))
    }
}

fn constant(t: &Term) -> bool {
    match t {
        Term::Int(_) => true,
        Term::Attr { .. } => false,
        Term::Neg(a) => constant(a),
        Term::Bin(_, a, b) => constant(a) && constant(b),
    }
}

enum Val {
    Nil,
    Undefined,
    Q(Q),
}

fn term(m: &FeatureModel, p: &Product, t: &Term) -> Val {
    match t {
        Term::Int(n) => Val::Q(Q(*n as i128, 1)),
        Term::Attr { feature, attr } => match p.value(m.find(feature).unwrap(), attr) {
            Some(v) => Val::Q(Q(v as i128, 1)),
            None => Val::Nil,
        },
        Term::Neg(a) => match term(m, p, a) {
            Val::Q(q) => Val::Q(Q(-q.0, q.1)),
            other => other,
        },
        Term::Bin(op, a, b) => {
            let (x, y) = match (term(m, p, a), term(m, p, b)) {
                (Val::Nil, _) | (_, Val::Nil) => return Val::Nil,
                (Val::Undefined, _) | (_, Val::Undefined) => return Val::Undefined,
                (Val::Q(x), Val::Q(y)) => (x, y),
            };
            let r = match op {
                ArithOp::Add => Q::new(x.0 * y.1 + y.0 * x.1, x.1 * y.1),
                ArithOp::Sub => Q::new(x.0 * y.1 - y.0 * x.1, x.1 * y.1),
                ArithOp::Mul => Q::new(x.0 * y.0, x.1 * y.1),
                ArithOp::Div => Q::new(x.0 * y.1, x.1 * y.0).map(|q| if constant(b) { q } else { Q(q.0 / q.1, 1) }),
            };
            r.map_or(Val::Undefined, Val::Q)
        }
    }
}

/// Cross-tree semantics: a comparison touching an absent feature's attribute
/// holds vacuously; division by zero makes it false.
pub fn eval(m: &FeatureModel, p: &Product, e: &Expr) -> bool {
    let present = |f: &str| p.present[m.find(f).unwrap().0];
    match e {
        Expr::Exist(f) => present(f),
        Expr::NonExist(f) => !present(f),
        Expr::Cmp(op, a, b) => {
            let mut refs = Vec::new();
            a.visit_attrs(&mut refs);
            b.visit_attrs(&mut refs);
            if refs.iter().any(|(f, _)| !present(f)) {
                return true;
            }
            match (term(m, p, a), term(m, p, b)) {
                (Val::Q(x), Val::Q(y)) => op_holds(*op, x.cmp(y)),
                _ => false,
            }
        }
        Expr::Not(a) => !eval(m, p, a),
        Expr::And(a, b) => eval(m, p, a) && eval(m, p, b),
        Expr::Or(a, b) => eval(m, p, a) || eval(m, p, b),
        Expr::Implies(a, b) => !eval(m, p, a) || eval(m, p, b),
        Expr::Iff(a, b) => eval(m, p, a) == eval(m, p, b),
    }
}

fn op_holds(op: CmpOp, o: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        CmpOp::Eq => o == Equal,
        CmpOp::Ne => o != Equal,
        CmpOp::Lt => o == Less,
        CmpOp::Le => o != Greater,
        CmpOp::Gt => o == Greater,
        CmpOp::Ge => o != Less,
    }
}

pub fn products(m: &FeatureModel) -> Vec<Product> {
    tree_products(m).into_iter().filter(|p| m.constraints.iter().all(|c| eval(m, p, &c.expr))).collect()
}

/// Anomaly classification by enumeration, with the same candidate set as
/// the naive detector.
pub fn brute_force(m: &FeatureModel) -> BTreeSet<AnomalyKind> {
    let ps = products(m);
    let mut out = BTreeSet::new();
    if ps.is_empty() {
        out.insert(AnomalyKind::VoidModel);
        return out;
    }
    for f in m.ids() {
        let name = m.name(f).to_string();
        if ps.iter().all(|p| !p.present[f.0]) {
            out.insert(AnomalyKind::DeadFeature { feature: name.clone() });
        }
        if m.is_variation_point(f) && ps.iter().all(|p| p.present[f.0]) {
            out.insert(AnomalyKind::FalseOptionalFeature { feature: name.clone() });
        }
        for a in &m.feature(f).attributes {
            for &v in &a.domain {
                if ps.iter().all(|p| p.value(f, &a.name) != Some(v)) {
                    out.insert(AnomalyKind::dead_value(&name, &a.name, v));
                }
                if ps.iter().all(|p| p.value(f, &a.name) == Some(v)) {
                    out.insert(AnomalyKind::false_optional_value(&name, &a.name, v));
                }
            }
        }
    }
    out
}

/// Every assignment of the CSP variables, as the set of constraints it
/// satisfies. Only usable for small CSPs.
fn satisfied_masks(csp: &Csp, candidates: &[ConstraintId], background: &[CompiledConstraint]) -> Vec<u32> {
    assert!(candidates.len() <= 20, "exhaustive oracle is capped at 20 candidates");
    let n = csp.vars.len();
    let doms: Vec<Vec<i64>> = csp.vars.iter().map(|v| v.domain.iter().collect()).collect();
    let mut idx = vec![0usize; n];
    let mut masks = BTreeSet::new();
    loop {
        let value = |v: afm_doctor::compiler::VarId| doms[v.0][idx[v.0]];
        if background.iter().all(|b| b.form.holds(&value, csp.nil)) {
            let mut mask = 0u32;
            for (i, c) in candidates.iter().enumerate() {
                if csp.constraint(*c).form.holds(&value, csp.nil) {
                    mask |= 1 << i;
                }
            }
            masks.insert(mask);
        }
        let mut k = 0;
        loop {
            if k == n {
                return maximal(masks);
            }
            idx[k] += 1;
            if idx[k] < doms[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn maximal(masks: BTreeSet<u32>) -> Vec<u32> {
    let all: Vec<u32> = masks.into_iter().collect();
    all.iter().copied().filter(|&m| !all.iter().any(|&o| o != m && o & m == m)).collect()
}

/// All minimal subsets of `candidates` inconsistent together with `background`.
pub fn minimal_conflicts(
    csp: &Csp,
    candidates: &[ConstraintId],
    background: &[CompiledConstraint],
) -> Vec<BTreeSet<ConstraintId>> {
    let masks = satisfied_masks(csp, candidates, background);
    let consistent = |s: u32| masks.iter().any(|&m| m & s == s);
    let mut out = Vec::new();
    for s in 0u32..(1 << candidates.len()) {
        if consistent(s) {
            continue;
        }
        let minimal = (0..candidates.len()).filter(|i| s & (1 << i) != 0).all(|i| consistent(s & !(1 << i)));
        if minimal {
            out.push((0..candidates.len()).filter(|i| s & (1 << i) != 0).map(|i| candidates[i]).collect());
        }
    }
    out
}

/// The small random corpus: up to 15 features, 3 attributes and 3
/// cross-tree constraints.
pub fn small_model(seed: u64) -> FeatureModel {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let features = rng.gen_range(1..=15);
    let spec = GeneratorSpec {
        features,
        attributes: rng.gen_range(0..=3),
        optional_ratio: 0.5,
        alternative_groups: if features > 3 { rng.gen_range(0..=2) } else { 0 },
        group_size: rng.gen_range(2..=3),
        ctcs: rng.gen_range(0..=3),
        modules: 0,
        seed,
        max_domain: 3,
        mode: CtcMode::Random,
        ..Default::default()
    };
    generate(&spec).0
}
