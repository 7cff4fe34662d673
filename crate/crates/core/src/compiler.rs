//! Translation of a feature model into a finite-domain CSP.
//!
//! Every feature becomes a `{0, 1}` variable and every attribute a variable
//! over its domain plus the reserved `nil` value. Tree relations, attributes
//! and cross-tree constraints are emitted as [`CompiledConstraint`]s that
//! remember the model element they came from.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{ArithOp, Attachment, ChildRelation, CmpOp, Expr, FeatureId, FeatureModel, Term};
use crate::solver::DomainSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarKind {
    Feature(FeatureId),
    Attribute { feature: FeatureId, attr: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub domain: DomainSet,
}

impl Variable {
    pub fn is_feature(&self) -> bool {
        matches!(self.kind, VarKind::Feature(_))
    }
}

/// `var = value` or `var \= value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lit {
    pub var: VarId,
    pub equal: bool,
    pub value: i64,
}

impl Lit {
    pub fn eq(var: VarId, value: i64) -> Lit {
        Lit { var, equal: true, value }
    }
    pub fn ne(var: VarId, value: i64) -> Lit {
        Lit { var, equal: false, value }
    }
    pub fn negated(self) -> Lit {
        Lit { equal: !self.equal, ..self }
    }
    pub fn holds(self, value: i64) -> bool {
        (value == self.value) == self.equal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Mandatory,
    Optional,
    Alternative,
    AttributeExistence,
    AbstractElement,
    AbstractExclusion,
}

/// The model element a compiled constraint stems from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Origin {
    /// Feature-tree relation. `features[0]` is the parent (or the attribute
    /// owner); `attr` names the attribute for attribute constraints.
    Tree {
        kind: RelationKind,
        features: Vec<String>,
        attr: Option<String>,
    },
    Ctc {
        name: String,
    },
    Assumption {
        description: String,
    },
}

impl Origin {
    pub fn describe(&self) -> String {
        match self {
            Origin::Tree { kind, features, attr } => {
                let what = match kind {
                    RelationKind::Mandatory => "mandatory",
                    RelationKind::Optional => "optional",
                    RelationKind::Alternative => "alternative",
                    RelationKind::AttributeExistence => "attribute",
                    RelationKind::AbstractElement | RelationKind::AbstractExclusion => "abstract attribute",
                };
                match attr {
                    Some(a) => format!("{what} {}:{a}", features[0]),
                    None => format!("{what} {}", features.join(" -> ")),
                }
            }
            Origin::Ctc { name } => format!("constraint {name}"),
            Origin::Assumption { description } => format!("check {description}"),
        }
    }
}

/// Arithmetic term over CSP variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CTerm {
    Int(i64),
    Var(VarId),
    Neg(Box<CTerm>),
    Bin(ArithOp, Box<CTerm>, Box<CTerm>),
}

/// `sum(coeffs * vars) + constant  op  0`, exact over rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub terms: Vec<(VarId, i128)>,
    pub constant: i128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub op: CmpOp,
    pub lhs: CTerm,
    pub rhs: CTerm,
    /// Every attribute variable mentioned; the comparison only applies when
    /// none of them is `nil`.
    pub vars: Vec<VarId>,
    pub linear: Option<Linear>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CExpr {
    Lit(Lit),
    Cmp(Box<Comparison>),
    Not(Box<CExpr>),
    And(Vec<CExpr>),
    Or(Vec<CExpr>),
    Implies(Box<CExpr>, Box<CExpr>),
    Iff(Box<CExpr>, Box<CExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Form {
    /// Mandatory relation `P = C`.
    Equal(VarId, VarId),
    /// `a ==> c1 \/ c2 ...`
    Implication {
        antecedent: Lit,
        consequent: Vec<Lit>,
    },
    /// `a <==> b`
    Equivalence(Lit, Lit),
    /// `sum(terms) = target`
    Sum {
        terms: Vec<VarId>,
        target: VarId,
    },
    /// `target` equals one of `list` (anonymous index).
    Element {
        list: Vec<VarId>,
        target: VarId,
    },
    /// Restriction of one variable to a set of values.
    Member {
        var: VarId,
        values: Vec<i64>,
    },
    Expr(CExpr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledConstraint {
    pub id: ConstraintId,
    pub origin: Origin,
    pub form: Form,
}

/// Variables, domains and constraints of a compiled model.
#[derive(Debug, Clone, PartialEq)]
pub struct Csp {
    pub vars: Vec<Variable>,
    pub constraints: Vec<CompiledConstraint>,
    /// Reserved value of absent attributes.
    pub nil: i64,
    feature_vars: Vec<VarId>,
    attr_vars: HashMap<(FeatureId, String), VarId>,
}

impl Csp {
    /// An empty CSP; mostly useful to build instances by hand.
    pub fn new(nil: i64) -> Csp {
        Csp { vars: Vec::new(), constraints: Vec::new(), nil, feature_vars: Vec::new(), attr_vars: HashMap::new() }
    }

    /// Adds a free-standing variable.
    pub fn add_var(&mut self, name: &str, domain: impl IntoIterator<Item = i64>) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(Variable {
            name: name.to_string(),
            kind: VarKind::Feature(FeatureId(usize::MAX)),
            domain: domain.into_iter().collect(),
        });
        id
    }

    pub fn add_constraint(&mut self, origin: Origin, form: Form) -> ConstraintId {
        let id = ConstraintId(self.constraints.len());
        self.constraints.push(CompiledConstraint { id, origin, form });
        id
    }

    pub fn feature_var(&self, f: FeatureId) -> VarId {
        self.feature_vars[f.0]
    }

    pub fn attr_var(&self, f: FeatureId, attr: &str) -> Option<VarId> {
        self.attr_vars.get(&(f, attr.to_string())).copied()
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn constraint(&self, id: ConstraintId) -> &CompiledConstraint {
        &self.constraints[id.0]
    }

    /// A check assumption restricting `var` to `values`. Its id lies outside
    /// the CSP's own constraint range.
    pub fn assumption(&self, var: VarId, values: Vec<i64>, description: impl Into<String>) -> CompiledConstraint {
        CompiledConstraint {
            id: ConstraintId(usize::MAX),
            origin: Origin::Assumption { description: description.into() },
            form: Form::Member { var, values },
        }
    }

    /// `feature = 1` (`present`) or `feature = 0`.
    pub fn assume_feature(&self, model: &FeatureModel, f: FeatureId, present: bool) -> CompiledConstraint {
        let v = self.feature_var(f);
        let bit = i64::from(present);
        self.assumption(v, vec![bit], format!("{} = {bit}", model.name(f)))
    }

    /// `attr = value`.
    pub fn assume_value(&self, var: VarId, value: i64) -> CompiledConstraint {
        let desc = format!("{} = {value}", self.vars[var.0].name);
        self.assumption(var, vec![value], desc)
    }

    /// `attr \= value`; `nil` stays allowed.
    pub fn assume_not_value(&self, var: VarId, value: i64) -> CompiledConstraint {
        let values = self.vars[var.0].domain.iter().filter(|&x| x != value).collect();
        let desc = format!("{} \\= {value}", self.vars[var.0].name);
        self.assumption(var, values, desc)
    }

    pub fn display(&self, c: &CompiledConstraint) -> String {
        self.display_form(&c.form)
    }

    pub fn display_form(&self, form: &Form) -> String {
        let n = |v: &VarId| self.vars[v.0].name.as_str();
        match form {
            Form::Equal(a, b) => format!("{} = {}", n(a), n(b)),
            Form::Implication { antecedent, consequent } => {
                let rhs: Vec<String> = consequent.iter().map(|l| self.lit_text(*l)).collect();
                format!("{} ==> {}", self.lit_text(*antecedent), rhs.join(" \\/ "))
            }
            Form::Equivalence(a, b) => format!("{} <==> {}", self.lit_text(*a), self.lit_text(*b)),
            Form::Sum { terms, target } => {
                let t: Vec<&str> = terms.iter().map(n).collect();
                format!("sum([{}], =, {})", t.join(", "), n(target))
            }
            Form::Element { list, target } => {
                let t: Vec<&str> = list.iter().map(n).collect();
                format!("element(_, [{}], {})", t.join(", "), n(target))
            }
            Form::Member { var, values } => {
                if values.len() == 1 {
                    format!("{} = {}", n(var), self.value_text(*var, values[0]))
                } else {
                    let full = &self.vars[var.0].domain;
                    let missing: Vec<i64> = full.iter().filter(|x| !values.contains(x)).collect();
                    if missing.len() == 1 {
                        format!("{} \\= {}", n(var), self.value_text(*var, missing[0]))
                    } else {
                        let vs: Vec<String> = values.iter().map(|v| self.value_text(*var, *v)).collect();
                        format!("{} in {{{}}}", n(var), vs.join(", "))
                    }
                }
            }
            Form::Expr(e) => self.expr_text(e, 0),
        }
    }

    fn value_text(&self, var: VarId, v: i64) -> String {
        if v == self.nil && !self.vars[var.0].is_feature() {
            "nil".to_string()
        } else {
            v.to_string()
        }
    }

    fn lit_text(&self, l: Lit) -> String {
        format!("{} {} {}", self.vars[l.var.0].name, if l.equal { "=" } else { "\\=" }, self.value_text(l.var, l.value))
    }

    fn expr_text(&self, e: &CExpr, parent: u8) -> String {
        let (prec, s) = match e {
            CExpr::Lit(l) => (9, self.lit_text(*l)),
            CExpr::Cmp(c) => (9, self.cmp_text(c)),
            CExpr::Not(a) => (5, format!("#\\ {}", self.expr_text(a, 5))),
            CExpr::And(xs) => (4, xs.iter().map(|x| self.expr_text(x, 5)).collect::<Vec<_>>().join(" /\\ ")),
            CExpr::Or(xs) => (3, xs.iter().map(|x| self.expr_text(x, 4)).collect::<Vec<_>>().join(" \\/ ")),
            CExpr::Implies(a, b) => (2, format!("{} ==> {}", self.expr_text(a, 3), self.expr_text(b, 2))),
            CExpr::Iff(a, b) => (1, format!("{} <==> {}", self.expr_text(a, 2), self.expr_text(b, 2))),
        };
        if prec < parent {
            format!("({s})")
        } else {
            s
        }
    }

    fn cmp_text(&self, c: &Comparison) -> String {
        match &c.linear {
            Some(lin) => {
                let mut left = String::new();
                let mut right = String::new();
                let push = |side: &mut String, coef: i128, name: &str| {
                    if !side.is_empty() {
                        side.push_str(" + ");
                    }
                    if coef == 1 {
                        side.push_str(name);
                    } else {
                        let _ = write!(side, "{coef}*{name}");
                    }
                };
                for (v, coef) in &lin.terms {
                    if *coef > 0 {
                        push(&mut left, *coef, &self.vars[v.0].name);
                    } else {
                        push(&mut right, -*coef, &self.vars[v.0].name);
                    }
                }
                if lin.constant > 0 {
                    let _ = write!(left, "{}{}", if left.is_empty() { "" } else { " + " }, lin.constant);
                } else if lin.constant < 0 {
                    let _ = write!(right, "{}{}", if right.is_empty() { "" } else { " + " }, -lin.constant);
                }
                if left.is_empty() {
                    left.push('0');
                }
                if right.is_empty() {
                    right.push('0');
                }
                format!("{left} {} {right}", c.op.symbol())
            }
            None => format!("{} {} {}", self.term_text(&c.lhs), c.op.symbol(), self.term_text(&c.rhs)),
        }
    }

    fn term_text(&self, t: &CTerm) -> String {
        match t {
            CTerm::Int(n) => n.to_string(),
            CTerm::Var(v) => self.vars[v.0].name.clone(),
            CTerm::Neg(a) => format!("-({})", self.term_text(a)),
            CTerm::Bin(op, a, b) => format!("({} {} {})", self.term_text(a), op.symbol(), self.term_text(b)),
        }
    }
}

/// Rational value used to evaluate comparisons exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: i128,
    den: i128,
}

impl Ratio {
    fn int(n: i64) -> Ratio {
        Ratio { num: n as i128, den: 1 }
    }

    fn normalized(num: i128, den: i128) -> Option<Ratio> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Some(Ratio { num: s * num / g, den: s * den / g })
    }

    fn cmp(self, other: Ratio) -> Option<std::cmp::Ordering> {
        let a = self.num.checked_mul(other.den)?;
        let b = other.num.checked_mul(self.den)?;
        Some(a.cmp(&b))
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl CTerm {
    pub fn is_constant(&self) -> bool {
        match self {
            CTerm::Int(_) => true,
            CTerm::Var(_) => false,
            CTerm::Neg(a) => a.is_constant(),
            CTerm::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    fn eval(&self, value: &impl Fn(VarId) -> i64) -> Option<Ratio> {
        Some(match self {
            CTerm::Int(n) => Ratio::int(*n),
            CTerm::Var(v) => Ratio::int(value(*v)),
            CTerm::Neg(a) => {
                let r = a.eval(value)?;
                Ratio { num: -r.num, den: r.den }
            }
            CTerm::Bin(op, a, b) => {
                let (x, y) = (a.eval(value)?, b.eval(value)?);
                match op {
                    ArithOp::Add => Ratio::normalized(
                        x.num.checked_mul(y.den)?.checked_add(y.num.checked_mul(x.den)?)?,
                        x.den.checked_mul(y.den)?,
                    )?,
                    ArithOp::Sub => Ratio::normalized(
                        x.num.checked_mul(y.den)?.checked_sub(y.num.checked_mul(x.den)?)?,
                        x.den.checked_mul(y.den)?,
                    )?,
                    ArithOp::Mul => Ratio::normalized(x.num.checked_mul(y.num)?, x.den.checked_mul(y.den)?)?,
                    ArithOp::Div => {
                        let q = Ratio::normalized(x.num.checked_mul(y.den)?, x.den.checked_mul(y.num)?)?;
                        if b.is_constant() {
                            q
                        } else {
                            // division by a variable term truncates toward zero
                            Ratio { num: q.num / q.den, den: 1 }
                        }
                    }
                }
            }
        })
    }

    fn linear(&self) -> Option<(BTreeMap<VarId, i128>, i128, i128)> {
        // (coefficients, constant, positive denominator)
        Some(match self {
            CTerm::Int(n) => (BTreeMap::new(), *n as i128, 1),
            CTerm::Var(v) => (BTreeMap::from([(*v, 1)]), 0, 1),
            CTerm::Neg(a) => {
                let (c, k, d) = a.linear()?;
                (c.into_iter().map(|(v, x)| (v, -x)).collect(), -k, d)
            }
            CTerm::Bin(op, a, b) => {
                let (ca, ka, da) = a.linear()?;
                let (cb, kb, db) = b.linear()?;
                match op {
                    ArithOp::Add | ArithOp::Sub => {
                        let s = if *op == ArithOp::Add { 1 } else { -1 };
                        let mut c: BTreeMap<VarId, i128> = ca.into_iter().map(|(v, x)| (v, x * db)).collect();
                        for (v, x) in cb {
                            *c.entry(v).or_insert(0) += s * x * da;
                        }
                        c.retain(|_, x| *x != 0);
                        (c, ka * db + s * kb * da, da * db)
                    }
                    ArithOp::Mul => {
                        if ca.is_empty() {
                            (cb.into_iter().map(|(v, x)| (v, x * ka)).collect(), ka * kb, da * db)
                        } else if cb.is_empty() {
                            (ca.into_iter().map(|(v, x)| (v, x * kb)).collect(), ka * kb, da * db)
                        } else {
                            return None;
                        }
                    }
                    ArithOp::Div => {
                        if !cb.is_empty() || kb == 0 {
                            return None;
                        }
                        // (a / da) / (kb / db) = (a * db) / (da * kb)
                        let s = if kb < 0 { -1 } else { 1 };
                        (ca.into_iter().map(|(v, x)| (v, s * x * db)).collect(), s * ka * db, da * kb.abs())
                    }
                }
            }
        })
    }
}

impl Comparison {
    pub fn new(op: CmpOp, lhs: CTerm, rhs: CTerm) -> Comparison {
        let mut vars = Vec::new();
        collect_vars(&lhs, &mut vars);
        collect_vars(&rhs, &mut vars);
        vars.sort();
        vars.dedup();
        let linear = match (lhs.linear(), rhs.linear()) {
            (Some((cl, kl, dl)), Some((cr, kr, dr))) => {
                let mut terms: BTreeMap<VarId, i128> = cl.into_iter().map(|(v, x)| (v, x * dr)).collect();
                for (v, x) in cr {
                    *terms.entry(v).or_insert(0) -= x * dl;
                }
                terms.retain(|_, x| *x != 0);
                Some(Linear { terms: terms.into_iter().collect(), constant: kl * dr - kr * dl })
            }
            _ => None,
        };
        Comparison { op, lhs, rhs, vars, linear }
    }

    /// Truth value under a full assignment. `nil` on any mentioned variable
    /// makes the comparison vacuously true.
    pub fn holds(&self, value: &impl Fn(VarId) -> i64, nil: i64) -> bool {
        if self.vars.iter().any(|v| value(*v) == nil) {
            return true;
        }
        match &self.linear {
            Some(lin) => {
                let mut s = lin.constant;
                for (v, c) in &lin.terms {
                    s += c * value(*v) as i128;
                }
                self.op.holds(s.cmp(&0))
            }
            None => match (self.lhs.eval(value), self.rhs.eval(value)) {
                (Some(a), Some(b)) => a.cmp(b).is_some_and(|o| self.op.holds(o)),
                _ => false,
            },
        }
    }
}

fn collect_vars(t: &CTerm, out: &mut Vec<VarId>) {
    match t {
        CTerm::Int(_) => {}
        CTerm::Var(v) => out.push(*v),
        CTerm::Neg(a) => collect_vars(a, out),
        CTerm::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
    }
}

impl CExpr {
    /// Truth value under a full assignment.
    pub fn holds(&self, value: &impl Fn(VarId) -> i64, nil: i64) -> bool {
        match self {
            CExpr::Lit(l) => l.holds(value(l.var)),
            CExpr::Cmp(c) => c.holds(value, nil),
            CExpr::Not(a) => !a.holds(value, nil),
            CExpr::And(xs) => xs.iter().all(|x| x.holds(value, nil)),
            CExpr::Or(xs) => xs.iter().any(|x| x.holds(value, nil)),
            CExpr::Implies(a, b) => !a.holds(value, nil) || b.holds(value, nil),
            CExpr::Iff(a, b) => a.holds(value, nil) == b.holds(value, nil),
        }
    }

    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            CExpr::Lit(l) => out.push(l.var),
            CExpr::Cmp(c) => out.extend(c.vars.iter().copied()),
            CExpr::Not(a) => a.vars(out),
            CExpr::And(xs) | CExpr::Or(xs) => xs.iter().for_each(|x| x.vars(out)),
            CExpr::Implies(a, b) | CExpr::Iff(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

impl Form {
    /// Variables the constraint mentions, deduplicated.
    pub fn vars(&self) -> Vec<VarId> {
        let mut out = match self {
            Form::Equal(a, b) => vec![*a, *b],
            Form::Implication { antecedent, consequent } => {
                std::iter::once(antecedent.var).chain(consequent.iter().map(|l| l.var)).collect()
            }
            Form::Equivalence(a, b) => vec![a.var, b.var],
            Form::Sum { terms, target } | Form::Element { list: terms, target } => {
                terms.iter().copied().chain(std::iter::once(*target)).collect()
            }
            Form::Member { var, .. } => vec![*var],
            Form::Expr(e) => {
                let mut v = Vec::new();
                e.vars(&mut v);
                v
            }
        };
        out.sort();
        out.dedup();
        out
    }

    /// Truth value under a full assignment.
    pub fn holds(&self, value: &impl Fn(VarId) -> i64, nil: i64) -> bool {
        match self {
            Form::Equal(a, b) => value(*a) == value(*b),
            Form::Implication { antecedent, consequent } => {
                !antecedent.holds(value(antecedent.var)) || consequent.iter().any(|l| l.holds(value(l.var)))
            }
            Form::Equivalence(a, b) => a.holds(value(a.var)) == b.holds(value(b.var)),
            Form::Sum { terms, target } => terms.iter().map(|v| value(*v)).sum::<i64>() == value(*target),
            Form::Element { list, target } => list.iter().any(|v| value(*v) == value(*target)),
            Form::Member { var, values } => values.contains(&value(*var)),
            Form::Expr(e) => e.holds(value, nil),
        }
    }
}

/// `nil` for a model: one below the smallest attribute value.
pub fn nil_value(model: &FeatureModel) -> i64 {
    model.features.iter().flat_map(|f| f.attributes.iter()).filter_map(|a| a.domain.first().copied()).min().unwrap_or(0)
        - 1
}

/// Compiles a valid model. Constraint order is deterministic: mandatory,
/// optional and alternative relations, attribute existence, abstract
/// attributes, then cross-tree constraints in declaration order.
pub fn compile(model: &FeatureModel) -> Csp {
    let nil = nil_value(model);
    let mut csp = Csp::new(nil);
    csp.feature_vars = vec![VarId(usize::MAX); model.features.len()];
    let order = model.preorder();
    for &f in &order {
        let id = VarId(csp.vars.len());
        csp.vars.push(Variable {
            name: model.name(f).to_string(),
            kind: VarKind::Feature(f),
            domain: DomainSet::from_iter([0, 1]),
        });
        csp.feature_vars[f.0] = id;
    }
    for &f in &order {
        for a in &model.feature(f).attributes {
            let id = VarId(csp.vars.len());
            let mut domain: DomainSet = a.domain.iter().copied().collect();
            domain.insert(nil);
            csp.vars.push(Variable {
                name: format!("{}:{}", model.name(f), a.name),
                kind: VarKind::Attribute { feature: f, attr: a.name.clone() },
                domain,
            });
            csp.attr_vars.insert((f, a.name.clone()), id);
        }
    }

    let name = |f: FeatureId| model.name(f).to_string();
    let tree = |kind, features: Vec<String>, attr: Option<String>| Origin::Tree { kind, features, attr };
    let mut by_kind: [Vec<(Origin, Form)>; 3] = Default::default();
    for &p in &order {
        let pv = csp.feature_var(p);
        for rel in &model.feature(p).children {
            match rel {
                ChildRelation::Mandatory(c) => by_kind[0].push((
                    tree(RelationKind::Mandatory, vec![name(p), name(*c)], None),
                    Form::Equal(pv, csp.feature_var(*c)),
                )),
                ChildRelation::Optional(c) => {
                    let cv = csp.feature_var(*c);
                    let origin = tree(RelationKind::Optional, vec![name(p), name(*c)], None);
                    by_kind[1].push((
                        origin.clone(),
                        Form::Implication { antecedent: Lit::eq(pv, 0), consequent: vec![Lit::eq(cv, 0)] },
                    ));
                    by_kind[1].push((
                        origin,
                        Form::Implication { antecedent: Lit::eq(cv, 1), consequent: vec![Lit::eq(pv, 1)] },
                    ));
                }
                ChildRelation::Alternative(cs) => {
                    let mut features = vec![name(p)];
                    features.extend(cs.iter().map(|c| name(*c)));
                    by_kind[2].push((
                        tree(RelationKind::Alternative, features, None),
                        Form::Sum { terms: cs.iter().map(|c| csp.feature_var(*c)).collect(), target: pv },
                    ));
                }
            }
        }
    }
    let mut attr_forms = Vec::new();
    let mut abstract_forms = Vec::new();
    for &f in &order {
        let fv = csp.feature_var(f);
        for a in &model.feature(f).attributes {
            let av = csp.attr_var(f, &a.name).unwrap();
            attr_forms.push((
                tree(RelationKind::AttributeExistence, vec![name(f)], Some(a.name.clone())),
                Form::Equivalence(Lit::eq(fv, 0), Lit::eq(av, nil)),
            ));
            if !a.is_abstract {
                continue;
            }
            let group: Vec<FeatureId> = model.feature(f).alternative_groups().next().unwrap_or(&[]).to_vec();
            let child_vars: Vec<(FeatureId, VarId)> =
                group.iter().filter_map(|c| csp.attr_var(*c, &a.name).map(|v| (*c, v))).collect();
            let mut features = vec![name(f)];
            features.extend(group.iter().map(|c| name(*c)));
            abstract_forms.push((
                tree(RelationKind::AbstractElement, features.clone(), Some(a.name.clone())),
                Form::Element { list: child_vars.iter().map(|(_, v)| *v).collect(), target: av },
            ));
            for &dv in &a.domain {
                let carriers: Vec<Lit> = child_vars
                    .iter()
                    .filter(|(c, _)| model.feature(*c).attribute(&a.name).is_some_and(|ca| ca.domain.contains(&dv)))
                    .map(|(_, v)| Lit::ne(*v, dv))
                    .collect();
                abstract_forms.push((
                    tree(RelationKind::AbstractExclusion, features.clone(), Some(a.name.clone())),
                    Form::Implication { antecedent: Lit::ne(av, dv), consequent: carriers },
                ));
            }
        }
    }
    let [mandatory, optional, alternative] = by_kind;
    for (origin, form) in
        mandatory.into_iter().chain(optional).chain(alternative).chain(attr_forms).chain(abstract_forms)
    {
        csp.add_constraint(origin, form);
    }
    let index = model.name_index();
    for ctc in &model.constraints {
        let expr = compile_ctc(&ctc.expr, &index, &csp);
        csp.add_constraint(Origin::Ctc { name: ctc.name.clone() }, Form::Expr(expr));
    }
    csp
}

/// Compiles one cross-tree constraint expression; references must resolve.
pub fn compile_ctc(expr: &Expr, index: &HashMap<&str, FeatureId>, csp: &Csp) -> CExpr {
    let fvar = |n: &str| csp.feature_var(index[n]);
    match expr {
        Expr::Exist(f) => CExpr::Lit(Lit::eq(fvar(f), 1)),
        Expr::NonExist(f) => CExpr::Lit(Lit::eq(fvar(f), 0)),
        Expr::Cmp(op, a, b) => {
            CExpr::Cmp(Box::new(Comparison::new(*op, compile_term(a, index, csp), compile_term(b, index, csp))))
        }
        Expr::Not(a) => CExpr::Not(Box::new(compile_ctc(a, index, csp))),
        Expr::And(a, b) => {
            let mut xs = Vec::new();
            flatten_and(&compile_ctc(a, index, csp), &mut xs);
            flatten_and(&compile_ctc(b, index, csp), &mut xs);
            CExpr::And(xs)
        }
        Expr::Or(a, b) => {
            let mut xs = Vec::new();
            flatten_or(compile_ctc(a, index, csp), &mut xs);
            flatten_or(compile_ctc(b, index, csp), &mut xs);
            CExpr::Or(xs)
        }
        Expr::Implies(a, b) => {
            CExpr::Implies(Box::new(compile_ctc(a, index, csp)), Box::new(compile_ctc(b, index, csp)))
        }
        Expr::Iff(a, b) => CExpr::Iff(Box::new(compile_ctc(a, index, csp)), Box::new(compile_ctc(b, index, csp))),
    }
}

fn flatten_and(e: &CExpr, out: &mut Vec<CExpr>) {
    match e {
        CExpr::And(xs) => out.extend(xs.iter().cloned()),
        other => out.push(other.clone()),
    }
}

fn flatten_or(e: CExpr, out: &mut Vec<CExpr>) {
    match e {
        CExpr::Or(xs) => out.extend(xs),
        other => out.push(other),
    }
}

fn compile_term(t: &Term, index: &HashMap<&str, FeatureId>, csp: &Csp) -> CTerm {
    match t {
        Term::Int(n) => CTerm::Int(*n),
        Term::Attr { feature, attr } => {
            CTerm::Var(csp.attr_var(index[feature.as_str()], attr).expect("resolved attribute"))
        }
        Term::Neg(a) => CTerm::Neg(Box::new(compile_term(a, index, csp))),
        Term::Bin(op, a, b) => {
            CTerm::Bin(*op, Box::new(compile_term(a, index, csp)), Box::new(compile_term(b, index, csp)))
        }
    }
}

/// Depth of the feature a tree constraint is anchored at (the deepest
/// feature it mentions for relations, the owner for attribute constraints).
pub fn anchor_depth(model: &FeatureModel, origin: &Origin) -> usize {
    let depth = |n: &str| model.find(n).map(|f| model.ancestors(f).count()).unwrap_or(0);
    match origin {
        Origin::Tree { kind, features, .. } => match kind {
            RelationKind::Mandatory | RelationKind::Optional | RelationKind::Alternative => {
                features.iter().skip(1).map(|n| depth(n)).max().unwrap_or(0)
            }
            _ => depth(&features[0]),
        },
        _ => 0,
    }
}

/// Whether a feature is fixed by its parent's presence.
pub fn is_mandatory(model: &FeatureModel, f: FeatureId) -> bool {
    model.attachment(f) == Attachment::Mandatory
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::robot;

    fn texts(csp: &Csp) -> Vec<String> {
        csp.constraints.iter().map(|c| csp.display(c)).collect()
    }

    #[test]
    fn robot_compiles_to_the_expected_constraints() {
        let m = robot();
        let csp = compile(&m);
        assert_eq!(csp.nil, 9);
        let got = texts(&csp);
        let expected = [
            "Robot = Motor",
            "Robot = Tool",
            "Protective_grid = Mounting_set",
            "Robot = 0 ==> Protective_grid = 0",
            "Protective_grid = 1 ==> Robot = 1",
            "sum([Drill, Glue, Mill], =, Tool)",
            "Motor = 0 <==> Motor:pwr = nil",
            "Tool = 0 <==> Tool:pwr_min = nil",
            "Drill = 0 <==> Drill:pwr_min = nil",
            "Glue = 0 <==> Glue:pwr_min = nil",
            "Mill = 0 <==> Mill:pwr_min = nil",
            "element(_, [Drill:pwr_min, Glue:pwr_min, Mill:pwr_min], Tool:pwr_min)",
            "Tool:pwr_min \\= 10 ==> Glue:pwr_min \\= 10",
            "Tool:pwr_min \\= 20 ==> Drill:pwr_min \\= 20 \\/ Mill:pwr_min \\= 20",
            "Robot = 1",
            "100*Motor:pwr >= 110*Tool:pwr_min",
            "Drill = 1 \\/ Mill = 1 ==> Protective_grid = 1",
        ];
        let mut a = got.clone();
        a.sort();
        let mut b: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        b.sort();
        assert_eq!(a, b, "{got:#?}");
        assert_eq!(csp.vars.len(), 8 + 5);
    }

    #[test]
    fn root_only_model() {
        let m = FeatureModel::with_root("R");
        let csp = compile(&m);
        assert_eq!(csp.vars.len(), 1);
        assert!(csp.constraints.is_empty());
    }

    #[test]
    fn attribute_existence_constraint() {
        let mut m = FeatureModel::with_root("P");
        m.add_attribute(m.root, "a", 1..=10);
        let csp = compile(&m);
        assert_eq!(texts(&csp), ["P = 0 <==> P:a = nil"]);
        assert_eq!(csp.var(VarId(1)).domain.len(), 11);
        assert_eq!(csp.nil, 0);
    }

    #[test]
    fn ctc_atoms() {
        let m = robot();
        let csp = compile(&m);
        let idx = m.name_index();
        let e = compile_ctc(&Expr::nonexist("Drill"), &idx, &csp);
        assert_eq!(e, CExpr::Lit(Lit::eq(csp.feature_var(m.find("Drill").unwrap()), 0)));
    }

    #[test]
    fn comparisons_are_guarded_and_exact() {
        let mut csp = Csp::new(-1);
        let a = csp.add_var("a", [-1, 21, 22]);
        let b = csp.add_var("b", [-1, 20]);
        let c = Comparison::new(
            CmpOp::Ge,
            CTerm::Var(a),
            CTerm::Bin(
                ArithOp::Div,
                Box::new(CTerm::Bin(ArithOp::Mul, Box::new(CTerm::Var(b)), Box::new(CTerm::Int(110)))),
                Box::new(CTerm::Int(100)),
            ),
        );
        assert!(c.linear.is_some());
        let at = |x: i64, y: i64| move |v: VarId| if v == a { x } else { y };
        assert!(!c.holds(&at(21, 20), -1)); // 21 < 22
        assert!(c.holds(&at(22, 20), -1));
        assert!(c.holds(&at(-1, 20), -1));
        // truncating division by a variable term
        let d = Comparison::new(
            CmpOp::Eq,
            CTerm::Bin(ArithOp::Div, Box::new(CTerm::Int(7)), Box::new(CTerm::Var(b))),
            CTerm::Int(0),
        );
        assert!(d.linear.is_none());
        assert!(d.holds(&at(0, 20), -1));
    }
}
