//! In-memory attributed feature models and their structural validation.
//!
//! A [`FeatureModel`] owns a feature tree (stored as an arena indexed by
//! [`FeatureId`]), the cross-tree constraints written against it, optional
//! module declarations and pragmas. References inside constraints are kept by
//! name so that models can be transformed (see [`crate::reduce`]) without
//! rewriting expressions.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

/// Location of a model element in its source text. Lines and columns are
/// 1-based; `end_col` is exclusive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct SourceSpan {
    pub line: u32,
    pub col: u32,
    pub end_col: u32,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}", self.line, self.col, self.end_col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FeatureId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChildRelation {
    Mandatory(FeatureId),
    Optional(FeatureId),
    Alternative(Vec<FeatureId>),
}

impl ChildRelation {
    pub fn members(&self) -> &[FeatureId] {
        match self {
            ChildRelation::Mandatory(c) | ChildRelation::Optional(c) => std::slice::from_ref(c),
            ChildRelation::Alternative(cs) => cs,
        }
    }
}

/// How a feature hangs below its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Attachment {
    Root,
    Mandatory,
    Optional,
    Alternative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    /// Sorted, deduplicated domain. For abstract attributes this is the union
    /// of the children's domains.
    pub domain: Vec<i64>,
    pub is_abstract: bool,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub children: Vec<ChildRelation>,
    pub parent: Option<FeatureId>,
    pub module: Option<String>,
    pub span: SourceSpan,
}

impl Feature {
    pub fn new(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            attributes: Vec::new(),
            children: Vec::new(),
            parent: None,
            module: None,
            span: SourceSpan::default(),
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn alternative_groups(&self) -> impl Iterator<Item = &[FeatureId]> {
        self.children.iter().filter_map(|r| match r {
            ChildRelation::Alternative(cs) => Some(cs.as_slice()),
            _ => None,
        })
    }

    pub fn child_ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.children.iter().flat_map(|r| r.members().iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds(self, lhs: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => lhs == Equal,
            CmpOp::Ne => lhs != Equal,
            CmpOp::Lt => lhs == Less,
            CmpOp::Le => lhs != Greater,
            CmpOp::Gt => lhs == Greater,
            CmpOp::Ge => lhs != Less,
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "\\=",
            CmpOp::Lt => "<",
            CmpOp::Le => "=<",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// Arithmetic term over integer literals and attribute references.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Int(i64),
    Attr { feature: String, attr: String },
    Neg(Box<Term>),
    Bin(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn attr(feature: &str, attr: &str) -> Term {
        Term::Attr { feature: feature.to_string(), attr: attr.to_string() }
    }

    pub fn bin(op: ArithOp, lhs: Term, rhs: Term) -> Term {
        Term::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn visit_attrs<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        match self {
            Term::Int(_) => {}
            Term::Attr { feature, attr } => out.push((feature, attr)),
            Term::Neg(t) => t.visit_attrs(out),
            Term::Bin(_, a, b) => {
                a.visit_attrs(out);
                b.visit_attrs(out);
            }
        }
    }

    /// True if the term contains no attribute reference.
    pub fn is_constant(&self) -> bool {
        let mut v = Vec::new();
        self.visit_attrs(&mut v);
        v.is_empty()
    }
}

/// Boolean cross-tree constraint expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Exist(String),
    NonExist(String),
    Cmp(CmpOp, Term, Term),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Iff(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn exist(f: &str) -> Expr {
        Expr::Exist(f.to_string())
    }
    pub fn nonexist(f: &str) -> Expr {
        Expr::NonExist(f.to_string())
    }
    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }
    pub fn implies(a: Expr, b: Expr) -> Expr {
        Expr::Implies(Box::new(a), Box::new(b))
    }
    pub fn iff(a: Expr, b: Expr) -> Expr {
        Expr::Iff(Box::new(a), Box::new(b))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Expr) -> Expr {
        Expr::Not(Box::new(a))
    }

    /// Features referenced through `exist`/`nonexist`.
    pub fn feature_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| match e {
            Expr::Exist(f) | Expr::NonExist(f) => out.push(f.as_str()),
            _ => {}
        });
        out
    }

    /// Attribute references `(feature, attr)` in arithmetic terms.
    pub fn attr_refs(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.walk_terms(&mut out);
        out
    }

    fn walk_terms<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        match self {
            Expr::Exist(_) | Expr::NonExist(_) => {}
            Expr::Cmp(_, a, b) => {
                a.visit_attrs(out);
                b.visit_attrs(out);
            }
            Expr::Not(a) => a.walk_terms(out),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) | Expr::Iff(a, b) => {
                a.walk_terms(out);
                b.walk_terms(out);
            }
        }
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Not(a) => a.walk(f),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) | Expr::Iff(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossTreeConstraint {
    pub name: String,
    pub expr: Expr,
    pub module: Option<String>,
    pub span: SourceSpan,
}

/// Anomaly property a pragma can suppress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Property {
    DeadFeature,
    FalseOptionalFeature,
    DeadAttributeValue,
    FalseOptionalAttributeValue,
}

impl Property {
    pub fn keyword(self) -> &'static str {
        match self {
            Property::DeadFeature => "dead_feature",
            Property::FalseOptionalFeature => "false_optional_feature",
            Property::DeadAttributeValue => "dead_value",
            Property::FalseOptionalAttributeValue => "false_optional_value",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Property> {
        Some(match s {
            "dead_feature" => Property::DeadFeature,
            "false_optional_feature" => Property::FalseOptionalFeature,
            "dead_value" => Property::DeadAttributeValue,
            "false_optional_value" => Property::FalseOptionalAttributeValue,
            _ => return None,
        })
    }

    fn targets_value(self) -> bool {
        matches!(self, Property::DeadAttributeValue | Property::FalseOptionalAttributeValue)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PragmaTarget {
    Feature(String),
    Value { feature: String, attr: String, value: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pragma {
    pub target: PragmaTarget,
    pub property: Property,
    pub span: SourceSpan,
}

/// A reference exposed at a module root: a feature or `Feature:attr`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    pub feature: String,
    pub attr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleDecl {
    pub name: String,
    pub root_feature: String,
    pub references: Vec<Reference>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureModel {
    pub features: Vec<Feature>,
    pub root: FeatureId,
    pub constraints: Vec<CrossTreeConstraint>,
    pub pragmas: Vec<Pragma>,
    pub modules: Vec<ModuleDecl>,
}

/// A broken structural rule, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    GroupTooSmall { feature: String },
    DuplicateFeatureName { name: String },
    DuplicateAttribute { feature: String, attr: String },
    EmptyDomain { feature: String, attr: String },
    BrokenTree { feature: String, reason: String },
    AbstractWithoutGroup { feature: String, attr: String },
    AbstractChildMissing { feature: String, attr: String, child: String },
    AbstractDomainMismatch { feature: String, attr: String },
    UnresolvedFeature { constraint: String, name: String },
    UnresolvedAttribute { constraint: String, feature: String, attr: String },
    DuplicateConstraintName { name: String },
    BadPragma { target: String, reason: String },
    BadModule { module: String, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GroupTooSmall { feature } => {
                write!(f, "alternative group under `{feature}` needs at least two members")
            }
            Violation::DuplicateFeatureName { name } => write!(f, "feature name `{name}` is declared twice"),
            Violation::DuplicateAttribute { feature, attr } => {
                write!(f, "attribute `{attr}` declared twice on `{feature}`")
            }
            Violation::EmptyDomain { feature, attr } => write!(f, "attribute `{feature}:{attr}` has an empty domain"),
            Violation::BrokenTree { feature, reason } => write!(f, "feature `{feature}`: {reason}"),
            Violation::AbstractWithoutGroup { feature, attr } => write!(
                f,
                "abstract attribute `{feature}:{attr}` requires exactly one alternative group under `{feature}`"
            ),
            Violation::AbstractChildMissing { feature, attr, child } => {
                write!(f, "abstract attribute `{feature}:{attr}`: child `{child}` does not declare `{attr}`")
            }
            Violation::AbstractDomainMismatch { feature, attr } => write!(
                f,
                "abstract attribute `{feature}:{attr}` domain differs from the union of its children's domains"
            ),
            Violation::UnresolvedFeature { constraint, name } => {
                write!(f, "constraint `{constraint}` references unknown feature `{name}`")
            }
            Violation::UnresolvedAttribute { constraint, feature, attr } => {
                write!(f, "constraint `{constraint}` references unknown attribute `{feature}:{attr}`")
            }
            Violation::DuplicateConstraintName { name } => write!(f, "constraint name `{name}` is used twice"),
            Violation::BadPragma { target, reason } => write!(f, "pragma on `{target}`: {reason}"),
            Violation::BadModule { module, reason } => write!(f, "module `{module}`: {reason}"),
        }
    }
}

impl FeatureModel {
    /// A model consisting of a single root feature.
    pub fn with_root(name: impl Into<String>) -> Self {
        FeatureModel {
            features: vec![Feature::new(name)],
            root: FeatureId(0),
            constraints: Vec::new(),
            pragmas: Vec::new(),
            modules: Vec::new(),
        }
    }

    /// Appends `child` below `parent` as a new mandatory or optional relation.
    pub fn add_child(&mut self, parent: FeatureId, name: impl Into<String>, attachment: Attachment) -> FeatureId {
        let id = self.push_feature(parent, name);
        let rel = match attachment {
            Attachment::Mandatory => ChildRelation::Mandatory(id),
            Attachment::Optional => ChildRelation::Optional(id),
            Attachment::Alternative | Attachment::Root => panic!("use add_alternative for groups"),
        };
        self.features[parent.0].children.push(rel);
        id
    }

    /// Appends an alternative group with the given member names below `parent`.
    pub fn add_alternative(&mut self, parent: FeatureId, names: &[&str]) -> Vec<FeatureId> {
        let ids: Vec<FeatureId> = names.iter().map(|n| self.push_feature(parent, *n)).collect();
        self.features[parent.0].children.push(ChildRelation::Alternative(ids.clone()));
        ids
    }

    fn push_feature(&mut self, parent: FeatureId, name: impl Into<String>) -> FeatureId {
        let id = FeatureId(self.features.len());
        let mut f = Feature::new(name);
        f.parent = Some(parent);
        f.module = self.features[parent.0].module.clone();
        self.features.push(f);
        id
    }

    pub fn add_attribute(&mut self, feature: FeatureId, name: &str, domain: impl IntoIterator<Item = i64>) {
        let domain: BTreeSet<i64> = domain.into_iter().collect();
        self.features[feature.0].attributes.push(Attribute {
            name: name.to_string(),
            domain: domain.into_iter().collect(),
            is_abstract: false,
            span: SourceSpan::default(),
        });
    }

    /// Declares an abstract attribute on an alternative-group parent. The
    /// domain is recomputed by [`FeatureModel::refresh_abstract_domains`].
    pub fn add_abstract_attribute(&mut self, feature: FeatureId, name: &str) {
        self.features[feature.0].attributes.push(Attribute {
            name: name.to_string(),
            domain: Vec::new(),
            is_abstract: true,
            span: SourceSpan::default(),
        });
        self.refresh_abstract_domains();
    }

    pub fn add_constraint(&mut self, name: &str, expr: Expr) {
        self.constraints.push(CrossTreeConstraint {
            name: name.to_string(),
            expr,
            module: self.features[self.root.0].module.clone(),
            span: SourceSpan::default(),
        });
    }

    /// Recomputes every abstract attribute's domain as the union of its
    /// children's domains, bottom-up.
    pub fn refresh_abstract_domains(&mut self) {
        for id in self.postorder() {
            let f = &self.features[id.0];
            let groups: Vec<Vec<FeatureId>> = f.alternative_groups().map(|g| g.to_vec()).collect();
            if groups.len() != 1 {
                continue;
            }
            let names: Vec<String> = f.attributes.iter().filter(|a| a.is_abstract).map(|a| a.name.clone()).collect();
            for name in names {
                let mut union = BTreeSet::new();
                for c in &groups[0] {
                    if let Some(a) = self.features[c.0].attribute(&name) {
                        union.extend(a.domain.iter().copied());
                    }
                }
                let attr = self.features[id.0].attributes.iter_mut().find(|a| a.name == name).unwrap();
                attr.domain = union.into_iter().collect();
            }
        }
    }

    pub fn feature(&self, id: FeatureId) -> &Feature {
        &self.features[id.0]
    }

    pub fn name(&self, id: FeatureId) -> &str {
        &self.features[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> {
        (0..self.features.len()).map(FeatureId)
    }

    pub fn find(&self, name: &str) -> Option<FeatureId> {
        self.features.iter().position(|f| f.name == name).map(FeatureId)
    }

    pub fn name_index(&self) -> HashMap<&str, FeatureId> {
        self.features.iter().enumerate().map(|(i, f)| (f.name.as_str(), FeatureId(i))).collect()
    }

    pub fn attachment(&self, id: FeatureId) -> Attachment {
        let Some(p) = self.features[id.0].parent else {
            return Attachment::Root;
        };
        for rel in &self.features[p.0].children {
            match rel {
                ChildRelation::Mandatory(c) if *c == id => return Attachment::Mandatory,
                ChildRelation::Optional(c) if *c == id => return Attachment::Optional,
                ChildRelation::Alternative(cs) if cs.contains(&id) => return Attachment::Alternative,
                _ => {}
            }
        }
        Attachment::Root
    }

    pub fn is_variation_point(&self, id: FeatureId) -> bool {
        matches!(self.attachment(id), Attachment::Optional | Attachment::Alternative)
    }

    /// Optional features plus every alternative-group member, in declaration order.
    pub fn variation_points(&self) -> Vec<FeatureId> {
        self.preorder().into_iter().filter(|&f| self.is_variation_point(f)).collect()
    }

    /// Nearest ancestor-or-self that is the root or a variation point. Every
    /// feature on the way shares `id`'s existence value in every product.
    pub fn chain_head(&self, id: FeatureId) -> FeatureId {
        let mut cur = id;
        while self.attachment(cur) == Attachment::Mandatory {
            cur = self.features[cur.0].parent.expect("mandatory child has a parent");
        }
        cur
    }

    /// Looks up a feature by name and returns its chain head.
    pub fn chain_head_of(&self, name: &str) -> Result<FeatureId, crate::Error> {
        let id = self.find(name).ok_or_else(|| crate::Error::UnknownFeature(name.to_string()))?;
        Ok(self.chain_head(id))
    }

    pub fn ancestors(&self, id: FeatureId) -> impl Iterator<Item = FeatureId> + '_ {
        std::iter::successors(self.features[id.0].parent, move |p| self.features[p.0].parent)
    }

    pub fn is_ancestor_or_self(&self, ancestor: FeatureId, id: FeatureId) -> bool {
        ancestor == id || self.ancestors(id).any(|a| a == ancestor)
    }

    /// Features in declaration (pre-)order starting at the root.
    pub fn preorder(&self) -> Vec<FeatureId> {
        let mut out = Vec::with_capacity(self.features.len());
        let mut stack = vec![self.root];
        let mut seen = HashSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            out.push(id);
            let kids: Vec<FeatureId> = self.features[id.0].child_ids().collect();
            stack.extend(kids.into_iter().rev());
        }
        out
    }

    /// Children before parents.
    pub fn postorder(&self) -> Vec<FeatureId> {
        fn go(m: &FeatureModel, id: FeatureId, out: &mut Vec<FeatureId>, depth: usize) {
            if depth > m.features.len() {
                return;
            }
            for c in m.features[id.0].child_ids() {
                go(m, c, out, depth + 1);
            }
            out.push(id);
        }
        let mut out = Vec::with_capacity(self.features.len());
        go(self, self.root, &mut out, 0);
        out
    }

    pub fn attribute_count(&self) -> usize {
        self.features.iter().map(|f| f.attributes.len()).sum()
    }

    /// Module that owns a feature, falling back to the root's module.
    pub fn module_of(&self, id: FeatureId) -> Option<&str> {
        self.features[id.0].module.as_deref()
    }

    /// Copy of the model with every span reset, for structural comparison.
    pub fn without_spans(&self) -> FeatureModel {
        let mut m = self.clone();
        for f in &mut m.features {
            f.span = SourceSpan::default();
            for a in &mut f.attributes {
                a.span = SourceSpan::default();
            }
        }
        for c in &mut m.constraints {
            c.span = SourceSpan::default();
        }
        for p in &mut m.pragmas {
            p.span = SourceSpan::default();
        }
        for d in &mut m.modules {
            d.span = SourceSpan::default();
        }
        m
    }

    /// Checks every structural invariant. Empty result means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        self.validate_tree(&mut out);
        if !out.is_empty() {
            // later checks walk the tree
            return out;
        }
        self.validate_attributes(&mut out);
        self.validate_constraints(&mut out);
        self.validate_pragmas(&mut out);
        self.validate_modules(&mut out);
        out
    }

    fn validate_tree(&self, out: &mut Vec<Violation>) {
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                out.push(Violation::DuplicateFeatureName { name: f.name.clone() });
            }
        }
        if self.root.0 >= self.features.len() {
            out.push(Violation::BrokenTree { feature: "<root>".into(), reason: "root id out of range".into() });
            return;
        }
        if self.features[self.root.0].parent.is_some() {
            out.push(Violation::BrokenTree {
                feature: self.name(self.root).to_string(),
                reason: "root must not have a parent".into(),
            });
        }
        let mut parent_of: Vec<Option<FeatureId>> = vec![None; self.features.len()];
        for (i, f) in self.features.iter().enumerate() {
            for rel in &f.children {
                if let ChildRelation::Alternative(cs) = rel {
                    if cs.len() < 2 {
                        out.push(Violation::GroupTooSmall { feature: f.name.clone() });
                    }
                }
                for c in rel.members() {
                    if c.0 >= self.features.len() {
                        out.push(Violation::BrokenTree {
                            feature: f.name.clone(),
                            reason: "child id out of range".into(),
                        });
                        continue;
                    }
                    if parent_of[c.0].is_some() || *c == self.root {
                        out.push(Violation::BrokenTree {
                            feature: self.features[c.0].name.clone(),
                            reason: "feature has more than one parent".into(),
                        });
                    }
                    parent_of[c.0] = Some(FeatureId(i));
                    if self.features[c.0].parent != Some(FeatureId(i)) {
                        out.push(Violation::BrokenTree {
                            feature: self.features[c.0].name.clone(),
                            reason: "parent link disagrees with child relation".into(),
                        });
                    }
                }
            }
        }
        if !out.is_empty() {
            return;
        }
        let reach: HashSet<FeatureId> = self.preorder().into_iter().collect();
        for id in self.ids() {
            if !reach.contains(&id) {
                out.push(Violation::BrokenTree {
                    feature: self.name(id).to_string(),
                    reason: "feature is not reachable from the root".into(),
                });
            }
        }
    }

    fn validate_attributes(&self, out: &mut Vec<Violation>) {
        for f in &self.features {
            let mut seen = HashSet::new();
            for a in &f.attributes {
                if !seen.insert(a.name.as_str()) {
                    out.push(Violation::DuplicateAttribute { feature: f.name.clone(), attr: a.name.clone() });
                }
                if !a.is_abstract && a.domain.is_empty() {
                    out.push(Violation::EmptyDomain { feature: f.name.clone(), attr: a.name.clone() });
                }
                if !a.is_abstract {
                    continue;
                }
                let groups: Vec<&[FeatureId]> = f.alternative_groups().collect();
                if groups.len() != 1 {
                    out.push(Violation::AbstractWithoutGroup { feature: f.name.clone(), attr: a.name.clone() });
                    continue;
                }
                let mut union = BTreeSet::new();
                let mut complete = true;
                for c in groups[0] {
                    match self.features[c.0].attribute(&a.name) {
                        Some(ca) => union.extend(ca.domain.iter().copied()),
                        None => {
                            complete = false;
                            out.push(Violation::AbstractChildMissing {
                                feature: f.name.clone(),
                                attr: a.name.clone(),
                                child: self.features[c.0].name.clone(),
                            });
                        }
                    }
                }
                if complete && union.into_iter().collect::<Vec<_>>() != a.domain {
                    out.push(Violation::AbstractDomainMismatch { feature: f.name.clone(), attr: a.name.clone() });
                }
            }
        }
    }

    fn validate_constraints(&self, out: &mut Vec<Violation>) {
        let index = self.name_index();
        let mut names = HashSet::new();
        for c in &self.constraints {
            if !names.insert(c.name.as_str()) {
                out.push(Violation::DuplicateConstraintName { name: c.name.clone() });
            }
            for f in c.expr.feature_refs() {
                if !index.contains_key(f) {
                    out.push(Violation::UnresolvedFeature { constraint: c.name.clone(), name: f.to_string() });
                }
            }
            for (f, a) in c.expr.attr_refs() {
                match index.get(f) {
                    None => out.push(Violation::UnresolvedFeature { constraint: c.name.clone(), name: f.to_string() }),
                    Some(id) if self.features[id.0].attribute(a).is_none() => {
                        out.push(Violation::UnresolvedAttribute {
                            constraint: c.name.clone(),
                            feature: f.to_string(),
                            attr: a.to_string(),
                        })
                    }
                    _ => {}
                }
            }
        }
    }

    fn validate_pragmas(&self, out: &mut Vec<Violation>) {
        for p in &self.pragmas {
            match &p.target {
                PragmaTarget::Feature(name) => {
                    if p.property.targets_value() {
                        out.push(Violation::BadPragma {
                            target: name.clone(),
                            reason: format!("`{}` needs a `Feature:attr = value` target", p.property.keyword()),
                        });
                    }
                    if self.find(name).is_none() {
                        out.push(Violation::BadPragma { target: name.clone(), reason: "unknown feature".into() });
                    }
                }
                PragmaTarget::Value { feature, attr, value } => {
                    let label = format!("{feature}:{attr}={value}");
                    if !p.property.targets_value() {
                        out.push(Violation::BadPragma {
                            target: label.clone(),
                            reason: format!("`{}` needs a feature target", p.property.keyword()),
                        });
                    }
                    let dom = self.find(feature).and_then(|f| self.features[f.0].attribute(attr));
                    match dom {
                        None => out.push(Violation::BadPragma { target: label, reason: "unknown attribute".into() }),
                        Some(a) if !a.domain.contains(value) => {
                            out.push(Violation::BadPragma { target: label, reason: "value outside the domain".into() })
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    fn validate_modules(&self, out: &mut Vec<Violation>) {
        if self.modules.is_empty() {
            return;
        }
        let mut names = HashSet::new();
        for m in &self.modules {
            if !names.insert(m.name.as_str()) {
                out.push(Violation::BadModule { module: m.name.clone(), reason: "declared twice".into() });
            }
            let Some(root) = self.find(&m.root_feature) else {
                out.push(Violation::BadModule {
                    module: m.name.clone(),
                    reason: format!("unknown root feature `{}`", m.root_feature),
                });
                continue;
            };
            if self.module_of(root) != Some(m.name.as_str()) {
                out.push(Violation::BadModule {
                    module: m.name.clone(),
                    reason: format!("root feature `{}` is not assigned to the module", m.root_feature),
                });
            }
            if let Some(parent) = self.features[root.0].parent {
                if self.module_of(parent) == Some(m.name.as_str()) {
                    out.push(Violation::BadModule {
                        module: m.name.clone(),
                        reason: format!("root feature `{}` has a parent inside the module", m.root_feature),
                    });
                }
            }
            for r in &m.references {
                let label = match &r.attr {
                    Some(a) => format!("{}:{a}", r.feature),
                    None => r.feature.clone(),
                };
                match self.find(&r.feature) {
                    Some(f) if self.module_of(f) == Some(m.name.as_str()) => {
                        if let Some(a) = &r.attr {
                            if self.features[f.0].attribute(a).is_none() {
                                out.push(Violation::BadModule {
                                    module: m.name.clone(),
                                    reason: format!("reference `{label}` does not resolve"),
                                });
                            }
                        }
                    }
                    _ => out.push(Violation::BadModule {
                        module: m.name.clone(),
                        reason: format!("reference `{label}` is not an element of the module"),
                    }),
                }
            }
        }
        for id in self.ids() {
            let f = &self.features[id.0];
            match &f.module {
                None => out.push(Violation::BadModule {
                    module: "<none>".into(),
                    reason: format!("feature `{}` belongs to no module", f.name),
                }),
                Some(name) if !names.contains(name.as_str()) => out.push(Violation::BadModule {
                    module: name.clone(),
                    reason: format!("feature `{}` names an undeclared module", f.name),
                }),
                Some(name) => {
                    // a non-root member must share its parent's module
                    let is_root = self.modules.iter().any(|m| m.name == *name && m.root_feature == f.name);
                    if !is_root && f.parent.and_then(|p| self.module_of(p)) != Some(name.as_str()) {
                        out.push(Violation::BadModule {
                            module: name.clone(),
                            reason: format!("feature `{}` is disconnected from the module root", f.name),
                        });
                    }
                }
            }
        }
        for c in &self.constraints {
            if let Some(name) = &c.module {
                if !names.contains(name.as_str()) {
                    out.push(Violation::BadModule {
                        module: name.clone(),
                        reason: format!("constraint `{}` names an undeclared module", c.name),
                    });
                }
            }
        }
    }
}

/// The robot model used throughout the documentation and tests.
pub fn robot() -> FeatureModel {
    let mut m = FeatureModel::with_root("Robot");
    let root = m.root;
    let motor = m.add_child(root, "Motor", Attachment::Mandatory);
    m.add_attribute(motor, "pwr", [10, 20, 30]);
    let tool = m.add_child(root, "Tool", Attachment::Mandatory);
    let tools = m.add_alternative(tool, &["Drill", "Glue", "Mill"]);
    m.add_attribute(tools[0], "pwr_min", [20]);
    m.add_attribute(tools[1], "pwr_min", [10]);
    m.add_attribute(tools[2], "pwr_min", [20]);
    m.add_abstract_attribute(tool, "pwr_min");
    let grid = m.add_child(root, "Protective_grid", Attachment::Optional);
    m.add_child(grid, "Mounting_set", Attachment::Mandatory);
    m.add_constraint("root", Expr::exist("Robot"));
    m.add_constraint(
        "min_motor_pow_plus_10_percent",
        Expr::Cmp(
            CmpOp::Ge,
            Term::attr("Motor", "pwr"),
            Term::bin(
                ArithOp::Div,
                Term::bin(ArithOp::Mul, Term::attr("Tool", "pwr_min"), Term::Int(110)),
                Term::Int(100),
            ),
        ),
    );
    m.add_constraint(
        "d_or_m_inc_pGrid",
        Expr::implies(Expr::or(Expr::exist("Drill"), Expr::exist("Mill")), Expr::exist("Protective_grid")),
    );
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robot_is_valid() {
        assert_eq!(robot().validate(), vec![]);
        assert_eq!(robot().feature(robot().find("Tool").unwrap()).attribute("pwr_min").unwrap().domain, vec![10, 20]);
    }

    #[test]
    fn single_member_group_is_rejected() {
        let mut m = FeatureModel::with_root("R");
        let r = m.root;
        m.add_alternative(r, &["A"]);
        assert_eq!(m.validate(), vec![Violation::GroupTooSmall { feature: "R".into() }]);
    }

    #[test]
    fn abstract_domain_mismatch_is_rejected() {
        let mut m = FeatureModel::with_root("R");
        let r = m.root;
        let kids = m.add_alternative(r, &["A", "B"]);
        m.add_attribute(kids[0], "w", [1, 2]);
        m.add_attribute(kids[1], "w", [2, 3]);
        m.add_abstract_attribute(r, "w");
        assert!(m.validate().is_empty());
        m.features[0].attributes[0].domain = vec![1, 2, 3, 4];
        assert_eq!(m.validate(), vec![Violation::AbstractDomainMismatch { feature: "R".into(), attr: "w".into() }]);
    }

    #[test]
    fn variation_points_of_robot() {
        let m = robot();
        let mut names: Vec<&str> = m.variation_points().into_iter().map(|f| m.name(f)).collect();
        names.sort();
        assert_eq!(names, ["Drill", "Glue", "Mill", "Protective_grid"]);
    }

    #[test]
    fn variation_points_of_small_trees() {
        let mut m = FeatureModel::with_root("root");
        let a = m.add_child(m.root, "a", Attachment::Mandatory);
        m.add_child(a, "b", Attachment::Mandatory);
        assert!(m.variation_points().is_empty());
        let mut m = FeatureModel::with_root("root");
        let o = m.add_child(m.root, "o", Attachment::Optional);
        assert_eq!(m.variation_points(), vec![o]);
    }

    #[test]
    fn chain_heads() {
        let m = robot();
        let head = |n: &str| m.name(m.chain_head_of(n).unwrap()).to_string();
        assert_eq!(head("Mounting_set"), "Protective_grid");
        assert_eq!(head("Drill"), "Drill");
        assert_eq!(head("Motor"), "Robot");
        assert!(matches!(m.chain_head_of("Ghost"), Err(crate::Error::UnknownFeature(_))));
    }

    #[test]
    fn unresolved_references_are_violations() {
        let mut m = robot();
        m.add_constraint("ghost", Expr::exist("Ghost"));
        m.add_constraint("ghost_attr", Expr::Cmp(CmpOp::Eq, Term::attr("Motor", "rpm"), Term::Int(1)));
        let v = m.validate();
        assert!(v.contains(&Violation::UnresolvedFeature { constraint: "ghost".into(), name: "Ghost".into() }));
        assert!(v.contains(&Violation::UnresolvedAttribute {
            constraint: "ghost_attr".into(),
            feature: "Motor".into(),
            attr: "rpm".into()
        }));
    }

    #[test]
    fn pragma_targets_are_checked() {
        let mut m = robot();
        m.pragmas.push(Pragma {
            target: PragmaTarget::Value { feature: "Motor".into(), attr: "pwr".into(), value: 40 },
            property: Property::DeadAttributeValue,
            span: SourceSpan::default(),
        });
        m.pragmas.push(Pragma {
            target: PragmaTarget::Feature("Motor".into()),
            property: Property::DeadAttributeValue,
            span: SourceSpan::default(),
        });
        assert_eq!(m.validate().len(), 2);
    }
}
