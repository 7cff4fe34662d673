//! Anomaly detection: void models, dead and false-optional features, dead
//! and false-optional attribute values.
//!
//! [`detect_naive`] runs one solver check per candidate on the full model.
//! [`detect`] reduces the model first, prunes candidates with every witness
//! the solver hands back and only reports chain heads;
//! [`expand_aftereffects`] restores the consequences it leaves out.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compiler::{compile, CompiledConstraint, Csp, VarId};
use crate::model::{Attachment, FeatureId, FeatureModel, PragmaTarget, Property};
use crate::reduce::{reduce, ModelSize};
use crate::solver::{Engine, LabelingOptions, Solution, SolveStats, ValueOrder};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AnomalyKind {
    VoidModel,
    DeadFeature { feature: String },
    FalseOptionalFeature { feature: String },
    DeadAttributeValue { feature: String, attr: String, value: i64 },
    FalseOptionalAttributeValue { feature: String, attr: String, value: i64 },
}

impl AnomalyKind {
    pub fn feature(&self) -> Option<&str> {
        match self {
            AnomalyKind::VoidModel => None,
            AnomalyKind::DeadFeature { feature }
            | AnomalyKind::FalseOptionalFeature { feature }
            | AnomalyKind::DeadAttributeValue { feature, .. }
            | AnomalyKind::FalseOptionalAttributeValue { feature, .. } => Some(feature),
        }
    }

    pub fn property(&self) -> Option<Property> {
        Some(match self {
            AnomalyKind::VoidModel => return None,
            AnomalyKind::DeadFeature { .. } => Property::DeadFeature,
            AnomalyKind::FalseOptionalFeature { .. } => Property::FalseOptionalFeature,
            AnomalyKind::DeadAttributeValue { .. } => Property::DeadAttributeValue,
            AnomalyKind::FalseOptionalAttributeValue { .. } => Property::FalseOptionalAttributeValue,
        })
    }

    pub fn dead_value(feature: &str, attr: &str, value: i64) -> AnomalyKind {
        AnomalyKind::DeadAttributeValue { feature: feature.into(), attr: attr.into(), value }
    }

    pub fn false_optional_value(feature: &str, attr: &str, value: i64) -> AnomalyKind {
        AnomalyKind::FalseOptionalAttributeValue { feature: feature.into(), attr: attr.into(), value }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnomalyKind::VoidModel => write!(f, "VoidModel"),
            AnomalyKind::DeadFeature { feature } => write!(f, "DeadFeature({feature})"),
            AnomalyKind::FalseOptionalFeature { feature } => write!(f, "FalseOptionalFeature({feature})"),
            AnomalyKind::DeadAttributeValue { feature, attr, value } => {
                write!(f, "DeadAttributeValue({feature}, {attr}, {value})")
            }
            AnomalyKind::FalseOptionalAttributeValue { feature, attr, value } => {
                write!(f, "FalseOptionalAttributeValue({feature}, {attr}, {value})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Anomaly {
    #[serde(flatten)]
    pub kind: AnomalyKind,
    /// Marked intentional by a pragma.
    pub suppressed: bool,
}

/// Candidate sets right after the void check, for inspection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckSets {
    pub check_dead: Vec<String>,
    pub check_false_opt: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyReport {
    pub anomalies: Vec<Anomaly>,
    pub stats: SolveStats,
    pub reduced_size: ModelSize,
    pub checks_performed: u64,
    pub checks_pruned: u64,
    /// Whether detection ran on the reduced model.
    pub reduced: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_sets: Option<CheckSets>,
}

impl AnomalyReport {
    pub fn kinds(&self) -> BTreeSet<AnomalyKind> {
        self.anomalies.iter().map(|a| a.kind.clone()).collect()
    }

    pub fn is_void(&self) -> bool {
        self.anomalies.iter().any(|a| a.kind == AnomalyKind::VoidModel)
    }

    /// Anomalies not silenced by a pragma.
    pub fn active(&self) -> impl Iterator<Item = &Anomaly> {
        self.anomalies.iter().filter(|a| !a.suppressed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectOptions {
    /// Apply the reduction rules before checking.
    pub reduce: bool,
    pub labeling: LabelingOptions,
    /// Worker cap for [`detect_naive`]; `None` reads `AFM_DOCTOR_THREADS`.
    pub threads: Option<usize>,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions { reduce: true, labeling: LabelingOptions::default(), threads: None }
    }
}

/// Worker count from `AFM_DOCTOR_THREADS`, defaulting to the machine's parallelism.
pub fn thread_limit() -> usize {
    std::env::var("AFM_DOCTOR_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Whether the model has at least one product, with a witness.
pub fn check_void(model: &FeatureModel) -> (bool, Option<Solution>) {
    let csp = compile(model);
    let (sol, _) = crate::solver::solve(&csp, &LabelingOptions::default());
    (sol.is_some(), sol)
}

fn feature_id(csp: &Csp, f: FeatureId) -> VarId {
    csp.feature_var(f)
}

fn attr_vars(model: &FeatureModel, csp: &Csp) -> Vec<(FeatureId, String, VarId)> {
    model
        .preorder()
        .into_iter()
        .flat_map(|f| model.feature(f).attributes.iter().map(move |a| (f, a.name.clone())))
        .map(|(f, a)| {
            let v = csp.attr_var(f, &a).expect("compiled attribute");
            (f, a, v)
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Job {
    Present(FeatureId, bool),
    Value(VarId, i64, bool),
}

/// One check per feature, per variation point and per attribute value on the
/// unreduced model.
pub fn detect_naive(model: &FeatureModel, opts: &DetectOptions) -> AnomalyReport {
    let csp = compile(model);
    let mut engine = Engine::new(&csp);
    let void = engine.check(&[], &opts.labeling).is_none();
    let mut stats = engine.stats;
    if void {
        return void_report(stats, ModelSize::of(model));
    }
    let mut jobs = Vec::new();
    for f in model.preorder() {
        jobs.push(Job::Present(f, true));
        if model.is_variation_point(f) {
            jobs.push(Job::Present(f, false));
        }
    }
    let attrs = attr_vars(model, &csp);
    for (f, a, v) in &attrs {
        for &val in &model.feature(*f).attribute(a).unwrap().domain {
            jobs.push(Job::Value(*v, val, true));
            jobs.push(Job::Value(*v, val, false));
        }
    }
    let assumption = |job: Job| -> CompiledConstraint {
        match job {
            Job::Present(f, p) => csp.assume_feature(model, f, p),
            Job::Value(v, val, true) => csp.assume_value(v, val),
            Job::Value(v, val, false) => csp.assume_not_value(v, val),
        }
    };
    let threads = opts.threads.unwrap_or_else(thread_limit).clamp(1, jobs.len().max(1));
    let chunk = jobs.len().div_ceil(threads).max(1);
    let results: Vec<(Vec<bool>, SolveStats)> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                let csp = &csp;
                let assumption = &assumption;
                let labeling = opts.labeling;
                s.spawn(move || {
                    let mut e = Engine::new(csp);
                    let out = part.iter().map(|&j| e.check(&[assumption(j)], &labeling).is_some()).collect();
                    (out, e.stats)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("check worker")).collect()
    });
    let mut consistent = Vec::with_capacity(jobs.len());
    for (r, s) in results {
        consistent.extend(r);
        stats += s;
    }
    let var_attr: HashMap<VarId, (FeatureId, &str)> = attrs.iter().map(|(f, a, v)| (*v, (*f, a.as_str()))).collect();
    let mut kinds = Vec::new();
    for (job, ok) in jobs.iter().zip(consistent) {
        if ok {
            continue;
        }
        kinds.push(match *job {
            Job::Present(f, true) => AnomalyKind::DeadFeature { feature: model.name(f).into() },
            Job::Present(f, false) => AnomalyKind::FalseOptionalFeature { feature: model.name(f).into() },
            Job::Value(v, val, dead) => {
                let (f, a) = var_attr[&v];
                if dead {
                    AnomalyKind::dead_value(model.name(f), a, val)
                } else {
                    AnomalyKind::false_optional_value(model.name(f), a, val)
                }
            }
        });
    }
    AnomalyReport {
        anomalies: finish(model, kinds),
        stats,
        reduced_size: ModelSize::of(model),
        checks_performed: stats.consistency_checks,
        checks_pruned: 0,
        reduced: false,
        initial_sets: None,
    }
}

fn void_report(stats: SolveStats, size: ModelSize) -> AnomalyReport {
    AnomalyReport {
        anomalies: vec![Anomaly { kind: AnomalyKind::VoidModel, suppressed: false }],
        stats,
        reduced_size: size,
        checks_performed: stats.consistency_checks,
        checks_pruned: 0,
        reduced: false,
        initial_sets: None,
    }
}

/// Sorts by declaration order and applies pragmas.
fn finish(model: &FeatureModel, kinds: impl IntoIterator<Item = AnomalyKind>) -> Vec<Anomaly> {
    let pos: HashMap<&str, usize> = model.preorder().into_iter().enumerate().map(|(i, f)| (model.name(f), i)).collect();
    let attr_pos = |f: &str, a: &str| {
        model.find(f).and_then(|id| model.feature(id).attributes.iter().position(|x| x.name == a)).unwrap_or(0)
    };
    let key = |k: &AnomalyKind| -> (usize, usize, usize, i64, usize) {
        match k {
            AnomalyKind::VoidModel => (0, 0, 0, 0, 0),
            AnomalyKind::DeadFeature { feature } => (1 + pos.get(feature.as_str()).copied().unwrap_or(0), 0, 0, 0, 0),
            AnomalyKind::FalseOptionalFeature { feature } => {
                (1 + pos.get(feature.as_str()).copied().unwrap_or(0), 1, 0, 0, 0)
            }
            AnomalyKind::DeadAttributeValue { feature, attr, value } => {
                (1 + pos.get(feature.as_str()).copied().unwrap_or(0), 2, attr_pos(feature, attr), *value, 0)
            }
            AnomalyKind::FalseOptionalAttributeValue { feature, attr, value } => {
                (1 + pos.get(feature.as_str()).copied().unwrap_or(0), 2, attr_pos(feature, attr), *value, 1)
            }
        }
    };
    let mut kinds: Vec<AnomalyKind> = kinds.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    kinds.sort_by_key(|k| key(k));
    kinds.into_iter().map(|kind| Anomaly { suppressed: suppressed(model, &kind), kind }).collect()
}

fn suppressed(model: &FeatureModel, kind: &AnomalyKind) -> bool {
    let Some(prop) = kind.property() else { return false };
    model.pragmas.iter().any(|p| {
        p.property == prop
            && match (&p.target, kind) {
                (PragmaTarget::Feature(t), AnomalyKind::DeadFeature { feature })
                | (PragmaTarget::Feature(t), AnomalyKind::FalseOptionalFeature { feature }) => t == feature,
                (
                    PragmaTarget::Value { feature: tf, attr: ta, value: tv },
                    AnomalyKind::DeadAttributeValue { feature, attr, value }
                    | AnomalyKind::FalseOptionalAttributeValue { feature, attr, value },
                ) => tf == feature && ta == attr && tv == value,
                _ => false,
            }
    })
}

/// Seen attribute values across every witness so far.
struct Witnesses {
    seen: Vec<HashSet<i64>>,
}

impl Witnesses {
    fn add(&mut self, sol: &Solution) {
        for (v, seen) in self.seen.iter_mut().enumerate() {
            seen.insert(sol.values[v]);
        }
    }
}

/// Reduction, witness pruning and labeling switches. Reports chain heads
/// only: dead features below a dead feature and values of dead features
/// are left to [`expand_aftereffects`].
pub fn detect(model: &FeatureModel, opts: &DetectOptions) -> AnomalyReport {
    let reduced = if opts.reduce { reduce(model) } else { model.clone() };
    let size = ModelSize::of(&reduced);
    let csp = compile(&reduced);
    let mut engine = Engine::new(&csp);
    let base = opts.labeling;

    let Some(first) = engine.check(&[], &base) else {
        return void_report(engine.stats, size);
    };
    let mut witnesses = Witnesses { seen: vec![HashSet::new(); csp.vars.len()] };
    witnesses.add(&first);
    let attrs = attr_vars(&reduced, &csp);
    let mut total: u64 = 1;

    let vps = reduced.variation_points();
    total += 2 * vps.len() as u64 + 1;
    let fv = |f: FeatureId| feature_id(&csp, f);
    let is_present = |sol: &Solution, f: FeatureId| sol.value(fv(f)) == 1;
    // alternative members first, each part in declaration order
    let mut check_dead: Vec<FeatureId> =
        vps.iter().copied().filter(|&f| reduced.attachment(f) == Attachment::Alternative).collect();
    check_dead.extend(vps.iter().copied().filter(|&f| reduced.attachment(f) == Attachment::Optional));
    check_dead.retain(|&f| !is_present(&first, f));
    let mut check_false_opt: Vec<FeatureId> = vps.iter().copied().filter(|&f| is_present(&first, f)).collect();
    let initial_sets = CheckSets {
        check_dead: check_dead.iter().map(|&f| reduced.name(f).to_string()).collect(),
        check_false_opt: check_false_opt.iter().map(|&f| reduced.name(f).to_string()).collect(),
    };

    let mut kinds = Vec::new();
    let mut dead: HashSet<FeatureId> = HashSet::new();
    let prune = |sol: &Solution, check_dead: &mut Vec<FeatureId>, check_false_opt: &mut Vec<FeatureId>| {
        check_dead.retain(|&f| !is_present(sol, f));
        check_false_opt.retain(|&f| is_present(sol, f));
    };

    // the root is not a variation point but heads its own chain
    if !is_present(&first, reduced.root) {
        let a = csp.assume_feature(&reduced, reduced.root, true);
        match engine.check(&[a], &base) {
            Some(sol) => {
                witnesses.add(&sol);
                prune(&sol, &mut check_dead, &mut check_false_opt);
            }
            None => {
                dead.insert(reduced.root);
                kinds.push(AnomalyKind::DeadFeature { feature: reduced.name(reduced.root).into() });
            }
        }
    }

    let mut i = 0;
    while i < check_dead.len() {
        let f = check_dead[i];
        i += 1;
        if reduced.ancestors(f).any(|a| dead.contains(&a)) {
            dead.insert(f);
            continue;
        }
        let optional_left = check_dead[i - 1..].iter().any(|&g| reduced.attachment(g) == Attachment::Optional);
        let order = if optional_left { ValueOrder::DownFirst } else { ValueOrder::UpFirst };
        let a = csp.assume_feature(&reduced, f, true);
        match engine.check(&[a], &base.with_feature_values(order)) {
            Some(sol) => {
                witnesses.add(&sol);
                let rest = check_dead.split_off(i);
                let mut rest = rest;
                prune(&sol, &mut rest, &mut check_false_opt);
                check_dead.extend(rest);
            }
            None => {
                dead.insert(f);
                kinds.push(AnomalyKind::DeadFeature { feature: reduced.name(f).into() });
            }
        }
    }

    let mut j = 0;
    while j < check_false_opt.len() {
        let f = check_false_opt[j];
        j += 1;
        let a = csp.assume_feature(&reduced, f, false);
        match engine.check(&[a], &base.with_feature_values(ValueOrder::UpFirst)) {
            Some(sol) => {
                witnesses.add(&sol);
                let mut rest = check_false_opt.split_off(j);
                rest.retain(|&g| is_present(&sol, g));
                check_false_opt.extend(rest);
            }
            None => kinds.push(AnomalyKind::FalseOptionalFeature { feature: reduced.name(f).into() }),
        }
    }

    let mut value_attrs: Vec<&(FeatureId, String, VarId)> = attrs.iter().collect();
    value_attrs.sort_by_key(|(f, a, _)| reduced.feature(*f).attribute(a).unwrap().domain.len());
    for (f, a, var) in value_attrs {
        let domain = &reduced.feature(*f).attribute(a).unwrap().domain;
        total += 2 * domain.len() as u64;
        if dead.contains(f) || reduced.ancestors(*f).any(|x| dead.contains(&x)) {
            continue;
        }
        for &v in domain {
            if witnesses.seen[var.0].contains(&v) {
                continue;
            }
            match engine.check(&[csp.assume_value(*var, v)], &base) {
                Some(sol) => witnesses.add(&sol),
                None => kinds.push(AnomalyKind::dead_value(reduced.name(*f), a, v)),
            }
        }
        for &v in domain {
            if witnesses.seen[var.0].iter().any(|&x| x != v) {
                continue;
            }
            match engine.check(&[csp.assume_not_value(*var, v)], &base) {
                Some(sol) => witnesses.add(&sol),
                None => kinds.push(AnomalyKind::false_optional_value(reduced.name(*f), a, v)),
            }
        }
    }

    let dead_names: HashSet<&str> = dead.iter().map(|&f| reduced.name(f)).collect();
    kinds.retain(|k| match k {
        AnomalyKind::DeadFeature { feature } => {
            let id = reduced.find(feature).unwrap();
            !reduced.ancestors(id).any(|a| dead_names.contains(reduced.name(a)))
        }
        _ => true,
    });
    let stats = engine.stats;
    AnomalyReport {
        anomalies: finish(model, kinds),
        stats,
        reduced_size: size,
        checks_performed: stats.consistency_checks,
        checks_pruned: total - stats.consistency_checks,
        reduced: opts.reduce,
        initial_sets: Some(initial_sets),
    }
}

/// Adds what [`detect`] leaves implicit so the result matches
/// [`detect_naive`] on the full model: every feature below a dead feature,
/// the values of dead features, and verdicts on attributes the reduction
/// removed.
pub fn expand_aftereffects(model: &FeatureModel, report: &AnomalyReport) -> AnomalyReport {
    if report.is_void() {
        return report.clone();
    }
    let kinds = report.kinds();
    let mut out: Vec<AnomalyKind> = kinds.iter().cloned().collect();
    let mut stats = report.stats;

    let mut dead = vec![false; model.features.len()];
    for f in model.preorder() {
        let id_dead = kinds.contains(&AnomalyKind::DeadFeature { feature: model.name(f).into() });
        let parent_dead = model.feature(f).parent.is_some_and(|p| dead[p.0]);
        dead[f.0] = id_dead || parent_dead;
    }
    let false_opt: HashSet<&str> = kinds
        .iter()
        .filter_map(|k| match k {
            AnomalyKind::FalseOptionalFeature { feature } => Some(feature.as_str()),
            _ => None,
        })
        .collect();

    let mut root_core: Option<bool> = None;
    let mut is_root_core = |stats: &mut SolveStats| -> bool {
        *root_core.get_or_insert_with(|| {
            let csp = compile(model);
            let mut e = Engine::new(&csp);
            let r = e.check(&[csp.assume_feature(model, model.root, false)], &LabelingOptions::default()).is_none();
            *stats += e.stats;
            r
        })
    };
    let mut core = |f: FeatureId, stats: &mut SolveStats| -> bool {
        let head = model.chain_head(f);
        if head == model.root {
            is_root_core(stats)
        } else {
            false_opt.contains(model.name(head))
        }
    };

    let reduced = reduce(model);
    let kept = |f: FeatureId, a: &str| {
        reduced.find(model.name(f)).is_some_and(|id| reduced.feature(id).attribute(a).is_some())
    };
    for f in model.preorder() {
        let name = model.name(f);
        if dead[f.0] {
            out.push(AnomalyKind::DeadFeature { feature: name.into() });
            for a in &model.feature(f).attributes {
                for &v in &a.domain {
                    out.push(AnomalyKind::dead_value(name, &a.name, v));
                }
            }
            continue;
        }
        for a in &model.feature(f).attributes {
            // surviving attributes were checked directly, unless detection ran unreduced
            if !report.reduced || kept(f, &a.name) {
                continue;
            }
            let is_core = core(f, &mut stats);
            for &v in &a.domain {
                if !can_take(model, &dead, f, &a.name, v) {
                    out.push(AnomalyKind::dead_value(name, &a.name, v));
                }
                if is_core && forced(model, &dead, f, &a.name, v) {
                    out.push(AnomalyKind::false_optional_value(name, &a.name, v));
                }
            }
        }
    }
    AnomalyReport { anomalies: finish(model, out), stats, ..report.clone() }
}

/// Whether some product with `f` present gives `f:attr = v`, for attributes
/// no cross-tree constraint mentions.
fn can_take(model: &FeatureModel, dead: &[bool], f: FeatureId, attr: &str, v: i64) -> bool {
    if dead[f.0] {
        return false;
    }
    let a = model.feature(f).attribute(attr).unwrap();
    if !a.is_abstract {
        return a.domain.contains(&v);
    }
    let group = model.feature(f).alternative_groups().next().unwrap_or(&[]);
    group.iter().any(|&c| can_take(model, dead, c, attr, v))
}

/// Whether `f:attr = v` in every product containing `f`.
fn forced(model: &FeatureModel, dead: &[bool], f: FeatureId, attr: &str, v: i64) -> bool {
    let a = model.feature(f).attribute(attr).unwrap();
    if !a.is_abstract {
        return a.domain == [v];
    }
    let group = model.feature(f).alternative_groups().next().unwrap_or(&[]);
    group.iter().filter(|c| !dead[c.0]).all(|&c| forced(model, dead, c, attr, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{robot, Expr};
    use crate::{fixtures, parser};

    fn kinds(r: &AnomalyReport) -> Vec<String> {
        r.anomalies.iter().map(|a| a.kind.to_string()).collect()
    }

    #[test]
    fn robot_naive() {
        let r = detect_naive(&robot(), &DetectOptions::default());
        assert_eq!(kinds(&r), ["DeadAttributeValue(Motor, pwr, 10)"]);
    }

    #[test]
    fn robot_detect_is_cheaper() {
        let m = robot();
        let opts = DetectOptions::default();
        let fast = detect(&m, &opts);
        let naive = detect_naive(&m, &opts);
        assert_eq!(kinds(&fast), ["DeadAttributeValue(Motor, pwr, 10)"]);
        assert!(fast.checks_performed < naive.checks_performed);
        let sets = fast.initial_sets.as_ref().unwrap();
        assert_eq!(sets.check_dead.len() + sets.check_false_opt.len(), 4);
        assert_eq!(expand_aftereffects(&m, &fast).kinds(), naive.kinds());
    }

    #[test]
    fn glue_removed() {
        let m = parser::parse(fixtures::ROBOT_NO_GLUE).unwrap();
        let opts = DetectOptions::default();
        let naive = detect_naive(&m, &opts);
        let k = kinds(&naive);
        for expected in [
            "FalseOptionalFeature(Protective_grid)",
            "DeadAttributeValue(Motor, pwr, 10)",
            "DeadAttributeValue(Motor, pwr, 20)",
            "FalseOptionalAttributeValue(Motor, pwr, 30)",
            "FalseOptionalAttributeValue(Tool, pwr_min, 20)",
        ] {
            assert!(k.contains(&expected.to_string()), "{k:?}");
        }
        let fast = detect(&m, &opts);
        assert_eq!(expand_aftereffects(&m, &fast).kinds(), naive.kinds());
    }

    #[test]
    fn void_and_tree_only() {
        let mut m = robot();
        m.add_constraint("no_motor", Expr::nonexist("Motor"));
        assert!(!check_void(&m).0);
        assert!(detect(&m, &DetectOptions::default()).is_void());
        let t = parser::parse(fixtures::TREE_ONLY).unwrap();
        assert!(check_void(&t).0);
        assert!(detect_naive(&t, &DetectOptions::default()).anomalies.is_empty());
        assert!(detect(&t, &DetectOptions::default()).anomalies.is_empty());
    }

    #[test]
    fn dead_grid_expands_to_mounting_set() {
        let mut m = robot();
        m.add_constraint("no_grid", Expr::nonexist("Protective_grid"));
        let fast = detect(&m, &DetectOptions::default());
        assert!(fast.kinds().contains(&AnomalyKind::DeadFeature { feature: "Protective_grid".into() }));
        assert!(!fast.kinds().contains(&AnomalyKind::DeadFeature { feature: "Mounting_set".into() }));
        let full = expand_aftereffects(&m, &fast);
        assert!(full.kinds().contains(&AnomalyKind::DeadFeature { feature: "Mounting_set".into() }));
        assert_eq!(full.kinds(), detect_naive(&m, &DetectOptions::default()).kinds());
    }

    #[test]
    fn pragma_suppresses() {
        let src = format!("{}pragma(Protective_grid, false_optional_feature).\n", fixtures::ROBOT_NO_GLUE);
        let m = parser::parse(&src).unwrap();
        let r = detect(&m, &DetectOptions::default());
        let grid = r
            .anomalies
            .iter()
            .find(|a| a.kind == AnomalyKind::FalseOptionalFeature { feature: "Protective_grid".into() });
        assert!(grid.unwrap().suppressed);
    }

    #[test]
    fn accounting() {
        let r = detect(&robot(), &DetectOptions::default());
        let total = 1 + 1 + 2 * 4 + 2 * (3 + 2 + 1 + 1 + 1);
        assert_eq!(r.checks_performed + r.checks_pruned, total);
    }

    #[test]
    fn thread_cap_does_not_change_results() {
        let m = parser::parse(fixtures::ROBOT_NO_GLUE).unwrap();
        let one = detect_naive(&m, &DetectOptions { threads: Some(1), ..Default::default() });
        let four = detect_naive(&m, &DetectOptions { threads: Some(4), ..Default::default() });
        assert_eq!(one.anomalies, four.anomalies);
        assert_eq!(one.checks_performed, four.checks_performed);
    }
}
