//! Minimal conflicting constraint sets for detected anomalies.
//!
//! The failed check's assumption is the background; QuickXplain then picks a
//! minimal subset of the model's own constraints that still contradicts it.
//! In cascading mode a first pass runs over constraint groups (modules, or
//! CTC clusters without modules) and a second pass over the natives of the
//! conflicting groups only.

use std::collections::HashMap;

use serde::Serialize;

use crate::compiler::{anchor_depth, compile, CompiledConstraint, ConstraintId, Csp, Origin, RelationKind, VarId};
use crate::detector::AnomalyKind;
use crate::model::{FeatureId, FeatureModel};
use crate::quickxplain::{quickxplain, quickxplain_inconsistent, QxStats};
use crate::solver::{Engine, LabelingOptions, SolveStats};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainMode {
    #[default]
    Simple,
    Cascading,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintGroup {
    /// Module name, `cluster-N`, or `residual`.
    pub id: String,
    pub members: Vec<ConstraintId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictSet {
    pub constraints: Vec<CompiledConstraint>,
    /// Assumptions of the failed check, never part of the conflict proper.
    pub background: Vec<CompiledConstraint>,
    /// Stats of the pass over native constraints.
    pub qx_stats: QxStats,
    /// Every QuickXplain pass, in order.
    pub passes: Vec<QxStats>,
    pub stats: SolveStats,
}

impl ConflictSet {
    /// Consistency checks over all passes.
    pub fn total_checks(&self) -> u64 {
        self.passes.iter().map(|p| p.checks).sum()
    }

    pub fn ids(&self) -> Vec<ConstraintId> {
        self.constraints.iter().map(|c| c.id).collect()
    }
}

/// The assumption a check for `anomaly` adds to the model.
pub fn background(csp: &Csp, model: &FeatureModel, anomaly: &AnomalyKind) -> Result<Vec<CompiledConstraint>, Error> {
    let feature = |name: &str| model.find(name).ok_or_else(|| Error::UnknownFeature(name.to_string()));
    let attr = |f: &str, a: &str, v: i64| -> Result<VarId, Error> {
        let id = feature(f)?;
        let at = model.feature(id).attribute(a).ok_or_else(|| Error::UnknownAttribute(format!("{f}:{a}")))?;
        if !at.domain.contains(&v) {
            return Err(Error::UnknownValue { attr: format!("{f}:{a}"), value: v });
        }
        Ok(csp.attr_var(id, a).expect("compiled attribute"))
    };
    Ok(match anomaly {
        AnomalyKind::VoidModel => Vec::new(),
        AnomalyKind::DeadFeature { feature: f } => vec![csp.assume_feature(model, feature(f)?, true)],
        AnomalyKind::FalseOptionalFeature { feature: f } => vec![csp.assume_feature(model, feature(f)?, false)],
        AnomalyKind::DeadAttributeValue { feature, attr: a, value } => {
            vec![csp.assume_value(attr(feature, a, *value)?, *value)]
        }
        AnomalyKind::FalseOptionalAttributeValue { feature, attr: a, value } => {
            vec![csp.assume_not_value(attr(feature, a, *value)?, *value)]
        }
    })
}

/// Preference order: CTCs in declaration order, then tree constraints from
/// the leaves upwards.
pub fn candidate_order(csp: &Csp, model: &FeatureModel) -> Vec<ConstraintId> {
    let mut ctcs = Vec::new();
    let mut tree = Vec::new();
    for c in &csp.constraints {
        match c.origin {
            Origin::Ctc { .. } => ctcs.push(c.id),
            _ => tree.push((anchor_depth(model, &c.origin), c.id)),
        }
    }
    tree.sort_by_key(|&(d, id)| (std::cmp::Reverse(d), id));
    ctcs.extend(tree.into_iter().map(|(_, id)| id));
    ctcs
}

fn owner_features(model: &FeatureModel, origin: &Origin) -> Vec<FeatureId> {
    match origin {
        Origin::Tree { features, .. } => features.iter().filter_map(|n| model.find(n)).collect(),
        _ => Vec::new(),
    }
}

/// Partitions the CSP's constraints by module, or by CTC cluster when the
/// model has no modules.
pub fn group_constraints(csp: &Csp, model: &FeatureModel) -> Vec<ConstraintGroup> {
    if !model.modules.is_empty() {
        let mut groups: Vec<ConstraintGroup> =
            model.modules.iter().map(|m| ConstraintGroup { id: m.name.clone(), members: Vec::new() }).collect();
        let index: HashMap<&str, usize> = model.modules.iter().enumerate().map(|(i, m)| (m.name.as_str(), i)).collect();
        let root_module = model.module_of(model.root).unwrap_or(&model.modules[0].name).to_string();
        for (i, c) in csp.constraints.iter().enumerate() {
            let module = match &c.origin {
                Origin::Tree { features, .. } => {
                    model.find(&features[0]).and_then(|f| model.module_of(f)).unwrap_or(&root_module).to_string()
                }
                Origin::Ctc { .. } => {
                    model.constraints[ctc_index(csp, c.id)].module.clone().unwrap_or_else(|| root_module.clone())
                }
                Origin::Assumption { .. } => continue,
            };
            let g = index.get(module.as_str()).copied().unwrap_or(0);
            groups[g].members.push(ConstraintId(i));
        }
        groups.retain(|g| !g.members.is_empty());
        return groups;
    }

    // CTC clusters: CTCs touching the same mandatory chain are linked
    let ctcs: Vec<usize> =
        (0..csp.constraints.len()).filter(|&i| matches!(csp.constraints[i].origin, Origin::Ctc { .. })).collect();
    let head_of_var = |v: VarId| -> FeatureId {
        match &csp.var(v).kind {
            crate::compiler::VarKind::Feature(f) | crate::compiler::VarKind::Attribute { feature: f, .. } => {
                model.chain_head(*f)
            }
        }
    };
    let mut parent: Vec<usize> = (0..ctcs.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let n = p[y];
            p[y] = r;
            y = n;
        }
        r
    }
    let mut touched: HashMap<FeatureId, usize> = HashMap::new();
    for (k, &ci) in ctcs.iter().enumerate() {
        for v in csp.constraints[ci].form.vars() {
            let h = head_of_var(v);
            match touched.get(&h) {
                Some(&other) => {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, other));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                None => {
                    touched.insert(h, k);
                }
            }
        }
    }
    let mut cluster_of_root: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<ConstraintGroup> = Vec::new();
    let mut ctc_group = Vec::with_capacity(ctcs.len());
    for k in 0..ctcs.len() {
        let r = find(&mut parent, k);
        let g = *cluster_of_root.entry(r).or_insert_with(|| {
            groups.push(ConstraintGroup { id: format!("cluster-{}", groups.len() + 1), members: Vec::new() });
            groups.len() - 1
        });
        ctc_group.push(g);
    }
    let head_group: HashMap<FeatureId, usize> =
        touched.iter().map(|(h, &k)| (*h, ctc_group[find(&mut parent, k)])).collect();
    let mut residual = Vec::new();
    for (i, c) in csp.constraints.iter().enumerate() {
        if let Some(k) = ctcs.iter().position(|&x| x == i) {
            groups[ctc_group[k]].members.push(ConstraintId(i));
            continue;
        }
        let feats = owner_features(model, &c.origin);
        let mut walk: Vec<FeatureId> = feats.iter().skip(1).copied().collect();
        if let Some(&first) = feats.first() {
            walk.push(first);
            walk.extend(model.ancestors(first));
        }
        match walk.iter().find_map(|f| head_group.get(&model.chain_head(*f))) {
            Some(&g) => groups[g].members.push(ConstraintId(i)),
            None => residual.push(ConstraintId(i)),
        }
    }
    for g in &mut groups {
        g.members.sort();
    }
    if !residual.is_empty() {
        groups.push(ConstraintGroup { id: "residual".into(), members: residual });
    }
    groups
}

fn ctc_index(csp: &Csp, id: ConstraintId) -> usize {
    csp.constraints[..id.0].iter().filter(|c| matches!(c.origin, Origin::Ctc { .. })).count()
}

/// Explains an anomaly on the unreduced model.
pub fn explain(model: &FeatureModel, anomaly: &AnomalyKind, mode: ExplainMode) -> Result<ConflictSet, Error> {
    let csp = compile(model);
    explain_in(&csp, model, anomaly, mode)
}

/// Like [`explain`], reusing an already compiled CSP.
pub fn explain_in(
    csp: &Csp,
    model: &FeatureModel,
    anomaly: &AnomalyKind,
    mode: ExplainMode,
) -> Result<ConflictSet, Error> {
    let bg = background(csp, model, anomaly)?;
    let opts = LabelingOptions::default();
    let mut engine = Engine::new(csp);
    let order = candidate_order(csp, model);
    let rank: HashMap<ConstraintId, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut passes = Vec::new();

    let check = |engine: &mut Engine, set: &[ConstraintId]| engine.check_subset(set, &bg, &opts).is_some();
    let (conflict, stats) = match mode {
        ExplainMode::Simple => quickxplain(&[], &order, |set: &[ConstraintId]| check(&mut engine, set)),
        ExplainMode::Cascading => {
            let mut groups = group_constraints(csp, model);
            groups.sort_by_key(|g| g.members.iter().map(|m| rank[m]).min().unwrap_or(usize::MAX));
            let idx: Vec<usize> = (0..groups.len()).collect();
            let (conflict, stats) = quickxplain(&[], &idx, |set: &[usize]| {
                let ids: Vec<ConstraintId> = set.iter().flat_map(|&g| groups[g].members.iter().copied()).collect();
                check(&mut engine, &ids)
            });
            passes.push(stats);
            let Some(chosen) = conflict else {
                return Err(Error::AnomalyNotReproducible);
            };
            let mut ids: Vec<ConstraintId> = chosen.iter().flat_map(|&g| groups[g].members.iter().copied()).collect();
            ids.sort_by_key(|id| rank[id]);
            // the chosen groups are inconsistent already
            let (out, stats) = quickxplain_inconsistent(&[], &ids, |set: &[ConstraintId]| check(&mut engine, set));
            (Some(out), stats)
        }
    };
    passes.push(stats);
    let Some(ids) = conflict else {
        return Err(Error::AnomalyNotReproducible);
    };
    Ok(ConflictSet {
        constraints: ids.iter().map(|id| csp.constraint(*id).clone()).collect(),
        background: bg,
        qx_stats: stats,
        passes,
        stats: engine.stats,
    })
}

/// Whether `background` plus the given constraints of `csp` has a solution.
pub fn is_consistent(csp: &Csp, ids: &[ConstraintId], background: &[CompiledConstraint]) -> bool {
    Engine::new(csp).check_subset(ids, background, &LabelingOptions::default()).is_some()
}

/// Relation kind of a tree constraint, if it is one.
pub fn relation_kind(c: &CompiledConstraint) -> Option<RelationKind> {
    match c.origin {
        Origin::Tree { kind, .. } => Some(kind),
        _ => None,
    }
}
