//! Removal of model elements that cannot take part in a contradiction.
//!
//! Only cross-tree constraints close cycles, so anything no CTC mentions
//! can go: abstract attribute sets, plain attributes, leaf-only alternative
//! groups and other leaves, repeatedly until nothing changes. Module roots
//! stay so that module grouping keeps working on the reduced model.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use crate::compiler;
use crate::model::{ChildRelation, FeatureId, FeatureModel, PragmaTarget};

/// Size of a model: features, attributes and compiled constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelSize {
    pub features: usize,
    pub attributes: usize,
    pub constraints: usize,
}

impl ModelSize {
    pub fn of(model: &FeatureModel) -> ModelSize {
        ModelSize {
            features: model.features.len(),
            attributes: model.attribute_count(),
            constraints: compiler::compile(model).constraints.len(),
        }
    }
}

struct Refs {
    features: HashSet<String>,
    attrs: HashSet<(String, String)>,
}

fn ctc_refs(model: &FeatureModel) -> Refs {
    let mut features = HashSet::new();
    let mut attrs = HashSet::new();
    for c in &model.constraints {
        features.extend(c.expr.feature_refs().into_iter().map(str::to_string));
        for (f, a) in c.expr.attr_refs() {
            features.insert(f.to_string());
            attrs.insert((f.to_string(), a.to_string()));
        }
    }
    Refs { features, attrs }
}

/// The attribute `(f, a)` together with every same-named copy below it in
/// nested alternative groups, if `a` is abstract on `f`.
fn abstract_set(model: &FeatureModel, f: FeatureId, attr: &str, out: &mut Vec<(FeatureId, String)>) {
    out.push((f, attr.to_string()));
    let Some(a) = model.feature(f).attribute(attr) else { return };
    if !a.is_abstract {
        return;
    }
    if let Some(group) = model.feature(f).alternative_groups().next() {
        for &c in group {
            abstract_set(model, c, attr, out);
        }
    }
}

/// Whether `(f, attr)` is a child copy of an abstract attribute on `f`'s parent.
fn is_abstract_copy(model: &FeatureModel, f: FeatureId, attr: &str) -> bool {
    let Some(p) = model.feature(f).parent else { return false };
    let in_group = model.feature(p).alternative_groups().any(|g| g.contains(&f));
    in_group && model.feature(p).attribute(attr).is_some_and(|a| a.is_abstract)
}

/// Applies the reduction rules to a fixpoint. The result is valid and keeps
/// every cross-tree constraint unchanged.
pub fn reduce(model: &FeatureModel) -> FeatureModel {
    let refs = ctc_refs(model);
    let module_roots: HashSet<&str> = model.modules.iter().map(|m| m.root_feature.as_str()).collect();
    let mut gone_features: HashSet<FeatureId> = HashSet::new();
    let mut gone_attrs: HashSet<(FeatureId, String)> = HashSet::new();
    let mut gone_groups: HashSet<(FeatureId, usize)> = HashSet::new();

    let live_attrs = |f: FeatureId, gone_attrs: &HashSet<(FeatureId, String)>| {
        model.feature(f).attributes.iter().filter(|a| !gone_attrs.contains(&(f, a.name.clone()))).count()
    };
    let live_children =
        |f: FeatureId, gone: &HashSet<FeatureId>| model.feature(f).child_ids().any(|c| !gone.contains(&c));
    let referenced = |f: FeatureId| refs.features.contains(model.name(f)) || module_roots.contains(model.name(f));

    loop {
        let mut changed = false;
        for f in model.postorder() {
            if gone_features.contains(&f) {
                continue;
            }
            // (1) abstract sets, (2) remaining attributes
            for a in &model.feature(f).attributes {
                if gone_attrs.contains(&(f, a.name.clone())) || is_abstract_copy(model, f, &a.name) {
                    continue;
                }
                let mut set = Vec::new();
                abstract_set(model, f, &a.name, &mut set);
                let used = set.iter().any(|(g, n)| refs.attrs.contains(&(model.name(*g).to_string(), n.clone())));
                if !used {
                    gone_attrs.extend(set);
                    changed = true;
                }
            }
            // (3) alternative groups of bare leaves
            for (gi, rel) in model.feature(f).children.iter().enumerate() {
                let ChildRelation::Alternative(members) = rel else { continue };
                if gone_groups.contains(&(f, gi)) {
                    continue;
                }
                let bare = members
                    .iter()
                    .all(|&c| live_attrs(c, &gone_attrs) == 0 && !live_children(c, &gone_features) && !referenced(c));
                if bare {
                    gone_groups.insert((f, gi));
                    gone_features.extend(members.iter().copied());
                    changed = true;
                }
            }
            // (4) other leaves
            if f != model.root
                && model.attachment(f) != crate::model::Attachment::Alternative
                && live_attrs(f, &gone_attrs) == 0
                && !live_children(f, &gone_features)
                && !referenced(f)
            {
                gone_features.insert(f);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    rebuild(model, &gone_features, &gone_attrs)
}

fn rebuild(model: &FeatureModel, gone: &HashSet<FeatureId>, gone_attrs: &HashSet<(FeatureId, String)>) -> FeatureModel {
    let mut remap = vec![None; model.features.len()];
    let mut next = 0;
    for f in model.ids() {
        if !gone.contains(&f) {
            remap[f.0] = Some(FeatureId(next));
            next += 1;
        }
    }
    let map = |f: FeatureId| remap[f.0].expect("surviving feature");
    let mut out = model.clone();
    out.features = model
        .ids()
        .filter(|f| !gone.contains(f))
        .map(|f| {
            let mut feat = model.feature(f).clone();
            feat.parent = feat.parent.map(map);
            feat.attributes.retain(|a| !gone_attrs.contains(&(f, a.name.clone())));
            feat.children = feat
                .children
                .iter()
                .filter_map(|rel| match rel {
                    ChildRelation::Mandatory(c) if !gone.contains(c) => Some(ChildRelation::Mandatory(map(*c))),
                    ChildRelation::Optional(c) if !gone.contains(c) => Some(ChildRelation::Optional(map(*c))),
                    ChildRelation::Alternative(cs) if cs.iter().all(|c| !gone.contains(c)) => {
                        Some(ChildRelation::Alternative(cs.iter().map(|c| map(*c)).collect()))
                    }
                    _ => None,
                })
                .collect();
            feat
        })
        .collect();
    out.root = map(model.root);

    let has_attr =
        |m: &FeatureModel, f: &str, a: &str| m.find(f).is_some_and(|id| m.feature(id).attribute(a).is_some());
    let names: BTreeSet<String> = out.features.iter().map(|f| f.name.clone()).collect();
    let snapshot = out.clone();
    out.pragmas.retain(|p| match &p.target {
        PragmaTarget::Feature(f) => names.contains(f),
        PragmaTarget::Value { feature, attr, .. } => has_attr(&snapshot, feature, attr),
    });
    for m in &mut out.modules {
        m.references.retain(|r| match &r.attr {
            None => names.contains(&r.feature),
            Some(a) => has_attr(&snapshot, &r.feature, a),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{fixtures, model::robot, parser};

    #[test]
    fn robot_loses_only_the_mounting_set() {
        let m = robot();
        let r = reduce(&m);
        assert!(r.validate().is_empty());
        let names: Vec<&str> = r.features.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["Robot", "Motor", "Tool", "Drill", "Glue", "Mill", "Protective_grid"]);
        assert_eq!(r.attribute_count(), 5);
        assert_eq!(r.constraints, m.constraints);
    }

    #[test]
    fn tree_only_model_collapses_to_the_root() {
        let m = parser::parse(fixtures::TREE_ONLY).unwrap();
        let r = reduce(&m);
        assert_eq!(r.features.len(), 1);
        assert_eq!(r.attribute_count(), 0);
        assert!(r.validate().is_empty());
    }

    #[test]
    fn fully_covered_model_is_unchanged() {
        let src = "feature R { optional A {} optional B {} }\nconstraint(c, exist(A) ==> exist(B)).\n";
        let m = parser::parse(src).unwrap();
        assert_eq!(reduce(&m), m);
    }

    #[test]
    fn unused_abstract_set_is_removed_whole() {
        let src = "feature R { mandatory T { attr w abstract; alternative { A { attr w in {1}; } B { attr w in {2}; } } } optional X {} }\n\
                   constraint(c, exist(X) ==> exist(A)).\n";
        let r = reduce(&parser::parse(src).unwrap());
        assert_eq!(r.attribute_count(), 0);
        // A is referenced, so the group stays
        assert_eq!(r.features.len(), 5);
    }

    #[test]
    fn alternative_member_is_never_removed_alone() {
        let src = "feature R { mandatory T { alternative { A {} B {} C {} } } }\nconstraint(c, nonexist(A)).\n";
        let r = reduce(&parser::parse(src).unwrap());
        assert_eq!(r.features.len(), 5);
    }

    #[test]
    fn module_roots_and_refs() {
        let m = parser::parse(fixtures::ROBOT_MODULAR).unwrap();
        let r = reduce(&m);
        assert!(r.validate().is_empty(), "{:?}", r.validate());
        assert!(r.find("Mounting_set").is_none());
        assert!(r.find("Protective_grid").is_some());
        assert_eq!(r.modules.len(), 3);
    }

    #[test]
    fn sizes() {
        let s = ModelSize::of(&robot());
        assert_eq!(s, ModelSize { features: 8, attributes: 5, constraints: 17 });
    }
}
