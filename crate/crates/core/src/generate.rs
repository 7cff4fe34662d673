//! Seeded synthetic models with optionally planted anomalies.
//!
//! In [`CtcMode::Safe`] every generated cross-tree constraint is a tautology
//! under the tree semantics, so the planted anomalies listed in the
//! [`Manifest`] are the only ones. [`CtcMode::Random`] draws arbitrary
//! constraints and is meant for oracle corpora.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::AnomalyKind;
use crate::model::{
    ArithOp, Attachment, ChildRelation, CmpOp, Expr, FeatureId, FeatureModel, ModuleDecl, SourceSpan, Term,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtcMode {
    Safe,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub features: usize,
    pub attributes: usize,
    /// Share of single children attached as optional.
    pub optional_ratio: f64,
    pub alternative_groups: usize,
    pub group_size: usize,
    pub ctcs: usize,
    pub modules: usize,
    pub seed: u64,
    /// Largest attribute domain; domains have at least two values.
    pub max_domain: usize,
    pub mode: CtcMode,
    pub plant_dead_features: usize,
    pub plant_dead_values: usize,
    pub plant_false_optional: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            features: 20,
            attributes: 10,
            optional_ratio: 0.5,
            alternative_groups: 2,
            group_size: 3,
            ctcs: 5,
            modules: 0,
            seed: 1,
            max_domain: 4,
            mode: CtcMode::Safe,
            plant_dead_features: 0,
            plant_dead_values: 0,
            plant_false_optional: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedAnomaly {
    pub anomaly: AnomalyKind,
    /// Name of the cross-tree constraint causing it.
    pub constraint: String,
    pub module: Option<String>,
}

/// Ground truth for a generated model.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub planted: Vec<PlantedAnomaly>,
}

struct Gen<'s> {
    spec: &'s GeneratorSpec,
    rng: ChaCha8Rng,
    m: FeatureModel,
    next_ctc: usize,
}

/// Generates a valid model and its manifest. Equal specs give equal output.
pub fn generate(spec: &GeneratorSpec) -> (FeatureModel, Manifest) {
    let mut g = Gen { spec, rng: ChaCha8Rng::seed_from_u64(spec.seed), m: FeatureModel::with_root("F0"), next_ctc: 0 };
    g.tree();
    g.m = canonical(&g.m);
    g.attributes();
    g.modules();
    let mut manifest = Manifest { seed: spec.seed, planted: Vec::new() };
    g.plant(&mut manifest);
    g.ctcs();
    // serialization groups constraints by module
    let order: Vec<String> = g.m.modules.iter().map(|d| d.name.clone()).collect();
    g.m.constraints.sort_by_key(|c| c.module.as_ref().and_then(|m| order.iter().position(|o| o == m)));
    (g.m, manifest)
}

impl Gen<'_> {
    fn tree(&mut self) {
        let n = self.spec.features.max(1);
        let s = self.spec.group_size.max(2);
        let mut remaining = n - 1;
        let mut groups_left = self.spec.alternative_groups;
        let mut feats = vec![self.m.root];
        let mut count = 1;
        // optional children of the root keep false-optional plantings possible
        for _ in 0..self.spec.plant_false_optional.min(remaining) {
            feats.push(self.m.add_child(self.m.root, format!("F{count}"), Attachment::Optional));
            count += 1;
            remaining -= 1;
        }
        while remaining > 0 {
            let want_group = groups_left > 0 && remaining >= s && {
                let forced = remaining <= groups_left * s;
                forced || self.rng.gen_bool((groups_left * s) as f64 / remaining as f64 * 0.5)
            };
            if want_group {
                let free: Vec<FeatureId> = feats
                    .iter()
                    .copied()
                    .filter(|&f| self.m.feature(f).alternative_groups().next().is_none())
                    .collect();
                let parent = *free.choose(&mut self.rng).expect("some feature without a group");
                let names: Vec<String> = (0..s).map(|i| format!("F{}", count + i)).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                let ids = self.m.add_alternative(parent, &refs);
                feats.extend(ids);
                count += s;
                remaining -= s;
                groups_left -= 1;
            } else {
                let parent = *feats.choose(&mut self.rng).unwrap();
                let att = if self.rng.gen_bool(self.spec.optional_ratio.clamp(0.0, 1.0)) {
                    Attachment::Optional
                } else {
                    Attachment::Mandatory
                };
                let id = self.m.add_child(parent, format!("F{count}"), att);
                feats.push(id);
                count += 1;
                remaining -= 1;
            }
        }
    }

    fn modules(&mut self) {
        let k = self.spec.modules;
        if k == 0 {
            return;
        }
        // cut subtrees of roughly equal weight bottom-up, then top up at random;
        // a feature weighs one plus its attribute count
        let weight = |f: FeatureId| 1 + self.m.feature(f).attributes.len();
        let target = (self.m.ids().map(weight).sum::<usize>() / k).max(1);
        let mut residual = vec![0usize; self.m.features.len()];
        let mut roots = vec![self.m.root];
        for f in self.m.postorder() {
            let mut kids: Vec<FeatureId> = self.m.feature(f).child_ids().collect();
            kids.sort_by_key(|c| std::cmp::Reverse(residual[c.0]));
            let mut r = weight(f) + kids.iter().map(|c| residual[c.0]).sum::<usize>();
            // split off heavy children before this subtree grows far past the target
            for c in kids {
                if r <= target + target / 2 || residual[c.0] < target / 2 || roots.len() >= k {
                    break;
                }
                roots.push(c);
                r -= residual[c.0];
                residual[c.0] = 0;
            }
            if f != self.m.root && r >= target && roots.len() < k {
                roots.push(f);
            } else {
                residual[f.0] = r;
            }
        }
        let mut rest: Vec<FeatureId> = self.m.ids().filter(|f| !roots.contains(f)).collect();
        rest.shuffle(&mut self.rng);
        let missing = k.saturating_sub(roots.len());
        roots.extend(rest.into_iter().take(missing));
        roots.sort();
        let names: Vec<String> = (0..roots.len()).map(|i| format!("M{i}")).collect();
        for f in self.m.preorder() {
            let module = match roots.iter().position(|&r| r == f) {
                Some(i) => names[i].clone(),
                None => self.m.feature(self.m.feature(f).parent.unwrap()).module.clone().unwrap(),
            };
            self.m.features[f.0].module = Some(module);
        }
        self.m.modules = roots
            .iter()
            .zip(&names)
            .map(|(&r, n)| ModuleDecl {
                name: n.clone(),
                root_feature: self.m.name(r).to_string(),
                references: Vec::new(),
                span: SourceSpan::default(),
            })
            .collect();
    }

    fn domain(&mut self) -> Vec<i64> {
        let size = self.rng.gen_range(2..=self.spec.max_domain.max(2));
        let base = self.rng.gen_range(0..10) * 10;
        let step = *[1, 5, 10].choose(&mut self.rng).unwrap();
        (0..size as i64).map(|i| base + i * step).collect()
    }

    fn attributes(&mut self) {
        let mut budget = self.spec.attributes;
        // abstract attribute sets on some alternative parents
        let parents: Vec<FeatureId> =
            self.m.ids().filter(|&f| self.m.feature(f).alternative_groups().next().is_some()).collect();
        for p in parents {
            let members = self.m.feature(p).alternative_groups().next().unwrap().to_vec();
            if budget < members.len() + 1 || self.m.feature(p).attribute("w").is_some() || !self.rng.gen_bool(0.5) {
                continue;
            }
            for c in &members {
                let d = self.domain();
                self.m.add_attribute(*c, "w", d);
            }
            self.m.add_abstract_attribute(p, "w");
            budget -= members.len() + 1;
        }
        let ids: Vec<FeatureId> = self.m.ids().collect();
        let mut counter = vec![0usize; ids.len()];
        while budget > 0 {
            let f = *ids.choose(&mut self.rng).unwrap();
            let name = format!("a{}", counter[f.0]);
            counter[f.0] += 1;
            let d = self.domain();
            self.m.add_attribute(f, &name, d);
            budget -= 1;
        }
    }

    fn ctc_name(&mut self, prefix: &str) -> String {
        self.next_ctc += 1;
        format!("{prefix}{}", self.next_ctc)
    }

    fn push_ctc(&mut self, name: String, expr: Expr, anchor: FeatureId) {
        self.m.add_constraint(&name, expr);
        let module = self.m.feature(anchor).module.clone();
        self.m.constraints.last_mut().unwrap().module = module;
    }

    fn plant(&mut self, manifest: &mut Manifest) {
        let mut blocked: Vec<FeatureId> = Vec::new();
        let mut pinned: Vec<FeatureId> = Vec::new();
        let disjoint = |m: &FeatureModel, blocked: &[FeatureId], f: FeatureId| {
            blocked.iter().all(|&b| !m.is_ancestor_or_self(b, f) && !m.is_ancestor_or_self(f, b))
        };
        let mut order: Vec<FeatureId> = self.m.ids().filter(|&f| f != self.m.root).collect();
        order.shuffle(&mut self.rng);

        for _ in 0..self.spec.plant_false_optional {
            // an optional child of a feature present in every product
            let core = |m: &FeatureModel, f: FeatureId| {
                let p = m.feature(f).parent.unwrap();
                std::iter::once(p)
                    .chain(m.ancestors(p))
                    .all(|x| matches!(m.attachment(x), Attachment::Root | Attachment::Mandatory))
            };
            let Some(&f) = order
                .iter()
                .find(|&&f| self.m.attachment(f) == Attachment::Optional && core(&self.m, f) && !pinned.contains(&f))
            else {
                break;
            };
            pinned.push(f);
            let name = self.ctc_name("plant_fo_");
            let fname = self.m.name(f).to_string();
            let root = self.m.name(self.m.root).to_string();
            self.push_ctc(name.clone(), Expr::implies(Expr::exist(&root), Expr::exist(&fname)), f);
            manifest.planted.push(PlantedAnomaly {
                anomaly: AnomalyKind::FalseOptionalFeature { feature: fname },
                constraint: name,
                module: self.m.feature(f).module.clone(),
            });
        }
        for _ in 0..self.spec.plant_dead_features {
            let Some(&f) = order.iter().find(|&&f| {
                self.m.attachment(f) == Attachment::Optional && disjoint(&self.m, &blocked, f) && !pinned.contains(&f)
            }) else {
                break;
            };
            blocked.push(f);
            self.m.add_attribute(f, "plant_x", [1, 2]);
            let name = self.ctc_name("plant_dead_");
            let fname = self.m.name(f).to_string();
            let expr =
                Expr::implies(Expr::exist(&fname), Expr::Cmp(CmpOp::Gt, Term::attr(&fname, "plant_x"), Term::Int(2)));
            self.push_ctc(name.clone(), expr, f);
            manifest.planted.push(PlantedAnomaly {
                anomaly: AnomalyKind::DeadFeature { feature: fname },
                constraint: name,
                module: self.m.feature(f).module.clone(),
            });
        }
        for _ in 0..self.spec.plant_dead_values {
            let Some(&f) = order.iter().find(|&&f| disjoint(&self.m, &blocked, f)) else { break };
            blocked.push(f);
            let lo = self.rng.gen_range(0..5);
            let size = self.rng.gen_range(3..=self.spec.max_domain.max(3)) as i64;
            let a_dom: Vec<i64> = (0..size).map(|i| 10 + 10 * i).collect();
            let a_max = *a_dom.last().unwrap();
            self.m.add_attribute(f, "plant_a", a_dom);
            self.m.add_attribute(f, "plant_b", [lo, lo + 1]);
            let name = self.ctc_name("plant_value_");
            let fname = self.m.name(f).to_string();
            let expr = Expr::Cmp(
                CmpOp::Le,
                Term::bin(ArithOp::Add, Term::attr(&fname, "plant_a"), Term::attr(&fname, "plant_b")),
                Term::Int(a_max + lo - 1),
            );
            self.push_ctc(name.clone(), expr, f);
            manifest.planted.push(PlantedAnomaly {
                anomaly: AnomalyKind::dead_value(&fname, "plant_a", a_max),
                constraint: name,
                module: self.m.feature(f).module.clone(),
            });
        }
    }

    fn pick_attr(&mut self, f: FeatureId) -> Option<(String, Vec<i64>)> {
        let attrs: Vec<_> =
            self.m.feature(f).attributes.iter().filter(|a| !a.name.starts_with("plant_")).cloned().collect();
        attrs.choose(&mut self.rng).map(|a| (a.name.clone(), a.domain.clone()))
    }

    fn ctcs(&mut self) {
        if self.spec.ctcs == 0 {
            return;
        }
        let root = self.m.root;
        let rname = self.m.name(root).to_string();
        self.push_ctc("root".into(), Expr::exist(&rname), root);
        let ids: Vec<FeatureId> = self.m.ids().collect();
        for _ in 1..self.spec.ctcs {
            let f = *ids.choose(&mut self.rng).unwrap();
            let (expr, name) = match self.spec.mode {
                CtcMode::Safe => (self.safe_ctc(f), self.ctc_name("c")),
                CtcMode::Random => (self.random_ctc(f), self.ctc_name("c")),
            };
            self.push_ctc(name, expr, f);
        }
    }

    fn safe_ctc(&mut self, f: FeatureId) -> Expr {
        let fname = self.m.name(f).to_string();
        match self.rng.gen_range(0..3) {
            0 => match self.m.feature(f).parent {
                Some(p) => Expr::implies(Expr::exist(&fname), Expr::exist(self.m.name(p))),
                None => Expr::or(Expr::exist(&fname), Expr::nonexist(&fname)),
            },
            1 => match self.pick_attr(f) {
                Some((a, d)) => {
                    Expr::or(Expr::Cmp(CmpOp::Ge, Term::attr(&fname, &a), Term::Int(d[0])), Expr::nonexist(&fname))
                }
                None => Expr::or(Expr::exist(&fname), Expr::nonexist(&fname)),
            },
            _ => match self.pick_attr(f) {
                Some((a, d)) => Expr::implies(
                    Expr::exist(&fname),
                    Expr::Cmp(CmpOp::Le, Term::attr(&fname, &a), Term::Int(*d.last().unwrap())),
                ),
                None => Expr::or(Expr::nonexist(&fname), Expr::exist(&fname)),
            },
        }
    }

    /// A feature near `f`: in the same module when modules exist.
    fn partner(&mut self, f: FeatureId) -> FeatureId {
        let module = self.m.feature(f).module.clone();
        let pool: Vec<FeatureId> = self.m.ids().filter(|&g| g != f && self.m.feature(g).module == module).collect();
        pool.choose(&mut self.rng).copied().unwrap_or(f)
    }

    fn random_ctc(&mut self, f: FeatureId) -> Expr {
        let g = self.partner(f);
        let (fname, gname) = (self.m.name(f).to_string(), self.m.name(g).to_string());
        let op = *[CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne].choose(&mut self.rng).unwrap();
        match self.rng.gen_range(0..5) {
            0 => Expr::implies(Expr::exist(&fname), Expr::exist(&gname)),
            1 => Expr::implies(Expr::exist(&fname), Expr::nonexist(&gname)),
            2 => Expr::or(Expr::exist(&fname), Expr::exist(&gname)),
            3 => match (self.pick_attr(f), self.pick_attr(g)) {
                (Some((a, _)), Some((b, _))) => Expr::Cmp(op, Term::attr(&fname, &a), Term::attr(&gname, &b)),
                (Some((a, d)), None) => {
                    let c = *d.choose(&mut self.rng).unwrap();
                    Expr::Cmp(op, Term::attr(&fname, &a), Term::Int(c))
                }
                _ => Expr::implies(Expr::exist(&gname), Expr::exist(&fname)),
            },
            _ => match self.pick_attr(g) {
                Some((b, d)) => {
                    let c = *d.choose(&mut self.rng).unwrap();
                    let k = self.rng.gen_range(1..=3);
                    Expr::implies(
                        Expr::exist(&fname),
                        Expr::Cmp(op, Term::bin(ArithOp::Mul, Term::Int(k), Term::attr(&gname, &b)), Term::Int(k * c)),
                    )
                }
                None => Expr::implies(Expr::nonexist(&fname), Expr::nonexist(&gname)),
            },
        }
    }
}

/// Renumbers features in preorder and renames them `F0, F1, ...` so that
/// serialization round-trips to an identical arena.
fn canonical(m: &FeatureModel) -> FeatureModel {
    let order = m.preorder();
    let mut pos = vec![0; m.features.len()];
    for (i, f) in order.iter().enumerate() {
        pos[f.0] = i;
    }
    let map = |f: FeatureId| FeatureId(pos[f.0]);
    let mut out = m.clone();
    out.features = order
        .iter()
        .map(|&f| {
            let mut feat = m.feature(f).clone();
            feat.name = format!("F{}", pos[f.0]);
            feat.parent = feat.parent.map(map);
            feat.children = feat
                .children
                .iter()
                .map(|r| match r {
                    ChildRelation::Mandatory(c) => ChildRelation::Mandatory(map(*c)),
                    ChildRelation::Optional(c) => ChildRelation::Optional(map(*c)),
                    ChildRelation::Alternative(cs) => ChildRelation::Alternative(cs.iter().map(|c| map(*c)).collect()),
                })
                .collect();
            feat
        })
        .collect();
    out.root = map(m.root);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{detect, detect_naive, DetectOptions};
    use crate::parser;

    #[test]
    fn deterministic_and_valid() {
        let spec = GeneratorSpec { seed: 7, modules: 3, ..Default::default() };
        let (a, ma) = generate(&spec);
        let (b, mb) = generate(&spec);
        assert_eq!(parser::serialize(&a), parser::serialize(&b));
        assert_eq!(ma, mb);
        assert!(a.validate().is_empty(), "{:?}", a.validate());
        assert_eq!(a.features.len(), 20);
        let back = parser::parse(&parser::serialize(&a)).unwrap();
        assert_eq!(back.without_spans(), a.without_spans());
    }

    #[test]
    fn safe_mode_is_clean() {
        for seed in 0..10 {
            let spec = GeneratorSpec { seed, features: 30, attributes: 25, ctcs: 40, ..Default::default() };
            let (m, manifest) = generate(&spec);
            assert!(manifest.planted.is_empty());
            assert!(detect_naive(&m, &DetectOptions::default()).anomalies.is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn single_root() {
        let spec = GeneratorSpec { features: 1, attributes: 0, alternative_groups: 0, ctcs: 0, ..Default::default() };
        let (m, _) = generate(&spec);
        assert_eq!(parser::serialize(&m), "feature F0 {}\n");
    }

    #[test]
    fn planted_dead_feature_is_found() {
        let spec = GeneratorSpec { seed: 1, features: 20, plant_dead_features: 1, ..Default::default() };
        let (m, manifest) = generate(&spec);
        let report = detect(&m, &DetectOptions::default());
        let found: Vec<AnomalyKind> = report.anomalies.into_iter().map(|a| a.kind).collect();
        let planted: Vec<AnomalyKind> = manifest.planted.into_iter().map(|p| p.anomaly).collect();
        assert_eq!(found, planted);
    }

    #[test]
    fn all_plantings() {
        for seed in 0..20 {
            let spec = GeneratorSpec {
                seed,
                features: 40,
                attributes: 20,
                ctcs: 10,
                modules: 4,
                plant_dead_features: 1,
                plant_dead_values: 1,
                plant_false_optional: 1,
                ..Default::default()
            };
            let (m, manifest) = generate(&spec);
            assert!(m.validate().is_empty(), "seed {seed} {:?}", m.validate());
            assert_eq!(manifest.planted.len(), 3, "seed {seed} {manifest:?}\n{}", parser::serialize(&m));
            let found = detect(&m, &DetectOptions::default()).kinds();
            let planted = manifest.planted.iter().map(|p| p.anomaly.clone()).collect();
            assert_eq!(found, planted, "seed {seed}");
        }
    }
}
