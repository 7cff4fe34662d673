//! Finite-domain solver: propagation to a fixpoint plus trail-based
//! backtracking search.
//!
//! Domains are bitsets over each variable's original sorted values. Binary
//! and clause constraints are arc consistent, `sum` is bounds consistent,
//! `element` is generalized arc consistent and arithmetic comparisons are
//! filtered by support enumeration when small, by linear bounds otherwise.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::compiler::{CExpr, Comparison, CompiledConstraint, ConstraintId, Csp, Form, Lit, VarId};
use crate::model::CmpOp;

/// Finite integer set, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DomainSet(Vec<i64>);

impl DomainSet {
    pub fn new() -> DomainSet {
        DomainSet(Vec::new())
    }
    pub fn contains(&self, v: i64) -> bool {
        self.0.binary_search(&v).is_ok()
    }
    pub fn insert(&mut self, v: i64) -> bool {
        match self.0.binary_search(&v) {
            Ok(_) => false,
            Err(i) => {
                self.0.insert(i, v);
                true
            }
        }
    }
    pub fn remove(&mut self, v: i64) -> bool {
        match self.0.binary_search(&v) {
            Ok(i) => {
                self.0.remove(i);
                true
            }
            Err(_) => false,
        }
    }
    pub fn min(&self) -> Option<i64> {
        self.0.first().copied()
    }
    pub fn max(&self) -> Option<i64> {
        self.0.last().copied()
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = i64> + '_ {
        self.0.iter().copied()
    }
    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }
}

impl FromIterator<i64> for DomainSet {
    fn from_iter<I: IntoIterator<Item = i64>>(iter: I) -> Self {
        let mut v: Vec<i64> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        DomainSet(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarOrder {
    SmallestDomainFirst,
    MostConstrainedFirst,
    DeclarationOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueOrder {
    UpFirst,
    DownFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    Enumerate,
    Bisect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStrategy {
    pub var_order: VarOrder,
    pub value_order: ValueOrder,
    pub branching: Branching,
}

/// Labeling strategy, set separately for feature and attribute variables.
/// Feature variables are always labeled before attribute variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingOptions {
    pub features: ClassStrategy,
    pub attributes: ClassStrategy,
}

impl Default for LabelingOptions {
    fn default() -> Self {
        LabelingOptions {
            features: ClassStrategy {
                var_order: VarOrder::MostConstrainedFirst,
                value_order: ValueOrder::UpFirst,
                branching: Branching::Enumerate,
            },
            attributes: ClassStrategy {
                var_order: VarOrder::SmallestDomainFirst,
                value_order: ValueOrder::UpFirst,
                branching: Branching::Bisect,
            },
        }
    }
}

impl LabelingOptions {
    pub fn with_feature_values(mut self, order: ValueOrder) -> Self {
        self.features.value_order = order;
        self
    }
    pub fn with_attribute_values(mut self, order: ValueOrder) -> Self {
        self.attributes.value_order = order;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolveStats {
    pub propagation_steps: u64,
    pub backtracks: u64,
    pub consistency_checks: u64,
}

impl AddAssign for SolveStats {
    fn add_assign(&mut self, o: SolveStats) {
        self.propagation_steps += o.propagation_steps;
        self.backtracks += o.backtracks;
        self.consistency_checks += o.consistency_checks;
    }
}

/// A total assignment, indexed by [`VarId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub values: Vec<i64>,
}

impl Solution {
    pub fn value(&self, v: VarId) -> i64 {
        self.values[v.0]
    }
}

/// Propagates the CSP from the given domains (restricted to the original
/// ones). `None` means some domain ran empty.
pub fn propagate(csp: &Csp, domains: &[DomainSet]) -> Option<Vec<DomainSet>> {
    let mut engine = Engine::new(csp);
    let ok = engine.restrict_to(domains) && engine.setup(None, &[]) && engine.propagate();
    let out = ok.then(|| (0..csp.vars.len()).map(|v| engine.store.domain(v)).collect());
    engine.reset(0);
    out
}

/// Finds a solution of the whole CSP.
pub fn solve(csp: &Csp, opts: &LabelingOptions) -> (Option<Solution>, SolveStats) {
    check(csp, &[], opts)
}

/// Solves the CSP together with temporary assumptions.
pub fn check(csp: &Csp, assumptions: &[CompiledConstraint], opts: &LabelingOptions) -> (Option<Solution>, SolveStats) {
    let mut engine = Engine::new(csp);
    let sol = engine.check(assumptions, opts);
    (sol, engine.stats)
}

#[derive(Debug, Clone)]
enum Prop {
    Clause(Vec<Lit>),
    Equal(usize, usize),
    Sum(Vec<usize>, usize),
    Element(Vec<usize>, usize),
    Member(usize, Vec<i64>),
    Expr(CExpr),
}

fn lower(form: &Form) -> Vec<Prop> {
    match form {
        Form::Equal(a, b) => vec![Prop::Equal(a.0, b.0)],
        Form::Implication { antecedent, consequent } => {
            let mut lits = vec![antecedent.negated()];
            lits.extend(consequent.iter().copied());
            vec![Prop::Clause(lits)]
        }
        Form::Equivalence(a, b) => vec![Prop::Clause(vec![a.negated(), *b]), Prop::Clause(vec![*a, b.negated()])],
        Form::Sum { terms, target } => vec![Prop::Sum(terms.iter().map(|v| v.0).collect(), target.0)],
        Form::Element { list, target } => vec![Prop::Element(list.iter().map(|v| v.0).collect(), target.0)],
        Form::Member { var, values } => vec![Prop::Member(var.0, values.clone())],
        Form::Expr(e) => vec![Prop::Expr(e.clone())],
    }
}

struct Fail;
type Res = Result<(), Fail>;

/// Bitset domains with an undo trail.
struct Store {
    values: Vec<Vec<i64>>,
    offset: Vec<usize>,
    words: Vec<u64>,
    size: Vec<u32>,
    /// (word index, old word, var, old size)
    trail: Vec<(usize, u64, usize, u32)>,
    changed: Vec<usize>,
    dirty: Vec<bool>,
}

impl Store {
    fn new(csp: &Csp) -> Store {
        let mut values = Vec::new();
        let mut offset = Vec::new();
        let mut words = Vec::new();
        let mut size = Vec::new();
        for var in &csp.vars {
            let vals: Vec<i64> = var.domain.iter().collect();
            offset.push(words.len());
            let n = vals.len();
            for w in 0..n.div_ceil(64) {
                let bits = (n - w * 64).min(64);
                words.push(if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 });
            }
            size.push(n as u32);
            values.push(vals);
        }
        let nvars = values.len();
        Store { values, offset, words, size, trail: Vec::new(), changed: Vec::new(), dirty: vec![false; nvars] }
    }

    fn index(&self, v: usize, val: i64) -> Option<usize> {
        self.values[v].binary_search(&val).ok()
    }

    fn has_idx(&self, v: usize, i: usize) -> bool {
        self.words[self.offset[v] + i / 64] >> (i % 64) & 1 == 1
    }

    fn contains(&self, v: usize, val: i64) -> bool {
        self.index(v, val).is_some_and(|i| self.has_idx(v, i))
    }

    fn size(&self, v: usize) -> usize {
        self.size[v] as usize
    }

    fn iter(&self, v: usize) -> impl DoubleEndedIterator<Item = i64> + '_ {
        let vals = &self.values[v];
        (0..vals.len()).filter(move |&i| self.has_idx(v, i)).map(move |i| vals[i])
    }

    fn min(&self, v: usize) -> i64 {
        self.iter(v).next().expect("non-empty domain")
    }

    fn max(&self, v: usize) -> i64 {
        self.iter(v).next_back().expect("non-empty domain")
    }

    fn fixed(&self, v: usize) -> Option<i64> {
        (self.size[v] == 1).then(|| self.min(v))
    }

    fn domain(&self, v: usize) -> DomainSet {
        DomainSet(self.iter(v).collect())
    }

    fn clear_idx(&mut self, v: usize, i: usize) {
        let w = self.offset[v] + i / 64;
        self.trail.push((w, self.words[w], v, self.size[v]));
        self.words[w] &= !(1u64 << (i % 64));
        self.size[v] -= 1;
        if !self.dirty[v] {
            self.dirty[v] = true;
            self.changed.push(v);
        }
    }

    fn retain(&mut self, v: usize, mut keep: impl FnMut(i64) -> bool) -> Res {
        for i in 0..self.values[v].len() {
            if self.has_idx(v, i) && !keep(self.values[v][i]) {
                self.clear_idx(v, i);
            }
        }
        if self.size[v] == 0 {
            Err(Fail)
        } else {
            Ok(())
        }
    }

    fn remove(&mut self, v: usize, val: i64) -> Res {
        if let Some(i) = self.index(v, val) {
            if self.has_idx(v, i) {
                self.clear_idx(v, i);
                if self.size[v] == 0 {
                    return Err(Fail);
                }
            }
        }
        Ok(())
    }

    fn assign(&mut self, v: usize, val: i64) -> Res {
        if !self.contains(v, val) {
            return Err(Fail);
        }
        if self.size[v] > 1 {
            self.retain(v, |x| x == val)?;
        }
        Ok(())
    }

    fn bounds(&mut self, v: usize, lo: i128, hi: i128) -> Res {
        if (self.min(v) as i128) < lo || (self.max(v) as i128) > hi {
            self.retain(v, |x| (x as i128) >= lo && (x as i128) <= hi)?;
        }
        Ok(())
    }

    fn mark(&self) -> usize {
        self.trail.len()
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (w, old, v, size) = self.trail.pop().unwrap();
            self.words[w] = old;
            self.size[v] = size;
        }
    }

    fn intersects(&self, a: usize, b: usize) -> bool {
        let (s, l) = if self.size(a) <= self.size(b) { (a, b) } else { (b, a) };
        self.iter(s).any(|x| self.contains(l, x))
    }

    fn lit_status(&self, l: Lit) -> Option<bool> {
        let v = l.var.0;
        let has = self.contains(v, l.value);
        let only = has && self.size[v] == 1;
        match (l.equal, has, only) {
            (true, false, _) => Some(false),
            (true, _, true) => Some(true),
            (false, false, _) => Some(true),
            (false, _, true) => Some(false),
            _ => None,
        }
    }

    fn enforce_lit(&mut self, l: Lit, want: bool) -> Res {
        if l.equal == want {
            self.assign(l.var.0, l.value)
        } else {
            self.remove(l.var.0, l.value)
        }
    }
}

/// Above this many tuples comparisons fall back to bounds reasoning.
const ENUMERATION_LIMIT: usize = 4096;

/// Reusable solver over one CSP. Each check runs against a chosen subset of
/// the CSP's constraints plus temporary extra constraints.
pub struct Engine<'a> {
    csp: &'a Csp,
    store: Store,
    props: Vec<Prop>,
    prop_vars: Vec<Vec<usize>>,
    owner: Vec<usize>,
    base_props: usize,
    by_constraint: Vec<Vec<usize>>,
    watches: Vec<Vec<usize>>,
    active: Vec<bool>,
    queued: Vec<bool>,
    queue: std::collections::VecDeque<usize>,
    feature_var: Vec<bool>,
    pub stats: SolveStats,
}

impl<'a> Engine<'a> {
    pub fn new(csp: &'a Csp) -> Engine<'a> {
        let mut e = Engine {
            csp,
            store: Store::new(csp),
            props: Vec::new(),
            prop_vars: Vec::new(),
            owner: Vec::new(),
            base_props: 0,
            by_constraint: vec![Vec::new(); csp.constraints.len()],
            watches: vec![Vec::new(); csp.vars.len()],
            active: Vec::new(),
            queued: Vec::new(),
            queue: Default::default(),
            feature_var: csp.vars.iter().map(|v| v.is_feature()).collect(),
            stats: SolveStats::default(),
        };
        for (ci, c) in csp.constraints.iter().enumerate() {
            for p in lower(&c.form) {
                let idx = e.push_prop(p, ci);
                e.by_constraint[ci].push(idx);
            }
        }
        e.base_props = e.props.len();
        e
    }

    pub fn csp(&self) -> &'a Csp {
        self.csp
    }

    fn push_prop(&mut self, p: Prop, owner: usize) -> usize {
        let idx = self.props.len();
        let vars: Vec<usize> = match &p {
            Prop::Clause(ls) => ls.iter().map(|l| l.var.0).collect(),
            Prop::Equal(a, b) => vec![*a, *b],
            Prop::Sum(ts, t) | Prop::Element(ts, t) => ts.iter().copied().chain(std::iter::once(*t)).collect(),
            Prop::Member(v, _) => vec![*v],
            Prop::Expr(e) => {
                let mut out = Vec::new();
                e.vars(&mut out);
                out.into_iter().map(|v| v.0).collect()
            }
        };
        let mut vars = vars;
        vars.sort_unstable();
        vars.dedup();
        for &v in &vars {
            self.watches[v].push(idx);
        }
        self.props.push(p);
        self.prop_vars.push(vars);
        self.owner.push(owner);
        self.active.push(false);
        self.queued.push(false);
        idx
    }

    fn drop_extras(&mut self) {
        while self.props.len() > self.base_props {
            let idx = self.props.len() - 1;
            for &v in &self.prop_vars[idx] {
                let w = &mut self.watches[v];
                if w.last() == Some(&idx) {
                    w.pop();
                } else {
                    w.retain(|&p| p != idx);
                }
            }
            self.props.pop();
            self.prop_vars.pop();
            self.owner.pop();
            self.active.pop();
            self.queued.pop();
        }
    }

    fn restrict_to(&mut self, domains: &[DomainSet]) -> bool {
        for (v, d) in domains.iter().enumerate() {
            if self.store.retain(v, |x| d.contains(x)).is_err() {
                return false;
            }
        }
        self.clear_changes();
        true
    }

    fn clear_changes(&mut self) {
        for v in self.store.changed.drain(..) {
            self.store.dirty[v] = false;
        }
    }

    /// Activates the chosen constraints (all when `None`) plus `extra` and
    /// queues every active propagator.
    fn setup(&mut self, subset: Option<&[ConstraintId]>, extra: &[CompiledConstraint]) -> bool {
        self.active.iter_mut().for_each(|a| *a = false);
        match subset {
            None => self.active[..self.base_props].iter_mut().for_each(|a| *a = true),
            Some(ids) => {
                for id in ids {
                    for &p in &self.by_constraint[id.0] {
                        self.active[p] = true;
                    }
                }
            }
        }
        for c in extra {
            for p in lower(&c.form) {
                let idx = self.push_prop(p, usize::MAX);
                self.active[idx] = true;
            }
        }
        self.queue.clear();
        for p in 0..self.props.len() {
            self.queued[p] = self.active[p];
            if self.active[p] {
                self.queue.push_back(p);
            }
        }
        true
    }

    fn reset(&mut self, mark: usize) {
        self.store.undo(mark);
        self.clear_changes();
        for p in self.queue.drain(..) {
            self.queued[p] = false;
        }
    }

    /// Runs the queue to a fixpoint. `false` on a wipe-out.
    fn propagate(&mut self) -> bool {
        // variables changed by a decision wake their watchers
        self.wake();
        while let Some(p) = self.queue.pop_front() {
            self.queued[p] = false;
            self.stats.propagation_steps += 1;
            if self.run(p).is_err() {
                self.reset_queue();
                return false;
            }
            self.wake();
        }
        true
    }

    fn wake(&mut self) {
        while let Some(v) = self.store.changed.pop() {
            self.store.dirty[v] = false;
            for &p in &self.watches[v] {
                if self.active[p] && !self.queued[p] {
                    self.queued[p] = true;
                    self.queue.push_back(p);
                }
            }
        }
    }

    fn reset_queue(&mut self) {
        for p in self.queue.drain(..) {
            self.queued[p] = false;
        }
        self.clear_changes();
    }

    fn run(&mut self, p: usize) -> Res {
        // props are only read here; cloning the small ones keeps borrowck simple
        match &self.props[p] {
            Prop::Clause(lits) => {
                let lits = lits.clone();
                self.clause(&lits)
            }
            Prop::Equal(a, b) => {
                let (a, b) = (*a, *b);
                self.equal(a, b)
            }
            Prop::Sum(ts, t) => {
                let (ts, t) = (ts.clone(), *t);
                self.sum(&ts, t)
            }
            Prop::Element(xs, t) => {
                let (xs, t) = (xs.clone(), *t);
                self.element(&xs, t)
            }
            Prop::Member(v, vals) => {
                let (v, vals) = (*v, vals.clone());
                self.store.retain(v, |x| vals.contains(&x))
            }
            Prop::Expr(_) => {
                let Prop::Expr(e) = std::mem::replace(&mut self.props[p], Prop::Member(0, Vec::new())) else {
                    unreachable!()
                };
                let r = self.enforce(&e, true);
                self.props[p] = Prop::Expr(e);
                r
            }
        }
    }

    fn clause(&mut self, lits: &[Lit]) -> Res {
        let mut open = None;
        let mut n_open = 0;
        for &l in lits {
            match self.store.lit_status(l) {
                Some(true) => return Ok(()),
                Some(false) => {}
                None => {
                    n_open += 1;
                    open = Some(l);
                }
            }
        }
        match (n_open, open) {
            (0, _) => Err(Fail),
            (1, Some(l)) => self.store.enforce_lit(l, true),
            _ => Ok(()),
        }
    }

    fn equal(&mut self, a: usize, b: usize) -> Res {
        let s = &self.store;
        let keep_a: Vec<i64> = s.iter(a).filter(|&x| s.contains(b, x)).collect();
        self.store.retain(a, |x| keep_a.binary_search(&x).is_ok())?;
        self.store.retain(b, |x| keep_a.binary_search(&x).is_ok())
    }

    fn sum(&mut self, terms: &[usize], target: usize) -> Res {
        loop {
            let mark = self.store.mark();
            let lo: i128 = terms.iter().map(|&v| self.store.min(v) as i128).sum();
            let hi: i128 = terms.iter().map(|&v| self.store.max(v) as i128).sum();
            self.store.bounds(target, lo, hi)?;
            let (tlo, thi) = (self.store.min(target) as i128, self.store.max(target) as i128);
            for &v in terms {
                let (vmin, vmax) = (self.store.min(v) as i128, self.store.max(v) as i128);
                let lo_rest = lo - vmin;
                let hi_rest = hi - vmax;
                self.store.bounds(v, tlo - hi_rest, thi - lo_rest)?;
            }
            if self.store.mark() == mark {
                return Ok(());
            }
        }
    }

    fn element(&mut self, list: &[usize], target: usize) -> Res {
        if list.is_empty() {
            return Err(Fail);
        }
        loop {
            let mark = self.store.mark();
            let s = &self.store;
            let supported: Vec<i64> = s.iter(target).filter(|&t| list.iter().any(|&x| s.contains(x, t))).collect();
            self.store.retain(target, |t| supported.binary_search(&t).is_ok())?;
            let hits: Vec<usize> = list.iter().copied().filter(|&x| self.store.intersects(x, target)).collect();
            match hits.len() {
                0 => return Err(Fail),
                1 => {
                    let x = hits[0];
                    // x is the only possible index, unless it also occurs elsewhere in the list
                    if list.iter().filter(|&&y| y == x).count() == 1 {
                        let s = &self.store;
                        let keep: Vec<i64> = s.iter(x).filter(|&u| s.contains(target, u)).collect();
                        self.store.retain(x, |u| keep.binary_search(&u).is_ok())?;
                    }
                }
                _ => {}
            }
            if self.store.mark() == mark {
                return Ok(());
            }
        }
    }

    /// Three-valued truth of an expression under the current domains.
    fn eval(&self, e: &CExpr) -> Option<bool> {
        match e {
            CExpr::Lit(l) => self.store.lit_status(*l),
            CExpr::Cmp(c) => self.eval_cmp(c),
            CExpr::Not(a) => self.eval(a).map(|b| !b),
            CExpr::And(xs) => {
                let mut all = true;
                for x in xs {
                    match self.eval(x) {
                        Some(false) => return Some(false),
                        None => all = false,
                        Some(true) => {}
                    }
                }
                all.then_some(true)
            }
            CExpr::Or(xs) => {
                let mut none = true;
                for x in xs {
                    match self.eval(x) {
                        Some(true) => return Some(true),
                        None => none = false,
                        Some(false) => {}
                    }
                }
                none.then_some(false)
            }
            CExpr::Implies(a, b) => match (self.eval(a), self.eval(b)) {
                (Some(false), _) | (_, Some(true)) => Some(true),
                (Some(true), Some(false)) => Some(false),
                _ => None,
            },
            CExpr::Iff(a, b) => match (self.eval(a), self.eval(b)) {
                (Some(x), Some(y)) => Some(x == y),
                _ => None,
            },
        }
    }

    fn enforce(&mut self, e: &CExpr, want: bool) -> Res {
        match e {
            CExpr::Lit(l) => self.store.enforce_lit(*l, want),
            CExpr::Cmp(c) => self.enforce_cmp(c, want),
            CExpr::Not(a) => self.enforce(a, !want),
            CExpr::And(xs) | CExpr::Or(xs) => {
                let conj = matches!(e, CExpr::And(_));
                if conj == want {
                    // every sub-expression must take the value `want`
                    for x in xs {
                        self.enforce(x, want)?;
                    }
                    return Ok(());
                }
                // at least one sub-expression must take `want`
                let mut open = None;
                let mut n_open = 0;
                for (i, x) in xs.iter().enumerate() {
                    match self.eval(x) {
                        Some(v) if v == want => return Ok(()),
                        Some(_) => {}
                        None => {
                            n_open += 1;
                            open = Some(i);
                        }
                    }
                }
                match (n_open, open) {
                    (0, _) => Err(Fail),
                    (1, Some(i)) => self.enforce(&xs[i], want),
                    _ => Ok(()),
                }
            }
            CExpr::Implies(a, b) => {
                if !want {
                    self.enforce(a, true)?;
                    return self.enforce(b, false);
                }
                match self.eval(a) {
                    Some(true) => self.enforce(b, true),
                    Some(false) => Ok(()),
                    None => match self.eval(b) {
                        Some(false) => self.enforce(a, false),
                        _ => Ok(()),
                    },
                }
            }
            CExpr::Iff(a, b) => {
                if let Some(x) = self.eval(a) {
                    return self.enforce(b, x == want);
                }
                if let Some(y) = self.eval(b) {
                    return self.enforce(a, y == want);
                }
                Ok(())
            }
        }
    }

    fn tuple_count(&self, vars: &[VarId]) -> usize {
        let mut n: usize = 1;
        for v in vars {
            n = n.saturating_mul(self.store.size(v.0));
            if n > ENUMERATION_LIMIT {
                return n;
            }
        }
        n
    }

    /// Calls `f` on every tuple of the current domains of `vars`.
    fn for_each_tuple(&self, vars: &[VarId], mut f: impl FnMut(&[i64]) -> bool) {
        let doms: Vec<Vec<i64>> = vars.iter().map(|v| self.store.iter(v.0).collect()).collect();
        let mut idx = vec![0usize; vars.len()];
        let mut tuple: Vec<i64> = doms.iter().map(|d| d[0]).collect();
        loop {
            if !f(&tuple) {
                return;
            }
            let mut k = 0;
            loop {
                if k == vars.len() {
                    return;
                }
                idx[k] += 1;
                if idx[k] < doms[k].len() {
                    tuple[k] = doms[k][idx[k]];
                    break;
                }
                idx[k] = 0;
                tuple[k] = doms[k][0];
                k += 1;
            }
        }
    }

    fn holds_at(c: &Comparison, vars: &[VarId], tuple: &[i64], nil: i64) -> bool {
        let lookup = |v: VarId| tuple[vars.binary_search(&v).expect("comparison variable")];
        c.holds(&lookup, nil)
    }

    fn eval_cmp(&self, c: &Comparison) -> Option<bool> {
        let nil = self.csp.nil;
        if c.vars.iter().any(|v| self.store.fixed(v.0) == Some(nil)) {
            return Some(true);
        }
        if self.tuple_count(&c.vars) <= ENUMERATION_LIMIT {
            let (mut t, mut f) = (false, false);
            self.for_each_tuple(&c.vars, |tuple| {
                if Self::holds_at(c, &c.vars, tuple, nil) {
                    t = true;
                } else {
                    f = true;
                }
                !(t && f)
            });
            return match (t, f) {
                (true, false) => Some(true),
                (false, true) => Some(false),
                _ => None,
            };
        }
        let lin = c.linear.as_ref()?;
        if c.vars.iter().any(|v| self.store.contains(v.0, nil)) {
            return None;
        }
        let (lo, hi) = self.linear_range(lin);
        let decide = |op: CmpOp| -> Option<bool> {
            let always = match op {
                CmpOp::Eq => lo == 0 && hi == 0,
                CmpOp::Ne => lo > 0 || hi < 0,
                CmpOp::Lt => hi < 0,
                CmpOp::Le => hi <= 0,
                CmpOp::Gt => lo > 0,
                CmpOp::Ge => lo >= 0,
            };
            always.then_some(true)
        };
        if decide(c.op).is_some() {
            Some(true)
        } else if decide(c.op.negate()).is_some() {
            Some(false)
        } else {
            None
        }
    }

    fn linear_range(&self, lin: &crate::compiler::Linear) -> (i128, i128) {
        let (mut lo, mut hi) = (lin.constant, lin.constant);
        for &(v, c) in &lin.terms {
            let (a, b) = (c * self.store.min(v.0) as i128, c * self.store.max(v.0) as i128);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }

    fn enforce_cmp(&mut self, c: &Comparison, want: bool) -> Res {
        let nil = self.csp.nil;
        if self.tuple_count(&c.vars) <= ENUMERATION_LIMIT {
            let n = c.vars.len();
            let mut support: Vec<Vec<i64>> = vec![Vec::new(); n];
            let mut any = false;
            self.for_each_tuple(&c.vars, |tuple| {
                if Self::holds_at(c, &c.vars, tuple, nil) == want {
                    any = true;
                    for (k, &x) in tuple.iter().enumerate() {
                        support[k].push(x);
                    }
                }
                true
            });
            if !any {
                return Err(Fail);
            }
            for (k, v) in c.vars.iter().enumerate() {
                let mut s = std::mem::take(&mut support[k]);
                s.sort_unstable();
                s.dedup();
                if s.len() < self.store.size(v.0) {
                    self.store.retain(v.0, |x| s.binary_search(&x).is_ok())?;
                }
            }
            return Ok(());
        }
        let Some(lin) = &c.linear else { return Ok(()) };
        if c.vars.iter().any(|v| self.store.contains(v.0, nil)) {
            return Ok(());
        }
        let op = if want { c.op } else { c.op.negate() };
        self.linear_bounds(lin, op)
    }

    /// Bounds filtering of `sum(c*x) + k  op  0`.
    fn linear_bounds(&mut self, lin: &crate::compiler::Linear, op: CmpOp) -> Res {
        // as a range [lo_req, hi_req] the linear sum has to meet
        let (need_lo, need_hi) = match op {
            CmpOp::Eq => (Some(0), Some(0)),
            CmpOp::Ge => (Some(0), None),
            CmpOp::Gt => (Some(1), None),
            CmpOp::Le => (None, Some(0)),
            CmpOp::Lt => (None, Some(-1)),
            CmpOp::Ne => {
                let open: Vec<&(VarId, i128)> =
                    lin.terms.iter().filter(|(v, _)| self.store.fixed(v.0).is_none()).collect();
                if open.len() == 1 {
                    let (v, c) = *open[0];
                    let rest: i128 = lin.constant
                        + lin
                            .terms
                            .iter()
                            .filter(|(w, _)| *w != v)
                            .map(|(w, k)| k * self.store.min(w.0) as i128)
                            .sum::<i128>();
                    if (-rest) % c == 0 {
                        let bad = -rest / c;
                        if let Ok(bad) = i64::try_from(bad) {
                            self.store.remove(v.0, bad)?;
                        }
                    }
                } else if open.is_empty() {
                    let (lo, _) = self.linear_range(lin);
                    if lo == 0 {
                        return Err(Fail);
                    }
                }
                return Ok(());
            }
        };
        loop {
            let mark = self.store.mark();
            let (lo, hi) = self.linear_range(lin);
            if need_lo.is_some_and(|n| hi < n) || need_hi.is_some_and(|n| lo > n) {
                return Err(Fail);
            }
            for &(v, c) in &lin.terms {
                let (a, b) = (c * self.store.min(v.0) as i128, c * self.store.max(v.0) as i128);
                let (tmin, tmax) = (a.min(b), a.max(b));
                // c*x must lie in [need_lo - (hi - tmax), need_hi - (lo - tmin)]
                let t_lo = need_lo.map(|n| n - (hi - tmax));
                let t_hi = need_hi.map(|n| n - (lo - tmin));
                let (x_lo, x_hi) = if c > 0 {
                    (t_lo.map(|t| div_ceil(t, c)), t_hi.map(|t| div_floor(t, c)))
                } else {
                    (t_hi.map(|t| div_ceil(t, c)), t_lo.map(|t| div_floor(t, c)))
                };
                self.store.bounds(v.0, x_lo.unwrap_or(i128::MIN), x_hi.unwrap_or(i128::MAX))?;
            }
            if self.store.mark() == mark {
                return Ok(());
            }
        }
    }

    /// Solves the whole CSP plus `extra` constraints.
    pub fn check(&mut self, extra: &[CompiledConstraint], opts: &LabelingOptions) -> Option<Solution> {
        self.run_check(None, extra, opts)
    }

    /// Solves the given subset of the CSP's constraints plus `extra`.
    pub fn check_subset(
        &mut self,
        active: &[ConstraintId],
        extra: &[CompiledConstraint],
        opts: &LabelingOptions,
    ) -> Option<Solution> {
        self.run_check(Some(active), extra, opts)
    }

    fn run_check(
        &mut self,
        subset: Option<&[ConstraintId]>,
        extra: &[CompiledConstraint],
        opts: &LabelingOptions,
    ) -> Option<Solution> {
        self.stats.consistency_checks += 1;
        self.setup(subset, extra);
        let sol = if self.propagate() { self.search(opts) } else { None };
        self.reset(0);
        self.drop_extras();
        sol
    }

    fn search(&mut self, opts: &LabelingOptions) -> Option<Solution> {
        let degree = self.degrees();
        let mut features: Vec<usize> = (0..degree.len()).filter(|&v| degree[v] > 0 && self.feature_var[v]).collect();
        let mut attrs: Vec<usize> = (0..degree.len()).filter(|&v| degree[v] > 0 && !self.feature_var[v]).collect();
        for (list, strat) in [(&mut features, opts.features), (&mut attrs, opts.attributes)] {
            if strat.var_order == VarOrder::MostConstrainedFirst {
                list.sort_by_key(|&v| (std::cmp::Reverse(degree[v]), v));
            }
        }
        let mut stack: Vec<(usize, usize, Decision)> = Vec::new();
        loop {
            let pick = self
                .select(&features, &opts.features)
                .map(|v| (v, opts.features))
                .or_else(|| self.select(&attrs, &opts.attributes).map(|v| (v, opts.attributes)));
            let Some((var, strat)) = pick else {
                let values = (0..self.csp.vars.len()).map(|v| self.store.min(v)).collect();
                return Some(Solution { values });
            };
            let (left, right) = self.split(var, &strat);
            let mark = self.store.mark();
            stack.push((mark, var, right));
            if self.apply(var, left).is_ok() && self.propagate() {
                continue;
            }
            loop {
                self.stats.backtracks += 1;
                let (mark, var, right) = stack.pop()?;
                self.store.undo(mark);
                self.reset_queue();
                if self.apply(var, right).is_ok() && self.propagate() {
                    break;
                }
            }
        }
    }

    fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.csp.vars.len()];
        for (p, vars) in self.prop_vars.iter().enumerate() {
            if self.active[p] {
                for &v in vars {
                    deg[v] += 1;
                }
            }
        }
        deg
    }

    fn select(&self, vars: &[usize], strat: &ClassStrategy) -> Option<usize> {
        let open = vars.iter().copied().filter(|&v| self.store.size(v) > 1);
        match strat.var_order {
            VarOrder::SmallestDomainFirst => open.min_by_key(|&v| (self.store.size(v), v)),
            _ => open.into_iter().next(),
        }
    }

    fn split(&self, var: usize, strat: &ClassStrategy) -> (Decision, Decision) {
        let up = strat.value_order == ValueOrder::UpFirst;
        match strat.branching {
            Branching::Enumerate => {
                let v = if up { self.store.min(var) } else { self.store.max(var) };
                (Decision::Eq(v), Decision::Ne(v))
            }
            Branching::Bisect => {
                let vals: Vec<i64> = self.store.iter(var).collect();
                let mid = vals[(vals.len() - 1) / 2];
                if up {
                    (Decision::Le(mid), Decision::Gt(mid))
                } else {
                    (Decision::Gt(mid), Decision::Le(mid))
                }
            }
        }
    }

    fn apply(&mut self, var: usize, d: Decision) -> Res {
        match d {
            Decision::Eq(v) => self.store.assign(var, v),
            Decision::Ne(v) => self.store.remove(var, v),
            Decision::Le(v) => self.store.retain(var, |x| x <= v),
            Decision::Gt(v) => self.store.retain(var, |x| x > v),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Decision {
    Eq(i64),
    Ne(i64),
    Le(i64),
    Gt(i64),
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) == (b < 0)) {
        q + 1
    } else {
        q
    }
}
