//! Exact inference by variable elimination.
//!
//! Factors are dense tables over a scope kept in ascending [`VarId`] order, laid
//! out row-major (the last scope variable varies fastest). Evidence is applied by
//! slicing each factor at the observed index. Variables that are neither the
//! target, observed, nor an ancestor of either are barren and are dropped before
//! elimination.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{Evidence, ModelError, Network, VarId};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("variable {0} is not in the factor scope")]
    VariableNotInScope(VarId),
    #[error("factor table has {found} entries, scope needs {expected}")]
    TableSize { expected: usize, found: usize },
    #[error("factor scope must be strictly increasing with one cardinality per variable")]
    BadScope,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    /// The multiplicative identity: empty scope, single entry 1.
    pub fn unit() -> Self {
        Factor {
            scope: Vec::new(),
            cards: Vec::new(),
            table: vec![1.0],
        }
    }

    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, table: Vec<f64>) -> Result<Self, EngineError> {
        if scope.len() != cards.len() || scope.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EngineError::BadScope);
        }
        let expected: usize = cards.iter().product();
        if table.len() != expected {
            return Err(EngineError::TableSize {
                expected,
                found: table.len(),
            });
        }
        Ok(Factor { scope, cards, table })
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn position(&self, v: VarId) -> Option<usize> {
        self.scope.binary_search(&v).ok()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.scope.len()];
        for i in (0..self.scope.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.cards[i + 1];
        }
        strides
    }

    /// Pointwise product over the union of both scopes.
    pub fn product(&self, other: &Factor) -> Factor {
        let mut scope = Vec::with_capacity(self.scope.len() + other.scope.len());
        let mut cards = Vec::with_capacity(scope.capacity());
        let (mut i, mut j) = (0, 0);
        while i < self.scope.len() || j < other.scope.len() {
            let take_left = j == other.scope.len() || (i < self.scope.len() && self.scope[i] <= other.scope[j]);
            let take_right = i == self.scope.len() || (j < other.scope.len() && other.scope[j] <= self.scope[i]);
            if take_left {
                scope.push(self.scope[i]);
                cards.push(self.cards[i]);
                i += 1;
                if take_right {
                    j += 1;
                }
            } else {
                scope.push(other.scope[j]);
                cards.push(other.cards[j]);
                j += 1;
            }
        }

        let (left_strides, right_strides) = (self.strides(), other.strides());
        let stride_in = |f: &Factor, strides: &[usize]| -> Vec<usize> {
            scope.iter().map(|&v| f.position(v).map_or(0, |p| strides[p])).collect()
        };
        let ls = stride_in(self, &left_strides);
        let rs = stride_in(other, &right_strides);

        let size: usize = cards.iter().product();
        let mut table = Vec::with_capacity(size);
        let mut counter = vec![0usize; scope.len()];
        let (mut li, mut ri) = (0usize, 0usize);
        for _ in 0..size {
            table.push(self.table[li] * other.table[ri]);
            // odometer increment, last position fastest
            for k in (0..scope.len()).rev() {
                counter[k] += 1;
                li += ls[k];
                ri += rs[k];
                if counter[k] < cards[k] {
                    break;
                }
                li -= ls[k] * cards[k];
                ri -= rs[k] * cards[k];
                counter[k] = 0;
            }
        }
        Factor { scope, cards, table }
    }

    /// Sums `v` out of the factor.
    pub fn marginalize(&self, v: VarId) -> Result<Factor, EngineError> {
        let pos = self.position(v).ok_or(EngineError::VariableNotInScope(v))?;
        let card = self.cards[pos];
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut table = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..card {
                let src = &self.table[(o * card + k) * inner..][..inner];
                let dst = &mut table[o * inner..][..inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        Ok(self.without(pos, table))
    }

    /// Keeps only the entries where `v` takes `value`, dropping `v` from the scope.
    pub fn reduce(&self, v: VarId, value: usize) -> Result<Factor, EngineError> {
        let pos = self.position(v).ok_or(EngineError::VariableNotInScope(v))?;
        let card = self.cards[pos];
        if value >= card {
            return Err(ModelError::UnknownValue { variable: v, value }.into());
        }
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut table = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            table.extend_from_slice(&self.table[(o * card + value) * inner..][..inner]);
        }
        Ok(self.without(pos, table))
    }

    fn without(&self, pos: usize, table: Vec<f64>) -> Factor {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        Factor { scope, cards, table }
    }

    /// The CPT of `id` as a factor over its parents and itself.
    pub fn from_cpt(net: &Network, id: VarId) -> Factor {
        let parents = net.parents(id);
        let mut scope: Vec<VarId> = parents.iter().copied().chain([id]).collect();
        scope.sort_unstable();
        let cards: Vec<usize> = scope.iter().map(|&v| net.arity(v)).collect();
        let size: usize = cards.iter().product();
        // position of each parent (and of the child) within the sorted scope
        let parent_pos: Vec<usize> = parents.iter().map(|p| scope.binary_search(p).unwrap()).collect();
        let child_pos = scope.binary_search(&id).unwrap();

        let cpt = net.cpt(id);
        let mut table = Vec::with_capacity(size);
        let mut counter = vec![0usize; scope.len()];
        for _ in 0..size {
            let mut config = 0;
            for (&p, &pos) in parents.iter().zip(&parent_pos) {
                config = config * net.arity(p) + counter[pos];
            }
            table.push(cpt.columns()[config][counter[child_pos]]);
            for k in (0..scope.len()).rev() {
                counter[k] += 1;
                if counter[k] < cards[k] {
                    break;
                }
                counter[k] = 0;
            }
        }
        Factor { scope, cards, table }
    }
}

/// Joint probabilities `Pr(target = value_i, e)` and `Pr(e)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    pub joint: Vec<f64>,
    pub evidence_prob: f64,
}

impl QueryResult {
    /// Builds a result whose evidence probability is the sum of `joint`.
    pub fn from_joint(joint: Vec<f64>) -> Self {
        let evidence_prob = joint.iter().sum();
        QueryResult { joint, evidence_prob }
    }

    /// `Pr(target = value_i | e)`, or `None` when `Pr(e) = 0`.
    pub fn posterior(&self) -> Option<Vec<f64>> {
        (self.evidence_prob > 0.0).then(|| self.joint.iter().map(|p| p / self.evidence_prob).collect())
    }
}

/// Undirected interaction graph used for ordering.
struct Graph<'a> {
    net: &'a Network,
    nodes: Vec<VarId>,
    adjacent: Vec<BTreeSet<usize>>,
}

impl<'a> Graph<'a> {
    fn new(net: &'a Network, nodes: Vec<VarId>) -> Self {
        let adjacent = vec![BTreeSet::new(); nodes.len()];
        Graph { net, nodes, adjacent }
    }

    fn local(&self, v: VarId) -> Option<usize> {
        self.nodes.binary_search(&v).ok()
    }

    fn connect_all(&mut self, clique: &[VarId]) {
        let locals: Vec<usize> = clique.iter().filter_map(|&v| self.local(v)).collect();
        for &a in &locals {
            for &b in &locals {
                if a != b {
                    self.adjacent[a].insert(b);
                }
            }
        }
    }

    /// Min-fill elimination of every node outside `keep`; ties go to the
    /// lexicographically smallest variable name.
    fn min_fill(mut self, keep: &BTreeSet<VarId>) -> Vec<VarId> {
        let mut alive: Vec<bool> = self.nodes.iter().map(|v| !keep.contains(v)).collect();
        let remaining = alive.iter().filter(|&&a| a).count();
        let mut order = Vec::with_capacity(remaining);
        for _ in 0..remaining {
            let mut best: Option<(usize, &str, usize)> = None;
            for (i, _) in alive.iter().enumerate().filter(|(_, &a)| a) {
                let fill = self.fill_in(i);
                let name = self.net.variable(self.nodes[i]).name();
                let better = match best {
                    None => true,
                    Some((f, n, _)) => (fill, name) < (f, n),
                };
                if better {
                    best = Some((fill, name, i));
                }
            }
            let (_, _, chosen) = best.expect("a variable remains to eliminate");
            let neighbours: Vec<usize> = self.adjacent[chosen].iter().copied().collect();
            for &a in &neighbours {
                self.adjacent[a].remove(&chosen);
                for &b in &neighbours {
                    if a != b {
                        self.adjacent[a].insert(b);
                    }
                }
            }
            self.adjacent[chosen].clear();
            alive[chosen] = false;
            order.push(self.nodes[chosen]);
        }
        order
    }

    fn fill_in(&self, i: usize) -> usize {
        let neighbours: Vec<usize> = self.adjacent[i].iter().copied().collect();
        let mut fill = 0;
        for (k, &a) in neighbours.iter().enumerate() {
            for &b in &neighbours[k + 1..] {
                if !self.adjacent[a].contains(&b) {
                    fill += 1;
                }
            }
        }
        fill
    }
}

/// Elimination order for every variable of `net` outside `keep`, chosen by the
/// min-fill heuristic on the moral graph. Observed variables are sliced out of
/// every factor, so they carry no edges.
pub fn elimination_order(net: &Network, keep: &BTreeSet<VarId>, evidence_vars: &BTreeSet<VarId>) -> Vec<VarId> {
    let mut graph = Graph::new(net, net.ids().collect());
    for id in net.ids() {
        let family: Vec<VarId> = net
            .parents(id)
            .iter()
            .copied()
            .chain([id])
            .filter(|v| !evidence_vars.contains(v))
            .collect();
        graph.connect_all(&family);
    }
    graph.min_fill(keep)
}

/// Target, observed variables and all their ancestors.
fn relevant_variables(net: &Network, target: VarId, evidence: &Evidence) -> BTreeSet<VarId> {
    let mut relevant = BTreeSet::new();
    let mut stack: Vec<VarId> = evidence.iter().map(|(v, _)| v).chain([target]).collect();
    while let Some(v) = stack.pop() {
        if relevant.insert(v) {
            stack.extend(net.parents(v).iter().copied());
        }
    }
    relevant
}

/// Computes `Pr(target = value_i, e)` for every value of `target`, and `Pr(e)`.
///
/// If the target itself is observed, all mass sits on the observed value.
pub fn query(net: &Network, target: VarId, evidence: &Evidence) -> Result<QueryResult, EngineError> {
    run(net, target, evidence, None)
}

/// [`query`] with a caller-chosen elimination order. Entries that are not free
/// relevant variables are ignored; relevant variables missing from `order` are
/// eliminated afterwards in index order.
pub fn query_with_order(
    net: &Network,
    target: VarId,
    evidence: &Evidence,
    order: &[VarId],
) -> Result<QueryResult, EngineError> {
    run(net, target, evidence, Some(order))
}

fn run(net: &Network, target: VarId, evidence: &Evidence, order: Option<&[VarId]>) -> Result<QueryResult, EngineError> {
    if !net.contains(target) {
        return Err(ModelError::UnknownVariable(target).into());
    }
    net.check_evidence(evidence)?;

    let mut sliced = evidence.clone();
    let observed_target = sliced.remove(target);

    let relevant = relevant_variables(net, target, &sliced);
    let mut factors: Vec<Factor> = Vec::with_capacity(relevant.len());
    for &id in &relevant {
        let mut f = Factor::from_cpt(net, id);
        for v in f.scope.clone() {
            if let Some(value) = sliced.get(v) {
                f = f.reduce(v, value)?;
            }
        }
        factors.push(f);
    }

    let free: BTreeSet<VarId> = relevant.iter().copied().filter(|v| !sliced.contains(*v)).collect();
    let order = match order {
        None => {
            let mut graph = Graph::new(net, free.iter().copied().collect());
            for f in &factors {
                graph.connect_all(&f.scope);
            }
            graph.min_fill(&BTreeSet::from([target]))
        }
        Some(requested) => {
            let mut pending: BTreeSet<VarId> = free.clone();
            pending.remove(&target);
            let mut order: Vec<VarId> = requested.iter().copied().filter(|v| pending.remove(v)).collect();
            order.extend(pending);
            order
        }
    };

    for v in order {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.position(v).is_some());
        factors = rest;
        let product = touching.iter().fold(Factor::unit(), |acc, f| acc.product(f));
        factors.push(product.marginalize(v)?);
    }
    let result = factors.iter().fold(Factor::unit(), |acc, f| acc.product(f));
    debug_assert_eq!(result.scope, [target]);

    let mut joint = result.table;
    if let Some(observed) = observed_target {
        for (i, p) in joint.iter_mut().enumerate() {
            if i != observed {
                *p = 0.0;
            }
        }
    }
    let out = QueryResult::from_joint(joint);
    debug_assert!(out.joint.iter().all(|&p| p >= 0.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cpt, Variable};

    const A: VarId = VarId(0);
    const B: VarId = VarId(1);

    fn chain() -> Network {
        Network::new(
            vec![Variable::new("A", ["a1", "a2"]), Variable::new("B", ["b1", "b2"])],
            vec![vec![], vec![A]],
            vec![
                Cpt::prior(vec![0.4, 0.6]),
                Cpt::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
            ],
        )
        .unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn product_with_unit() {
        let f = Factor::new(vec![A], vec![2], vec![0.4, 0.6]).unwrap();
        assert_eq!(f.product(&Factor::unit()), f);
        assert_eq!(Factor::unit().product(&f), f);
    }

    #[test]
    fn product_same_scope() {
        let f = Factor::new(vec![A], vec![2], vec![0.4, 0.6]).unwrap();
        let g = Factor::new(vec![A], vec![2], vec![0.5, 0.5]).unwrap();
        assert_close(f.product(&g).table(), &[0.2, 0.3], 0.0);
    }

    #[test]
    fn product_disjoint_scopes() {
        // cells (a1,b1) (a1,b2) (a2,b1) (a2,b2) enumerated by hand
        let f = Factor::new(vec![A], vec![2], vec![0.4, 0.6]).unwrap();
        let g = Factor::new(vec![B], vec![2], vec![0.9, 0.1]).unwrap();
        let fg = f.product(&g);
        assert_eq!(fg.scope(), &[A, B]);
        assert_close(fg.table(), &[0.36, 0.04, 0.54, 0.06], 1e-15);
        // argument order does not matter
        assert_eq!(g.product(&f), fg);
    }

    #[test]
    fn product_overlapping_scopes() {
        let ab = Factor::new(vec![A, B], vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let bc = Factor::new(vec![B, VarId(2)], vec![3, 2], vec![1., 10., 2., 20., 3., 30.]).unwrap();
        let abc = ab.product(&bc);
        assert_eq!(abc.cards(), &[2, 3, 2]);
        // (a, b, c) -> ab[a][b] * bc[b][c]
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..2 {
                    let expected = ab.table()[a * 3 + b] * bc.table()[b * 2 + c];
                    assert_eq!(abc.table()[(a * 3 + b) * 2 + c], expected);
                }
            }
        }
    }

    #[test]
    fn marginalize_cases() {
        let f = Factor::new(vec![A], vec![2], vec![0.4, 0.6]).unwrap();
        let s = f.marginalize(A).unwrap();
        assert!(s.scope().is_empty());
        assert_close(s.table(), &[1.0], 1e-15);

        let g = Factor::new(vec![B], vec![2], vec![0.9, 0.1]).unwrap();
        let back = f.product(&g).marginalize(B).unwrap();
        assert_eq!(back.scope(), &[A]);
        assert_close(back.table(), f.table(), 1e-15);

        assert_eq!(f.marginalize(B), Err(EngineError::VariableNotInScope(B)));
    }

    #[test]
    fn reduce_slices() {
        let ab = Factor::new(vec![A, B], vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(ab.reduce(B, 1).unwrap().table(), &[2., 5.]);
        assert_eq!(ab.reduce(A, 1).unwrap().table(), &[4., 5., 6.]);
        assert!(ab.reduce(A, 2).is_err());
    }

    #[test]
    fn bad_factor_shapes() {
        assert!(Factor::new(vec![A], vec![2], vec![1.0]).is_err());
        assert!(Factor::new(vec![B, A], vec![2, 2], vec![1.0; 4]).is_err());
    }

    #[test]
    fn order_on_chain() {
        let net = Network::new(
            vec![
                Variable::new("A", ["a1", "a2"]),
                Variable::new("B", ["b1", "b2"]),
                Variable::new("C", ["c1", "c2"]),
            ],
            vec![vec![], vec![A], vec![B]],
            vec![
                Cpt::prior(vec![0.5, 0.5]),
                Cpt::new(vec![vec![0.5, 0.5]; 2]),
                Cpt::new(vec![vec![0.5, 0.5]; 2]),
            ],
        )
        .unwrap();
        let none = BTreeSet::new();
        // fill counts: A 0, B 1 (A-C missing) -> A, then B
        let order = elimination_order(&net, &BTreeSet::from([VarId(2)]), &none);
        assert_eq!(order, vec![A, B]);
        let all: BTreeSet<VarId> = net.ids().collect();
        assert!(elimination_order(&net, &all, &none).is_empty());
        // observing B disconnects the chain
        let order = elimination_order(&net, &BTreeSet::new(), &BTreeSet::from([B]));
        assert_eq!(order, vec![A, B, VarId(2)]);
    }

    #[test]
    fn order_single_variable() {
        let net = Network::new(
            vec![Variable::new("X", ["x1", "x2"])],
            vec![vec![]],
            vec![Cpt::prior(vec![0.5, 0.5])],
        )
        .unwrap();
        assert_eq!(
            elimination_order(&net, &BTreeSet::new(), &BTreeSet::new()),
            vec![VarId(0)]
        );
    }

    #[test]
    fn query_prior() {
        // Pr(b1) = 0.4*0.9 + 0.6*0.2
        let r = query(&chain(), B, &Evidence::new()).unwrap();
        assert_close(&r.joint, &[0.48, 0.52], 1e-15);
        assert!((r.evidence_prob - 1.0).abs() < 1e-15);
    }

    #[test]
    fn query_with_evidence() {
        let e = Evidence::new().with(B, 0).unwrap();
        let r = query(&chain(), A, &e).unwrap();
        assert_close(&r.joint, &[0.36, 0.12], 1e-15);
        assert!((r.evidence_prob - 0.48).abs() < 1e-15);
        assert_close(&r.posterior().unwrap(), &[0.75, 0.25], 1e-15);
    }

    #[test]
    fn query_observed_target() {
        let e = Evidence::new().with(A, 0).unwrap();
        let r = query(&chain(), A, &e).unwrap();
        assert_close(&r.joint, &[0.4, 0.0], 1e-15);
        let e = Evidence::new().with(B, 1).unwrap();
        let r = query(&chain(), B, &e).unwrap();
        assert_close(&r.joint, &[0.0, 0.52], 1e-15);
    }

    #[test]
    fn query_zero_probability_evidence() {
        let net = Network::new(
            vec![Variable::new("A", ["a1", "a2"]), Variable::new("B", ["b1", "b2"])],
            vec![vec![], vec![A]],
            vec![
                Cpt::prior(vec![1.0, 0.0]),
                Cpt::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]),
            ],
        )
        .unwrap();
        let e = Evidence::new().with(B, 1).unwrap();
        let r = query(&net, A, &e).unwrap();
        assert_eq!(r.evidence_prob, 0.0);
        assert_eq!(r.posterior(), None);
    }

    #[test]
    fn query_rejects_unknown_target() {
        assert!(query(&chain(), VarId(9), &Evidence::new()).is_err());
    }
}
