//! Seeded random networks and evidence.

use std::ops::RangeInclusive;

use bnsens_core::engine::query;
use bnsens_core::{Cpt, Evidence, Network, VarId, Variable};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub variables: RangeInclusive<usize>,
    pub arity: RangeInclusive<usize>,
    pub max_in_degree: usize,
    /// Upper bound on the number of joint states.
    pub max_states: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            variables: 2..=10,
            arity: 2..=4,
            max_in_degree: 3,
            max_states: 1 << 10,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Normalized uniform positives.
fn column(rng: &mut impl Rng, arity: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..arity).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Variables are named `X00`, `X01`, ... in topological order; parents are
/// drawn among earlier variables.
pub fn random_network(rng: &mut impl Rng, config: &GeneratorConfig) -> Network {
    let n = rng.random_range(config.variables.clone());
    let mut arities: Vec<usize> = (0..n).map(|_| rng.random_range(config.arity.clone())).collect();
    let min_arity = *config.arity.start();
    let states = |a: &[usize]| a.iter().map(|&k| k as u64).product::<u64>();
    while states(&arities) > config.max_states {
        match arities.iter_mut().filter(|k| **k > min_arity).max() {
            Some(k) => *k -= 1,
            None => {
                arities.pop();
            }
        }
    }
    let n = arities.len();
    let mut parents = Vec::with_capacity(n);
    let mut cpts = Vec::with_capacity(n);
    for i in 0..n {
        let k = rng.random_range(0..=config.max_in_degree.min(i));
        let mut ps: Vec<VarId> = sample(rng, i, k).into_iter().map(VarId).collect();
        ps.sort();
        let configs: usize = ps.iter().map(|p| arities[p.0]).product();
        cpts.push(Cpt::new((0..configs).map(|_| column(rng, arities[i])).collect()));
        parents.push(ps);
    }
    let variables = arities
        .iter()
        .enumerate()
        .map(|(i, &k)| Variable::new(format!("X{i:02}"), (0..k).map(|v| format!("s{v}"))))
        .collect();
    Network::new(variables, parents, cpts).expect("generated networks are valid")
}

/// Observes `count` distinct variables at random values.
pub fn random_evidence(rng: &mut impl Rng, net: &Network, count: usize) -> Evidence {
    let mut evidence = Evidence::new();
    for v in sample(rng, net.len(), count.min(net.len())) {
        let id = VarId(v);
        let value = rng.random_range(0..net.arity(id));
        evidence.observe(id, value).expect("variables are distinct");
    }
    evidence
}

/// Tries up to `attempts` evidence sets and returns the first with
/// `0 < Pr(e) < threshold`.
pub fn unlikely_evidence(rng: &mut impl Rng, net: &Network, threshold: f64, attempts: usize) -> Option<Evidence> {
    for _ in 0..attempts {
        let count = rng.random_range(1..=net.len());
        let e = random_evidence(rng, net, count);
        let p = query(net, VarId(0), &e).ok()?.evidence_prob;
        if p > 0.0 && p < threshold {
            return Some(e);
        }
    }
    None
}

pub const SYNTHETIC_SEED: u64 = 15;

/// The bundled 15-variable network: arities 2 to 3, at most three parents.
pub fn synthetic_network() -> Network {
    let config = GeneratorConfig {
        variables: 15..=15,
        arity: 2..=3,
        max_in_degree: 3,
        max_states: u64::MAX,
    };
    random_network(&mut rng(SYNTHETIC_SEED), &config)
}
