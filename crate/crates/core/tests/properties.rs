use bnsens_core::admissible::{admissible_deviation, argmax_at, leader_intersections};
use bnsens_core::engine::{query, query_with_order};
use bnsens_core::model::covary_column;
use bnsens_core::oracle::{enumerate_query, DEFAULT_STATE_CAP};
use bnsens_core::sensitivity::fit_bundle;
use bnsens_core::{Classification, CovaryMode, Cpt, Evidence, FittedBundle, Network, ParameterRef, VarId, Variable};
use proptest::prelude::*;
use proptest::sample::Index;

/// Random DAG over at most five variables, each column drawn from normalized
/// uniform positives; the i-th variable may only have earlier parents.
fn arb_network() -> impl Strategy<Value = Network> {
    (1usize..=5)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(2usize..=4, n),
                prop::collection::vec(any::<u8>(), n),
                prop::collection::vec(0.01f64..1.0, 512),
            )
        })
        .prop_map(|(arities, masks, raw)| {
            let n = arities.len();
            let mut raw = raw.into_iter().cycle();
            let mut parents = Vec::with_capacity(n);
            let mut cpts = Vec::with_capacity(n);
            for i in 0..n {
                let ps: Vec<VarId> = (0..i).filter(|j| masks[i] >> j & 1 == 1).take(3).map(VarId).collect();
                let configs: usize = ps.iter().map(|p| arities[p.0]).product();
                let columns = (0..configs)
                    .map(|_| {
                        let col: Vec<f64> = (0..arities[i]).map(|_| raw.next().unwrap()).collect();
                        let total: f64 = col.iter().sum();
                        col.into_iter().map(|p| p / total).collect()
                    })
                    .collect();
                parents.push(ps);
                cpts.push(Cpt::new(columns));
            }
            let variables = arities
                .iter()
                .enumerate()
                .map(|(i, &k)| Variable::new(format!("V{i}"), (0..k).map(|v| format!("v{v}"))))
                .collect();
            Network::new(variables, parents, cpts).expect("generated network is valid")
        })
}

/// A network, a target, an evidence set not containing the target, and one parameter.
fn arb_analysis() -> impl Strategy<Value = (Network, VarId, Evidence, ParameterRef)> {
    (
        arb_network(),
        any::<Index>(),
        prop::collection::vec(any::<Option<Index>>(), 5),
        any::<Index>(),
    )
        .prop_map(|(net, t, observed, p)| {
            let target = VarId(t.index(net.len()));
            let mut evidence = Evidence::new();
            for (v, o) in net.ids().zip(&observed) {
                if let (true, Some(value)) = (v != target, o) {
                    evidence.observe(v, value.index(net.arity(v))).unwrap();
                }
            }
            let params = net.parameters();
            let p = params[p.index(params.len())].clone();
            (net, target, evidence, p)
        })
}

fn arb_column() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..6).prop_filter_map("positive mass", |raw| {
        let total: f64 = raw.iter().sum();
        (total > 1e-3).then(|| raw.into_iter().map(|p| p / total).collect())
    })
}

fn fitted(net: &Network, target: VarId, evidence: &Evidence, p: &ParameterRef) -> FittedBundle {
    fit_bundle(net, p, target, evidence, CovaryMode::Strict).expect("positive networks fit")
}

fn interior(n: usize) -> impl Iterator<Item = f64> {
    (1..=n).map(move |k| k as f64 / (n + 1) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn covaried_column_is_a_distribution(column in arb_column(), i in any::<Index>(), x in 0.0f64..=1.0) {
        let i = i.index(column.len());
        prop_assume!(column[i] < 1.0);
        let out = covary_column(&column, i, x, CovaryMode::Strict).unwrap();
        prop_assert_eq!(out[i], x);
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(out.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn covaried_column_keeps_proportions(column in arb_column(), i in any::<Index>(), x in 0.0f64..1.0) {
        let i = i.index(column.len());
        prop_assume!(column[i] < 1.0);
        let out = covary_column(&column, i, x, CovaryMode::Strict).unwrap();
        for j in (0..column.len()).filter(|&j| j != i) {
            for k in (0..column.len()).filter(|&k| k != i && column[k] > 0.0 && out[k] > 0.0) {
                prop_assert!((out[j] / out[k] - column[j] / column[k]).abs() <= 1e-9 * (1.0 + column[j] / column[k]));
            }
        }
    }

    #[test]
    fn uniform_fallback_is_a_distribution(k in 3usize..6, i in any::<Index>(), x in 0.0f64..=1.0) {
        let i = i.index(k);
        let mut column = vec![0.0; k];
        column[i] = 1.0;
        prop_assert!(covary_column(&column, i, x, CovaryMode::Strict).is_err());
        let out = covary_column(&column, i, x, CovaryMode::UniformFallback).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn applied_parameter_reads_back(net in arb_network(), p in any::<Index>(), x in 0.0f64..=1.0) {
        let params = net.parameters();
        let p = &params[p.index(params.len())];
        let varied = net.apply_parameter(p, x, CovaryMode::Strict).unwrap();
        prop_assert_eq!(varied.assessment(p).unwrap(), x);
        prop_assert!(varied.validate().is_empty());
    }

    #[test]
    fn engine_matches_enumeration((net, target, evidence, _) in arb_analysis()) {
        let fast = query(&net, target, &evidence).unwrap();
        let slow = enumerate_query(&net, target, &evidence, DEFAULT_STATE_CAP).unwrap();
        for (a, b) in fast.joint.iter().zip(&slow.joint) {
            prop_assert!((a - b).abs() <= 1e-10, "{:?} vs {:?}", fast, slow);
        }
        prop_assert!((fast.evidence_prob - fast.joint.iter().sum::<f64>()).abs() <= 1e-12);
    }

    #[test]
    fn elimination_order_is_irrelevant((net, target, evidence, _) in arb_analysis(), order in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let order: Vec<VarId> = order.into_iter().map(VarId).collect();
        let heuristic = query(&net, target, &evidence).unwrap();
        let permuted = query_with_order(&net, target, &evidence, &order).unwrap();
        for (a, b) in heuristic.joint.iter().zip(&permuted.joint) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn fit_is_exact_on_grid((net, target, evidence, p) in arb_analysis()) {
        let f = fitted(&net, target, &evidence, &p);
        for k in 0..=10 {
            let x = k as f64 / 10.0;
            let varied = net.apply_parameter(&p, x, CovaryMode::Strict).unwrap();
            let Some(direct) = query(&varied, target, &evidence).unwrap().posterior() else {
                continue;
            };
            let values = f.bundle.eval_all(x).unwrap();
            for (a, b) in values.iter().zip(&direct) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            prop_assert!((values.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn shared_denominator_is_exact((net, target, evidence, p) in arb_analysis()) {
        let f = fitted(&net, target, &evidence, &p);
        let first = f.bundle.function(0);
        for g in f.bundle.functions() {
            prop_assert_eq!((g.c.to_bits(), g.d.to_bits()), (first.c.to_bits(), first.d.to_bits()));
        }
        let slopes: f64 = f.bundle.numerators().iter().map(|l| l.slope).sum();
        let intercepts: f64 = f.bundle.numerators().iter().map(|l| l.intercept).sum();
        prop_assert!((slopes - first.c).abs() <= 1e-12 && (intercepts - first.d).abs() <= 1e-12);
    }

    #[test]
    fn derivative_matches_finite_differences((net, target, evidence, p) in arb_analysis()) {
        let h = 1e-6;
        for f in fitted(&net, target, &evidence, &p).bundle.functions() {
            for x in interior(9) {
                let exact = f.derivative_at(x).unwrap();
                let numeric = (f.eval(x + h).unwrap() - f.eval(x - h).unwrap()) / (2.0 * h);
                prop_assert!((exact - numeric).abs() <= 1e-4 * exact.abs().max(1.0));
            }
        }
    }

    #[test]
    fn vertex_has_unit_gradient((net, target, evidence, p) in arb_analysis()) {
        for f in fitted(&net, target, &evidence, &p).bundle.functions() {
            if f.classify() == Classification::Hyperbolic {
                let v = f.vertex().unwrap();
                for x in [v.x_hat, v.branches[0], v.branches[1]] {
                    prop_assert!((f.sensitivity_value(x).unwrap() - 1.0).abs() <= 1e-9, "{:?} at {}", f, x);
                }
            }
        }
    }

    #[test]
    fn pole_lies_outside_unit_interval((net, target, evidence, p) in arb_analysis()) {
        let f = fitted(&net, target, &evidence, &p).bundle.function(0);
        if f.classify() == Classification::Hyperbolic {
            let pole = f.hyperbola_form().unwrap().s;
            prop_assert!(pole <= 0.0 || pole >= 1.0, "pole at {}", pole);
        }
    }

    #[test]
    fn deviation_is_stable((net, target, evidence, p) in arb_analysis()) {
        let f = fitted(&net, target, &evidence, &p);
        let Ok(dev) = admissible_deviation(&f.bundle) else {
            return Err(TestCaseError::reject("tie"));
        };
        let (lo, hi) = dev.interval(f.bundle.x0());
        for k in 1..=21 {
            let x = lo + (hi - lo) * k as f64 / 22.0;
            prop_assert_eq!(argmax_at(&f.bundle, x).unwrap(), dev.leader_at_x0);
        }
        let delta = 1e-6;
        if let Some(x) = dev.crossing_left.filter(|&x| x - delta >= 0.0) {
            prop_assert_ne!(argmax_at(&f.bundle, x - delta).unwrap(), dev.leader_at_x0);
        }
        if let Some(x) = dev.crossing_right.filter(|&x| x + delta <= 1.0) {
            prop_assert_ne!(argmax_at(&f.bundle, x + delta).unwrap(), dev.leader_at_x0);
        }
    }

    #[test]
    fn deviation_is_scale_invariant((net, target, evidence, p) in arb_analysis(), k in 0.01f64..100.0) {
        let f = fitted(&net, target, &evidence, &p);
        let scaled = f.bundle.scaled(k);
        let (Ok(dev), Ok(other)) = (admissible_deviation(&f.bundle), admissible_deviation(&scaled)) else {
            return Err(TestCaseError::reject("tie"));
        };
        prop_assert_eq!(dev.leader_at_x0, other.leader_at_x0);
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        prop_assert!(close(dev.left.finite(), other.left.finite()));
        prop_assert!(close(dev.right.finite(), other.right.finite()));
        let ours = leader_intersections(&f.bundle).unwrap();
        let theirs = leader_intersections(&scaled).unwrap();
        prop_assert_eq!(ours.len(), theirs.len());
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert_eq!((a.from, a.to), (b.from, b.to));
            prop_assert!((a.x - b.x).abs() <= 1e-12);
        }
        for x in interior(9) {
            prop_assert_eq!(argmax_at(&f.bundle, x).unwrap(), argmax_at(&scaled, x).unwrap());
        }
    }
}

#[test]
fn power_of_two_scaling_is_bit_exact() {
    let net = Network::new(
        vec![Variable::new("A", ["a1", "a2", "a3"]), Variable::new("B", ["b1", "b2"])],
        vec![vec![], vec![VarId(0)]],
        vec![
            Cpt::prior(vec![0.5, 0.3, 0.2]),
            Cpt::new(vec![vec![0.9, 0.1], vec![0.3, 0.7], vec![0.6, 0.4]]),
        ],
    )
    .unwrap();
    let e = Evidence::new().with(VarId(1), 1).unwrap();
    for p in net.parameters() {
        let f = fitted(&net, VarId(0), &e, &p);
        let dev = admissible_deviation(&f.bundle).unwrap();
        for k in [0.25, 8.0, 1024.0] {
            assert_eq!(admissible_deviation(&f.bundle.scaled(k)).unwrap(), dev);
        }
    }
}
