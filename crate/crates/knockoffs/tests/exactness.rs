//! Ground-truth checks: the engines must reproduce, law for law, what the
//! brute-force oracle computes straight from the sequential definitions,
//! and the resulting joint distributions must be exchangeable.

use knockoffs::engine::{enumerate_law, LawKernel};
use knockoffs::factor::{Clique, Domain, FactorGraph, Potential};
use knockoffs::jtree::{build_junction_tree, order_variables, EliminationOrder};
use knockoffs::kernels::{BiasedFlipKernel, MtmParams, UniformResampleKernel};
use knockoffs::oracle::{
    joint_pmf_from_conditional, oracle_conditional_law, oracle_joint_pmf, OracleSampler,
};
use knockoffs::zoo::{build_discrete_chain, build_ising, DiscreteChainConfig, IsingConfig};
use knockoffs::GroupSpec;

fn binary_chain(p: usize, coupling: f64) -> FactorGraph {
    let levels = vec![-1.0, 1.0];
    let cliques: Vec<Clique> = if p == 1 {
        vec![Clique {
            scope: vec![0],
            potential: Potential::Table {
                axis_levels: vec![levels.clone()],
                log_values: vec![-0.35667494393873245, 0.8472978603872034 - 1.2039728043259361],
            },
        }]
    } else {
        (0..p - 1)
            .map(|j| Clique {
                scope: vec![j, j + 1],
                potential: Potential::Table {
                    axis_levels: vec![levels.clone(), levels.clone()],
                    log_values: vec![coupling, -coupling, -coupling, coupling],
                },
            })
            .collect()
    };
    FactorGraph::new(vec![Domain::Discrete(levels); p], cliques).unwrap()
}

fn ternary_chain(p: usize, alpha: f64) -> FactorGraph {
    build_discrete_chain(&DiscreteChainConfig { p, k: 3, alpha }).graph
}

fn natural_order(graph: &FactorGraph) -> EliminationOrder {
    order_variables(&build_junction_tree(graph.adjacency()))
}

fn all_states(graph: &FactorGraph) -> Vec<Vec<f64>> {
    let mut states = vec![Vec::new()];
    for v in 0..graph.p() {
        let levels = graph.domain(v).levels().unwrap();
        let mut next = Vec::new();
        for s in &states {
            for &l in levels {
                let mut t = s.clone();
                t.push(l);
                next.push(t);
            }
        }
        states = next;
    }
    states
}

/// Engine-enumerated conditional law must equal the oracle's, for every
/// observed vector, entry by entry.
fn assert_engine_matches_oracle(
    graph: &FactorGraph,
    order: &EliminationOrder,
    engine_kernel: LawKernel<'_>,
    oracle_sampler: OracleSampler<'_>,
    tol: f64,
) {
    let groups = GroupSpec::singletons(graph.p());
    let steps: Vec<Vec<usize>> = order.order.iter().map(|&v| vec![v]).collect();
    for x in all_states(graph) {
        let engine = enumerate_law(graph, order, &groups, engine_kernel, &x).unwrap();
        let oracle = oracle_conditional_law(graph, &steps, oracle_sampler, &x).unwrap();
        assert!((engine.total_mass() - 1.0).abs() < 1e-12);
        assert!(
            (oracle.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12,
            "oracle mass"
        );
        for (xt, p_oracle) in &oracle {
            let p_engine = engine.prob_of(xt);
            assert!(
                (p_engine - p_oracle).abs() < tol,
                "law mismatch at x={x:?}, xt={xt:?}: engine {p_engine} vs oracle {p_oracle}"
            );
        }
        for (xt, p_engine) in &engine.outcomes {
            let p_oracle = oracle
                .iter()
                .find(|(v, _)| v == xt)
                .map(|(_, p)| *p)
                .unwrap_or(0.0);
            assert!((p_engine - p_oracle).abs() < tol);
        }
    }
}

#[test]
fn discrete_exact_matches_oracle_on_chains() {
    for p in [1, 2, 3, 4] {
        let graph = binary_chain(p, 0.4);
        let order = natural_order(&graph);
        assert_engine_matches_oracle(&graph, &order, LawKernel::Exact, OracleSampler::Exact, 1e-12);
    }
    let graph = ternary_chain(3, 0.35);
    let order = natural_order(&graph);
    assert_engine_matches_oracle(&graph, &order, LawKernel::Exact, OracleSampler::Exact, 1e-12);
}

#[test]
fn discrete_exact_matches_oracle_on_2x2_ising() {
    let graph = build_ising(&IsingConfig::constant(2, 2, 0.3, 0.1)).graph;
    let order = natural_order(&graph);
    assert_engine_matches_oracle(&graph, &order, LawKernel::Exact, OracleSampler::Exact, 1e-12);
}

#[test]
fn discrete_exact_joint_is_exchangeable() {
    for (graph, label) in [
        (binary_chain(3, 0.5), "chain3"),
        (binary_chain(4, 0.25), "chain4"),
        (build_ising(&IsingConfig::constant(2, 2, 0.3, 0.1)).graph, "ising"),
        (ternary_chain(3, 0.4), "ternary"),
    ] {
        let steps: Vec<Vec<usize>> = natural_order(&graph)
            .order
            .iter()
            .map(|&v| vec![v])
            .collect();
        let pmf = oracle_joint_pmf(&graph, &steps, OracleSampler::Exact).unwrap();
        assert!((pmf.total_mass() - 1.0).abs() < 1e-10);
        let asym = pmf.max_swap_asymmetry(&GroupSpec::singletons(graph.p()));
        assert!(asym < 1e-10, "{label}: asymmetry {asym}");
    }
}

#[test]
fn mtm_matches_oracle_and_is_exchangeable() {
    for (m, t) in [(1usize, 2.0), (2, 1.0), (2, 2.0)] {
        let graph = binary_chain(3, 0.45);
        let order = natural_order(&graph);
        let params = MtmParams::with_constant_t(m, t, 0.999, 3).unwrap();
        assert_engine_matches_oracle(
            &graph,
            &order,
            LawKernel::Mtm(&params),
            OracleSampler::Mtm(&params),
            1e-11,
        );
        let steps: Vec<Vec<usize>> = order.order.iter().map(|&v| vec![v]).collect();
        let pmf = oracle_joint_pmf(&graph, &steps, OracleSampler::Mtm(&params)).unwrap();
        assert!((pmf.total_mass() - 1.0).abs() < 1e-10);
        let asym = pmf.max_swap_asymmetry(&GroupSpec::singletons(3));
        assert!(asym < 1e-10, "m={m} t={t}: asymmetry {asym}");
    }
}

#[test]
fn mtm_off_support_candidates_auto_reject() {
    // binary levels with t = 1: every candidate misses the support, so the
    // sampler must return x̃ = x with probability one
    let graph = binary_chain(2, 0.4);
    let order = natural_order(&graph);
    let params = MtmParams::with_constant_t(1, 1.0, 0.999, 2).unwrap();
    let groups = GroupSpec::singletons(2);
    for x in all_states(&graph) {
        let law = enumerate_law(&graph, &order, &groups, LawKernel::Mtm(&params), &x).unwrap();
        assert_eq!(law.outcomes.len(), 1);
        assert_eq!(law.outcomes[0].0, x);
        assert!((law.outcomes[0].1 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mtm_ternary_chain_matches_oracle() {
    let graph = ternary_chain(2, 0.3);
    let order = natural_order(&graph);
    let params = MtmParams::with_constant_t(2, 1.0, 0.999, 2).unwrap();
    assert_engine_matches_oracle(
        &graph,
        &order,
        LawKernel::Mtm(&params),
        OracleSampler::Mtm(&params),
        1e-11,
    );
}

#[test]
fn plain_mh_uniform_kernel_matches_oracle() {
    let graph = binary_chain(3, 0.5);
    let order = natural_order(&graph);
    let kernel = UniformResampleKernel {
        domains: graph.domains().to_vec(),
    };
    assert_engine_matches_oracle(
        &graph,
        &order,
        LawKernel::Mh(&kernel),
        OracleSampler::Mh(&kernel),
        1e-11,
    );
    let steps: Vec<Vec<usize>> = order.order.iter().map(|&v| vec![v]).collect();
    let pmf = oracle_joint_pmf(&graph, &steps, OracleSampler::Mh(&kernel)).unwrap();
    let asym = pmf.max_swap_asymmetry(&GroupSpec::singletons(3));
    assert!(asym < 1e-10, "asymmetry {asym}");
}

#[test]
fn unfaithful_kernel_breaks_exchangeability() {
    // negative control: a kernel reading raw x_0 after step 0 must produce
    // a measurably asymmetric joint law
    let graph = binary_chain(2, 0.5);
    let kernel = BiasedFlipKernel {
        domains: graph.domains().to_vec(),
    };
    let steps = vec![vec![0], vec![1]];
    let pmf = oracle_joint_pmf(&graph, &steps, OracleSampler::Mh(&kernel)).unwrap();
    let asym = pmf.max_swap_asymmetry(&GroupSpec::singletons(2));
    assert!(asym > 1e-3, "negative control too symmetric: {asym}");
}

#[test]
fn engine_joint_through_model_marginal_is_exchangeable() {
    // same exchangeability check, but with the engine's own law pushed
    // through the exact model marginal instead of the oracle's
    let graph = binary_chain(3, 0.45);
    let order = natural_order(&graph);
    let groups = GroupSpec::singletons(3);
    let params = MtmParams::with_constant_t(2, 2.0, 0.999, 3).unwrap();
    let pmf = joint_pmf_from_conditional(&graph, |x| {
        enumerate_law(&graph, &order, &groups, LawKernel::Mtm(&params), x)
            .unwrap()
            .outcomes
    })
    .unwrap();
    let asym = pmf.max_swap_asymmetry(&groups);
    assert!(asym < 1e-10, "asymmetry {asym}");
}

#[test]
fn mtm_law_stabilizes_as_m_grows() {
    // with t fixed, the induced law converges as the fan widens; the
    // total-variation distance between m and 2m shrinks with m
    let graph = ternary_chain(2, 0.35);
    let order = natural_order(&graph);
    let groups = GroupSpec::singletons(2);
    let law_for = |m: usize| {
        let params = MtmParams::with_constant_t(m, 1.0, 0.999, 2).unwrap();
        let steps: Vec<Vec<usize>> = order.order.iter().map(|&v| vec![v]).collect();
        let _ = &steps;
        let mut flat = std::collections::HashMap::new();
        for x in all_states(&graph) {
            let law = enumerate_law(&graph, &order, &groups, LawKernel::Mtm(&params), &x).unwrap();
            for (xt, p) in law.outcomes {
                let key: Vec<u64> = x
                    .iter()
                    .chain(xt.iter())
                    .map(|v| v.to_bits())
                    .collect();
                *flat.entry(key).or_insert(0.0) += p;
            }
        }
        flat
    };
    let tv = |a: &std::collections::HashMap<Vec<u64>, f64>,
              b: &std::collections::HashMap<Vec<u64>, f64>| {
        let keys: std::collections::HashSet<_> = a.keys().chain(b.keys()).cloned().collect();
        0.5 * keys
            .into_iter()
            .map(|k| (a.get(&k).unwrap_or(&0.0) - b.get(&k).unwrap_or(&0.0)).abs())
            .sum::<f64>()
    };
    let (l1, l2, l4) = (law_for(1), law_for(2), law_for(4));
    let d12 = tv(&l1, &l2);
    let d24 = tv(&l2, &l4);
    assert!(
        d24 <= d12 + 1e-12,
        "law did not stabilize: tv(1,2) = {d12}, tv(2,4) = {d24}"
    );
}
