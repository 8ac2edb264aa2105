//! Cross-checks and accounting properties of the sampling engine: the
//! hand-rolled chain recursion agrees with the general machinery, exact
//! Gaussian targets never reject, query counts respect the width bounds,
//! and runs are bit-reproducible.

use knockoffs::factor::Domain;
use knockoffs::jtree::{build_junction_tree, order_variables};
use knockoffs::kernels::{covariance_plan, CovarianceKernel, GaussianRwKernel, MtmParams};
use knockoffs::zoo::{
    build_gaussian_chain, build_ising, ChainConfig, Innovation, IsingConfig,
};
use knockoffs::{equicorrelated_s, exact_discrete_sample, metro_sample, Proposal};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand::SeedableRng;

fn ln_normal(y: f64, mean: f64, var: f64) -> f64 {
    let z = (y - mean) / var.sqrt();
    -0.5 * z * z - 0.5 * var.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn covariance_kernel_never_rejects_on_exact_gaussian() {
    let p = 10;
    let rho = 0.6;
    let cfg = ChainConfig::constant_rho(p, rho, Innovation::Gaussian);
    let mut model = build_gaussian_chain(&cfg);
    let sigma = model.sigma.clone().unwrap();
    let s = equicorrelated_s(&sigma).unwrap();
    let order = order_variables(&build_junction_tree(model.graph.adjacency()));
    // path ordering is the identity, so the plan needs no permutation
    assert_eq!(order.order, (0..p).collect::<Vec<_>>());
    let plan = covariance_plan(&model.mu, &sigma, &s).unwrap();
    let kernel = CovarianceKernel::new(plan, vec![Domain::Continuous; p]);
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(21);
    let mut max_delta = 0.0f64;
    for _ in 0..50 {
        let x = model.sampler.sample(&mut rng);
        let run = metro_sample(&model.graph, &order, Proposal::Mh(&kernel), &x, &mut rng).unwrap();
        assert!(run.accepted.iter().all(|&a| a), "a rejection occurred");
        assert!(run.x_tilde.iter().zip(&x).all(|(a, b)| a != b));
        for d in run.delta_log.iter().filter(|d| d.is_finite()) {
            max_delta = max_delta.max(d.abs());
        }
    }
    assert!(max_delta < 1e-6, "max |Δ| = {max_delta:e}");
}

#[test]
fn engine_matches_hand_rolled_chain_recursion() {
    // Independent implementation of the chain special case: one cached
    // scalar per step instead of general node tables.
    let p = 6;
    let cfg = ChainConfig {
        p,
        rho: vec![0.7, -0.4, 0.5, 0.2, 0.6],
        innovation: Innovation::Gaussian,
    };
    let mut model = build_gaussian_chain(&cfg);
    let order = order_variables(&build_junction_tree(model.graph.adjacency()));
    assert_eq!(order.order, (0..p).collect::<Vec<_>>());
    let kernel = GaussianRwKernel {
        step_sizes: vec![1.0; p],
    };

    let local = |t: usize, z: f64, left: f64, right: f64| -> f64 {
        // clique terms touching coordinate t
        let mut lp = 0.0;
        if t == 0 {
            lp += ln_normal(z, 0.0, 1.0);
        }
        if t > 0 {
            lp += ln_normal(z, cfg.rho[t - 1] * left, 1.0 - cfg.rho[t - 1] * cfg.rho[t - 1]);
        }
        if t + 1 < p {
            lp += ln_normal(right, cfg.rho[t] * z, 1.0 - cfg.rho[t] * cfg.rho[t]);
        }
        lp
    };
    let ln1mexp = |a: f64| -> f64 {
        if a == f64::NEG_INFINITY {
            0.0
        } else if a < -std::f64::consts::LN_2 {
            (-a.exp()).ln_1p()
        } else {
            (-a.exp_m1()).ln()
        }
    };

    for seed in [3u64, 7, 11, 42] {
        let mut draw_rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let x = model.sampler.sample(&mut draw_rng);

        let mut eng_rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed + 1000);
        let run = metro_sample(&model.graph, &order, Proposal::Mh(&kernel), &x, &mut eng_rng)
            .unwrap();

        // hand-rolled pass driven by the same stream
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed + 1000);
        let mut xstar = vec![0.0f64; p];
        let mut acc = vec![false; p];
        let mut deltas = vec![0.0f64; p];
        // cached acceptance-ratio pieces from the previous step
        let mut prev_cr = 0.0f64; // c-ratio used at the previous step
        for t in 0..p {
            let prop = rand_distr::Normal::new(x[t], 1.0).unwrap();
            xstar[t] = prop.sample(&mut rng);
            let u: f64 = rng.gen();
            // c-ratio: previous step's cached factor at X_t = x*_t vs x_t
            let cr = if t == 0 {
                0.0
            } else {
                let f_at = |z: f64| -> f64 {
                    let left = if t >= 2 { x[t - 2] } else { 0.0 };
                    let d = prev_cr + local(t - 1, xstar[t - 1], left, z)
                        - local(t - 1, x[t - 1], left, z);
                    if acc[t - 1] {
                        d.min(0.0)
                    } else {
                        ln1mexp(d.min(0.0))
                    }
                };
                f_at(xstar[t]) - f_at(x[t])
            };
            let left = if t >= 1 { x[t - 1] } else { 0.0 };
            let right = if t + 1 < p { x[t + 1] } else { 0.0 };
            let delta = cr + local(t, xstar[t], left, right) - local(t, x[t], left, right);
            deltas[t] = delta;
            acc[t] = u < delta.min(0.0).exp();
            prev_cr = cr;
        }

        for t in 0..p {
            assert_eq!(
                run.x_star[t].as_ref().unwrap()[0],
                xstar[t],
                "step {t} proposal differs"
            );
            assert!(
                (run.delta_log[t] - deltas[t]).abs() < 1e-10,
                "step {t}: engine Δ {} vs chain recursion {}",
                run.delta_log[t],
                deltas[t]
            );
            assert_eq!(run.accepted[t], acc[t], "step {t} accept flag");
        }
    }
}

#[test]
fn query_budgets_hold() {
    // plain Metro on a width-1 chain
    let p = 50;
    let mut model = build_gaussian_chain(&ChainConfig::constant_rho(p, 0.6, Innovation::Gaussian));
    let order = order_variables(&build_junction_tree(model.graph.adjacency()));
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
    let x = model.sampler.sample(&mut rng);
    let kernel = GaussianRwKernel {
        step_sizes: vec![1.0; p],
    };
    let run = metro_sample(&model.graph, &order, Proposal::Mh(&kernel), &x, &mut rng).unwrap();
    let bound = 2 * p as u64 * 2u64.pow(order.width as u32 + 1);
    assert!(
        run.counter.full_query_equivalents() <= bound,
        "plain: {} > {bound}",
        run.counter.full_query_equivalents()
    );
    // per-step counts add up to the total
    assert_eq!(run.counter.per_step.iter().sum::<u64>() + 1, run.counter.full); // +1 for the base evaluation

    // multiple-try on the same chain
    let params = MtmParams::with_constant_t(4, 1.0, 0.999, p).unwrap();
    let run = metro_sample(&model.graph, &order, Proposal::Mtm(&params), &x, &mut rng).unwrap();
    let bound = 2 * p as u64 * 13u64.pow(order.width as u32 + 1);
    assert!(
        run.counter.full_query_equivalents() <= bound,
        "mtm: {} > {bound}",
        run.counter.full_query_equivalents()
    );

    // rejection-free on a 4×4 grid
    let model = build_ising(&IsingConfig::constant(4, 4, 0.25, 0.0));
    let order = order_variables(&knockoffs::grid_junction_tree(4, 4));
    assert_eq!(order.width, 4);
    let x: Vec<f64> = (0..16)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let run = exact_discrete_sample(&model.graph, &order, &x, &mut rng).unwrap();
    let bound = 2 * 16 * 2u64.pow(order.width as u32 + 1);
    assert!(
        run.counter.full_query_equivalents() <= bound,
        "exact: {} > {bound}",
        run.counter.full_query_equivalents()
    );
}

#[test]
fn identical_seeds_give_identical_runs() {
    let p = 12;
    let mut model = build_gaussian_chain(&ChainConfig::constant_rho(p, 0.5, Innovation::Gaussian));
    let order = order_variables(&build_junction_tree(model.graph.adjacency()));
    let params = MtmParams::with_constant_t(3, 1.2, 0.999, p).unwrap();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
    let x = model.sampler.sample(&mut rng);
    let run = |seed: u64| {
        let mut r = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        metro_sample(&model.graph, &order, Proposal::Mtm(&params), &x, &mut r).unwrap()
    };
    let (a, b) = (run(1234), run(1234));
    assert_eq!(a.x_tilde, b.x_tilde);
    assert_eq!(a.accepted, b.accepted);
    assert_eq!(a.counter.full, b.counter.full);
    assert_eq!(a.counter.per_step, b.counter.per_step);
    let c = run(1235);
    assert!(a.x_tilde != c.x_tilde || a.accepted != c.accepted);
}

#[test]
fn cache_size_respects_the_node_bound() {
    let model = build_ising(&IsingConfig::constant(3, 3, 0.3, 0.0));
    let order = order_variables(&knockoffs::grid_junction_tree(3, 3));
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..9)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let run = exact_discrete_sample(&model.graph, &order, &x, &mut rng).unwrap();
    // Σ_t Π_{u ∈ V_t, u > t} K_u
    let bound: usize = (0..order.p())
        .map(|t| order.future_axes(t).iter().map(|_| 2usize).product::<usize>())
        .sum();
    assert!(
        run.cache_entries <= bound,
        "{} cached entries exceed the bound {bound}",
        run.cache_entries
    );
}

#[test]
fn independent_bits_give_independent_knockoffs() {
    use knockoffs::engine::{enumerate_law, LawKernel};
    use knockoffs::factor::{Clique, FactorGraph, Potential};
    use knockoffs::GroupSpec;
    let levels = vec![-1.0, 1.0];
    let p = 3;
    let cliques = (0..p)
        .map(|v| Clique {
            scope: vec![v],
            potential: Potential::Table {
                axis_levels: vec![levels.clone()],
                log_values: vec![0.0, 0.0],
            },
        })
        .collect();
    let graph = FactorGraph::new(vec![Domain::Discrete(levels.clone()); p], cliques).unwrap();
    let order = order_variables(&build_junction_tree(graph.adjacency()));
    let x = vec![1.0, -1.0, 1.0];
    let law = enumerate_law(&graph, &order, &GroupSpec::singletons(p), LawKernel::Exact, &x)
        .unwrap();
    assert_eq!(law.outcomes.len(), 8);
    for (_, prob) in &law.outcomes {
        assert!((prob - 0.125).abs() < 1e-12);
    }
}

#[test]
fn covariance_rounding_keeps_marginals_on_discrete_chains() {
    // rounded conditional-Gaussian proposals on a binary chain: the MH
    // correction with cell masses must preserve X̃ =d X
    use knockoffs::stats::chi_square_two_sample;
    let levels = vec![-1.0, 1.0];
    let p = 4;
    let coupling = 0.5f64;
    let cliques: Vec<knockoffs::factor::Clique> = (0..p - 1)
        .map(|j| knockoffs::factor::Clique {
            scope: vec![j, j + 1],
            potential: knockoffs::factor::Potential::Table {
                axis_levels: vec![levels.clone(), levels.clone()],
                log_values: vec![coupling, -coupling, -coupling, coupling],
            },
        })
        .collect();
    let graph =
        knockoffs::factor::FactorGraph::new(vec![Domain::Discrete(levels.clone()); p], cliques)
            .unwrap();
    let order = order_variables(&build_junction_tree(graph.adjacency()));
    // crude surrogate moments: equal spins with tanh correlations
    let rho = coupling.tanh();
    let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let s = equicorrelated_s(&sigma).unwrap();
    let plan = covariance_plan(&vec![0.0; p], &sigma, &s).unwrap();
    let kernel = CovarianceKernel::new(plan, graph.domains().to_vec());
    // exact forward draws by enumeration weights
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
    let mut states = Vec::new();
    let mut weights = Vec::new();
    {
        let mut view = graph.view();
        for mask in 0..(1u32 << p) {
            let s: Vec<f64> = (0..p)
                .map(|b| if mask >> b & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            weights.push(view.log_phi(&s).unwrap().exp());
            states.push(s);
        }
    }
    let total: f64 = weights.iter().sum();
    let n = 20_000;
    let mut fresh = Vec::with_capacity(n);
    let mut tilde = Vec::with_capacity(n);
    for _ in 0..n {
        let draw = |r: &mut rand_chacha::ChaCha12Rng| {
            let u: f64 = r.gen::<f64>() * total;
            let mut acc = 0.0;
            for (st, w) in states.iter().zip(&weights) {
                acc += w;
                if u < acc {
                    return st.clone();
                }
            }
            states.last().unwrap().clone()
        };
        let x = draw(&mut rng);
        let run = metro_sample(&graph, &order, Proposal::Mh(&kernel), &x, &mut rng).unwrap();
        for v in run.x_tilde.iter() {
            assert!(v.abs() == 1.0, "rounded proposal left the support");
        }
        tilde.push(run.x_tilde);
        fresh.push(draw(&mut rng));
    }
    for v in 0..p {
        let a: Vec<f64> = fresh.iter().map(|x| x[v]).collect();
        let b: Vec<f64> = tilde.iter().map(|x| x[v]).collect();
        let pval = chi_square_two_sample(&a, &b);
        assert!(pval > 0.01 / p as f64, "coordinate {v}: p = {pval}");
    }
}
