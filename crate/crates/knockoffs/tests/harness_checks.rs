//! Harness-level behavior: MAC reports, the equicorrelated rule, sweep
//! determinism, slicing, and the validation suite.

use knockoffs::config::Config;
use knockoffs::harness::{
    bench_csv, equicorrelated_s, mac_lower_bound_from, measure_mac, ribbon_partition, sweep,
    validate, Workbench,
};
use nalgebra::DMatrix;

fn config(json: &str) -> Config {
    Config::from_json(json).unwrap()
}

#[test]
fn equicorrelated_rule_examples() {
    // identity: s = 1, bound 0
    let s = equicorrelated_s(&DMatrix::identity(3, 3)).unwrap();
    assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    let s_corr: Vec<f64> = s.clone();
    assert!(mac_lower_bound_from(&s_corr).abs() < 1e-12);

    // 2×2 correlation, ρ = 0.6: eigenvalues 1 ± ρ, s = 0.8, bound 0.2
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
    let s = equicorrelated_s(&sigma).unwrap();
    assert!((s[0] - 0.8).abs() < 1e-12 && (s[1] - 0.8).abs() < 1e-12);
    assert!((mac_lower_bound_from(&s) - 0.2).abs() < 1e-12);

    // near-perfect correlation: s → 0, bound → 1
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.9999, 0.9999, 1.0]);
    let s = equicorrelated_s(&sigma).unwrap();
    assert!(s[0] < 3e-4);
    assert!(mac_lower_bound_from(&s) > 0.999);
}

#[test]
fn identity_sampler_reports_mac_one_bit_exactly() {
    let cfg = config(
        r#"{"model": {"kind": "gaussian-chain", "p": 5, "rho": 0.5},
            "sampler": {"kind": "identity"}}"#,
    );
    let report = measure_mac(&cfg, 200, 7).unwrap();
    assert_eq!(report.mac, 1.0);
    assert!(report.abs_corr.iter().all(|&r| r == 1.0));
}

#[test]
fn independent_bits_have_near_zero_mac() {
    let cfg = config(
        r#"{"model": {"kind": "discrete-chain", "p": 5, "k": 2, "alpha": 0.0},
            "sampler": {"kind": "discrete-exact"}}"#,
    );
    let report = measure_mac(&cfg, 4000, 11).unwrap();
    for v in 0..5 {
        assert!(
            report.abs_corr[v] < 3.0 * report.corr_se[v].max(1.0 / (4000f64).sqrt()),
            "coordinate {v}: |r| = {} se = {}",
            report.abs_corr[v],
            report.corr_se[v]
        );
    }
}

#[test]
fn gaussian_covariance_hits_the_mac_identity() {
    let cfg = config(
        r#"{"model": {"kind": "gaussian-chain", "p": 10, "rho": 0.6},
            "proposal": {"kind": "covariance"}}"#,
    );
    let report = measure_mac(&cfg, 2000, 3).unwrap();
    assert!(report.never_rejected, "covariance proposals rejected");
    let bound = report.lower_bound.unwrap();
    assert!(
        (report.mac - bound).abs() < 3.0 * report.mac_se,
        "mac {} vs bound {bound} (se {})",
        report.mac,
        report.mac_se
    );
}

#[test]
fn sweep_is_deterministic_and_has_the_pinned_header() {
    let cfg = config(
        r#"{"model": {"kind": "discrete-chain", "p": 6, "k": 3, "alpha": 0.3},
            "proposal": {"kind": "mtm", "m": 2},
            "forward": {"pilot_n": 500},
            "bench": {"m": [1, 2], "t_scale": [1.0], "replicates": 60}}"#,
    );
    let rows1 = sweep(&cfg, 60, 5).unwrap();
    let rows2 = sweep(&cfg, 60, 5).unwrap();
    let (csv1, csv2) = (bench_csv(&rows1), bench_csv(&rows2));
    assert_eq!(csv1, csv2);
    assert!(csv1.starts_with(
        "model,kind,m,t_scale,gamma,w,model_param,mac,mac_se,mean_acceptance,queries_total,lower_bound,seed\n"
    ));
    assert_eq!(rows1.len(), 2);
    // a different seed must actually change the estimates
    let rows3 = sweep(&cfg, 60, 6).unwrap();
    assert_ne!(csv1, bench_csv(&rows3));
}

#[test]
fn ribbon_partition_shapes() {
    // 4 columns, w = 1: every other column frozen
    let (comps, frozen) = ribbon_partition(3, 4, 1, 0);
    assert_eq!(frozen, vec![0, 4, 8, 2, 6, 10]);
    assert_eq!(comps.len(), 2);
    // w = 2 on 5 columns with offset 2: frozen column 2 splits the rest
    let (comps, frozen) = ribbon_partition(2, 5, 2, 2);
    assert_eq!(frozen, vec![2, 7]);
    assert_eq!(comps, vec![vec![0, 5, 1, 6], vec![3, 8, 4, 9]]);
    // no frozen column when the period exceeds the width
    let (comps, frozen) = ribbon_partition(2, 3, 5, 4);
    assert!(frozen.is_empty());
    assert_eq!(comps.len(), 1);
}

#[test]
fn sliced_runs_freeze_and_stay_on_support() {
    let cfg = config(
        r#"{"model": {"kind": "ising", "d1": 4, "d2": 6, "beta0": 0.2},
            "sampler": {"kind": "discrete-exact", "ribbon_w": 2},
            "forward": {"burn_in": 300, "thin": 3}}"#,
    );
    let mut bench = Workbench::prepare(cfg, 17).unwrap();
    let xs = bench.draw_xs(5, 0);
    for (r, x) in xs.iter().enumerate() {
        let out = bench.run_one(x, r as u64).unwrap();
        assert!(!out.frozen.is_empty());
        for &v in &out.frozen {
            assert_eq!(out.x_tilde[v], x[v]);
        }
        assert!(out.x_tilde.iter().all(|v| v.abs() == 1.0));
    }
}

#[test]
fn validation_suite_passes_for_discrete_exact_ising() {
    let cfg = config(
        r#"{"model": {"kind": "ising", "d1": 2, "d2": 2, "beta0": 0.25},
            "sampler": {"kind": "discrete-exact"},
            "forward": {"burn_in": 300, "thin": 3}}"#,
    );
    let checks = validate(&cfg, 23);
    for c in &checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
    assert!(checks.iter().any(|c| c.name == "exchangeability-enumeration"));
    assert!(checks.iter().any(|c| c.name == "negative-control"));
}

#[test]
fn validation_suite_passes_for_mtm_binary_chain() {
    let cfg = config(
        r#"{"model": {"kind": "discrete-chain", "p": 6, "k": 2, "alpha": 0.3},
            "proposal": {"kind": "mtm", "m": 2, "t_scale": 1.5, "gamma": 0.999},
            "forward": {"pilot_n": 2000}}"#,
    );
    let checks = validate(&cfg, 29);
    for c in &checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

#[test]
fn order_csv_matches_format() {
    let cfg = config(r#"{"model": {"kind": "gaussian-chain", "p": 4, "rho": 0.5}}"#);
    let bench = Workbench::prepare(cfg, 1).unwrap();
    let csv = knockoffs::harness::order_csv(&bench);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "step,variable_id,node_size,width");
    assert_eq!(lines.next().unwrap(), "1,1,2,1");
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn sample_csv_has_one_row_per_replicate_and_coordinate() {
    let cfg = config(
        r#"{"model": {"kind": "discrete-chain", "p": 3, "k": 2, "alpha": 0.2},
            "sampler": {"kind": "discrete-exact"}}"#,
    );
    let mut bench = Workbench::prepare(cfg, 2).unwrap();
    let csv = knockoffs::harness::sample_csv(&mut bench, 4, 2).unwrap();
    assert!(csv.starts_with("replicate,coordinate,x,x_tilde,accepted,queries_this_step\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
}
