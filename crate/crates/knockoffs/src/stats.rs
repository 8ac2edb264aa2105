//! Correlation estimates and the two-sample tests the validation suite
//! runs against fresh model draws.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample Pearson correlation with a nonparametric delta-method standard
/// error (influence function of the correlation functional). Returns
/// `(r, se, degenerate)`; a zero-variance input is flagged and reported as
/// perfectly correlated.
pub fn correlation_with_se(xs: &[f64], ys: &[f64]) -> (f64, f64, bool) {
    let n = xs.len() as f64;
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in xs.iter().zip(ys) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return (1.0, 0.0, true);
    }
    let r = sxy / (sxx * syy).sqrt();
    // influence values of r at each observation
    let (sx, sy) = ((sxx / n).sqrt(), (syy / n).sqrt());
    let mut var = 0.0;
    for (&a, &b) in xs.iter().zip(ys) {
        let u = (a - mx) / sx;
        let v = (b - my) / sy;
        let z = u * v - 0.5 * r * (u * u + v * v);
        var += z * z;
    }
    var /= n;
    (r, (var / n).sqrt(), false)
}

/// Influence values of the correlation at each observation (used to build
/// standard errors of averages of correlations sharing the same sample).
pub fn correlation_influence(xs: &[f64], ys: &[f64]) -> (f64, Vec<f64>) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in xs.iter().zip(ys) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return (1.0, vec![0.0; xs.len()]);
    }
    let r = sxy / (sxx * syy).sqrt();
    let (sx, sy) = ((sxx / n).sqrt(), (syy / n).sqrt());
    let infl = xs
        .iter()
        .zip(ys)
        .map(|(&a, &b)| {
            let u = (a - mx) / sx;
            let v = (b - my) / sy;
            u * v - 0.5 * r * (u * u + v * v)
        })
        .collect();
    (r, infl)
}

/// Two-sample chi-square homogeneity test over the observed categories.
/// Returns the p-value.
pub fn chi_square_two_sample(a: &[f64], b: &[f64]) -> f64 {
    use std::collections::BTreeMap;
    let mut cats: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &v in a {
        cats.entry(v.to_bits()).or_insert((0.0, 0.0)).0 += 1.0;
    }
    for &v in b {
        cats.entry(v.to_bits()).or_insert((0.0, 0.0)).1 += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut stat = 0.0;
    let mut df = 0i64;
    for (_, (ca, cb)) in cats.iter() {
        let tot = ca + cb;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        if ea > 0.0 {
            stat += (ca - ea) * (ca - ea) / ea;
        }
        if eb > 0.0 {
            stat += (cb - eb) * (cb - eb) / eb;
        }
        df += 1;
    }
    let df = (df - 1).max(1) as f64;
    let dist = ChiSquared::new(df).unwrap();
    1.0 - dist.cdf(stat)
}

/// Two-sample Kolmogorov–Smirnov test, asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    kolmogorov_survival(en * d)
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn correlation_of_identical_vectors_is_one() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (r, _, degenerate) = correlation_with_se(&xs, &xs);
        assert!((r - 1.0).abs() < 1e-12);
        assert!(!degenerate);
    }

    #[test]
    fn zero_variance_flags() {
        let xs = [1.0, 1.0, 1.0];
        let ys = [0.5, 0.2, 0.7];
        let (r, _, degenerate) = correlation_with_se(&xs, &ys);
        assert_eq!(r, 1.0);
        assert!(degenerate);
    }

    #[test]
    fn correlation_se_covers_truth() {
        // bivariate Gaussian with known correlation: the estimate should
        // land within 4 SE of truth nearly always
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let rho: f64 = 0.6;
        let mut hits = 0;
        for _ in 0..50 {
            let n = 2000;
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let a: f64 = rng.sample(rand_distr::StandardNormal);
                let b: f64 = rng.sample(rand_distr::StandardNormal);
                xs.push(a);
                ys.push(rho * a + (1.0 - rho * rho).sqrt() * b);
            }
            let (r, se, _) = correlation_with_se(&xs, &ys);
            if (r - rho).abs() < 4.0 * se {
                hits += 1;
            }
        }
        assert!(hits >= 47, "hits = {hits}");
    }

    #[test]
    fn chi_square_detects_shifted_pmf() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..4000).map(|_| rng.gen_range(0..3) as f64).collect();
        let b: Vec<f64> = (0..4000)
            .map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0..3) as f64 })
            .collect();
        assert!(chi_square_two_sample(&a, &b) < 1e-6);
        // same distribution should usually pass
        let c: Vec<f64> = (0..4000).map(|_| rng.gen_range(0..3) as f64).collect();
        assert!(chi_square_two_sample(&a, &c) > 0.001);
    }

    #[test]
    fn ks_detects_location_shift() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..3000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let b: Vec<f64> = (0..3000)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) + 0.25)
            .collect();
        assert!(ks_two_sample(&a, &b) < 1e-6);
        let c: Vec<f64> = (0..3000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        assert!(ks_two_sample(&a, &c) > 0.001);
    }
}
