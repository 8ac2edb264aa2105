//! Proposal distributions pluggable into the sequential sampler.
//!
//! A proposal is *faithful* when its law depends on earlier `(x_k, x̃_k)`
//! pairs only through their unordered values; the audit at the bottom of
//! this module checks that numerically. A proposal is *compatible* with a
//! junction-tree ordering when it reads `X` only inside the step's closure;
//! kernels declare what they read and the engine enforces the contract
//! before sampling.

mod covariance;

pub use covariance::{
    covariance_plan, covariance_propose, gamma_min_eigenvalue, gamma_prefix_block,
    gamma_prefix_inverses, CovarianceKernel, GaussianProposalPlan,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::factor::{Domain, Overlay};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(
        "Sigma is singular or not positive definite; apply ridge regularization \
         (Sigma + 1e-6 * avg_diag * I) and retry"
    )]
    SingularSigma,
    #[error("Gamma(s) is indefinite: most negative eigenvalue {min_eigenvalue}")]
    IndefiniteGamma { min_eigenvalue: f64 },
    #[error("m must be >= 1 and step sizes positive")]
    BadMtmParams,
    #[error("gamma must lie in (0, 1], got {gamma}")]
    BadGamma { gamma: f64 },
}

/// Multiple-try parameters: `m` candidates per side at spacing `t_j`,
/// acceptance damped by `gamma`.
#[derive(Clone, Debug)]
pub struct MtmParams {
    pub m: usize,
    pub t: Vec<f64>,
    pub gamma: f64,
}

impl MtmParams {
    pub fn new(m: usize, t: Vec<f64>, gamma: f64) -> Result<Self, KernelError> {
        if m == 0 || t.iter().any(|&x| !(x > 0.0)) {
            return Err(KernelError::BadMtmParams);
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(KernelError::BadGamma { gamma });
        }
        Ok(Self { m, t, gamma })
    }

    /// Uniform step size across coordinates.
    pub fn with_constant_t(m: usize, t: f64, gamma: f64, p: usize) -> Result<Self, KernelError> {
        Self::new(m, vec![t; p], gamma)
    }
}

/// Default damping. Worth lowering only for discrete targets with small
/// support and weak dependence, where occasional forced rejections avoid
/// knockoffs that anti-correlate with the originals.
pub const DEFAULT_GAMMA: f64 = 0.999;

/// Default number of candidates per side.
pub const DEFAULT_M: usize = 4;

/// Default step-size multiplier in units of `sqrt(1/(Sigma^-1)_jj)`.
pub const DEFAULT_T_SCALE: f64 = 1.5;

/// The candidate ladder `{x ± k·t : 1 ≤ k ≤ m}` in ascending order.
pub fn mtm_candidates(x: f64, m: usize, t: f64) -> Vec<f64> {
    mtm_offsets(m).map(|k| x + k as f64 * t).collect()
}

/// Candidate offsets `−m..−1, 1..m` in ascending order.
pub fn mtm_offsets(m: usize) -> impl Iterator<Item = i64> {
    let m = m as i64;
    (-m..=m).filter(|&k| k != 0)
}

/// Per-coordinate conditional-scale unit `sqrt(1/(Sigma^-1)_jj)`.
pub fn step_size_units(sigma: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>, KernelError> {
    let p = sigma.nrows();
    let inv = sigma.clone().try_inverse().ok_or(KernelError::SingularSigma)?;
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let d = inv[(j, j)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(KernelError::SingularSigma);
        }
        out.push((1.0 / d).sqrt());
    }
    Ok(out)
}

/// The default step sizes `1.5·sqrt(1/(Sigma^-1)_jj)`.
pub fn default_step_sizes(sigma: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>, KernelError> {
    Ok(step_size_units(sigma)?
        .into_iter()
        .map(|u| DEFAULT_T_SCALE * u)
        .collect())
}

/// Earlier proposals by step; `None` marks a step that auto-rejected
/// without producing a proposal.
pub type XstarPrefix = [Option<Vec<f64>>];

/// A plain Metropolis–Hastings proposal with an explicit density, possibly
/// over a block of variables.
pub trait MhProposal: Send + Sync {
    /// Draw a proposed block value for `site` given the current assignment.
    fn propose(
        &self,
        step: usize,
        site: &[usize],
        current: &Overlay<'_>,
        xstar_prefix: &XstarPrefix,
        rng: &mut dyn rand::RngCore,
    ) -> Vec<f64>;

    /// Log proposal density of moving the site to `to` from `current`.
    fn log_q(
        &self,
        step: usize,
        site: &[usize],
        to: &[f64],
        current: &Overlay<'_>,
        xstar_prefix: &XstarPrefix,
    ) -> f64;

    /// Original-variable indices of `X` the proposal reads beyond the site
    /// itself. The engine rejects kernels reading outside the step closure.
    fn reads(&self, step: usize, site: &[usize]) -> Vec<usize>;

    /// Finite support of the proposal, with log probabilities, when the
    /// kernel's randomness is discretizable. Enables exact enumeration.
    fn enumerate_support(
        &self,
        step: usize,
        site: &[usize],
        current: &Overlay<'_>,
        xstar_prefix: &XstarPrefix,
    ) -> Option<Vec<(Vec<f64>, f64)>>;

    /// A finite summary that pins down the proposal law at this step, used
    /// by the faithfulness audit. The default probes the log density at a
    /// handful of points near the current site value.
    fn audit_fingerprint(
        &self,
        step: usize,
        site: &[usize],
        x: &[f64],
        xstar_prefix: &XstarPrefix,
    ) -> Vec<f64> {
        let overlay = Overlay::new(x, &[]);
        let mut out = Vec::new();
        for shift in [-1.5, -0.5, 0.0, 0.5, 1.5] {
            let to: Vec<f64> = site.iter().map(|&v| x[v] + shift).collect();
            out.push(self.log_q(step, site, &to, &overlay, xstar_prefix));
        }
        out
    }
}

/// Symmetric Gaussian random-walk baseline, independent across the block.
#[derive(Clone, Debug)]
pub struct GaussianRwKernel {
    /// Per original variable.
    pub step_sizes: Vec<f64>,
}

impl MhProposal for GaussianRwKernel {
    fn propose(
        &self,
        _step: usize,
        site: &[usize],
        current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
        rng: &mut dyn rand::RngCore,
    ) -> Vec<f64> {
        site.iter()
            .map(|&v| {
                let n = Normal::new(current.get(v), self.step_sizes[v]).unwrap();
                n.sample(rng)
            })
            .collect()
    }

    fn log_q(
        &self,
        _step: usize,
        site: &[usize],
        to: &[f64],
        current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
    ) -> f64 {
        site.iter()
            .zip(to)
            .map(|(&v, &y)| {
                let sd = self.step_sizes[v];
                let z = (y - current.get(v)) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .sum()
    }

    fn reads(&self, _step: usize, _site: &[usize]) -> Vec<usize> {
        Vec::new()
    }

    fn enumerate_support(
        &self,
        _step: usize,
        _site: &[usize],
        _current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
    ) -> Option<Vec<(Vec<f64>, f64)>> {
        None
    }
}

/// Uniform independent resampling over each discrete level set; the
/// symmetric workhorse for block proposals on discrete models.
#[derive(Clone, Debug)]
pub struct UniformResampleKernel {
    pub domains: Vec<Domain>,
}

impl MhProposal for UniformResampleKernel {
    fn propose(
        &self,
        _step: usize,
        site: &[usize],
        _current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
        rng: &mut dyn rand::RngCore,
    ) -> Vec<f64> {
        site.iter()
            .map(|&v| {
                let levels = self.domains[v].levels().expect("discrete domain");
                levels[rng.gen_range(0..levels.len())]
            })
            .collect()
    }

    fn log_q(
        &self,
        _step: usize,
        site: &[usize],
        to: &[f64],
        _current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
    ) -> f64 {
        let mut lp = 0.0;
        for (&v, &y) in site.iter().zip(to) {
            let levels = self.domains[v].levels().expect("discrete domain");
            if self.domains[v].level_index(y).is_none() {
                return f64::NEG_INFINITY;
            }
            lp -= (levels.len() as f64).ln();
        }
        lp
    }

    fn reads(&self, _step: usize, _site: &[usize]) -> Vec<usize> {
        Vec::new()
    }

    fn enumerate_support(
        &self,
        _step: usize,
        site: &[usize],
        _current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
    ) -> Option<Vec<(Vec<f64>, f64)>> {
        let mut support = vec![(Vec::new(), 0.0f64)];
        for &v in site {
            let levels = self.domains[v].levels()?;
            let lp = -(levels.len() as f64).ln();
            let mut next = Vec::with_capacity(support.len() * levels.len());
            for (prefix, logp) in &support {
                for &l in levels {
                    let mut vals = prefix.clone();
                    vals.push(l);
                    next.push((vals, logp + lp));
                }
            }
            support = next;
        }
        Some(support)
    }
}

/// Deliberately unfaithful kernel for negative-control tests: its flip
/// probability reads the raw value of variable 0 rather than the unordered
/// pair, so exchangeability checks must fail when it is used past step 0.
#[derive(Clone, Debug)]
pub struct BiasedFlipKernel {
    pub domains: Vec<Domain>,
}

impl BiasedFlipKernel {
    fn flip_prob(&self, current: &Overlay<'_>) -> f64 {
        let levels = self.domains[0].levels().expect("discrete domain");
        if current.get(0) == levels[levels.len() - 1] {
            0.9
        } else {
            0.1
        }
    }

    fn flipped(&self, v: usize, value: f64) -> f64 {
        let levels = self.domains[v].levels().expect("discrete domain");
        assert_eq!(levels.len(), 2, "biased flip needs binary domains");
        if value == levels[0] {
            levels[1]
        } else {
            levels[0]
        }
    }
}

impl MhProposal for BiasedFlipKernel {
    fn propose(
        &self,
        _step: usize,
        site: &[usize],
        current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
        rng: &mut dyn rand::RngCore,
    ) -> Vec<f64> {
        let q = self.flip_prob(current);
        site.iter()
            .map(|&v| {
                let cur = current.get(v);
                if rng.gen_bool(q) {
                    self.flipped(v, cur)
                } else {
                    cur
                }
            })
            .collect()
    }

    fn log_q(
        &self,
        _step: usize,
        site: &[usize],
        to: &[f64],
        current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
    ) -> f64 {
        let q = self.flip_prob(current);
        let mut lp = 0.0;
        for (&v, &y) in site.iter().zip(to) {
            let cur = current.get(v);
            if y == cur {
                lp += (1.0 - q).ln();
            } else if y == self.flipped(v, cur) {
                lp += q.ln();
            } else {
                return f64::NEG_INFINITY;
            }
        }
        lp
    }

    fn reads(&self, _step: usize, _site: &[usize]) -> Vec<usize> {
        vec![0]
    }

    fn enumerate_support(
        &self,
        _step: usize,
        site: &[usize],
        current: &Overlay<'_>,
        _xstar_prefix: &XstarPrefix,
    ) -> Option<Vec<(Vec<f64>, f64)>> {
        let q = self.flip_prob(current);
        let mut support = vec![(Vec::new(), 0.0f64)];
        for &v in site {
            let cur = current.get(v);
            let mut next = Vec::new();
            for (prefix, logp) in &support {
                let mut stay = prefix.clone();
                stay.push(cur);
                next.push((stay, logp + (1.0 - q).ln()));
                let mut flip = prefix.clone();
                flip.push(self.flipped(v, cur));
                next.push((flip, logp + q.ln()));
            }
            support = next;
        }
        Some(support)
    }
}

/// Knockoff-slot values that enter a proposal's conditioning when earlier
/// pairs are swapped: the knockoff slot of a rejected step stays at the
/// recorded proposal, while an accepted step's slot carries whichever of
/// the pair is currently labeled as the knockoff.
pub fn effective_prefix(
    x: &[f64],
    xtilde: &[f64],
    xstar: &XstarPrefix,
    upto: usize,
) -> Vec<Option<Vec<f64>>> {
    (0..upto)
        .map(|k| {
            xstar[k].as_ref().map(|star| {
                if x[k] == xtilde[k] {
                    star.clone()
                } else {
                    vec![xtilde[k]]
                }
            })
        })
        .collect()
}

/// Numerical faithfulness check on a scalar-site instance: the proposal
/// law at `step`, summarized by `fingerprint(x, prefix)`, must be invariant
/// (to 1e−10) under swapping `x_k ↔ x̃_k` for every `k < step`, holding the
/// recorded proposals fixed.
pub fn faithfulness_audit<F>(
    fingerprint: F,
    step: usize,
    x: &[f64],
    xtilde: &[f64],
    xstar: &XstarPrefix,
) -> bool
where
    F: Fn(&[f64], &XstarPrefix) -> Vec<f64>,
{
    let reference = fingerprint(x, &effective_prefix(x, xtilde, xstar, step));
    for k in 0..step {
        let mut xs = x.to_vec();
        let mut ts = xtilde.to_vec();
        std::mem::swap(&mut xs[k], &mut ts[k]);
        let probe = fingerprint(&xs, &effective_prefix(&xs, &ts, xstar, step));
        if reference.len() != probe.len() {
            return false;
        }
        for (a, b) in reference.iter().zip(&probe) {
            let same = (a == b) || (a - b).abs() <= 1e-10 || (a.is_infinite() && a == b);
            if !same {
                return false;
            }
        }
    }
    true
}

/// Audit adapter for plain MH kernels on scalar sites.
pub fn audit_mh_kernel(
    kernel: &dyn MhProposal,
    step: usize,
    x: &[f64],
    xtilde: &[f64],
    xstar: &XstarPrefix,
) -> bool {
    let sites: Vec<Vec<usize>> = (0..x.len()).map(|v| vec![v]).collect();
    faithfulness_audit(
        |xv, prefix| kernel.audit_fingerprint(step, &sites[step], xv, prefix),
        step,
        x,
        xtilde,
        xstar,
    )
}

/// Audit adapter for the multiple-try kernel: its candidate ladder depends
/// only on the current site value and the step size.
pub fn audit_mtm(
    params: &MtmParams,
    step: usize,
    x: &[f64],
    xtilde: &[f64],
    xstar: &XstarPrefix,
) -> bool {
    faithfulness_audit(
        |xv, _prefix| mtm_candidates(xv[step], params.m, params.t[step]),
        step,
        x,
        xtilde,
        xstar,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn candidate_ladder_matches_formula() {
        assert_eq!(mtm_candidates(0.0, 2, 1.0), vec![-2.0, -1.0, 1.0, 2.0]);
        assert_eq!(mtm_candidates(5.0, 1, 3.0), vec![2.0, 8.0]);
    }

    #[test]
    fn default_step_sizes_identity() {
        let sigma = DMatrix::identity(4, 4);
        let t = default_step_sizes(&sigma).unwrap();
        assert!(t.iter().all(|&x| (x - 1.5).abs() < 1e-12));
    }

    #[test]
    fn default_step_sizes_scalar() {
        let sigma = DMatrix::from_element(1, 1, 4.0);
        let t = default_step_sizes(&sigma).unwrap();
        assert!((t[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ar1_precision_diagonal_matches_closed_form() {
        let rho: f64 = 0.6;
        let p = 3;
        let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
        let t = default_step_sizes(&sigma).unwrap();
        // middle coordinate of an AR(1): (Sigma^-1)_22 = (1+rho^2)/(1-rho^2)
        let expect = 1.5 / ((1.0 + rho * rho) / (1.0 - rho * rho)).sqrt();
        assert!((t[1] - expect).abs() < 1e-10);
    }

    #[test]
    fn singular_sigma_is_refused_with_ridge_hint() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = default_step_sizes(&sigma).unwrap_err();
        assert!(err.to_string().contains("ridge"));
    }

    #[test]
    fn step_sizes_scale_with_sigma() {
        let mut rng_state = 1u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let p = 5;
        let a = DMatrix::from_fn(p, p, |_, _| next());
        let sigma = &a * a.transpose() + DMatrix::identity(p, p);
        let t1 = default_step_sizes(&sigma).unwrap();
        let t2 = default_step_sizes(&(4.0 * &sigma)).unwrap();
        for (a, b) in t1.iter().zip(&t2) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rw_kernel_passes_audit() {
        let kernel = GaussianRwKernel {
            step_sizes: vec![1.0; 3],
        };
        let xstar = vec![Some(vec![0.4]), Some(vec![-0.3]), None];
        assert!(audit_mh_kernel(
            &kernel,
            2,
            &[0.1, -0.2, 0.5],
            &[0.4, -0.2, 0.5],
            &xstar
        ));
    }

    #[test]
    fn mtm_candidates_pass_audit() {
        let params = MtmParams::with_constant_t(2, 1.0, 0.999, 3).unwrap();
        let xstar = vec![Some(vec![1.0]), Some(vec![0.0]), None];
        assert!(audit_mtm(&params, 2, &[1.0, -1.0, 1.0], &[-1.0, -1.0, 1.0], &xstar));
    }

    #[test]
    fn biased_flip_kernel_fails_audit() {
        let kernel = BiasedFlipKernel {
            domains: vec![Domain::Discrete(vec![-1.0, 1.0]); 2],
        };
        // step 0 accepted with a sign change on variable 0, so the swap at
        // k = 0 changes the raw x_0 the kernel reads
        let xstar = vec![Some(vec![-1.0]), None];
        assert!(!audit_mh_kernel(&kernel, 1, &[1.0, 1.0], &[-1.0, 1.0], &xstar));
    }
}
