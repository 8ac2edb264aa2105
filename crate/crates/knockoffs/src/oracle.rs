//! Brute-force enumeration oracle for small discrete instances.
//!
//! Computes exact joint laws of `(X, X̃)` straight from the sequential
//! definitions: trajectory probabilities are products of per-step
//! selection and acceptance terms whose targets are evaluated by direct
//! recursion over the history, with no junction tree, no node sets, and no
//! cached-factor shortcuts. The sampling engines must reproduce these laws
//! exactly; the tests that assert so are the crate's ground truth.
//!
//! Everything here is exponential in `p` and guarded accordingly.

use std::collections::HashMap;

use thiserror::Error;

use crate::engine::GroupSpec;
use crate::factor::{FactorGraph, Overlay};
use crate::kernels::{mtm_offsets, MhProposal, MtmParams};
use crate::numeric::{ln_one_minus_exp, log_sum_exp};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle refused: outcome space exceeds {limit} evaluations; shrink the instance")]
    TooLarge { limit: u64 },
    #[error("oracle needs a fully discrete model")]
    NotDiscrete,
    #[error("oracle needs enumerable kernel randomness")]
    NotEnumerable,
}

const WORK_LIMIT: u64 = 10_000_000;

/// Sampler whose law the oracle reproduces.
#[derive(Clone, Copy)]
pub enum OracleSampler<'a> {
    /// Rejection-free conditional sampling.
    Exact,
    /// Multiple-try ladders (step sizes indexed by original variable).
    Mtm(&'a MtmParams),
    /// Plain MH with a finite-support kernel (blocks allowed).
    Mh(&'a dyn MhProposal),
}

/// One recorded step of a trajectory.
#[derive(Clone, Debug)]
enum Rec {
    Exact { value: f64 },
    MtmSel { offset: i64, accepted: bool },
    MtmAuto,
    Mh { xstar: Vec<f64>, accepted: bool },
}

/// Assignment under exploration. Multiple-try coordinates live on the
/// lattice `x_v + k·t_v` and are always materialized through that exact
/// expression so that value comparisons are bit-stable.
#[derive(Clone)]
struct ZState {
    values: Vec<f64>,
    offsets: Vec<i64>,
}

impl ZState {
    fn key(&self) -> Vec<u64> {
        self.values.iter().map(|v| v.to_bits()).collect()
    }
}

struct Oracle<'a> {
    graph: &'a FactorGraph,
    steps: &'a [Vec<usize>],
    sampler: OracleSampler<'a>,
    x: Vec<f64>,
    hist: Vec<Rec>,
    /// `d_caches[k]` memoizes `log D(z, k)`, the log probability of the
    /// first `k` recorded steps given `X = z`; valid while `hist[..k]` is
    /// unchanged.
    d_caches: Vec<HashMap<Vec<u64>, f64>>,
    work: u64,
}

impl<'a> Oracle<'a> {
    fn new(
        graph: &'a FactorGraph,
        steps: &'a [Vec<usize>],
        sampler: OracleSampler<'a>,
        x: &[f64],
    ) -> Self {
        Oracle {
            graph,
            steps,
            sampler,
            x: x.to_vec(),
            hist: Vec::new(),
            d_caches: vec![HashMap::new()],
            work: 0,
        }
    }

    fn charge(&mut self) -> Result<(), OracleError> {
        self.work += 1;
        if self.work > WORK_LIMIT {
            return Err(OracleError::TooLarge { limit: WORK_LIMIT });
        }
        Ok(())
    }

    fn log_phi_raw(&mut self, z: &ZState) -> Result<f64, OracleError> {
        self.charge()?;
        let mut total = 0.0;
        for c in self.graph.cliques() {
            let vals: Vec<f64> = c.scope.iter().map(|&v| z.values[v]).collect();
            let lp = c.potential.log_value(&vals);
            if lp == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            total += lp;
        }
        Ok(total)
    }

    fn set_value(&self, z: &ZState, site: &[usize], vals: &[f64]) -> ZState {
        let mut out = z.clone();
        for (&v, &val) in site.iter().zip(vals) {
            out.values[v] = val;
            out.offsets[v] = 0;
        }
        out
    }

    fn set_offset(&self, z: &ZState, v: usize, t: f64, off: i64) -> ZState {
        let mut out = z.clone();
        out.offsets[v] = off;
        out.values[v] = self.x[v] + off as f64 * t;
        out
    }

    /// `log P(hist[..k] | X = z)`, by direct recursion.
    fn log_d(&mut self, z: &ZState, k: usize) -> Result<f64, OracleError> {
        if k == 0 {
            return Ok(0.0);
        }
        let key = z.key();
        if let Some(&v) = self.d_caches[k].get(&key) {
            return Ok(v);
        }
        let below = self.log_d(z, k - 1)?;
        let value = if below == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            below + self.log_step_prob(z, k - 1)?
        };
        self.d_caches[k].insert(key, value);
        Ok(value)
    }

    /// Unnormalized target weight of candidate `sub` at step `k` given the
    /// first `k` recorded steps: `Φ(z[site←sub]) · P(hist[..k] | z[site←sub])`.
    fn log_w(&mut self, k: usize, zsub: &ZState) -> Result<f64, OracleError> {
        let phi = self.log_phi_raw(zsub)?;
        if phi == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let d = self.log_d(zsub, k)?;
        Ok(phi + d)
    }

    /// Log probability of `hist[k]` given `X = z` and `hist[..k]`.
    fn log_step_prob(&mut self, z: &ZState, k: usize) -> Result<f64, OracleError> {
        let site = self.steps[k].clone();
        let rec = self.hist[k].clone();
        match rec {
            Rec::Exact { value } => {
                let v = site[0];
                let levels = self.graph.domain(v).levels().unwrap().to_vec();
                let mut weights = Vec::with_capacity(levels.len());
                let mut chosen = f64::NEG_INFINITY;
                for &l in &levels {
                    let zsub = self.set_value(z, &site, &[l]);
                    let w = self.log_w(k, &zsub)?;
                    if l == value {
                        chosen = w;
                    }
                    weights.push(w);
                }
                let lse = log_sum_exp(&weights);
                if lse == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(chosen - lse)
            }
            Rec::MtmSel { .. } | Rec::MtmAuto => {
                let params = match self.sampler {
                    OracleSampler::Mtm(p) => p,
                    _ => unreachable!(),
                };
                let v = site[0];
                let t = params.t[v];
                let start = z.offsets[v];
                let mut fan = Vec::new();
                for d in mtm_offsets(params.m) {
                    let off = start + d;
                    let zsub = self.set_offset(z, v, t, off);
                    fan.push((off, self.log_w(k, &zsub)?));
                }
                let sum_x = log_sum_exp(&fan.iter().map(|&(_, w)| w).collect::<Vec<_>>());
                match rec {
                    Rec::MtmAuto => Ok(if sum_x == f64::NEG_INFINITY {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }),
                    Rec::MtmSel { offset, accepted } => {
                        if sum_x == f64::NEG_INFINITY {
                            return Ok(f64::NEG_INFINITY);
                        }
                        let Some(&(_, w_sel)) = fan.iter().find(|&&(off, _)| off == offset) else {
                            // the recorded proposal is outside this fan
                            return Ok(f64::NEG_INFINITY);
                        };
                        if w_sel == f64::NEG_INFINITY {
                            return Ok(f64::NEG_INFINITY);
                        }
                        let log_sel = w_sel - sum_x;
                        let mut star = Vec::new();
                        for d in mtm_offsets(params.m) {
                            let off2 = offset + d;
                            let zsub = self.set_offset(z, v, t, off2);
                            star.push(self.log_w(k, &zsub)?);
                        }
                        let sum_star = log_sum_exp(&star);
                        let log_ratio = if sum_star == f64::NEG_INFINITY {
                            f64::INFINITY
                        } else {
                            sum_x - sum_star
                        };
                        let log_acc = params.gamma.ln() + log_ratio.min(0.0);
                        Ok(if accepted {
                            log_sel + log_acc
                        } else {
                            log_sel + ln_one_minus_exp(log_acc)
                        })
                    }
                    _ => unreachable!(),
                }
            }
            Rec::Mh { xstar, accepted } => {
                let kernel = match self.sampler {
                    OracleSampler::Mh(k) => k,
                    _ => unreachable!(),
                };
                let prefix = self.prefix_before(k);
                let cur_block: Vec<f64> = site.iter().map(|&v| z.values[v]).collect();
                let q_fwd = kernel.log_q(k, &site, &xstar, &Overlay::new(&z.values, &[]), &prefix);
                if q_fwd == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                let z_star = self.set_value(z, &site, &xstar);
                let q_rev = kernel.log_q(
                    k,
                    &site,
                    &cur_block,
                    &Overlay::new(&z_star.values, &[]),
                    &prefix,
                );
                let target_cur = self.log_w(k, &z.clone())?;
                if target_cur == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                let target_star = self.log_w(k, &z_star)?;
                let delta = if target_star == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    q_rev - q_fwd + target_star - target_cur
                };
                let log_alpha = delta.min(0.0);
                Ok(if accepted {
                    q_fwd + log_alpha
                } else {
                    q_fwd + ln_one_minus_exp(log_alpha)
                })
            }
        }
    }

    /// Recorded proposals before step `k`, as the kernels expect them.
    fn prefix_before(&self, k: usize) -> Vec<Option<Vec<f64>>> {
        self.hist[..k]
            .iter()
            .map(|r| match r {
                Rec::Mh { xstar, .. } => Some(xstar.clone()),
                Rec::Exact { value } => Some(vec![*value]),
                Rec::MtmSel { .. } | Rec::MtmAuto => None,
            })
            .collect()
    }

    fn push(&mut self, rec: Rec) {
        self.hist.push(rec);
        self.d_caches.push(HashMap::new());
    }

    fn pop(&mut self) {
        self.hist.pop();
        self.d_caches.pop();
    }

    /// Depth-first expansion of all trajectories from the observed vector,
    /// accumulating the law of `x̃`.
    fn explore(
        &mut self,
        k: usize,
        xtilde: &mut Vec<f64>,
        logp: f64,
        out: &mut HashMap<Vec<u64>, (Vec<f64>, f64)>,
    ) -> Result<(), OracleError> {
        if k == self.steps.len() {
            let key: Vec<u64> = xtilde.iter().map(|v| v.to_bits()).collect();
            let entry = out.entry(key).or_insert_with(|| (xtilde.clone(), 0.0));
            entry.1 += logp.exp();
            return Ok(());
        }
        let site = self.steps[k].clone();
        let z = ZState {
            values: self.x.clone(),
            offsets: vec![0; self.x.len()],
        };
        let branches: Vec<Rec> = match self.sampler {
            OracleSampler::Exact => {
                let v = site[0];
                self.graph
                    .domain(v)
                    .levels()
                    .ok_or(OracleError::NotDiscrete)?
                    .iter()
                    .map(|&l| Rec::Exact { value: l })
                    .collect()
            }
            OracleSampler::Mtm(params) => {
                let mut recs = vec![Rec::MtmAuto];
                for off in mtm_offsets(params.m) {
                    recs.push(Rec::MtmSel {
                        offset: off,
                        accepted: true,
                    });
                    recs.push(Rec::MtmSel {
                        offset: off,
                        accepted: false,
                    });
                }
                recs
            }
            OracleSampler::Mh(kernel) => {
                let support = kernel
                    .enumerate_support(k, &site, &Overlay::new(&self.x, &[]), &self.prefix_before(k))
                    .ok_or(OracleError::NotEnumerable)?;
                let mut recs = Vec::new();
                for (xstar, _) in support {
                    recs.push(Rec::Mh {
                        xstar: xstar.clone(),
                        accepted: true,
                    });
                    recs.push(Rec::Mh {
                        xstar,
                        accepted: false,
                    });
                }
                recs
            }
        };
        for rec in branches {
            self.push(rec.clone());
            let lp = self.log_step_prob(&z, k)?;
            if lp == f64::NEG_INFINITY {
                self.pop();
                continue;
            }
            let saved: Vec<f64> = site.iter().map(|&v| xtilde[v]).collect();
            match &rec {
                Rec::Exact { value } => {
                    xtilde[site[0]] = *value;
                }
                Rec::MtmSel {
                    offset,
                    accepted: true,
                } => {
                    let params = match self.sampler {
                        OracleSampler::Mtm(p) => p,
                        _ => unreachable!(),
                    };
                    xtilde[site[0]] = self.x[site[0]] + *offset as f64 * params.t[site[0]];
                }
                Rec::Mh {
                    xstar,
                    accepted: true,
                } => {
                    for (&v, &val) in site.iter().zip(xstar) {
                        xtilde[v] = val;
                    }
                }
                _ => {}
            }
            self.explore(k + 1, xtilde, logp + lp, out)?;
            for (&v, &val) in site.iter().zip(&saved) {
                xtilde[v] = val;
            }
            self.pop();
        }
        Ok(())
    }
}

/// Exact law of `x̃` given `x`, for the sampler run over `steps` (full
/// vectors returned; coordinates outside the steps keep their `x` values).
pub fn oracle_conditional_law(
    graph: &FactorGraph,
    steps: &[Vec<usize>],
    sampler: OracleSampler<'_>,
    x: &[f64],
) -> Result<Vec<(Vec<f64>, f64)>, OracleError> {
    let mut oracle = Oracle::new(graph, steps, sampler, x);
    let mut out = HashMap::new();
    let mut xtilde = x.to_vec();
    oracle.explore(0, &mut xtilde, 0.0, &mut out)?;
    let mut law: Vec<(Vec<f64>, f64)> = out.into_values().collect();
    law.sort_by(|a, b| {
        a.0.iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
            .cmp(&b.0.iter().map(|v| v.to_bits()).collect())
    });
    Ok(law)
}

/// Exact joint PMF of `(X, X̃)` over a fully discrete model.
#[derive(Clone, Debug)]
pub struct JointPmf {
    pub entries: HashMap<(Vec<u64>, Vec<u64>), f64>,
}

impl JointPmf {
    pub fn prob(&self, x: &[f64], xtilde: &[f64]) -> f64 {
        let key = (
            x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            xtilde.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        );
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Largest `|P(v) − P(swap_I(v))|` over entries and blocks.
    pub fn max_swap_asymmetry(&self, groups: &GroupSpec) -> f64 {
        let mut worst = 0.0f64;
        for ((xb, tb), &p) in &self.entries {
            for block in &groups.blocks {
                let mut xs = xb.clone();
                let mut ts = tb.clone();
                for &v in block {
                    std::mem::swap(&mut xs[v], &mut ts[v]);
                }
                let q = self.entries.get(&(xs, ts)).copied().unwrap_or(0.0);
                worst = worst.max((p - q).abs());
            }
        }
        worst
    }

    /// Marginal law of one knockoff coordinate.
    pub fn xtilde_marginal(&self, v: usize) -> HashMap<u64, f64> {
        let mut out = HashMap::new();
        for ((_, tb), &p) in &self.entries {
            *out.entry(tb[v]).or_insert(0.0) += p;
        }
        out
    }
}

fn enumerate_states(graph: &FactorGraph) -> Result<Vec<Vec<f64>>, OracleError> {
    let mut states = vec![Vec::new()];
    for v in 0..graph.p() {
        let levels = graph.domain(v).levels().ok_or(OracleError::NotDiscrete)?;
        let mut next = Vec::with_capacity(states.len() * levels.len());
        for st in &states {
            for &l in levels {
                let mut s = st.clone();
                s.push(l);
                next.push(s);
            }
        }
        states = next;
        if states.len() as u64 > WORK_LIMIT {
            return Err(OracleError::TooLarge { limit: WORK_LIMIT });
        }
    }
    Ok(states)
}

fn log_phi_plain(graph: &FactorGraph, z: &[f64]) -> f64 {
    let mut total = 0.0;
    for c in graph.cliques() {
        let vals: Vec<f64> = c.scope.iter().map(|&v| z[v]).collect();
        let lp = c.potential.log_value(&vals);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += lp;
    }
    total
}

/// Exact joint PMF of `(X, X̃)` where `X` follows the model and `X̃` comes
/// from the sampler run over `steps`.
pub fn oracle_joint_pmf(
    graph: &FactorGraph,
    steps: &[Vec<usize>],
    sampler: OracleSampler<'_>,
) -> Result<JointPmf, OracleError> {
    let states = enumerate_states(graph)?;
    let log_weights: Vec<f64> = states.iter().map(|s| log_phi_plain(graph, s)).collect();
    let lse = log_sum_exp(&log_weights);
    let mut entries = HashMap::new();
    for (x, lw) in states.iter().zip(&log_weights) {
        if *lw == f64::NEG_INFINITY {
            continue;
        }
        let px = (lw - lse).exp();
        let law = oracle_conditional_law(graph, steps, sampler, x)?;
        for (xt, p) in law {
            let key = (
                x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                xt.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            );
            *entries.entry(key).or_insert(0.0) += px * p;
        }
    }
    Ok(JointPmf { entries })
}

/// Joint PMF of a divide-and-conquer run: the separator is copied and each
/// side is sampled independently on its conditional model (evaluated here
/// on the full graph, where cross-side factors are constants that cancel).
pub fn oracle_dnc_joint_pmf(
    graph: &FactorGraph,
    side_steps: &[Vec<Vec<usize>>],
    sampler: OracleSampler<'_>,
) -> Result<JointPmf, OracleError> {
    let states = enumerate_states(graph)?;
    let log_weights: Vec<f64> = states.iter().map(|s| log_phi_plain(graph, s)).collect();
    let lse = log_sum_exp(&log_weights);
    let mut entries: HashMap<(Vec<u64>, Vec<u64>), f64> = HashMap::new();
    for (x, lw) in states.iter().zip(&log_weights) {
        if *lw == f64::NEG_INFINITY {
            continue;
        }
        let px = (lw - lse).exp();
        // start from x̃ = x (separator copied), then convolve the sides
        let mut partial: Vec<(Vec<f64>, f64)> = vec![(x.clone(), 1.0)];
        for steps in side_steps {
            let law = oracle_conditional_law(graph, steps, sampler, x)?;
            let mut next = Vec::new();
            for (acc, pa) in &partial {
                for (xt, pb) in &law {
                    let mut merged = acc.clone();
                    for step in steps {
                        for &v in step {
                            merged[v] = xt[v];
                        }
                    }
                    next.push((merged, pa * pb));
                }
            }
            partial = next;
        }
        for (xt, p) in partial {
            let key = (
                x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                xt.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            );
            *entries.entry(key).or_insert(0.0) += px * p;
        }
    }
    Ok(JointPmf { entries })
}

/// Convenience: the joint PMF induced by pushing an engine-enumerated
/// conditional law through the model's exact marginal.
pub fn joint_pmf_from_conditional<F>(
    graph: &FactorGraph,
    mut conditional: F,
) -> Result<JointPmf, OracleError>
where
    F: FnMut(&[f64]) -> Vec<(Vec<f64>, f64)>,
{
    let states = enumerate_states(graph)?;
    let log_weights: Vec<f64> = states.iter().map(|s| log_phi_plain(graph, s)).collect();
    let lse = log_sum_exp(&log_weights);
    let mut entries = HashMap::new();
    for (x, lw) in states.iter().zip(&log_weights) {
        if *lw == f64::NEG_INFINITY {
            continue;
        }
        let px = (lw - lse).exp();
        for (xt, p) in conditional(x) {
            let key = (
                x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                xt.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            );
            *entries.entry(key).or_insert(0.0) += px * p;
        }
    }
    Ok(JointPmf { entries })
}
