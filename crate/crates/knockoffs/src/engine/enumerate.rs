//! Exact enumeration of a sampler's knockoff law on small instances.
//!
//! When every source of randomness in a run is discrete (multiple-try
//! ladders, finite-support plain proposals, rejection-free steps), the
//! engine's own per-step outcome laws can be expanded into the full
//! distribution of `x̃` given `x`. This drives the exactness tests: the
//! law produced here must agree with the independent brute-force oracle.

use std::collections::HashMap;

use crate::factor::FactorGraph;
use crate::jtree::EliminationOrder;
use crate::kernels::{MhProposal, MtmParams};

use super::dp::{DpState, KernelChoice};
use super::{build_state, EngineError, GroupSpec};

/// Sampler selector for law enumeration.
#[derive(Clone, Copy)]
pub enum LawKernel<'a> {
    Mh(&'a dyn MhProposal),
    Mtm(&'a MtmParams),
    Exact,
}

/// A finite distribution over knockoff vectors.
#[derive(Clone, Debug)]
pub struct JointLaw {
    pub outcomes: Vec<(Vec<f64>, f64)>,
}

impl JointLaw {
    pub fn total_mass(&self) -> f64 {
        self.outcomes.iter().map(|(_, p)| p).sum()
    }

    pub fn prob_of(&self, xtilde: &[f64]) -> f64 {
        self.outcomes
            .iter()
            .find(|(v, _)| v == xtilde)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

fn key_of(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

const PATH_GUARD: usize = 10_000_000;

fn recurse(
    mut state: DpState<'_>,
    t: usize,
    logp: f64,
    paths: &mut usize,
    out: &mut HashMap<Vec<u64>, (Vec<f64>, f64)>,
) -> Result<(), EngineError> {
    if t == state.p() {
        *paths += 1;
        assert!(*paths <= PATH_GUARD, "enumeration outgrew the path guard");
        let entry = out
            .entry(key_of(&state.xtilde))
            .or_insert_with(|| (state.xtilde.clone(), 0.0));
        entry.1 += logp.exp();
        return Ok(());
    }
    // table entries filled here depend only on the applied history below
    // step t, so every branch can share them
    let branches = state
        .step_outcome_law(t)?
        .expect("kernel randomness must be discretizable for enumeration");
    for (outcome, lp) in branches {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let mut child = state.clone();
        child.apply_outcome(t, &outcome);
        recurse(child, t + 1, logp + lp, paths, out)?;
    }
    Ok(())
}

/// Exact law of `x̃` given `x` under the chosen sampler, as outcome/mass
/// pairs summing to one.
pub fn enumerate_law(
    graph: &FactorGraph,
    order: &EliminationOrder,
    groups: &GroupSpec,
    kernel: LawKernel<'_>,
    x: &[f64],
) -> Result<JointLaw, EngineError> {
    let choice = match kernel {
        LawKernel::Mh(k) => KernelChoice::Mh(k),
        LawKernel::Mtm(p) => KernelChoice::Mtm(p),
        LawKernel::Exact => KernelChoice::Exact,
    };
    let state = build_state(graph, order, groups, choice, x)?;
    let mut out = HashMap::new();
    let mut paths = 0usize;
    recurse(state, 0, 0.0, &mut paths, &mut out)?;
    let mut outcomes: Vec<(Vec<f64>, f64)> = out.into_values().collect();
    outcomes.sort_by(|a, b| key_of(&a.0).cmp(&key_of(&b.0)));
    Ok(JointLaw { outcomes })
}
