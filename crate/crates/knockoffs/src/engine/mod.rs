//! Sequential knockoff sampling engines.
//!
//! [`metro_sample`] runs the accept/reject sampler coordinate by coordinate
//! along a junction-tree ordering; [`group_metro_sample`] does the same at
//! the level of variable blocks; [`divide_and_conquer_sample`] freezes a
//! separator and runs independent samplers on the two sides. All of them
//! share the cached-factor dynamic program in [`dp`], so their `Φ` query
//! counts stay proportional to the tree width bound.

pub(crate) mod dp;
mod enumerate;

pub use dp::StepOutcome;
pub use enumerate::{enumerate_law, JointLaw, LawKernel};

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::factor::{Clique, Domain, FactorError, FactorGraph, Potential, QueryCounter};
use crate::jtree::EliminationOrder;
use crate::kernels::{MhProposal, MtmParams};

use dp::{DpState, KernelChoice};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("kernel at step {step} reads variable {reads_var} outside the step's closure")]
    IncompatibleKernel { step: usize, reads_var: usize },
    #[error("variable {var} is not discrete (or its observed value is off-support)")]
    NotDiscrete { var: usize },
    #[error(
        "node at step {step} spans {states} joint states, above the tractability guard \
         (1e6); slice the graph with divide-and-conquer or switch to multiple-try"
    )]
    NodeStateGuard { step: usize, states: u128 },
    #[error("history has zero mass at step {step}; the model assigns no mass to the observation")]
    ZeroMassHistory { step: usize },
    #[error("groups must partition 1..p: variable {var} {problem}")]
    BadGroups { var: usize, problem: String },
    #[error("separator does not separate: graph edge ({a}, {b}) joins the two sides")]
    NotSeparated { a: usize, b: usize },
    #[error("partition must cover 1..p exactly: variable {var} {problem}")]
    BadPartition { var: usize, problem: String },
    #[error("ordering covers {got} sites, expected {expected}")]
    OrderMismatch { expected: usize, got: usize },
}

/// A disjoint cover of `0..p` by nonempty blocks.
#[derive(Clone, Debug)]
pub struct GroupSpec {
    pub blocks: Vec<Vec<usize>>,
}

impl GroupSpec {
    pub fn singletons(p: usize) -> Self {
        Self {
            blocks: (0..p).map(|v| vec![v]).collect(),
        }
    }

    pub fn new(blocks: Vec<Vec<usize>>) -> Self {
        Self { blocks }
    }

    pub fn validate(&self, p: usize) -> Result<(), EngineError> {
        let mut seen = vec![false; p];
        for block in &self.blocks {
            if block.is_empty() {
                return Err(EngineError::BadGroups {
                    var: 0,
                    problem: "empty block".into(),
                });
            }
            for &v in block {
                if v >= p {
                    return Err(EngineError::BadGroups {
                        var: v,
                        problem: "out of range".into(),
                    });
                }
                if seen[v] {
                    return Err(EngineError::BadGroups {
                        var: v,
                        problem: "appears in two blocks".into(),
                    });
                }
                seen[v] = true;
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(EngineError::BadGroups {
                var: v,
                problem: "missing from every block".into(),
            });
        }
        Ok(())
    }

    /// Adjacency over blocks: two blocks touch iff any cross edge exists.
    pub fn quotient_adjacency(&self, graph: &FactorGraph) -> Vec<BTreeSet<usize>> {
        let mut block_of = vec![usize::MAX; graph.p()];
        for (b, block) in self.blocks.iter().enumerate() {
            for &v in block {
                block_of[v] = b;
            }
        }
        let mut adj = vec![BTreeSet::new(); self.blocks.len()];
        for (a, b) in graph.edges() {
            let (ba, bb) = (block_of[a], block_of[b]);
            if ba != bb {
                adj[ba].insert(bb);
                adj[bb].insert(ba);
            }
        }
        adj
    }
}

/// A finished run: the knockoff vector plus everything needed to audit it.
#[derive(Clone, Debug)]
pub struct KnockoffRun {
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    /// Recorded proposal per step (`None` for an automatic rejection).
    pub x_star: Vec<Option<Vec<f64>>>,
    pub accepted: Vec<bool>,
    /// Pre-clamp log acceptance ratio per step; `NaN` for rejection-free
    /// steps.
    pub delta_log: Vec<f64>,
    pub counter: QueryCounter,
    /// Filled cached-table entries, for the memory accounting.
    pub cache_entries: usize,
    /// Conditional PMFs recorded by the rejection-free sampler.
    pub step_pmfs: Vec<Option<Vec<f64>>>,
}

impl KnockoffRun {
    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 1.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }
}

/// Proposal mechanism for [`metro_sample`].
#[derive(Clone, Copy)]
pub enum Proposal<'a> {
    /// Plain Metropolis–Hastings with an explicit-density kernel.
    Mh(&'a dyn MhProposal),
    /// Multiple-try ladder (step sizes indexed by original variable).
    Mtm(&'a MtmParams),
}

fn check_compatibility(
    order: &EliminationOrder,
    sites: &[Vec<usize>],
    kernel: &KernelChoice<'_>,
) -> Result<(), EngineError> {
    let KernelChoice::Mh(k) = kernel else {
        // multiple-try and rejection-free steps read only their own site
        return Ok(());
    };
    // map original variable -> step
    let mut step_of = std::collections::HashMap::new();
    for (t, site) in sites.iter().enumerate() {
        for &v in site {
            step_of.insert(v, t);
        }
    }
    for (t, site) in sites.iter().enumerate() {
        for var in k.reads(t, site) {
            let Some(&u) = step_of.get(&var) else {
                return Err(EngineError::IncompatibleKernel { step: t, reads_var: var });
            };
            if !order.in_closure(t, u) {
                return Err(EngineError::IncompatibleKernel { step: t, reads_var: var });
            }
        }
    }
    Ok(())
}

fn run_all(mut state: DpState<'_>, rng: &mut impl Rng) -> Result<KnockoffRun, EngineError> {
    for t in 0..state.p() {
        state.run_step(t, rng)?;
    }
    state.view.counter.set_active_step(None);
    Ok(KnockoffRun {
        x: state.x.clone(),
        x_tilde: state.xtilde.clone(),
        x_star: state.xstar.clone(),
        accepted: state.accepted.clone(),
        delta_log: state.delta_log.clone(),
        counter: state.view.counter.clone(),
        cache_entries: state.table_entries(),
        step_pmfs: state.pmfs.clone(),
    })
}

pub(crate) fn build_state<'a>(
    graph: &'a FactorGraph,
    order: &'a EliminationOrder,
    groups: &GroupSpec,
    kernel: KernelChoice<'a>,
    x: &[f64],
) -> Result<DpState<'a>, EngineError> {
    groups.validate(graph.p())?;
    if order.p() != groups.blocks.len() {
        return Err(EngineError::OrderMismatch {
            expected: groups.blocks.len(),
            got: order.p(),
        });
    }
    let sites: Vec<Vec<usize>> = order
        .order
        .iter()
        .map(|&g| groups.blocks[g].clone())
        .collect();
    check_compatibility(order, &sites, &kernel)?;
    DpState::new(graph, order, sites, kernel, x)
}

/// Sample a knockoff copy of `x` one coordinate at a time along `order`,
/// which must come from a junction tree of the graph.
pub fn metro_sample(
    graph: &FactorGraph,
    order: &EliminationOrder,
    kernel: Proposal<'_>,
    x: &[f64],
    rng: &mut impl Rng,
) -> Result<KnockoffRun, EngineError> {
    let groups = GroupSpec::singletons(graph.p());
    let choice = match kernel {
        Proposal::Mh(k) => KernelChoice::Mh(k),
        Proposal::Mtm(params) => KernelChoice::Mtm(params),
    };
    let state = build_state(graph, order, &groups, choice, x)?;
    run_all(state, rng)
}

/// Block-level sampler: whole groups are proposed and accepted together,
/// giving exchangeability of each block `(X_I, X̃_I)`. With singleton
/// groups this is exactly [`metro_sample`].
pub fn group_metro_sample(
    graph: &FactorGraph,
    order: &EliminationOrder,
    kernel: &dyn MhProposal,
    groups: &GroupSpec,
    x: &[f64],
    rng: &mut impl Rng,
) -> Result<KnockoffRun, EngineError> {
    let state = build_state(graph, order, groups, KernelChoice::Mh(kernel), x)?;
    run_all(state, rng)
}

/// Two-sided split with a frozen separator.
#[derive(Clone, Debug)]
pub struct Partition {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
}

/// Verify that `components` are pairwise non-adjacent once `frozen` is
/// removed and that everything covers `0..p` exactly once.
pub fn verify_separation(
    graph: &FactorGraph,
    components: &[Vec<usize>],
    frozen: &[usize],
) -> Result<(), EngineError> {
    let p = graph.p();
    let mut label = vec![usize::MAX; p];
    for (ci, comp) in components.iter().enumerate() {
        for &v in comp {
            if v >= p || label[v] != usize::MAX {
                return Err(EngineError::BadPartition {
                    var: v,
                    problem: "repeated or out of range".into(),
                });
            }
            label[v] = ci;
        }
    }
    for &v in frozen {
        if v >= p || label[v] != usize::MAX {
            return Err(EngineError::BadPartition {
                var: v,
                problem: "repeated or out of range".into(),
            });
        }
        label[v] = usize::MAX - 1;
    }
    if let Some(v) = label.iter().position(|&l| l == usize::MAX) {
        return Err(EngineError::BadPartition {
            var: v,
            problem: "not covered by any side or the separator".into(),
        });
    }
    for (a, b) in graph.edges() {
        let (la, lb) = (label[a], label[b]);
        if la != lb && la != usize::MAX - 1 && lb != usize::MAX - 1 {
            return Err(EngineError::NotSeparated { a, b });
        }
    }
    Ok(())
}

/// The conditional model on `keep` with `frozen` coordinates substituted
/// into the potentials. Returns the graph and the kept variables' original
/// indices (new index `i` ↔ `kept[i]`).
pub fn restrict_graph(
    graph: &FactorGraph,
    keep: &[usize],
    frozen: &[(usize, f64)],
) -> Result<(FactorGraph, Vec<usize>), EngineError> {
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    let mut new_of = std::collections::HashMap::new();
    for (i, &v) in kept.iter().enumerate() {
        new_of.insert(v, i);
    }
    let frozen_of: std::collections::HashMap<usize, f64> = frozen.iter().copied().collect();
    let mut cliques = Vec::new();
    let mut covered = vec![false; kept.len()];
    for clique in graph.cliques() {
        if !clique.scope.iter().any(|v| new_of.contains_key(v)) {
            continue;
        }
        let mut fixed = Vec::with_capacity(clique.scope.len());
        let mut scope = Vec::new();
        for &v in &clique.scope {
            if let Some(&nv) = new_of.get(&v) {
                fixed.push(None);
                scope.push(nv);
                covered[nv] = true;
            } else if let Some(&val) = frozen_of.get(&v) {
                fixed.push(Some(val));
            } else {
                // the clique reaches a variable that is neither kept nor
                // frozen: the separator does not isolate this side
                return Err(EngineError::BadPartition {
                    var: v,
                    problem: "clique reaches outside the side and its frozen boundary".into(),
                });
            }
        }
        cliques.push(Clique {
            scope,
            potential: Potential::Restricted {
                inner: Box::new(clique.potential.clone()),
                fixed,
            },
        });
    }
    for (nv, done) in covered.iter().enumerate() {
        if !done {
            cliques.push(Clique {
                scope: vec![nv],
                potential: Potential::Uniform,
            });
        }
    }
    let domains: Vec<Domain> = kept.iter().map(|&v| graph.domain(v).clone()).collect();
    let sub = FactorGraph::new(domains, cliques)?;
    Ok((sub, kept))
}

/// Knockoffs with a frozen separator: `x̃_C = x_C` exactly, and each side
/// gets an independent run on its conditional model. `sample_side` receives
/// `(side index, conditional graph, x restricted, original indices)` and
/// returns the side's knockoff vector in restricted coordinates.
pub fn separator_sliced_sample<F>(
    graph: &FactorGraph,
    components: &[Vec<usize>],
    frozen: &[usize],
    x: &[f64],
    mut sample_side: F,
) -> Result<Vec<f64>, EngineError>
where
    F: FnMut(usize, &FactorGraph, &[f64], &[usize]) -> Result<Vec<f64>, EngineError>,
{
    verify_separation(graph, components, frozen)?;
    let mut xtilde = x.to_vec();
    let frozen_vals: Vec<(usize, f64)> = frozen.iter().map(|&v| (v, x[v])).collect();
    for (si, comp) in components.iter().enumerate() {
        if comp.is_empty() {
            continue;
        }
        let (sub, kept) = restrict_graph(graph, comp, &frozen_vals)?;
        let sub_x: Vec<f64> = kept.iter().map(|&v| x[v]).collect();
        let sub_tilde = sample_side(si, &sub, &sub_x, &kept)?;
        assert_eq!(sub_tilde.len(), kept.len());
        for (&v, &val) in kept.iter().zip(&sub_tilde) {
            xtilde[v] = val;
        }
    }
    Ok(xtilde)
}

/// Two-component divide and conquer over a verified `A | C | B` partition.
pub fn divide_and_conquer_sample<F>(
    graph: &FactorGraph,
    partition: &Partition,
    x: &[f64],
    sample_side: F,
) -> Result<Vec<f64>, EngineError>
where
    F: FnMut(usize, &FactorGraph, &[f64], &[usize]) -> Result<Vec<f64>, EngineError>,
{
    separator_sliced_sample(
        graph,
        &[partition.a.clone(), partition.b.clone()],
        &partition.c,
        x,
        sample_side,
    )
}
