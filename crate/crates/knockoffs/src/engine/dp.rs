//! The per-step dynamic program behind every sampler in this crate.
//!
//! At step `t` the acceptance (or selection) probabilities need the joint
//! density of `(X with some coordinates moved, history so far)` up to a
//! constant. Writing `F_k` for the density of step `k`'s recorded outcome
//! as a function of a candidate configuration of its node `V_k`, that
//! joint factors as `Φ(config) · ∏_{k<t, t∈V_k} F_k(config restricted)`,
//! so each step only touches `Φ` at configurations of its own node and a
//! bounded set of cached `F` values.
//!
//! Tables are stored per step over the *future* members of `V_t` only: a
//! cached `F_t` is only ever consulted at configurations that pin every
//! variable sampled before `t` at its observed value (values diverge from
//! the observed vector only on the steps between `t` and the consumer).
//! Entries are computed on first use, after the candidate values they
//! depend on exist.

use rand::Rng;

use crate::factor::{FactorGraph, GraphView, Overlay};
use crate::jtree::EliminationOrder;
use crate::kernels::{mtm_offsets, MhProposal, MtmParams};
use crate::numeric::{ln_one_minus_exp, log_sum_exp};

use super::EngineError;

/// Candidate values a step's coordinate may take inside cached tables.
#[derive(Clone, Debug)]
pub(crate) enum Universe {
    /// Plain MH: the observed block (slot 0) and the proposal (slot 1,
    /// bound when the step runs).
    TwoPoint {
        x: Vec<f64>,
        xstar: Option<Vec<f64>>,
    },
    /// Multiple-try ladder around the observed scalar: slot `i` holds
    /// `x + (i − 2m)·t`, so both candidate fans fit.
    Lattice { x: f64, t: f64, m: usize },
    /// Full discrete support of the scalar coordinate.
    Levels { levels: Vec<f64>, x_index: usize },
}

impl Universe {
    pub(crate) fn slot_count(&self) -> usize {
        match self {
            Universe::TwoPoint { .. } => 2,
            Universe::Lattice { m, .. } => 4 * m + 1,
            Universe::Levels { levels, .. } => levels.len(),
        }
    }

    pub(crate) fn observed_slot(&self) -> usize {
        match self {
            Universe::TwoPoint { .. } => 0,
            Universe::Lattice { m, .. } => 2 * m,
            Universe::Levels { x_index, .. } => *x_index,
        }
    }

    /// Block value at a slot (scalar universes yield length-1 blocks).
    pub(crate) fn value(&self, slot: usize) -> Vec<f64> {
        match self {
            Universe::TwoPoint { x, xstar } => {
                if slot == 0 {
                    x.clone()
                } else {
                    xstar.clone().expect("proposal slot consulted before binding")
                }
            }
            Universe::Lattice { x, t, m } => {
                vec![x + (slot as f64 - 2.0 * *m as f64) * t]
            }
            Universe::Levels { levels, .. } => vec![levels[slot]],
        }
    }

    pub(crate) fn lattice_slot(&self, offset: i64) -> usize {
        match self {
            Universe::Lattice { m, .. } => (offset + 2 * *m as i64) as usize,
            _ => unreachable!("lattice slots only exist for MTM steps"),
        }
    }
}

/// Realized outcome of a completed step.
#[derive(Clone, Debug)]
pub(crate) enum StepRecord {
    PlainMh { accepted: bool },
    Mtm { selected: Option<(i64, bool)> },
    Exact { xtilde_slot: usize },
}

/// Outcome of one step, exposed for exact law enumeration.
#[derive(Clone, Debug)]
pub enum StepOutcome {
    Plain { xstar: Vec<f64>, accepted: bool },
    MtmSelect { offset: i64, accepted: bool },
    MtmAutoReject,
    Exact { value: f64 },
}

#[derive(Clone, Copy)]
pub(crate) enum KernelChoice<'a> {
    Mh(&'a dyn MhProposal),
    Mtm(&'a MtmParams),
    Exact,
}

/// Lazily filled table of cached log `F` values over a step's future axes.
#[derive(Clone, Debug)]
pub(crate) struct StepTable {
    pub axes: Vec<usize>,
    pub radices: Vec<usize>,
    pub log_f: Vec<f64>,
}

impl StepTable {
    fn flat_index(&self, slots: &[usize]) -> usize {
        let mut idx = 0usize;
        for (slot, radix) in slots.iter().zip(&self.radices) {
            debug_assert!(slot < radix);
            idx = idx * radix + slot;
        }
        idx
    }

    pub fn filled_entries(&self) -> usize {
        self.log_f.iter().filter(|v| !v.is_nan()).count()
    }
}

pub(crate) struct DpState<'a> {
    pub graph: &'a FactorGraph,
    pub view: GraphView<'a>,
    pub order: &'a EliminationOrder,
    /// Original variables of the block sampled at each step.
    pub sites: Vec<Vec<usize>>,
    pub x: Vec<f64>,
    pub xtilde: Vec<f64>,
    pub universes: Vec<Universe>,
    pub tables: Vec<StepTable>,
    /// `refs[t]`: steps `k < t` with `t ∈ V_k`, whose cached factors enter
    /// step `t`'s ratios.
    pub refs: Vec<Vec<usize>>,
    pub futures: Vec<Vec<usize>>,
    pub records: Vec<Option<StepRecord>>,
    pub xstar: Vec<Option<Vec<f64>>>,
    pub accepted: Vec<bool>,
    /// Pre-clamp log acceptance ratio per step (`NaN` for rejection-free
    /// steps).
    pub delta_log: Vec<f64>,
    /// Normalized conditional PMFs recorded by the rejection-free sampler.
    pub pmfs: Vec<Option<Vec<f64>>>,
    pub kernel: KernelChoice<'a>,
    pub gamma: f64,
}

impl<'a> Clone for DpState<'a> {
    fn clone(&self) -> Self {
        let mut view = self.graph.view();
        view.set_base(&self.x).expect("base was valid");
        view.counter = self.view.counter.clone();
        Self {
            graph: self.graph,
            view,
            order: self.order,
            sites: self.sites.clone(),
            x: self.x.clone(),
            xtilde: self.xtilde.clone(),
            universes: self.universes.clone(),
            tables: self.tables.clone(),
            refs: self.refs.clone(),
            futures: self.futures.clone(),
            records: self.records.clone(),
            xstar: self.xstar.clone(),
            accepted: self.accepted.clone(),
            delta_log: self.delta_log.clone(),
            pmfs: self.pmfs.clone(),
            kernel: self.kernel,
            gamma: self.gamma,
        }
    }
}

impl<'a> DpState<'a> {
    pub(crate) fn new(
        graph: &'a FactorGraph,
        order: &'a EliminationOrder,
        sites: Vec<Vec<usize>>,
        kernel: KernelChoice<'a>,
        x: &[f64],
    ) -> Result<Self, EngineError> {
        let p = order.p();
        assert_eq!(sites.len(), p);
        let mut view = graph.view();
        view.set_base(x)?;

        let mut universes = Vec::with_capacity(p);
        for (t, site) in sites.iter().enumerate() {
            let u = match kernel {
                KernelChoice::Mh(_) => Universe::TwoPoint {
                    x: site.iter().map(|&v| x[v]).collect(),
                    xstar: None,
                },
                KernelChoice::Mtm(params) => {
                    assert_eq!(site.len(), 1, "multiple-try steps are scalar");
                    let v = site[0];
                    Universe::Lattice {
                        x: x[v],
                        t: params.t[v],
                        m: params.m,
                    }
                }
                KernelChoice::Exact => {
                    assert_eq!(site.len(), 1);
                    let v = site[0];
                    let levels = graph
                        .domain(v)
                        .levels()
                        .ok_or(EngineError::NotDiscrete { var: v })?
                        .to_vec();
                    let x_index = graph
                        .domain(v)
                        .level_index(x[v])
                        .ok_or(EngineError::NotDiscrete { var: v })?;
                    Universe::Levels { levels, x_index }
                }
            };
            let _ = t;
            universes.push(u);
        }

        let futures: Vec<Vec<usize>> = (0..p).map(|t| order.future_axes(t)).collect();
        let refs: Vec<Vec<usize>> = (0..p).map(|t| order.referencing_steps(t)).collect();
        if let KernelChoice::Exact = kernel {
            for t in 0..p {
                let states: u128 = order.node_of[t]
                    .iter()
                    .map(|&u| universes[u].slot_count() as u128)
                    .product();
                if states > 1_000_000 {
                    return Err(EngineError::NodeStateGuard { step: t, states });
                }
            }
        }
        let tables = (0..p)
            .map(|t| {
                let axes = futures[t].clone();
                let radices: Vec<usize> =
                    axes.iter().map(|&u| universes[u].slot_count()).collect();
                let len = radices.iter().product::<usize>().max(1);
                StepTable {
                    axes,
                    radices,
                    log_f: vec![f64::NAN; len],
                }
            })
            .collect();

        Ok(Self {
            graph,
            view,
            order,
            sites,
            x: x.to_vec(),
            xtilde: x.to_vec(),
            universes,
            tables,
            refs,
            futures,
            records: vec![None; p],
            xstar: vec![None; p],
            accepted: vec![false; p],
            delta_log: vec![f64::NAN; p],
            pmfs: vec![None; p],
            kernel,
            gamma: match kernel {
                KernelChoice::Mtm(params) => params.gamma,
                _ => 1.0,
            },
        })
    }

    pub(crate) fn p(&self) -> usize {
        self.order.p()
    }

    fn push_mods(&self, step: usize, slot: usize, mods: &mut Vec<(usize, f64)>) {
        if slot == self.universes[step].observed_slot() {
            return;
        }
        let values = self.universes[step].value(slot);
        for (&v, val) in self.sites[step].iter().zip(values) {
            mods.push((v, val));
        }
    }

    /// `log` of the joint density of the history before step `t` jointly
    /// with `X` set to the configuration `(step t → t_slot, futures → cfg)`,
    /// up to a constant shared across slots: the `Φ` term plus every cached
    /// factor that depends on step `t`'s value.
    fn log_target(&mut self, t: usize, t_slot: usize, cfg: &[(usize, usize)]) -> f64 {
        let mut mods: Vec<(usize, f64)> = Vec::with_capacity(1 + cfg.len());
        self.push_mods(t, t_slot, &mut mods);
        for &(u, slot) in cfg {
            self.push_mods(u, slot, &mut mods);
        }
        let log_phi = self.view.log_phi_mods(&mods);
        if log_phi == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let mut total = log_phi;
        for ki in 0..self.refs[t].len() {
            let k = self.refs[t][ki];
            let f = self.cached_factor(k, t, t_slot, cfg);
            if f == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += f;
        }
        total
    }

    /// Look up (filling on demand) `log F_k` at the configuration implied
    /// by the querying step `t`.
    fn cached_factor(&mut self, k: usize, t: usize, t_slot: usize, cfg: &[(usize, usize)]) -> f64 {
        let mut slots = Vec::with_capacity(self.tables[k].axes.len());
        for ai in 0..self.tables[k].axes.len() {
            let u = self.tables[k].axes[ai];
            let slot = if u == t {
                t_slot
            } else {
                // an axis absent from the configuration is at its observed
                // value; fills list every future axis of the current node
                // explicitly, the sampling steps list none
                cfg.iter()
                    .find(|&&(s, _)| s == u)
                    .map(|&(_, slot)| slot)
                    .unwrap_or_else(|| self.universes[u].observed_slot())
            };
            slots.push(slot);
        }
        let idx = self.tables[k].flat_index(&slots);
        let cached = self.tables[k].log_f[idx];
        if !cached.is_nan() {
            return cached;
        }
        let value = self.compute_factor(k, &slots);
        self.tables[k].log_f[idx] = value;
        value
    }

    /// Compute `log F_k` at a configuration of its future axes. The step's
    /// own coordinate is pinned at its observed value: consumers only ever
    /// ask about configurations reachable from the recorded history.
    fn compute_factor(&mut self, k: usize, axis_slots: &[usize]) -> f64 {
        let cfg: Vec<(usize, usize)> = self.tables[k]
            .axes
            .clone()
            .into_iter()
            .zip(axis_slots.iter().copied())
            .collect();
        match self.records[k].clone() {
            None => panic!("factor of an unsampled step requested"),
            Some(StepRecord::PlainMh { accepted }) => self.plain_factor(k, &cfg, accepted),
            Some(StepRecord::Mtm { selected }) => self.mtm_factor(k, &cfg, selected),
            Some(StepRecord::Exact { xtilde_slot }) => self.exact_factor(k, &cfg, xtilde_slot),
        }
    }

    fn kernel_mh(&self) -> &'a dyn MhProposal {
        match self.kernel {
            KernelChoice::Mh(k) => k,
            _ => unreachable!("plain factor outside an MH run"),
        }
    }

    fn mods_for_cfg(&self, cfg: &[(usize, usize)]) -> Vec<(usize, f64)> {
        let mut mods = Vec::with_capacity(cfg.len());
        for &(u, slot) in cfg {
            self.push_mods(u, slot, &mut mods);
        }
        mods
    }

    /// Log proposal densities `(q_fwd, q_rev)` of a plain step under a
    /// counterfactual configuration of later coordinates.
    fn plain_qs(&mut self, k: usize, cfg: &[(usize, usize)]) -> (f64, f64) {
        let kernel = self.kernel_mh();
        let site = self.sites[k].clone();
        let xstar = self.xstar[k].clone().expect("plain step records a proposal");
        let x_block: Vec<f64> = site.iter().map(|&v| self.x[v]).collect();
        let mods = self.mods_for_cfg(cfg);
        let q_fwd = kernel.log_q(k, &site, &xstar, &Overlay::new(&self.x, &mods), &self.xstar);
        let mut mods_rev = mods.clone();
        for (&v, &val) in site.iter().zip(&xstar) {
            mods_rev.push((v, val));
        }
        let q_rev = kernel.log_q(
            k,
            &site,
            &x_block,
            &Overlay::new(&self.x, &mods_rev),
            &self.xstar,
        );
        (q_fwd, q_rev)
    }

    /// Pre-clamp log acceptance ratio of a plain step under `cfg`, or
    /// `None` when the conditioning configuration has zero mass.
    fn plain_delta(&mut self, k: usize, cfg: &[(usize, usize)]) -> Option<f64> {
        let (q_fwd, q_rev) = self.plain_qs(k, cfg);
        let obs = self.universes[k].observed_slot();
        let xstar_slot = 1usize;
        let target_cur = self.log_target(k, obs, cfg);
        if target_cur == f64::NEG_INFINITY {
            return None;
        }
        let target_star = self.log_target(k, xstar_slot, cfg);
        if target_star == f64::NEG_INFINITY || q_fwd == f64::NEG_INFINITY {
            return Some(f64::NEG_INFINITY);
        }
        Some(q_rev - q_fwd + target_star - target_cur)
    }

    fn plain_factor(&mut self, k: usize, cfg: &[(usize, usize)], accepted: bool) -> f64 {
        // identical proposal and current value: certain acceptance
        if self.tie_step(k) {
            let (q_fwd, _) = self.plain_qs(k, cfg);
            return if accepted { q_fwd } else { f64::NEG_INFINITY };
        }
        let Some(delta) = self.plain_delta(k, cfg) else {
            return f64::NEG_INFINITY;
        };
        let (q_fwd, _) = self.plain_qs(k, cfg);
        if q_fwd == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let log_alpha = delta.min(0.0);
        if accepted {
            q_fwd + log_alpha
        } else {
            q_fwd + ln_one_minus_exp(log_alpha)
        }
    }

    pub(crate) fn tie_step(&self, k: usize) -> bool {
        match (&self.universes[k], &self.xstar[k]) {
            (Universe::TwoPoint { x, .. }, Some(star)) => x == star,
            _ => false,
        }
    }

    /// Log selection weights over the candidate fan around `center_slot`.
    fn mtm_fan(
        &mut self,
        k: usize,
        center_offset: i64,
        cfg: &[(usize, usize)],
        m: usize,
    ) -> Vec<(i64, f64)> {
        mtm_offsets(m)
            .map(|d| {
                let off = center_offset + d;
                let slot = self.universes[k].lattice_slot(off);
                (off, self.log_target(k, slot, cfg))
            })
            .collect()
    }

    fn mtm_factor(&mut self, k: usize, cfg: &[(usize, usize)], selected: Option<(i64, bool)>) -> f64 {
        let m = match self.kernel {
            KernelChoice::Mtm(params) => params.m,
            _ => unreachable!(),
        };
        let fan_x = self.mtm_fan(k, 0, cfg, m);
        let weights: Vec<f64> = fan_x.iter().map(|&(_, w)| w).collect();
        let sum_x = log_sum_exp(&weights);
        match selected {
            None => {
                // the recorded event was an automatic rejection, which
                // happens exactly when no candidate has mass
                if sum_x == f64::NEG_INFINITY {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Some((k0, accepted)) => {
                if sum_x == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let pi_k0 = fan_x
                    .iter()
                    .find(|&&(off, _)| off == k0)
                    .map(|&(_, w)| w)
                    .expect("selected offset is in the fan");
                if pi_k0 == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let log_sel = pi_k0 - sum_x;
                let fan_star = self.mtm_fan(k, k0, cfg, m);
                let weights_star: Vec<f64> = fan_star.iter().map(|&(_, w)| w).collect();
                let sum_star = log_sum_exp(&weights_star);
                // sum_star = −∞ gives an infinite ratio: accept with prob γ
                let log_ratio = if sum_star == f64::NEG_INFINITY {
                    f64::INFINITY
                } else {
                    sum_x - sum_star
                };
                let log_acc = self.gamma.ln() + log_ratio.min(0.0);
                if accepted {
                    log_sel + log_acc
                } else {
                    log_sel + ln_one_minus_exp(log_acc)
                }
            }
        }
    }

    fn exact_factor(&mut self, k: usize, cfg: &[(usize, usize)], xtilde_slot: usize) -> f64 {
        let n = self.universes[k].slot_count();
        let weights: Vec<f64> = (0..n).map(|slot| self.log_target(k, slot, cfg)).collect();
        let lse = log_sum_exp(&weights);
        if lse == f64::NEG_INFINITY {
            // zero-mass conditioning configuration
            return f64::NEG_INFINITY;
        }
        weights[xtilde_slot] - lse
    }

    // ----- running the actual steps -------------------------------------

    pub(crate) fn run_step(&mut self, t: usize, rng: &mut impl Rng) -> Result<(), EngineError> {
        self.view.counter.set_active_step(Some(t));
        match self.kernel {
            KernelChoice::Mh(kernel) => {
                let site = self.sites[t].clone();
                let xstar =
                    kernel.propose(t, &site, &Overlay::new(&self.x, &[]), &self.xstar, rng);
                let u = rng.gen::<f64>();
                let outcome = self.plain_outcome_given(t, xstar, u)?;
                self.apply_outcome(t, &outcome);
            }
            KernelChoice::Mtm(params) => {
                let m = params.m;
                let fan = self.mtm_fan(t, 0, &[], m);
                let weights: Vec<f64> = fan.iter().map(|&(_, w)| w).collect();
                let sum_x = log_sum_exp(&weights);
                if sum_x == f64::NEG_INFINITY {
                    self.apply_outcome(t, &StepOutcome::MtmAutoReject);
                } else {
                    let u = rng.gen::<f64>();
                    let mut acc = 0.0;
                    let mut k0 = fan.last().unwrap().0;
                    for &(off, w) in &fan {
                        acc += (w - sum_x).exp();
                        if u < acc {
                            k0 = off;
                            break;
                        }
                    }
                    let accept_u = rng.gen::<f64>();
                    let outcome = self.mtm_outcome_given(t, k0, sum_x, accept_u);
                    self.apply_outcome(t, &outcome);
                }
            }
            KernelChoice::Exact => {
                let pmf = self.conditional_pmf(t)?;
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                let mut slot = pmf.len() - 1;
                for (i, &w) in pmf.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        slot = i;
                        break;
                    }
                }
                let value = self.universes[t].value(slot)[0];
                self.apply_outcome(t, &StepOutcome::Exact { value });
            }
        }
        Ok(())
    }

    /// Decide a plain step's outcome given the proposal and a uniform draw.
    fn plain_outcome_given(
        &mut self,
        t: usize,
        xstar: Vec<f64>,
        u: f64,
    ) -> Result<StepOutcome, EngineError> {
        self.bind_xstar(t, xstar.clone());
        if self.tie_step(t) {
            self.delta_log[t] = 0.0;
            return Ok(StepOutcome::Plain {
                xstar,
                accepted: true,
            });
        }
        let delta = self
            .plain_delta(t, &[])
            .ok_or(EngineError::ZeroMassHistory { step: t })?;
        self.delta_log[t] = delta;
        let accepted = u < delta.min(0.0).exp();
        Ok(StepOutcome::Plain { xstar, accepted })
    }

    fn mtm_outcome_given(&mut self, t: usize, k0: i64, sum_x: f64, accept_u: f64) -> StepOutcome {
        let m = match self.kernel {
            KernelChoice::Mtm(params) => params.m,
            _ => unreachable!(),
        };
        let fan_star = self.mtm_fan(t, k0, &[], m);
        let weights_star: Vec<f64> = fan_star.iter().map(|&(_, w)| w).collect();
        let sum_star = log_sum_exp(&weights_star);
        let log_ratio = if sum_star == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            sum_x - sum_star
        };
        self.delta_log[t] = log_ratio;
        let alpha = self.gamma * log_ratio.min(0.0).exp();
        StepOutcome::MtmSelect {
            offset: k0,
            accepted: accept_u < alpha,
        }
    }

    /// Normalized conditional law of the rejection-free step over levels.
    pub(crate) fn conditional_pmf(&mut self, t: usize) -> Result<Vec<f64>, EngineError> {
        let n = self.universes[t].slot_count();
        let weights: Vec<f64> = (0..n).map(|slot| self.log_target(t, slot, &[])).collect();
        let lse = log_sum_exp(&weights);
        if lse == f64::NEG_INFINITY {
            return Err(EngineError::ZeroMassHistory { step: t });
        }
        let pmf: Vec<f64> = weights.iter().map(|w| (w - lse).exp()).collect();
        self.pmfs[t] = Some(pmf.clone());
        Ok(pmf)
    }

    fn bind_xstar(&mut self, t: usize, xstar: Vec<f64>) {
        if let Universe::TwoPoint { xstar: slot, .. } = &mut self.universes[t] {
            *slot = Some(xstar.clone());
        }
        self.xstar[t] = Some(xstar);
    }

    pub(crate) fn apply_outcome(&mut self, t: usize, outcome: &StepOutcome) {
        match outcome {
            StepOutcome::Plain { xstar, accepted } => {
                self.bind_xstar(t, xstar.clone());
                self.records[t] = Some(StepRecord::PlainMh {
                    accepted: *accepted,
                });
                self.accepted[t] = *accepted;
                if *accepted {
                    for (&v, &val) in self.sites[t].iter().zip(xstar) {
                        self.xtilde[v] = val;
                    }
                }
            }
            StepOutcome::MtmSelect { offset, accepted } => {
                let slot = self.universes[t].lattice_slot(*offset);
                let value = self.universes[t].value(slot);
                self.xstar[t] = Some(value.clone());
                self.records[t] = Some(StepRecord::Mtm {
                    selected: Some((*offset, *accepted)),
                });
                self.accepted[t] = *accepted;
                if *accepted {
                    self.xtilde[self.sites[t][0]] = value[0];
                }
            }
            StepOutcome::MtmAutoReject => {
                self.records[t] = Some(StepRecord::Mtm { selected: None });
                self.accepted[t] = false;
            }
            StepOutcome::Exact { value } => {
                let slot = match &self.universes[t] {
                    Universe::Levels { levels, .. } => levels
                        .iter()
                        .position(|&l| l == *value)
                        .expect("exact outcome must be a level"),
                    _ => unreachable!(),
                };
                self.records[t] = Some(StepRecord::Exact { xtilde_slot: slot });
                self.accepted[t] = true;
                self.xstar[t] = Some(vec![*value]);
                self.xtilde[self.sites[t][0]] = *value;
            }
        }
    }

    /// Enumerate the law of step `t`'s outcome given the applied history,
    /// as `(outcome, log probability)` pairs. `None` when the kernel's
    /// randomness is not discretizable.
    pub(crate) fn step_outcome_law(
        &mut self,
        t: usize,
    ) -> Result<Option<Vec<(StepOutcome, f64)>>, EngineError> {
        self.view.counter.set_active_step(Some(t));
        match self.kernel {
            KernelChoice::Mh(kernel) => {
                let site = self.sites[t].clone();
                let Some(support) =
                    kernel.enumerate_support(t, &site, &Overlay::new(&self.x, &[]), &self.xstar)
                else {
                    return Ok(None);
                };
                let mut out = Vec::new();
                for (xstar, log_q_sel) in support {
                    if log_q_sel == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut branch = self.clone();
                    branch.bind_xstar(t, xstar.clone());
                    let log_alpha = if branch.tie_step(t) {
                        0.0
                    } else {
                        branch
                            .plain_delta(t, &[])
                            .ok_or(EngineError::ZeroMassHistory { step: t })?
                            .min(0.0)
                    };
                    out.push((
                        StepOutcome::Plain {
                            xstar: xstar.clone(),
                            accepted: true,
                        },
                        log_q_sel + log_alpha,
                    ));
                    let log_rej = ln_one_minus_exp(log_alpha);
                    if log_rej > f64::NEG_INFINITY {
                        out.push((
                            StepOutcome::Plain {
                                xstar,
                                accepted: false,
                            },
                            log_q_sel + log_rej,
                        ));
                    }
                }
                Ok(Some(out))
            }
            KernelChoice::Mtm(params) => {
                let m = params.m;
                let fan = self.mtm_fan(t, 0, &[], m);
                let weights: Vec<f64> = fan.iter().map(|&(_, w)| w).collect();
                let sum_x = log_sum_exp(&weights);
                if sum_x == f64::NEG_INFINITY {
                    return Ok(Some(vec![(StepOutcome::MtmAutoReject, 0.0)]));
                }
                let mut out = Vec::new();
                for &(k0, w) in &fan {
                    if w == f64::NEG_INFINITY {
                        continue;
                    }
                    let log_sel = w - sum_x;
                    let fan_star = self.mtm_fan(t, k0, &[], m);
                    let ws: Vec<f64> = fan_star.iter().map(|&(_, v)| v).collect();
                    let sum_star = log_sum_exp(&ws);
                    let log_ratio = if sum_star == f64::NEG_INFINITY {
                        f64::INFINITY
                    } else {
                        sum_x - sum_star
                    };
                    let log_acc = self.gamma.ln() + log_ratio.min(0.0);
                    out.push((
                        StepOutcome::MtmSelect {
                            offset: k0,
                            accepted: true,
                        },
                        log_sel + log_acc,
                    ));
                    let log_rej = ln_one_minus_exp(log_acc);
                    if log_rej > f64::NEG_INFINITY {
                        out.push((
                            StepOutcome::MtmSelect {
                                offset: k0,
                                accepted: false,
                            },
                            log_sel + log_rej,
                        ));
                    }
                }
                Ok(Some(out))
            }
            KernelChoice::Exact => {
                let pmf = self.conditional_pmf(t)?;
                let mut out = Vec::new();
                for (slot, &w) in pmf.iter().enumerate() {
                    if w > 0.0 {
                        let value = self.universes[t].value(slot)[0];
                        out.push((StepOutcome::Exact { value }, w.ln()));
                    }
                }
                Ok(Some(out))
            }
        }
    }

    pub(crate) fn table_entries(&self) -> usize {
        self.tables.iter().map(StepTable::filled_entries).sum()
    }
}
