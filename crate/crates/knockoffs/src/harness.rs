//! Measurement harness: builds models and kernels from a [`Config`], runs
//! replicated knockoff draws with deterministic stream keying, estimates
//! mean absolute correlations with standard errors, sweeps parameter
//! grids into stable CSV, and runs the validation suite.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{Config, ModelConfig};
use crate::engine::{self, EngineError, GroupSpec};
use crate::engine::dp::KernelChoice;
use crate::factor::{Domain, FactorGraph};
use crate::jtree::{
    build_junction_tree, grid_junction_tree, order_variables, EliminationOrder, JunctionTree,
};
use crate::kernels::{
    covariance_plan, gamma_min_eigenvalue, CovarianceKernel, GaussianRwKernel, KernelError,
    MtmParams,
};
use crate::load::{load_factor_graph, LoadError};
use crate::rng::{domain, stream, CoordinateStreams};
use crate::stats;
use crate::zoo::{
    build_discrete_chain, build_gaussian_chain, build_gibbs_grid_with_sweeps,
    build_ising_with_sweeps, build_mixture_chain, build_t_chain, pilot_covariance, ChainConfig,
    DiscreteChainConfig, GibbsGridConfig, GibbsSweepSampler, Innovation, IsingConfig, Model,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Frozen-column slicing of a `d1 × d2` grid into ribbons of width `w`
/// (row-major ids). The offset selects which residue class of columns is
/// frozen; drawing it per observation keeps every site free most of the
/// time.
pub fn ribbon_partition(d1: usize, d2: usize, w: usize, offset: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    assert!(w >= 1);
    let period = w + 1;
    let offset = offset % period;
    let id = |i: usize, j: usize| i * d2 + j;
    let mut frozen = Vec::new();
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for j in 0..d2 {
        if j % period == offset {
            frozen.extend((0..d1).map(|i| id(i, j)));
            if !current.is_empty() {
                components.push(std::mem::take(&mut current));
            }
        } else {
            current.extend((0..d1).map(|i| id(i, j)));
        }
    }
    if !current.is_empty() {
        components.push(current);
    }
    (components, frozen)
}

enum KernelSet {
    Exact,
    Mtm(MtmParams),
    Rw(GaussianRwKernel),
    Cov(Box<CovarianceKernel>),
    /// Copies `x̃ = x`: the trivial knockoff baseline.
    Identity,
}

/// One replicate's result.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub x_tilde: Vec<f64>,
    pub accepted_per_var: Vec<bool>,
    pub queries_equiv: u64,
    pub per_var_queries: Vec<u64>,
    pub max_abs_delta: f64,
    pub all_accepted: bool,
    pub frozen: Vec<usize>,
}

/// A prepared run environment: model, tree, ordering, kernels, and any
/// sliced sub-plans, all derived once from the configuration.
pub struct Workbench {
    pub config: Config,
    pub seed: u64,
    pub model: Model,
    pub tree: JunctionTree,
    pub order: EliminationOrder,
    pub sigma: DMatrix<f64>,
    pub mu: Vec<f64>,
    /// Decorrelation vector in covariance and correlation units, when one
    /// is in use or derivable.
    pub s_cov: Option<Vec<f64>>,
    pub s_corr: Option<Vec<f64>>,
    kernels: KernelSet,
    slice_w: Option<usize>,
    grid_dims: Option<(usize, usize)>,
}

fn build_model_from_config(cfg: &Config) -> Result<Model, HarnessError> {
    let m = &cfg.model;
    let need = |o: Option<usize>, name: &str| o.ok_or_else(|| cfg_err(format!("model.{name} is required")));
    let fneed = |o: Option<f64>, name: &str| o.ok_or_else(|| cfg_err(format!("model.{name} is required")));
    let model = match m.kind.as_str() {
        "gaussian-chain" => build_gaussian_chain(&ChainConfig::constant_rho(
            need(m.p, "p")?,
            m.rho.unwrap_or(0.0),
            Innovation::Gaussian,
        )),
        "t-chain" => build_t_chain(&ChainConfig::constant_rho(
            need(m.p, "p")?,
            m.rho.unwrap_or(0.0),
            Innovation::StudentT {
                nu: m.nu.unwrap_or(5.0),
            },
        )),
        "mixture-chain" => build_mixture_chain(&ChainConfig::constant_rho(
            need(m.p, "p")?,
            m.rho.unwrap_or(0.0),
            Innovation::GaussExpMixture,
        )),
        "discrete-chain" => build_discrete_chain(&DiscreteChainConfig {
            p: need(m.p, "p")?,
            k: need(m.k, "k")?,
            alpha: m.alpha.unwrap_or(0.0),
        }),
        "ising" => build_ising_with_sweeps(
            &IsingConfig::constant(
                need(m.d1, "d1")?,
                need(m.d2, "d2")?,
                fneed(m.beta0, "beta0")?,
                m.alpha0.unwrap_or(0.0),
            ),
            cfg.forward.burn_in,
            cfg.forward.thin,
        ),
        "gibbs-grid" => build_gibbs_grid_with_sweeps(
            &GibbsGridConfig {
                d: need(m.d, "d")?,
                k: need(m.k, "k")?,
                beta0: fneed(m.beta0, "beta0")?,
            },
            cfg.forward.burn_in,
            cfg.forward.thin,
        ),
        other => {
            if let Some(path) = other.strip_prefix("custom-file:") {
                let text = std::fs::read_to_string(path)?;
                let graph = load_factor_graph(&text)?;
                if !graph.is_fully_discrete() {
                    return Err(cfg_err(
                        "custom-file models need discrete domains for forward sampling; \
                         continuous custom models are limited to knockoff evaluation APIs",
                    ));
                }
                let p = graph.p();
                let sampler =
                    GibbsSweepSampler::new(graph.clone(), cfg.forward.burn_in, cfg.forward.thin);
                Model {
                    graph,
                    mu: vec![0.0; p],
                    sigma: None,
                    sampler: Box::new(sampler),
                    kind: "custom-file",
                }
            } else {
                return Err(cfg_err(format!("unknown model.kind '{other}'")));
            }
        }
    };
    Ok(model)
}

fn grid_dims(m: &ModelConfig) -> Option<(usize, usize)> {
    match m.kind.as_str() {
        "ising" => Some((m.d1?, m.d2?)),
        "gibbs-grid" => {
            let d = m.d?;
            Some((d, d))
        }
        _ => None,
    }
}

fn load_s_file(path: &str, p: usize) -> Result<Vec<f64>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let s: Vec<f64> =
        serde_json::from_str(&text).map_err(|e| cfg_err(format!("s file: {e}")))?;
    if s.len() != p {
        return Err(cfg_err(format!("s file has {} entries, expected {p}", s.len())));
    }
    Ok(s)
}

impl Workbench {
    pub fn prepare(config: Config, seed: u64) -> Result<Self, HarnessError> {
        let mut model = build_model_from_config(&config)?;
        let dims = grid_dims(&config.model);
        let tree = match dims {
            Some((d1, d2)) => grid_junction_tree(d1, d2),
            None => build_junction_tree(model.graph.adjacency()),
        };
        let order = order_variables(&tree);
        let p = model.graph.p();

        // second moments: exact when the family provides them, otherwise a
        // pilot Monte Carlo estimate (surrogates are fine for proposals)
        let (mu, sigma) = match model.sigma.clone() {
            Some(s) => (model.mu.clone(), s),
            None => {
                let mut rng = stream(seed, domain::PILOT, 0, 0);
                pilot_covariance(
                    model.sampler.as_mut(),
                    p,
                    config.forward.pilot_n,
                    &mut rng,
                )
            }
        };

        let sampler_kind = config.sampler.kind.as_str();
        let proposal_kind = config.proposal.kind.as_str();
        let mut s_cov = None;
        let mut s_corr = None;
        let kernels = if sampler_kind == "identity" {
            KernelSet::Identity
        } else if sampler_kind == "discrete-exact" {
            if !model.graph.is_fully_discrete() {
                return Err(cfg_err("discrete-exact needs a fully discrete model"));
            }
            KernelSet::Exact
        } else if sampler_kind == "metro" {
            match proposal_kind {
                "mtm" => {
                    let units = crate::kernels::step_size_units(&sigma)?;
                    let t: Vec<f64> = units
                        .iter()
                        .enumerate()
                        .map(|(v, &u)| {
                            let raw = config.proposal.t_scale * u;
                            // candidate ladders on a discrete support must
                            // step in multiples of the level spacing
                            match model.graph.domain(v).levels() {
                                Some(levels) if levels.len() >= 2 => {
                                    let spacing = levels
                                        .windows(2)
                                        .map(|w| w[1] - w[0])
                                        .fold(f64::INFINITY, f64::min);
                                    spacing * (raw / spacing).round().max(1.0)
                                }
                                _ => raw,
                            }
                        })
                        .collect();
                    KernelSet::Mtm(MtmParams::new(config.proposal.m, t, config.proposal.gamma)?)
                }
                "gaussian-rw" => {
                    let units = crate::kernels::step_size_units(&sigma)?;
                    KernelSet::Rw(GaussianRwKernel {
                        step_sizes: units
                            .into_iter()
                            .map(|u| config.proposal.t_scale * u)
                            .collect(),
                    })
                }
                "covariance" => {
                    let s = match config.proposal.s_source.as_str() {
                        "equicorrelated" => equicorrelated_s(&sigma)?,
                        src => {
                            if let Some(path) = src.strip_prefix("file:") {
                                load_s_file(path, p)?
                            } else {
                                return Err(cfg_err(format!("unknown s_source '{src}'")));
                            }
                        }
                    };
                    s_corr = Some((0..p).map(|j| s[j] / sigma[(j, j)]).collect());
                    s_cov = Some(s.clone());
                    // the plan lives in sampling order
                    let perm = &order.order;
                    let mu_o: Vec<f64> = perm.iter().map(|&v| mu[v]).collect();
                    let s_o: Vec<f64> = perm.iter().map(|&v| s[v]).collect();
                    let sigma_o = DMatrix::from_fn(p, p, |i, j| sigma[(perm[i], perm[j])]);
                    let plan = covariance_plan(&mu_o, &sigma_o, &s_o)?;
                    KernelSet::Cov(Box::new(CovarianceKernel::with_order(
                        plan,
                        model.graph.domains().to_vec(),
                        perm.clone(),
                    )))
                }
                other => return Err(cfg_err(format!("unknown proposal.kind '{other}'"))),
            }
        } else {
            return Err(cfg_err(format!("unknown sampler.kind '{sampler_kind}'")));
        };

        // a reference decorrelation vector for the reported lower bound
        if s_corr.is_none() {
            if let Ok(s) = equicorrelated_s(&sigma) {
                s_corr = Some((0..p).map(|j| s[j] / sigma[(j, j)]).collect());
                s_cov = Some(s);
            }
        }

        let slice_w = config.sampler.ribbon_w;
        if slice_w.is_some() && dims.is_none() {
            return Err(cfg_err("ribbon slicing needs a grid model"));
        }
        if slice_w.is_some() && matches!(kernels, KernelSet::Cov(_)) {
            return Err(cfg_err("ribbon slicing is not supported with the covariance kernel"));
        }
        Ok(Self {
            config,
            seed,
            model,
            tree,
            order,
            sigma,
            mu,
            s_cov,
            s_corr,
            kernels,
            slice_w,
            grid_dims: dims,
        })
    }

    pub fn p(&self) -> usize {
        self.model.graph.p()
    }

    /// Effective width: ribbon width when slicing, tree width otherwise.
    pub fn effective_width(&self) -> usize {
        self.slice_w.unwrap_or(self.order.width)
    }

    pub fn kind_label(&self) -> &str {
        match self.kernels {
            KernelSet::Exact => "discrete-exact",
            KernelSet::Mtm(_) => "mtm",
            KernelSet::Rw(_) => "gaussian-rw",
            KernelSet::Cov(_) => "covariance",
            KernelSet::Identity => "identity",
        }
    }

    /// The lower bound `(1/p) Σ |1 − s_j|` in correlation units.
    pub fn mac_lower_bound(&self) -> Option<f64> {
        self.s_corr.as_ref().map(|s| {
            s.iter().map(|&v| (1.0 - v).abs()).sum::<f64>() / s.len() as f64
        })
    }

    /// Draw `n` fresh observations sequentially from the forward sampler.
    pub fn draw_xs(&mut self, n: usize, stream_index: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(self.seed, domain::FORWARD, stream_index, 0);
        (0..n).map(|_| self.model.sampler.sample(&mut rng)).collect()
    }

    fn run_unsliced(
        &self,
        graph: &FactorGraph,
        order: &EliminationOrder,
        kernels: &KernelSet,
        x: &[f64],
        replicate: u64,
        var_of_step: &[usize],
    ) -> Result<RunOutcome, HarnessError> {
        let groups = GroupSpec::singletons(graph.p());
        let choice = match kernels {
            KernelSet::Exact => KernelChoice::Exact,
            KernelSet::Mtm(params) => KernelChoice::Mtm(params),
            KernelSet::Rw(k) => KernelChoice::Mh(k),
            KernelSet::Cov(k) => KernelChoice::Mh(k.as_ref()),
            KernelSet::Identity => unreachable!("handled before dispatch"),
        };
        let mut state = engine::build_state(graph, order, &groups, choice, x)?;
        let streams = CoordinateStreams::new(self.seed, replicate);
        for t in 0..state.p() {
            let mut rng = streams.for_step(var_of_step[t]);
            state.run_step(t, &mut rng)?;
        }
        state.view.counter.set_active_step(None);
        let p = graph.p();
        let mut accepted_per_var = vec![true; p];
        let mut per_var_queries = vec![0u64; p];
        for t in 0..state.p() {
            let v = order.order[t];
            accepted_per_var[v] = state.accepted[t];
            per_var_queries[v] = state.view.counter.per_step.get(t).copied().unwrap_or(0);
        }
        let max_abs_delta = state
            .delta_log
            .iter()
            .filter(|d| d.is_finite())
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        let all_accepted = state.accepted.iter().all(|&a| a);
        Ok(RunOutcome {
            x_tilde: state.xtilde.clone(),
            accepted_per_var,
            queries_equiv: state.view.counter.full_query_equivalents(),
            per_var_queries,
            max_abs_delta,
            all_accepted,
            frozen: Vec::new(),
        })
    }

    /// MTM step sizes for a restricted side, indexed by sub-variable.
    fn sliced_kernels(&self, kept: &[usize]) -> KernelSet {
        match &self.kernels {
            KernelSet::Exact => KernelSet::Exact,
            KernelSet::Mtm(params) => KernelSet::Mtm(MtmParams {
                m: params.m,
                t: kept.iter().map(|&v| params.t[v]).collect(),
                gamma: params.gamma,
            }),
            KernelSet::Rw(k) => KernelSet::Rw(GaussianRwKernel {
                step_sizes: kept.iter().map(|&v| k.step_sizes[v]).collect(),
            }),
            KernelSet::Cov(_) | KernelSet::Identity => unreachable!("checked at prepare time"),
        }
    }

    /// Run one replicate: returns the knockoff vector and its accounting.
    pub fn run_one(&self, x: &[f64], replicate: u64) -> Result<RunOutcome, HarnessError> {
        if matches!(self.kernels, KernelSet::Identity) {
            return Ok(RunOutcome {
                x_tilde: x.to_vec(),
                accepted_per_var: vec![false; x.len()],
                queries_equiv: 0,
                per_var_queries: vec![0; x.len()],
                max_abs_delta: 0.0,
                all_accepted: false,
                frozen: (0..x.len()).collect(),
            });
        }
        match self.slice_w {
            None => {
                let var_of_step: Vec<usize> = self.order.order.clone();
                self.run_unsliced(
                    &self.model.graph,
                    &self.order,
                    &self.kernels,
                    x,
                    replicate,
                    &var_of_step,
                )
            }
            Some(w) => {
                let (d1, d2) = self.grid_dims.expect("checked at prepare time");
                let mut offset_rng = stream(self.seed, domain::SLICE_OFFSET, replicate, 0);
                let offset = offset_rng.gen_range(0..=w);
                let (components, frozen) = ribbon_partition(d1, d2, w, offset);
                let mut x_tilde = x.to_vec();
                let mut accepted_per_var = vec![true; x.len()];
                let mut per_var_queries = vec![0u64; x.len()];
                let mut queries_equiv = 0u64;
                let mut max_abs_delta = 0.0f64;
                let mut all_accepted = true;
                let frozen_vals: Vec<(usize, f64)> =
                    frozen.iter().map(|&v| (v, x[v])).collect();
                for comp in &components {
                    let (sub, kept) = engine::restrict_graph(&self.model.graph, comp, &frozen_vals)?;
                    let sub_tree = build_junction_tree(sub.adjacency());
                    let sub_order = order_variables(&sub_tree);
                    let sub_x: Vec<f64> = kept.iter().map(|&v| x[v]).collect();
                    let sub_kernels = self.sliced_kernels(&kept);
                    let var_of_step: Vec<usize> =
                        sub_order.order.iter().map(|&sv| kept[sv]).collect();
                    let out = self.run_unsliced(
                        &sub,
                        &sub_order,
                        &sub_kernels,
                        &sub_x,
                        replicate,
                        &var_of_step,
                    )?;
                    for (i, &v) in kept.iter().enumerate() {
                        x_tilde[v] = out.x_tilde[i];
                        accepted_per_var[v] = out.accepted_per_var[i];
                        per_var_queries[v] = out.per_var_queries[i];
                    }
                    queries_equiv += out.queries_equiv;
                    max_abs_delta = max_abs_delta.max(out.max_abs_delta);
                    all_accepted &= out.all_accepted;
                }
                Ok(RunOutcome {
                    x_tilde,
                    accepted_per_var,
                    queries_equiv,
                    per_var_queries,
                    max_abs_delta,
                    all_accepted,
                    frozen,
                })
            }
        }
    }
}

/// Per-coordinate knockoff-quality report over replicated runs.
#[derive(Clone, Debug)]
pub struct MacReport {
    pub abs_corr: Vec<f64>,
    pub signed_corr: Vec<f64>,
    pub corr_se: Vec<f64>,
    pub zero_variance: Vec<bool>,
    pub mac: f64,
    pub mac_se: f64,
    pub acceptance_rate: Vec<f64>,
    pub mean_acceptance: f64,
    pub queries_total: u64,
    pub lower_bound: Option<f64>,
    pub max_abs_delta: f64,
    pub never_rejected: bool,
    pub replicates: usize,
}

/// Estimate the mean absolute correlation between originals and knockoffs
/// over `n` replicates with fresh draws of `x`.
pub fn measure_mac_with(
    bench: &mut Workbench,
    n: usize,
    xs: Option<&[Vec<f64>]>,
) -> Result<MacReport, HarnessError> {
    assert!(n >= 2);
    let drawn;
    let xs: &[Vec<f64>] = match xs {
        Some(list) => {
            assert!(list.len() >= n);
            &list[..n]
        }
        None => {
            drawn = bench.draw_xs(n, 0);
            &drawn
        }
    };
    let outcomes: Vec<RunOutcome> = (0..n)
        .into_par_iter()
        .map(|r| bench.run_one(&xs[r], r as u64))
        .collect::<Result<_, _>>()?;
    let p = bench.p();
    let mut signed_corr = Vec::with_capacity(p);
    let mut abs_corr = Vec::with_capacity(p);
    let mut corr_se = Vec::with_capacity(p);
    let mut zero_variance = Vec::with_capacity(p);
    let mut acceptance_rate = Vec::with_capacity(p);
    // influence values per coordinate feed the MAC standard error
    let mut infl = vec![vec![0.0f64; n]; p];
    for v in 0..p {
        let a: Vec<f64> = xs.iter().map(|x| x[v]).collect();
        let b: Vec<f64> = outcomes.iter().map(|o| o.x_tilde[v]).collect();
        let (r, se, degenerate) = stats::correlation_with_se(&a, &b);
        let (r2, z) = stats::correlation_influence(&a, &b);
        debug_assert!((r - r2).abs() < 1e-12 || degenerate);
        infl[v] = z;
        signed_corr.push(r);
        abs_corr.push(r.abs());
        corr_se.push(se);
        zero_variance.push(degenerate);
        acceptance_rate.push(
            outcomes.iter().filter(|o| o.accepted_per_var[v]).count() as f64 / n as f64,
        );
    }
    let mac = abs_corr.iter().sum::<f64>() / p as f64;
    // delta method for the mean of |r_j| with shared replicates
    let mut mac_infl_var = 0.0;
    for i in 0..n {
        let z: f64 = (0..p)
            .map(|v| signed_corr[v].signum() * infl[v][i])
            .sum::<f64>()
            / p as f64;
        mac_infl_var += z * z;
    }
    mac_infl_var /= n as f64;
    let mac_se = (mac_infl_var / n as f64).sqrt();
    let queries_total = outcomes.iter().map(|o| o.queries_equiv).sum();
    Ok(MacReport {
        abs_corr,
        signed_corr,
        corr_se,
        zero_variance,
        mac,
        mac_se,
        acceptance_rate: acceptance_rate.clone(),
        mean_acceptance: acceptance_rate.iter().sum::<f64>() / p as f64,
        queries_total,
        lower_bound: bench.mac_lower_bound(),
        max_abs_delta: outcomes.iter().fold(0.0, |a, o| a.max(o.max_abs_delta)),
        never_rejected: outcomes.iter().all(|o| o.all_accepted),
        replicates: n,
    })
}

pub fn measure_mac(config: &Config, n: usize, seed: u64) -> Result<MacReport, HarnessError> {
    let mut bench = Workbench::prepare(config.clone(), seed)?;
    measure_mac_with(&mut bench, n, None)
}

/// The equicorrelated decorrelation rule: `s_j = min(1, 2·λ_min(corr(Σ)))`
/// in correlation units, rescaled back to covariance units. The feasibility
/// of `Γ(s)` is verified before returning.
pub fn equicorrelated_s(sigma: &DMatrix<f64>) -> Result<Vec<f64>, KernelError> {
    let p = sigma.nrows();
    let d: Vec<f64> = (0..p).map(|j| sigma[(j, j)].sqrt()).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(KernelError::SingularSigma);
    }
    let corr = DMatrix::from_fn(p, p, |i, j| sigma[(i, j)] / (d[i] * d[j]));
    let lam_min = corr
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(lam_min > 0.0) {
        return Err(KernelError::SingularSigma);
    }
    let s_unit = (2.0 * lam_min).min(1.0);
    let s: Vec<f64> = (0..p).map(|j| s_unit * sigma[(j, j)]).collect();
    let floor = gamma_min_eigenvalue(sigma, &s);
    if floor < -1e-8 {
        return Err(KernelError::IndefiniteGamma {
            min_eigenvalue: floor,
        });
    }
    Ok(s)
}

/// `(1/p) Σ |1 − s_j|` over correlation units.
pub fn mac_lower_bound_from(s_corr: &[f64]) -> f64 {
    s_corr.iter().map(|&v| (1.0 - v).abs()).sum::<f64>() / s_corr.len() as f64
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// `sample` output: one row per replicate and coordinate.
pub fn sample_csv(
    bench: &mut Workbench,
    n: usize,
    seed_note: u64,
) -> Result<String, HarnessError> {
    let xs = bench.draw_xs(n, 0);
    let outcomes: Vec<RunOutcome> = (0..n)
        .into_par_iter()
        .map(|r| bench.run_one(&xs[r], r as u64))
        .collect::<Result<_, _>>()?;
    let mut out = String::from("replicate,coordinate,x,x_tilde,accepted,queries_this_step\n");
    for (r, o) in outcomes.iter().enumerate() {
        for v in 0..bench.p() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r,
                v + 1,
                fmt(xs[r][v]),
                fmt(o.x_tilde[v]),
                o.accepted_per_var[v],
                o.per_var_queries[v]
            ));
        }
    }
    let _ = seed_note;
    Ok(out)
}

/// `order` output: the ordering induced by the model's junction tree.
pub fn order_csv(bench: &Workbench) -> String {
    let mut out = String::from("step,variable_id,node_size,width\n");
    for t in 0..bench.order.p() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            t + 1,
            bench.order.order[t] + 1,
            bench.order.node_of[t].len(),
            bench.order.width
        ));
    }
    out
}

/// One sweep-grid row.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub model: String,
    pub kind: String,
    pub m: usize,
    pub t_scale: f64,
    pub gamma: f64,
    pub w: usize,
    pub model_param: f64,
    pub report: MacReport,
    pub seed: u64,
}

pub const BENCH_CSV_HEADER: &str =
    "model,kind,m,t_scale,gamma,w,model_param,mac,mac_se,mean_acceptance,queries_total,lower_bound,seed";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.kind,
            r.m,
            fmt(r.t_scale),
            fmt(r.gamma),
            r.w,
            fmt(r.model_param),
            fmt(r.report.mac),
            fmt(r.report.mac_se),
            fmt(r.report.mean_acceptance),
            r.report.queries_total,
            r.report.lower_bound.map(fmt).unwrap_or_else(|| "nan".into()),
            r.seed
        ));
    }
    out
}

fn model_param_of(cfg: &ModelConfig) -> f64 {
    match cfg.kind.as_str() {
        "gaussian-chain" | "t-chain" | "mixture-chain" => cfg.rho.unwrap_or(f64::NAN),
        "discrete-chain" => cfg.alpha.unwrap_or(f64::NAN),
        "ising" | "gibbs-grid" => cfg.beta0.unwrap_or(f64::NAN),
        _ => f64::NAN,
    }
}

fn with_model_param(cfg: &ModelConfig, value: f64) -> ModelConfig {
    let mut out = cfg.clone();
    match cfg.kind.as_str() {
        "gaussian-chain" | "t-chain" | "mixture-chain" => out.rho = Some(value),
        "discrete-chain" => out.alpha = Some(value),
        "ising" | "gibbs-grid" => out.beta0 = Some(value),
        _ => {}
    }
    out
}

/// Expand the grid, measure each point, and emit deterministic rows.
/// With common random numbers, grid points sharing a model parameter reuse
/// the same forward draws.
pub fn sweep(config: &Config, n: usize, seed: u64) -> Result<Vec<BenchRow>, HarnessError> {
    let bench_cfg = config.bench.clone().unwrap_or_default();
    let n = bench_cfg.replicates.unwrap_or(n);
    let ms = if bench_cfg.m.is_empty() {
        vec![config.proposal.m]
    } else {
        bench_cfg.m.clone()
    };
    let ts = if bench_cfg.t_scale.is_empty() {
        vec![config.proposal.t_scale]
    } else {
        bench_cfg.t_scale.clone()
    };
    let gs = if bench_cfg.gamma.is_empty() {
        vec![config.proposal.gamma]
    } else {
        bench_cfg.gamma.clone()
    };
    let ws: Vec<Option<usize>> = if bench_cfg.w.is_empty() {
        vec![config.sampler.ribbon_w]
    } else {
        bench_cfg
            .w
            .iter()
            .map(|&w| if w == 0 { None } else { Some(w) })
            .collect()
    };
    let params = if bench_cfg.model_param.is_empty() {
        vec![model_param_of(&config.model)]
    } else {
        bench_cfg.model_param.clone()
    };

    let mut rows = Vec::new();
    for (pi, &param) in params.iter().enumerate() {
        let mut shared_xs: Option<Vec<Vec<f64>>> = None;
        for &w in &ws {
            for &m in &ms {
                for &t_scale in &ts {
                    for &gamma in &gs {
                        let mut cfg = config.clone();
                        cfg.model = with_model_param(&config.model, param);
                        cfg.proposal.m = m;
                        cfg.proposal.t_scale = t_scale;
                        cfg.proposal.gamma = gamma;
                        cfg.sampler.ribbon_w = w;
                        let mut bench = Workbench::prepare(cfg, seed)?;
                        if bench_cfg.common_random_numbers && shared_xs.is_none() {
                            shared_xs = Some(bench.draw_xs(n, pi as u64));
                        }
                        let report = if bench_cfg.common_random_numbers {
                            measure_mac_with(&mut bench, n, shared_xs.as_deref())?
                        } else {
                            measure_mac_with(&mut bench, n, None)?
                        };
                        rows.push(BenchRow {
                            model: config.model.kind.clone(),
                            kind: bench.kind_label().to_string(),
                            m,
                            t_scale,
                            gamma,
                            w: bench.effective_width(),
                            model_param: param,
                            report,
                            seed,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Validation suite
// ---------------------------------------------------------------------------

/// One validation entry; failures are report entries, not errors.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn small_discrete_analog(cfg: &Config) -> Option<Config> {
    let mut out = cfg.clone();
    match cfg.model.kind.as_str() {
        "discrete-chain" => {
            out.model.p = Some(3);
            out.model.k = Some(cfg.model.k.unwrap_or(3).min(3));
        }
        "ising" => {
            out.model.d1 = Some(2);
            out.model.d2 = Some(2);
        }
        "gibbs-grid" => {
            out.model.d = Some(2);
            out.model.k = Some(cfg.model.k.unwrap_or(3).min(3));
        }
        _ => return None,
    }
    out.model.kind = cfg.model.kind.clone();
    out.sampler.ribbon_w = None;
    out.proposal.m = cfg.proposal.m.min(2);
    out.forward.burn_in = 200;
    out.forward.thin = 2;
    out.forward.pilot_n = 2_000;
    Some(out)
}

fn exchangeability_checks(cfg: &Config, seed: u64, checks: &mut Vec<Check>) {
    use crate::engine::{enumerate_law, LawKernel};
    use crate::oracle::{joint_pmf_from_conditional, oracle_joint_pmf, OracleSampler};
    let Some(small) = small_discrete_analog(cfg) else {
        checks.push(Check {
            name: "exchangeability-enumeration".into(),
            passed: true,
            detail: "skipped: model not discretizable; covered by marginal tests".into(),
        });
        return;
    };
    let bench = match Workbench::prepare(small, seed) {
        Ok(b) => b,
        Err(e) => {
            checks.push(Check {
                name: "exchangeability-enumeration".into(),
                passed: false,
                detail: format!("setup failed: {e}"),
            });
            return;
        }
    };
    let graph = &bench.model.graph;
    let order = &bench.order;
    let groups = GroupSpec::singletons(graph.p());
    let steps: Vec<Vec<usize>> = order.order.iter().map(|&v| vec![v]).collect();
    let (law_kernel, oracle_sampler): (LawKernel<'_>, OracleSampler<'_>) = match &bench.kernels {
        KernelSet::Exact => (LawKernel::Exact, OracleSampler::Exact),
        KernelSet::Mtm(p) => (LawKernel::Mtm(p), OracleSampler::Mtm(p)),
        KernelSet::Rw(_) | KernelSet::Cov(_) | KernelSet::Identity => {
            checks.push(Check {
                name: "exchangeability-enumeration".into(),
                passed: true,
                detail: "skipped: kernel randomness is continuous or trivial".into(),
            });
            return;
        }
    };
    match oracle_joint_pmf(graph, &steps, oracle_sampler) {
        Ok(pmf) => {
            let asym = pmf.max_swap_asymmetry(&groups);
            checks.push(Check {
                name: "exchangeability-enumeration".into(),
                passed: asym < 1e-10,
                detail: format!("max swap asymmetry {asym:.3e} on a small analog"),
            });
        }
        Err(e) => checks.push(Check {
            name: "exchangeability-enumeration".into(),
            passed: false,
            detail: format!("oracle refused: {e}"),
        }),
    }
    let engine_pmf = joint_pmf_from_conditional(graph, |x| {
        enumerate_law(graph, order, &groups, law_kernel, x)
            .unwrap()
            .outcomes
    });
    match engine_pmf {
        Ok(pmf) => {
            let asym = pmf.max_swap_asymmetry(&groups);
            checks.push(Check {
                name: "engine-law-exchangeability".into(),
                passed: asym < 1e-10,
                detail: format!("max swap asymmetry {asym:.3e} via engine enumeration"),
            });
        }
        Err(e) => checks.push(Check {
            name: "engine-law-exchangeability".into(),
            passed: false,
            detail: format!("{e}"),
        }),
    }
    // negative control: the validator must notice a broken kernel
    let biased = crate::kernels::BiasedFlipKernel {
        domains: graph.domains().to_vec(),
    };
    if graph.domains().iter().all(|d| matches!(d, Domain::Discrete(l) if l.len() == 2)) {
        match oracle_joint_pmf(graph, &steps, OracleSampler::Mh(&biased)) {
            Ok(pmf) => {
                let asym = pmf.max_swap_asymmetry(&groups);
                checks.push(Check {
                    name: "negative-control".into(),
                    passed: asym > 1e-6,
                    detail: format!("unfaithful kernel shows asymmetry {asym:.3e}"),
                });
            }
            Err(e) => checks.push(Check {
                name: "negative-control".into(),
                passed: false,
                detail: format!("{e}"),
            }),
        }
    }
}

fn marginal_checks(cfg: &Config, seed: u64, n: usize, checks: &mut Vec<Check>) {
    let mut bench = match Workbench::prepare(cfg.clone(), seed) {
        Ok(b) => b,
        Err(e) => {
            checks.push(Check {
                name: "marginal-tests".into(),
                passed: false,
                detail: format!("setup failed: {e}"),
            });
            return;
        }
    };
    let xs = bench.draw_xs(n, 0);
    let fresh = bench.draw_xs(n, 1);
    let outcomes: Vec<RunOutcome> = match (0..n)
        .into_par_iter()
        .map(|r| bench.run_one(&xs[r], r as u64))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(o) => o,
        Err(e) => {
            checks.push(Check {
                name: "marginal-tests".into(),
                passed: false,
                detail: format!("run failed: {e}"),
            });
            return;
        }
    };
    let p = bench.p();
    let level = 0.01 / p as f64;
    let mut worst = (1.0f64, 0usize);
    for v in 0..p {
        let a: Vec<f64> = fresh.iter().map(|x| x[v]).collect();
        let b: Vec<f64> = outcomes.iter().map(|o| o.x_tilde[v]).collect();
        let pval = if bench.model.graph.domain(v).is_discrete() {
            stats::chi_square_two_sample(&a, &b)
        } else {
            stats::ks_two_sample(&a, &b)
        };
        if pval < worst.0 {
            worst = (pval, v);
        }
    }
    checks.push(Check {
        name: "marginal-tests".into(),
        passed: worst.0 >= level,
        detail: format!(
            "worst per-coordinate p-value {:.4e} at variable {} (Bonferroni level {:.2e}, n = {n})",
            worst.0,
            worst.1 + 1,
            level
        ),
    });
}

fn budget_checks(cfg: &Config, seed: u64, checks: &mut Vec<Check>) {
    let mut bench = match Workbench::prepare(cfg.clone(), seed) {
        Ok(b) => b,
        Err(e) => {
            checks.push(Check {
                name: "query-budget".into(),
                passed: false,
                detail: format!("setup failed: {e}"),
            });
            return;
        }
    };
    let xs = bench.draw_xs(3, 0);
    let p = bench.p() as f64;
    let w = bench.effective_width() as u32;
    let bound = match &bench.kernels {
        KernelSet::Exact => {
            let k = bench
                .model
                .graph
                .domains()
                .iter()
                .map(|d| d.levels().map(|l| l.len()).unwrap_or(0))
                .max()
                .unwrap_or(2) as f64;
            2.0 * p * k.powi(w as i32 + 1)
        }
        KernelSet::Mtm(params) => 2.0 * p * ((3 * params.m + 1) as f64).powi(w as i32 + 1),
        KernelSet::Rw(_) | KernelSet::Cov(_) => 2.0 * p * 2f64.powi(w as i32 + 1),
        KernelSet::Identity => 0.0,
    };
    let mut worst = 0u64;
    for (r, x) in xs.iter().enumerate() {
        match bench.run_one(x, r as u64) {
            Ok(o) => worst = worst.max(o.queries_equiv),
            Err(e) => {
                checks.push(Check {
                    name: "query-budget".into(),
                    passed: false,
                    detail: format!("run failed: {e}"),
                });
                return;
            }
        }
    }
    checks.push(Check {
        name: "query-budget".into(),
        passed: (worst as f64) <= bound,
        detail: format!("max full-query equivalents {worst} against bound {bound:.0}"),
    });
}

fn inversion_check(seed: u64, checks: &mut Vec<Check>) {
    use crate::kernels::{gamma_prefix_block, gamma_prefix_inverses};
    let mut rng = stream(seed, domain::PILOT, 99, 0);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let p = rng.gen_range(3..=10);
        let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        let sigma = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
        let s = match equicorrelated_s(&sigma) {
            Ok(s) => s,
            Err(e) => {
                checks.push(Check {
                    name: "inversion-recursion".into(),
                    passed: false,
                    detail: format!("{e}"),
                });
                return;
            }
        };
        let invs = gamma_prefix_inverses(&sigma, &s).unwrap();
        for (j, inv) in invs.iter().enumerate() {
            if let Some(direct) = gamma_prefix_block(&sigma, &s, j).try_inverse() {
                worst = worst.max((inv - direct).abs().max());
            }
        }
    }
    checks.push(Check {
        name: "inversion-recursion".into(),
        passed: worst < 1e-8,
        detail: format!("max |recursive − direct| = {worst:.3e}"),
    });
}

/// Run every applicable validation check for a configuration.
pub fn validate(config: &Config, seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    exchangeability_checks(config, seed, &mut checks);
    marginal_checks(config, seed, 10_000, &mut checks);
    budget_checks(config, seed, &mut checks);
    if config.proposal.kind == "covariance" {
        inversion_check(seed, &mut checks);
    }
    checks
}
