//! JSON run configuration shared by the command-line tool and the
//! benchmark harness.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerCfg,
    #[serde(default)]
    pub proposal: ProposalCfg,
    #[serde(default)]
    pub forward: ForwardCfg,
    #[serde(default)]
    pub bench: Option<BenchCfg>,
}

/// Model selector. `kind` is one of `gaussian-chain`, `discrete-chain`,
/// `t-chain`, `mixture-chain`, `ising`, `gibbs-grid`, or
/// `custom-file:<path>`; the other fields apply per family.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ModelConfig {
    pub kind: String,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub d1: Option<usize>,
    #[serde(default)]
    pub d2: Option<usize>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub beta0: Option<f64>,
    #[serde(default)]
    pub alpha0: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct SamplerCfg {
    /// `metro` or `discrete-exact`.
    #[serde(default = "default_sampler_kind")]
    pub kind: String,
    /// Ribbon width for sliced grid runs; absent means no slicing.
    #[serde(default)]
    pub ribbon_w: Option<usize>,
}

fn default_sampler_kind() -> String {
    "metro".into()
}

impl Default for SamplerCfg {
    fn default() -> Self {
        Self {
            kind: default_sampler_kind(),
            ribbon_w: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ProposalCfg {
    /// `mtm`, `covariance`, or `gaussian-rw`.
    #[serde(default = "default_proposal_kind")]
    pub kind: String,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Multiplier of the `sqrt(1/(Sigma^-1)_jj)` step-size unit.
    #[serde(default = "default_t_scale")]
    pub t_scale: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// `equicorrelated` or `file:<path>` (JSON array of `s_j`).
    #[serde(default = "default_s_source")]
    pub s_source: String,
}

fn default_proposal_kind() -> String {
    "mtm".into()
}
fn default_m() -> usize {
    crate::kernels::DEFAULT_M
}
fn default_t_scale() -> f64 {
    crate::kernels::DEFAULT_T_SCALE
}
fn default_gamma() -> f64 {
    crate::kernels::DEFAULT_GAMMA
}
fn default_s_source() -> String {
    "equicorrelated".into()
}

impl Default for ProposalCfg {
    fn default() -> Self {
        Self {
            kind: default_proposal_kind(),
            m: default_m(),
            t_scale: default_t_scale(),
            gamma: default_gamma(),
            s_source: default_s_source(),
        }
    }
}

/// Sweep/thinning controls of the grid forward samplers and the pilot
/// covariance sample size for models without a closed-form `Σ`.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ForwardCfg {
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_pilot_n")]
    pub pilot_n: usize,
}

fn default_burn_in() -> usize {
    crate::zoo::DEFAULT_BURN_IN
}
fn default_thin() -> usize {
    crate::zoo::DEFAULT_THIN
}
fn default_pilot_n() -> usize {
    10_000
}

impl Default for ForwardCfg {
    fn default() -> Self {
        Self {
            burn_in: default_burn_in(),
            thin: default_thin(),
            pilot_n: default_pilot_n(),
        }
    }
}

/// Grid of sweep points; empty axes stay at the proposal's single value.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
pub struct BenchCfg {
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub t_scale: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    /// Ribbon widths; `0` means unsliced.
    #[serde(default)]
    pub w: Vec<usize>,
    /// Values of the model's dependence axis (`rho`, `beta0`, or `alpha`
    /// depending on the family).
    #[serde(default)]
    pub model_param: Vec<f64>,
    /// Share the forward draws across grid points with the same model
    /// parameter to sharpen comparisons.
    #[serde(default = "default_crn")]
    pub common_random_numbers: bool,
    #[serde(default)]
    pub replicates: Option<usize>,
}

fn default_crn() -> bool {
    true
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
