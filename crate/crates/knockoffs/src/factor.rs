//! Factor graphs over an unnormalized density `Φ(x) = ∏_c φ_c(x_c)`.
//!
//! Everything downstream (ordering, sampling, benchmarking) sees the model
//! only through [`GraphView::log_phi`] and friends, which also maintain the
//! query accounting that the complexity assertions are stated in. `Φ` is
//! never normalized: all evaluation is in log space and partition functions
//! are never computed.

use std::collections::BTreeSet;

use thiserror::Error;

/// Support of a single variable.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    /// Ordered finite support; levels are strictly increasing reals.
    Discrete(Vec<f64>),
    /// The full real line.
    Continuous,
}

impl Domain {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::Discrete(_))
    }

    pub fn levels(&self) -> Option<&[f64]> {
        match self {
            Domain::Discrete(levels) => Some(levels),
            Domain::Continuous => None,
        }
    }

    /// Exact position of `value` among the levels, if it is one of them.
    pub fn level_index(&self, value: f64) -> Option<usize> {
        match self {
            Domain::Discrete(levels) => levels
                .binary_search_by(|l| l.partial_cmp(&value).expect("levels are not NaN"))
                .ok(),
            Domain::Continuous => None,
        }
    }

    /// Whether `value` lies in the support.
    pub fn contains(&self, value: f64) -> bool {
        match self {
            Domain::Discrete(_) => self.level_index(value).is_some(),
            Domain::Continuous => value.is_finite(),
        }
    }

    /// Nearest level to `value`; midpoint ties go to the smaller level.
    pub fn round_to_level(&self, value: f64) -> Option<f64> {
        let levels = self.levels()?;
        let mut best = levels[0];
        let mut best_d = (value - best).abs();
        for &l in &levels[1..] {
            let d = (value - l).abs();
            if d < best_d {
                best = l;
                best_d = d;
            }
        }
        Some(best)
    }
}

/// Variable description as seen by loaders and reports. Ids are 1-based in
/// the external schema; internally variables are indexed `0..p`.
#[derive(Clone, Debug)]
pub struct VariableSpec {
    pub id: usize,
    pub domain: Domain,
}

/// Log-potential of one clique. Table potentials are stored bit-exactly in
/// row-major order over the scope's level grid; the named parametric
/// families cover the continuous models the file format admits.
#[derive(Clone, Debug)]
pub enum Potential {
    /// `log_values` in row-major order over the per-axis levels.
    Table {
        axis_levels: Vec<Vec<f64>>,
        log_values: Vec<f64>,
    },
    /// Pairwise Gaussian autoregression term: `x_b | x_a ~ N(rho·x_a, 1−rho²)`.
    /// With `include_first_marginal`, adds the standard normal term for `x_a`.
    GaussianPair { rho: f64, include_first_marginal: bool },
    /// Pairwise t-innovation term: `x_b = rho·x_a + c·Z`, `Z ~ t_nu`,
    /// `c = sqrt((1−rho²)(nu−2)/nu)` so innovations have unit variance.
    StudentTPair {
        rho: f64,
        nu: f64,
        include_first_marginal: bool,
    },
    /// Pairwise term with the standardized half-normal/negative-exponential
    /// mixture innovation.
    MixturePair { rho: f64, include_first_marginal: bool },
    /// `−beta0·(x_a − x_b)²` on an edge.
    QuadraticGibbs { beta0: f64 },
    /// An inner potential with some axes frozen to fixed values. Produced by
    /// the divide-and-conquer restriction; `fixed[i]` is `Some(v)` when the
    /// i-th original axis is pinned.
    Restricted {
        inner: Box<Potential>,
        fixed: Vec<Option<f64>>,
    },
    /// Constant log-potential (used for isolated variables after restriction).
    Uniform,
}

const LN_2PI: f64 = 1.8378770664093453;

fn std_normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * LN_2PI
}

fn student_t_logpdf(z: f64, nu: f64) -> f64 {
    // ln Γ((ν+1)/2) − ln Γ(ν/2) − ½ln(νπ) − (ν+1)/2·ln(1+z²/ν)
    statrs::function::gamma::ln_gamma((nu + 1.0) / 2.0)
        - statrs::function::gamma::ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * (nu + 1.0) * (1.0 + z * z / nu).ln()
}

/// Mean of the unstandardized mixture innovation `I·|Y_G| − (1−I)·Y_E`,
/// with `Y_G ~ N(0,1)`, `Y_E ~ Exp(1)`, `I ~ Bern(1/2)`:
/// `E = ½·√(2/π) − ½`.
pub fn mixture_innovation_mean() -> f64 {
    0.5 * (2.0 / std::f64::consts::PI).sqrt() - 0.5
}

/// Standard deviation of the unstandardized mixture innovation. Second
/// moment is `½·E[Y_G²] + ½·E[Y_E²] = ½ + 1 = 3/2`.
pub fn mixture_innovation_sd() -> f64 {
    let mu = mixture_innovation_mean();
    (1.5 - mu * mu).sqrt()
}

/// Log density of the standardized mixture innovation at `z`.
pub fn mixture_logpdf(z: f64) -> f64 {
    let mu = mixture_innovation_mean();
    let sigma = mixture_innovation_sd();
    let w = mu + sigma * z;
    let base = if w >= 0.0 {
        // ½·2φ(w) = φ(w)
        std_normal_logpdf(w)
    } else {
        // ½·e^w
        w - std::f64::consts::LN_2
    };
    base + sigma.ln()
}

impl Potential {
    fn pair_terms(
        rho: f64,
        include_first_marginal: bool,
        xa: f64,
        xb: f64,
        innovation: impl Fn(f64) -> f64,
        marginal: impl Fn(f64) -> f64,
    ) -> f64 {
        let c = (1.0 - rho * rho).sqrt();
        let mut v = innovation((xb - rho * xa) / c) - c.ln();
        if include_first_marginal {
            v += marginal(xa);
        }
        v
    }

    /// Log value at an assignment of the clique's scope, in axis order.
    /// Off-grid discrete values yield `−∞` (zero mass), not an error.
    pub fn log_value(&self, values: &[f64]) -> f64 {
        match self {
            Potential::Table {
                axis_levels,
                log_values,
            } => {
                let mut idx = 0usize;
                for (levels, &v) in axis_levels.iter().zip(values) {
                    match levels.binary_search_by(|l| l.partial_cmp(&v).expect("NaN level")) {
                        Ok(i) => idx = idx * levels.len() + i,
                        Err(_) => return f64::NEG_INFINITY,
                    }
                }
                log_values[idx]
            }
            Potential::GaussianPair {
                rho,
                include_first_marginal,
            } => Self::pair_terms(
                *rho,
                *include_first_marginal,
                values[0],
                values[1],
                std_normal_logpdf,
                std_normal_logpdf,
            ),
            Potential::StudentTPair {
                rho,
                nu,
                include_first_marginal,
            } => {
                let s = ((nu - 2.0) / nu).sqrt();
                Self::pair_terms(
                    *rho,
                    *include_first_marginal,
                    values[0],
                    values[1],
                    |z| student_t_logpdf(z / s, *nu) - s.ln(),
                    |z| student_t_logpdf(z / s, *nu) - s.ln(),
                )
            }
            Potential::MixturePair {
                rho,
                include_first_marginal,
            } => Self::pair_terms(
                *rho,
                *include_first_marginal,
                values[0],
                values[1],
                mixture_logpdf,
                mixture_logpdf,
            ),
            Potential::QuadraticGibbs { beta0 } => {
                let d = values[0] - values[1];
                -beta0 * d * d
            }
            Potential::Restricted { inner, fixed } => {
                let mut full = Vec::with_capacity(fixed.len());
                let mut it = values.iter();
                for f in fixed {
                    match f {
                        Some(v) => full.push(*v),
                        None => full.push(*it.next().expect("arity mismatch")),
                    }
                }
                inner.log_value(&full)
            }
            Potential::Uniform => 0.0,
        }
    }
}

/// One clique of the factorization: the variables it reads (axis order
/// matters for table potentials) and its log-potential.
#[derive(Clone, Debug)]
pub struct Clique {
    /// Variable indices (0-based), in the potential's axis order.
    pub scope: Vec<usize>,
    pub potential: Potential,
}

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("assignment has length {got}, expected {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("value {value} for variable {var} is not a level of its discrete domain")]
    DomainViolation { var: usize, value: f64 },
    #[error("variable {var} appears in no clique")]
    DanglingVariable { var: usize },
    #[error("clique {clique} references variable {var} outside 0..{p}")]
    BadScope { clique: usize, var: usize, p: usize },
    #[error("clique {clique} repeats variable {var} in its scope")]
    RepeatedVariable { clique: usize, var: usize },
    #[error("discrete domain of variable {var} is empty or not strictly increasing")]
    BadLevels { var: usize },
    #[error("table of clique {clique} has {got} entries, expected {expected}")]
    TableSize {
        clique: usize,
        expected: usize,
        got: usize,
    },
    #[error("table potential of clique {clique} spans continuous variable {var}")]
    TableOnContinuous { clique: usize, var: usize },
    #[error("pair potential of clique {clique} needs a 2-variable scope")]
    PairArity { clique: usize },
    #[error("|rho| must be < 1, got {rho}")]
    BadRho { rho: f64 },
    #[error("student-t needs nu > 2, got {nu}")]
    BadNu { nu: f64 },
}

/// Counts of unnormalized-density evaluations. `full` counts whole-vector
/// evaluations; `restricted` counts single-coordinate ratio shortcuts at two
/// full-query equivalents each, kept in a separate tally so the complexity
/// assertions stay conservative.
#[derive(Clone, Debug, Default)]
pub struct QueryCounter {
    pub full: u64,
    pub restricted: u64,
    pub per_step: Vec<u64>,
    active_step: Option<usize>,
}

impl QueryCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Full queries plus restricted-tally equivalents.
    pub fn full_query_equivalents(&self) -> u64 {
        self.full + self.restricted
    }

    pub fn set_active_step(&mut self, step: Option<usize>) {
        self.active_step = step;
    }

    fn bump_full(&mut self) {
        self.full += 1;
        if let Some(s) = self.active_step {
            if self.per_step.len() <= s {
                self.per_step.resize(s + 1, 0);
            }
            self.per_step[s] += 1;
        }
    }

    fn bump_restricted(&mut self) {
        self.restricted += 2;
        if let Some(s) = self.active_step {
            if self.per_step.len() <= s {
                self.per_step.resize(s + 1, 0);
            }
            self.per_step[s] += 2;
        }
    }
}

/// An unnormalized density factoring over a graph: variables with domains,
/// clique log-potentials, and the derived undirected graph (the union of
/// within-clique pairs).
#[derive(Clone, Debug)]
pub struct FactorGraph {
    domains: Vec<Domain>,
    cliques: Vec<Clique>,
    var_cliques: Vec<Vec<usize>>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl FactorGraph {
    pub fn new(domains: Vec<Domain>, cliques: Vec<Clique>) -> Result<Self, FactorError> {
        let p = domains.len();
        for (v, d) in domains.iter().enumerate() {
            if let Domain::Discrete(levels) = d {
                if levels.is_empty() || levels.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(FactorError::BadLevels { var: v });
                }
            }
        }
        let mut var_cliques = vec![Vec::new(); p];
        let mut adjacency = vec![BTreeSet::new(); p];
        for (ci, c) in cliques.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &v in &c.scope {
                if v >= p {
                    return Err(FactorError::BadScope {
                        clique: ci,
                        var: v,
                        p,
                    });
                }
                if !seen.insert(v) {
                    return Err(FactorError::RepeatedVariable { clique: ci, var: v });
                }
            }
            match &c.potential {
                Potential::Table {
                    axis_levels,
                    log_values,
                } => {
                    if axis_levels.len() != c.scope.len() {
                        return Err(FactorError::TableSize {
                            clique: ci,
                            expected: c.scope.len(),
                            got: axis_levels.len(),
                        });
                    }
                    for (&v, levels) in c.scope.iter().zip(axis_levels) {
                        match &domains[v] {
                            Domain::Discrete(dl) => {
                                if dl != levels {
                                    return Err(FactorError::TableOnContinuous {
                                        clique: ci,
                                        var: v,
                                    });
                                }
                            }
                            Domain::Continuous => {
                                return Err(FactorError::TableOnContinuous {
                                    clique: ci,
                                    var: v,
                                })
                            }
                        }
                    }
                    let expected: usize = axis_levels.iter().map(|l| l.len()).product();
                    if log_values.len() != expected {
                        return Err(FactorError::TableSize {
                            clique: ci,
                            expected,
                            got: log_values.len(),
                        });
                    }
                }
                Potential::GaussianPair { rho, .. } | Potential::MixturePair { rho, .. } => {
                    if c.scope.len() != 2 {
                        return Err(FactorError::PairArity { clique: ci });
                    }
                    if !(rho.abs() < 1.0) {
                        return Err(FactorError::BadRho { rho: *rho });
                    }
                }
                Potential::StudentTPair { rho, nu, .. } => {
                    if c.scope.len() != 2 {
                        return Err(FactorError::PairArity { clique: ci });
                    }
                    if !(rho.abs() < 1.0) {
                        return Err(FactorError::BadRho { rho: *rho });
                    }
                    if !(*nu > 2.0) {
                        return Err(FactorError::BadNu { nu: *nu });
                    }
                }
                Potential::QuadraticGibbs { .. } => {
                    if c.scope.len() != 2 {
                        return Err(FactorError::PairArity { clique: ci });
                    }
                }
                Potential::Restricted { .. } | Potential::Uniform => {}
            }
            for &v in &c.scope {
                var_cliques[v].push(ci);
            }
            for (i, &a) in c.scope.iter().enumerate() {
                for &b in &c.scope[i + 1..] {
                    adjacency[a].insert(b);
                    adjacency[b].insert(a);
                }
            }
        }
        for (v, cl) in var_cliques.iter().enumerate() {
            if cl.is_empty() {
                return Err(FactorError::DanglingVariable { var: v });
            }
        }
        Ok(Self {
            domains,
            cliques,
            var_cliques,
            adjacency,
        })
    }

    pub fn p(&self) -> usize {
        self.domains.len()
    }

    pub fn domain(&self, v: usize) -> &Domain {
        &self.domains[v]
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn cliques(&self) -> &[Clique] {
        &self.cliques
    }

    /// Cliques whose scope contains `v`.
    pub fn cliques_of(&self, v: usize) -> &[usize] {
        &self.var_cliques[v]
    }

    pub fn adjacency(&self) -> &[BTreeSet<usize>] {
        &self.adjacency
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adjacency[v]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nb) in self.adjacency.iter().enumerate() {
            for &b in nb.iter().filter(|&&b| b > a) {
                out.push((a, b));
            }
        }
        out
    }

    pub fn is_fully_discrete(&self) -> bool {
        self.domains.iter().all(Domain::is_discrete)
    }

    /// Per-run evaluation handle. The graph itself is immutable and can be
    /// shared across runs; each run owns its counter.
    pub fn view(&self) -> GraphView<'_> {
        GraphView {
            graph: self,
            counter: QueryCounter::new(),
            base: None,
        }
    }

    fn clique_log_value(&self, ci: usize, x: impl Fn(usize) -> f64) -> f64 {
        let c = &self.cliques[ci];
        let values: Vec<f64> = c.scope.iter().map(|&v| x(v)).collect();
        c.potential.log_value(&values)
    }

    fn check_assignment(&self, x: &[f64]) -> Result<(), FactorError> {
        if x.len() != self.p() {
            return Err(FactorError::AssignmentLength {
                expected: self.p(),
                got: x.len(),
            });
        }
        for (v, (&value, d)) in x.iter().zip(&self.domains).enumerate() {
            if !d.contains(value) {
                return Err(FactorError::DomainViolation { var: v, value });
            }
        }
        Ok(())
    }
}

/// A full assignment given as a base vector plus a few overridden
/// coordinates; the counterfactual configurations the samplers evaluate
/// differ from the observed vector in at most a node's worth of entries.
#[derive(Clone, Copy, Debug)]
pub struct Overlay<'a> {
    pub base: &'a [f64],
    pub mods: &'a [(usize, f64)],
}

impl<'a> Overlay<'a> {
    pub fn new(base: &'a [f64], mods: &'a [(usize, f64)]) -> Self {
        Self { base, mods }
    }

    pub fn get(&self, v: usize) -> f64 {
        for &(i, value) in self.mods {
            if i == v {
                return value;
            }
        }
        self.base[v]
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = self.base.to_vec();
        for &(i, value) in self.mods {
            out[i] = value;
        }
        out
    }
}

struct BaseCache {
    x: Vec<f64>,
    clique_values: Vec<f64>,
    total: f64,
}

/// The only window onto `Φ` during a run: evaluates log-potentials and
/// accounts every evaluation.
pub struct GraphView<'a> {
    pub graph: &'a FactorGraph,
    pub counter: QueryCounter,
    base: Option<BaseCache>,
}

impl<'a> GraphView<'a> {
    /// `log Φ(x) = Σ_c log φ_c(x_c)`. Errors on out-of-domain input.
    pub fn log_phi(&mut self, x: &[f64]) -> Result<f64, FactorError> {
        self.graph.check_assignment(x)?;
        Ok(self.log_phi_lenient(x))
    }

    /// Like [`Self::log_phi`] but treats off-support points as zero mass
    /// (`−∞`) instead of erroring; samplers use this for candidate values
    /// that may fall outside a discrete support.
    pub fn log_phi_lenient(&mut self, x: &[f64]) -> f64 {
        self.counter.bump_full();
        let mut total = 0.0;
        for ci in 0..self.graph.cliques.len() {
            let v = self.graph.clique_log_value(ci, |i| x[i]);
            if v == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += v;
        }
        total
    }

    /// `log Φ(x[j←a]) − log Φ(x[j←b])`, touching only cliques containing
    /// `j`. Tallied as two restricted queries.
    pub fn log_phi_ratio(
        &mut self,
        x: &[f64],
        j: usize,
        a: f64,
        b: f64,
    ) -> Result<f64, FactorError> {
        self.graph.check_assignment(x)?;
        for value in [a, b] {
            if !self.graph.domain(j).contains(value) {
                return Err(FactorError::DomainViolation { var: j, value });
            }
        }
        self.counter.bump_restricted();
        let mut num = 0.0;
        let mut den = 0.0;
        for &ci in self.graph.cliques_of(j) {
            num += self.graph.clique_log_value(ci, |i| if i == j { a } else { x[i] });
            den += self.graph.clique_log_value(ci, |i| if i == j { b } else { x[i] });
        }
        Ok(num - den)
    }

    /// Pin a base assignment so that subsequent [`Self::log_phi_mods`] calls
    /// evaluate configurations near it by touching only the affected
    /// cliques. The base evaluation itself counts as one full query.
    pub fn set_base(&mut self, x: &[f64]) -> Result<f64, FactorError> {
        self.graph.check_assignment(x)?;
        self.counter.bump_full();
        let mut clique_values = Vec::with_capacity(self.graph.cliques.len());
        let mut total = 0.0;
        for ci in 0..self.graph.cliques.len() {
            let v = self.graph.clique_log_value(ci, |i| x[i]);
            clique_values.push(v);
            total += v;
        }
        self.base = Some(BaseCache {
            x: x.to_vec(),
            clique_values,
            total,
        });
        Ok(total)
    }

    /// `log Φ` at the base assignment with `mods` overriding some
    /// coordinates. One full query; off-support values give `−∞`.
    pub fn log_phi_mods(&mut self, mods: &[(usize, f64)]) -> f64 {
        self.counter.bump_full();
        let base = self.base.as_ref().expect("set_base before log_phi_mods");
        if base.total == f64::NEG_INFINITY {
            // Degenerate base; fall back to a direct evaluation.
            let mut x = base.x.clone();
            for &(v, val) in mods {
                x[v] = val;
            }
            self.counter.full -= 1; // bump once, not twice
            return self.log_phi_lenient(&x);
        }
        let lookup = |i: usize| -> f64 {
            for &(v, val) in mods {
                if v == i {
                    return val;
                }
            }
            base.x[i]
        };
        let mut touched = BTreeSet::new();
        for &(v, _) in mods {
            for &ci in self.graph.cliques_of(v) {
                touched.insert(ci);
            }
        }
        let mut total = base.total;
        for ci in touched {
            let fresh = self.graph.clique_log_value(ci, &lookup);
            if fresh == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += fresh - base.clique_values[ci];
        }
        total
    }

    pub fn base_assignment(&self) -> Option<&[f64]> {
        self.base.as_ref().map(|b| b.x.as_slice())
    }
}
