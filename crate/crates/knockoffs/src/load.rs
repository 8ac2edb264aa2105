//! JSON factor-graph documents.
//!
//! Top-level fields: `p`, `variables: [{id, domain}]`, `cliques: [{scope,
//! potential}]`. Discrete table potentials give `levels_order` (the axis
//! order, a permutation of the scope) and `log_values` in row-major order
//! over the axis level grids; values are read bit-exactly. Continuous
//! potentials are restricted to the named families `gaussian-pair`,
//! `quadratic-gibbs`, and `student-t-innovation`.

use serde::Deserialize;
use thiserror::Error;

use crate::factor::{Clique, Domain, FactorError, FactorGraph, Potential, VariableSpec};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: clique duplicates or is contained in clique {other} (non-maximal)")]
    NonMaximalClique { path: String, other: usize },
    #[error("{path}: variable id {id} does not exist (ids are 1..p)")]
    DanglingId { path: String, id: usize },
    #[error(transparent)]
    Factor(#[from] FactorError),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> LoadError {
    LoadError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Deserialize)]
struct DocumentJson {
    p: usize,
    variables: Vec<VariableJson>,
    cliques: Vec<CliqueJson>,
}

#[derive(Deserialize)]
struct VariableJson {
    id: usize,
    domain: DomainJson,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum DomainJson {
    Discrete { levels: Vec<f64> },
    Continuous,
}

#[derive(Deserialize)]
struct CliqueJson {
    scope: Vec<usize>,
    potential: PotentialJson,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum PotentialJson {
    Table {
        levels_order: Vec<usize>,
        log_values: Vec<f64>,
    },
    GaussianPair {
        params: GaussianPairParams,
    },
    QuadraticGibbs {
        params: QuadraticGibbsParams,
    },
    StudentTInnovation {
        params: StudentTParams,
    },
}

#[derive(Deserialize)]
struct GaussianPairParams {
    rho: f64,
    #[serde(default)]
    include_first_marginal: bool,
}

#[derive(Deserialize)]
struct QuadraticGibbsParams {
    beta0: f64,
}

#[derive(Deserialize)]
struct StudentTParams {
    rho: f64,
    nu: f64,
    #[serde(default)]
    include_first_marginal: bool,
}

/// Parse and validate a factor-graph document.
pub fn load_factor_graph(document: &str) -> Result<FactorGraph, LoadError> {
    let doc: DocumentJson = serde_json::from_str(document)?;
    let (graph, _) = build(doc)?;
    Ok(graph)
}

/// Like [`load_factor_graph`] but also returns the 1-based variable specs.
pub fn load_factor_graph_with_specs(
    document: &str,
) -> Result<(FactorGraph, Vec<VariableSpec>), LoadError> {
    let doc: DocumentJson = serde_json::from_str(document)?;
    build(doc)
}

fn build(doc: DocumentJson) -> Result<(FactorGraph, Vec<VariableSpec>), LoadError> {
    let p = doc.p;
    if p == 0 {
        return Err(schema("p", "p must be at least 1"));
    }
    if doc.variables.len() != p {
        return Err(schema(
            "variables",
            format!("expected {} entries, got {}", p, doc.variables.len()),
        ));
    }
    let mut specs: Vec<Option<VariableSpec>> = (0..p).map(|_| None).collect();
    for (i, var) in doc.variables.iter().enumerate() {
        let path = format!("variables[{i}].id");
        if var.id == 0 || var.id > p {
            return Err(LoadError::DanglingId { path, id: var.id });
        }
        let slot = &mut specs[var.id - 1];
        if slot.is_some() {
            return Err(schema(path, format!("duplicate id {}", var.id)));
        }
        let domain = match &var.domain {
            DomainJson::Discrete { levels } => {
                if levels.is_empty() || levels.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(schema(
                        format!("variables[{i}].domain.levels"),
                        "levels must be non-empty and strictly increasing",
                    ));
                }
                Domain::Discrete(levels.clone())
            }
            DomainJson::Continuous => Domain::Continuous,
        };
        *slot = Some(VariableSpec {
            id: var.id,
            domain,
        });
    }
    let specs: Vec<VariableSpec> = specs.into_iter().map(|s| s.unwrap()).collect();

    let mut cliques = Vec::with_capacity(doc.cliques.len());
    let mut scopes_sorted: Vec<Vec<usize>> = Vec::with_capacity(doc.cliques.len());
    for (ci, cj) in doc.cliques.iter().enumerate() {
        let path = format!("cliques[{ci}]");
        if cj.scope.is_empty() {
            return Err(schema(format!("{path}.scope"), "scope is empty"));
        }
        for &id in &cj.scope {
            if id == 0 || id > p {
                return Err(LoadError::DanglingId {
                    path: format!("{path}.scope"),
                    id,
                });
            }
        }
        let mut sorted: Vec<usize> = cj.scope.iter().map(|&id| id - 1).collect();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != cj.scope.len() {
            return Err(schema(format!("{path}.scope"), "repeated variable in scope"));
        }
        for (oi, other) in scopes_sorted.iter().enumerate() {
            let a_in_b = sorted.iter().all(|v| other.binary_search(v).is_ok());
            let b_in_a = other.iter().all(|v| sorted.binary_search(v).is_ok());
            if a_in_b || b_in_a {
                return Err(LoadError::NonMaximalClique {
                    path: format!("{path}.scope"),
                    other: oi,
                });
            }
        }
        let (scope0, potential) = match &cj.potential {
            PotentialJson::Table {
                levels_order,
                log_values,
            } => {
                let mut order_sorted: Vec<usize> = levels_order.iter().map(|&id| id - 1).collect();
                order_sorted.sort_unstable();
                if levels_order.iter().any(|&id| id == 0 || id > p) || order_sorted != sorted {
                    return Err(schema(
                        format!("{path}.potential.levels_order"),
                        "levels_order must be a permutation of the scope",
                    ));
                }
                let axes: Vec<usize> = levels_order.iter().map(|&id| id - 1).collect();
                let mut axis_levels = Vec::with_capacity(axes.len());
                for &v in &axes {
                    match &specs[v].domain {
                        Domain::Discrete(levels) => axis_levels.push(levels.clone()),
                        Domain::Continuous => {
                            return Err(schema(
                                format!("{path}.potential"),
                                format!("table spans continuous variable {}", v + 1),
                            ))
                        }
                    }
                }
                let expected: usize = axis_levels.iter().map(|l| l.len()).product();
                if log_values.len() != expected {
                    return Err(schema(
                        format!("{path}.potential.log_values"),
                        format!("expected {expected} entries, got {}", log_values.len()),
                    ));
                }
                (
                    axes,
                    Potential::Table {
                        axis_levels,
                        log_values: log_values.clone(),
                    },
                )
            }
            PotentialJson::GaussianPair { params } => (
                cj.scope.iter().map(|&id| id - 1).collect(),
                Potential::GaussianPair {
                    rho: params.rho,
                    include_first_marginal: params.include_first_marginal,
                },
            ),
            PotentialJson::QuadraticGibbs { params } => (
                cj.scope.iter().map(|&id| id - 1).collect(),
                Potential::QuadraticGibbs {
                    beta0: params.beta0,
                },
            ),
            PotentialJson::StudentTInnovation { params } => (
                cj.scope.iter().map(|&id| id - 1).collect(),
                Potential::StudentTPair {
                    rho: params.rho,
                    nu: params.nu,
                    include_first_marginal: params.include_first_marginal,
                },
            ),
        };
        cliques.push(Clique {
            scope: scope0,
            potential,
        });
        scopes_sorted.push(sorted);
    }

    let domains = specs.iter().map(|s| s.domain.clone()).collect();
    let graph = FactorGraph::new(domains, cliques)?;
    Ok((graph, specs))
}
