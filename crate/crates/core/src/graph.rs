//! Layered factor graphs.
//!
//! Layer 0 holds observations and layers increase upward. Inference state
//! lives in the engine; a graph only changes when observations are attached.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::expfam::{Family, Message};
use crate::factors::FactorKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("factor {factor}: {reason}")]
    Signature { factor: String, reason: String },
    #[error("factor {factor} spans layers {layers:?}")]
    Layering { factor: String, layers: Vec<usize> },
    #[error("missing observation for {0}")]
    MissingObservation(String),
    #[error("variable {0} is not observable")]
    NotObservable(String),
    #[error("observation for {id} has family {got}, expected {expected}")]
    ObservationFamily {
        id: String,
        got: Family,
        expected: Family,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Variable {
    pub id: String,
    pub family: Family,
    pub layer: usize,
    pub global: bool,
    /// Declared as data; must be conditioned before inference.
    pub observable: bool,
    pub observed: Option<Message>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Factor {
    pub id: String,
    pub kind: FactorKind,
    /// Variable indices, in the order of `kind.roles()`.
    pub vars: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorGraph {
    pub variables: Vec<Variable>,
    pub factors: Vec<Factor>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    /// For each variable, the (factor, edge) pairs touching it.
    #[serde(skip)]
    neighbours: Vec<Vec<(usize, usize)>>,
}

#[derive(Default)]
pub struct GraphBuilder {
    variables: Vec<Variable>,
    factors: Vec<Factor>,
    index: HashMap<String, usize>,
    factor_ids: HashMap<String, usize>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variable(
        &mut self,
        id: impl Into<String>,
        family: Family,
        layer: usize,
        global: bool,
    ) -> Result<usize, GraphError> {
        self.push_variable(id.into(), family, layer, global, false)
    }

    pub fn observable(
        &mut self,
        id: impl Into<String>,
        family: Family,
    ) -> Result<usize, GraphError> {
        self.push_variable(id.into(), family, 0, false, true)
    }

    fn push_variable(
        &mut self,
        id: String,
        family: Family,
        layer: usize,
        global: bool,
        observable: bool,
    ) -> Result<usize, GraphError> {
        if self.index.contains_key(&id) {
            return Err(GraphError::DuplicateId(id));
        }
        let i = self.variables.len();
        self.index.insert(id.clone(), i);
        self.variables.push(Variable {
            id,
            family,
            layer,
            global,
            observable,
            observed: None,
        });
        Ok(i)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Adds a factor over variables named by id.
    pub fn factor(
        &mut self,
        id: impl Into<String>,
        kind: FactorKind,
        vars: &[&str],
    ) -> Result<usize, GraphError> {
        let idx = vars
            .iter()
            .map(|v| {
                self.index
                    .get(*v)
                    .copied()
                    .ok_or_else(|| GraphError::UnknownVariable(v.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.factor_by_index(id, kind, idx)
    }

    pub fn factor_by_index(
        &mut self,
        id: impl Into<String>,
        kind: FactorKind,
        vars: Vec<usize>,
    ) -> Result<usize, GraphError> {
        let id = id.into();
        if self.factor_ids.contains_key(&id) {
            return Err(GraphError::DuplicateId(id));
        }
        if let Some(&bad) = vars.iter().find(|&&v| v >= self.variables.len()) {
            return Err(GraphError::UnknownVariable(format!("#{bad}")));
        }
        let families: Vec<Family> = vars.iter().map(|&v| self.variables[v].family).collect();
        kind.check_families(&families)
            .map_err(|reason| GraphError::Signature {
                factor: id.clone(),
                reason,
            })?;
        let local: Vec<usize> = vars
            .iter()
            .filter(|&&v| !self.variables[v].global)
            .map(|&v| self.variables[v].layer)
            .collect();
        let all: Vec<usize> = vars.iter().map(|&v| self.variables[v].layer).collect();
        let lo = local.iter().min().copied().unwrap_or(0);
        let hi = local.iter().max().copied().unwrap_or(0);
        let global_below = vars.iter().any(|&v| {
            self.variables[v].global && !local.is_empty() && self.variables[v].layer < lo
        });
        if hi > lo + 1 || global_below {
            return Err(GraphError::Layering {
                factor: id,
                layers: all,
            });
        }
        let i = self.factors.len();
        self.factor_ids.insert(id.clone(), i);
        self.factors.push(Factor { id, kind, vars });
        Ok(i)
    }

    pub fn build(self) -> FactorGraph {
        let mut neighbours = vec![Vec::new(); self.variables.len()];
        for (f, factor) in self.factors.iter().enumerate() {
            for (e, &v) in factor.vars.iter().enumerate() {
                neighbours[v].push((f, e));
            }
        }
        FactorGraph {
            variables: self.variables,
            factors: self.factors,
            index: self.index,
            neighbours,
        }
    }
}

impl FactorGraph {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn variable(&self, id: &str) -> Option<&Variable> {
        self.index_of(id).map(|i| &self.variables[i])
    }

    pub fn neighbours(&self, var: usize) -> &[(usize, usize)] {
        &self.neighbours[var]
    }

    pub fn max_layer(&self) -> usize {
        self.variables.iter().map(|v| v.layer).max().unwrap_or(0)
    }

    /// Variable ids per layer, in construction order.
    pub fn layers(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.max_layer() + 1];
        for v in &self.variables {
            out[v.layer].push(v.id.as_str());
        }
        out
    }

    /// Lowest layer touched by a factor.
    pub fn base_layer(&self, factor: usize) -> usize {
        self.factors[factor]
            .vars
            .iter()
            .map(|&v| self.variables[v].layer)
            .min()
            .unwrap_or(0)
    }

    /// Indices of variables whose id has the given base name, in natural order.
    pub fn variables_named(&self, name: &str) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.variables.len())
            .filter(|&i| parse_id(&self.variables[i].id).0 == name)
            .collect();
        out.sort_by(|&a, &b| compare_ids(&self.variables[a].id, &self.variables[b].id));
        out
    }

    /// Attaches observations. Every observable variable must be present.
    pub fn condition(&self, data: &BTreeMap<String, Message>) -> Result<FactorGraph, GraphError> {
        let mut g = self.clone();
        for (id, value) in data {
            let i = g
                .index_of(id)
                .ok_or_else(|| GraphError::UnknownVariable(id.clone()))?;
            let var = &mut g.variables[i];
            if !var.observable {
                return Err(GraphError::NotObservable(id.clone()));
            }
            if value.family() != var.family {
                return Err(GraphError::ObservationFamily {
                    id: id.clone(),
                    got: value.family(),
                    expected: var.family,
                });
            }
            var.observed = Some(value.clone());
        }
        if let Some(v) = g
            .variables
            .iter()
            .find(|v| v.observable && v.observed.is_none())
        {
            return Err(GraphError::MissingObservation(v.id.clone()));
        }
        Ok(g)
    }

    /// Re-checks signatures and layering; graphs from [`GraphBuilder`] always pass.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut b = GraphBuilder::new();
        for v in &self.variables {
            b.push_variable(v.id.clone(), v.family, v.layer, v.global, v.observable)?;
        }
        for f in &self.factors {
            b.factor_by_index(f.id.clone(), f.kind.clone(), f.vars.clone())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }
}

/// Splits `"r[3][5]"` into `("r", [3, 5])`. Ids without brackets have no indices.
pub fn parse_id(id: &str) -> (&str, Vec<usize>) {
    let Some(open) = id.find('[') else {
        return (id, Vec::new());
    };
    let name = &id[..open];
    let indices = id[open..]
        .split(|c| c == '[' || c == ']')
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect();
    (name, indices)
}

/// Natural order on structured ids: by name, then numerically by index.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    parse_id(a).cmp(&parse_id(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::FactorKind;

    #[test]
    fn parses_structured_ids() {
        assert_eq!(parse_id("r[3][5]"), ("r", vec![3, 5]));
        assert_eq!(parse_id("c"), ("c", vec![]));
        assert_eq!(compare_ids("x[2]", "x[10]"), Ordering::Less);
    }

    #[test]
    fn rejects_dangling_and_mismatched_edges() {
        let mut b = GraphBuilder::new();
        b.variable("a", Family::Gaussian, 1, false).unwrap();
        b.variable("s", Family::Bernoulli, 1, false).unwrap();
        assert!(matches!(
            b.factor("f", FactorKind::Sum, &["a", "nope", "a"]),
            Err(GraphError::UnknownVariable(_))
        ));
        assert!(matches!(
            b.factor("g", FactorKind::SoftSymmetry { variance: 1.0 }, &["a", "s"]),
            Err(GraphError::Signature { .. })
        ));
    }

    #[test]
    fn rejects_layer_skips() {
        let mut b = GraphBuilder::new();
        b.variable("a", Family::Gaussian, 1, false).unwrap();
        b.variable("b", Family::Gaussian, 3, false).unwrap();
        assert!(matches!(
            b.factor("f", FactorKind::SoftSymmetry { variance: 1.0 }, &["a", "b"]),
            Err(GraphError::Layering { .. })
        ));
    }

    #[test]
    fn conditioning() {
        let mut b = GraphBuilder::new();
        b.observable("x", Family::Gaussian).unwrap();
        b.variable("z", Family::Gaussian, 1, false).unwrap();
        b.factor(
            "n",
            FactorKind::GaussianNoise { variance: 1.0 },
            &["x", "z"],
        )
        .unwrap();
        let g = b.build();
        assert!(matches!(
            g.condition(&BTreeMap::new()),
            Err(GraphError::MissingObservation(_))
        ));
        let mut data = BTreeMap::new();
        data.insert("x".to_string(), Message::scalar_point(1.0));
        let c = g.condition(&data).unwrap();
        assert_eq!(c.variables[0].observed, Some(Message::scalar_point(1.0)));
        data.insert("z".to_string(), Message::scalar_point(1.0));
        assert!(matches!(
            g.condition(&data),
            Err(GraphError::NotObservable(_))
        ));
    }
}
