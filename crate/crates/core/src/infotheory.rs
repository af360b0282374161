//! Discrete joint distributions over named variables, with entropies,
//! mutual information (in bits), QBER and total-variation distance.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InfoError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` appears twice")]
    DuplicateVariable(String),
    #[error("value `{value}` is not in the domain of `{variable}`")]
    UnknownValue { variable: String, value: String },
    #[error("variable sets overlap on `{0}`")]
    Overlap(String),
    #[error("distributions have different variables or domains")]
    SchemaMismatch,
    #[error("cell has {got} values, expected {expected}")]
    CellArity { got: usize, expected: usize },
    #[error("cell value index {0} is outside its domain")]
    CellValue(u8),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("conditioning event has zero probability")]
    EmptyEvent,
}

pub type Result<T> = std::result::Result<T, InfoError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Variable {
    pub name: String,
    pub domain: Vec<String>,
}

impl Variable {
    pub fn new(name: &str, domain: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            domain: domain.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Domain `{0, 1}`.
    pub fn bit(name: &str) -> Self {
        Self::new(name, &["0", "1"])
    }

    pub fn value_index(&self, value: &str) -> Result<u8> {
        self.domain
            .iter()
            .position(|v| v == value)
            .map(|i| i as u8)
            .ok_or_else(|| InfoError::UnknownValue {
                variable: self.name.clone(),
                value: value.to_string(),
            })
    }
}

/// Probability table keyed by value indices, one per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    variables: Vec<Variable>,
    table: BTreeMap<Vec<u8>, f64>,
}

impl JointDistribution {
    /// An empty table; fill it with [`JointDistribution::add`].
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        for (i, v) in variables.iter().enumerate() {
            if variables[..i].iter().any(|w| w.name == v.name) {
                return Err(InfoError::DuplicateVariable(v.name.clone()));
            }
        }
        Ok(Self {
            variables,
            table: BTreeMap::new(),
        })
    }

    /// Builds a table from labeled cells, e.g. `[(["0", "1"], 0.5), ...]`.
    pub fn from_labeled<'a, I, C>(variables: Vec<Variable>, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, f64)>,
        C: AsRef<[&'a str]>,
    {
        let mut d = Self::new(variables)?;
        for (labels, p) in cells {
            let labels = labels.as_ref();
            if labels.len() != d.variables.len() {
                return Err(InfoError::CellArity {
                    got: labels.len(),
                    expected: d.variables.len(),
                });
            }
            let cell = labels
                .iter()
                .zip(&d.variables)
                .map(|(l, v)| v.value_index(l))
                .collect::<Result<Vec<u8>>>()?;
            d.add(&cell, p)?;
        }
        Ok(d)
    }

    /// Frequencies from integer counts.
    pub fn from_counts(variables: Vec<Variable>, counts: &BTreeMap<Vec<u8>, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        let mut d = Self::new(variables)?;
        if total == 0 {
            return Ok(d);
        }
        for (cell, n) in counts {
            d.add(cell, *n as f64 / total as f64)?;
        }
        Ok(d)
    }

    /// Accumulates `weight` onto `cell`.
    pub fn add(&mut self, cell: &[u8], weight: f64) -> Result<()> {
        if cell.len() != self.variables.len() {
            return Err(InfoError::CellArity {
                got: cell.len(),
                expected: self.variables.len(),
            });
        }
        for (value, var) in cell.iter().zip(&self.variables) {
            if *value as usize >= var.domain.len() {
                return Err(InfoError::CellValue(*value));
            }
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(InfoError::ProbabilityOutOfRange(weight));
        }
        *self.table.entry(cell.to_vec()).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn cells(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.table.iter().map(|(c, p)| (c.as_slice(), *p))
    }

    /// Cells rendered with their value labels.
    pub fn labeled_cells(&self) -> Vec<(Vec<&str>, f64)> {
        self.cells()
            .map(|(cell, p)| {
                let labels = cell
                    .iter()
                    .zip(&self.variables)
                    .map(|(v, var)| var.domain[*v as usize].as_str())
                    .collect();
                (labels, p)
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.table.values().sum()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| InfoError::UnknownVariable(name.to_string()))
    }

    fn resolve(&self, assignment: &[(&str, &str)]) -> Result<Vec<(usize, u8)>> {
        assignment
            .iter()
            .map(|(name, value)| {
                let i = self.var_index(name)?;
                Ok((i, self.variables[i].value_index(value)?))
            })
            .collect()
    }

    /// Total probability of the cells matching every `(variable, value)` pair.
    pub fn prob(&self, assignment: &[(&str, &str)]) -> Result<f64> {
        let wanted = self.resolve(assignment)?;
        Ok(self
            .table
            .iter()
            .filter(|(cell, _)| wanted.iter().all(|(i, v)| cell[*i] == *v))
            .map(|(_, p)| p)
            .fold(0.0, |a, p| a + p))
    }

    /// Keeps the listed variables (in the given order), summing out the rest.
    pub fn marginal(&self, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.var_index(n))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(idx.iter().map(|i| self.variables[*i].clone()).collect())?;
        for (cell, p) in &self.table {
            let key: Vec<u8> = idx.iter().map(|i| cell[*i]).collect();
            *out.table.entry(key).or_insert(0.0) += p;
        }
        Ok(out)
    }

    /// Restricts to cells where each listed variable takes one of the allowed values, renormalized.
    pub fn restrict(&self, constraints: &[(&str, &[&str])]) -> Result<Self> {
        let resolved = constraints
            .iter()
            .map(|(name, values)| {
                let i = self.var_index(name)?;
                let allowed = values
                    .iter()
                    .map(|v| self.variables[i].value_index(v))
                    .collect::<Result<Vec<u8>>>()?;
                Ok((i, allowed))
            })
            .collect::<Result<Vec<_>>>()?;
        let kept: BTreeMap<Vec<u8>, f64> = self
            .table
            .iter()
            .filter(|(cell, _)| resolved.iter().all(|(i, allowed)| allowed.contains(&cell[*i])))
            .map(|(c, p)| (c.clone(), *p))
            .collect();
        let mass: f64 = kept.values().sum();
        if mass <= 0.0 {
            return Err(InfoError::EmptyEvent);
        }
        Ok(Self {
            variables: self.variables.clone(),
            table: kept.into_iter().map(|(c, p)| (c, p / mass)).collect(),
        })
    }

    /// Conditions on `variable = value` for every listed pair.
    pub fn condition(&self, assignment: &[(&str, &str)]) -> Result<Self> {
        let constraints: Vec<(&str, [&str; 1])> = assignment.iter().map(|(n, v)| (*n, [*v])).collect();
        let borrowed: Vec<(&str, &[&str])> = constraints.iter().map(|(n, v)| (*n, v.as_slice())).collect();
        self.restrict(&borrowed)
    }

    /// Joint Shannon entropy of the listed variables, in bits.
    pub fn entropy(&self, names: &[&str]) -> Result<f64> {
        let m = self.marginal(names)?;
        let total = m.total();
        Ok(shannon(m.table.values().map(|p| p / total)))
    }

    /// `I(A; B)` in bits; zero-probability cells contribute nothing.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64> {
        if let Some(shared) = a.iter().find(|n| b.contains(n)) {
            return Err(InfoError::Overlap(shared.to_string()));
        }
        let joint_names: Vec<&str> = a.iter().chain(b).copied().collect();
        let joint = self.marginal(&joint_names)?;
        let pa = self.marginal(a)?;
        let pb = self.marginal(b)?;
        let total = joint.total();
        let mut info = 0.0;
        for (cell, p) in &joint.table {
            if *p <= 0.0 {
                continue;
            }
            let (ka, kb) = cell.split_at(a.len());
            let qa = pa.table[ka] / total;
            let qb = pb.table[kb] / total;
            let p = p / total;
            info += p * (p / (qa * qb)).log2();
        }
        Ok(info)
    }
}

fn shannon(probs: impl Iterator<Item = f64>) -> f64 {
    probs.filter(|p| *p > 0.0).fold(0.0, |h, p| h - p * p.log2())
}

/// `-p log2 p - (1-p) log2 (1-p)`, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(InfoError::ProbabilityOutOfRange(p));
    }
    Ok(shannon([p, 1.0 - p].into_iter()))
}

/// `P(m != j)` over cells where both bits are present.
pub fn qber(d: &JointDistribution) -> Result<f64> {
    let valid = d.restrict(&[("j", &["0", "1"]), ("m", &["0", "1"])])?;
    let errors = valid.prob(&[("j", "0"), ("m", "1")])? + valid.prob(&[("j", "1"), ("m", "0")])?;
    Ok(errors)
}

/// `½ Σ |p_a - p_b|` over tables with identical schemas.
pub fn total_variation(a: &JointDistribution, b: &JointDistribution) -> Result<f64> {
    if a.variables != b.variables {
        return Err(InfoError::SchemaMismatch);
    }
    let mut keys: Vec<&Vec<u8>> = a.table.keys().chain(b.table.keys()).collect();
    keys.sort();
    keys.dedup();
    Ok(0.5
        * keys
            .into_iter()
            .map(|k| (a.table.get(k).unwrap_or(&0.0) - b.table.get(k).unwrap_or(&0.0)).abs())
            .sum::<f64>())
}
