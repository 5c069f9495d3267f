use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

/// Named tensors kept in lexicographic order of their names.
///
/// This is the unit that gets checkpointed, averaged and sent over the wire.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamTree {
    entries: BTreeMap<String, Tensor>,
}

impl ParamTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Incongruent(format!("missing parameter `{name}`")))
    }

    pub fn expect_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Incongruent(format!("missing parameter `{name}`")))
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.entries.remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Total number of scalar values across all tensors.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Same names and same shapes.
    pub fn is_congruent(&self, other: &ParamTree) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }

    pub fn check_congruent(&self, other: &ParamTree) -> Result<()> {
        if self.is_congruent(other) {
            return Ok(());
        }
        for (name, t) in &self.entries {
            match other.entries.get(name) {
                None => return Err(Error::Incongruent(format!("`{name}` missing on one side"))),
                Some(o) if o.shape() != t.shape() => {
                    return Err(Error::Incongruent(format!(
                        "`{name}` has shape {:?} vs {:?}",
                        t.shape(),
                        o.shape()
                    )))
                }
                _ => {}
            }
        }
        Err(Error::Incongruent(format!(
            "{} vs {} entries",
            self.entries.len(),
            other.entries.len()
        )))
    }

    /// A tree with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamTree {
        ParamTree {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamTree) -> Result<()> {
        self.check_congruent(other)?;
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &ParamTree, scale: f64) -> Result<()> {
        self.check_congruent(other)?;
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            a.add_scaled(b, scale)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.entries.values_mut().for_each(|t| t.scale(s));
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(Tensor::all_finite)
    }

    /// Largest elementwise absolute difference between two congruent trees.
    pub fn max_abs_diff(&self, other: &ParamTree) -> Result<f64> {
        self.check_congruent(other)?;
        Ok(self
            .entries
            .values()
            .zip(other.entries.values())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }
}

impl FromIterator<(String, Tensor)> for ParamTree {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParamTree {
            entries: iter.into_iter().collect(),
        }
    }
}
