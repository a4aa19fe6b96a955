//! Label bookkeeping, pseudo-class partitioning, vertex selection and
//! annotators.

mod annotator;
mod select;

pub use annotator::{
    annotate, AnnotationRequest, Annotator, AnnotatorSpec, NoisyAnnotator, OracleAnnotator,
};
pub use select::{
    featprop_from_space, featprop_select, partition_vertices, select_vertices, weighted_sample, CellDistances, VertexSpace,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Balanced,
    Unbalanced,
    #[serde(alias = "unknown_k")]
    UnknownK,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Balanced => "balanced",
            Setting::Unbalanced => "unbalanced",
            Setting::UnknownK => "unknown-k",
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Setting::Balanced),
            "unbalanced" => Ok(Setting::Unbalanced),
            "unknown-k" | "unknown_k" => Ok(Setting::UnknownK),
            _ => Err(Error::InvalidArgument(format!("unknown setting '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Random,
    Entropy,
    Pagerank,
    Medoid,
    Featprop,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::Entropy => "entropy",
            SamplerKind::Pagerank => "pagerank",
            SamplerKind::Medoid => "medoid",
            SamplerKind::Featprop => "featprop",
        }
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SamplerKind::Random),
            "entropy" => Ok(SamplerKind::Entropy),
            "pagerank" => Ok(SamplerKind::Pagerank),
            "medoid" => Ok(SamplerKind::Medoid),
            "featprop" => Ok(SamplerKind::Featprop),
            _ => Err(Error::InvalidArgument(format!("unknown sampler '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Pseudo,
}

/// Class names in first-seen order; a class is its index here.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRegistry {
    names: Vec<String>,
}

impl ClassRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_names(names: Vec<String>) -> Self {
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Index of `name`, appending it if new.
    pub fn intern(&mut self, name: &str) -> usize {
        self.index(name).unwrap_or_else(|| {
            self.names.push(name.to_string());
            self.names.len() - 1
        })
    }
}

/// Human labels, pseudo-labels, the unlabeled pool, and the current
/// pseudo-class partition of the training vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    training: Vec<usize>,
    human: BTreeMap<usize, usize>,
    pseudo: Vec<(usize, usize)>,
    pool: BTreeSet<usize>,
    partition: Vec<usize>,
    budget_total: usize,
}

impl LabelState {
    pub fn new(mut training: Vec<usize>, budget_total: usize) -> Self {
        training.sort_unstable();
        training.dedup();
        let pool = training.iter().copied().collect();
        Self {
            partition: vec![0; training.len()],
            training,
            human: BTreeMap::new(),
            pseudo: Vec::new(),
            pool,
            budget_total,
        }
    }

    pub fn training(&self) -> &[usize] {
        &self.training
    }

    pub fn budget_total(&self) -> usize {
        self.budget_total
    }

    pub fn budget_used(&self) -> usize {
        self.human.len()
    }

    pub fn remaining_budget(&self) -> usize {
        self.budget_total - self.human.len()
    }

    pub fn pool(&self) -> &BTreeSet<usize> {
        &self.pool
    }

    /// Moves `v` from the pool into the human-labeled set.
    pub fn add_human(&mut self, v: usize, class: usize) -> Result<()> {
        if self.remaining_budget() == 0 {
            return Err(Error::InvalidArgument("label budget exhausted".into()));
        }
        if !self.pool.remove(&v) {
            return Err(Error::InvalidArgument(format!("vertex {v} is not in the unlabeled pool")));
        }
        self.human.insert(v, class);
        Ok(())
    }

    /// Human labels in vertex order.
    pub fn human_labels(&self) -> Vec<(usize, usize)> {
        self.human.iter().map(|(&v, &c)| (v, c)).collect()
    }

    pub fn human_label(&self, v: usize) -> Option<usize> {
        self.human.get(&v).copied()
    }

    pub fn pseudo_labels(&self) -> &[(usize, usize)] {
        &self.pseudo
    }

    /// Replaces the pseudo-labels; human-labeled vertices are dropped.
    pub fn set_pseudo(&mut self, pseudo: Vec<(usize, usize)>) {
        self.pseudo = pseudo.into_iter().filter(|(v, _)| !self.human.contains_key(v)).collect();
    }

    /// Every label with its provenance.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, usize, Provenance)> + '_ {
        self.human
            .iter()
            .map(|(&v, &c)| (v, c, Provenance::Human))
            .chain(self.pseudo.iter().map(|&(v, c)| (v, c, Provenance::Pseudo)))
    }

    /// Cell per training vertex, aligned with `training()`.
    pub fn set_partition(&mut self, cells: Vec<usize>) -> Result<()> {
        if cells.len() != self.training.len() {
            return Err(Error::dims(
                "partition",
                format!("{} cells for {} training vertices", cells.len(), self.training.len()),
            ));
        }
        self.partition = cells;
        Ok(())
    }

    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    /// Unlabeled pool members of each cell, ascending.
    pub fn pool_cells(&self) -> Vec<Vec<usize>> {
        let k = self.partition.iter().max().map_or(0, |m| m + 1);
        let mut cells = vec![Vec::new(); k];
        for (&v, &c) in self.training.iter().zip(&self.partition) {
            if self.pool.contains(&v) {
                cells[c].push(v);
            }
        }
        cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_state_moves_vertices_out_of_the_pool() {
        let mut s = LabelState::new(vec![4, 1, 2, 1], 2);
        assert_eq!(s.training(), &[1, 2, 4]);
        s.add_human(2, 0).unwrap();
        assert!(!s.pool().contains(&2));
        assert!(s.add_human(2, 1).is_err());
        assert!(s.add_human(9, 1).is_err());
        s.add_human(4, 1).unwrap();
        assert_eq!(s.budget_used(), 2);
        assert!(s.add_human(1, 0).is_err());
        s.set_pseudo(vec![(1, 1), (2, 1)]);
        assert_eq!(s.pseudo_labels(), &[(1, 1)]);
        let prov: Vec<_> = s.labeled().map(|l| l.2).collect();
        assert_eq!(prov, vec![Provenance::Human, Provenance::Human, Provenance::Pseudo]);
    }

    #[test]
    fn pool_cells_follow_partition() {
        let mut s = LabelState::new(vec![0, 1, 2, 3], 4);
        s.set_partition(vec![1, 0, 1, 0]).unwrap();
        s.add_human(3, 0).unwrap();
        assert_eq!(s.pool_cells(), vec![vec![1], vec![0, 2]]);
        assert!(s.set_partition(vec![0]).is_err());
    }

    #[test]
    fn registry_interns_in_first_seen_order() {
        let mut r = ClassRegistry::new();
        assert_eq!(r.intern("b"), 0);
        assert_eq!(r.intern("a"), 1);
        assert_eq!(r.intern("b"), 0);
        assert_eq!(r.names(), &["b".to_string(), "a".to_string()]);
    }

    #[test]
    fn names_round_trip() {
        for s in ["balanced", "unbalanced", "unknown-k"] {
            assert_eq!(s.parse::<Setting>().unwrap().name(), s);
        }
        for s in ["random", "entropy", "pagerank", "medoid", "featprop"] {
            assert_eq!(s.parse::<SamplerKind>().unwrap().name(), s);
        }
        assert!("nope".parse::<SamplerKind>().is_err());
    }
}
