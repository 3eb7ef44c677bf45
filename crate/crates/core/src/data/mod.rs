//! Datasets: the isomorphism benchmark generator and the plain-text
//! benchmark directory format.

mod iso;
mod tu;

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::DataShape;

pub use iso::{generate_iso_dataset, IsoGenConfig};
pub use tu::{parse_tu_dataset, write_tu_dataset};

/// An ordered collection of labelled graphs sharing one feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        graphs: Vec<Graph>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        for (k, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::dim(
                    "Dataset::new",
                    format!(
                        "graph {k} has {} feature columns, dataset has {feature_dim}",
                        g.feature_dim()
                    ),
                ));
            }
            if g.label() >= num_classes {
                return Err(Error::Parameter(format!(
                    "graph {k} has label {} but the dataset has {num_classes} classes",
                    g.label()
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn max_vertices(&self) -> usize {
        self.graphs
            .iter()
            .map(Graph::num_vertices)
            .max()
            .unwrap_or(0)
    }

    pub fn shape(&self) -> DataShape {
        DataShape {
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
            max_vertices: self.max_vertices(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label()] += 1;
        }
        counts
    }

    /// Indices of the graphs in each class, in dataset order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, g) in self.graphs.iter().enumerate() {
            out[g.label()].push(i);
        }
        out
    }

    /// The graphs at `indices`, in that order, keeping name and shape.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        }
    }

    /// Number of distinct sorted degree sequences among the graphs.
    pub fn distinct_degree_sequences(&self) -> usize {
        self.graphs
            .iter()
            .map(Graph::sorted_degrees)
            .collect::<BTreeSet<_>>()
            .len()
    }
}
