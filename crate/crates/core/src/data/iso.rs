use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::{double_edge_swap, er_sample, permute, wl_hash, Graph, Permutation};

/// Draws allowed per double edge swap before giving up on that step.
const SWAP_TRIES: usize = 100;

/// Settings for the isomorphism benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoGenConfig {
    pub n_vertices: usize,
    pub edge_p: f64,
    pub n_classes: usize,
    /// Graphs per class, the source included.
    pub copies_per_class: usize,
    /// Swaps applied to derive each further class; `None` means 2·|E|.
    pub rewire_steps: Option<usize>,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for IsoGenConfig {
    fn default() -> Self {
        IsoGenConfig {
            n_vertices: 20,
            edge_p: 0.3,
            n_classes: 5,
            copies_per_class: 100,
            rewire_steps: None,
            max_attempts: 100,
            seed: 0,
        }
    }
}

impl IsoGenConfig {
    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Parameter("n_classes must be at least 2".into()));
        }
        if self.copies_per_class == 0 {
            return Err(Error::Parameter(
                "copies_per_class must be at least 1".into(),
            ));
        }
        if self.n_vertices == 0 {
            return Err(Error::Parameter("n_vertices must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_p) {
            return Err(Error::Parameter(format!(
                "edge probability {} outside [0, 1]",
                self.edge_p
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::Parameter("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Structurally distinct source graphs with one shared degree sequence:
/// an ER seed graph plus rewired variants, pairwise separated by 1-WL.
fn sample_sources(cfg: &IsoGenConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Graph>> {
    for _ in 0..cfg.max_attempts {
        let seed_graph = er_sample(cfg.n_vertices, cfg.edge_p, rng)?;
        if seed_graph.num_edges() < 2 {
            continue;
        }
        let steps = cfg.rewire_steps.unwrap_or(2 * seed_graph.num_edges());
        let mut sources = vec![seed_graph.clone()];
        for _ in 1..cfg.n_classes {
            let mut g = seed_graph.clone();
            for _ in 0..steps {
                g = double_edge_swap(&g, rng, SWAP_TRIES);
            }
            sources.push(g);
        }
        let mut hashes: Vec<_> = sources.iter().map(|g| wl_hash(g, None, false)).collect();
        hashes.sort_unstable();
        hashes.dedup();
        if hashes.len() == sources.len() {
            return Ok(sources);
        }
    }
    Err(Error::Generation(format!(
        "no {} WL-distinct graphs with a shared degree sequence after {} attempts \
         (n = {}, p = {}); try another seed",
        cfg.n_classes, cfg.max_attempts, cfg.n_vertices, cfg.edge_p
    )))
}

/// Generates the isomorphism benchmark.
///
/// One ER graph is sampled and rewired by degree-preserving swaps into
/// `n_classes` graphs that share a degree sequence but are pairwise
/// distinguishable by 1-WL. Every vertex of every source gets a random
/// two-class one-hot feature. Each class then holds `copies_per_class`
/// copies of its source, each under its own random vertex permutation.
/// Graphs are emitted class by class; labels are source indices.
pub fn generate_iso_dataset(cfg: &IsoGenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sources = sample_sources(cfg, &mut rng)?;
    let n = cfg.n_vertices;

    let mut graphs = Vec::with_capacity(cfg.n_classes * cfg.copies_per_class);
    for (label, source) in sources.into_iter().enumerate() {
        let mut features = DMatrix::zeros(n, 2);
        for v in 0..n {
            features[(v, rng.gen_range(0..2))] = 1.0;
        }
        let source = source.with_features(features)?.with_label(label);
        for _ in 0..cfg.copies_per_class {
            let perm = Permutation::random(n, &mut rng);
            graphs.push(permute(&source, &perm)?);
        }
    }
    Dataset::new(
        format!("ISO_n{}_p{}_s{}", cfg.n_vertices, cfg.edge_p, cfg.seed),
        graphs,
        cfg.n_classes,
        2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn default_shape() {
        let d = generate_iso_dataset(&IsoGenConfig::default()).unwrap();
        assert_eq!(d.len(), 500);
        assert_eq!(d.num_classes(), 5);
        assert_eq!(d.class_counts(), vec![100; 5]);
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.distinct_degree_sequences(), 1);
    }

    #[test]
    fn wl_identical_within_and_distinct_across_classes() {
        let cfg = IsoGenConfig {
            copies_per_class: 20,
            seed: 3,
            ..Default::default()
        };
        let d = generate_iso_dataset(&cfg).unwrap();
        for use_features in [false, true] {
            let mut per_class = Vec::new();
            for idx in d.indices_by_class() {
                let hashes: BTreeSet<_> = idx
                    .iter()
                    .map(|&i| wl_hash(&d.graphs()[i], None, use_features))
                    .collect();
                assert_eq!(hashes.len(), 1);
                per_class.push(*hashes.iter().next().unwrap());
            }
            let distinct: BTreeSet<_> = per_class.iter().collect();
            assert_eq!(distinct.len(), 5);
        }
    }

    #[test]
    fn features_are_one_hot() {
        let d = generate_iso_dataset(&IsoGenConfig {
            copies_per_class: 2,
            ..Default::default()
        })
        .unwrap();
        for g in d.graphs() {
            for row in g.features().row_iter() {
                assert_eq!(row.sum(), 1.0);
                assert!(row.iter().all(|&x| x == 0.0 || x == 1.0));
            }
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = IsoGenConfig {
            copies_per_class: 5,
            seed: 17,
            ..Default::default()
        };
        assert_eq!(
            generate_iso_dataset(&cfg).unwrap(),
            generate_iso_dataset(&cfg).unwrap()
        );
    }

    #[test]
    fn tiny_graphs() {
        let d = generate_iso_dataset(&IsoGenConfig {
            n_vertices: 6,
            edge_p: 0.5,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(d.len(), 500);
        assert!(d.graphs().iter().all(|g| g.num_vertices() == 6));
    }

    #[test]
    fn impossible_requests_fail() {
        // the empty graph has no edges to swap
        let cfg = IsoGenConfig {
            edge_p: 0.0,
            max_attempts: 3,
            ..Default::default()
        };
        assert!(matches!(
            generate_iso_dataset(&cfg),
            Err(Error::Generation(_))
        ));
        let cfg = IsoGenConfig {
            n_classes: 1,
            ..Default::default()
        };
        assert!(matches!(
            generate_iso_dataset(&cfg),
            Err(Error::Parameter(_))
        ));
    }
}
