//! The multi-file text format used by the common graph-kernel benchmark
//! collections. For a dataset `NAME` the directory holds:
//!
//! * `NAME_A.txt`: one `i, j` line per directed edge, 1-indexed global node ids
//! * `NAME_graph_indicator.txt`: line `n` holds the 1-indexed graph id of node `n`
//! * `NAME_graph_labels.txt`: line `g` holds the class label of graph `g`
//! * `NAME_node_labels.txt` (optional): line `n` holds the label of node `n`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_int(path: &Path, line: usize, s: &str) -> Result<i64> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| format_err(path, line, format!("expected an integer, found {s:?}")))
}

fn read_ints(path: &Path) -> Result<Vec<(usize, i64)>> {
    read_lines(path)?
        .into_iter()
        .map(|(ln, l)| Ok((ln, parse_int(path, ln, &l)?)))
        .collect()
}

/// Reads dataset `name` from `dir`.
///
/// Graph labels are remapped to `0..C` in ascending order of the original
/// values; node labels become one-hot features the same way. Without a node
/// label file every vertex gets the constant feature `[1]`. Every edge must
/// appear in both directions.
pub fn parse_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();

    let indicator_path = file(dir, name, "graph_indicator");
    let indicator = read_ints(&indicator_path)?;
    let mut node_graph = Vec::with_capacity(indicator.len());
    let mut node_local = Vec::with_capacity(indicator.len());
    let mut sizes: Vec<usize> = Vec::new();
    for &(ln, gid) in &indicator {
        if gid < 1 {
            return Err(format_err(
                &indicator_path,
                ln,
                format!("graph id {gid} < 1"),
            ));
        }
        let g = (gid - 1) as usize;
        if g >= sizes.len() {
            sizes.resize(g + 1, 0);
        }
        node_graph.push(g);
        node_local.push(sizes[g]);
        sizes[g] += 1;
    }
    let num_nodes = node_graph.len();

    let labels_path = file(dir, name, "graph_labels");
    let graph_labels = read_ints(&labels_path)?;
    if graph_labels.len() != sizes.len() {
        let line = graph_labels.last().map_or(1, |l| l.0);
        return Err(format_err(
            &labels_path,
            line,
            format!(
                "{} graph labels for {} graphs in the indicator file",
                graph_labels.len(),
                sizes.len()
            ),
        ));
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(format_err(
            &indicator_path,
            indicator.last().map_or(1, |l| l.0),
            format!("graph {} has no nodes", g + 1),
        ));
    }
    let class_values: BTreeSet<i64> = graph_labels.iter().map(|l| l.1).collect();
    let class_index: BTreeMap<i64, usize> = class_values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();

    let node_labels_path = file(dir, name, "node_labels");
    let node_labels = if node_labels_path.exists() {
        let labels = read_ints(&node_labels_path)?;
        if labels.len() != num_nodes {
            let line = labels.last().map_or(1, |l| l.0);
            return Err(format_err(
                &node_labels_path,
                line,
                format!("{} node labels for {num_nodes} nodes", labels.len()),
            ));
        }
        Some(labels.into_iter().map(|l| l.1).collect::<Vec<_>>())
    } else {
        None
    };
    let (feature_dim, node_feature): (usize, Vec<usize>) = match &node_labels {
        Some(labels) => {
            let values: BTreeSet<i64> = labels.iter().copied().collect();
            let index: BTreeMap<i64, usize> =
                values.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            (values.len(), labels.iter().map(|l| index[l]).collect())
        }
        None => (1, vec![0; num_nodes]),
    };

    let edges_path = file(dir, name, "A");
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    let mut order: Vec<(usize, usize, usize)> = Vec::new();
    for (ln, l) in read_lines(&edges_path)? {
        let mut parts = l.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format_err(
                &edges_path,
                ln,
                format!("expected \"i, j\", found {l:?}"),
            ));
        };
        let (a, b) = (
            parse_int(&edges_path, ln, a)?,
            parse_int(&edges_path, ln, b)?,
        );
        for v in [a, b] {
            if v < 1 || v as usize > num_nodes {
                return Err(format_err(
                    &edges_path,
                    ln,
                    format!("node {v} out of range 1..={num_nodes}"),
                ));
            }
        }
        let (a, b) = (a as usize - 1, b as usize - 1);
        if node_graph[a] != node_graph[b] {
            return Err(format_err(
                &edges_path,
                ln,
                format!(
                    "edge joins node {} of graph {} and node {} of graph {}",
                    a + 1,
                    node_graph[a] + 1,
                    b + 1,
                    node_graph[b] + 1
                ),
            ));
        }
        if a == b {
            return Err(format_err(
                &edges_path,
                ln,
                format!("self-loop at node {}", a + 1),
            ));
        }
        if directed.insert((a, b), ln).is_none() {
            order.push((ln, a, b));
        }
    }
    for &(ln, a, b) in &order {
        if !directed.contains_key(&(b, a)) {
            return Err(format_err(
                &edges_path,
                ln,
                format!(
                    "edge {}, {} has no mirror {}, {}",
                    a + 1,
                    b + 1,
                    b + 1,
                    a + 1
                ),
            ));
        }
    }

    let mut adjacency: Vec<DMatrix<f64>> = sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    for &(_, a, b) in &order {
        adjacency[node_graph[a]][(node_local[a], node_local[b])] = 1.0;
    }
    let mut features: Vec<DMatrix<f64>> = sizes
        .iter()
        .map(|&s| DMatrix::zeros(s, feature_dim))
        .collect();
    for v in 0..num_nodes {
        features[node_graph[v]][(node_local[v], node_feature[v])] = 1.0;
    }

    let graphs = adjacency
        .into_iter()
        .zip(features)
        .zip(&graph_labels)
        .map(|((a, x), &(_, label))| Graph::new(a, x, class_index[&label]))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(name, graphs, class_values.len(), feature_dim)
}

/// Index of the single 1.0 in a one-hot row.
fn one_hot_index(row: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (i, &x) in row.iter().enumerate() {
        if x == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if x != 0.0 {
            return None;
        }
    }
    hot
}

/// Writes `dataset` into `dir` as `NAME_*.txt` files, `NAME` being the
/// dataset name. Class indices are written as graph labels and one-hot
/// features as integer node labels; a dataset without feature columns gets
/// no node label file.
pub fn write_tu_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &dataset.name;

    let mut node_labels = Vec::new();
    if dataset.feature_dim() > 0 {
        for (k, g) in dataset.graphs().iter().enumerate() {
            for (v, row) in g.features().row_iter().enumerate() {
                let row: Vec<f64> = row.iter().copied().collect();
                let idx = one_hot_index(&row).ok_or_else(|| {
                    Error::Parameter(format!(
                        "graph {k} vertex {v}: features {row:?} are not one-hot"
                    ))
                })?;
                node_labels.push(idx);
            }
        }
    }

    let write = |suffix: &str, body: &mut dyn FnMut(&mut dyn Write) -> std::io::Result<()>| {
        let path = file(dir, name, suffix);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(f);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))
    };

    write("A", &mut |w| {
        let mut offset = 0;
        for g in dataset.graphs() {
            let n = g.num_vertices();
            for i in 0..n {
                for j in 0..n {
                    if g.has_edge(i, j) {
                        writeln!(w, "{}, {}", offset + i + 1, offset + j + 1)?;
                    }
                }
            }
            offset += n;
        }
        Ok(())
    })?;
    write("graph_indicator", &mut |w| {
        for (k, g) in dataset.graphs().iter().enumerate() {
            for _ in 0..g.num_vertices() {
                writeln!(w, "{}", k + 1)?;
            }
        }
        Ok(())
    })?;
    write("graph_labels", &mut |w| {
        for g in dataset.graphs() {
            writeln!(w, "{}", g.label())?;
        }
        Ok(())
    })?;
    if dataset.feature_dim() > 0 {
        write("node_labels", &mut |w| {
            for l in &node_labels {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}
