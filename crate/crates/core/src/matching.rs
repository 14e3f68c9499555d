//! Identifying the shared atoms of several dictionaries.
//!
//! Client `i` contributes layer `i` of a directed acyclic graph, one node per
//! atom. Every atom of layer `i` links to every atom of layer `i + 1` with
//! weight `vector_d2` between the two atoms; a source links to layer 0 and the
//! last layer links to a terminal, both with weight zero. Each round takes the
//! shortest source-to-terminal path, averages its sign-aligned atoms into one
//! global atom, and deletes the path's nodes.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::dictionary::Dictionary;
use crate::distance::signed_gap;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LayeredDag {
    /// Remaining atom indices per layer, ascending.
    layers: Vec<Vec<usize>>,
    /// `weights[i][(a, b)]` links atom `a` of layer `i` to atom `b` of layer `i + 1`.
    weights: Vec<DMatrix<f64>>,
}

/// A source-to-terminal path: one atom index per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub length: f64,
    /// Edges examined while solving.
    pub relaxations: usize,
}

pub fn build_dag(dicts: &[Dictionary]) -> Result<LayeredDag> {
    if dicts.len() < 2 {
        return Err(Error::TooFewLayers(dicts.len()));
    }
    let dim = dicts[0].dim();
    if let Some(bad) = dicts.iter().find(|d| d.dim() != dim) {
        return Err(Error::mismatch("global matching", dim, bad.dim()));
    }
    let weights = dicts
        .windows(2)
        .map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            DMatrix::from_fn(a.atoms(), b.atoms(), |j, k| {
                signed_gap(a.atom_slice(j), b.atom_slice(k)).0
            })
        })
        .collect();
    Ok(LayeredDag {
        layers: dicts.iter().map(|d| (0..d.atoms()).collect()).collect(),
        weights,
    })
}

impl LayeredDag {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> &[usize] {
        &self.layers[i]
    }

    /// Weight of the edge from atom `a` of layer `layer` to atom `b` of the next layer.
    pub fn weight(&self, layer: usize, a: usize, b: usize) -> f64 {
        self.weights[layer][(a, b)]
    }

    /// Source edges + terminal edges + edges between consecutive layers.
    pub fn edge_count(&self) -> usize {
        let n = self.layers.len();
        let inner: usize = self
            .layers
            .windows(2)
            .map(|w| w[0].len() * w[1].len())
            .sum();
        self.layers[0].len() + self.layers[n - 1].len() + inner
    }

    /// Deletes the nodes of `path`.
    pub fn remove_path(&mut self, path: &[usize]) {
        for (layer, &node) in self.layers.iter_mut().zip(path) {
            layer.retain(|&a| a != node);
        }
    }

    /// Plain-text adjacency listing of the remaining graph.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        let n = self.layers.len();
        for &a in &self.layers[0] {
            let _ = writeln!(out, "s -> L0:{a} 0");
        }
        for i in 0..n - 1 {
            for &a in &self.layers[i] {
                for &b in &self.layers[i + 1] {
                    let _ = writeln!(
                        out,
                        "L{i}:{a} -> L{}:{b} {:.17e}",
                        i + 1,
                        self.weight(i, a, b)
                    );
                }
            }
        }
        for &b in &self.layers[n - 1] {
            let _ = writeln!(out, "L{}:{b} -> t 0", n - 1);
        }
        out
    }
}

/// Minimum-weight source-to-terminal path.
///
/// Costs-to-go are relaxed once per edge in reverse layer order; the path is
/// then read forward, taking the smallest atom index at each layer that stays
/// optimal, which yields the lexicographically smallest optimal path. The
/// reported length is the forward sum of the path's edge weights.
pub fn shortest_path(dag: &LayeredDag) -> Result<Path> {
    let n = dag.layers.len();
    if let Some(layer) = dag.layers.iter().position(Vec::is_empty) {
        return Err(Error::EmptyLayer { layer });
    }
    let mut relaxations = dag.layers[n - 1].len();
    // cost_to_go[i][a] indexed by original atom index; unused slots stay infinite.
    let mut cost_to_go: Vec<Vec<f64>> = dag
        .weights
        .iter()
        .map(|w| vec![f64::INFINITY; w.nrows()])
        .collect();
    let last_width = dag.layers[n - 1].iter().max().map_or(0, |m| m + 1);
    let mut tail = vec![f64::INFINITY; last_width];
    for &b in &dag.layers[n - 1] {
        tail[b] = 0.0;
    }
    cost_to_go.push(tail);

    for i in (0..n - 1).rev() {
        for &a in &dag.layers[i] {
            let mut best = f64::INFINITY;
            for &b in &dag.layers[i + 1] {
                relaxations += 1;
                let c = dag.weights[i][(a, b)] + cost_to_go[i + 1][b];
                if c < best {
                    best = c;
                }
            }
            cost_to_go[i][a] = best;
        }
    }

    relaxations += dag.layers[0].len();
    let best = dag.layers[0]
        .iter()
        .map(|&a| cost_to_go[0][a])
        .fold(f64::INFINITY, f64::min);
    let mut nodes = Vec::with_capacity(n);
    let mut current = *dag.layers[0]
        .iter()
        .find(|&&a| cost_to_go[0][a] == best)
        .expect("nonempty first layer");
    nodes.push(current);
    let mut length = 0.0;
    for i in 0..n - 1 {
        let target = cost_to_go[i][current];
        let next = *dag.layers[i + 1]
            .iter()
            .find(|&&b| dag.weights[i][(current, b)] + cost_to_go[i + 1][b] == target)
            .expect("an optimal successor exists");
        length += dag.weights[i][(current, next)];
        nodes.push(next);
        current = next;
    }
    Ok(Path {
        nodes,
        length,
        relaxations,
    })
}

/// One client's atom assigned to a global atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchedAtom {
    pub index: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Averaged global atoms, one per round.
    pub global: Dictionary,
    /// Unmatched atoms of each client, in their original order.
    pub locals: Vec<Dictionary>,
    /// `assignments[i][j]` is client `i`'s atom behind global atom `j`.
    pub assignments: Vec<Vec<MatchedAtom>>,
    /// Client id of each graph layer.
    pub layer_order: Vec<usize>,
    /// Length of the shortest path behind each global atom.
    pub path_lengths: Vec<f64>,
    /// Total edges examined over all rounds.
    pub relaxations: usize,
}

impl MatchResult {
    /// Plain-text listing of the chosen paths.
    pub fn path_listing(&self) -> String {
        let mut out = String::new();
        for (j, len) in self.path_lengths.iter().enumerate() {
            let nodes: Vec<String> = self
                .assignments
                .iter()
                .zip(&self.layer_order)
                .map(|(a, client)| format!("c{client}:{}{:+}", a[j].index, a[j].sign))
                .collect();
            let _ = writeln!(out, "path {j} length {len:.17e}: {}", nodes.join(" -> "));
        }
        out
    }
}

/// Extracts `global_atoms` shared atoms from the client dictionaries.
///
/// Each path's atoms are sign-aligned to its layer-0 atom via
/// `sign(<atom, anchor>)` (zero counts as `+1`) and averaged. With
/// `renormalize` the average is scaled to unit norm.
pub fn global_matching(
    dicts: &[Dictionary],
    global_atoms: usize,
    renormalize: bool,
) -> Result<MatchResult> {
    let mut dag = build_dag(dicts)?;
    let available = dicts.iter().map(Dictionary::atoms).min().unwrap_or(0);
    if global_atoms > available {
        return Err(Error::TooManyGlobalAtoms {
            requested: global_atoms,
            available,
        });
    }
    let n = dicts.len();
    let dim = dicts[0].dim();
    let mut global = DMatrix::zeros(dim, global_atoms);
    let mut assignments = vec![Vec::with_capacity(global_atoms); n];
    let mut path_lengths = Vec::with_capacity(global_atoms);
    let mut relaxations = 0;

    for j in 0..global_atoms {
        let path = shortest_path(&dag)?;
        relaxations += path.relaxations;
        let anchor = dicts[0].atom(path.nodes[0]);
        let mut sum = DVector::zeros(dim);
        for (i, &alpha) in path.nodes.iter().enumerate() {
            let atom = dicts[i].atom(alpha);
            let inner = atom.dot(&anchor);
            let sign: i8 = if inner < 0.0 {
                -1
            } else {
                if inner == 0.0 {
                    log::warn!(
                        "client {i} atom {alpha} is orthogonal to its anchor; using sign +1"
                    );
                }
                1
            };
            sum.axpy(f64::from(sign), &atom, 1.0);
            assignments[i].push(MatchedAtom { index: alpha, sign });
        }
        let mut column = sum / n as f64;
        if renormalize {
            let norm = column.norm();
            if norm > 0.0 {
                column /= norm;
            }
        }
        global.set_column(j, &column);
        path_lengths.push(path.length);
        dag.remove_path(&path.nodes);
    }

    let locals = dicts
        .iter()
        .zip(&assignments)
        .map(|(d, matched)| {
            let rest: Vec<usize> = (0..d.atoms())
                .filter(|k| !matched.iter().any(|m| m.index == *k))
                .collect();
            d.select(&rest)
        })
        .collect();

    Ok(MatchResult {
        global: Dictionary::with_any_width(global)?,
        locals,
        assignments,
        layer_order: (0..n).collect(),
        path_lengths,
        relaxations,
    })
}

/// Chained objective `sum_j sum_i vector_d2(D_i[a_ij], D_{i+1}[a_{i+1,j}])` of an assignment.
pub fn matching_cost(result: &MatchResult, dicts: &[Dictionary]) -> Result<f64> {
    if result.assignments.len() != dicts.len() {
        return Err(Error::mismatch(
            "matching assignment",
            format!("{} clients", dicts.len()),
            result.assignments.len(),
        ));
    }
    let width = result.assignments.first().map_or(0, Vec::len);
    for (i, (matched, d)) in result.assignments.iter().zip(dicts).enumerate() {
        if matched.len() != width {
            return Err(Error::InvalidConfig(format!(
                "client {i} has {} matched atoms, expected {width}",
                matched.len()
            )));
        }
        let mut seen = vec![false; d.atoms()];
        for m in matched {
            if m.index >= d.atoms() || std::mem::replace(&mut seen[m.index], true) {
                return Err(Error::InvalidConfig(format!(
                    "client {i} assignment {} is out of range or repeated",
                    m.index
                )));
            }
        }
    }
    let mut total = 0.0;
    for j in 0..width {
        for i in 0..dicts.len() - 1 {
            let a = dicts[i].atom_slice(result.assignments[i][j].index);
            let b = dicts[i + 1].atom_slice(result.assignments[i + 1][j].index);
            total += signed_gap(a, b).0;
        }
    }
    Ok(total)
}
