//! Sparse graphs, their column-stochastic transition matrices, and label
//! indicator matrices.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};

/// Accumulates named, weighted edges and freezes them into a [`Graph`].
///
/// Node indices are handed out in first-seen order. Repeated `(src, dst)`
/// pairs are merged by summing their weights.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    directed: bool,
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    edges: BTreeMap<(usize, usize), f64>,
}

impl GraphBuilder {
    pub fn new(directed: bool) -> Self {
        GraphBuilder {
            directed,
            ..Default::default()
        }
    }

    /// Interns `name`, returning its index.
    pub fn node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn add_edge(&mut self, src: &str, dst: &str, weight: f64) -> Result<()> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::param(format!(
                "edge {src} -> {dst}: weight must be positive and finite, got {weight}"
            )));
        }
        let s = self.node(src);
        let d = self.node(dst);
        self.add_indexed(s, d, weight);
        Ok(())
    }

    fn add_indexed(&mut self, s: usize, d: usize, weight: f64) {
        *self.edges.entry((s, d)).or_insert(0.0) += weight;
        // undirected self-loops are a single edge
        if !self.directed && s != d {
            *self.edges.entry((d, s)).or_insert(0.0) += weight;
        }
    }

    pub fn build(self) -> Result<Graph> {
        if self.names.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let n = self.names.len();
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(self.edges.len());
        let mut weights = Vec::with_capacity(self.edges.len());
        // BTreeMap iteration is sorted by (src, dst): rows come out in order.
        for (&(s, d), &w) in &self.edges {
            row_ptr[s + 1] += 1;
            col_idx.push(d);
            weights.push(w);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Graph {
            directed: self.directed,
            names: self.names,
            index: self.index,
            row_ptr,
            col_idx,
            weights,
        })
    }
}

/// Immutable weighted graph in compressed sparse row form (row = source).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    directed: bool,
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
}

impl Graph {
    /// Parses a whitespace separated edge list: `src dst [weight]` per line,
    /// `#` comments and blank lines skipped. With `weighted == false` a third
    /// column is still validated but every edge gets weight 1.
    pub fn parse_edge_list(text: &str, directed: bool, weighted: bool) -> Result<Graph> {
        let mut builder = GraphBuilder::new(directed);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let line_no = lineno + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let weight = match fields.len() {
                2 => 1.0,
                3 => {
                    let w: f64 = fields[2].parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("weight `{}` is not a number", fields[2]),
                    })?;
                    if !(w > 0.0 && w.is_finite()) {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("weight must be positive, got {w}"),
                        });
                    }
                    if weighted {
                        w
                    } else {
                        1.0
                    }
                }
                k => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected `src dst [weight]`, found {k} fields"),
                    })
                }
            };
            builder.add_edge(fields[0], fields[1], weight)?;
        }
        if builder.edges.is_empty() {
            return Err(Error::EmptyGraph);
        }
        builder.build()
    }

    /// Builds a graph over nodes named `0..n` from index pairs.
    pub fn from_indexed_edges(
        n_nodes: usize,
        directed: bool,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Graph> {
        let mut builder = GraphBuilder::new(directed);
        for i in 0..n_nodes {
            builder.node(&i.to_string());
        }
        for (s, d, w) in edges {
            for idx in [s, d] {
                if idx >= n_nodes {
                    return Err(Error::NodeOutOfRange {
                        index: idx,
                        n_nodes,
                    });
                }
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::param(format!("edge {s} -> {d}: weight {w}")));
            }
            builder.add_indexed(s, d, w);
        }
        builder.build()
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    /// Number of stored (directed) edges after merging.
    pub fn n_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Out-edges of `src` as `(dst, weight)`, sorted by `dst`.
    pub fn out_edges(&self, src: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[src]..self.row_ptr[src + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn out_weight(&self, src: usize) -> f64 {
        self.weights[self.row_ptr[src]..self.row_ptr[src + 1]]
            .iter()
            .sum()
    }

    pub fn edge_weight(&self, src: usize, dst: usize) -> Option<f64> {
        let range = self.row_ptr[src]..self.row_ptr[src + 1];
        self.col_idx[range.clone()]
            .binary_search(&dst)
            .ok()
            .map(|k| self.weights[range.start + k])
    }

    /// Row `src` of the unweighted adjacency matrix as a dense 0/1 vector.
    pub fn binary_adjacency_row(&self, src: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_nodes()];
        for (dst, _) in self.out_edges(src) {
            row[dst] = 1.0;
        }
        row
    }

    /// Renders the graph as an edge list that [`Graph::parse_edge_list`]
    /// reads back to the same adjacency. Undirected graphs emit each edge once.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for s in 0..self.n_nodes() {
            for (d, w) in self.out_edges(s) {
                if !self.directed && d < s {
                    continue;
                }
                let _ = writeln!(out, "{}\t{}\t{:e}", self.names[s], self.names[d], w);
            }
        }
        out
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`. Names follow
    /// their nodes.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.n_nodes();
        check_permutation(perm, n)?;
        let mut names = vec![String::new(); n];
        for (old, &new) in perm.iter().enumerate() {
            names[new] = self.names[old].clone();
        }
        let mut edges = BTreeMap::new();
        for s in 0..n {
            for (d, w) in self.out_edges(s) {
                edges.insert((perm[s], perm[d]), w);
            }
        }
        let mut builder = GraphBuilder::new(true);
        for name in &names {
            builder.node(name);
        }
        builder.edges = edges;
        let mut g = builder.build()?;
        g.directed = self.directed;
        Ok(g)
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::param("not a permutation"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Column-stochastic transpose of a graph's adjacency.
///
/// Entry `(i, j)` is `w(j -> i) / outdeg_w(j)`. Stored row-major over the
/// target index so that `T * r` is a row-wise gather.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    dangling: Vec<usize>,
}

impl TransitionMatrix {
    pub fn from_graph(graph: &Graph) -> TransitionMatrix {
        let n = graph.n_nodes();
        let out_weight: Vec<f64> = (0..n).map(|j| graph.out_weight(j)).collect();
        let mut row_ptr = vec![0usize; n + 1];
        for s in 0..n {
            for (d, _) in graph.out_edges(s) {
                row_ptr[d + 1] += 1;
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut fill = row_ptr.clone();
        // sources visited in increasing order, so each row's columns are sorted
        for (s, &ow) in out_weight.iter().enumerate() {
            for (d, w) in graph.out_edges(s) {
                let k = fill[d];
                col_idx[k] = s;
                values[k] = w / ow;
                fill[d] += 1;
            }
        }
        let dangling = (0..n).filter(|&j| out_weight[j] == 0.0).collect();
        TransitionMatrix {
            n_nodes: n,
            row_ptr,
            col_idx,
            values,
            dangling,
        }
    }

    /// Builds from explicit `(row, col, value)` triplets; duplicate positions
    /// are summed. Columns whose entries are all zero are marked dangling.
    pub fn from_triplets(n_nodes: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in triplets {
            for idx in [i, j] {
                if idx >= n_nodes {
                    return Err(Error::NodeOutOfRange {
                        index: idx,
                        n_nodes,
                    });
                }
            }
            *cells.entry((i, j)).or_insert(0.0) += v;
        }
        let mut row_ptr = vec![0usize; n_nodes + 1];
        let mut col_idx = Vec::with_capacity(cells.len());
        let mut values = Vec::with_capacity(cells.len());
        let mut has_mass = vec![false; n_nodes];
        for (&(i, j), &v) in &cells {
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
            if v != 0.0 {
                has_mass[j] = true;
            }
        }
        for i in 0..n_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        let dangling = (0..n_nodes).filter(|&j| !has_mass[j]).collect();
        Ok(TransitionMatrix {
            n_nodes,
            row_ptr,
            col_idx,
            values,
            dangling,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Indices of columns with no outgoing mass.
    pub fn dangling(&self) -> &[usize] {
        &self.dangling
    }

    /// Row `i` as `(column, value)` pairs sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `out = T * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_nodes);
        debug_assert_eq!(out.len(), self.n_nodes);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_nodes];
        for (&j, &v) in self.col_idx.iter().zip(&self.values) {
            sums[j] += v;
        }
        sums
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_nodes]; self.n_nodes];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    /// Restricts the matrix to the rows and columns in `keep`.
    ///
    /// Columns are not renormalized: mass on edges leaving the kept set is
    /// dropped. The returned map sends reduced indices back to original ones
    /// and is sorted ascending.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<(TransitionMatrix, Vec<usize>)> {
        if keep.is_empty() {
            return Err(Error::param("induced subgraph of an empty index set"));
        }
        let map: Vec<usize> = keep
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if let Some(&last) = map.last() {
            if last >= self.n_nodes {
                return Err(Error::NodeOutOfRange {
                    index: last,
                    n_nodes: self.n_nodes,
                });
            }
        }
        const ABSENT: usize = usize::MAX;
        let mut reduced_of = vec![ABSENT; self.n_nodes];
        for (r, &orig) in map.iter().enumerate() {
            reduced_of[orig] = r;
        }
        let m = map.len();
        let mut row_ptr = Vec::with_capacity(m + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut has_mass = vec![false; m];
        for &orig_row in &map {
            for (j, v) in self.row(orig_row) {
                let rj = reduced_of[j];
                if rj != ABSENT {
                    col_idx.push(rj);
                    values.push(v);
                    if v != 0.0 {
                        has_mass[rj] = true;
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
        let dangling = (0..m).filter(|&j| !has_mass[j]).collect();
        Ok((
            TransitionMatrix {
                n_nodes: m,
                row_ptr,
                col_idx,
                values,
                dangling,
            },
            map,
        ))
    }
}

/// Binary node-by-class indicator matrix. Nodes may carry several classes or
/// none.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelMatrix {
    n_nodes: usize,
    n_classes: usize,
    class_names: Vec<String>,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn new(n_nodes: usize, n_classes: usize) -> Self {
        LabelMatrix {
            n_nodes,
            n_classes,
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            data: vec![0; n_nodes * n_classes],
        }
    }

    pub fn with_class_names(n_nodes: usize, class_names: Vec<String>) -> Self {
        let n_classes = class_names.len();
        LabelMatrix {
            n_nodes,
            n_classes,
            class_names,
            data: vec![0; n_nodes * n_classes],
        }
    }

    /// Parses `node_id<TAB>label1,label2,...` lines against `graph`'s node
    /// names. Class indices follow the sorted order of label names.
    pub fn parse(text: &str, graph: &Graph) -> Result<LabelMatrix> {
        let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
        let mut names = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, ['\t', ' ']);
            let node = parts.next().unwrap_or_default();
            let labels = parts.next().map(str::trim).unwrap_or_default();
            if labels.is_empty() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("node `{node}` has no label list"),
                });
            }
            let idx = graph
                .node_index(node)
                .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
            let ls: Vec<&str> = labels
                .split(',')
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            names.extend(ls.iter().copied());
            rows.push((idx, ls));
        }
        let class_names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let mut m = LabelMatrix::with_class_names(graph.n_nodes(), class_names);
        for (idx, ls) in rows {
            for l in ls {
                let c = m
                    .class_names
                    .binary_search_by(|n| n.as_str().cmp(l))
                    .expect("label interned above");
                m.set(idx, c, true);
            }
        }
        Ok(m)
    }

    pub fn from_assignments(
        n_nodes: usize,
        n_classes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut m = LabelMatrix::new(n_nodes, n_classes);
        for (node, class) in pairs {
            if node >= n_nodes {
                return Err(Error::NodeOutOfRange {
                    index: node,
                    n_nodes,
                });
            }
            if class >= n_classes {
                return Err(Error::param(format!(
                    "class {class} out of range for {n_classes} classes"
                )));
            }
            m.set(node, class, true);
        }
        Ok(m)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn set(&mut self, node: usize, class: usize, on: bool) {
        self.data[node * self.n_classes + class] = on as u8;
    }

    pub fn has(&self, node: usize, class: usize) -> bool {
        self.data[node * self.n_classes + class] != 0
    }

    pub fn row(&self, node: usize) -> &[u8] {
        &self.data[node * self.n_classes..(node + 1) * self.n_classes]
    }

    pub fn classes_of(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(node)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(c, _)| c)
    }

    pub fn label_count(&self, node: usize) -> usize {
        self.row(node).iter().filter(|&&v| v != 0).count()
    }

    pub fn is_labeled(&self, node: usize) -> bool {
        self.row(node).iter().any(|&v| v != 0)
    }

    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes).filter(|&i| self.is_labeled(i)).collect()
    }

    /// Label row as a dense 0/1 target vector.
    pub fn target(&self, node: usize) -> Vec<f64> {
        self.row(node).iter().map(|&v| f64::from(v)).collect()
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, nodes: &[usize]) -> LabelMatrix {
        let mut m = LabelMatrix::with_class_names(nodes.len(), self.class_names.clone());
        for (r, &node) in nodes.iter().enumerate() {
            m.data[r * self.n_classes..(r + 1) * self.n_classes].copy_from_slice(self.row(node));
        }
        m
    }
}
