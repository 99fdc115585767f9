//! Weighted adjacency graphs of sparse matrices and load-balanced s-way
//! partitions with the symmetric permutation they induce.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Default relative slack on block node counts.
pub const DEFAULT_IMBALANCE_TOL: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub weight: f64,
    /// Whether the matrix stores the `(owner, to)` entry itself.
    pub(crate) forward: bool,
}

/// Undirected graph with symmetric positive edge weights and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adjacency: Vec<Vec<Edge>>,
    has_diagonal: Vec<bool>,
}

impl WeightedGraph {
    /// Builds a graph from an undirected edge list. Each pair may appear once
    /// in either orientation; weights must be positive.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) outside 0..{n}"
                )));
            }
            if i == j || w.partial_cmp(&0.0) != Some(Ordering::Greater) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) must join distinct nodes with positive weight"
                )));
            }
            adjacency[i].push(Edge {
                to: j,
                weight: w,
                forward: true,
            });
            adjacency[j].push(Edge {
                to: i,
                weight: w,
                forward: true,
            });
        }
        for list in &mut adjacency {
            list.sort_by_key(|e| e.to);
            if list.windows(2).any(|w| w[0].to == w[1].to) {
                return Err(Error::InvalidArgument("duplicate edge".into()));
            }
        }
        Ok(Self {
            adjacency,
            has_diagonal: vec![true; n],
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[Edge] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Weight of edge `(i, j)`, if present.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let list = &self.adjacency[i];
        list.binary_search_by_key(&j, |e| e.to)
            .ok()
            .map(|k| list[k].weight)
    }

    /// True when every `(i, j, w)` has a matching `(j, i, w)`, weights are
    /// positive and there are no self-loops.
    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(i, list)| {
            list.iter()
                .all(|e| e.to != i && e.weight > 0.0 && self.weight(e.to, i) == Some(e.weight))
        })
    }

    /// Total weight of edges whose endpoints lie in different blocks.
    pub fn cut_weight(&self, assignment: &[usize]) -> f64 {
        let mut cut = 0.0;
        for (i, list) in self.adjacency.iter().enumerate() {
            for e in list {
                if i < e.to && assignment[i] != assignment[e.to] {
                    cut += e.weight;
                }
            }
        }
        cut
    }

    // Stored entries of each induced diagonal block.
    fn block_nnz(&self, assignment: &[usize], num_blocks: usize) -> Vec<usize> {
        let mut nnz = vec![0usize; num_blocks];
        for (i, list) in self.adjacency.iter().enumerate() {
            let b = assignment[i];
            nnz[b] += usize::from(self.has_diagonal[i]);
            nnz[b] += list
                .iter()
                .filter(|e| e.forward && assignment[e.to] == b)
                .count();
        }
        nnz
    }
}

/// Graph of a square matrix: edge `(i, j)` for `i != j` whenever `a_ij` or
/// `a_ji` is nonzero, weighted by `(|a_ij| + |a_ji|) / 2`.
pub fn graph_from_matrix(a: &CsrMatrix) -> Result<WeightedGraph> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            nrows: a.nrows(),
            ncols: a.ncols(),
        });
    }
    let n = a.nrows();
    let at = a.transpose();
    let mut adjacency = Vec::with_capacity(n);
    let mut has_diagonal = vec![false; n];
    for i in 0..n {
        let (rc, rv) = a.row(i);
        let (tc, tv) = at.row(i);
        let mut list = Vec::with_capacity(rc.len().max(tc.len()));
        let (mut p, mut q) = (0, 0);
        while p < rc.len() || q < tc.len() {
            let cp = rc.get(p).copied().unwrap_or(usize::MAX);
            let cq = tc.get(q).copied().unwrap_or(usize::MAX);
            let j = cp.min(cq);
            let aij = if cp == j { rv[p] } else { 0.0 };
            let aji = if cq == j { tv[q] } else { 0.0 };
            if cp == j {
                p += 1;
            }
            if cq == j {
                q += 1;
            }
            if j == i {
                has_diagonal[i] = aij != 0.0;
                continue;
            }
            if aij != 0.0 || aji != 0.0 {
                list.push(Edge {
                    to: j,
                    weight: 0.5 * (aij.abs() + aji.abs()),
                    forward: aij != 0.0,
                });
            }
        }
        adjacency.push(list);
    }
    Ok(WeightedGraph {
        adjacency,
        has_diagonal,
    })
}

/// Node-to-block assignment together with the permutation that gathers each
/// block contiguously (blocks ascending, original order kept inside a block).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    num_blocks: usize,
    assignment: Vec<usize>,
    block_sizes: Vec<usize>,
    block_nnz: Vec<usize>,
    perm: Vec<usize>,
    imbalance: f64,
}

impl Partition {
    /// Validates an assignment and derives the gathering permutation.
    ///
    /// Until measured against a matrix (see [`Partition::measure`]) the block
    /// work is taken to be the block dimension.
    pub fn from_assignment(assignment: Vec<usize>, num_blocks: usize) -> Result<Self> {
        let n = assignment.len();
        if num_blocks == 0 || num_blocks > n {
            return Err(Error::InvalidPartition(format!(
                "{num_blocks} blocks for {n} nodes (need 1 <= s <= n)"
            )));
        }
        let mut block_sizes = vec![0usize; num_blocks];
        for (i, &b) in assignment.iter().enumerate() {
            if b >= num_blocks {
                return Err(Error::InvalidPartition(format!(
                    "node {i} assigned to block {b}, expected < {num_blocks}"
                )));
            }
            block_sizes[b] += 1;
        }
        if let Some(b) = block_sizes.iter().position(|&c| c == 0) {
            return Err(Error::InvalidPartition(format!("block {b} is empty")));
        }
        let mut next = vec![0usize; num_blocks];
        for b in 1..num_blocks {
            next[b] = next[b - 1] + block_sizes[b - 1];
        }
        let perm = assignment
            .iter()
            .map(|&b| {
                let p = next[b];
                next[b] += 1;
                p
            })
            .collect();
        let block_nnz = block_sizes.clone();
        let imbalance = imbalance_of(&block_nnz);
        Ok(Self {
            num_blocks,
            assignment,
            block_sizes,
            block_nnz,
            perm,
            imbalance,
        })
    }

    /// Recomputes per-block nonzero counts from the diagonal blocks of `a`.
    pub fn measure(mut self, a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != self.len() || !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: a.nrows(),
            });
        }
        let mut nnz = vec![0usize; self.num_blocks];
        for i in 0..a.nrows() {
            let b = self.assignment[i];
            nnz[b] += a
                .row(i)
                .0
                .iter()
                .filter(|&&j| self.assignment[j] == b)
                .count();
        }
        self.imbalance = imbalance_of(&nnz);
        self.block_nnz = nnz;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn block_nnz(&self) -> &[usize] {
        &self.block_nnz
    }

    /// Old-to-new index map `Q`: node `i` lands at position `perm()[i]`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Maximum block work divided by mean block work.
    pub fn imbalance(&self) -> f64 {
        self.imbalance
    }

    /// Index ranges of each block in the permuted ordering.
    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.block_sizes
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }
}

fn imbalance_of(work: &[usize]) -> f64 {
    let total: usize = work.iter().sum();
    if total == 0 {
        return 1.0;
    }
    let mean = total as f64 / work.len() as f64;
    *work.iter().max().expect("at least one block") as f64 / mean
}

/// Frontier order: larger connection weight to the block first, then fewer
/// hops from the block's seed, then smaller node index.
#[derive(Debug, Clone, Copy)]
struct GrowKey(f64, usize, usize);

impl PartialEq for GrowKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for GrowKey {}

impl PartialOrd for GrowKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GrowKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

// Seed order: fewest unassigned neighbours, then highest degree, then index.
type SeedKey = (usize, Reverse<usize>, usize);

const UNASSIGNED: usize = usize::MAX;

/// Splits `g` into `num_blocks` blocks with a greedy region-growing pass and
/// one boundary-refinement sweep.
///
/// Blocks are grown one at a time. Each starts from the unassigned node with
/// the fewest unassigned neighbours (a corner of what is left, preferring
/// high degree), and repeatedly absorbs the frontier node most strongly
/// connected to the block, nearer nodes first. Seeding in corners keeps the
/// leftover region compact, so late blocks do not degenerate into slivers.
/// Node counts stay within `(1 + imbalance_tol) * n / s`. Nodes without
/// edges are dealt to the currently smallest block at the end. Remaining
/// ties break toward the smaller index, so the result is deterministic.
pub fn partition_graph(
    g: &WeightedGraph,
    num_blocks: usize,
    imbalance_tol: f64,
) -> Result<Partition> {
    let n = g.node_count();
    if num_blocks == 0 || num_blocks > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} nodes into {num_blocks} blocks"
        )));
    }
    if imbalance_tol.is_nan() || imbalance_tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "imbalance tolerance must be >= 0, got {imbalance_tol}"
        )));
    }

    let isolated: Vec<usize> = (0..n).filter(|&i| g.degree(i) == 0).collect();
    let connected = n - isolated.len();
    let targets: Vec<usize> = (0..num_blocks)
        .map(|b| connected / num_blocks + usize::from(b < connected % num_blocks))
        .collect();

    let mut free_neighbors: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let seed_key = |free: &[usize], i: usize| -> SeedKey { (free[i], Reverse(g.degree(i)), i) };
    let mut seeds: BTreeSet<SeedKey> = (0..n)
        .filter(|&i| g.degree(i) > 0)
        .map(|i| seed_key(&free_neighbors, i))
        .collect();

    let mut assignment = vec![UNASSIGNED; n];
    let mut sizes = vec![0usize; num_blocks];
    let mut conn = vec![0.0f64; n];
    let mut depth = vec![0usize; n];
    let mut in_frontier = vec![false; n];

    for (b, &target) in targets.iter().enumerate() {
        let mut frontier: BTreeSet<GrowKey> = BTreeSet::new();
        let mut touched: Vec<usize> = Vec::new();
        while sizes[b] < target {
            let next = match frontier.pop_first() {
                Some(GrowKey(_, _, v)) => {
                    in_frontier[v] = false;
                    v
                }
                None => {
                    let (_, _, v) = *seeds.first().expect("unassigned nodes remain");
                    depth[v] = 0;
                    v
                }
            };
            seeds.remove(&seed_key(&free_neighbors, next));
            assignment[next] = b;
            sizes[b] += 1;
            for e in g.neighbors(next) {
                let u = e.to;
                if assignment[u] != UNASSIGNED {
                    continue;
                }
                seeds.remove(&seed_key(&free_neighbors, u));
                free_neighbors[u] -= 1;
                seeds.insert(seed_key(&free_neighbors, u));
                if in_frontier[u] {
                    frontier.remove(&GrowKey(conn[u], depth[u], u));
                } else {
                    in_frontier[u] = true;
                    depth[u] = depth[next] + 1;
                    touched.push(u);
                }
                conn[u] += e.weight;
                frontier.insert(GrowKey(conn[u], depth[u], u));
            }
        }
        for u in touched {
            conn[u] = 0.0;
            in_frontier[u] = false;
        }
    }

    for v in isolated {
        let b = (0..num_blocks)
            .min_by_key(|&b| (sizes[b], b))
            .expect("num_blocks >= 1");
        assignment[v] = b;
        sizes[b] += 1;
    }

    let cap = (n as f64 * (1.0 + imbalance_tol) / num_blocks as f64)
        .floor()
        .max(n.div_ceil(num_blocks) as f64) as usize;
    refine_boundary(g, &mut assignment, &mut sizes, cap);

    let mut p = Partition::from_assignment(assignment, num_blocks)?;
    p.block_nnz = g.block_nnz(&p.assignment, num_blocks);
    p.imbalance = imbalance_of(&p.block_nnz);
    Ok(p)
}

// Single Kernighan-Lin style sweep: move a node to the neighbouring block it
// is most strongly tied to when that strictly reduces the cut and respects
// the size cap. Blocks never empty out.
fn refine_boundary(g: &WeightedGraph, assignment: &mut [usize], sizes: &mut [usize], cap: usize) {
    let mut ties: Vec<(usize, f64)> = Vec::new();
    for v in 0..g.node_count() {
        let home = assignment[v];
        ties.clear();
        let mut internal = 0.0;
        for e in g.neighbors(v) {
            let b = assignment[e.to];
            if b == home {
                internal += e.weight;
            } else if let Some(t) = ties.iter_mut().find(|t| t.0 == b) {
                t.1 += e.weight;
            } else {
                ties.push((b, e.weight));
            }
        }
        let best = ties
            .iter()
            .copied()
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
        if let Some((dest, external)) = best {
            if external > internal && sizes[dest] < cap && sizes[home] > 1 {
                assignment[v] = dest;
                sizes[home] -= 1;
                sizes[dest] += 1;
            }
        }
    }
}

/// Reads one 0-based block index per line.
pub fn import_partition<R: BufRead>(reader: R, n: usize, num_blocks: usize) -> Result<Partition> {
    let mut assignment = Vec::with_capacity(n);
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let b: usize = t.parse().map_err(|_| Error::Parse {
            line: k + 1,
            msg: format!("invalid block index '{t}'"),
        })?;
        if b >= num_blocks {
            return Err(Error::Parse {
                line: k + 1,
                msg: format!("block index {b} out of range 0..{num_blocks}"),
            });
        }
        assignment.push(b);
    }
    if assignment.len() != n {
        return Err(Error::InvalidPartition(format!(
            "expected {n} block indices, found {}",
            assignment.len()
        )));
    }
    Partition::from_assignment(assignment, num_blocks)
}

/// Writes one block index per line.
pub fn write_partition<W: Write>(p: &Partition, mut out: W) -> Result<()> {
    for b in p.assignment() {
        writeln!(out, "{b}")?;
    }
    Ok(())
}
