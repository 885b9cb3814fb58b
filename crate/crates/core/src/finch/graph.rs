use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// First-neighbor graph: `kappa[i]` is the nearest other sample, and an
/// undirected edge joins `i` and `j` when `kappa[i] == j`, `kappa[j] == i`
/// or `kappa[i] == kappa[j]`, unless vetoed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    n: usize,
    kappa: Vec<usize>,
    words: usize,
    bits: Vec<u64>,
}

impl NeighborGraph {
    fn empty(kappa: Vec<usize>) -> Self {
        let n = kappa.len();
        let words = n.div_ceil(64);
        NeighborGraph {
            n,
            kappa,
            words,
            bits: vec![0; n * words],
        }
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
        self.bits[j * self.words + i / 64] |= 1 << (i % 64);
    }

    /// Arbitrary undirected graph with no neighbour indices attached.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = NeighborGraph::empty(Vec::new());
        g.n = n;
        g.words = n.div_ceil(64);
        g.bits = vec![0; n * g.words];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::arg(format!("edge ({i}, {j}) invalid for {n} nodes")));
            }
            g.set(i, j);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> &[usize] {
        &self.kappa
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Neighbours of `i`, ascending.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.bits[i * self.words..(i + 1) * self.words];
        row.iter().enumerate().flat_map(|(w, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let b = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(w * 64 + b)
            })
        })
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| {
                self.neighbors(i)
                    .filter(move |&j| j > i)
                    .map(move |j| (i, j))
            })
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.bits
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum::<usize>()
            / 2
    }
}

/// `kappa[i] = argmin_{j != i} d[i][j]`, ties to the smallest index.
pub fn nearest_neighbors(d: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    let (n, m) = d.dim();
    if n != m {
        return Err(Error::arg(format!(
            "distance matrix must be square, got {n}x{m}"
        )));
    }
    if n < 2 {
        return Err(Error::arg("nearest neighbours need at least 2 samples"));
    }
    Ok((0..n)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let v = d[[i, j]];
                if best == usize::MAX || v < best_d {
                    best = j;
                    best_d = v;
                }
            }
            best
        })
        .collect())
}

/// Builds the first-neighbor adjacency, then removes every edge the veto rejects.
pub fn build_adjacency<F>(kappa: &[usize], veto: Option<F>) -> Result<NeighborGraph>
where
    F: Fn(usize, usize) -> bool,
{
    let n = kappa.len();
    if let Some(i) = (0..n).find(|&i| kappa[i] >= n || kappa[i] == i) {
        return Err(Error::arg(format!(
            "kappa[{i}] = {} is not a valid neighbour",
            kappa[i]
        )));
    }
    let mut g = NeighborGraph::empty(kappa.to_vec());
    let allowed = |i: usize, j: usize| veto.as_ref().is_none_or(|v| !v(i.min(j), i.max(j)));
    // i -- kappa[i] covers both the kappa_i = j and kappa_j = i cases.
    for (i, &j) in kappa.iter().enumerate() {
        if allowed(i, j) {
            g.set(i, j);
        }
    }
    // Samples sharing a nearest neighbour form a clique.
    let mut by_target: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        by_target[kappa[i]].push(i);
    }
    for group in &by_target {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                if allowed(i, j) {
                    g.set(i, j);
                }
            }
        }
    }
    Ok(g)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Smaller index becomes the root, so roots are component minima.
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// Component labels, 0-based and numbered in order of each component's smallest member.
pub fn connected_components(g: &NeighborGraph) -> Vec<usize> {
    let mut uf = UnionFind::new(g.n());
    for (i, j) in g.edges() {
        uf.union(i, j);
    }
    labels_from_roots((0..g.n()).map(|i| uf.find(i)).collect())
}

/// Relabels arbitrary group ids into contiguous labels ordered by first occurrence.
fn labels_from_roots(roots: Vec<usize>) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    roots
        .into_iter()
        .map(|r| {
            let next = map.len();
            *map.entry(r).or_insert(next)
        })
        .collect()
}
