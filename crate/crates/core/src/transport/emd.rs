//! Exact transport by the primal network simplex on the bipartite graph.
//!
//! Supply nodes ship to demand nodes over complete bipartite arcs; every node
//! also starts with an artificial arc to a root (supplies at cost 0, demands
//! at a prohibitive cost), which yields a strongly feasible initial tree.
//! Entering arcs are chosen by block search; the leaving arc follows the
//! strongly feasible tie rule, so degenerate pivots cannot cycle. Arcs outside
//! the tree always carry zero flow (there are no capacities), so only tree
//! arcs are stored.

use ndarray::{Array2, ArrayView2};

use super::plan::{check_cost, normalize, transport_cost, TransportPlan};
use crate::error::{Error, Result};

const ARTIFICIAL: usize = usize::MAX;

struct Simplex {
    ns: usize,
    nd: usize,
    cost: Vec<f64>,
    root: usize,
    parent: Vec<usize>,
    /// Real arc `i * nd + j` joining the node to its parent, or `ARTIFICIAL`.
    pred: Vec<usize>,
    /// Whether the pred arc points from the node to its parent.
    up: Vec<bool>,
    flow: Vec<f64>,
    pi: Vec<f64>,
    children: Vec<Vec<usize>>,
    stamp: Vec<u32>,
    round: u32,
    art_cost: f64,
    next_arc: usize,
    block: usize,
    tol: f64,
}

impl Simplex {
    fn new(s: &[f64], d: &[f64], cost: Vec<f64>) -> Self {
        let (ns, nd) = (s.len(), d.len());
        let nodes = ns + nd;
        let root = nodes;
        let max_c = cost.iter().cloned().fold(0.0, f64::max);
        let art_cost = (max_c + 1.0) * (nodes + 1) as f64;
        let mut parent = vec![root; nodes + 1];
        let mut up = vec![true; nodes + 1];
        let mut flow = vec![0.0; nodes + 1];
        let mut pi = vec![0.0; nodes + 1];
        flow[..ns].copy_from_slice(&s[..ns]);
        for (j, &dj) in d.iter().enumerate().take(nd) {
            let u = ns + j;
            up[u] = false;
            flow[u] = dj;
            pi[u] = art_cost;
        }
        parent[root] = root;
        let mut children = vec![Vec::new(); nodes + 1];
        children[root] = (0..nodes).collect();
        let arcs = ns * nd;
        Simplex {
            ns,
            nd,
            cost,
            root,
            parent,
            pred: vec![ARTIFICIAL; nodes + 1],
            up,
            flow,
            pi,
            children,
            stamp: vec![0; nodes + 1],
            round: 0,
            art_cost,
            next_arc: 0,
            block: ((arcs as f64).sqrt().ceil() as usize).max(10),
            tol: 1e-13 * art_cost,
        }
    }

    fn reduced(&self, arc: usize) -> f64 {
        let (i, j) = (arc / self.nd, arc % self.nd);
        self.cost[arc] + self.pi[i] - self.pi[self.ns + j]
    }

    fn pred_cost(&self, u: usize) -> f64 {
        match self.pred[u] {
            ARTIFICIAL if self.up[u] => 0.0,
            ARTIFICIAL => self.art_cost,
            arc => self.cost[arc],
        }
    }

    /// Block search pricing: scan blocks cyclically, stop at the first block with a negative arc.
    fn entering(&mut self) -> Option<usize> {
        let arcs = self.ns * self.nd;
        let mut best = -self.tol;
        let mut best_arc = None;
        let mut cnt = self.block;
        for k in 0..arcs {
            let e = (self.next_arc + k) % arcs;
            let rc = self.reduced(e);
            if rc < best {
                best = rc;
                best_arc = Some(e);
            }
            cnt -= 1;
            if cnt == 0 {
                if best_arc.is_some() {
                    self.next_arc = (e + 1) % arcs;
                    return best_arc;
                }
                cnt = self.block;
            }
        }
        if let Some(e) = best_arc {
            self.next_arc = (e + 1) % arcs;
        }
        best_arc
    }

    fn join(&mut self, a: usize, b: usize) -> usize {
        self.round += 1;
        let r = self.round;
        let mut u = a;
        loop {
            self.stamp[u] = r;
            if u == self.root {
                break;
            }
            u = self.parent[u];
        }
        let mut v = b;
        while self.stamp[v] != r {
            v = self.parent[v];
        }
        v
    }

    fn remove_child(&mut self, p: usize, c: usize) {
        let kids = &mut self.children[p];
        let pos = kids
            .iter()
            .position(|&x| x == c)
            .expect("child listed under parent");
        kids.swap_remove(pos);
    }

    fn pivot(&mut self, in_arc: usize) {
        let first = in_arc / self.nd;
        let second = self.ns + in_arc % self.nd;
        let join = self.join(first, second);

        // Leaving arc: first path strict, second path non-strict.
        let mut delta = f64::INFINITY;
        let mut u_out = usize::MAX;
        let mut on_first = true;
        let mut u = first;
        while u != join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
                on_first = true;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                on_first = false;
            }
            u = self.parent[u];
        }
        debug_assert!(
            u_out != usize::MAX,
            "uncapacitated cycle must have a blocking arc"
        );

        if delta > 0.0 {
            let mut u = first;
            while u != join {
                self.flow[u] += if self.up[u] { -delta } else { delta };
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                self.flow[u] += if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if on_first {
            (first, second)
        } else {
            (second, first)
        };

        // Reverse the tree path u_in .. u_out so u_in hangs from v_in.
        let mut path = vec![u_in];
        while *path.last().unwrap() != u_out {
            let next = self.parent[*path.last().unwrap()];
            path.push(next);
        }
        let old_parent = self.parent[u_out];
        self.remove_child(old_parent, u_out);
        for t in (1..path.len()).rev() {
            let (node, child) = (path[t], path[t - 1]);
            self.pred[node] = self.pred[child];
            self.up[node] = !self.up[child];
            self.flow[node] = self.flow[child];
            self.remove_child(node, child);
            self.parent[node] = child;
            self.children[child].push(node);
        }
        self.pred[u_in] = in_arc;
        self.up[u_in] = u_in == first;
        self.flow[u_in] = delta;
        self.parent[u_in] = v_in;
        self.children[v_in].push(u_in);

        let target = if self.up[u_in] {
            self.pi[v_in] - self.pred_cost(u_in)
        } else {
            self.pi[v_in] + self.pred_cost(u_in)
        };
        let sigma = target - self.pi[u_in];
        if sigma != 0.0 {
            let mut stack = vec![u_in];
            while let Some(x) = stack.pop() {
                self.pi[x] += sigma;
                stack.extend_from_slice(&self.children[x]);
            }
        }
    }

    fn run(&mut self, max_pivots: usize) -> Result<usize> {
        let mut pivots = 0;
        while let Some(e) = self.entering() {
            if pivots == max_pivots {
                return Err(Error::Solver(format!(
                    "network simplex exceeded {max_pivots} pivots"
                )));
            }
            self.pivot(e);
            pivots += 1;
        }
        Ok(pivots)
    }
}

/// Exact earth mover's distance between two mass vectors under cost `c`.
///
/// Both inputs are L1-normalized first (their totals are kept in the plan).
/// Zero-mass entries are removed before solving; their potentials are filled
/// in by the c-transform so the returned duals cover every index.
pub fn emd(p: &[f64], q: &[f64], c: ArrayView2<'_, f64>) -> Result<TransportPlan> {
    let (ps, sp) = normalize(p, "supply")?;
    let (qs, sq) = normalize(q, "demand")?;
    check_cost(c, ps.len(), qs.len())?;
    let rows: Vec<usize> = (0..ps.len()).filter(|&i| ps[i] > 0.0).collect();
    let cols: Vec<usize> = (0..qs.len()).filter(|&j| qs[j] > 0.0).collect();
    let s: Vec<f64> = rows.iter().map(|&i| ps[i]).collect();
    let d: Vec<f64> = cols.iter().map(|&j| qs[j]).collect();
    let mut cost = Vec::with_capacity(rows.len() * cols.len());
    for &i in &rows {
        for &j in &cols {
            cost.push(c[[i, j]]);
        }
    }
    let mut sx = Simplex::new(&s, &d, cost);
    let nodes = rows.len() + cols.len();
    let pivots = sx.run(200 * nodes * nodes + 10_000)?;

    let mut flow = Array2::<f64>::zeros((ps.len(), qs.len()));
    for u in 0..nodes {
        let arc = sx.pred[u];
        if arc != ARTIFICIAL {
            flow[[rows[arc / sx.nd], cols[arc % sx.nd]]] = sx.flow[u];
        }
    }

    let mut u = vec![f64::NAN; ps.len()];
    let mut v = vec![f64::NAN; qs.len()];
    for (k, &i) in rows.iter().enumerate() {
        u[i] = -sx.pi[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        v[j] = sx.pi[sx.ns + k];
    }
    for i in 0..ps.len() {
        if u[i].is_nan() {
            u[i] = cols
                .iter()
                .map(|&j| c[[i, j]] - v[j])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..qs.len() {
        if v[j].is_nan() {
            v[j] = rows
                .iter()
                .map(|&i| c[[i, j]] - u[i])
                .fold(f64::INFINITY, f64::min);
        }
    }

    let objective = transport_cost(c, &flow);
    let mut plan = TransportPlan {
        flow,
        objective,
        regularized: None,
        duals: Some((u, v)),
        supply_scale: sp,
        demand_scale: sq,
        converged: true,
        iterations: pivots,
        marginal_error: 0.0,
    };
    let rs = plan.row_sums();
    let cs = plan.col_sums();
    plan.marginal_error = rs.iter().zip(&ps).map(|(a, b)| (a - b).abs()).sum::<f64>()
        + cs.iter().zip(&qs).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::location_cost;
    use rand::{Rng, SeedableRng};

    fn line_cost(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| (i as f64 - j as f64).abs())
    }

    fn cdf_distance(p: &[f64], q: &[f64]) -> f64 {
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        let (mut a, mut b, mut acc) = (0.0, 0.0, 0.0);
        for k in 0..p.len() - 1 {
            a += p[k] / sp;
            b += q[k] / sq;
            acc += (a - b).abs();
        }
        acc
    }

    #[test]
    fn identical_marginals_cost_nothing() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let c = location_cost(2, 2, true).unwrap();
        let plan = emd(&p, &p, c.view()).unwrap();
        assert!(plan.objective.abs() < 1e-15);
        for (i, pi) in p.iter().enumerate() {
            assert!((plan.flow[[i, i]] - pi).abs() < 1e-15);
        }
    }

    #[test]
    fn point_masses() {
        let c = location_cost(3, 3, false).unwrap();
        let mut p = [0.0; 9];
        let mut q = [0.0; 9];
        p[0] = 2.0;
        q[8] = 5.0;
        let plan = emd(&p, &q, c.view()).unwrap();
        assert!((plan.objective - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(plan.supply_scale, 2.0);
    }

    #[test]
    fn line_graph_matches_cdf() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(2..9);
            let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let plan = emd(&p, &q, line_cost(n).view()).unwrap();
            assert!((plan.objective - cdf_distance(&p, &q)).abs() < 1e-12);
        }
    }

    #[test]
    fn duals_are_feasible_and_tight() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let c = location_cost(3, 4, true).unwrap();
        let p: Vec<f64> = (0..12)
            .map(|k| if k == 5 { 0.0 } else { rng.random() })
            .collect();
        let q: Vec<f64> = (0..12).map(|_| rng.random()).collect();
        let plan = emd(&p, &q, c.view()).unwrap();
        let (u, v) = plan.duals.clone().unwrap();
        let (ps, _) = normalize(&p, "p").unwrap();
        let (qs, _) = normalize(&q, "q").unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!(u[i] + v[j] <= c[[i, j]] + 1e-12);
            }
        }
        let dual: f64 = u.iter().zip(&ps).map(|(a, b)| a * b).sum::<f64>()
            + v.iter().zip(&qs).map(|(a, b)| a * b).sum::<f64>();
        assert!((dual - plan.objective).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_rejected() {
        let c = line_cost(2);
        assert!(matches!(
            emd(&[0.0, 0.0], &[1.0, 0.0], c.view()),
            Err(Error::Argument(_))
        ));
    }
}
