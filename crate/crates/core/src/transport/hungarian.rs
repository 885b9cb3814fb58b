use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::AssignCost;

/// Optimal one-to-one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    /// `(row, col)` pairs sorted by row; `min(n, m)` of them.
    pub pairs: Vec<(usize, usize)>,
    pub total: T,
}

/// Shortest augmenting path with potentials, for `n <= m`. Returns the column of each row.
fn solve_min<T: AssignCost>(a: ArrayView2<'_, T>) -> Vec<usize> {
    let (n, m) = a.dim();
    let zero = T::zero();
    // 1-based internals: index 0 is a virtual column.
    let mut u = vec![zero; n + 1];
    let mut v = vec![zero; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv: Vec<Option<T>> = vec![None; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta: Option<T> = None;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[[i0 - 1, j - 1]] - u[i0] - v[j];
                if minv[j].is_none_or(|mv| cur < mv) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].expect("just set");
                if delta.is_none_or(|d| mj < d) {
                    delta = Some(mj);
                    j1 = j;
                }
            }
            let delta = delta.expect("a free column remains while n <= m");
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(mv) = minv[j].as_mut() {
                    *mv = *mv - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            col_of[owner[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Optimal assignment of size `min(n, m)` minimizing (or maximizing) the total.
///
/// Integer costs are solved exactly; float costs must be finite.
pub fn hungarian<T: AssignCost>(cost: ArrayView2<'_, T>, maximize: bool) -> Result<Assignment<T>> {
    let (n, m) = cost.dim();
    if n == 0 || m == 0 {
        return Err(Error::arg("assignment needs a non-empty matrix"));
    }
    if let Some(v) = cost.iter().find(|v| !v.is_finite_cost()) {
        return Err(Error::Domain(format!("cost entry {v:?} is not finite")));
    }
    let work: Array2<T> = if maximize {
        cost.mapv(|v| -v)
    } else {
        cost.to_owned()
    };
    let mut pairs: Vec<(usize, usize)> = if n <= m {
        solve_min(work.view()).into_iter().enumerate().collect()
    } else {
        solve_min(work.t())
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect()
    };
    pairs.sort_unstable();
    let total = pairs
        .iter()
        .fold(T::zero(), |acc, &(i, j)| acc + cost[[i, j]]);
    Ok(Assignment { pairs, total })
}
