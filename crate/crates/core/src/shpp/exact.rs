//! Exact SHPP solvers: brute force and Held-Karp.
//!
//! Both score a path right to left, `d(s,a) + (d(a,b) + (.. + d(z,t)))`,
//! which is the association the DP recurrence produces. With the same
//! association and lexicographic tie-breaking the two solvers return the
//! same path bit for bit.

use crate::error::{GlopError, Result};
use crate::task::ShppTask;
use crate::types::PathOrder;

pub const BRUTE_FORCE_MAX: usize = 9;
pub const HELD_KARP_MAX: usize = 16;

fn right_assoc_cost(d: &dyn Fn(usize, usize) -> f64, path: &[usize]) -> f64 {
    let mut acc = 0.0;
    for w in path.windows(2).rev() {
        acc += d(w[0], w[1]);
    }
    acc
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Enumerates every interior ordering in lexicographic order and keeps the
/// first minimum.
pub fn brute_force_shpp(task: &ShppTask) -> Result<PathOrder> {
    let n = task.len();
    if n > BRUTE_FORCE_MAX {
        return Err(GlopError::TooLarge { solver: "bf", n, cap: BRUTE_FORCE_MAX });
    }
    if n <= 3 {
        return Ok(PathOrder::identity(n));
    }
    let d = |i: usize, j: usize| task.d(i, j);
    let mut path: Vec<usize> = (0..n).collect();
    let mut best = path.clone();
    let mut best_cost = right_assoc_cost(&d, &path);
    while next_permutation(&mut path[1..n - 1]) {
        let c = right_assoc_cost(&d, &path);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&path);
        }
    }
    Ok(PathOrder(best))
}

pub fn held_karp_shpp(task: &ShppTask) -> Result<PathOrder> {
    let n = task.len();
    if n > HELD_KARP_MAX {
        return Err(GlopError::TooLarge { solver: "dp", n, cap: HELD_KARP_MAX });
    }
    if n <= 3 {
        return Ok(PathOrder::identity(n));
    }
    Ok(PathOrder(held_karp_path(n, &|i, j| task.d(i, j))))
}

/// Optimal closed tour over `k` nodes under `d`, starting at node 0.
pub fn held_karp_cycle(k: usize, d: &dyn Fn(usize, usize) -> f64) -> Result<Vec<usize>> {
    if k > HELD_KARP_MAX {
        return Err(GlopError::TooLarge { solver: "dp", n: k, cap: HELD_KARP_MAX });
    }
    if k < 3 {
        return Ok((0..k).collect());
    }
    if k == 3 {
        let fwd = d(0, 1) + (d(1, 2) + d(2, 0));
        let bwd = d(0, 2) + (d(2, 1) + d(1, 0));
        return Ok(if bwd < fwd { vec![0, 2, 1] } else { vec![0, 1, 2] });
    }
    // Virtual terminal k is a copy of node 0.
    let dv = |i: usize, j: usize| d(if i == k { 0 } else { i }, if j == k { 0 } else { j });
    let mut p = held_karp_path(k + 1, &dv);
    p.pop();
    Ok(p)
}

/// Held-Karp over virtual nodes `0..n` from 0 to `n-1`.
///
/// `g[S][j]` is the cheapest way to start at interior node `j`, visit the
/// rest of `S` and finish at the terminal. Parents are chosen by a strict
/// `<` scan in ascending order, so forward reconstruction yields the
/// lexicographically smallest optimal path.
fn held_karp_path(n: usize, d: &dyn Fn(usize, usize) -> f64) -> Vec<usize> {
    let m = n - 2;
    let t = n - 1;
    let full = (1usize << m) - 1;
    let mut g = vec![f64::INFINITY; (1 << m) * m];
    let mut parent = vec![u8::MAX; (1 << m) * m];
    for j in 0..m {
        g[(1 << j) * m + j] = d(j + 1, t);
    }
    for s in 1..=full {
        if s.count_ones() < 2 {
            continue;
        }
        for j in 0..m {
            if s & (1 << j) == 0 {
                continue;
            }
            let rest = s & !(1 << j);
            let mut best = f64::INFINITY;
            let mut arg = u8::MAX;
            for k in 0..m {
                if rest & (1 << k) == 0 {
                    continue;
                }
                let c = d(j + 1, k + 1) + g[rest * m + k];
                if c < best {
                    best = c;
                    arg = k as u8;
                }
            }
            g[s * m + j] = best;
            parent[s * m + j] = arg;
        }
    }
    let mut first = 0;
    let mut best = f64::INFINITY;
    for j in 0..m {
        let c = d(0, j + 1) + g[full * m + j];
        if c < best {
            best = c;
            first = j;
        }
    }
    let mut path = Vec::with_capacity(n);
    path.push(0);
    let (mut s, mut j) = (full, first);
    loop {
        path.push(j + 1);
        let k = parent[s * m + j];
        if k == u8::MAX {
            break;
        }
        s &= !(1 << j);
        j = k as usize;
    }
    path.push(t);
    path
}
