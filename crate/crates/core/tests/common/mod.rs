//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the solver code paths it checks: lengths are
//! summed edge by edge, optimal cycles come from plain permutation search and
//! partitions from restricted-growth-string enumeration.

#![allow(dead_code)]

use std::collections::HashMap;

use glop_core::{Point, RoutingInstance};

pub fn euclid(a: Point, b: Point) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Closed-tour length summed edge by edge from coordinates.
pub fn closed_length(coords: &[Point], order: &[usize]) -> f64 {
    let m = order.len();
    (0..m).map(|k| euclid(coords[order[k]], coords[order[(k + 1) % m]])).sum()
}

pub fn open_length(coords: &[Point], order: &[usize]) -> f64 {
    order.windows(2).map(|w| euclid(coords[w[0]], coords[w[1]])).sum()
}

/// Calls `f` on every permutation of `v` (Heap's algorithm).
pub fn for_each_permutation(v: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    fn rec(k: usize, v: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if k <= 1 {
            f(v);
            return;
        }
        for i in 0..k - 1 {
            rec(k - 1, v, f);
            if k.is_multiple_of(2) {
                v.swap(i, k - 1);
            } else {
                v.swap(0, k - 1);
            }
        }
        rec(k - 1, v, f);
    }
    let k = v.len();
    rec(k, v, f);
}

/// Shortest closed tour through `depot` and `nodes`, by exhaustive search.
pub fn brute_cycle(coords: &[Point], depot: usize, nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    let mut v = nodes.to_vec();
    for_each_permutation(&mut v, &mut |p| {
        let mut len = euclid(coords[depot], coords[p[0]]) + euclid(coords[p[p.len() - 1]], coords[depot]);
        for w in p.windows(2) {
            len += euclid(coords[w[0]], coords[w[1]]);
        }
        best = best.min(len);
    });
    best
}

/// Shortest open path from `path[0]` to `path[n-1]` through every interior
/// node, by exhaustive search.
pub fn brute_path(coords: &[Point]) -> f64 {
    let n = coords.len();
    if n <= 2 {
        return open_length(coords, &(0..n).collect::<Vec<_>>());
    }
    let mut best = f64::INFINITY;
    let mut inner: Vec<usize> = (1..n - 1).collect();
    for_each_permutation(&mut inner, &mut |p| {
        let mut order = vec![0];
        order.extend_from_slice(p);
        order.push(n - 1);
        best = best.min(open_length(coords, &order));
    });
    best
}

/// Every set partition of `items`.
pub fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let n = items.len();
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut rgs = vec![0usize; n];
    loop {
        let blocks = rgs.iter().max().unwrap() + 1;
        let mut p = vec![Vec::new(); blocks];
        for (i, &b) in rgs.iter().enumerate() {
            p[b].push(items[i]);
        }
        out.push(p);
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            let m = rgs[..i].iter().max().copied().unwrap();
            if rgs[i] <= m {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

pub fn bell(n: usize) -> usize {
    let mut row = vec![1usize];
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for &x in &row {
            let v = next.last().unwrap() + x;
            next.push(v);
        }
        row = next;
    }
    row[0]
}

/// Optimal CVRP objective by enumerating every capacity-feasible partition of
/// the customers and routing each block exhaustively.
pub fn cvrp_optimum(inst: &RoutingInstance) -> f64 {
    let customers: Vec<usize> = (0..inst.len()).filter(|&i| i != inst.depot).collect();
    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut best = f64::INFINITY;
    for p in set_partitions(&customers) {
        if p.iter().any(|b| b.iter().map(|&i| inst.demands[i]).sum::<f64>() > inst.capacity) {
            continue;
        }
        let mut total = 0.0;
        for b in &p {
            let c = *memo.entry(b.clone()).or_insert_with(|| brute_cycle(&inst.coords, inst.depot, b));
            total += c;
        }
        best = best.min(total);
    }
    best
}

/// Probability of each feasible first action from the depot under a dense
/// heatmap: `h[0][j] / sum_k h[0][k]`.
pub fn first_action_probs(h: &[Vec<f64>], feasible: &[usize]) -> Vec<f64> {
    let z: f64 = feasible.iter().map(|&j| h[0][j]).sum();
    feasible.iter().map(|&j| h[0][j] / z).collect()
}

/// Fraction of consecutive window means (window `w`) that do not increase.
pub fn nonincreasing_window_fraction(xs: &[f64], w: usize) -> f64 {
    let means: Vec<f64> = xs.chunks_exact(w).map(|c| c.iter().sum::<f64>() / w as f64).collect();
    if means.len() < 2 {
        return 1.0;
    }
    let ok = means.windows(2).filter(|p| p[1] <= p[0]).count();
    ok as f64 / (means.len() - 1) as f64
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
