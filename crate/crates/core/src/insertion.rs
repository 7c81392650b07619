//! Random Insertion tour construction.
//!
//! Nodes are taken in a uniformly random order. The first two form a 2-cycle;
//! each later node goes between the tour neighbours `(a, b)` that minimise
//! `d(a,v) + d(v,b) - d(a,b)`, ties resolved towards the lowest edge index.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::rng::Rng;
use crate::types::{RoutingInstance, Tour};

pub fn random_insertion(instance: &RoutingInstance, rng: &mut Rng) -> Tour {
    let mut order: Vec<usize> = (0..instance.len()).collect();
    order.shuffle(rng);
    insertion_tour(instance, &order)
}

/// `w` tours, tour `i` built from the child stream `rng.child(i)`.
pub fn random_insertion_multi(instance: &RoutingInstance, w: usize, rng: &Rng) -> Vec<Tour> {
    (0..w)
        .into_par_iter()
        .map(|i| random_insertion(instance, &mut rng.child(i as u64)))
        .collect()
}

/// Cheapest insertion with a fixed insertion order.
pub fn insertion_tour(instance: &RoutingInstance, order: &[usize]) -> Tour {
    if instance.is_euclidean() {
        insert_euclidean(instance, order)
    } else {
        insert_generic(instance, order)
    }
}

/// Position `k` of the cheapest edge `(tour[k], tour[k+1 mod m])` for `v`,
/// with its insertion cost.
pub fn cheapest_edge(instance: &RoutingInstance, tour: &[usize], v: usize) -> (usize, f64) {
    let m = tour.len();
    let mut best = (0, f64::INFINITY);
    for k in 0..m {
        let a = tour[k];
        let b = tour[(k + 1) % m];
        let delta = instance.dist(a, v) + instance.dist(v, b) - instance.dist(a, b);
        if delta < best.1 {
            best = (k, delta);
        }
    }
    best
}

fn insert_generic(instance: &RoutingInstance, order: &[usize]) -> Tour {
    let mut tour: Vec<usize> = Vec::with_capacity(order.len());
    for &v in order {
        if tour.len() < 2 {
            tour.push(v);
            continue;
        }
        let (k, _) = cheapest_edge(instance, &tour, v);
        tour.insert(k + 1, v);
    }
    Tour(tour)
}

// Coordinates and edge lengths are kept in tour order so the scan over
// candidate edges is a linear pass over contiguous memory.
fn insert_euclidean(instance: &RoutingInstance, order: &[usize]) -> Tour {
    let n = order.len();
    let pts = &instance.coords;
    let mut tour: Vec<usize> = Vec::with_capacity(n);
    let mut xs: Vec<f64> = Vec::with_capacity(n + 1);
    let mut ys: Vec<f64> = Vec::with_capacity(n + 1);
    let mut edge: Vec<f64> = Vec::with_capacity(n);
    let mut dv: Vec<f64> = Vec::with_capacity(n + 1);

    for &v in order {
        let p = pts[v];
        let m = tour.len();
        if m < 2 {
            tour.push(v);
            xs.push(p.x);
            ys.push(p.y);
            if m == 1 {
                let d = pts[tour[0]].dist(&p);
                edge.clear();
                edge.push(d);
                edge.push(d);
            }
            continue;
        }
        // xs/ys carry a copy of the first node at the end to close the cycle.
        xs.push(xs[0]);
        ys.push(ys[0]);
        dv.clear();
        dv.extend(xs.iter().zip(ys.iter()).map(|(&x, &y)| {
            let dx = x - p.x;
            let dy = y - p.y;
            (dx * dx + dy * dy).sqrt()
        }));
        xs.pop();
        ys.pop();

        let mut best_k = 0;
        let mut best = f64::INFINITY;
        for k in 0..m {
            let delta = dv[k] + dv[k + 1] - edge[k];
            if delta < best {
                best = delta;
                best_k = k;
            }
        }
        let (da, db) = (dv[best_k], dv[best_k + 1]);
        tour.insert(best_k + 1, v);
        xs.insert(best_k + 1, p.x);
        ys.insert(best_k + 1, p.y);
        edge[best_k] = da;
        edge.insert(best_k + 1, db);
    }
    Tour(tour)
}
