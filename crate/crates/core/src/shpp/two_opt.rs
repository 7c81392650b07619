use crate::error::Result;
use crate::task::ShppTask;
use crate::types::PathOrder;

const EPS: f64 = 1e-12;

/// First-improvement 2-opt on an open path with both endpoints pinned.
///
/// A move reverses `path[i..=j]` for `1 <= i < j <= n-2`. On asymmetric
/// tasks the reversed interior edges change direction, so the delta includes
/// their difference.
pub fn two_opt_shpp(task: &ShppTask, init: &PathOrder, max_passes: usize) -> Result<PathOrder> {
    let n = task.len();
    init.check(n)?;
    let mut p = init.0.clone();
    if n < 4 {
        return Ok(PathOrder(p));
    }
    let sym = task.is_symmetric();
    for _ in 0..max_passes {
        let mut improved = false;
        for i in 1..n - 2 {
            for j in i + 1..n - 1 {
                let (a, b, c, e) = (p[i - 1], p[i], p[j], p[j + 1]);
                let mut delta = task.d(a, c) + task.d(b, e) - task.d(a, b) - task.d(c, e);
                if !sym {
                    for k in i..j {
                        delta += task.d(p[k + 1], p[k]) - task.d(p[k], p[k + 1]);
                    }
                }
                if delta < -EPS {
                    p[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(PathOrder(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::shpp::held_karp_shpp;
    use crate::types::{DistanceMatrix, Point};
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    #[test]
    fn optimal_input_unchanged() {
        let t = ShppTask::from_points((0..6).map(|i| Point::new(i as f64 * 0.1, 0.0)).collect());
        let id = PathOrder::identity(6);
        assert_eq!(two_opt_shpp(&t, &id, 10).unwrap(), id);
    }

    #[test]
    fn crossing_is_removed() {
        let t = ShppTask::from_points(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 1.0),
        ]);
        // 0 -> (1,0) -> (1,1) -> 3 is uncrossed
        let init = PathOrder::identity(4);
        let out = two_opt_shpp(&t, &init, 10).unwrap();
        assert_eq!(out.order(), &[0, 2, 1, 3]);
        assert!(t.path_length(out.order()) < t.path_length(init.order()));
    }

    #[test]
    fn closes_gap_to_dp() {
        let mut rng = Rng::new(3);
        let (mut gap_init, mut gap_out) = (0.0, 0.0);
        for _ in 0..200 {
            let t = ShppTask::from_points(
                (0..12).map(|_| Point::new(rng.random(), rng.random())).collect(),
            );
            let mut p: Vec<usize> = (0..12).collect();
            p[1..11].shuffle(&mut rng);
            let init = PathOrder(p);
            let opt = t.path_length(held_karp_shpp(&t).unwrap().order());
            let out = two_opt_shpp(&t, &init, 100).unwrap();
            out.check(12).unwrap();
            let (li, lo) = (t.path_length(init.order()), t.path_length(out.order()));
            assert!(lo <= li + 1e-12);
            gap_init += li / opt - 1.0;
            gap_out += lo / opt - 1.0;
        }
        assert!(gap_out <= gap_init);
    }

    #[test]
    fn asymmetric_moves_never_lengthen() {
        let mut rng = Rng::new(8);
        for _ in 0..50 {
            let n = 7;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { rng.random::<f64>() }).collect())
                .collect();
            let t = ShppTask::from_matrix(DistanceMatrix::from_rows(&rows).unwrap());
            let init = PathOrder::identity(n);
            let out = two_opt_shpp(&t, &init, 1).unwrap();
            assert!(t.path_length(out.order()) <= t.path_length(init.order()) + 1e-12);
        }
    }
}
