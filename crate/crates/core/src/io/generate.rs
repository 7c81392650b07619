//! Random instance generators (uniform TSP, CVRP, PCTSP).

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlopError, Result};
use crate::rng::Rng;
use crate::types::{Point, ProblemKind, RoutingInstance};

/// Prizes are drawn from `U(0, PRIZE_SCALE / n)`, so the expected total prize
/// is `PRIZE_SCALE / 2` against a required minimum of [`PCTSP_PRIZE_MIN`].
pub const PCTSP_PRIZE_SCALE: f64 = 4.0;
pub const PCTSP_PRIZE_MIN: f64 = 1.0;

/// Bounds on regeneration attempts for infeasible PCTSP draws.
const MAX_PCTSP_ATTEMPTS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: ProblemKind,
    /// Node count for TSP; customer count for CVRP/PCTSP (the depot is extra).
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub capacity: Option<f64>,
    #[serde(default)]
    pub kn: Option<f64>,
}

impl DatasetSpec {
    pub fn new(kind: ProblemKind, n: usize, count: usize, seed: u64) -> Self {
        DatasetSpec { kind, n, count, seed, capacity: None, kn: None }
    }

    pub fn with_capacity(mut self, capacity: f64) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn with_kn(mut self, kn: f64) -> Self {
        self.kn = Some(kn);
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.n < 1 {
            return Err(GlopError::Config("n must be at least 1".into()));
        }
        if self.count < 1 {
            return Err(GlopError::Config("count must be at least 1".into()));
        }
        if let Some(c) = self.capacity {
            if !(c > 0.0) {
                return Err(GlopError::Config("capacity must be positive".into()));
            }
        }
        if self.kind == ProblemKind::Pctsp && !(self.prize_scale_kn()? > 0.0) {
            return Err(GlopError::Config("K^n must be positive".into()));
        }
        Ok(())
    }

    fn prize_scale_kn(&self) -> Result<f64> {
        self.kn.or_else(|| default_kn(self.n)).ok_or_else(|| {
            GlopError::Config(format!("no default K^n for n = {}; pass --kn", self.n))
        })
    }
}

/// Vehicle capacity used for CVRP`n` when none is given.
pub fn default_capacity(n: usize) -> f64 {
    match n {
        0..=10 => 20.0,
        11..=20 => 30.0,
        21..=50 => 40.0,
        51..=100 => 50.0,
        101..=1000 => 200.0,
        _ => 300.0,
    }
}

/// Penalty scale `K^n` for the standard PCTSP sizes.
pub fn default_kn(n: usize) -> Option<f64> {
    match n {
        20 => Some(2.0),
        50 => Some(3.0),
        100 => Some(4.0),
        500 => Some(9.0),
        1000 => Some(12.0),
        5000 => Some(20.0),
        _ => None,
    }
}

/// Default `k` for the sparsified partition graph.
pub fn default_k(kind: ProblemKind, n: usize) -> usize {
    match kind {
        ProblemKind::Cvrp => {
            if n <= 1000 {
                100
            } else {
                200
            }
        }
        _ => match n {
            0..=500 => 50,
            501..=1000 => 100,
            _ => 200,
        },
    }
}

pub fn generate(spec: &DatasetSpec) -> Result<Vec<RoutingInstance>> {
    match spec.kind {
        ProblemKind::Tsp => generate_uniform_tsp(spec),
        ProblemKind::Cvrp => generate_cvrp(spec),
        ProblemKind::Pctsp => generate_pctsp(spec),
    }
}

fn uniform_points(rng: &mut Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            Point::new(x, y)
        })
        .collect()
}

fn expect_kind(spec: &DatasetSpec, kind: ProblemKind) -> Result<()> {
    spec.check()?;
    if spec.kind != kind {
        return Err(GlopError::Config(format!("expected a {kind} spec, got {}", spec.kind)));
    }
    Ok(())
}

pub fn generate_uniform_tsp(spec: &DatasetSpec) -> Result<Vec<RoutingInstance>> {
    expect_kind(spec, ProblemKind::Tsp)?;
    let root = Rng::new(spec.seed);
    (0..spec.count)
        .into_par_iter()
        .map(|i| RoutingInstance::tsp(uniform_points(&mut root.child(i as u64), spec.n)))
        .collect()
}

pub fn generate_cvrp(spec: &DatasetSpec) -> Result<Vec<RoutingInstance>> {
    expect_kind(spec, ProblemKind::Cvrp)?;
    let capacity = spec.capacity.unwrap_or_else(|| default_capacity(spec.n));
    if capacity < 9.0 {
        return Err(GlopError::Config("capacity must be at least the maximum demand 9".into()));
    }
    let root = Rng::new(spec.seed);
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.child(i as u64);
            let coords = uniform_points(&mut rng, spec.n + 1);
            let mut demands = Vec::with_capacity(spec.n + 1);
            demands.push(0.0);
            demands.extend((0..spec.n).map(|_| rng.random_range(1..=9u32) as f64));
            RoutingInstance::cvrp(coords, demands, capacity)
        })
        .collect()
}

pub fn generate_pctsp(spec: &DatasetSpec) -> Result<Vec<RoutingInstance>> {
    expect_kind(spec, ProblemKind::Pctsp)?;
    let kn = spec.prize_scale_kn()?;
    let n = spec.n as f64;
    let penalty_max = 3.0 * kn / n;
    let prize_max = PCTSP_PRIZE_SCALE / n;
    let root = Rng::new(spec.seed);
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let inst_rng = root.child(i as u64);
            for attempt in 0..MAX_PCTSP_ATTEMPTS {
                let mut rng = inst_rng.child(attempt);
                let coords = uniform_points(&mut rng, spec.n + 1);
                let mut prizes = vec![0.0];
                let mut penalties = vec![0.0];
                for _ in 0..spec.n {
                    prizes.push(rng.random::<f64>() * prize_max);
                    penalties.push(rng.random::<f64>() * penalty_max);
                }
                if prizes.iter().sum::<f64>() >= PCTSP_PRIZE_MIN {
                    return RoutingInstance::pctsp(coords, prizes, penalties, PCTSP_PRIZE_MIN);
                }
            }
            Err(GlopError::Config(format!(
                "could not draw a feasible PCTSP instance with n = {}",
                spec.n
            )))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_in_unit_square() {
        for seed in 0..5 {
            let inst = generate(&DatasetSpec::new(ProblemKind::Tsp, 1, 1, seed)).unwrap();
            let p = inst[0].coords[0];
            assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
        }
    }

    #[test]
    fn seeds_give_different_instances() {
        let a = generate(&DatasetSpec::new(ProblemKind::Tsp, 1000, 1, 1)).unwrap();
        let b = generate(&DatasetSpec::new(ProblemKind::Tsp, 1000, 1, 2)).unwrap();
        let key = |i: &RoutingInstance| {
            let mut v: Vec<(u64, u64)> =
                i.coords.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
            v.sort();
            v
        };
        assert_ne!(key(&a[0]), key(&b[0]));
    }

    #[test]
    fn pctsp_prize_and_penalty_ranges() {
        for (n, kn) in [(500usize, 9.0), (1000, 12.0)] {
            let insts = generate(&DatasetSpec::new(ProblemKind::Pctsp, n, 3, 4)).unwrap();
            let bound = 3.0 * kn / n as f64;
            for inst in &insts {
                assert!(inst.penalties.iter().all(|&b| (0.0..=bound).contains(&b)));
                assert!(inst.prizes.iter().all(|&b| (0.0..=bound).contains(&b)));
                assert!(inst.prizes.iter().sum::<f64>() >= inst.prize_min);
                assert_eq!(inst.prize_min, 1.0);
                inst.check().unwrap();
            }
        }
    }

    #[test]
    fn small_pctsp_is_regenerated_until_feasible() {
        let insts =
            generate(&DatasetSpec::new(ProblemKind::Pctsp, 3, 50, 9).with_kn(1.0)).unwrap();
        for inst in insts {
            assert!(inst.prizes.iter().sum::<f64>() >= 1.0);
        }
    }

    #[test]
    fn cvrp_generation() {
        let spec = DatasetSpec::new(ProblemKind::Cvrp, 1000, 2, 3).with_capacity(200.0);
        let insts = generate(&spec).unwrap();
        for inst in &insts {
            inst.check().unwrap();
            assert_eq!(inst.len(), 1001);
            assert_eq!(inst.demands[0], 0.0);
            assert!(inst.demands[1..].iter().all(|&d| (1.0..=9.0).contains(&d) && d.fract() == 0.0));
            let total: f64 = inst.demands.iter().sum();
            assert!((total / inst.capacity).ceil() >= 1.0);
        }
        let again = generate(&spec).unwrap();
        assert_eq!(
            serde_json::to_string(&insts).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(generate(&DatasetSpec::new(ProblemKind::Tsp, 0, 1, 0)).is_err());
        assert!(generate(&DatasetSpec::new(ProblemKind::Tsp, 5, 0, 0)).is_err());
        assert!(generate(&DatasetSpec::new(ProblemKind::Pctsp, 37, 1, 0)).is_err());
        assert!(generate(&DatasetSpec::new(ProblemKind::Pctsp, 37, 1, 0).with_kn(-1.0)).is_err());
    }
}
