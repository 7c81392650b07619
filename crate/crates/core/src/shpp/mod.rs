//! SHPP revisers behind one interface.

mod exact;
mod two_opt;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

pub use exact::{
    brute_force_shpp, held_karp_cycle, held_karp_shpp, BRUTE_FORCE_MAX, HELD_KARP_MAX,
};
pub use two_opt::two_opt_shpp;

use crate::error::{GlopError, Result};
use crate::task::ShppTask;
use crate::types::PathOrder;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReviserInfo {
    pub name: String,
    /// Largest task size accepted.
    pub max_size: usize,
    pub supports_asymmetric: bool,
    /// Whether proposals depend on the transformed `coords`. Revisers that
    /// only read the raw metric gain nothing from augmentation.
    pub reads_coords: bool,
}

/// A policy that proposes a path for an SHPP with the endpoints pinned.
pub trait Reviser: Send + Sync {
    fn info(&self) -> ReviserInfo;

    fn solve(&self, task: &ShppTask) -> Result<PathOrder>;

    /// One proposal per task, in order.
    fn solve_batch(&self, tasks: &[ShppTask]) -> Vec<Result<PathOrder>> {
        tasks.par_iter().map(|t| self.solve(t)).collect()
    }
}

/// Keeps the current order. Useful as a no-op baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityReviser;

impl Reviser for IdentityReviser {
    fn info(&self) -> ReviserInfo {
        ReviserInfo {
            name: "identity".into(),
            max_size: usize::MAX,
            supports_asymmetric: true,
            reads_coords: false,
        }
    }

    fn solve(&self, task: &ShppTask) -> Result<PathOrder> {
        Ok(PathOrder::identity(task.len()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForceReviser;

impl Reviser for BruteForceReviser {
    fn info(&self) -> ReviserInfo {
        ReviserInfo {
            name: "bf".into(),
            max_size: BRUTE_FORCE_MAX,
            supports_asymmetric: true,
            reads_coords: false,
        }
    }

    fn solve(&self, task: &ShppTask) -> Result<PathOrder> {
        brute_force_shpp(task)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeldKarpReviser;

impl Reviser for HeldKarpReviser {
    fn info(&self) -> ReviserInfo {
        ReviserInfo {
            name: "dp".into(),
            max_size: HELD_KARP_MAX,
            supports_asymmetric: true,
            reads_coords: false,
        }
    }

    fn solve(&self, task: &ShppTask) -> Result<PathOrder> {
        held_karp_shpp(task)
    }
}

/// 2-opt from the current order.
#[derive(Debug, Clone, Copy)]
pub struct TwoOptReviser {
    pub max_passes: usize,
}

impl Default for TwoOptReviser {
    fn default() -> Self {
        TwoOptReviser { max_passes: 1000 }
    }
}

impl Reviser for TwoOptReviser {
    fn info(&self) -> ReviserInfo {
        ReviserInfo {
            name: "2opt".into(),
            max_size: usize::MAX,
            supports_asymmetric: true,
            reads_coords: false,
        }
    }

    fn solve(&self, task: &ShppTask) -> Result<PathOrder> {
        two_opt_shpp(task, &PathOrder::identity(task.len()), self.max_passes)
    }
}

/// Resolves a reviser name: `dp`, `bf`, `2opt`, `identity` or
/// `neural:<checkpoint>`.
pub fn reviser_by_name(name: &str) -> Result<Arc<dyn Reviser>> {
    match name {
        "dp" => Ok(Arc::new(HeldKarpReviser)),
        "bf" => Ok(Arc::new(BruteForceReviser)),
        "2opt" => Ok(Arc::new(TwoOptReviser::default())),
        "identity" => Ok(Arc::new(IdentityReviser)),
        _ => match name.strip_prefix("neural:") {
            Some(path) => Ok(Arc::new(crate::neural::NeuralReviser::load(path)?)),
            None => Err(GlopError::Config(format!("unknown reviser {name:?}"))),
        },
    }
}
