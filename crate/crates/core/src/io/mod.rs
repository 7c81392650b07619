//! Instance generation, TSPLIB parsing and JSON-lines persistence.

pub mod generate;
pub mod results;
pub mod tsplib;

use std::fs::File;
use std::path::Path;

pub use generate::{
    default_capacity, default_k, default_kn, generate, generate_cvrp, generate_pctsp,
    generate_uniform_tsp, DatasetSpec,
};
pub use results::{read_jsonl, read_results, write_jsonl, write_results, ResultRecord};
pub use tsplib::{normalize_points, parse_tsplib, write_tsplib, ParseOptions};

use crate::error::Result;
use crate::types::RoutingInstance;

pub fn write_instances(path: impl AsRef<Path>, instances: &[RoutingInstance]) -> Result<()> {
    write_jsonl(File::create(path)?, instances)
}

/// Loads a dataset: TSPLIB files (`.tsp`, `.atsp`, `.vrp`) yield one
/// instance, anything else is read as JSON lines of instances.
pub fn read_dataset(path: impl AsRef<Path>, opts: ParseOptions) -> Result<Vec<RoutingInstance>> {
    let path = path.as_ref();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    if matches!(ext.as_str(), "tsp" | "atsp" | "vrp") {
        let text = std::fs::read_to_string(path)?;
        return Ok(vec![parse_tsplib(&text, opts)?]);
    }
    let insts: Vec<RoutingInstance> = read_jsonl(File::open(path)?)?;
    for i in &insts {
        i.check()?;
    }
    Ok(insts)
}
