//! TSPLIB / CVRPLIB reader and writer.
//!
//! Supported: `EUC_2D` node coordinates and `EXPLICIT` weights in
//! `FULL_MATRIX` format, plus CVRPLIB `CAPACITY`, `DEMAND_SECTION` and
//! `DEPOT_SECTION`. Anything else is rejected with [`GlopError::Unsupported`].

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{GlopError, Result};
use crate::types::{DistanceMatrix, EdgeWeights, Point, ProblemKind, RoutingInstance};

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Min-max normalize coordinates into the unit square (aspect ratio kept).
    pub normalize: bool,
    /// Use TSPLIB nearest-integer rounding for `EUC_2D` distances.
    pub round_euc2d: bool,
}

#[derive(Debug)]
enum Section {
    Coords,
    Weights,
    Demands,
    Depots,
    Skip,
}

fn bad(msg: impl Into<String>) -> GlopError {
    GlopError::Input(msg.into())
}

pub fn parse_tsplib(text: &str, opts: ParseOptions) -> Result<RoutingInstance> {
    let mut header: HashMap<String, String> = HashMap::new();
    let mut coords: Vec<Option<Point>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut demands: Vec<Option<f64>> = Vec::new();
    let mut depots: Vec<usize> = Vec::new();
    let mut section: Option<Section> = None;
    let mut dim: Option<usize> = None;

    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        let upper = line.to_ascii_uppercase();
        if upper.ends_with("_SECTION") {
            let n = dim.ok_or_else(|| bad("DIMENSION must precede data sections"))?;
            section = Some(match upper.as_str() {
                "NODE_COORD_SECTION" => {
                    coords = vec![None; n];
                    Section::Coords
                }
                "EDGE_WEIGHT_SECTION" => Section::Weights,
                "DEMAND_SECTION" => {
                    demands = vec![None; n];
                    Section::Demands
                }
                "DEPOT_SECTION" => Section::Depots,
                "DISPLAY_DATA_SECTION" => Section::Skip,
                other => return Err(GlopError::Unsupported(format!("section {other}"))),
            });
            continue;
        }
        if section.is_none() {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
            let key = k.trim().to_ascii_uppercase();
            let value = v.trim().to_string();
            if key == "DIMENSION" {
                dim = Some(value.parse().map_err(|_| bad("bad DIMENSION"))?);
            }
            header.insert(key, value);
            continue;
        }
        let n = dim.unwrap_or(0);
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section.as_ref().unwrap() {
            Section::Coords => {
                if fields.len() < 3 {
                    return Err(bad(format!("bad coordinate line `{line}`")));
                }
                let id: usize = fields[0].parse().map_err(|_| bad("bad node id"))?;
                if id == 0 || id > n {
                    return Err(bad(format!("node id {id} out of range")));
                }
                let x: f64 = fields[1].parse().map_err(|_| bad("bad x coordinate"))?;
                let y: f64 = fields[2].parse().map_err(|_| bad("bad y coordinate"))?;
                coords[id - 1] = Some(Point::new(x, y));
            }
            Section::Weights => {
                for f in fields {
                    weights.push(f.parse().map_err(|_| bad("bad edge weight"))?);
                }
            }
            Section::Demands => {
                if fields.len() < 2 {
                    return Err(bad(format!("bad demand line `{line}`")));
                }
                let id: usize = fields[0].parse().map_err(|_| bad("bad node id"))?;
                if id == 0 || id > n {
                    return Err(bad(format!("node id {id} out of range")));
                }
                demands[id - 1] = Some(fields[1].parse().map_err(|_| bad("bad demand"))?);
            }
            Section::Depots => {
                for f in fields {
                    let id: i64 = f.parse().map_err(|_| bad("bad depot id"))?;
                    if id == -1 {
                        break;
                    }
                    if id < 1 || id as usize > n {
                        return Err(bad(format!("depot id {id} out of range")));
                    }
                    depots.push(id as usize - 1);
                }
            }
            Section::Skip => {}
        }
    }

    let n = dim.ok_or_else(|| bad("missing DIMENSION"))?;
    let kind = match header.get("TYPE").map(|s| s.to_ascii_uppercase()).as_deref() {
        None | Some("TSP") | Some("ATSP") => ProblemKind::Tsp,
        Some("CVRP") => ProblemKind::Cvrp,
        Some(other) => return Err(GlopError::Unsupported(format!("TYPE {other}"))),
    };
    let ewt = header
        .get("EDGE_WEIGHT_TYPE")
        .map(|s| s.to_ascii_uppercase())
        .unwrap_or_else(|| "EUC_2D".into());

    let (mut points, edge_weights) = match ewt.as_str() {
        "EUC_2D" => {
            let pts = coords
                .into_iter()
                .enumerate()
                .map(|(i, p)| p.ok_or_else(|| bad(format!("missing coordinates for node {}", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            if pts.len() != n {
                return Err(bad("missing NODE_COORD_SECTION"));
            }
            let w = if opts.round_euc2d {
                EdgeWeights::RoundedEuclidean
            } else {
                EdgeWeights::Euclidean
            };
            (pts, w)
        }
        "EXPLICIT" => {
            let fmt = header
                .get("EDGE_WEIGHT_FORMAT")
                .map(|s| s.to_ascii_uppercase())
                .unwrap_or_default();
            if fmt != "FULL_MATRIX" {
                return Err(GlopError::Unsupported(format!("EDGE_WEIGHT_FORMAT {fmt}")));
            }
            let m = DistanceMatrix::new(n, weights)?;
            let pts = if coords.len() == n && coords.iter().all(Option::is_some) {
                coords.into_iter().map(Option::unwrap).collect()
            } else {
                vec![Point::default(); n]
            };
            (pts, EdgeWeights::Explicit(m))
        }
        other => return Err(GlopError::Unsupported(format!("EDGE_WEIGHT_TYPE {other}"))),
    };

    if opts.normalize && !matches!(edge_weights, EdgeWeights::Explicit(_)) {
        normalize_points(&mut points);
    }

    match kind {
        ProblemKind::Tsp => RoutingInstance::tsp(points)?.with_weights(edge_weights),
        ProblemKind::Cvrp => {
            let capacity: f64 = header
                .get("CAPACITY")
                .ok_or_else(|| bad("CVRP without CAPACITY"))?
                .parse()
                .map_err(|_| bad("bad CAPACITY"))?;
            let demands = demands
                .into_iter()
                .map(|d| d.ok_or_else(|| bad("missing demand")))
                .collect::<Result<Vec<_>>>()?;
            if demands.len() != n {
                return Err(bad("missing DEMAND_SECTION"));
            }
            let depot = depots.first().copied().unwrap_or(0);
            // depot first, remaining nodes in file order
            let perm: Vec<usize> =
                std::iter::once(depot).chain((0..n).filter(|&i| i != depot)).collect();
            let pts = perm.iter().map(|&i| points[i]).collect();
            let dem = perm.iter().map(|&i| demands[i]).collect();
            let w = match edge_weights {
                EdgeWeights::Explicit(m) => EdgeWeights::Explicit(m.restrict(&perm)),
                w => w,
            };
            RoutingInstance::cvrp(pts, dem, capacity)?.with_weights(w)
        }
        ProblemKind::Pctsp => unreachable!(),
    }
}

/// Shift to the origin and scale by the larger side of the bounding box.
pub fn normalize_points(points: &mut [Point]) {
    if points.is_empty() {
        return;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points.iter() {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 { 1.0 / span } else { 1.0 };
    for p in points.iter_mut() {
        p.x = (p.x - x0) * scale;
        p.y = (p.y - y0) * scale;
    }
}

pub fn write_tsplib(instance: &RoutingInstance, name: &str) -> Result<String> {
    let n = instance.len();
    let mut s = String::new();
    let kind = match (instance.kind, &instance.weights) {
        (ProblemKind::Tsp, EdgeWeights::Explicit(m)) if !m.is_symmetric() => "ATSP",
        (ProblemKind::Tsp, _) => "TSP",
        (ProblemKind::Cvrp, _) => "CVRP",
        (ProblemKind::Pctsp, _) => {
            return Err(GlopError::Unsupported("PCTSP has no TSPLIB representation".into()))
        }
    };
    let _ = writeln!(s, "NAME : {name}");
    let _ = writeln!(s, "TYPE : {kind}");
    let _ = writeln!(s, "DIMENSION : {n}");
    match &instance.weights {
        EdgeWeights::Explicit(m) => {
            let _ = writeln!(s, "EDGE_WEIGHT_TYPE : EXPLICIT");
            let _ = writeln!(s, "EDGE_WEIGHT_FORMAT : FULL_MATRIX");
            if instance.kind == ProblemKind::Cvrp {
                let _ = writeln!(s, "CAPACITY : {}", instance.capacity);
            }
            let _ = writeln!(s, "EDGE_WEIGHT_SECTION");
            for i in 0..n {
                let row: Vec<String> = (0..n).map(|j| m.get(i, j).to_string()).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        _ => {
            let _ = writeln!(s, "EDGE_WEIGHT_TYPE : EUC_2D");
            if instance.kind == ProblemKind::Cvrp {
                let _ = writeln!(s, "CAPACITY : {}", instance.capacity);
            }
            let _ = writeln!(s, "NODE_COORD_SECTION");
            for (i, p) in instance.coords.iter().enumerate() {
                let _ = writeln!(s, "{} {} {}", i + 1, p.x, p.y);
            }
        }
    }
    if instance.kind == ProblemKind::Cvrp {
        let _ = writeln!(s, "DEMAND_SECTION");
        for (i, d) in instance.demands.iter().enumerate() {
            let _ = writeln!(s, "{} {}", i + 1, d);
        }
        let _ = writeln!(s, "DEPOT_SECTION");
        let _ = writeln!(s, "{}", instance.depot + 1);
        let _ = writeln!(s, "-1");
    }
    s.push_str("EOF\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::generate::{generate, DatasetSpec};

    const TINY: &str = "NAME : tiny\nTYPE : TSP\nCOMMENT : three nodes\nDIMENSION : 3\n\
EDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 3 0\n3 3 4\nEOF\n";

    #[test]
    fn parses_hand_written_euc2d() {
        let inst = parse_tsplib(TINY, ParseOptions::default()).unwrap();
        assert_eq!(inst.len(), 3);
        assert_eq!(inst.coords[2], Point::new(3.0, 4.0));
        assert_eq!(inst.dist(0, 2), 5.0);
    }

    #[test]
    fn rounding_flag() {
        let text = TINY.replace("3 3 4", "3 3 4.4");
        let plain = parse_tsplib(&text, ParseOptions::default()).unwrap();
        let rounded =
            parse_tsplib(&text, ParseOptions { round_euc2d: true, ..Default::default() }).unwrap();
        assert!(plain.dist(1, 2) > 4.0);
        assert_eq!(rounded.dist(1, 2), 4.0);
    }

    #[test]
    fn round_trip_generated_tsp200() {
        let inst = &generate(&DatasetSpec::new(ProblemKind::Tsp, 200, 1, 8)).unwrap()[0];
        let text = write_tsplib(inst, "rt").unwrap();
        let back = parse_tsplib(&text, ParseOptions::default()).unwrap();
        for (a, b) in inst.coords.iter().zip(&back.coords) {
            assert!((a.x - b.x).abs() <= 1e-9 && (a.y - b.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn normalization_scales_by_larger_side() {
        let text = "NAME : box\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\n\
NODE_COORD_SECTION\n1 10 5\n2 20 10\n3 15 7.5\nEOF\n";
        let inst =
            parse_tsplib(text, ParseOptions { normalize: true, ..Default::default() }).unwrap();
        // hand-computed: x' = (x - 10) / 10, y' = (y - 5) / 10
        let expect = [(0.0, 0.0), (1.0, 0.5), (0.5, 0.25)];
        for (p, (x, y)) in inst.coords.iter().zip(expect) {
            assert!((p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_full_matrix_and_cvrp_round_trip() {
        let text = "NAME : a3\nTYPE : ATSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EXPLICIT\n\
EDGE_WEIGHT_FORMAT : FULL_MATRIX\nEDGE_WEIGHT_SECTION\n0 1 2\n3 0 4\n5 6 0\nEOF\n";
        let inst = parse_tsplib(text, ParseOptions::default()).unwrap();
        assert_eq!(inst.dist(0, 1), 1.0);
        assert_eq!(inst.dist(1, 0), 3.0);
        let back = parse_tsplib(&write_tsplib(&inst, "a3").unwrap(), ParseOptions::default()).unwrap();
        assert_eq!(back.weights, inst.weights);

        let cvrp = &generate(&DatasetSpec::new(ProblemKind::Cvrp, 20, 1, 2)).unwrap()[0];
        let back =
            parse_tsplib(&write_tsplib(cvrp, "c").unwrap(), ParseOptions::default()).unwrap();
        assert_eq!(&back, cvrp);
    }

    #[test]
    fn cvrplib_depot_moved_to_front() {
        let text = "NAME : v\nTYPE : CVRP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\n\
NODE_COORD_SECTION\n1 1 1\n2 0 0\n3 2 2\nDEMAND_SECTION\n1 4\n2 0\n3 5\nDEPOT_SECTION\n2\n-1\nEOF\n";
        let inst = parse_tsplib(text, ParseOptions::default()).unwrap();
        assert_eq!(inst.coords[0], Point::new(0.0, 0.0));
        assert_eq!(inst.demands, vec![0.0, 4.0, 5.0]);
    }

    #[test]
    fn unsupported_formats_rejected() {
        let geo = TINY.replace("EUC_2D", "GEO");
        assert!(matches!(
            parse_tsplib(&geo, ParseOptions::default()),
            Err(GlopError::Unsupported(_))
        ));
        let lower = "NAME : a\nTYPE : TSP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EXPLICIT\n\
EDGE_WEIGHT_FORMAT : LOWER_ROW\nEDGE_WEIGHT_SECTION\n1\nEOF\n";
        assert!(matches!(
            parse_tsplib(lower, ParseOptions::default()),
            Err(GlopError::Unsupported(_))
        ));
    }
}
