//! Problem instances, tours, partitions and their validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GlopError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Tsp,
    Cvrp,
    Pctsp,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Tsp => "tsp",
            ProblemKind::Cvrp => "cvrp",
            ProblemKind::Pctsp => "pctsp",
        })
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = GlopError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsp" => Ok(ProblemKind::Tsp),
            "cvrp" => Ok(ProblemKind::Cvrp),
            "pctsp" => Ok(ProblemKind::Pctsp),
            other => Err(GlopError::Config(format!("unknown problem kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Square row-major distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(GlopError::Input(format!(
                "distance matrix has {} entries, expected {}",
                data.len(),
                n * n
            )));
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(GlopError::Input("distance matrix is not square".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Sub-matrix over `nodes`, in that order.
    pub fn restrict(&self, nodes: &[usize]) -> DistanceMatrix {
        let m = nodes.len();
        let mut data = Vec::with_capacity(m * m);
        for &a in nodes {
            for &b in nodes {
                data.push(self.get(a, b));
            }
        }
        DistanceMatrix { n: m, data }
    }
}

/// How edge lengths are derived for an instance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeights {
    #[default]
    Euclidean,
    /// TSPLIB `EUC_2D`: Euclidean distance rounded to the nearest integer.
    RoundedEuclidean,
    Explicit(DistanceMatrix),
}

#[inline]
pub(crate) fn nint(d: f64) -> f64 {
    (d + 0.5).floor()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingInstance {
    pub kind: ProblemKind,
    pub coords: Vec<Point>,
    #[serde(default)]
    pub weights: EdgeWeights,
    #[serde(default)]
    pub depot: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demands: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub capacity: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prizes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub penalties: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub prize_min: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl RoutingInstance {
    pub fn tsp(coords: Vec<Point>) -> Result<Self> {
        let inst = RoutingInstance {
            kind: ProblemKind::Tsp,
            coords,
            weights: EdgeWeights::Euclidean,
            depot: 0,
            demands: Vec::new(),
            capacity: 0.0,
            prizes: Vec::new(),
            penalties: Vec::new(),
            prize_min: 0.0,
        };
        inst.check()?;
        Ok(inst)
    }

    /// TSP defined by an explicit (possibly asymmetric) matrix. Coordinates are
    /// optional and only used for display or neural revisers.
    pub fn tsp_explicit(matrix: DistanceMatrix, coords: Option<Vec<Point>>) -> Result<Self> {
        let n = matrix.len();
        let inst = RoutingInstance {
            kind: ProblemKind::Tsp,
            coords: coords.unwrap_or_else(|| vec![Point::default(); n]),
            weights: EdgeWeights::Explicit(matrix),
            depot: 0,
            demands: Vec::new(),
            capacity: 0.0,
            prizes: Vec::new(),
            penalties: Vec::new(),
            prize_min: 0.0,
        };
        inst.check()?;
        Ok(inst)
    }

    /// CVRP with the depot at index 0.
    pub fn cvrp(coords: Vec<Point>, demands: Vec<f64>, capacity: f64) -> Result<Self> {
        let inst = RoutingInstance {
            kind: ProblemKind::Cvrp,
            coords,
            weights: EdgeWeights::Euclidean,
            depot: 0,
            demands,
            capacity,
            prizes: Vec::new(),
            penalties: Vec::new(),
            prize_min: 0.0,
        };
        inst.check()?;
        Ok(inst)
    }

    /// PCTSP with the depot at index 0.
    pub fn pctsp(
        coords: Vec<Point>,
        prizes: Vec<f64>,
        penalties: Vec<f64>,
        prize_min: f64,
    ) -> Result<Self> {
        let inst = RoutingInstance {
            kind: ProblemKind::Pctsp,
            coords,
            weights: EdgeWeights::Euclidean,
            depot: 0,
            demands: Vec::new(),
            capacity: 0.0,
            prizes,
            penalties,
            prize_min,
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn with_weights(mut self, weights: EdgeWeights) -> Result<Self> {
        self.weights = weights;
        self.check()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.weights {
            EdgeWeights::Euclidean => self.coords[i].dist(&self.coords[j]),
            EdgeWeights::RoundedEuclidean => nint(self.coords[i].dist(&self.coords[j])),
            EdgeWeights::Explicit(m) => m.get(i, j),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.weights {
            EdgeWeights::Explicit(m) => m.is_symmetric(),
            _ => true,
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.weights, EdgeWeights::Euclidean)
    }

    /// Customers (every node except the depot) for CVRP/PCTSP, all nodes for TSP.
    pub fn customers(&self) -> impl Iterator<Item = usize> + '_ {
        let skip = if self.kind == ProblemKind::Tsp { usize::MAX } else { self.depot };
        (0..self.len()).filter(move |&i| i != skip)
    }

    /// TSP over `nodes` (in the given order); used for sub-TSPs of partitions.
    pub fn sub_tsp(&self, nodes: &[usize]) -> RoutingInstance {
        let coords = nodes.iter().map(|&i| self.coords[i]).collect();
        let weights = match &self.weights {
            EdgeWeights::Explicit(m) => EdgeWeights::Explicit(m.restrict(nodes)),
            w => w.clone(),
        };
        RoutingInstance {
            kind: ProblemKind::Tsp,
            coords,
            weights,
            depot: 0,
            demands: Vec::new(),
            capacity: 0.0,
            prizes: Vec::new(),
            penalties: Vec::new(),
            prize_min: 0.0,
        }
    }

    /// Check the instance invariants; every violation is reported.
    pub fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(GlopError::Validation(v))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let n = self.len();
        let mut v = Vec::new();
        for (i, p) in self.coords.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                v.push(Violation::NonFinite(format!("coordinate of node {i}")));
            }
        }
        if let EdgeWeights::Explicit(m) = &self.weights {
            if m.len() != n {
                v.push(Violation::Instance(format!(
                    "matrix dimension {} != node count {n}",
                    m.len()
                )));
            } else {
                for i in 0..n {
                    if m.get(i, i) != 0.0 {
                        v.push(Violation::Instance(format!("nonzero diagonal at {i}")));
                    }
                    for j in 0..n {
                        let d = m.get(i, j);
                        if !(d >= 0.0) || !d.is_finite() {
                            v.push(Violation::Instance(format!("bad distance d({i},{j}) = {d}")));
                        }
                    }
                }
            }
        }
        if self.kind != ProblemKind::Tsp && self.depot >= n.max(1) {
            v.push(Violation::Instance(format!("depot {} out of range", self.depot)));
        }
        match self.kind {
            ProblemKind::Tsp => {}
            ProblemKind::Cvrp => {
                if self.demands.len() != n {
                    v.push(Violation::Instance("demand vector length mismatch".into()));
                } else {
                    if !(self.capacity > 0.0) || !self.capacity.is_finite() {
                        v.push(Violation::Instance("capacity must be positive".into()));
                    }
                    for (i, &d) in self.demands.iter().enumerate() {
                        if !(d >= 0.0) || !d.is_finite() {
                            v.push(Violation::Instance(format!("bad demand at {i}")));
                        } else if d > self.capacity {
                            v.push(Violation::Capacity {
                                subset: None,
                                load: d,
                                capacity: self.capacity,
                            });
                        }
                    }
                    if self.depot < n && self.demands[self.depot] != 0.0 {
                        v.push(Violation::Instance("depot demand must be 0".into()));
                    }
                }
            }
            ProblemKind::Pctsp => {
                if self.prizes.len() != n || self.penalties.len() != n {
                    v.push(Violation::Instance("prize/penalty vector length mismatch".into()));
                } else {
                    for i in 0..n {
                        if !(self.prizes[i] >= 0.0) || !(self.penalties[i] >= 0.0) {
                            v.push(Violation::Instance(format!("bad prize/penalty at {i}")));
                        }
                    }
                    if !(self.prize_min > 0.0) {
                        v.push(Violation::Instance("prize_min must be positive".into()));
                    }
                    let total: f64 = self.prizes.iter().sum();
                    if total < self.prize_min {
                        v.push(Violation::Prize {
                            collected: total,
                            required: self.prize_min,
                        });
                    }
                }
            }
        }
        v
    }
}

/// Closed tour: a permutation of all instance nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tour(pub Vec<usize>);

impl Tour {
    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Open path over an SHPP's local node indices `0..n`; the first entry is the
/// fixed start and the last the fixed terminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathOrder(pub Vec<usize>);

impl PathOrder {
    pub fn identity(n: usize) -> Self {
        PathOrder((0..n).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks that this is a permutation of `0..n` with endpoints `0` and `n-1`.
    pub fn check(&self, n: usize) -> Result<()> {
        let mut v = Vec::new();
        if self.0.len() != n {
            v.push(Violation::Length { expected: n, found: self.0.len() });
        } else if n > 0 {
            if self.0[0] != 0 || self.0[n - 1] != n - 1 {
                v.push(Violation::Endpoints { subset: None });
            }
            permutation_violations(&self.0, n, &mut v);
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(GlopError::Validation(v))
        }
    }
}

/// Node subsets, each beginning and terminating at the depot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub subsets: Vec<Vec<usize>>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Members of subset `r` without the depot endpoints.
    pub fn members(&self, r: usize) -> &[usize] {
        let s = &self.subsets[r];
        if s.len() >= 2 {
            &s[1..s.len() - 1]
        } else {
            &[]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Length { expected: usize, found: usize },
    OutOfRange { node: usize },
    Duplicate { node: usize },
    Missing { node: usize },
    Endpoints { subset: Option<usize> },
    DepotInside { subset: usize },
    Capacity { subset: Option<usize>, load: f64, capacity: f64 },
    Prize { collected: f64, required: f64 },
    SubsetCount { expected: usize, found: usize },
    NonFinite(String),
    Instance(String),
}

impl Violation {
    /// Short category tag (`capacity`, `prize`, `duplicate`, ...).
    pub fn tag(&self) -> &'static str {
        match self {
            Violation::Length { .. } => "length",
            Violation::OutOfRange { .. } => "range",
            Violation::Duplicate { .. } => "duplicate",
            Violation::Missing { .. } => "missing",
            Violation::Endpoints { .. } => "endpoints",
            Violation::DepotInside { .. } => "depot",
            Violation::Capacity { .. } => "capacity",
            Violation::Prize { .. } => "prize",
            Violation::SubsetCount { .. } => "subsets",
            Violation::NonFinite(_) => "nonfinite",
            Violation::Instance(_) => "instance",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length { expected, found } => {
                write!(f, "length: expected {expected} nodes, found {found}")
            }
            Violation::OutOfRange { node } => write!(f, "range: node {node} out of range"),
            Violation::Duplicate { node } => write!(f, "duplicate: node {node} repeated"),
            Violation::Missing { node } => write!(f, "missing: node {node} not visited"),
            Violation::Endpoints { subset } => match subset {
                Some(r) => write!(f, "endpoints: subset {r} must start and end at the depot"),
                None => write!(f, "endpoints: path endpoints moved"),
            },
            Violation::DepotInside { subset } => {
                write!(f, "depot: depot inside subset {subset}")
            }
            Violation::Capacity { subset, load, capacity } => match subset {
                Some(r) => write!(f, "capacity: subset {r} load {load} > {capacity}"),
                None => write!(f, "capacity: demand {load} > {capacity}"),
            },
            Violation::Prize { collected, required } => {
                write!(f, "prize: collected {collected} < required {required}")
            }
            Violation::SubsetCount { expected, found } => {
                write!(f, "subsets: expected {expected}, found {found}")
            }
            Violation::NonFinite(what) => write!(f, "nonfinite: {what}"),
            Violation::Instance(what) => write!(f, "instance: {what}"),
        }
    }
}

fn permutation_violations(order: &[usize], n: usize, v: &mut Vec<Violation>) {
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n {
            v.push(Violation::OutOfRange { node: i });
        } else if seen[i] {
            v.push(Violation::Duplicate { node: i });
        } else {
            seen[i] = true;
        }
    }
    for (i, s) in seen.iter().enumerate() {
        if !s {
            v.push(Violation::Missing { node: i });
        }
    }
}

pub fn tour_violations(instance: &RoutingInstance, tour: &Tour) -> Vec<Violation> {
    let n = instance.len();
    let mut v = Vec::new();
    if tour.len() != n {
        v.push(Violation::Length { expected: n, found: tour.len() });
    }
    permutation_violations(tour.order(), n, &mut v);
    v
}

pub fn validate_tour(instance: &RoutingInstance, tour: &Tour) -> Result<()> {
    let v = tour_violations(instance, tour);
    if v.is_empty() {
        Ok(())
    } else {
        Err(GlopError::Validation(v))
    }
}

pub fn partition_violations(instance: &RoutingInstance, partition: &Partition) -> Vec<Violation> {
    let n = instance.len();
    let depot = instance.depot;
    let mut v = Vec::new();
    let mut seen = vec![false; n];
    for (r, s) in partition.subsets.iter().enumerate() {
        if s.len() < 2 || s[0] != depot || s[s.len() - 1] != depot {
            v.push(Violation::Endpoints { subset: Some(r) });
        }
        let inner = partition.members(r);
        for &i in inner {
            if i >= n {
                v.push(Violation::OutOfRange { node: i });
            } else if i == depot {
                v.push(Violation::DepotInside { subset: r });
            } else if seen[i] {
                v.push(Violation::Duplicate { node: i });
            } else {
                seen[i] = true;
            }
        }
        if instance.kind == ProblemKind::Cvrp {
            let load: f64 = inner.iter().filter(|&&i| i < n).map(|&i| instance.demands[i]).sum();
            if load > instance.capacity {
                v.push(Violation::Capacity {
                    subset: Some(r),
                    load,
                    capacity: instance.capacity,
                });
            }
        }
    }
    match instance.kind {
        ProblemKind::Cvrp => {
            for i in instance.customers() {
                if !seen[i] {
                    v.push(Violation::Missing { node: i });
                }
            }
        }
        ProblemKind::Pctsp => {
            if partition.len() != 1 {
                v.push(Violation::SubsetCount { expected: 1, found: partition.len() });
            }
            let collected: f64 = (0..n).filter(|&i| seen[i]).map(|i| instance.prizes[i]).sum();
            if collected < instance.prize_min {
                v.push(Violation::Prize {
                    collected,
                    required: instance.prize_min,
                });
            }
        }
        ProblemKind::Tsp => {
            v.push(Violation::Instance("partitions apply to CVRP/PCTSP only".into()));
        }
    }
    v
}

pub fn validate_partition(instance: &RoutingInstance, partition: &Partition) -> Result<()> {
    let v = partition_violations(instance, partition);
    if v.is_empty() {
        Ok(())
    } else {
        Err(GlopError::Validation(v))
    }
}

/// Closed-tour length, including the edge from the last node back to the first.
pub fn tour_length(instance: &RoutingInstance, tour: &Tour) -> Result<f64> {
    validate_tour(instance, tour)?;
    Ok(cycle_length(instance, tour.order()))
}

/// Length of the closed cycle through `order` (unchecked).
pub fn cycle_length(instance: &RoutingInstance, order: &[usize]) -> f64 {
    let m = order.len();
    if m < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..m {
        total += instance.dist(order[k], order[(k + 1) % m]);
    }
    total
}

/// Length of the open path through `order` (unchecked).
pub fn path_length(instance: &RoutingInstance, order: &[usize]) -> f64 {
    order.windows(2).map(|w| instance.dist(w[0], w[1])).sum()
}
