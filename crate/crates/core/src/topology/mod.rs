//! Random logical topologies under density, degree and connectivity
//! constraints.
//!
//! A candidate matrix is drawn with independent per-pair Bernoulli trials and
//! then classified. Rejected candidates are discarded, never repaired, so the
//! accepted distribution is the Bernoulli distribution conditioned on the
//! constraints.

mod dot;

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dot::{parse_dot, to_dot, DotError};

/// Generator used for every topology draw. ChaCha8 seeded through
/// `SeedableRng::seed_from_u64`; stable for a given crate version.
pub type TopologyRng = ChaCha8Rng;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error(
        "no acceptable topology after {attempts} attempts \
         ({over_connected} over-connected, {disconnected} disconnected)"
    )]
    GenerationExhausted { attempts: u32, over_connected: u32, disconnected: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub n: usize,
    /// Per-pair edge probability in percent.
    pub density: u8,
    pub max_degree: usize,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

impl GenParams {
    pub fn new(n: usize, density: u8, max_degree: usize, seed: u64) -> Self {
        Self { n, density, max_degree, seed, max_attempts: DEFAULT_MAX_ATTEMPTS }
    }

    /// Rejects parameter sets for which no connected graph can satisfy the
    /// degree bound.
    pub fn check_feasible(&self) -> Result<(), TopologyError> {
        let fail = |msg: String| Err(TopologyError::Infeasible(msg));
        if self.n == 0 {
            return fail("node count must be at least 1".into());
        }
        if self.density > 100 {
            return fail(format!("density {} outside 0..=100", self.density));
        }
        if self.max_attempts == 0 {
            return fail("max_attempts must be at least 1".into());
        }
        if self.n >= 2 && self.max_degree == 0 {
            return fail(format!("{} nodes cannot be connected with max degree 0", self.n));
        }
        if self.n > 2 && self.n * self.max_degree < 2 * (self.n - 1) {
            return fail(format!(
                "{} nodes need {} edge endpoints for a spanning tree but max degree {} allows {}",
                self.n,
                2 * (self.n - 1),
                self.max_degree,
                self.n * self.max_degree
            ));
        }
        Ok(())
    }
}

/// Classification code attached to every checked topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    /// Over-connected or disconnected.
    Rejected99,
    Accepted100,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Rejected99 => 99,
            Status::Accepted100 => 100,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            99 => Some(Status::Rejected99),
            100 => Some(Status::Accepted100),
            _ => None,
        }
    }
}

/// Diagnostic detail behind a status code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Accepted,
    OverConnected,
    Disconnected,
}

impl Verdict {
    pub fn status(self) -> Status {
        match self {
            Verdict::Accepted => Status::Accepted100,
            _ => Status::Rejected99,
        }
    }
}

/// Square 0/1 matrix stored row-major.
///
/// Construction only checks the shape; the symmetric/zero-diagonal/Boolean
/// invariants are checked by [`AdjacencyMatrix::validate`] so that malformed
/// input can still be represented and reported.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AdjacencyMatrix {
    n: usize,
    cells: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, cells: vec![0; n * n] }
    }

    pub fn complete(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for x in 0..n {
            for y in x + 1..n {
                m.connect(x, y);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, TopologyError> {
        let n = rows.len();
        let mut cells = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(TopologyError::MalformedMatrix(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            cells.extend_from_slice(row);
        }
        Ok(Self { n, cells })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = Self::zeros(n);
        for &(x, y) in edges {
            m.connect(x, y);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.cells[x * self.n + y]
    }

    pub fn is_adjacent(&self, x: usize, y: usize) -> bool {
        self.get(x, y) == 1
    }

    /// Sets both (x, y) and (y, x).
    pub fn connect(&mut self, x: usize, y: usize) {
        self.cells[x * self.n + y] = 1;
        self.cells[y * self.n + x] = 1;
    }

    pub fn disconnect(&mut self, x: usize, y: usize) {
        self.cells[x * self.n + y] = 0;
        self.cells[y * self.n + x] = 0;
    }

    pub fn row(&self, x: usize) -> &[u8] {
        &self.cells[x * self.n..(x + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks(self.n.max(1)).take(self.n)
    }

    pub fn degree(&self, x: usize) -> usize {
        self.row(x).iter().map(|&v| v as usize).sum()
    }

    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(x).iter().enumerate().filter(|(_, &v)| v == 1).map(|(y, _)| y)
    }

    /// Unordered adjacent pairs `(x, y)` with `x < y`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for x in 0..self.n {
            for y in x + 1..self.n {
                if self.is_adjacent(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        for x in 0..self.n {
            for y in 0..self.n {
                let v = self.get(x, y);
                if v > 1 {
                    return Err(TopologyError::MalformedMatrix(format!("entry ({x},{y}) is {v}, expected 0 or 1")));
                }
                if x == y && v != 0 {
                    return Err(TopologyError::MalformedMatrix(format!("diagonal entry ({x},{x}) is nonzero")));
                }
                if v != self.get(y, x) {
                    return Err(TopologyError::MalformedMatrix(format!("entries ({x},{y}) and ({y},{x}) differ")));
                }
            }
        }
        Ok(())
    }

    /// Breadth-first inclusion from node 0.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(x) = queue.pop_front() {
            for y in self.neighbors(x) {
                if !seen[y] {
                    seen[y] = true;
                    reached += 1;
                    queue.push_back(y);
                }
            }
        }
        reached == self.n
    }

    /// Copy embedded into a larger zero matrix; extra nodes are isolated.
    pub fn embed(&self, n: usize) -> Self {
        assert!(n >= self.n, "cannot embed {}x{} into {n}x{n}", self.n, self.n);
        let mut m = Self::zeros(n);
        for x in 0..self.n {
            m.cells[x * n..x * n + self.n].copy_from_slice(self.row(x));
        }
        m
    }
}

impl fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

/// Rows of space-separated digits, one row per line.
impl fmt::Display for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub adjacency: AdjacencyMatrix,
    /// `None` until classified.
    pub status: Option<Status>,
    pub seq: u32,
}

impl Topology {
    pub fn new(adjacency: AdjacencyMatrix, seq: u32) -> Self {
        Self { adjacency, status: None, seq }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn is_accepted(&self) -> bool {
        self.status == Some(Status::Accepted100)
    }
}

/// Draws one candidate: each unordered pair x < y, in row-major order, is
/// connected with probability `density / 100`.
pub fn sample_matrix<R: Rng + ?Sized>(n: usize, density: u8, rng: &mut R) -> AdjacencyMatrix {
    let mut m = AdjacencyMatrix::zeros(n);
    let p = u32::from(density.min(100));
    for x in 0..n {
        for y in x + 1..n {
            if rng.gen_range(0..100u32) < p {
                m.connect(x, y);
            }
        }
    }
    m
}

/// Degree bound first, then connectivity.
pub fn verdict(adjacency: &AdjacencyMatrix, max_degree: usize) -> Result<Verdict, TopologyError> {
    adjacency.validate()?;
    if (0..adjacency.len()).any(|x| adjacency.degree(x) > max_degree) {
        return Ok(Verdict::OverConnected);
    }
    if !adjacency.is_connected() {
        return Ok(Verdict::Disconnected);
    }
    Ok(Verdict::Accepted)
}

pub fn classify(topology: &Topology, max_degree: usize) -> Result<Status, TopologyError> {
    verdict(&topology.adjacency, max_degree).map(Verdict::status)
}

/// Outcome of [`generate`] with the number of candidates it took.
#[derive(Debug, Clone)]
pub struct Generated {
    pub topology: Topology,
    pub attempts: u32,
}

/// Rejection-samples until a candidate is accepted or attempts run out.
/// Deterministic in `params.seed`.
pub fn generate(params: &GenParams) -> Result<Generated, TopologyError> {
    params.check_feasible()?;
    let mut rng = TopologyRng::seed_from_u64(params.seed);
    let (mut over, mut disconnected) = (0, 0);
    for attempt in 1..=params.max_attempts {
        let candidate = sample_matrix(params.n, params.density, &mut rng);
        match verdict(&candidate, params.max_degree)? {
            Verdict::Accepted => {
                return Ok(Generated {
                    topology: Topology { adjacency: candidate, status: Some(Status::Accepted100), seq: 0 },
                    attempts: attempt,
                })
            }
            Verdict::OverConnected => over += 1,
            Verdict::Disconnected => disconnected += 1,
        }
    }
    Err(TopologyError::GenerationExhausted { attempts: params.max_attempts, over_connected: over, disconnected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> TopologyRng {
        TopologyRng::seed_from_u64(seed)
    }

    #[test]
    fn density_extremes() {
        let zero = sample_matrix(4, 0, &mut rng(1));
        assert_eq!(zero, AdjacencyMatrix::zeros(4));
        let full = sample_matrix(4, 100, &mut rng(1));
        assert_eq!(full, AdjacencyMatrix::complete(4));
        assert!((0..4).all(|x| full.degree(x) == 3));
    }

    #[test]
    fn classify_examples() {
        let path = Topology::new(AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]), 0);
        assert_eq!(classify(&path, 2), Ok(Status::Accepted100));
        let split = Topology::new(AdjacencyMatrix::from_edges(3, &[(0, 1)]), 0);
        assert_eq!(classify(&split, 4), Ok(Status::Rejected99));
        let k4 = Topology::new(AdjacencyMatrix::complete(4), 0);
        assert_eq!(classify(&k4, 2), Ok(Status::Rejected99));
        assert_eq!(verdict(&k4.adjacency, 2), Ok(Verdict::OverConnected));
        assert_eq!(verdict(&split.adjacency, 4), Ok(Verdict::Disconnected));
    }

    #[test]
    fn single_node_is_connected_but_isolated_pair_is_not() {
        assert_eq!(verdict(&AdjacencyMatrix::zeros(1), 0), Ok(Verdict::Accepted));
        assert_eq!(verdict(&AdjacencyMatrix::zeros(2), 1), Ok(Verdict::Disconnected));
    }

    #[test]
    fn malformed_matrices() {
        let asym = AdjacencyMatrix::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap();
        assert!(matches!(verdict(&asym, 4), Err(TopologyError::MalformedMatrix(_))));
        let diag = AdjacencyMatrix::from_rows(&[vec![1, 0], vec![0, 0]]).unwrap();
        assert!(matches!(verdict(&diag, 4), Err(TopologyError::MalformedMatrix(_))));
        let two = AdjacencyMatrix::from_rows(&[vec![0, 2], vec![2, 0]]).unwrap();
        assert!(matches!(verdict(&two, 4), Err(TopologyError::MalformedMatrix(_))));
        assert!(AdjacencyMatrix::from_rows(&[vec![0, 1], vec![1]]).is_err());
    }

    #[test]
    fn feasibility() {
        assert!(GenParams::new(1, 30, 0, 0).check_feasible().is_ok());
        assert!(matches!(GenParams::new(5, 50, 1, 0).check_feasible(), Err(TopologyError::Infeasible(_))));
        assert!(GenParams::new(2, 50, 1, 0).check_feasible().is_ok());
        assert!(GenParams::new(2, 50, 0, 0).check_feasible().is_err());
        assert!(GenParams::new(0, 50, 1, 0).check_feasible().is_err());
        assert!(GenParams::new(3, 101, 2, 0).check_feasible().is_err());
    }

    #[test]
    fn generate_single_node() {
        let g = generate(&GenParams::new(1, 77, 0, 9)).unwrap();
        assert_eq!(g.topology.adjacency, AdjacencyMatrix::zeros(1));
        assert!(g.topology.is_accepted());
        assert_eq!(g.attempts, 1);
    }

    #[test]
    fn generate_is_deterministic() {
        let params = GenParams::new(6, 40, 3, 1234);
        let a = generate(&params).unwrap();
        let b = generate(&params).unwrap();
        assert_eq!(a.topology, b.topology);
        assert_eq!(a.attempts, b.attempts);
    }

    #[test]
    fn exhaustion_reports_reasons() {
        // Density 0 never yields a connected pair.
        let mut params = GenParams::new(3, 0, 2, 5);
        params.max_attempts = 20;
        assert_eq!(
            generate(&params).unwrap_err(),
            TopologyError::GenerationExhausted { attempts: 20, over_connected: 0, disconnected: 20 }
        );
        let mut params = GenParams::new(4, 100, 2, 5);
        params.max_attempts = 7;
        assert_eq!(
            generate(&params).unwrap_err(),
            TopologyError::GenerationExhausted { attempts: 7, over_connected: 7, disconnected: 0 }
        );
    }

    #[test]
    fn embed_keeps_edges_and_isolates_extra_nodes() {
        let m = AdjacencyMatrix::from_edges(2, &[(0, 1)]).embed(4);
        assert_eq!(m.edges(), vec![(0, 1)]);
        assert_eq!(m.degree(3), 0);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn display_rows() {
        let m = AdjacencyMatrix::from_edges(3, &[(0, 1)]);
        assert_eq!(m.to_string(), "0 1 0\n1 0 0\n0 0 0\n");
    }
}
