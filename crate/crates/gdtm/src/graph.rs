//! Graph representation of a structure and the adjacency-matrix machinery.
//!
//! A structure is a set of vertices (lumped masses) joined by typed edges
//! (springs/dampers). Connectivity is encoded as one or more V x V weighted
//! matrices with a Laplacian sign pattern: off-diagonal (i, j) holds the
//! negated edge weight, the diagonal holds the sum of weights attached to the
//! vertex (ground attachments included). With that convention the uniform
//! chain satisfies K = k * A entrywise, which is what makes the
//! analytically-weighted surrogate in [`crate::surrogate`] possible.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An undirected typed edge between two vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub type_label: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(from: usize, to: usize, type_label: usize, weight: f64) -> Self {
        Edge { from, to, type_label, weight }
    }
}

/// Vertices, typed edges and ground attachments of one structure.
///
/// Ground attachments are modelled as an extra unit-weight spring of type 0
/// from the listed vertex to a fixed support; they contribute only to matrix
/// diagonals.
#[derive(Debug, Clone)]
pub struct Graph {
    vertex_count: usize,
    edges: Vec<Edge>,
    grounded: Vec<usize>,
}

impl Graph {
    pub fn new(vertex_count: usize, edges: Vec<Edge>, grounded: Vec<usize>) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidSize("graph needs at least one vertex".into()));
        }
        let mut seen = HashSet::new();
        for e in &edges {
            if e.from >= vertex_count || e.to >= vertex_count {
                return Err(Error::IndexOutOfRange(format!(
                    "edge ({}, {}) outside 0..{}",
                    e.from, e.to, vertex_count
                )));
            }
            if e.from == e.to {
                return Err(Error::InvalidParameter(format!("self edge at vertex {}", e.from)));
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) has non-finite weight",
                    e.from, e.to
                )));
            }
            let key = (e.from.min(e.to), e.from.max(e.to), e.type_label);
            if !seen.insert(key) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge ({}, {}) of type {}",
                    e.from, e.to, e.type_label
                )));
            }
        }
        for &g in &grounded {
            if g >= vertex_count {
                return Err(Error::IndexOutOfRange(format!(
                    "grounded vertex {} outside 0..{}",
                    g, vertex_count
                )));
            }
        }
        Ok(Graph { vertex_count, edges, grounded })
    }

    /// A grounded or free chain of `n` vertices with unit-weight edges of a
    /// single type.
    pub fn chain(n: usize, grounded: bool) -> Result<Self> {
        Self::chain_with_spring_types(n, &[0], grounded)
    }

    /// A chain whose springs cycle through `type_cycle` from the support
    /// upward. With `grounded` the ground spring is the first element of the
    /// cycle; chain springs continue the cycle in order.
    pub fn chain_with_spring_types(n: usize, type_cycle: &[usize], grounded: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("chain needs at least one vertex".into()));
        }
        if type_cycle.is_empty() {
            return Err(Error::InvalidParameter("empty spring type cycle".into()));
        }
        // Spring s joins vertices (s-1, s) for s >= 1; spring 0 is the ground
        // attachment when grounded, otherwise the cycle starts at spring 1.
        let mut edges = Vec::new();
        let offset = if grounded { 0 } else { 1 };
        for s in 1..n {
            let ty = type_cycle[(s - offset) % type_cycle.len()];
            edges.push(Edge::new(s - 1, s, ty, 1.0));
        }
        let grounded_list = if grounded { vec![0] } else { Vec::new() };
        Self::new(n, edges, grounded_list)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn grounded_vertices(&self) -> &[usize] {
        &self.grounded
    }

    pub fn edge_type_count(&self) -> usize {
        self.edges.iter().map(|e| e.type_label + 1).max().unwrap_or(0)
    }

    /// Sorted neighbor list per vertex, deduplicated across edge types.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertex_count];
        for e in &self.edges {
            nbrs[e.from].push(e.to);
            nbrs[e.to].push(e.from);
        }
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
        }
        nbrs
    }

    /// Loads a graph from its text representation: one `vertex_count=<n>`
    /// line, an optional `grounded=<i,...>` line and one
    /// `edge=<i>,<j>,<type>,<weight>` line per edge. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut vertex_count: Option<usize> = None;
        let mut grounded = Vec::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key=value, got {:?}", lineno + 1, line))
            })?;
            match key.trim() {
                "vertex_count" => {
                    let n = value.trim().parse::<usize>().map_err(|e| {
                        Error::Parse(format!("line {}: bad vertex_count: {}", lineno + 1, e))
                    })?;
                    vertex_count = Some(n);
                }
                "grounded" => {
                    for part in value.split(',').filter(|p| !p.trim().is_empty()) {
                        let idx = part.trim().parse::<usize>().map_err(|e| {
                            Error::Parse(format!("line {}: bad grounded index: {}", lineno + 1, e))
                        })?;
                        grounded.push(idx);
                    }
                }
                "edge" => {
                    let parts: Vec<&str> = value.split(',').map(|p| p.trim()).collect();
                    if parts.len() != 4 {
                        return Err(Error::Parse(format!(
                            "line {}: edge needs i,j,type,weight",
                            lineno + 1
                        )));
                    }
                    let i = parts[0].parse::<usize>();
                    let j = parts[1].parse::<usize>();
                    let ty = parts[2].parse::<usize>();
                    let w = parts[3].parse::<f64>();
                    match (i, j, ty, w) {
                        (Ok(i), Ok(j), Ok(ty), Ok(w)) => edges.push(Edge::new(i, j, ty, w)),
                        _ => {
                            return Err(Error::Parse(format!(
                                "line {}: malformed edge {:?}",
                                lineno + 1,
                                value
                            )))
                        }
                    }
                }
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: unknown key {:?}",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        let vertex_count = vertex_count
            .ok_or_else(|| Error::Parse("graph file is missing a vertex_count line".into()))?;
        Self::new(vertex_count, edges, grounded)
    }
}

/// Whether an adjacency set uses one shared matrix or one matrix per
/// component type plus the identity self matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyKind {
    Homogeneous,
    Heterogeneous,
}

/// One or more V x V connectivity matrices sharing a vertex set.
#[derive(Debug, Clone)]
pub struct AdjacencySet {
    kind: AdjacencyKind,
    matrices: Vec<DMatrix<f64>>,
}

impl AdjacencySet {
    pub fn homogeneous(matrix: DMatrix<f64>) -> Result<Self> {
        Self::validated(AdjacencyKind::Homogeneous, vec![matrix])
    }

    /// `matrices` must end with the identity self matrix.
    pub fn heterogeneous(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::validated(AdjacencyKind::Heterogeneous, matrices)
    }

    fn validated(kind: AdjacencyKind, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidSize("adjacency set needs at least one matrix".into()));
        }
        if kind == AdjacencyKind::Homogeneous && matrices.len() != 1 {
            return Err(Error::InvalidSize(format!(
                "homogeneous adjacency must hold exactly one matrix, got {}",
                matrices.len()
            )));
        }
        let v = matrices[0].nrows();
        if v == 0 {
            return Err(Error::InvalidSize("adjacency matrix is empty".into()));
        }
        for m in &matrices {
            if m.nrows() != v || m.ncols() != v {
                return Err(Error::ShapeMismatch(format!(
                    "all adjacency matrices must be {v}x{v}, found {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical("adjacency matrix has non-finite entries".into()));
            }
        }
        if kind == AdjacencyKind::Heterogeneous {
            let last = &matrices[matrices.len() - 1];
            if last != &DMatrix::identity(v, v) {
                return Err(Error::InvalidParameter(
                    "heterogeneous adjacency must end with the identity self matrix".into(),
                ));
            }
        }
        Ok(AdjacencySet { kind, matrices })
    }

    pub fn kind(&self) -> AdjacencyKind {
        self.kind
    }

    /// Number of matrices, N.
    pub fn matrix_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// The single matrix of a homogeneous set.
    pub fn single(&self) -> Result<&DMatrix<f64>> {
        if self.kind != AdjacencyKind::Homogeneous {
            return Err(Error::Incompatible(
                "expected a homogeneous adjacency with a single matrix".into(),
            ));
        }
        Ok(&self.matrices[0])
    }
}

/// Per-vertex state features: column 0 velocity (m/s), column 1 displacement (m).
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix must have 2 columns (velocity, displacement), got {}",
                data.ncols()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("feature matrix has non-finite entries".into()));
        }
        Ok(FeatureMatrix { data })
    }

    pub fn from_state(velocity: &DVector<f64>, displacement: &DVector<f64>) -> Result<Self> {
        if velocity.len() != displacement.len() {
            return Err(Error::ShapeMismatch(format!(
                "velocity has {} entries, displacement {}",
                velocity.len(),
                displacement.len()
            )));
        }
        let v = velocity.len();
        let mut data = DMatrix::zeros(v, 2);
        data.column_mut(0).copy_from(velocity);
        data.column_mut(1).copy_from(displacement);
        Self::new(data)
    }

    pub fn vertex_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn velocity(&self) -> DVector<f64> {
        self.data.column(0).into_owned()
    }

    pub fn displacement(&self) -> DVector<f64> {
        self.data.column(1).into_owned()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Stiffness-pattern adjacency of a uniform chain: degree counts on the
/// diagonal (ground spring included at vertex 0 when grounded), -1 between
/// chain neighbors.
pub fn build_chain_adjacency(n: usize, grounded: bool) -> Result<AdjacencySet> {
    let graph = Graph::chain(n, grounded)?;
    build_homogeneous_adjacency(&graph)
}

/// Single weighted Laplacian-pattern matrix over all edges of the graph,
/// regardless of type.
pub fn build_homogeneous_adjacency(graph: &Graph) -> Result<AdjacencySet> {
    let v = graph.vertex_count();
    let mut a = DMatrix::zeros(v, v);
    for e in graph.edges() {
        a[(e.from, e.from)] += e.weight;
        a[(e.to, e.to)] += e.weight;
        a[(e.from, e.to)] -= e.weight;
        a[(e.to, e.from)] -= e.weight;
    }
    for &g in graph.grounded_vertices() {
        a[(g, g)] += 1.0;
    }
    AdjacencySet::homogeneous(a)
}

/// One Laplacian-pattern matrix per edge type (ground attachments count as
/// type 0), followed by the identity self matrix; N = type count + 1.
pub fn build_heterogeneous_adjacency(graph: &Graph) -> Result<AdjacencySet> {
    let type_count = graph.edge_type_count();
    if type_count == 0 {
        return Err(Error::InvalidSize(
            "heterogeneous adjacency needs at least one edge type".into(),
        ));
    }
    let v = graph.vertex_count();
    let mut matrices = vec![DMatrix::zeros(v, v); type_count];
    for e in graph.edges() {
        let m = &mut matrices[e.type_label];
        m[(e.from, e.from)] += e.weight;
        m[(e.to, e.to)] += e.weight;
        m[(e.from, e.to)] -= e.weight;
        m[(e.to, e.from)] -= e.weight;
    }
    for &g in graph.grounded_vertices() {
        matrices[0][(g, g)] += 1.0;
    }
    matrices.push(DMatrix::identity(v, v));
    AdjacencySet::heterogeneous(matrices)
}

/// For each matrix A_k the output holds columns A_k * velocity and
/// A_k * displacement, in matrix order: V x 2N.
pub fn aggregate(adj: &AdjacencySet, features: &FeatureMatrix) -> Result<DMatrix<f64>> {
    let v = adj.vertex_count();
    if features.vertex_count() != v {
        return Err(Error::ShapeMismatch(format!(
            "adjacency is {}x{} but features have {} rows",
            v,
            v,
            features.vertex_count()
        )));
    }
    let mut out = DMatrix::zeros(v, 2 * adj.matrix_count());
    for (k, m) in adj.matrices().iter().enumerate() {
        let agg = m * features.data();
        out.column_mut(2 * k).copy_from(&agg.column(0));
        out.column_mut(2 * k + 1).copy_from(&agg.column(1));
    }
    Ok(out)
}

/// How to rescale the spring contributions of an adjacency set.
#[derive(Debug, Clone)]
pub enum EdgeScaling {
    /// Multiply every spring contribution by one factor.
    Global(f64),
    /// One factor per spring of a chain-shaped homogeneous matrix, ordered
    /// ground spring first (when present) then bottom-up along the chain.
    PerSpring(Vec<f64>),
}

/// Rescales spring contributions; diagonals are rebuilt from the scaled
/// springs. The heterogeneous self matrix is left untouched.
pub fn scale_edges(adj: &AdjacencySet, scaling: &EdgeScaling) -> Result<AdjacencySet> {
    match scaling {
        EdgeScaling::Global(s) => {
            if !s.is_finite() || *s <= 0.0 {
                return Err(Error::InvalidParameter(format!("scale factor must be positive, got {s}")));
            }
            match adj.kind() {
                AdjacencyKind::Homogeneous => {
                    AdjacencySet::homogeneous(adj.matrices()[0].clone() * *s)
                }
                AdjacencyKind::Heterogeneous => {
                    let n = adj.matrix_count();
                    let mut mats: Vec<DMatrix<f64>> =
                        adj.matrices()[..n - 1].iter().map(|m| m * *s).collect();
                    mats.push(adj.matrices()[n - 1].clone());
                    AdjacencySet::heterogeneous(mats)
                }
            }
        }
        EdgeScaling::PerSpring(factors) => {
            let matrix = adj.single()?;
            let springs = chain_springs(matrix)?;
            if factors.len() != springs.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} scale factors for {} springs",
                    factors.len(),
                    springs.len()
                )));
            }
            if factors.iter().any(|f| !f.is_finite() || *f <= 0.0) {
                return Err(Error::InvalidParameter("spring scale factors must be positive".into()));
            }
            let v = matrix.nrows();
            let mut out = DMatrix::zeros(v, v);
            for (spring, factor) in springs.iter().zip(factors) {
                match spring {
                    ChainSpring::Ground { vertex, weight } => {
                        out[(*vertex, *vertex)] += factor * weight;
                    }
                    ChainSpring::Link { lower, upper, weight } => {
                        let w = factor * weight;
                        out[(*lower, *lower)] += w;
                        out[(*upper, *upper)] += w;
                        out[(*lower, *upper)] -= w;
                        out[(*upper, *lower)] -= w;
                    }
                }
            }
            AdjacencySet::homogeneous(out)
        }
    }
}

enum ChainSpring {
    Ground { vertex: usize, weight: f64 },
    Link { lower: usize, upper: usize, weight: f64 },
}

/// Recovers the spring list of a chain-shaped Laplacian matrix: link springs
/// from the superdiagonal, ground springs from diagonal surplus (row sums).
fn chain_springs(matrix: &DMatrix<f64>) -> Result<Vec<ChainSpring>> {
    let v = matrix.nrows();
    for i in 0..v {
        for j in 0..v {
            if j > i + 1 && matrix[(i, j)] != 0.0 {
                return Err(Error::Incompatible(
                    "per-spring scaling requires a chain-shaped (tridiagonal) matrix".into(),
                ));
            }
        }
    }
    let mut springs = Vec::new();
    for i in 0..v {
        let row_sum: f64 = matrix.row(i).iter().sum();
        if row_sum.abs() > 1e-9 {
            if row_sum < 0.0 {
                return Err(Error::Incompatible(format!(
                    "row {i} has negative surplus; not a valid spring pattern"
                )));
            }
            springs.push(ChainSpring::Ground { vertex: i, weight: row_sum });
        }
    }
    for i in 0..v.saturating_sub(1) {
        let w = -matrix[(i, i + 1)];
        if w != 0.0 {
            if w < 0.0 {
                return Err(Error::Incompatible(format!(
                    "positive off-diagonal at ({i}, {}); not a spring pattern",
                    i + 1
                )));
            }
            springs.push(ChainSpring::Link { lower: i, upper: i + 1, weight: w });
        }
    }
    // Ground springs are listed before link springs above only when the
    // grounded vertex is 0; reorder into chain order: ground(0), link(0,1), ...
    springs.sort_by_key(|s| match s {
        ChainSpring::Ground { vertex, .. } => 2 * vertex,
        ChainSpring::Link { lower, .. } => 2 * lower + 1,
    });
    Ok(springs)
}
