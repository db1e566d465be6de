//! Simplicial meshes of the model domains, P1 functions and the discrete
//! p-Laplacian.

mod fe;
mod graded;
mod io;

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use fe::{apply_ap, load_vector, norm_linf, norm_lq, norm_w1p, weighted_stiffness, FeFunction};
pub use graded::{graded_integrate, integrate_distance_power, DistancePowerIntegral, GradedOptions};
pub use io::{read_mesh, write_mesh};

use crate::quadrature::SimplexRule;
use crate::{Error, Result};

/// Model domains with a closed-form distance to the boundary.
///
/// The square is only Lipschitz; it is kept as a cheap structured test
/// geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    UnitSquare,
    UnitDisk,
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn distance(&self, x: [f64; 2]) -> f64 {
        match *self {
            Domain::Interval { a, b } => (x[0] - a).min(b - x[0]).max(0.0),
            Domain::UnitSquare => x[0].min(1.0 - x[0]).min(x[1]).min(1.0 - x[1]).max(0.0),
            Domain::UnitDisk => (1.0 - x[0].hypot(x[1])).max(0.0),
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::UnitSquare => 2f64.sqrt(),
            Domain::UnitDisk => 2.0,
        }
    }
}

/// A simplex with its precomputed P1 geometry.
#[derive(Debug, Clone)]
pub struct Element {
    /// Vertex indices; only the first `dim + 1` entries are meaningful.
    pub nodes: [usize; 3],
    /// Gradients of the barycentric coordinates (constant on the simplex).
    pub grads: [[f64; 2]; 3],
    pub measure: f64,
}

impl Element {
    pub fn vertices(&self, dim: usize) -> &[usize] {
        &self.nodes[..=dim]
    }
}

#[derive(Debug, Clone)]
enum DistanceModel {
    Exact(Domain),
    /// Euclidean distance to the boundary facets of the mesh itself.
    Facets(Vec<[usize; 2]>),
}

/// Conforming simplicial mesh with boundary flags and nodal distance to the
/// boundary.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<Element>,
    boundary: Vec<bool>,
    distance: Vec<f64>,
    distance_model: DistanceModel,
    rule: SimplexRule,
    lumped_mass: Vec<f64>,
    h_max: f64,
    diameter: f64,
}

/// Structured mesh of one of the model domains.
pub fn build_mesh(domain: Domain, resolution: usize) -> Result<Mesh> {
    if resolution < 2 {
        return Err(Error::InvalidParameter {
            name: "resolution",
            reason: format!("expected resolution >= 2, got {resolution}"),
        });
    }
    let (nodes, cells, boundary) = match domain {
        Domain::Interval { a, b } => {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidParameter {
                    name: "domain",
                    reason: format!("interval needs a < b, got ({a}, {b})"),
                });
            }
            interval_grid(a, b, resolution)
        }
        Domain::UnitSquare => square_grid(resolution),
        Domain::UnitDisk => disk_rings(resolution),
    };
    Mesh::assemble(domain.dim(), nodes, cells, boundary, DistanceModel::Exact(domain))
}

fn interval_grid(a: f64, b: f64, n: usize) -> (Vec<[f64; 2]>, Vec<Vec<usize>>, Vec<bool>) {
    let h = (b - a) / n as f64;
    let nodes = (0..=n).map(|i| [if i == n { b } else { a + h * i as f64 }, 0.0]).collect();
    let cells = (0..n).map(|i| vec![i, i + 1]).collect();
    let boundary = (0..=n).map(|i| i == 0 || i == n).collect();
    (nodes, cells, boundary)
}

/// `(n+1)^2` nodes, `2 n^2` triangles, diagonals alternating in a
/// checkerboard pattern.
fn square_grid(n: usize) -> (Vec<[f64; 2]>, Vec<Vec<usize>>, Vec<bool>) {
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (p00, p10, p01, p11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                cells.push(vec![p00, p10, p11]);
                cells.push(vec![p00, p11, p01]);
            } else {
                cells.push(vec![p00, p10, p01]);
                cells.push(vec![p10, p11, p01]);
            }
        }
    }
    (nodes, cells, boundary)
}

/// Concentric rings of radius `j/n` carrying `6 j` nodes each, stitched
/// sector by sector. Boundary nodes lie exactly on the unit circle.
fn disk_rings(n: usize) -> (Vec<[f64; 2]>, Vec<Vec<usize>>, Vec<bool>) {
    let ring_start = |j: usize| if j == 0 { 0 } else { 1 + 3 * j * (j - 1) };
    let mut nodes = vec![[0.0, 0.0]];
    let mut boundary = vec![false];
    for j in 1..=n {
        let r = j as f64 / n as f64;
        for k in 0..6 * j {
            let theta = 2.0 * PI * k as f64 / (6 * j) as f64;
            let (s, c) = theta.sin_cos();
            let (x, y) = if j == n {
                let norm = c.hypot(s);
                (c / norm, s / norm)
            } else {
                (r * c, r * s)
            };
            nodes.push([x, y]);
            boundary.push(j == n);
        }
    }
    let ring_node = |j: usize, k: usize| {
        if j == 0 {
            0
        } else {
            ring_start(j) + k % (6 * j)
        }
    };
    let mut cells = Vec::with_capacity(6 * n * n);
    for j in 1..=n {
        for s in 0..6 {
            let inner = |m: usize| ring_node(j - 1, s * (j - 1) + m);
            let outer = |m: usize| ring_node(j, s * j + m);
            for m in 0..j {
                cells.push(vec![outer(m), outer(m + 1), inner(m)]);
            }
            for m in 0..j.saturating_sub(1) {
                cells.push(vec![inner(m), outer(m + 1), inner(m + 1)]);
            }
        }
    }
    (nodes, cells, boundary)
}

impl Mesh {
    /// Builds a mesh from raw connectivity; triangles are reoriented
    /// counter-clockwise. Boundary flags must agree with the facet topology.
    pub fn from_parts(dim: usize, nodes: Vec<[f64; 2]>, cells: Vec<Vec<usize>>, boundary: Vec<bool>) -> Result<Mesh> {
        if let Some(bad) = cells.iter().flatten().find(|&&v| v >= nodes.len()) {
            return Err(Error::Mesh(format!("element references missing node {bad}")));
        }
        let facets = boundary_facets(dim, &cells)?;
        let mut on_facet = vec![false; nodes.len()];
        for f in &facets {
            on_facet[f[0]] = true;
            on_facet[f[1]] = true;
        }
        if let Some(i) = (0..nodes.len()).find(|&i| on_facet.get(i) != boundary.get(i)) {
            return Err(Error::Mesh(format!("boundary flag of node {i} disagrees with the mesh topology")));
        }
        Mesh::assemble(dim, nodes, cells, boundary, DistanceModel::Facets(facets))
    }

    fn assemble(
        dim: usize,
        nodes: Vec<[f64; 2]>,
        cells: Vec<Vec<usize>>,
        boundary: Vec<bool>,
        distance_model: DistanceModel,
    ) -> Result<Mesh> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Mesh(format!("unsupported dimension {dim}")));
        }
        if boundary.len() != nodes.len() {
            return Err(Error::Mesh("one boundary flag per node required".into()));
        }
        let mut elements = Vec::with_capacity(cells.len());
        for (e, cell) in cells.iter().enumerate() {
            if cell.len() != dim + 1 {
                return Err(Error::Mesh(format!("element {e} has {} vertices", cell.len())));
            }
            if let Some(&bad) = cell.iter().find(|&&v| v >= nodes.len()) {
                return Err(Error::Mesh(format!("element {e} references missing node {bad}")));
            }
            elements.push(
                element_geometry(dim, &nodes, cell).ok_or_else(|| Error::Mesh(format!("element {e} is degenerate")))?,
            );
        }
        if dim == 2 {
            boundary_facets(dim, &cells)?;
        }
        let mut mesh = Mesh {
            dim,
            nodes,
            elements,
            boundary,
            distance: Vec::new(),
            distance_model,
            rule: SimplexRule::for_dim(dim),
            lumped_mass: Vec::new(),
            h_max: 0.0,
            diameter: 0.0,
        };
        mesh.distance = (0..mesh.nodes.len())
            .map(|i| if mesh.boundary[i] { 0.0 } else { mesh.distance_at(mesh.nodes[i]) })
            .collect();
        if let Some(i) = (0..mesh.nodes.len()).find(|&i| !mesh.boundary[i] && mesh.distance[i] <= 0.0) {
            return Err(Error::Mesh(format!("interior node {i} has zero distance to the boundary")));
        }
        let mut lumped = vec![0.0; mesh.nodes.len()];
        let mut h_max: f64 = 0.0;
        for el in &mesh.elements {
            let verts = el.vertices(dim);
            for &v in verts {
                lumped[v] += el.measure / (dim + 1) as f64;
            }
            for (a, &va) in verts.iter().enumerate() {
                for &vb in &verts[a + 1..] {
                    h_max = h_max.max(dist(mesh.nodes[va], mesh.nodes[vb]));
                }
            }
        }
        mesh.lumped_mass = lumped;
        mesh.h_max = h_max;
        mesh.diameter = match &mesh.distance_model {
            DistanceModel::Exact(d) => d.diameter(),
            DistanceModel::Facets(_) => bounding_diameter(&mesh.nodes),
        };
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.boundary[i])
    }

    /// `d(x_i)` per node.
    pub fn nodal_distance(&self) -> &[f64] {
        &self.distance
    }

    /// The domain this mesh was generated from, if any.
    pub fn domain(&self) -> Option<Domain> {
        match self.distance_model {
            DistanceModel::Exact(d) => Some(d),
            DistanceModel::Facets(_) => None,
        }
    }

    /// Distance from an arbitrary point to the boundary.
    pub fn distance_at(&self, x: [f64; 2]) -> f64 {
        match &self.distance_model {
            DistanceModel::Exact(d) => d.distance(x),
            DistanceModel::Facets(facets) => facets
                .iter()
                .map(|f| segment_distance(x, self.nodes[f[0]], self.nodes[f[1]]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `∫ ψ_i dx` for each nodal basis function.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    /// Longest edge.
    pub fn h(&self) -> f64 {
        self.h_max
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn rule(&self) -> &SimplexRule {
        &self.rule
    }

    /// Physical coordinates of a barycentric point of an element.
    pub fn point(&self, el: &Element, bary: &[f64; 3]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (a, &v) in el.vertices(self.dim).iter().enumerate() {
            x[0] += bary[a] * self.nodes[v][0];
            x[1] += bary[a] * self.nodes[v][1];
        }
        x
    }

    /// Elements none of whose vertices lie on the boundary.
    pub fn is_interior_element(&self, el: &Element) -> bool {
        el.vertices(self.dim).iter().all(|&v| !self.boundary[v])
    }

    /// Node-to-node adjacency through shared elements.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for el in &self.elements {
            let verts = el.vertices(self.dim);
            for &a in verts {
                for &b in verts {
                    if a != b && !adj[a].contains(&b) {
                        adj[a].push(b);
                    }
                }
            }
        }
        adj
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn segment_distance(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(x, a);
    }
    let t = (((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist(x, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn bounding_diameter(nodes: &[[f64; 2]]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for x in nodes {
        for k in 0..2 {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    (hi[0] - lo[0]).hypot(hi[1] - lo[1])
}

/// Facets owned by exactly one element; end points in 1D are stored as
/// degenerate `[v, v]` facets.
fn boundary_facets(dim: usize, cells: &[Vec<usize>]) -> Result<Vec<[usize; 2]>> {
    let mut count: HashMap<[usize; 2], usize> = HashMap::new();
    for cell in cells {
        if dim == 1 {
            for &v in cell {
                *count.entry([v, v]).or_default() += 1;
            }
        } else {
            for k in 0..3 {
                let (a, b) = (cell[k], cell[(k + 1) % 3]);
                *count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
    }
    if let Some((f, _)) = count.iter().find(|(_, &c)| c > 2) {
        return Err(Error::Mesh(format!("non-conforming facet {f:?}")));
    }
    let mut facets: Vec<[usize; 2]> = count.into_iter().filter(|&(_, c)| c == 1).map(|(f, _)| f).collect();
    facets.sort_unstable();
    Ok(facets)
}

fn element_geometry(dim: usize, nodes: &[[f64; 2]], cell: &[usize]) -> Option<Element> {
    if dim == 1 {
        let (x0, x1) = (nodes[cell[0]][0], nodes[cell[1]][0]);
        let (i0, i1) = if x1 > x0 { (cell[0], cell[1]) } else { (cell[1], cell[0]) };
        let len = (x1 - x0).abs();
        if len <= 0.0 || !len.is_finite() {
            return None;
        }
        return Some(Element {
            nodes: [i0, i1, usize::MAX],
            grads: [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0; 2]],
            measure: len,
        });
    }
    let (mut i0, mut i1, i2) = (cell[0], cell[1], cell[2]);
    let det = |i0: usize, i1: usize, i2: usize| {
        let (p0, p1, p2) = (nodes[i0], nodes[i1], nodes[i2]);
        (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
    };
    let mut d = det(i0, i1, i2);
    if d < 0.0 {
        std::mem::swap(&mut i0, &mut i1);
        d = -d;
    }
    if d <= 0.0 || !d.is_finite() {
        return None;
    }
    let (p0, p1, p2) = (nodes[i0], nodes[i1], nodes[i2]);
    // ∇λ_a = rot90(opposite edge) / (2 area)
    let g = |pa: [f64; 2], pb: [f64; 2]| [(pa[1] - pb[1]) / d, (pb[0] - pa[0]) / d];
    Some(Element { nodes: [i0, i1, i2], grads: [g(p1, p2), g(p2, p0), g(p0, p1)], measure: 0.5 * d })
}
