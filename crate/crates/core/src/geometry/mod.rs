//! Zero-isocontour extraction (marching squares), element solid fractions,
//! interface perimeter and the truncated signed-distance target field.

mod feature;

pub use feature::{minimum_feature_diameter, FeatureOptions};

use crate::grid::StructuredGrid;
use crate::par;

/// Nodal level-set values closer to zero than this (times `h`) are moved to
/// `+NUDGE h` before any geometry is extracted.
pub const NUDGE: f64 = 1e-10;

pub fn nudge(phi: &[f64], h: f64) -> Vec<f64> {
    let eps = NUDGE * h;
    phi.iter().map(|&v| if v.abs() < eps { eps } else { v }).collect()
}

// Local unit-square corners, counterclockwise from lower-left.
const CORNERS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

/// Crossing of the zero level on the grid edge from node `nodes[0]` to
/// `nodes[1]`, at parameter `t = φ_a / (φ_a − φ_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCrossing {
    pub nodes: [usize; 2],
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub elem: usize,
    pub ends: [EdgeCrossing; 2],
}

impl Segment {
    pub fn length(&self) -> f64 {
        ((self.b[0] - self.a[0]).powi(2) + (self.b[1] - self.a[1]).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Interface {
    pub segments: Vec<Segment>,
}

impl Interface {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }
}

/// Marching-squares analysis of one element with (already nudged) corner
/// values in counterclockwise order.
#[derive(Debug, Clone)]
struct ElementCut {
    /// Crossing parameter on local edge k (corner k → corner k+1).
    t: [Option<f64>; 4],
    /// Pairs of local edges joined by an interface segment.
    pairs: Vec<[usize; 2]>,
    /// Solid polygons as sequences of vertices.
    polys: Vec<Vec<Vertex>>,
}

#[derive(Debug, Clone, Copy)]
enum Vertex {
    Corner(usize),
    Edge(usize),
}

fn cut_element(v: &[f64; 4]) -> ElementCut {
    let pos = v.map(|x| x > 0.0);
    let mut t = [None; 4];
    for k in 0..4 {
        let l = (k + 1) % 4;
        if pos[k] != pos[l] {
            t[k] = Some(v[k] / (v[k] - v[l]));
        }
    }
    let n_pos = pos.iter().filter(|&&p| p).count();
    let saddle = n_pos == 2 && pos[0] == pos[2];

    let mut pairs = Vec::new();
    let mut polys = Vec::new();
    if n_pos == 0 {
        return ElementCut { t, pairs, polys };
    }
    if !saddle {
        let cut: Vec<usize> = (0..4).filter(|&k| t[k].is_some()).collect();
        if cut.len() == 2 {
            pairs.push([cut[0], cut[1]]);
        }
        let mut poly = Vec::new();
        for k in 0..4 {
            if pos[k] {
                poly.push(Vertex::Corner(k));
            }
            if t[k].is_some() {
                poly.push(Vertex::Edge(k));
            }
        }
        polys.push(poly);
        return ElementCut { t, pairs, polys };
    }

    // Saddle: the bilinear center value decides which diagonal connects.
    let center = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    let solid_connected = center > 0.0;
    for k in 0..4 {
        let isolated = if solid_connected { !pos[k] } else { pos[k] };
        if isolated {
            pairs.push([(k + 3) % 4, k]);
        }
    }
    if solid_connected {
        let mut poly = Vec::new();
        for k in 0..4 {
            if pos[k] {
                poly.push(Vertex::Corner(k));
            }
            poly.push(Vertex::Edge(k));
        }
        polys.push(poly);
    } else {
        for k in 0..4 {
            if pos[k] {
                polys.push(vec![Vertex::Edge((k + 3) % 4), Vertex::Corner(k), Vertex::Edge(k)]);
            }
        }
    }
    ElementCut { t, pairs, polys }
}

/// Local coordinates of a crossing on edge k, and d(point)/dt.
#[inline]
fn edge_point(k: usize, t: f64) -> ([f64; 2], [f64; 2]) {
    let a = CORNERS[k];
    let b = CORNERS[(k + 1) % 4];
    let d = [b[0] - a[0], b[1] - a[1]];
    ([a[0] + t * d[0], a[1] + t * d[1]], d)
}

/// `(dt/dφ_k, dt/dφ_{k+1})` for `t = φ_k / (φ_k − φ_{k+1})`.
#[inline]
fn dt_dphi(a: f64, b: f64) -> (f64, f64) {
    let den = (a - b) * (a - b);
    (-b / den, a / den)
}

/// A polygon vertex and, for crossing vertices, the cut edge with the
/// vertex's derivative along it.
type PolyVertex = ([f64; 2], Option<(usize, [f64; 2])>);

/// Area fraction of `{φ > 0}` in an element and its derivative with respect
/// to the four corner values.
fn fraction_and_grad(v: &[f64; 4]) -> (f64, [f64; 4]) {
    if v.iter().all(|&x| x > 0.0) {
        return (1.0, [0.0; 4]);
    }
    if v.iter().all(|&x| x <= 0.0) {
        return (0.0, [0.0; 4]);
    }
    let cut = cut_element(v);
    let mut area = 0.0;
    let mut grad = [0.0; 4];
    for poly in &cut.polys {
        let m = poly.len();
        // Vertex positions and, for crossing vertices, the edge they sit on.
        let pts: Vec<PolyVertex> = poly
            .iter()
            .map(|vx| match *vx {
                Vertex::Corner(k) => (CORNERS[k], None),
                Vertex::Edge(k) => {
                    let (p, d) = edge_point(k, cut.t[k].unwrap());
                    (p, Some((k, d)))
                }
            })
            .collect();
        let mut a2 = 0.0;
        for i in 0..m {
            let p = pts[i].0;
            let q = pts[(i + 1) % m].0;
            a2 += p[0] * q[1] - q[0] * p[1];
        }
        area += 0.5 * a2;
        for i in 0..m {
            if let Some((k, d)) = pts[i].1 {
                let prev = pts[(i + m - 1) % m].0;
                let next = pts[(i + 1) % m].0;
                let da_dp = [0.5 * (next[1] - prev[1]), 0.5 * (prev[0] - next[0])];
                let da_dt = da_dp[0] * d[0] + da_dp[1] * d[1];
                let l = (k + 1) % 4;
                let (ga, gb) = dt_dphi(v[k], v[l]);
                grad[k] += da_dt * ga;
                grad[l] += da_dt * gb;
            }
        }
    }
    (area, grad)
}

/// Per-element solid fractions with their corner derivatives.
#[derive(Debug, Clone)]
pub struct SolidFractionField {
    pub fractions: Vec<f64>,
    /// `df_e/dφ` for the four element corners (in `elem_nodes` order).
    pub d_dphi: Vec<[f64; 4]>,
}

fn corner_values(grid: &StructuredGrid, phi: &[f64], e: usize) -> [f64; 4] {
    grid.elem_nodes(e).map(|n| phi[n])
}

/// Exact area fraction of the polygonal `{φ > 0}` region in each element.
/// `phi` is nudged internally.
pub fn solid_fractions(grid: &StructuredGrid, phi: &[f64]) -> SolidFractionField {
    let phi = nudge(phi, grid.h);
    let per: Vec<(f64, [f64; 4])> =
        par::map_range(grid.num_elements(), |e| fraction_and_grad(&corner_values(grid, &phi, e)));
    let (fractions, d_dphi) = per.into_iter().unzip();
    SolidFractionField { fractions, d_dphi }
}

/// Zero isocontour of the nodal level set as a list of straight segments,
/// one or two per cut element. `phi` is nudged internally.
pub fn extract_interface(grid: &StructuredGrid, phi: &[f64]) -> Interface {
    let phi = nudge(phi, grid.h);
    let per: Vec<Vec<Segment>> = par::map_range(grid.num_elements(), |e| {
        let v = corner_values(grid, &phi, e);
        if v.iter().all(|&x| x > 0.0) || v.iter().all(|&x| x <= 0.0) {
            return Vec::new();
        }
        let nodes = grid.elem_nodes(e);
        let o = grid.elem_origin(e);
        let cut = cut_element(&v);
        let crossing = |k: usize| {
            let t = cut.t[k].unwrap();
            let (p, _) = edge_point(k, t);
            (
                [o[0] + grid.h * p[0], o[1] + grid.h * p[1]],
                EdgeCrossing {
                    nodes: [nodes[k], nodes[(k + 1) % 4]],
                    t,
                },
            )
        };
        cut.pairs
            .iter()
            .map(|&[k0, k1]| {
                let (a, c0) = crossing(k0);
                let (b, c1) = crossing(k1);
                Segment {
                    a,
                    b,
                    elem: e,
                    ends: [c0, c1],
                }
            })
            .filter(|s| s.length() > 0.0)
            .collect()
    });
    Interface {
        segments: per.into_iter().flatten().collect(),
    }
}

/// Interface length normalized by the design-domain boundary length, with
/// its derivative with respect to nodal `φ`.
pub fn perimeter(grid: &StructuredGrid, phi: &[f64], interface: &Interface) -> (f64, Vec<f64>) {
    let norm = grid.boundary_length();
    let phi = nudge(phi, grid.h);
    let mut grad = vec![0.0; grid.num_nodes()];
    let mut total = 0.0;
    for seg in &interface.segments {
        let len = seg.length();
        total += len;
        let u = [(seg.b[0] - seg.a[0]) / len, (seg.b[1] - seg.a[1]) / len];
        // dL/da = -u, dL/db = u
        for (end, sign) in seg.ends.iter().zip([-1.0, 1.0]) {
            let [na, nb] = end.nodes;
            let pa = grid.node_coords(na);
            let pb = grid.node_coords(nb);
            let dp_dt = [pb[0] - pa[0], pb[1] - pa[1]];
            let dl_dt = sign * (u[0] * dp_dt[0] + u[1] * dp_dt[1]);
            let (ga, gb) = dt_dphi(phi[na], phi[nb]);
            grad[na] += dl_dt * ga / norm;
            grad[nb] += dl_dt * gb / norm;
        }
    }
    (total / norm, grad)
}

/// Truncated signed-distance field used as the regularization target.
#[derive(Debug, Clone)]
pub struct TargetLsf {
    pub values: Vec<f64>,
    pub upper: f64,
    pub lower: f64,
}

impl TargetLsf {
    /// `φ̃_up − φ̃_low`.
    pub fn band(&self) -> f64 {
        self.upper - self.lower
    }
}

#[inline]
fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let w = [p[0] - a[0], p[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        ((w[0] * d[0] + w[1] * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

/// Signed distance to the interface, signed by `φ` and truncated to
/// `[lower, upper]`.
///
/// Only segments within the truncation band of a node can affect its value,
/// so segments are bucketed by element and each node scans the elements
/// within reach of the band.
pub fn signed_distance_target(
    grid: &StructuredGrid,
    interface: &Interface,
    phi: &[f64],
    lower: f64,
    upper: f64,
) -> TargetLsf {
    let phi = nudge(phi, grid.h);
    let n = grid.num_nodes();
    if interface.is_empty() {
        let values = phi.iter().map(|&v| if v > 0.0 { upper } else { lower }).collect();
        return TargetLsf { values, upper, lower };
    }
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); grid.num_elements()];
    for (k, s) in interface.segments.iter().enumerate() {
        buckets[s.elem].push(k as u32);
    }
    let band = upper.max(-lower);
    let reach = (band / grid.h).ceil() as isize + 1;
    let values = par::map_range(n, |node| {
        let (i, j) = grid.node_ij(node);
        let p = grid.node_coords(node);
        let mut best = f64::INFINITY;
        for ej in (j as isize - reach).max(0)..(j as isize + reach).min(grid.ny as isize) {
            for ei in (i as isize - reach).max(0)..(i as isize + reach).min(grid.nx as isize) {
                let e = ej as usize * grid.nx + ei as usize;
                for &k in &buckets[e] {
                    let s = &interface.segments[k as usize];
                    best = best.min(point_segment_distance(p, s.a, s.b));
                }
            }
        }
        if phi[node] > 0.0 {
            best.min(upper)
        } else {
            (-best).max(lower)
        }
    });
    TargetLsf { values, upper, lower }
}
