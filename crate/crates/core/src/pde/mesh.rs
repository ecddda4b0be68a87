//! Triangular meshes for star-shaped domains: a hexagonal background
//! lattice, boundary nodes equispaced in arc length, and around every spike
//! a polar patch whose rings are uniform inside the core and geometric
//! outside it. The point set is triangulated by a constrained Delaunay
//! triangulation with the boundary polygon as constraint.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rstar::primitives::{GeomWithData, Rectangle};
use rstar::RTree;
use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::domain::DomainModel;
use crate::{exec, Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Global refinement factor; all spacings scale like `1/resolution`.
    pub resolution: f64,
    /// Background spacing at resolution 1.
    pub background_h: f64,
    /// Ring node count of the spike patches at resolution 1.
    pub angular: usize,
    /// Core radial spacing in units of `ε` at resolution 1.
    pub core_h: f64,
    /// Largest patch radius.
    pub patch_radius: f64,
    /// Patch radius as a fraction of the clearance to the boundary and to
    /// half the distance to other spikes.
    pub patch_clearance: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self { resolution: 2.0, background_h: 0.04, angular: 64, core_h: 0.05, patch_radius: 0.4, patch_clearance: 0.6 }
    }
}

/// Refinement request around one spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSite {
    pub center: Vec2,
    pub eps: f64,
}

/// Polar patch metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikePatch {
    pub center: Vec2,
    pub eps: f64,
    pub radius: f64,
    pub rings: Vec<f64>,
    pub center_node: usize,
}

type TriBox = GeomWithData<Rectangle<[f64; 2]>, usize>;
type NodePoint = GeomWithData<[f64; 2], usize>;

#[derive(Debug)]
pub struct Mesh {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub on_boundary: Vec<bool>,
    pub patches: Vec<SpikePatch>,
    pub options: MeshOptions,
    tri_index: OnceLock<RTree<TriBox>>,
    node_index: OnceLock<RTree<NodePoint>>,
}

/// Barycentric location of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub bary: [f64; 3],
}

fn boundary_nodes(d: &DomainModel, h: f64) -> Vec<Vec2> {
    let b = d.boundary();
    const M: usize = 16384;
    let pts: Vec<Vec2> = (0..=M).map(|i| b.point(2.0 * PI * i as f64 / M as f64).x).collect();
    let mut arc = vec![0.0; M + 1];
    for i in 1..=M {
        arc[i] = arc[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    let n = ((arc[M] / h).ceil() as usize).max(16);
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let target = arc[M] * i as f64 / n as f64;
        while arc[k + 1] < target {
            k += 1;
        }
        let tau = (target - arc[k]) / (arc[k + 1] - arc[k]);
        let theta = 2.0 * PI * (k as f64 + tau) / M as f64;
        out.push(b.point(theta).x);
    }
    out
}

/// Ring radii of a patch: spacing `max(core, κ r)` from the center out to `radius`.
fn patch_rings(eps: f64, core: f64, kappa: f64, radius: f64) -> Vec<f64> {
    let mut rings = Vec::new();
    let mut r = 0.0;
    loop {
        let step = (core * eps).max(kappa * r);
        r += step;
        if r > radius * (1.0 - 0.25 * kappa) {
            break;
        }
        rings.push(r);
    }
    rings
}

impl Mesh {
    pub fn build(d: &DomainModel, sites: &[SpikeSite], opts: &MeshOptions) -> Result<Self> {
        if !(opts.resolution > 0.0) {
            return Err(Error::Config(format!("mesh resolution must be positive, got {}", opts.resolution)));
        }
        let res = opts.resolution;
        let h = opts.background_h / res;
        let m_ring = ((opts.angular as f64 * res).round() as usize).max(8);
        let kappa = 2.0 * PI / m_ring as f64;
        let core = opts.core_h / res;

        let mut nodes = boundary_nodes(d, h);
        let nb = nodes.len();
        let mut on_boundary = vec![true; nb];

        let mut patches = Vec::with_capacity(sites.len());
        for (j, s) in sites.iter().enumerate() {
            if !d.contains(s.center) {
                return Err(Error::PointOutsideDomain(s.center.x, s.center.y));
            }
            let mut clear = d.distance_to_boundary(s.center);
            for (m, t) in sites.iter().enumerate() {
                if m != j {
                    clear = clear.min(0.5 * (t.center - s.center).norm());
                }
            }
            let radius = opts.patch_radius.min(opts.patch_clearance * clear);
            if radius <= 4.0 * core * s.eps {
                return Err(Error::MeshTooCoarse(format!("spike {j} has no room for a core patch")));
            }
            let rings = patch_rings(s.eps, core, kappa, radius);
            let center_node = nodes.len();
            nodes.push(s.center);
            on_boundary.push(false);
            for (i, &r) in rings.iter().enumerate() {
                let dr = (core * s.eps).max(kappa * r);
                let count = ((2.0 * PI * r / dr).round() as usize).clamp(6, m_ring);
                let shift = if i % 2 == 1 { 0.5 } else { 0.0 };
                for a in 0..count {
                    let phi = 2.0 * PI * (a as f64 + shift) / count as f64;
                    nodes.push(s.center + r * Vec2::new(phi.cos(), phi.sin()));
                    on_boundary.push(false);
                }
            }
            patches.push(SpikePatch { center: s.center, eps: s.eps, radius, rings, center_node });
        }

        let rmax = d.boundary().r_max();
        let dy = h * 3f64.sqrt() / 2.0;
        let ny = (rmax / dy).ceil() as i64;
        let nx = (rmax / h).ceil() as i64 + 1;
        let candidates: Vec<Vec2> = (-ny..=ny)
            .flat_map(|iy| {
                let off = if iy.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
                (-nx..=nx).map(move |ix| Vec2::new(ix as f64 * h + off, iy as f64 * dy))
            })
            .filter(|x| d.boundary().level(*x) < 1.0)
            .filter(|x| patches.iter().all(|p| (x - p.center).norm() > p.radius + 0.5 * h))
            .collect();
        let keep = exec::map_slice(&candidates, |x| d.distance_to_boundary(*x) > 0.6 * h);
        for (x, k) in candidates.into_iter().zip(keep) {
            if k {
                nodes.push(x);
                on_boundary.push(false);
            }
        }

        let verts: Vec<Point2<f64>> = nodes.iter().map(|x| Point2::new(x.x, x.y)).collect();
        let edges: Vec<[usize; 2]> = (0..nb).map(|i| [i, (i + 1) % nb]).collect();
        let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(verts, edges)
            .map_err(|e| Error::MeshTooCoarse(format!("triangulation failed: {e:?}")))?;
        if cdt.num_vertices() != nodes.len() {
            return Err(Error::MeshTooCoarse("duplicate mesh nodes".into()));
        }
        let b = d.boundary();
        let triangles: Vec<[usize; 3]> = cdt
            .inner_faces()
            .map(|f| f.vertices().map(|v| v.fix().index()))
            .filter(|t| {
                if t.iter().any(|&i| !on_boundary[i]) {
                    return true;
                }
                let c = (nodes[t[0]] + nodes[t[1]] + nodes[t[2]]) / 3.0;
                b.contains(c)
            })
            .collect();
        Self::from_parts(nodes, triangles, on_boundary, patches, *opts)
    }

    /// Reassemble a mesh from stored parts (e.g. a snapshot).
    pub fn from_parts(
        nodes: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        on_boundary: Vec<bool>,
        patches: Vec<SpikePatch>,
        options: MeshOptions,
    ) -> Result<Self> {
        if on_boundary.len() != nodes.len() {
            return Err(Error::MeshTooCoarse(format!("{} boundary flags for {} nodes", on_boundary.len(), nodes.len())));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= nodes.len())) {
            return Err(Error::MeshTooCoarse(format!("triangle {t:?} references a missing node")));
        }
        let mesh = Mesh { nodes, triangles, on_boundary, patches, options, tri_index: OnceLock::new(), node_index: OnceLock::new() };
        if let Some(t) = mesh.triangles.iter().find(|t| mesh.signed_area(t) <= 0.0) {
            return Err(Error::MeshTooCoarse(format!("non-positive triangle area at {t:?}")));
        }
        Ok(mesh)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn signed_area(&self, t: &[usize; 3]) -> f64 {
        let (a, b, c) = (self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]);
        0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x)
    }

    /// Gradients of the three barycentric coordinates on triangle `t`.
    pub fn shape_gradients(&self, t: &[usize; 3]) -> [Vec2; 3] {
        let p = [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]];
        let two_a = 2.0 * self.signed_area(t);
        let g = |i: usize| {
            let e = p[(i + 2) % 3] - p[(i + 1) % 3];
            Vec2::new(-e.y, e.x) / two_a
        };
        [g(0), g(1), g(2)]
    }

    /// Number of nodes within distance `r` of `c`.
    pub fn count_within(&self, c: Vec2, r: f64) -> usize {
        self.nodes.iter().filter(|x| (**x - c).norm() <= r).count()
    }

    fn tri_index(&self) -> &RTree<TriBox> {
        self.tri_index.get_or_init(|| {
            let boxes = self
                .triangles
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let xs = t.map(|v| self.nodes[v]);
                    let lo = [xs.iter().map(|p| p.x).fold(f64::INFINITY, f64::min), xs.iter().map(|p| p.y).fold(f64::INFINITY, f64::min)];
                    let hi = [xs.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max), xs.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max)];
                    GeomWithData::new(Rectangle::from_corners(lo, hi), i)
                })
                .collect();
            RTree::bulk_load(boxes)
        })
    }

    fn node_index(&self) -> &RTree<NodePoint> {
        self.node_index.get_or_init(|| {
            RTree::bulk_load(self.nodes.iter().enumerate().map(|(i, x)| GeomWithData::new([x.x, x.y], i)).collect())
        })
    }

    pub fn barycentric(&self, t: usize, x: Vec2) -> [f64; 3] {
        let tri = &self.triangles[t];
        let g = self.shape_gradients(tri);
        let l1 = g[1].dot(&(x - self.nodes[tri[0]]));
        let l2 = g[2].dot(&(x - self.nodes[tri[0]]));
        [1.0 - l1 - l2, l1, l2]
    }

    /// Triangle containing `x` (with a small tolerance), if any.
    pub fn locate(&self, x: Vec2) -> Option<Location> {
        let tol = -1e-10;
        let mut best: Option<Location> = None;
        for cand in self.tri_index().locate_all_at_point([x.x, x.y]) {
            let bary = self.barycentric(cand.data, x);
            let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some(Location { triangle: cand.data, bary });
            }
            if worst >= tol && best.is_none_or(|b| worst > b.bary.iter().copied().fold(f64::INFINITY, f64::min)) {
                best = Some(Location { triangle: cand.data, bary });
            }
        }
        best
    }

    /// P1 interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: &[f64], x: Vec2) -> Option<f64> {
        self.locate(x).map(|l| {
            let t = self.triangles[l.triangle];
            (0..3).map(|i| l.bary[i] * values[t[i]]).sum()
        })
    }

    /// P1 interpolation of a nodal vector field.
    pub fn interpolate_vec(&self, values: &[Vec2], x: Vec2) -> Option<Vec2> {
        self.locate(x).map(|l| {
            let t = self.triangles[l.triangle];
            (0..3).map(|i| l.bary[i] * values[t[i]]).sum()
        })
    }

    /// The `n` nodes nearest to `x`, closest first.
    pub fn nearest_nodes(&self, x: Vec2, n: usize) -> Vec<usize> {
        self.node_index().nearest_neighbor_iter([x.x, x.y]).take(n).map(|p| p.data).collect()
    }

    /// Nodal gradients recovered by area-weighted averaging of the
    /// element gradients.
    pub fn recover_gradient(&self, u: &[f64]) -> Vec<Vec2> {
        let mut acc = vec![Vec2::zeros(); self.len()];
        let mut wsum = vec![0.0; self.len()];
        for t in &self.triangles {
            let a = self.signed_area(t);
            let g = self.shape_gradients(t);
            let grad: Vec2 = (0..3).map(|i| u[t[i]] * g[i]).sum();
            for &v in t {
                acc[v] += a * grad;
                wsum[v] += a;
            }
        }
        acc.iter().zip(&wsum).map(|(g, w)| g / *w).collect()
    }

    /// Length of the longest edge.
    pub fn max_edge(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |i| (t[i], t[(i + 1) % 3])))
            .map(|(a, b)| (self.nodes[a] - self.nodes[b]).norm())
            .fold(0.0, f64::max)
    }
}
