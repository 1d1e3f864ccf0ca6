use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::SimError;

pub type Vec2 = Vector2<f64>;

/// Yarn direction an interior edge is aligned with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionClass {
    Warp,
    Weft,
    Bias,
}

impl DirectionClass {
    /// Classifies a material-space edge by its angle against the warp
    /// (first material) axis: within 22.5° of it is warp, within 22.5° of
    /// the perpendicular is weft, anything else is bias.
    pub fn from_edge(d: Vec2) -> Self {
        let mut phi = d.y.atan2(d.x).to_degrees();
        if phi >= 90.0 {
            phi -= 180.0;
        } else if phi < -90.0 {
            phi += 180.0;
        }
        let a = phi.abs();
        if a <= 22.5 {
            DirectionClass::Warp
        } else if a >= 67.5 {
            DirectionClass::Weft
        } else {
            DirectionClass::Bias
        }
    }
}

/// Interior edge shared by two triangles. The triangle holding `wings[0]` is
/// ordered `(edge[0], edge[1], wings[0])`, the other `(edge[1], edge[0], wings[1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hinge {
    pub edge: [usize; 2],
    pub wings: [usize; 2],
    pub class: DirectionClass,
    pub rest_angle: f64,
    pub rest_length: f64,
    /// One third of the mean height of the two rest triangles over the edge.
    pub rest_height: f64,
}

impl Hinge {
    /// `‖ē‖ / h̄`, the geometric weight of the hinge energy.
    pub fn weight(&self) -> f64 {
        self.rest_length / self.rest_height
    }
}

/// Rest-space data of a triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct RestTriangle {
    pub vertices: [usize; 3],
    pub area: f64,
    /// Inverse of the material-space edge matrix `[X1-X0, X2-X0]`.
    pub inv_rest: Matrix2<f64>,
}

/// Regular-grid metadata, present when the mesh came from [`make_grid_mesh`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridInfo {
    pub cells: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone)]
pub struct ClothMesh {
    pub rest_positions: Vec<Vec2>,
    pub triangles: Vec<RestTriangle>,
    pub hinges: Vec<Hinge>,
    pub vertex_masses: Vec<f64>,
    pub density: f64,
    pub grid: Option<GridInfo>,
}

fn cross2(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Mixed Voronoi area contributions of a triangle's three corners.
fn voronoi_shares(p: [Vec2; 3], area: f64) -> [f64; 3] {
    let mut cot = [0.0; 3];
    let mut obtuse = None;
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3] - p[i], p[(i + 2) % 3] - p[i]);
        let dot = a.dot(&b);
        if dot < 0.0 {
            obtuse = Some(i);
        }
        cot[i] = dot / cross2(a, b).abs();
    }
    if let Some(o) = obtuse {
        let mut s = [area / 4.0; 3];
        s[o] = area / 2.0;
        return s;
    }
    let mut s = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        s[i] =
            ((p[j] - p[i]).norm_squared() * cot[k] + (p[k] - p[i]).norm_squared() * cot[j]) / 8.0;
    }
    s
}

impl ClothMesh {
    /// Builds a mesh from material-space vertices and counterclockwise
    /// triangles, computing hinges and lumped masses.
    pub fn new(
        rest_positions: Vec<Vec2>,
        triangles: &[[usize; 3]],
        density: f64,
    ) -> Result<Self, SimError> {
        if !(density.is_finite() && density > 0.0) {
            return Err(SimError::InvalidArgument(format!(
                "density must be positive, got {density}"
            )));
        }
        let n = rest_positions.len();
        let mut rest = Vec::with_capacity(triangles.len());
        let mut masses = vec![0.0; n];
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(SimError::InvalidArgument(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            let p = tri.map(|v| rest_positions[v]);
            let d = Matrix2::from_columns(&[p[1] - p[0], p[2] - p[0]]);
            let signed = 0.5 * d.determinant();
            if !(signed > 0.0) {
                return Err(SimError::DegenerateTriangle(t));
            }
            let inv_rest = d.try_inverse().ok_or(SimError::DegenerateTriangle(t))?;
            for (k, share) in voronoi_shares(p, signed).into_iter().enumerate() {
                masses[tri[k]] += density * share;
            }
            rest.push(RestTriangle {
                vertices: *tri,
                area: signed,
                inv_rest,
            });
        }

        // Directed edge (a, b) -> (triangle, opposite vertex).
        let mut directed: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                if directed.insert((a, b), (t, c)).is_some() {
                    return Err(SimError::NonManifold(a, b));
                }
            }
        }
        let mut hinges = Vec::new();
        for (&(a, b), &(ta, c)) in &directed {
            if a > b {
                continue;
            }
            let Some(&(tb, d)) = directed.get(&(b, a)) else {
                continue;
            };
            let (pa, pb) = (rest_positions[a], rest_positions[b]);
            let e = pb - pa;
            let len = e.norm();
            let h1 = 2.0 * rest[ta].area / len;
            let h2 = 2.0 * rest[tb].area / len;
            hinges.push(Hinge {
                edge: [a, b],
                wings: [c, d],
                class: DirectionClass::from_edge(e),
                rest_angle: 0.0,
                rest_length: len,
                rest_height: (h1 + h2) / 6.0,
            });
        }

        Ok(Self {
            rest_positions,
            triangles: rest,
            hinges,
            vertex_masses: masses,
            density,
            grid: None,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.rest_positions.len()
    }

    pub fn total_area(&self) -> f64 {
        self.triangles.iter().map(|t| t.area).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.vertex_masses.iter().sum()
    }

    pub fn triangle_indices(&self) -> Vec<[usize; 3]> {
        self.triangles.iter().map(|t| t.vertices).collect()
    }

    /// Largest vertex-index distance coupled by any element.
    pub fn vertex_bandwidth(&self) -> usize {
        let tri = self.triangles.iter().map(|t| {
            let v = t.vertices;
            v.iter().max().unwrap() - v.iter().min().unwrap()
        });
        let hinge = self.hinges.iter().map(|h| {
            let v = [h.edge[0], h.edge[1], h.wings[0], h.wings[1]];
            v.iter().max().unwrap() - v.iter().min().unwrap()
        });
        tri.chain(hinge).max().unwrap_or(0)
    }

    /// Same topology with masses recomputed for another area density.
    pub fn with_density(&self, density: f64) -> Result<Self, SimError> {
        if !(density.is_finite() && density > 0.0) {
            return Err(SimError::InvalidArgument(format!(
                "density must be positive, got {density}"
            )));
        }
        let scale = density / self.density;
        let mut out = self.clone();
        out.vertex_masses.iter_mut().for_each(|m| *m *= scale);
        out.density = density;
        Ok(out)
    }
}

/// Square grid of `size × size` metres with about `edge_length` spacing.
/// Vertex `(i, j)` (column `i` along warp, row `j` along weft) has index
/// `j * (n + 1) + i`; each cell is split along its `(i, j)–(i+1, j+1)` diagonal.
pub fn make_grid_mesh(size: f64, edge_length: f64, density: f64) -> Result<ClothMesh, SimError> {
    if !(size.is_finite() && size > 0.0) {
        return Err(SimError::InvalidArgument(format!(
            "size must be positive, got {size}"
        )));
    }
    if !(edge_length.is_finite() && edge_length > 0.0 && edge_length <= size) {
        return Err(SimError::InvalidArgument(format!(
            "edge length must lie in (0, size], got {edge_length}"
        )));
    }
    let n = ((size / edge_length).round() as usize).max(1);
    let spacing = size / n as f64;
    let side = n + 1;
    let mut rest = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            rest.push(Vec2::new(i as f64 * spacing, j as f64 * spacing));
        }
    }
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * side + i;
            let (v10, v01, v11) = (v00 + 1, v00 + side, v00 + side + 1);
            tris.push([v00, v10, v11]);
            tris.push([v00, v11, v01]);
        }
    }
    let mut mesh = ClothMesh::new(rest, &tris, density)?;
    mesh.grid = Some(GridInfo { cells: n, spacing });
    Ok(mesh)
}
