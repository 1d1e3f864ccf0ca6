//! Membrane and bending energies with analytic gradients, plus the positive
//! semi-definite stiffness approximations used by the implicit integrator.

use nalgebra::{Matrix3, Matrix6, SMatrix, SVector, SymmetricEigen, Vector3};

use super::mesh::{ClothMesh, DirectionClass, Hinge, RestTriangle};
use super::SimError;
use crate::material::MaterialParams;

pub type Vec3 = Vector3<f64>;

/// Energy value and its gradient `∂E/∂x` per vertex. Forces are the negated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEval {
    pub energy: f64,
    pub gradient: Vec<Vec3>,
}

impl EnergyEval {
    pub fn forces(&self) -> Vec<Vec3> {
        self.gradient.iter().map(|g| -g).collect()
    }
}

/// Green strain components `(ε_uu, ε_vv, ε_uv)` of a triangle together with
/// the deformation-gradient columns and their per-vertex weights.
pub(crate) struct StrainState {
    pub f_u: Vec3,
    pub f_v: Vec3,
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub uu: f64,
    pub vv: f64,
    pub uv: f64,
}

pub(crate) fn triangle_strain(tri: &RestTriangle, x: &[Vec3]) -> StrainState {
    let [i0, i1, i2] = tri.vertices;
    let d = &tri.inv_rest;
    let (e1, e2) = (x[i1] - x[i0], x[i2] - x[i0]);
    let f_u = e1 * d[(0, 0)] + e2 * d[(1, 0)];
    let f_v = e1 * d[(0, 1)] + e2 * d[(1, 1)];
    let a = [-(d[(0, 0)] + d[(1, 0)]), d[(0, 0)], d[(1, 0)]];
    let b = [-(d[(0, 1)] + d[(1, 1)]), d[(0, 1)], d[(1, 1)]];
    StrainState {
        uu: 0.5 * (f_u.norm_squared() - 1.0),
        vv: 0.5 * (f_v.norm_squared() - 1.0),
        uv: 0.5 * f_u.dot(&f_v),
        f_u,
        f_v,
        a,
        b,
    }
}

/// Local contribution of one element: energy, per-vertex gradient and a PSD
/// stiffness approximation (blocks indexed `[row * len + col]`).
pub(crate) struct ElementTerms<const N: usize> {
    pub vertices: [usize; N],
    pub energy: f64,
    pub gradient: [Vec3; N],
}

pub(crate) fn stretch_element(
    tri: &RestTriangle,
    x: &[Vec3],
    p: &MaterialParams,
    mut hessian: Option<&mut [Matrix3<f64>; 9]>,
    project: bool,
) -> ElementTerms<3> {
    let s = triangle_strain(tri, x);
    let (kw, kf, kb) = (p.stretch_warp, p.stretch_weft, p.stretch_bias);
    let area = tri.area;
    let energy = 0.5 * area * (kw * s.uu * s.uu + kf * s.vv * s.vv + kb * s.uv * s.uv);

    let mut gradient = [Vec3::zeros(); 3];
    for i in 0..3 {
        let g_uu = s.f_u * s.a[i];
        let g_vv = s.f_v * s.b[i];
        let g_uv = (s.f_v * s.a[i] + s.f_u * s.b[i]) * 0.5;
        gradient[i] = (g_uu * (kw * s.uu) + g_vv * (kf * s.vv) + g_uv * (kb * s.uv)) * area;
    }

    if let Some(h) = hessian.as_deref_mut() {
        // Exact Hessian with respect to the deformation gradient columns
        // (f_u, f_v), optionally clamped to its non-negative eigenspace. The
        // map from vertex positions to F is linear, so clamped blocks stay PSD.
        let i3 = Matrix3::identity();
        let fu = s.f_u;
        let fv = s.f_v;
        let huu = (fu * fu.transpose() + i3 * s.uu) * kw + fv * fv.transpose() * (0.25 * kb);
        let hvv = (fv * fv.transpose() + i3 * s.vv) * kf + fu * fu.transpose() * (0.25 * kb);
        let huv = (fv * fu.transpose() * 0.25 + i3 * (0.5 * s.uv)) * kb;
        let mut hf = Matrix6::zeros();
        hf.fixed_view_mut::<3, 3>(0, 0).copy_from(&huu);
        hf.fixed_view_mut::<3, 3>(3, 3).copy_from(&hvv);
        hf.fixed_view_mut::<3, 3>(0, 3).copy_from(&huv);
        hf.fixed_view_mut::<3, 3>(3, 0).copy_from(&huv.transpose());
        if project {
            let eig = SymmetricEigen::new(hf);
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            hf = eig.eigenvectors * Matrix6::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        }
        let (puu, pvv) = (hf.fixed_view::<3, 3>(0, 0), hf.fixed_view::<3, 3>(3, 3));
        let (puv, pvu) = (hf.fixed_view::<3, 3>(0, 3), hf.fixed_view::<3, 3>(3, 0));
        for i in 0..3 {
            for j in 0..3 {
                let (ai, bi, aj, bj) = (s.a[i], s.b[i], s.a[j], s.b[j]);
                h[i * 3 + j] =
                    (puu * (ai * aj) + puv * (ai * bj) + pvu * (bi * aj) + pvv * (bi * bj)) * area;
            }
        }
    }

    ElementTerms {
        vertices: tri.vertices,
        energy,
        gradient,
    }
}

/// Signed dihedral angle of a hinge (zero when flat) and its gradient with
/// respect to `[edge0, edge1, wing0, wing1]`.
pub(crate) fn dihedral(h: &Hinge, x: &[Vec3]) -> Result<(f64, [Vec3; 4]), SimError> {
    let q = [x[h.edge[0]], x[h.edge[1]], x[h.wings[0]], x[h.wings[1]]];
    dihedral_at(&q).ok_or(SimError::DegenerateHinge(h.edge[0], h.edge[1]))
}

/// Signed dihedral angle of the hinge `(x0, x1, w0, w1)` and its gradient.
fn dihedral_at(q: &[Vec3; 4]) -> Option<(f64, [Vec3; 4])> {
    let [x0, x1, w0, w1] = *q;
    let e = x1 - x0;
    let len = e.norm();
    let n0 = (w0 - x0).cross(&(w0 - x1));
    let n1 = (w1 - x1).cross(&(w1 - x0));
    let (q0, q1) = (n0.norm_squared(), n1.norm_squared());
    if !(len > 0.0 && q0 > 0.0 && q1 > 0.0) {
        return None;
    }
    let ehat = e / len;
    let theta = n0.cross(&n1).dot(&ehat).atan2(n0.dot(&n1));

    let u0 = n0 / q0;
    let u1 = n1 / q1;
    let g_w0 = -u0 * len;
    let g_w1 = -u1 * len;
    let g_x0 = -(u0 * (w0 - x1).dot(&ehat) + u1 * (w1 - x1).dot(&ehat));
    let g_x1 = u0 * (w0 - x0).dot(&ehat) + u1 * (w1 - x0).dot(&ehat);
    Some((theta, [g_x0, g_x1, g_w0, g_w1]))
}

/// Hessian of `θ` by central differences of its analytic gradient.
fn dihedral_hessian(q: &[Vec3; 4]) -> Option<SMatrix<f64, 12, 12>> {
    let scale = (q[1] - q[0]).norm();
    let eps = 1e-6 * scale;
    let mut hess = SMatrix::<f64, 12, 12>::zeros();
    for col in 0..12 {
        let mut plus = *q;
        let mut minus = *q;
        plus[col / 3][col % 3] += eps;
        minus[col / 3][col % 3] -= eps;
        let (_, gp) = dihedral_at(&plus)?;
        let (_, gm) = dihedral_at(&minus)?;
        for row in 0..12 {
            hess[(row, col)] = (gp[row / 3][row % 3] - gm[row / 3][row % 3]) / (2.0 * eps);
        }
    }
    Some((hess + hess.transpose()) * 0.5)
}

pub(crate) fn bending_stiffness(p: &MaterialParams, class: DirectionClass) -> f64 {
    match class {
        DirectionClass::Warp => p.bending_warp,
        DirectionClass::Weft => p.bending_weft,
        DirectionClass::Bias => p.bending_bias,
    }
}

pub(crate) fn bending_element(
    h: &Hinge,
    x: &[Vec3],
    p: &MaterialParams,
    hessian: Option<&mut [Matrix3<f64>; 16]>,
    project: bool,
) -> Result<ElementTerms<4>, SimError> {
    let (theta, dtheta) = dihedral(h, x)?;
    let c = bending_stiffness(p, h.class) * h.weight();
    let dev = theta - h.rest_angle;
    let energy = c * dev * dev;
    let gradient = dtheta.map(|g| g * (2.0 * c * dev));
    if let Some(hm) = hessian {
        // 2c (∇θ ∇θᵀ + (θ - θ̄) ∇²θ), optionally clamped to its non-negative eigenspace.
        let q = [x[h.edge[0]], x[h.edge[1]], x[h.wings[0]], x[h.wings[1]]];
        let g = SVector::<f64, 12>::from_iterator(dtheta.iter().flat_map(|v| v.iter().copied()));
        let mut full = g * g.transpose();
        if let Some(ht) = dihedral_hessian(&q) {
            full += ht * dev;
        }
        full *= 2.0 * c;
        if project {
            let eig = SymmetricEigen::new(full);
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            full = eig.eigenvectors
                * SMatrix::<f64, 12, 12>::from_diagonal(&clamped)
                * eig.eigenvectors.transpose();
        }
        for i in 0..4 {
            for j in 0..4 {
                hm[i * 4 + j] = full.fixed_view::<3, 3>(3 * i, 3 * j).into_owned();
            }
        }
    }
    Ok(ElementTerms {
        vertices: [h.edge[0], h.edge[1], h.wings[0], h.wings[1]],
        energy,
        gradient,
    })
}

fn check_len(mesh: &ClothMesh, x: &[Vec3]) -> Result<(), SimError> {
    if x.len() != mesh.vertex_count() {
        return Err(SimError::DimensionMismatch {
            expected: mesh.vertex_count(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Anisotropic membrane energy: per triangle
/// `½ (k_warp ε_uu² + k_weft ε_vv² + k_bias ε_uv²) · A_rest` on the Green strain.
pub fn stretch_energy(
    mesh: &ClothMesh,
    x: &[Vec3],
    p: &MaterialParams,
) -> Result<EnergyEval, SimError> {
    check_len(mesh, x)?;
    let mut out = EnergyEval {
        energy: 0.0,
        gradient: vec![Vec3::zeros(); x.len()],
    };
    for tri in &mesh.triangles {
        let t = stretch_element(tri, x, p, None, false);
        out.energy += t.energy;
        for (v, g) in t.vertices.iter().zip(t.gradient) {
            out.gradient[*v] += g;
        }
    }
    Ok(out)
}

/// Hinge bending energy: per interior edge `k_class (θ - θ̄)² ‖ē‖ / h̄`.
pub fn bending_energy(
    mesh: &ClothMesh,
    x: &[Vec3],
    p: &MaterialParams,
) -> Result<EnergyEval, SimError> {
    check_len(mesh, x)?;
    let mut out = EnergyEval {
        energy: 0.0,
        gradient: vec![Vec3::zeros(); x.len()],
    };
    for h in &mesh.hinges {
        let t = bending_element(h, x, p, None, false)?;
        out.energy += t.energy;
        for (v, g) in t.vertices.iter().zip(t.gradient) {
            out.gradient[*v] += g;
        }
    }
    Ok(out)
}

/// Rest positions embedded in the `z = 0` plane.
pub fn flat_positions(mesh: &ClothMesh) -> Vec<Vec3> {
    mesh.rest_positions
        .iter()
        .map(|p| Vec3::new(p.x, p.y, 0.0))
        .collect()
}
