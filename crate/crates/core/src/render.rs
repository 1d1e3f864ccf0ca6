//! Software z-buffer rasterizer for depth maps and Lambertian gray renders.

use serde::{Deserialize, Serialize};

use crate::image::{DepthImage, GrayImage};
use crate::sim::{ClothMesh, SimState, Vec3};

pub const ALBEDO: f64 = 0.85;
pub const AMBIENT: f64 = 0.1;
/// Inclinations of the camera sweep, in degrees.
pub const SWEEP_DEGREES: [i32; 11] = [-5, -4, -3, -2, -1, 0, 1, 2, 3, 4, 5];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("vertex {0} lies closer than the near plane")]
    InsideNearPlane(usize),
    #[error("light direction must be a unit vector")]
    InvalidLight,
    #[error("triangle references missing vertex {0}")]
    BadIndex(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_y_deg: f64,
    pub near: f64,
    pub far: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    /// 1.2 m in front of the centre of a 0.5 m panel hanging from `y = 0`.
    fn default() -> Self {
        Self::facing_panel(0.5)
    }
}

impl Camera {
    pub fn facing_panel(fabric_size: f64) -> Self {
        let cy = -0.5 * fabric_size;
        Self {
            position: [0.0, cy, 1.2],
            target: [0.0, cy, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_y_deg: 35.0,
            near: 0.5,
            far: 2.5,
            width: 256,
            height: 256,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidCamera(m.to_string()));
        if !(self.near > 0.0 && self.far > self.near && self.far.is_finite()) {
            return bad("need 0 < near < far");
        }
        if !(self.fov_y_deg > 0.0 && self.fov_y_deg < 120.0) {
            return bad("field of view must lie in (0, 120) degrees");
        }
        if self.width == 0 || self.height == 0 {
            return bad("empty image");
        }
        let f = Vec3::from(self.target) - Vec3::from(self.position);
        if !(f.norm() > 0.0) || !(f.cross(&Vec3::from(self.up)).norm() > 0.0) {
            return bad("degenerate view direction or up vector");
        }
        Ok(())
    }

    /// Orthonormal camera frame `(right, up, forward)`.
    fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let f = (Vec3::from(self.target) - Vec3::from(self.position)).normalize();
        let r = f.cross(&Vec3::from(self.up)).normalize();
        let u = r.cross(&f);
        (r, u, f)
    }

    /// Focal length in pixels.
    fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y_deg.to_radians()).tan()
    }

    /// The camera rotated by `degrees` about the horizontal axis through its target.
    pub fn inclined(&self, degrees: f64) -> Camera {
        let (r, _, _) = self.frame();
        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(r),
            degrees.to_radians(),
        );
        let t = Vec3::from(self.target);
        let p = t + rot * (Vec3::from(self.position) - t);
        let up = rot * Vec3::from(self.up);
        Camera {
            position: p.into(),
            up: up.into(),
            ..self.clone()
        }
    }

    /// Primary ray direction through the centre of pixel `(px, py)`, scaled
    /// so its forward component is 1.
    pub fn pixel_ray(&self, px: usize, py: usize) -> Vec3 {
        let (r, u, f) = self.frame();
        let focal = self.focal();
        let sx = (px as f64 + 0.5 - 0.5 * self.width as f64) / focal;
        let sy = (0.5 * self.height as f64 - (py as f64 + 0.5)) / focal;
        f + r * sx + u * sy
    }
}

struct Projected {
    sx: f64,
    sy: f64,
    inv_z: f64,
}

fn project_all(positions: &[Vec3], cam: &Camera) -> Result<Vec<Projected>, RenderError> {
    let (r, u, f) = cam.frame();
    let eye = Vec3::from(cam.position);
    let focal = cam.focal();
    let (cx, cy) = (0.5 * cam.width as f64, 0.5 * cam.height as f64);
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p - eye;
            let z = d.dot(&f);
            if !(z >= cam.near) {
                return Err(RenderError::InsideNearPlane(i));
            }
            Ok(Projected {
                sx: cx + focal * d.dot(&r) / z,
                sy: cy - focal * d.dot(&u) / z,
                inv_z: 1.0 / z,
            })
        })
        .collect()
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Rasterizes the triangles and returns per-pixel view depth (`∞` when
/// uncovered) and the index of the visible triangle.
fn rasterize(
    positions: &[Vec3],
    triangles: &[[usize; 3]],
    cam: &Camera,
) -> Result<(Vec<f64>, Vec<usize>), RenderError> {
    cam.validate()?;
    if let Some(bad) = triangles.iter().flatten().find(|v| **v >= positions.len()) {
        return Err(RenderError::BadIndex(*bad));
    }
    let proj = project_all(positions, cam)?;
    let (w, h) = (cam.width, cam.height);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut owner = vec![usize::MAX; w * h];
    for (t, tri) in triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|v| &proj[v]);
        let (pa, pb, pc) = ((a.sx, a.sy), (b.sx, b.sy), (c.sx, c.sy));
        let area = edge(pa, pb, pc);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let x0 = (a.sx.min(b.sx).min(c.sx) - 0.5).ceil().max(0.0) as usize;
        let x1 = (a.sx.max(b.sx).max(c.sx) - 0.5).floor().min(w as f64 - 1.0);
        let y0 = (a.sy.min(b.sy).min(c.sy) - 0.5).ceil().max(0.0) as usize;
        let y1 = (a.sy.max(b.sy).max(c.sy) - 0.5).floor().min(h as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for py in y0..=y1 as usize {
            for px in x0..=x1 as usize {
                let p = (px as f64 + 0.5, py as f64 + 0.5);
                let l0 = edge(pb, pc, p) / area;
                let l1 = edge(pc, pa, p) / area;
                let l2 = edge(pa, pb, p) / area;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                // 1/z is affine in screen space.
                let z = 1.0 / (l0 * a.inv_z + l1 * b.inv_z + l2 * c.inv_z);
                let k = py * w + px;
                if z <= cam.far && z < depth[k] {
                    depth[k] = z;
                    owner[k] = t;
                }
            }
        }
    }
    Ok((depth, owner))
}

/// Depth map of arbitrary triangles.
pub fn render_depth_triangles(
    positions: &[Vec3],
    triangles: &[[usize; 3]],
    cam: &Camera,
) -> Result<DepthImage, RenderError> {
    let (depth, _) = rasterize(positions, triangles, cam)?;
    let span = cam.far - cam.near;
    let data = depth
        .iter()
        .map(|z| {
            if z.is_finite() {
                ((z - cam.near) / span).clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect();
    Ok(DepthImage {
        image: GrayImage {
            width: cam.width,
            height: cam.height,
            data,
        },
        near: cam.near,
        far: cam.far,
    })
}

pub fn render_depth(
    state: &SimState,
    mesh: &ClothMesh,
    cam: &Camera,
) -> Result<DepthImage, RenderError> {
    render_depth_triangles(&state.positions, &mesh.triangle_indices(), cam)
}

/// Lambertian render of arbitrary triangles with flat normals. Each normal
/// is flipped to face the camera, so both sides of the cloth shade alike.
/// Background pixels are 0.
pub fn render_shaded_triangles(
    positions: &[Vec3],
    triangles: &[[usize; 3]],
    cam: &Camera,
    light: &Vec3,
) -> Result<GrayImage, RenderError> {
    if !((light.norm() - 1.0).abs() < 1e-9) {
        return Err(RenderError::InvalidLight);
    }
    let (_, owner) = rasterize(positions, triangles, cam)?;
    let eye = Vec3::from(cam.position);
    let shade: Vec<f64> = triangles
        .iter()
        .map(|[a, b, c]| {
            let (xa, xb, xc) = (positions[*a], positions[*b], positions[*c]);
            let mut n = (xb - xa).cross(&(xc - xa));
            if n.norm() == 0.0 {
                return AMBIENT;
            }
            n = n.normalize();
            if n.dot(&(eye - xa)) < 0.0 {
                n = -n;
            }
            (AMBIENT + ALBEDO * n.dot(light).max(0.0)).clamp(0.0, 1.0)
        })
        .collect();
    let data = owner
        .iter()
        .map(|t| if *t == usize::MAX { 0.0 } else { shade[*t] })
        .collect();
    Ok(GrayImage {
        width: cam.width,
        height: cam.height,
        data,
    })
}

pub fn render_shaded(
    state: &SimState,
    mesh: &ClothMesh,
    cam: &Camera,
    light: &Vec3,
) -> Result<GrayImage, RenderError> {
    render_shaded_triangles(&state.positions, &mesh.triangle_indices(), cam, light)
}

/// Default light: from the camera side, raised and slightly to the left.
pub fn default_light() -> Vec3 {
    Vec3::new(-0.3, 0.5, 1.0).normalize()
}

/// Eleven depth maps at inclinations −5°…+5°; index 5 is the base camera.
pub fn camera_sweep(
    state: &SimState,
    mesh: &ClothMesh,
    base: &Camera,
) -> Result<Vec<DepthImage>, RenderError> {
    SWEEP_DEGREES
        .iter()
        .map(|d| {
            let cam = if *d == 0 {
                base.clone()
            } else {
                base.inclined(*d as f64)
            };
            render_depth(state, mesh, &cam)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: usize) -> Camera {
        Camera {
            position: [0.0, 0.0, 2.0],
            target: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_y_deg: 40.0,
            near: 1.0,
            far: 3.0,
            width: w,
            height: w,
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let d = render_depth_triangles(&[], &[], &cam(8)).unwrap();
        assert!(d.image.data.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn plane_filling_view_has_uniform_depth() {
        let c = cam(16);
        let s = 5.0;
        let x = vec![
            Vec3::new(-s, -s, 0.0),
            Vec3::new(s, -s, 0.0),
            Vec3::new(s, s, 0.0),
            Vec3::new(-s, s, 0.0),
        ];
        let d = render_depth_triangles(&x, &[[0, 1, 2], [0, 2, 3]], &c).unwrap();
        for v in &d.image.data {
            assert!((v - 0.5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn shading_cosine_law() {
        let c = cam(8);
        let big = |n: Vec3| {
            let t1 = if n.x.abs() < 0.9 {
                Vec3::x()
            } else {
                Vec3::y()
            };
            let a = n.cross(&t1).normalize() * 0.4;
            let b = n.cross(&a);
            vec![-a - b, a * 2.0 - b, b * 2.0 - a]
        };
        let l = Vec3::z();
        let head_on = render_shaded_triangles(&big(Vec3::z()), &[[0, 1, 2]], &c, &l).unwrap();
        let center = head_on.get(4, 4);
        assert!((center - 0.95).abs() < 1e-12);
        let oblique_n = Vec3::new(0.0, 3f64.sqrt() / 2.0, 0.5);
        let oblique = render_shaded_triangles(&big(oblique_n), &[[0, 1, 2]], &c, &l).unwrap();
        assert!((oblique.get(4, 4) - 0.525).abs() < 1e-12);
        let away = render_shaded_triangles(&big(Vec3::z()), &[[0, 1, 2]], &c, &-Vec3::z()).unwrap();
        assert!((away.get(4, 4) - 0.1).abs() < 1e-12);
        assert!(render_shaded_triangles(
            &big(Vec3::z()),
            &[[0, 1, 2]],
            &c,
            &Vec3::new(0.0, 0.0, 2.0)
        )
        .is_err());
    }

    #[test]
    fn geometry_behind_near_plane_is_rejected() {
        let x = vec![
            Vec3::new(0.0, 0.0, 1.5),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        assert_eq!(
            render_depth_triangles(&x, &[[0, 1, 2]], &cam(8)),
            Err(RenderError::InsideNearPlane(0))
        );
        let bad = Camera {
            near: 3.0,
            ..cam(8)
        };
        assert!(matches!(
            render_depth_triangles(&[], &[], &bad),
            Err(RenderError::InvalidCamera(_))
        ));
    }

    #[test]
    fn inclination_rotates_about_target() {
        let c = cam(8);
        let t = c.inclined(5.0);
        let d0 = Vec3::from(c.position) - Vec3::from(c.target);
        let d1 = Vec3::from(t.position) - Vec3::from(t.target);
        assert!((d0.norm() - d1.norm()).abs() < 1e-12);
        assert!((d0.angle(&d1).to_degrees() - 5.0).abs() < 1e-9);
        assert!(d1.y < 0.0);
    }
}
