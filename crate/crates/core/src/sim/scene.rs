use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::energy::Vec3;
use super::mesh::ClothMesh;
use super::SimError;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Hanging,
    Stretch,
}

impl SceneKind {
    pub const ALL: [SceneKind; 2] = [SceneKind::Hanging, SceneKind::Stretch];

    pub fn as_str(&self) -> &'static str {
        match self {
            SceneKind::Hanging => "hanging",
            SceneKind::Stretch => "stretch",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hanging" => Ok(SceneKind::Hanging),
            "stretch" => Ok(SceneKind::Stretch),
            other => Err(SimError::UnknownScene(other.to_string())),
        }
    }
}

/// World positions and velocities of every vertex, plus the pinned vertices
/// and their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub pins: BTreeMap<usize, Vec3>,
}

impl SimState {
    pub fn at_rest(positions: Vec<Vec3>) -> Self {
        let velocities = vec![Vec3::zeros(); positions.len()];
        Self {
            positions,
            velocities,
            pins: BTreeMap::new(),
        }
    }

    pub fn is_pinned(&self, v: usize) -> bool {
        self.pins.contains_key(&v)
    }

    pub fn pins_satisfied(&self) -> bool {
        self.pins.iter().all(|(v, t)| self.positions[*v] == *t)
    }

    pub fn lowest_height(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p.y)
            .fold(f64::INFINITY, f64::min)
    }

    /// Axis-aligned bounds `(min, max)` of the positions.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

/// Scene layout. Coordinates: the panel is the `z = 0` plane, `y` points up
/// and the top pins sit at `y = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub kind: SceneKind,
    pub fabric_size: f64,
    /// World distance between the two top pins as a fraction of the fabric width.
    pub pin_separation_ratio: f64,
    /// Offset of the extra bottom-left pin in the stretch scene:
    /// `[outward, down]` in metres.
    pub stretch_offset: [f64; 2],
    pub gravity: [f64; 3],
    pub fold_amplitude: f64,
    pub fold_periods: f64,
}

impl SceneConfig {
    pub fn new(kind: SceneKind) -> Self {
        Self {
            kind,
            fabric_size: 0.5,
            pin_separation_ratio: 0.8,
            stretch_offset: [0.05, 0.05],
            gravity: [0.0, -9.81, 0.0],
            fold_amplitude: 0.002,
            fold_periods: 5.0,
        }
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    /// Pin separation in metres.
    pub fn pin_separation(&self) -> f64 {
        self.pin_separation_ratio * self.fabric_size
    }

    /// Initial state for `mesh`: a vertical sheet compressed horizontally to
    /// the pin separation, with a sinusoidal out-of-plane fold seed that is
    /// mirror-symmetric about the vertical centre line. The stretch scene
    /// additionally drags the bottom-left corner toward its pin with a
    /// bilinear blend that vanishes along the top and right edges.
    pub fn initial_state(&self, mesh: &ClothMesh) -> Result<SimState, SimError> {
        let n = mesh.vertex_count();
        if n < 3 {
            return Err(SimError::InvalidArgument(
                "mesh too small for a scene".into(),
            ));
        }
        let (mut umin, mut umax, mut vmin, mut vmax) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in &mesh.rest_positions {
            umin = umin.min(p.x);
            umax = umax.max(p.x);
            vmin = vmin.min(p.y);
            vmax = vmax.max(p.y);
        }
        let (width, height) = (umax - umin, vmax - vmin);
        let sep = self.pin_separation_ratio * width;
        let tau = std::f64::consts::TAU;
        let positions: Vec<Vec3> = mesh
            .rest_positions
            .iter()
            .map(|p| {
                let s = (p.x - umin) / width;
                let t = (p.y - vmin) / height;
                let mut q = Vec3::new(
                    -0.5 * sep + s * sep,
                    p.y - vmax,
                    self.fold_amplitude * (tau * self.fold_periods * (s - 0.5)).cos(),
                );
                if self.kind == SceneKind::Stretch {
                    let w = (1.0 - s) * (1.0 - t);
                    q.x -= w * self.stretch_offset[0];
                    q.y -= w * self.stretch_offset[1];
                }
                q
            })
            .collect();

        let corner = |prefer_top: bool, prefer_left: bool| {
            (0..n)
                .min_by(|&a, &b| {
                    let key = |v: usize| {
                        let p = mesh.rest_positions[v];
                        let y = if prefer_top { -p.y } else { p.y };
                        let x = if prefer_left { p.x } else { -p.x };
                        (y, x)
                    };
                    let (ka, kb) = (key(a), key(b));
                    ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
                })
                .unwrap()
        };
        let mut pinned = vec![corner(true, true), corner(true, false)];
        if self.kind == SceneKind::Stretch {
            pinned.push(corner(false, true));
        }
        let mut state = SimState::at_rest(positions);
        for v in pinned {
            state.pins.insert(v, state.positions[v]);
        }
        if state.pins.len() < 2 {
            return Err(SimError::InvalidArgument(
                "scene needs at least two distinct pins".into(),
            ));
        }
        Ok(state)
    }
}

/// Builds the default configuration of `kind` and its initial state on `mesh`.
pub fn setup_scene(kind: SceneKind, mesh: &ClothMesh) -> Result<(SceneConfig, SimState), SimError> {
    let mut cfg = SceneConfig::new(kind);
    if let Some(g) = mesh.grid {
        cfg.fabric_size = g.cells as f64 * g.spacing;
    }
    let state = cfg.initial_state(mesh)?;
    Ok((cfg, state))
}

/// Randomization of the initial conditions used to decorrelate repeated
/// simulations of the same material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    pub seed: u64,
    /// Standard deviation of the per-component initial velocity (m/s).
    pub impulse_sigma: f64,
    /// Pins move uniformly within a disc of this radius in the panel plane (m).
    pub pin_radius: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            impulse_sigma: 0.05,
            pin_radius: 0.005,
        }
    }
}

/// Adds Gaussian initial velocities to free vertices and moves each pin
/// target within the perturbation disc. Pinned vertices follow their targets.
pub fn perturb_initial(state: &SimState, j: &JitterConfig) -> SimState {
    let mut out = state.clone();
    let mut rng = seed::rng_for(j.seed, &[0x717E]);
    if j.impulse_sigma > 0.0 {
        for (v, vel) in out.velocities.iter_mut().enumerate() {
            let dv = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            if !state.is_pinned(v) {
                *vel += dv * j.impulse_sigma;
            }
        }
    }
    if j.pin_radius > 0.0 {
        for (v, target) in out.pins.iter_mut() {
            let r = j.pin_radius * rng.random::<f64>().sqrt();
            let a = std::f64::consts::TAU * rng.random::<f64>();
            *target += Vec3::new(r * a.cos(), r * a.sin(), 0.0);
            out.positions[*v] = *target;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::mesh::make_grid_mesh;

    #[test]
    fn pin_counts_and_consistency() {
        let mesh = make_grid_mesh(0.5, 0.02, 0.2).unwrap();
        let (cfg, h) = setup_scene(SceneKind::Hanging, &mesh).unwrap();
        assert_eq!(h.pins.len(), 2);
        assert!(h.pins_satisfied());
        assert!((cfg.fabric_size - 0.5).abs() < 1e-12);
        let xs: Vec<f64> = h.pins.values().map(|p| p.x).collect();
        assert!(((xs[1] - xs[0]).abs() - 0.4).abs() < 1e-12);
        assert!(h
            .pins
            .values()
            .all(|p| p.y == 0.0 && (p.z + cfg.fold_amplitude).abs() < 1e-15));

        let (_, s) = setup_scene(SceneKind::Stretch, &mesh).unwrap();
        assert_eq!(s.pins.len(), 3);
        assert!(s.pins_satisfied());
        let low = s.pins.values().find(|p| p.y < -0.1).unwrap();
        assert!((low.x - (-0.25)).abs() < 1e-12 && (low.y - (-0.55)).abs() < 1e-12);
    }

    #[test]
    fn unknown_scene_kind() {
        assert!(matches!(
            "draped".parse::<SceneKind>(),
            Err(SimError::UnknownScene(_))
        ));
        assert_eq!("stretch".parse::<SceneKind>().unwrap(), SceneKind::Stretch);
    }

    #[test]
    fn zero_jitter_is_identity() {
        let mesh = make_grid_mesh(0.5, 0.05, 0.2).unwrap();
        let (_, s) = setup_scene(SceneKind::Stretch, &mesh).unwrap();
        let j = JitterConfig {
            seed: 3,
            impulse_sigma: 0.0,
            pin_radius: 0.0,
        };
        assert_eq!(perturb_initial(&s, &j), s);
    }

    #[test]
    fn jitter_is_deterministic_and_keeps_pins() {
        let mesh = make_grid_mesh(0.5, 0.05, 0.2).unwrap();
        let (_, s) = setup_scene(SceneKind::Hanging, &mesh).unwrap();
        let j = JitterConfig {
            seed: 3,
            impulse_sigma: 0.01,
            pin_radius: 0.003,
        };
        let a = perturb_initial(&s, &j);
        assert_eq!(a, perturb_initial(&s, &j));
        assert!(a.pins_satisfied());
        for (v, t) in &a.pins {
            assert!((t - s.pins[v]).norm() <= 0.003 + 1e-15);
            assert_eq!(a.velocities[*v], Vec3::zeros());
        }
        let b = perturb_initial(&s, &JitterConfig { seed: 4, ..j });
        assert_ne!(a, b);
    }

    #[test]
    fn jitter_rms_speed() {
        // 101 x 101 vertices; speed of a 3-component Gaussian has RMS sigma * sqrt(3).
        let mesh = make_grid_mesh(0.5, 0.005, 0.2).unwrap();
        let (_, s) = setup_scene(SceneKind::Hanging, &mesh).unwrap();
        let j = JitterConfig {
            seed: 8,
            impulse_sigma: 0.01,
            pin_radius: 0.0,
        };
        let a = perturb_initial(&s, &j);
        let free: Vec<f64> = (0..mesh.vertex_count())
            .filter(|v| !a.is_pinned(*v))
            .map(|v| a.velocities[v].norm_squared())
            .collect();
        let rms = (free.iter().sum::<f64>() / free.len() as f64).sqrt();
        let expected = 0.01 * 3f64.sqrt();
        assert!((rms - expected).abs() < 0.1 * expected, "{rms}");
    }
}
