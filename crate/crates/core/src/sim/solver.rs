//! Quasi-static drape by damped implicit-Euler relaxation.
//!
//! Each step is one Newton iteration on the implicit-Euler incremental
//! potential with Rayleigh damping: `[(1/h² + α/h) M + (1 + β/h) K] d = -∇Φ`,
//! solved by a banded Cholesky factorization. `K` is the exact energy Hessian
//! when that system is positive definite and an element-wise PSD projection
//! of it otherwise. A backtracking search along `d` keeps every
//! step a descent step. The step grows geometrically while full Newton steps
//! are accepted, so late iterations become regularized Newton steps on the
//! static potential.

use std::time::Instant;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::energy::{bending_element, stretch_element, Vec3};
use super::linalg::BandMatrix;
use super::mesh::ClothMesh;
use super::scene::{perturb_initial, JitterConfig, SceneConfig, SimState};
use super::SimError;
use crate::material::MaterialParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Initial step (s).
    pub time_step: f64,
    /// Upper bound for the adaptive step (s). Equal to `time_step` disables growth.
    pub max_time_step: f64,
    pub step_growth: f64,
    /// Mass-proportional Rayleigh coefficient (1/s).
    pub mass_damping: f64,
    /// Stiffness-proportional Rayleigh coefficient (s).
    pub stiffness_damping: f64,
    pub max_steps: usize,
    /// Largest free-vertex speed accepted as static (m/s).
    pub velocity_tolerance: f64,
    /// Largest free-vertex net force accepted as static (N).
    pub residual_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_step: 2e-3,
            max_time_step: 1e3,
            step_growth: 1.5,
            mass_damping: 2.0,
            stiffness_damping: 1e-3,
            max_steps: 20_000,
            velocity_tolerance: 1e-4,
            residual_tolerance: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.time_step > 0.0
            && self.max_time_step >= self.time_step
            && self.step_growth >= 1.0
            && self.mass_damping >= 0.0
            && self.stiffness_damping >= 0.0
            && self.velocity_tolerance > 0.0
            && self.residual_tolerance > 0.0
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidArgument(format!(
                "invalid solver configuration {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub steps: usize,
    pub rejected_steps: usize,
    /// Largest net force on a free vertex (N).
    pub final_residual: f64,
    /// Largest free-vertex speed (m/s).
    pub final_max_speed: f64,
    pub final_time_step: f64,
    /// Internal plus gravitational potential energy (J).
    pub potential_energy: f64,
    pub wall_time_s: f64,
}

struct Evaluation {
    potential: f64,
    gradient: Vec<Vec3>,
}

/// Total potential `E_stretch + E_bend - Σ m gᵀx`, its gradient and
/// optionally the PSD stiffness in band storage.
fn evaluate(
    mesh: &ClothMesh,
    x: &[Vec3],
    p: &MaterialParams,
    masses: &[f64],
    gravity: &Vec3,
    mut stiffness: Option<&mut BandMatrix>,
    project: bool,
) -> Result<Evaluation, SimError> {
    let mut potential = 0.0;
    let mut gradient: Vec<Vec3> = masses.iter().map(|m| -gravity * *m).collect();
    for (xi, m) in x.iter().zip(masses) {
        potential -= m * gravity.dot(xi);
    }
    let mut h3 = [Matrix3::zeros(); 9];
    for tri in &mesh.triangles {
        let t = stretch_element(tri, x, p, stiffness.is_some().then_some(&mut h3), project);
        potential += t.energy;
        for (v, g) in t.vertices.iter().zip(t.gradient) {
            gradient[*v] += g;
        }
        if let Some(k) = stiffness.as_deref_mut() {
            scatter(k, &t.vertices, &h3);
        }
    }
    let mut h4 = [Matrix3::zeros(); 16];
    for hinge in &mesh.hinges {
        let t = bending_element(hinge, x, p, stiffness.is_some().then_some(&mut h4), project)?;
        potential += t.energy;
        for (v, g) in t.vertices.iter().zip(t.gradient) {
            gradient[*v] += g;
        }
        if let Some(k) = stiffness.as_deref_mut() {
            scatter(k, &t.vertices, &h4);
        }
    }
    Ok(Evaluation {
        potential,
        gradient,
    })
}

fn scatter<const N: usize>(k: &mut BandMatrix, verts: &[usize; N], blocks: &[Matrix3<f64>]) {
    for i in 0..N {
        for j in i..N {
            let blk = &blocks[i * N + j];
            if verts[i] >= verts[j] {
                k.add_block(verts[i], verts[j], blk);
            } else {
                k.add_block(verts[j], verts[i], &blk.transpose());
            }
        }
    }
}

fn free_max(state: &SimState, values: &[Vec3]) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| !state.is_pinned(*i))
        .map(|(_, g)| g.norm())
        .fold(0.0, f64::max)
}

fn check_state(mesh: &ClothMesh, state: &SimState) -> Result<(), SimError> {
    let n = mesh.vertex_count();
    if state.positions.len() != n || state.velocities.len() != n {
        return Err(SimError::DimensionMismatch {
            expected: n,
            got: state.positions.len(),
        });
    }
    if let Some((&v, _)) = state.pins.iter().find(|(v, _)| **v >= n) {
        return Err(SimError::InvalidArgument(format!(
            "pin references missing vertex {v}"
        )));
    }
    Ok(())
}

/// Relaxes `initial` to static equilibrium under `gravity`. Pinned vertices
/// are held at their targets throughout.
pub fn relax(
    mesh: &ClothMesh,
    initial: SimState,
    p: &MaterialParams,
    gravity: Vec3,
    cfg: &SolverConfig,
) -> Result<(SimState, ConvergenceReport), SimError> {
    let started = Instant::now();
    cfg.validate()?;
    p.validate()
        .map_err(|e| SimError::InvalidArgument(e.to_string()))?;
    check_state(mesh, &initial)?;

    let scale = p.density / mesh.density;
    let masses: Vec<f64> = mesh.vertex_masses.iter().map(|m| m * scale).collect();
    let n = mesh.vertex_count();
    let bw = 3 * mesh.vertex_bandwidth() + 2;
    let free: Vec<bool> = (0..n).map(|v| !initial.pins.contains_key(&v)).collect();

    let mut state = initial;
    for (v, t) in &state.pins {
        state.positions[*v] = *t;
        state.velocities[*v] = Vec3::zeros();
    }
    let (alpha, beta) = (cfg.mass_damping, cfg.stiffness_damping);
    let mut h = cfg.time_step;
    let mut steps = 0;
    let mut backtracks = 0;
    let mut exact_cooldown = 0usize;
    let mut eval = evaluate(mesh, &state.positions, p, &masses, &gravity, None, false)?;

    loop {
        let residual = free_max(&state, &eval.gradient);
        let speed = free_max(&state, &state.velocities);
        if !(residual.is_finite() && speed.is_finite()) {
            return Err(SimError::Diverged { step: steps });
        }
        let converged = residual < cfg.residual_tolerance && speed < cfg.velocity_tolerance;
        if converged || steps >= cfg.max_steps {
            let report = ConvergenceReport {
                converged,
                steps,
                rejected_steps: backtracks,
                final_residual: residual,
                final_max_speed: speed,
                final_time_step: h,
                potential_energy: eval.potential,
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            return Ok((state, report));
        }

        // Implicit Euler as minimization of the incremental potential
        //   Φ(y) = ‖y - x - h v‖²_M / 2h² + ‖y - x‖²_D / 2h + U(y),  D = αM + βK,
        // with one Newton step from y = x followed by a backtracking search.
        let inv_h = 1.0 / h;
        let diag: Vec<f64> = masses
            .iter()
            .map(|m| (inv_h * inv_h + alpha * inv_h) * m)
            .collect();
        let assemble = |project: bool| -> Result<(BandMatrix, BandMatrix), SimError> {
            let mut stiffness = BandMatrix::zeros(3 * n, bw);
            evaluate(
                mesh,
                &state.positions,
                p,
                &masses,
                &gravity,
                Some(&mut stiffness),
                project,
            )?;
            let mut a = stiffness.scaled_plus_vertex_diag(1.0 + beta * inv_h, &diag);
            for (v, _) in free.iter().enumerate().filter(|(_, f)| !**f) {
                for c in 0..3 {
                    a.clamp_dof(3 * v + c);
                }
            }
            Ok((stiffness, a))
        };
        // The exact Hessian gives quadratic convergence near a stable
        // equilibrium; elsewhere it may be indefinite and the per-element
        // projection takes over for a while.
        let mut factored = None;
        if exact_cooldown == 0 {
            let (k, mut a) = assemble(false)?;
            if a.cholesky_in_place().is_ok() {
                factored = Some((k, a));
            } else {
                exact_cooldown = 8;
            }
        } else {
            exact_cooldown -= 1;
        }
        let (stiffness, a) = match factored {
            Some(f) => f,
            None => {
                let (k, mut a) = assemble(true)?;
                a.cholesky_in_place()
                    .map_err(|_| SimError::Diverged { step: steps })?;
                (k, a)
            }
        };
        let mut grad_phi = vec![0.0; 3 * n];
        for i in 0..n {
            for c in 0..3 {
                grad_phi[3 * i + c] = if free[i] {
                    eval.gradient[i][c] - masses[i] * state.velocities[i][c] * inv_h
                } else {
                    0.0
                };
            }
        }
        let mut dir: Vec<f64> = grad_phi.iter().map(|g| -g).collect();
        a.cholesky_solve(&mut dir);

        let slope: f64 = grad_phi.iter().zip(&dir).map(|(g, d)| g * d).sum();
        // Quadratic parts of Φ along the search line, as functions of s.
        let mut m_dd = 0.0;
        let mut m_dv = 0.0;
        for i in (0..n).filter(|&i| free[i]) {
            let d = Vec3::new(dir[3 * i], dir[3 * i + 1], dir[3 * i + 2]);
            m_dd += masses[i] * d.norm_squared();
            m_dv += masses[i] * d.dot(&state.velocities[i]);
        }
        let k_dd: f64 = {
            let kd = stiffness.mul_vec(&dir);
            (0..n)
                .filter(|&i| free[i])
                .flat_map(|i| (0..3).map(move |c| 3 * i + c))
                .map(|k| dir[k] * kd[k])
                .sum()
        };
        let phi_quad = |s: f64| {
            0.5 * inv_h * inv_h * (s * s * m_dd - 2.0 * s * h * m_dv)
                + 0.5 * inv_h * s * s * (alpha * m_dd + beta * k_dd)
        };
        let grad_norm0: f64 = grad_phi.iter().map(|g| g * g).sum::<f64>().sqrt();

        let mut s = 1.0;
        let (next_positions, next_eval) = loop {
            let mut y = state.positions.clone();
            for i in (0..n).filter(|&i| free[i]) {
                y[i] += Vec3::new(dir[3 * i], dir[3 * i + 1], dir[3 * i + 2]) * s;
            }
            if let Ok(t) = evaluate(mesh, &y, p, &masses, &gravity, None, false) {
                let phi = t.potential + phi_quad(s);
                let armijo = phi.is_finite() && phi <= eval.potential + 1e-4 * s * slope;
                // Near convergence Φ differences drown in round-off; accept a
                // step that shrinks the gradient of Φ instead.
                let shrinks = || {
                    let g: f64 = (0..n)
                        .filter(|&i| free[i])
                        .map(|i| {
                            let dy = y[i] - state.positions[i];
                            let gi = t.gradient[i]
                                + (dy - state.velocities[i] * h) * (masses[i] * inv_h * inv_h)
                                + dy * (alpha * masses[i] * inv_h);
                            gi.norm_squared()
                        })
                        .sum::<f64>()
                        .sqrt();
                    g.is_finite() && g < (1.0 - 1e-4 * s) * grad_norm0
                };
                if armijo || shrinks() {
                    break (y, t);
                }
            }
            backtracks += 1;
            s *= 0.5;
            if s < 1e-12 {
                return Err(SimError::Diverged { step: steps });
            }
        };

        for i in (0..n).filter(|&i| free[i]) {
            state.velocities[i] = (next_positions[i] - state.positions[i]) * inv_h;
        }
        state.positions = next_positions;
        eval = next_eval;
        h = if s == 1.0 {
            (h * cfg.step_growth).min(cfg.max_time_step)
        } else if s < 0.25 {
            (h * 0.5).max(cfg.time_step)
        } else {
            h
        };
        steps += 1;
    }
}

/// Relaxes the scene's initial state for material `p`, optionally jittering
/// the initial velocities and pins first.
pub fn solve_static(
    scene: &SceneConfig,
    mesh: &ClothMesh,
    p: &MaterialParams,
    solver: &SolverConfig,
    jitter: Option<&JitterConfig>,
) -> Result<(SimState, ConvergenceReport), SimError> {
    let mut state = scene.initial_state(mesh)?;
    if let Some(j) = jitter {
        state = perturb_initial(&state, j);
    }
    relax(mesh, state, p, scene.gravity(), solver)
}

/// Largest Green strain magnitude over all triangles.
pub fn max_green_strain(mesh: &ClothMesh, x: &[Vec3]) -> f64 {
    mesh.triangles
        .iter()
        .map(|t| {
            let s = super::energy::triangle_strain(t, x);
            s.uu.abs().max(s.vv.abs()).max(s.uv.abs())
        })
        .fold(0.0, f64::max)
}
