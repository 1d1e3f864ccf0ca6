//! Quasi-static cloth simulation: grid meshes with classified hinges,
//! anisotropic membrane and bending energies, the two capture scenes and a
//! damped implicit relaxation solver.

use std::io::{self, Write};

use thiserror::Error;

pub mod energy;
pub mod linalg;
pub mod mesh;
pub mod scene;
pub mod solver;

pub use energy::{bending_energy, flat_positions, stretch_energy, EnergyEval, Vec3};
pub use mesh::{make_grid_mesh, ClothMesh, DirectionClass, Hinge, Vec2};
pub use scene::{perturb_initial, setup_scene, JitterConfig, SceneConfig, SceneKind, SimState};
pub use solver::{max_green_strain, relax, solve_static, ConvergenceReport, SolverConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("triangle {0} has zero or negative rest area")]
    DegenerateTriangle(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles or inconsistently oriented")]
    NonManifold(usize, usize),
    #[error("hinge on edge ({0}, {1}) has a degenerate triangle")]
    DegenerateHinge(usize, usize),
    #[error("state has {got} vertices, mesh has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown scene kind {0:?}")]
    UnknownScene(String),
    #[error("solver diverged at step {step}")]
    Diverged { step: usize },
}

/// Writes positions and triangles as a Wavefront OBJ (1-based indices).
pub fn write_obj<W: Write>(mut w: W, mesh: &ClothMesh, positions: &[Vec3]) -> io::Result<()> {
    writeln!(
        w,
        "# {} vertices, {} triangles",
        positions.len(),
        mesh.triangles.len()
    )?;
    for p in positions {
        writeln!(w, "v {:.9} {:.9} {:.9}", p.x, p.y, p.z)?;
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.vertices;
        writeln!(w, "f {} {} {}", a + 1, b + 1, c + 1)?;
    }
    Ok(())
}

/// Reads positions and triangles back from [`write_obj`] output.
pub fn read_obj(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>), String> {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", n + 1))?;
                if c.len() != 3 {
                    return Err(format!("line {}: expected 3 coordinates", n + 1));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let c: Vec<usize> = it
                    .map(|s| s.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", n + 1))?;
                if c.len() != 3 || c.iter().any(|&i| i == 0) {
                    return Err(format!("line {}: expected 3 one-based indices", n + 1));
                }
                tris.push([c[0] - 1, c[1] - 1, c[2] - 1]);
            }
            _ => {}
        }
    }
    Ok((verts, tris))
}
