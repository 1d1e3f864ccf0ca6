use drape_core::material::MaterialParams;
use drape_core::sim::{
    bending_energy, make_grid_mesh, read_obj, setup_scene, solve_static, stretch_energy, write_obj,
    SceneConfig, SceneKind, SolverConfig, Vec3,
};
use proptest::prelude::*;

#[test]
fn obj_round_trip_keeps_geometry() {
    let mesh = make_grid_mesh(0.5, 0.1, 0.2).unwrap();
    let p = MaterialParams::uniform(300.0, 1e-5, 0.2);
    let (state, _) = solve_static(
        &SceneConfig::new(SceneKind::Stretch),
        &mesh,
        &p,
        &SolverConfig::default(),
        None,
    )
    .unwrap();
    let mut buf = Vec::new();
    write_obj(&mut buf, &mesh, &state.positions).unwrap();
    let (pos, tris) = read_obj(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(tris, mesh.triangle_indices());
    assert!(pos
        .iter()
        .zip(&state.positions)
        .all(|(a, b)| (a - b).amax() < 1e-9));
    assert!(read_obj("v 1 2\n").is_err());
    assert!(read_obj("f 0 1 2\n").is_err());
}

#[test]
fn fold_seed_is_mirror_symmetric() {
    let mesh = make_grid_mesh(0.5, 0.02, 0.2).unwrap();
    let (_, s) = setup_scene(SceneKind::Hanging, &mesh).unwrap();
    for (i, p) in s.positions.iter().enumerate() {
        let mirror = s
            .positions
            .iter()
            .position(|q| (q.x + p.x).abs() < 1e-12 && (q.y - p.y).abs() < 1e-12)
            .unwrap();
        assert!((s.positions[mirror].z - p.z).abs() < 1e-12, "vertex {i}");
    }
    let amp = s.positions.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    assert!((amp - 0.002).abs() < 1e-4);
}

#[test]
fn hanging_drape_sits_below_the_pins() {
    let mesh = make_grid_mesh(0.5, 0.05, 0.2).unwrap();
    for p in [
        MaterialParams::uniform(30.0, 1e-6, 0.1),
        MaterialParams::uniform(3000.0, 5e-4, 0.5),
    ] {
        let (s, r) = solve_static(
            &SceneConfig::new(SceneKind::Hanging),
            &mesh,
            &p,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        assert!(r.converged && s.pins_satisfied());
        assert!(s.lowest_height() < -0.45);
        let (lo, hi) = s.bounds();
        assert!(hi.x - lo.x <= 0.4 + 2.0 * 0.05 + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energies_are_nonnegative_and_translation_invariant(
        seed in any::<u64>(),
        t in prop::array::uniform3(-3.0f64..3.0),
        ks in 20.0f64..5000.0,
        kb in 1e-7f64..1e-3,
    ) {
        let mesh = make_grid_mesh(0.2, 0.05, 0.2).unwrap();
        let p = MaterialParams::uniform(ks, kb, 0.2);
        let mut rng = drape_core::seed::rng_for(seed, &[]);
        use rand::Rng;
        let x: Vec<Vec3> = drape_core::sim::flat_positions(&mesh)
            .into_iter()
            .map(|q| q + Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)))
            .collect();
        let shift = Vec3::from(t);
        let y: Vec<Vec3> = x.iter().map(|q| q + shift).collect();
        for f in [stretch_energy, bending_energy] {
            let (a, b) = (f(&mesh, &x, &p).unwrap().energy, f(&mesh, &y, &p).unwrap().energy);
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300));
        }
    }
}
