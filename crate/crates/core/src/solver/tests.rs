use super::*;

fn small(n_steps: u64) -> SolverConfig {
    SolverConfig { cells_per_height: 8, n_steps, snapshot_stride: 1, ..Default::default() }
}

#[test]
fn density_is_linear_in_temperature() {
    let cfg = SolverConfig::default();
    assert_eq!(boussinesq_density(300.0, &cfg), 1000.0);
    assert!((boussinesq_density(301.0, &cfg) - 999.0).abs() < 1e-9);
    assert!((boussinesq_density(302.0, &cfg) - 998.0).abs() < 1e-9);
}

#[test]
fn rayleigh_and_prandtl_numbers() {
    let mut cfg = SolverConfig { t_hot: 301.4, ..Default::default() };
    // g * beta * dT * H^3 / (nu * alpha) evaluated by hand
    assert!((rayleigh_number(&cfg) - 9.81 * 1.4 / 1e-3).abs() < 1e-6);
    assert!((rayleigh_number(&cfg) - 13734.0).abs() < 1e-6);
    cfg.t_hot = 302.0;
    assert!((rayleigh_number(&cfg) - 19620.0).abs() < 1e-6);
    cfg.t_hot = cfg.t_cold;
    assert_eq!(rayleigh_number(&cfg), 0.0);
    assert_eq!(prandtl_number(&cfg), 1.0);
}

#[test]
fn auto_dt_respects_both_limits() {
    let cfg = SolverConfig::default();
    let h: f64 = 1.0 / 16.0;
    let u = (9.81f64 * 1e-3 * 1.4).sqrt();
    let expected = 0.4 * (h / u).min(h * h / 4e-3);
    assert!((cfg.auto_dt() - expected).abs() < 1e-12);
    let still = SolverConfig { g: 0.0, ..cfg };
    assert!((still.auto_dt() - 0.4 * h * h / 4e-3).abs() < 1e-15);
}

#[test]
fn rejects_bad_configs() {
    assert!(Solver::new(SolverConfig { t_hot: 299.0, ..Default::default() }).is_err());
    assert!(Solver::new(SolverConfig { cells_per_height: 3, ..Default::default() }).is_err());
    assert!(Solver::new(SolverConfig { snapshot_stride: 0, ..Default::default() }).is_err());
    assert!(Solver::new(SolverConfig { perturbation: -1.0, ..Default::default() }).is_err());
}

#[test]
fn oversized_step_is_reported() {
    let cfg = SolverConfig { dt: Some(10.0), ..small(1) };
    assert!(matches!(run_trajectory(&cfg, 0), Err(Error::UnstableTimeStep { step: 1, .. })));
}

#[test]
fn key_values_round_trip() {
    let cfg = SolverConfig { dt: Some(0.05), aspect_ratio: 3, t_hot: 301.1, ..Default::default() };
    let mut back = SolverConfig::default();
    for (k, v) in cfg.to_key_values() {
        assert!(back.set(k, &v).unwrap());
    }
    assert_eq!(back, cfg);
    assert!(back.set("dt", "auto").unwrap());
    assert_eq!(back.dt, None);
}

#[test]
fn zero_steps_gives_initial_frame_only() {
    let traj = run_trajectory(&small(0), 4).unwrap();
    assert_eq!(traj.len(), 1);
    let t = &traj.snapshots[0].temperatures;
    assert!(t.iter().all(|&v| (300.0..300.001).contains(&v)));
    // walls start unperturbed
    assert_eq!(t[0], 300.0);
}

#[test]
fn snapshots_follow_the_stride() {
    let cfg = SolverConfig { snapshot_stride: 3, ..small(10) };
    let traj = run_trajectory(&cfg, 1).unwrap();
    assert_eq!(traj.len(), 4);
    let dt = Solver::new(cfg).unwrap().dt();
    assert_eq!(traj.params.dt, 3.0 * dt);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let cfg = small(20);
    let a = run_trajectory(&cfg, 9).unwrap().to_bytes().unwrap();
    let b = run_trajectory(&cfg, 9).unwrap().to_bytes().unwrap();
    assert_eq!(a, b);
    assert_ne!(a, run_trajectory(&cfg, 10).unwrap().to_bytes().unwrap());
}

#[test]
fn no_gravity_keeps_fluid_at_rest() {
    let cfg = SolverConfig { g: 0.0, ..small(200) };
    let mut moved = false;
    run_trajectory_with(&cfg, 2, |s, _| {
        moved |= s.u.iter().chain(&s.v).any(|&w| w != 0.0);
    })
    .unwrap();
    assert!(!moved);
}

#[test]
fn invariants_hold_every_step() {
    let cfg = SolverConfig { t_hot: 302.0, aspect_ratio: 2, ..small(300) };
    let h = cfg.spacing();
    run_trajectory_with(&cfg, 3, |s, stats| {
        assert!(s.max_divergence(h) <= 1e-8);
        assert!(stats.max_coefficient <= 1.0);
        let (lo, hi) = s.temperature_range();
        assert!(lo >= 300.0 - 1e-9 && hi <= 302.0 + 1e-9);
    })
    .unwrap();
}

#[test]
fn mirrored_start_gives_mirrored_run() {
    let cfg = SolverConfig { t_hot: 302.0, cells_per_height: 6, aspect_ratio: 2, ..Default::default() };
    let solver = Solver::new(cfg).unwrap();
    let mut a = solver.initial_state(5);
    let mut b = a.clone();
    let (nx, ny) = (a.nx, a.ny);
    for j in 0..ny {
        for i in 0..nx {
            b.t[j * nx + i] = a.t[j * nx + nx - 1 - i];
        }
    }
    for _ in 0..200 {
        solver.step(&mut a).unwrap();
        solver.step(&mut b).unwrap();
        for j in 0..ny {
            for i in 0..nx {
                assert!((a.t[j * nx + i] - b.t[j * nx + nx - 1 - i]).abs() <= 1e-10);
            }
        }
    }
    assert!(a.kinetic_energy(solver.spacing()) > 0.0);
}
