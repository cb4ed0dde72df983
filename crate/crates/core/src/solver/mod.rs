//! Boussinesq natural-convection solver used to generate training data.
//!
//! Staggered (MAC) grid: `u` on vertical cell faces, `v` on horizontal
//! faces, pressure and temperature at cell centres. Each step advances
//! momentum explicitly (first-order upwind advection, central diffusion,
//! buoyancy on `v`), projects onto divergence-free fields with a
//! conjugate-gradient pressure solve, then advects and diffuses the
//! temperature with the projected velocity.
//!
//! Walls are no-slip. The bottom wall is held at `t_hot`, the top at
//! `t_cold` (ghost cells), and the side walls are adiabatic.

mod poisson;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::mesh::CavityMesh;
use crate::error::parse_value as parse;
use crate::trajectory::{PhysicalParams, Trajectory};
use poisson::NegLaplacian;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho0: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Gravity magnitude, pointing down.
    pub g: f64,
    pub t_ref: f64,
    pub t_hot: f64,
    pub t_cold: f64,
    pub height: f64,
    pub aspect_ratio: u32,
    pub cells_per_height: u32,
    /// Fixed time step; `None` picks one from the stability limits.
    pub dt: Option<f64>,
    pub n_steps: u64,
    pub snapshot_stride: u64,
    /// Upper bound of the uniform initial perturbation added to interior
    /// cells, in kelvin.
    pub perturbation: f64,
    pub poisson_tol: f64,
    pub poisson_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = PhysicalParams::default();
        Self {
            rho0: p.rho0,
            nu: p.nu,
            alpha: p.alpha,
            beta: p.beta,
            g: p.g,
            t_ref: p.t_ref,
            t_hot: p.t_hot,
            t_cold: p.t_cold,
            height: 1.0,
            aspect_ratio: 1,
            cells_per_height: 16,
            dt: None,
            n_steps: 2500,
            snapshot_stride: 5,
            perturbation: 1e-3,
            poisson_tol: 1e-10,
            poisson_max_iter: 20_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho0", self.rho0),
            ("nu", self.nu),
            ("alpha", self.alpha),
            ("height", self.height),
            ("poisson_tol", self.poisson_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_hot > self.t_cold) {
            return Err(Error::InvalidConfig(format!(
                "t_hot ({}) must exceed t_cold ({})",
                self.t_hot, self.t_cold
            )));
        }
        if !(self.perturbation >= 0.0 && self.perturbation <= self.t_hot - self.t_cold) {
            return Err(Error::InvalidConfig(format!(
                "perturbation must lie in [0, t_hot - t_cold], got {}",
                self.perturbation
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidConfig("snapshot_stride must be >= 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.g.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidConfig("g and beta must be finite".into()));
        }
        Ok(())
    }

    pub fn delta_t(&self) -> f64 {
        self.t_hot - self.t_cold
    }

    pub fn spacing(&self) -> f64 {
        self.height / self.cells_per_height as f64
    }

    /// Buoyancy velocity scale `sqrt(g * beta * dT * H)`.
    pub fn velocity_scale(&self) -> f64 {
        (self.g.abs() * self.beta.abs() * self.delta_t().max(0.0) * self.height).sqrt()
    }

    /// `0.4 * min(h / U, h^2 / (4 max(nu, alpha)))` with `U` the buoyancy
    /// velocity scale.
    pub fn auto_dt(&self) -> f64 {
        let h = self.spacing();
        let diffusive = h * h / (4.0 * self.nu.max(self.alpha));
        let u = self.velocity_scale();
        let advective = if u > 0.0 { h / u } else { f64::INFINITY };
        0.4 * advective.min(diffusive)
    }

    pub fn time_step(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.auto_dt())
    }

    pub fn physical_params(&self, frame_interval: f64) -> PhysicalParams {
        PhysicalParams {
            dt: frame_interval,
            rho0: self.rho0,
            nu: self.nu,
            alpha: self.alpha,
            beta: self.beta,
            g: self.g,
            t_ref: self.t_ref,
            t_hot: self.t_hot,
            t_cold: self.t_cold,
        }
    }

    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("rho0", self.rho0.to_string()),
            ("nu", self.nu.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("g", self.g.to_string()),
            ("t_ref", self.t_ref.to_string()),
            ("t_hot", self.t_hot.to_string()),
            ("t_cold", self.t_cold.to_string()),
            ("height", self.height.to_string()),
            ("aspect_ratio", self.aspect_ratio.to_string()),
            ("cells_per_height", self.cells_per_height.to_string()),
            ("dt", self.dt.map_or_else(|| "auto".to_string(), |v| v.to_string())),
            ("n_steps", self.n_steps.to_string()),
            ("snapshot_stride", self.snapshot_stride.to_string()),
            ("perturbation", self.perturbation.to_string()),
            ("poisson_tol", self.poisson_tol.to_string()),
            ("poisson_max_iter", self.poisson_max_iter.to_string()),
        ]
    }

    /// Sets one field by key; `Ok(false)` for keys owned elsewhere.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        match key {
            "rho0" => self.rho0 = parse(key, v)?,
            "nu" => self.nu = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "g" => self.g = parse(key, v)?,
            "t_ref" => self.t_ref = parse(key, v)?,
            "t_hot" => self.t_hot = parse(key, v)?,
            "t_cold" => self.t_cold = parse(key, v)?,
            "height" => self.height = parse(key, v)?,
            "aspect_ratio" => self.aspect_ratio = parse(key, v)?,
            "cells_per_height" => self.cells_per_height = parse(key, v)?,
            "dt" => self.dt = if v == "auto" { None } else { Some(parse(key, v)?) },
            "n_steps" => self.n_steps = parse(key, v)?,
            "snapshot_stride" => self.snapshot_stride = parse(key, v)?,
            "perturbation" => self.perturbation = parse(key, v)?,
            "poisson_tol" => self.poisson_tol = parse(key, v)?,
            "poisson_max_iter" => self.poisson_max_iter = parse(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// `rho0 * (1 - beta * (T - T0))`.
pub fn boussinesq_density(temperature: f64, cfg: &SolverConfig) -> f64 {
    cfg.rho0 * (1.0 - cfg.beta * (temperature - cfg.t_ref))
}

/// `g * beta * dT * H^3 / (nu * alpha)`.
pub fn rayleigh_number(cfg: &SolverConfig) -> f64 {
    cfg.g * cfg.beta * cfg.delta_t() * cfg.height.powi(3) / (cfg.nu * cfg.alpha)
}

pub fn prandtl_number(cfg: &SolverConfig) -> f64 {
    cfg.nu / cfg.alpha
}

/// Velocities, kinematic pressure and temperature on the staggered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub nx: usize,
    pub ny: usize,
    /// `(nx + 1) * ny` values; face `(i, j)` at `j * (nx + 1) + i`.
    pub u: Vec<f64>,
    /// `nx * (ny + 1)` values; face `(i, j)` at `j * nx + i`.
    pub v: Vec<f64>,
    /// Pressure correction potential from the last projection, per cell.
    pub p: Vec<f64>,
    /// Cell temperatures, row-major bottom to top (matches mesh nodes).
    pub t: Vec<f64>,
    pub time: f64,
    pub step: u64,
}

impl FlowState {
    /// Fluid at rest, cells at `t_cold` plus `U[0, perturbation)` noise in
    /// interior cells.
    pub fn initial(cfg: &SolverConfig, seed: u64) -> Self {
        let nx = (cfg.aspect_ratio * cfg.cells_per_height) as usize;
        let ny = cfg.cells_per_height as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = vec![cfg.t_cold; nx * ny];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                t[j * nx + i] += cfg.perturbation * rng.random::<f64>();
            }
        }
        Self {
            nx,
            ny,
            u: vec![0.0; (nx + 1) * ny],
            v: vec![0.0; nx * (ny + 1)],
            p: vec![0.0; nx * ny],
            t,
            time: 0.0,
            step: 0,
        }
    }

    /// `0.5 * sum(u^2 + v^2) * h^2` over faces.
    pub fn kinetic_energy(&self, h: f64) -> f64 {
        let s: f64 = self.u.iter().chain(&self.v).map(|w| w * w).sum();
        0.5 * s * h * h
    }

    /// Largest absolute discrete divergence over cells.
    pub fn max_divergence(&self, h: f64) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let mut m: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let d = (self.u[j * (nx + 1) + i + 1] - self.u[j * (nx + 1) + i]
                    + self.v[(j + 1) * nx + i]
                    - self.v[j * nx + i])
                    / h;
                m = m.max(d.abs());
            }
        }
        m
    }

    pub fn temperature_range(&self) -> (f64, f64) {
        self.t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub poisson_iterations: usize,
    pub poisson_residual: f64,
    /// Largest explicit-update coefficient sum seen; must stay below one.
    pub max_coefficient: f64,
}

/// Time integrator for one configuration.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: SolverConfig,
    nx: usize,
    ny: usize,
    h: f64,
    dt: f64,
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        // reuse mesh validation for the grid dimensions
        let mesh = CavityMesh::new(cfg.aspect_ratio, cfg.cells_per_height, cfg.height)?;
        let dt = cfg.time_step();
        Ok(Self { nx: mesh.nx(), ny: mesh.ny(), h: mesh.spacing(), dt, cfg })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn initial_state(&self, seed: u64) -> FlowState {
        FlowState::initial(&self.cfg, seed)
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut FlowState) -> Result<StepStats> {
        if state.nx != self.nx || state.ny != self.ny {
            return Err(Error::ShapeMismatch(format!(
                "state is {}x{}, solver grid is {}x{}",
                state.nx, state.ny, self.nx, self.ny
            )));
        }
        let step = state.step + 1;
        let mut max_coef = 0.0f64;
        let (u_star, v_star) = self.momentum(state, &mut max_coef);
        let (iterations, residual) = self.project(state, u_star, v_star)?;
        let t_new = self.temperature(state, &mut max_coef);
        if max_coef > 1.0 {
            return Err(Error::UnstableTimeStep { step, dt: self.dt, coefficient: max_coef });
        }
        if let Some(k) = t_new.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("temperature of cell {k} at step {step}")));
        }
        if state.u.iter().chain(&state.v).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("velocity at step {step}")));
        }
        state.t = t_new;
        state.step = step;
        state.time = step as f64 * self.dt;
        Ok(StepStats { poisson_iterations: iterations, poisson_residual: residual, max_coefficient: max_coef })
    }

    /// Explicit momentum update without the pressure gradient.
    fn momentum(&self, s: &FlowState, max_coef: &mut f64) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny, h, dt) = (self.nx, self.ny, self.h, self.dt);
        let nu = self.cfg.nu;
        let inv_h2 = 1.0 / (h * h);
        let ui = |i: usize, j: usize| j * (nx + 1) + i;
        let vi = |i: usize, j: usize| j * nx + i;
        let (u, v) = (&s.u, &s.v);

        let mut u_star = u.clone();
        for j in 0..ny {
            for i in 1..nx {
                let uc = u[ui(i, j)];
                let vc = 0.25 * (v[vi(i - 1, j)] + v[vi(i, j)] + v[vi(i - 1, j + 1)] + v[vi(i, j + 1)]);
                let (left, right) = (u[ui(i - 1, j)], u[ui(i + 1, j)]);
                // no-slip ghosts mirror the face value through the wall
                let down = if j > 0 { u[ui(i, j - 1)] } else { -uc };
                let up = if j + 1 < ny { u[ui(i, j + 1)] } else { -uc };
                let dudx = if uc > 0.0 { uc - left } else { right - uc } / h;
                let dudy = if vc > 0.0 { uc - down } else { up - uc } / h;
                let lap = (left + right + down + up - 4.0 * uc) * inv_h2;
                u_star[ui(i, j)] = uc + dt * (-uc * dudx - vc * dudy + nu * lap);
                let wall = (j == 0 || j + 1 == ny) as u8 as f64;
                *max_coef = max_coef.max(dt * (uc.abs() + vc.abs()) / h + dt * nu * (4.0 + wall) * inv_h2);
            }
        }

        let buoyancy = self.cfg.g * self.cfg.beta;
        let mut v_star = v.clone();
        for j in 1..ny {
            for i in 0..nx {
                let vc = v[vi(i, j)];
                let uc = 0.25 * (u[ui(i, j - 1)] + u[ui(i + 1, j - 1)] + u[ui(i, j)] + u[ui(i + 1, j)]);
                let (down, up) = (v[vi(i, j - 1)], v[vi(i, j + 1)]);
                let left = if i > 0 { v[vi(i - 1, j)] } else { -vc };
                let right = if i + 1 < nx { v[vi(i + 1, j)] } else { -vc };
                let dvdx = if uc > 0.0 { vc - left } else { right - vc } / h;
                let dvdy = if vc > 0.0 { vc - down } else { up - vc } / h;
                let lap = (left + right + down + up - 4.0 * vc) * inv_h2;
                let t_face = 0.5 * (s.t[(j - 1) * nx + i] + s.t[j * nx + i]);
                // warmer fluid is lighter and rises
                let force = buoyancy * (t_face - self.cfg.t_ref);
                v_star[vi(i, j)] = vc + dt * (-uc * dvdx - vc * dvdy + nu * lap + force);
                let wall = (i == 0 || i + 1 == nx) as u8 as f64;
                *max_coef = max_coef.max(dt * (uc.abs() + vc.abs()) / h + dt * nu * (4.0 + wall) * inv_h2);
            }
        }
        (u_star, v_star)
    }

    /// Removes the divergent part of the provisional velocity.
    fn project(&self, s: &mut FlowState, mut u: Vec<f64>, mut v: Vec<f64>) -> Result<(usize, f64)> {
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        // rhs = -div(u*), so the potential solves lap(phi) = div(u*)
        let mut rhs = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                rhs[j * nx + i] = -(u[j * (nx + 1) + i + 1] - u[j * (nx + 1) + i] + v[(j + 1) * nx + i]
                    - v[j * nx + i])
                    / h;
            }
        }
        let op = NegLaplacian { nx, ny, inv_h2: 1.0 / (h * h) };
        let stats = poisson::solve(&op, &mut rhs, &mut s.p, self.cfg.poisson_tol, self.cfg.poisson_max_iter)?;
        let phi = &s.p;
        for j in 0..ny {
            for i in 1..nx {
                u[j * (nx + 1) + i] -= (phi[j * nx + i] - phi[j * nx + i - 1]) / h;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                v[j * nx + i] -= (phi[j * nx + i] - phi[(j - 1) * nx + i]) / h;
            }
        }
        s.u = u;
        s.v = v;
        Ok(stats)
    }

    /// Upwind advection plus central diffusion of the temperature, written
    /// as a convex combination of neighbouring and wall values.
    fn temperature(&self, s: &FlowState, max_coef: &mut f64) -> Vec<f64> {
        let (nx, ny, h, dt) = (self.nx, self.ny, self.h, self.dt);
        let (t_hot, t_cold) = (self.cfg.t_hot, self.cfg.t_cold);
        let d = dt * self.cfg.alpha / (h * h);
        let t = &s.t;
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let tc = t[c];
                let uc = 0.5 * (s.u[j * (nx + 1) + i] + s.u[j * (nx + 1) + i + 1]);
                let vc = 0.5 * (s.v[j * nx + i] + s.v[(j + 1) * nx + i]);
                // Each neighbour is (value, weight); walls enter through
                // ghost cells: mirrored value for adiabatic sides, reflected
                // about the wall temperature for isothermal ones.
                let west = if i > 0 { (t[c - 1], 1.0) } else { (tc, 0.0) };
                let east = if i + 1 < nx { (t[c + 1], 1.0) } else { (tc, 0.0) };
                let south = if j > 0 { (t[c - nx], 1.0) } else { (t_hot, 2.0) };
                let north = if j + 1 < ny { (t[c + nx], 1.0) } else { (t_cold, 2.0) };
                let mut acc = tc;
                let mut coef = 0.0;
                let mut add = |(value, weight): (f64, f64), k: f64| {
                    acc += k * weight * (value - tc);
                    coef += k * weight;
                };
                let ax = dt * uc.abs() / h;
                let ay = dt * vc.abs() / h;
                add(west, d + if uc > 0.0 { ax } else { 0.0 });
                add(east, d + if uc < 0.0 { ax } else { 0.0 });
                add(south, d + if vc > 0.0 { ay } else { 0.0 });
                add(north, d + if vc < 0.0 { ay } else { 0.0 });
                out[c] = acc;
                *max_coef = max_coef.max(coef);
            }
        }
        out
    }
}

/// Integrates `cfg.n_steps` steps from the seeded initial state, recording
/// every `snapshot_stride`-th temperature field (the initial one included).
/// `observe` sees the state and diagnostics after every step.
pub fn run_trajectory_with(
    cfg: &SolverConfig,
    seed: u64,
    mut observe: impl FnMut(&FlowState, &StepStats),
) -> Result<Trajectory> {
    let solver = Solver::new(cfg.clone())?;
    let mut state = solver.initial_state(seed);
    let mut frames = vec![state.t.clone()];
    for k in 1..=cfg.n_steps {
        let stats = solver.step(&mut state)?;
        observe(&state, &stats);
        if k % cfg.snapshot_stride == 0 {
            frames.push(state.t.clone());
        }
    }
    let mesh = CavityMesh::new(cfg.aspect_ratio, cfg.cells_per_height, cfg.height)?;
    let params = cfg.physical_params(solver.dt() * cfg.snapshot_stride as f64);
    Trajectory::from_frames(mesh, params, frames)
}

pub fn run_trajectory(cfg: &SolverConfig, seed: u64) -> Result<Trajectory> {
    run_trajectory_with(cfg, seed, |_, _| {})
}

/// Runs independent jobs, possibly in parallel; results keep job order.
pub fn run_many(jobs: &[(SolverConfig, u64)], mode: ExecMode) -> Vec<Result<Trajectory>> {
    exec::map(mode, jobs, |(cfg, seed)| run_trajectory(cfg, *seed))
}

#[cfg(test)]
mod tests;
