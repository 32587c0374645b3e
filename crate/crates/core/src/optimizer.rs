//! Projected gradient descent on the reduced cost.
//!
//! The reduced cost of a design `a` is the compliance `<f, u(a)>` of its
//! state plus the penalty `∫_Ω Λ |a|^q`. Starting from the midpoint
//! design `a_0 = (a_min + a_max) / 2`, each step solves the state
//! equation, computes the per-element energies `g_T = B[χ_T](u, u)` in
//! one sweep, takes the explicit gradient step
//!
//! ```text
//!   a~_T = a_T + (tau / |T|) (g_T - q Λ a_T^(q-1) |T|)
//! ```
//!
//! and clamps element-wise to `[a_min, a_max]`. For `Λ ≡ 1/2`, `q = 2`
//! this is the convex combination `a~_T = (1-tau) a_T + (tau/|T|) g_T`.
//!
//! For fractional conductivity the per-pair quadrature data can be cached
//! once and reused across iterations (`CacheMode`); gradients are
//! otherwise recomputed each iteration in an assembly-like sweep with
//! O(#elements) memory.

use crate::assembly::PairCache;
use crate::error::Error;
use crate::forms::{
    assemble_load, assemble_mass, assemble_stiffness, element_gradient_values, DesignField,
    FormKind, SourceTerm, StateField,
};
use crate::mesh::{ElementRegion, Mesh};
use crate::quad::QuadConfig;
use crate::solver::{solve_spd, DEFAULT_SOLVER_TOL};
use crate::Result;
use std::time::Instant;

/// Pair-cache policy for the descent loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheMode {
    /// Cache when the estimated size fits the budget.
    Auto,
    On,
    Off,
}

/// Memory budget for `CacheMode::Auto`.
const AUTO_CACHE_BUDGET: usize = 1_600_000_000;

#[derive(Clone, Debug)]
pub struct PgdConfig {
    pub kind: FormKind,
    pub source: SourceTerm,
    pub bounds: (f64, f64),
    /// Step size in (0, 1].
    pub tau: f64,
    pub max_iterations: usize,
    /// Constant cost weight Λ.
    pub lambda: f64,
    /// Cost exponent q > 1.
    pub q: f64,
    pub solver_tol: f64,
    /// Optional early stop on relative cost decrease.
    pub stop_tol: Option<f64>,
    pub quad: QuadConfig,
    pub cache_mode: CacheMode,
}

impl PgdConfig {
    pub fn new(kind: FormKind, source: SourceTerm, bounds: (f64, f64)) -> Self {
        PgdConfig {
            kind,
            source,
            bounds,
            tau: 0.25,
            max_iterations: 20,
            lambda: 0.5,
            q: 2.0,
            solver_tol: DEFAULT_SOLVER_TOL,
            stop_tol: None,
            quad: QuadConfig::default(),
            cache_mode: CacheMode::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::param("step size tau must lie in (0, 1]"));
        }
        if !(self.q > 1.0) {
            return Err(Error::param("cost exponent q must exceed 1"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::param("cost weight must be positive"));
        }
        if !(self.bounds.0 > 0.0 && self.bounds.0 <= self.bounds.1) {
            return Err(Error::param("bounds must satisfy 0 < a_min <= a_max"));
        }
        if self.kind.is_vector() {
            return Err(Error::config(
                "the descent loop drives scalar conductivity states",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PgdResult {
    pub final_design: DesignField,
    pub final_state: StateField,
    /// Reduced cost at each iterate, `iterations_run + 1` entries.
    pub cost_history: Vec<f64>,
    pub gradient_sweep_time: f64,
    pub solve_time: f64,
    pub iterations_run: usize,
    /// One row per iterate: iter, reduced_cost, state_l2, design_l2,
    /// max_design, min_design.
    pub iteration_log: String,
}

/// Descent failure carrying the partial history.
#[derive(Debug)]
pub struct PgdFailure {
    pub error: Error,
    pub cost_history: Vec<f64>,
    pub iterations_run: usize,
}

impl From<PgdFailure> for Error {
    fn from(f: PgdFailure) -> Error {
        f.error
    }
}

/// Element-wise clamp to the box bounds; idempotent.
pub fn project_design(values: &[f64], bounds: (f64, f64)) -> Vec<f64> {
    values
        .iter()
        .map(|&v| v.min(bounds.1).max(bounds.0))
        .collect()
}

/// Reduced cost `r(a) = <f, u(a)> + ∫_Ω Λ |a|^q`.
pub fn reduced_cost(
    mesh: &Mesh,
    design: &DesignField,
    kind: FormKind,
    source: &SourceTerm,
    lambda: f64,
    q: f64,
    solver_tol: f64,
    quad: &QuadConfig,
) -> Result<f64> {
    let k = assemble_stiffness(mesh, design, kind, quad)?;
    let f = assemble_load(mesh, source)?;
    let u = solve_spd(&k, &f, solver_tol, 50 * k.n().max(100))?;
    let compliance: f64 = f.iter().zip(&u).map(|(a, b)| a * b).sum();
    Ok(compliance + design.penalty(mesh, lambda, q))
}

/// Gateaux derivative of the reduced cost in a piecewise-constant
/// direction `b`: `-Σ_T b_T g_T + Σ_T Λ q a_T^(q-1) b_T |T|` over the
/// design elements.
pub fn directional_derivative(
    mesh: &Mesh,
    design: &DesignField,
    direction: &[f64],
    kind: FormKind,
    source: &SourceTerm,
    lambda: f64,
    q: f64,
    solver_tol: f64,
    quad: &QuadConfig,
) -> Result<f64> {
    if direction.len() != mesh.n_elements() {
        return Err(Error::param("direction must have one value per element"));
    }
    let k = assemble_stiffness(mesh, design, kind, quad)?;
    let f = assemble_load(mesh, source)?;
    let uv = solve_spd(&k, &f, solver_tol, 50 * k.n().max(100))?;
    let u = StateField::from_values(mesh, 1, uv)?;
    let g = element_gradient_values(mesh, &u, kind, quad)?;
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        if mesh.element_region(e) != ElementRegion::Interior {
            continue;
        }
        let b = direction[e];
        if b == 0.0 {
            continue;
        }
        total += -b * g[e]
            + lambda * q * design.value(e).powf(q - 1.0) * b * mesh.element_measure(e);
    }
    Ok(total)
}

/// Runs the projected descent; on solver failure the partial cost history
/// is attached to the error.
pub fn run_pgd(mesh: &Mesh, config: &PgdConfig) -> std::result::Result<PgdResult, PgdFailure> {
    let fail_with =
        |error: Error, hist: &[f64]| PgdFailure {
            error,
            cost_history: hist.to_vec(),
            iterations_run: hist.len().saturating_sub(1),
        };
    let fail = |error: Error| fail_with(error, &[]);

    config.validate().map_err(fail)?;
    let (a_min, a_max) = config.bounds;
    let mut design =
        DesignField::uniform(mesh, 0.5 * (a_min + a_max), config.bounds).map_err(fail)?;
    let load = assemble_load(mesh, &config.source).map_err(fail)?;
    let mass = assemble_mass(mesh, 1);
    let measures: Vec<f64> = (0..mesh.n_elements()).map(|e| mesh.element_measure(e)).collect();

    let cache = match (config.cache_mode, config.kind) {
        (CacheMode::Off, _) => None,
        (_, FormKind::FractionalConductivity { s, r_horizon }) => {
            let want = match config.cache_mode {
                CacheMode::On => true,
                CacheMode::Auto => PairCache::estimated_bytes(mesh) <= AUTO_CACHE_BUDGET,
                CacheMode::Off => false,
            };
            if want {
                Some(PairCache::build(mesh, s, r_horizon, &config.quad).map_err(fail)?)
            } else {
                None
            }
        }
        (CacheMode::On, _) => {
            return Err(fail(Error::config(
                "pair cache applies to fractional conductivity only",
            )))
        }
        _ => None,
    };

    let mut cost_history: Vec<f64> = Vec::with_capacity(config.max_iterations + 1);
    let mut log = String::from("iter,reduced_cost,state_l2,design_l2,max_design,min_design\n");
    let mut solve_time = 0.0f64;
    let mut sweep_time = 0.0f64;
    let mut state = StateField::zeros(mesh, 1);

    let n_iter = config.max_iterations;
    for iter in 0..=n_iter {
        // Feasibility is an invariant of every iterate.
        debug_assert!(design
            .values()
            .iter()
            .all(|&v| v >= a_min - 1e-15 && v <= a_max + 1e-15));

        let t0 = Instant::now();
        let k = match &cache {
            Some(c) => c.assemble(&design),
            None => assemble_stiffness(mesh, &design, config.kind, &config.quad)
                .map_err(|e| fail_with(e, &cost_history))?,
        };
        let uv = solve_spd(&k, &load, config.solver_tol, 50 * k.n().max(100))
            .map_err(|e| fail_with(e, &cost_history))?;
        solve_time += t0.elapsed().as_secs_f64();
        state = StateField::from_values(mesh, 1, uv).map_err(|e| fail_with(e, &cost_history))?;

        let compliance: f64 = load.iter().zip(state.values()).map(|(a, b)| a * b).sum();
        let cost = compliance + design.penalty(mesh, config.lambda, config.q);
        cost_history.push(cost);

        let state_l2 = mass.quadratic_form(state.values()).max(0.0).sqrt();
        let design_l2 = design.l2_norm(mesh);
        let interior_vals: Vec<f64> = (0..mesh.n_elements())
            .filter(|&e| mesh.element_region(e) == ElementRegion::Interior)
            .map(|e| design.value(e))
            .collect();
        let dmax = interior_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dmin = interior_vals.iter().copied().fold(f64::INFINITY, f64::min);
        log.push_str(&format!(
            "{iter},{cost},{state_l2},{design_l2},{dmax},{dmin}\n"
        ));

        if let Some(st) = config.stop_tol {
            if cost_history.len() >= 2 {
                let prev = cost_history[cost_history.len() - 2];
                if (prev - cost) <= st * prev.abs() {
                    break;
                }
            }
        }
        if iter == n_iter {
            break;
        }

        let t1 = Instant::now();
        let g = match &cache {
            Some(c) => c.gradients(&state),
            None => element_gradient_values(mesh, &state, config.kind, &config.quad)
                .map_err(|e| fail_with(e, &cost_history))?,
        };
        sweep_time += t1.elapsed().as_secs_f64();

        let mut next: Vec<f64> = design.values().to_vec();
        for e in 0..mesh.n_elements() {
            if mesh.element_region(e) != ElementRegion::Interior {
                continue;
            }
            let a = design.value(e);
            let grad_step = g[e] - config.q * config.lambda * a.powf(config.q - 1.0) * measures[e];
            next[e] = a + config.tau / measures[e] * grad_step;
        }
        let projected = project_design(&next, config.bounds);
        design = design
            .with_interior_values(mesh, &projected)
            .map_err(|e| fail_with(e, &cost_history))?;
    }

    let iterations_run = cost_history.len() - 1;
    Ok(PgdResult {
        final_design: design,
        final_state: state,
        cost_history,
        gradient_sweep_time: sweep_time,
        solve_time,
        iterations_run,
        iteration_log: log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, extend_with_horizon};
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let b = (0.1, 2.0);
        assert_eq!(project_design(&[2.5], b), vec![2.0]);
        assert_eq!(project_design(&[1.0], b), vec![1.0]);
        assert_eq!(project_design(&[-3.0], b), vec![0.1]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let vals: Vec<f64> = (0..100).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let once = project_design(&vals, b);
        let twice = project_design(&once, b);
        assert_eq!(once, twice);
    }

    #[test]
    fn zero_direction_zero_derivative() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let design = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let d = directional_derivative(
            &mesh,
            &design,
            &vec![0.0; mesh.n_elements()],
            FormKind::LocalConductivity,
            &SourceTerm::Constant(1.0),
            0.5,
            2.0,
            1e-12,
            &QuadConfig::default(),
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn cost_with_zero_source_is_pure_penalty() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let design = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let r = reduced_cost(
            &mesh,
            &design,
            FormKind::LocalConductivity,
            &SourceTerm::Constant(0.0),
            0.5,
            2.0,
            1e-12,
            &QuadConfig::default(),
        )
        .unwrap();
        // r = 0 + Λ |Ω| a^2 = 0.5.
        assert!((r - 0.5).abs() < 1e-13);
    }

    #[test]
    fn zero_iterations_returns_midpoint_design() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let mut cfg = PgdConfig::new(
            FormKind::LocalConductivity,
            SourceTerm::Constant(1.0),
            (0.1, 2.0),
        );
        cfg.max_iterations = 0;
        let out = run_pgd(&mesh, &cfg).unwrap();
        assert_eq!(out.iterations_run, 0);
        assert_eq!(out.cost_history.len(), 1);
        for e in 0..mesh.n_elements() {
            assert!((out.final_design.value(e) - 1.05).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_point_of_the_update_is_stationary() {
        // If g_T = q Λ a_T^(q-1) |T| for every element, the update leaves
        // the (interior) design unchanged. Manufacture this by taking one
        // step from the state where it holds: update arithmetic only.
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let (lambda, q, tau) = (0.5, 2.0, 0.25);
        let a = 1.3f64;
        let meas = 0.25;
        let g = q * lambda * a.powf(q - 1.0) * meas;
        let next = a + tau / meas * (g - q * lambda * a.powf(q - 1.0) * meas);
        assert!((next - a).abs() < 1e-14);
        let _ = mesh;
    }

    #[test]
    fn descent_on_small_fractional_problem() {
        let base = build_interval_mesh(0.0, 1.0, 16).unwrap();
        let mesh = extend_with_horizon(&base, 0.2).unwrap();
        let mut cfg = PgdConfig::new(
            FormKind::FractionalConductivity { s: 0.5, r_horizon: 0.2 },
            SourceTerm::Constant(1.0),
            (0.1, 2.0),
        );
        cfg.max_iterations = 12;
        let out = run_pgd(&mesh, &cfg).unwrap();
        assert_eq!(out.cost_history.len(), 13);
        for w in out.cost_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "cost increased: {} -> {}", w[0], w[1]);
        }
        let (lo, hi) = cfg.bounds;
        for e in 0..mesh.n_elements() {
            let v = out.final_design.value(e);
            assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
        }
    }

    #[test]
    fn cache_and_sweep_descents_agree() {
        let base = build_interval_mesh(0.0, 1.0, 12).unwrap();
        let mesh = extend_with_horizon(&base, 0.25).unwrap();
        let mut cfg = PgdConfig::new(
            FormKind::FractionalConductivity { s: 0.4, r_horizon: 0.25 },
            SourceTerm::Constant(1.0),
            (0.1, 2.0),
        );
        cfg.max_iterations = 5;
        cfg.cache_mode = CacheMode::On;
        let with_cache = run_pgd(&mesh, &cfg).unwrap();
        cfg.cache_mode = CacheMode::Off;
        let without = run_pgd(&mesh, &cfg).unwrap();
        for (a, b) in with_cache.cost_history.iter().zip(&without.cost_history) {
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }
}
