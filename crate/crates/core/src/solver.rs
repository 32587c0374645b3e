//! SPD state solves and the discrete design-to-state map.

use crate::error::Error;
use crate::forms::{assemble_load, assemble_stiffness, DesignField, FormKind, SourceTerm, StateField};
use crate::linalg::{cholesky_solve, pcg_solve, SymSparseMatrix};
use crate::mesh::Mesh;
use crate::quad::QuadConfig;
use crate::Result;

/// Direct Cholesky below this size, conjugate gradients above.
const DIRECT_LIMIT: usize = 2000;

/// Default relative residual for state solves.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

/// Solves `K u = F` for symmetric positive definite `K`.
pub fn solve_spd(k: &SymSparseMatrix, f: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if k.n() != f.len() {
        return Err(Error::param("system and right-hand side sizes differ"));
    }
    if k.n() < DIRECT_LIMIT {
        cholesky_solve(k, f)
    } else {
        pcg_solve(k, f, tol, max_iter)
    }
}

/// The discrete design-to-state map: solves `B[a](u, v) = <f, v>` for all
/// discrete test functions and checks the Galerkin energy identity.
pub fn design_to_state(
    mesh: &Mesh,
    design: &DesignField,
    kind: FormKind,
    source: &SourceTerm,
    tol: f64,
    quad: &QuadConfig,
) -> Result<StateField> {
    let k = assemble_stiffness(mesh, design, kind, quad)?;
    let f = assemble_load(mesh, source)?;
    if kind.is_vector() {
        return Err(Error::config(
            "design_to_state with scalar sources supports scalar forms only",
        ));
    }
    let u = solve_spd(&k, &f, tol, 50 * k.n().max(100))?;
    // Energy identity B[a](u,u) = <f,u> up to the solver tolerance.
    let energy = k.quadratic_form(&u);
    let work: f64 = f.iter().zip(&u).map(|(a, b)| a * b).sum();
    if work != 0.0 && ((energy - work) / work).abs() > 1e-6 {
        return Err(Error::NumericalIntegrity(format!(
            "energy identity violated: B(u,u) = {energy:.6e}, <f,u> = {work:.6e}"
        )));
    }
    StateField::from_values(mesh, 1, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymSparseMatrix;
    use crate::mesh::build_interval_mesh;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn identity_system() {
        let k = SymSparseMatrix::from_triplets(4, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)]);
        let f = vec![3.0, -1.0, 0.5, 2.0];
        let u = solve_spd(&k, &f, 1e-12, 100).unwrap();
        for (a, b) in u.iter().zip(&f) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn local_poisson_interpolates_exact_solution() {
        // -u'' = 1 on (0,1): u(x) = x(1-x)/2; P1 Galerkin is nodally exact.
        let mesh = build_interval_mesh(0.0, 1.0, 16).unwrap();
        let design = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let u = design_to_state(
            &mesh,
            &design,
            FormKind::LocalConductivity,
            &SourceTerm::Constant(1.0),
            1e-12,
            &QuadConfig::default(),
        )
        .unwrap();
        for v in 0..mesh.n_vertices() {
            if mesh.is_interior_vertex(v) {
                let x = mesh.vertex(v)[0];
                let exact = 0.5 * x * (1.0 - x);
                assert!((u.vertex_value(&mesh, v, 0) - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn random_spd_system_residual() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 50;
        // A^T A + I is SPD.
        let a: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let mut v: f64 = a.iter().map(|row| row[i] * row[j]).sum();
                if i == j {
                    v += 1.0;
                }
                trip.push((i, j, v));
            }
        }
        let k = SymSparseMatrix::from_triplets(n, &trip);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = solve_spd(&k, &f, 1e-12, 10_000).unwrap();
        let mut r = vec![0.0; n];
        k.matvec(&u, &mut r);
        let res: f64 = r
            .iter()
            .zip(&f)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let fn2: f64 = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * fn2);
    }

    #[test]
    fn zero_source_gives_zero_state() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let design = DesignField::uniform(&mesh, 1.3, (0.1, 2.0)).unwrap();
        let u = design_to_state(
            &mesh,
            &design,
            FormKind::LocalConductivity,
            &SourceTerm::Constant(0.0),
            1e-12,
            &QuadConfig::default(),
        )
        .unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_design_scaling_halves_state() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let quad = QuadConfig::default();
        let a = DesignField::uniform(&mesh, 0.8, (0.1, 2.0)).unwrap();
        let a2 = DesignField::uniform(&mesh, 1.6, (0.1, 2.0)).unwrap();
        let f = SourceTerm::Constant(1.0);
        let u = design_to_state(&mesh, &a, FormKind::LocalConductivity, &f, 1e-12, &quad).unwrap();
        let u2 = design_to_state(&mesh, &a2, FormKind::LocalConductivity, &f, 1e-12, &quad).unwrap();
        for (x, y) in u.values().iter().zip(u2.values()) {
            assert!((x - 2.0 * y).abs() < 1e-10);
        }
    }

    #[test]
    fn monotone_compliance_in_coefficient() {
        // Larger conductivity -> smaller compliance for f >= 0.
        let mesh = build_interval_mesh(0.0, 1.0, 16).unwrap();
        let quad = QuadConfig::default();
        let f = SourceTerm::Constant(1.0);
        let load = assemble_load(&mesh, &f).unwrap();
        let mut prev = f64::INFINITY;
        for val in [0.2, 0.5, 1.0, 2.0] {
            let a = DesignField::uniform(&mesh, val, (0.1, 2.0)).unwrap();
            let u = design_to_state(&mesh, &a, FormKind::LocalConductivity, &f, 1e-12, &quad).unwrap();
            let compliance: f64 = load.iter().zip(u.values()).map(|(x, y)| x * y).sum();
            assert!(compliance < prev);
            prev = compliance;
        }
    }
}
