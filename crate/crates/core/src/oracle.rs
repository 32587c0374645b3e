//! Independent reference computations validating the fast paths.
//!
//! The dense 1D assembly here shares no code with the production
//! quadrature: the inner integral against the kernel is evaluated in
//! closed form (the integrand is a quadratic polynomial times a power of
//! the distance), and the outer integral by adaptive bisection with
//! Gauss panels whose nodes come from Newton iteration on the Legendre
//! recurrence rather than the Golub-Welsch path used by the fast rules.
//!
//! The limit probes drive the production assembly towards its two known
//! limits: the gradient energy as `s` tends to one, and the lower bound
//! of the projected-difference (peridynamic) energy by the scalar
//! fractional energy.

use crate::error::Error;
use crate::forms::{
    element_gradient_values, gamma_constant, DesignField, FormKind, StateField,
};
use crate::mesh::{ElementRegion, Mesh};
use crate::quad::QuadConfig;
use crate::Result;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;

/// Integrates over `[a, b]` by tanh-sinh (double-exponential)
/// quadrature with level doubling until two consecutive levels agree to
/// the tolerance. Handles integrable algebraic singularities at the
/// interval endpoints, which is exactly the structure of the outer
/// integrals here (the closed-form inner integral is smooth inside each
/// element and singular only where elements touch).
///
/// Abscissas closer to an endpoint than f64 resolution are dropped, so
/// integrands with an endpoint singularity `t^alpha` carry a relative
/// truncation floor of about `exp(-37 (1 + alpha))`; for the kernel
/// exponents used here that is below 1e-8, two orders under what the
/// oracle comparisons require. Errors out when the level budget is
/// exhausted.
pub fn adaptive_integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    use std::f64::consts::FRAC_PI_2;
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let tmax = 6.5;
    let mut prev = f64::NAN;
    for level in 0..=12 {
        let h = 2f64.powi(-level);
        let n = (tmax / h).ceil() as i64;
        let mut sum = 0.0;
        for j in -n..=n {
            let t = j as f64 * h;
            let s = FRAC_PI_2 * t.sinh();
            let x = s.tanh();
            let w = FRAC_PI_2 * t.cosh() / s.cosh().powi(2);
            if !w.is_finite() || w == 0.0 {
                continue;
            }
            let phys = c + hw * x;
            // Contributions this close to the endpoints carry weights
            // below roundoff; skipping them guards singular evaluations.
            if phys <= a || phys >= b {
                continue;
            }
            sum += w * f(phys);
        }
        let val = sum * h * hw;
        if level >= 3 && (val - prev).abs() <= tol.max(4.0 * f64::EPSILON * val.abs()) {
            return Ok(val);
        }
        prev = val;
    }
    Err(Error::Oracle(
        "tanh-sinh quadrature level budget exhausted".into(),
    ))
}

/// Primitive of `t^(k - beta)` on t > 0; `t = 0` is only reached by terms
/// with positive exponent, which vanish there.
fn power_primitive(k: usize, beta: f64, t: f64) -> f64 {
    let e = k as f64 + 1.0 - beta;
    if t == 0.0 {
        return 0.0;
    }
    if e == 0.0 {
        t.ln()
    } else {
        t.powf(e) / e
    }
}

/// ∫ (c0 + c1 u + c2 u^2) |u|^(-beta) du over [ua, ub] with 0 outside or
/// at the boundary of the interval, or c0 = c1 = 0 when 0 is inside.
fn kernel_moment(c: [f64; 3], beta: f64, ua: f64, ub: f64) -> f64 {
    debug_assert!(ua <= ub);
    let pos = |c: [f64; 3], lo: f64, hi: f64| -> f64 {
        // interval in u >= 0
        let mut v = 0.0;
        for (k, &ck) in c.iter().enumerate() {
            if ck != 0.0 {
                v += ck * (power_primitive(k, beta, hi) - power_primitive(k, beta, lo));
            }
        }
        v
    };
    if ua >= 0.0 {
        pos(c, ua, ub)
    } else if ub <= 0.0 {
        // substitute t = -u
        pos([c[0], -c[1], c[2]], -ub, -ua)
    } else {
        pos([c[0], -c[1], c[2]], 0.0, -ua) + pos(c, 0.0, ub)
    }
}

/// Dense matrix of the 1D fractional conductivity form by adaptive
/// quadrature with the singular inner integral in closed form.
pub fn dense_fractional_assembly_1d(
    mesh: &Mesh,
    design: &DesignField,
    s: f64,
    r_horizon: f64,
    tol: f64,
) -> Result<DMatrix<f64>> {
    if mesh.dimension() != 1 {
        return Err(Error::param("dense oracle assembly is 1D only"));
    }
    let n_interior_elems = (0..mesh.n_elements())
        .filter(|&e| mesh.element_region(e) == ElementRegion::Interior)
        .count();
    if n_interior_elems > 64 {
        return Err(Error::param("dense oracle assembly supports up to 64 elements"));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::param("fractional order out of range"));
    }
    if mesh.horizon_width() + 1e-12 < r_horizon {
        return Err(Error::config("mesh horizon narrower than requested"));
    }
    let beta = 1.0 + 2.0 * s;
    let gamma = gamma_constant(s, 1, 2)?;
    let n = mesh.n_interior_vertices();
    let mut k = DMatrix::zeros(n, n);

    // Element data: (x_left, x_right, vertex ids ordered left-right).
    let elem: Vec<([f64; 2], [usize; 2])> = (0..mesh.n_elements())
        .map(|e| {
            let el = mesh.element(e);
            let (v0, v1) = (el[0], el[1]);
            let (x0, x1) = (mesh.vertex(v0)[0], mesh.vertex(v1)[0]);
            if x0 <= x1 {
                ([x0, x1], [v0, v1])
            } else {
                ([x1, x0], [v1, v0])
            }
        })
        .collect();

    // Hat function of vertex v restricted to element e: affine a + b y.
    let hat_on = |v: usize, e: usize| -> Option<(f64, f64)> {
        let ([x0, x1], [l, r]) = elem[e];
        let h = x1 - x0;
        if v == l {
            Some((x1 / h, -1.0 / h))
        } else if v == r {
            Some((-x0 / h, 1.0 / h))
        } else {
            None
        }
    };

    for t1 in 0..mesh.n_elements() {
        for t2 in t1..mesh.n_elements() {
            let int1 = mesh.element_region(t1) == ElementRegion::Interior;
            let int2 = mesh.element_region(t2) == ElementRegion::Interior;
            if !(int1 || int2) {
                continue;
            }
            let mult = if t1 == t2 { 1.0 } else { 2.0 };
            let coeff = 0.5 * (design.value(t1) + design.value(t2));
            let scale = gamma * mult * coeff;
            // Slots: distinct vertices carrying a DOF.
            let mut slots: Vec<usize> = Vec::with_capacity(4);
            for &v in elem[t1].1.iter().chain(elem[t2].1.iter()) {
                if mesh.dof_of_vertex(v) >= 0 && !slots.contains(&v) {
                    slots.push(v);
                }
            }
            let ([p0, p1], _) = elem[t1];
            let ([q0, q1], _) = elem[t2];
            for (si, &vi) in slots.iter().enumerate() {
                for &vj in slots.iter().skip(si) {
                    let (a_i2, b_i2) = hat_on(vi, t2).unwrap_or((0.0, 0.0));
                    let (a_j2, b_j2) = hat_on(vj, t2).unwrap_or((0.0, 0.0));
                    let identical = t1 == t2;
                    let inner = |x: f64| -> f64 {
                        // psi(u) = r - b u with u = y - x.
                        let phi_i1 = match hat_on(vi, t1) {
                            Some((a, b)) => a + b * x,
                            None => 0.0,
                        };
                        let phi_j1 = match hat_on(vj, t1) {
                            Some((a, b)) => a + b * x,
                            None => 0.0,
                        };
                        let (ri, rj) = if identical {
                            // Exact cancellation of the constant part.
                            (0.0, 0.0)
                        } else {
                            (phi_i1 - a_i2 - b_i2 * x, phi_j1 - a_j2 - b_j2 * x)
                        };
                        let c = [
                            ri * rj,
                            -(ri * b_j2 + rj * b_i2),
                            b_i2 * b_j2,
                        ];
                        kernel_moment(c, beta, q0 - x, q1 - x)
                    };
                    let rough = inner(0.5 * (p0 + p1)).abs() * (p1 - p0);
                    let tol_pair = (tol * rough).max(1e-14);
                    let value = adaptive_integrate(inner, p0, p1, tol_pair)?;
                    let di = mesh.dof_of_vertex(vi) as usize;
                    let dj = mesh.dof_of_vertex(vj) as usize;
                    k[(di, dj)] += scale * value;
                    if di != dj {
                        k[(dj, di)] += scale * value;
                    }
                }
            }
        }
    }
    Ok(k)
}

/// Fractional energies of a fixed function along an `s` ladder together
/// with its local Dirichlet energy; the normalization makes the gap
/// shrink as `s` approaches one.
pub struct BbmProbe {
    /// (s, fractional energy with unit coefficient).
    pub rungs: Vec<(f64, f64)>,
    /// `‖∇v‖^2` (or the local elasticity energy in the vector case).
    pub local_energy: f64,
}

impl BbmProbe {
    pub fn gaps(&self) -> Vec<f64> {
        self.rungs
            .iter()
            .map(|&(_, e)| (e - self.local_energy).abs())
            .collect()
    }

    /// The final rung must achieve the smallest gap of the ladder.
    pub fn final_gap_is_minimal(&self) -> bool {
        let gaps = self.gaps();
        match gaps.split_last() {
            Some((last, rest)) => rest.iter().all(|g| last <= g),
            None => false,
        }
    }
}

pub fn bbm_limit_probe(
    mesh: &Mesh,
    v: &StateField,
    s_ladder: &[f64],
    quad: &QuadConfig,
) -> Result<BbmProbe> {
    let r = mesh.horizon_width();
    if r <= 0.0 {
        return Err(Error::config("BBM probe needs a mesh with a horizon layer"));
    }
    let mut rungs = Vec::with_capacity(s_ladder.len());
    for &s in s_ladder {
        let kind = FormKind::FractionalConductivity { s, r_horizon: r };
        let g = element_gradient_values(mesh, v, kind, quad)?;
        rungs.push((s, g.iter().sum::<f64>()));
    }
    let g_local = element_gradient_values(mesh, v, FormKind::LocalConductivity, quad)?;
    Ok(BbmProbe {
        rungs,
        local_energy: g_local.iter().sum(),
    })
}

/// Minimum over random states of the ratio of the peridynamic energy to
/// the componentwise scalar fractional energy, per ladder rung. A
/// uniformly positive ratio is the numerical shadow of the fractional
/// Korn inequality.
pub fn korn_probe(
    mesh: &Mesh,
    s_ladder: &[f64],
    quad: &QuadConfig,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if mesh.dimension() != 2 {
        return Err(Error::param("Korn probe runs on 2D meshes"));
    }
    let r = mesh.horizon_width();
    if r <= 0.0 {
        return Err(Error::config("Korn probe needs a mesh with a horizon layer"));
    }
    let n = mesh.n_interior_vertices();
    let design = DesignField::uniform(mesh, 1.0, (1.0, 1.0))?;
    let mut out = Vec::with_capacity(s_ladder.len());
    for &s in s_ladder {
        let k_pd = crate::forms::assemble_stiffness(
            mesh,
            &design,
            FormKind::FractionalPeridynamic { s, r_horizon: r },
            quad,
        )?;
        let k_sc = crate::forms::assemble_stiffness(
            mesh,
            &design,
            FormKind::FractionalConductivity { s, r_horizon: r },
            quad,
        )?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut min_ratio = f64::INFINITY;
        for _ in 0..n_samples {
            let v: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let num = k_pd.quadratic_form(&v);
            let vx: Vec<f64> = (0..n).map(|i| v[2 * i]).collect();
            let vy: Vec<f64> = (0..n).map(|i| v[2 * i + 1]).collect();
            let den = k_sc.quadratic_form(&vx) + k_sc.quadratic_form(&vy);
            if den > 0.0 {
                min_ratio = min_ratio.min(num / den);
            }
        }
        out.push((s, min_ratio));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, extend_with_horizon};

    #[test]
    fn adaptive_integrates_algebraic_singularity() {
        // ∫_0^1 x^(-1/2) dx = 2, endpoint singularity.
        let v = adaptive_integrate(|x| x.sqrt().recip(), 0.0, 1.0, 1e-11).unwrap();
        assert!((v - 2.0).abs() < 3e-8, "{v}");
        // ∫_0^1 x^0.2 (1-x)^(-0.3) dx = B(1.2, 0.7), both endpoints hard.
        let v = adaptive_integrate(|x| x.powf(0.2) * (1.0 - x).powf(-0.3), 0.0, 1.0, 1e-11)
            .unwrap();
        let exact = 1.2392141546333057; // Beta(1.2, 0.7)
        assert!((v - exact).abs() < 1e-8, "{v}");
        // Smooth case to machine-ish precision.
        let v = adaptive_integrate(|x| (3.0 * x).sin(), 0.0, 2.0, 1e-13).unwrap();
        let exact = (1.0 - (6.0f64).cos()) / 3.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn kernel_moment_matches_closed_forms() {
        // ∫_0^1 u^2 u^(-beta) du = 1/(3-beta).
        let beta = 1.8;
        let v = kernel_moment([0.0, 0.0, 1.0], beta, 0.0, 1.0);
        assert!((v - 1.0 / (3.0 - beta)).abs() < 1e-14);
        // Log branch at beta = 2, k = 1: ∫_a^b u^(-1) du.
        let v = kernel_moment([0.0, 1.0, 0.0], 2.0, 0.5, 2.0);
        assert!((v - 4.0f64.ln()).abs() < 1e-14);
        // Symmetric interval, even integrand.
        let v = kernel_moment([0.0, 0.0, 1.0], 1.5, -1.0, 1.0);
        assert!((v - 2.0 / 1.5).abs() < 1e-14);
    }

    #[test]
    fn oracle_two_element_identity() {
        // Two elements on (0,1), coefficient c: matrix is c times the
        // unit-coefficient matrix.
        let base = build_interval_mesh(0.0, 1.0, 2).unwrap();
        let mesh = extend_with_horizon(&base, 1.0).unwrap();
        let unit = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let half = DesignField::uniform(&mesh, 0.5, (0.1, 2.0)).unwrap();
        let k1 = dense_fractional_assembly_1d(&mesh, &unit, 0.5, 1.0, 1e-10).unwrap();
        let k2 = dense_fractional_assembly_1d(&mesh, &half, 0.5, 1.0, 1e-10).unwrap();
        assert_eq!(k1.nrows(), 1);
        assert!(k1[(0, 0)] > 0.0);
        assert!((k2[(0, 0)] - 0.5 * k1[(0, 0)]).abs() < 1e-9 * k1[(0, 0)]);
    }

    #[test]
    fn oracle_matrix_is_symmetric_positive_definite() {
        let base = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let mesh = extend_with_horizon(&base, 0.5).unwrap();
        let design = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let k = dense_fractional_assembly_1d(&mesh, &design, 0.6, 0.5, 1e-9).unwrap();
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                assert!((k[(i, j)] - k[(j, i)]).abs() <= 1e-12 * k[(i, i)].abs());
            }
        }
        assert!(k.clone().cholesky().is_some(), "oracle matrix not SPD");
        // Centro-symmetry on the symmetric mesh with symmetric design.
        let n = k.nrows();
        for i in 0..n {
            for j in 0..n {
                let m = (k[(i, j)] - k[(n - 1 - i, n - 1 - j)]).abs();
                assert!(m <= 1e-8 * k[(i, i)].abs());
            }
        }
    }

    #[test]
    fn probes_run_on_tiny_meshes() {
        let base = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let mesh = extend_with_horizon(&base, 1.0).unwrap();
        let n = mesh.n_interior_vertices();
        let hat = StateField::from_values(
            &mesh,
            1,
            (0..n).map(|i| if i == n / 2 { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        let probe =
            bbm_limit_probe(&mesh, &hat, &[0.5, 0.9], &QuadConfig::default()).unwrap();
        assert_eq!(probe.rungs.len(), 2);
        assert!(probe.local_energy > 0.0);
        for &(_, e) in &probe.rungs {
            assert!(e.is_finite() && e > 0.0);
        }
        // Zero function: all energies vanish.
        let zero = StateField::zeros(&mesh, 1);
        let probe = bbm_limit_probe(&mesh, &zero, &[0.5], &QuadConfig::default()).unwrap();
        assert_eq!(probe.rungs[0].1, 0.0);
        assert_eq!(probe.local_energy, 0.0);
        // Quadratic scaling.
        let two = StateField::from_values(&mesh, 1, hat.values().iter().map(|v| 2.0 * v).collect())
            .unwrap();
        let probe2 = bbm_limit_probe(&mesh, &two, &[0.5], &QuadConfig::default()).unwrap();
        let probe1 = bbm_limit_probe(&mesh, &hat, &[0.5], &QuadConfig::default()).unwrap();
        assert!((probe2.rungs[0].1 - 4.0 * probe1.rungs[0].1).abs() < 1e-10 * probe2.rungs[0].1);
    }
}
