//! Bilinear forms, design and state fields, loads, norms.
//!
//! Four operators are supported: fractional and local conductivity
//! (scalar states) and fractional peridynamic and local elasticity
//! (vector states). The fractional forms integrate the kernel
//! `|x - y|^(-n-2s)` over all element pairs with at least one element in
//! the design domain; the horizon enters only through the meshed layer,
//! never as a kernel cutoff. The coefficient enters through the
//! symmetrized pair value `A(x, y) = (a(x) + a(y)) / 2`.

use crate::assembly;
use crate::error::Error;
use crate::linalg::SymSparseMatrix;
use crate::mesh::{ElementRegion, Mesh};
use crate::quad::{gauss_simplex, QuadConfig};
use crate::Result;
use std::f64::consts::PI;

/// The bilinear form defining a state equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FormKind {
    FractionalConductivity { s: f64, r_horizon: f64 },
    LocalConductivity,
    FractionalPeridynamic { s: f64, r_horizon: f64 },
    LocalElasticity,
}

impl FormKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FormKind::FractionalConductivity { s, r_horizon }
            | FormKind::FractionalPeridynamic { s, r_horizon } => {
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::param(format!("fractional order s = {s} not in (0,1)")));
                }
                if !(r_horizon > 0.0) {
                    return Err(Error::param("fractional forms need a positive horizon"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn is_fractional(&self) -> bool {
        matches!(
            self,
            FormKind::FractionalConductivity { .. } | FormKind::FractionalPeridynamic { .. }
        )
    }

    pub fn is_vector(&self) -> bool {
        matches!(
            self,
            FormKind::FractionalPeridynamic { .. } | FormKind::LocalElasticity
        )
    }

    /// Components of the state per vertex.
    pub fn n_components(&self, dimension: usize) -> usize {
        if self.is_vector() {
            dimension
        } else {
            1
        }
    }

    pub fn fractional_params(&self) -> Option<(f64, f64)> {
        match *self {
            FormKind::FractionalConductivity { s, r_horizon }
            | FormKind::FractionalPeridynamic { s, r_horizon } => Some((s, r_horizon)),
            _ => None,
        }
    }

    /// The same operator with unit coefficient semantics (used for
    /// seminorms); identical kind, provided for readability at call sites.
    pub fn s_value(&self) -> f64 {
        match self.fractional_params() {
            Some((s, _)) => s,
            None => 1.0,
        }
    }
}

/// Normalization constant of the fractional seminorm,
/// `gamma = p (1 - s) / ∫_{S^{n-1}} |w_1|^p dσ`, chosen so that the
/// seminorm converges to the gradient norm as `s` tends to one.
/// For `p = 2` the angular integral is 2 in 1D and pi in 2D.
pub fn gamma_constant(s: f64, n: usize, p: usize) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::param(format!("gamma constant: s = {s} not in (0,1)")));
    }
    if p != 2 {
        return Err(Error::param("gamma constant: only p = 2 is supported"));
    }
    let angular = match n {
        1 => 2.0,
        2 => PI,
        _ => return Err(Error::param("gamma constant: n must be 1 or 2")),
    };
    Ok(p as f64 * (1.0 - s) / angular)
}

/// Piecewise-constant design coefficient with box bounds. Values are
/// stored for every element; horizon-layer elements carry the fixed
/// exterior value.
#[derive(Clone, Debug)]
pub struct DesignField {
    values: Vec<f64>,
    exterior_value: f64,
    bounds: (f64, f64),
}

impl DesignField {
    /// Constant design `a ≡ value` (including the exterior).
    pub fn uniform(mesh: &Mesh, value: f64, bounds: (f64, f64)) -> Result<Self> {
        Self::check_bounds(bounds)?;
        if !(value >= bounds.0 && value <= bounds.1) {
            return Err(Error::param("design value outside bounds"));
        }
        Ok(DesignField {
            values: vec![value; mesh.n_elements()],
            exterior_value: value,
            bounds,
        })
    }

    /// Per-element values on Interior elements; the exterior value is used
    /// for every horizon element.
    pub fn from_values(
        mesh: &Mesh,
        values: Vec<f64>,
        exterior_value: f64,
        bounds: (f64, f64),
    ) -> Result<Self> {
        Self::check_bounds(bounds)?;
        if values.len() != mesh.n_elements() {
            return Err(Error::param("design value count must match element count"));
        }
        if !(exterior_value >= bounds.0 && exterior_value <= bounds.1) {
            return Err(Error::param("exterior design value outside bounds"));
        }
        let mut v = values;
        for e in 0..mesh.n_elements() {
            if mesh.element_region(e) == ElementRegion::HorizonLayer {
                v[e] = exterior_value;
            } else if !(v[e] >= bounds.0 && v[e] <= bounds.1) {
                return Err(Error::param(format!(
                    "design value {} on element {e} violates bounds",
                    v[e]
                )));
            }
        }
        Ok(DesignField {
            values: v,
            exterior_value,
            bounds,
        })
    }

    fn check_bounds(bounds: (f64, f64)) -> Result<()> {
        if !(bounds.0 > 0.0 && bounds.0 <= bounds.1) {
            return Err(Error::param("design bounds must satisfy 0 < a_min <= a_max"));
        }
        Ok(())
    }

    pub fn value(&self, element: usize) -> f64 {
        self.values[element]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exterior_value(&self) -> f64 {
        self.exterior_value
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Replaces interior values (used by the optimizer after projection).
    pub fn with_interior_values(&self, mesh: &Mesh, interior: &[f64]) -> Result<Self> {
        Self::from_values(mesh, interior.to_vec(), self.exterior_value, self.bounds)
    }

    /// `‖a‖_{L^2(Ω)}`: the design norm over Interior elements only.
    pub fn l2_norm(&self, mesh: &Mesh) -> f64 {
        let mut total = 0.0;
        for e in 0..mesh.n_elements() {
            if mesh.element_region(e) == ElementRegion::Interior {
                total += self.values[e] * self.values[e] * mesh.element_measure(e);
            }
        }
        total.sqrt()
    }

    /// `∫_Ω Λ |a|^q` for constant Λ.
    pub fn penalty(&self, mesh: &Mesh, lambda: f64, q: f64) -> f64 {
        let mut total = 0.0;
        for e in 0..mesh.n_elements() {
            if mesh.element_region(e) == ElementRegion::Interior {
                total += lambda * self.values[e].powf(q) * mesh.element_measure(e);
            }
        }
        total
    }
}

/// P1 finite-element function on the interior DOFs, extended by zero to
/// the rest of the mesh. Vector states store components interleaved:
/// DOF index `n_components * dof + component`.
#[derive(Clone, Debug)]
pub struct StateField {
    n_components: usize,
    values: Vec<f64>,
}

impl StateField {
    pub fn zeros(mesh: &Mesh, n_components: usize) -> Self {
        StateField {
            n_components,
            values: vec![0.0; mesh.n_interior_vertices() * n_components],
        }
    }

    pub fn from_values(mesh: &Mesh, n_components: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_interior_vertices() * n_components {
            return Err(Error::param("state DOF count mismatch"));
        }
        Ok(StateField {
            n_components,
            values,
        })
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value of one component at a vertex (0 on non-interior vertices).
    pub fn vertex_value(&self, mesh: &Mesh, vertex: usize, component: usize) -> f64 {
        let dof = mesh.dof_of_vertex(vertex);
        if dof < 0 {
            0.0
        } else {
            self.values[self.n_components * dof as usize + component]
        }
    }

    /// Evaluates one component at a physical point by locating the
    /// containing Interior element; returns 0 outside the design domain.
    pub fn evaluate(&self, mesh: &Mesh, point: [f64; 2], component: usize) -> f64 {
        let tol = -1e-9;
        for e in 0..mesh.n_elements() {
            if mesh.element_region(e) != ElementRegion::Interior {
                continue;
            }
            let el = mesh.element(e);
            if mesh.dimension() == 1 {
                let x0 = mesh.vertex(el[0])[0];
                let x1 = mesh.vertex(el[1])[0];
                let h = x1 - x0;
                let t = (point[0] - x0) / h;
                if t >= tol && t <= 1.0 - tol {
                    return (1.0 - t) * self.vertex_value(mesh, el[0], component)
                        + t * self.vertex_value(mesh, el[1], component);
                }
            } else {
                let a = mesh.vertex(el[0]);
                let b = mesh.vertex(el[1]);
                let c = mesh.vertex(el[2]);
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                let l1 = ((point[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (point[1] - a[1]))
                    / det;
                let l2 = ((b[0] - a[0]) * (point[1] - a[1]) - (point[0] - a[0]) * (b[1] - a[1]))
                    / det;
                let l0 = 1.0 - l1 - l2;
                if l0 >= tol && l1 >= tol && l2 >= tol {
                    return l0 * self.vertex_value(mesh, el[0], component)
                        + l1 * self.vertex_value(mesh, el[1], component)
                        + l2 * self.vertex_value(mesh, el[2], component);
                }
            }
        }
        0.0
    }

    /// `‖u‖_{L^2(Ω)}` via the consistent mass matrix.
    pub fn l2_norm(&self, mesh: &Mesh) -> f64 {
        let m = assemble_mass(mesh, self.n_components);
        m.quadratic_form(&self.values).max(0.0).sqrt()
    }
}

/// Supported source terms for the state equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceTerm {
    /// `f ≡ c`.
    Constant(f64),
    /// `f = c χ_{B_radius(center)}`.
    BallIndicator {
        coefficient: f64,
        radius: f64,
        center: [f64; 2],
    },
}

/// Load vector `F_i = ∫_Ω f φ_i` over the interior DOFs (scalar states).
/// Ball indicators are integrated with an order-10 rule on cut elements.
pub fn assemble_load(mesh: &Mesh, source: &SourceTerm) -> Result<Vec<f64>> {
    let n = mesh.n_interior_vertices();
    let mut f = vec![0.0; n];
    let nv = mesh.dimension() + 1;
    let cut_rule = gauss_simplex(mesh.dimension(), 10)?;
    for e in 0..mesh.n_elements() {
        if mesh.element_region(e) != ElementRegion::Interior {
            continue;
        }
        let el = mesh.element(e);
        let meas = mesh.element_measure(e);
        match *source {
            SourceTerm::Constant(c) => {
                for &v in el {
                    let dof = mesh.dof_of_vertex(v);
                    if dof >= 0 {
                        f[dof as usize] += c * meas / nv as f64;
                    }
                }
            }
            SourceTerm::BallIndicator {
                coefficient,
                radius,
                center,
            } => {
                let inside = |p: [f64; 2]| {
                    let dx = p[0] - center[0];
                    let dy = p[1] - center[1];
                    dx * dx + dy * dy <= radius * radius
                };
                let all_in = el.iter().all(|&v| inside(mesh.vertex(v)));
                if all_in {
                    // Elements are convex, so they lie inside the ball.
                    for &v in el {
                        let dof = mesh.dof_of_vertex(v);
                        if dof >= 0 {
                            f[dof as usize] += coefficient * meas / nv as f64;
                        }
                    }
                } else {
                    let jac = if mesh.dimension() == 1 { meas } else { 2.0 * meas };
                    for (b, &w) in cut_rule.points.iter().zip(&cut_rule.weights) {
                        let mut p = [0.0; 2];
                        for (k, &v) in el.iter().enumerate() {
                            let pv = mesh.vertex(v);
                            p[0] += b[k] * pv[0];
                            p[1] += b[k] * pv[1];
                        }
                        if !inside(p) {
                            continue;
                        }
                        for (k, &v) in el.iter().enumerate() {
                            let dof = mesh.dof_of_vertex(v);
                            if dof >= 0 {
                                f[dof as usize] += coefficient * w * jac * b[k];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(f)
}

/// Consistent P1 mass matrix over interior DOFs (Interior elements only).
pub fn assemble_mass(mesh: &Mesh, n_components: usize) -> SymSparseMatrix {
    let n = mesh.n_interior_vertices() * n_components;
    let nv = mesh.dimension() + 1;
    let mut triplets = Vec::new();
    for e in 0..mesh.n_elements() {
        if mesh.element_region(e) != ElementRegion::Interior {
            continue;
        }
        let el = mesh.element(e);
        let meas = mesh.element_measure(e);
        // M_ij = |T| (1 + delta_ij) / ((d+1)(d+2))
        let scale = meas / ((nv * (nv + 1)) as f64);
        for (i, &vi) in el.iter().enumerate() {
            let di = mesh.dof_of_vertex(vi);
            if di < 0 {
                continue;
            }
            for (j, &vj) in el.iter().enumerate() {
                if j > i {
                    continue;
                }
                let dj = mesh.dof_of_vertex(vj);
                if dj < 0 {
                    continue;
                }
                let m = scale * if i == j { 2.0 } else { 1.0 };
                for c in 0..n_components {
                    let (p, q) = (
                        n_components * di as usize + c,
                        n_components * dj as usize + c,
                    );
                    triplets.push((p.max(q), p.min(q), m));
                }
            }
        }
    }
    SymSparseMatrix::from_triplets(n, &triplets)
}

/// P1 gradients on an element: returns (gradients, measure).
pub(crate) fn p1_gradients(mesh: &Mesh, e: usize) -> ([[f64; 2]; 3], f64) {
    let el = mesh.element(e);
    if mesh.dimension() == 1 {
        let x0 = mesh.vertex(el[0])[0];
        let x1 = mesh.vertex(el[1])[0];
        let h = x1 - x0;
        (
            [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
            h.abs(),
        )
    } else {
        let a = mesh.vertex(el[0]);
        let b = mesh.vertex(el[1]);
        let c = mesh.vertex(el[2]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        (
            [
                [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
                [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
                [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
            ],
            det.abs() / 2.0,
        )
    }
}

/// Assembles the stiffness matrix of the given form on the interior DOFs.
pub fn assemble_stiffness(
    mesh: &Mesh,
    design: &DesignField,
    kind: FormKind,
    quad: &QuadConfig,
) -> Result<SymSparseMatrix> {
    kind.validate()?;
    if let Some((_, r)) = kind.fractional_params() {
        if mesh.horizon_width() + 1e-9 * mesh.h() < r {
            return Err(Error::config(format!(
                "mesh horizon layer width {:.4} is smaller than R = {r}",
                mesh.horizon_width()
            )));
        }
    }
    let k = match kind {
        FormKind::LocalConductivity => assemble_local_conductivity(mesh, design),
        FormKind::LocalElasticity => assemble_local_elasticity(mesh, design),
        FormKind::FractionalConductivity { s, .. } => {
            assembly::assemble_fractional_scalar(mesh, design, s, quad)?
        }
        FormKind::FractionalPeridynamic { s, .. } => {
            assembly::assemble_fractional_peridynamic(mesh, design, s, quad)?
        }
    };
    // A zero or negative diagonal entry cannot come from these forms and
    // signals a quadrature defect.
    if k.diagonal().iter().any(|&d| !(d > 0.0)) {
        return Err(Error::NumericalIntegrity(
            "assembled stiffness has a nonpositive diagonal entry".into(),
        ));
    }
    Ok(k)
}

fn assemble_local_conductivity(mesh: &Mesh, design: &DesignField) -> SymSparseMatrix {
    let n = mesh.n_interior_vertices();
    let mut triplets = Vec::new();
    for e in 0..mesh.n_elements() {
        if mesh.element_region(e) != ElementRegion::Interior {
            continue;
        }
        let el = mesh.element(e);
        let (grads, meas) = p1_gradients(mesh, e);
        let a = design.value(e);
        for (i, &vi) in el.iter().enumerate() {
            let di = mesh.dof_of_vertex(vi);
            if di < 0 {
                continue;
            }
            for (j, &vj) in el.iter().enumerate() {
                if j > i {
                    continue;
                }
                let dj = mesh.dof_of_vertex(vj);
                if dj < 0 {
                    continue;
                }
                let dot = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                let (p, q) = (di as usize, dj as usize);
                triplets.push((p.max(q), p.min(q), a * meas * dot));
            }
        }
    }
    SymSparseMatrix::from_triplets(n, &triplets)
}

/// Local elasticity `a/(d+2) ∫ 2 eps(u):eps(v) + div u div v` with
/// constant strains; entry for bases `(i,c), (j,d)`:
/// `a |T| / (d+2) (delta_cd g_i·g_j + g_i[d] g_j[c] + g_i[c] g_j[d])`.
fn assemble_local_elasticity(mesh: &Mesh, design: &DesignField) -> SymSparseMatrix {
    let dim = mesh.dimension();
    let nc = dim;
    let n = mesh.n_interior_vertices() * nc;
    let mut triplets = Vec::new();
    for e in 0..mesh.n_elements() {
        if mesh.element_region(e) != ElementRegion::Interior {
            continue;
        }
        let el = mesh.element(e);
        let (grads, meas) = p1_gradients(mesh, e);
        let scale = design.value(e) * meas / (dim as f64 + 2.0);
        for (i, &vi) in el.iter().enumerate() {
            let di = mesh.dof_of_vertex(vi);
            if di < 0 {
                continue;
            }
            for (j, &vj) in el.iter().enumerate() {
                let dj = mesh.dof_of_vertex(vj);
                if dj < 0 {
                    continue;
                }
                let gij = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                for c in 0..nc {
                    for d in 0..nc {
                        let p = nc * di as usize + c;
                        let q = nc * dj as usize + d;
                        if q > p {
                            continue;
                        }
                        let delta = if c == d { gij } else { 0.0 };
                        let v = scale * (delta + grads[i][d] * grads[j][c]
                            + grads[i][c] * grads[j][d]);
                        triplets.push((p, q, v));
                    }
                }
            }
        }
    }
    SymSparseMatrix::from_triplets(n, &triplets)
}

/// Per-element values `g_T = B[χ_T](u, u)`, for every element of the mesh
/// (horizon elements included for fractional kinds; the optimizer uses
/// the Interior entries). Summing over all elements recovers `B[1](u,u)`.
pub fn element_gradient_values(
    mesh: &Mesh,
    u: &StateField,
    kind: FormKind,
    quad: &QuadConfig,
) -> Result<Vec<f64>> {
    kind.validate()?;
    match kind {
        FormKind::LocalConductivity => {
            let mut g = vec![0.0; mesh.n_elements()];
            for e in 0..mesh.n_elements() {
                if mesh.element_region(e) != ElementRegion::Interior {
                    continue;
                }
                let el = mesh.element(e);
                let (grads, meas) = p1_gradients(mesh, e);
                let mut gu = [0.0; 2];
                for (i, &vi) in el.iter().enumerate() {
                    let uv = u.vertex_value(mesh, vi, 0);
                    gu[0] += uv * grads[i][0];
                    gu[1] += uv * grads[i][1];
                }
                g[e] = meas * (gu[0] * gu[0] + gu[1] * gu[1]);
            }
            Ok(g)
        }
        FormKind::LocalElasticity => {
            let dim = mesh.dimension();
            let mut g = vec![0.0; mesh.n_elements()];
            for e in 0..mesh.n_elements() {
                if mesh.element_region(e) != ElementRegion::Interior {
                    continue;
                }
                let el = mesh.element(e);
                let (grads, meas) = p1_gradients(mesh, e);
                // Constant displacement gradient on the element.
                let mut gu = [[0.0; 2]; 2]; // gu[c][k] = d u_c / d x_k
                for (i, &vi) in el.iter().enumerate() {
                    for c in 0..dim {
                        let uv = u.vertex_value(mesh, vi, c);
                        gu[c][0] += uv * grads[i][0];
                        gu[c][1] += uv * grads[i][1];
                    }
                }
                let mut eps2 = 0.0;
                for c in 0..dim {
                    for k in 0..dim {
                        let eck = 0.5 * (gu[c][k] + gu[k][c]);
                        eps2 += eck * eck;
                    }
                }
                let div: f64 = (0..dim).map(|c| gu[c][c]).sum();
                g[e] = meas / (dim as f64 + 2.0) * (2.0 * eps2 + div * div);
            }
            Ok(g)
        }
        FormKind::FractionalConductivity { s, .. } => {
            assembly::gradient_sweep_scalar(mesh, u, s, quad)
        }
        FormKind::FractionalPeridynamic { s, .. } => {
            assembly::gradient_sweep_peridynamic(mesh, u, s, quad)
        }
    }
}

/// `|u|` in the energy seminorm of the given kind with unit coefficient:
/// the square root of `B[1](u, u)`.
pub fn seminorm(mesh: &Mesh, u: &StateField, kind: FormKind, quad: &QuadConfig) -> Result<f64> {
    let g = element_gradient_values(mesh, u, kind, quad)?;
    Ok(g.iter().sum::<f64>().max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;

    #[test]
    fn gamma_constant_values() {
        assert!((gamma_constant(0.5, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((gamma_constant(0.5, 2, 2).unwrap() - 1.0 / PI).abs() < 1e-15);
        // Vanishes linearly in (1 - s).
        let g1 = gamma_constant(0.9, 1, 2).unwrap();
        let g2 = gamma_constant(0.99, 1, 2).unwrap();
        assert!((g1 / g2 - 10.0).abs() < 1e-9);
        assert!(gamma_constant(0.5, 3, 2).is_err());
        assert!(gamma_constant(0.5, 1, 3).is_err());
        assert!(gamma_constant(1.0, 1, 2).is_err());
    }

    #[test]
    fn local_conductivity_hand_value() {
        // Two elements on (0,1), one interior DOF; ∫ |phi'|^2 = 2 + 2.
        let mesh = build_interval_mesh(0.0, 1.0, 2).unwrap();
        let design = DesignField::uniform(&mesh, 1.0, (0.5, 2.0)).unwrap();
        let k = assemble_stiffness(&mesh, &design, FormKind::LocalConductivity, &QuadConfig::default())
            .unwrap();
        assert_eq!(k.n(), 1);
        assert!((k.get(0, 0) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_is_linear_in_coefficient() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let a = DesignField::uniform(&mesh, 0.7, (0.1, 2.0)).unwrap();
        let b = DesignField::uniform(&mesh, 1.4, (0.1, 2.0)).unwrap();
        let ka = assemble_stiffness(&mesh, &a, FormKind::LocalConductivity, &QuadConfig::default())
            .unwrap();
        let kb = assemble_stiffness(&mesh, &b, FormKind::LocalConductivity, &QuadConfig::default())
            .unwrap();
        for (i, j, v) in ka.lower_entries() {
            assert!((2.0 * v - kb.get(i, j)).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn constant_load_is_h_on_uniform_mesh() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let f = assemble_load(&mesh, &SourceTerm::Constant(1.0)).unwrap();
        for &fi in &f {
            assert!((fi - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn ball_load_integrates_indicator() {
        // 1D ball = subinterval [0.3, 0.7]; total load = c * length.
        let mesh = build_interval_mesh(0.0, 1.0, 64).unwrap();
        let f = assemble_load(
            &mesh,
            &SourceTerm::BallIndicator {
                coefficient: 3.0,
                radius: 0.2,
                center: [0.5, 0.0],
            },
        )
        .unwrap();
        let total: f64 = f.iter().sum();
        // Σ_i ∫ f φ_i = ∫ f (1 - boundary hats) = 3 * 0.4 up to the O(h)
        // cut-cell quadrature error.
        assert!((total - 1.2).abs() < 0.02, "total {total}");
    }

    #[test]
    fn mass_matrix_integrates_one() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let m = assemble_mass(&mesh, 1);
        let ones = vec![1.0; m.n()];
        // 1^T M 1 = ∫ (sum of interior hats)^2 < 1, > 0.
        let v = m.quadratic_form(&ones);
        assert!(v > 0.5 && v < 1.0);
    }

    #[test]
    fn design_field_validates() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        assert!(DesignField::uniform(&mesh, 0.5, (0.0, 1.0)).is_err());
        assert!(DesignField::uniform(&mesh, 3.0, (0.1, 2.0)).is_err());
        let d = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        assert!((d.l2_norm(&mesh) - 1.0).abs() < 1e-14);
        assert!((d.penalty(&mesh, 0.5, 2.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn state_field_evaluates_piecewise_linearly() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let u = StateField::from_values(&mesh, 1, vec![1.0, 2.0, 1.0]).unwrap();
        assert!((u.evaluate(&mesh, [0.25, 0.0], 0) - 1.0).abs() < 1e-13);
        assert!((u.evaluate(&mesh, [0.375, 0.0], 0) - 1.5).abs() < 1e-13);
        assert_eq!(u.evaluate(&mesh, [2.0, 0.0], 0), 0.0);
    }
}
