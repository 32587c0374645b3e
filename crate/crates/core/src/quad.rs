//! Quadrature: Gauss rules on simplices and singularity-removing product
//! rules for element pairs with power-law kernels.
//!
//! Pair rules integrate
//!
//! ```text
//!   I = ∬_{T1 x T2} g(x, y) |x - y|^(-beta) dx dy
//! ```
//!
//! for integrands `g` that vanish to second order on the diagonal `x = y`
//! (products of differences of continuous piecewise-linear functions, as
//! they appear in the nonlocal bilinear forms). Touching pairs are mapped
//! by Duffy-type coordinate splittings so that `x - y = r d(z)` with a
//! smooth nonvanishing direction `d`; the resulting pure power of the
//! radial variable `r` (including the second-order vanishing of `g`) is
//! absorbed into a Gauss-Jacobi weight, so the transformed integrand seen
//! by the sub-rules is smooth. Quadrature nodes never sample the diagonal.
//!
//! Contract for consumers: with `J_i` the Jacobian of the affine map from
//! the reference simplex onto `T_i` in the *adapted* vertex order (see
//! below), and nodes `(b1, b2, w)` in barycentric coordinates,
//!
//! ```text
//!   I ≈ J1 J2 Σ_k w_k g(x_k, y_k) |x_k - y_k|^(-beta).
//! ```
//!
//! Adapted vertex orders: `Identical` uses the element's own order for
//! both factors; `EdgeTouch` lists the two shared vertices first (sorted
//! by global index) in both factors; `VertexTouch` lists the shared
//! vertex first in both factors; `Disjoint` uses the natural order.

use crate::error::Error;
use crate::mesh::PairClass;
use crate::Result;
use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights for a weighted integral `∫_0^1 r^mu f(r) dr`.
///
/// Computed by the Golub-Welsch algorithm from the monic Jacobi
/// recurrence with parameters `(alpha, beta) = (0, mu)`.
pub fn gauss_jacobi_01(n: usize, mu: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    assert!(mu > -1.0, "weight exponent must exceed -1");
    let (a, b) = (0.0f64, mu);
    let total = 2f64.powf(a + b + 1.0) / (b + 1.0); // ∫ (1+t)^mu dt on [-1,1]

    let mut diag = vec![0.0f64; n];
    let mut off = vec![0.0f64; n.saturating_sub(1)];
    diag[0] = (b - a) / (a + b + 2.0);
    for k in 1..n {
        let kk = k as f64;
        diag[k] = (b * b - a * a) / ((2.0 * kk + a + b) * (2.0 * kk + a + b + 2.0));
        let beta_k = if k == 1 {
            4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))
        } else {
            4.0 * kk * (kk + a) * (kk + b) * (kk + a + b)
                / ((2.0 * kk + a + b).powi(2)
                    * (2.0 * kk + a + b + 1.0)
                    * (2.0 * kk + a + b - 1.0))
        };
        off[k - 1] = beta_k.sqrt();
    }

    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let t = eig.eigenvalues[i];
            let w = total * eig.eigenvectors[(0, i)].powi(2);
            // Map [-1,1] with weight (1+t)^mu onto [0,1] with weight x^mu.
            ((1.0 + t) / 2.0, w * 2f64.powf(-mu - 1.0))
        })
        .collect();
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_jacobi_01(n, 0.0)
}

/// A quadrature rule on the reference simplex (interval `[0,1]` or the
/// unit triangle), with points in barycentric coordinates.
#[derive(Clone, Debug)]
pub struct QuadRule {
    /// Barycentric coordinates; 1D rules use the first two components.
    pub points: Vec<[f64; 3]>,
    /// Positive weights summing to the reference measure (1 or 1/2).
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub order: usize,
    pub dimension: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss rule on the reference simplex of the given dimension, exact for
/// polynomials of the given total degree.
pub fn gauss_simplex(dimension: usize, order: usize) -> Result<QuadRule> {
    if !(1..=20).contains(&order) {
        return Err(Error::param(format!("unsupported quadrature order {order}")));
    }
    match dimension {
        1 => {
            let k = order / 2 + 1;
            let (x, w) = gauss_legendre_01(k);
            Ok(QuadRule {
                points: x.iter().map(|&xi| [1.0 - xi, xi, 0.0]).collect(),
                weights: w,
                order,
                dimension: 1,
            })
        }
        2 => Ok(triangle_rule(order)),
        _ => Err(Error::param("quadrature supports dimensions 1 and 2")),
    }
}

fn triangle_rule(order: usize) -> QuadRule {
    match order {
        1 => QuadRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            order,
            dimension: 2,
        },
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            QuadRule {
                points: vec![[a, b, b], [b, a, b], [b, b, a]],
                weights: vec![1.0 / 6.0; 3],
                order,
                dimension: 2,
            }
        }
        _ => {
            // Collapsed product rule: exact with positive weights at any
            // order.  ∫_T f = ∫_0^1 ∫_0^1 v f(1 - v, w v) dv dw
            let k = order / 2 + 1;
            let (xv, wv) = gauss_jacobi_01(k, 1.0);
            let (xw, ww) = gauss_legendre_01(k);
            let mut points = Vec::with_capacity(k * k);
            let mut weights = Vec::with_capacity(k * k);
            for (v, wgt_v) in xv.iter().zip(&wv) {
                for (w, wgt_w) in xw.iter().zip(&ww) {
                    let xi1 = 1.0 - v;
                    let xi2 = w * v;
                    points.push([1.0 - xi1 - xi2, xi1, xi2]);
                    weights.push(wgt_v * wgt_w);
                }
            }
            QuadRule {
                points,
                weights,
                order,
                dimension: 2,
            }
        }
    }
}

/// Coordinate transform used by a pair rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    /// Plain tensor rule for separated pairs.
    None,
    DuffyVertex,
    DuffyEdge,
    DuffyIdentical,
}

/// One quadrature node on a product of two reference simplices.
#[derive(Clone, Copy, Debug)]
pub struct PairNode {
    /// Barycentric coordinates on the first factor (adapted order).
    pub b1: [f64; 3],
    /// Barycentric coordinates on the second factor (adapted order).
    pub b2: [f64; 3],
    /// Weight; includes all transform Jacobians and the radial kernel
    /// compensation, but not the element Jacobians.
    pub w: f64,
}

/// Tensorized rule on a pair of reference simplices after a
/// singularity-removing transform. See the module docs for the contract.
#[derive(Clone, Debug)]
pub struct PairQuadRule {
    pub class: PairClass,
    pub transform: TransformKind,
    /// Order parameter; sub-rules use `order/2 + 1` points per direction.
    pub order: usize,
    pub nodes: Vec<PairNode>,
}

/// Rule for the kernel `|x - y|^(-beta)` with `beta = n + 2s`.
pub fn singular_pair_rule(
    dimension: usize,
    pair_class: PairClass,
    s: f64,
    order: usize,
) -> Result<PairQuadRule> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::param(format!("fractional order s = {s} not in (0, 1)")));
    }
    if !(1..=14).contains(&order) {
        return Err(Error::param(format!("unsupported pair rule order {order}")));
    }
    let beta = dimension as f64 + 2.0 * s;
    pair_rule_with_beta(dimension, pair_class, beta, order)
}

/// Internal constructor taking the kernel exponent directly. Exponents
/// `beta <= 0` turn the kernel into a polynomial, which the tests use to
/// validate the transforms against plain tensor quadrature.
pub(crate) fn pair_rule_with_beta(
    dimension: usize,
    pair_class: PairClass,
    beta: f64,
    order: usize,
) -> Result<PairQuadRule> {
    let k = order / 2 + 1;
    let nodes = match (dimension, pair_class) {
        (1, PairClass::Identical) => identical_nodes_1d(beta, k),
        (1, PairClass::VertexTouch) => vertex_nodes_1d(beta, k),
        (2, PairClass::Identical) => identical_nodes_2d(beta, k)?,
        (2, PairClass::EdgeTouch) => edge_nodes_2d(beta, k)?,
        (2, PairClass::VertexTouch) => vertex_nodes_2d(beta, k)?,
        (_, PairClass::Disjoint) => disjoint_nodes(dimension, order)?,
        (1, PairClass::EdgeTouch) => {
            return Err(Error::param("EdgeTouch pairs do not occur in 1D"))
        }
        _ => return Err(Error::param("pair rules support dimensions 1 and 2")),
    };
    let transform = match pair_class {
        PairClass::Disjoint => TransformKind::None,
        PairClass::VertexTouch => TransformKind::DuffyVertex,
        PairClass::EdgeTouch => TransformKind::DuffyEdge,
        PairClass::Identical => TransformKind::DuffyIdentical,
    };
    Ok(PairQuadRule {
        class: pair_class,
        transform,
        order,
        nodes,
    })
}

fn bary1(xi: f64) -> [f64; 3] {
    [1.0 - xi, xi, 0.0]
}

fn bary2(xi: [f64; 2]) -> [f64; 3] {
    [1.0 - xi[0] - xi[1], xi[0], xi[1]]
}

/// Both elements coincide, 1D. Splitting by the sign of `eta - xi` and
/// rectifying gives Jacobian `(1 - r)` and kernel scale `r`.
fn identical_nodes_1d(beta: f64, k: usize) -> Vec<PairNode> {
    let (xr, wr) = gauss_jacobi_01(k, 2.0 - beta);
    let (xq, wq) = gauss_legendre_01(k);
    let mut nodes = Vec::with_capacity(2 * k * k);
    for (&r, &a) in xr.iter().zip(&wr) {
        let fold = a * r.powf(beta - 2.0) * (1.0 - r);
        for (&q, &b) in xq.iter().zip(&wq) {
            let lo = (1.0 - r) * q;
            nodes.push(PairNode {
                b1: bary1(lo + r),
                b2: bary1(lo),
                w: fold * b,
            });
            nodes.push(PairNode {
                b1: bary1(lo),
                b2: bary1(lo + r),
                w: fold * b,
            });
        }
    }
    nodes
}

/// Elements sharing one endpoint, 1D, shared vertex first in both adapted
/// orders. Joint radial scaling over the two regions `xi >= eta`,
/// `xi < eta` gives Jacobian `r`.
fn vertex_nodes_1d(beta: f64, k: usize) -> Vec<PairNode> {
    let (xr, wr) = gauss_jacobi_01(k, 3.0 - beta);
    let (xq, wq) = gauss_legendre_01(k);
    let mut nodes = Vec::with_capacity(2 * k * k);
    for (&r, &a) in xr.iter().zip(&wr) {
        let fold = a * r.powf(beta - 2.0);
        for (&q, &b) in xq.iter().zip(&wq) {
            nodes.push(PairNode {
                b1: bary1(r),
                b2: bary1(r * q),
                w: fold * b,
            });
            nodes.push(PairNode {
                b1: bary1(r * q),
                b2: bary1(r),
                w: fold * b,
            });
        }
    }
    nodes
}

/// Both elements coincide, 2D. The difference `z = eta - xi` is split
/// into four sign quadrants; mixed quadrants are split once more so the
/// base-point scale stays polynomial. Six pieces, each with Jacobian
/// `r j(r, lambda)` and `|x - y| = r |B (lambda, 1-lambda)|`.
fn identical_nodes_2d(beta: f64, k: usize) -> Result<Vec<PairNode>> {
    let (xr, wr) = gauss_jacobi_01(k, 3.0 - beta);
    let (xq, wq) = gauss_legendre_01(k);
    let tri = gauss_simplex(2, (2 * k - 1).max(1))?;
    let mut nodes = Vec::new();
    let mut push =
        |z: [f64; 2], base: [f64; 2], scale: f64, jac: f64, xh: [f64; 2], w: f64| {
            let xi = [base[0] + scale * xh[0], base[1] + scale * xh[1]];
            let eta = [xi[0] + z[0], xi[1] + z[1]];
            nodes.push(PairNode {
                b1: bary2(xi),
                b2: bary2(eta),
                w: w * jac,
            });
        };
    for (&r, &a) in xr.iter().zip(&wr) {
        let fold = a * r.powf(beta - 2.0);
        for (&q, &b) in xq.iter().zip(&wq) {
            for (bc, &wt) in tri.points.iter().zip(&tri.weights) {
                let xh = [bc[1], bc[2]];
                let w = fold * b * wt;
                // Quadrant (+,+): lambda = q on [0,1].
                let l = q;
                let om = 1.0 - r;
                push([r * l, r * (1.0 - l)], [0.0, 0.0], om, om * om, xh, w);
                // Quadrant (-,-).
                push(
                    [-r * l, -r * (1.0 - l)],
                    [r * l, r * (1.0 - l)],
                    om,
                    om * om,
                    xh,
                    w,
                );
                // Mixed quadrants split into two cones normalized by the
                // dominant component, keeping the maps polynomial.
                // Quadrant (+,-), cone |z2| >= z1.
                push([r * q, -r], [0.0, r], om, om * om, xh, w);
                // Quadrant (+,-), cone z1 >= |z2|.
                push([r, -r * q], [0.0, r * q], om, om * om, xh, w);
                // Quadrant (-,+): coordinate swap of (+,-).
                push([-r, r * q], [r, 0.0], om, om * om, xh, w);
                push([-r * q, r], [r * q, 0.0], om, om * om, xh, w);
            }
        }
    }
    Ok(nodes)
}

/// Elements sharing an edge, 2D. Adapted orders put the shared vertices
/// first, so the shared edge is `xi2 = 0` / `eta2 = 0` with matching
/// parametrization. The singular variables `(delta, xi2, eta2)` with
/// `delta = eta1 - xi1` are scaled jointly; each sign orthant splits into
/// two cones normalized by the component that limits the edge position,
/// keeping all maps polynomial. Four pieces with Jacobian `r^2 (1 - r)`.
fn edge_nodes_2d(beta: f64, k: usize) -> Result<Vec<PairNode>> {
    let (xr, wr) = gauss_jacobi_01(k, 4.0 - beta);
    let (xg, wg) = gauss_legendre_01(k);
    let tri = gauss_simplex(2, (2 * k - 1).max(1))?;
    let mut nodes = Vec::new();
    for (&r, &a) in xr.iter().zip(&wr) {
        let fold = a * r.powf(beta - 2.0) * (1.0 - r);
        for (&tau, &c) in xg.iter().zip(&wg) {
            let t0 = (1.0 - r) * tau;
            // Cones dominated by xi2 (delta >= 0) resp. eta2 (delta <= 0):
            // directions from the unit simplex.
            for (bc, &w_tri) in tri.points.iter().zip(&tri.weights) {
                let (da, db) = (bc[1], bc[2]);
                let w = fold * c * w_tri;
                // delta >= 0: (delta, xi2, eta2) = r (a, 1, b).
                nodes.push(PairNode {
                    b1: bary2([t0, r]),
                    b2: bary2([t0 + r * da, r * db]),
                    w,
                });
                // delta <= 0: (delta, xi2, eta2) = r (-a, b, 1).
                let t = r * da + t0;
                nodes.push(PairNode {
                    b1: bary2([t, r * db]),
                    b2: bary2([t - r * da, r]),
                    w,
                });
            }
            // Cones dominated by delta + eta2 (delta >= 0) resp.
            // delta + xi2 (delta <= 0): box directions.
            for (&cc, &wc) in xg.iter().zip(&wg) {
                for (&e, &we) in xg.iter().zip(&wg) {
                    let w = fold * c * wc * we;
                    // delta >= 0: (delta, xi2, eta2) = r (c, e, 1 - c).
                    nodes.push(PairNode {
                        b1: bary2([t0, r * e]),
                        b2: bary2([t0 + r * cc, r * (1.0 - cc)]),
                        w,
                    });
                    // delta <= 0: (delta, xi2, eta2) = r (-c, 1 - c, e).
                    let t = r * cc + t0;
                    nodes.push(PairNode {
                        b1: bary2([t, r * (1.0 - cc)]),
                        b2: bary2([t - r * cc, r * e]),
                        w,
                    });
                }
            }
        }
    }
    Ok(nodes)
}

/// Elements sharing one vertex, 2D, shared vertex first in both adapted
/// orders. Splitting by the larger simplex level and scaling jointly
/// gives Jacobian `r^3`.
fn vertex_nodes_2d(beta: f64, k: usize) -> Result<Vec<PairNode>> {
    let (xr, wr) = gauss_jacobi_01(k, 5.0 - beta);
    let (xz, wz) = gauss_legendre_01(k);
    let tri = gauss_simplex(2, (2 * k - 1).max(1))?;
    let mut nodes = Vec::new();
    for (&r, &a) in xr.iter().zip(&wr) {
        let fold = a * r.powf(beta - 2.0);
        for (&z, &b) in xz.iter().zip(&wz) {
            let far = [r * z, r * (1.0 - z)];
            for (bc, &w_tri) in tri.points.iter().zip(&tri.weights) {
                let inner = [r * bc[1], r * bc[2]];
                let w = fold * b * w_tri;
                nodes.push(PairNode {
                    b1: bary2(far),
                    b2: bary2(inner),
                    w,
                });
                nodes.push(PairNode {
                    b1: bary2(inner),
                    b2: bary2(far),
                    w,
                });
            }
        }
    }
    Ok(nodes)
}

/// Separated elements: plain tensor product of simplex rules, kernel
/// evaluated directly.
fn disjoint_nodes(dimension: usize, order: usize) -> Result<Vec<PairNode>> {
    let rule = gauss_simplex(dimension, order)?;
    let mut nodes = Vec::with_capacity(rule.len() * rule.len());
    for (p, &wp) in rule.points.iter().zip(&rule.weights) {
        for (q, &wq) in rule.points.iter().zip(&rule.weights) {
            nodes.push(PairNode {
                b1: *p,
                b2: *q,
                w: wp * wq,
            });
        }
    }
    Ok(nodes)
}

/// Order parameters for pair assembly.
#[derive(Clone, Copy, Debug)]
pub struct QuadConfig {
    /// Order for touching pairs (identical, edge, vertex).
    pub touching_order: usize,
    /// Order for disjoint pairs closer than `far_distance_factor * h`.
    pub near_order: usize,
    /// Order for well-separated pairs.
    pub far_order: usize,
    /// Distance in units of the local element size separating near from far.
    pub far_distance_factor: f64,
    /// Disjoint pairs with gap below this fraction of the larger diameter
    /// are integrated on subdivided elements.
    pub subdivide_ratio: f64,
    /// Maximum subdivision depth for close disjoint pairs.
    pub max_subdivision_depth: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            touching_order: 6,
            near_order: 5,
            far_order: 4,
            far_distance_factor: 3.0,
            subdivide_ratio: 0.5,
            max_subdivision_depth: 2,
        }
    }
}

impl QuadConfig {
    /// Higher-order settings used for 1D verification runs.
    pub fn fine_1d() -> Self {
        QuadConfig {
            touching_order: 14,
            near_order: 14,
            far_order: 10,
            far_distance_factor: 3.0,
            subdivide_ratio: 0.5,
            max_subdivision_depth: 2,
        }
    }
}

/// The full set of pair rules for one kernel exponent, built once per
/// assembly and shared read-only afterwards.
#[derive(Clone, Debug)]
pub struct PairRuleSet {
    pub identical: PairQuadRule,
    pub edge: Option<PairQuadRule>,
    pub vertex: PairQuadRule,
    pub near: PairQuadRule,
    pub far: PairQuadRule,
    pub config: QuadConfig,
}

impl PairRuleSet {
    pub fn new(dimension: usize, s: f64, config: QuadConfig) -> Result<Self> {
        let beta = dimension as f64 + 2.0 * s;
        Self::with_beta(dimension, beta, config)
    }

    pub(crate) fn with_beta(dimension: usize, beta: f64, config: QuadConfig) -> Result<Self> {
        Ok(PairRuleSet {
            identical: pair_rule_with_beta(
                dimension,
                PairClass::Identical,
                beta,
                config.touching_order,
            )?,
            edge: if dimension == 2 {
                Some(pair_rule_with_beta(
                    dimension,
                    PairClass::EdgeTouch,
                    beta,
                    config.touching_order,
                )?)
            } else {
                None
            },
            vertex: pair_rule_with_beta(
                dimension,
                PairClass::VertexTouch,
                beta,
                config.touching_order,
            )?,
            near: pair_rule_with_beta(dimension, PairClass::Disjoint, beta, config.near_order)?,
            far: pair_rule_with_beta(dimension, PairClass::Disjoint, beta, config.far_order)?,
            config,
        })
    }

    pub fn rule_for(&self, class: PairClass) -> &PairQuadRule {
        match class {
            PairClass::Identical => &self.identical,
            PairClass::EdgeTouch => self.edge.as_ref().expect("edge rule in 2D"),
            PairClass::VertexTouch => &self.vertex,
            PairClass::Disjoint => &self.near,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral_1d(p: u32) -> f64 {
        1.0 / (p as f64 + 1.0)
    }

    /// ∫_T x^p y^q over the unit triangle = p! q! / (p + q + 2)!.
    fn monomial_integral_tri(p: u32, q: u32) -> f64 {
        let fact = |n: u32| -> f64 {
            if n == 0 {
                1.0
            } else {
                (1..=n).map(|k| k as f64).product()
            }
        };
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn jacobi_rule_integrates_weighted_monomials() {
        for &mu in &[-0.5, 0.0, 0.37, 1.0, 2.4] {
            for n in 1..=8usize {
                let (x, w) = gauss_jacobi_01(n, mu);
                assert!(w.iter().all(|&wi| wi > 0.0));
                for j in 0..=(2 * n - 1) as u32 {
                    let approx: f64 = x
                        .iter()
                        .zip(&w)
                        .map(|(&xi, &wi)| wi * xi.powi(j as i32))
                        .sum();
                    let exact = 1.0 / (mu + j as f64 + 1.0);
                    assert!(
                        (approx - exact).abs() <= 1e-12 * exact.abs(),
                        "mu={mu} n={n} j={j}: {approx} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn legendre_two_point_rule() {
        let (x, w) = gauss_legendre_01(2);
        let d = 0.5 / 3f64.sqrt();
        assert!((x[0] - (0.5 - d)).abs() < 1e-14);
        assert!((x[1] - (0.5 + d)).abs() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn simplex_rules_match_expected_shapes() {
        let r = gauss_simplex(1, 3).unwrap();
        assert_eq!(r.len(), 2);

        let r = gauss_simplex(2, 1).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);

        let r = gauss_simplex(2, 2).unwrap();
        assert_eq!(r.len(), 3);
        assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);

        assert!(gauss_simplex(2, 0).is_err());
        assert!(gauss_simplex(2, 21).is_err());
    }

    #[test]
    fn simplex_rules_are_exact() {
        for order in 1..=12usize {
            let r = gauss_simplex(1, order).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..=order as u32 {
                let got: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(b, &w)| w * b[1].powi(p as i32))
                    .sum();
                assert!((got - monomial_integral_1d(p)).abs() < 1e-12);
            }

            let r = gauss_simplex(2, order).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
            for p in 0..=order as u32 {
                for q in 0..=(order as u32 - p) {
                    let got: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(b, &w)| w * b[1].powi(p as i32) * b[2].powi(q as i32))
                        .sum();
                    let exact = monomial_integral_tri(p, q);
                    assert!(
                        (got - exact).abs() < 1e-12,
                        "order {order} monomial x^{p} y^{q}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    /// Applies a pair rule on physical simplices with the integrand
    /// `((x-y)·c) ((x-y)·d) |x-y|^(-beta)`.
    fn apply_pair_rule(
        rule: &PairQuadRule,
        t1: &[[f64; 2]],
        t2: &[[f64; 2]],
        c: [f64; 2],
        d: [f64; 2],
        beta: f64,
    ) -> f64 {
        let dim = t1.len() - 1;
        let jac = |t: &[[f64; 2]]| -> f64 {
            if dim == 1 {
                (t[1][0] - t[0][0]).abs()
            } else {
                ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1])
                    - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]))
                    .abs()
            }
        };
        let phys = |t: &[[f64; 2]], b: &[f64; 3]| -> [f64; 2] {
            let mut p = [0.0; 2];
            for (v, &bi) in t.iter().zip(b.iter()) {
                p[0] += bi * v[0];
                p[1] += bi * v[1];
            }
            p
        };
        let j12 = jac(t1) * jac(t2);
        let mut total = 0.0;
        for node in &rule.nodes {
            let x = phys(t1, &node.b1);
            let y = phys(t2, &node.b2);
            let dx = [x[0] - y[0], x[1] - y[1]];
            let d2 = dx[0] * dx[0] + dx[1] * dx[1];
            let g = (dx[0] * c[0] + dx[1] * c[1]) * (dx[0] * d[0] + dx[1] * d[1]);
            total += node.w * g * d2.powf(-beta / 2.0);
        }
        j12 * total
    }

    /// For beta <= 0 the full integrand is polynomial, so the transformed
    /// rules must reproduce a plain high-order tensor rule to roundoff.
    /// This pins the decompositions and Jacobians exactly.
    #[test]
    fn transforms_are_exact_for_polynomial_kernels() {
        let cases_2d: Vec<(PairClass, Vec<[f64; 2]>, Vec<[f64; 2]>)> = vec![
            (
                PairClass::Identical,
                vec![[0.0, 0.0], [1.1, 0.2], [0.3, 0.9]],
                vec![[0.0, 0.0], [1.1, 0.2], [0.3, 0.9]],
            ),
            (
                PairClass::EdgeTouch,
                vec![[0.0, 0.0], [1.0, 0.1], [0.4, 1.0]],
                vec![[0.0, 0.0], [1.0, 0.1], [0.6, -0.8]],
            ),
            (
                PairClass::VertexTouch,
                vec![[0.0, 0.0], [1.0, 0.1], [0.4, 1.0]],
                vec![[0.0, 0.0], [-0.9, -0.2], [-0.1, -0.7]],
            ),
            (
                PairClass::Disjoint,
                vec![[0.0, 0.0], [1.0, 0.1], [0.4, 1.0]],
                vec![[3.0, 0.0], [4.0, 0.3], [3.2, 1.2]],
            ),
        ];
        let c = [0.7, -0.3];
        let d = [0.2, 1.1];
        for &beta in &[0.0, -2.0] {
            let reference = pair_rule_with_beta(2, PairClass::Disjoint, beta, 12).unwrap();
            for (class, t1, t2) in &cases_2d {
                let rule = pair_rule_with_beta(2, *class, beta, 6).unwrap();
                let got = apply_pair_rule(&rule, t1, t2, c, d, beta);
                let want = apply_pair_rule(&reference, t1, t2, c, d, beta);
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                    "2D {class:?} beta={beta}: {got} vs {want}"
                );
            }
        }
        let cases_1d: Vec<(PairClass, Vec<[f64; 2]>, Vec<[f64; 2]>)> = vec![
            (
                PairClass::Identical,
                vec![[0.0, 0.0], [0.7, 0.0]],
                vec![[0.0, 0.0], [0.7, 0.0]],
            ),
            (
                PairClass::VertexTouch,
                vec![[1.0, 0.0], [0.3, 0.0]],
                vec![[1.0, 0.0], [1.9, 0.0]],
            ),
        ];
        for &beta in &[0.0, -2.0] {
            let reference = pair_rule_with_beta(1, PairClass::Disjoint, beta, 12).unwrap();
            for (class, t1, t2) in &cases_1d {
                let rule = pair_rule_with_beta(1, *class, beta, 6).unwrap();
                let got = apply_pair_rule(&rule, t1, t2, c, d, beta);
                let want = apply_pair_rule(&reference, t1, t2, c, d, beta);
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                    "1D {class:?} beta={beta}: {got} vs {want}"
                );
            }
        }
    }

    /// ∬_{[0,1]^2} |x-y|^(1-2s) dx dy = 1 / ((1-s)(3-2s)); this is the
    /// identical-pair integral with a linear test pair of slope one.
    #[test]
    fn identical_rule_matches_closed_form_1d() {
        for &s in &[0.25, 0.5, 0.75, 0.9] {
            let rule = singular_pair_rule(1, PairClass::Identical, s, 4).unwrap();
            let t = vec![[0.0, 0.0], [1.0, 0.0]];
            let beta = 1.0 + 2.0 * s;
            let got = apply_pair_rule(&rule, &t, &t, [1.0, 0.0], [1.0, 0.0], beta);
            let want = 1.0 / ((1.0 - s) * (3.0 - 2.0 * s));
            assert!((got - want).abs() <= 1e-8 * want, "s={s}: {got} vs {want}");
        }
    }

    #[test]
    fn pair_rules_are_finite_everywhere() {
        for &s in &[0.1, 0.5, 0.9] {
            for dim in [1usize, 2] {
                for class in [
                    PairClass::Identical,
                    PairClass::VertexTouch,
                    PairClass::EdgeTouch,
                    PairClass::Disjoint,
                ] {
                    if dim == 1 && class == PairClass::EdgeTouch {
                        continue;
                    }
                    let rule = singular_pair_rule(dim, class, s, 5).unwrap();
                    assert!(!rule.nodes.is_empty());
                    for node in &rule.nodes {
                        assert!(node.w.is_finite());
                        if class != PairClass::Disjoint {
                            // Transforms never sample the diagonal.
                            let same = node
                                .b1
                                .iter()
                                .zip(&node.b2)
                                .all(|(a, b)| (a - b).abs() < 1e-15);
                            assert!(!same);
                        }
                    }
                }
            }
        }
        assert!(singular_pair_rule(1, PairClass::Identical, 1.0, 4).is_err());
        assert!(singular_pair_rule(1, PairClass::Identical, 0.0, 4).is_err());
    }

    #[test]
    fn vertex_touch_1d_stabilizes_with_order() {
        let t1 = vec![[1.0, 0.0], [0.0, 0.0]];
        let t2 = vec![[1.0, 0.0], [2.0, 0.0]];
        for &s in &[0.25, 0.5, 0.75] {
            let beta = 1.0 + 2.0 * s;
            let fine = singular_pair_rule(1, PairClass::VertexTouch, s, 14).unwrap();
            let reference = apply_pair_rule(&fine, &t1, &t2, [1.0, 0.0], [1.0, 0.0], beta);
            let mut prev = f64::INFINITY;
            for order in [4usize, 8, 12] {
                let rule = singular_pair_rule(1, PairClass::VertexTouch, s, order).unwrap();
                let got = apply_pair_rule(&rule, &t1, &t2, [1.0, 0.0], [1.0, 0.0], beta);
                let err = (got - reference).abs() / reference.abs();
                assert!(err <= prev * (1.0 + 1e-12), "s={s} order={order}: err {err}");
                prev = err;
            }
            assert!(prev <= 1e-9, "s={s}: final error {prev}");
        }
    }
}
