//! Pairwise assembly of the fractional bilinear forms.
//!
//! The integration domain couples every element pair with at least one
//! element in the design domain. Each unordered pair contributes a small
//! dense block coupling the P1 hats of its vertices; the block is the
//! unit-coefficient value (normalization constant and pair multiplicity
//! folded in), so the stiffness matrix for a design `a` is the sum of
//! blocks weighted by the symmetrized pair coefficient
//! `(a(T1) + a(T2)) / 2`, and the per-element gradient values
//! `g_T = B[χ_T](u, u)` are half the block energy credited to each of
//! the two elements.
//!
//! Sweeps run in fixed-size chunks of the canonical pair ordering;
//! chunks are processed in order and blocks within a chunk are computed
//! in parallel, so results are bitwise independent of the worker count.
//!
//! `PairCache` stores the blocks of one sweep so the optimizer can
//! reassemble and resweep at each iteration without redoing quadrature.

use crate::error::Error;
use crate::forms::{gamma_constant, DesignField, StateField};
use crate::linalg::SymSparseMatrix;
use crate::mesh::{ElementRegion, Mesh, PairClass};
use crate::quad::{PairQuadRule, PairRuleSet, QuadConfig};
use crate::Result;
use rayon::prelude::*;

/// Pairs per sequential chunk; fixed so that parallel runs reduce in a
/// deterministic order regardless of thread count.
const CHUNK: usize = 1 << 16;

/// Dense accumulation limit for fractional matrices (packed lower
/// triangle), roughly 1.6 GB.
const MAX_DENSE_DOFS: usize = 20_000;

#[derive(Clone, Debug)]
pub(crate) struct ElemGeom {
    verts: [u32; 3],
    coords: [[f64; 2]; 3],
    jac: f64,
    centroid: [f64; 2],
    radius: f64,
    diam: f64,
    interior: bool,
}

pub(crate) fn geometry(mesh: &Mesh) -> Vec<ElemGeom> {
    let nv = mesh.dimension() + 1;
    (0..mesh.n_elements())
        .map(|e| {
            let el = mesh.element(e);
            let mut verts = [0u32; 3];
            let mut coords = [[0.0f64; 2]; 3];
            for k in 0..nv {
                verts[k] = el[k] as u32;
                coords[k] = mesh.vertex(el[k]);
            }
            if nv == 2 {
                verts[2] = u32::MAX;
            }
            let centroid = mesh.element_centroid(e);
            let radius = (0..nv)
                .map(|k| dist(coords[k], centroid))
                .fold(0.0f64, f64::max);
            let jac = if mesh.dimension() == 1 {
                mesh.element_measure(e)
            } else {
                2.0 * mesh.element_measure(e)
            };
            ElemGeom {
                verts,
                coords,
                jac,
                centroid,
                radius,
                diam: mesh.element_diameter(e),
                interior: mesh.element_region(e) == ElementRegion::Interior,
            }
        })
        .collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Canonically ordered unordered element pairs with at least one element
/// in the design domain.
pub(crate) fn admissible_pairs(geo: &[ElemGeom]) -> Vec<(u32, u32)> {
    let n = geo.len();
    let mut pairs = Vec::new();
    for t1 in 0..n {
        for t2 in t1..n {
            if geo[t1].interior || geo[t2].interior {
                pairs.push((t1 as u32, t2 as u32));
            }
        }
    }
    pairs
}

/// Unit-coefficient contribution of one element pair: a symmetric block
/// over the (up to six) vertices involved, stored as a packed lower
/// triangle, with the DOF index of each slot (-1 for constrained).
#[derive(Clone, Copy, Debug)]
pub struct PairBlock {
    pub t1: u32,
    pub t2: u32,
    pub dofs: [i32; 6],
    pub vals: [f64; 21],
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    // i >= j
    i * (i + 1) / 2 + j
}

/// Adapted slot layout of a pair: which barycentric component of each
/// factor feeds each slot (255 = not present).
struct SlotLayout {
    count: usize,
    pos1: [u8; 6],
    pos2: [u8; 6],
    verts: [u32; 6],
    /// Local vertex order of each element matching the rule convention.
    order1: [usize; 3],
    order2: [usize; 3],
    class: PairClass,
}

fn slot_layout(dim: usize, g1: &ElemGeom, g2: &ElemGeom, identical: bool) -> SlotLayout {
    let nv = dim + 1;
    let mut shared: Vec<(usize, usize)> = Vec::with_capacity(3);
    if !identical {
        for i in 0..nv {
            for j in 0..nv {
                if g1.verts[i] == g2.verts[j] {
                    shared.push((i, j));
                }
            }
        }
        // Deterministic adapted order: shared vertices sorted by global id.
        shared.sort_by_key(|&(i, _)| g1.verts[i]);
    }
    let mut pos1 = [255u8; 6];
    let mut pos2 = [255u8; 6];
    let mut verts = [u32::MAX; 6];
    let mut order1 = [0usize; 3];
    let mut order2 = [0usize; 3];

    if identical {
        for k in 0..nv {
            pos1[k] = k as u8;
            pos2[k] = k as u8;
            verts[k] = g1.verts[k];
            order1[k] = k;
            order2[k] = k;
        }
        return SlotLayout {
            count: nv,
            pos1,
            pos2,
            verts,
            order1,
            order2,
            class: PairClass::Identical,
        };
    }

    let n_shared = shared.len();
    let rest = |_g: &ElemGeom, used: &[usize]| -> Vec<usize> {
        (0..nv).filter(|k| !used.contains(k)).collect()
    };
    match n_shared {
        0 => {
            for k in 0..nv {
                pos1[k] = k as u8;
                verts[k] = g1.verts[k];
                order1[k] = k;
                pos2[nv + k] = k as u8;
                verts[nv + k] = g2.verts[k];
                order2[k] = k;
            }
            SlotLayout {
                count: 2 * nv,
                pos1,
                pos2,
                verts,
                order1,
                order2,
                class: PairClass::Disjoint,
            }
        }
        1 => {
            let (i0, j0) = shared[0];
            order1[0] = i0;
            order2[0] = j0;
            let r1 = rest(&g1, &[i0]);
            let r2 = rest(&g2, &[j0]);
            for (k, &r) in r1.iter().enumerate() {
                order1[k + 1] = r;
            }
            for (k, &r) in r2.iter().enumerate() {
                order2[k + 1] = r;
            }
            // Slots: shared, then the free vertices of each factor.
            pos1[0] = 0;
            pos2[0] = 0;
            verts[0] = g1.verts[i0];
            for k in 0..dim {
                pos1[1 + k] = (1 + k) as u8;
                verts[1 + k] = g1.verts[order1[1 + k]];
                pos2[1 + dim + k] = (1 + k) as u8;
                verts[1 + dim + k] = g2.verts[order2[1 + k]];
            }
            SlotLayout {
                count: 1 + 2 * dim,
                pos1,
                pos2,
                verts,
                order1,
                order2,
                class: PairClass::VertexTouch,
            }
        }
        _ => {
            // Shared edge (2D): both adapted orders start with the shared
            // pair in the same (sorted) order, so the reference edge
            // parametrizations match.
            let (i0, j0) = shared[0];
            let (i1, j1) = shared[1];
            order1[0] = i0;
            order1[1] = i1;
            order1[2] = rest(&g1, &[i0, i1])[0];
            order2[0] = j0;
            order2[1] = j1;
            order2[2] = rest(&g2, &[j0, j1])[0];
            pos1[0] = 0;
            pos2[0] = 0;
            pos1[1] = 1;
            pos2[1] = 1;
            pos1[2] = 2;
            pos2[3] = 2;
            verts[0] = g1.verts[i0];
            verts[1] = g1.verts[i1];
            verts[2] = g1.verts[order1[2]];
            verts[3] = g2.verts[order2[2]];
            SlotLayout {
                count: 4,
                pos1,
                pos2,
                verts,
                order1,
                order2,
                class: PairClass::EdgeTouch,
            }
        }
    }
}

/// A (possibly subdivided) integration cell: physical corners plus the
/// barycentric coordinates of those corners within the original element.
#[derive(Clone, Copy)]
struct SubCell {
    phys: [[f64; 2]; 3],
    bary: [[f64; 3]; 3],
    jac: f64,
    centroid: [f64; 2],
    radius: f64,
    diam: f64,
}

impl SubCell {
    fn from_geom(dim: usize, g: &ElemGeom, order: &[usize; 3]) -> Self {
        let nv = dim + 1;
        let mut phys = [[0.0; 2]; 3];
        let mut bary = [[0.0; 3]; 3];
        for k in 0..nv {
            phys[k] = g.coords[order[k]];
            // Hat values are tracked in the adapted order throughout.
            bary[k][k] = 1.0;
        }
        SubCell {
            phys,
            bary,
            jac: g.jac,
            centroid: g.centroid,
            radius: g.radius,
            diam: g.diam,
        }
    }

    fn children(&self, dim: usize) -> Vec<SubCell> {
        let mid_p = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let mid_b = |a: [f64; 3], b: [f64; 3]| {
            [
                (a[0] + b[0]) / 2.0,
                (a[1] + b[1]) / 2.0,
                (a[2] + b[2]) / 2.0,
            ]
        };
        let rebuild = |phys: [[f64; 2]; 3], bary: [[f64; 3]; 3], jac: f64| {
            let nv = dim + 1;
            let mut centroid = [0.0; 2];
            for p in phys.iter().take(nv) {
                centroid[0] += p[0] / nv as f64;
                centroid[1] += p[1] / nv as f64;
            }
            let radius = (0..nv).map(|k| dist(phys[k], centroid)).fold(0.0, f64::max);
            let diam = if dim == 1 {
                dist(phys[0], phys[1])
            } else {
                dist(phys[0], phys[1])
                    .max(dist(phys[1], phys[2]))
                    .max(dist(phys[0], phys[2]))
            };
            SubCell {
                phys,
                bary,
                jac,
                centroid,
                radius,
                diam,
            }
        };
        if dim == 1 {
            let pm = mid_p(self.phys[0], self.phys[1]);
            let bm = mid_b(self.bary[0], self.bary[1]);
            vec![
                rebuild([self.phys[0], pm, self.phys[2]], [self.bary[0], bm, self.bary[2]], self.jac / 2.0),
                rebuild([pm, self.phys[1], self.phys[2]], [bm, self.bary[1], self.bary[2]], self.jac / 2.0),
            ]
        } else {
            let p01 = mid_p(self.phys[0], self.phys[1]);
            let p12 = mid_p(self.phys[1], self.phys[2]);
            let p02 = mid_p(self.phys[0], self.phys[2]);
            let b01 = mid_b(self.bary[0], self.bary[1]);
            let b12 = mid_b(self.bary[1], self.bary[2]);
            let b02 = mid_b(self.bary[0], self.bary[2]);
            let j = self.jac / 4.0;
            vec![
                rebuild([self.phys[0], p01, p02], [self.bary[0], b01, b02], j),
                rebuild([p01, self.phys[1], p12], [b01, self.bary[1], b12], j),
                rebuild([p02, p12, self.phys[2]], [b02, b12, self.bary[2]], j),
                rebuild([p01, p12, p02], [b01, b12, b02], j),
            ]
        }
    }
}

/// Per-node consumer of a pair sweep. `psi` holds the hat differences of
/// the pair slots, `dvec = x - y`, and `wk` the weight including the
/// kernel value and all Jacobians.
trait NodeSink {
    fn node(&mut self, psi: &[f64; 6], count: usize, dvec: [f64; 2], wk: f64);
}

/// Scalar conductivity block: accumulates psi_i psi_j.
struct ScalarSink {
    vals: [f64; 21],
}

impl NodeSink for ScalarSink {
    #[inline]
    fn node(&mut self, psi: &[f64; 6], count: usize, _dvec: [f64; 2], wk: f64) {
        for i in 0..count {
            let pi = wk * psi[i];
            let row = &mut self.vals[tri_index(i, 0)..tri_index(i, 0) + i + 1];
            for (j, r) in row.iter_mut().enumerate() {
                *r += pi * psi[j];
            }
        }
    }
}

/// Peridynamic block: accumulates projected differences
/// `(psi_i e_c)(psi_j e_d)` over vertex-component slots.
struct PeridynamicSink {
    count: usize,
    vals: Vec<f64>,
}

impl NodeSink for PeridynamicSink {
    #[inline]
    fn node(&mut self, psi: &[f64; 6], count: usize, dvec: [f64; 2], wk: f64) {
        let dn = (dvec[0] * dvec[0] + dvec[1] * dvec[1]).sqrt();
        if dn == 0.0 {
            return;
        }
        let e = [dvec[0] / dn, dvec[1] / dn];
        let mut dv = [0.0f64; 12];
        for i in 0..count {
            dv[2 * i] = psi[i] * e[0];
            dv[2 * i + 1] = psi[i] * e[1];
        }
        let m = 2 * count;
        for i in 0..m {
            let di = wk * dv[i];
            for j in 0..=i {
                self.vals[tri_index(i, j)] += di * dv[j];
            }
        }
        self.count = m;
    }
}

#[inline]
fn run_rule<S: NodeSink>(
    rule: &PairQuadRule,
    c1: &SubCell,
    c2: &SubCell,
    layout_pos: (&[u8; 6], &[u8; 6], usize),
    neg_half_beta: f64,
    scale: f64,
    sink: &mut S,
) {
    let (pos1, pos2, count) = layout_pos;
    let j12 = scale * c1.jac * c2.jac;
    for node in &rule.nodes {
        // Physical points and hat values from barycentric corners.
        let mut x = [0.0f64; 2];
        let mut y = [0.0f64; 2];
        let mut h1 = [0.0f64; 3];
        let mut h2 = [0.0f64; 3];
        for k in 0..3 {
            let b1 = node.b1[k];
            let b2 = node.b2[k];
            x[0] += b1 * c1.phys[k][0];
            x[1] += b1 * c1.phys[k][1];
            y[0] += b2 * c2.phys[k][0];
            y[1] += b2 * c2.phys[k][1];
            for j in 0..3 {
                h1[j] += b1 * c1.bary[k][j];
                h2[j] += b2 * c2.bary[k][j];
            }
        }
        let dvec = [x[0] - y[0], x[1] - y[1]];
        let d2 = dvec[0] * dvec[0] + dvec[1] * dvec[1];
        let wk = j12 * node.w * d2.powf(neg_half_beta);
        let mut psi = [0.0f64; 6];
        for slot in 0..count {
            let a = pos1[slot];
            let b = pos2[slot];
            let va = if a == 255 { 0.0 } else { h1[a as usize] };
            let vb = if b == 255 { 0.0 } else { h2[b as usize] };
            psi[slot] = va - vb;
        }
        sink.node(&psi, count, dvec, wk);
    }
}

/// Integrates a disjoint pair, subdividing while the gap is small
/// relative to the element size.
fn run_disjoint<S: NodeSink>(
    dim: usize,
    rules: &PairRuleSet,
    c1: &SubCell,
    c2: &SubCell,
    layout_pos: (&[u8; 6], &[u8; 6], usize),
    neg_half_beta: f64,
    scale: f64,
    depth: usize,
    sink: &mut S,
) {
    let gap = (dist(c1.centroid, c2.centroid) - c1.radius - c2.radius).max(0.0);
    let size = c1.diam.max(c2.diam);
    let cfg = &rules.config;
    if gap < cfg.subdivide_ratio * size && depth < cfg.max_subdivision_depth {
        for a in c1.children(dim) {
            for b in c2.children(dim) {
                run_disjoint(dim, rules, &a, &b, layout_pos, neg_half_beta, scale, depth + 1, sink);
            }
        }
        return;
    }
    let rule = if gap <= cfg.far_distance_factor * size {
        &rules.near
    } else {
        &rules.far
    };
    run_rule(rule, c1, c2, layout_pos, neg_half_beta, scale, sink);
}

/// Computes the unit-coefficient block of one pair (scalar case).
fn scalar_block(
    dim: usize,
    geo: &[ElemGeom],
    dofs_of_vertex: &[i32],
    rules: &PairRuleSet,
    gamma: f64,
    beta: f64,
    t1: u32,
    t2: u32,
) -> PairBlock {
    let g1 = &geo[t1 as usize];
    let g2 = &geo[t2 as usize];
    let layout = slot_layout(dim, g1, g2, t1 == t2);
    let mult = if t1 == t2 { 1.0 } else { 2.0 };
    let scale = gamma * mult;
    let neg_half_beta = -beta / 2.0;
    let c1 = SubCell::from_geom(dim, g1, &layout.order1);
    let c2 = SubCell::from_geom(dim, g2, &layout.order2);
    let mut sink = ScalarSink { vals: [0.0; 21] };
    let pos = (&layout.pos1, &layout.pos2, layout.count);
    match layout.class {
        PairClass::Disjoint => {
            run_disjoint(dim, rules, &c1, &c2, pos, neg_half_beta, scale, 0, &mut sink)
        }
        class => run_rule(rules.rule_for(class), &c1, &c2, pos, neg_half_beta, scale, &mut sink),
    }
    let mut dofs = [-1i32; 6];
    for (k, d) in dofs.iter_mut().enumerate().take(layout.count) {
        *d = dofs_of_vertex[layout.verts[k] as usize];
    }
    PairBlock {
        t1,
        t2,
        dofs,
        vals: sink.vals,
    }
}

fn dof_table(mesh: &Mesh) -> Vec<i32> {
    (0..mesh.n_vertices())
        .map(|v| mesh.dof_of_vertex(v) as i32)
        .collect()
}

fn check_dense_budget(n: usize) -> Result<()> {
    if n > MAX_DENSE_DOFS {
        return Err(Error::config(format!(
            "fractional assembly with {n} DOFs exceeds the dense storage budget"
        )));
    }
    Ok(())
}

/// Sweeps all pairs, feeding blocks in canonical order to the consumer.
fn sweep_scalar(
    mesh: &Mesh,
    s: f64,
    quad: &QuadConfig,
    mut consume: impl FnMut(&PairBlock),
) -> Result<()> {
    let dim = mesh.dimension();
    let geo = geometry(mesh);
    let pairs = admissible_pairs(&geo);
    let rules = PairRuleSet::new(dim, s, *quad)?;
    let gamma = gamma_constant(s, dim, 2)?;
    let beta = dim as f64 + 2.0 * s;
    let dofs = dof_table(mesh);
    for chunk in pairs.chunks(CHUNK) {
        let blocks: Vec<PairBlock> = chunk
            .par_iter()
            .map(|&(t1, t2)| scalar_block(dim, &geo, &dofs, &rules, gamma, beta, t1, t2))
            .collect();
        for b in &blocks {
            consume(b);
        }
    }
    Ok(())
}

fn fold_block_into_packed(packed: &mut [f64], b: &PairBlock, coeff: f64) {
    for i in 0..6 {
        let di = b.dofs[i];
        if di < 0 {
            continue;
        }
        for j in 0..=i {
            let dj = b.dofs[j];
            if dj < 0 {
                continue;
            }
            let v = b.vals[tri_index(i, j)];
            if v == 0.0 {
                continue;
            }
            let (hi, lo) = if di >= dj { (di, dj) } else { (dj, di) };
            packed[tri_index(hi as usize, lo as usize)] += coeff * v;
        }
    }
}

fn block_energy(b: &PairBlock, u: &[f64]) -> f64 {
    let mut uv = [0.0f64; 6];
    for k in 0..6 {
        let d = b.dofs[k];
        uv[k] = if d < 0 { 0.0 } else { u[d as usize] };
    }
    let mut q = 0.0;
    for i in 0..6 {
        for j in 0..=i {
            let v = b.vals[tri_index(i, j)];
            q += if i == j { v * uv[i] * uv[i] } else { 2.0 * v * uv[i] * uv[j] };
        }
    }
    q
}

pub(crate) fn assemble_fractional_scalar(
    mesh: &Mesh,
    design: &DesignField,
    s: f64,
    quad: &QuadConfig,
) -> Result<SymSparseMatrix> {
    let n = mesh.n_interior_vertices();
    check_dense_budget(n)?;
    let mut packed = vec![0.0f64; n * (n + 1) / 2];
    sweep_scalar(mesh, s, quad, |b| {
        let coeff = 0.5 * (design.value(b.t1 as usize) + design.value(b.t2 as usize));
        fold_block_into_packed(&mut packed, b, coeff);
    })?;
    Ok(SymSparseMatrix::from_dense_lower(n, &packed))
}

pub(crate) fn gradient_sweep_scalar(
    mesh: &Mesh,
    u: &StateField,
    s: f64,
    quad: &QuadConfig,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0f64; mesh.n_elements()];
    let uv = u.values();
    sweep_scalar(mesh, s, quad, |b| {
        let q = 0.5 * block_energy(b, uv);
        g[b.t1 as usize] += q;
        g[b.t2 as usize] += q;
    })?;
    Ok(g)
}

/// Precomputed pair blocks of one fractional scalar operator; lets the
/// optimizer reassemble for new designs and resweep gradients without
/// repeating the quadrature. Memory is about 200 bytes per element pair.
pub struct PairCache {
    blocks: Vec<PairBlock>,
    n_dofs: usize,
    n_elements: usize,
}

impl PairCache {
    /// Estimated memory for a cache on this mesh.
    pub fn estimated_bytes(mesh: &Mesh) -> usize {
        let geo = geometry(mesh);
        let n_int = geo.iter().filter(|g| g.interior).count() as u64;
        let n_all = geo.len() as u64;
        let n_hor = n_all - n_int;
        // interior-interior + interior-horizon (+ diagonal).
        let pairs = n_int * (n_int + 1) / 2 + n_int * n_hor;
        (pairs as usize).saturating_mul(std::mem::size_of::<PairBlock>())
    }

    pub fn build(mesh: &Mesh, s: f64, r_horizon: f64, quad: &QuadConfig) -> Result<Self> {
        if mesh.horizon_width() + 1e-9 * mesh.h() < r_horizon {
            return Err(Error::config(
                "mesh horizon layer is narrower than the requested horizon",
            ));
        }
        let n = mesh.n_interior_vertices();
        check_dense_budget(n)?;
        let mut blocks = Vec::new();
        sweep_scalar(mesh, s, quad, |b| blocks.push(*b))?;
        Ok(PairCache {
            blocks,
            n_dofs: n,
            n_elements: mesh.n_elements(),
        })
    }

    pub fn assemble(&self, design: &DesignField) -> SymSparseMatrix {
        let n = self.n_dofs;
        let mut packed = vec![0.0f64; n * (n + 1) / 2];
        for b in &self.blocks {
            let coeff = 0.5 * (design.value(b.t1 as usize) + design.value(b.t2 as usize));
            fold_block_into_packed(&mut packed, b, coeff);
        }
        SymSparseMatrix::from_dense_lower(n, &packed)
    }

    pub fn gradients(&self, u: &StateField) -> Vec<f64> {
        let mut g = vec![0.0f64; self.n_elements];
        let uv = u.values();
        for b in &self.blocks {
            let q = 0.5 * block_energy(b, uv);
            g[b.t1 as usize] += q;
            g[b.t2 as usize] += q;
        }
        g
    }
}

/// Peridynamic sweeps share the pair enumeration but build
/// vertex-component blocks; they are used on small meshes only and run
/// single-threaded.
fn sweep_peridynamic(
    mesh: &Mesh,
    s: f64,
    quad: &QuadConfig,
    mut consume: impl FnMut(u32, u32, &[i32; 12], &[f64]),
) -> Result<()> {
    let dim = mesh.dimension();
    let geo = geometry(mesh);
    let pairs = admissible_pairs(&geo);
    let rules = PairRuleSet::new(dim, s, *quad)?;
    let gamma = gamma_constant(s, dim, 2)?;
    let beta = dim as f64 + 2.0 * s;
    let dofs = dof_table(mesh);
    for &(t1, t2) in &pairs {
        let g1 = &geo[t1 as usize];
        let g2 = &geo[t2 as usize];
        let layout = slot_layout(dim, g1, g2, t1 == t2);
        let mult = if t1 == t2 { 1.0 } else { 2.0 };
        let scale = gamma * mult;
        let neg_half_beta = -beta / 2.0;
        let c1 = SubCell::from_geom(dim, g1, &layout.order1);
        let c2 = SubCell::from_geom(dim, g2, &layout.order2);
        let mut sink = PeridynamicSink {
            count: 2 * layout.count,
            vals: vec![0.0; 78],
        };
        let pos = (&layout.pos1, &layout.pos2, layout.count);
        match layout.class {
            PairClass::Disjoint => {
                run_disjoint(dim, &rules, &c1, &c2, pos, neg_half_beta, scale, 0, &mut sink)
            }
            class => {
                run_rule(rules.rule_for(class), &c1, &c2, pos, neg_half_beta, scale, &mut sink)
            }
        }
        let mut pd_dofs = [-1i32; 12];
        for k in 0..layout.count {
            let d = dofs[layout.verts[k] as usize];
            for c in 0..dim {
                pd_dofs[2 * k + c] = if d < 0 { -1 } else { dim as i32 * d + c as i32 };
            }
        }
        consume(t1, t2, &pd_dofs, &sink.vals);
    }
    Ok(())
}

pub(crate) fn assemble_fractional_peridynamic(
    mesh: &Mesh,
    design: &DesignField,
    s: f64,
    quad: &QuadConfig,
) -> Result<SymSparseMatrix> {
    let dim = mesh.dimension();
    let n = mesh.n_interior_vertices() * dim;
    check_dense_budget(n)?;
    let mut packed = vec![0.0f64; n * (n + 1) / 2];
    sweep_peridynamic(mesh, s, quad, |t1, t2, dofs, vals| {
        let coeff = 0.5 * (design.value(t1 as usize) + design.value(t2 as usize));
        for i in 0..12 {
            let di = dofs[i];
            if di < 0 {
                continue;
            }
            for j in 0..=i {
                let dj = dofs[j];
                if dj < 0 {
                    continue;
                }
                let v = vals[tri_index(i, j)];
                if v == 0.0 {
                    continue;
                }
                let (hi, lo) = if di >= dj { (di, dj) } else { (dj, di) };
                packed[tri_index(hi as usize, lo as usize)] += coeff * v;
            }
        }
    })?;
    Ok(SymSparseMatrix::from_dense_lower(n, &packed))
}

pub(crate) fn gradient_sweep_peridynamic(
    mesh: &Mesh,
    u: &StateField,
    s: f64,
    quad: &QuadConfig,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0f64; mesh.n_elements()];
    let uv = u.values();
    sweep_peridynamic(mesh, s, quad, |t1, t2, dofs, vals| {
        let mut loc = [0.0f64; 12];
        for k in 0..12 {
            let d = dofs[k];
            loc[k] = if d < 0 { 0.0 } else { uv[d as usize] };
        }
        let mut q = 0.0;
        for i in 0..12 {
            for j in 0..=i {
                let v = vals[tri_index(i, j)];
                q += if i == j { v * loc[i] * loc[i] } else { 2.0 * v * loc[i] * loc[j] };
            }
        }
        g[t1 as usize] += 0.5 * q;
        g[t2 as usize] += 0.5 * q;
    })?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::FormKind;
    use crate::mesh::{build_interval_mesh, extend_with_horizon};

    fn frac_kind(s: f64, r: f64) -> FormKind {
        FormKind::FractionalConductivity { s, r_horizon: r }
    }

    #[test]
    fn fractional_needs_horizon_layer() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let design = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let err = crate::forms::assemble_stiffness(
            &mesh,
            &design,
            frac_kind(0.5, 0.25),
            &QuadConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn fractional_matrix_is_spd_and_linear_in_coefficient() {
        let base = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let mesh = extend_with_horizon(&base, 0.25).unwrap();
        let quad = QuadConfig::default();
        let a1 = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let a2 = DesignField::uniform(&mesh, 2.0, (0.1, 2.0)).unwrap();
        let k1 =
            crate::forms::assemble_stiffness(&mesh, &a1, frac_kind(0.5, 0.25), &quad).unwrap();
        let k2 =
            crate::forms::assemble_stiffness(&mesh, &a2, frac_kind(0.5, 0.25), &quad).unwrap();
        // Scaling the design scales the matrix.
        for (i, j, v) in k1.lower_entries() {
            assert!((2.0 * v - k2.get(i, j)).abs() <= 1e-12 * v.abs().max(1e-30));
        }
        // SPD via Cholesky.
        assert!(crate::linalg::cholesky_solve(&k1, &vec![1.0; k1.n()]).is_ok());
    }

    /// Two elements on (0,1), horizon 1, a ≡ 1, s = 1/2: the single
    /// entry is 2.3230415389174765 (25-digit arbitrary-precision
    /// integration of the kernel form, matched by the dense oracle).
    #[test]
    fn one_dof_entry_matches_reference() {
        let base = build_interval_mesh(0.0, 1.0, 2).unwrap();
        let mesh = extend_with_horizon(&base, 1.0).unwrap();
        let design = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let k = crate::forms::assemble_stiffness(
            &mesh,
            &design,
            frac_kind(0.5, 1.0),
            &QuadConfig::fine_1d(),
        )
        .unwrap();
        let want = 2.3230415389174765;
        assert!(
            (k.get(0, 0) - want).abs() <= 1e-9 * want,
            "entry {} vs {want}",
            k.get(0, 0)
        );
    }

    #[test]
    fn pair_cache_matches_direct_assembly() {
        let base = build_interval_mesh(0.0, 1.0, 12).unwrap();
        let mesh = extend_with_horizon(&base, 0.2).unwrap();
        let quad = QuadConfig::default();
        let design = DesignField::from_values(
            &mesh,
            (0..mesh.n_elements()).map(|e| 0.1 + 0.05 * (e % 7) as f64).collect(),
            1.05,
            (0.1, 2.0),
        )
        .unwrap();
        let cache = PairCache::build(&mesh, 0.4, 0.2, &quad).unwrap();
        let ka = cache.assemble(&design);
        let kb = assemble_fractional_scalar(&mesh, &design, 0.4, &quad).unwrap();
        for (i, j, v) in ka.lower_entries() {
            assert!((v - kb.get(i, j)).abs() <= 1e-14 * v.abs().max(1e-30));
        }

        let n = mesh.n_interior_vertices();
        let u = StateField::from_values(
            &mesh,
            1,
            (0..n).map(|i| ((i * 37 + 11) % 10) as f64 / 10.0 - 0.4).collect(),
        )
        .unwrap();
        let ga = cache.gradients(&u);
        let gb = gradient_sweep_scalar(&mesh, &u, 0.4, &quad).unwrap();
        for (x, y) in ga.iter().zip(&gb) {
            assert!((x - y).abs() <= 1e-13 * x.abs().max(1e-30));
        }
        // Partition identity: sum of element energies = u^T K[1] u.
        let ones = DesignField::uniform(&mesh, 1.0, (0.1, 2.0)).unwrap();
        let k1 = cache.assemble(&ones);
        let total: f64 = ga.iter().sum();
        let energy = k1.quadratic_form(u.values());
        assert!((total - energy).abs() <= 1e-10 * energy.abs());
    }
}
