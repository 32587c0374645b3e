//! Simplicial meshes of the design domain and its horizon extension.
//!
//! Meshes are 1D interval partitions or 2D triangulations. The design
//! domain Ω carries `Interior` elements and the degrees of freedom; the
//! surrounding layer of width `R` (so that the mesh covers Ω enlarged by a
//! ball of radius `R`) carries `HorizonLayer` elements whose vertices never
//! hold degrees of freedom. Disk meshes are built from concentric rings
//! with `8 j` vertices on ring `j`, which makes the interior vertex count
//! of a disk with `m` rings exactly `(2m - 1)^2`.
//!
//! Meshes are immutable after construction and safe to share across
//! threads.

use crate::error::Error;
use crate::Result;
use std::fmt::Write as _;
use std::f64::consts::PI;

/// Element classification by position relative to the design domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementRegion {
    /// Element lies in the closure of the design domain Ω.
    Interior,
    /// Element lies in the horizon layer Ω_R \ Ω.
    HorizonLayer,
}

/// Adjacency class of an element pair, used to select quadrature rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairClass {
    /// No shared vertices.
    Disjoint,
    /// Exactly one shared vertex.
    VertexTouch,
    /// Two shared vertices (2D only).
    EdgeTouch,
    /// The same element twice.
    Identical,
}

/// A conforming simplicial mesh (1D intervals or 2D triangles).
#[derive(Clone, Debug)]
pub struct Mesh {
    dimension: usize,
    /// Vertex coordinates; the second component is 0 for 1D meshes.
    vertices: Vec<[f64; 2]>,
    /// Flat element-vertex connectivity with stride `dimension + 1`.
    elem_vertices: Vec<usize>,
    interior_vertex: Vec<bool>,
    element_region: Vec<ElementRegion>,
    /// Interior DOF index per vertex, -1 if the vertex carries none.
    dof_of_vertex: Vec<i64>,
    n_dofs: usize,
    h: f64,
    quasi_uniformity_ratio: f64,
    horizon_width: f64,
}

impl Mesh {
    /// Builds a mesh from raw data, validating all structural invariants.
    pub fn from_raw(
        dimension: usize,
        vertices: Vec<[f64; 2]>,
        elem_vertices: Vec<usize>,
        interior_vertex: Vec<bool>,
        element_region: Vec<ElementRegion>,
    ) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::param("mesh dimension must be 1 or 2"));
        }
        let stride = dimension + 1;
        if elem_vertices.len() % stride != 0 {
            return Err(Error::param("element connectivity length mismatch"));
        }
        let n_elements = elem_vertices.len() / stride;
        if n_elements == 0 {
            return Err(Error::param("mesh has no elements"));
        }
        if interior_vertex.len() != vertices.len() {
            return Err(Error::param("interior flag count mismatch"));
        }
        if element_region.len() != n_elements {
            return Err(Error::param("element region count mismatch"));
        }
        for &v in &elem_vertices {
            if v >= vertices.len() {
                return Err(Error::param("element references missing vertex"));
            }
        }

        let mut dof_of_vertex = vec![-1i64; vertices.len()];
        let mut n_dofs = 0usize;
        for (v, &flag) in interior_vertex.iter().enumerate() {
            if flag {
                dof_of_vertex[v] = n_dofs as i64;
                n_dofs += 1;
            }
        }

        let mut mesh = Mesh {
            dimension,
            vertices,
            elem_vertices,
            interior_vertex,
            element_region,
            dof_of_vertex,
            n_dofs,
            h: 0.0,
            quasi_uniformity_ratio: 0.0,
            horizon_width: 0.0,
        };
        mesh.validate()?;
        mesh.compute_size_metrics();
        mesh.horizon_width = mesh.measure_horizon_width();
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let mut touches_interior = vec![false; self.vertices.len()];
        for e in 0..self.n_elements() {
            let meas = self.element_measure(e);
            if !(meas > 0.0) {
                return Err(Error::NumericalIntegrity(format!(
                    "element {e} has non-positive measure {meas:.3e}"
                )));
            }
            if self.element_region[e] == ElementRegion::Interior {
                for &v in self.element(e) {
                    touches_interior[v] = true;
                }
            }
        }
        // Every DOF-carrying vertex must belong to an Interior element.
        for (v, &flag) in self.interior_vertex.iter().enumerate() {
            if flag && !touches_interior[v] {
                return Err(Error::param(format!(
                    "vertex {v} is flagged interior but touches no interior element"
                )));
            }
        }
        self.validate_conformity()
    }

    /// Conformity check: in 2D every edge belongs to at most two elements;
    /// in 1D every vertex belongs to at most two elements. Together with
    /// positive measures this rules out overlaps and hanging nodes on the
    /// meshes this crate produces.
    fn validate_conformity(&self) -> Result<()> {
        use std::collections::HashMap;
        if self.dimension == 1 {
            let mut count: HashMap<usize, usize> = HashMap::new();
            for e in 0..self.n_elements() {
                for &v in self.element(e) {
                    *count.entry(v).or_insert(0) += 1;
                }
            }
            if count.values().any(|&c| c > 2) {
                return Err(Error::param("1D mesh vertex shared by more than 2 elements"));
            }
        } else {
            let mut count: HashMap<(usize, usize), usize> = HashMap::new();
            for e in 0..self.n_elements() {
                let el = self.element(e);
                for k in 0..3 {
                    let (a, b) = (el[k], el[(k + 1) % 3]);
                    let key = (a.min(b), a.max(b));
                    *count.entry(key).or_insert(0) += 1;
                }
            }
            if count.values().any(|&c| c > 2) {
                return Err(Error::param("2D mesh edge shared by more than 2 elements"));
            }
        }
        Ok(())
    }

    fn compute_size_metrics(&mut self) {
        let mut h: f64 = 0.0;
        let mut min_inradius = f64::INFINITY;
        for e in 0..self.n_elements() {
            h = h.max(self.element_diameter(e));
            min_inradius = min_inradius.min(self.element_inradius(e));
        }
        self.h = h;
        self.quasi_uniformity_ratio = h / min_inradius;
    }

    /// Estimates the width of the meshed horizon layer: the minimum
    /// distance from the outer mesh boundary to the boundary of Ω.
    /// Returns 0 when no horizon elements are present.
    fn measure_horizon_width(&self) -> f64 {
        if !self
            .element_region
            .iter()
            .any(|&r| r == ElementRegion::HorizonLayer)
        {
            return 0.0;
        }
        // Vertices of Interior elements that are not DOFs approximate ∂Ω.
        let mut on_domain_boundary = vec![false; self.vertices.len()];
        for e in 0..self.n_elements() {
            if self.element_region[e] == ElementRegion::Interior {
                for &v in self.element(e) {
                    if !self.interior_vertex[v] {
                        on_domain_boundary[v] = true;
                    }
                }
            }
        }
        let boundary_pts: Vec<[f64; 2]> = (0..self.vertices.len())
            .filter(|&v| on_domain_boundary[v])
            .map(|v| self.vertices[v])
            .collect();
        // Outer boundary: vertices on a face shared by exactly one element.
        let outer = self.outer_boundary_vertices();
        let mut width = f64::INFINITY;
        for &v in &outer {
            if on_domain_boundary[v] {
                continue;
            }
            let p = self.vertices[v];
            let d = boundary_pts
                .iter()
                .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            width = width.min(d);
        }
        if width.is_finite() {
            width
        } else {
            0.0
        }
    }

    fn outer_boundary_vertices(&self) -> Vec<usize> {
        use std::collections::HashMap;
        let mut out = Vec::new();
        if self.dimension == 1 {
            let mut count: HashMap<usize, usize> = HashMap::new();
            for e in 0..self.n_elements() {
                for &v in self.element(e) {
                    *count.entry(v).or_insert(0) += 1;
                }
            }
            for (&v, &c) in &count {
                if c == 1 {
                    out.push(v);
                }
            }
        } else {
            let mut count: HashMap<(usize, usize), usize> = HashMap::new();
            for e in 0..self.n_elements() {
                let el = self.element(e);
                for k in 0..3 {
                    let (a, b) = (el[k], el[(k + 1) % 3]);
                    *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            let mut flag = vec![false; self.vertices.len()];
            for (&(a, b), &c) in &count {
                if c == 1 {
                    flag[a] = true;
                    flag[b] = true;
                }
            }
            for (v, &f) in flag.iter().enumerate() {
                if f {
                    out.push(v);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elem_vertices.len() / (self.dimension + 1)
    }

    /// Number of interior (DOF-carrying) vertices.
    pub fn n_interior_vertices(&self) -> usize {
        self.n_dofs
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn is_interior_vertex(&self, v: usize) -> bool {
        self.interior_vertex[v]
    }

    /// Interior DOF index of a vertex, or -1.
    pub fn dof_of_vertex(&self, v: usize) -> i64 {
        self.dof_of_vertex[v]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let s = self.dimension + 1;
        &self.elem_vertices[e * s..(e + 1) * s]
    }

    pub fn element_region(&self, e: usize) -> ElementRegion {
        self.element_region[e]
    }

    /// Length (1D) or area (2D) of an element.
    pub fn element_measure(&self, e: usize) -> f64 {
        let el = self.element(e);
        if self.dimension == 1 {
            (self.vertices[el[1]][0] - self.vertices[el[0]][0]).abs()
        } else {
            let a = self.vertices[el[0]];
            let b = self.vertices[el[1]];
            let c = self.vertices[el[2]];
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
        }
    }

    /// Signed area of a 2D element (positive for counter-clockwise order).
    pub fn element_signed_area(&self, e: usize) -> f64 {
        let el = self.element(e);
        let a = self.vertices[el[0]];
        let b = self.vertices[el[1]];
        let c = self.vertices[el[2]];
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let el = self.element(e);
        if self.dimension == 1 {
            self.element_measure(e)
        } else {
            let mut d: f64 = 0.0;
            for k in 0..3 {
                let p = self.vertices[el[k]];
                let q = self.vertices[el[(k + 1) % 3]];
                d = d.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
            d
        }
    }

    /// Inradius: half the length in 1D, `2 |T| / perimeter` in 2D.
    pub fn element_inradius(&self, e: usize) -> f64 {
        if self.dimension == 1 {
            0.5 * self.element_measure(e)
        } else {
            let el = self.element(e);
            let mut per = 0.0;
            for k in 0..3 {
                let p = self.vertices[el[k]];
                let q = self.vertices[el[(k + 1) % 3]];
                per += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            }
            2.0 * self.element_measure(e) / per
        }
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        let el = self.element(e);
        let n = self.dimension + 1;
        let mut c = [0.0; 2];
        for &v in el {
            c[0] += self.vertices[v][0];
            c[1] += self.vertices[v][1];
        }
        [c[0] / n as f64, c[1] / n as f64]
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Max element diameter over min element inradius.
    pub fn quasi_uniformity_ratio(&self) -> f64 {
        self.quasi_uniformity_ratio
    }

    /// Width of the meshed horizon layer (0 when the mesh covers Ω only).
    pub fn horizon_width(&self) -> f64 {
        self.horizon_width
    }

    /// Total measure of the Interior elements (the polygonal approximation
    /// of |Ω|).
    pub fn interior_measure(&self) -> f64 {
        (0..self.n_elements())
            .filter(|&e| self.element_region[e] == ElementRegion::Interior)
            .map(|e| self.element_measure(e))
            .sum()
    }

    /// Classifies an element pair by its number of shared vertices.
    pub fn classify_pair(&self, e1: usize, e2: usize) -> Result<PairClass> {
        let n = self.n_elements();
        if e1 >= n || e2 >= n {
            return Err(Error::param(format!(
                "element index out of range: ({e1}, {e2}) with {n} elements"
            )));
        }
        if e1 == e2 {
            return Ok(PairClass::Identical);
        }
        let a = self.element(e1);
        let b = self.element(e2);
        let mut shared = 0;
        for &v in a {
            if b.contains(&v) {
                shared += 1;
            }
        }
        Ok(match shared {
            0 => PairClass::Disjoint,
            1 => PairClass::VertexTouch,
            2 => PairClass::EdgeTouch,
            _ => PairClass::Identical,
        })
    }

    /// Serializes the mesh to the plain-text exchange format:
    /// a header `dim n_vertices n_elements`, one line per vertex
    /// (`x [y] interior_flag`) and one line per element
    /// (`v0 v1 [v2] region_tag` with 0 = Interior, 1 = HorizonLayer).
    /// LF line endings, floats in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {}",
            self.dimension,
            self.n_vertices(),
            self.n_elements()
        );
        for (v, p) in self.vertices.iter().enumerate() {
            let flag = i32::from(self.interior_vertex[v]);
            if self.dimension == 1 {
                let _ = writeln!(s, "{} {}", p[0], flag);
            } else {
                let _ = writeln!(s, "{} {} {}", p[0], p[1], flag);
            }
        }
        for e in 0..self.n_elements() {
            let el = self.element(e);
            let tag = match self.element_region[e] {
                ElementRegion::Interior => 0,
                ElementRegion::HorizonLayer => 1,
            };
            if self.dimension == 1 {
                let _ = writeln!(s, "{} {} {}", el[0], el[1], tag);
            } else {
                let _ = writeln!(s, "{} {} {} {}", el[0], el[1], el[2], tag);
            }
        }
        s
    }

    /// Parses the plain-text format produced by [`Mesh::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty mesh file".into()))?;
        let mut it = header.split_whitespace();
        let dim: usize = parse_tok(it.next(), "dim")?;
        let nv: usize = parse_tok(it.next(), "n_vertices")?;
        let ne: usize = parse_tok(it.next(), "n_elements")?;
        let mut vertices = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated vertex block".into()))?;
            let mut it = line.split_whitespace();
            let x: f64 = parse_tok(it.next(), "x")?;
            let y: f64 = if dim == 2 { parse_tok(it.next(), "y")? } else { 0.0 };
            let f: i32 = parse_tok(it.next(), "interior_flag")?;
            vertices.push([x, y]);
            flags.push(f != 0);
        }
        let stride = dim + 1;
        let mut elems = Vec::with_capacity(ne * stride);
        let mut regions = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated element block".into()))?;
            let mut it = line.split_whitespace();
            for _ in 0..stride {
                let v: usize = parse_tok(it.next(), "vertex index")?;
                elems.push(v);
            }
            let tag: i32 = parse_tok(it.next(), "region_tag")?;
            regions.push(match tag {
                0 => ElementRegion::Interior,
                1 => ElementRegion::HorizonLayer,
                _ => return Err(Error::Parse(format!("unknown region tag {tag}"))),
            });
        }
        Mesh::from_raw(dim, vertices, elems, flags, regions)
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("malformed {what}")))
}

/// Uniform partition of `[a_end, b_end]` into `num_elements` intervals.
/// Endpoints carry no degrees of freedom.
pub fn build_interval_mesh(a_end: f64, b_end: f64, num_elements: usize) -> Result<Mesh> {
    if !(a_end < b_end) {
        return Err(Error::param("interval bounds must satisfy a < b"));
    }
    if num_elements == 0 {
        return Err(Error::param("need at least one element"));
    }
    let n = num_elements;
    let h = (b_end - a_end) / n as f64;
    let mut vertices = Vec::with_capacity(n + 1);
    let mut flags = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = if i == n { b_end } else { a_end + i as f64 * h };
        vertices.push([x, 0.0]);
        flags.push(i != 0 && i != n);
    }
    let mut elems = Vec::with_capacity(2 * n);
    for i in 0..n {
        elems.push(i);
        elems.push(i + 1);
    }
    Mesh::from_raw(1, vertices, elems, flags, vec![ElementRegion::Interior; n])
}

/// Disk mesh from `m` concentric rings (ring `j` holds `8 j` vertices at
/// radius `j r / m`), giving exactly `(2m - 1)^2` interior vertices.
pub fn build_disk_mesh_rings(radius: f64, rings: usize) -> Result<Mesh> {
    if !(radius > 0.0) {
        return Err(Error::param("disk radius must be positive"));
    }
    if rings == 0 {
        return Err(Error::param("need at least one ring"));
    }
    let m = rings;
    let mut vertices: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    let mut flags = vec![true];
    let mut ring_start = vec![0usize; m + 1];
    for j in 1..=m {
        ring_start[j] = vertices.len();
        let nj = 8 * j;
        let rho = radius * j as f64 / m as f64;
        for k in 0..nj {
            let th = 2.0 * PI * k as f64 / nj as f64;
            vertices.push([rho * th.cos(), rho * th.sin()]);
            flags.push(j != m);
        }
    }
    let mut elems: Vec<usize> = Vec::new();
    // Center fan.
    for k in 0..8 {
        elems.extend_from_slice(&[0, ring_start[1] + k, ring_start[1] + (k + 1) % 8]);
    }
    // Annuli.
    for j in 1..m {
        zipper_annulus(
            &mut elems,
            ring_start[j],
            8 * j,
            ring_start[j + 1],
            8 * (j + 1),
        );
    }
    let n_elems = elems.len() / 3;
    let mesh = Mesh::from_raw(
        2,
        vertices,
        elems,
        flags,
        vec![ElementRegion::Interior; n_elems],
    )?;
    for e in 0..mesh.n_elements() {
        if mesh.element_signed_area(e) <= 0.0 {
            return Err(Error::NumericalIntegrity(
                "disk triangulation produced a non-CCW element".into(),
            ));
        }
    }
    Ok(mesh)
}

/// Triangulates the annulus between two vertex rings by merging them in
/// angular order. Ring vertices sit at angles `2 pi k / n`; ties are
/// resolved by exact integer comparison, so the result is deterministic.
fn zipper_annulus(
    elems: &mut Vec<usize>,
    in_start: usize,
    n_in: usize,
    out_start: usize,
    n_out: usize,
) {
    let mut i = 0usize; // inner ring position
    let mut k = 0usize; // outer ring position
    while i < n_in || k < n_out {
        // Compare the next angular steps (i+1)/n_in vs (k+1)/n_out exactly.
        let advance_outer = if k == n_out {
            false
        } else if i == n_in {
            true
        } else {
            (k + 1) * n_in <= (i + 1) * n_out
        };
        if advance_outer {
            elems.extend_from_slice(&[
                in_start + i % n_in,
                out_start + k,
                out_start + (k + 1) % n_out,
            ]);
            k += 1;
        } else {
            elems.extend_from_slice(&[
                in_start + i,
                out_start + k % n_out,
                in_start + (i + 1) % n_in,
            ]);
            i += 1;
        }
    }
}

/// Conforming triangulation of a polygonal approximation of the disk of
/// the given radius with `h <= target_h`. Boundary vertices lie exactly
/// on the circle.
pub fn build_disk_mesh(radius: f64, target_h: f64) -> Result<Mesh> {
    if !(radius > 0.0) {
        return Err(Error::param("disk radius must be positive"));
    }
    if !(target_h > 0.0 && target_h < radius) {
        return Err(Error::param("target_h must satisfy 0 < target_h < radius"));
    }
    // Cell diagonals are about 1.3 radius / m; start just below and refine.
    let mut m = ((radius / target_h).floor() as usize).max(1);
    loop {
        let mesh = build_disk_mesh_rings(radius, m)?;
        if mesh.h() <= target_h {
            return Ok(mesh);
        }
        if m > 100_000 {
            return Err(Error::param(
                "target_h unreachable within generator limits",
            ));
        }
        m += (m / 8).max(1);
    }
}

/// Ring count whose disk mesh has exactly `dofs` interior vertices
/// (`dofs` must be an odd square `(2m-1)^2`).
pub fn disk_rings_for_dofs(dofs: usize) -> Result<usize> {
    let r = (dofs as f64).sqrt().round() as usize;
    if r * r != dofs || r % 2 == 0 {
        return Err(Error::param(format!(
            "interior DOF count {dofs} is not an odd square (2m-1)^2"
        )));
    }
    Ok((r + 1) / 2)
}

/// Extends a mesh of Ω by a horizon layer of width `R`. For `R = 0` the
/// mesh is returned unchanged. All new vertices carry no DOFs.
pub fn extend_with_horizon(mesh: &Mesh, r_horizon: f64) -> Result<Mesh> {
    if r_horizon < 0.0 {
        return Err(Error::param("horizon must be nonnegative"));
    }
    if r_horizon == 0.0 {
        return Ok(mesh.clone());
    }
    if mesh.horizon_width() > 0.0 {
        return Err(Error::config("mesh already carries a horizon layer"));
    }
    if mesh.dimension == 1 {
        extend_interval(mesh, r_horizon)
    } else {
        extend_disk(mesh, r_horizon)
    }
}

fn extend_interval(mesh: &Mesh, r: f64) -> Result<Mesh> {
    let left = mesh
        .vertices
        .iter()
        .map(|p| p[0])
        .fold(f64::INFINITY, f64::min);
    let right = mesh
        .vertices
        .iter()
        .map(|p| p[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let steps = (r / mesh.h()).ceil().max(1.0) as usize;
    let dh = r / steps as f64;

    let mut vertices = mesh.vertices.clone();
    let mut flags = mesh.interior_vertex.clone();
    let mut elems = mesh.elem_vertices.clone();
    let mut regions = mesh.element_region.clone();

    let left_idx = mesh
        .vertices
        .iter()
        .position(|p| p[0] == left)
        .expect("leftmost vertex");
    let right_idx = mesh
        .vertices
        .iter()
        .position(|p| p[0] == right)
        .expect("rightmost vertex");

    let mut prev = left_idx;
    for i in 1..=steps {
        vertices.push([left - i as f64 * dh, 0.0]);
        flags.push(false);
        let cur = vertices.len() - 1;
        elems.extend_from_slice(&[cur, prev]);
        regions.push(ElementRegion::HorizonLayer);
        prev = cur;
    }
    let mut prev = right_idx;
    for i in 1..=steps {
        vertices.push([right + i as f64 * dh, 0.0]);
        flags.push(false);
        let cur = vertices.len() - 1;
        elems.extend_from_slice(&[prev, cur]);
        regions.push(ElementRegion::HorizonLayer);
        prev = cur;
    }
    Mesh::from_raw(1, vertices, elems, flags, regions)
}

fn extend_disk(mesh: &Mesh, r: f64) -> Result<Mesh> {
    // The boundary ring is the set of non-interior vertices, ordered by
    // angle. Disk meshes put them exactly on the circle.
    let mut boundary: Vec<usize> = (0..mesh.n_vertices())
        .filter(|&v| !mesh.interior_vertex[v])
        .collect();
    if boundary.is_empty() {
        return Err(Error::config("disk mesh has no boundary ring"));
    }
    let radius = {
        let p = mesh.vertices[boundary[0]];
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    };
    for &v in &boundary {
        let p = mesh.vertices[v];
        let rr = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if (rr - radius).abs() > 1e-9 * radius {
            return Err(Error::config(
                "horizon extension expects a disk mesh with circular boundary",
            ));
        }
    }
    // Order by angle in [0, 2 pi) so positions match the ring convention.
    let angle_of = |v: usize| -> f64 {
        let p = mesh.vertices[v];
        let a = p[1].atan2(p[0]);
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    };
    boundary.sort_by(|&a, &b| angle_of(a).partial_cmp(&angle_of(b)).unwrap());
    let n_b = boundary.len();
    // Ring count per spacing comparable to the interior mesh.
    let m_equiv = n_b / 8;
    let steps = ((r * m_equiv as f64 / radius).ceil().max(1.0)) as usize;
    let dr = r / steps as f64;

    let mut vertices = mesh.vertices.clone();
    let mut flags = mesh.interior_vertex.clone();
    let mut elems = mesh.elem_vertices.clone();
    let mut regions = mesh.element_region.clone();

    // First horizon ring connects to the existing boundary vertices; keep
    // their angular positions and grow the count with the radius.
    let mut prev_ring = boundary;
    let mut prev_count = n_b;
    let mut prev_is_base = true;
    for i in 1..=steps {
        let rho = radius + i as f64 * dr;
        let count = 8 * ((rho * m_equiv as f64 / radius).round().max(1.0) as usize);
        let start = vertices.len();
        for k in 0..count {
            let th = 2.0 * PI * k as f64 / count as f64;
            vertices.push([rho * th.cos(), rho * th.sin()]);
            flags.push(false);
        }
        let before = elems.len();
        if prev_is_base {
            // The base ring is a list of vertex ids at angles 2 pi k / n_b.
            zipper_annulus_indexed(&mut elems, &prev_ring, start, count);
        } else {
            zipper_annulus(&mut elems, prev_ring[0], prev_count, start, count);
        }
        let added = (elems.len() - before) / 3;
        regions.extend(std::iter::repeat(ElementRegion::HorizonLayer).take(added));
        prev_ring = vec![start];
        prev_count = count;
        prev_is_base = false;
    }
    Mesh::from_raw(2, vertices, elems, flags, regions)
}

/// Variant of [`zipper_annulus`] whose inner ring is given by explicit
/// vertex ids (already ordered by angle at positions `2 pi i / n`).
fn zipper_annulus_indexed(
    elems: &mut Vec<usize>,
    inner: &[usize],
    out_start: usize,
    n_out: usize,
) {
    let n_in = inner.len();
    let mut i = 0usize;
    let mut k = 0usize;
    while i < n_in || k < n_out {
        let advance_outer = if k == n_out {
            false
        } else if i == n_in {
            true
        } else {
            (k + 1) * n_in <= (i + 1) * n_out
        };
        if advance_outer {
            elems.extend_from_slice(&[
                inner[i % n_in],
                out_start + k,
                out_start + (k + 1) % n_out,
            ]);
            k += 1;
        } else {
            elems.extend_from_slice(&[inner[i], out_start + k % n_out, inner[(i + 1) % n_in]]);
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mesh_counts() {
        let m = build_interval_mesh(0.0, 1.0, 4).unwrap();
        assert_eq!(m.n_vertices(), 5);
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.n_interior_vertices(), 3);

        let m = build_interval_mesh(0.0, 1.0, 1).unwrap();
        assert_eq!(m.n_vertices(), 2);
        assert_eq!(m.n_interior_vertices(), 0);

        let m = build_interval_mesh(0.0, 2.0, 8).unwrap();
        assert!((m.h() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn interval_mesh_rejects_bad_input() {
        assert!(build_interval_mesh(1.0, 0.0, 4).is_err());
        assert!(build_interval_mesh(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn interval_horizon_extension() {
        let m = build_interval_mesh(0.0, 1.0, 4).unwrap();
        let ext = extend_with_horizon(&m, 0.25).unwrap();
        let xmin = (0..ext.n_vertices())
            .map(|v| ext.vertex(v)[0])
            .fold(f64::INFINITY, f64::min);
        let xmax = (0..ext.n_vertices())
            .map(|v| ext.vertex(v)[0])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((xmin + 0.25).abs() < 1e-14);
        assert!((xmax - 1.25).abs() < 1e-14);
        assert_eq!(ext.n_interior_vertices(), m.n_interior_vertices());
        assert!((ext.horizon_width() - 0.25).abs() < 1e-12);
        let n_layer = (0..ext.n_elements())
            .filter(|&e| ext.element_region(e) == ElementRegion::HorizonLayer)
            .count();
        assert_eq!(n_layer, 2);

        let same = extend_with_horizon(&m, 0.0).unwrap();
        assert_eq!(same.n_vertices(), m.n_vertices());
        assert_eq!(same.n_elements(), m.n_elements());
    }

    #[test]
    fn classify_basics() {
        let m = build_interval_mesh(0.0, 1.0, 4).unwrap();
        assert_eq!(m.classify_pair(1, 1).unwrap(), PairClass::Identical);
        assert_eq!(m.classify_pair(0, 1).unwrap(), PairClass::VertexTouch);
        assert_eq!(m.classify_pair(0, 3).unwrap(), PairClass::Disjoint);
        assert!(m.classify_pair(0, 9).is_err());
    }

    #[test]
    fn classify_symmetric_on_small_disk() {
        let m = build_disk_mesh_rings(1.0, 3).unwrap();
        assert!(m.n_elements() <= 200);
        for a in 0..m.n_elements() {
            for b in 0..m.n_elements() {
                assert_eq!(
                    m.classify_pair(a, b).unwrap(),
                    m.classify_pair(b, a).unwrap()
                );
            }
        }
    }

    #[test]
    fn disk_mesh_dof_counts() {
        for (rings, dofs) in [(2usize, 9usize), (4, 49), (16, 961)] {
            let m = build_disk_mesh_rings(1.0, rings).unwrap();
            assert_eq!(m.n_interior_vertices(), dofs, "rings = {rings}");
            assert_eq!(m.n_elements(), 8 * rings * rings);
        }
        assert_eq!(disk_rings_for_dofs(961).unwrap(), 16);
        assert_eq!(disk_rings_for_dofs(3969).unwrap(), 32);
        assert!(disk_rings_for_dofs(960).is_err());
    }

    #[test]
    fn disk_mesh_coarse_sanity() {
        let m = build_disk_mesh(1.0, 0.5).unwrap();
        assert!(m.h() <= 0.5);
        assert!(m.quasi_uniformity_ratio() <= 10.0);
        // Boundary vertices on the unit circle.
        for v in 0..m.n_vertices() {
            if !m.is_interior_vertex(v) {
                let p = m.vertex(v);
                assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disk_area_matches_boundary_polygon() {
        for rings in [2usize, 5, 11] {
            let m = build_disk_mesh_rings(1.0, rings).unwrap();
            // Shoelace over the boundary ring (ordered by construction).
            let nb = 8 * rings;
            let first_boundary = m.n_vertices() - nb;
            let mut area = 0.0;
            for k in 0..nb {
                let p = m.vertex(first_boundary + k);
                let q = m.vertex(first_boundary + (k + 1) % nb);
                area += p[0] * q[1] - q[0] * p[1];
            }
            area *= 0.5;
            let total = m.interior_measure();
            assert!(
                (total - area).abs() <= 1e-12 * area,
                "rings={rings}: triangulation {total} vs polygon {area}"
            );
        }
    }

    #[test]
    fn disk_refinement_halves_h() {
        // Anchor the family to an exactly achieved h, then halve the target.
        let mut target = build_disk_mesh_rings(1.0, 4).unwrap().h();
        let mut prev_h = f64::INFINITY;
        for _ in 0..3 {
            let m = build_disk_mesh(1.0, target).unwrap();
            assert!(m.h() <= target + 1e-15);
            assert!(
                m.quasi_uniformity_ratio() <= 10.0,
                "ratio {}",
                m.quasi_uniformity_ratio()
            );
            assert!(m.h() <= 0.5 * prev_h + 1e-12);
            prev_h = m.h();
            target = m.h() / 2.0;
        }
    }

    #[test]
    fn disk_horizon_annulus() {
        let m = build_disk_mesh_rings(1.0, 4).unwrap();
        let ext = extend_with_horizon(&m, 0.1).unwrap();
        assert!(ext.horizon_width() >= 0.1 - 1e-9);
        let rmax = (0..ext.n_vertices())
            .map(|v| {
                let p = ext.vertex(v);
                (p[0] * p[0] + p[1] * p[1]).sqrt()
            })
            .fold(0.0f64, f64::max);
        assert!((rmax - 1.1).abs() < 1e-12);
        assert_eq!(ext.n_interior_vertices(), m.n_interior_vertices());
        for e in 0..ext.n_elements() {
            assert!(ext.element_signed_area(e) > 0.0);
        }
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let m = extend_with_horizon(&build_disk_mesh_rings(1.0, 3).unwrap(), 0.2).unwrap();
        let text = m.to_text();
        let back = Mesh::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.n_interior_vertices(), m.n_interior_vertices());
        assert!((back.horizon_width() - m.horizon_width()).abs() < 1e-12);
    }

    #[test]
    fn text_parse_rejects_garbage() {
        assert!(Mesh::from_text("").is_err());
        assert!(Mesh::from_text("2 1 1\n0 0 1\n0 0 0 5\n").is_err());
    }
}
