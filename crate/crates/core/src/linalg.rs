//! Symmetric sparse matrices and SPD solvers.
//!
//! Stiffness matrices are stored as the lower triangle in CSR form; the
//! upper triangle is implied. Fractional stiffness matrices are
//! structurally dense, so assembly accumulates into a packed dense lower
//! triangle and converts once.

use crate::error::Error;
use crate::Result;
use nalgebra::DMatrix;

/// Symmetric matrix stored as its lower triangle (row >= col) in CSR.
#[derive(Clone, Debug)]
pub struct SymSparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SymSparseMatrix {
    /// Builds from (row, col, value) triplets; entries are mirrored into
    /// the lower triangle and duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets
            .iter()
            .map(|&(i, j, v)| if i >= j { (i, j, v) } else { (j, i, v) })
            .collect();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            if let Some(last) = merged.last_mut() {
                if last.0 == i && last.1 == j {
                    last.2 += v;
                    continue;
                }
            }
            merged.push((i, j, v));
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col_idx = Vec::with_capacity(merged.len());
        let mut values = Vec::with_capacity(merged.len());
        for (_, j, v) in merged {
            col_idx.push(j as u32);
            values.push(v);
        }
        SymSparseMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds from a packed dense lower triangle in row-major order
    /// (row `i` holds entries for columns `0..=i`).
    pub fn from_dense_lower(n: usize, packed: &[f64]) -> Self {
        assert_eq!(packed.len(), n * (n + 1) / 2);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(packed.len());
        let mut values = Vec::with_capacity(packed.len());
        row_ptr.push(0);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                col_idx.push(j as u32);
                values.push(packed[k]);
                k += 1;
            }
            row_ptr.push(col_idx.len());
        }
        SymSparseMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entry (i, j), exploiting symmetry.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&(c as u32)) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates over stored lower-triangle entries as (row, col, value).
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.col_idx[k] as usize, self.values[k]))
        })
    }

    /// y = K x using the implied symmetry.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for i in 0..self.n {
            let mut yi = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k] as usize;
                let v = self.values[k];
                yi += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
            y[i] += yi;
        }
    }

    /// x^T K x.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k] as usize;
                let v = self.values[k];
                total += if i == j {
                    v * x[i] * x[i]
                } else {
                    2.0 * v * x[i] * x[j]
                };
            }
        }
        total
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] as usize == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.lower_entries() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    pub fn scaled(&self, factor: f64) -> SymSparseMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    /// Writes the binary cache format: magic `NLDMAT01`, then n (u64),
    /// nnz (u64), s (f64), R (f64), a 32-byte content hash of the mesh,
    /// then the CSR arrays (u64 row_ptr, u64 col_idx, f64 values), all
    /// little-endian.
    pub fn write_cache(
        &self,
        path: &std::path::Path,
        s: f64,
        r_horizon: f64,
        mesh_hash: &[u8; 32],
    ) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(72 + 16 * self.nnz());
        buf.extend_from_slice(b"NLDMAT01");
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        buf.extend_from_slice(&(self.nnz() as u64).to_le_bytes());
        buf.extend_from_slice(&s.to_le_bytes());
        buf.extend_from_slice(&r_horizon.to_le_bytes());
        buf.extend_from_slice(mesh_hash);
        for &p in &self.row_ptr {
            buf.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for &c in &self.col_idx {
            buf.extend_from_slice(&(c as u64).to_le_bytes());
        }
        for &v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Reads the binary cache format, rejecting mesh hash mismatches.
    pub fn read_cache(
        path: &std::path::Path,
        expected_hash: &[u8; 32],
    ) -> Result<(SymSparseMatrix, f64, f64)> {
        let data = std::fs::read(path)?;
        let fail = |msg: &str| Error::Parse(format!("matrix cache: {msg}"));
        if data.len() < 72 || &data[0..8] != b"NLDMAT01" {
            return Err(fail("bad magic"));
        }
        let u64_at =
            |off: usize| u64::from_le_bytes(data[off..off + 8].try_into().unwrap()) as usize;
        let f64_at = |off: usize| f64::from_le_bytes(data[off..off + 8].try_into().unwrap());
        let n = u64_at(8);
        let nnz = u64_at(16);
        let s = f64_at(24);
        let r_horizon = f64_at(32);
        if &data[40..72] != expected_hash {
            return Err(fail("mesh hash mismatch"));
        }
        let need = 72 + 8 * (n + 1) + 16 * nnz;
        if data.len() != need {
            return Err(fail("truncated file"));
        }
        let mut off = 72;
        let mut row_ptr = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            row_ptr.push(u64_at(off));
            off += 8;
        }
        let mut col_idx = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            col_idx.push(u64_at(off) as u32);
            off += 8;
        }
        let mut values = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            values.push(f64_at(off));
            off += 8;
        }
        Ok((
            SymSparseMatrix {
                n,
                row_ptr,
                col_idx,
                values,
            },
            s,
            r_horizon,
        ))
    }
}

/// Dense Cholesky solve via nalgebra; fails on indefinite pivots.
pub fn cholesky_solve(k: &SymSparseMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let dense = k.to_dense();
    let chol = dense.cholesky().ok_or_else(|| {
        Error::NumericalIntegrity("Cholesky failed: matrix not positive definite".into())
    })?;
    let rhs = nalgebra::DVector::from_column_slice(f);
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Preconditioned conjugate gradients with diagonal preconditioner.
pub fn pcg_solve(k: &SymSparseMatrix, f: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = k.n();
    let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let diag = k.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::NumericalIntegrity(
            "nonpositive diagonal entry in SPD solve".into(),
        ));
    }
    let mut x = vec![0.0; n];
    let mut r = f.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        k.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NumericalIntegrity(
                "CG breakdown: matrix not positive definite".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * fnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    k.matvec(&x, &mut ap);
    let rnorm = ap
        .iter()
        .zip(f)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Err(Error::SolverDiverged {
        residual: rnorm / fnorm,
        iterations: max_iter,
    })
}
