//! Dense linear algebra for symmetric matrices.
//!
//! Matrices are stored row-major in a flat `Vec<f64>`. The problem sizes this
//! crate targets (a few hundred stacked variables at most) make dense storage
//! the right choice.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut, Range};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v`
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, found: v.len() });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric matrix with finite entries.
///
/// Every constructor symmetrizes its input as `(M + Mᵀ)/2`, so `m[i][j] == m[j][i]`
/// holds bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_matrix(Matrix::from_vec(dim, dim, data)?)
    }

    pub fn from_matrix(mut m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch { expected: m.rows, found: m.cols });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        let n = m.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Ok(SymMatrix(m))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_matrix(Matrix::from_fn(dim, dim, f))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(Matrix::identity(dim))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        SymMatrix(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn add_diagonal(&self, c: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.rows {
            m[(i, i)] += c;
        }
        SymMatrix(m)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.0.matvec(v)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Principal submatrix on `idx`, which stays symmetric.
    pub fn principal(&self, idx: &[usize]) -> Result<SymMatrix> {
        Ok(SymMatrix(submatrix(self.as_matrix(), idx, idx)?))
    }

    /// `tr(self · other)` for two symmetric matrices.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.0.data.iter().zip(&other.0.data).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        SymMatrix::from_matrix(m)
    }
}

impl From<SymMatrix> for Matrix {
    fn from(m: SymMatrix) -> Matrix {
        m.0
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Maps (node, attribute) pairs onto the stacked `pK` vector, node-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLayout {
    p: usize,
    k: usize,
    node_names: Option<Vec<String>>,
    attribute_names: Option<Vec<String>>,
}

impl NodeLayout {
    pub fn new(p: usize, k: usize) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(Error::InvalidConfig("layout needs p >= 1 and K >= 1"));
        }
        Ok(NodeLayout { p, k, node_names: None, attribute_names: None })
    }

    pub fn with_node_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: names.len() });
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn with_attribute_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: names.len() });
        }
        self.attribute_names = Some(names);
        Ok(self)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.p * self.k
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    pub fn attribute_names(&self) -> Option<&[String]> {
        self.attribute_names.as_deref()
    }

    #[inline]
    pub fn index(&self, node: usize, attribute: usize) -> usize {
        debug_assert!(node < self.p && attribute < self.k);
        node * self.k + attribute
    }

    #[inline]
    pub fn node_of(&self, flat: usize) -> usize {
        flat / self.k
    }

    pub fn node_range(&self, node: usize) -> Range<usize> {
        node * self.k..(node + 1) * self.k
    }

    /// Flat indices of every attribute of `nodes`, in the order given.
    pub fn group_indices(&self, nodes: &[usize]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(nodes.len() * self.k);
        for &node in nodes {
            if node >= self.p {
                return Err(Error::NodeOutOfRange { node, p: self.p });
            }
            out.extend(self.node_range(node));
        }
        Ok(out)
    }

    /// Flat indices of one attribute type across all nodes.
    pub fn attribute_indices(&self, attribute: usize) -> Vec<usize> {
        (0..self.p).map(|i| self.index(i, attribute)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

pub fn cholesky(m: &SymMatrix) -> Result<Cholesky> {
    let n = m.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = libm::sqrt(d);
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                s -= l.data[ri + k] * l.data[rj + k];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| libm::log(self.l[(i, i)])).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.l.row(i);
            let s = b[i] - dot(&row[..i], &b[..i]);
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: b.len() });
        }
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        Ok(x)
    }

    /// `bᵀ A⁻¹ b`, computed as `|L⁻¹ b|²`.
    pub fn inv_quadform(&self, b: &[f64]) -> Result<f64> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: b.len() });
        }
        let mut y = b.to_vec();
        self.forward_in_place(&mut y);
        Ok(dot(&y, &y))
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim();
        // Inverse of L, lower triangular.
        let mut li = Matrix::zeros(n, n);
        for j in 0..n {
            li[(j, j)] = 1.0 / self.l[(j, j)];
            for i in (j + 1)..n {
                let mut s = 0.0;
                for k in j..i {
                    s -= self.l[(i, k)] * li[(k, j)];
                }
                li[(i, j)] = s / self.l[(i, i)];
            }
        }
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += li[(k, i)] * li[(k, j)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        SymMatrix(out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        let lt = self.l.transpose();
        // L·Lᵀ is symmetric up to rounding.
        SymMatrix::from_matrix(self.l.matmul(&lt).expect("square factor")).expect("finite factor")
    }
}

pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(cholesky(m)?.inverse())
}

/// `m[rows, cols]`, preserving the order of both index sets.
pub fn submatrix(m: &Matrix, rows: &[usize], cols: &[usize]) -> Result<Matrix> {
    for &r in rows {
        if r >= m.rows {
            return Err(Error::IndexOutOfRange { index: r, dim: m.rows });
        }
    }
    for &c in cols {
        if c >= m.cols {
            return Err(Error::IndexOutOfRange { index: c, dim: m.cols });
        }
    }
    Ok(Matrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])]))
}

/// Indices in `0..dim` that are not in `idx`, ascending.
pub fn complement(dim: usize, idx: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; dim];
    for &i in idx {
        if i < dim {
            mask[i] = true;
        }
    }
    (0..dim).filter(|&i| !mask[i]).collect()
}

/// `vᵀ m v` with Neumaier-compensated accumulation.
pub fn quadform(v: &[f64], m: &SymMatrix) -> Result<f64> {
    if v.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: v.len() });
    }
    let mut acc = CompensatedSum::default();
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (j, &vj) in v.iter().enumerate() {
            acc.add(vi * m.get(i, j) * vj);
        }
    }
    Ok(acc.value())
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Householder tridiagonalization followed by the implicit QL algorithm
/// (the EISPACK `tred2`/`tql2` pair).
pub fn sym_eigen(m: &SymMatrix) -> SymEigen {
    let n = m.dim();
    if n == 0 {
        return SymEigen { values: Vec::new(), vectors: Matrix::zeros(0, 0) };
    }
    let mut v = m.as_matrix().clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e);
    SymEigen { values: d, vectors: v }
}

pub fn min_eigenvalue(m: &SymMatrix) -> Result<f64> {
    if !m.as_matrix().is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(sym_eigen(m).values.first().copied().unwrap_or(f64::NAN))
}

pub fn max_eigenvalue(m: &SymMatrix) -> Result<f64> {
    if !m.as_matrix().is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(sym_eigen(m).values.last().copied().unwrap_or(f64::NAN))
}

/// Largest absolute eigenvalue.
pub fn spectral_norm(m: &SymMatrix) -> f64 {
    sym_eigen(m).values.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

/// Ratio of extreme eigenvalues; infinite when the smallest is not positive.
pub fn condition_number(m: &SymMatrix) -> f64 {
    let values = sym_eigen(m).values;
    let (lo, hi) = (values[0], values[values.len() - 1]);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Applies `f` to the eigenvalues: `V diag(f(λ)) Vᵀ`.
pub fn sym_function(m: &SymMatrix, f: impl Fn(f64) -> f64) -> SymMatrix {
    let eig = sym_eigen(m);
    let n = m.dim();
    let fl: Vec<f64> = eig.values.iter().map(|&x| f(x)).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..n).map(|k| eig.vectors[(i, k)] * fl[k] * eig.vectors[(j, k)]).sum();
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    SymMatrix(out)
}

fn tred2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter > 100 || !p.is_finite() {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for r in 0..n {
                let tmp = v[(r, i)];
                v[(r, i)] = v[(r, k)];
                v[(r, k)] = tmp;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_spd(n: usize, seed: u64) -> SymMatrix {
        let mut rng = Rng::new(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.normal());
        let ata = a.transpose().matmul(&a).unwrap();
        SymMatrix::from_matrix(ata).unwrap().add_diagonal(0.5)
    }

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        let mut rng = Rng::new(seed);
        SymMatrix::from_fn(n, |_, _| rng.normal()).unwrap()
    }

    #[test]
    fn symmetrizes_on_construction() {
        let m = SymMatrix::new(2, vec![1.0, 2.0, 4.0, 1.0]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(SymMatrix::new(1, vec![f64::NAN]), Err(Error::NonFinite));
    }

    #[test]
    fn cholesky_identity() {
        let c = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(c.lower(), &Matrix::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let m = SymMatrix::new(2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = cholesky(&m).unwrap();
        let l = l.lower();
        assert_eq!(l[(0, 0)], 2.0);
        assert_eq!(l[(0, 1)], 0.0);
        assert_eq!(l[(1, 0)], 1.0);
        assert!((l[(1, 1)] - libm::sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn cholesky_indefinite_reports_second_pivot() {
        let m = SymMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(cholesky(&m).unwrap_err(), Error::NotPositiveDefinite { pivot: 1 });
    }

    #[test]
    fn cholesky_reconstruction_error() {
        for seed in 0..10 {
            let m = random_spd(30, seed);
            let r = cholesky(&m).unwrap().reconstruct();
            let err = r.as_matrix().sub(m.as_matrix()).unwrap().max_abs() / m.as_matrix().max_abs();
            assert!(err <= 1e-10, "relative error {err}");
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(spd_inverse(&SymMatrix::identity(5)).unwrap(), SymMatrix::identity(5));
        let inv = spd_inverse(&SymMatrix::diagonal(&[2.0, 4.0])).unwrap();
        let err = inv.as_matrix().sub(SymMatrix::diagonal(&[0.5, 0.25]).as_matrix()).unwrap().max_abs();
        assert!(err < 1e-15);
    }

    #[test]
    fn inverse_residual_and_involution() {
        for (n, seed) in [(10, 1), (60, 2), (200, 3)] {
            let a = random_spd(n, seed);
            let inv = spd_inverse(&a).unwrap();
            let prod = a.as_matrix().matmul(inv.as_matrix()).unwrap();
            let resid = prod.sub(&Matrix::identity(n)).unwrap().max_abs();
            assert!(resid < 1e-8, "n={n} residual {resid}");
            if n <= 100 {
                let back = spd_inverse(&inv).unwrap();
                assert!(back.as_matrix().sub(a.as_matrix()).unwrap().max_abs() < 1e-6);
            }
        }
    }

    #[test]
    fn submatrix_examples() {
        let m = SymMatrix::diagonal(&[7.0, 3.0]);
        assert_eq!(submatrix(m.as_matrix(), &[0, 1], &[0, 1]).unwrap(), *m.as_matrix());
        assert_eq!(submatrix(m.as_matrix(), &[0], &[0]).unwrap().as_slice(), &[7.0]);
        assert_eq!(
            submatrix(m.as_matrix(), &[2], &[0]).unwrap_err(),
            Error::IndexOutOfRange { index: 2, dim: 2 }
        );

        // 3 nodes, K = 2: block (node 0, node 1) sits at rows 0..2, cols 2..4.
        let layout = NodeLayout::new(3, 2).unwrap();
        let big = SymMatrix::from_fn(6, |i, j| (i * 10 + j) as f64 + (j * 10 + i) as f64).unwrap();
        let blk = submatrix(
            big.as_matrix(),
            &layout.group_indices(&[0]).unwrap(),
            &layout.group_indices(&[1]).unwrap(),
        )
        .unwrap();
        assert_eq!(blk[(0, 0)], big.get(0, 2));
        assert_eq!(blk[(1, 1)], big.get(1, 3));
    }

    #[test]
    fn submatrix_blocks_reassemble() {
        let m = random_sym(7, 5);
        let a = [1, 4, 5];
        let b = complement(7, &a);
        let mut order = a.to_vec();
        order.extend(&b);
        let rebuilt = Matrix::from_fn(7, 7, |i, j| {
            let (ia, ja) = (i < 3, j < 3);
            let blk = submatrix(
                m.as_matrix(),
                if ia { &a[..] } else { &b[..] },
                if ja { &a[..] } else { &b[..] },
            )
            .unwrap();
            blk[(if ia { i } else { i - 3 }, if ja { j } else { j - 3 })]
        });
        let perm = submatrix(m.as_matrix(), &order, &order).unwrap();
        assert_eq!(rebuilt, perm);
    }

    #[test]
    fn eigen_examples() {
        assert!((min_eigenvalue(&SymMatrix::diagonal(&[1.0, 2.0, 3.0])).unwrap() - 1.0).abs() < 1e-12);
        let m = SymMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((min_eigenvalue(&m).unwrap() + 1.0).abs() < 1e-12);
    }

    /// Shifted power iteration: the dominant eigenvalue of `cI - A` is `c - λ_min`.
    fn power_min_eig(m: &SymMatrix) -> f64 {
        let n = m.dim();
        let c = m.as_matrix().max_abs() * n as f64;
        let shifted = SymMatrix::from_fn(n, |i, j| if i == j { c } else { 0.0 } - m.get(i, j)).unwrap();
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.01).collect();
        let mut lambda = 0.0;
        for _ in 0..200_000 {
            let y = shifted.matvec(&x).unwrap();
            let norm = libm::sqrt(dot(&y, &y));
            lambda = dot(&x, &y) / dot(&x, &x);
            x = y.iter().map(|v| v / norm).collect();
        }
        c - lambda
    }

    #[test]
    fn min_eigenvalue_matches_power_iteration() {
        for seed in 0..3 {
            let m = random_sym(6, 100 + seed);
            let fast = min_eigenvalue(&m).unwrap();
            let oracle = power_min_eig(&m);
            assert!((fast - oracle).abs() < 1e-6, "{fast} vs {oracle}");
        }
    }

    #[test]
    fn eigen_decomposition_reconstructs() {
        let m = random_sym(12, 9);
        let eig = sym_eigen(&m);
        let rebuilt = sym_function(&m, |x| x);
        assert!(rebuilt.as_matrix().sub(m.as_matrix()).unwrap().max_abs() < 1e-10);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn quadform_examples() {
        let id = SymMatrix::identity(2);
        assert_eq!(quadform(&[0.0, 0.0], &id).unwrap(), 0.0);
        assert_eq!(quadform(&[1.0, 1.0], &id).unwrap(), 2.0);
        let m = SymMatrix::new(2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(quadform(&[1.0, 2.0], &m).unwrap(), 18.0);
        assert_eq!(quadform(&[1.0], &m).unwrap_err(), Error::DimensionMismatch { expected: 2, found: 1 });
    }

    #[test]
    fn layout_indexing() {
        let l = NodeLayout::new(3, 2).unwrap();
        assert_eq!(l.dim(), 6);
        assert_eq!(l.index(1, 1), 3);
        assert_eq!(l.group_indices(&[2, 0]).unwrap(), vec![4, 5, 0, 1]);
        assert_eq!(l.attribute_indices(1), vec![1, 3, 5]);
        assert!(l.clone().with_node_names(vec!["a".into()]).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn spd(dim: usize, entries: &[f64]) -> SymMatrix {
        let a = Matrix::from_fn(dim, dim, |i, j| entries[i * dim + j]);
        SymMatrix::from_fn(dim, |i, j| {
            (0..dim).map(|k| a[(i, k)] * a[(j, k)]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
        })
        .unwrap()
    }

    proptest! {
        #[test]
        fn inverse_is_two_sided(dim in 1usize..7, entries in prop::collection::vec(-2.0f64..2.0, 36)) {
            let a = spd(dim, &entries);
            let inv = spd_inverse(&a).unwrap();
            let prod = a.as_matrix().matmul(inv.as_matrix()).unwrap();
            let gap = prod.sub(&Matrix::identity(dim)).unwrap().max_abs();
            prop_assert!(gap < 1e-8, "{gap}");
        }

        #[test]
        fn inv_quadform_matches_inverse(dim in 1usize..7, entries in prop::collection::vec(-2.0f64..2.0, 36),
                                        v in prop::collection::vec(-3.0f64..3.0, 6)) {
            let a = spd(dim, &entries);
            let v = &v[..dim];
            let direct: f64 = spd_inverse(&a).unwrap().matvec(v).unwrap().iter().zip(v).map(|(x, y)| x * y).sum();
            let q = cholesky(&a).unwrap().inv_quadform(v).unwrap();
            prop_assert!(q >= 0.0);
            prop_assert!((q - direct).abs() <= 1e-8 * direct.abs().max(1.0));
        }
    }
}
