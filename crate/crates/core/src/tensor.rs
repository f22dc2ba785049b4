//! Dense real tensors in row-major layout.
//!
//! Every numeric object of the network (tree tensors, environments, feature
//! vectors, label vectors) is a [`DenseTensor`]. Contraction permutes both
//! operands so the contracted axes are adjacent and then runs a single GEMM.
//! Factorizations go through `faer`.

use faer::Mat;

use crate::error::{Error, Result};

/// An n-way array of `f64` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    labels: Option<Vec<String>>,
}

/// Thin singular value decomposition of a tensor viewed as a matrix.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `rows × r` with orthonormal columns.
    pub u: DenseTensor,
    /// Descending, non-negative, length `r = min(rows, cols)`.
    pub s: Vec<f64>,
    /// `r × cols` with orthonormal rows.
    pub vt: DenseTensor,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-length axis in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {len} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            labels: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.iter().all(|&n| n > 0), "zero-length axis in {shape:?}");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
            labels: None,
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            labels: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
            labels: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            increment(&mut idx, shape);
        }
        t
    }

    /// Attaches opaque axis tags. The count must match the rank.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "{} labels for a rank-{} tensor",
                labels.len(),
                self.shape.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of bounds for axis of length {n}");
            acc * n + i
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= alpha);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Same data, new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let mut t = Self::new(shape.to_vec(), self.data.clone())?;
        t.labels = None;
        Ok(t)
    }

    /// Reorders axes so that axis `perm[i]` of `self` becomes axis `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.rank())?;
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = self.strides();
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; new_shape.len()];
        for _ in 0..self.data.len() {
            let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
            data.push(self.data[off]);
            increment(&mut idx, &new_shape);
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| perm.iter().map(|&p| l[p].clone()).collect());
        Ok(Self {
            shape: new_shape,
            data,
            labels,
        })
    }

    /// Views the tensor as a `rows × cols` matrix after moving `row_axes`
    /// to the front (in the given order) and the remaining axes behind them.
    pub fn matricize(&self, row_axes: &[usize]) -> Result<(Self, usize, usize)> {
        let mut seen = vec![false; self.rank()];
        for &ax in row_axes {
            if ax >= self.rank() || seen[ax] {
                return Err(Error::Shape(format!(
                    "row axes {row_axes:?} invalid for rank {}",
                    self.rank()
                )));
            }
            seen[ax] = true;
        }
        let col_axes: Vec<usize> = (0..self.rank()).filter(|a| !seen[*a]).collect();
        let groups = [row_axes.to_vec(), col_axes];
        let grouped = reshape_group_inner(self, &groups, true)?;
        let (rows, cols) = (grouped.shape[0], grouped.shape[1]);
        Ok((grouped, rows, cols))
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for ax in (0..shape.len()).rev() {
        idx[ax] += 1;
        if idx[ax] < shape[ax] {
            return;
        }
        idx[ax] = 0;
    }
}

fn check_permutation(perm: &[usize], rank: usize) -> Result<()> {
    let mut seen = vec![false; rank];
    if perm.len() != rank {
        return Err(Error::Shape(format!(
            "permutation {perm:?} has wrong length for rank {rank}"
        )));
    }
    for &p in perm {
        if p >= rank || seen[p] {
            return Err(Error::Shape(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Contracts `a` and `b` over the listed `(axis of a, axis of b)` pairs.
///
/// The result carries the free axes of `a` followed by the free axes of `b`,
/// each in their original order.
pub fn contract(a: &DenseTensor, b: &DenseTensor, axis_pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let mut paired_a = vec![false; a.rank()];
    let mut paired_b = vec![false; b.rank()];
    for &(ia, ib) in axis_pairs {
        if ia >= a.rank() || ib >= b.rank() || paired_a[ia] || paired_b[ib] {
            return Err(Error::Shape(format!(
                "invalid axis pairs {axis_pairs:?} for ranks {} and {}",
                a.rank(),
                b.rank()
            )));
        }
        if a.shape[ia] != b.shape[ib] {
            return Err(Error::ContractionShape {
                axis_a: ia,
                axis_b: ib,
                len_a: a.shape[ia],
                len_b: b.shape[ib],
            });
        }
        paired_a[ia] = true;
        paired_b[ib] = true;
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !paired_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&i| !paired_b[i]).collect();

    let perm_a: Vec<usize> = free_a.iter().copied().chain(axis_pairs.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = axis_pairs.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();
    let k: usize = axis_pairs.iter().map(|p| a.shape[p.0]).product();

    let mut out = vec![0.0; m * n];
    gemm(m, k, n, 1.0, &pa.data, k, 1, &pb.data, n, 1, 0.0, &mut out, n);

    let shape: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&i| b.shape[i]))
        .collect();
    DenseTensor::new(shape, out)
}

/// `c = alpha · a·b + beta · c` on strided row/column views.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the index bounds of all three views are checked above
    // (debug) and guaranteed by every caller's shape bookkeeping.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Permutes the axes so every group is contiguous, then merges each group
/// into a single axis.
pub fn reshape_group(a: &DenseTensor, groups: &[Vec<usize>]) -> Result<DenseTensor> {
    reshape_group_inner(a, groups, false)
}

fn reshape_group_inner(a: &DenseTensor, groups: &[Vec<usize>], allow_empty: bool) -> Result<DenseTensor> {
    let perm: Vec<usize> = groups.iter().flatten().copied().collect();
    check_permutation(&perm, a.rank())
        .map_err(|_| Error::Shape(format!("groups {groups:?} do not partition {} axes", a.rank())))?;
    if !allow_empty && groups.iter().any(|g| g.is_empty()) {
        return Err(Error::Shape(format!("empty group in {groups:?}")));
    }
    let permuted = a.permute(&perm)?;
    let shape: Vec<usize> = groups
        .iter()
        .map(|g| g.iter().map(|&ax| a.shape[ax]).product())
        .collect();
    DenseTensor::new(shape, permuted.data)
}

/// Thin SVD of `a` with `row_axes` grouped into rows and all other axes into
/// columns.
pub fn svd(a: &DenseTensor, row_axes: &[usize]) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::NumericDomain("non-finite entry in SVD input".into()));
    }
    let (mat, rows, cols) = a.matricize(row_axes)?;
    svd_matrix(rows, cols, mat.data())
}

pub(crate) fn svd_matrix(rows: usize, cols: usize, data: &[f64]) -> Result<SvdResult> {
    let m = Mat::from_fn(rows, cols, |i, j| data[i * cols + j]);
    let dec = m
        .thin_svd()
        .map_err(|e| Error::NumericDomain(format!("SVD did not converge: {e:?}")))?;
    let (u, v, s) = (dec.U(), dec.V(), dec.S().column_vector());
    let r = rows.min(cols);
    // faer already sorts descending; re-sort defensively so callers can rely on it
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let sv: Vec<f64> = order.iter().map(|&i| s[i].abs()).collect();
    let mut u_data = vec![0.0; rows * r];
    for row in 0..rows {
        for (c, &src) in order.iter().enumerate() {
            u_data[row * r + c] = u[(row, src)];
        }
    }
    let mut vt_data = vec![0.0; r * cols];
    for (rr, &src) in order.iter().enumerate() {
        for col in 0..cols {
            vt_data[rr * cols + col] = v[(col, src)];
        }
    }
    Ok(SvdResult {
        u: DenseTensor::new(vec![rows, r], u_data)?,
        s: sv,
        vt: DenseTensor::new(vec![r, cols], vt_data)?,
    })
}

/// Returns a matrix with orthonormal rows spanning the row space of the
/// `rows × cols` input (`rows ≤ cols`), via thin QR of the transpose with
/// the sign convention `diag(R) ≥ 0`.
pub fn orthonormalize_rows(a: &DenseTensor) -> Result<DenseTensor> {
    if a.rank() != 2 {
        return Err(Error::Shape(format!("expected a matrix, got shape {:?}", a.shape)));
    }
    let (rows, cols) = (a.shape[0], a.shape[1]);
    if rows > cols {
        return Err(Error::Shape(format!(
            "cannot orthonormalize {rows} rows in dimension {cols}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::NumericDomain("non-finite entry in QR input".into()));
    }
    let at = Mat::from_fn(cols, rows, |i, j| a.data()[j * cols + i]);
    let qr = at.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let sign = if r[(i, i)] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..cols {
            out[i * cols + j] = sign * q[(j, i)];
        }
    }
    DenseTensor::new(vec![rows, cols], out)
}

/// `‖A·Aᵀ − I‖_max` for a `rows × cols` row-major block.
pub fn row_orthonormality_error(rows: usize, cols: usize, data: &[f64]) -> f64 {
    let mut gram = vec![0.0; rows * rows];
    gemm(
        rows, cols, rows, 1.0, data, cols, 1, data, 1, cols, 0.0, &mut gram, rows,
    );
    let mut worst = 0.0f64;
    for i in 0..rows {
        for j in 0..rows {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[i * rows + j] - target).abs());
        }
    }
    worst
}
