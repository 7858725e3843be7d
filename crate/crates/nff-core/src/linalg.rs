//! Dense complex linear-algebra kernels.
//!
//! Matrices live in split real/imaginary storage so the hot products compile
//! to straight-line f64 loops with fixed-lane accumulators. Everything is
//! sequential, with a fixed summation order, so repeated runs are
//! bit-identical.

use num_complex::Complex64;

use crate::error::{Result, SynthError};

const LANES: usize = 4;

/// Complex vector with split real/imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct CVec {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl CVec {
    pub fn zeros(n: usize) -> Self {
        Self { re: vec![0.0; n], im: vec![0.0; n] }
    }

    pub fn from_complex(x: &[Complex64]) -> Self {
        Self {
            re: x.iter().map(|z| z.re).collect(),
            im: x.iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn get(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn norm(&self) -> f64 {
        norm2_split(&self.re, &self.im)
    }
}

/// a · x without conjugation: (Σ aᵣxᵣ − aᵢxᵢ, Σ aᵣxᵢ + aᵢxᵣ).
#[inline]
pub(crate) fn cdot_plain(ar: &[f64], ai: &[f64], xr: &[f64], xi: &[f64]) -> (f64, f64) {
    let n = ar.len();
    let head = n - n % LANES;
    let mut acc_re = [0.0f64; LANES];
    let mut acc_im = [0.0f64; LANES];
    let mut j = 0;
    while j < head {
        for k in 0..LANES {
            let a_r = ar[j + k];
            let a_i = ai[j + k];
            let x_r = xr[j + k];
            let x_i = xi[j + k];
            acc_re[k] += a_r * x_r - a_i * x_i;
            acc_im[k] += a_r * x_i + a_i * x_r;
        }
        j += LANES;
    }
    let mut re = (acc_re[0] + acc_re[1]) + (acc_re[2] + acc_re[3]);
    let mut im = (acc_im[0] + acc_im[1]) + (acc_im[2] + acc_im[3]);
    while j < n {
        re += ar[j] * xr[j] - ai[j] * xi[j];
        im += ar[j] * xi[j] + ai[j] * xr[j];
        j += 1;
    }
    (re, im)
}

/// conj(a) · b: (Σ aᵣbᵣ + aᵢbᵢ, Σ aᵣbᵢ − aᵢbᵣ).
#[inline]
fn cdot_conj(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let n = ar.len();
    let head = n - n % LANES;
    let mut acc_re = [0.0f64; LANES];
    let mut acc_im = [0.0f64; LANES];
    let mut j = 0;
    while j < head {
        for k in 0..LANES {
            let a_r = ar[j + k];
            let a_i = ai[j + k];
            let b_r = br[j + k];
            let b_i = bi[j + k];
            acc_re[k] += a_r * b_r + a_i * b_i;
            acc_im[k] += a_r * b_i - a_i * b_r;
        }
        j += LANES;
    }
    let mut re = (acc_re[0] + acc_re[1]) + (acc_re[2] + acc_re[3]);
    let mut im = (acc_im[0] + acc_im[1]) + (acc_im[2] + acc_im[3]);
    while j < n {
        re += ar[j] * br[j] + ai[j] * bi[j];
        im += ar[j] * bi[j] - ai[j] * br[j];
        j += 1;
    }
    (re, im)
}

fn norm2_split(re: &[f64], im: &[f64]) -> f64 {
    let n = re.len();
    let head = n - n % LANES;
    let mut acc = [0.0f64; LANES];
    let mut j = 0;
    while j < head {
        for k in 0..LANES {
            acc[k] += re[j + k] * re[j + k] + im[j + k] * im[j + k];
        }
        j += LANES;
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    while j < n {
        s += re[j] * re[j] + im[j] * im[j];
        j += 1;
    }
    s.sqrt()
}

/// Dense complex matrix, row-major split storage.
#[derive(Debug, Clone)]
pub struct CMat {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, re: vec![0.0; rows * cols], im: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                m.re[i * cols + j] = v.re;
                m.im[i * cols + j] = v.im;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[i * self.cols + j], self.im[i * self.cols + j])
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.re[i * self.cols + j] = v.re;
        self.im[i * self.cols + j] = v.im;
    }

    pub fn row(&self, i: usize) -> (&[f64], &[f64]) {
        let a = i * self.cols;
        let b = a + self.cols;
        (&self.re[a..b], &self.im[a..b])
    }

    pub fn row_as_complex(&self, i: usize) -> Vec<Complex64> {
        let (r, im) = self.row(i);
        r.iter().zip(im).map(|(&x, &y)| Complex64::new(x, y)).collect()
    }

    pub fn col_as_complex(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// out = A·x.
    pub fn matvec(&self, x: &CVec, out: &mut CVec) {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        assert_eq!(out.len(), self.rows, "matvec output dimension mismatch");
        for i in 0..self.rows {
            let (ar, ai) = self.row(i);
            let (re, im) = cdot_plain(ar, ai, &x.re, &x.im);
            out.re[i] = re;
            out.im[i] = im;
        }
    }

    /// out = Aᴴ·r, accumulated row by row so the n-length accumulators stay hot.
    pub fn adjoint_matvec(&self, r: &CVec, out: &mut CVec) {
        assert_eq!(r.len(), self.rows, "adjoint_matvec dimension mismatch");
        assert_eq!(out.len(), self.cols, "adjoint_matvec output dimension mismatch");
        out.re.iter_mut().for_each(|v| *v = 0.0);
        out.im.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.rows {
            let (ar, ai) = self.row(i);
            let rr = r.re[i];
            let ri = r.im[i];
            for j in 0..self.cols {
                // conj(a_ij) * r_i
                out.re[j] += ar[j] * rr + ai[j] * ri;
                out.im[j] += ar[j] * ri - ai[j] * rr;
            }
        }
    }

    /// Gram matrix AᴴA as dense row-major complex (Hermitian, both triangles filled).
    pub fn gram(&self) -> Vec<Complex64> {
        let n = self.cols;
        // Transposed copy so column dots run over contiguous memory.
        let t = self.transposed();
        let mut g = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            let (air, aii) = t.row(i);
            for j in i..n {
                let (ajr, aji) = t.row(j);
                let (re, im) = cdot_conj(air, aii, ajr, aji);
                g[i * n + j] = Complex64::new(re, im);
                g[j * n + i] = Complex64::new(re, -im);
            }
        }
        g
    }

    pub fn transposed(&self) -> CMat {
        let mut t = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.re[j * self.rows + i] = self.re[i * self.cols + j];
                t.im[j * self.rows + i] = self.im[i * self.cols + j];
            }
        }
        t
    }

    /// New matrix from a subset of columns, in the given order.
    pub fn gather_columns(&self, cols: &[usize]) -> CMat {
        let mut m = CMat::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                m.re[i * cols.len() + jj] = self.re[i * self.cols + j];
                m.im[i * cols.len() + jj] = self.im[i * self.cols + j];
            }
        }
        m
    }

    /// New matrix from a subset of rows, in the given order.
    pub fn gather_rows(&self, rows: &[usize]) -> CMat {
        let mut m = CMat::zeros(rows.len(), self.cols);
        for (ii, &i) in rows.iter().enumerate() {
            let (ar, ai) = self.row(i);
            m.re[ii * self.cols..(ii + 1) * self.cols].copy_from_slice(ar);
            m.im[ii * self.cols..(ii + 1) * self.cols].copy_from_slice(ai);
        }
        m
    }

    /// Scale row i by d[i] (real).
    pub fn scale_rows(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.rows);
        for i in 0..self.rows {
            let a = i * self.cols;
            let b = a + self.cols;
            for v in &mut self.re[a..b] {
                *v *= d[i];
            }
            for v in &mut self.im[a..b] {
                *v *= d[i];
            }
        }
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        let (r, im) = self.row(i);
        norm2_split(r, im)
    }

    /// Column-major complex copy (for the QR-based solvers).
    pub fn to_col_major(&self) -> Vec<Complex64> {
        let mut a = vec![Complex64::new(0.0, 0.0); self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                a[j * self.rows + i] = self.get(i, j);
            }
        }
        a
    }
}

/// Σ a_q·b_q (no conjugation).
pub fn dot_plain(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len());
    let mut s = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Σ conj(a_q)·b_q.
pub fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len());
    let mut s = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        s += x.conj() * y;
    }
    s
}

pub fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// LLᴴ factor of a Hermitian positive-definite matrix (dense row-major).
pub struct CholeskyFactor {
    n: usize,
    l: Vec<Complex64>,
}

impl CholeskyFactor {
    pub fn new(g: &[Complex64], n: usize) -> Result<Self> {
        assert_eq!(g.len(), n * n);
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = g[j * n + j].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(SynthError::InvalidArgument(
                    "cholesky: matrix not positive definite".into(),
                ));
            }
            let djj = d.sqrt();
            l[j * n + j] = Complex64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = g[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    /// Solve (L Lᴴ) x = b.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        // backward: Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i].conj() * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        y
    }
}

/// Least-squares solution of A·x ≈ b with pseudoinverse semantics.
pub struct LstsqResult {
    pub x: Vec<Complex64>,
    pub rank: usize,
}

/// Minimum-norm least squares via column-pivoted Householder QR; if the
/// factorization reveals rank deficiency, a complete orthogonal decomposition
/// recovers the minimum-norm solution.
///
/// `a` is column-major m×n and is consumed as workspace.
pub fn min_norm_lstsq(
    mut a: Vec<Complex64>,
    m: usize,
    n: usize,
    b: &[Complex64],
    rtol: f64,
) -> Result<LstsqResult> {
    assert_eq!(a.len(), m * n);
    if b.len() != m {
        return Err(SynthError::DimensionMismatch(format!(
            "lstsq: rhs has {} rows, matrix has {m}",
            b.len()
        )));
    }
    if n == 0 {
        return Ok(LstsqResult { x: Vec::new(), rank: 0 });
    }

    let kmax = m.min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut qtb = b.to_vec();
    // Householder vectors, stored per step over rows k..m of the pivot column.
    let mut rank = kmax;
    let mut first_norm = 0.0f64;

    for k in 0..kmax {
        // Pivot: column with the largest remaining norm (rows k..m), recomputed
        // exactly each step; ties keep the smallest column index.
        let mut best = k;
        let mut best_norm = 0.0f64;
        for j in k..n {
            let col = &a[j * m..(j + 1) * m];
            let nrm: f64 = col[k..].iter().map(|z| z.norm_sqr()).sum();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        let normx = best_norm.sqrt();
        if k == 0 {
            first_norm = normx;
        }
        if normx <= rtol * first_norm || normx == 0.0 {
            rank = k;
            break;
        }
        if best != k {
            for i in 0..m {
                a.swap(k * m + i, best * m + i);
            }
            perm.swap(k, best);
        }

        // Householder reflector for column k, rows k..m.
        let alpha = a[k * m + k];
        let phase = if alpha.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            alpha / alpha.norm()
        };
        let rkk = -phase * normx;
        // v = x - rkk·e1; |v0| = |alpha| + normx avoids cancellation.
        let mut v = vec![Complex64::new(0.0, 0.0); m - k];
        v[0] = alpha - rkk;
        v[1..].copy_from_slice(&a[(k * m + k + 1)..(k + 1) * m]);
        let vnorm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm_sqr > 0.0 {
            let beta = 2.0 / vnorm_sqr;
            // Apply H = I − beta v vᴴ to the remaining columns and to qtb.
            for j in (k + 1)..n {
                let col = &mut a[(j * m + k)..(j + 1) * m];
                let mut s = Complex64::new(0.0, 0.0);
                for (vi, ci) in v.iter().zip(col.iter()) {
                    s += vi.conj() * ci;
                }
                s *= beta;
                for (vi, ci) in v.iter().zip(col.iter_mut()) {
                    *ci -= vi * s;
                }
            }
            {
                let rb = &mut qtb[k..m];
                let mut s = Complex64::new(0.0, 0.0);
                for (vi, ci) in v.iter().zip(rb.iter()) {
                    s += vi.conj() * ci;
                }
                s *= beta;
                for (vi, ci) in v.iter().zip(rb.iter_mut()) {
                    *ci -= vi * s;
                }
            }
        }
        a[k * m + k] = rkk;
        for i in (k + 1)..m {
            a[k * m + i] = Complex64::new(0.0, 0.0);
        }
    }

    let r = rank;
    let mut xp = vec![Complex64::new(0.0, 0.0); n];
    if r == n {
        // Back-substitution on the square upper-triangular block.
        for i in (0..n).rev() {
            let mut s = qtb[i];
            for j in (i + 1)..n {
                s -= a[j * m + i] * xp[j];
            }
            xp[i] = s / a[i * m + i];
        }
    } else if r > 0 {
        // Minimum-norm solution of the trapezoid [R11 R12]·z = c via QR of Tᴴ.
        // T is r×n with full row rank r.
        let mut th = vec![Complex64::new(0.0, 0.0); n * r]; // column-major n×r, Tᴴ
        for i in 0..r {
            for j in 0..n {
                let t_ij = if i <= j { a[j * m + i] } else { Complex64::new(0.0, 0.0) };
                th[i * n + j] = t_ij.conj();
            }
        }
        // Plain Householder QR of th (n×r), keeping the reflectors.
        let mut vs: Vec<Vec<Complex64>> = Vec::with_capacity(r);
        let mut betas = Vec::with_capacity(r);
        for k in 0..r {
            let colk: Vec<Complex64> = th[(k * n + k)..(k + 1) * n].to_vec();
            let normx: f64 = colk.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let alpha = colk[0];
            let phase = if alpha.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                alpha / alpha.norm()
            };
            let rkk = -phase * normx;
            let mut v = colk;
            v[0] = alpha - rkk;
            let vnorm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let beta = if vnorm_sqr > 0.0 { 2.0 / vnorm_sqr } else { 0.0 };
            for j in (k + 1)..r {
                let col = &mut th[(j * n + k)..(j + 1) * n];
                let mut s = Complex64::new(0.0, 0.0);
                for (vi, ci) in v.iter().zip(col.iter()) {
                    s += vi.conj() * ci;
                }
                s *= beta;
                for (vi, ci) in v.iter().zip(col.iter_mut()) {
                    *ci -= vi * s;
                }
            }
            th[k * n + k] = rkk;
            for i in (k + 1)..n {
                th[k * n + i] = Complex64::new(0.0, 0.0);
            }
            vs.push(v);
            betas.push(beta);
        }
        // T z = c  ⇔  R2ᴴ (Q2ᴴ z) = c: forward-substitute, then z = Q2·[y; 0].
        let mut y = vec![Complex64::new(0.0, 0.0); r];
        for i in 0..r {
            let mut s = qtb[i];
            for j in 0..i {
                // (R2ᴴ)_{ij} = conj(R2_{ji})
                s -= th[i * n + j].conj() * y[j];
            }
            y[i] = s / th[i * n + i].conj();
        }
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        z[..r].copy_from_slice(&y);
        for k in (0..r).rev() {
            let v = &vs[k];
            let beta = betas[k];
            let zz = &mut z[k..n];
            let mut s = Complex64::new(0.0, 0.0);
            for (vi, ci) in v.iter().zip(zz.iter()) {
                s += vi.conj() * ci;
            }
            s *= beta;
            for (vi, ci) in v.iter().zip(zz.iter_mut()) {
                *ci -= vi * s;
            }
        }
        xp = z;
    }

    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        x[perm[j]] = xp[j];
    }
    Ok(LstsqResult { x, rank: r })
}

/// Orthonormal basis of the null space of the row set `c` (the x with
/// c·x = 0), via column-pivoted Householder QR of cᴴ.
pub fn row_null_basis(c: &CMat, rtol: f64) -> Vec<Vec<Complex64>> {
    let r = c.rows();
    let n = c.cols();
    if n == 0 {
        return Vec::new();
    }
    // A = cᴴ, column-major n×r.
    let mut a = vec![Complex64::new(0.0, 0.0); n * r];
    for i in 0..r {
        for j in 0..n {
            a[i * n + j] = c.get(i, j).conj();
        }
    }
    let kmax = n.min(r);
    let mut vs: Vec<Vec<Complex64>> = Vec::with_capacity(kmax);
    let mut betas: Vec<f64> = Vec::with_capacity(kmax);
    let mut rank = kmax;
    let mut first_norm = 0.0f64;
    for k in 0..kmax {
        // Pivot among remaining columns.
        let mut best = k;
        let mut best_norm = 0.0f64;
        for j in k..r {
            let nrm: f64 = a[(j * n + k)..(j + 1) * n].iter().map(|z| z.norm_sqr()).sum();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        let normx = best_norm.sqrt();
        if k == 0 {
            first_norm = normx;
        }
        if normx <= rtol * first_norm || normx == 0.0 {
            rank = k;
            break;
        }
        if best != k {
            for i in 0..n {
                a.swap(k * n + i, best * n + i);
            }
        }
        let alpha = a[k * n + k];
        let phase = if alpha.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            alpha / alpha.norm()
        };
        let rkk = -phase * normx;
        let mut v: Vec<Complex64> = a[(k * n + k)..(k + 1) * n].to_vec();
        v[0] = alpha - rkk;
        let vnorm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let beta = if vnorm_sqr > 0.0 { 2.0 / vnorm_sqr } else { 0.0 };
        for j in (k + 1)..r {
            let col = &mut a[(j * n + k)..(j + 1) * n];
            let mut s = Complex64::new(0.0, 0.0);
            for (vi, ci) in v.iter().zip(col.iter()) {
                s += vi.conj() * ci;
            }
            s *= beta;
            for (vi, ci) in v.iter().zip(col.iter_mut()) {
                *ci -= vi * s;
            }
        }
        vs.push(v);
        betas.push(beta);
    }
    // Null basis columns: Q·e_j for j = rank..n (reflectors in reverse).
    let mut basis = Vec::with_capacity(n - rank);
    for j in rank..n {
        let mut q = vec![Complex64::new(0.0, 0.0); n];
        q[j] = Complex64::new(1.0, 0.0);
        for k in (0..rank).rev() {
            let v = &vs[k];
            let beta = betas[k];
            let qq = &mut q[k..n];
            let mut s = Complex64::new(0.0, 0.0);
            for (vi, ci) in v.iter().zip(qq.iter()) {
                s += vi.conj() * ci;
            }
            s *= beta;
            for (vi, ci) in v.iter().zip(qq.iter_mut()) {
                *ci -= vi * s;
            }
        }
        basis.push(q);
    }
    basis
}
