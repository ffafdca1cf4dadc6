//! Third-order tensors and the t-product algebra built on a mode-3 FFT.
//!
//! A [`Tensor3`] of shape `n1 × n2 × n3` is stored frontal-slice major: the
//! entries of slice `k` are contiguous and column-major, so a frontal slice
//! maps directly onto an `n1 × n2` matrix. Every t-algebra operation works in
//! the Fourier domain along the third mode, where the t-product becomes
//! independent matrix products on the frontal slices.
//!
//! Conventions:
//!
//! * forward FFT unnormalized, inverse scaled by `1 / n3`;
//! * tensor nuclear norm = sum of nuclear norms of all Fourier-domain frontal
//!   slices (no `1 / n3` factor);
//! * for real input only slices `0..=n3/2` are factorized, the rest follow by
//!   conjugate symmetry.

use std::ops::{Add, Index, IndexMut, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::complete_basis;

/// Largest imaginary residue (relative to the largest entry) tolerated when an
/// inverse transform is truncated back to a real tensor.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Singular values below this are treated as zero in rank-sensitive checks.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Dense real third-order tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    data: Vec<f64>,
    n1: usize,
    n2: usize,
    n3: usize,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            data: vec![0.0; n1 * n2 * n3],
            n1,
            n2,
            n3,
        }
    }

    pub fn from_fn(n1: usize, n2: usize, n3: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n1, n2, n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    t[(i, j, k)] = f(i, j, k);
                }
            }
        }
        t
    }

    /// The t-product identity: first frontal slice `I_n`, all others zero.
    pub fn identity(n: usize, n3: usize) -> Self {
        let mut t = Self::zeros(n, n, n3);
        if n3 > 0 {
            for i in 0..n {
                t[(i, i, 0)] = 1.0;
            }
        }
        t
    }

    /// Builds a tensor from `n3` frontal slices of equal shape.
    pub fn from_frontal_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Ok(Self::zeros(0, 0, 0));
        };
        let (n1, n2) = first.shape();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::Shape(format!(
                    "frontal slice {k} is {:?}, expected {:?}",
                    s.shape(),
                    (n1, n2)
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            data,
            n1,
            n2,
            n3: slices.len(),
        })
    }

    /// Stacks matrices as lateral slices: slice `j` becomes `t(:, j, :)`.
    ///
    /// With `m` graphs of size `n × n` this yields the `n × m × n` tensor whose
    /// `j`-th lateral slice is the `j`-th graph.
    pub fn from_lateral_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Ok(Self::zeros(0, 0, 0));
        };
        let (n1, n3) = first.shape();
        let mut t = Self::zeros(n1, slices.len(), n3);
        for (j, s) in slices.iter().enumerate() {
            if s.shape() != (n1, n3) {
                return Err(Error::Shape(format!(
                    "lateral slice {j} is {:?}, expected {:?}",
                    s.shape(),
                    (n1, n3)
                )));
            }
            t.set_lateral_slice(j, s);
        }
        Ok(t)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.n3)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Frontal slice `t(:, :, k)` as an `n1 × n2` matrix.
    pub fn frontal_slice(&self, k: usize) -> DMatrix<f64> {
        let len = self.n1 * self.n2;
        DMatrix::from_column_slice(self.n1, self.n2, &self.data[k * len..(k + 1) * len])
    }

    /// Lateral slice `t(:, j, :)` as an `n1 × n3` matrix.
    pub fn lateral_slice(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n1, self.n3, |i, k| self[(i, j, k)])
    }

    pub fn set_lateral_slice(&mut self, j: usize, m: &DMatrix<f64>) {
        assert_eq!(m.shape(), (self.n1, self.n3), "lateral slice shape");
        for k in 0..self.n3 {
            for i in 0..self.n1 {
                self[(i, j, k)] = m[(i, k)];
            }
        }
    }

    /// t-transpose: every frontal slice transposed, slices `1..n3` reversed.
    pub fn transpose(&self) -> Self {
        let n3 = self.n3;
        Self::from_fn(self.n2, self.n1, n3, |i, j, k| {
            let src = if k == 0 { 0 } else { n3 - k };
            self[(j, i, src)]
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest absolute entry (tensor ∞-norm).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&x| f(x)).collect(),
            ..*self
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|x| a * x)
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "tensor shape mismatch");
        Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..*self
        }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.n1 && j < self.n2 && k < self.n3);
        i + self.n1 * (j + self.n2 * k)
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;

    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(i, j, k)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }
}

impl Add for &Tensor3 {
    type Output = Tensor3;

    fn add(self, rhs: &Tensor3) -> Tensor3 {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Tensor3 {
    type Output = Tensor3;

    fn sub(self, rhs: &Tensor3) -> Tensor3 {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Mode-3 Fourier transform of a [`Tensor3`], same layout with complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTensor3 {
    data: Vec<Complex64>,
    n1: usize,
    n2: usize,
    n3: usize,
}

impl FourierTensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); n1 * n2 * n3],
            n1,
            n2,
            n3,
        }
    }

    pub fn from_frontal_slices(slices: &[DMatrix<Complex64>]) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Ok(Self::zeros(0, 0, 0));
        };
        let (n1, n2) = first.shape();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::Shape(format!(
                    "Fourier slice {k} is {:?}, expected {:?}",
                    s.shape(),
                    (n1, n2)
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            data,
            n1,
            n2,
            n3: slices.len(),
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.n3)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn frontal_slice(&self, k: usize) -> DMatrix<Complex64> {
        let len = self.n1 * self.n2;
        DMatrix::from_column_slice(self.n1, self.n2, &self.data[k * len..(k + 1) * len])
    }

    pub fn frontal_slices(&self) -> Vec<DMatrix<Complex64>> {
        (0..self.n3).map(|k| self.frontal_slice(k)).collect()
    }

    /// Checks that slice `k` equals the conjugate of slice `n3 − k` for
    /// `k ≥ 1`, i.e. that this is the transform of a real tensor.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let len = self.n1 * self.n2;
        (1..self.n3).all(|k| {
            let mirror = self.n3 - k;
            (0..len).all(|e| (self.data[k * len + e] - self.data[mirror * len + e].conj()).norm() <= tol)
        })
    }
}

impl Index<(usize, usize, usize)> for FourierTensor3 {
    type Output = Complex64;

    fn index(&self, (i, j, k): (usize, usize, usize)) -> &Complex64 {
        &self.data[i + self.n1 * (j + self.n2 * k)]
    }
}

/// Unnormalized DFT of every tube `t(i, j, :)`.
pub fn fft_mode3(t: &Tensor3) -> FourierTensor3 {
    let (n1, n2, n3) = t.shape();
    let mut out = FourierTensor3::zeros(n1, n2, n3);
    if out.data.is_empty() {
        return out;
    }
    let stride = n1 * n2;
    // tubes laid out contiguously so the planner can batch them
    let mut buf: Vec<Complex64> = (0..stride)
        .flat_map(|tube| (0..n3).map(move |k| (tube, k)))
        .map(|(tube, k)| Complex64::new(t.data[tube + k * stride], 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n3).process(&mut buf);
    for tube in 0..stride {
        for k in 0..n3 {
            out.data[tube + k * stride] = buf[tube * n3 + k];
        }
    }
    out
}

/// Inverse of [`fft_mode3`], truncated to a real tensor.
///
/// Fails with [`Error::Consistency`] when the imaginary residue exceeds
/// [`IMAG_RESIDUE_TOL`] relative to the largest entry, which happens when the
/// input is not the transform of a real tensor.
pub fn ifft_mode3(f: &FourierTensor3) -> Result<Tensor3> {
    let (n1, n2, n3) = f.shape();
    let mut out = Tensor3::zeros(n1, n2, n3);
    if out.data.is_empty() {
        return Ok(out);
    }
    let stride = n1 * n2;
    let mut buf: Vec<Complex64> = (0..stride)
        .flat_map(|tube| (0..n3).map(move |k| tube + k * stride))
        .map(|o| f.data[o])
        .collect();
    FftPlanner::new().plan_fft_inverse(n3).process(&mut buf);
    let scale = 1.0 / n3 as f64;
    let mut max_re = 0.0f64;
    let mut max_im = 0.0f64;
    for tube in 0..stride {
        for k in 0..n3 {
            let z = buf[tube * n3 + k] * scale;
            max_re = max_re.max(z.re.abs());
            max_im = max_im.max(z.im.abs());
            out.data[tube + k * stride] = z.re;
        }
    }
    if max_im > IMAG_RESIDUE_TOL * max_re.max(f64::MIN_POSITIVE) && max_im > IMAG_RESIDUE_TOL {
        return Err(Error::Consistency(format!(
            "inverse FFT left imaginary residue {max_im:e} against magnitude {max_re:e}"
        )));
    }
    Ok(out)
}

/// Slices `k` and `n3 − k` of a real tensor's transform are conjugate; those
/// equal to their own mirror (`k = 0`, and `k = n3/2` for even `n3`) are real.
fn is_self_conjugate(k: usize, n3: usize) -> bool {
    k == 0 || 2 * k == n3
}

/// Applies `f` to Fourier slices `0..=n3/2` in parallel and fills the upper
/// half by conjugation. `f` receives the slice index and whether that slice
/// is real-valued.
fn map_half_spectrum<F>(n3: usize, f: F) -> Vec<DMatrix<Complex64>>
where
    F: Fn(usize, bool) -> DMatrix<Complex64> + Sync,
{
    if n3 == 0 {
        return Vec::new();
    }
    let half: Vec<DMatrix<Complex64>> = (0..=n3 / 2)
        .into_par_iter()
        .map(|k| f(k, is_self_conjugate(k, n3)))
        .collect();
    (0..n3)
        .map(|k| {
            if k <= n3 / 2 {
                half[k].clone()
            } else {
                half[n3 - k].map(|z| z.conj())
            }
        })
        .collect()
}

struct SliceSvd {
    /// n1 × r
    u: DMatrix<Complex64>,
    s: DVector<f64>,
    /// r × n2
    v_t: DMatrix<Complex64>,
}

/// Thin SVD of a Fourier slice. Real slices are factorized in real
/// arithmetic so their singular vectors carry no arbitrary complex phase.
fn slice_svd(m: &DMatrix<Complex64>, real: bool) -> SliceSvd {
    if real {
        let svd = m.map(|z| z.re).svd(true, true);
        SliceSvd {
            u: svd.u.expect("u requested").map(|x| Complex64::new(x, 0.0)),
            s: svd.singular_values,
            v_t: svd.v_t.expect("v_t requested").map(|x| Complex64::new(x, 0.0)),
        }
    } else {
        let svd = m.clone().svd(true, true);
        SliceSvd {
            u: svd.u.expect("u requested"),
            s: svd.singular_values,
            v_t: svd.v_t.expect("v_t requested"),
        }
    }
}

/// t-product `a * b`.
pub fn t_product(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let (a1, a2, a3) = a.shape();
    let (b1, b2, b3) = b.shape();
    if a2 != b1 || a3 != b3 {
        return Err(Error::Shape(format!("t-product of {a1}×{a2}×{a3} and {b1}×{b2}×{b3}")));
    }
    if a3 == 0 {
        return Ok(Tensor3::zeros(a1, b2, 0));
    }
    let fa = fft_mode3(a);
    let fb = fft_mode3(b);
    let slices = map_half_spectrum(a3, |k, _| fa.frontal_slice(k) * fb.frontal_slice(k));
    ifft_mode3(&FourierTensor3::from_frontal_slices(&slices)?)
}

/// Result of [`t_svd`]: `t = u * s * vᵀ`.
#[derive(Debug, Clone)]
pub struct TSvd {
    /// n1 × n1 × n3, orthogonal.
    pub u: Tensor3,
    /// n1 × n2 × n3, f-diagonal.
    pub s: Tensor3,
    /// n2 × n2 × n3, orthogonal.
    pub v: Tensor3,
}

/// Tensor SVD via per-slice SVDs in the Fourier domain.
pub fn t_svd(t: &Tensor3) -> Result<TSvd> {
    let (n1, n2, n3) = t.shape();
    if n3 == 0 {
        return Ok(TSvd {
            u: Tensor3::zeros(n1, n1, 0),
            s: Tensor3::zeros(n1, n2, 0),
            v: Tensor3::zeros(n2, n2, 0),
        });
    }
    let ft = fft_mode3(t);
    let factors: Vec<(DMatrix<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>)> = {
        let half: Vec<_> = (0..=n3 / 2)
            .into_par_iter()
            .map(|k| {
                let svd = slice_svd(&ft.frontal_slice(k), is_self_conjugate(k, n3));
                let u = complete_basis(&svd.u);
                let v = complete_basis(&svd.v_t.adjoint());
                let mut s = DMatrix::zeros(n1, n2);
                for (i, &sv) in svd.s.iter().enumerate() {
                    s[(i, i)] = Complex64::new(sv, 0.0);
                }
                (u, s, v)
            })
            .collect();
        (0..n3)
            .map(|k| {
                if k < half.len() {
                    half[k].clone()
                } else {
                    let (u, s, v) = &half[n3 - k];
                    (u.map(|z| z.conj()), s.clone(), v.map(|z| z.conj()))
                }
            })
            .collect()
    };
    let us: Vec<_> = factors.iter().map(|f| f.0.clone()).collect();
    let ss: Vec<_> = factors.iter().map(|f| f.1.clone()).collect();
    let vs: Vec<_> = factors.iter().map(|f| f.2.clone()).collect();
    Ok(TSvd {
        u: ifft_mode3(&FourierTensor3::from_frontal_slices(&us)?)?,
        s: ifft_mode3(&FourierTensor3::from_frontal_slices(&ss)?)?,
        v: ifft_mode3(&FourierTensor3::from_frontal_slices(&vs)?)?,
    })
}

/// Tensor nuclear norm: sum over all Fourier frontal slices of their nuclear
/// norms.
pub fn tnn(t: &Tensor3) -> f64 {
    let (_, _, n3) = t.shape();
    if n3 == 0 {
        return 0.0;
    }
    let ft = fft_mode3(t);
    let per_slice: Vec<f64> = (0..=n3 / 2)
        .into_par_iter()
        .map(|k| {
            let m = ft.frontal_slice(k);
            if is_self_conjugate(k, n3) {
                m.map(|z| z.re).singular_values().sum()
            } else {
                m.singular_values().sum()
            }
        })
        .collect();
    per_slice
        .iter()
        .enumerate()
        .map(|(k, s)| if is_self_conjugate(k, n3) { *s } else { 2.0 * s })
        .sum()
}

/// Tubal shrinkage: the minimizer of `tau·tnn(L) + ½‖L − d‖_F²`.
///
/// Because `‖L‖_F² = (1/n3)·Σ_k ‖L̃_k‖_F²`, the problem separates over
/// Fourier slices into `tau·‖L̃_k‖_* + (1/2n3)‖L̃_k − d̃_k‖_F²`, i.e. singular
/// value soft-thresholding at `n3·tau` on every slice.
pub fn tubal_shrink(d: &Tensor3, tau: f64) -> Result<Tensor3> {
    assert!(tau.is_finite() && tau >= 0.0, "shrinkage weight must be finite and ≥ 0");
    let (n1, n2, n3) = d.shape();
    if n3 == 0 {
        return Ok(d.clone());
    }
    let threshold = n3 as f64 * tau;
    let fd = fft_mode3(d);
    let slices = map_half_spectrum(n3, |k, real| {
        let svd = slice_svd(&fd.frontal_slice(k), real);
        let mut out = DMatrix::<Complex64>::zeros(n1, n2);
        for (r, &sv) in svd.s.iter().enumerate() {
            let shrunk = sv - threshold;
            if shrunk > 0.0 {
                let ucol = svd.u.column(r);
                let vrow = svd.v_t.row(r);
                out += (ucol * vrow) * Complex64::new(shrunk, 0.0);
            }
        }
        out
    });
    ifft_mode3(&FourierTensor3::from_frontal_slices(&slices)?)
}
