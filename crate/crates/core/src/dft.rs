//! Real discrete Fourier transforms.
//!
//! Two flavours live here. [`rfft`]/[`irfft`] transform a single real signal
//! into its full half spectrum and back. The `*_axis0` kernels transform every
//! column of a grid-major `[n, rest...]` array at once, keeping only the lowest
//! `modes` wavenumbers; they are written as dense products against cos/sin
//! tables so that the spectral layers run as GEMMs and their adjoints are plain
//! transposes.
//!
//! Conventions follow numpy: the forward transform is unnormalized,
//! `X_k = Σ_j x_j e^{-2πi jk/n}`, and the inverse carries the `1/n`. With this
//! pairing a band-limited function sampled at `n` and at `k·n` points has the
//! same low-mode coefficients up to the factor `n`, which the inverse removes.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{cos, sin, TAU};
use crate::tensor::{gemm, Tensor};
use crate::{Error, Result};

/// Half spectrum of a real signal of length `n`: `⌊n/2⌋+1` coefficients,
/// interleaved `[re₀, im₀, re₁, im₁, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    n: usize,
    data: Vec<f64>,
}

impl ComplexSpectrum {
    pub fn from_interleaved(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != 2 * (n / 2 + 1) {
            return Err(Error::invalid("spectrum length must be 2·(⌊n/2⌋+1)"));
        }
        Ok(Self { n, data })
    }

    /// Length of the real signal this spectrum belongs to.
    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> usize {
        self.data.len() / 2
    }

    pub fn re(&self, k: usize) -> f64 {
        self.data[2 * k]
    }

    pub fn im(&self, k: usize) -> f64 {
        self.data[2 * k + 1]
    }

    pub fn power(&self, k: usize) -> f64 {
        self.re(k) * self.re(k) + self.im(k) * self.im(k)
    }

    pub fn interleaved(&self) -> &[f64] {
        &self.data
    }

    /// Multiplicity of mode `k` in the full spectrum (1 for DC and Nyquist).
    pub fn multiplicity(&self, k: usize) -> f64 {
        mode_weight(self.n, k)
    }

    /// `(1/n)·Σ_k w_k |X_k|²`, equal to `Σ x²` by Parseval.
    pub fn energy(&self) -> f64 {
        (0..self.modes())
            .map(|k| self.multiplicity(k) * self.power(k))
            .sum::<f64>()
            / self.n as f64
    }
}

#[inline]
fn mode_weight(n: usize, k: usize) -> f64 {
    if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
        1.0
    } else {
        2.0
    }
}

fn twiddles(n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|i| {
            let a = TAU * i as f64 / n as f64;
            (cos(a), sin(a))
        })
        .unzip()
}

pub fn rfft(x: &[f64]) -> Result<ComplexSpectrum> {
    let n = x.len();
    if n == 0 {
        return Err(Error::invalid("rfft of an empty signal"));
    }
    let (c, s) = twiddles(n);
    let modes = n / 2 + 1;
    let mut data = vec![0.0; 2 * modes];
    for k in 0..modes {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &v) in x.iter().enumerate() {
            let idx = (j * k) % n;
            re += v * c[idx];
            im -= v * s[idx];
        }
        data[2 * k] = re;
        data[2 * k + 1] = im;
    }
    Ok(ComplexSpectrum { n, data })
}

/// Inverse of [`rfft`] onto `n` points. Imaginary parts of the DC and
/// Nyquist coefficients are ignored, as for any real inverse transform.
pub fn irfft(spec: &ComplexSpectrum, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("irfft onto zero points"));
    }
    let (c, s) = twiddles(n);
    let modes = spec.modes().min(n / 2 + 1);
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..modes {
            let idx = (j * k) % n;
            acc += mode_weight(n, k) * (spec.re(k) * c[idx] - spec.im(k) * s[idx]);
        }
        *o = acc / n as f64;
    }
    Ok(out)
}

/// Cos/sin tables for a truncated transform along a grid axis of length `n`.
#[derive(Clone, Debug)]
pub struct ModalBasis {
    n: usize,
    modes: usize,
    /// `[modes × n]`: `cos(2π jk/n)`.
    cos: Vec<f64>,
    /// `[modes × n]`: `sin(2π jk/n)`.
    sin: Vec<f64>,
    /// `[n × modes]`: `w_k/n · cos(2π jk/n)`.
    icos: Vec<f64>,
    /// `[n × modes]`: `w_k/n · sin(2π jk/n)`.
    isin: Vec<f64>,
}

impl ModalBasis {
    /// Basis keeping `min(modes, ⌊n/2⌋+1)` wavenumbers.
    pub fn new(n: usize, modes: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("grid axis must have at least 2 points"));
        }
        let m = modes.min(n / 2 + 1);
        let (c, s) = twiddles(n);
        let mut cos_t = vec![0.0; m * n];
        let mut sin_t = vec![0.0; m * n];
        let mut icos = vec![0.0; n * m];
        let mut isin = vec![0.0; n * m];
        for k in 0..m {
            let w = mode_weight(n, k) / n as f64;
            for j in 0..n {
                let idx = (j * k) % n;
                cos_t[k * n + j] = c[idx];
                sin_t[k * n + j] = s[idx];
                icos[j * m + k] = w * c[idx];
                isin[j * m + k] = w * s[idx];
            }
        }
        Ok(Self {
            n,
            modes: m,
            cos: cos_t,
            sin: sin_t,
            icos,
            isin,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of retained wavenumbers.
    pub fn modes(&self) -> usize {
        self.modes
    }
}

fn rest_len(shape: &[usize]) -> usize {
    shape[1..].iter().product()
}

/// `[n, rest...] -> [2, m, rest...]` (real plane then imaginary plane).
pub fn rfft_axis0(x: &Tensor, basis: &ModalBasis) -> Result<Tensor> {
    let shape = x.shape();
    if shape.is_empty() || shape[0] != basis.n {
        return Err(Error::ShapeMismatch {
            op: "rfft",
            lhs: shape.to_vec(),
            rhs: vec![basis.n],
        });
    }
    let (n, m, r) = (basis.n, basis.modes, rest_len(shape));
    let mut out = vec![0.0; 2 * m * r];
    let (re, im) = out.split_at_mut(m * r);
    gemm(m, n, r, 1.0, &basis.cos, n, 1, x.data(), r, 1, 0.0, re, r, 1);
    gemm(m, n, r, -1.0, &basis.sin, n, 1, x.data(), r, 1, 0.0, im, r, 1);
    let mut out_shape = vec![2, m];
    out_shape.extend_from_slice(&shape[1..]);
    Tensor::new(out_shape, out)?.finite("rfft")
}

/// Adjoint of [`rfft_axis0`]: `[2, m, rest...] -> [n, rest...]`.
pub fn rfft_axis0_adjoint(g: &Tensor, basis: &ModalBasis) -> Tensor {
    let (n, m) = (basis.n, basis.modes);
    let r = g.len() / (2 * m);
    let (gre, gim) = g.data().split_at(m * r);
    let mut out = vec![0.0; n * r];
    // cosᵀ is n×m with row stride 1, column stride n.
    gemm(n, m, r, 1.0, &basis.cos, 1, n, gre, r, 1, 0.0, &mut out, r, 1);
    gemm(n, m, r, -1.0, &basis.sin, 1, n, gim, r, 1, 1.0, &mut out, r, 1);
    let mut shape = vec![n];
    shape.extend_from_slice(&g.shape()[2..]);
    Tensor::new(shape, out).expect("adjoint shape")
}

/// `[2, m, rest...] -> [n, rest...]`, treating absent modes as zero.
pub fn irfft_axis0(spec: &Tensor, basis: &ModalBasis) -> Result<Tensor> {
    let shape = spec.shape();
    if shape.len() < 2 || shape[0] != 2 || shape[1] != basis.modes {
        return Err(Error::ShapeMismatch {
            op: "irfft",
            lhs: shape.to_vec(),
            rhs: vec![2, basis.modes],
        });
    }
    let (n, m) = (basis.n, basis.modes);
    let r: usize = shape[2..].iter().product();
    let (re, im) = spec.data().split_at(m * r);
    let mut out = vec![0.0; n * r];
    gemm(n, m, r, 1.0, &basis.icos, m, 1, re, r, 1, 0.0, &mut out, r, 1);
    gemm(n, m, r, -1.0, &basis.isin, m, 1, im, r, 1, 1.0, &mut out, r, 1);
    let mut out_shape = vec![n];
    out_shape.extend_from_slice(&shape[2..]);
    Tensor::new(out_shape, out)?.finite("irfft")
}

/// Adjoint of [`irfft_axis0`]: `[n, rest...] -> [2, m, rest...]`.
pub fn irfft_axis0_adjoint(g: &Tensor, basis: &ModalBasis) -> Tensor {
    let (n, m) = (basis.n, basis.modes);
    let r = g.len() / n;
    let mut out = vec![0.0; 2 * m * r];
    let (re, im) = out.split_at_mut(m * r);
    gemm(m, n, r, 1.0, &basis.icos, 1, m, g.data(), r, 1, 0.0, re, r, 1);
    gemm(m, n, r, -1.0, &basis.isin, 1, m, g.data(), r, 1, 0.0, im, r, 1);
    let mut shape = vec![2, m];
    shape.extend_from_slice(&g.shape()[1..]);
    Tensor::new(shape, out).expect("adjoint shape")
}

fn mix_dims(spec: &Tensor, w: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let ss = spec.shape();
    let ws = w.shape();
    let bad = || Error::ShapeMismatch {
        op: "spectral_mix",
        lhs: ss.to_vec(),
        rhs: ws.to_vec(),
    };
    if ss.len() < 3 || ws.len() != 4 || ss[0] != 2 || ws[0] != 2 {
        return Err(bad());
    }
    let m = ss[1];
    let cin = *ss.last().unwrap();
    if ws[1] < m || ws[2] != cin {
        return Err(bad());
    }
    let rows = spec.len() / (2 * m * cin);
    Ok((m, rows, cin, ws[3]))
}

/// Per-mode complex channel mixing `Y_k = X_k · W_k`.
///
/// `spec` is `[2, m, ..., cin]`, `w` is `[2, M, cin, cout]` with `M ≥ m`; only
/// the first `m` weight modes are used.
pub fn spectral_mix(spec: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (m, rows, cin, cout) = mix_dims(spec, w)?;
    let big_m = w.shape()[1];
    let xs = spec.data();
    let ws = w.data();
    let xplane = m * rows * cin;
    let wplane = big_m * cin * cout;
    let yplane = m * rows * cout;
    let mut out = vec![0.0; 2 * yplane];
    for k in 0..m {
        let xr = &xs[k * rows * cin..];
        let xi = &xs[xplane + k * rows * cin..];
        let wr = &ws[k * cin * cout..];
        let wi = &ws[wplane + k * cin * cout..];
        let (yre_all, yim_all) = out.split_at_mut(yplane);
        let yr = &mut yre_all[k * rows * cout..(k + 1) * rows * cout];
        gemm(rows, cin, cout, 1.0, xr, cin, 1, wr, cout, 1, 0.0, yr, cout, 1);
        gemm(rows, cin, cout, -1.0, xi, cin, 1, wi, cout, 1, 1.0, yr, cout, 1);
        let yi = &mut yim_all[k * rows * cout..(k + 1) * rows * cout];
        gemm(rows, cin, cout, 1.0, xr, cin, 1, wi, cout, 1, 0.0, yi, cout, 1);
        gemm(rows, cin, cout, 1.0, xi, cin, 1, wr, cout, 1, 1.0, yi, cout, 1);
    }
    let mut shape = spec.shape().to_vec();
    *shape.last_mut().unwrap() = cout;
    Tensor::new(shape, out)?.finite("spectral_mix")
}

/// Gradients of [`spectral_mix`] with respect to its spectrum and weights.
pub fn spectral_mix_backward(spec: &Tensor, w: &Tensor, gy: &Tensor) -> (Tensor, Tensor) {
    let (m, rows, cin, cout) = mix_dims(spec, w).expect("validated in forward");
    let big_m = w.shape()[1];
    let xs = spec.data();
    let ws = w.data();
    let gs = gy.data();
    let xplane = m * rows * cin;
    let wplane = big_m * cin * cout;
    let yplane = m * rows * cout;
    let mut gx = vec![0.0; 2 * xplane];
    let mut gw = vec![0.0; 2 * wplane];
    for k in 0..m {
        let xr = &xs[k * rows * cin..(k + 1) * rows * cin];
        let xi = &xs[xplane + k * rows * cin..xplane + (k + 1) * rows * cin];
        let wr = &ws[k * cin * cout..(k + 1) * cin * cout];
        let wi = &ws[wplane + k * cin * cout..wplane + (k + 1) * cin * cout];
        let gr = &gs[k * rows * cout..(k + 1) * rows * cout];
        let gi = &gs[yplane + k * rows * cout..yplane + (k + 1) * rows * cout];
        {
            let (gxr_all, gxi_all) = gx.split_at_mut(xplane);
            let gxr = &mut gxr_all[k * rows * cin..(k + 1) * rows * cin];
            // gXre = gYre·Wreᵀ + gYim·Wimᵀ
            gemm(rows, cout, cin, 1.0, gr, cout, 1, wr, 1, cout, 0.0, gxr, cin, 1);
            gemm(rows, cout, cin, 1.0, gi, cout, 1, wi, 1, cout, 1.0, gxr, cin, 1);
            let gxi = &mut gxi_all[k * rows * cin..(k + 1) * rows * cin];
            // gXim = -gYre·Wimᵀ + gYim·Wreᵀ
            gemm(rows, cout, cin, -1.0, gr, cout, 1, wi, 1, cout, 0.0, gxi, cin, 1);
            gemm(rows, cout, cin, 1.0, gi, cout, 1, wr, 1, cout, 1.0, gxi, cin, 1);
        }
        {
            let (gwr_all, gwi_all) = gw.split_at_mut(wplane);
            let gwr = &mut gwr_all[k * cin * cout..(k + 1) * cin * cout];
            // gWre = Xreᵀ·gYre + Ximᵀ·gYim
            gemm(cin, rows, cout, 1.0, xr, 1, cin, gr, cout, 1, 0.0, gwr, cout, 1);
            gemm(cin, rows, cout, 1.0, xi, 1, cin, gi, cout, 1, 1.0, gwr, cout, 1);
            let gwi = &mut gwi_all[k * cin * cout..(k + 1) * cin * cout];
            // gWim = -Ximᵀ·gYre + Xreᵀ·gYim
            gemm(cin, rows, cout, -1.0, xi, 1, cin, gr, cout, 1, 0.0, gwi, cout, 1);
            gemm(cin, rows, cout, 1.0, xr, 1, cin, gi, cout, 1, 1.0, gwi, cout, 1);
        }
    }
    (
        Tensor::new(spec.shape().to_vec(), gx).expect("shape"),
        Tensor::new(w.shape().to_vec(), gw).expect("shape"),
    )
}
