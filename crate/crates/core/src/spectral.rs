//! Divergence-free Fourier basis on the torus `[0, 2π)²`, the Stokes operator
//! and the convection nonlinearity.
//!
//! Every basis element is `e = √2 · k⊥/|k| · trig(k·x)` with `trig ∈ {cos, sin}`
//! and `k⊥ = (-ky, kx)`. Inner products use the normalized measure
//! `dx / (2π)²`, so the basis is orthonormal and `‖u‖_H` is the ℓ² norm of the
//! coefficient vector. Only one of `k`, `-k` is kept per parity and the mean
//! mode is excluded.
//!
//! Quadratic terms are evaluated pseudo-spectrally on an `M × M` collocation
//! grid with `M > 3·N_max`, which makes every cubic integrand a trigonometric
//! polynomial that the grid integrates exactly.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const HALF_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WaveVector {
    pub kx: i32,
    pub ky: i32,
}

impl WaveVector {
    pub fn new(kx: i32, ky: i32) -> Self {
        Self { kx, ky }
    }

    pub fn norm_sq(self) -> i64 {
        let (x, y) = (self.kx as i64, self.ky as i64);
        x * x + y * y
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.kx, self.ky)
    }
}

/// Eigenvalue of the Stokes operator for wave vector `k`: `|k|²`.
pub fn stokes_eigenvalue(k: WaveVector) -> Result<f64> {
    if k.kx == 0 && k.ky == 0 {
        return Err(Error::ZeroMode);
    }
    Ok(k.norm_sq() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Cos,
    Sin,
}

impl Parity {
    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Cos => "cos",
            Parity::Sin => "sin",
        }
    }
}

impl std::str::FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(Parity::Cos),
            "sin" => Ok(Parity::Sin),
            other => Err(Error::InvalidArgument(format!(
                "unknown parity '{other}' (expected cos or sin)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mode {
    pub k: WaveVector,
    pub parity: Parity,
}

/// Precomputed geometry of one basis mode.
#[derive(Clone, Copy, Debug)]
struct ModeGeom {
    kx: f64,
    ky: f64,
    kabs: f64,
    // unit vector k⊥/|k|
    a1: f64,
    a2: f64,
    // flat indices of +k and -k in the spectral array
    pos: usize,
    neg: usize,
    sin: bool,
}

/// Truncated divergence-free basis with its FFT plans.
pub struct Basis {
    n_max: usize,
    modes: Vec<Mode>,
    eigenvalues: Vec<f64>,
    geom: Vec<ModeGeom>,
    grid: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fft_scratch_len: usize,
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Basis")
            .field("n_max", &self.n_max)
            .field("dim", &self.modes.len())
            .field("grid", &self.grid)
            .finish()
    }
}

/// Smallest 5-smooth integer that is at least `n`.
fn smooth_size(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .expect("unbounded search")
}

impl Basis {
    /// Builds the basis of all modes with `|kx|, |ky| <= n_max`.
    pub fn new(n_max: usize) -> Result<Arc<Self>> {
        if n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        let n = n_max as i32;
        let mut modes = Vec::new();
        for kx in 0..=n {
            for ky in -n..=n {
                if kx > 0 || (kx == 0 && ky > 0) {
                    let k = WaveVector::new(kx, ky);
                    modes.push(Mode { k, parity: Parity::Cos });
                    modes.push(Mode { k, parity: Parity::Sin });
                }
            }
        }
        modes.sort_by(|a, b| {
            (a.k.norm_sq(), a.k.kx, a.k.ky, a.parity).cmp(&(b.k.norm_sq(), b.k.kx, b.k.ky, b.parity))
        });

        let grid = smooth_size(3 * n_max + 1);
        let idx = |k: i32| k.rem_euclid(grid as i32) as usize;
        let eigenvalues = modes.iter().map(|m| m.k.norm_sq() as f64).collect();
        let geom = modes
            .iter()
            .map(|m| {
                let (kx, ky) = (m.k.kx as f64, m.k.ky as f64);
                let kabs = (kx * kx + ky * ky).sqrt();
                ModeGeom {
                    kx,
                    ky,
                    kabs,
                    a1: -ky / kabs,
                    a2: kx / kabs,
                    pos: idx(m.k.kx) * grid + idx(m.k.ky),
                    neg: idx(-m.k.kx) * grid + idx(-m.k.ky),
                    sin: m.parity == Parity::Sin,
                }
            })
            .collect();

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid);
        let inv = planner.plan_fft_inverse(grid);
        let fft_scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Ok(Arc::new(Self {
            n_max,
            modes,
            eigenvalues,
            geom,
            grid,
            fwd,
            inv,
            fft_scratch_len,
        }))
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Collocation grid size `M`.
    pub fn grid_size(&self) -> usize {
        self.grid
    }

    pub fn index_of(&self, mode: Mode) -> Option<usize> {
        self.modes.iter().position(|m| *m == mode)
    }

    pub fn scratch(&self) -> Scratch {
        let len = self.grid * self.grid;
        Scratch {
            a: vec![Complex64::default(); len],
            b: vec![Complex64::default(); len],
            c: vec![Complex64::default(); len],
            fft: vec![Complex64::default(); self.fft_scratch_len],
        }
    }

    fn same(&self, other: &Basis) -> bool {
        std::ptr::eq(self, other) || self.n_max == other.n_max
    }

    // -- spectral loading --------------------------------------------------

    /// Packed spectrum of `u1 + i·u2`, optionally differentiated along one axis.
    fn load_velocity(&self, c: &[f64], buf: &mut [Complex64], deriv: Option<usize>) {
        buf.fill(Complex64::default());
        for (g, &ci) in self.geom.iter().zip(c) {
            if ci == 0.0 {
                continue;
            }
            let ahat = if g.sin {
                Complex64::new(0.0, -HALF_SQRT2 * ci)
            } else {
                Complex64::new(HALF_SQRT2 * ci, 0.0)
            };
            let p = Complex64::new(g.a1, g.a2);
            let (mut at_pos, mut at_neg) = (p * ahat, p * ahat.conj());
            if let Some(axis) = deriv {
                let kd = if axis == 0 { g.kx } else { g.ky };
                at_pos *= Complex64::new(0.0, kd);
                at_neg *= Complex64::new(0.0, -kd);
            }
            buf[g.pos] += at_pos;
            buf[g.neg] += at_neg;
        }
    }

    /// Spectrum of the scalar vorticity `∂x u2 − ∂y u1`.
    fn load_vorticity(&self, c: &[f64], buf: &mut [Complex64]) {
        buf.fill(Complex64::default());
        for (g, &ci) in self.geom.iter().zip(c) {
            if ci == 0.0 {
                continue;
            }
            let ahat = if g.sin {
                Complex64::new(0.0, -HALF_SQRT2 * ci)
            } else {
                Complex64::new(HALF_SQRT2 * ci, 0.0)
            };
            let w = Complex64::new(0.0, g.kabs) * ahat;
            buf[g.pos] += w;
            buf[g.neg] += w.conj();
        }
    }

    // -- transforms ----------------------------------------------------------

    fn transpose(&self, buf: &mut [Complex64]) {
        let m = self.grid;
        for i in 0..m {
            for j in (i + 1)..m {
                buf.swap(i * m + j, j * m + i);
            }
        }
    }

    /// Spectral `[kx][ky]` layout to grid `[y][x]` layout.
    fn inverse2d(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inv.process_with_scratch(buf, scratch);
        self.transpose(buf);
        self.inv.process_with_scratch(buf, scratch);
    }

    /// Grid `[y][x]` layout to unnormalized spectral `[kx][ky]` layout.
    fn forward2d(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.fwd.process_with_scratch(buf, scratch);
        self.transpose(buf);
        self.fwd.process_with_scratch(buf, scratch);
    }

    /// Projects a packed vector field `f1 + i·f2` (forward-transformed) onto
    /// the basis, writing `(f, e_l)` into `out`.
    fn project_packed(&self, spec: &[Complex64], out: &mut [f64]) {
        let norm = std::f64::consts::SQRT_2 / (self.grid * self.grid) as f64;
        for (g, o) in self.geom.iter().zip(out.iter_mut()) {
            let gp = spec[g.pos];
            let gn = spec[g.neg].conj();
            let f1 = (gp + gn) * 0.5;
            let f2 = (gp - gn) * Complex64::new(0.0, -0.5);
            let s = f1 * g.a1 + f2 * g.a2;
            *o = if g.sin { -norm * s.im } else { norm * s.re };
        }
    }

    // -- slice-level operators (hot paths) -----------------------------------

    /// Writes the Galerkin projection of `B(u,u)` into `out`.
    ///
    /// Uses the rotational form `(u·∇)u = ω(−u2, u1) + ∇|u|²/2`; the gradient
    /// part is orthogonal to every basis mode.
    pub fn nonlinear_into(&self, u: &[f64], out: &mut [f64], s: &mut Scratch) {
        self.load_velocity(u, &mut s.a, None);
        self.load_vorticity(u, &mut s.b);
        self.inverse2d(&mut s.a, &mut s.fft);
        self.inverse2d(&mut s.b, &mut s.fft);
        for (a, w) in s.a.iter_mut().zip(s.b.iter()) {
            *a *= Complex64::new(0.0, w.re);
        }
        self.forward2d(&mut s.a, &mut s.fft);
        self.project_packed(&s.a, out);
    }

    /// Writes the Galerkin projection of `B(u,v)`, i.e. `b(u, v, e_l)` for
    /// every mode `l`, into `out`.
    pub fn bilinear_into(&self, u: &[f64], v: &[f64], out: &mut [f64], s: &mut Scratch) {
        self.load_velocity(u, &mut s.a, None);
        self.load_velocity(v, &mut s.b, Some(0));
        self.load_velocity(v, &mut s.c, Some(1));
        self.inverse2d(&mut s.a, &mut s.fft);
        self.inverse2d(&mut s.b, &mut s.fft);
        self.inverse2d(&mut s.c, &mut s.fft);
        for ((a, d1), d2) in s.a.iter_mut().zip(s.b.iter()).zip(s.c.iter()) {
            *a = *d1 * a.re + *d2 * a.im;
        }
        self.forward2d(&mut s.a, &mut s.fft);
        self.project_packed(&s.a, out);
    }

    /// Velocity components of `u` on the collocation grid, `[y][x]` layout.
    pub fn synthesize(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut s = self.scratch();
        self.load_velocity(u, &mut s.a, None);
        self.inverse2d(&mut s.a, &mut s.fft);
        (s.a.iter().map(|z| z.re).collect(), s.a.iter().map(|z| z.im).collect())
    }

    /// Divergence of a grid velocity field computed spectrally from its samples.
    pub fn grid_divergence(&self, u1: &[f64], u2: &[f64]) -> Vec<f64> {
        let m = self.grid;
        let mut s = self.scratch();
        for (p, (x, y)) in s.a.iter_mut().zip(u1.iter().zip(u2)) {
            *p = Complex64::new(*x, *y);
        }
        self.forward2d(&mut s.a, &mut s.fft);
        let signed = |i: usize| if i <= m / 2 { i as f64 } else { i as f64 - m as f64 };
        for ix in 0..m {
            for iy in 0..m {
                let gp = s.a[ix * m + iy];
                let gn = s.a[((m - ix) % m) * m + (m - iy) % m].conj();
                let f1 = (gp + gn) * 0.5;
                let f2 = (gp - gn) * Complex64::new(0.0, -0.5);
                s.b[ix * m + iy] = Complex64::new(0.0, 1.0) * (f1 * signed(ix) + f2 * signed(iy));
            }
        }
        self.inverse2d(&mut s.b, &mut s.fft);
        let scale = 1.0 / (m * m) as f64;
        s.b.iter().map(|z| z.re * scale).collect()
    }

    /// Streams the coupling coefficients `b(e_i, e_j, e_l)` to `sink`.
    ///
    /// With `dense == false` entries below `1e-13` in magnitude are skipped.
    pub fn for_each_coupling<F: FnMut(usize, usize, usize, f64)>(&self, dense: bool, mut sink: F) {
        let d = self.dim();
        let mut s = self.scratch();
        let mut ei = vec![0.0; d];
        let mut ej = vec![0.0; d];
        let mut out = vec![0.0; d];
        for i in 0..d {
            ei.fill(0.0);
            ei[i] = 1.0;
            for j in 0..d {
                ej.fill(0.0);
                ej[j] = 1.0;
                self.bilinear_into(&ei, &ej, &mut out, &mut s);
                for (l, &b) in out.iter().enumerate() {
                    if dense || b.abs() > 1e-13 {
                        sink(i, j, l, b);
                    }
                }
            }
        }
    }

    /// Writes the coupling tensor as CSV with header `i,j,l,b_ijl`.
    pub fn write_coupling_csv<W: Write>(&self, mut w: W, dense: bool) -> Result<()> {
        writeln!(w, "i,j,l,b_ijl")?;
        let mut err = None;
        self.for_each_coupling(dense, |i, j, l, b| {
            if err.is_none() {
                if let Err(e) = writeln!(w, "{i},{j},{l},{b:e}") {
                    err = Some(e);
                }
            }
        });
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

/// Reusable FFT buffers for one thread of work.
pub struct Scratch {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
    fft: Vec<Complex64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub h: f64,
    pub v: f64,
    pub ah: f64,
}

/// A real divergence-free velocity field stored as basis coefficients.
#[derive(Clone, Debug)]
pub struct SpectralField {
    basis: Arc<Basis>,
    coeffs: Vec<f64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.basis.same(&other.basis) && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(basis: &Arc<Basis>) -> Self {
        Self {
            basis: basis.clone(),
            coeffs: vec![0.0; basis.dim()],
        }
    }

    pub fn from_coeffs(basis: &Arc<Basis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                basis.dim(),
                coeffs.len()
            )));
        }
        Ok(Self {
            basis: basis.clone(),
            coeffs,
        })
    }

    pub fn single_mode(basis: &Arc<Basis>, index: usize, amplitude: f64) -> Result<Self> {
        let dim = basis.dim();
        if index >= dim {
            return Err(Error::ModeIndex { index, dim });
        }
        let mut f = Self::zeros(basis);
        f.coeffs[index] = amplitude;
        Ok(f)
    }

    /// Random field with i.i.d. Gaussian coefficients scaled by `λ^{-decay/2}`.
    pub fn random<R: Rng + ?Sized>(basis: &Arc<Basis>, rng: &mut R, decay: f64) -> Self {
        let coeffs = basis
            .eigenvalues()
            .iter()
            .map(|&l| {
                let z: f64 = rng.sample(StandardNormal);
                z * l.powf(-0.5 * decay)
            })
            .collect();
        Self {
            basis: basis.clone(),
            coeffs,
        }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn check(&self, other: &SpectralField) -> Result<()> {
        if self.basis.same(&other.basis) {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }

    pub fn norms(&self) -> Norms {
        let (mut h, mut v, mut ah) = (0.0, 0.0, 0.0);
        for (&c, &l) in self.coeffs.iter().zip(self.basis.eigenvalues()) {
            let c2 = c * c;
            h += c2;
            v += l * c2;
            ah += l * l * c2;
        }
        Norms {
            h: h.sqrt(),
            v: v.sqrt(),
            ah: ah.sqrt(),
        }
    }

    pub fn norm_h(&self) -> f64 {
        norm_sq(&self.coeffs).sqrt()
    }

    /// H inner product.
    pub fn inner(&self, other: &SpectralField) -> Result<f64> {
        self.check(other)?;
        Ok(dot(&self.coeffs, &other.coeffs))
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.check(other)?;
        Ok(Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.check(other)?;
        Ok(Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    /// Trilinear form `b(self, v, w) = ⟨(self·∇)v, w⟩`.
    pub fn bilinear_b(&self, v: &SpectralField, w: &SpectralField) -> Result<f64> {
        self.check(v)?;
        self.check(w)?;
        let mut out = vec![0.0; self.dim()];
        self.basis
            .bilinear_into(&self.coeffs, &v.coeffs, &mut out, &mut self.basis.scratch());
        Ok(dot(&out, &w.coeffs))
    }

    /// Galerkin projection of `B(self, v)`.
    pub fn bilinear_project(&self, v: &SpectralField) -> Result<SpectralField> {
        self.check(v)?;
        let mut out = vec![0.0; self.dim()];
        self.basis
            .bilinear_into(&self.coeffs, &v.coeffs, &mut out, &mut self.basis.scratch());
        Ok(Self {
            basis: self.basis.clone(),
            coeffs: out,
        })
    }

    /// Galerkin projection of `B(u) = B(u, u)`.
    pub fn nonlinear_b(&self) -> SpectralField {
        let mut out = vec![0.0; self.dim()];
        self.basis
            .nonlinear_into(&self.coeffs, &mut out, &mut self.basis.scratch());
        Self {
            basis: self.basis.clone(),
            coeffs: out,
        }
    }
}

/// Empirical constants for the two classical bounds on `b`.
#[derive(Clone, Debug)]
pub struct BEstimateReport {
    pub samples: usize,
    /// `max |b(u,v,w)| / (2 ‖u‖_H^½ ‖u‖_V^½ ‖w‖_H^½ ‖w‖_V^½ ‖v‖_V)`; at most 1.
    pub max_ratio_ladyzhenskaya: f64,
    pub witness_ladyzhenskaya: usize,
    /// `max |b(u,u,v)| / (‖u‖_{H²}^½ ‖u‖_V ‖u‖_H^½ ‖v‖_H)`, the empirical constant.
    pub max_ratio_h2: f64,
    pub witness_h2: usize,
}

/// Samples random triples and records the worst ratios for both bounds on `b`.
///
/// The spectral decay of each sampled field is drawn uniformly from `[0, 3]`.
pub fn verify_b_estimates<R: Rng + ?Sized>(
    basis: &Arc<Basis>,
    samples: usize,
    rng: &mut R,
) -> Result<BEstimateReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let d = basis.dim();
    let mut s = basis.scratch();
    let mut proj = vec![0.0; d];
    let mut report = BEstimateReport {
        samples,
        max_ratio_ladyzhenskaya: 0.0,
        witness_ladyzhenskaya: 0,
        max_ratio_h2: 0.0,
        witness_h2: 0,
    };
    for i in 0..samples {
        let draw = |rng: &mut R| {
            let decay = rng.random_range(0.0..3.0);
            SpectralField::random(basis, rng, decay)
        };
        let u = draw(rng);
        let v = draw(rng);
        let w = draw(rng);
        let (nu, nv, nw) = (u.norms(), v.norms(), w.norms());

        basis.bilinear_into(u.coeffs(), v.coeffs(), &mut proj, &mut s);
        let b_uvw = dot(&proj, w.coeffs());
        let denom = 2.0 * (nu.h * nu.v * nw.h * nw.v).sqrt() * nv.v;
        let r8 = if denom > 0.0 { b_uvw.abs() / denom } else { 0.0 };
        if r8 > report.max_ratio_ladyzhenskaya {
            report.max_ratio_ladyzhenskaya = r8;
            report.witness_ladyzhenskaya = i;
        }

        basis.nonlinear_into(u.coeffs(), &mut proj, &mut s);
        let b_uuv = dot(&proj, v.coeffs());
        let denom = (nu.ah * nu.h).sqrt() * nu.v * nv.h;
        let r9 = if denom > 0.0 { b_uuv.abs() / denom } else { 0.0 };
        if r9 > report.max_ratio_h2 {
            report.max_ratio_h2 = r9;
            report.witness_h2 = i;
        }
    }
    Ok(report)
}
