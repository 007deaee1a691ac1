//! Lévy measures, the `θ_ε`/`h_ε` kernel families, the assembled jump
//! coefficient `σ^ε(u,z) = σ(θ_ε(z)u)·h_ε(z)` and Poisson random measure sampling.
//!
//! All measures are symmetric: `ν(dz) = ρ(|z|)dz` on `ℝ∖{0}`. Integrals over
//! `{a ≤ |z| ≤ b}` are reduced to `∫_a^b [g(r) + g(−r)] ρ(r) dr`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, integrate, integrate_to_infinity, QuadOptions, QuadResult};
use crate::spectral::{norm_sq, SpectralField};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Density {
    /// `|z|^{-1-α}`, the symmetric α-stable characteristic measure.
    Stable { alpha: f64 },
    /// `|z|^{β-1}` on `|z| ≥ 1`.
    PowerTail { beta: f64 },
    /// User radial density `ρ(r)` for `r ≥ lower`.
    Custom { name: String, rho: ScalarFn, lower: f64 },
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Stable { alpha } => write!(f, "Stable {{ alpha: {alpha} }}"),
            Density::PowerTail { beta } => write!(f, "PowerTail {{ beta: {beta} }}"),
            Density::Custom { name, lower, .. } => write!(f, "Custom {{ name: {name:?}, lower: {lower} }}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LevyMeasure {
    density: Density,
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_nan() || b.is_nan() || a < 0.0 || a > b {
        return Err(Error::InvalidInterval { a, b });
    }
    Ok(())
}

impl LevyMeasure {
    pub fn stable(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 2)")));
        }
        Ok(Self { density: Density::Stable { alpha } })
    }

    pub fn power_tail(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta = {beta} must be positive")));
        }
        Ok(Self { density: Density::PowerTail { beta } })
    }

    pub fn custom(name: impl Into<String>, rho: ScalarFn, lower: f64) -> Result<Self> {
        if !(lower >= 0.0 && lower.is_finite()) {
            return Err(Error::InvalidArgument(format!("lower = {lower} must be finite and >= 0")));
        }
        Ok(Self {
            density: Density::Custom { name: name.into(), rho, lower },
        })
    }

    pub fn density_kind(&self) -> &Density {
        &self.density
    }

    pub fn name(&self) -> String {
        match &self.density {
            Density::Stable { alpha } => format!("nu_{alpha}"),
            Density::PowerTail { beta } => format!("powertail_{beta}"),
            Density::Custom { name, .. } => name.clone(),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.density {
            Density::Stable { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Radial density `ρ(r)` for `r > 0`.
    pub fn radial(&self, r: f64) -> f64 {
        match &self.density {
            Density::Stable { alpha } => r.powf(-1.0 - alpha),
            Density::PowerTail { beta } => {
                if r >= 1.0 {
                    r.powf(beta - 1.0)
                } else {
                    0.0
                }
            }
            Density::Custom { rho, lower, .. } => {
                if r >= *lower {
                    rho(r).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        self.radial(z.abs())
    }

    pub fn support_lower(&self) -> f64 {
        match &self.density {
            Density::Stable { .. } => 0.0,
            Density::PowerTail { .. } => 1.0,
            Density::Custom { lower, .. } => *lower,
        }
    }

    /// Intersects `[a, b]` with the radial support; `None` when empty or degenerate.
    fn clip(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        let lo = a.max(self.support_lower());
        if lo < b {
            Some((lo, b))
        } else {
            None
        }
    }

    /// `ν({a ≤ |z| ≤ b})`; `b` may be infinite.
    pub fn annulus_mass(&self, a: f64, b: f64) -> Result<f64> {
        self.radial_moment(0.0, a, b)
    }

    /// `∫_{a ≤ |z| ≤ b} |z|^p ν(dz)`; `b` may be infinite.
    pub fn radial_moment(&self, p: f64, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        let Some((a, b)) = self.clip(a, b) else {
            return Ok(0.0);
        };
        let power = |e: f64| -> Result<f64> {
            if e == 0.0 {
                if a == 0.0 || b.is_infinite() {
                    return Err(Error::InfiniteMass);
                }
                return Ok(2.0 * (b / a).ln());
            }
            if (a == 0.0 && e < 0.0) || (b.is_infinite() && e > 0.0) {
                return Err(Error::InfiniteMass);
            }
            Ok(2.0 * (b.powf(e) - a.powf(e)) / e)
        };
        match self.density {
            Density::Stable { alpha } => power(p - alpha),
            Density::PowerTail { beta } => power(p + beta),
            Density::Custom { .. } => match self.integrate(|z| z.abs().powf(p), a, b) {
                Ok(r) if r.value.is_finite() => Ok(r.value),
                Ok(_) => Err(Error::InfiniteMass),
                Err(Error::Quadrature { .. }) if a == 0.0 || b.is_infinite() => Err(Error::InfiniteMass),
                Err(e) => Err(e),
            },
        }
    }

    /// `∫_{a ≤ |z| ≤ b} g(z) ν(dz)` by adaptive quadrature.
    pub fn integrate<G: FnMut(f64) -> f64>(&self, mut g: G, a: f64, b: f64) -> Result<QuadResult> {
        self.integrate_dyn(&mut g, a, b)
    }

    fn integrate_dyn(&self, g: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> Result<QuadResult> {
        check_interval(a, b)?;
        let zero = QuadResult { value: 0.0, error: 0.0, evals: 0 };
        let Some((a, b)) = self.clip(a, b) else {
            return Ok(zero);
        };
        let opts = QuadOptions::default();
        if a == 0.0 {
            if b.is_infinite() {
                let near = self.integrate_dyn(g, 0.0, 1.0)?;
                let far = self.integrate_dyn(g, 1.0, b)?;
                return Ok(QuadResult {
                    value: near.value + far.value,
                    error: near.error + far.error,
                    evals: near.evals + far.evals,
                });
            }
            return match self.density {
                Density::Stable { alpha } => {
                    // r = b t^{1/(2-α)} turns |z|^2 ν(dz) near 0 into a bounded weight
                    let q = 1.0 / (2.0 - alpha);
                    let scale = b.powf(-alpha) * q;
                    integrate(
                        |t: f64| {
                            let r = b * t.powf(q);
                            (g(r) + g(-r)) * scale * t.powf(-2.0 * q)
                        },
                        0.0,
                        1.0,
                        &opts,
                    )
                }
                _ => integrate(|r| (g(r) + g(-r)) * self.radial(r), 0.0, b, &opts),
            };
        }
        let mut log_integrand = |s: f64| {
            let r = s.exp();
            (g(r) + g(-r)) * self.radial(r) * r
        };
        if b.is_infinite() {
            integrate_to_infinity(|s| log_integrand(a.ln() + s), 0.0, &opts)
        } else {
            integrate(log_integrand, a.ln(), b.ln(), &opts)
        }
    }

    /// Composite Gauss–Legendre rule in `ln r` on `a ≤ |z| ≤ b` (needs `0 < a`, finite `b`).
    pub fn node_rule(&self, a: f64, b: f64, panels: usize, order: usize) -> Result<NodeRule> {
        check_interval(a, b)?;
        if a == 0.0 || b.is_infinite() {
            return Err(Error::InvalidArgument("node rule needs 0 < a <= b < inf".into()));
        }
        let Some((a, b)) = self.clip(a, b) else {
            return Ok(NodeRule { r: Vec::new(), w: Vec::new() });
        };
        let (x, w) = gauss_legendre(order);
        let (la, lb) = (a.ln(), b.ln());
        let step = (lb - la) / panels as f64;
        let mut rule = NodeRule { r: Vec::new(), w: Vec::new() };
        for p in 0..panels {
            let c = la + (p as f64 + 0.5) * step;
            for (xi, wi) in x.iter().zip(&w) {
                let r = (c + 0.5 * step * xi).exp();
                rule.r.push(r);
                rule.w.push(0.5 * step * wi * self.radial(r) * r);
            }
        }
        Ok(rule)
    }
}

/// Fixed quadrature rule for symmetric ν-integrals.
#[derive(Clone, Debug)]
pub struct NodeRule {
    r: Vec<f64>,
    w: Vec<f64>,
}

impl NodeRule {
    pub fn integrate<G: FnMut(f64) -> f64>(&self, mut g: G) -> f64 {
        self.r.iter().zip(&self.w).map(|(&r, &w)| w * (g(r) + g(-r))).sum()
    }
}

// -- h kernels ---------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HFamily {
    /// Constant on `ε ≤ |z| ≤ 1`.
    Annulus,
    /// Proportional to `z` on `1 ≤ |z| ≤ 1/ε`.
    OuterLinear,
    /// Proportional to `z` on `0 < |z| ≤ ε`.
    InnerLinear,
    Custom,
}

impl HFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            HFamily::Annulus => "annulus",
            HFamily::OuterLinear => "outer_linear",
            HFamily::InnerLinear => "inner_linear",
            HFamily::Custom => "custom",
        }
    }
}

#[derive(Clone)]
pub struct HKernel {
    family: HFamily,
    epsilon: f64,
    norm: f64,
    lo: f64,
    hi: f64,
    sup: f64,
    shape: Option<ScalarFn>,
    measure: LevyMeasure,
}

impl fmt::Debug for HKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HKernel")
            .field("family", &self.family)
            .field("epsilon", &self.epsilon)
            .field("normalizer", &self.norm)
            .field("support", &(self.lo, self.hi))
            .field("sup_abs", &self.sup)
            .field("measure", &self.measure)
            .finish()
    }
}

fn normalizer(integral: Result<f64>, what: &str) -> Result<f64> {
    match integral {
        Ok(m) if m > 0.0 && m.is_finite() => Ok(1.0 / m.sqrt()),
        Ok(m) => Err(Error::InadmissibleFamily(format!("{what}: normalizing integral is {m}"))),
        Err(Error::InfiniteMass) => Err(Error::InadmissibleFamily(format!(
            "{what}: normalizing integral is infinite"
        ))),
        Err(e) => Err(e),
    }
}

/// Builds a normalized built-in family with `∫h² dν = 1`.
pub fn build_h(family: HFamily, epsilon: f64, measure: &LevyMeasure) -> Result<HKernel> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    let what = format!("{} under {}", family.as_str(), measure.name());
    let (lo, hi) = match family {
        HFamily::Annulus => (epsilon, 1.0),
        HFamily::OuterLinear => (1.0, 1.0 / epsilon),
        HFamily::InnerLinear => (0.0, epsilon),
        HFamily::Custom => {
            return Err(Error::InvalidArgument("use HKernel::custom for custom shapes".into()))
        }
    };
    let (lo, hi) = match measure.clip(lo, hi) {
        Some(r) => r,
        None => return Err(Error::InadmissibleFamily(format!("{what}: support has zero mass"))),
    };
    let (norm, sup) = match family {
        HFamily::Annulus => {
            let n = normalizer(measure.annulus_mass(lo, hi), &what)?;
            (n, n)
        }
        _ => {
            let n = normalizer(measure.radial_moment(2.0, lo, hi), &what)?;
            (n, n * hi)
        }
    };
    Ok(HKernel {
        family,
        epsilon,
        norm,
        lo,
        hi,
        sup,
        shape: None,
        measure: measure.clone(),
    })
}

impl HKernel {
    /// Normalizes an arbitrary shape supported on `lo ≤ |z| ≤ hi`.
    ///
    /// `sup|h|` is estimated on a log-spaced grid of 10⁴ radii per sign.
    pub fn custom(shape: ScalarFn, lo: f64, hi: f64, epsilon: f64, measure: &LevyMeasure) -> Result<Self> {
        check_interval(lo, hi)?;
        if hi.is_infinite() {
            return Err(Error::InvalidArgument("custom h needs bounded support".into()));
        }
        let what = format!("custom under {}", measure.name());
        let (lo, hi) = measure
            .clip(lo, hi)
            .ok_or_else(|| Error::InadmissibleFamily(format!("{what}: support has zero mass")))?;
        let m2 = measure.integrate(|z| shape(z).powi(2), lo, hi).map(|r| r.value);
        let norm = normalizer(m2, &what)?;
        let start = if lo > 0.0 { lo } else { hi * 1e-12 };
        let n = 10_000;
        let ratio = (hi / start).ln();
        let mut sup = 0.0f64;
        for i in 0..=n {
            let r = start * (ratio * i as f64 / n as f64).exp();
            sup = sup.max(shape(r).abs()).max(shape(-r).abs());
        }
        Ok(Self {
            family: HFamily::Custom,
            epsilon,
            norm,
            lo,
            hi,
            sup: sup * norm,
            shape: Some(shape),
            measure: measure.clone(),
        })
    }

    pub fn family(&self) -> HFamily {
        self.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn normalizer(&self) -> f64 {
        self.norm
    }

    /// Radial support `lo ≤ |z| ≤ hi` (`lo = 0` means an open inner end).
    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn sup_abs(&self) -> f64 {
        self.sup
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.measure
    }

    pub fn in_support(&self, z: f64) -> bool {
        let r = z.abs();
        r > 0.0 && r >= self.lo && r <= self.hi
    }

    pub fn eval(&self, z: f64) -> f64 {
        if !self.in_support(z) {
            return 0.0;
        }
        match (&self.shape, self.family) {
            (Some(s), _) => self.norm * s(z),
            (None, HFamily::Annulus) => self.norm,
            (None, _) => self.norm * z,
        }
    }

    /// `∫ h² dν` recomputed by quadrature.
    pub fn normalization_check(&self) -> Result<f64> {
        Ok(self.measure.integrate(|z| self.eval(z).powi(2), self.lo, self.hi)?.value)
    }
}

// -- θ kernels ---------------------------------------------------------------

#[derive(Clone)]
pub enum ThetaFamily {
    One,
    /// `1 + ε cos z`.
    Cosine,
    /// `1 − ε/√(2π)·exp(−ε²z²/2)`.
    GaussianDip,
    Custom { f: ScalarFn, sup_abs: f64 },
}

impl fmt::Debug for ThetaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl ThetaFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ThetaFamily::One => "one",
            ThetaFamily::Cosine => "cosine",
            ThetaFamily::GaussianDip => "gaussian_dip",
            ThetaFamily::Custom { .. } => "custom",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ThetaKernel {
    family: ThetaFamily,
    epsilon: f64,
}

impl ThetaKernel {
    pub fn new(family: ThetaFamily, epsilon: f64) -> Self {
        Self { family, epsilon }
    }

    pub fn family(&self) -> &ThetaFamily {
        &self.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_one(&self) -> bool {
        matches!(self.family, ThetaFamily::One)
    }

    pub fn eval(&self, z: f64) -> f64 {
        let e = self.epsilon;
        match &self.family {
            ThetaFamily::One => 1.0,
            ThetaFamily::Cosine => 1.0 + e * z.cos(),
            ThetaFamily::GaussianDip => {
                1.0 - e / (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * e * e * z * z).exp()
            }
            ThetaFamily::Custom { f, .. } => f(z),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        let e = self.epsilon;
        match &self.family {
            ThetaFamily::One => 1.0,
            ThetaFamily::Cosine => 1.0 + e,
            ThetaFamily::GaussianDip => {
                1f64.max((1.0 - e / (2.0 * std::f64::consts::PI).sqrt()).abs())
            }
            ThetaFamily::Custom { sup_abs, .. } => *sup_abs,
        }
    }
}

// -- base coefficients -------------------------------------------------------

/// Built-in diffusion coefficients `σ: H → H`.
///
/// Each satisfies `σ(θu) = factor(θ, ‖u‖)·direction(u)`, which reduces every
/// ν-integral of `σ^ε` to a scalar integral.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseSigma {
    /// `c·u`.
    Scaled { c: f64 },
    /// `c·u/(1 + ‖u‖_H)`.
    Saturating { c: f64 },
    /// A fixed field, independent of `u`.
    Constant { field: Vec<f64> },
    /// Per-mode multiplier `d_k u_k`.
    Diagonal { d: Vec<f64> },
}

impl BaseSigma {
    pub fn name(&self) -> &'static str {
        match self {
            BaseSigma::Scaled { .. } => "scaled",
            BaseSigma::Saturating { .. } => "saturating",
            BaseSigma::Constant { .. } => "constant",
            BaseSigma::Diagonal { .. } => "diagonal",
        }
    }

    /// Global Lipschitz constant on H.
    pub fn lipschitz(&self) -> f64 {
        match self {
            BaseSigma::Scaled { c } | BaseSigma::Saturating { c } => c.abs(),
            BaseSigma::Constant { .. } => 0.0,
            BaseSigma::Diagonal { d } => d.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        }
    }

    /// All built-in coefficients map V into V.
    pub fn maps_v_into_v(&self) -> bool {
        true
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            BaseSigma::Constant { field: v } | BaseSigma::Diagonal { d: v } if v.len() != dim => {
                Err(Error::InvalidArgument(format!(
                    "{} sigma has {} entries, basis dimension is {dim}",
                    self.name(),
                    v.len()
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn factor(&self, theta: f64, norm_u: f64) -> f64 {
        match self {
            BaseSigma::Scaled { .. } | BaseSigma::Diagonal { .. } => theta,
            BaseSigma::Saturating { .. } => theta / (1.0 + theta.abs() * norm_u),
            BaseSigma::Constant { .. } => 1.0,
        }
    }

    pub fn direction_into(&self, u: &[f64], out: &mut [f64]) {
        match self {
            BaseSigma::Scaled { c } | BaseSigma::Saturating { c } => {
                for (o, x) in out.iter_mut().zip(u) {
                    *o = c * x;
                }
            }
            BaseSigma::Constant { field } => out.copy_from_slice(field),
            BaseSigma::Diagonal { d } => {
                for ((o, x), dk) in out.iter_mut().zip(u).zip(d) {
                    *o = dk * x;
                }
            }
        }
    }

    /// `σ(u)` written into `out`.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        self.direction_into(u, out);
        let f = self.factor(1.0, norm_sq(u).sqrt());
        if f != 1.0 {
            out.iter_mut().for_each(|o| *o *= f);
        }
    }

    /// True when `σ ≡ 0`, so jumps through it have no effect.
    pub fn is_zero(&self) -> bool {
        match self {
            BaseSigma::Scaled { c } | BaseSigma::Saturating { c } => *c == 0.0,
            BaseSigma::Constant { field: v } | BaseSigma::Diagonal { d: v } => v.iter().all(|&x| x == 0.0),
        }
    }

    /// `sup_{‖v‖_H ≤ r} ‖σ(v)‖_H`.
    pub fn sup_norm_on_ball(&self, r: f64) -> f64 {
        match self {
            BaseSigma::Scaled { c } => c.abs() * r,
            BaseSigma::Saturating { c } => c.abs() * r / (1.0 + r),
            BaseSigma::Constant { field } => norm_sq(field).sqrt(),
            BaseSigma::Diagonal { .. } => self.lipschitz() * r,
        }
    }

    pub fn apply(&self, u: &SpectralField) -> Result<SpectralField> {
        self.check_dim(u.dim())?;
        let mut out = vec![0.0; u.dim()];
        self.apply_into(u.coeffs(), &mut out);
        SpectralField::from_coeffs(u.basis(), out)
    }
}

// -- jump kernel -------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    /// Zero-based channel index.
    pub channel: usize,
    pub z: f64,
}

#[derive(Clone, Debug)]
enum MarkSampler {
    Stable { alpha: f64 },
    PowerTail { beta: f64 },
    Rejection { cells: Vec<(f64, f64, f64)>, cum: Vec<f64> },
}

/// Fraction of `∫h² dν` the small-jump cutoff may discard.
pub const DEFAULT_DISCARD: f64 = 1e-4;

/// One noise channel `σ^{i,ε}` together with its sampling data.
#[derive(Clone, Debug)]
pub struct JumpChannel {
    sigma: BaseSigma,
    theta: ThetaKernel,
    h: HKernel,
    sim_lo: f64,
    sim_hi: f64,
    activity: f64,
    h1_sim: f64,
    rule: NodeRule,
    sampler: MarkSampler,
}

impl JumpChannel {
    /// Assembles a channel; `cutoff` bounds marks away from zero when the
    /// h support reaches the origin (chosen automatically when `None`).
    pub fn new(sigma: BaseSigma, theta: ThetaKernel, h: HKernel, cutoff: Option<f64>) -> Result<Self> {
        let measure = h.measure().clone();
        let (lo, hi) = h.support();
        let sim_lo = match cutoff {
            Some(d) if d > 0.0 => lo.max(d),
            Some(d) => {
                return Err(Error::InvalidArgument(format!("cutoff_delta = {d} must be positive")))
            }
            None if lo > 0.0 => lo,
            None => auto_cutoff(&h)?,
        };
        if sim_lo > hi {
            return Err(Error::InvalidArgument(format!(
                "cutoff {sim_lo} lies above the kernel support end {hi}"
            )));
        }
        let activity = match measure.annulus_mass(sim_lo, hi) {
            Ok(m) if m.is_finite() => m,
            _ => return Err(Error::InfiniteActivity),
        };
        let h1_sim = measure.integrate(|z| h.eval(z), sim_lo, hi)?.value;
        let rule = measure.node_rule(sim_lo, hi, 24, 20)?;
        let sampler = match *measure.density_kind() {
            Density::Stable { alpha } => MarkSampler::Stable { alpha },
            Density::PowerTail { beta } => MarkSampler::PowerTail { beta },
            Density::Custom { .. } => {
                let cells_n = 64;
                let ratio = (hi / sim_lo).ln();
                let mut cells = Vec::with_capacity(cells_n);
                let mut cum = Vec::with_capacity(cells_n);
                let mut total = 0.0;
                for c in 0..cells_n {
                    let a = sim_lo * (ratio * c as f64 / cells_n as f64).exp();
                    let b = sim_lo * (ratio * (c + 1) as f64 / cells_n as f64).exp();
                    let peak = (0..=16)
                        .map(|i| measure.radial(a + (b - a) * i as f64 / 16.0))
                        .fold(0.0f64, f64::max);
                    let height = 1.05 * peak;
                    total += height * (b - a);
                    cells.push((a, b, height));
                    cum.push(total);
                }
                MarkSampler::Rejection { cells, cum }
            }
        };
        Ok(Self {
            sigma,
            theta,
            h,
            sim_lo,
            sim_hi: hi,
            activity,
            h1_sim,
            rule,
            sampler,
        })
    }

    pub fn sigma(&self) -> &BaseSigma {
        &self.sigma
    }

    pub fn theta(&self) -> &ThetaKernel {
        &self.theta
    }

    pub fn h(&self) -> &HKernel {
        &self.h
    }

    /// Radial range `[δ, hi]` from which marks are drawn.
    pub fn simulated_support(&self) -> (f64, f64) {
        (self.sim_lo, self.sim_hi)
    }

    /// Total jump intensity `ν(simulated support)`.
    pub fn activity(&self) -> f64 {
        self.activity
    }

    /// Share of `∫h² dν` lost to the small-jump cutoff.
    pub fn discarded_fraction(&self) -> Result<f64> {
        let (lo, _) = self.h.support();
        if self.sim_lo <= lo {
            return Ok(0.0);
        }
        let m = self.h.measure();
        Ok(m.integrate(|z| self.h.eval(z).powi(2), lo, self.sim_lo)?.value)
    }

    /// Scalar profile `φ_u(z) = factor(θ_ε(z), ‖u‖)·h_ε(z)`, so that `σ^ε(u,z) = φ_u(z)·direction(u)`.
    pub fn phi(&self, z: f64, norm_u: f64) -> f64 {
        let h = self.h.eval(z);
        if h == 0.0 {
            return 0.0;
        }
        self.sigma.factor(self.theta.eval(z), norm_u) * h
    }

    /// `∫ g dν` over the full h support.
    pub fn integrate_full<G: FnMut(f64) -> f64>(&self, g: G) -> Result<f64> {
        let (lo, hi) = self.h.support();
        Ok(self.h.measure().integrate(g, lo, hi)?.value)
    }

    /// `∫ φ_u² dν`; exact when `θ ≡ 1` by the normalization of h.
    pub fn phi_sq_integral(&self, norm_u: f64) -> Result<f64> {
        if self.theta.is_one() {
            return Ok(self.sigma.factor(1.0, norm_u).powi(2));
        }
        self.integrate_full(|z| self.phi(z, norm_u).powi(2))
    }

    /// `∫ φ_u dν` over the simulated support.
    pub fn compensator_scalar(&self, norm_u: f64) -> f64 {
        if self.theta.is_one() {
            return self.sigma.factor(1.0, norm_u) * self.h1_sim;
        }
        self.rule.integrate(|z| self.phi(z, norm_u))
    }

    /// `out += σ^ε(u, z)`.
    pub fn add_jump(&self, u: &[f64], z: f64, dir: &mut [f64], out: &mut [f64]) {
        let f = self.phi(z, norm_sq(u).sqrt());
        if f == 0.0 {
            return;
        }
        self.sigma.direction_into(u, dir);
        for (o, d) in out.iter_mut().zip(dir.iter()) {
            *o += f * d;
        }
    }

    fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = (self.sim_lo, self.sim_hi);
        match &self.sampler {
            MarkSampler::Stable { alpha } => {
                let u: f64 = rng.random();
                let (fa, fb) = (a.powf(-alpha), b.powf(-alpha));
                (fa - u * (fa - fb)).powf(-1.0 / alpha).clamp(a, b)
            }
            MarkSampler::PowerTail { beta } => {
                let u: f64 = rng.random();
                let (fa, fb) = (a.powf(*beta), b.powf(*beta));
                (fa + u * (fb - fa)).powf(1.0 / beta).clamp(a, b)
            }
            MarkSampler::Rejection { cells, cum } => {
                let measure = self.h.measure();
                let total = *cum.last().expect("nonempty envelope");
                loop {
                    let x = rng.random::<f64>() * total;
                    let i = cum.partition_point(|&c| c <= x).min(cells.len() - 1);
                    let (lo, hi, height) = cells[i];
                    let r = lo + (hi - lo) * rng.random::<f64>();
                    if rng.random::<f64>() * height <= measure.radial(r) {
                        return r;
                    }
                }
            }
        }
    }
}

/// Smallest-jump cutoff `δ` discarding at most `DEFAULT_DISCARD` of `∫h² dν`.
fn auto_cutoff(h: &HKernel) -> Result<f64> {
    let (_, hi) = h.support();
    let measure = h.measure();
    if let (HFamily::InnerLinear, Some(alpha)) = (h.family(), measure.alpha()) {
        // ∫_{|z|<δ} h² dν / ∫_{|z|<ε} h² dν = (δ/ε)^{2-α}
        return Ok(hi * DEFAULT_DISCARD.powf(1.0 / (2.0 - alpha)));
    }
    let lost = |d: f64| -> Result<f64> { Ok(measure.integrate(|z| h.eval(z).powi(2), 0.0, d)?.value) };
    let (mut lo, mut up) = ((hi * 1e-12).ln(), hi.ln());
    if lost(hi * 1e-12)? > DEFAULT_DISCARD {
        return Err(Error::InfiniteActivity);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + up);
        if lost(mid.exp())? > DEFAULT_DISCARD {
            up = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo.exp())
}

/// The coefficient `σ^ε` over all channels at one value of ε.
#[derive(Clone, Debug)]
pub struct JumpKernel {
    epsilon: f64,
    channels: Vec<JumpChannel>,
}

impl JumpKernel {
    pub fn new(epsilon: f64, channels: Vec<JumpChannel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument("a jump kernel needs at least one channel".into()));
        }
        Ok(Self { epsilon, channels })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    /// Every channel has `σ ≡ 0`.
    pub fn is_null(&self) -> bool {
        self.channels.iter().all(|c| c.sigma.is_zero())
    }

    pub fn total_activity(&self) -> f64 {
        self.channels.iter().map(|c| c.activity).sum()
    }

    fn channel(&self, i: usize) -> Result<&JumpChannel> {
        self.channels.get(i).ok_or_else(|| {
            Error::InvalidArgument(format!("channel {i} out of range ({} channels)", self.channels.len()))
        })
    }

    /// `σ^ε(u, z)` for one channel; zero outside the h support.
    pub fn eval_sigma_eps(&self, channel: usize, u: &SpectralField, z: f64) -> Result<SpectralField> {
        let ch = self.channel(channel)?;
        ch.sigma.check_dim(u.dim())?;
        let mut out = vec![0.0; u.dim()];
        let mut dir = vec![0.0; u.dim()];
        ch.add_jump(u.coeffs(), z, &mut dir, &mut out);
        SpectralField::from_coeffs(u.basis(), out)
    }

    /// Writes `Σ_i ∫ σ^{i,ε}(u, z) ν(dz)` over the simulated supports into `out`.
    pub fn compensator_into(&self, u: &[f64], dir: &mut [f64], out: &mut [f64]) {
        out.fill(0.0);
        let nu = norm_sq(u).sqrt();
        for ch in &self.channels {
            let s = ch.compensator_scalar(nu);
            if s == 0.0 {
                continue;
            }
            ch.sigma.direction_into(u, dir);
            for (o, d) in out.iter_mut().zip(dir.iter()) {
                *o += s * d;
            }
        }
    }

    pub fn compensator_drift(&self, u: &SpectralField) -> Result<SpectralField> {
        for ch in &self.channels {
            ch.sigma.check_dim(u.dim())?;
        }
        let mut out = vec![0.0; u.dim()];
        let mut dir = vec![0.0; u.dim()];
        self.compensator_into(u.coeffs(), &mut dir, &mut out);
        SpectralField::from_coeffs(u.basis(), out)
    }

    /// Draws all jumps on `[0, horizon]`, ordered by time then channel.
    pub fn sample_prm<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Result<Vec<JumpEvent>> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon = {horizon} must be positive")));
        }
        let mut events = Vec::new();
        for (i, ch) in self.channels.iter().enumerate() {
            let rate = ch.activity * horizon;
            if !rate.is_finite() {
                return Err(Error::InfiniteActivity);
            }
            if rate <= 0.0 {
                continue;
            }
            let n = Poisson::new(rate)
                .map_err(|e| Error::InvalidArgument(format!("poisson rate {rate}: {e}")))?
                .sample(rng) as usize;
            for _ in 0..n {
                let t = rng.random::<f64>() * horizon;
                let r = ch.sample_radius(rng);
                let z = if rng.random::<bool>() { r } else { -r };
                events.push(JumpEvent { t, channel: i, z });
            }
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.channel.cmp(&b.channel)));
        Ok(events)
    }
}
