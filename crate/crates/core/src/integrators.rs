//! Exponential (integrating-factor) Euler schemes for the Brownian-driven
//! equation and its jump-adapted pure-jump counterpart.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::levy::{BaseSigma, JumpEvent, JumpKernel};
use crate::spectral::{Basis, Scratch, SpectralField};

/// Deterministic forcing `F: H → H`.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftForce {
    Zero,
    /// `F(u) = a·u`.
    Linear { a: f64 },
    /// `F(u) = f`, independent of `u`.
    Constant { field: Vec<f64> },
}

impl DriftForce {
    pub fn lipschitz(&self) -> f64 {
        match self {
            DriftForce::Linear { a } => a.abs(),
            _ => 0.0,
        }
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            DriftForce::Constant { field } if field.len() != dim => Err(Error::InvalidArgument(format!(
                "constant drift has {} entries, basis dimension is {dim}",
                field.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        match self {
            DriftForce::Zero => out.fill(0.0),
            DriftForce::Linear { a } => {
                for (o, x) in out.iter_mut().zip(u) {
                    *o = a * x;
                }
            }
            DriftForce::Constant { field } => out.copy_from_slice(field),
        }
    }

    pub fn apply(&self, u: &SpectralField) -> Result<SpectralField> {
        self.check_dim(u.dim())?;
        let mut out = vec![0.0; u.dim()];
        self.apply_into(u.coeffs(), &mut out);
        SpectralField::from_coeffs(u.basis(), out)
    }
}

/// The `m` diffusion coefficients of the Brownian equation.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianNoise {
    pub sigmas: Vec<BaseSigma>,
}

impl BrownianNoise {
    pub fn new(sigmas: Vec<BaseSigma>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidArgument("Brownian noise needs at least one channel".into()));
        }
        Ok(Self { sigmas })
    }

    pub fn channels(&self) -> usize {
        self.sigmas.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Record every `record_stride`-th step of the uniform grid (plus the final time).
    pub record_stride: usize,
    pub kappa: f64,
    /// When false the convection term is switched off (linear test flag).
    pub nonlinear: bool,
    /// Basis indices whose coefficients and martingales are recorded.
    pub tracked_modes: Vec<usize>,
    /// Threshold `M` of the stopping time `τ_M`.
    pub tau_threshold: f64,
    pub keep_snapshots: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 1e-3,
            record_stride: 1,
            kappa: 1.0,
            nonlinear: true,
            tracked_modes: vec![0],
            tau_threshold: 10.0,
            keep_snapshots: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon = {} must be positive", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return bad(format!("dt = {} must satisfy 0 < dt <= T", self.dt));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be nonnegative", self.kappa));
        }
        if let Some(&k) = self.tracked_modes.iter().find(|&&k| k >= dim) {
            return Err(Error::ModeIndex { index: k, dim });
        }
        Ok(())
    }

    /// Number of uniform steps; the last one is shortened when `T/dt` is not an integer.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    fn grid_time(&self, n: usize) -> f64 {
        if n >= self.steps() {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }
}

/// One simulated trajectory with its recorded functionals.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub norm_h2: Vec<f64>,
    pub norm_v2: Vec<f64>,
    /// `[record][tracked mode]` coefficients `(u(t), e_k)`.
    pub tracked: Vec<Vec<f64>>,
    /// `[record][tracked mode]` values of `M_k(t) = (u(t),e_k) − (h,e_k) − ∫_0^t L g_k(u) ds`.
    pub martingale: Vec<Vec<f64>>,
    /// Jumps applied up to each record time.
    pub n_jumps: Vec<usize>,
    pub snapshots: Vec<SpectralField>,
    pub jump_log: Vec<JumpEvent>,
    pub final_state: SpectralField,
    /// `sup_t ‖u(t)‖_H⁴` over all grid points, left limits included.
    pub sup_h4: f64,
    pub sup_h2: f64,
    /// `∫_0^T ‖u‖_V² dt` (trapezoid on the adapted grid).
    pub int_v2: f64,
    /// Stopping time `τ_M` evaluated on the grid (`T` when never triggered).
    pub tau: f64,
    pub sup_v2_tau: f64,
    pub int_ah2_tau: f64,
}

/// Reusable integrator state for one worker.
pub struct Simulator {
    basis: Arc<Basis>,
    config: SolverConfig,
    drift: DriftForce,
    decay_dt: Vec<f64>,
    decay_h: Vec<f64>,
    scratch: Scratch,
    b: Vec<f64>,
    f: Vec<f64>,
    comp: Vec<f64>,
    dir: Vec<f64>,
    noise: Vec<f64>,
    next: Vec<f64>,
}

/// Per-point quantities needed for trapezoid integrals.
#[derive(Clone, Debug, Default)]
struct PointData {
    h2: f64,
    v2: f64,
    ah2: f64,
    lg: Vec<f64>,
}

struct Recorder {
    tracked: Vec<usize>,
    h0: Vec<f64>,
    sample: PathSample,
    prev: PointData,
    t_prev: f64,
    int_lg: Vec<f64>,
    int_ah2: f64,
    tau_hit: bool,
    threshold: f64,
    jumps: usize,
    keep: bool,
}

impl Recorder {
    fn update_sups(&mut self, p: &PointData) {
        self.sample.sup_h2 = self.sample.sup_h2.max(p.h2);
        self.sample.sup_h4 = self.sample.sup_h4.max(p.h2 * p.h2);
        if !self.tau_hit {
            self.sample.sup_v2_tau = self.sample.sup_v2_tau.max(p.v2);
        }
    }

    /// Integrates from the previous point to `t` using the left limit `p`.
    fn advance(&mut self, t: f64, p: &PointData) {
        let h = t - self.t_prev;
        self.sample.int_v2 += 0.5 * h * (self.prev.v2 + p.v2);
        if !self.tau_hit {
            self.int_ah2 += 0.5 * h * (self.prev.ah2 + p.ah2);
        }
        for (i, acc) in self.int_lg.iter_mut().enumerate() {
            *acc += 0.5 * h * (self.prev.lg[i] + p.lg[i]);
        }
        self.t_prev = t;
        self.update_sups(p);
        self.check_tau(t, p);
    }

    fn check_tau(&mut self, t: f64, p: &PointData) {
        if !self.tau_hit && (self.sample.int_v2 > self.threshold || p.h2 > self.threshold) {
            self.tau_hit = true;
            self.sample.tau = t;
            self.sample.int_ah2_tau = self.int_ah2;
        }
    }

    /// Replaces the current point after a jump.
    fn reset_point(&mut self, t: f64, p: PointData) {
        self.update_sups(&p);
        self.check_tau(t, &p);
        self.prev = p;
    }

    fn record(&mut self, t: f64, u: &[f64], basis: &Arc<Basis>) {
        let s = &mut self.sample;
        s.times.push(t);
        s.norm_h2.push(self.prev.h2);
        s.norm_v2.push(self.prev.v2);
        s.tracked.push(self.tracked.iter().map(|&k| u[k]).collect());
        s.martingale.push(
            self.tracked
                .iter()
                .enumerate()
                .map(|(i, &k)| u[k] - self.h0[i] - self.int_lg[i])
                .collect(),
        );
        s.n_jumps.push(self.jumps);
        if self.keep {
            s.snapshots.push(SpectralField::from_coeffs(basis, u.to_vec()).expect("dimension checked"));
        }
    }
}

impl Simulator {
    pub fn new(basis: &Arc<Basis>, config: SolverConfig, drift: DriftForce) -> Result<Self> {
        config.validate(basis.dim())?;
        drift.check_dim(basis.dim())?;
        let d = basis.dim();
        let decay_dt = basis
            .eigenvalues()
            .iter()
            .map(|l| (-config.kappa * l * config.dt).exp())
            .collect();
        Ok(Self {
            basis: basis.clone(),
            config,
            drift,
            decay_dt,
            decay_h: vec![0.0; d],
            scratch: basis.scratch(),
            b: vec![0.0; d],
            f: vec![0.0; d],
            comp: vec![0.0; d],
            dir: vec![0.0; d],
            noise: vec![0.0; d],
            next: vec![0.0; d],
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    /// Evaluates `B(u)`, `F(u)` and the compensator at `u`; returns the point data.
    fn eval_point(&mut self, u: &[f64], kernel: Option<&JumpKernel>, tracked: &[usize]) -> PointData {
        if self.config.nonlinear {
            self.basis.nonlinear_into(u, &mut self.b, &mut self.scratch);
        } else {
            self.b.fill(0.0);
        }
        self.drift.apply_into(u, &mut self.f);
        match kernel {
            Some(k) => k.compensator_into(u, &mut self.dir, &mut self.comp),
            None => self.comp.fill(0.0),
        }
        let lam = self.basis.eigenvalues();
        let (mut h2, mut v2, mut ah2) = (0.0, 0.0, 0.0);
        for (&c, &l) in u.iter().zip(lam) {
            let c2 = c * c;
            h2 += c2;
            v2 += l * c2;
            ah2 += l * l * c2;
        }
        let lg = tracked
            .iter()
            .map(|&k| -self.config.kappa * lam[k] * u[k] - self.b[k] + self.f[k])
            .collect();
        PointData { h2, v2, ah2, lg }
    }

    /// One exponential Euler step of length `h`, writing into `self.next`.
    fn step(&mut self, u: &[f64], h: f64, with_noise: bool) {
        let decay: &[f64] = if (h - self.config.dt).abs() <= 1e-15 * self.config.dt {
            &self.decay_dt
        } else {
            for (d, l) in self.decay_h.iter_mut().zip(self.basis.eigenvalues()) {
                *d = (-self.config.kappa * l * h).exp();
            }
            &self.decay_h
        };
        for i in 0..u.len() {
            let mut v = u[i] + h * (self.f[i] - self.b[i] - self.comp[i]);
            if with_noise {
                v += self.noise[i];
            }
            self.next[i] = decay[i] * v;
        }
    }

    fn start(&mut self, h0: &[f64], kernel: Option<&JumpKernel>) -> (Recorder, PointData) {
        let tracked = self.config.tracked_modes.clone();
        let p = self.eval_point(h0, kernel, &tracked);
        let sample = PathSample {
            times: Vec::new(),
            norm_h2: Vec::new(),
            norm_v2: Vec::new(),
            tracked: Vec::new(),
            martingale: Vec::new(),
            n_jumps: Vec::new(),
            snapshots: Vec::new(),
            jump_log: Vec::new(),
            final_state: SpectralField::zeros(&self.basis),
            sup_h4: 0.0,
            sup_h2: 0.0,
            int_v2: 0.0,
            tau: self.config.horizon,
            sup_v2_tau: 0.0,
            int_ah2_tau: 0.0,
        };
        let mut rec = Recorder {
            h0: tracked.iter().map(|&k| h0[k]).collect(),
            int_lg: vec![0.0; tracked.len()],
            tracked,
            sample,
            prev: p.clone(),
            t_prev: 0.0,
            int_ah2: 0.0,
            tau_hit: false,
            threshold: self.config.tau_threshold,
            jumps: 0,
            keep: self.config.keep_snapshots,
        };
        rec.update_sups(&p);
        rec.check_tau(0.0, &p);
        (rec, p)
    }

    fn finish(&self, mut rec: Recorder, u: Vec<f64>) -> PathSample {
        if !rec.tau_hit {
            rec.sample.int_ah2_tau = rec.int_ah2;
        }
        rec.sample.final_state = SpectralField::from_coeffs(&self.basis, u).expect("dimension checked");
        rec.sample
    }

    fn is_record_step(&self, n: usize) -> bool {
        n.is_multiple_of(self.config.record_stride) || n == self.config.steps()
    }

    /// Simulates the Brownian-driven equation from `h`.
    pub fn run_brownian<R: Rng + ?Sized>(
        &mut self,
        h: &SpectralField,
        noise: &BrownianNoise,
        rng: &mut R,
    ) -> Result<PathSample> {
        self.check_initial(h)?;
        for s in &noise.sigmas {
            s.check_dim(self.basis.dim())?;
        }
        let mut u = h.coeffs().to_vec();
        let (mut rec, _) = self.start(&u, None);
        rec.record(0.0, &u, &self.basis);
        let tracked = self.config.tracked_modes.clone();
        let steps = self.config.steps();
        let mut dir = vec![0.0; u.len()];
        for n in 1..=steps {
            let t0 = self.config.grid_time(n - 1);
            let t1 = self.config.grid_time(n);
            let dt = t1 - t0;
            let sq = dt.sqrt();
            self.noise.fill(0.0);
            for s in &noise.sigmas {
                let dw: f64 = rng.sample::<f64, _>(StandardNormal) * sq;
                s.apply_into(&u, &mut dir);
                for (o, d) in self.noise.iter_mut().zip(&dir) {
                    *o += d * dw;
                }
            }
            self.step(&u, dt, true);
            if self.next.iter().any(|x| !x.is_finite()) {
                return Err(Error::BlowUp { time: t1 });
            }
            std::mem::swap(&mut u, &mut self.next);
            let p = self.eval_point(&u, None, &tracked);
            rec.advance(t1, &p);
            rec.prev = p;
            if self.is_record_step(n) {
                rec.record(t1, &u, &self.basis);
            }
        }
        Ok(self.finish(rec, u))
    }

    /// Simulates the pure-jump equation, drawing the Poisson random measure from `rng`.
    pub fn run_jump<R: Rng + ?Sized>(
        &mut self,
        h: &SpectralField,
        kernel: &JumpKernel,
        rng: &mut R,
    ) -> Result<PathSample> {
        if kernel.is_null() {
            // jumps through σ ≡ 0 change nothing; skip them so the step grid stays uniform
            return self.run_jump_events(h, kernel, Vec::new());
        }
        let events = kernel.sample_prm(self.config.horizon, rng)?;
        self.run_jump_events(h, kernel, events)
    }

    /// Simulates the pure-jump equation with a prescribed event list.
    pub fn run_jump_events(
        &mut self,
        h: &SpectralField,
        kernel: &JumpKernel,
        events: Vec<JumpEvent>,
    ) -> Result<PathSample> {
        self.check_initial(h)?;
        for ch in kernel.channels() {
            ch.sigma().check_dim(self.basis.dim())?;
        }
        let horizon = self.config.horizon;
        for (i, e) in events.iter().enumerate() {
            if e.channel >= kernel.channels().len() {
                return Err(Error::EventMismatch(format!(
                    "event {i} uses channel {} but the kernel has {}",
                    e.channel,
                    kernel.channels().len()
                )));
            }
            if !(e.t >= 0.0 && e.t <= horizon) {
                return Err(Error::EventMismatch(format!("event {i} at t = {} outside [0, T]", e.t)));
            }
            if i > 0 && events[i - 1].t > e.t {
                return Err(Error::EventMismatch("events are not sorted by time".into()));
            }
        }
        let snap = 1e-12 * horizon;
        let tracked = self.config.tracked_modes.clone();
        let mut u = h.coeffs().to_vec();
        let mut pre = vec![0.0; u.len()];
        let mut dir = vec![0.0; u.len()];
        let (mut rec, _) = self.start(&u, Some(kernel));
        let mut next_event = 0;

        // applies every event at time t to the state, using the left limit
        let mut apply_jumps = |sim: &mut Self, rec: &mut Recorder, u: &mut Vec<f64>, t: f64, upto: f64, next_event: &mut usize| -> Result<bool> {
            let first = *next_event;
            while *next_event < events.len() && events[*next_event].t <= upto {
                *next_event += 1;
            }
            if first == *next_event {
                return Ok(false);
            }
            pre.copy_from_slice(u);
            for e in &events[first..*next_event] {
                kernel.channels()[e.channel].add_jump(&pre, e.z, &mut dir, u);
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::BlowUp { time: t });
            }
            rec.jumps += *next_event - first;
            let p = sim.eval_point(u, Some(kernel), &tracked);
            rec.reset_point(t, p);
            Ok(true)
        };

        apply_jumps(self, &mut rec, &mut u, 0.0, snap, &mut next_event)?;
        rec.record(0.0, &u, &self.basis);
        let steps = self.config.steps();
        let mut t = 0.0;
        for n in 1..=steps {
            let tg = self.config.grid_time(n);
            loop {
                // next stopping point: an interior jump time or the grid time
                let interior = next_event < events.len() && events[next_event].t < tg - snap;
                let t1 = if interior { events[next_event].t } else { tg };
                self.step(&u, t1 - t, false);
                if self.next.iter().any(|x| !x.is_finite()) {
                    return Err(Error::BlowUp { time: t1 });
                }
                std::mem::swap(&mut u, &mut self.next);
                let p = self.eval_point(&u, Some(kernel), &tracked);
                rec.advance(t1, &p);
                rec.prev = p;
                t = t1;
                let upto = if interior { t1 } else { tg + snap };
                apply_jumps(self, &mut rec, &mut u, t1, upto, &mut next_event)?;
                if !interior {
                    break;
                }
            }
            if self.is_record_step(n) {
                rec.record(tg, &u, &self.basis);
            }
        }
        rec.sample.jump_log = events;
        Ok(self.finish(rec, u))
    }

    fn check_initial(&self, h: &SpectralField) -> Result<()> {
        if h.dim() != self.basis.dim() || h.basis().n_max() != self.basis.n_max() {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }
}

/// One exponential Euler step of the Brownian equation:
/// `u⁺ = e^{−κλ dt} ⊙ [u + dt(−B(u) + F(u)) + Σ σ^i(u) dW_i]`.
#[allow(clippy::too_many_arguments)]
pub fn step_brownian(
    u: &SpectralField,
    dt: f64,
    dw: &[f64],
    drift: &DriftForce,
    noise: &BrownianNoise,
    kappa: f64,
    nonlinear: bool,
) -> Result<SpectralField> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    if dw.len() != noise.channels() {
        return Err(Error::InvalidArgument(format!(
            "{} Brownian increments for {} channels",
            dw.len(),
            noise.channels()
        )));
    }
    drift.check_dim(u.dim())?;
    let basis = u.basis();
    let d = u.dim();
    let mut rhs = vec![0.0; d];
    drift.apply_into(u.coeffs(), &mut rhs);
    if nonlinear {
        let mut b = vec![0.0; d];
        basis.nonlinear_into(u.coeffs(), &mut b, &mut basis.scratch());
        rhs.iter_mut().zip(&b).for_each(|(r, b)| *r -= b);
    }
    let mut dir = vec![0.0; d];
    let mut out: Vec<f64> = u.coeffs().iter().zip(&rhs).map(|(x, r)| x + dt * r).collect();
    for (s, w) in noise.sigmas.iter().zip(dw) {
        s.check_dim(d)?;
        s.apply_into(u.coeffs(), &mut dir);
        out.iter_mut().zip(&dir).for_each(|(o, x)| *o += x * w);
    }
    for (o, l) in out.iter_mut().zip(basis.eigenvalues()) {
        *o *= (-kappa * l * dt).exp();
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::BlowUp { time: dt });
    }
    SpectralField::from_coeffs(basis, out)
}

pub fn simulate_brownian<R: Rng + ?Sized>(
    h: &SpectralField,
    config: &SolverConfig,
    drift: &DriftForce,
    noise: &BrownianNoise,
    rng: &mut R,
) -> Result<PathSample> {
    Simulator::new(h.basis(), config.clone(), drift.clone())?.run_brownian(h, noise, rng)
}

pub fn simulate_jump<R: Rng + ?Sized>(
    h: &SpectralField,
    config: &SolverConfig,
    drift: &DriftForce,
    kernel: &JumpKernel,
    rng: &mut R,
) -> Result<PathSample> {
    Simulator::new(h.basis(), config.clone(), drift.clone())?.run_jump(h, kernel, rng)
}
