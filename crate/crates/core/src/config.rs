//! Run configuration files (TOML) with sections `basis`, `solver`, `drift`,
//! `brownian`, `jump`, `experiment` and `output`. Unknown keys are errors.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{config_hash, ExperimentConfig, Functional};
use crate::hypothesis::CheckParams;
use crate::integrators::{BrownianNoise, DriftForce, SolverConfig};
use crate::levy::{build_h, BaseSigma, HFamily, JumpChannel, JumpKernel, LevyMeasure, ThetaFamily, ThetaKernel};
use crate::model::Model;
use crate::spectral::{Basis, Mode, Parity, SpectralField, WaveVector};

/// A basis element `(k, parity)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub kx: i32,
    pub ky: i32,
    pub parity: String,
}

/// A basis element with a coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeValue {
    pub kx: i32,
    pub ky: i32,
    pub parity: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub n_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub horizon: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub kappa: f64,
    pub nonlinear: bool,
    pub tracked_modes: Vec<ModeSpec>,
    pub tau_threshold: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 1e-3,
            record_stride: 10,
            kappa: 1.0,
            nonlinear: true,
            tracked_modes: Vec::new(),
            tau_threshold: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    /// `zero`, `linear` (F(u) = a·u) or `constant`.
    pub kind: String,
    pub a: Option<f64>,
    pub field: Vec<ModeValue>,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self { kind: "zero".into(), a: None, field: Vec::new() }
    }
}

/// One diffusion coefficient: `scaled` (c·u), `saturating` (c·u/(1+‖u‖)),
/// `constant` (a fixed field) or `diagonal` (per-mode multipliers `d`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSpec {
    pub id: Option<String>,
    pub kind: String,
    pub c: Option<f64>,
    pub field: Option<Vec<ModeValue>>,
    pub d: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianSection {
    pub sigma: Vec<SigmaSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSection {
    /// `stable` (needs `alpha`) or `power_tail` (needs `beta`).
    pub measure: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// `annulus`, `outer_linear` or `inner_linear`.
    pub h_family: String,
    /// `one`, `cosine` or `gaussian_dip`.
    #[serde(default = "default_theta")]
    pub theta: String,
    pub epsilons: Vec<f64>,
    pub cutoff_delta: Option<f64>,
    /// Brownian sigma ids, one per jump channel; all of them in order when absent.
    pub sigmas: Option<Vec<String>>,
}

fn default_theta() -> String {
    "one".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub paths: usize,
    pub seed: u64,
    /// `normH2`, `normV2`, `sup_normH2`, `mode_coeff(i)` or `mode_coeff(kx,ky,parity)`.
    pub functionals: Vec<String>,
    pub initial: Vec<ModeValue>,
    pub threads: Option<usize>,
    pub force: bool,
    pub blowup_budget: f64,
    pub check_samples: usize,
    pub check_radius: f64,
    pub check_bound: f64,
    pub gap_tol: f64,
    pub gap_pairs: Vec<[usize; 2]>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let check = CheckParams::default();
        Self {
            paths: 1000,
            seed: 0,
            functionals: vec!["normH2".into()],
            initial: vec![ModeValue { kx: 1, ky: 0, parity: "cos".into(), value: 1.0 }],
            threads: None,
            force: false,
            blowup_budget: 0.01,
            check_samples: check.samples,
            check_radius: check.radius,
            check_bound: check.bound,
            gap_tol: check.gap_tol,
            gap_pairs: check.pairs.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub dump_paths: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), dump_paths: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub basis: BasisSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub drift: DriftSection,
    pub brownian: BrownianSection,
    pub jump: JumpSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn mode_index(basis: &Basis, kx: i32, ky: i32, parity: &str) -> Result<usize> {
    let parity: Parity = parity
        .parse()
        .map_err(|_| cfg_err(format!("parity '{parity}' must be cos or sin")))?;
    basis
        .index_of(Mode { k: WaveVector::new(kx, ky), parity })
        .ok_or_else(|| cfg_err(format!("mode ({kx},{ky},{parity:?}) is not in the basis (n_max = {})", basis.n_max())))
}

fn dense(basis: &Basis, values: &[ModeValue]) -> Result<Vec<f64>> {
    let mut v = vec![0.0; basis.dim()];
    for m in values {
        v[mode_index(basis, m.kx, m.ky, &m.parity)?] += m.value;
    }
    Ok(v)
}

fn parse_functional(basis: &Basis, s: &str) -> Result<Functional> {
    if let Ok(f) = s.parse::<Functional>() {
        return Ok(f);
    }
    let inner = s
        .trim()
        .strip_prefix("mode_coeff(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| cfg_err(format!("unknown functional '{s}'")))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [kx, ky, p] => {
            let kx = kx.parse().map_err(|_| cfg_err(format!("bad kx in '{s}'")))?;
            let ky = ky.parse().map_err(|_| cfg_err(format!("bad ky in '{s}'")))?;
            Ok(Functional::ModeCoeff(mode_index(basis, kx, ky, p)?))
        }
        _ => Err(cfg_err(format!("unknown functional '{s}'"))),
    }
}

impl SigmaSpec {
    fn build(&self, basis: &Basis) -> Result<BaseSigma> {
        let need_c = || {
            self.c
                .ok_or_else(|| cfg_err(format!("sigma '{}' needs c", self.kind)))
        };
        let extra = |what: &str| cfg_err(format!("sigma '{}' does not take '{what}'", self.kind));
        let sigma = match self.kind.as_str() {
            "scaled" | "saturating" => {
                if self.field.is_some() {
                    return Err(extra("field"));
                }
                if self.d.is_some() {
                    return Err(extra("d"));
                }
                let c = need_c()?;
                if self.kind == "scaled" {
                    BaseSigma::Scaled { c }
                } else {
                    BaseSigma::Saturating { c }
                }
            }
            "constant" => {
                if self.c.is_some() || self.d.is_some() {
                    return Err(extra(if self.c.is_some() { "c" } else { "d" }));
                }
                let field = self
                    .field
                    .as_ref()
                    .ok_or_else(|| cfg_err("sigma 'constant' needs field"))?;
                BaseSigma::Constant { field: dense(basis, field)? }
            }
            "diagonal" => {
                if self.c.is_some() || self.field.is_some() {
                    return Err(extra(if self.c.is_some() { "c" } else { "field" }));
                }
                let d = self.d.clone().ok_or_else(|| cfg_err("sigma 'diagonal' needs d"))?;
                BaseSigma::Diagonal { d }
            }
            k => return Err(cfg_err(format!("unknown sigma kind '{k}'"))),
        };
        sigma.check_dim(basis.dim()).map_err(|e| cfg_err(e.to_string()))?;
        Ok(sigma)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(format!("parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(cfg_err(format!("config not found: {}", path.display())))
            }
            Err(e) => return Err(e.into()),
        };
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => cfg_err(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Canonical TOML rendering; the config hash is taken over this text.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        config_hash(&self.canonical())
    }

    pub fn basis(&self) -> Result<Arc<Basis>> {
        Basis::new(self.basis.n_max)
    }

    pub fn solver_config(&self, basis: &Basis) -> Result<SolverConfig> {
        let s = &self.solver;
        let tracked = if s.tracked_modes.is_empty() {
            vec![0]
        } else {
            s.tracked_modes
                .iter()
                .map(|m| mode_index(basis, m.kx, m.ky, &m.parity))
                .collect::<Result<_>>()?
        };
        let cfg = SolverConfig {
            horizon: s.horizon,
            dt: s.dt,
            record_stride: s.record_stride,
            kappa: s.kappa,
            nonlinear: s.nonlinear,
            tracked_modes: tracked,
            tau_threshold: s.tau_threshold,
            keep_snapshots: false,
        };
        cfg.validate(basis.dim()).map_err(|e| cfg_err(format!("[solver] {e}")))?;
        Ok(cfg)
    }

    fn drift(&self, basis: &Basis) -> Result<DriftForce> {
        let d = &self.drift;
        match d.kind.as_str() {
            "zero" if d.a.is_none() && d.field.is_empty() => Ok(DriftForce::Zero),
            "linear" if d.field.is_empty() => Ok(DriftForce::Linear {
                a: d.a.ok_or_else(|| cfg_err("[drift] linear needs a"))?,
            }),
            "constant" if d.a.is_none() => Ok(DriftForce::Constant { field: dense(basis, &d.field)? }),
            "zero" | "linear" | "constant" => Err(cfg_err(format!("[drift] extra keys for kind '{}'", d.kind))),
            k => Err(cfg_err(format!("[drift] unknown kind '{k}'"))),
        }
    }

    fn measure(&self) -> Result<LevyMeasure> {
        let j = &self.jump;
        match j.measure.as_str() {
            "stable" if j.beta.is_none() => {
                LevyMeasure::stable(j.alpha.ok_or_else(|| cfg_err("[jump] stable measure needs alpha"))?)
            }
            "power_tail" if j.alpha.is_none() => {
                LevyMeasure::power_tail(j.beta.ok_or_else(|| cfg_err("[jump] power_tail measure needs beta"))?)
            }
            "stable" | "power_tail" => Err(cfg_err("[jump] give alpha for stable, beta for power_tail")),
            m => Err(cfg_err(format!("[jump] unknown measure '{m}'"))),
        }
    }

    pub fn model(&self) -> Result<Model> {
        let basis = self.basis()?;
        let drift = self.drift(&basis)?;
        if self.brownian.sigma.is_empty() {
            return Err(cfg_err("[brownian] needs at least one sigma"));
        }
        let sigmas: Vec<BaseSigma> = self
            .brownian
            .sigma
            .iter()
            .map(|s| s.build(&basis))
            .collect::<Result<_>>()?;
        let ids: Vec<String> = self
            .brownian
            .sigma
            .iter()
            .enumerate()
            .map(|(i, s)| s.id.clone().unwrap_or_else(|| format!("sigma{i}")))
            .collect();
        let chosen: Vec<usize> = match &self.jump.sigmas {
            None => (0..sigmas.len()).collect(),
            Some(names) => names
                .iter()
                .map(|n| {
                    ids.iter()
                        .position(|i| i == n)
                        .ok_or_else(|| cfg_err(format!("[jump] sigma '{n}' is not defined in [brownian]")))
                })
                .collect::<Result<_>>()?,
        };
        let brownian = BrownianNoise::new(chosen.iter().map(|&i| sigmas[i].clone()).collect())?;
        let measure = self.measure()?;
        let family = match self.jump.h_family.as_str() {
            "annulus" => HFamily::Annulus,
            "outer_linear" => HFamily::OuterLinear,
            "inner_linear" => HFamily::InnerLinear,
            f => return Err(cfg_err(format!("[jump] unknown h_family '{f}'"))),
        };
        let theta = match self.jump.theta.as_str() {
            "one" => ThetaFamily::One,
            "cosine" => ThetaFamily::Cosine,
            "gaussian_dip" => ThetaFamily::GaussianDip,
            t => return Err(cfg_err(format!("[jump] unknown theta '{t}'"))),
        };
        if self.jump.epsilons.is_empty() {
            return Err(cfg_err("[jump] epsilons must not be empty"));
        }
        let mut kernels = Vec::new();
        for &eps in &self.jump.epsilons {
            let h = build_h(family, eps, &measure)?;
            let channels = brownian
                .sigmas
                .iter()
                .map(|s| JumpChannel::new(s.clone(), ThetaKernel::new(theta.clone(), eps), h.clone(), self.jump.cutoff_delta))
                .collect::<Result<_>>()?;
            kernels.push(JumpKernel::new(eps, channels)?);
        }
        let mut model = Model::new(basis, drift, brownian, kernels)?;
        model.kappa = self.solver.kappa;
        model.nonlinear = self.solver.nonlinear;
        Ok(model)
    }

    pub fn check_params(&self) -> CheckParams {
        let e = &self.experiment;
        CheckParams {
            samples: e.check_samples,
            radius: e.check_radius,
            bound: e.check_bound,
            seed: e.seed,
            pairs: e.gap_pairs.iter().map(|p| (p[0], p[1])).collect(),
            panel_size: CheckParams::default().panel_size,
            gap_tol: e.gap_tol,
        }
    }

    /// Assembles the experiment; every cross-reference is resolved here.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let model = self.model()?;
        let basis = model.basis.clone();
        let solver = self.solver_config(&basis)?;
        let initial = SpectralField::from_coeffs(&basis, dense(&basis, &self.experiment.initial)?)?;
        let e = &self.experiment;
        let functionals = e
            .functionals
            .iter()
            .map(|f| parse_functional(&basis, f))
            .collect::<Result<Vec<_>>>()?;
        for f in &functionals {
            if let Functional::ModeCoeff(k) = *f {
                if k >= basis.dim() {
                    return Err(cfg_err(format!("functional {f}: index beyond dimension {}", basis.dim())));
                }
            }
        }
        for p in &e.gap_pairs {
            if p[0] >= basis.dim() || p[1] >= basis.dim() {
                return Err(cfg_err(format!("[experiment] gap pair {p:?} beyond dimension {}", basis.dim())));
            }
        }
        if !(0.0..1.0).contains(&e.blowup_budget) {
            return Err(cfg_err("[experiment] blowup_budget must lie in [0, 1)"));
        }
        let mut cfg = ExperimentConfig::new(model, solver, initial);
        cfg.functionals = functionals;
        cfg.paths = e.paths;
        cfg.seed = e.seed;
        cfg.threads = e.threads;
        cfg.force = e.force;
        cfg.check = self.check_params();
        cfg.blowup_budget = e.blowup_budget;
        Ok(cfg)
    }
}
