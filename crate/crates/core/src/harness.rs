//! Monte-Carlo experiments over the ε-grid: paired Brownian and jump arms,
//! law comparison, moment tables and persisted results.
//!
//! Every path draws from its own stream keyed by (seed, arm, ε index, path), and
//! results are gathered in path order, so outputs do not depend on the number
//! of worker threads.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hypothesis::{check_h1_h2, check_h3i, CheckParams};
use crate::integrators::{PathSample, Simulator, SolverConfig};
use crate::model::Model;
use crate::rng::{stream, Arm};
use crate::spectral::SpectralField;

/// Asymptotic two-sample KS coefficient `c(α)` at α = 1%.
pub const KS_C_1PCT: f64 = 1.627_6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    NormH2,
    NormV2,
    /// Coefficient `(u(T), e_k)` of basis index `k`.
    ModeCoeff(usize),
    SupNormH2,
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::NormH2 => f.write_str("normH2"),
            Functional::NormV2 => f.write_str("normV2"),
            Functional::ModeCoeff(k) => write!(f, "mode_coeff({k})"),
            Functional::SupNormH2 => f.write_str("sup_normH2"),
        }
    }
}

impl FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "normH2" => return Ok(Functional::NormH2),
            "normV2" => return Ok(Functional::NormV2),
            "sup_normH2" => return Ok(Functional::SupNormH2),
            _ => {}
        }
        s.strip_prefix("mode_coeff(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|k| k.trim().parse().ok())
            .map(Functional::ModeCoeff)
            .ok_or_else(|| Error::Config(format!("unknown functional '{s}'")))
    }
}

impl Functional {
    pub fn eval(&self, path: &PathSample) -> f64 {
        match *self {
            Functional::NormH2 => path.final_state.norm_h().powi(2),
            Functional::NormV2 => *path.norm_v2.last().expect("final record"),
            Functional::ModeCoeff(k) => path.final_state.coeffs()[k],
            Functional::SupNormH2 => path.sup_h2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: Model,
    /// `kappa` and `nonlinear` must agree with the model.
    pub solver: SolverConfig,
    pub initial: SpectralField,
    pub functionals: Vec<Functional>,
    pub paths: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Run kernels that fail certification, marking the summary uncertified.
    pub force: bool,
    pub check: CheckParams,
    /// Largest tolerated share of blown-up paths per arm.
    pub blowup_budget: f64,
}

impl ExperimentConfig {
    pub fn new(model: Model, solver: SolverConfig, initial: SpectralField) -> Self {
        Self {
            model,
            solver,
            initial,
            functionals: vec![Functional::NormH2],
            paths: 1000,
            seed: 0,
            threads: None,
            force: false,
            check: CheckParams::default(),
            blowup_budget: 0.01,
        }
    }

    fn validate(&self) -> Result<()> {
        let dim = self.model.basis.dim();
        self.solver.validate(dim)?;
        if self.solver.kappa != self.model.kappa || self.solver.nonlinear != self.model.nonlinear {
            return Err(Error::InvalidArgument(
                "solver kappa/nonlinear disagree with the model".into(),
            ));
        }
        if self.initial.dim() != dim || self.initial.basis().n_max() != self.model.basis.n_max() {
            return Err(Error::BasisMismatch);
        }
        for f in &self.functionals {
            if let Functional::ModeCoeff(k) = *f {
                if k >= dim {
                    return Err(Error::ModeIndex { index: k, dim });
                }
            }
        }
        if self.paths < 100 {
            return Err(Error::InsufficientPaths { needed: 100, got: self.paths });
        }
        Ok(())
    }
}

/// Which equation a batch of paths solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArmSpec {
    Brownian,
    /// Jump arm at position `index` of the model's ε-grid.
    Jump { index: usize },
}

/// Per-path quantities kept after simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStats {
    pub functionals: Vec<f64>,
    pub sup_h4: f64,
    pub int_v2: f64,
    pub n_jumps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmRun {
    pub arm: ArmSpec,
    pub epsilon: Option<f64>,
    /// `None` marks a path that blew up.
    pub paths: Vec<Option<PathStats>>,
}

impl ArmRun {
    pub fn label(&self) -> &'static str {
        match self.arm {
            ArmSpec::Brownian => "bm",
            ArmSpec::Jump { .. } => "jump",
        }
    }

    pub fn blowups(&self) -> usize {
        self.paths.iter().filter(|p| p.is_none()).count()
    }

    pub fn finished(&self) -> impl Iterator<Item = &PathStats> {
        self.paths.iter().flatten()
    }

    /// Samples of functional `i` over the paths that finished.
    pub fn values(&self, i: usize) -> Vec<f64> {
        self.finished().map(|p| p.functionals[i]).collect()
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_paths<T: Send>(
    cfg: &ExperimentConfig,
    arm: ArmSpec,
    paths: usize,
    keep: impl Fn(PathSample) -> T + Sync,
) -> Result<(Option<f64>, Vec<Option<T>>)> {
    let model = &cfg.model;
    let (tag, eps_index, epsilon) = match arm {
        ArmSpec::Brownian => (Arm::Brownian, 0, None),
        ArmSpec::Jump { index } => {
            let k = model.kernels.get(index).ok_or_else(|| {
                Error::InvalidArgument(format!("no kernel at grid index {index}"))
            })?;
            (Arm::Jump, index, Some(k.epsilon()))
        }
    };
    // fail early on a bad solver config instead of once per worker
    Simulator::new(&model.basis, cfg.solver.clone(), model.drift.clone())?;
    let results: Vec<Result<Option<T>>> = with_pool(cfg.threads, || {
        (0..paths)
            .into_par_iter()
            .map_init(
                || Simulator::new(&model.basis, cfg.solver.clone(), model.drift.clone()).expect("validated"),
                |sim, p| {
                    let mut rng = stream(cfg.seed, tag, eps_index as u64, p as u64);
                    let run = match arm {
                        ArmSpec::Brownian => sim.run_brownian(&cfg.initial, &model.brownian, &mut rng),
                        ArmSpec::Jump { index } => sim.run_jump(&cfg.initial, &model.kernels[index], &mut rng),
                    };
                    match run {
                        Ok(path) => Ok(Some(keep(path))),
                        Err(Error::BlowUp { .. }) => Ok(None),
                        Err(e) => Err(e),
                    }
                },
            )
            .collect()
    })?;
    Ok((epsilon, results.into_iter().collect::<Result<_>>()?))
}

/// Simulates `paths` independent paths of one arm. Blow-ups are recorded as
/// `None`; every other failure aborts the run.
pub fn simulate_arm(cfg: &ExperimentConfig, arm: ArmSpec, paths: usize) -> Result<ArmRun> {
    let (epsilon, paths) = run_paths(cfg, arm, paths, |path| PathStats {
        functionals: cfg.functionals.iter().map(|f| f.eval(&path)).collect(),
        sup_h4: path.sup_h4,
        int_v2: path.int_v2,
        n_jumps: path.jump_log.len(),
    })?;
    Ok(ArmRun { arm, epsilon, paths })
}

/// Like [`simulate_arm`] but keeps every recorded trajectory.
pub fn simulate_arm_full(cfg: &ExperimentConfig, arm: ArmSpec, paths: usize) -> Result<Vec<Option<PathSample>>> {
    Ok(run_paths(cfg, arm, paths, |p| p)?.1)
}

/// Time series of the recorded functionals, one row per (path, record time).
pub fn write_trajectories<W: Write>(paths: &[Option<PathSample>], tracked: &[usize], mut w: W) -> Result<()> {
    let cols: String = tracked.iter().map(|k| format!(",mode_{k}")).collect();
    writeln!(w, "path,t,normH2,normV2,jumps{cols}")?;
    for (i, p) in paths.iter().enumerate() {
        let Some(p) = p else { continue };
        for r in 0..p.times.len() {
            let modes: String = p.tracked[r].iter().map(|v| format!(",{v:e}")).collect();
            writeln!(
                w,
                "{i},{},{:e},{:e},{}{modes}",
                p.times[r], p.norm_h2[r], p.norm_v2[r], p.n_jumps[r]
            )?;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LawComparison {
    pub mean_gap: f64,
    pub joint_se: f64,
    pub ks_stat: f64,
    pub ks_pass: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sample KS statistic `sup_t |F_a(t) − F_b(t)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && a[i] == t {
            i += 1;
        }
        while j < b.len() && b[j] == t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Mean gap with its joint standard error, and the KS test at the 1% level.
pub fn compare_laws(a: &[f64], b: &[f64]) -> Result<LawComparison> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("compare_laws needs nonempty samples".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ks = ks_statistic(a, b);
    Ok(LawComparison {
        mean_gap: (ma - mb).abs(),
        joint_se: (va / n + vb / m).sqrt(),
        ks_stat: ks,
        ks_pass: ks <= KS_C_1PCT * ((n + m) / (n * m)).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatRow {
    pub arm: String,
    pub epsilon: Option<f64>,
    pub functional: String,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
    /// Comparison against the Brownian arm; absent on the Brownian rows.
    pub vs_bm: Option<LawComparison>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentRow {
    pub arm: String,
    pub epsilon: Option<f64>,
    /// Estimate of `E sup_t ‖u(t)‖_H⁴` and its SE.
    pub sup_h4: f64,
    pub sup_h4_se: f64,
    /// Estimate of `E(∫_0^T ‖u‖_V² dt)²` and its SE.
    pub int_v2_sq: f64,
    pub int_v2_sq_se: f64,
    pub flag: bool,
}

/// Moment estimates per arm; jump rows are flagged when an estimate exceeds
/// three times the smallest jump-arm estimate.
pub fn moment_table(runs: &[ArmRun]) -> Result<Vec<MomentRow>> {
    let mut rows = Vec::new();
    for run in runs {
        let n = run.finished().count();
        if n < 100 {
            return Err(Error::InsufficientPaths { needed: 100, got: n });
        }
        let s4: Vec<f64> = run.finished().map(|p| p.sup_h4).collect();
        let v2: Vec<f64> = run.finished().map(|p| p.int_v2 * p.int_v2).collect();
        let (m4, var4) = mean_var(&s4);
        let (mv, varv) = mean_var(&v2);
        rows.push(MomentRow {
            arm: run.label().into(),
            epsilon: run.epsilon,
            sup_h4: m4,
            sup_h4_se: (var4 / n as f64).sqrt(),
            int_v2_sq: mv,
            int_v2_sq_se: (varv / n as f64).sqrt(),
            flag: false,
        });
    }
    let jump = |r: &&MomentRow| r.epsilon.is_some();
    let min4 = rows.iter().filter(jump).map(|r| r.sup_h4).fold(f64::INFINITY, f64::min);
    let minv = rows.iter().filter(jump).map(|r| r.int_v2_sq).fold(f64::INFINITY, f64::min);
    for r in rows.iter_mut().filter(|r| r.epsilon.is_some()) {
        let finite = r.sup_h4.is_finite() && r.int_v2_sq.is_finite();
        r.flag = !finite || r.sup_h4 > 3.0 * min4 || r.int_v2_sq > 3.0 * minv;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatSummary {
    pub paths: usize,
    pub functionals: Vec<Functional>,
    pub epsilons: Vec<f64>,
    pub rows: Vec<StatRow>,
    pub moments: Vec<MomentRow>,
    /// Blown-up paths per arm, Brownian first, then the grid order.
    pub blowups: Vec<usize>,
    /// False when some arm exceeded the blow-up budget.
    pub valid: bool,
    pub certified: bool,
    pub notes: Vec<String>,
}

impl StatSummary {
    pub fn row(&self, functional: Functional, epsilon: Option<f64>) -> Option<&StatRow> {
        let name = functional.to_string();
        self.rows
            .iter()
            .find(|r| r.functional == name && r.epsilon == epsilon)
    }

    /// Jump-arm comparisons for one functional, ordered from the largest ε down.
    pub fn trend(&self, functional: Functional) -> Vec<(f64, LawComparison)> {
        let mut v: Vec<(f64, LawComparison)> = self
            .epsilons
            .iter()
            .filter_map(|&e| self.row(functional, Some(e)).and_then(|r| r.vs_bm).map(|c| (e, c)))
            .collect();
        v.sort_by(|a, b| b.0.total_cmp(&a.0));
        v
    }

    /// Gap nonincreasing along decreasing ε, with one joint SE of slack.
    pub fn trend_ok(&self, functional: Functional) -> bool {
        self.trend(functional)
            .windows(2)
            .all(|w| w[1].1.mean_gap <= w[0].1.mean_gap + w[1].1.joint_se)
    }

    /// At the smallest ε: mean gap within 3 joint SE and KS passing at 1%.
    pub fn final_ok(&self, functional: Functional) -> bool {
        self.trend(functional)
            .last()
            .is_some_and(|(_, c)| c.mean_gap <= 3.0 * c.joint_se && c.ks_pass)
    }

    pub fn uniformity_flag(&self) -> bool {
        self.moments.iter().any(|m| m.flag)
    }

    /// Convergence verdict: valid run and every functional passing at the smallest ε.
    pub fn converged(&self) -> bool {
        self.valid && self.functionals.iter().all(|&f| self.final_ok(f))
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "arm,epsilon,functional,mean,se,gap_vs_bm,joint_se,ks_stat,ks_pass")?;
        for r in &self.rows {
            let eps = r.epsilon.map_or("NA".to_string(), |e| e.to_string());
            let cmp = match &r.vs_bm {
                Some(c) => format!("{:e},{:e},{:e},{}", c.mean_gap, c.joint_se, c.ks_stat, c.ks_pass),
                None => "NA,NA,NA,NA".to_string(),
            };
            writeln!(w, "{},{},{},{:e},{:e},{}", r.arm, eps, r.functional, r.mean, r.se, cmp)?;
        }
        Ok(())
    }

    pub fn write_moments_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "arm,epsilon,supH4,se,intV2sq,se,uniformity_flag")?;
        for m in &self.moments {
            let eps = m.epsilon.map_or("NA".to_string(), |e| e.to_string());
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{}",
                m.arm, eps, m.sup_h4, m.sup_h4_se, m.int_v2_sq, m.int_v2_sq_se, m.flag
            )?;
        }
        Ok(())
    }

    /// Human-readable gap table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        if !self.certified {
            s.push_str("UNCERTIFIED: kernels failed certification, run forced\n");
        }
        if !self.valid {
            s.push_str("INVALID: blow-up budget exceeded\n");
        }
        s.push_str(&format!(
            "{:<16} {:>8} {:>14} {:>12} {:>12} {:>10} {:>6}\n",
            "functional", "epsilon", "mean", "gap_vs_bm", "joint_se", "ks_stat", "ks"
        ));
        for r in &self.rows {
            let eps = r.epsilon.map_or("bm".to_string(), |e| e.to_string());
            let (gap, se, ks, pass) = match &r.vs_bm {
                Some(c) => (
                    format!("{:.4e}", c.mean_gap),
                    format!("{:.4e}", c.joint_se),
                    format!("{:.4}", c.ks_stat),
                    if c.ks_pass { "pass" } else { "FAIL" }.to_string(),
                ),
                None => ("-".into(), format!("{:.4e}", r.se), "-".into(), "-".into()),
            };
            s.push_str(&format!(
                "{:<16} {:>8} {:>14.6e} {:>12} {:>12} {:>10} {:>6}\n",
                r.functional, eps, r.mean, gap, se, ks, pass
            ));
        }
        s
    }
}

fn certification_failures(model: &Model, params: &CheckParams) -> Result<Vec<String>> {
    let mut failures = Vec::new();
    let h12 = check_h1_h2(model, params)?;
    for r in h12.rows.iter().filter(|r| !r.pass) {
        failures.push(format!(
            "{} at epsilon {} = {:e} (witness {})",
            r.hypothesis,
            r.epsilon.map_or("NA".into(), |e| e.to_string()),
            r.value,
            r.witness.map_or("NA".into(), |w| w.to_string())
        ));
    }
    if !check_h3i(model, params.radius)?.pass() {
        failures.push("H.3(i) violated: s(ε) increasing".into());
    }
    Ok(failures)
}

/// Runs the Brownian arm and one jump arm per ε, then compares laws.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<StatSummary> {
    cfg.validate()?;
    let failures = certification_failures(&cfg.model, &cfg.check)?;
    let certified = failures.is_empty();
    if !certified && !cfg.force {
        return Err(Error::Nonconforming(failures.join("; ")));
    }
    let mut runs = vec![simulate_arm(cfg, ArmSpec::Brownian, cfg.paths)?];
    for index in 0..cfg.model.kernels.len() {
        runs.push(simulate_arm(cfg, ArmSpec::Jump { index }, cfg.paths)?);
    }
    summarize(cfg, &runs, certified, failures)
}

/// Builds the summary from finished arms (Brownian arm first).
pub fn summarize(cfg: &ExperimentConfig, runs: &[ArmRun], certified: bool, failures: Vec<String>) -> Result<StatSummary> {
    let blowups: Vec<usize> = runs.iter().map(|r| r.blowups()).collect();
    let budget = (cfg.blowup_budget * cfg.paths as f64).floor() as usize;
    let valid = blowups.iter().all(|&b| b <= budget);
    let bm = runs
        .iter()
        .find(|r| r.arm == ArmSpec::Brownian)
        .ok_or_else(|| Error::InvalidArgument("summary needs the Brownian arm".into()))?;
    let mut rows = Vec::new();
    for run in runs {
        for (i, f) in cfg.functionals.iter().enumerate() {
            let x = run.values(i);
            if x.is_empty() {
                return Err(Error::BlowUp { time: f64::NAN });
            }
            let (mean, variance) = mean_var(&x);
            let vs_bm = match run.arm {
                ArmSpec::Brownian => None,
                ArmSpec::Jump { .. } => Some(compare_laws(&x, &bm.values(i))?),
            };
            rows.push(StatRow {
                arm: run.label().into(),
                epsilon: run.epsilon,
                functional: f.to_string(),
                mean,
                variance,
                se: (variance / x.len() as f64).sqrt(),
                vs_bm,
            });
        }
    }
    let moments = moment_table(runs)?;
    let mut notes = vec![
        "laws compared through fixed-time and sup functionals, a surrogate for path-space convergence".to_string(),
    ];
    if !certified {
        notes.push("UNCERTIFIED".to_string());
        notes.extend(failures);
    }
    Ok(StatSummary {
        paths: cfg.paths,
        functionals: cfg.functionals.clone(),
        epsilons: cfg.model.epsilons(),
        rows,
        moments,
        blowups,
        valid,
        certified,
        notes,
    })
}

/// Lowercase hex SHA-256 of the canonical config text.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run manifest, stored as `key: value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub paths: usize,
    pub certified: bool,
    pub valid: bool,
}

impl Manifest {
    pub fn new(seed: u64, config_hash: String, summary: &StatSummary) -> Self {
        Self {
            seed,
            config_hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            paths: summary.paths,
            certified: summary.certified,
            valid: summary.valid,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "seed: {}\nconfig_hash: {}\ncode_version: {}\npaths: {}\ncertification: {}\nvalid: {}\n",
            self.seed,
            self.config_hash,
            self.code_version,
            self.paths,
            if self.certified { "certified" } else { "UNCERTIFIED" },
            self.valid
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<String> {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(':')))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::Config(format!("manifest lacks '{key}'")))
        };
        let bad = |k: &str| Error::Config(format!("manifest: bad value for '{k}'"));
        Ok(Self {
            seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
            config_hash: get("config_hash")?,
            code_version: get("code_version")?,
            paths: get("paths")?.parse().map_err(|_| bad("paths"))?,
            certified: get("certification")? == "certified",
            valid: get("valid")?.parse().map_err(|_| bad("valid"))?,
        })
    }
}

/// Per-path dump: one row per path, `NA` for blown-up paths.
pub fn write_path_dump<W: Write>(run: &ArmRun, functionals: &[Functional], mut w: W) -> Result<()> {
    let names: Vec<String> = functionals.iter().map(|f| f.to_string()).collect();
    writeln!(w, "path,{}{}supH4,intV2,jumps", names.join(","), if names.is_empty() { "" } else { "," })?;
    for (i, p) in run.paths.iter().enumerate() {
        match p {
            Some(p) => {
                let vals: String = p.functionals.iter().map(|v| format!("{v:e},")).collect();
                writeln!(w, "{i},{vals}{:e},{:e},{}", p.sup_h4, p.int_v2, p.n_jumps)?;
            }
            None => {
                let na = "NA,".repeat(functionals.len());
                writeln!(w, "{i},{na}NA,NA,NA")?;
            }
        }
    }
    Ok(())
}

/// File name of an arm's path dump.
pub fn dump_name(run: &ArmRun) -> String {
    match run.arm {
        ArmSpec::Brownian => "paths_bm.csv".into(),
        ArmSpec::Jump { index } => format!("paths_jump_{index}.csv"),
    }
}

/// Writes `summary.csv`, `moments.csv`, `manifest.txt` and, when `runs` is
/// given, one path dump per arm. Returns the written paths.
pub fn persist(summary: &StatSummary, manifest: &Manifest, runs: Option<&[ArmRun]>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    let mut buf = Vec::new();
    summary.write_summary_csv(&mut buf)?;
    put("summary.csv", buf)?;
    let mut buf = Vec::new();
    summary.write_moments_csv(&mut buf)?;
    put("moments.csv", buf)?;
    put("manifest.txt", manifest.to_text().into_bytes())?;
    for run in runs.unwrap_or(&[]) {
        let mut buf = Vec::new();
        write_path_dump(run, &summary.functionals, &mut buf)?;
        put(&dump_name(run), buf)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn functional_names_round_trip() {
        for f in [Functional::NormH2, Functional::NormV2, Functional::SupNormH2, Functional::ModeCoeff(3)] {
            assert_eq!(f.to_string().parse::<Functional>().unwrap(), f);
        }
        assert!("mode_coeff(x)".parse::<Functional>().is_err());
    }

    #[test]
    fn ks_handles_ties_and_shifts() {
        assert_eq!(ks_statistic(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert!((ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            seed: 7,
            config_hash: config_hash("a = 1\n"),
            code_version: "0.1.0".into(),
            paths: 100,
            certified: false,
            valid: true,
        };
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
        assert_eq!(m.config_hash.len(), 64);
    }
}
