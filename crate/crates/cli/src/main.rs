//! `snse`: certification, simulation and convergence experiments from a config file.
//!
//! Exit codes: 0 success, 1 certification or convergence failure, 2 usage or
//! config error, 3 numerical failure.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use snse::config::RunConfig;
use snse::harness::{
    self, run_experiment, simulate_arm, simulate_arm_full, write_path_dump, write_trajectories, ArmRun, ArmSpec,
    ExperimentConfig, Manifest, StatSummary,
};
use snse::hypothesis::{certify, Certification};
use snse::spectral::Basis;
use snse::Error;

/// Largest basis size accepted by tensor-dump.
const TENSOR_NMAX: usize = 8;

#[derive(Parser, Debug)]
#[command(name = "snse", version, about = "Stochastic Navier-Stokes on the torus: jump-noise approximation lab")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override; falls back to SNSE_SEED, then to the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (a file for tensor-dump).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run kernels that fail certification; results are marked UNCERTIFIED.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify the noise hypotheses for the configured kernels.
    Check {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
    /// Simulate one arm and dump its paths.
    Simulate {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, value_enum, default_value_t = ArmArg::Bm)]
        arm: ArmArg,
        /// Position in the ε-grid for the jump arm.
        #[arg(long, default_value_t = 0)]
        eps_index: usize,
    },
    /// Run the Brownian arm against every jump arm and tabulate law gaps.
    Converge {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Write the coupling tensor b(e_i, e_j, e_l) as CSV.
    TensorDump {
        #[arg(long)]
        nmax: usize,
        /// Include entries that vanish.
        #[arg(long)]
        dense: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ArmArg {
    Bm,
    Jump,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Nonconforming(_) => 1,
            Error::BlowUp { .. } | Error::Quadrature { .. } | Error::EventMismatch(_) => 3,
            _ => 2,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::new(2, e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn load(cli: &Cli, positional: &Option<PathBuf>) -> Result<RunConfig, Failure> {
    let path = positional
        .as_ref()
        .or(cli.config.as_ref())
        .ok_or_else(|| Failure::new(2, "no config given (pass a path or --config)"))?;
    Ok(RunConfig::load(path)?)
}

fn seed(cli: &Cli, cfg: &RunConfig) -> Result<u64, Failure> {
    if let Some(s) = cli.seed {
        return Ok(s);
    }
    match std::env::var("SNSE_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::new(2, format!("SNSE_SEED='{v}' is not an unsigned integer"))),
        Err(_) => Ok(cfg.experiment.seed),
    }
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn experiment(cli: &Cli, cfg: &mut RunConfig, paths: Option<usize>) -> Result<ExperimentConfig, Failure> {
    cfg.experiment.seed = seed(cli, cfg)?;
    if let Some(p) = paths {
        cfg.experiment.paths = p;
    }
    if let Some(t) = cli.threads {
        cfg.experiment.threads = Some(t);
    }
    if cli.force {
        cfg.experiment.force = true;
    }
    Ok(cfg.experiment()?)
}

fn print_certification(c: &Certification) {
    println!("{:<20} {:>8} {:>14} {:>8} {:>6}", "hypothesis", "epsilon", "value", "witness", "pass");
    let report = c.report();
    for r in &report.rows {
        println!(
            "{:<20} {:>8} {:>14.6e} {:>8} {:>6}",
            r.hypothesis,
            r.epsilon.map_or("-".into(), |e| e.to_string()),
            r.value,
            r.witness.map_or("-".into(), |w| w.to_string()),
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    println!();
    println!("sup-jump table (M = {}):", c.h3i.radius);
    for (e, s) in c.h3i.epsilons.iter().zip(&c.h3i.sup_jump) {
        println!("  eps = {e:<6} s = {s:.6e}");
    }
    println!("generator gap panel ({} points, pairs {:?}):", c.gap.panel_norms.len(), c.gap.pairs);
    for (e, g) in c.gap.epsilons.iter().zip(&c.gap.panel_max) {
        println!("  eps = {e:<6} max G/(1+|x|^2) = {g:.6e}");
    }
    println!(
        "  strictly decreasing: {}, below tolerance at smallest eps: {}, growth envelope: {}",
        c.gap.strictly_decreasing,
        c.gap.final_below_tol,
        c.gap.envelope_ok.map_or("n/a".into(), |b| b.to_string())
    );
    for n in &report.notes {
        println!("note: {n}");
    }
}

fn cmd_check(cli: &Cli, positional: &Option<PathBuf>) -> Outcome {
    let mut cfg = load(cli, positional)?;
    cfg.experiment.seed = seed(cli, &cfg)?;
    let model = cfg.model()?;
    let cert = certify(&model, &cfg.check_params())?;
    print_certification(&cert);
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        let f = File::create(dir.join("hypotheses.csv"))?;
        cert.report().write_csv(BufWriter::new(f))?;
    }
    if cert.pass() {
        println!("certified");
        Ok(0)
    } else {
        if !cert.h3i.pass() {
            eprintln!("H.3(i) violated: s(ε) increasing");
        }
        println!("NOT certified");
        Ok(1)
    }
}

fn mean_se(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    // SE of the sample variance from the fourth central moment
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var_se = ((m4 - var * var * (n - 3.0) / (n - 1.0)).max(0.0) / n).sqrt();
    (mean, (var / n).sqrt(), var, var_se)
}

fn cmd_simulate(cli: &Cli, positional: &Option<PathBuf>, paths: Option<usize>, arm: ArmArg, eps_index: usize) -> Outcome {
    let mut cfg = load(cli, positional)?;
    let exp = experiment(cli, &mut cfg, None)?;
    let n = paths.unwrap_or(exp.paths);
    if n == 0 {
        return Err(Failure::new(2, "--paths must be at least 1"));
    }
    let spec = match arm {
        ArmArg::Bm => ArmSpec::Brownian,
        ArmArg::Jump => {
            if eps_index >= exp.model.kernels.len() {
                return Err(Failure::new(2, format!("--eps-index {eps_index} outside the grid")));
            }
            ArmSpec::Jump { index: eps_index }
        }
    };
    let full = simulate_arm_full(&exp, spec, n)?;
    let run = ArmRun {
        arm: spec,
        epsilon: match spec {
            ArmSpec::Jump { index } => Some(exp.model.kernels[index].epsilon()),
            ArmSpec::Brownian => None,
        },
        paths: full
            .iter()
            .map(|p| {
                p.as_ref().map(|p| harness::PathStats {
                    functionals: exp.functionals.iter().map(|f| f.eval(p)).collect(),
                    sup_h4: p.sup_h4,
                    int_v2: p.int_v2,
                    n_jumps: p.jump_log.len(),
                })
            })
            .collect(),
    };
    let dir = out_dir(cli, &cfg);
    fs::create_dir_all(&dir)?;
    write_path_dump(&run, &exp.functionals, BufWriter::new(File::create(dir.join(harness::dump_name(&run)))?))?;
    let traj = match spec {
        ArmSpec::Brownian => "trajectories_bm.csv".to_string(),
        ArmSpec::Jump { index } => format!("trajectories_jump_{index}.csv"),
    };
    write_trajectories(&full, &exp.solver.tracked_modes, BufWriter::new(File::create(dir.join(traj))?))?;

    let label = run.epsilon.map_or("bm".to_string(), |e| format!("jump eps={e}"));
    println!("arm {label}: {} paths, {} blown up", n, run.blowups());
    for (i, f) in exp.functionals.iter().enumerate() {
        let x = run.values(i);
        if x.is_empty() {
            continue;
        }
        let (m, se, v, vse) = mean_se(&x);
        println!("{f}: mean {m:.6e} ± {se:.2e}  variance {v:.6e} ± {vse:.2e}");
    }
    let budget = (exp.blowup_budget * n as f64).floor() as usize;
    if run.blowups() > budget {
        return Err(Failure::new(3, format!("blow-up: {} of {n} paths exceed the budget", run.blowups())));
    }
    Ok(0)
}

fn print_trend(s: &StatSummary) {
    for &f in &s.functionals {
        let t = s.trend(f);
        let gaps: Vec<String> = t.iter().map(|(e, c)| format!("{e}:{:.3e}", c.mean_gap)).collect();
        println!(
            "{f}: gaps [{}] trend {} final {}",
            gaps.join(", "),
            if s.trend_ok(f) { "nonincreasing" } else { "NOT monotone" },
            if s.final_ok(f) { "pass" } else { "FAIL" }
        );
    }
    for m in &s.moments {
        println!(
            "moments {} {}: E sup|u|^4 = {:.4e} ± {:.1e}, E(int |u|_V^2)^2 = {:.4e} ± {:.1e}{}",
            m.arm,
            m.epsilon.map_or("-".into(), |e| e.to_string()),
            m.sup_h4,
            m.sup_h4_se,
            m.int_v2_sq,
            m.int_v2_sq_se,
            if m.flag { "  FLAG" } else { "" }
        );
    }
}

fn cmd_converge(cli: &Cli, positional: &Option<PathBuf>, paths: Option<usize>) -> Outcome {
    let mut cfg = load(cli, positional)?;
    let exp = experiment(cli, &mut cfg, paths)?;
    let s = match run_experiment(&exp) {
        Err(Error::Nonconforming(m)) => {
            return Err(Failure::new(1, format!("nonconforming kernel (use --force to run anyway): {m}")))
        }
        r => r?,
    };
    print!("{}", s.table());
    print_trend(&s);
    for n in &s.notes {
        println!("note: {n}");
    }
    let dir = out_dir(cli, &cfg);
    let manifest = Manifest::new(exp.seed, cfg.hash(), &s);
    harness::persist(&s, &manifest, None, &dir)?;
    if !s.valid {
        return Err(Failure::new(3, "blow-up budget exceeded; experiment invalid"));
    }
    if cfg.output.dump_paths {
        let mut runs = vec![simulate_arm(&exp, ArmSpec::Brownian, exp.paths)?];
        for index in 0..exp.model.kernels.len() {
            runs.push(simulate_arm(&exp, ArmSpec::Jump { index }, exp.paths)?);
        }
        for r in &runs {
            write_path_dump(r, &exp.functionals, BufWriter::new(File::create(dir.join(harness::dump_name(r)))?))?;
        }
    }
    Ok(if s.converged() { 0 } else { 1 })
}

fn cmd_tensor_dump(out: Option<&Path>, nmax: usize, dense: bool) -> Outcome {
    if nmax > TENSOR_NMAX {
        return Err(Failure::new(1, format!("nmax = {nmax} too large (at most {TENSOR_NMAX})")));
    }
    let basis = Basis::new(nmax)?;
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut w = BufWriter::new(File::create(p)?);
            basis.write_coupling_csv(&mut w, dense)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            basis.write_coupling_csv(&mut w, dense)?;
            w.flush()?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Check { path } => cmd_check(&cli, path),
        Command::Simulate { path, paths, arm, eps_index } => cmd_simulate(&cli, path, *paths, *arm, *eps_index),
        Command::Converge { path, paths } => cmd_converge(&cli, path, *paths),
        Command::TensorDump { nmax, dense } => cmd_tensor_dump(cli.out.as_deref(), *nmax, *dense),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
