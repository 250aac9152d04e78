//! `atomsqueeze` command-line frontend.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod report;

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atomsqueeze::bragg::{calibrate_adapted_mirror, calibrate_beam_splitter, BraggError, PulseCalibration};
use atomsqueeze::optimize::{gain_db, Blocks, Engine, Evaluation, OptimizeError};
use atomsqueeze::search::linspace;
use atomsqueeze::spin_io::SpinMoments;
use atomsqueeze::{oracle, states};
use clap::{Parser, Subcommand, ValueEnum};

use config::{validate_widths, RunConfig};
use report::num;

#[derive(Parser, Debug)]
#[command(name = "atomsqueeze", version, about = "Squeezed-input Bragg Mach-Zehnder sensitivity engine")]
struct Cli {
    /// TOML run configuration; absent keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `workers`; 0 = automatic).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Random seed of the verification trials (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate a beam splitter or the adapted mirror and report it at q = 0.
    Calibrate {
        #[arg(long, value_enum)]
        pulse: PulseArg,
        /// Peak Rabi frequency of the beam splitter (ω_r).
        #[arg(long)]
        rabi: Option<f64>,
        /// Use this mirror pulse verbatim: `--bypass omega=X tau=Y`.
        #[arg(long, num_args = 2, value_names = ["omega=X", "tau=Y"])]
        bypass: Option<Vec<String>>,
    },
    /// Twisted-state moments, or the ξ(μ) curve when neither --mu nor --xi is given.
    Moments {
        #[arg(long)]
        n: Option<u32>,
        #[arg(long, conflicts_with = "xi")]
        mu: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
    },
    /// Phase sensitivity at one working point; optimizes the twist unless --mu or --xi is given.
    Sensitivity {
        #[arg(long)]
        rabi: Option<f64>,
        /// Momentum width (ħk); omit for the single-node q = 0 packet.
        #[arg(long)]
        dp: Option<f64>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long, conflicts_with = "xi")]
        mu: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        /// Ideal lossless blocks instead of Bragg pulses.
        #[arg(long)]
        ideal_blocks: bool,
    },
    /// Optimized sensitivity on the Ω₀ grid for every momentum width.
    SweepRabi {
        /// Replaces `sweep.omega0`.
        #[arg(long, value_delimiter = ',')]
        rabi: Option<Vec<f64>>,
        /// Replaces `sweep.dp`.
        #[arg(long, value_delimiter = ',')]
        dp: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<u32>,
    },
    /// Ω₀-optimized sensitivity versus atom number, with the ideal bound.
    SweepN {
        /// Replaces `sweep.n_list`.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        dp: Option<Vec<f64>>,
        /// Replaces the Ω₀ bracketing grid `sweep.omega0`.
        #[arg(long, value_delimiter = ',')]
        rabi: Option<Vec<f64>>,
    },
    /// Oracle and invariant suite.
    Verify {
        /// Self-test: flip the sign of the noise term in the closed form.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PulseArg {
    Bs,
    Mirror,
}

/// Failure with its process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(msg: impl Display) -> Self {
        Self { code: 1, message: msg.to_string() }
    }

    fn calibration(msg: impl Display) -> Self {
        Self { code: 2, message: format!("calibration failed: {msg}") }
    }

    fn verification(msg: impl Display) -> Self {
        Self { code: 3, message: msg.to_string() }
    }
}

impl From<OptimizeError> for Failure {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Bragg(b) => Failure::calibration(b),
            other => Failure::config(other),
        }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("output: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::config(format!("output: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| Failure::config(format!("worker pool: {e}")))?;

    match cli.command {
        Command::Calibrate { pulse, rabi, bypass } => cmd_calibrate(cfg, pulse, rabi, bypass),
        Command::Moments { n, mu, xi } => {
            if let Some(n) = n {
                cfg.sweep.n_atoms = n;
            }
            cfg.validate()?;
            cmd_moments(&cfg, mu, xi)
        }
        Command::Sensitivity { rabi, dp, n, mu, xi, ideal_blocks } => {
            if let Some(n) = n {
                cfg.sweep.n_atoms = n;
            }
            cfg.validate()?;
            cmd_sensitivity(&cfg, rabi, dp, mu, xi, ideal_blocks)
        }
        Command::SweepRabi { rabi, dp, n } => {
            if let Some(r) = rabi {
                cfg.sweep.omega0 = r;
            }
            if let Some(d) = dp {
                cfg.sweep.dp = d;
            }
            if let Some(n) = n {
                cfg.sweep.n_atoms = n;
            }
            cfg.validate()?;
            cmd_sweep_rabi(&cfg)
        }
        Command::SweepN { n, dp, rabi } => {
            if let Some(n) = n {
                cfg.sweep.n_list = n;
            }
            if let Some(d) = dp {
                cfg.sweep.dp = d;
            }
            if let Some(r) = rabi {
                cfg.sweep.omega0 = r;
            }
            cfg.validate()?;
            cmd_sweep_n(&cfg)
        }
        Command::Verify { inject_fault } => {
            cfg.validate()?;
            cmd_verify(&cfg, inject_fault)
        }
    }
}

fn engine(cfg: &RunConfig, blocks: Blocks) -> Engine {
    Engine::new(cfg.solver, cfg.beam_splitter, cfg.mirror, cfg.quadrature, cfg.optimizer, blocks)
}

fn print_pairs<K: Display, V: Display>(pairs: impl IntoIterator<Item = (K, V)>) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
}

fn parse_bypass(args: &[String]) -> Result<(f64, f64), Failure> {
    let (mut omega, mut tau) = (None, None);
    for a in args {
        let (key, value) = a
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("--bypass expects key=value, got {a:?}")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::config(format!("--bypass {key}: not a number: {value:?}")))?;
        match key.trim() {
            "omega" => omega = Some(v),
            "tau" => tau = Some(v),
            other => return Err(Failure::config(format!("--bypass: unknown key {other:?}"))),
        }
    }
    match (omega, tau) {
        (Some(o), Some(t)) => Ok((o, t)),
        _ => Err(Failure::config("--bypass needs both omega=X and tau=Y")),
    }
}

fn cmd_calibrate(mut cfg: RunConfig, pulse: PulseArg, rabi: Option<f64>, bypass: Option<Vec<String>>) -> Outcome {
    cfg.solver.validate().map_err(|e| Failure::config(format!("solver: {e}")))?;
    let cal: PulseCalibration = match pulse {
        PulseArg::Bs => {
            if bypass.is_some() {
                return Err(Failure::config("--bypass applies to --pulse mirror only"));
            }
            let rabi = rabi.ok_or_else(|| Failure::config("--pulse bs needs --rabi"))?;
            calibrate_beam_splitter(rabi, &cfg.solver, &cfg.beam_splitter).map_err(calibration_failure)?
        }
        PulseArg::Mirror => {
            if let Some(args) = bypass {
                cfg.mirror.bypass = Some(parse_bypass(&args)?);
            }
            calibrate_adapted_mirror(&cfg.mirror, &cfg.solver).map_err(calibration_failure)?
        }
    };
    print_pairs(cal.to_records());
    Ok(())
}

fn calibration_failure(e: BraggError) -> Failure {
    Failure::calibration(e)
}

fn moments_pairs(m: &SpinMoments) -> Vec<(String, String)> {
    let mut v = Vec::new();
    for a in 0..4 {
        v.push((format!("p{a}"), num(m.polarization[a])));
    }
    for a in 0..4 {
        for b in a..4 {
            v.push((format!("cov{a}{b}"), num(m.covariance[(a, b)])));
        }
    }
    v
}

fn twisted_report(n: u32, mu: f64) -> Result<Vec<(String, String)>, Failure> {
    let raw = states::oat_moments(n, mu);
    let theta = states::optimal_theta(&raw);
    let rotated = states::rotate_about_1(&raw, theta);
    let xi = states::wineland_xi(&rotated).map_err(Failure::config)?;
    let mut v = vec![
        ("n_atoms".into(), n.to_string()),
        ("mu".into(), num(mu)),
        ("theta".into(), num(theta)),
        ("xi".into(), num(xi)),
    ];
    v.extend(moments_pairs(&rotated));
    Ok(v)
}

fn cmd_moments(cfg: &RunConfig, mu: Option<f64>, xi: Option<f64>) -> Outcome {
    let n = cfg.sweep.n_atoms;
    if let Some(mu) = mu {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Failure::config("--mu must be finite and >= 0"));
        }
        print_pairs(twisted_report(n, mu)?);
        return Ok(());
    }
    if let Some(target) = xi {
        let mu = states::xi_to_mu(n, target).map_err(Failure::config)?;
        print_pairs(twisted_report(n, mu)?);
        return Ok(());
    }

    let opt = states::ideal_minimum(n).map_err(Failure::config)?;
    let hi = if opt.twist > 0.0 { cfg.moments.span * opt.twist } else { 1.0 };
    let mut rows = Vec::with_capacity(cfg.moments.points);
    for mu in linspace(0.0, hi, cfg.moments.points) {
        let raw = states::oat_moments(n, mu);
        let theta = states::optimal_theta(&raw);
        let rotated = states::rotate_about_1(&raw, theta);
        let xi = states::wineland_xi(&rotated).map_err(Failure::config)?;
        rows.push(vec![
            num(mu),
            num(xi),
            num(theta),
            num(rotated.polarization[1]),
            num(rotated.covariance[(2, 2)]),
        ]);
    }
    let dir = output_dir(cfg)?;
    let file = "moments.csv";
    report::write_table(
        BufWriter::new(File::create(dir.join(file))?),
        &["mu", "xi", "theta", "mean_j1", "var_j2"],
        rows,
    )?;
    report::write_manifest(&dir, "moments", "moments", &[file], cfg)?;
    print_pairs([
        ("n_atoms", n.to_string()),
        ("mu_opt", num(opt.twist)),
        ("xi_opt", num(opt.xi)),
        ("csv", dir.join(file).display().to_string()),
    ]);
    Ok(())
}

fn cmd_sensitivity(
    cfg: &RunConfig,
    rabi: Option<f64>,
    dp: Option<f64>,
    mu: Option<f64>,
    xi: Option<f64>,
    ideal_blocks: bool,
) -> Outcome {
    if let Some(w) = dp {
        validate_widths(&[w])?;
    }
    let n = cfg.sweep.n_atoms;
    let (e, rabi) = if ideal_blocks {
        (engine(cfg, Blocks::ideal()), rabi.unwrap_or(0.0))
    } else {
        let r = rabi.ok_or_else(|| Failure::config("sensitivity needs --rabi (or --ideal-blocks)"))?;
        (engine(cfg, Blocks::Bragg), r)
    };
    let twist = match (mu, xi) {
        (Some(m), _) => Some(m),
        (None, Some(x)) => Some(states::xi_to_mu(n, x).map_err(Failure::config)?),
        (None, None) => None,
    };
    let (twist, ev): (f64, Evaluation) = match twist {
        Some(m) => (m, e.sensitivity_for(rabi, dp, n, m)?),
        None => {
            let o = e.optimize_squeezing(rabi, dp, n)?;
            (o.twist, o.evaluation)
        }
    };
    let t = e.transport(rabi, dp)?;
    let (s1, s2) = t.survival();
    let gain = ev.dphi * (n as f64).sqrt();
    let xi_in = states::squeezing(n, twist).map_err(Failure::config)?;
    print_pairs([
        ("omega0", num(rabi)),
        ("tau_bs", num(t.tau_bs)),
        ("dp", num(dp.unwrap_or(0.0))),
        ("n_atoms", n.to_string()),
        ("mu", num(twist)),
        ("xi", num(xi_in)),
        ("theta", num(ev.theta)),
        ("dphi", num(ev.dphi)),
        ("gain_sqrtN", num(gain)),
        ("gain_db", num(gain_db(gain))),
        ("survival_1", num(s1)),
        ("survival_2", num(s2)),
        ("slope", num(ev.slope)),
    ]);
    Ok(())
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::config(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_csv_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> csv::Result<()>) -> Outcome {
    let file = File::create(path).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?;
    f(BufWriter::new(file))?;
    Ok(())
}

fn summarize(ok: usize, total: usize, path: &Path) -> Outcome {
    println!("{ok}/{total} points succeeded; wrote {}", path.display());
    if ok == 0 {
        return Err(Failure::calibration("no grid point produced a result (see the error column)"));
    }
    Ok(())
}

fn cmd_sweep_rabi(cfg: &RunConfig) -> Outcome {
    let dir = output_dir(cfg)?;
    let e = engine(cfg, Blocks::Bragg);
    let records = e.sweep_rabi(&cfg.sweep.omega0, &cfg.widths(), cfg.sweep.n_atoms);
    let file = "sweep_rabi.csv";
    let path = dir.join(file);
    write_csv_file(&path, |w| report::sweep_rabi_csv(w, &records))?;
    report::write_manifest(&dir, "sweep_rabi", "sweep-rabi", &[file], cfg)?;
    summarize(records.iter().filter(|r| r.is_ok()).count(), records.len(), &path)
}

fn cmd_sweep_n(cfg: &RunConfig) -> Outcome {
    let dir = output_dir(cfg)?;
    let e = engine(cfg, Blocks::Bragg);
    let records = e.sweep_particles(&cfg.sweep.n_list, &cfg.widths(), &cfg.sweep.omega0);
    let file = "sweep_n.csv";
    let path = dir.join(file);
    write_csv_file(&path, |w| report::sweep_n_csv(w, &records))?;
    report::write_manifest(&dir, "sweep_n", "sweep-n", &[file], cfg)?;
    summarize(records.iter().filter(|r| r.record.is_ok()).count(), records.len(), &path)
}

fn cmd_verify(cfg: &RunConfig, inject_fault: bool) -> Outcome {
    let checks = oracle::verification_suite(cfg.seed, inject_fault).map_err(Failure::verification)?;
    let mut failed = 0;
    println!("seed = {}", cfg.seed);
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status}  {}: worst {:.3e} (tolerance {:.0e})", c.name, c.worst, c.tolerance);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Failure::verification(format!("{failed} of {} checks failed", checks.len())));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
