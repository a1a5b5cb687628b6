use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use supercrit::diagnostics::{run_diagnostics_dir, DiagnosticsConfig};
use supercrit::nse_sim::{self, SimConfig};
use supercrit::sequences::{certify_b_bound, certify_b_sum_averaging, certify_sparse_set};
use supercrit::shell_profile::{random_profiles, verify_smallness, SmallnessCertificate, DEFAULT_EXTRA_LEVELS};
use supercrit::{Error, Result, ShellProfile};

#[derive(Parser)]
#[command(name = "supercrit", version, about = "Sparse-weight shell calculus and Navier-Stokes energy diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the averaged weight bound, the sparse-set count and the b-sum averaging
    CertifySequences(CertifyArgs),
    /// Check X1 smallness of rescaled shell profiles
    VerifyScaling(ScalingArgs),
    /// Integrate the periodic Navier-Stokes system from a JSON config
    Simulate(SimulateArgs),
    /// Evaluate the shell inequalities on a directory of snapshots
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, default_value_t = 1 << 20)]
    jmax: i64,
    #[arg(long, default_value_t = 1_000_000)]
    nmax: i64,
    #[arg(long, default_value_t = 100_000)]
    sum_nmax: i64,
    /// Report directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScalingArgs {
    /// Profile file, one `j<TAB>sigma` line per shell
    #[arg(long, conflicts_with_all = ["random", "seed"])]
    profile: Option<PathBuf>,
    /// Number of seeded random profiles
    #[arg(long, requires = "seed")]
    random: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_EXTRA_LEVELS)]
    extra_levels: u32,
    /// Report file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    snapshots: PathBuf,
    /// Largest shell radius; defaults to the dealiasing radius
    #[arg(long)]
    kmax: Option<u32>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn certify_sequences(args: &CertifyArgs) -> Result<bool> {
    let b = certify_b_bound(args.jmax)?;
    let s = certify_sparse_set(args.nmax)?;
    let avg = certify_b_sum_averaging(args.sum_nmax)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("b_bound.json"), &b)?;
    write_json(&args.out.join("sparse_set.json"), &s)?;
    write_json(&args.out.join("b_sum_averaging.json"), &avg)?;
    eprintln!(
        "b-bound      j <= {:>8}: {} ({} violations, max ratio {:.6} at j = {})",
        args.jmax,
        verdict(b.passed()),
        b.violation_count,
        b.max_ratio,
        b.argmax_ratio
    );
    eprintln!(
        "sparse-set   n <= {:>8}: {} (|S(n)| = {}, max ratio {:.6} at n = {})",
        args.nmax,
        verdict(s.passed()),
        s.final_value,
        s.max_ratio,
        s.argmax_ratio
    );
    match avg.n0 {
        Some(n0) => eprintln!("b-sum        n <= {:>8}: pass (n0 = {n0})", args.sum_nmax),
        None => eprintln!(
            "b-sum        n <= {:>8}: FAIL (sums exceed 3n on [{}, {}])",
            args.sum_nmax,
            avg.first_violation.unwrap_or(0),
            avg.last_violation.unwrap_or(0)
        ),
    }
    Ok(b.passed() && s.passed() && avg.passed())
}

#[derive(Serialize)]
struct ScalingReport {
    epsilon: f64,
    extra_levels: u32,
    source: String,
    certificates: Vec<SmallnessCertificate>,
}

fn verify_scaling(args: &ScalingArgs) -> Result<bool> {
    if !(args.epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", args.epsilon)));
    }
    let (source, profiles) = match (&args.profile, args.random, args.seed) {
        (Some(path), _, _) => (path.display().to_string(), vec![ShellProfile::read(path)?]),
        (None, Some(count), Some(seed)) => (
            format!("random count={count} seed={seed}"),
            random_profiles(seed, count, args.epsilon),
        ),
        _ => {
            return Err(Error::InvalidInput(
                "give either --profile PATH or --random COUNT --seed S".into(),
            ))
        }
    };
    let certificates = profiles
        .iter()
        .map(|p| verify_smallness(p, args.epsilon, args.extra_levels))
        .collect::<Result<Vec<_>>>()?;
    let passed = certificates.iter().filter(|c| c.pass).count();
    let report = ScalingReport {
        epsilon: args.epsilon,
        extra_levels: args.extra_levels,
        source,
        certificates,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    eprintln!("{passed}/{} profiles certified at epsilon = {}", report.certificates.len(), args.epsilon);
    Ok(passed == report.certificates.len())
}

fn simulate(args: &SimulateArgs) -> Result<bool> {
    let config = SimConfig::read(&args.config)?;
    let out = match (&args.out, &config.out_dir) {
        (Some(dir), _) | (None, Some(dir)) => dir.clone(),
        (None, None) => {
            return Err(Error::InvalidInput(
                "no output directory: set out_dir in the config or pass --out".into(),
            ))
        }
    };
    match nse_sim::run(&config, &out) {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            let first = &summary.energy_history[0];
            eprintln!(
                "{} steps to t = {}: energy {:.6e} -> {:.6e}, residual {:.3e}, {} snapshots in {}",
                summary.steps,
                summary.final_time,
                first.energy,
                summary.energy_history.last().unwrap().energy,
                summary.energy_residual,
                summary.snapshot_files.len(),
                out.display()
            );
            Ok(true)
        }
        Err(Error::BlowUp { time, reason }) => {
            #[derive(Serialize)]
            struct BlowUp<'a> {
                time: f64,
                reason: &'a str,
            }
            fs::create_dir_all(&out)?;
            write_json(&out.join("blowup.json"), &BlowUp { time, reason: &reason })?;
            eprintln!("simulation blew up at t = {time}: {reason}");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

fn diagnose(args: &DiagnoseArgs) -> Result<bool> {
    let mut config = match args.kmax {
        Some(0) => return Err(Error::InvalidInput("--kmax must be at least 1".into())),
        Some(k) => DiagnosticsConfig::with_kmax(k),
        None => DiagnosticsConfig::default(),
    };
    config.epsilon = args.epsilon;
    let run = run_diagnostics_dir(&args.snapshots, &config)?;
    fs::create_dir_all(&args.out)?;
    run.write_csv(fs::File::create(args.out.join("records.csv"))?)?;
    fs::write(args.out.join("constants.json"), run.constants_json()?)?;
    write_json(&args.out.join("certificate.json"), &run.certificate)?;
    write_json(&args.out.join("errors.json"), &run.errors)?;

    let failed = run.failed_records().count();
    eprintln!(
        "{} snapshots, {} records, {failed} failed, {} unreadable",
        run.snapshots,
        run.records.len(),
        run.errors.len()
    );
    for r in run.failed_records().take(10) {
        eprintln!("  FAIL t = {} k = {} {}: {:e} > {:e}", r.t, r.k, r.equation, r.lhs, r.rhs);
    }
    for c in &run.constants {
        eprintln!("  {:<11} {:.6e}", c.name, c.value);
    }
    if let Some(cert) = &run.certificate {
        eprintln!(
            "  uniform smallness: M = {}, l0 = {}, {}",
            cert.tail_cutoff,
            cert.l0,
            verdict(cert.pass)
        );
    }
    Ok(run.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::CertifySequences(a) => certify_sequences(a),
        Command::VerifyScaling(a) => verify_scaling(a),
        Command::Simulate(a) => simulate(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
