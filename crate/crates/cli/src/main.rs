use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqfn_core::fourier::MultiplierKind;
use sqfn_lab::output::{self, Format};
use sqfn_lab::scenario::SequenceSource;
use sqfn_lab::{run_suite, LabError, Model, Scenario, Status, Suite};

#[derive(Parser)]
#[command(name = "sqfn-lab", version, about = "Run square function and sparse domination experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Grid exponent: signals live on 2^n cells.
    #[arg(long, global = true)]
    n: Option<u32>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report path; tables and a gnuplot script are written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// JSON scenario; command line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random instances per suite.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Args, Default)]
struct OmegaArgs {
    /// Frequency intervals, e.g. "0:8,12:20".
    #[arg(long)]
    omega: Option<String>,
    /// JSON file with [[lo, hi], ...].
    #[arg(long)]
    omega_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Walsh identities, Bessel, layer-cake and operator norm suites.
    Walsh {
        #[command(flatten)]
        omega: OmegaArgs,
        /// Weight as kind:param, e.g. power:0.5.
        #[arg(long)]
        weight: Option<String>,
    },
    /// DFT model: projections, multiplier class, intrinsic coefficients.
    Fourier {
        #[command(flatten)]
        omega: OmegaArgs,
        #[arg(long)]
        multiplier: Option<MultiplierKind>,
    },
    /// Stopping-time sparse families.
    Sparse {
        #[command(subcommand)]
        action: SparseAction,
    },
    /// Good-lambda decay tables.
    Goodlambda {
        #[arg(long)]
        weight: Option<String>,
    },
    /// Muckenhoupt characteristics.
    Weights {
        #[arg(long)]
        weight: Option<String>,
    },
    /// Radial weight sufficient condition.
    Radial {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Pointwise domination in the Walsh and DFT models.
    Domination {
        #[command(flatten)]
        omega: OmegaArgs,
    },
    /// Every suite.
    All,
    /// The suites listed in the config file.
    Run,
}

#[derive(Subcommand)]
enum SparseAction {
    /// Build a family from one Carleson sequence and emit its certificate.
    Build {
        /// walsh-coeffs, fourier-coeffs, random, chain or mixed.
        #[arg(long, default_value = "walsh-coeffs")]
        from: SequenceSource,
    },
}

fn apply_omega(sc: &mut Scenario, o: OmegaArgs) {
    if o.omega.is_some() || o.omega_file.is_some() {
        sc.omega = o.omega;
        sc.omega_file = o.omega_file;
    }
}

fn scenario(cli: Cli) -> Result<(Scenario, Global), LabError> {
    let g = cli.global;
    let mut sc = match &g.config {
        Some(path) => Scenario::from_json(&std::fs::read_to_string(path)?)?,
        None => Scenario::default(),
    };
    if let Some(n) = g.n {
        sc.n = n;
    }
    if let Some(seed) = g.seed {
        sc.seed = seed;
    }
    if g.samples.is_some() {
        sc.samples = g.samples;
    }
    match cli.command {
        Command::Walsh { omega, weight } => {
            sc.model = Model::Walsh;
            apply_omega(&mut sc, omega);
            sc.weight = weight.or(sc.weight);
            sc.suites = vec![Suite::Identities, Suite::Bessel, Suite::LayerCake, Suite::OperatorNorm];
        }
        Command::Fourier { omega, multiplier } => {
            sc.model = Model::Fourier;
            apply_omega(&mut sc, omega);
            if let Some(m) = multiplier {
                sc.multiplier = m;
            }
            sc.suites = vec![Suite::Fourier];
        }
        Command::Sparse {
            action: SparseAction::Build { from },
        } => {
            sc.source = from;
            if from == SequenceSource::FourierCoeffs {
                sc.model = Model::Fourier;
            }
            sc.samples = sc.samples.or(Some(1));
            sc.suites = vec![Suite::Stopping];
        }
        Command::Goodlambda { weight } => {
            sc.weight = weight.or(sc.weight);
            sc.suites = vec![Suite::GoodLambda];
        }
        Command::Weights { weight } => {
            sc.weight = weight.or(sc.weight);
            sc.suites = vec![Suite::Weights];
        }
        Command::Radial { alpha, points } => {
            sc.alpha = alpha.or(sc.alpha);
            if let Some(p) = points {
                sc.points = p;
            }
            sc.suites = vec![Suite::Radial];
        }
        Command::Domination { omega } => {
            apply_omega(&mut sc, omega);
            sc.suites = vec![Suite::Domination];
        }
        Command::All => sc.suites = Suite::ALL.to_vec(),
        Command::Run => {}
    }
    Ok((sc, g))
}

fn run(cli: Cli) -> Result<bool, LabError> {
    let (sc, g) = scenario(cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads)
        .build_global()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let report = run_suite(&sc)?;
    match &g.out {
        Some(path) => {
            for file in output::write_all(&report, path, g.format)? {
                eprintln!("wrote {}", file.display());
            }
        }
        None => match g.format {
            Format::Json => print!("{}", output::to_json(&report)?),
            Format::Csv => print!("{}", output::results_csv(&report)?),
        },
    }
    for r in &report.results {
        let tag = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => continue,
        };
        eprintln!("{tag} {}/{} = {:e}", r.suite, r.check, r.value);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
