use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spectral_vmamba::cli::{
    self, cmd_bench, cmd_check_invariance, cmd_eig, cmd_traverse, exit_code, ImageInputs, MatrixSource, Overrides,
    EXIT_USAGE,
};
use spectral_vmamba::config::MergeMode;
use spectral_vmamba::ssm::ZohMode;
use spectral_vmamba::{Error, Result};

#[derive(Parser)]
#[command(name = "svmamba", version, about = "Spectral traversal tools: dumps, invariance checks, eigensolver validation, benchmarks")]
struct Opts {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Model config (key=value lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input image (binary PPM); a seeded fixture is used when omitted
    #[arg(long, global = true)]
    image: Option<PathBuf>,
    /// Output prefix; the report is also written to <out>.report.txt
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Seed for synthesized inputs and random relabelings
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    parallel: bool,
    /// concat_proj | sum | mean
    #[arg(long, global = true)]
    merge: Option<MergeMode>,
    /// approx | exact
    #[arg(long, global = true)]
    zoh: Option<ZohMode>,
    /// SVW1 weight file; seeded weights are generated when omitted
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the plan dump and one rank-map PPM per traversal order
    Traverse,
    /// Verify rotation and relabeling invariance
    CheckInvariance,
    /// Compare Lanczos against the dense oracle
    Eig {
        /// Matrix as `i j value` triplet lines
        #[arg(long, conflicts_with = "fixture")]
        matrix: Option<PathBuf>,
        /// p3, path:<n>, grid:<r>x<c>, diag:<n>, two-component:<a>,<b>, knn:<n>,<k>,<seed>, two-cluster:<n>,<k>,<seed>
        #[arg(long)]
        fixture: Option<String>,
    },
    /// Sweep token counts and measure traversal construction
    Bench,
}

fn run(opts: &Opts) -> Result<cli::RunReport> {
    let c = &opts.common;
    let overrides = Overrides { m: c.m, k: c.k, merge: c.merge, zoh: c.zoh, parallel: c.parallel };
    let config = cli::load_config(c.config.as_deref(), &overrides)?;
    let inputs = ImageInputs { config, image: c.image.clone(), weights: c.weights.clone(), seed: c.seed };
    match &opts.command {
        Command::Traverse => cmd_traverse(&inputs, c.out.as_deref().unwrap_or("traverse".as_ref())),
        Command::CheckInvariance => cmd_check_invariance(&inputs),
        Command::Eig { matrix, fixture } => {
            let source = match (matrix, fixture) {
                (Some(p), None) => MatrixSource::File(p.clone()),
                (None, Some(f)) => MatrixSource::Fixture(f.clone()),
                _ => return Err(Error::Argument("eig needs --matrix or --fixture".into())),
            };
            cmd_eig(&source, c.m.unwrap_or(inputs.config.m))
        }
        Command::Bench => cmd_bench(&inputs.config, c.seed),
    }
}

fn main() -> ExitCode {
    let opts = match Opts::try_parse() {
        Ok(o) => o,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let outcome = run(&opts);
    match &outcome {
        Ok(report) => {
            let text = report.to_text();
            print!("{text}");
            if let Some(out) = &opts.common.out {
                let mut path = out.as_os_str().to_owned();
                path.push(".report.txt");
                if let Err(e) = std::fs::write(&path, &text) {
                    eprintln!("error: writing {}: {e}", PathBuf::from(path).display());
                    return ExitCode::from(EXIT_USAGE as u8);
                }
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&outcome) as u8)
}
