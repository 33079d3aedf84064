use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use hatlab::{run_experiment, Experiment, ExperimentConfig, Format, LabError, Params};

#[derive(Parser, Debug)]
#[command(
    name = "hatlab",
    version,
    about = "Experiments for harmonic activation and transport"
)]
struct Cli {
    /// simulate, collapse-scaling, stationary-tail, diffusivity, spiral-sweep, audit-bounds, kernel-table or hm
    experiment: Experiment,
    /// TOML file with experiment settings; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to HATLAB_THREADS)
    #[arg(long, env = "HATLAB_THREADS")]
    threads: Option<usize>,
    /// Output path prefix
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    params: Overrides,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// line, pair:D, spread:D or a site file
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    /// Comma separated initial diameters
    #[arg(long, value_delimiter = ',')]
    d_list: Option<Vec<i64>>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    r_stop: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    radius: Option<usize>,
}

impl From<Overrides> for Params {
    fn from(o: Overrides) -> Params {
        Params {
            init: o.init,
            steps: o.steps,
            thin: o.thin,
            d_list: o.d_list,
            replicas: o.replicas,
            r_stop: o.r_stop,
            max_steps: o.max_steps,
            threshold: o.threshold,
            delta: o.delta,
            burn_in: o.burn_in,
            bootstrap: o.bootstrap,
            n_list: o.n_list,
            samples: o.samples,
            radius: o.radius,
        }
    }
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.experiment != cli.experiment {
                return Err(LabError::Schema(format!(
                    "config file is for {} but {} was requested",
                    cfg.experiment, cli.experiment
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(cli.experiment),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output = o;
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Some(n) = cli.n {
        cfg.n = n;
    }
    cfg.params.merge(cli.params.into());
    Ok(cfg)
}

fn main() -> ExitCode {
    // usage errors exit 1; clap's own code 2 is reserved for failed checks
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = build_config(cli).and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for c in &outcome.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
