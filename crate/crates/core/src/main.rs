use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fscid_core::cluster::CidMode;
use fscid_core::config::{validate_config, RunConfig};
use fscid_core::decompose::{SeasonalWindow, StlParams};
use fscid_core::pipeline::{
    analyze_variable, clustering_json, components_csv, decompose_all, fs_points_for, prepare_series, resolve_workers, run_pipeline, standardized,
    AnalysisOptions, WORKERS_ENV,
};
use fscid_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fscid", version, about = "Fisher-Shannon analysis and CID clustering of multi-station time series")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a config file.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Check a config file and print the resolved settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print Fisher-Shannon points (JSON) for every series in a CSV.
    Fsplane(SingleInput),
    /// Cluster the series of one CSV and print the result (JSON).
    Cluster {
        #[command(flatten)]
        input: SingleInput,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long)]
        lenient: bool,
    },
    /// Write trend/seasonal/remainder for one series as CSV.
    Decompose {
        #[command(flatten)]
        input: SingleInput,
        /// Series (column) to decompose.
        #[arg(long)]
        series: String,
        /// Output file; stdout if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SingleInput {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 24)]
    period: usize,
    /// Seasonal window: odd integer or "periodic".
    #[arg(long, default_value = "periodic")]
    seasonal_window: String,
    #[arg(long, default_value_t = 6)]
    max_gap: usize,
    #[arg(long, default_value_t = fscid_core::density::DEFAULT_GRID_POINTS)]
    grid_points: usize,
    #[arg(long)]
    standardize: bool,
    /// Columns are already remainders; skip STL.
    #[arg(long)]
    raw: bool,
}

impl SingleInput {
    fn stl(&self) -> Result<StlParams> {
        let mut p = StlParams::for_period(self.period);
        p.seasonal_window = if self.seasonal_window.eq_ignore_ascii_case("periodic") {
            SeasonalWindow::PERIODIC
        } else {
            let s = self.seasonal_window.parse().map_err(|_| {
                Error::InvalidParameter(format!("seasonal window `{}`", self.seasonal_window))
            })?;
            SeasonalWindow::Span(s)
        };
        p.validate()?;
        Ok(p)
    }

    fn options(&self) -> Result<AnalysisOptions> {
        Ok(AnalysisOptions {
            stl: self.stl()?,
            grid_points: self.grid_points,
            standardize: self.standardize,
            k_min: 2,
            k_max: 10,
            seed: 0,
            restarts: 20,
            cid_mode: CidMode::Strict,
            decompose: !self.raw,
        })
    }

    fn name(&self) -> String {
        self.input
            .file_stem()
            .map_or_else(|| "input".to_owned(), |s| s.to_string_lossy().into_owned())
    }
}

fn print(s: &str) -> Result<()> {
    io::stdout()
        .write_all(s.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Command::Analyze { config, output, workers } => {
            let mut cfg = validate_config(&config)?;
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            cfg.workers = workers.unwrap_or_else(|| resolve_workers(cfg.workers));
            let summary = run_pipeline(&cfg)?;
            for v in &summary.variables {
                match &v.error {
                    None => eprintln!(
                        "{}: {} series, k = {}",
                        v.name,
                        v.series.len(),
                        v.chosen_k.map_or_else(|| "-".to_owned(), |k| k.to_string())
                    ),
                    Some(e) => eprintln!("{}: {}: {}", v.name, e.kind, e.message),
                }
            }
            eprintln!("manifest: {}", summary.manifest.display());
            Ok(if summary.success() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Validate { config } => {
            let cfg: RunConfig = validate_config(&config)?;
            print(&(serde_json::to_string_pretty(&cfg)? + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fsplane(input) => {
            let opts = input.options()?;
            let prepared = prepare_series(&input.input, input.max_gap)?;
            let ids: Vec<String> = prepared.series.iter().map(|s| s.id().to_owned()).collect();
            let samples: Vec<Vec<f64>> = if opts.decompose {
                decompose_all(&prepared.series, &opts.stl)?
                    .into_iter()
                    .map(|d| d.remainder)
                    .collect()
            } else {
                prepared.series.iter().map(|s| s.values().to_vec()).collect()
            };
            let samples = if input.standardize {
                samples.iter().map(|s| standardized(s)).collect()
            } else {
                samples
            };
            let pts = fs_points_for(&ids, &samples, opts.grid_points)?;
            print(&(serde_json::to_string_pretty(&pts)? + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Cluster { input, k_min, k_max, seed, restarts, lenient } => {
            let mut opts = input.options()?;
            opts.k_min = k_min;
            opts.k_max = k_max;
            opts.seed = seed;
            opts.restarts = restarts;
            opts.cid_mode = if lenient { CidMode::Lenient } else { CidMode::Strict };
            let name = input.name();
            let a = analyze_variable(&name, &input.input, input.max_gap, &opts)?;
            let ids: Vec<String> = a.series.iter().map(|s| s.id().to_owned()).collect();
            match &a.selection {
                Some(sel) => print(&clustering_json(&name, &ids, sel, seed, restarts)?)?,
                None => {
                    for n in &a.notes {
                        eprintln!("{n}");
                    }
                    return Ok(ExitCode::from(1));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Decompose { input, series, output } => {
            let stl = input.stl()?;
            let prepared = prepare_series(&input.input, input.max_gap)?;
            let ts = prepared
                .series
                .iter()
                .find(|s| s.id() == series)
                .ok_or_else(|| Error::InvalidParameter(format!("no usable series `{series}`")))?;
            let d = fscid_core::stl_decompose(ts, &stl)?;
            match output {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                    components_csv(ts, &d, f)?;
                }
                None => components_csv(ts, &d, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config { .. }) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
