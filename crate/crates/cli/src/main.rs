//! `mmnn`: segment, train, sweep landscapes, run experiment configs, serve the HTTP API.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mmnn::imageio::{load_image, load_mask, load_points};
use mmnn::landscape::{basin_count, parse_free_pair, parse_range, sweep, upper_weight_refs};
use mmnn::pipeline::{load_network, run_experiment, segment_image, train_network, write_artifacts, ArchSpec, Metrics, PipelineConfig};
use mmnn::{FeatureConfig, Objective, PixelSet};
use mmnn_service::{AppConfig, ObjectiveName, TrainRequest};

#[derive(Debug, Parser)]
#[command(name = "mmnn", version, about = "Multiset-neuron image segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    A,
    Ba,
}

impl From<ObjectiveArg> for ObjectiveName {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::A => ObjectiveName::A,
            ObjectiveArg::Ba => ObjectiveName::Ba,
        }
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(format!("{t} is not in [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not > 0"))
    }
}

fn free_pair(s: &str) -> Result<[usize; 2], String> {
    parse_free_pair(s).map_err(|e| e.to_string())
}

fn range(s: &str) -> Result<(f64, f64), String> {
    parse_range(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment an image with a serialized network.
    Segment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        radius: u32,
        #[arg(long, value_parser = unit_interval)]
        threshold: f64,
        /// Gold mask; adds confusion counts and balanced accuracy.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Build a network from annotated points, train it on the subsampled pair and segment at full resolution.
    Train {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// CSV with columns x,y,role,class.
        #[arg(long)]
        points: PathBuf,
        /// Architecture JSON.
        #[arg(long)]
        arch: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        starts: u64,
        #[arg(long, default_value_t = 30)]
        steps: usize,
        #[arg(long, default_value_t = 0.05, value_parser = positive)]
        stepsize: f64,
        #[arg(long, default_value_t = 0.01, value_parser = positive)]
        fdres: f64,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::A)]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        subsample: u64,
        /// Use the initial weights as the first start.
        #[arg(long)]
        include_current: bool,
        #[arg(long, default_value = "mmnn-train")]
        out_dir: PathBuf,
    },
    /// Sweep two upper-layer weights of a network over a grid.
    Landscape {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        net: PathBuf,
        /// Two flattened upper-layer weight indices, e.g. w0,w1.
        #[arg(long, value_parser = free_pair)]
        free: [usize; 2],
        #[arg(long, value_parser = range, default_value = "-1:1", allow_hyphen_values = true)]
        range: (f64, f64),
        #[arg(long, value_parser = positive, default_value_t = 0.05)]
        res: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        radius: u32,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        subsample: u64,
        #[arg(long, value_parser = unit_interval, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Ba)]
        objective: ObjectiveArg,
    },
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "mmnn-data")]
        data_dir: PathBuf,
        /// Directory of UI assets to serve at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print_metrics(m: &Metrics) {
    print!("{}x{} object pixels {}", m.width, m.height, m.object_pixels);
    if let Some(ba) = m.balanced_accuracy {
        print!(", balanced accuracy {ba:.4}");
    }
    println!(", {:.0} ms", m.diagnostics.elapsed_ms);
    if m.diagnostics.zero_vector_events > 0 {
        println!("zero-vector events {}", m.diagnostics.zero_vector_events);
    }
}

fn report_files(dir: &Path, files: &[PathBuf]) {
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    println!("wrote {} to {}", names.join(", "), dir.display());
}

fn run(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Segment {
            image,
            net,
            radius,
            threshold,
            gold,
            out_dir,
        } => {
            let img = load_image(&image)?;
            let network = load_network(&net)?;
            let mut result = segment_image(&img, &network, &FeatureConfig::new(radius, true), threshold)?;
            if let Some(g) = &gold {
                result.evaluate(&load_mask(g)?)?;
            }
            let metrics = Metrics {
                width: result.width,
                height: result.height,
                threshold,
                object_pixels: result.mask.count(),
                confusion: result.confusion,
                balanced_accuracy: result.balanced_accuracy,
                training_objective: None,
                winning_start: None,
                diagnostics: result.diagnostics,
            };
            print_metrics(&metrics);
            if let Some(dir) = out_dir {
                let files = write_artifacts(&dir, &result, &network, &[], &metrics)?;
                report_files(&dir, &files);
            }
        }
        Command::Train {
            image,
            gold,
            points,
            arch,
            seed,
            starts,
            steps,
            stepsize,
            fdres,
            objective,
            subsample,
            include_current,
            out_dir,
        } => {
            let req = TrainRequest {
                arch: Some(ArchSpec::load(&arch)?),
                subsample: subsample as usize,
                seed,
                starts: starts as usize,
                steps,
                stepsize,
                fdres,
                objective: objective.into(),
                include_current,
                ..TrainRequest::default()
            };
            let arch = req.arch()?;
            let cfg = req.train_config(&arch)?;
            let img = load_image(&image)?;
            let gold = load_mask(&gold)?;
            let points = load_points(&points)?;
            let trained = train_network(&img, &gold, &points, &arch, &cfg, req.subsample)?;
            let mut result = segment_image(&img, &trained.network, &arch.features, arch.threshold)?;
            result.evaluate(&gold)?;
            let metrics = Metrics {
                width: result.width,
                height: result.height,
                threshold: arch.threshold,
                object_pixels: result.mask.count(),
                confusion: result.confusion,
                balanced_accuracy: result.balanced_accuracy,
                training_objective: Some(trained.best_objective),
                winning_start: Some(trained.winner),
                diagnostics: result.diagnostics,
            };
            println!(
                "start {} won with objective {:.6} after {} steps",
                trained.winner,
                trained.best_objective,
                trained.trajectories[trained.winner].len() - 1
            );
            print_metrics(&metrics);
            let files = write_artifacts(&out_dir, &result, &trained.network, &trained.trajectories, &metrics)?;
            report_files(&out_dir, &files);
        }
        Command::Landscape {
            image,
            gold,
            net,
            free,
            range,
            res,
            out,
            radius,
            subsample,
            threshold,
            objective,
        } => {
            let network = load_network(&net)?;
            let refs = upper_weight_refs(&network, free)?;
            let img = load_image(&image)?.subsample(subsample as usize)?;
            let gold = load_mask(&gold)?.subsample(subsample as usize)?;
            let pixels = PixelSet::from_image(&img, Some(&gold), &FeatureConfig::new(radius, true))?;
            let objective = match objective {
                ObjectiveArg::A => Objective::ObjectiveA,
                ObjectiveArg::Ba => Objective::BalancedAccuracy { threshold },
            };
            let grid = sweep(&network, &pixels, refs, [range, range], res, &objective)?;
            std::fs::write(&out, grid.to_csv())?;
            let (x, y) = grid.argmax_point();
            println!(
                "{}x{} grid, max {:.4} at (w{}={x:.3}, w{}={y:.3}), {} basin(s), {} flagged cell(s)",
                grid.nx,
                grid.ny,
                grid.max_value(),
                free[0],
                free[1],
                basin_count(&grid),
                grid.flagged.iter().filter(|&&f| f).count()
            );
            println!("wrote {}", out.display());
        }
        Command::Run { config } => {
            if !config.exists() {
                return Err(mmnn::Error::FileNotFound(config).into());
            }
            let cfg = PipelineConfig::from_json(&std::fs::read_to_string(&config)?)?;
            let out = run_experiment(&cfg)?;
            print_metrics(&out.metrics);
            if let Some(dir) = &cfg.out_dir {
                report_files(dir, &out.files);
            }
        }
        Command::Serve {
            port,
            data_dir,
            static_dir,
            host,
        } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(mmnn_service::serve(
                SocketAddr::new(host, port),
                AppConfig { data_dir, static_dir },
            ))?;
        }
    }
    Ok(())
}
