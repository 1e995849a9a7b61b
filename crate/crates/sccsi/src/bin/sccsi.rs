//! Thin command-line front end over the library: `train`, `sweep`, and
//! `baseline`. Everything it does is one call into `sccsi::harness`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use sccsi::datagen::{frame_rng, gen_dataset, walsh_matrix};
use sccsi::error::{Error, Result};
use sccsi::harness::plot::{write_svg, PlotMetric};
use sccsi::harness::{
    append_rows, evaluate_point, load_model, point_seed, save_model, sweep, ExperimentConfig,
    MetricsRow, ReceiverKind,
};
use sccsi::link::{snr_to_sigma2, LinkConfig};
use sccsi::unfolded::{train_subnet_by_subnet, StageData, UnfoldedModel};

#[derive(Parser)]
#[command(
    name = "sccsi",
    version,
    about = "Superimposed-coding CSI feedback: unfolded-receiver training, NMSE/BER sweeps, and the iterative MMSE baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the four-subnet receiver per the JSON config and write a checkpoint.
    Train {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint (and optionally the baseline) over an (SNR, rho) grid.
    Sweep {
        /// Trained checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// SNR grid in dB: "start:step:stop" or a comma list ("0:2:14", "0,5,10").
        #[arg(long)]
        snr: String,
        /// Comma-separated test power-split values.
        #[arg(long)]
        rho: String,
        /// Metrics CSV output (appended; header written when new).
        #[arg(long)]
        out: PathBuf,
        /// Optional experiment config supplying the evaluation budgets.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Baseline iteration count.
        #[arg(long, default_value_t = 3)]
        iters: usize,
        /// Receivers to run.
        #[arg(long, default_value = "both", value_parser = ["both", "baseline", "unfolded"])]
        method: String,
        /// Frame budget per point (overrides config).
        #[arg(long)]
        max_samples: Option<usize>,
        /// Early-stop error floor above the SNR threshold (overrides config).
        #[arg(long)]
        min_bit_errors: Option<u64>,
        /// High-SNR stopping threshold in dB (overrides config).
        #[arg(long)]
        high_snr_threshold: Option<f64>,
        /// Overrides the seed every per-point stream derives from.
        #[arg(long)]
        seed: Option<u64>,
        /// Also render <prefix>_nmse.svg and <prefix>_ber.svg.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run the iterative MMSE receiver alone and print NMSE/BER.
    Baseline {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Receiver iterations.
        #[arg(long, default_value_t = 3)]
        iters: usize,
        /// Operating SNR in dB.
        #[arg(long)]
        snr: f64,
        /// Monte-Carlo frame count.
        #[arg(long)]
        frames: usize,
        /// Overrides the config power split.
        #[arg(long)]
        rho: Option<f64>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, seed } => cmd_train(&config, &out, seed),
        Command::Sweep {
            model,
            snr,
            rho,
            out,
            config,
            iters,
            method,
            max_samples,
            min_bit_errors,
            high_snr_threshold,
            seed,
            svg,
        } => cmd_sweep(SweepArgs {
            model,
            snr,
            rho,
            out,
            config,
            iters,
            method,
            max_samples,
            min_bit_errors,
            high_snr_threshold,
            seed,
            svg,
        }),
        Command::Baseline { config, iters, snr, frames, rho, seed } => {
            cmd_baseline(&config, iters, snr, frames, rho, seed)
        }
    }
}

fn cmd_train(config: &PathBuf, out: &PathBuf, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let link = cfg.link_config(cfg.train.snr_db)?;
    let p = walsh_matrix(link.m_frame, link.n_bs)?;
    let hyper = cfg.hyper();

    println!(
        "training: N={}, M={}, rho={}, snr={} dB, {} samples, batch {}, {} iters/subnet, lr {}",
        link.n_bs,
        link.m_frame,
        link.rho,
        cfg.train.snr_db,
        cfg.train.samples,
        hyper.batch_size,
        hyper.max_iters,
        hyper.lr
    );
    let t0 = Instant::now();
    let dataset = gen_dataset(cfg.train.samples, &link, cfg.train.snr_db, cfg.train.seed)?;
    println!("dataset generated in {:.1}s", t0.elapsed().as_secs_f64());

    let model = UnfoldedModel::init(link, &p, cfg.train.seed)?;
    let mut rng = frame_rng(cfg.train.seed, u64::MAX - 2);
    let t1 = Instant::now();
    let (trained, report) = train_subnet_by_subnet(StageData::Shared(&dataset), model, &hyper, &mut rng)?;
    for stage in &report.stages {
        println!(
            "  {}: loss {:.4e} -> {:.4e} over {} iterations",
            stage.stage.name(),
            stage.losses.first().unwrap_or(&f64::NAN),
            stage.losses.last().unwrap_or(&f64::NAN),
            stage.losses.len()
        );
    }
    println!("trained in {:.1}s", t1.elapsed().as_secs_f64());

    save_model(&trained, out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}

struct SweepArgs {
    model: PathBuf,
    snr: String,
    rho: String,
    out: PathBuf,
    config: Option<PathBuf>,
    iters: usize,
    method: String,
    max_samples: Option<usize>,
    min_bit_errors: Option<u64>,
    high_snr_threshold: Option<f64>,
    seed: Option<u64>,
    svg: Option<PathBuf>,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::desk(),
    };
    cfg.link.n = model.link.n_bs;
    cfg.link.m = model.link.m_frame;
    cfg.link.rho = model.link.rho;
    cfg.link.e_u = model.link.e_u;
    cfg.eval.snr_db_list = parse_grid(&args.snr)?;
    cfg.eval.rho_list = parse_list(&args.rho)?;
    if let Some(v) = args.max_samples {
        cfg.eval.max_samples = v;
    }
    if let Some(v) = args.min_bit_errors {
        cfg.eval.min_bit_errors = v;
    }
    if let Some(v) = args.high_snr_threshold {
        cfg.eval.high_snr_threshold_db = v;
    }
    cfg.train.seed = args.seed.unwrap_or(model.train_meta.seed);
    cfg.validate()?;

    let mut rows: Vec<MetricsRow> = Vec::new();
    if args.method == "both" || args.method == "baseline" {
        rows.extend(sweep(ReceiverKind::Baseline { iters: args.iters }, &cfg)?);
    }
    if args.method == "both" || args.method == "unfolded" {
        rows.extend(sweep(ReceiverKind::Unfolded(&model), &cfg)?);
    }
    append_rows(&args.out, &rows)?;
    println!("{} rows appended to {}", rows.len(), args.out.display());

    if let Some(prefix) = args.svg {
        let stem = prefix.to_string_lossy();
        let nmse_path = PathBuf::from(format!("{stem}_nmse.svg"));
        let ber_path = PathBuf::from(format!("{stem}_ber.svg"));
        write_svg(&nmse_path, &rows, PlotMetric::Nmse, "NMSE vs SNR")?;
        write_svg(&ber_path, &rows, PlotMetric::Ber, "BER vs SNR")?;
        println!("charts written to {} and {}", nmse_path.display(), ber_path.display());
    }
    Ok(())
}

fn cmd_baseline(
    config: &PathBuf,
    iters: usize,
    snr: f64,
    frames: usize,
    rho: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let mut link = cfg.link_config(snr)?;
    if let Some(r) = rho {
        link = LinkConfig { rho: r, ..link };
        link.validate()?;
    }
    link.sigma2 = snr_to_sigma2(snr, link.e_u);
    let base_seed = seed.unwrap_or(cfg.train.seed);
    let row = evaluate_point(
        ReceiverKind::Baseline { iters },
        &link,
        snr,
        frames,
        u64::MAX,
        false,
        point_seed(base_seed, snr, link.rho),
    )?;
    println!(
        "baseline ({iters} iters): snr {} dB, rho {}, frames {}",
        row.snr_db, row.rho, row.samples_used
    );
    println!("NMSE {:.6e}", row.nmse);
    println!("BER  {:.6e} ({} bit errors)", row.ber, row.bit_errors);
    Ok(())
}

/// "start:step:stop" (inclusive) or a comma list.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "grid spec {spec:?} must be start:step:stop"
            )));
        }
        let start: f64 = parse_num(parts[0])?;
        let step: f64 = parse_num(parts[1])?;
        let stop: f64 = parse_num(parts[2])?;
        if step <= 0.0 || stop < start {
            return Err(Error::InvalidConfig(format!(
                "grid spec {spec:?} needs step > 0 and stop >= start"
            )));
        }
        let mut out = Vec::new();
        let mut v = start;
        while v <= stop + 1e-9 {
            out.push(v);
            v += step;
        }
        Ok(out)
    } else {
        parse_list(spec)
    }
}

fn parse_list(spec: &str) -> Result<Vec<f64>> {
    let vals: Result<Vec<f64>> = spec.split(',').map(parse_num).collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(Error::InvalidConfig(format!("empty list {spec:?}")));
    }
    Ok(vals)
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|e| Error::InvalidConfig(format!("cannot parse number {s:?}: {e}")))
}
