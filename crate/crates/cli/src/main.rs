use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use lipsignal::classifier::{load_model, mlp_train, save_model, svm_train, TrainConfig, TrainedModel};
use lipsignal::engine::EngineConfig;
use lipsignal::features::{CoeffSet, NormMode};
use lipsignal::io::{self, Recording, ServeConfig};
use lipsignal::landmarks::{DetectorScheme, SchemeRegistry};
use lipsignal::pipeline::Pipeline;
use lipsignal::slots::{Anchor, Codebook, SlotConfig, SlotMode, SlotTracker};
use lipsignal::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "lipsignal", version, about = "Lips-state detection and slot command decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier from a distance CSV.
    Train(TrainArgs),
    /// Report accuracy of a model on a distance CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Accept a feeder and broadcast decoded output.
    Serve(ServeArgs),
    /// Play back a recorded frame file.
    Replay(ReplayArgs),
    /// Write a synthetic frame stream or distance dataset.
    Synth(SynthArgs),
    /// Throughput plus angle and rate sweeps on synthetic data.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Train the linear max-margin model instead of the network.
    #[arg(long)]
    svm: bool,
    /// Five distance coefficients, "alpha,beta,gamma,delta,epsilon".
    #[arg(long, default_value = "1,1,1,1,1")]
    coeff: CoeffSet,
    #[arg(long, default_value = "none")]
    norm: NormMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 350)]
    max_epochs: usize,
    /// Per-epoch losses and accuracies as CSV (network only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    model: PathBuf,
    /// Codebook JSON; without one every symbol maps to its own number.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Extra or overriding detector schemes (JSON), repeatable.
    #[arg(long = "scheme-file")]
    scheme_files: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    debounce: u32,
    #[arg(long, default_value_t = 1000)]
    hold_timeout_ms: i64,
    #[arg(long, default_value_t = 600)]
    slot_ta_ms: i64,
    #[arg(long, default_value_t = 4)]
    slot_na: u32,
    #[arg(long, default_value = "bits")]
    slot_mode: SlotMode,
    /// first-action or wall-clock.
    #[arg(long, default_value = "first-action")]
    anchor: Anchor,
}

#[derive(Args)]
struct ServeArgs {
    /// Feeder socket.
    #[arg(long, default_value = "127.0.0.1:7870")]
    listen: SocketAddr,
    /// HTTP listener for /feed, /console and /stats.
    #[arg(long, default_value = "127.0.0.1:7871")]
    feed_listen: SocketAddr,
    #[arg(long)]
    console_dir: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    file: PathBuf,
    /// Playback speed; "inf" sends as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Send frames to a running server's feeder socket.
    #[arg(long, conflicts_with = "model")]
    to: Option<SocketAddr>,
    /// Decode locally and print feed messages instead of frames.
    #[command(flatten)]
    pipeline: Option<PipelineArgs>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Open-close cycles per second.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, default_value_t = 0.0)]
    yaw: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "facemesh468")]
    scheme: String,
    /// Emit raw landmark arrays instead of selected points.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-frame ground truth CSV.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write a labeled distance CSV with this many rows instead of frames.
    #[arg(long)]
    dataset_rows: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    frames: usize,
    /// Model to benchmark; by default one is trained on synthetic data.
    #[arg(long)]
    model: Option<PathBuf>,
    /// JSON throughput report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for angle.csv and rate.csv sweep tables.
    #[arg(long)]
    sweeps: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LIPSIGNAL_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval { model, data } => eval(&model, &data),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn load_samples(path: &Path) -> Result<Vec<lipsignal::classifier::Sample>, Failure> {
    let rows = io::load_dataset(path)
        .with_context(|| format!("reading {}", path.display()))
        .config()?;
    Ok(rows.iter().map(|r| r.to_sample()).collect())
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let samples = load_samples(&a.data)?;
    let cfg = TrainConfig {
        coeffs: a.coeff,
        norm_mode: a.norm,
        seed: a.seed,
        max_epochs: a.max_epochs,
        ..Default::default()
    };
    let model = if a.svm {
        svm_train(&samples, &cfg).config()?
    } else {
        let (model, trace) = mlp_train(&samples, &cfg).config()?;
        info!(
            "stopped after epoch {}, best epoch {} (val loss {:.5})",
            trace.stopped_epoch,
            trace.best_epoch,
            trace.min_val_loss().unwrap_or(f64::NAN)
        );
        if let Some(path) = &a.trace {
            let f = File::create(path).runtime()?;
            trace.write_csv(f).runtime()?;
        }
        model
    };
    let m = synth::evaluate(&model, &samples);
    info!("training-set accuracy {:.4} over {} rows", m.accuracy, m.samples);
    save_model(&model, &a.out).runtime()?;
    Ok(())
}

fn eval(model: &Path, data: &Path) -> Result<(), Failure> {
    let model = load_model(model)
        .with_context(|| format!("loading {}", model.display()))
        .config()?;
    let samples = load_samples(data)?;
    let m = synth::evaluate(&model, &samples);
    println!("{}", serde_json::to_string(&m).expect("metrics serialize"));
    Ok(())
}

fn build_pipeline(a: &PipelineArgs) -> Result<Pipeline, Failure> {
    let model = load_model(&a.model)
        .with_context(|| format!("loading {}", a.model.display()))
        .config()?;
    let mut schemes = SchemeRegistry::default();
    for path in &a.scheme_files {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .config()?;
        schemes.insert(DetectorScheme::from_json(&text).config()?);
    }
    let slots = SlotConfig {
        t_a_ms: a.slot_ta_ms,
        n_a: a.slot_na,
        mode: a.slot_mode,
        anchor: a.anchor,
    };
    slots.validate().config()?;
    let book = match &a.codebook {
        Some(path) => Codebook::load(path).config()?,
        None => Codebook::identity(slots.mode, slots.n_a),
    };
    let tracker = SlotTracker::new(slots, book).config()?;
    let engine = EngineConfig {
        debounce_frames: a.debounce,
        hold_timeout_ms: a.hold_timeout_ms,
    };
    Pipeline::new(model, schemes, engine, tracker).config()
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let pipeline = build_pipeline(&a.pipeline)?;
    let cfg = ServeConfig {
        feeder_addr: a.listen,
        feed_addr: a.feed_listen,
        console_dir: a.console_dir,
        ..Default::default()
    };
    let rt = tokio::runtime::Runtime::new().runtime()?;
    rt.block_on(async move {
        let handle = io::serve(cfg, pipeline).await.runtime()?;
        let stats = handle.stats.clone();
        handle
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
                info!("interrupted");
            })
            .await;
        info!("final counters: {:?}", stats.snapshot());
        Ok(())
    })
}

fn replay(a: ReplayArgs) -> Result<(), Failure> {
    let rec = Recording::from_path(&a.file).config()?;
    let paced = rec.replay(a.speed).config()?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match (a.to, a.pipeline) {
        (Some(addr), _) => {
            let mut sock = TcpStream::connect(addr)
                .with_context(|| format!("connecting to {addr}"))
                .runtime()?;
            for line in paced {
                writeln!(sock, "{line}").runtime()?;
            }
            info!("sent {} lines, {} malformed", rec.len(), rec.malformed().len());
        }
        (None, Some(p)) => {
            let mut pipeline = build_pipeline(&p)?;
            for line in paced {
                for msg in pipeline.process_line(line) {
                    writeln!(out, "{}", msg.to_json()).runtime()?;
                }
                out.flush().runtime()?;
            }
            info!("{:?}", pipeline.stats());
        }
        (None, None) => {
            for line in paced {
                writeln!(out, "{line}").runtime()?;
                out.flush().runtime()?;
            }
        }
    }
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<(), Failure> {
    if let Some(rows) = a.dataset_rows {
        let samples = synth::synth_dataset(rows, a.seed);
        let rows: Vec<_> = samples.iter().map(io::DatasetRow::from_sample).collect();
        return io::save_dataset(&a.out, &rows).runtime();
    }
    let scheme = SchemeRegistry::default()
        .get(&a.scheme)
        .cloned()
        .ok_or_else(|| anyhow!("unknown scheme {:?}", a.scheme))
        .config()?;
    let cfg = SynthConfig {
        fps: a.fps,
        duration_s: a.duration,
        movement_rate: a.rate,
        yaw_deg: a.yaw,
        noise_sigma: a.noise,
        seed: a.seed,
        scheme,
        emit_raw: a.raw,
        ..Default::default()
    };
    let stream = synth::synth_stream(&cfg).config()?;
    let mut out = BufWriter::new(File::create(&a.out).runtime()?);
    for f in &stream.frames {
        writeln!(out, "{}", io::serialize_frame(f)).runtime()?;
    }
    out.flush().runtime()?;
    if let Some(path) = &a.truth {
        let mut w = BufWriter::new(File::create(path).runtime()?);
        writeln!(w, "t_ms,state").runtime()?;
        for (f, l) in stream.frames.iter().zip(&stream.labels) {
            writeln!(w, "{},{}", f.t_ms, l.as_str()).runtime()?;
        }
        w.flush().runtime()?;
    }
    info!("wrote {} frames", stream.frames.len());
    Ok(())
}

fn bench_model(path: Option<&Path>) -> Result<TrainedModel, Failure> {
    match path {
        Some(p) => load_model(p)
            .with_context(|| format!("loading {}", p.display()))
            .config(),
        None => {
            info!("training a model on 2000 synthetic rows");
            let data = synth::synth_dataset(2000, 0);
            Ok(mlp_train(&data, &TrainConfig::default()).runtime()?.0)
        }
    }
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    if a.frames < 10_000 {
        return Err(Failure::Config(anyhow!("--frames must be at least 10000")));
    }
    let model = bench_model(a.model.as_deref())?;
    let duration_s = a.frames as f64 / 30.0;
    let stream = synth::synth_stream(&SynthConfig {
        duration_s,
        noise_sigma: 0.5,
        ..Default::default()
    })
    .config()?;
    let frames: Vec<_> = stream.frames.into_iter().take(a.frames).collect();
    let slots = SlotConfig::default();
    let tracker = SlotTracker::new(slots, Codebook::identity(slots.mode, slots.n_a)).config()?;
    let mut pipeline = Pipeline::new(model.clone(), SchemeRegistry::default(), EngineConfig::default(), tracker).config()?;
    let report = synth::bench_throughput(&mut pipeline, frames);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(path) = &a.out {
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .runtime()?;
    }

    if let Some(dir) = &a.sweeps {
        std::fs::create_dir_all(dir).runtime()?;
        let yaws = [0.0, 20.0, -20.0, 40.0, -40.0, 60.0, -60.0];
        let base = SynthConfig {
            noise_sigma: 0.5,
            ..Default::default()
        };
        let angles = synth::angle_sweep(&model, &yaws, &base).config()?;
        synth::write_angle_table(File::create(dir.join("angle.csv")).runtime()?, &[("mlp", angles)]).runtime()?;

        let rates = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let engine = EngineConfig::default();
        let sweeps: Vec<_> = [6.0, 20.0, 30.0]
            .iter()
            .map(|&fps| synth::rate_sweep(&engine, fps, &rates, 10.0).map(|rows| (fps, rows)))
            .collect::<Result<_, _>>()
            .config()?;
        let labels: Vec<String> = sweeps.iter().map(|(fps, _)| format!("{fps}fps")).collect();
        let tables: Vec<_> = labels.iter().map(String::as_str).zip(sweeps.into_iter().map(|s| s.1)).collect();
        synth::write_rate_table(File::create(dir.join("rate.csv")).runtime()?, &tables).runtime()?;
        info!("sweep tables written to {}", dir.display());
    }
    Ok(())
}
