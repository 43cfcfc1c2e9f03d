//! The `rectrack` subcommands.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rectrack_core::eval::{
    compare, ope_evaluate, run_ope, vot_evaluate, EvalResult, NetworkTracker, PlaybackTracker, SequenceTracker,
    StaticTracker,
};
use rectrack_core::network::NetworkParams;
use rectrack_core::synthgen::{generate, PatchSource, SequenceSource, SyntheticSource};
use rectrack_core::tracker::track_sequence;
use rectrack_core::trainer::Trainer;
use rectrack_core::BoundingBox;

use crate::checkpoint::{self, EXTENSION};
use crate::config::Config;
use crate::csv::{track_csv, LossLog};
use crate::dataset::{self, DirectorySource};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rectrack", version, about = "Recurrent single-object tracker: data, training, tracking, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic sequences as frame directories.
    GenData(GenDataArgs),
    /// Train from scratch; writes checkpoints and loss.csv.
    Train(TrainArgs),
    /// Track one object through a directory of frames.
    Track(TrackArgs),
    /// Score the tracker and a static baseline on a dataset.
    Eval(EvalArgs),
    /// Time tracking steps on generated frames.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 32)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; synthetic sequences are generated when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides train.iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides train.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    frames_dir: PathBuf,
    /// Box on the first frame as x1,y1,x2,y2.
    #[arg(long, allow_hyphen_values = true)]
    init_box: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Ope,
    Vot,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "oracle")]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Ope)]
    mode: Mode,
    /// Output directory for summary.csv and success_curve.csv.
    #[arg(long)]
    out: PathBuf,
    /// Replay the true boxes instead of running a network.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    path.map_or_else(|| Ok(Config::default()), Config::load)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn patch_source(cfg: &Config) -> Result<PatchSource> {
    match &cfg.image_dir {
        None => Ok(PatchSource::Procedural),
        Some(dir) => {
            let images = dataset::read_frames(dir)?;
            if images.is_empty() {
                return Err(Error::Usage(format!("{}: no .ppm images", dir.display())));
            }
            Ok(PatchSource::Images(images))
        }
    }
}

/// Sequence `i` uses the `i`-th draw of a generator seeded with `seed`.
pub fn sequence_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    if a.length < 2 {
        return Err(Error::Usage("--length must be at least 2".into()));
    }
    let source = patch_source(&cfg)?;
    create_dir(&a.out)?;
    for (i, s) in sequence_seeds(a.seed, a.count).into_iter().enumerate() {
        let seq = generate(&source, &cfg.synth, a.length, s)?;
        let dir = a.out.join(format!("seq_{i:04}"));
        dataset::write_sequence(&dir, &seq.frames, &seq.truth, Some(&seq.occluded))?;
    }
    Ok(())
}

pub fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("ckpt_{iteration}.{EXTENSION}"))
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(n) = a.iters {
        cfg.train.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    let mut source: Box<dyn SequenceSource> = match &a.data {
        Some(dir) => Box::new(DirectorySource::new(dataset::read_dataset(dir)?)?),
        None => Box::new(SyntheticSource { patches: patch_source(&cfg)?, config: cfg.synth.clone() }),
    };
    create_dir(&a.out)?;
    let params = NetworkParams::init(&cfg.network)?;
    let mut trainer = Trainer::new(params, cfg.train.clone())?;
    checkpoint::save(&checkpoint_path(&a.out, 0), trainer.params(), cfg.checkpoint_dtype)?;
    let mut log = LossLog::open(&a.out.join("loss.csv"))?;
    let every = cfg.checkpoint_every.max(1);
    for it in 0..cfg.train.iterations {
        match trainer.step(source.as_mut()) {
            Ok(r) => log.append(&r)?,
            Err(e @ rectrack_core::Error::NonFinite(_)) => {
                let path = a.out.join(format!("ckpt_{it}_diagnostic.{EXTENSION}"));
                checkpoint::save(&path, trainer.params(), checkpoint::DType::F64)?;
                eprintln!("training diverged; parameters before the failing step saved to {}", path.display());
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        }
        let done = it + 1;
        if done % every == 0 || done == cfg.train.iterations {
            checkpoint::save(&checkpoint_path(&a.out, done), trainer.params(), cfg.checkpoint_dtype)?;
        }
    }
    Ok(())
}

pub fn parse_box(s: &str) -> Result<BoundingBox> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Usage(format!("--init-box {s:?}: expected four numbers x1,y1,x2,y2")))?;
    if v.len() != 4 {
        return Err(Error::Usage(format!("--init-box {s:?}: expected four numbers x1,y1,x2,y2")));
    }
    BoundingBox::new(v[0], v[1], v[2], v[3])
        .map_err(|_| Error::Usage(format!("--init-box {s:?}: need finite x1 < x2 and y1 < y2")))
}

fn track(a: &TrackArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let init = parse_box(&a.init_box)?;
    let params = checkpoint::load(&a.ckpt)?;
    let frames = dataset::read_frames(&a.frames_dir)?;
    if frames.len() < 2 {
        return Err(Error::Usage(format!("{}: need at least 2 .ppm frames", a.frames_dir.display())));
    }
    let boxes = track_sequence(&params, &frames, &init, cfg.tracker)?;
    write_file(&a.out, &track_csv(1, &boxes))
}

fn evaluate_one(
    tracker: &mut dyn SequenceTracker,
    seq: &dataset::Sequence,
    mode: Mode,
    gap: usize,
) -> Result<EvalResult> {
    Ok(match mode {
        Mode::Ope => {
            let pred = run_ope(tracker, &seq.frames, &seq.truth[0])?;
            ope_evaluate(&pred, &seq.truth[1..], seq.occluded.as_deref().map(|o| &o[1..]))?
        }
        Mode::Vot => vot_evaluate(tracker, &seq.frames, &seq.truth, seq.occluded.as_deref(), gap)?,
    })
}

fn eval(a: &EvalArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let sequences = if a.data.is_dir() { dataset::read_dataset(&a.data)? } else { Vec::new() };
    if sequences.is_empty() {
        return Err(Error::Usage(format!("{}: no sequences found", a.data.display())));
    }
    if let Some(s) = sequences.iter().find(|s| s.frames.len() < 2) {
        return Err(Error::Usage(format!("sequence {} has fewer than 2 frames", s.name)));
    }
    let params = match (&a.ckpt, a.oracle) {
        (_, true) => None,
        (Some(p), false) => Some(checkpoint::load(p)?),
        (None, false) => return Err(Error::Usage("--ckpt is required unless --oracle is given".into())),
    };
    let mut main_rows = Vec::new();
    let mut static_rows = Vec::new();
    for seq in &sequences {
        let r = match &params {
            Some(p) => evaluate_one(&mut NetworkTracker::new(p, cfg.tracker), seq, a.mode, cfg.reinit_gap)?,
            None => evaluate_one(&mut PlaybackTracker { truth: seq.truth.clone() }, seq, a.mode, cfg.reinit_gap)?,
        };
        main_rows.push(r);
        static_rows.push(evaluate_one(&mut StaticTracker::default(), seq, a.mode, cfg.reinit_gap)?);
    }
    let name = if a.oracle { "oracle" } else { "network" };
    let report = compare(&[
        (name.to_owned(), EvalResult::pooled(&main_rows)?),
        ("static".to_owned(), EvalResult::pooled(&static_rows)?),
    ]);
    create_dir(&a.out)?;
    write_file(&a.out.join("summary.csv"), &report.summary_csv())?;
    write_file(&a.out.join("success_curve.csv"), &report.success_csv())?;
    print!("{}", report.summary_csv());
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let params = checkpoint::load(&a.ckpt)?;
    let report = crate::bench::run(&params, a.frames, &cfg.synth, a.seed, cfg.tracker)?;
    print!("{}", report.summary());
    write_file(&a.out, &report.csv())
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code().clamp(0, 255) as u8;
        }
    };
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
