//! Command-line front end. Exit codes: 0 success, 2 bad input (missing or
//! malformed files, bad flags), 3 simulation or training divergence, 1 other
//! failures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{
    bench, io_error, save_bundle, Checkpoint, CheckpointMeta, RunConfig, ServerOptions, ServiceError, Session,
};
use crate::control::{
    imitation_error, imitation_error_with, robustness_sweep, transition_test, Driver, EvalConfig, PlaybackDriver,
    Registry, Runtime, SwitchConfig,
};
use crate::motion::{generate_procedural_clips, ClipSpec, MotionClip};
use crate::physics::CharacterModel;
use crate::rl::{clip_digest, JsonlMetrics, PolicyBundle, RlError, TrainEvent, TrainHooks, Trainer};

/// Overrides the default output directory.
pub const OUT_ENV: &str = "ADVMIMIC_OUT";

#[derive(Debug, Parser)]
#[command(name = "advmimic", version, about = "Adversarial imitation workbench for planar characters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy and its discriminator ensemble.
    Train(TrainArgs),
    /// Imitation error of a checkpoint against its clips.
    Eval(EvalArgs),
    /// Forced switches from one policy to another, scored by each gate.
    TransitionTest(TransitionArgs),
    /// Survival under random pushes of increasing strength.
    Robustness(RobustnessArgs),
    /// Parameter counts, sizes and forward latency.
    Bench(BenchArgs),
    /// Run the live session server.
    #[command(alias = "play")]
    Serve(ServeArgs),
    /// Write procedural clips to disk.
    Clips(ClipsArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Environment steps to collect.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Output directory (default `$ADVMIMIC_OUT/<name>` or `runs/<name>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ClipArgs {
    /// Clip files; default is the clips named in `--config`, else the config
    /// stored in the checkpoint.
    #[arg(long = "clip")]
    pub clips: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub clips: ClipArgs,
    /// Replay the reference instead of running the policy.
    #[arg(long)]
    pub playback: bool,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransitionArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long = "source-clip")]
    pub source_clips: Vec<PathBuf>,
    #[arg(long = "target-clip")]
    pub target_clips: Vec<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub clips: ClipArgs,
    /// Comma-separated impulse magnitudes (N·s); may be empty.
    #[arg(long, default_value = "0,25,50,75,100")]
    pub magnitudes: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// One per policy; the first starts active.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    /// Run config whose `[switch]` table and clips to use.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub addr: String,
    /// Simulation rate, at most 30.
    #[arg(long, default_value_t = 30.0)]
    pub hz: f64,
    #[arg(long, default_value_t = 64)]
    pub queue: usize,
    /// Stop after this many frames.
    #[arg(long)]
    pub frames: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ClipsArgs {
    /// stand, walk, hop, crouch-to-stand or lean.
    #[arg(long)]
    pub template: String,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub variants: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), ServiceError> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::TransitionTest(a) => cmd_transition(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Clips(a) => cmd_clips(a),
    }
}

fn output_dir(flag: Option<PathBuf>, name: &str) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(|d| PathBuf::from(d).join(name)))
        .unwrap_or_else(|| PathBuf::from("runs").join(name))
}

fn report_path(flag: Option<PathBuf>, file: &str) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).map(|d| d.join(file))
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<PathBuf>) -> Result<(), ServiceError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    if let Some(path) = path {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        std::fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
        log::info!("wrote {}", path.display());
    }
    println!("{text}");
    Ok(())
}

struct TrainOutput {
    dir: PathBuf,
    every: usize,
    source: Option<String>,
    metrics: JsonlMetrics<BufWriter<File>>,
}

impl TrainHooks for TrainOutput {
    fn on_event(&mut self, event: &TrainEvent<'_>) -> Result<(), RlError> {
        self.metrics.on_event(event)?;
        if let TrainEvent::Iteration { metrics: m, bundle } = event {
            log::info!(
                "iter {} samples {} reward {:.3} episode {:.1} disc loss {:.3}",
                m.iteration,
                m.samples,
                m.mean_reward,
                m.mean_episode_length,
                m.discriminator_loss
            );
            if self.every > 0 && (m.iteration + 1) % self.every == 0 {
                let meta = CheckpointMeta { iteration: m.iteration, samples: m.samples, config_source: self.source.clone() };
                let path = self.dir.join(format!("checkpoint-{:06}.json", m.iteration + 1));
                save_bundle(bundle, &path, meta)
                    .map_err(|e| RlError::Config { field: "checkpoint".into(), reason: e.to_string() })?;
            }
        }
        Ok(())
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), ServiceError> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.training.seed = s;
    }
    if let Some(w) = a.workers {
        cfg.training.workers = w;
    }
    if let Some(b) = a.budget {
        cfg.training.sample_budget = b;
    }
    let model = cfg.load_model()?;
    let clips = cfg.load_clips(&model)?;
    let dir = output_dir(a.out, &cfg.name);
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let echo = dir.join("config.toml");
    std::fs::write(&echo, cfg.source.clone().unwrap_or_default()).map_err(|e| io_error(&echo, e))?;
    let metrics_path = dir.join("metrics.jsonl");
    let metrics = File::create(&metrics_path).map_err(|e| io_error(&metrics_path, e))?;
    let tc = cfg.train_config();
    let mut out = TrainOutput {
        dir: dir.clone(),
        every: tc.checkpoint_every,
        source: cfg.source.clone(),
        metrics: JsonlMetrics::new(BufWriter::new(metrics)),
    };
    let mut trainer = Trainer::new(&cfg.name, tc, model, cfg.sim.clone(), clips)?;
    trainer.run(&mut out)?;
    let meta = CheckpointMeta { iteration: trainer.iteration(), samples: trainer.samples(), config_source: cfg.source.clone() };
    let path = dir.join(format!("{}.json", cfg.name));
    save_bundle(trainer.bundle(), &path, meta)?;
    out.metrics.into_inner().flush().map_err(|e| io_error(&metrics_path, e))?;
    log::info!("wrote {}", path.display());
    println!("{}", path.display());
    Ok(())
}

/// Clips for a checkpoint: explicit files, then a config, then the config
/// echoed into the checkpoint. Digests are compared against the checkpoint.
pub fn resolve_clips(
    ck_path: &Path,
    ck: &Checkpoint,
    files: &[PathBuf],
    config: Option<&Path>,
) -> Result<Vec<MotionClip>, ServiceError> {
    let clips = if !files.is_empty() {
        let mut out = Vec::new();
        for f in files {
            if !f.exists() {
                return Err(ServiceError::MissingFile(f.clone()));
            }
            let clip = MotionClip::load(f)?;
            clip.check_model(&ck.model)?;
            out.push(clip);
        }
        out
    } else if let Some(c) = config {
        RunConfig::load(c)?.load_clips(&ck.model)?
    } else if let Some(src) = &ck.meta.config_source {
        let base = ck_path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_toml_str(src, &format!("{} (stored config)", ck_path.display()), base)?.load_clips(&ck.model)?
    } else {
        return Err(ServiceError::Input(format!("{}: no clips given and none recorded", ck_path.display())));
    };
    for c in &clips {
        if !ck.clips.iter().any(|m| m.digest == clip_digest(c)) {
            log::warn!("clip `{}` is not one the checkpoint was trained on", c.name);
        }
    }
    Ok(clips)
}

fn load_with_clips(path: &Path, clips: &ClipArgs) -> Result<(PolicyBundle, Vec<MotionClip>), ServiceError> {
    let ck = Checkpoint::load(path)?;
    let data = resolve_clips(path, &ck, &clips.clips, clips.config.as_deref())?;
    Ok((ck.into_bundle()?, data))
}

fn eval_config(trials: Option<usize>, frames: Option<usize>, seed: Option<u64>, workers: Option<usize>) -> EvalConfig {
    let mut cfg = EvalConfig::default();
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.frames = frames;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.threads = w;
    }
    cfg
}

fn cmd_eval(a: EvalArgs) -> Result<(), ServiceError> {
    let (bundle, clips) = load_with_clips(&a.checkpoint, &a.clips)?;
    let cfg = eval_config(a.trials, a.frames, a.seed, a.workers);
    let report = if a.playback {
        let model: &CharacterModel = &bundle.model;
        imitation_error_with(model, &clips, &cfg, |clip, start| {
            Box::new(PlaybackDriver::new(clip, model, start)) as Box<dyn Driver>
        })?
    } else {
        imitation_error(&bundle, &clips, &cfg)?
    };
    eprintln!("{}: imitation error {:.4} ± {:.4} m over {} trials", bundle.name, report.mean, report.std, report.trials.len());
    write_json(&report, report_path(a.out, &format!("eval-{}.json", bundle.name)))
}

fn cmd_transition(a: TransitionArgs) -> Result<(), ServiceError> {
    let (source, source_clips) = load_with_clips(&a.source, &ClipArgs { clips: a.source_clips, config: None })?;
    let (target, target_clips) = load_with_clips(&a.target, &ClipArgs { clips: a.target_clips, config: None })?;
    let cfg = eval_config(Some(a.trials), None, a.seed, a.workers);
    let report = transition_test(&source, &source_clips, &target, &target_clips, &cfg)?;
    for b in &report.bins {
        eprintln!("[{:+.1}, {:+.1})  {:5} trials  success {:.3}", b.lo, b.hi, b.count, b.rate());
    }
    write_json(&report, report_path(a.out, &format!("transition-{}-{}.json", source.name, target.name)))
}

pub fn parse_magnitudes(text: &str) -> Result<Vec<f64>, ServiceError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|m| m.is_finite() && *m >= 0.0)
                .ok_or_else(|| ServiceError::Input(format!("bad magnitude `{s}`")))
        })
        .collect()
}

fn cmd_robustness(a: RobustnessArgs) -> Result<(), ServiceError> {
    let magnitudes = parse_magnitudes(&a.magnitudes)?;
    let (bundle, clips) = load_with_clips(&a.checkpoint, &a.clips)?;
    let cfg = eval_config(Some(a.trials), None, a.seed, a.workers);
    let rows = robustness_sweep(&bundle, &clips, &magnitudes, &cfg)?;
    for r in &rows {
        eprintln!("{:8.1} N·s  {:8.1} ± {:.1} frames", r.magnitude, r.mean, r.std);
    }
    write_json(&rows, report_path(a.out, &format!("robustness-{}.json", bundle.name)))
}

fn cmd_bench(a: BenchArgs) -> Result<(), ServiceError> {
    if a.checkpoint.is_empty() {
        return Err(ServiceError::Input("bench needs at least one --checkpoint".into()));
    }
    let mut reports = Vec::new();
    for p in &a.checkpoint {
        let bundle = Checkpoint::load(p)?.into_bundle()?;
        let r = bench(&bundle, a.trials, a.seed)?;
        eprintln!(
            "{}: policy {} params, {:.3} ± {:.3} ms; ensemble of {} heads {} params, {:.3} ± {:.3} ms",
            bundle.name,
            r.policy_params,
            r.policy_latency.mean_ms,
            r.policy_latency.std_ms,
            r.ensemble_heads,
            r.ensemble_params,
            r.ensemble_latency.mean_ms,
            r.ensemble_latency.std_ms
        );
        reports.push((bundle.name, r));
    }
    let map: std::collections::BTreeMap<_, _> = reports.into_iter().collect();
    write_json(&map, report_path(a.out, "bench.json"))
}

fn cmd_serve(a: ServeArgs) -> Result<(), ServiceError> {
    if !(a.hz > 0.0 && a.hz <= 30.0) {
        return Err(ServiceError::Input("--hz must lie in (0, 30]".into()));
    }
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let switch = cfg.as_ref().map(|c| c.switch.clone()).unwrap_or_else(SwitchConfig::default);
    let mut registry = Registry::new();
    let mut first = None;
    for p in &a.checkpoint {
        let ck = Checkpoint::load(p)?;
        let clips = resolve_clips(p, &ck, &[], None).unwrap_or_else(|e| {
            log::warn!("{}: {e}; motion-matching gate and clip resets unavailable", p.display());
            Vec::new()
        });
        let bundle = ck.into_bundle()?;
        first.get_or_insert_with(|| bundle.name.clone());
        registry.insert(bundle, clips)?;
    }
    let first = first.expect("clap requires a checkpoint");
    let runtime = Runtime::from_clip(registry, switch, &first, 0.0)?;
    let opts = ServerOptions { addr: a.addr, hz: a.hz, queue: a.queue, max_frames: a.frames };
    let handle = super::serve(Session::new(runtime), opts)?;
    eprintln!("listening on ws://{}", handle.addr());
    handle.wait();
    Ok(())
}

fn cmd_clips(a: ClipsArgs) -> Result<(), ServiceError> {
    let spec = ClipSpec {
        template: a.template,
        amplitude: a.amplitude,
        period: a.period,
        name: None,
        variants: a.variants,
    };
    let clips = generate_procedural_clips(&spec, &CharacterModel::biped())?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    for c in clips {
        let path = a.out.join(format!("{}.json", c.name));
        c.save(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}
