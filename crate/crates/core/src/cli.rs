//! Command-line surface: `train-teacher`, `distill`, `sample`,
//! `analyze-noise`, `eval` and `ablate`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{parse_mode, RunConfig};
use crate::diffcore::{NumArray, ParamStore};
use crate::distill::{draw_batch, run_distillation, write_metrics_csv, DistillMode, DistillSetup};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_grid, ablation_harness, default_step_times, equivalent_noise_curve, multi_step_sample, EvalProtocol,
};
use crate::netmodel::{ConditionEncoder, NetVelocity, VelocityNet, VelocityNetConfig};
use crate::schedules::{cosine_similarity, equivalent_noise, trig};
use crate::teacher::{encoder_seed, train_teacher};
use crate::trajectory::flow_euler_reference;
use crate::ResourceCounters;

#[derive(Parser, Debug)]
#[command(name = "cmlab", version, about = "Consistency distillation lab for 2D densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain the teacher velocity network.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
    },
    /// Distill a one-step student from the teacher.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<String>,
        /// Teacher checkpoint; trained on the fly when absent.
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Also write one iteration's training batch as CSV.
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Draw samples from a distilled student.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Equivalent-noise similarity along backward and forward paths.
    AnalyzeNoise {
        #[command(flatten)]
        common: Common,
    },
    /// Score teacher and student against held-out data.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run an ablation grid over seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// One of scheme, steps, r_final, mode.
        #[arg(long)]
        grid: String,
    },
}

/// Architecture and provenance stored next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub role: String,
    pub sigma_d: f64,
    pub encoder_seed: u64,
    pub net: VelocityNetConfig,
}

pub fn save_checkpoint(path: &Path, params: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    params.save(path)?;
    let text = toml::to_string(meta).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path.with_extension("toml"), text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, CheckpointMeta)> {
    let params = ParamStore::load(path)?;
    let text = std::fs::read_to_string(path.with_extension("toml"))?;
    let meta: CheckpointMeta =
        toml::from_str(&text).map_err(|e| Error::Config(format!("bad checkpoint sidecar: {e}")))?;
    VelocityNet::new(meta.net.clone())?.check_params(&params)?;
    Ok((params, meta))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: String,
    counters: ResourceCounters,
    artifacts: Vec<String>,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    nfe_per_sample: Option<usize>,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    started: Instant,
    artifacts: Vec<String>,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let mut cfg = RunConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &common.out {
            cfg.output_dir = out.to_string_lossy().into_owned();
        }
        cfg.validate()?;
        let out = cfg.output_path();
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            cfg,
            out,
            started: Instant::now(),
            artifacts: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.out.join(name)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn manifest(&self, command: &str, counters: ResourceCounters, nfe: Option<usize>) -> Result<()> {
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.cfg.seed,
            config: self.cfg.to_toml_string(),
            counters,
            artifacts: self.artifacts.clone(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            nfe_per_sample: nfe,
        };
        let name = format!("manifest_{}.json", command.replace(' ', "_"));
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(self.out.join(name), text + "\n")?;
        Ok(())
    }

    fn teacher_path(&self) -> PathBuf {
        self.out.join("teacher.params")
    }

    fn student_path(&self, mode: DistillMode) -> PathBuf {
        self.out.join(format!("student_{}.params", mode.name()))
    }

    fn mode(&self, flag: &Option<String>) -> Result<DistillMode> {
        match flag {
            Some(m) => parse_mode(m),
            None => self.cfg.distill_mode(),
        }
    }

    /// Load the teacher, training and saving it first if needed.
    fn teacher(&mut self, explicit: Option<&Path>) -> Result<(ParamStore, CheckpointMeta)> {
        if let Some(p) = explicit {
            return load_checkpoint(p);
        }
        let path = self.teacher_path();
        if path.exists() {
            return load_checkpoint(&path);
        }
        eprintln!("no teacher at {}, training one", path.display());
        let (params, meta) = self.train_teacher()?;
        Ok((params, meta))
    }

    fn train_teacher(&mut self) -> Result<(ParamStore, CheckpointMeta)> {
        let tcfg = self.cfg.teacher_config()?;
        let run = train_teacher(&tcfg)?;
        let meta = CheckpointMeta {
            role: "teacher".into(),
            sigma_d: tcfg.sigma_d,
            encoder_seed: encoder_seed(tcfg.seed),
            net: tcfg.net.clone(),
        };
        let path = self.path("teacher.params");
        self.artifacts.push("teacher.toml".into());
        save_checkpoint(&path, &run.params, &meta)?;
        let mut w = self.create("teacher_loss.csv")?;
        writeln!(w, "step,loss")?;
        for (i, l) in run.losses.iter().enumerate() {
            writeln!(w, "{},{l:?}", i + 1)?;
        }
        w.flush()?;
        Ok((run.params, meta))
    }
}

fn encoder_for(meta: &CheckpointMeta) -> ConditionEncoder {
    ConditionEncoder::for_net(&meta.net, meta.encoder_seed)
}

fn protocol(cfg: &RunConfig) -> Result<EvalProtocol> {
    Ok(EvalProtocol::new(
        &cfg.dataset()?,
        cfg.eval_samples,
        cfg.eval_projections,
        cfg.eval_seed,
    ))
}

fn cmd_train_teacher(common: &Common) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    ctx.train_teacher()?;
    ctx.manifest("train-teacher", ResourceCounters::default(), None)
}

fn cmd_distill(common: &Common, mode: &Option<String>, teacher: &Option<PathBuf>, dump: bool) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    let mode = ctx.mode(mode)?;
    ctx.cfg.mode = mode.name().into();
    let (tparams, tmeta) = ctx.teacher(teacher.as_deref())?;
    let net = VelocityNet::new(tmeta.net.clone())?;
    let encoder = encoder_for(&tmeta);
    let dataset = ctx.cfg.dataset()?;
    let dcfg = ctx.cfg.distill_config()?;
    let setup = DistillSetup {
        net: &net,
        teacher: &tparams,
        encoder: &encoder,
        dataset: &dataset,
    };
    if dump {
        let mut rng = ChaCha8Rng::seed_from_u64(dcfg.seed);
        let batch = draw_batch(&dcfg, &setup, &mut rng, &mut ResourceCounters::default())?;
        let mut w = ctx.create(&format!("trajectories_{}.csv", mode.name()))?;
        batch.write_csv(&mut w)?;
        w.flush()?;
    }
    let prot = protocol(&ctx.cfg)?;
    let sigma_d = dcfg.sigma_d;
    let mut eval = |p: &ParamStore| {
        prot.one_step_distance(
            &NetVelocity {
                net: &net,
                params: p,
                sigma_d,
            },
            &encoder,
        )
    };
    let run = run_distillation(&dcfg, &setup, ctx.cfg.eval_every, Some(&mut eval))?;
    let meta = CheckpointMeta {
        role: format!("student_{}", mode.name()),
        ..tmeta
    };
    let name = format!("student_{}.params", mode.name());
    let path = ctx.path(&name);
    ctx.artifacts.push(name.replace(".params", ".toml"));
    save_checkpoint(&path, &run.student, &meta)?;
    let mut w = ctx.create(&format!("metrics_{}.csv", mode.name()))?;
    write_metrics_csv(&run.rows, &mut w)?;
    w.flush()?;
    ctx.manifest(&format!("distill_{}", mode.name()), run.counters, None)
}

fn student(ctx: &Ctx, mode: &Option<String>, checkpoint: &Option<PathBuf>) -> Result<(ParamStore, CheckpointMeta)> {
    let path = match checkpoint {
        Some(p) => p.clone(),
        None => ctx.student_path(ctx.mode(mode)?),
    };
    load_checkpoint(&path)
}

fn cmd_sample(common: &Common, steps: usize, mode: &Option<String>, checkpoint: &Option<PathBuf>) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    if steps == 0 {
        return Err(Error::Config("--steps must be at least 1".into()));
    }
    let (params, meta) = student(&ctx, mode, checkpoint)?;
    let net = VelocityNet::new(meta.net.clone())?;
    let encoder = encoder_for(&meta);
    let model = NetVelocity {
        net: &net,
        params: &params,
        sigma_d: meta.sigma_d,
    };
    let n = ctx.cfg.sample_count;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    rng.set_stream(0x7361_6d70);
    let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..meta.net.num_conditions)).collect();
    let z = NumArray::matrix(
        n,
        2,
        (0..2 * n)
            .map(|_| meta.sigma_d * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect(),
    );
    let mut counters = ResourceCounters::default();
    let cond = encoder.encode(&ids, &mut counters)?;
    let times = default_step_times(steps)?;
    let x = multi_step_sample(&model, &times, &z, &cond, &mut rng, &mut counters)?;
    let mut w = ctx.create(&format!("samples_{steps}step.csv"))?;
    writeln!(w, "sample_id,x,y,condition")?;
    for i in 0..n {
        writeln!(w, "{i},{:?},{:?},{}", x.at(i, 0), x.at(i, 1), ids[i])?;
    }
    w.flush()?;
    ctx.manifest(&format!("sample_{steps}step"), counters, Some(counters.student_nfe as usize))
}

fn cmd_analyze_noise(common: &Common) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    let (params, meta) = ctx.teacher(None)?;
    let net = VelocityNet::new(meta.net.clone())?;
    let encoder = encoder_for(&meta);
    let teacher = NetVelocity {
        net: &net,
        params: &params,
        sigma_d: meta.sigma_d,
    };
    let dataset = ctx.cfg.dataset()?;
    let p = ctx.cfg.noise_probes;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    rng.set_stream(0x6e6f_6973);
    let (x0, ids) = dataset.sample_data(p, &mut rng);
    let z = NumArray::matrix(
        p,
        2,
        (0..2 * p)
            .map(|_| meta.sigma_d * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect(),
    );
    let traj = flow_euler_reference(ctx.cfg.noise_steps, ctx.cfg.shift)?;
    let mut counters = ResourceCounters::default();
    let backward = equivalent_noise_curve(&teacher, &encoder, &traj, &z, &ids, &mut counters)?;
    let mut w = ctx.create("noise_curve.csv")?;
    writeln!(w, "t,backward_similarity,forward_similarity")?;
    for pt in &backward {
        let (c, s) = trig(pt.t);
        let xt = x0.zip_map(&z, |a, b| c * a + s * b);
        let eps = equivalent_noise(&xt, &x0, pt.t)?;
        let fwd: f64 = (0..p).map(|r| cosine_similarity(eps.row(r), z.row(r))).sum::<f64>() / p as f64;
        writeln!(w, "{:?},{:?},{fwd:?}", pt.t, pt.similarity)?;
    }
    w.flush()?;
    ctx.manifest("analyze-noise", counters, None)
}

fn cmd_eval(common: &Common, mode: &Option<String>, checkpoint: &Option<PathBuf>) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    let mode = ctx.mode(mode)?;
    let (sparams, smeta) = student(&ctx, &Some(mode.name().into()), checkpoint)?;
    let (tparams, tmeta) = load_checkpoint(&ctx.teacher_path())?;
    let prot = protocol(&ctx.cfg)?;
    let tnet = VelocityNet::new(tmeta.net.clone())?;
    let snet = VelocityNet::new(smeta.net.clone())?;
    let tenc = encoder_for(&tmeta);
    let senc = encoder_for(&smeta);
    let teacher = NetVelocity {
        net: &tnet,
        params: &tparams,
        sigma_d: tmeta.sigma_d,
    };
    let model = NetVelocity {
        net: &snet,
        params: &sparams,
        sigma_d: smeta.sigma_d,
    };
    let mut rows: Vec<(String, usize, String, f64)> = Vec::new();
    let base = ctx.cfg.baseline_steps;
    rows.push(("teacher".into(), base, "sliced_w2".into(), prot.rollout_distance(&teacher, &tenc, base)?));
    let cond = senc.encode(&prot.ids, &mut ResourceCounters::default())?;
    for steps in [1usize, 2, 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.eval_seed);
        let x = multi_step_sample(
            &model,
            &default_step_times(steps)?,
            &prot.z,
            &cond,
            &mut rng,
            &mut ResourceCounters::default(),
        )?;
        rows.push((format!("student_{}", mode.name()), steps, "sliced_w2".into(), prot.distance(&x)?));
    }
    let mut w = ctx.create(&format!("eval_{}.csv", mode.name()))?;
    writeln!(w, "run_id,steps,metric,value")?;
    for (id, steps, metric, v) in &rows {
        writeln!(w, "{id},{steps},{metric},{v:?}")?;
    }
    w.flush()?;
    ctx.manifest(&format!("eval_{}", mode.name()), ResourceCounters::default(), None)
}

fn cmd_ablate(common: &Common, grid: &str) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    let base = ctx.cfg.distill_config()?;
    let entries = ablation_grid(grid, &base)?;
    let (tparams, tmeta) = ctx.teacher(None)?;
    let net = VelocityNet::new(tmeta.net.clone())?;
    let encoder = encoder_for(&tmeta);
    let dataset = ctx.cfg.dataset()?;
    let setup = DistillSetup {
        net: &net,
        teacher: &tparams,
        encoder: &encoder,
        dataset: &dataset,
    };
    let prot = protocol(&ctx.cfg)?;
    let seeds = ctx.cfg.ablate_seeds.clone();
    let (runs, summaries) = ablation_harness(&entries, &seeds, &setup, &prot, |r| match &r.outcome {
        Ok(v) => eprintln!("{} seed {}: {v:.5}", r.name, r.seed),
        Err(e) => eprintln!("{} seed {}: failed: {e}", r.name, r.seed),
    });
    let mut w = ctx.create(&format!("ablation_{grid}_runs.csv"))?;
    writeln!(w, "config,seed,value,error")?;
    for r in &runs {
        match &r.outcome {
            Ok(v) => writeln!(w, "{},{},{v:?},", r.name, r.seed)?,
            Err(e) => writeln!(w, "{},{},,\"{}\"", r.name, r.seed, e.replace('"', "'"))?,
        }
    }
    w.flush()?;
    let mut w = ctx.create(&format!("ablation_{grid}_summary.csv"))?;
    writeln!(w, "config,median,runs,failures")?;
    for s in &summaries {
        let m = s.median.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(w, "{},{m},{},{}", s.name, s.values.len(), s.failures)?;
    }
    w.flush()?;
    ctx.manifest(&format!("ablate_{grid}"), ResourceCounters::default(), None)
}

/// Usage and configuration problems exit with 2, runtime failures with 1.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::UnknownParam(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::TrainTeacher { common } => cmd_train_teacher(common),
        Command::Distill {
            common,
            mode,
            teacher,
            dump_trajectories,
        } => cmd_distill(common, mode, teacher, *dump_trajectories),
        Command::Sample {
            common,
            steps,
            mode,
            checkpoint,
        } => cmd_sample(common, *steps, mode, checkpoint),
        Command::AnalyzeNoise { common } => cmd_analyze_noise(common),
        Command::Eval {
            common,
            mode,
            checkpoint,
        } => cmd_eval(common, mode, checkpoint),
        Command::Ablate { common, grid } => cmd_ablate(common, grid),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            let kind = if code == 2 { "usage error" } else { "error" };
            eprintln!("{kind}: {e}");
            code
        }
    }
}
