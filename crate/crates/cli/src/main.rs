//! `fullres`: synthetic data, MTF downgrade, detail references, training,
//! fusion and evaluation for Sentinel-2 20-m band super-resolution.

mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fullres::detail::build_all_references;
use fullres::metrics::{evaluate_with_window, DEFAULT_WINDOW};
use fullres::mtf::wald_downgrade;
use fullres::net::{load_checkpoint, save_checkpoint, LossNorm};
use fullres::raster::{write_preview, Stack};
use fullres::synth::generate;
use fullres::train::{self, Scheme, TrainLog};
use fullres::{load_stack, save_stack, BandId, BandStack, Error, FusionNet, KernelBank, Result};
use serde_json::json;

use config::ExperimentConfig;
use manifest::Manifest;

const AFTER_HELP: &str = "\
Configuration (--config, JSON; every key optional, unknown keys rejected):
  mtf.gains        per-band Nyquist gain, e.g. {\"B11\": 0.3}   default 0.275 for every band
  mtf.kernel_size  odd MTF kernel size                          default 41
  ratio            20 m / 10 m scale ratio                      default 2
  detail.gamma     softmax sharpness                            default 5
  detail.radius    correlation window radius                    default 3
  loss.beta        detail-loss weight                           default 0.25
  loss.norm        \"l1\" | \"l2\"                                  default \"l1\"
  train.scheme     \"baseline\" | \"reversed\" | \"proposed\"         default \"proposed\"
  train.iterations optimizer steps                              default 2000
  train.lr         Adam learning rate                           default 2e-4
  train.tile       training tile size (even)                    default 128
  train.seed       initialization / sampling seed               default 0
  train.log_every  log interval in steps                        default 10
  synth.*          synthetic scene knobs (correlation 0.8, texture 0.15, cell 20,
                   blob_density 3, line_density 4, noise 0.002)
  io.in10, io.in20, io.gt, io.model, io.out   default paths for the flags below

Errors go to stderr prefixed with config:, io:, shape: or numeric:; exit code 1.";

#[derive(Parser, Debug)]
#[command(name = "fullres", version, about = "Sentinel-2 20-m band super-resolution with full-resolution training", after_help = AFTER_HELP)]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides train.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reproducible reductions (always on; recorded in the manifest).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Pair {
    /// 4-band 10-m stack (.bsr).
    #[arg(long)]
    in10: Option<PathBuf>,
    /// 6-band 20-m stack (.bsr).
    #[arg(long)]
    in20: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct TrainOverrides {
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    log_every: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Seeded synthetic scene: PREFIX_10m.bsr, PREFIX_20m.bsr and the 10-m truth PREFIX_gt.bsr.
    Synth {
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MTF low-pass and decimation of both stacks: PREFIX_10m.bsr, PREFIX_20m.bsr.
    Downgrade {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the kernels as text to PREFIX_kernels.txt.
        #[arg(long)]
        dump_kernels: bool,
    },
    /// Detail reference of every 20-m band on normalized stacks: PREFIX_detail.bsr.
    DetailRef {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-band softmax weights: PREFIX_weights_<band>.bsr.
        #[arg(long)]
        weights: bool,
    },
    /// Train a fresh network on random crops of one or more scenes.
    Pretrain {
        /// Scene prefix (PREFIX_10m.bsr / PREFIX_20m.bsr); repeatable.
        #[arg(long = "scene", required = true)]
        scenes: Vec<PathBuf>,
        /// Output checkpoint (.fnet).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainOverrides,
    },
    /// Target-adaptive fine-tuning on one scene.
    Adapt {
        #[command(flatten)]
        pair: Pair,
        /// Starting checkpoint; a seeded fresh network when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainOverrides,
    },
    /// Apply a network: 6 bands on the 10-m grid.
    Fuse {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// RGB preview PNG of bands B12/B8A/B5.
        #[arg(long)]
        preview: Option<PathBuf>,
    },
    /// Q, Q2n, SAM, ERGAS, SCC of a prediction against a reference.
    Eval {
        pred: Option<PathBuf>,
        gt: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Also write the CSV to this file (with a manifest).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    threads: usize,
    deterministic: bool,
    json: bool,
}

impl Ctx {
    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, self.threads, self.deterministic)
    }

    fn kernels(&self) -> Result<KernelBank> {
        KernelBank::new(&self.cfg.mtf, self.cfg.ratio)
    }

    fn report(&self, human: String, value: serde_json::Value) {
        if self.json {
            println!("{value}");
        } else {
            println!("{human}");
        }
    }
}

fn required(arg: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    arg.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("missing --{name} (or io.{name} in the config)")))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_bands(path: &Path, bands: &[BandId], manifest: &mut Manifest) -> Result<BandStack> {
    manifest.input(path)?;
    load_stack(path)?.select(bands)
}

/// Resolves, records and loads the 10-m / 20-m input pair.
fn load_pair(pair: Pair, ctx: &mut Ctx, manifest: &mut Manifest) -> Result<(BandStack, BandStack)> {
    let in10 = required(pair.in10, &ctx.cfg.io.in10, "in10")?;
    let in20 = required(pair.in20, &ctx.cfg.io.in20, "in20")?;
    ctx.cfg.io.in10 = Some(in10.clone());
    ctx.cfg.io.in20 = Some(in20.clone());
    Ok((load_bands(&in10, &BandId::TEN_M, manifest)?, load_bands(&in20, &BandId::TWENTY_M, manifest)?))
}

fn save(stack: &BandStack, path: &Path, manifest: &mut Manifest) -> Result<()> {
    save_stack(stack, path)?;
    manifest.output(path);
    Ok(())
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: TrainOverrides) -> Result<()> {
    if let Some(v) = o.scheme {
        cfg.train.scheme = v;
    }
    if let Some(v) = o.iterations {
        cfg.train.iterations = v;
    }
    if let Some(v) = o.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = o.beta {
        cfg.loss.beta = v;
    }
    if let Some(v) = o.tile {
        cfg.train.tile = v;
    }
    if let Some(v) = o.log_every {
        cfg.train.log_every = v;
    }
    if let Some(v) = o.norm {
        cfg.loss.norm = match v.to_ascii_lowercase().as_str() {
            "l1" => LossNorm::L1,
            "l2" => LossNorm::L2,
            _ => return Err(Error::Config(format!("loss.norm: unknown norm `{v}`"))),
        };
    }
    cfg.validate()
}

fn write_log(log: &TrainLog, ckpt: &Path, manifest: &mut Manifest) -> Result<()> {
    let path = with_suffix(ckpt, ".log.csv");
    fs::write(&path, log.to_csv()).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    manifest.output(&path);
    Ok(())
}

fn train_summary(log: &TrainLog, net: &FusionNet) -> serde_json::Value {
    let last = log.entries.last().map(|e| e.loss);
    json!({
        "steps": net.steps(),
        "final_loss": last.map(|l| json!({"total": l.total, "lp": l.lp, "det": l.det})),
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    let mut ctx = Ctx { cfg, threads: rayon::current_num_threads(), deterministic: cli.deterministic, json: cli.json };

    match cli.command {
        Command::Synth { size, out } => {
            let prefix = required(out, &ctx.cfg.io.out, "out")?;
            ctx.cfg.io.out = Some(prefix.clone());
            let mut m = ctx.manifest("synth");
            let scene = generate(ctx.cfg.train.seed, size, &ctx.cfg.synth, &ctx.cfg.mtf)?;
            for (stack, suffix) in [(&scene.stack10, "_10m.bsr"), (&scene.stack20, "_20m.bsr"), (&scene.gt20, "_gt.bsr")] {
                save(stack, &with_suffix(&prefix, suffix), &mut m)?;
            }
            let mp = m.write(&prefix, &ctx.cfg)?;
            ctx.report(format!("wrote {} ({})", m.outputs.join(", "), mp.display()), json!({"outputs": m.outputs}));
        }
        Command::Downgrade { pair, out, dump_kernels } => {
            let prefix = required(out, &ctx.cfg.io.out, "out")?;
            ctx.cfg.io.out = Some(prefix.clone());
            let mut m = ctx.manifest("downgrade");
            let (s10, s20) = load_pair(pair, &mut ctx, &mut m)?;
            let bank = ctx.kernels()?;
            let (lr10, lr20) = wald_downgrade(&s10, &s20, &bank.ten, &bank.twenty, bank.ratio)?;
            save(&lr10, &with_suffix(&prefix, "_10m.bsr"), &mut m)?;
            save(&lr20, &with_suffix(&prefix, "_20m.bsr"), &mut m)?;
            if dump_kernels {
                let path = with_suffix(&prefix, "_kernels.txt");
                let text: String = bank.ten.iter().chain(&bank.twenty).map(|k| k.to_text()).collect();
                fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                m.output(&path);
            }
            m.write(&prefix, &ctx.cfg)?;
            ctx.report(format!("wrote {}", m.outputs.join(", ")), json!({"outputs": m.outputs}));
        }
        Command::DetailRef { pair, out, weights } => {
            let prefix = required(out, &ctx.cfg.io.out, "out")?;
            ctx.cfg.io.out = Some(prefix.clone());
            let mut m = ctx.manifest("detail-ref");
            let (s10, s20) = load_pair(pair, &mut ctx, &mut m)?;
            let (n10, n20, _) = train::normalize_pair(&s10, &s20)?;
            let bank = ctx.kernels()?;
            let bundle =
                build_all_references(&n10, &n20, &bank.ten, &bank.twenty, ctx.cfg.detail.gamma, ctx.cfg.detail.radius)?;
            save(&bundle.detail, &with_suffix(&prefix, "_detail.bsr"), &mut m)?;
            if weights {
                for (band, wf) in BandId::TWENTY_M.iter().zip(&bundle.weights) {
                    let planes = (0..wf.channels()).map(|k| wf.plane(k).to_vec()).collect();
                    let stack = Stack::from_planes(wf.width, wf.height, BandId::TEN_M.to_vec(), n10.gsd(), planes)?;
                    save(&stack, &with_suffix(&prefix, &format!("_weights_{band}.bsr")), &mut m)?;
                }
            }
            m.write(&prefix, &ctx.cfg)?;
            ctx.report(format!("wrote {}", m.outputs.join(", ")), json!({"outputs": m.outputs}));
        }
        Command::Pretrain { scenes, out, train: o } => {
            apply_overrides(&mut ctx.cfg, o)?;
            let ckpt = required(out, &ctx.cfg.io.model, "out")?;
            ctx.cfg.io.model = Some(ckpt.clone());
            let mut m = ctx.manifest("pretrain");
            let dataset = scenes
                .iter()
                .map(|p| {
                    Ok((
                        load_bands(&with_suffix(p, "_10m.bsr"), &BandId::TEN_M, &mut m)?,
                        load_bands(&with_suffix(p, "_20m.bsr"), &BandId::TWENTY_M, &mut m)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let (net, log) = train::pretrain(&dataset, &ctx.cfg.train_config(), &ctx.kernels()?)?;
            save_checkpoint(&net, &ckpt)?;
            m.output(&ckpt);
            write_log(&log, &ckpt, &mut m)?;
            m.summary = Some(train_summary(&log, &net));
            m.write(&ckpt, &ctx.cfg)?;
            ctx.report(format!("wrote {} after {} steps", ckpt.display(), net.steps()), m.summary.clone().unwrap());
        }
        Command::Adapt { pair, model, out, train: o } => {
            apply_overrides(&mut ctx.cfg, o)?;
            let ckpt = required(out, &ctx.cfg.io.out, "out")?;
            ctx.cfg.io.out = Some(ckpt.clone());
            let mut m = ctx.manifest("adapt");
            let init = match model.or_else(|| ctx.cfg.io.model.clone()) {
                Some(p) => {
                    ctx.cfg.io.model = Some(p.clone());
                    m.input(&p)?;
                    load_checkpoint(&p)?
                }
                None => FusionNet::init(ctx.cfg.train.seed),
            };
            let (s10, s20) = load_pair(pair, &mut ctx, &mut m)?;
            let (net, log) = train::target_adapt(&init, &s10, &s20, &ctx.cfg.train_config(), &ctx.kernels()?)?;
            save_checkpoint(&net, &ckpt)?;
            m.output(&ckpt);
            write_log(&log, &ckpt, &mut m)?;
            m.summary = Some(train_summary(&log, &net));
            m.write(&ckpt, &ctx.cfg)?;
            ctx.report(format!("wrote {} after {} steps", ckpt.display(), net.steps()), m.summary.clone().unwrap());
        }
        Command::Fuse { pair, model, out, preview } => {
            let out = required(out, &ctx.cfg.io.out, "out")?;
            let model = required(model, &ctx.cfg.io.model, "model")?;
            ctx.cfg.io.out = Some(out.clone());
            ctx.cfg.io.model = Some(model.clone());
            let mut m = ctx.manifest("fuse");
            m.input(&model)?;
            let net = load_checkpoint(&model)?;
            let (s10, s20) = load_pair(pair, &mut ctx, &mut m)?;
            let fused = train::fuse(&net, &s10, &s20, ctx.cfg.ratio)?;
            save(&fused, &out, &mut m)?;
            if let Some(p) = preview {
                write_preview(&fused, [5, 3, 0], &p)?;
                m.output(&p);
            }
            m.write(&out, &ctx.cfg)?;
            ctx.report(format!("wrote {}", m.outputs.join(", ")), json!({"outputs": m.outputs}));
        }
        Command::Eval { pred, gt, window, out } => {
            let pred = required(pred, &None, "pred")?;
            let gt = required(gt, &ctx.cfg.io.gt, "gt")?;
            ctx.cfg.io.gt = Some(gt.clone());
            let mut m = ctx.manifest("eval");
            m.input(&pred)?;
            m.input(&gt)?;
            let p = load_stack(&pred)?;
            let g = load_stack(&gt)?;
            let report = evaluate_with_window(&p, &g, ctx.cfg.ratio, window)?;
            let csv = format!("{}\n{}\n", fullres::metrics::CSV_HEADER, report.csv_row());
            if let Some(path) = out {
                fs::write(&path, &csv).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                m.output(&path);
                m.summary = Some(serde_json::to_value(report).expect("report serializes"));
                m.write(&path, &ctx.cfg)?;
            }
            if ctx.json {
                println!("{}", serde_json::to_value(report).expect("report serializes"));
            } else {
                print!("{csv}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
