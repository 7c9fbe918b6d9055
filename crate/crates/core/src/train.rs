//! Training schemes, pre-training, target-adaptive fine-tuning and inference.
//!
//! * `Baseline`: supervised at reduced scale. Both stacks are downgraded by
//!   the MTF chain, the network sees (10-m → 20-m, 20-m → 40-m → 20-m) inputs
//!   and the original 20-m stack is the reference.
//! * `Reversed`: the network runs at full resolution and its prediction is
//!   downgraded and compared with the 20-m input (spectral loss only).
//! * `Proposed`: `Reversed` plus the detail-injection term against the
//!   softmax-weighted 10-m detail reference.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detail::{self, DEFAULT_GAMMA, DEFAULT_RADIUS};
use crate::error::{Error, Result};
use crate::mtf::{self, KernelBank};
use crate::net::{
    loss_supervised, loss_total, AdamConfig, FusionNet, LossBreakdown, LossConfig, LossNorm, Tensor, OUTPUT_CHANNELS,
};
use crate::raster::{NormStats, Stack};
use crate::scalar::Real;

pub const DEFAULT_ITERATIONS: usize = 2000;
pub const DEFAULT_LR: f64 = 2e-4;
pub const DEFAULT_TILE: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Baseline,
    Reversed,
    Proposed,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Baseline => "baseline",
            Scheme::Reversed => "reversed",
            Scheme::Proposed => "proposed",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Scheme::Baseline),
            "reversed" => Ok(Scheme::Reversed),
            "proposed" => Ok(Scheme::Proposed),
            _ => Err(Error::config(format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub iterations: usize,
    pub lr: f64,
    pub beta: f64,
    pub gamma: f64,
    pub radius: usize,
    pub seed: u64,
    /// Training crop size on the network-input grid.
    pub tile: usize,
    pub log_every: usize,
    pub norm: LossNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: Scheme::Proposed,
            iterations: DEFAULT_ITERATIONS,
            lr: DEFAULT_LR,
            beta: crate::net::loss::DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            radius: DEFAULT_RADIUS,
            seed: 0,
            tile: DEFAULT_TILE,
            log_every: 10,
            norm: LossNorm::L1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tile == 0 || self.tile % 2 != 0 {
            return Err(Error::config(format!("train.tile must be even and positive, got {}", self.tile)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("train.lr must be positive, got {}", self.lr)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config(format!("loss.beta must be >= 0, got {}", self.beta)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::config(format!("detail.gamma must be >= 0, got {}", self.gamma)));
        }
        if self.radius == 0 {
            return Err(Error::config("detail.radius must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("train.log_every must be >= 1"));
        }
        Ok(())
    }

    fn loss(&self) -> LossConfig {
        LossConfig { beta: self.beta, norm: self.norm }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "iteration,total,lp,det,ms";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{},{:.3}\n", e.iteration, e.loss.total, e.loss.lp, e.loss.det, e.ms));
        }
        s
    }
}

thread_local! {
    static RAW_TEN_METER_READS: Cell<usize> = const { Cell::new(0) };
}

/// Number of direct full-resolution 10-m stack reads made by
/// [`prepare_inputs`] on this thread since the last reset. Reads inside the
/// downgrade operator are not counted.
pub fn raw_ten_meter_reads() -> usize {
    RAW_TEN_METER_READS.with(Cell::get)
}

pub fn reset_raw_ten_meter_reads() {
    RAW_TEN_METER_READS.with(|c| c.set(0));
}

fn raw_ten_meter<T>(stack: &Stack<T>) -> &Stack<T> {
    RAW_TEN_METER_READS.with(|c| c.set(c.get() + 1));
    stack
}

/// Loss reference for one scheme.
#[derive(Clone, Debug)]
pub enum TrainTarget<T> {
    /// Same-grid reference (Baseline).
    Reference(Tensor<T>),
    /// Coarse 20-m input for the spectral loss plus the optional detail
    /// reference on the prediction grid.
    Cycle { input20: Tensor<T>, detail: Option<Tensor<T>> },
}

/// Network input and loss target; a single scene or a mini-batch of tiles.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub input: Tensor<T>,
    pub target: TrainTarget<T>,
}

/// Builds the network input and loss targets of `scheme` from a normalized
/// 10-m / 20-m pair.
pub fn prepare_inputs<T: Real>(
    stack10: &Stack<T>,
    stack20: &Stack<T>,
    scheme: Scheme,
    kernels: &KernelBank<T>,
    gamma: f64,
    radius: usize,
) -> Result<Batch<T>> {
    let r = kernels.ratio;
    if stack10.width() != stack20.width() * r || stack10.height() != stack20.height() * r {
        return Err(Error::shape(format!(
            "10-m stack {}x{} is not {r}x the 20-m stack {}x{}",
            stack10.width(),
            stack10.height(),
            stack20.width(),
            stack20.height()
        )));
    }
    let target20 = Tensor::from_stacks(&[stack20])?;
    match scheme {
        Scheme::Baseline => {
            let (lr10, lr20) = mtf::wald_downgrade(stack10, stack20, &kernels.ten, &kernels.twenty, r)?;
            let up = mtf::upsample(&lr20, r)?;
            Ok(Batch { input: Tensor::from_stacks(&[&lr10, &up])?, target: TrainTarget::Reference(target20) })
        }
        Scheme::Reversed | Scheme::Proposed => {
            let up = mtf::upsample(stack20, r)?;
            let input = Tensor::from_stacks(&[raw_ten_meter(stack10), &up])?;
            let detail = if scheme == Scheme::Proposed {
                let bundle = detail::build_all_references(
                    raw_ten_meter(stack10),
                    stack20,
                    &kernels.ten,
                    &kernels.twenty,
                    gamma,
                    radius,
                )?;
                Some(Tensor::from_stacks(&[&bundle.detail])?)
            } else {
                None
            };
            Ok(Batch { input, target: TrainTarget::Cycle { input20: target20, detail } })
        }
    }
}

/// Normalizes both stacks with their own statistics.
pub fn normalize_pair<T: Real>(stack10: &Stack<T>, stack20: &Stack<T>) -> Result<(Stack<T>, Stack<T>, NormStats)> {
    let (n10, _) = stack10.normalize()?;
    let (n20, stats20) = stack20.normalize()?;
    Ok((n10, n20, stats20))
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.input.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Crop of every tensor at `(x, y)` of size `tile` on the input grid.
    fn crop(&self, x: usize, y: usize, tile: usize, ratio: usize) -> Result<Batch<T>> {
        let input = self.input.crop(x, y, tile, tile)?;
        let target = match &self.target {
            TrainTarget::Reference(gt) => TrainTarget::Reference(gt.crop(x, y, tile, tile)?),
            TrainTarget::Cycle { input20, detail } => TrainTarget::Cycle {
                input20: input20.crop(x / ratio, y / ratio, tile / ratio, tile / ratio)?,
                detail: detail.as_ref().map(|d| d.crop(x, y, tile, tile)).transpose()?,
            },
        };
        Ok(Batch { input, target })
    }

    fn concat(parts: Vec<Batch<T>>) -> Result<Batch<T>> {
        let inputs: Vec<Tensor<T>> = parts.iter().map(|p| p.input.clone()).collect();
        let input = Tensor::concat_batch(&inputs)?;
        let target = match &parts[0].target {
            TrainTarget::Reference(_) => {
                let gts = parts
                    .iter()
                    .map(|p| match &p.target {
                        TrainTarget::Reference(g) => Ok(g.clone()),
                        _ => Err(Error::shape("mixed batch targets")),
                    })
                    .collect::<Result<Vec<_>>>()?;
                TrainTarget::Reference(Tensor::concat_batch(&gts)?)
            }
            TrainTarget::Cycle { detail, .. } => {
                let with_detail = detail.is_some();
                let mut coarse = Vec::new();
                let mut details = Vec::new();
                for p in &parts {
                    let TrainTarget::Cycle { input20, detail } = &p.target else {
                        return Err(Error::shape("mixed batch targets"));
                    };
                    coarse.push(input20.clone());
                    if let Some(d) = detail {
                        details.push(d.clone());
                    }
                }
                TrainTarget::Cycle {
                    input20: Tensor::concat_batch(&coarse)?,
                    detail: with_detail.then(|| Tensor::concat_batch(&details)).transpose()?,
                }
            }
        };
        Ok(Batch { input, target })
    }

    /// Non-overlapping tiles of a one-sample batch as a single mini-batch;
    /// remainders are discarded.
    pub fn tiled(&self, tile: usize, ratio: usize) -> Result<Batch<T>> {
        if tile == 0 || tile % ratio != 0 {
            return Err(Error::config(format!("tile {tile} must be a positive multiple of {ratio}")));
        }
        let (w, h) = (self.input.width(), self.input.height());
        if w < tile || h < tile {
            return Err(Error::shape(format!("scene {w}x{h} smaller than one {tile}x{tile} tile")));
        }
        let mut parts = Vec::new();
        for ty in 0..h / tile {
            for tx in 0..w / tile {
                parts.push(self.crop(tx * tile, ty * tile, tile, ratio)?);
            }
        }
        Self::concat(parts)
    }

    /// Random `tile x tile` crop aligned to the coarse grid.
    pub fn random_crop(&self, rng: &mut impl Rng, tile: usize, ratio: usize) -> Result<Batch<T>> {
        let (w, h) = (self.input.width(), self.input.height());
        if w < tile || h < tile || tile % ratio != 0 {
            return Err(Error::shape(format!("cannot crop {tile}x{tile} from {w}x{h}")));
        }
        let x = rng.gen_range(0..=(w - tile) / ratio) * ratio;
        let y = rng.gen_range(0..=(h - tile) / ratio) * ratio;
        self.crop(x, y, tile, ratio)
    }
}

/// One forward/backward/Adam step on `batch`.
pub fn train_step<T: Real>(
    net: &mut FusionNet<T>,
    batch: &Batch<T>,
    config: &TrainConfig,
    kernels: &KernelBank<T>,
) -> Result<LossBreakdown> {
    let (pred, cache) = net.forward_cached(&batch.input)?;
    let (loss, grad) = match &batch.target {
        TrainTarget::Reference(gt) => loss_supervised(&pred, gt, config.norm)?,
        TrainTarget::Cycle { input20, detail } => {
            loss_total(&pred, input20, detail.as_ref(), &kernels.twenty, kernels.ratio, &config.loss())?
        }
    };
    if !loss.total.is_finite() || !grad.is_finite() {
        return Err(Error::numeric(format!(
            "training diverged at step {} (loss {})",
            net.steps() + 1,
            loss.total
        )));
    }
    let grads = net.backward(&cache, &grad)?;
    net.adam_step(&grads, config.lr, &AdamConfig::default())?;
    if net.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::numeric(format!("non-finite parameters after step {}", net.steps())));
    }
    Ok(loss)
}

fn should_log(i: usize, total: usize, every: usize) -> bool {
    (i - 1) % every == 0 || i == total
}

fn run_steps<'a, T: Real>(
    net: &mut FusionNet<T>,
    config: &TrainConfig,
    kernels: &KernelBank<T>,
    mut next_batch: impl FnMut() -> Result<std::borrow::Cow<'a, Batch<T>>>,
) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    for i in 1..=config.iterations {
        let start = Instant::now();
        let batch = next_batch()?;
        let loss = train_step(net, &batch, config, kernels)?;
        if should_log(i, config.iterations, config.log_every) {
            log.entries.push(LogEntry { iteration: i, loss, ms: start.elapsed().as_secs_f64() * 1e3 });
        }
    }
    Ok(log)
}

/// Trains a freshly initialized network on random tile crops drawn from the
/// scenes (raw, un-normalized 10-m / 20-m pairs), one crop per step.
pub fn pretrain<T: Real>(
    dataset: &[(Stack<T>, Stack<T>)],
    config: &TrainConfig,
    kernels: &KernelBank<T>,
) -> Result<(FusionNet<T>, TrainLog)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::config("pretrain: empty dataset"));
    }
    if config.iterations == 0 {
        return Err(Error::config("train.iterations must be >= 1"));
    }
    let scenes = dataset
        .iter()
        .map(|(s10, s20)| {
            let (n10, n20, _) = normalize_pair(s10, s20)?;
            prepare_inputs(&n10, &n20, config.scheme, kernels, config.gamma, config.radius)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = FusionNet::init(config.seed);
    let log = run_steps(&mut net, config, kernels, || {
        let scene = &scenes[rng.gen_range(0..scenes.len())];
        scene.random_crop(&mut rng, config.tile, kernels.ratio).map(std::borrow::Cow::Owned)
    })?;
    Ok((net, log))
}

/// Fine-tunes `net` on one target scene: the scene is tiled once into a fixed
/// mini-batch and `config.iterations` steps run on it.
pub fn target_adapt<T: Real>(
    net: &FusionNet<T>,
    stack10: &Stack<T>,
    stack20: &Stack<T>,
    config: &TrainConfig,
    kernels: &KernelBank<T>,
) -> Result<(FusionNet<T>, TrainLog)> {
    config.validate()?;
    let mut net = net.clone();
    if config.iterations == 0 {
        return Ok((net, TrainLog::default()));
    }
    let (n10, n20, _) = normalize_pair(stack10, stack20)?;
    let scene = prepare_inputs(&n10, &n20, config.scheme, kernels, config.gamma, config.radius)?;
    let batch = scene.tiled(config.tile, kernels.ratio)?;
    let log = run_steps(&mut net, config, kernels, || Ok(std::borrow::Cow::Borrowed(&batch)))?;
    Ok((net, log))
}

/// Super-resolves the 20-m bands: both stacks are normalized with their own
/// statistics, the 20-m bands upsampled, the network applied, and the 20-m
/// statistics restored on the output.
pub fn fuse<T: Real>(net: &FusionNet<T>, stack10: &Stack<T>, stack20: &Stack<T>, ratio: usize) -> Result<Stack<T>> {
    if stack10.width() != stack20.width() * ratio || stack10.height() != stack20.height() * ratio {
        return Err(Error::shape(format!(
            "10-m stack {}x{} is not {ratio}x the 20-m stack {}x{}",
            stack10.width(),
            stack10.height(),
            stack20.width(),
            stack20.height()
        )));
    }
    if stack20.band_count() != OUTPUT_CHANNELS {
        return Err(Error::shape(format!("expected {OUTPUT_CHANNELS} 20-m bands, got {}", stack20.band_count())));
    }
    let (n10, n20, stats20) = normalize_pair(stack10, stack20)?;
    let up = mtf::upsample(&n20, ratio)?;
    let input = Tensor::from_stacks(&[&n10, &up])?;
    let pred = net.forward(&input)?;
    pred.to_stack(0, stack20.bands().to_vec(), stack10.gsd())?.denormalize(&stats20)
}
