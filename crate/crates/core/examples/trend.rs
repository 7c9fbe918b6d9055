//! Trend table on synthetic scenes: bicubic against the three training schemes.
//!
//! `cargo run --release --example trend -- [iterations] [size] [lr] [seeds]`, seeds comma separated.

use std::time::Instant;

use fullres::metrics::evaluate;
use fullres::mtf::{self, MtfConfig};
use fullres::KernelBank;
use fullres::synth::{generate, SynthConfig};
use fullres::train::{fuse, target_adapt, Scheme, TrainConfig};
use fullres::FusionNet;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(200);
    let size: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(256);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2e-4);
    let seeds: Vec<u64> = args.get(4).map(|s| s.split(',').map(|v| v.parse().unwrap()).collect()).unwrap_or(vec![0, 1, 2]);
    let bank = KernelBank::default();
    for seed in seeds {
        let scene = generate(seed, size, &SynthConfig::default(), &MtfConfig::default()).unwrap();
        let bic = mtf::upsample(&scene.stack20, 2).unwrap();
        let m = evaluate(&bic, &scene.gt20, 2).unwrap();
        println!("seed {seed} bicubic  {m}");
        for scheme in [Scheme::Baseline, Scheme::Reversed, Scheme::Proposed] {
            let cfg = TrainConfig { scheme, iterations: iters, lr, seed, log_every: iters.max(1), ..TrainConfig::default() };
            let t = Instant::now();
            let (net, log) = target_adapt(&FusionNet::init(seed), &scene.stack10, &scene.stack20, &cfg, &bank).unwrap();
            let el = t.elapsed().as_secs_f64();
            let out = fuse(&net, &scene.stack10, &scene.stack20, 2).unwrap();
            let m = evaluate(&out, &scene.gt20, 2).unwrap();
            let last = log.entries.last().unwrap().loss;
            println!("seed {seed} {scheme:9} {m}  loss {:.4} {:.4} {:.4}  {el:.1}s", last.total, last.lp, last.det);
        }
    }
}
