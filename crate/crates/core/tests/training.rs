use fullres::mtf::{KernelBank, MtfConfig};
use fullres::net::FusionNet;
use fullres::synth::{generate, SynthConfig, SynthScene};
use fullres::train::{fuse, target_adapt, Scheme, TrainConfig, TrainLog};
use fullres::Error;

fn scene(seed: u64) -> SynthScene {
    generate(seed, 64, &SynthConfig::default(), &MtfConfig::default()).unwrap()
}

fn adapt(scheme: Scheme, iterations: usize, lr: f64) -> Result<(FusionNet<f32>, TrainLog), Error> {
    let s = scene(21);
    let cfg = TrainConfig { scheme, iterations, lr, tile: 32, seed: 3, log_every: 1, ..TrainConfig::default() };
    target_adapt(&FusionNet::init(3), &s.stack10, &s.stack20, &cfg, &KernelBank::default())
}

fn mean_total(log: &TrainLog, range: std::ops::Range<usize>) -> f64 {
    let e = &log.entries[range];
    e.iter().map(|e| e.loss.total).sum::<f64>() / e.len() as f64
}

#[test]
fn loss_moving_average_falls() {
    for scheme in [Scheme::Baseline, Scheme::Reversed, Scheme::Proposed] {
        let (_, log) = adapt(scheme, 150, 1e-3).unwrap();
        assert_eq!(log.entries.len(), 150);
        let (head, tail) = (mean_total(&log, 0..20), mean_total(&log, 130..150));
        assert!(tail < 0.8 * head, "{scheme}: {head} -> {tail}");
    }
}

#[test]
fn log_is_finite_and_monotone() {
    let (_, log) = adapt(Scheme::Proposed, 25, 2e-4).unwrap();
    let its: Vec<usize> = log.entries.iter().map(|e| e.iteration).collect();
    assert_eq!(its, (1..=25).collect::<Vec<_>>());
    for e in &log.entries {
        assert!(e.loss.total.is_finite() && e.loss.lp.is_finite() && e.loss.det.is_finite());
        assert!((e.loss.total - (e.loss.lp + 0.25 * e.loss.det)).abs() <= 1e-6);
    }
    let csv = log.to_csv();
    assert!(csv.starts_with("iteration,total,lp,det,ms\n"));
    assert_eq!(csv.lines().count(), 26);
}

#[test]
fn adaptation_is_reproducible() {
    for scheme in [Scheme::Baseline, Scheme::Proposed] {
        let (a, la) = adapt(scheme, 20, 1e-3).unwrap();
        let (b, lb) = adapt(scheme, 20, 1e-3).unwrap();
        assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let totals = |l: &TrainLog| l.entries.iter().map(|e| e.loss.total.to_bits()).collect::<Vec<_>>();
        assert_eq!(totals(&la), totals(&lb));
    }
}

#[test]
fn divergence_is_reported_not_propagated() {
    let err = adapt(Scheme::Reversed, 50, 1e30).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
    assert!(err.to_string().starts_with("numeric:"), "{err}");
}

#[test]
fn adapted_net_beats_interpolation() {
    let s = scene(21);
    let (net, _) = adapt(Scheme::Proposed, 150, 1e-3).unwrap();
    let fused = fuse(&net, &s.stack10, &s.stack20, 2).unwrap();
    let untrained = fuse(&FusionNet::zeroed(), &s.stack10, &s.stack20, 2).unwrap();
    let err = |p: &fullres::raster::Stack<f32>| {
        p.data().iter().zip(s.gt20.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>()
    };
    assert!(err(&fused) < err(&untrained), "{} vs {}", err(&fused), err(&untrained));
}
