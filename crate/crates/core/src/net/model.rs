use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conv::{self, Padded, TAPS};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Input channels: four 10-m bands followed by six upsampled 20-m bands.
pub const INPUT_CHANNELS: usize = 10;
pub const OUTPUT_CHANNELS: usize = 6;
/// First input channel carried by the residual skip.
pub const SKIP_OFFSET: usize = 4;

/// `(in, out)` channels of the three 3x3 convolutions.
pub const ARCHITECTURE: [(usize, usize); 3] = [(INPUT_CHANNELS, 48), (48, 24), (24, OUTPUT_CHANNELS)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl LayerShape {
    fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    fn len(&self) -> usize {
        self.weight_len() + self.cout
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

/// Three-layer residual CNN: conv(10→48)+ReLU, conv(48→24)+ReLU,
/// conv(24→6), plus the upsampled 20-m input channels.
///
/// All parameters live in one flat vector: for each layer its weights
/// (`cout x cin x 3 x 3`) followed by its biases.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionNet<T> {
    layers: Vec<LayerShape>,
    params: Vec<T>,
    seed: u64,
    steps: u64,
    adam: AdamState<T>,
    version: u64,
}

/// Parameter gradients, laid out like [`FusionNet::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub data: Vec<T>,
}

impl<T: Real> Gradients<T> {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.f64().abs()).fold(0.0, f64::max)
    }
}

/// Activations retained by [`FusionNet::forward_cached`] for backprop.
pub struct ForwardCache<T> {
    version: u64,
    shape: [usize; 4],
    /// Zero-bordered input of every layer, per sample (post-ReLU for the
    /// hidden layers).
    inputs: Vec<Vec<Vec<T>>>,
}

fn architecture() -> Vec<LayerShape> {
    ARCHITECTURE
        .iter()
        .map(|&(cin, cout)| LayerShape { cin, cout, kernel: conv::K })
        .collect()
}

impl<T: Real> FusionNet<T> {
    /// He-uniform weights from a seeded ChaCha8 stream, zero biases.
    pub fn init(seed: u64) -> Self {
        let layers = architecture();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.iter().map(LayerShape::len).sum());
        for l in &layers {
            let bound = (6.0 / (l.cin * TAPS) as f64).sqrt();
            params.extend((0..l.weight_len()).map(|_| T::of(rng.gen_range(-bound..bound))));
            params.extend((0..l.cout).map(|_| T::zero()));
        }
        Self::from_parts(layers, params, seed, 0)
    }

    fn from_parts(layers: Vec<LayerShape>, params: Vec<T>, seed: u64, steps: u64) -> Self {
        let n = params.len();
        FusionNet {
            layers,
            params,
            seed,
            steps,
            adam: AdamState { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 },
            version: 0,
        }
    }

    /// Rebuilds a network from stored parameters; optimizer state starts fresh.
    pub fn from_params(layers: Vec<LayerShape>, params: Vec<T>, seed: u64, steps: u64) -> Result<Self> {
        if layers != architecture() {
            return Err(Error::shape(format!("unsupported layer layout {layers:?}")));
        }
        let expected: usize = layers.iter().map(LayerShape::len).sum();
        if params.len() != expected {
            return Err(Error::shape(format!("{} parameters, expected {expected}", params.len())));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite parameter"));
        }
        Ok(Self::from_parts(layers, params, seed, steps))
    }

    /// Network whose convolution stack outputs zero everywhere.
    pub fn zeroed() -> Self {
        let layers = architecture();
        let n = layers.iter().map(LayerShape::len).sum();
        Self::from_parts(layers, vec![T::zero(); n], 0, 0)
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.version += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Optimizer steps applied over the network's lifetime.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.layers.len());
        let mut o = 0;
        for l in &self.layers {
            off.push(o);
            o += l.len();
        }
        off
    }

    fn layer_params(&self, i: usize) -> (&[T], &[T]) {
        let o = self.offsets()[i];
        let l = self.layers[i];
        let w = &self.params[o..o + l.weight_len()];
        let b = &self.params[o + l.weight_len()..o + l.len()];
        (w, b)
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels() != INPUT_CHANNELS {
            return Err(Error::shape(format!(
                "network expects {INPUT_CHANNELS} input channels, got {}",
                input.channels()
            )));
        }
        if input.batch() == 0 || input.plane_len() == 0 {
            return Err(Error::shape("empty input tensor"));
        }
        Ok(())
    }

    /// Runs the conv stack on one sample, optionally keeping every padded
    /// layer input, and adds the skip channels.
    fn run_sample(&self, sample: &[T], h: usize, w: usize, keep: bool) -> (Vec<Vec<T>>, Vec<T>) {
        let geo = Padded::new(h, w);
        let mut inputs = Vec::new();
        let mut x = geo.pad(sample, INPUT_CHANNELS);
        for (i, l) in self.layers.iter().enumerate() {
            let (wt, bias) = self.layer_params(i);
            let mut y = vec![T::zero(); l.cout * geo.plane()];
            conv::conv_forward(&x, l.cin, geo, wt, bias, &mut y);
            if i + 1 < self.layers.len() {
                relu(&mut y);
            }
            if keep {
                inputs.push(x);
            }
            x = y;
        }
        let mut out = geo.unpad(&x, OUTPUT_CHANNELS);
        for (v, &k) in out.iter_mut().zip(&sample[SKIP_OFFSET * h * w..]) {
            *v += k;
        }
        (inputs, out)
    }

    /// Prediction on the 10-m grid: conv stack output plus input channels 4..10.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let [b, _, h, w] = input.shape();
        let hw = h * w;
        let mut out = Tensor::zeros([b, OUTPUT_CHANNELS, h, w]);
        out.data_mut()
            .par_chunks_exact_mut(OUTPUT_CHANNELS * hw)
            .enumerate()
            .for_each(|(s, o)| o.copy_from_slice(&self.run_sample(input.sample(s), h, w, false).1));
        Ok(out)
    }

    /// Forward pass that keeps what [`FusionNet::backward`] needs.
    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let [b, _, h, w] = input.shape();
        let per_sample: Vec<(Vec<Vec<T>>, Vec<T>)> =
            (0..b).into_par_iter().map(|s| self.run_sample(input.sample(s), h, w, true)).collect();

        let mut inputs: Vec<Vec<Vec<T>>> = vec![Vec::with_capacity(b); self.layers.len()];
        let mut out = Vec::with_capacity(b * OUTPUT_CHANNELS * h * w);
        for (x, y) in per_sample {
            for (slot, a) in inputs.iter_mut().zip(x) {
                slot.push(a);
            }
            out.extend(y);
        }
        let out = Tensor::new([b, OUTPUT_CHANNELS, h, w], out)?;
        Ok((out, ForwardCache { version: self.version, shape: input.shape(), inputs }))
    }

    /// Parameter gradients of `<upstream, forward(input)>`.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &Tensor<T>) -> Result<Gradients<T>> {
        self.backward_impl(cache, upstream, false).map(|(g, _)| g)
    }

    /// Like [`FusionNet::backward`], also returning the gradient with respect
    /// to the network input (the skip path contributes to channels 4..10).
    pub fn backward_with_input(&self, cache: &ForwardCache<T>, upstream: &Tensor<T>) -> Result<(Gradients<T>, Tensor<T>)> {
        let (g, x) = self.backward_impl(cache, upstream, true)?;
        Ok((g, x.expect("input gradient requested")))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        upstream: &Tensor<T>,
        want_input: bool,
    ) -> Result<(Gradients<T>, Option<Tensor<T>>)> {
        if cache.version != self.version {
            return Err(Error::shape("stale forward cache: parameters changed since the forward pass"));
        }
        let [b, _, h, w] = cache.shape;
        if upstream.shape() != [b, OUTPUT_CHANNELS, h, w] {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                [b, OUTPUT_CHANNELS, h, w]
            )));
        }
        let hw = h * w;
        let geo = Padded::new(h, w);
        let n_layers = self.layers.len();
        let offsets = self.offsets();

        let per_sample: Vec<(Vec<T>, Option<Vec<T>>)> = (0..b)
            .into_par_iter()
            .map(|s| {
                let mut grads = vec![T::zero(); self.params.len()];
                let mut g = geo.pad(upstream.sample(s), OUTPUT_CHANNELS);
                for i in (0..n_layers).rev() {
                    let l = self.layers[i];
                    let o = offsets[i];
                    let x = &cache.inputs[i][s];
                    let (dw, db) = grads[o..o + l.len()].split_at_mut(l.weight_len());
                    conv::conv_weight_grad(x, l.cin, geo, &g, dw, db);
                    if i == 0 && !want_input {
                        break;
                    }
                    let mut gx = conv::conv_input_grad(&g, l.cout, geo, self.layer_params(i).0, l.cin);
                    if i > 0 {
                        for (d, &a) in gx.iter_mut().zip(x) {
                            if a <= T::zero() {
                                *d = T::zero();
                            }
                        }
                    }
                    g = gx;
                }
                let input_grad = want_input.then(|| {
                    let mut gi = geo.unpad(&g, INPUT_CHANNELS);
                    for (d, &u) in gi[SKIP_OFFSET * hw..].iter_mut().zip(upstream.sample(s)) {
                        *d += u;
                    }
                    gi
                });
                (grads, input_grad)
            })
            .collect();

        let mut total = vec![T::zero(); self.params.len()];
        let mut input_grad = want_input.then(|| Vec::with_capacity(b * INPUT_CHANNELS * hw));
        for (g, x) in per_sample {
            for (t, v) in total.iter_mut().zip(g) {
                *t += v;
            }
            if let (Some(acc), Some(x)) = (input_grad.as_mut(), x) {
                acc.extend(x);
            }
        }
        let input_grad = input_grad.map(|d| Tensor::new([b, INPUT_CHANNELS, h, w], d)).transpose()?;
        Ok((Gradients { data: total }, input_grad))
    }

    /// Bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &Gradients<T>, lr: f64, cfg: &AdamConfig) -> Result<()> {
        if grads.data.len() != self.params.len() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters",
                grads.data.len(),
                self.params.len()
            )));
        }
        let st = &mut self.adam;
        st.t += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let c1 = T::one() - T::of(cfg.beta1.powi(st.t as i32));
        let c2 = T::one() - T::of(cfg.beta2.powi(st.t as i32));
        let (lr, eps) = (T::of(lr), T::of(cfg.eps));
        for (((p, &g), m), v) in self.params.iter_mut().zip(&grads.data).zip(&mut st.m).zip(&mut st.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        self.steps += 1;
        self.version += 1;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> FusionNet<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        FusionNet {
            layers: self.layers.clone(),
            params: conv(&self.params),
            seed: self.seed,
            steps: self.steps,
            adam: AdamState { m: conv(&self.adam.m), v: conv(&self.adam.v), t: self.adam.t },
            version: 0,
        }
    }
}

fn relu<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(b: usize, h: usize, w: usize, seed: f64) -> Tensor<f64> {
        let n = b * INPUT_CHANNELS * h * w;
        Tensor::new([b, INPUT_CHANNELS, h, w], (0..n).map(|i| ((i as f64 + seed) * 0.731).sin()).collect()).unwrap()
    }

    #[test]
    fn init_is_seeded() {
        let a = FusionNet::<f32>::init(7);
        assert_eq!(a, FusionNet::<f32>::init(7));
        assert_ne!(a.params(), FusionNet::<f32>::init(8).params());
        for i in 0..3 {
            assert!(a.layer_params(i).1.iter().all(|&b| b == 0.0));
        }
        let expected: usize = ARCHITECTURE.iter().map(|&(i, o)| o * i * 9 + o).sum();
        assert_eq!(a.param_count(), expected);
    }

    #[test]
    fn zeroed_net_is_skip_identity() {
        let net = FusionNet::<f64>::zeroed();
        let x = input(2, 5, 4, 0.0);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), [2, 6, 5, 4]);
        assert_eq!(y, x.channel_slice(SKIP_OFFSET, 6).unwrap());
    }

    #[test]
    fn cached_forward_matches_plain() {
        let net = FusionNet::<f64>::init(1);
        let x = input(2, 6, 6, 1.0);
        let (y, _) = net.forward_cached(&x).unwrap();
        assert_eq!(y, net.forward(&x).unwrap());
    }

    #[test]
    fn wrong_channel_count() {
        let net = FusionNet::<f64>::init(1);
        let x = Tensor::<f64>::zeros([1, 9, 4, 4]);
        assert!(matches!(net.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_zero_grads_and_stale_cache() {
        let mut net = FusionNet::<f64>::init(2);
        let x = input(1, 4, 4, 2.0);
        let (_, cache) = net.forward_cached(&x).unwrap();
        let g = net.backward(&cache, &Tensor::zeros([1, 6, 4, 4])).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
        net.adam_step(&g, 1e-3, &AdamConfig::default()).unwrap();
        assert!(net.backward(&cache, &Tensor::zeros([1, 6, 4, 4])).is_err());
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut net = FusionNet::<f64>::init(3);
        let before = net.params().to_vec();
        let g: Vec<f64> = (0..net.param_count()).map(|i| ((i % 7) as f64 - 3.0) * 1e-3).collect();
        let lr = 1e-2;
        net.adam_step(&Gradients { data: g.clone() }, lr, &AdamConfig::default()).unwrap();
        for ((p, q), gi) in net.params().iter().zip(&before).zip(&g) {
            let expected = -lr * gi / (gi.abs() + 1e-8);
            assert!((p - q - expected).abs() < 1e-12, "{} vs {expected}", p - q);
        }
        assert_eq!(net.steps(), 1);
        assert!(net.adam_step(&Gradients { data: vec![0.0; 3] }, lr, &AdamConfig::default()).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut net = FusionNet::<f32>::init(4);
        let before = net.params().to_vec();
        let zeros = Gradients { data: vec![0.0; net.param_count()] };
        net.adam_step(&zeros, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(net.params(), &before[..]);
    }
}
