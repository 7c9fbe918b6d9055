//! Training losses with their exact gradients with respect to the prediction.
//!
//! * supervised: `|pred - gt|`
//! * spectral (cycle-consistency): `|decimate(lowpass(pred)) - input20|`
//! * detail: `|highpass(pred) - D|`
//! * total: `lp + beta * det`

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::filter;
use crate::mtf::MtfKernel;
use crate::scalar::Real;

pub const DEFAULT_BETA: f64 = 0.25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossNorm {
    #[default]
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub beta: f64,
    pub norm: LossNorm,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { beta: DEFAULT_BETA, norm: LossNorm::L1 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config(format!("loss.beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub lp: f64,
    pub det: f64,
}

/// Mean penalty of `residual` and its gradient, written into `residual`.
fn penalize<T: Real>(residual: &mut [T], count: usize, norm: LossNorm) -> f64 {
    let n = count as f64;
    let inv = T::of(1.0 / n);
    match norm {
        LossNorm::L1 => {
            let mut acc = 0.0;
            for r in residual.iter_mut() {
                acc += r.f64().abs();
                *r = if *r > T::zero() {
                    inv
                } else if *r < T::zero() {
                    -inv
                } else {
                    T::zero()
                };
            }
            acc / n
        }
        LossNorm::L2 => {
            let two = T::of(2.0 / n);
            let mut acc = 0.0;
            for r in residual.iter_mut() {
                acc += r.f64() * r.f64();
                *r = two * *r;
            }
            acc / n
        }
    }
}

fn check_kernels<T: Real>(pred: &Tensor<T>, kernels: &[MtfKernel<T>]) -> Result<()> {
    if kernels.len() != pred.channels() {
        return Err(Error::shape(format!(
            "{} kernels for {} prediction channels",
            kernels.len(),
            pred.channels()
        )));
    }
    Ok(())
}

/// Supervised loss against a same-grid reference.
pub fn loss_supervised<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>, norm: LossNorm) -> Result<(LossBreakdown, Tensor<T>)> {
    pred.check_same_shape(gt, "prediction vs reference")?;
    let mut r: Vec<T> = pred.data().iter().zip(gt.data()).map(|(&p, &g)| p - g).collect();
    let n = r.len();
    let value = penalize(&mut r, n, norm);
    Ok((LossBreakdown { total: value, lp: value, det: 0.0 }, Tensor::new(pred.shape(), r)?))
}

/// Spectral cycle-consistency loss between the MTF-downgraded prediction and
/// the coarse input bands.
pub fn loss_lp<T: Real>(
    pred: &Tensor<T>,
    input20: &Tensor<T>,
    kernels20: &[MtfKernel<T>],
    ratio: usize,
    norm: LossNorm,
) -> Result<(f64, Tensor<T>)> {
    check_kernels(pred, kernels20)?;
    let [b, c, h, w] = pred.shape();
    if ratio == 0 || input20.shape() != [b, c, h / ratio, w / ratio] || h % ratio != 0 || w % ratio != 0 {
        return Err(Error::shape(format!(
            "prediction {:?} is not {ratio}x the coarse input {:?}",
            pred.shape(),
            input20.shape()
        )));
    }
    let (hl, wl) = (h / ratio, w / ratio);
    let mut residual = Vec::with_capacity(input20.data().len());
    for s in 0..b {
        for ch in 0..c {
            let lp = kernels20[ch].apply(pred.plane(s, ch), w, h);
            let dec = filter::decimate_plane(&lp, w, h, ratio);
            residual.extend(dec.iter().zip(input20.plane(s, ch)).map(|(&p, &q)| p - q));
        }
    }
    let n = residual.len();
    let value = penalize(&mut residual, n, norm);
    let mut grad = Tensor::zeros(pred.shape());
    for s in 0..b {
        for ch in 0..c {
            let off = (s * c + ch) * hl * wl;
            let stuffed = filter::zero_stuff_plane(&residual[off..off + hl * wl], wl, hl, ratio);
            let g = kernels20[ch].apply_adjoint(&stuffed, w, h);
            grad.plane_mut(s, ch).copy_from_slice(&g);
        }
    }
    Ok((value, grad))
}

/// Detail-injection loss between the high-pass of the prediction (with the
/// given per-channel kernels) and the reference detail.
pub fn loss_det<T: Real>(
    pred: &Tensor<T>,
    detail: &Tensor<T>,
    kernels: &[MtfKernel<T>],
    norm: LossNorm,
) -> Result<(f64, Tensor<T>)> {
    check_kernels(pred, kernels)?;
    pred.check_same_shape(detail, "prediction vs detail reference")?;
    let [b, c, h, w] = pred.shape();
    let mut residual = Vec::with_capacity(pred.data().len());
    for s in 0..b {
        for ch in 0..c {
            let p = pred.plane(s, ch);
            let lp = kernels[ch].apply(p, w, h);
            residual.extend(p.iter().zip(&lp).zip(detail.plane(s, ch)).map(|((&x, &l), &d)| x - l - d));
        }
    }
    let n = residual.len();
    let value = penalize(&mut residual, n, norm);
    let mut grad = Tensor::new(pred.shape(), residual)?;
    for s in 0..b {
        for ch in 0..c {
            let g = grad.plane(s, ch).to_vec();
            let back = kernels[ch].apply_adjoint(&g, w, h);
            for ((o, &gi), bi) in grad.plane_mut(s, ch).iter_mut().zip(&g).zip(back) {
                *o = gi - bi;
            }
        }
    }
    Ok((value, grad))
}

/// `lp + beta * det` and the matching gradient. Without a detail reference
/// the detail term is absent and only the spectral loss is used.
pub fn loss_total<T: Real>(
    pred: &Tensor<T>,
    input20: &Tensor<T>,
    detail: Option<&Tensor<T>>,
    kernels20: &[MtfKernel<T>],
    ratio: usize,
    config: &LossConfig,
) -> Result<(LossBreakdown, Tensor<T>)> {
    config.validate()?;
    let (lp, mut grad) = loss_lp(pred, input20, kernels20, ratio, config.norm)?;
    let Some(detail) = detail else {
        return Ok((LossBreakdown { total: lp, lp, det: 0.0 }, grad));
    };
    let (det, gdet) = loss_det(pred, detail, kernels20, config.norm)?;
    // beta = 0 leaves the spectral gradient untouched, bit for bit
    if config.beta != 0.0 {
        let beta = T::of(config.beta);
        for (g, &d) in grad.data_mut().iter_mut().zip(gdet.data()) {
            *g += beta * d;
        }
    }
    Ok((LossBreakdown { total: lp + config.beta * det, lp, det }, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtf::KernelBank;

    fn pseudo(shape: [usize; 4], s: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| ((i as f64 + s) * 1.37).sin()).collect()).unwrap()
    }

    #[test]
    fn supervised_examples() {
        let gt = pseudo([1, 2, 3, 3], 0.0);
        let (l, _) = loss_supervised(&gt, &gt, LossNorm::L1).unwrap();
        assert_eq!(l.total, 0.0);
        let shifted = Tensor::new(gt.shape(), gt.data().iter().map(|v| v + 1.0).collect()).unwrap();
        let (l, g) = loss_supervised(&shifted, &gt, LossNorm::L1).unwrap();
        assert!((l.total - 1.0).abs() < 1e-12);
        assert!(g.data().iter().all(|&v| (v - 1.0 / 18.0).abs() < 1e-15));
        assert!(loss_supervised(&gt, &pseudo([1, 2, 3, 4], 0.0), LossNorm::L1).is_err());
    }

    #[test]
    fn lp_constant_case() {
        let bank = KernelBank::<f64>::default();
        let pred = Tensor::new([1, 6, 8, 8], vec![0.75; 384]).unwrap();
        let input20 = Tensor::new([1, 6, 4, 4], vec![-0.5; 96]).unwrap();
        let (l, _) = loss_lp(&pred, &input20, &bank.twenty, 2, LossNorm::L1).unwrap();
        assert!((l - 1.25).abs() < 1e-12);
        assert!(loss_lp(&pred, &pred, &bank.twenty, 2, LossNorm::L1).is_err());
    }

    #[test]
    fn det_constant_prediction() {
        let bank = KernelBank::<f64>::default();
        let pred = Tensor::new([1, 6, 8, 8], vec![3.0; 384]).unwrap();
        let (l, _) = loss_det(&pred, &Tensor::zeros([1, 6, 8, 8]), &bank.twenty, LossNorm::L1).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn total_without_detail_is_lp() {
        let bank = KernelBank::<f64>::default();
        let pred = pseudo([1, 6, 8, 8], 1.0);
        let input20 = pseudo([1, 6, 4, 4], 2.0);
        let cfg = LossConfig::default();
        let (a, ga) = loss_total(&pred, &input20, None, &bank.twenty, 2, &cfg).unwrap();
        let (lp, glp) = loss_lp(&pred, &input20, &bank.twenty, 2, LossNorm::L1).unwrap();
        assert_eq!(a.total, lp);
        assert_eq!(ga, glp);
        let bad = LossConfig { beta: -1.0, ..cfg };
        assert!(loss_total(&pred, &input20, None, &bank.twenty, 2, &bad).is_err());
    }
}
