//! Reference detail generation for the 20-m bands.
//!
//! For each 20-m band `b` the local Pearson correlation with every low-passed
//! 10-m band `k` gives a vector field `x[i][j][k]`. A softmax with shrinking
//! parameter `gamma` turns it into per-pixel weights
//!
//! ```text
//! w[i][j][k] = exp(gamma * x[i][j][k]) / sum_h exp(gamma * x[i][j][h])
//! ```
//!
//! and the reference detail is the weighted average of the 10-m high-pass
//! components, `D[i][j] = sum_k w[i][j][k] * HP_k[i][j]`.

use crate::error::{Error, Result};
use crate::filter;
use crate::mtf::{self, MtfKernel};
use crate::raster::{BandId, Stack};
use crate::scalar::Real;

pub const DEFAULT_GAMMA: f64 = 5.0;
pub const DEFAULT_RADIUS: usize = 3;

/// Variance and denominator guard for the local correlation.
pub const CORRELATION_EPS: f64 = 1e-9;

/// Local correlations of one 20-m band against each 10-m band.
/// `data` holds one plane per 10-m band.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationField<T> {
    pub width: usize,
    pub height: usize,
    pub radius: usize,
    pub data: Vec<T>,
}

impl<T: Real> CorrelationField<T> {
    pub fn channels(&self) -> usize {
        self.data.len() / (self.width * self.height)
    }

    pub fn plane(&self, k: usize) -> &[T] {
        let n = self.width * self.height;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, x: usize, y: usize) -> T {
        self.plane(k)[y * self.width + x]
    }
}

/// Softmax weights over the 10-m bands, same layout as [`CorrelationField`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField<T> {
    pub width: usize,
    pub height: usize,
    pub gamma: f64,
    pub data: Vec<T>,
}

impl<T: Real> WeightField<T> {
    pub fn channels(&self) -> usize {
        self.data.len() / (self.width * self.height)
    }

    pub fn plane(&self, k: usize) -> &[T] {
        let n = self.width * self.height;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, x: usize, y: usize) -> T {
        self.plane(k)[y * self.width + x]
    }
}

/// Detail reference of a single 20-m band with its diagnostics.
#[derive(Clone, Debug)]
pub struct DetailEntry<T> {
    pub detail: Vec<T>,
    pub correlation: CorrelationField<T>,
    pub weights: WeightField<T>,
}

/// Detail references for all 20-m bands on the 10-m grid.
#[derive(Clone, Debug)]
pub struct DetailBundle<T> {
    /// One plane per 20-m band.
    pub detail: Stack<T>,
    pub correlations: Vec<CorrelationField<T>>,
    pub weights: Vec<WeightField<T>>,
}

/// Pearson correlation of `a` and `b` over every `(2r+1)^2` mirror-padded
/// window. Windows where either variance is below [`CORRELATION_EPS`] give 0.
pub fn local_correlation<T: Real>(a: &[T], b: &[T], w: usize, h: usize, radius: usize) -> Result<Vec<T>> {
    if a.len() != w * h || b.len() != w * h {
        return Err(Error::shape(format!(
            "correlation inputs of length {} and {} for a {w}x{h} grid",
            a.len(),
            b.len()
        )));
    }
    if radius == 0 {
        return Err(Error::config("correlation radius must be at least 1"));
    }
    let a: Vec<f64> = a.iter().map(|v| v.f64()).collect();
    let b: Vec<f64> = b.iter().map(|v| v.f64()).collect();
    let n = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let sa = filter::box_sum(&a, w, h, radius);
    let sb = filter::box_sum(&b, w, h, radius);
    let saa = filter::box_sum(&prod(&a, &a), w, h, radius);
    let sbb = filter::box_sum(&prod(&b, &b), w, h, radius);
    let sab = filter::box_sum(&prod(&a, &b), w, h, radius);
    let out = (0..w * h)
        .map(|i| {
            let (ma, mb) = (sa[i] / n, sb[i] / n);
            let va = saa[i] / n - ma * ma;
            let vb = sbb[i] / n - mb * mb;
            if va < CORRELATION_EPS || vb < CORRELATION_EPS {
                return T::zero();
            }
            let cov = sab[i] / n - ma * mb;
            T::of((cov / (va * vb).sqrt().max(CORRELATION_EPS)).clamp(-1.0, 1.0))
        })
        .collect();
    Ok(out)
}

/// Stacks [`local_correlation`] of `band20_up_lp` against each band of
/// `bands10_lp`.
pub fn correlation_field<T: Real>(
    band20_up_lp: &[T],
    bands10_lp: &Stack<T>,
    radius: usize,
) -> Result<CorrelationField<T>> {
    let (w, h) = (bands10_lp.width(), bands10_lp.height());
    if band20_up_lp.len() != w * h {
        return Err(Error::shape(format!(
            "20-m plane of length {} is not on the {w}x{h} 10-m grid",
            band20_up_lp.len()
        )));
    }
    let mut data = Vec::with_capacity(w * h * bands10_lp.band_count());
    for p in bands10_lp.planes() {
        data.extend(local_correlation(band20_up_lp, p, w, h, radius)?);
    }
    Ok(CorrelationField { width: w, height: h, radius, data })
}

/// Per-pixel softmax of `gamma * x` across the 10-m bands.
pub fn softmax_weights<T: Real>(field: &CorrelationField<T>, gamma: f64) -> Result<WeightField<T>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::config(format!("gamma must be non-negative, got {gamma}")));
    }
    let n = field.width * field.height;
    let k = field.channels();
    let mut data = vec![T::zero(); n * k];
    let mut e = vec![0.0f64; k];
    for i in 0..n {
        let max = (0..k)
            .map(|c| gamma * field.data[c * n + i].f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (c, ec) in e.iter_mut().enumerate() {
            *ec = (gamma * field.data[c * n + i].f64() - max).exp();
            total += *ec;
        }
        for (c, ec) in e.iter().enumerate() {
            data[c * n + i] = T::of(ec / total);
        }
    }
    Ok(WeightField { width: field.width, height: field.height, gamma, data })
}

/// Detail reference for one 20-m band already brought to the 10-m grid.
///
/// `bands10` are high-passed with `kernels10`; the correlation step compares
/// `lowpass(band20_up, kernel20)` with the low-passed 10-m bands, so that each
/// 10-m band splits exactly into the LP and HP parts used here.
pub fn build_detail_reference<T: Real>(
    bands10: &Stack<T>,
    band20_up: &[T],
    kernels10: &[MtfKernel<T>],
    kernel20: &MtfKernel<T>,
    gamma: f64,
    radius: usize,
) -> Result<DetailEntry<T>> {
    let (w, h) = (bands10.width(), bands10.height());
    if band20_up.len() != w * h {
        return Err(Error::shape(format!(
            "upsampled 20-m plane of length {} does not match the {w}x{h} 10-m grid",
            band20_up.len()
        )));
    }
    let lp10 = mtf::lowpass(bands10, kernels10)?;
    let b_lp = kernel20.apply(band20_up, w, h);
    let correlation = correlation_field(&b_lp, &lp10, radius)?;
    let weights = softmax_weights(&correlation, gamma)?;
    let mut detail = vec![T::zero(); w * h];
    for (k, (band, low)) in bands10.planes().zip(lp10.planes()).enumerate() {
        let wk = weights.plane(k);
        for i in 0..w * h {
            detail[i] += wk[i] * (band[i] - low[i]);
        }
    }
    Ok(DetailEntry { detail, correlation, weights })
}

/// Detail references for every 20-m band: `stack20` is upsampled to the 10-m
/// grid by the kernels' ratio and each band goes through
/// [`build_detail_reference`].
pub fn build_all_references<T: Real>(
    stack10: &Stack<T>,
    stack20: &Stack<T>,
    kernels10: &[MtfKernel<T>],
    kernels20: &[MtfKernel<T>],
    gamma: f64,
    radius: usize,
) -> Result<DetailBundle<T>> {
    if kernels20.len() != stack20.band_count() {
        return Err(Error::shape(format!(
            "{} kernels for {} 20-m bands",
            kernels20.len(),
            stack20.band_count()
        )));
    }
    let ratio = kernels20.first().map_or(2, |k| k.ratio);
    if stack10.width() != stack20.width() * ratio || stack10.height() != stack20.height() * ratio {
        return Err(Error::shape(format!(
            "10-m stack {}x{} is not {ratio}x the 20-m stack {}x{}",
            stack10.width(),
            stack10.height(),
            stack20.width(),
            stack20.height()
        )));
    }
    let up = mtf::upsample(stack20, ratio)?;
    let mut planes = Vec::with_capacity(stack20.band_count());
    let mut correlations = Vec::with_capacity(stack20.band_count());
    let mut weights = Vec::with_capacity(stack20.band_count());
    for (b, plane) in up.planes().enumerate() {
        let e = build_detail_reference(stack10, plane, kernels10, &kernels20[b], gamma, radius)?;
        planes.push(e.detail);
        correlations.push(e.correlation);
        weights.push(e.weights);
    }
    let bands: Vec<BandId> = stack20.bands().to_vec();
    let detail = Stack::from_planes(stack10.width(), stack10.height(), bands, stack10.gsd(), planes)?;
    Ok(DetailBundle { detail, correlations, weights })
}
