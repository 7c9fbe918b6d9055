//! MTF-matched Gaussian low-pass filters, decimation, bicubic upsampling and
//! the reduced-resolution (Wald) downgrade.
//!
//! The sensor MTF is modelled as a Gaussian whose frequency response reaches
//! the gain `G` at the Nyquist frequency of the coarse grid, `1/(2R)` cycles
//! per fine sample. From the Gaussian Fourier pair,
//! `exp(-2 pi^2 sigma^2 f^2) = G` at `f = 1/(2R)` gives
//! `sigma = (R / pi) * sqrt(2 ln(1/G))`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::raster::{BandId, Stack};
use crate::scalar::Real;

pub const DEFAULT_NYQUIST_GAIN: f64 = 0.275;
pub const DEFAULT_KERNEL_SIZE: usize = 41;

/// Sampled, truncated and renormalized isotropic Gaussian MTF kernel.
/// Stored as its 1-D profile; the 2-D taps are `profile ⊗ profile`.
#[derive(Clone, Debug, PartialEq)]
pub struct MtfKernel<T> {
    pub band: Option<BandId>,
    pub nyquist_gain: f64,
    pub ratio: usize,
    pub sigma: f64,
    profile: Vec<T>,
}

/// Spatial standard deviation of the Gaussian that has gain `gain` at the
/// coarse-grid Nyquist frequency.
pub fn gaussian_sigma(gain: f64, ratio: usize) -> f64 {
    (ratio as f64 / std::f64::consts::PI) * (2.0 * (1.0 / gain).ln()).sqrt()
}

/// Designs a `size x size` MTF kernel for scale ratio `ratio`.
pub fn design_mtf_kernel<T: Real>(nyquist_gain: f64, ratio: usize, size: usize) -> Result<MtfKernel<T>> {
    if !(nyquist_gain > 0.0 && nyquist_gain < 1.0) {
        return Err(Error::config(format!("nyquist gain must lie in (0,1), got {nyquist_gain}")));
    }
    if ratio < 1 {
        return Err(Error::config("ratio must be at least 1"));
    }
    if size % 2 == 0 {
        return Err(Error::config(format!("kernel size must be odd, got {size}")));
    }
    let sigma = gaussian_sigma(nyquist_gain, ratio);
    let min_size = {
        let s = (4.0 * sigma).ceil() as usize;
        s | 1
    };
    if size < min_size {
        return Err(Error::config(format!(
            "kernel size {size} below 4*sigma ({min_size}) for gain {nyquist_gain}"
        )));
    }
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|t| {
            let d = t as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    // far tails that would be subnormal in T are flushed to zero
    let profile = raw
        .iter()
        .map(|v| {
            let t = T::of(v / total);
            if t < T::min_positive_value() { T::zero() } else { t }
        })
        .collect();
    Ok(MtfKernel { band: None, nyquist_gain, ratio, sigma, profile })
}

impl<T: Real> MtfKernel<T> {
    pub fn for_band(mut self, band: BandId) -> Self {
        self.band = Some(band);
        self
    }

    pub fn size(&self) -> usize {
        self.profile.len()
    }

    pub fn profile(&self) -> &[T] {
        &self.profile
    }

    /// Row-major `size x size` coefficient grid.
    pub fn taps(&self) -> Vec<T> {
        let n = self.size();
        let mut out = Vec::with_capacity(n * n);
        for &a in &self.profile {
            out.extend(self.profile.iter().map(|&b| a * b));
        }
        out
    }

    /// Magnitude of the kernel DFT at `(fx, fy)` cycles/sample.
    pub fn frequency_response(&self, fx: f64, fy: f64) -> f64 {
        let n = self.size();
        let r = (n / 2) as f64;
        let taps = self.taps();
        let (mut re, mut im) = (0.0, 0.0);
        for y in 0..n {
            for x in 0..n {
                let phase = 2.0 * std::f64::consts::PI * (fx * (x as f64 - r) + fy * (y as f64 - r));
                let t = taps[y * n + x].f64();
                re += t * phase.cos();
                im -= t * phase.sin();
            }
        }
        (re * re + im * im).sqrt()
    }

    /// Whitespace-separated text grid of the taps, one row per line.
    pub fn to_text(&self) -> String {
        let n = self.size();
        let taps = self.taps();
        let mut s = String::new();
        for row in taps.chunks_exact(n) {
            let line: Vec<String> = row.iter().map(|v| format!("{:.6e}", v.f64())).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    /// Low-pass of a single plane.
    pub fn apply(&self, plane: &[T], w: usize, h: usize) -> Vec<T> {
        filter::convolve_separable(plane, w, h, &self.profile)
    }

    /// Transpose of [`MtfKernel::apply`].
    pub fn apply_adjoint(&self, plane: &[T], w: usize, h: usize) -> Vec<T> {
        filter::convolve_separable_adjoint(plane, w, h, &self.profile)
    }
}

/// Per-band Nyquist gains and kernel size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MtfConfig {
    pub gains: BTreeMap<BandId, f64>,
    pub kernel_size: usize,
}

impl Default for MtfConfig {
    fn default() -> Self {
        MtfConfig {
            gains: BandId::ALL.iter().map(|&b| (b, DEFAULT_NYQUIST_GAIN)).collect(),
            kernel_size: DEFAULT_KERNEL_SIZE,
        }
    }
}

impl MtfConfig {
    pub fn gain(&self, band: BandId) -> f64 {
        self.gains.get(&band).copied().unwrap_or(DEFAULT_NYQUIST_GAIN)
    }

    /// Fills in default gains for bands missing from `gains`.
    pub fn completed(mut self) -> Self {
        for b in BandId::ALL {
            self.gains.entry(b).or_insert(DEFAULT_NYQUIST_GAIN);
        }
        self
    }
}

/// MTF kernels for the 10-m bands and the 20-m bands at one scale ratio.
#[derive(Clone, Debug)]
pub struct KernelBank<T> {
    pub ratio: usize,
    pub ten: Vec<MtfKernel<T>>,
    pub twenty: Vec<MtfKernel<T>>,
}

impl<T: Real> KernelBank<T> {
    pub fn new(config: &MtfConfig, ratio: usize) -> Result<Self> {
        let build = |bands: &[BandId]| {
            bands
                .iter()
                .map(|&b| Ok(design_mtf_kernel(config.gain(b), ratio, config.kernel_size)?.for_band(b)))
                .collect::<Result<Vec<_>>>()
        };
        Ok(KernelBank { ratio, ten: build(&BandId::TEN_M)?, twenty: build(&BandId::TWENTY_M)? })
    }
}

impl<T: Real> Default for KernelBank<T> {
    fn default() -> Self {
        Self::new(&MtfConfig::default(), 2).expect("default MTF configuration is valid")
    }
}

fn check_kernels<T: Real>(stack: &Stack<T>, kernels: &[MtfKernel<T>]) -> Result<()> {
    if kernels.len() != stack.band_count() {
        return Err(Error::shape(format!(
            "{} kernels for {} bands",
            kernels.len(),
            stack.band_count()
        )));
    }
    Ok(())
}

/// Per-band MTF low-pass, same dimensions.
pub fn lowpass<T: Real>(stack: &Stack<T>, kernels: &[MtfKernel<T>]) -> Result<Stack<T>> {
    check_kernels(stack, kernels)?;
    let (w, h) = (stack.width(), stack.height());
    stack.map_planes(w, h, stack.gsd(), |i, p| kernels[i].apply(p, w, h))
}

/// `stack - lowpass(stack)`.
pub fn highpass<T: Real>(stack: &Stack<T>, kernels: &[MtfKernel<T>]) -> Result<Stack<T>> {
    check_kernels(stack, kernels)?;
    let (w, h) = (stack.width(), stack.height());
    stack.map_planes(w, h, stack.gsd(), |i, p| {
        let lp = kernels[i].apply(p, w, h);
        p.iter().zip(lp).map(|(&x, l)| x - l).collect()
    })
}

/// Keeps every `ratio`-th sample starting at `(0, 0)`; gsd grows by `ratio`.
pub fn decimate<T: Real>(stack: &Stack<T>, ratio: usize) -> Result<Stack<T>> {
    let (w, h) = (stack.width(), stack.height());
    if ratio == 0 || w % ratio != 0 || h % ratio != 0 {
        return Err(Error::shape(format!("{w}x{h} raster not divisible by ratio {ratio}")));
    }
    stack.map_planes(w / ratio, h / ratio, stack.gsd() * ratio as f64, |_, p| {
        filter::decimate_plane(p, w, h, ratio)
    })
}

/// Bicubic (Catmull-Rom) upsampling; gsd shrinks by `ratio`.
pub fn upsample<T: Real>(stack: &Stack<T>, ratio: usize) -> Result<Stack<T>> {
    if ratio == 0 {
        return Err(Error::config("ratio must be at least 1"));
    }
    let (w, h) = (stack.width(), stack.height());
    stack.map_planes(w * ratio, h * ratio, stack.gsd() / ratio as f64, |_, p| {
        filter::upsample_plane(p, w, h, ratio)
    })
}

/// Downgrades a 10-m / 20-m pair by `ratio`: each stack is low-passed with
/// its band kernels and decimated.
pub fn wald_downgrade<T: Real>(
    stack10: &Stack<T>,
    stack20: &Stack<T>,
    kernels10: &[MtfKernel<T>],
    kernels20: &[MtfKernel<T>],
    ratio: usize,
) -> Result<(Stack<T>, Stack<T>)> {
    let (w, h) = (stack20.width(), stack20.height());
    if stack10.width() != w * ratio || stack10.height() != h * ratio {
        return Err(Error::shape(format!(
            "10-m stack {}x{} is not {ratio}x the 20-m stack {w}x{h}",
            stack10.width(),
            stack10.height()
        )));
    }
    if w % ratio != 0 || h % ratio != 0 {
        return Err(Error::shape(format!("20-m stack {w}x{h} not divisible by ratio {ratio}")));
    }
    let lr10 = decimate(&lowpass(stack10, kernels10)?, ratio)?;
    let lr20 = decimate(&lowpass(stack20, kernels20)?, ratio)?;
    Ok((lr10, lr20))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(gain: f64, size: usize) -> MtfKernel<f64> {
        design_mtf_kernel(gain, 2, size).unwrap()
    }

    #[test]
    fn sigma_closed_form() {
        let g = (-std::f64::consts::PI.powi(2) / 8.0).exp();
        assert!((gaussian_sigma(g, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn design_errors() {
        assert!(design_mtf_kernel::<f32>(0.0, 2, 41).is_err());
        assert!(design_mtf_kernel::<f32>(1.0, 2, 41).is_err());
        assert!(design_mtf_kernel::<f32>(0.275, 2, 40).is_err());
        // sigma ~1.02 needs at least 5 taps
        assert!(design_mtf_kernel::<f32>(0.275, 2, 3).is_err());
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for &g in &[0.15, 0.275, 0.35] {
            let kern = k(g, 41);
            let taps = kern.taps();
            assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let n = kern.size();
            for y in 0..n {
                for x in 0..n {
                    let v = taps[y * n + x];
                    assert_eq!(v, taps[y * n + (n - 1 - x)]);
                    assert_eq!(v, taps[(n - 1 - y) * n + x]);
                }
            }
        }
    }

    #[test]
    fn lowpass_constant_and_impulse() {
        let kern = k(0.275, 9).for_band(BandId::B2);
        let c = Stack::new(12, 10, vec![BandId::B2], 10.0, vec![2.5; 120]).unwrap();
        let lp = lowpass(&c, std::slice::from_ref(&kern)).unwrap();
        assert!(lp.data().iter().all(|v| (v - 2.5).abs() < 1e-12));

        let n = 25;
        let mut d = vec![0.0; n * n];
        d[12 * n + 12] = 1.0;
        let imp = Stack::new(n, n, vec![BandId::B2], 10.0, d).unwrap();
        let lp = lowpass(&imp, std::slice::from_ref(&kern)).unwrap();
        let taps = kern.taps();
        for y in 0..9 {
            for x in 0..9 {
                assert!((lp.get(0, 8 + x, 8 + y) - taps[y * 9 + x]).abs() < 1e-15);
            }
        }
        let hp = highpass(&imp, std::slice::from_ref(&kern)).unwrap();
        assert!((hp.get(0, 12, 12) - (1.0 - taps[40])).abs() < 1e-15);
        assert!((hp.get(0, 11, 12) + taps[39]).abs() < 1e-15);
    }

    #[test]
    fn kernel_count_mismatch() {
        let s = Stack::<f64>::zeros(4, 4, vec![BandId::B2, BandId::B3], 10.0).unwrap();
        assert!(matches!(lowpass(&s, &[k(0.3, 9)]), Err(Error::Shape(_))));
    }

    #[test]
    fn decimate_cases() {
        let ramp = Stack::new(4, 4, vec![BandId::B2], 10.0, (0..16).map(f64::from).collect()).unwrap();
        let d = decimate(&ramp, 2).unwrap();
        assert_eq!(d.data(), &[0.0, 2.0, 8.0, 10.0]);
        assert_eq!(d.gsd(), 20.0);
        let odd = Stack::<f64>::zeros(5, 4, vec![BandId::B2], 10.0).unwrap();
        assert!(decimate(&odd, 2).is_err());
    }

    #[test]
    fn upsample_constant_and_nodes() {
        let c = Stack::new(5, 3, vec![BandId::B5], 20.0, vec![4.0f32; 15]).unwrap();
        let u = upsample(&c, 2).unwrap();
        assert_eq!((u.width(), u.height(), u.gsd()), (10, 6, 10.0));
        assert!(u.data().iter().all(|v| (v - 4.0).abs() < 1e-6));
    }

    #[test]
    fn wald_constants() {
        let s10 = Stack::new(8, 8, BandId::TEN_M.to_vec(), 10.0, vec![1.5f32; 256]).unwrap();
        let s20 = Stack::new(4, 4, BandId::TWENTY_M.to_vec(), 20.0, vec![-2.0f32; 96]).unwrap();
        let bank = KernelBank::<f32>::default();
        let (a, b) = wald_downgrade(&s10, &s20, &bank.ten, &bank.twenty, 2).unwrap();
        assert_eq!((a.width(), a.height(), a.gsd()), (4, 4, 20.0));
        assert_eq!((b.width(), b.height(), b.gsd()), (2, 2, 40.0));
        assert!(a.data().iter().all(|v| (v - 1.5).abs() < 1e-5));
        assert!(b.data().iter().all(|v| (v + 2.0).abs() < 1e-5));
        assert!(wald_downgrade(&s10, &s10, &bank.ten, &bank.ten, 2).is_err());
    }

    #[test]
    fn text_dump_has_grid_shape() {
        let t = k(0.3, 7).to_text();
        assert_eq!(t.lines().count(), 7);
        assert!(t.lines().all(|l| l.split_whitespace().count() == 7));
    }
}
