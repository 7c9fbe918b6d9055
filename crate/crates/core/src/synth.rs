//! Seeded synthetic Sentinel-2-like scenes.
//!
//! A 10-band reflectance scene is rendered on the 10-m grid from a few latent
//! materials (vegetation, soil, water, built-up) laid out as warped Voronoi
//! fields, Gaussian blobs and oriented linear features, modulated by
//! multi-octave textures. The 20-m input is the MTF downgrade of the six
//! synthetic 20-m bands, so their 10-m ground truth is available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtf::{self, KernelBank, MtfConfig};
use crate::raster::{BandId, Stack};

/// Reflectance signatures in `BandId::ALL` order.
const SIGNATURES: [[f64; 10]; 4] = [
    // vegetation
    [0.035, 0.075, 0.040, 0.440, 0.110, 0.290, 0.390, 0.460, 0.220, 0.100],
    // bare soil
    [0.095, 0.135, 0.175, 0.275, 0.205, 0.225, 0.245, 0.285, 0.345, 0.295],
    // water
    [0.070, 0.060, 0.040, 0.020, 0.030, 0.022, 0.020, 0.018, 0.010, 0.008],
    // built-up
    [0.145, 0.155, 0.170, 0.215, 0.180, 0.190, 0.200, 0.220, 0.255, 0.235],
];

const BUILT_UP: usize = 3;
const DN_SCALE: f64 = 10_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Share of the texture common to all bands, in [0, 1].
    pub correlation: f64,
    /// Relative texture amplitude.
    pub texture: f64,
    /// Mean Voronoi cell side in pixels.
    pub cell: f64,
    /// Blobs per 1000 pixels.
    pub blob_density: f64,
    /// Linear features per 100 pixels of scene side.
    pub line_density: f64,
    /// Additive noise standard deviation (reflectance units).
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { correlation: 0.8, texture: 0.15, cell: 20.0, blob_density: 3.0, line_density: 4.0, noise: 0.002 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.correlation)
            && self.texture >= 0.0
            && self.cell >= 1.0
            && self.blob_density >= 0.0
            && self.line_density >= 0.0
            && self.noise >= 0.0;
        if !ok {
            return Err(Error::config(format!("invalid synthetic scene parameters {self:?}")));
        }
        Ok(())
    }
}

/// Synthetic scene: the two sensor stacks plus the 10-m truth of the 20-m bands.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub stack10: Stack<f32>,
    pub stack20: Stack<f32>,
    pub gt20: Stack<f32>,
}

/// Smooth value noise with `octaves` halvings of the cell size from `base`.
fn value_noise(rng: &mut ChaCha8Rng, n: usize, base: f64, octaves: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let mut spacing = base;
    let mut norm = 0.0;
    for _ in 0..octaves {
        if spacing < 1.5 {
            break;
        }
        let amp = spacing.powf(0.8);
        norm += amp;
        let g = (n as f64 / spacing).ceil() as usize + 2;
        let grid: Vec<f64> = (0..g * g).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (ox, oy) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        for y in 0..n {
            let fy = y as f64 / spacing + oy;
            let (iy, ty) = (fy.floor() as usize, fy.fract());
            let sy = ty * ty * (3.0 - 2.0 * ty);
            for x in 0..n {
                let fx = x as f64 / spacing + ox;
                let (ix, tx) = (fx.floor() as usize, fx.fract());
                let sx = tx * tx * (3.0 - 2.0 * tx);
                let a = grid[iy * g + ix] * (1.0 - sx) + grid[iy * g + ix + 1] * sx;
                let b = grid[(iy + 1) * g + ix] * (1.0 - sx) + grid[(iy + 1) * g + ix + 1] * sx;
                out[y * n + x] += amp * (a * (1.0 - sy) + b * sy);
            }
        }
        spacing /= 2.0;
    }
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

fn random_mixture(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let dominant = rng.gen_range(0..4);
    let mut m = [0.0; 4];
    for (k, v) in m.iter_mut().enumerate() {
        let e: f64 = -rng.gen_range(1e-6f64..1.0).ln();
        *v = if k == dominant { e + 2.0 } else { e * 0.5 };
    }
    let s: f64 = m.iter().sum();
    m.map(|v| v / s)
}

fn render(seed: u64, n: usize, cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = n * n;

    // Warped Voronoi partition.
    let cells = ((np as f64) / (cfg.cell * cfg.cell)).ceil().max(2.0) as usize;
    let sites: Vec<(f64, f64, [f64; 4])> = (0..cells)
        .map(|_| (rng.gen_range(0.0..n as f64), rng.gen_range(0.0..n as f64), random_mixture(&mut rng)))
        .collect();
    let warp_x = value_noise(&mut rng, n, cfg.cell * 2.0, 3);
    let warp_y = value_noise(&mut rng, n, cfg.cell * 2.0, 3);
    let amp = cfg.cell * 0.6;
    let mut abundance = vec![[0.0f64; 4]; np];
    for y in 0..n {
        for x in 0..n {
            let i = y * n + x;
            let px = x as f64 + amp * warp_x[i];
            let py = y as f64 + amp * warp_y[i];
            let mut best = (f64::INFINITY, 0);
            for (k, s) in sites.iter().enumerate() {
                let d = (s.0 - px).powi(2) + (s.1 - py).powi(2);
                if d < best.0 {
                    best = (d, k);
                }
            }
            abundance[i] = sites[best.1].2;
        }
    }

    // Gaussian blobs (tree crowns, roofs, ponds).
    let blobs = (np as f64 * cfg.blob_density / 1000.0).round() as usize;
    for _ in 0..blobs {
        let (cx, cy) = (rng.gen_range(0.0..n as f64), rng.gen_range(0.0..n as f64));
        let r: f64 = rng.gen_range(1.0..5.0);
        let mat = rng.gen_range(0..4);
        let strength = rng.gen_range(0.5..1.0);
        let reach = (3.0 * r).ceil() as isize;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (x, y) = (cx as isize + dx, cy as isize + dy);
                if x < 0 || y < 0 || x >= n as isize || y >= n as isize {
                    continue;
                }
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let w = strength * (-0.5 * d2 / (r * r)).exp();
                let a = &mut abundance[y as usize * n + x as usize];
                for (k, v) in a.iter_mut().enumerate() {
                    *v = *v * (1.0 - w) + if k == mat { w } else { 0.0 };
                }
            }
        }
    }

    // Oriented linear features (roads, field boundaries).
    let lines = (n as f64 * cfg.line_density / 100.0).round() as usize;
    for _ in 0..lines {
        let (cx, cy) = (rng.gen_range(0.0..n as f64), rng.gen_range(0.0..n as f64));
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (nx, ny) = (-theta.sin(), theta.cos());
        let half = rng.gen_range(0.4..1.6);
        let len = rng.gen_range(0.2..1.0) * n as f64;
        let mat = if rng.gen_bool(0.7) { BUILT_UP } else { rng.gen_range(0..4) };
        for y in 0..n {
            for x in 0..n {
                let (rx, ry) = (x as f64 - cx, y as f64 - cy);
                let across = (rx * nx + ry * ny).abs();
                let along = (rx * ny - ry * nx).abs();
                if along > len / 2.0 {
                    continue;
                }
                let w = (half + 0.5 - across).clamp(0.0, 1.0);
                if w > 0.0 {
                    let a = &mut abundance[y * n + x];
                    for (k, v) in a.iter_mut().enumerate() {
                        *v = *v * (1.0 - w) + if k == mat { w } else { 0.0 };
                    }
                }
            }
        }
    }

    let moisture = value_noise(&mut rng, n, n as f64 / 2.0, 3);
    let shared = value_noise(&mut rng, n, 32.0, 5);
    let own_weight = (1.0 - cfg.correlation * cfg.correlation).sqrt();

    BandId::ALL
        .iter()
        .enumerate()
        .map(|(b, band)| {
            let own = value_noise(&mut rng, n, 32.0, 5);
            let swir = match band {
                BandId::B11 => 0.35,
                BandId::B12 => 0.45,
                _ => 0.0,
            };
            (0..np)
                .map(|i| {
                    let refl: f64 = (0..4).map(|k| abundance[i][k] * SIGNATURES[k][b]).sum();
                    let tex = cfg.correlation * shared[i] + own_weight * own[i];
                    let wet = 1.0 - swir * (0.5 + 0.5 * moisture[i]);
                    let v = refl * wet * (1.0 + cfg.texture * tex) + cfg.noise * rng.gen_range(-1.732..1.732);
                    v.max(1e-4) * DN_SCALE
                })
                .collect()
        })
        .collect()
}

/// Generates a `size x size` scene. `size` must be a positive multiple of 4.
pub fn generate(seed: u64, size: usize, config: &SynthConfig, mtf: &MtfConfig) -> Result<SynthScene> {
    if size == 0 || size % 4 != 0 {
        return Err(Error::config(format!("synthetic scene size must be a positive multiple of 4, got {size}")));
    }
    config.validate()?;
    let planes = render(seed, size, config);
    let full = Stack::from_planes(size, size, BandId::ALL.to_vec(), 10.0, planes)?;
    let stack10 = full.select(&BandId::TEN_M)?;
    let gt20 = full.select(&BandId::TWENTY_M)?;
    let bank = KernelBank::<f64>::new(mtf, 2)?;
    let stack20 = mtf::decimate(&mtf::lowpass(&gt20, &bank.twenty)?, 2)?.with_gsd(20.0);
    Ok(SynthScene { stack10: stack10.cast(), stack20: stack20.cast(), gt20: gt20.cast() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_shaped() {
        let cfg = SynthConfig::default();
        let a = generate(3, 32, &cfg, &MtfConfig::default()).unwrap();
        let b = generate(3, 32, &cfg, &MtfConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate(4, 32, &cfg, &MtfConfig::default()).unwrap();
        assert_ne!(a.stack10.data(), c.stack10.data());
        assert_eq!((a.stack10.width(), a.stack10.band_count(), a.stack10.gsd()), (32, 4, 10.0));
        assert_eq!((a.stack20.width(), a.stack20.band_count(), a.stack20.gsd()), (16, 6, 20.0));
        assert_eq!((a.gt20.width(), a.gt20.band_count()), (32, 6));
        assert!(a.stack10.data().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn rejects_bad_size() {
        assert!(generate(0, 30, &SynthConfig::default(), &MtfConfig::default()).is_err());
        assert!(generate(0, 0, &SynthConfig::default(), &MtfConfig::default()).is_err());
    }

    #[test]
    fn correlation_controls_band_coupling() {
        let pearson = |a: &[f32], b: &[f32]| {
            let n = a.len() as f64;
            let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
            let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
            let (mut c, mut va, mut vb) = (0.0, 0.0, 0.0);
            for (&x, &y) in a.iter().zip(b) {
                let (x, y) = (x as f64 - ma, y as f64 - mb);
                c += x * y;
                va += x * x;
                vb += y * y;
            }
            c / (va * vb).sqrt()
        };
        // texture only: flat single material
        let base = SynthConfig { cell: 1e3, correlation: 0.0, blob_density: 0.0, line_density: 0.0, noise: 0.0, texture: 0.3 };
        let hi = generate(9, 64, &SynthConfig { correlation: 1.0, ..base.clone() }, &MtfConfig::default()).unwrap();
        let lo = generate(9, 64, &SynthConfig { correlation: 0.0, ..base }, &MtfConfig::default()).unwrap();
        let rho_hi = pearson(hi.stack10.plane(0), hi.stack10.plane(1));
        let rho_lo = pearson(lo.stack10.plane(0), lo.stack10.plane(1));
        assert!(rho_lo < rho_hi, "{rho_lo} vs {rho_hi}");
    }
}
