//! Reference-based fusion quality indices: Q (universal image quality index),
//! Q2^n (its hypercomplex multiband extension), SAM, ERGAS and SCC.
//!
//! All reductions run in `f64` in a fixed order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::mirror;
use crate::raster::Stack;
use crate::scalar::Real;

pub const DEFAULT_WINDOW: usize = 32;
pub const CSV_HEADER: &str = "q,q2n,sam_deg,ergas,scc";

fn check_pair<T: Real>(a: &Stack<T>, b: &Stack<T>) -> Result<()> {
    if !a.same_grid(b) || a.band_count() != b.band_count() {
        return Err(Error::shape(format!(
            "metric inputs differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.band_count(),
            b.width(),
            b.height(),
            b.band_count()
        )));
    }
    Ok(())
}

fn window_origins(w: usize, h: usize, window: usize) -> Result<Vec<(usize, usize)>> {
    if window == 0 || w < window || h < window {
        return Err(Error::shape(format!("{w}x{h} image smaller than the {window}x{window} window")));
    }
    let mut out = Vec::new();
    for y in (0..=h - window).step_by(window) {
        for x in (0..=w - window).step_by(window) {
            out.push((x, y));
        }
    }
    Ok(out)
}

/// Q of one window, `None` when its denominator vanishes.
fn q_window(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cab += (x - ma) * (y - mb);
    }
    let (va, vb, cab) = (va / n, vb / n, cab / n);
    let den = (va + vb) * (ma * ma + mb * mb);
    (den != 0.0).then(|| 4.0 * cab * ma * mb / den)
}

fn gather(plane: &[impl Real], width: usize, x0: usize, y0: usize, window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(window * window);
    for y in y0..y0 + window {
        out.extend(plane[y * width + x0..y * width + x0 + window].iter().map(|v| v.f64()));
    }
    out
}

/// Universal image quality index of two planes, averaged over
/// non-overlapping `window x window` blocks.
pub fn q_index<T: Real>(a: &[T], b: &[T], width: usize, height: usize, window: usize) -> Result<f64> {
    if a.len() != width * height || b.len() != width * height {
        return Err(Error::shape("q_index planes do not match the grid"));
    }
    let origins = window_origins(width, height, window)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (x0, y0) in origins {
        let wa = gather(a, width, x0, y0, window);
        let wb = gather(b, width, x0, y0, window);
        if let Some(q) = q_window(&wa, &wb) {
            sum += q;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::numeric("q_index: every window is degenerate"));
    }
    Ok(sum / count as f64)
}

/// Mean of the per-band Q indices.
pub fn q_mean<T: Real>(a: &Stack<T>, b: &Stack<T>, window: usize) -> Result<f64> {
    check_pair(a, b)?;
    let mut total = 0.0;
    for (pa, pb) in a.planes().zip(b.planes()) {
        total += q_index(pa, pb, a.width(), a.height(), window)?;
    }
    Ok(total / a.band_count() as f64)
}

/// Cayley-Dickson hypercomplex arithmetic on `2^n`-component vectors.
pub mod hypercomplex {
    /// `(a, b)* = (a*, -b)`.
    pub fn conj(x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        out.iter_mut().skip(1).for_each(|v| *v = -*v);
        out
    }

    /// `(a, b)(c, d) = (ac - d* b, da + b c*)`.
    pub fn mul(x: &[f64], y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), y.len());
        debug_assert!(x.len().is_power_of_two());
        let n = x.len();
        if n == 1 {
            return vec![x[0] * y[0]];
        }
        let h = n / 2;
        let (a, b) = x.split_at(h);
        let (c, d) = y.split_at(h);
        let ac = mul(a, c);
        let dcb = mul(&conj(d), b);
        let da = mul(d, a);
        let bcc = mul(b, &conj(c));
        let mut out = Vec::with_capacity(n);
        out.extend(ac.iter().zip(&dcb).map(|(p, q)| p - q));
        out.extend(da.iter().zip(&bcc).map(|(p, q)| p + q));
        out
    }

    pub fn norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Q2^n of one window. `a` and `b` hold one padded hypercomplex vector per
/// pixel (`dim` components each).
fn q2n_window(a: &[f64], b: &[f64], dim: usize) -> Option<f64> {
    let n = (a.len() / dim) as f64;
    let mut ma = vec![0.0; dim];
    let mut mb = vec![0.0; dim];
    let mut cross = vec![0.0; dim];
    let (mut ea, mut eb) = (0.0, 0.0);
    for (za, zb) in a.chunks_exact(dim).zip(b.chunks_exact(dim)) {
        for i in 0..dim {
            ma[i] += za[i];
            mb[i] += zb[i];
        }
        let p = hypercomplex::mul(za, &hypercomplex::conj(zb));
        for (c, v) in cross.iter_mut().zip(p) {
            *c += v;
        }
        ea += za.iter().map(|v| v * v).sum::<f64>();
        eb += zb.iter().map(|v| v * v).sum::<f64>();
    }
    ma.iter_mut().chain(mb.iter_mut()).chain(cross.iter_mut()).for_each(|v| *v /= n);
    let mm = hypercomplex::mul(&ma, &hypercomplex::conj(&mb));
    let cov: Vec<f64> = cross.iter().zip(&mm).map(|(c, m)| c - m).collect();
    let (na, nb) = (hypercomplex::norm(&ma), hypercomplex::norm(&mb));
    let va = ea / n - na * na;
    let vb = eb / n - nb * nb;
    let den = (va + vb) * (na * na + nb * nb);
    (den != 0.0).then(|| 4.0 * hypercomplex::norm(&cov) * na * nb / den)
}

/// Q2^n: bands are zero-padded to the next power of two and treated as
/// hypercomplex pixels; the index is averaged over non-overlapping windows.
pub fn q2n<T: Real>(a: &Stack<T>, b: &Stack<T>, window: usize) -> Result<f64> {
    check_pair(a, b)?;
    let (w, h) = (a.width(), a.height());
    let dim = a.band_count().next_power_of_two();
    let origins = window_origins(w, h, window)?;
    let (mut sum, mut count) = (0.0, 0usize);
    let mut za = vec![0.0; window * window * dim];
    let mut zb = vec![0.0; window * window * dim];
    for (x0, y0) in origins {
        za.iter_mut().chain(zb.iter_mut()).for_each(|v| *v = 0.0);
        for (band, (pa, pb)) in a.planes().zip(b.planes()).enumerate() {
            for y in 0..window {
                for x in 0..window {
                    let src = (y0 + y) * w + x0 + x;
                    let dst = (y * window + x) * dim + band;
                    za[dst] = pa[src].f64();
                    zb[dst] = pb[src].f64();
                }
            }
        }
        if let Some(q) = q2n_window(&za, &zb, dim) {
            sum += q;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::numeric("q2n: every window is degenerate"));
    }
    Ok(sum / count as f64)
}

/// Mean spectral angle in degrees over pixels where both vectors are non-zero.
pub fn sam<T: Real>(a: &Stack<T>, b: &Stack<T>) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.plane_len();
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..n {
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (pa, pb) in a.planes().zip(b.planes()) {
            let (x, y) = (pa[i].f64(), pb[i].f64());
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let c = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
        sum += c.acos();
        count += 1;
    }
    if count == 0 {
        return Err(Error::numeric("sam: every pixel has a zero-norm spectrum"));
    }
    Ok((sum / count as f64).to_degrees())
}

/// ERGAS of `pred` against the reference `reference` at scale ratio `ratio`.
pub fn ergas<T: Real>(reference: &Stack<T>, pred: &Stack<T>, ratio: f64) -> Result<f64> {
    check_pair(reference, pred)?;
    let n = reference.plane_len() as f64;
    let mut acc = 0.0;
    for (band, (pr, pp)) in reference.planes().zip(pred.planes()).enumerate() {
        let mean = pr.iter().map(|v| v.f64()).sum::<f64>() / n;
        if mean == 0.0 {
            return Err(Error::numeric(format!("ergas: reference band {band} has zero mean")));
        }
        let mse = pr.iter().zip(pp).map(|(r, p)| (r.f64() - p.f64()).powi(2)).sum::<f64>() / n;
        acc += mse / (mean * mean);
    }
    Ok(100.0 / ratio * (acc / reference.band_count() as f64).sqrt())
}

/// 3x3 Laplacian `[[0,-1,0],[-1,4,-1],[0,-1,0]]` with mirror boundary.
pub fn laplacian<T: Real>(plane: &[T], w: usize, h: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| plane[mirror(y, h) * w + mirror(x, w)].f64();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            out.push(4.0 * at(x, y) - at(x - 1, y) - at(x + 1, y) - at(x, y - 1) - at(x, y + 1));
        }
    }
    out
}

/// Spatial correlation coefficient: Pearson correlation of the Laplacian
/// high-pass of both stacks, pooled over all bands and pixels.
pub fn scc<T: Real>(a: &Stack<T>, b: &Stack<T>) -> Result<f64> {
    check_pair(a, b)?;
    let (w, h) = (a.width(), a.height());
    let ha: Vec<f64> = a.planes().flat_map(|p| laplacian(p, w, h)).collect();
    let hb: Vec<f64> = b.planes().flat_map(|p| laplacian(p, w, h)).collect();
    let n = ha.len() as f64;
    let ma = ha.iter().sum::<f64>() / n;
    let mb = hb.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut c) = (0.0, 0.0, 0.0);
    for (&x, &y) in ha.iter().zip(&hb) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        c += (x - ma) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::numeric("scc: high-pass component has zero variance"));
    }
    Ok(c / (va.sqrt() * vb.sqrt()))
}

/// All five indices for one prediction/reference pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub q: f64,
    pub q2n: f64,
    pub sam_deg: f64,
    pub ergas: f64,
    pub scc: f64,
    pub window: usize,
    pub ratio: usize,
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.q, self.q2n, self.sam_deg, self.ergas, self.scc)
    }

    pub fn from_csv_row(row: &str, window: usize, ratio: usize) -> Result<Self> {
        let fields: Vec<f64> = row
            .trim()
            .split(',')
            .map(f64::from_str)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("metrics row `{row}`: {e}")))?;
        let [q, q2n, sam_deg, ergas, scc] = fields[..] else {
            return Err(Error::Format(format!("metrics row `{row}` needs 5 fields")));
        };
        Ok(MetricsReport { q, q2n, sam_deg, ergas, scc, window, ratio })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Q={:.4} Q2n={:.4} SAM={:.4} deg ERGAS={:.4} SCC={:.4}",
            self.q, self.q2n, self.sam_deg, self.ergas, self.scc
        )
    }
}

pub fn evaluate<T: Real>(pred: &Stack<T>, gt: &Stack<T>, ratio: usize) -> Result<MetricsReport> {
    evaluate_with_window(pred, gt, ratio, DEFAULT_WINDOW)
}

pub fn evaluate_with_window<T: Real>(pred: &Stack<T>, gt: &Stack<T>, ratio: usize, window: usize) -> Result<MetricsReport> {
    check_pair(pred, gt)?;
    Ok(MetricsReport {
        q: q_mean(gt, pred, window)?,
        q2n: q2n(gt, pred, window)?,
        sam_deg: sam(gt, pred)?,
        ergas: ergas(gt, pred, ratio as f64)?,
        scc: scc(gt, pred)?,
        window,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BandId;

    fn positive(w: usize, h: usize, bands: usize, seed: f64) -> Stack<f64> {
        let data = (0..w * h * bands).map(|i| 2.0 + ((i as f64 + seed) * 0.917).sin()).collect();
        Stack::new(w, h, BandId::TWENTY_M[..bands].to_vec(), 20.0, data).unwrap()
    }

    #[test]
    fn q_identity_and_reflection() {
        let a = positive(32, 32, 1, 0.0);
        assert!((q_index(a.plane(0), a.plane(0), 32, 32, 32).unwrap() - 1.0).abs() < 1e-12);
        // reflected about the window mean: same mean, correlation -1
        let m = a.plane(0).iter().sum::<f64>() / 1024.0;
        let r: Vec<f64> = a.plane(0).iter().map(|v| 2.0 * m - v).collect();
        assert!((q_index(a.plane(0), &r, 32, 32, 32).unwrap() + 1.0).abs() < 1e-9);
        assert!(q_index(a.plane(0), a.plane(0), 32, 32, 64).is_err());
    }

    #[test]
    fn sam_orthogonal_pixels() {
        let a = Stack::new(1, 1, BandId::TWENTY_M[..2].to_vec(), 20.0, vec![1.0, 0.0]).unwrap();
        let b = Stack::new(1, 1, BandId::TWENTY_M[..2].to_vec(), 20.0, vec![0.0, 1.0]).unwrap();
        assert!((sam(&a, &b).unwrap() - 90.0).abs() < 1e-12);
        let z = Stack::<f64>::zeros(1, 1, BandId::TWENTY_M[..2].to_vec(), 20.0).unwrap();
        assert!(sam(&z, &b).is_err());
    }

    #[test]
    fn ergas_constant_offset() {
        let a = positive(8, 8, 3, 1.0);
        let mut data = Vec::new();
        for p in a.planes() {
            let mean = p.iter().sum::<f64>() / 64.0;
            data.extend(p.iter().map(|v| v + 0.01 * mean));
        }
        let b = a.with_data(data).unwrap();
        assert!((ergas(&a, &b, 2.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(ergas(&a, &a, 2.0).unwrap(), 0.0);
        let zero_mean = a.with_data(a.data().iter().enumerate().map(|(i, _)| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        assert!(ergas(&zero_mean, &a, 2.0).is_err());
    }

    #[test]
    fn scc_ignores_constant_planes() {
        let a = positive(9, 7, 2, 2.0);
        let b = a.with_data(a.data().iter().map(|v| v + 3.0).collect()).unwrap();
        assert!((scc(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let flat = a.with_data(vec![1.0; a.data().len()]).unwrap();
        assert!(scc(&a, &flat).is_err());
    }

    #[test]
    fn hypercomplex_basics() {
        use hypercomplex::*;
        // complex: (1+2i)(3+4i) = -5 + 10i
        assert_eq!(mul(&[1.0, 2.0], &[3.0, 4.0]), vec![-5.0, 10.0]);
        // x x* = |x|^2 in every dimension
        let x = [0.3, -1.2, 0.7, 2.0, -0.4, 0.9, 1.1, -0.6];
        let p = mul(&x, &conj(&x));
        assert!((p[0] - norm(&x).powi(2)).abs() < 1e-12);
        assert!(p[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn report_csv_round_trip() {
        let a = positive(32, 32, 6, 3.0);
        let b = positive(32, 32, 6, 3.5);
        let r = evaluate(&b, &a, 2).unwrap();
        let back = MetricsReport::from_csv_row(&r.csv_row(), 32, 2).unwrap();
        assert_eq!(back, r);
        assert!(MetricsReport::from_csv_row("1,2,3", 32, 2).is_err());
    }
}
