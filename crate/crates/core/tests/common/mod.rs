//! Brute-force reference implementations and helpers shared by the
//! integration tests. Everything here is written from the definitions, with
//! no use of the library's own numeric routines.

#![allow(dead_code)]

use fullres::raster::Stack;
use fullres::BandId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn stack(w: usize, h: usize, bands: &[BandId], data: Vec<f64>) -> Stack<f64> {
    Stack::new(w, h, bands.to_vec(), 10.0, data).unwrap()
}

/// Half-sample symmetric reflection, written as repeated folding.
pub fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct 2-D correlation with a full `k x k` kernel and symmetric boundary.
pub fn conv2d_mirror(plane: &[f64], w: usize, h: usize, taps: &[f64], k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in 0..k as isize {
                for kx in 0..k as isize {
                    let sy = reflect(y + ky - r, h);
                    let sx = reflect(x + kx - r, w);
                    acc += taps[(ky * k as isize + kx) as usize] * plane[sy * w + sx];
                }
            }
            out[(y * w as isize + x) as usize] = acc;
        }
    }
    out
}

/// Direct multi-channel 3x3 convolution with zero padding.
pub fn conv3x3_zero(input: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let cout = bias.len();
    let mut out = vec![0.0; cout * h * w];
    for co in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[co];
                for ci in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            acc += weight[((co * cin + ci) * 3 + ky) * 3 + kx]
                                * input[(ci * h + sy as usize) * w + sx as usize];
                        }
                    }
                }
                out[(co * h + y) * w + x] = acc;
            }
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-pass population Pearson correlation of two samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / a.len() as f64;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / b.len() as f64;
    if va < 1e-9 || vb < 1e-9 {
        return None;
    }
    let c = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    Some(c / (va * vb).sqrt())
}

/// Sliding-window correlation gathered pixel by pixel.
pub fn local_correlation(a: &[f64], b: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut wa, mut wb) = (Vec::new(), Vec::new());
            for dy in -(r as isize)..=r as isize {
                for dx in -(r as isize)..=r as isize {
                    let i = reflect(y + dy, h) * w + reflect(x + dx, w);
                    wa.push(a[i]);
                    wb.push(b[i]);
                }
            }
            out.push(pearson(&wa, &wb).map_or(0.0, |c| c.clamp(-1.0, 1.0)));
        }
    }
    out
}

/// Universal image quality index of one window.
pub fn q_single(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let n = a.len() as f64;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let c = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    4.0 * c * ma * mb / ((va + vb) * (ma * ma + mb * mb))
}

/// Q averaged over non-overlapping `win x win` blocks.
pub fn q_blocks(a: &[f64], b: &[f64], w: usize, h: usize, win: usize) -> f64 {
    let mut qs = Vec::new();
    for y0 in (0..).map(|i| i * win).take_while(|y| y + win <= h) {
        for x0 in (0..).map(|i| i * win).take_while(|x| x + win <= w) {
            let (mut wa, mut wb) = (Vec::new(), Vec::new());
            for y in y0..y0 + win {
                for x in x0..x0 + win {
                    wa.push(a[y * w + x]);
                    wb.push(b[y * w + x]);
                }
            }
            qs.push(q_single(&wa, &wb));
        }
    }
    mean(&qs)
}

/// Hamilton quaternion `[w, x, y, z]`.
pub type Quat = [f64; 4];

pub fn qmul(p: Quat, q: Quat) -> Quat {
    [
        p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
        p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
        p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
        p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0],
    ]
}

pub fn qconj(p: Quat) -> Quat {
    [p[0], -p[1], -p[2], -p[3]]
}

pub fn qnorm(p: Quat) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Q4 of one window of quaternion-valued pixels.
pub fn q4_window(za: &[Quat], zb: &[Quat]) -> f64 {
    let n = za.len() as f64;
    let avg = |v: &mut dyn Iterator<Item = Quat>| {
        let mut s = [0.0; 4];
        for q in v {
            for i in 0..4 {
                s[i] += q[i];
            }
        }
        s.map(|x| x / n)
    };
    let ma = avg(&mut za.iter().copied());
    let mb = avg(&mut zb.iter().copied());
    let cross = avg(&mut za.iter().zip(zb).map(|(&a, &b)| qmul(a, qconj(b))));
    let mm = qmul(ma, qconj(mb));
    let cov = [cross[0] - mm[0], cross[1] - mm[1], cross[2] - mm[2], cross[3] - mm[3]];
    let va = za.iter().map(|&q| qnorm(q).powi(2)).sum::<f64>() / n - qnorm(ma).powi(2);
    let vb = zb.iter().map(|&q| qnorm(q).powi(2)).sum::<f64>() / n - qnorm(mb).powi(2);
    4.0 * qnorm(cov) * qnorm(ma) * qnorm(mb) / ((va + vb) * (qnorm(ma).powi(2) + qnorm(mb).powi(2)))
}

/// Q2 of one window using complex arithmetic (two bands as `re + i im`).
pub fn q2_window(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let lift = |v: &[(f64, f64)]| v.iter().map(|&(r, i)| [r, i, 0.0, 0.0]).collect::<Vec<Quat>>();
    // complex numbers embed in the quaternions; cross-check the embedding by hand
    let n = a.len() as f64;
    let (mut mar, mut mai, mut mbr, mut mbi) = (0.0, 0.0, 0.0, 0.0);
    let (mut cr, mut ci, mut ea, mut eb) = (0.0, 0.0, 0.0, 0.0);
    for (&(ar, ai), &(br, bi)) in a.iter().zip(b) {
        mar += ar / n;
        mai += ai / n;
        mbr += br / n;
        mbi += bi / n;
        // a * conj(b)
        cr += (ar * br + ai * bi) / n;
        ci += (ai * br - ar * bi) / n;
        ea += (ar * ar + ai * ai) / n;
        eb += (br * br + bi * bi) / n;
    }
    let (mr, mi) = (mar * mbr + mai * mbi, mai * mbr - mar * mbi);
    let cov = ((cr - mr).powi(2) + (ci - mi).powi(2)).sqrt();
    let na2 = mar * mar + mai * mai;
    let nb2 = mbr * mbr + mbi * mbi;
    let q = 4.0 * cov * na2.sqrt() * nb2.sqrt() / ((ea - na2 + eb - nb2) * (na2 + nb2));
    let via_quat = q4_window(&lift(a), &lift(b));
    assert!((q - via_quat).abs() < 1e-12, "complex and quaternion oracles disagree");
    q
}

/// Mean spectral angle in degrees.
pub fn sam(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let npix = a[0].len();
    let mut total = 0.0;
    for i in 0..npix {
        let va: Vec<f64> = a.iter().map(|p| p[i]).collect();
        let vb: Vec<f64> = b.iter().map(|p| p[i]).collect();
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        total += (dot / (na * nb)).clamp(-1.0, 1.0).acos();
    }
    (total / npix as f64) * 180.0 / std::f64::consts::PI
}

/// Spatial correlation: pooled Pearson correlation of 4-neighbour Laplacians.
pub fn scc(a: &[Vec<f64>], b: &[Vec<f64>], w: usize, h: usize) -> f64 {
    let lap = |p: &[f64]| {
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let at = |xx: isize, yy: isize| p[reflect(yy, h) * w + reflect(xx, w)];
                out.push(4.0 * at(x, y) - at(x - 1, y) - at(x + 1, y) - at(x, y - 1) - at(x, y + 1));
            }
        }
        out
    };
    let ha: Vec<f64> = a.iter().flat_map(|p| lap(p)).collect();
    let hb: Vec<f64> = b.iter().flat_map(|p| lap(p)).collect();
    let (ma, mb) = (mean(&ha), mean(&hb));
    let c: f64 = ha.iter().zip(&hb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ha.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = hb.iter().map(|y| (y - mb).powi(2)).sum();
    c / (va * vb).sqrt()
}

/// Relative error with a floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central finite difference of `f` with respect to every entry of `x`.
pub fn central_diff(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}
