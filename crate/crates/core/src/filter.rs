//! Single-plane filtering primitives with symmetric (half-sample mirror)
//! boundary handling, plus their exact adjoints.
//!
//! A plane is a row-major slice of `w * h` samples.

use crate::scalar::Real;

/// Maps an out-of-range index onto `[0, n)` by half-sample mirroring
/// (`... c b a | a b c ... x y z | z y x ...`), periodic with period `2n`.
#[inline]
pub fn mirror(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Mirror-padded correlation of a plane with a separable symmetric kernel
/// `profile ⊗ profile` (odd length).
pub fn convolve_separable<T: Real>(plane: &[T], w: usize, h: usize, profile: &[T]) -> Vec<T> {
    debug_assert_eq!(plane.len(), w * h);
    let r = profile.len() / 2;
    let cols: Vec<usize> = (0..w + 2 * r).map(|j| mirror(j as isize - r as isize, w)).collect();
    let mut tmp = vec![T::zero(); w * h];
    let mut padded = vec![T::zero(); w + 2 * r];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for (p, &c) in padded.iter_mut().zip(&cols) {
            *p = row[c];
        }
        let out = &mut tmp[y * w..(y + 1) * w];
        for (t, &k) in profile.iter().enumerate().filter(|(_, k)| !k.is_zero()) {
            for (o, &p) in out.iter_mut().zip(&padded[t..t + w]) {
                *o += k * p;
            }
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (t, &k) in profile.iter().enumerate().filter(|(_, k)| !k.is_zero()) {
            let src_row = mirror(y as isize + t as isize - r as isize, h);
            let src = &tmp[src_row * w..(src_row + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    out
}

/// Adjoint (transpose) of [`convolve_separable`]: scatters every output
/// gradient back onto the mirrored input positions it was read from.
pub fn convolve_separable_adjoint<T: Real>(grad: &[T], w: usize, h: usize, profile: &[T]) -> Vec<T> {
    debug_assert_eq!(grad.len(), w * h);
    let r = profile.len() / 2;
    // vertical pass first (reverse of the forward order)
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        let src = &grad[y * w..(y + 1) * w];
        for (t, &k) in profile.iter().enumerate().filter(|(_, k)| !k.is_zero()) {
            let dst_row = mirror(y as isize + t as isize - r as isize, h);
            let dst = &mut tmp[dst_row * w..(dst_row + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    let mut out = vec![T::zero(); w * h];
    let mut acc = vec![T::zero(); w + 2 * r];
    for y in 0..h {
        acc.iter_mut().for_each(|a| *a = T::zero());
        let src = &tmp[y * w..(y + 1) * w];
        for (t, &k) in profile.iter().enumerate().filter(|(_, k)| !k.is_zero()) {
            for (a, &g) in acc[t..t + w].iter_mut().zip(src) {
                *a += k * g;
            }
        }
        let dst = &mut out[y * w..(y + 1) * w];
        for (j, &a) in acc.iter().enumerate() {
            dst[mirror(j as isize - r as isize, w)] += a;
        }
    }
    out
}

/// Keeps samples at `(R*i, R*j)`.
pub fn decimate_plane<T: Real>(plane: &[T], w: usize, h: usize, ratio: usize) -> Vec<T> {
    let (wo, ho) = (w / ratio, h / ratio);
    let mut out = Vec::with_capacity(wo * ho);
    for i in 0..ho {
        let row = &plane[i * ratio * w..];
        out.extend((0..wo).map(|j| row[j * ratio]));
    }
    out
}

/// Adjoint of [`decimate_plane`]: zero-stuffing onto the `(w*R) x (h*R)` grid.
pub fn zero_stuff_plane<T: Real>(plane: &[T], w: usize, h: usize, ratio: usize) -> Vec<T> {
    let wo = w * ratio;
    let mut out = vec![T::zero(); wo * h * ratio];
    for i in 0..h {
        for j in 0..w {
            out[i * ratio * wo + j * ratio] = plane[i * w + j];
        }
    }
    out
}

/// Catmull-Rom (`a = -0.5`) weights for taps at offsets -1, 0, 1, 2 and
/// fractional position `t` in `[0, 1)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    let a = -0.5;
    let k = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
        } else if x < 2.0 {
            a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
        } else {
            0.0
        }
    };
    [k(1.0 + t), k(t), k(1.0 - t), k(2.0 - t)]
}

/// Bicubic upsampling by an integer ratio. Output sample `p` sits at input
/// coordinate `p / R`, so every input sample reappears at `R * i`.
pub fn upsample_plane<T: Real>(plane: &[T], w: usize, h: usize, ratio: usize) -> Vec<T> {
    let (wo, ho) = (w * ratio, h * ratio);
    let phase: Vec<[T; 4]> = (0..ratio)
        .map(|p| cubic_weights(p as f64 / ratio as f64).map(T::of))
        .collect();
    // horizontal
    let mut tmp = vec![T::zero(); wo * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        let out = &mut tmp[y * wo..(y + 1) * wo];
        for (xo, o) in out.iter_mut().enumerate() {
            let base = (xo / ratio) as isize;
            let wts = &phase[xo % ratio];
            let mut acc = T::zero();
            for (t, &k) in wts.iter().enumerate() {
                acc += k * row[mirror(base + t as isize - 1, w)];
            }
            *o = acc;
        }
    }
    // vertical
    let mut out = vec![T::zero(); wo * ho];
    for yo in 0..ho {
        let base = (yo / ratio) as isize;
        let wts = &phase[yo % ratio];
        let dst = &mut out[yo * wo..(yo + 1) * wo];
        for (t, &k) in wts.iter().enumerate() {
            let r = mirror(base + t as isize - 1, h);
            let src = &tmp[r * wo..(r + 1) * wo];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    out
}

/// Sum over each `(2r+1)^2` mirror-padded window, in `f64`.
pub fn box_sum(plane: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let cols: Vec<usize> = (0..w + 2 * r).map(|j| mirror(j as isize - r as isize, w)).collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        let mut acc: f64 = cols[..2 * r + 1].iter().map(|&c| row[c]).sum();
        tmp[y * w] = acc;
        for x in 1..w {
            acc += row[cols[x + 2 * r]] - row[cols[x - 1]];
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for t in 0..=2 * r {
            let src_row = mirror(y as isize + t as isize - r as isize, h);
            for (d, &s) in dst.iter_mut().zip(&tmp[src_row * w..(src_row + 1) * w]) {
                *d += s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_indices() {
        let got: Vec<usize> = (-4..8).map(|i| mirror(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(mirror(-1, 1), 0);
        assert_eq!(mirror(17, 1), 0);
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn pseudo(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + seed) * 12.9898).sin() * 43758.5453 % 1.0).collect()
    }

    #[test]
    fn separable_adjoint_identity() {
        // <A x, y> == <x, A^T y> with a kernel wider than the plane
        let (w, h) = (6, 5);
        let profile = [0.05, 0.1, 0.2, 0.3, 0.2, 0.1, 0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let x = pseudo(w * h, 1.0);
        let y = pseudo(w * h, 2.0);
        let ax = convolve_separable(&x, w, h, &profile);
        let aty = convolve_separable_adjoint(&y, w, h, &profile);
        assert!((dot(&ax, &y) - dot(&x, &aty)).abs() < 1e-12);
    }

    #[test]
    fn decimate_ramp_and_adjoint() {
        let ramp: Vec<f64> = (0..16).map(|v| v as f64).collect();
        assert_eq!(decimate_plane(&ramp, 4, 4, 2), vec![0.0, 2.0, 8.0, 10.0]);
        let y = pseudo(4, 3.0);
        let lhs = dot(&decimate_plane(&ramp, 4, 4, 2), &y);
        let rhs = dot(&ramp, &zero_stuff_plane(&y, 2, 2, 2));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn cubic_weights_partition_unity() {
        for p in 0..5 {
            let w = cubic_weights(p as f64 / 5.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert_eq!(cubic_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(cubic_weights(0.5), [-0.0625, 0.5625, 0.5625, -0.0625]);
    }

    #[test]
    fn box_sum_matches_direct() {
        let (w, h, r) = (5, 4, 2);
        let x = pseudo(w * h, 4.0);
        let s = box_sum(&x, w, h, r);
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for dy in -(r as isize)..=r as isize {
                    for dx in -(r as isize)..=r as isize {
                        acc += x[mirror(y as isize + dy, h) * w + mirror(xx as isize + dx, w)];
                    }
                }
                assert!((acc - s[y * w + xx]).abs() < 1e-12);
            }
        }
    }
}
