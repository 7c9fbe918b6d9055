//! 3x3, stride 1, zero-padding 1 convolutions as nine shifted GEMMs over
//! zero-bordered planes.
//!
//! Weights are `cout x (cin * 9)` row-major, i.e. `w[co][ci][ky][kx]`.
//! Activations are kept in a padded layout: each channel is a
//! `(h + 2) x (w + 2)` plane whose one-pixel border is zero. Pixel `(y, x)`
//! sits at `(y + 1) * (w + 2) + x + 1`, so every tap of the kernel is a
//! constant offset into the plane and no im2col buffer is needed.

use crate::scalar::Real;

pub const K: usize = 3;
pub const TAPS: usize = K * K;

/// Geometry of the padded layout for an `h x w` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Padded {
    pub h: usize,
    pub w: usize,
}

impl Padded {
    pub fn new(h: usize, w: usize) -> Self {
        Padded { h, w }
    }

    fn pw(&self) -> usize {
        self.w + 2
    }

    /// Samples per padded channel.
    pub fn plane(&self) -> usize {
        (self.h + 2) * self.pw()
    }

    /// First interior position.
    fn start(&self) -> usize {
        self.pw() + 1
    }

    /// Contiguous run from the first to the last interior pixel.
    fn span(&self) -> usize {
        (self.h - 1) * self.pw() + self.w
    }

    /// Position shift of tap `t` (row-major over the 3x3 window).
    fn offset(&self, t: usize) -> isize {
        (t / K) as isize * self.pw() as isize + (t % K) as isize - self.pw() as isize - 1
    }

    pub fn pad<T: Real>(&self, input: &[T], c: usize) -> Vec<T> {
        let (pw, plane) = (self.pw(), self.plane());
        let mut out = vec![T::zero(); c * plane];
        for ch in 0..c {
            for y in 0..self.h {
                let src = &input[(ch * self.h + y) * self.w..][..self.w];
                out[ch * plane + (y + 1) * pw + 1..][..self.w].copy_from_slice(src);
            }
        }
        out
    }

    pub fn unpad<T: Real>(&self, padded: &[T], c: usize) -> Vec<T> {
        let (pw, plane) = (self.pw(), self.plane());
        let mut out = Vec::with_capacity(c * self.h * self.w);
        for ch in 0..c {
            for y in 0..self.h {
                out.extend_from_slice(&padded[ch * plane + (y + 1) * pw + 1..][..self.w]);
            }
        }
        out
    }

    /// Zeroes the left/right border columns that a span write touches.
    fn clear_border<T: Real>(&self, buf: &mut [T], c: usize) {
        let (pw, plane) = (self.pw(), self.plane());
        for ch in 0..c {
            let p = &mut buf[ch * plane..(ch + 1) * plane];
            for y in 1..self.h {
                p[y * pw + self.w + 1] = T::zero();
                p[(y + 1) * pw] = T::zero();
            }
        }
    }

    /// Interior samples of one padded channel, row by row.
    pub fn rows<'a, T>(&self, plane: &'a [T]) -> impl Iterator<Item = &'a [T]> + 'a {
        let (pw, w) = (self.pw(), self.w);
        (0..self.h).map(move |y| &plane[(y + 1) * pw + 1..][..w])
    }

    fn rows_mut<'a, T>(&self, plane: &'a mut [T]) -> impl Iterator<Item = &'a mut [T]> + 'a {
        let (pw, w, h) = (self.pw(), self.w, self.h);
        plane[pw..(h + 1) * pw].chunks_exact_mut(pw).map(move |r| &mut r[1..1 + w])
    }
}

fn shifted(start: usize, off: isize) -> usize {
    (start as isize + off) as usize
}

/// `y = conv(x) + bias` for one sample in padded layout; `y` holds `cout`
/// padded channels and comes back with a zero border.
pub fn conv_forward<T: Real>(x: &[T], cin: usize, geo: Padded, weight: &[T], bias: &[T], y: &mut [T]) {
    let cout = bias.len();
    let (p, s0, n) = (geo.plane() as isize, geo.start(), geo.span());
    let k = cin * TAPS;
    y.iter_mut().for_each(|v| *v = T::zero());
    for co in 0..cout {
        for row in geo.rows_mut(&mut y[co * geo.plane()..(co + 1) * geo.plane()]) {
            row.iter_mut().for_each(|v| *v = bias[co]);
        }
    }
    for t in 0..TAPS {
        let xs = &x[shifted(s0, geo.offset(t))..];
        T::gemm(cout, cin, n, T::one(), &weight[t..], (k as isize, TAPS as isize), xs, (p, 1), T::one(), &mut y[s0..], (p, 1));
    }
    geo.clear_border(y, cout);
}

/// Accumulates `dW` and `db` for one sample; `g` must have a zero border.
pub fn conv_weight_grad<T: Real>(x: &[T], cin: usize, geo: Padded, g: &[T], dw: &mut [T], db: &mut [T]) {
    let cout = db.len();
    let (p, s0, n) = (geo.plane() as isize, geo.start(), geo.span());
    let k = cin * TAPS;
    for t in 0..TAPS {
        let xs = &x[shifted(s0, geo.offset(t))..];
        T::gemm(cout, n, cin, T::one(), &g[s0..], (p, 1), xs, (1, p), T::one(), &mut dw[t..], (k as isize, TAPS as isize));
    }
    for (co, d) in db.iter_mut().enumerate() {
        let plane = &g[co * geo.plane()..(co + 1) * geo.plane()];
        for row in geo.rows(plane) {
            *d += row.iter().copied().sum::<T>();
        }
    }
}

/// Gradient with respect to the padded layer input for one sample; `g`
/// must have a zero border and so does the result.
pub fn conv_input_grad<T: Real>(g: &[T], cout: usize, geo: Padded, weight: &[T], cin: usize) -> Vec<T> {
    let (p, s0, n) = (geo.plane() as isize, geo.start(), geo.span());
    let k = cin * TAPS;
    let mut gx = vec![T::zero(); cin * geo.plane()];
    for t in 0..TAPS {
        let gs = &g[shifted(s0, -geo.offset(t))..];
        T::gemm(cin, cout, n, T::one(), &weight[t..], (TAPS as isize, k as isize), gs, (p, 1), T::one(), &mut gx[s0..], (p, 1));
    }
    geo.clear_border(&mut gx, cin);
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn direct(input: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let cout = bias.len();
        let mut out = vec![0.0; cout * h * w];
        for co in 0..cout {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (y + ky - 1, x + kx - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += weight[((co * cin + ci) * 3 + ky as usize) * 3 + kx as usize]
                                    * input[(ci * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[(co * h + y as usize) * w + x as usize] = acc;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 * 0.618 + s) * 7.77).sin()).collect()
    }

    #[test]
    fn padded_conv_matches_direct() {
        for &(cin, cout, h, w) in &[(3, 4, 5, 6), (2, 2, 1, 4), (1, 3, 4, 1)] {
            let geo = Padded::new(h, w);
            let input = pseudo(cin * h * w, 0.1);
            let weight = pseudo(cout * cin * 9, 0.2);
            let bias = pseudo(cout, 0.3);
            let mut out = vec![1.0; cout * geo.plane()];
            conv_forward(&geo.pad(&input, cin), cin, geo, &weight, &bias, &mut out);
            assert!(geo.pad(&geo.unpad(&out, cout), cout) == out, "border not zero");
            for (a, b) in geo.unpad(&out, cout).iter().zip(direct(&input, cin, h, w, &weight, &bias)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_are_adjoint() {
        let (cin, cout, h, w) = (2, 3, 4, 5);
        let geo = Padded::new(h, w);
        let x = pseudo(cin * h * w, 0.4);
        let g = pseudo(cout * h * w, 0.5);
        let weight = pseudo(cout * cin * 9, 0.6);
        let y = direct(&x, cin, h, w, &weight, &vec![0.0; cout]);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();

        let gx = conv_input_grad(&geo.pad(&g, cout), cout, geo, &weight, cin);
        assert!(geo.pad(&geo.unpad(&gx, cin), cin) == gx, "border not zero");
        let rhs: f64 = x.iter().zip(geo.unpad(&gx, cin)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);

        // <g, conv(x; W)> is linear in W, so it equals <W, dW>
        let mut dw = vec![0.0; weight.len()];
        let mut db = vec![0.0; cout];
        conv_weight_grad(&geo.pad(&x, cin), cin, geo, &geo.pad(&g, cout), &mut dw, &mut db);
        let via_w: f64 = weight.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - via_w).abs() < 1e-10);
        for (co, d) in db.iter().enumerate() {
            let s: f64 = g[co * h * w..(co + 1) * h * w].iter().sum();
            assert!((d - s).abs() < 1e-12);
        }
    }
}
