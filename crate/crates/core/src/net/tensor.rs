use crate::error::{Error, Result};
use crate::raster::{BandId, Stack};
use crate::scalar::Real;

/// Dense `(batch, channels, height, width)` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(format!(
                "tensor data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.plane_len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let n = self.plane_len();
        let off = (b * self.shape[1] + c) * n;
        &self.data[off..off + n]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let n = self.plane_len();
        let off = (b * self.shape[1] + c) * n;
        &mut self.data[off..off + n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// One-sample tensor holding the bands of `stacks` as consecutive channels.
    pub fn from_stacks(stacks: &[&Stack<T>]) -> Result<Self> {
        let first = stacks.first().ok_or_else(|| Error::shape("no stacks to concatenate"))?;
        let (w, h) = (first.width(), first.height());
        let mut data = Vec::new();
        let mut channels = 0;
        for s in stacks {
            if s.width() != w || s.height() != h {
                return Err(Error::shape(format!(
                    "cannot concatenate {}x{} with {w}x{h}",
                    s.width(),
                    s.height()
                )));
            }
            data.extend_from_slice(s.data());
            channels += s.band_count();
        }
        Tensor::new([1, channels, h, w], data)
    }

    /// Concatenates tensors along the batch axis.
    pub fn concat_batch(parts: &[Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::shape("empty batch"))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::new();
        let mut b = 0;
        for p in parts {
            if p.shape[1..] != [c, h, w] {
                return Err(Error::shape(format!("batch shape mismatch {:?} vs {:?}", p.shape, first.shape)));
            }
            data.extend_from_slice(&p.data);
            b += p.shape[0];
        }
        Tensor::new([b, c, h, w], data)
    }

    /// Channels `range` of every sample.
    pub fn channel_slice(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.channels() {
            return Err(Error::shape(format!(
                "channels {start}..{} out of {}",
                start + count,
                self.channels()
            )));
        }
        let n = self.plane_len();
        let mut data = Vec::with_capacity(self.batch() * count * n);
        for b in 0..self.batch() {
            let s = self.sample(b);
            data.extend_from_slice(&s[start * n..(start + count) * n]);
        }
        Tensor::new([self.batch(), count, self.height(), self.width()], data)
    }

    /// Spatial crop `[x0, x0+w) x [y0, y0+h)` of every plane.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width() || y0 + h > self.height() {
            return Err(Error::shape(format!(
                "crop ({x0},{y0},{w},{h}) outside {}x{}",
                self.width(),
                self.height()
            )));
        }
        let mut data = Vec::with_capacity(self.batch() * self.channels() * w * h);
        for p in self.data.chunks_exact(self.plane_len()) {
            for y in y0..y0 + h {
                let row = y * self.width();
                data.extend_from_slice(&p[row + x0..row + x0 + w]);
            }
        }
        Tensor::new([self.batch(), self.channels(), h, w], data)
    }

    /// Sample `b` as a raster.
    pub fn to_stack(&self, b: usize, bands: Vec<BandId>, gsd: f64) -> Result<Stack<T>> {
        if bands.len() != self.channels() {
            return Err(Error::shape(format!("{} bands for {} channels", bands.len(), self.channels())));
        }
        Stack::new(self.width(), self.height(), bands, gsd, self.sample(b).to_vec())
    }

    pub fn check_same_shape(&self, other: &Tensor<T>, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("{what}: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }
}
