//! Multi-band raster container, `.bsr` file I/O, tiling, and per-band
//! normalization.
//!
//! A `.bsr` file is a flat little-endian `f32` payload holding band-major
//! planes (each plane row-major), described by a JSON sidecar
//! `<name>.bsr.json`:
//!
//! ```json
//! {"width":64,"height":64,"gsd":10.0,"bands":["B2","B3","B4","B8"],"dtype":"f32"}
//! ```

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sentinel-2 band identity. Declaration order is the canonical band order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandId {
    B2,
    B3,
    B4,
    B8,
    B5,
    B6,
    B7,
    B8A,
    B11,
    B12,
}

impl BandId {
    pub const ALL: [BandId; 10] = [
        BandId::B2,
        BandId::B3,
        BandId::B4,
        BandId::B8,
        BandId::B5,
        BandId::B6,
        BandId::B7,
        BandId::B8A,
        BandId::B11,
        BandId::B12,
    ];
    pub const TEN_M: [BandId; 4] = [BandId::B2, BandId::B3, BandId::B4, BandId::B8];
    pub const TWENTY_M: [BandId; 6] =
        [BandId::B5, BandId::B6, BandId::B7, BandId::B8A, BandId::B11, BandId::B12];

    /// Native ground-sample distance in meters.
    pub fn native_gsd(self) -> f64 {
        match self {
            BandId::B2 | BandId::B3 | BandId::B4 | BandId::B8 => 10.0,
            _ => 20.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BandId::B2 => "B2",
            BandId::B3 => "B3",
            BandId::B4 => "B4",
            BandId::B8 => "B8",
            BandId::B5 => "B5",
            BandId::B6 => "B6",
            BandId::B7 => "B7",
            BandId::B8A => "B8A",
            BandId::B11 => "B11",
            BandId::B12 => "B12",
        }
    }
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BandId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BandId::ALL
            .iter()
            .copied()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown band `{s}`")))
    }
}

/// Multi-band single-resolution raster. Planes are band-major, each plane
/// row-major (`index = y * width + x`).
#[derive(Clone, Debug, PartialEq)]
pub struct Stack<T> {
    width: usize,
    height: usize,
    bands: Vec<BandId>,
    gsd: f64,
    data: Vec<T>,
}

impl<T: Real> Stack<T> {
    pub fn new(width: usize, height: usize, bands: Vec<BandId>, gsd: f64, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || bands.is_empty() {
            return Err(Error::shape(format!(
                "empty raster ({width}x{height}, {} bands)",
                bands.len()
            )));
        }
        if !(gsd > 0.0 && gsd.is_finite()) {
            return Err(Error::config(format!("gsd must be positive, got {gsd}")));
        }
        for (i, b) in bands.iter().enumerate() {
            if bands[..i].contains(b) {
                return Err(Error::shape(format!("duplicate band {b}")));
            }
        }
        let expected = width * height * bands.len();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "data length {} does not match {width}x{height}x{}",
                data.len(),
                bands.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite sample at index {pos}")));
        }
        Ok(Stack { width, height, bands, gsd, data })
    }

    /// Stack of zeros.
    pub fn zeros(width: usize, height: usize, bands: Vec<BandId>, gsd: f64) -> Result<Self> {
        let n = width * height * bands.len();
        Self::new(width, height, bands, gsd, vec![T::zero(); n])
    }

    /// Builds a stack from individual planes, in band order.
    pub fn from_planes(width: usize, height: usize, bands: Vec<BandId>, gsd: f64, planes: Vec<Vec<T>>) -> Result<Self> {
        if planes.len() != bands.len() {
            return Err(Error::shape(format!("{} planes for {} bands", planes.len(), bands.len())));
        }
        let mut data = Vec::with_capacity(width * height * bands.len());
        for p in planes {
            if p.len() != width * height {
                return Err(Error::shape(format!("plane of length {} for {width}x{height}", p.len())));
            }
            data.extend(p);
        }
        Self::new(width, height, bands, gsd, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> &[BandId] {
        &self.bands
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn gsd(&self) -> f64 {
        self.gsd
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn plane(&self, band: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[band * n..(band + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.plane_len())
    }

    /// Position of `band` in this stack.
    pub fn band_index(&self, band: BandId) -> Option<usize> {
        self.bands.iter().position(|&b| b == band)
    }

    pub fn get(&self, band: usize, x: usize, y: usize) -> T {
        self.data[band * self.plane_len() + y * self.width + x]
    }

    pub fn same_grid<U: Real>(&self, other: &Stack<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Same layout and metadata, new samples.
    pub fn with_data(&self, data: Vec<T>) -> Result<Self> {
        Self::new(self.width, self.height, self.bands.clone(), self.gsd, data)
    }

    pub fn with_gsd(mut self, gsd: f64) -> Self {
        self.gsd = gsd;
        self
    }

    /// Applies `f` to every plane, producing a stack of `out_w x out_h` planes.
    pub(crate) fn map_planes<F>(&self, out_w: usize, out_h: usize, gsd: f64, f: F) -> Result<Self>
    where
        F: Fn(usize, &[T]) -> Vec<T> + Sync,
    {
        use rayon::prelude::*;
        let planes: Vec<Vec<T>> = self
            .data
            .par_chunks_exact(self.plane_len())
            .enumerate()
            .map(|(i, p)| f(i, p))
            .collect();
        Self::from_planes(out_w, out_h, self.bands.clone(), gsd, planes)
    }

    /// Subset of bands, in the given order.
    pub fn select(&self, bands: &[BandId]) -> Result<Self> {
        let mut planes = Vec::with_capacity(bands.len());
        for &b in bands {
            let i = self
                .band_index(b)
                .ok_or_else(|| Error::shape(format!("band {b} not present")))?;
            planes.push(self.plane(i).to_vec());
        }
        Self::from_planes(self.width, self.height, bands.to_vec(), self.gsd, planes)
    }

    pub fn cast<U: Real>(&self) -> Stack<U> {
        Stack {
            width: self.width,
            height: self.height,
            bands: self.bands.clone(),
            gsd: self.gsd,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Sub-raster `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::shape(format!(
                "crop window ({x0},{y0},{w},{h}) outside {}x{} raster",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * self.bands.len());
        for p in self.planes() {
            for y in y0..y0 + h {
                let row = y * self.width;
                data.extend_from_slice(&p[row + x0..row + x0 + w]);
            }
        }
        Ok(Stack { width: w, height: h, bands: self.bands.clone(), gsd: self.gsd, data })
    }

    /// Non-overlapping `tile x tile` windows in row-major order; the
    /// remainder along each axis is discarded.
    pub fn tile_origins(&self, tile: usize) -> Vec<(usize, usize)> {
        if tile == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for ty in 0..self.height / tile {
            for tx in 0..self.width / tile {
                out.push((tx * tile, ty * tile));
            }
        }
        out
    }

    pub fn tiles(&self, tile: usize) -> Result<Vec<Self>> {
        self.tile_origins(tile)
            .into_iter()
            .map(|(x, y)| self.crop(x, y, tile, tile))
            .collect()
    }

    /// Per-band `(x - mean) / std` with population statistics of this image.
    pub fn normalize(&self) -> Result<(Self, NormStats)> {
        let mut stats = NormStats { mean: Vec::new(), std: Vec::new() };
        let mut data = Vec::with_capacity(self.data.len());
        for (p, band) in self.planes().zip(&self.bands) {
            let n = p.len() as f64;
            let mean = p.iter().map(|v| v.f64()).sum::<f64>() / n;
            let var = p.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) || std <= mean.abs() * 1e-12 {
                return Err(Error::numeric(format!("zero variance in band {band}")));
            }
            data.extend(p.iter().map(|v| T::of((v.f64() - mean) / std)));
            stats.mean.push(mean);
            stats.std.push(std);
        }
        Ok((self.with_data(data)?, stats))
    }

    /// Inverse of [`Stack::normalize`]: `x * std + mean` per band.
    pub fn denormalize(&self, stats: &NormStats) -> Result<Self> {
        if stats.len() != self.band_count() {
            return Err(Error::shape(format!(
                "{} bands but {} normalization entries",
                self.band_count(),
                stats.len()
            )));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for (i, p) in self.planes().enumerate() {
            let (m, s) = (stats.mean[i], stats.std[i]);
            data.extend(p.iter().map(|v| T::of(v.f64() * s + m)));
        }
        self.with_data(data)
    }
}

/// Per-band normalization statistics (population standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::shape("mean/std length mismatch"));
        }
        if let Some(s) = std.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::numeric(format!("std must be positive, got {s}")));
        }
        Ok(NormStats { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    width: usize,
    height: usize,
    gsd: f64,
    bands: Vec<String>,
    dtype: String,
}

/// Path of the JSON sidecar for a `.bsr` payload.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Loads a `.bsr` raster and sorts its bands into canonical order.
pub fn load_stack(path: impl AsRef<Path>) -> Result<Stack<f32>> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: Header = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: corrupt header: {e}", side.display())))?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!("unsupported dtype `{}`", header.dtype)));
    }
    let bands = header
        .bands
        .iter()
        .map(|s| s.parse::<BandId>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = header.width * header.height * bands.len();
    if payload.len() < n * 4 {
        return Err(Error::Format(format!(
            "{}: truncated payload ({} bytes, expected {})",
            path.display(),
            payload.len(),
            n * 4
        )));
    }
    if payload.len() > n * 4 {
        return Err(Error::Format(format!(
            "{}: payload longer than header dimensions ({} bytes, expected {})",
            path.display(),
            payload.len(),
            n * 4
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("{}: non-finite sample at index {pos}", path.display())));
    }
    let stack = Stack::new(header.width, header.height, bands, header.gsd, data)?;
    let mut sorted = stack.bands.clone();
    sorted.sort();
    if sorted == stack.bands {
        Ok(stack)
    } else {
        stack.select(&sorted)
    }
}

/// Writes the payload and its sidecar header.
pub fn save_stack(stack: &Stack<f32>, path: impl AsRef<Path>) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let header = Header {
        width: stack.width,
        height: stack.height,
        gsd: stack.gsd,
        bands: stack.bands.iter().map(|b| b.name().to_string()).collect(),
        dtype: "f32".into(),
    };
    let mut bytes = Vec::with_capacity(stack.data.len() * 4);
    for v in &stack.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let file = fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Format(e.to_string()))?;
    w.flush().map_err(|e| Error::io(&side, e))
}

/// Writes an 8-bit RGB preview of three bands with a 2%-98% percentile
/// stretch per band.
pub fn write_preview<T: Real>(stack: &Stack<T>, rgb: [usize; 3], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for &b in &rgb {
        if b >= stack.band_count() {
            return Err(Error::shape(format!("preview band {b} out of range")));
        }
    }
    let n = stack.plane_len();
    let mut pixels = vec![0u8; n * 3];
    for (c, &b) in rgb.iter().enumerate() {
        let plane = stack.plane(b);
        let mut sorted: Vec<f64> = plane.iter().map(|v| v.f64()).collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let lo = percentile(&sorted, 0.02);
        let hi = percentile(&sorted, 0.98);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (i, v) in plane.iter().enumerate() {
            let t = ((v.f64() - lo) / span).clamp(0.0, 1.0);
            pixels[i * 3 + c] = (t * 255.0).round() as u8;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), stack.width as u32, stack.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Format(format!("png: {e}")))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    writer.finish().map_err(|e| Error::Format(format!("png: {e}")))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}
