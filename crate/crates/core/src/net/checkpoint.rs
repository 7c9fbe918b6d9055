//! `.fnet` checkpoints: little-endian `f32` parameter payload plus a JSON
//! sidecar `<name>.fnet.json` with the layer layout, seed and step count.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{FusionNet, LayerShape};
use crate::error::{Error, Result};
use crate::raster::sidecar_path;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    layers: Vec<LayerShape>,
    seed: u64,
    steps: u64,
    params: usize,
    dtype: String,
}

pub fn save_checkpoint(net: &FusionNet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(net.param_count() * 4);
    for v in net.params() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let header = Header {
        format: "fnet".into(),
        layers: net.layers().to_vec(),
        seed: net.seed(),
        steps: net.steps(),
        params: net.param_count(),
        dtype: "f32".into(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Loads parameters; the optimizer state of the returned network is reset.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FusionNet<f32>> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: Header = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: corrupt header: {e}", side.display())))?;
    if header.format != "fnet" || header.dtype != "f32" {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint format `{}`/`{}`",
            side.display(),
            header.format,
            header.dtype
        )));
    }
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    if payload.len() != header.params * 4 {
        return Err(Error::Format(format!(
            "{}: truncated payload ({} bytes, expected {})",
            path.display(),
            payload.len(),
            header.params * 4
        )));
    }
    let params = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FusionNet::from_params(header.layers, params, header.seed, header.steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.fnet");
        let net = FusionNet::<f32>::init(11);
        save_checkpoint(&net, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back.params(), net.params());
        assert_eq!(back.seed(), 11);

        fs::write(&p, [0u8; 8]).unwrap();
        assert!(load_checkpoint(&p).unwrap_err().to_string().contains("truncated"));
    }
}
