//! Checkpoints: a JSON manifest plus one little-endian `f64` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Mode, ModelConfig, ModelParams, Param};
use crate::error::{Error, Result};
use crate::topic_model::decode_f64s;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    #[serde(rename = "E")]
    e: usize,
    #[serde(rename = "H")]
    h: usize,
    #[serde(rename = "A")]
    a: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "V")]
    v: usize,
    switch_hidden: usize,
    mode: Mode,
    use_coverage: bool,
    data_file: String,
    arrays: Vec<ArrayEntry>,
}

impl ModelParams {
    /// Writes `<dir>/<stem>.json` and `<dir>/<stem>.bin`; returns the
    /// manifest path.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let c = self.config();
        let data_file = format!("{stem}.bin");
        let mut arrays = Vec::with_capacity(Param::ALL.len());
        let mut bytes = Vec::with_capacity(self.num_values() * 8);
        for p in Param::ALL {
            let values = self.get(p);
            arrays.push(ArrayEntry {
                name: p.name().to_string(),
                shape: p.shape(c),
                offset: bytes.len(),
                len: values.len(),
            });
            bytes.extend(values.iter().flat_map(|x| x.to_le_bytes()));
        }
        let manifest = Manifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            e: c.embed_dim,
            h: c.hidden_dim,
            a: c.attn_dim,
            k: c.topics,
            v: c.vocab_size,
            switch_hidden: c.switch_hidden,
            mode: c.mode,
            use_coverage: c.use_coverage,
            data_file: data_file.clone(),
            arrays,
        };
        let bin = dir.join(&data_file);
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads from a manifest path written by [`ModelParams::save`].
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if m.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                found: m.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let config = ModelConfig {
            vocab_size: m.v,
            embed_dim: m.e,
            hidden_dim: m.h,
            attn_dim: m.a,
            topics: m.k,
            switch_hidden: m.switch_hidden,
            mode: m.mode,
            use_coverage: m.use_coverage,
        };
        let mut params = ModelParams::zeros(config)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let bin = dir.join(&m.data_file);
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let mut seen = Vec::new();
        for entry in &m.arrays {
            let p = Param::from_name(&entry.name).ok_or_else(|| {
                Error::invalid(format!("unknown array `{}` in checkpoint", entry.name))
            })?;
            if entry.shape != p.shape(&config) {
                return Err(Error::invalid(format!(
                    "array `{}` has shape {:?}, expected {:?}",
                    entry.name,
                    entry.shape,
                    p.shape(&config)
                )));
            }
            let end = entry.offset + entry.len * 8;
            if end > bytes.len() {
                return Err(Error::invalid(format!(
                    "array `{}` runs past the end of {}",
                    entry.name,
                    bin.display()
                )));
            }
            params.set(p, decode_f64s(&bytes[entry.offset..end]))?;
            seen.push(p);
        }
        if let Some(missing) = Param::ALL.into_iter().find(|p| !seen.contains(p)) {
            return Err(Error::invalid(format!(
                "checkpoint lacks array `{}`",
                missing.name()
            )));
        }
        if !params.all_finite() {
            return Err(Error::NonFinite(path.display().to_string()));
        }
        Ok(params)
    }
}
