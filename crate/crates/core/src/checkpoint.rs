//! Checkpoint format: a plain-text manifest (metadata lines plus one line
//! per parameter with name, shape and byte offset) and a raw little-endian
//! f64 blob.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::array::Array;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BLOB_FILE: &str = "params.bin";

/// In-memory checkpoint: ordered named arrays plus free-form metadata.
#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub params: Vec<(String, Array)>,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn insert(&mut self, name: impl Into<String>, value: Array) {
        self.params.push((name.into(), value));
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| Error::Config(format!("checkpoint has no parameter '{name}'")))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Config(format!("checkpoint has no metadata key '{key}'")))
    }

    /// Write `manifest.txt` and `params.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut blob: Vec<u8> = Vec::new();
        let mut manifest = String::new();
        for (key, value) in &self.meta {
            manifest.push_str(&format!("meta {key} = {value}\n"));
        }
        for (name, array) in &self.params {
            let offset = blob.len();
            for v in array.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            let shape = if array.shape().is_empty() {
                "scalar".to_string()
            } else {
                array.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
            };
            manifest.push_str(&format!("param {name} {shape} {offset} {}\n", array.numel()));
        }
        std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
        let mut f = std::fs::File::create(dir.join(BLOB_FILE))?;
        f.write_all(&blob)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Checkpoint> {
        let manifest = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let mut blob = Vec::new();
        std::fs::File::open(dir.join(BLOB_FILE))?.read_to_end(&mut blob)?;
        let mut out = Checkpoint::default();
        for (lineno, line) in manifest.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse {
                location: format!("{} line {}", MANIFEST_FILE, lineno + 1),
                reason,
            };
            if let Some(rest) = line.strip_prefix("meta ") {
                let (key, value) = rest
                    .split_once(" = ")
                    .ok_or_else(|| err("expected `meta key = value`".into()))?;
                out.meta.insert(key.trim().to_string(), value.to_string());
            } else if let Some(rest) = line.strip_prefix("param ") {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 4 {
                    return Err(err("expected `param name shape offset count`".into()));
                }
                let name = toks[0].to_string();
                let shape: Vec<usize> = if toks[1] == "scalar" {
                    vec![]
                } else {
                    toks[1]
                        .split('x')
                        .map(|d| d.parse().map_err(|_| err(format!("bad shape '{}'", toks[1]))))
                        .collect::<Result<_>>()?
                };
                let offset: usize =
                    toks[2].parse().map_err(|_| err(format!("bad offset '{}'", toks[2])))?;
                let count: usize =
                    toks[3].parse().map_err(|_| err(format!("bad count '{}'", toks[3])))?;
                let end = offset + count * 8;
                if end > blob.len() {
                    return Err(err(format!("blob too short for '{name}'")));
                }
                let data: Vec<f64> = blob[offset..end]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                out.params.push((name, Array::from_vec(&shape, data)?));
            } else {
                return Err(err(format!("unrecognized line '{line}'")));
            }
        }
        Ok(out)
    }
}
