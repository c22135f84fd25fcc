//! Directory-based tensor store: `manifest.json` plus one raw little-endian
//! blob (`tensors.bin`), row-major. Datasets use `f32`; checkpoints use `f64`
//! so that reloading a model reproduces it exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Mat;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const BLOB: &str = "tensors.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: usize,
    pub nbytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: Value,
}

#[derive(Clone, Debug, Default)]
pub struct TensorWriter {
    entries: Vec<TensorEntry>,
    blob: Vec<u8>,
    meta: Value,
}

impl TensorWriter {
    pub fn new() -> Self {
        TensorWriter {
            meta: Value::Null,
            ..Default::default()
        }
    }

    fn push(&mut self, name: &str, shape: &[usize], dtype: DType, bytes: Vec<u8>) {
        self.entries.push(TensorEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            dtype,
            offset: self.blob.len(),
            nbytes: bytes.len(),
        });
        self.blob.extend(bytes);
    }

    pub fn add_f32(&mut self, name: &str, shape: &[usize], values: &[f32]) -> &mut Self {
        assert_eq!(shape.iter().product::<usize>(), values.len(), "shape of `{name}`");
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(name, shape, DType::F32, bytes);
        self
    }

    pub fn add_f64(&mut self, name: &str, shape: &[usize], values: &[f64]) -> &mut Self {
        assert_eq!(shape.iter().product::<usize>(), values.len(), "shape of `{name}`");
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(name, shape, DType::F64, bytes);
        self
    }

    pub fn add_mat(&mut self, name: &str, m: &Mat) -> &mut Self {
        self.add_f64(name, &[m.rows(), m.cols()], m.as_slice())
    }

    pub fn meta(&mut self, meta: Value) -> &mut Self {
        self.meta = meta;
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            tensors: self.entries.clone(),
            meta: self.meta.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let mpath = dir.join(MANIFEST);
        fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
        let bpath = dir.join(BLOB);
        fs::write(&bpath, &self.blob).map_err(|e| Error::io(&bpath, e))?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TensorFile {
    pub manifest: Manifest,
    blob: Vec<u8>,
    dir: std::path::PathBuf,
}

impl TensorFile {
    pub fn read(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        if !mpath.exists() {
            return Err(Error::MissingInput(mpath));
        }
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
        let bpath = dir.join(BLOB);
        let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        for t in &manifest.tensors {
            let expect = t.shape.iter().product::<usize>() * t.dtype.width();
            if t.nbytes != expect || t.offset + t.nbytes > blob.len() {
                return Err(Error::format(&bpath, format!("tensor `{}` out of bounds", t.name)));
            }
        }
        Ok(TensorFile {
            manifest,
            blob,
            dir: dir.to_path_buf(),
        })
    }

    pub fn meta(&self) -> &Value {
        &self.manifest.meta
    }

    fn entry(&self, name: &str) -> Result<&TensorEntry> {
        self.manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format(&self.dir, format!("no tensor named `{name}`")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.manifest.tensors.iter().any(|t| t.name == name)
    }

    pub fn shape(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self.entry(name)?.shape.clone())
    }

    pub fn f32s(&self, name: &str) -> Result<Vec<f32>> {
        let e = self.entry(name)?;
        if e.dtype != DType::F32 {
            return Err(Error::format(&self.dir, format!("tensor `{name}` is not f32")));
        }
        Ok(self.blob[e.offset..e.offset + e.nbytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    /// Values widened to `f64` regardless of stored dtype.
    pub fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        let e = self.entry(name)?;
        match e.dtype {
            DType::F32 => Ok(self.f32s(name)?.into_iter().map(f64::from).collect()),
            DType::F64 => Ok(self.blob[e.offset..e.offset + e.nbytes]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()),
        }
    }

    pub fn mat(&self, name: &str) -> Result<Mat> {
        let shape = self.shape(name)?;
        let (r, c) = match shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (*n, 1),
            _ => {
                return Err(Error::format(
                    &self.dir,
                    format!("tensor `{name}` is not a matrix: {shape:?}"),
                ))
            }
        };
        Mat::from_vec(r, c, self.f64s(name)?)
    }
}
