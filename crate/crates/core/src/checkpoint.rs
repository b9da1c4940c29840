//! Model container: the magic bytes `PMCK1`, one line of JSON header, then
//! little-endian `f32` tensor data in directory order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::{CnnConfig, CnnModel};
use crate::error::{Error, Result};
use crate::han::{HanConfig, HanModel};
use crate::model::Classifier;
use crate::numerics::{ParamSet, Tensor};
use crate::tfidf_svm::LinearSvmOvR;

pub const MAGIC: &[u8; 5] = b"PMCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "config", rename_all = "snake_case")]
pub enum Architecture {
    Cnn(CnnConfig),
    Han(HanConfig),
    Svm { num_classes: usize, dim: usize, c: f64 },
}

impl Architecture {
    pub fn kind(&self) -> &'static str {
        match self {
            Architecture::Cnn(_) => "cnn",
            Architecture::Han(_) => "han",
            Architecture::Svm { .. } => "svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    pub offset: u64,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    outcome: String,
    categories: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub outcome: String,
    pub categories: Vec<String>,
    pub tensors: Vec<(TensorEntry, Vec<f32>)>,
}

impl Checkpoint {
    fn from_tensors(
        architecture: Architecture,
        outcome: &str,
        categories: &[String],
        tensors: Vec<(String, Vec<usize>, bool, Vec<f32>)>,
    ) -> Self {
        let mut offset = 0u64;
        let tensors = tensors
            .into_iter()
            .map(|(name, shape, trainable, data)| {
                let e = TensorEntry { name, shape, offset, trainable };
                offset += 4 * data.len() as u64;
                (e, data)
            })
            .collect();
        Self { architecture, outcome: outcome.to_string(), categories: categories.to_vec(), tensors }
    }

    fn from_params(architecture: Architecture, outcome: &str, categories: &[String], p: &ParamSet<f32>) -> Self {
        let tensors = (0..p.len())
            .map(|i| {
                let id = crate::numerics::ParamId(i);
                let v = p.value(id);
                (p.name(id).to_string(), v.shape().to_vec(), p.is_trainable(id), v.data().to_vec())
            })
            .collect();
        Self::from_tensors(architecture, outcome, categories, tensors)
    }

    pub fn from_cnn(m: &CnnModel<f32>, outcome: &str, categories: &[String]) -> Self {
        Self::from_params(Architecture::Cnn(m.config.clone()), outcome, categories, m.params())
    }

    pub fn from_han(m: &HanModel<f32>, outcome: &str, categories: &[String]) -> Self {
        Self::from_params(Architecture::Han(m.config.clone()), outcome, categories, m.params())
    }

    /// One weight tensor per category (`svm.w.<category>`) plus `svm.b`.
    pub fn from_svm(m: &LinearSvmOvR, outcome: &str, categories: &[String]) -> Self {
        let dim = m.dim();
        let mut tensors: Vec<_> = categories
            .iter()
            .zip(&m.weights)
            .map(|(c, w)| (format!("svm.w.{c}"), vec![dim], true, w.iter().map(|v| *v as f32).collect()))
            .collect();
        tensors.push(("svm.b".into(), vec![m.num_classes()], true, m.biases.iter().map(|v| *v as f32).collect()));
        Self::from_tensors(Architecture::Svm { num_classes: m.num_classes(), dim, c: m.c }, outcome, categories, tensors)
    }

    fn param_set(&self) -> Result<ParamSet<f32>> {
        let mut p = ParamSet::new();
        for (e, data) in &self.tensors {
            if p.id(&e.name).is_some() {
                return Err(Error::Checkpoint(format!("tensor `{}` appears twice", e.name)));
            }
            p.register(&e.name, Tensor::from_vec(&e.shape, data.clone())?, e.trainable);
        }
        Ok(p)
    }

    pub fn to_cnn(&self) -> Result<CnnModel<f32>> {
        match &self.architecture {
            Architecture::Cnn(cfg) => CnnModel::from_params(cfg.clone(), self.param_set()?),
            other => Err(Error::Checkpoint(format!("expected a cnn checkpoint, found {}", other.kind()))),
        }
    }

    pub fn to_han(&self) -> Result<HanModel<f32>> {
        match &self.architecture {
            Architecture::Han(cfg) => HanModel::from_params(cfg.clone(), self.param_set()?),
            other => Err(Error::Checkpoint(format!("expected a han checkpoint, found {}", other.kind()))),
        }
    }

    pub fn to_svm(&self) -> Result<LinearSvmOvR> {
        let Architecture::Svm { num_classes, dim, c } = &self.architecture else {
            return Err(Error::Checkpoint(format!("expected an svm checkpoint, found {}", self.architecture.kind())));
        };
        let find = |name: &str, len: usize| -> Result<Vec<f64>> {
            let (e, d) = self
                .tensors
                .iter()
                .find(|(e, _)| e.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if e.shape != [len] {
                return Err(Error::Checkpoint(format!("`{name}` has shape {:?}", e.shape)));
            }
            Ok(d.iter().map(|v| f64::from(*v)).collect())
        };
        if self.categories.len() != *num_classes {
            return Err(Error::Checkpoint("category count does not match the svm".into()));
        }
        let weights = self.categories.iter().map(|c| find(&format!("svm.w.{c}"), *dim)).collect::<Result<_>>()?;
        Ok(LinearSvmOvR { c: *c, weights, biases: find("svm.b", *num_classes)? })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            architecture: self.architecture.clone(),
            outcome: self.outcome.clone(),
            categories: self.categories.clone(),
            tensors: self.tensors.iter().map(|(e, _)| e.clone()).collect(),
        };
        let mut out = MAGIC.to_vec();
        serde_json::to_writer(&mut out, &header)?;
        out.push(b'\n');
        for (_, data) in &self.tensors {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let rest = &bytes[MAGIC.len()..];
        let nl = rest.iter().position(|b| *b == b'\n').ok_or_else(|| Error::Checkpoint("unterminated header".into()))?;
        let header: Header = serde_json::from_slice(&rest[..nl])?;
        let data = &rest[nl + 1..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        let mut expect = 0u64;
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if e.offset != expect {
                return Err(Error::Checkpoint(format!("`{}` at offset {} (expected {expect})", e.name, e.offset)));
            }
            let start = e.offset as usize;
            let end = start + 4 * n;
            let chunk = data.get(start..end).ok_or_else(|| Error::Checkpoint(format!("`{}` is truncated", e.name)))?;
            let values = chunk.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            expect = end as u64;
            tensors.push((e, values));
        }
        if expect as usize != data.len() {
            return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
        }
        Ok(Self { architecture: header.architecture, outcome: header.outcome, categories: header.categories, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
