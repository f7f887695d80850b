//! Single-file checkpoints.
//!
//! Layout: the 8-byte magic `BAGAUCKP`, a little-endian `u32` format
//! version, a `u64` header length, the JSON header, then every tensor's
//! values as little-endian `f64` in header order. Tensors are stored as
//! `f64` regardless of the training precision so `f32` values round-trip
//! exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::network::Network;
use super::spec::ModelSpec;

const MAGIC: &[u8; 8] = b"BAGAUCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: ModelSpec,
    scalar: String,
    step: u64,
    metadata: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    /// Precision the weights were produced in.
    pub scalar: String,
    /// Optimiser steps taken.
    pub step: u64,
    /// Free-form training state (epoch, best score, configuration, ...).
    pub metadata: serde_json::Value,
    tensors: Vec<(String, Tensor<f64>)>,
}

impl Checkpoint {
    /// Captures parameters (`param/<name>`) and buffers (`buffer/<name>`).
    pub fn from_network<T: Scalar>(net: &Network<T>, step: u64) -> Self {
        let mut tensors = Vec::new();
        for (_, p) in net.params().iter() {
            tensors.push((format!("param/{}", p.name), p.tensor.cast()));
        }
        for (_, b) in net.params().buffers() {
            tensors.push((format!("buffer/{}", b.name), b.tensor.cast()));
        }
        Checkpoint {
            spec: net.spec().clone(),
            scalar: T::DTYPE.to_string(),
            step,
            metadata: serde_json::Value::Null,
            tensors,
        }
    }

    pub fn insert<T: Scalar>(&mut self, name: impl Into<String>, tensor: &Tensor<T>) {
        let name = name.into();
        let t = tensor.cast();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.tensors.push((name, t)),
        }
    }

    pub fn get<T: Scalar>(&self, name: &str) -> Option<Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t.cast())
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    /// Rebuilds the network. When `expected` is given it must equal the
    /// stored spec exactly.
    pub fn to_network<T: Scalar>(&self, expected: Option<&ModelSpec>) -> Result<Network<T>> {
        if let Some(exp) = expected {
            if exp != &self.spec {
                return Err(Error::Checkpoint(format!(
                    "checkpoint spec {} does not match the requested spec {}",
                    serde_json::to_string(&self.spec).unwrap_or_default(),
                    serde_json::to_string(exp).unwrap_or_default()
                )));
            }
        }
        let mut net = Network::<T>::build(&self.spec)?;
        let ids: Vec<_> = net.params().iter().map(|(id, p)| (id, p.name.clone())).collect();
        for (id, name) in ids {
            let t = self.lookup(&format!("param/{name}"), net.params().get(id).shape())?;
            *net.params_mut().get_mut(id) = t;
        }
        let bids: Vec<_> = net.params().buffers().map(|(id, b)| (id, b.name.clone())).collect();
        for (id, name) in bids {
            let t = self.lookup(&format!("buffer/{name}"), net.params().buffer(id).shape())?;
            *net.params_mut().buffer_mut(id) = t;
        }
        Ok(net)
    }

    fn lookup<T: Scalar>(&self, name: &str, shape: [usize; 4]) -> Result<Tensor<T>> {
        let t = self
            .get::<T>(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if t.shape() != shape {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = Header {
            format_version: FORMAT_VERSION,
            spec: self.spec.clone(),
            scalar: self.scalar.clone(),
            step: self.step,
            metadata: self.metadata.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| TensorHeader {
                    name: n.clone(),
                    shape: t.shape(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w.write_all(&FORMAT_VERSION.to_le_bytes())?;
            w.write_all(&(json.len() as u64).to_le_bytes())?;
            w.write_all(&json)?;
            for (_, t) in &self.tensors {
                for v in t.data() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint file",
                path.display()
            )));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(io)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for th in header.tensors {
            let n: usize = th.shape.iter().product();
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(io)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((th.name, Tensor::from_vec(th.shape, data)?));
        }
        Ok(Checkpoint {
            spec: header.spec,
            scalar: header.scalar,
            step: header.step,
            metadata: header.metadata,
            tensors,
        })
    }
}
