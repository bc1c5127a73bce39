//! Checkpoint files: magic `RUCK`, u32 version, u32 header length, a JSON
//! header (configs, counters, tensor names and shapes), then the parameter
//! values, ADAM first moments and second moments as little-endian f32, each
//! in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::{Checkpoint, TrainConfig};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::{AdamState, ParamSet, Tensor};

const MAGIC: &[u8; 4] = b"RUCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    step: u64,
    adam_t: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let header = Header {
        model: ckpt.model_config.clone(),
        train: ckpt.train_config.clone(),
        epoch: ckpt.epoch,
        step: ckpt.step,
        adam_t: ckpt.adam.t,
        tensors: ckpt
            .params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Validation(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    let blocks = [
        ckpt.params.iter().map(|p| &p.value).collect::<Vec<_>>(),
        ckpt.adam.m.iter().collect(),
        ckpt.adam.v.iter().collect(),
    ];
    for block in blocks {
        for t in block {
            let mut bytes = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&bytes).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let loc = || path.display().to_string();
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut pre = [0u8; 12];
    r.read_exact(&mut pre).map_err(io)?;
    if &pre[0..4] != MAGIC {
        return Err(Error::format(loc(), format!("bad magic {:?}, expected {:?}", &pre[0..4], MAGIC)));
    }
    let version = u32::from_le_bytes(pre[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            loc(),
            format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let len = u32::from_le_bytes(pre[8..12].try_into().expect("4 bytes")) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| Error::format(loc(), format!("header: {e}")))?;
    let mut read_tensor = |shape: &[usize]| -> Result<Tensor<f32>> {
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(io)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::new(shape.to_vec(), data)
    };
    let mut params = ParamSet::new();
    for t in &header.tensors {
        let value = read_tensor(&t.shape)?;
        params.push(t.name.clone(), value);
    }
    let mut m = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        m.push(read_tensor(&t.shape)?);
    }
    let mut v = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        v.push(read_tensor(&t.shape)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(Error::format(loc(), "trailing bytes after checkpoint tensors"));
    }
    let ckpt = Checkpoint {
        model_config: header.model,
        train_config: header.train,
        params,
        adam: AdamState { t: header.adam_t, m, v },
        epoch: header.epoch,
        step: header.step,
    };
    // reject files whose tensors do not fit the declared architecture
    ckpt.model()?;
    Ok(ckpt)
}
