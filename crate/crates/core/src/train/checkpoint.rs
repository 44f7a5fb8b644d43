//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "MSFFCKPT" | u32 version | u64 header length | JSON header
//! | f32 payload (every tensor listed in the header, in order) | "MSFF_END"
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{OptimizerKind, OptimizerState};
use super::trainer::{LogRow, TrainState};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::nn::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSFFCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const END_MARKER: &[u8; 8] = b"MSFF_END";

/// Model and training configuration together with the training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub state: TrainState,
}

impl Checkpoint {
    /// Errors unless the stored model configuration equals `requested`.
    pub fn ensure_model(&self, requested: &ModelConfig) -> Result<()> {
        if &self.model == requested {
            return Ok(());
        }
        let stored = serde_json::to_value(&self.model).expect("config serializes");
        let wanted = serde_json::to_value(requested).expect("config serializes");
        let field = stored
            .as_object()
            .and_then(|s| {
                let w = wanted.as_object()?;
                s.keys().find(|k| s.get(*k) != w.get(*k)).cloned()
            })
            .unwrap_or_else(|| "model".into());
        Err(Error::config(
            field,
            "checkpoint was trained with a different model configuration",
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos: u128,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    step: usize,
    epoch: usize,
    cursor: usize,
    order: Vec<usize>,
    rng: RngState,
    optimizer: OptimizerKind,
    optimizer_updates: u64,
    history: Vec<LogRow>,
    tensors: Vec<TensorEntry>,
}

const GROUPS: [&str; 3] = ["params", "first_moment", "second_moment"];

fn groups(state: &TrainState) -> [Option<&ParamStore<f32>>; 3] {
    [
        Some(&state.params),
        state.optimizer.first.as_ref(),
        state.optimizer.second.as_ref(),
    ]
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let state = &checkpoint.state;
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (group, store) in GROUPS.iter().zip(groups(state)) {
        for (name, t) in store.into_iter().flat_map(|s| s.iter()) {
            tensors.push(TensorEntry {
                group: group.to_string(),
                name: name.to_string(),
                shape: t.shape.clone(),
            });
            payload.extend(t.data.iter().flat_map(|v| v.to_le_bytes()));
        }
    }
    let header = Header {
        model: checkpoint.model.clone(),
        train: checkpoint.train.clone(),
        step: state.step,
        epoch: state.epoch,
        cursor: state.cursor,
        order: state.order.clone(),
        rng: RngState {
            seed: state.rng.get_seed(),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos(),
        },
        optimizer: state.optimizer.kind,
        optimizer_updates: state.optimizer.updates,
        history: state.history.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(28 + json.len() + payload.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&payload);
    bytes.extend_from_slice(END_MARKER);
    // write to a sibling file first so an interrupted save never clobbers a good checkpoint
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, field, "file is truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "magic", "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            "version",
            format!("unsupported version {version} (expected {CHECKPOINT_VERSION})"),
        ));
    }
    let header_len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes"));
    let header_len = usize::try_from(header_len).map_err(|_| Error::format(path, "header length", "too large"))?;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| Error::format(path, "header", e.to_string()))?;
    let mut stores: [Option<ParamStore<f32>>; 3] = [None, None, None];
    for entry in &header.tensors {
        let group = GROUPS
            .iter()
            .position(|g| *g == entry.group)
            .ok_or_else(|| Error::format(path, "tensors", format!("unknown group {}", entry.group)))?;
        let count: usize = entry.shape.iter().product();
        let raw = r.take(count * 4, &format!("tensor {}", entry.name))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let store = stores[group].get_or_insert_with(ParamStore::new);
        if store.id(&entry.name).is_some() {
            return Err(Error::format(
                path,
                "tensors",
                format!("duplicate tensor {}", entry.name),
            ));
        }
        store.insert(entry.name.clone(), entry.shape.clone(), data);
    }
    if r.take(8, "end marker")? != END_MARKER {
        return Err(Error::format(
            path,
            "end marker",
            "payload length disagrees with header",
        ));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "end marker", "trailing bytes after checkpoint"));
    }
    let [params, first, second] = stores;
    let params: ModelParams<f32> = params.ok_or_else(|| Error::format(path, "tensors", "no parameters"))?;
    let expected = OptimizerState::new(header.optimizer, &params);
    let layout_ok = |got: &Option<ParamStore<f32>>, want: &Option<ParamStore<f32>>| match (got, want) {
        (Some(g), Some(w)) => g.same_layout(w),
        (None, None) => true,
        _ => false,
    };
    if !layout_ok(&first, &expected.first) || !layout_ok(&second, &expected.second) {
        return Err(Error::format(
            path,
            "optimizer",
            "buffers do not match the optimizer kind",
        ));
    }
    let mut rng = ChaCha8Rng::from_seed(header.rng.seed);
    rng.set_stream(header.rng.stream);
    rng.set_word_pos(header.rng.word_pos);
    Ok(Checkpoint {
        model: header.model,
        train: header.train,
        state: TrainState {
            params,
            optimizer: OptimizerState {
                kind: header.optimizer,
                updates: header.optimizer_updates,
                first,
                second,
            },
            step: header.step,
            epoch: header.epoch,
            cursor: header.cursor,
            order: header.order,
            rng,
            history: header.history,
        },
    })
}
