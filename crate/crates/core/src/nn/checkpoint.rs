//! Self-describing binary checkpoint: an 8-byte magic, a little-endian u64
//! header length, a JSON header (configuration, tensor index, Adam step and
//! epoch log), then every tensor's data as little-endian f64 in index order.
//! Values are stored bit-for-bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::network::{Mode, Network, NetworkConfig, ParamMap};
use super::train::EpochRecord;
use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MRSCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub adam: Option<AdamState>,
    pub log: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    mode: Mode,
    version: u64,
    adam_t: Option<u64>,
    log: Vec<EpochRecord>,
    tensors: Vec<TensorEntry>,
}

fn groups(ck: &Checkpoint) -> Vec<(&'static str, &ParamMap)> {
    let mut g = vec![("params", &ck.network.params), ("buffers", &ck.network.buffers)];
    if let Some(a) = &ck.adam {
        g.push(("adam_m", &a.m));
        g.push(("adam_v", &a.v));
    }
    g
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut w: W) -> Result<()> {
    let groups = groups(ck);
    let tensors = groups
        .iter()
        .flat_map(|(g, map)| {
            map.iter().map(move |(name, t)| TensorEntry {
                group: (*g).to_owned(),
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
        })
        .collect();
    let header = Header {
        config: ck.network.config.clone(),
        mode: ck.network.mode,
        version: ck.network.version,
        adam_t: ck.adam.as_ref().map(|a| a.t),
        log: ck.log.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::Other(format!("checkpoint write: {e}"));
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for (_, map) in groups {
        for t in map.values() {
            for v in t.data() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let io = |e: std::io::Error| Error::Other(format!("checkpoint read: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Other("not a checkpoint file (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let len =
        usize::try_from(u64::from_le_bytes(len)).map_err(|_| Error::Other("checkpoint header too large".into()))?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json)?;

    let mut maps: [ParamMap; 4] = Default::default();
    let mut buf = [0u8; 8];
    for entry in header.tensors {
        let slot = match entry.group.as_str() {
            "params" => 0,
            "buffers" => 1,
            "adam_m" => 2,
            "adam_v" => 3,
            other => return Err(Error::Other(format!("unknown tensor group {other}"))),
        };
        let n: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(io)?;
            data.push(f64::from_le_bytes(buf));
        }
        maps[slot].insert(entry.name, Tensor::new(entry.shape, data)?);
    }
    let [params, buffers, m, v] = maps;
    let adam = header.adam_t.map(|t| AdamState { m, v, t });
    let network = Network {
        config: header.config,
        params,
        buffers,
        mode: header.mode,
        version: header.version,
    };
    network.config.validate()?;
    Ok(Checkpoint {
        network,
        adam,
        log: header.log,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(ck, BufWriter::new(f))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}
