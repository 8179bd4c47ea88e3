//! Dataset container: `MAGIC`, a little-endian `u32` header length, a UTF-8
//! JSON header, then `count` fixed-size binary records of little-endian
//! `f64`s (gains in `[m][tx][rx]` order followed by node coordinates).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelInstance, Dataset, SystemConfig, Topology, GENERATOR_ID};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"D2DRA-DS";
const FORMAT_NAME: &str = "d2dra-dataset";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    generator: String,
    config: SystemConfig,
    seed: u64,
    count: u64,
    fields: Vec<FieldSpec>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct FieldSpec {
    name: String,
    layout: String,
    len: u64,
}

fn field_specs(config: &SystemConfig) -> Vec<FieldSpec> {
    vec![
        FieldSpec {
            name: "gains".into(),
            layout: "f64le[m][tx][rx]; tx 0 = CUE, rx 0 = BS".into(),
            len: config.gain_count() as u64,
        },
        FieldSpec {
            name: "coords".into(),
            layout: "f64le (x, y) for due_tx[0..N], due_rx[0..N], cue, bs".into(),
            len: (2 * (2 * config.n_due + 2)) as u64,
        },
    ]
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut w: W) -> Result<()> {
    let config = dataset.config();
    let header = Header {
        format: FORMAT_NAME.into(),
        version: DATASET_FORMAT_VERSION,
        generator: GENERATOR_ID.into(),
        config: config.clone(),
        seed: dataset.seed(),
        count: dataset.len() as u64,
        fields: field_specs(config),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for inst in dataset.instances() {
        for g in inst.gains() {
            w.write_all(&g.to_le_bytes())?;
        }
        for c in inst.topology().coordinates() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Corrupt("not a d2dra dataset (bad magic)".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(Error::Shape(format!(
            "header claims {hlen} bytes but only {} remain",
            body.len()
        )));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])?;
    if header.format != FORMAT_NAME {
        return Err(Error::Corrupt(format!("unexpected format `{}`", header.format)));
    }
    if header.version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            what: "dataset",
            found: header.version,
            expected: DATASET_FORMAT_VERSION,
        });
    }
    header.config.validate()?;
    let config = header.config;
    if header.fields != field_specs(&config) {
        return Err(Error::Shape("record field layout does not match configuration".into()));
    }
    let n_gains = config.gain_count();
    let n_coords = 2 * (2 * config.n_due + 2);
    let record_bytes = 8 * (n_gains + n_coords);
    let payload = &body[hlen..];
    let count = header.count as usize;
    if payload.len() != count * record_bytes {
        return Err(Error::Shape(format!(
            "header declares {count} records of {record_bytes} bytes, payload holds {} bytes",
            payload.len()
        )));
    }
    let mut instances = Vec::with_capacity(count);
    for rec in payload.chunks_exact(record_bytes) {
        let vals: Vec<f64> = rec
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let topology = Topology::from_coordinates(config.n_due, &vals[n_gains..])?;
        instances.push(ChannelInstance::new(
            config.n_channels,
            vals[..n_gains].to_vec(),
            topology,
        )?);
    }
    Dataset::new(config, header.seed, instances)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Writes one row per instance with columns `h_<m>_<tx>_<rx>`, channel
/// numbered from 1 and node indices from 0 (0 = CUE/BS).
pub fn export_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let config = dataset.config();
    let nodes = config.n_nodes();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = Vec::with_capacity(config.gain_count());
    for m in 0..config.n_channels {
        for tx in 0..nodes {
            for rx in 0..nodes {
                header.push(format!("h_{}_{}_{}", m + 1, tx, rx));
            }
        }
    }
    w.write_record(&header)?;
    for inst in dataset.instances() {
        w.write_record(inst.gains().iter().map(|g| g.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
