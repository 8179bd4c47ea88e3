//! Model files are JSON documents. Floats are written with shortest
//! round-trip formatting, so a save/load cycle is lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::NormStats;
use super::model::{ArchConfig, RaModel, TrainingMeta};
use crate::chanmodel::SystemConfig;
use crate::error::{Error, Result};
use crate::linkmetrics::Goal;
use crate::neuralcore::ParamSet;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "d2dra-model";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    arch: ArchConfig,
    system: SystemConfig,
    goal: Goal,
    norm: NormStats,
    training: TrainingMeta,
    tnet: ParamSet,
    pnet: ParamSet,
}

#[derive(Deserialize)]
struct Preamble {
    format: String,
    version: u32,
}

pub fn write_model<W: Write>(model: &RaModel, mut w: W) -> Result<()> {
    model.validate()?;
    let file = ModelFile {
        format: FORMAT_NAME.into(),
        version: MODEL_FORMAT_VERSION,
        arch: model.arch.clone(),
        system: model.system.clone(),
        goal: model.goal,
        norm: model.norm.clone(),
        training: model.meta.clone(),
        tnet: model.tnet.clone(),
        pnet: model.pnet.clone(),
    };
    serde_json::to_writer_pretty(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<RaModel> {
    let mut text = String::new();
    r.read_to_string(&mut text)
        .map_err(|e| Error::Corrupt(format!("model file is not UTF-8 text: {e}")))?;
    let pre: Preamble = serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("not a model file: {e}")))?;
    if pre.format != FORMAT_NAME {
        return Err(Error::Corrupt(format!("expected format {FORMAT_NAME:?}, found {:?}", pre.format)));
    }
    if pre.version != MODEL_FORMAT_VERSION {
        return Err(Error::Version {
            what: "model",
            found: pre.version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("model file: {e}")))?;
    let model = RaModel {
        arch: file.arch,
        tnet: file.tnet,
        pnet: file.pnet,
        norm: file.norm,
        system: file.system,
        goal: file.goal,
        meta: file.training,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &RaModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RaModel> {
    read_model(BufReader::new(File::open(path)?))
}
