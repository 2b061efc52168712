//! Parameter sets stored as a directory of FKT files plus `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderWeights, ParamVisitor};
use crate::error::{Error, Result};
use crate::wavegen::{init_generator, GeneratorConfig, GeneratorWeights};

use super::fkt::{fkt_read, fkt_write, DType, FktTensor};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub config: serde_json::Value,
    /// Parameter name to file name, in visit order.
    pub params: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub dims: Vec<usize>,
}

fn save(
    dir: &Path,
    kind: &str,
    config: serde_json::Value,
    visit: impl FnOnce(&mut ParamVisitor<'_>),
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::new();
    let mut failure = None;
    visit(&mut |name, dims, values| {
        if failure.is_some() {
            return;
        }
        let file = format!("{name}.fkt");
        let t = FktTensor {
            dims: dims.clone(),
            dtype: DType::F64,
            data: values.to_vec(),
        };
        if let Err(e) = fkt_write(dir.join(&file), &t, None) {
            failure = Some(e);
        }
        params.push(ManifestEntry { name, file, dims });
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let manifest = Manifest {
        kind: kind.to_owned(),
        config,
        params,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

fn read_manifest(dir: &Path, kind: &str) -> Result<(Manifest, BTreeMap<String, FktTensor>)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    if manifest.kind != kind {
        return Err(Error::Format(format!(
            "manifest holds {:?}, expected {kind:?}",
            manifest.kind
        )));
    }
    let mut tensors = BTreeMap::new();
    for entry in &manifest.params {
        let (t, _) = fkt_read(dir.join(&entry.file))?;
        tensors.insert(entry.name.clone(), t);
    }
    Ok((manifest, tensors))
}

fn fill(
    tensors: &mut BTreeMap<String, FktTensor>,
    name: &str,
    dims: &[usize],
    dst: &mut [f64],
) -> Result<()> {
    let t = tensors
        .remove(name)
        .ok_or_else(|| Error::Format(format!("parameter {name} missing from manifest")))?;
    if t.dims != dims {
        return Err(Error::dims(format!(
            "parameter {name}: stored dims {:?}, expected {dims:?}",
            t.dims
        )));
    }
    dst.copy_from_slice(&t.data);
    Ok(())
}

pub fn save_generator(dir: impl AsRef<Path>, w: &GeneratorWeights) -> Result<()> {
    save(
        dir.as_ref(),
        "generator",
        serde_json::to_value(&w.config)?,
        |f| w.visit(f),
    )
}

pub fn load_generator(dir: impl AsRef<Path>) -> Result<GeneratorWeights> {
    let (manifest, mut tensors) = read_manifest(dir.as_ref(), "generator")?;
    let config: GeneratorConfig = serde_json::from_value(manifest.config)?;
    let mut w = init_generator(&config)?;
    w.visit_mut(&mut |name, dims, dst| fill(&mut tensors, name, dims, dst))?;
    Ok(w)
}

pub fn save_encoder(dir: impl AsRef<Path>, w: &EncoderWeights) -> Result<()> {
    save(
        dir.as_ref(),
        "encoder",
        serde_json::to_value(&w.config)?,
        |f| w.visit(f),
    )
}

pub fn load_encoder(dir: impl AsRef<Path>) -> Result<EncoderWeights> {
    let (manifest, mut tensors) = read_manifest(dir.as_ref(), "encoder")?;
    let config: EncoderConfig = serde_json::from_value(manifest.config)?;
    let mut w = EncoderWeights::init(&config)?;
    w.visit_mut(&mut |name, dims, dst| fill(&mut tensors, name, dims, dst))?;
    Ok(w)
}
