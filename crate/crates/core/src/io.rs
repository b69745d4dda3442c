//! On-disk formats: model checkpoints, permutation specs and path
//! directories. All documents are versioned JSON. Floats are written in
//! shortest round-trip form, so reloading reproduces every bit.

use std::fs;
use std::path::Path as FsPath;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::align::PermutationSpec;
use crate::error::{Error, Result};
use crate::geodesic::Path;
use crate::nn::{Layer, MlpConfig, ModelParams};

pub const FORMAT_VERSION: u64 = 1;

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<FsPath>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<FsPath>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn check_version(what: &'static str, found: u64) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            what,
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    version: u64,
    config: &'a MlpConfig,
    layers: &'a [Layer],
}

#[derive(Deserialize)]
struct CheckpointIn {
    version: u64,
    config: MlpConfig,
    layers: Vec<Layer>,
}

pub fn checkpoint_to_string(params: &ModelParams) -> Result<String> {
    let doc = CheckpointOut {
        version: FORMAT_VERSION,
        config: &params.config,
        layers: &params.layers,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::json("<checkpoint>", e))
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<FsPath>) -> Result<()> {
    write_json(
        path,
        &CheckpointOut {
            version: FORMAT_VERSION,
            config: &params.config,
            layers: &params.layers,
        },
    )
}

/// Loads and validates a checkpoint (version, shapes, finiteness).
pub fn load_checkpoint(path: impl AsRef<FsPath>) -> Result<ModelParams> {
    let path = path.as_ref();
    let doc: CheckpointIn = read_json(path)?;
    check_version("checkpoint", doc.version)?;
    let params = ModelParams {
        config: doc.config,
        layers: doc.layers,
    };
    params
        .validate()
        .map_err(|e| Error::invalid(path.display().to_string(), e.to_string()))?;
    Ok(params)
}

#[derive(Serialize, Deserialize)]
struct PermDoc {
    version: u64,
    perms: Vec<Vec<usize>>,
}

pub fn save_permutation(spec: &PermutationSpec, path: impl AsRef<FsPath>) -> Result<()> {
    write_json(
        path,
        &PermDoc {
            version: FORMAT_VERSION,
            perms: spec.perms.clone(),
        },
    )
}

pub fn load_permutation(path: impl AsRef<FsPath>) -> Result<PermutationSpec> {
    let doc: PermDoc = read_json(path)?;
    check_version("permutation spec", doc.version)?;
    Ok(PermutationSpec { perms: doc.perms })
}

#[derive(Serialize, Deserialize)]
struct PathManifest {
    version: u64,
    n: usize,
    config: MlpConfig,
}

pub fn model_file_name(index: usize) -> String {
    format!("model_{index:03}.json")
}

/// Writes `manifest.json` and `model_000.json` ... into `dir`.
pub fn save_path(path: &Path, dir: impl AsRef<FsPath>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(
        dir.join("manifest.json"),
        &PathManifest {
            version: FORMAT_VERSION,
            n: path.len(),
            config: path.config().clone(),
        },
    )?;
    for (i, model) in path.models().iter().enumerate() {
        save_checkpoint(model, dir.join(model_file_name(i)))?;
    }
    Ok(())
}

pub fn load_path(dir: impl AsRef<FsPath>) -> Result<Path> {
    let dir = dir.as_ref();
    let manifest: PathManifest = read_json(dir.join("manifest.json"))?;
    check_version("path manifest", manifest.version)?;
    let models = (0..manifest.n)
        .map(|i| load_checkpoint(dir.join(model_file_name(i))))
        .collect::<Result<Vec<_>>>()?;
    if let Some(m) = models.iter().find(|m| m.config != manifest.config) {
        return Err(Error::ConfigMismatch(format!(
            "{}: manifest says {:?}, model has {:?}",
            dir.display(),
            manifest.config.layer_sizes,
            m.config.layer_sizes
        )));
    }
    Path::new(models)
}
