//! The merged run configuration and its dotted-path overrides.

use std::fs;
use std::path::{Path, PathBuf};

use bagau_core::metrics::Connectivity;
use bagau_core::phantom::PhantomConfig;
use bagau_core::train::TrainConfig;
use bagau_core::volume::SplitRatio;
use bagau_core::{Error, ModelSpec, Result, Variant};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const RESOLVED_CONFIG_FILE: &str = "config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset root: a manifest plus one directory per case.
    pub root: Option<PathBuf>,
    pub split: SplitRatio,
    /// Defaults to the manifest's split seed.
    pub split_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub connectivity: Connectivity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub phantom: PhantomConfig,
    pub eval: EvalConfig,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig {
                root: None,
                split: SplitRatio::default(),
                split_seed: None,
            },
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            phantom: PhantomConfig::default(),
            eval: EvalConfig {
                connectivity: Connectivity::default(),
            },
            precision: Precision::F32,
        }
    }
}

impl RunConfig {
    /// Defaults, then the optional JSON file merged over them, then each
    /// `path=value` override in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("defaults serialise");
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            let user: Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut value, user);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.split.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.phantom.validate()?;
        if self.model.variant != self.train.variant {
            return Err(Error::Config(format!(
                "model.variant {} and train.variant {} disagree",
                self.model.variant, self.train.variant
            )));
        }
        Ok(())
    }

    pub fn set_variant(&mut self, v: Variant) {
        self.model.variant = v;
        self.train.variant = v;
    }

    pub fn data_root(&self) -> Result<&Path> {
        self.data
            .root
            .as_deref()
            .ok_or_else(|| Error::Config("data.root is not set".into()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// Writes the resolved configuration into `dir` for provenance.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        fs::write(&path, self.to_json()).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`. The value is parsed as JSON when possible and
/// taken as a string otherwise, so `train.lr=1e-3` and
/// `model.variant=unet_flair` both work.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override path {path:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override path {path:?}: {} is not an object",
                keys[..i].join(".")
            ))
        })?;
        if !obj.contains_key(*key) {
            return Err(Error::Config(format!("override path {path:?}: unknown key {key:?}")));
        }
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*key).expect("checked above");
    }
    unreachable!("keys is non-empty")
}
