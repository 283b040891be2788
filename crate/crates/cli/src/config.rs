//! Config resolution (defaults < config file < flags) and run directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Recursive object merge; `over` wins, `null` in `over` is ignored.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                if v.is_null() {
                    continue;
                }
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

pub fn load_config_file(path: Option<&Path>) -> Result<Value> {
    match path {
        None => Ok(Value::Object(Map::new())),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            if !v.is_object() {
                bail!("config {} must be a JSON object", p.display());
            }
            Ok(v)
        }
    }
}

/// Defaults, then the config file, then flag overrides.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, file: Value, flags: Value) -> Result<T> {
    let mut v = serde_json::to_value(defaults)?;
    merge(&mut v, file);
    merge(&mut v, flags);
    serde_json::from_value(v).context("invalid configuration")
}

/// First 12 hex digits of the SHA-256 of the canonical resolved config.
pub fn config_hash(command: &str, cfg: &Value) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(cfg.to_string().as_bytes());
    hex::encode(h.finalize())[..12].to_string()
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// `<out>/<command>-<hash>` with `metadata.json` describing the run.
    pub fn create<T: Serialize>(out: &Path, command: &str, cfg: &T, convention: &str) -> Result<Self> {
        let v = serde_json::to_value(cfg)?;
        let path = out.join(format!("{command}-{}", config_hash(command, &v)));
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let meta = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": v.get("seed"),
            "convention": convention,
            "config": v,
        });
        fs::write(path.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(Self { path })
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(v)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Cfg {
        a: f64,
        inner: Inner,
    }

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Inner {
        b: u32,
        c: String,
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let d = Cfg {
            a: 1.0,
            inner: Inner { b: 2, c: "x".into() },
        };
        let file = serde_json::json!({"a": 5.0, "inner": {"b": 7}});
        let flags = serde_json::json!({"a": 9.0, "inner": {"c": null}});
        let r: Cfg = resolve(&d, file, flags).unwrap();
        assert_eq!(
            r,
            Cfg {
                a: 9.0,
                inner: Inner { b: 7, c: "x".into() }
            }
        );
    }

    #[test]
    fn hash_depends_on_config_and_command() {
        let a = serde_json::json!({"x": 1});
        let b = serde_json::json!({"x": 2});
        assert_ne!(config_hash("fig1", &a), config_hash("fig1", &b));
        assert_ne!(config_hash("fig1", &a), config_hash("tomo", &a));
        assert_eq!(config_hash("fig1", &a), config_hash("fig1", &a.clone()));
    }
}
