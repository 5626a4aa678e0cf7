use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

/// A config document plus the directory its relative paths resolve against.
pub struct RawConfig {
    pub value: Value,
    pub base: PathBuf,
}

impl RawConfig {
    /// Reads `path`, or starts from an empty object when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let value: Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                if !value.is_object() {
                    return Err(anyhow!("config {}: top level must be a JSON object", p.display()));
                }
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Ok(Self { value, base })
            }
            None => Ok(Self {
                value: Value::Object(Map::new()),
                base: PathBuf::new(),
            }),
        }
    }

    fn object(&mut self) -> &mut Map<String, Value> {
        self.value.as_object_mut().expect("checked at load")
    }

    /// Sets a top-level key from a command-line flag.
    pub fn set(&mut self, key: &str, value: Option<Value>) {
        if let Some(v) = value {
            self.object().insert(key.to_string(), v);
        }
    }

    /// Sets `outer.key`, creating `outer` if needed.
    pub fn set_nested(&mut self, outer: &str, key: &str, value: Option<Value>) -> Result<()> {
        if let Some(v) = value {
            let entry = self
                .object()
                .entry(outer.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            entry
                .as_object_mut()
                .ok_or_else(|| anyhow!("config error at /{outer}: expected an object"))?
                .insert(key.to_string(), v);
        }
        Ok(())
    }

    pub fn remove(&mut self, key: &str) {
        self.object().remove(key);
    }

    /// Flag-supplied paths resolve against the working directory, not the
    /// config file.
    pub fn set_path(&mut self, key: &str, path: Option<&Path>) -> Result<()> {
        if let Some(p) = path {
            let abs = std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))?;
            self.set(key, Some(Value::String(abs.to_string_lossy().into_owned())));
        }
        Ok(())
    }

    pub fn parse<T: DeserializeOwned>(&self) -> Result<T> {
        let de = self.value.clone();
        serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = json_pointer(e.path());
            anyhow!("config error at {pointer}: {}", e.inner())
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

/// RFC 6901 pointer for a deserialization path; the root is `/`.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses `1,2,4.5` into numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|e| anyhow!("bad list entry `{x}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    #[allow(dead_code)]
    struct Inner {
        n: usize,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    #[allow(dead_code)]
    struct Outer {
        seed: u64,
        inner: Vec<Inner>,
    }

    fn raw(v: Value) -> RawConfig {
        RawConfig { value: v, base: PathBuf::new() }
    }

    #[test]
    fn pointer_names_nested_field() {
        let cfg = raw(serde_json::json!({"seed": 1, "inner": [{"n": 1}, {"n": "x"}]}));
        let err = cfg.parse::<Outer>().unwrap_err().to_string();
        assert!(err.contains("/inner/1/n"), "{err}");
    }

    #[test]
    fn missing_seed_is_named() {
        let cfg = raw(serde_json::json!({"inner": []}));
        let err = cfg.parse::<Outer>().unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn overrides_apply_before_parsing() {
        let mut cfg = raw(serde_json::json!({"inner": []}));
        cfg.set("seed", Some(serde_json::json!(9)));
        assert_eq!(cfg.parse::<Outer>().unwrap().seed, 9);
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("1, 2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(parse_list::<usize>("1,x").is_err());
    }
}
