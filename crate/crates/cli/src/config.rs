//! Resolution of a command's configuration: built-in defaults, then the
//! JSON file, then command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Invalid configuration; the process exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn read_file(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ConfigError(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())))
}

/// Overlays `file` and then `flags` on the defaults of `T`. Keys unknown to
/// the defaults are rejected with their path.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(
    command: &str,
    file: Option<&Value>,
    flags: Value,
) -> Result<T, ConfigError> {
    let mut merged = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(file) = file {
        let mut file = file.clone();
        if let Some(obj) = file.as_object_mut() {
            if let Some(c) = obj.remove("command") {
                if c.as_str() != Some(command) {
                    return Err(ConfigError(format!("config file is for command {c}, not \"{command}\"")));
                }
            }
        } else {
            return Err(ConfigError("config file must hold a JSON object".into()));
        }
        overlay(&mut merged, &file, "")?;
    }
    overlay(&mut merged, &flags, "")?;
    let de = serde_json::to_string(&merged).expect("merged config serializes");
    let mut d = serde_json::Deserializer::from_str(&de);
    serde_path_to_error::deserialize(&mut d).map_err(|e| ConfigError(format!("field `{}`: {}", e.path(), e.inner())))
}

fn overlay(base: &mut Value, top: &Value, path: &str) -> Result<(), ConfigError> {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) => overlay(slot, v, &here)?,
                    None => return Err(ConfigError(format!("unknown field `{here}`"))),
                }
            }
            Ok(())
        }
        (b, t) => {
            *b = t.clone();
            Ok(())
        }
    }
}

/// Builds the nested flag overlay; `None` values are skipped.
#[derive(Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn set<T: Serialize>(mut self, path: &str, value: &Option<T>) -> Self {
        if let Some(v) = value {
            let mut keys = path.split('.').peekable();
            let mut map = &mut self.0;
            while let Some(k) = keys.next() {
                if keys.peek().is_none() {
                    map.insert(k.into(), serde_json::to_value(v).expect("flag serializes"));
                    break;
                }
                map = map
                    .entry(k.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("flag paths nest objects");
            }
        }
        self
    }

    pub fn done(self) -> Value {
        Value::Object(self.0)
    }
}

/// Accepts decimals and fractions such as `1/2048`.
pub fn number(s: &str) -> Result<f64, String> {
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("'{s}' is not a number"));
    match s.split_once('/') {
        Some((a, b)) => Ok(parse(a)? / parse(b)?),
        None => parse(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    struct Inner {
        h: f64,
    }

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    struct Cfg {
        name: String,
        inner: Inner,
    }

    #[test]
    fn flags_override_file() {
        let file = serde_json::json!({ "name": "a", "inner": { "h": 0.5 } });
        let flags = Flags::default().set("inner.h", &Some(0.25)).done();
        let cfg: Cfg = resolve("x", Some(&file), flags).unwrap();
        assert_eq!(cfg, Cfg { name: "a".into(), inner: Inner { h: 0.25 } });
    }

    #[test]
    fn unknown_and_mistyped_fields_are_named() {
        let file = serde_json::json!({ "inner": { "g": 1 } });
        let err = resolve::<Cfg>("x", Some(&file), Flags::default().done()).unwrap_err();
        assert!(err.0.contains("inner.g"), "{}", err.0);
        let file = serde_json::json!({ "inner": { "h": "wide" } });
        let err = resolve::<Cfg>("x", Some(&file), Flags::default().done()).unwrap_err();
        assert!(err.0.contains("inner.h"), "{}", err.0);
    }

    #[test]
    fn fractions_parse() {
        assert_eq!(number("1/4").unwrap(), 0.25);
        assert_eq!(number("0.5").unwrap(), 0.5);
        assert!(number("x").is_err());
    }
}
