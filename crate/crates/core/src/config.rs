//! JSON run configuration: preset expansion, dotted-path overrides and
//! resolution into typed configs.
//!
//! A config file either names a bundled preset or spells out the full
//! problem:
//!
//! ```json
//! { "preset": "splitting",
//!   "optimizer": { "kind": "grape", "search": "bfgs", "norm": "h1",
//!                  "gamma": 1e-6, "max_equations": 2000, "stop_jt": 0.01 } }
//! ```
//!
//! Dotted-path overrides (`problem.phys.kappa=6.283`) are applied to the
//! raw JSON before it is parsed, so the resolved `run.json` written next
//! to the results reflects them exactly.

use std::path::Path;

use serde_json::Value;

use crate::error::HarnessError;
use crate::harness::RunConfig;
use crate::problem::ProblemSpec;

/// Reads a JSON config file.
pub fn load_json(path: &Path) -> Result<Value, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Splits a `key=value` override argument.
pub fn parse_override(arg: &str) -> Result<(String, Value), HarnessError> {
    let (key, raw) = arg.split_once('=').ok_or_else(|| {
        HarnessError::Config(format!("override '{arg}' must have the form key=value"))
    })?;
    if key.is_empty() {
        return Err(HarnessError::Config(format!(
            "override '{arg}' has an empty key"
        )));
    }
    let value = serde_json::from_str::<Value>(raw).unwrap_or(Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets `value` at a dotted path, creating intermediate objects as
/// needed. Numeric segments index into arrays.
pub fn set_json_path(root: &mut Value, dotted: &str, new: Value) -> Result<(), HarnessError> {
    let mut current = root;
    let segments: Vec<&str> = dotted.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if let Ok(index) = seg.parse::<usize>() {
            let arr = current.as_array_mut().ok_or_else(|| {
                HarnessError::Config(format!(
                    "path '{dotted}': segment '{seg}' indexes a non-array"
                ))
            })?;
            if index >= arr.len() {
                return Err(HarnessError::Config(format!(
                    "path '{dotted}': index {index} out of bounds (len {})",
                    arr.len()
                )));
            }
            if last {
                arr[index] = new;
                return Ok(());
            }
            current = &mut arr[index];
        } else {
            if !current.is_object() {
                return Err(HarnessError::Config(format!(
                    "path '{dotted}': segment '{seg}' traverses a non-object"
                )));
            }
            let map = current.as_object_mut().expect("checked above");
            if last {
                map.insert(seg.to_string(), new);
                return Ok(());
            }
            current = map
                .entry(seg.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

fn deep_merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Expands a `preset` key into the full problem description, applies
/// overrides and parses the result.
pub fn resolve_config(
    mut value: Value,
    overrides: &[(String, Value)],
) -> Result<RunConfig, HarnessError> {
    if let Some(preset_name) = value.get("preset").and_then(|v| v.as_str()).map(String::from) {
        let preset = ProblemSpec::preset(&preset_name).ok_or_else(|| {
            HarnessError::Config(format!(
                "unknown preset '{preset_name}' (available: splitting, splitting-strong, shaking)"
            ))
        })?;
        let mut problem_value = serde_json::to_value(&preset)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| HarnessError::Config("config root must be an object".into()))?;
        obj.remove("preset");
        if let Some(user_problem) = obj.remove("problem") {
            deep_merge(&mut problem_value, &user_problem);
        }
        obj.insert("problem".into(), problem_value);
    }
    for (path, v) in overrides {
        set_json_path(&mut value, path, v.clone())?;
    }
    let config: RunConfig = serde_json::from_value(value)?;
    config.optimizer.validate()?;
    Ok(config)
}

/// Convenience wrapper: load, override, resolve.
pub fn load_config(path: &Path, overrides: &[(String, Value)]) -> Result<RunConfig, HarnessError> {
    resolve_config(load_json(path)?, overrides)
}
