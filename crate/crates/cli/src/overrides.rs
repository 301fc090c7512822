use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Applies `key=value` assignments to a config through its JSON form.
/// Dotted keys reach nested objects. Values parse as JSON when they can
/// and fall back to plain strings, so `method=cam` and `pairs=[[0,1]]`
/// both work.
pub fn apply<T: Serialize + DeserializeOwned>(config: &T, sets: &[String]) -> Result<T, CliError> {
    let mut value = serde_json::to_value(config).map_err(|e| CliError::Runtime(e.to_string()))?;
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {set:?}")))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut value;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .ok_or_else(|| CliError::Validation(format!("cannot set {key:?}: parent is not an object")))?
                .entry(part)
                .or_insert(Value::Null);
        }
        *slot = parsed;
    }
    serde_json::from_value(value).map_err(|e| CliError::Validation(format!("invalid config after overrides: {e}")))
}
