//! JSON-line logging on standard error.

use serde_json::{json, Value};

use crate::commands::CliError;

pub fn event(level: &str, name: &str, fields: Value) {
    let mut line = json!({ "level": level, "event": name });
    if let (Some(obj), Value::Object(extra)) = (line.as_object_mut(), fields) {
        obj.extend(extra);
    }
    eprintln!("{line}");
}

pub fn info(name: &str, fields: Value) {
    event("info", name, fields);
}

pub fn warn(name: &str, fields: Value) {
    event("warn", name, fields);
}

pub fn error(e: &CliError) {
    event("error", "failed", json!({ "code": e.code, "message": e.message }));
}
