//! Exit-code conventions and JSON-lines diagnostics on stderr.

use std::fmt::Display;
use std::path::Path;

use serde_json::{json, Map, Value};

/// 0 success, 1 partial failures, 2 fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Success = 0,
    Partial = 1,
}

#[derive(Debug)]
pub struct Fatal(pub String);

impl<E: Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

pub const FATAL_EXIT: i32 = 2;

/// One diagnostic line: `{"level", "command", "message", ...extra}`.
pub fn emit(level: &str, command: &str, message: impl Display, extra: Value) {
    let mut line = Map::new();
    line.insert("level".into(), json!(level));
    line.insert("command".into(), json!(command));
    line.insert("message".into(), json!(message.to_string()));
    if let Value::Object(fields) = extra {
        line.extend(fields);
    }
    eprintln!("{}", Value::Object(line));
}

pub fn file_error(command: &str, file: &Path, message: impl Display) {
    emit("error", command, message, json!({ "file": file.display().to_string() }));
}

/// Summary object printed on stdout after a successful run.
pub fn summary(value: Value) {
    println!("{value}");
}
