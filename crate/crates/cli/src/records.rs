//! Stamped record files and feature lookup in loosely typed records.

use crate::config::RunConfig;
use anyhow::Context;
use benchsynth::features::{extract, FeatureSpace, FeatureVector};
use benchsynth::io::atomic_write;
use benchsynth::kcl::compile;
use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

pub fn config_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".config");
    output.with_file_name(name)
}

/// Writes the resolved config beside `output`.
pub fn write_config(cfg: &RunConfig, output: &Path) -> anyhow::Result<()> {
    let text = format!("# config_hash={}\n{}", cfg.hash(), cfg.to_text());
    let path = config_path(output);
    atomic_write(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn stamp<T: Serialize>(item: &T, hash: &str) -> anyhow::Result<Value> {
    let mut v = serde_json::to_value(item)?;
    if let Value::Object(map) = &mut v {
        map.insert("config_hash".into(), Value::String(hash.into()));
    }
    Ok(v)
}

/// Line-delimited records, each stamped, plus the config side file.
pub fn write_records<T: Serialize>(cfg: &RunConfig, output: &Path, items: &[T]) -> anyhow::Result<()> {
    let hash = cfg.hash();
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(&stamp(item, &hash)?)?);
        text.push('\n');
    }
    atomic_write(output, text.as_bytes()).with_context(|| format!("writing {}", output.display()))?;
    write_config(cfg, output)
}

pub fn write_text(cfg: &RunConfig, output: &Path, text: &str) -> anyhow::Result<()> {
    atomic_write(output, text.as_bytes()).with_context(|| format!("writing {}", output.display()))?;
    write_config(cfg, output)
}

pub fn read_values(path: &Path) -> anyhow::Result<Vec<Value>> {
    benchsynth::io::read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

/// Features of one record in `space`: a feature set, a bare vector of that
/// space, or failing both, the features of its compiling `source`.
pub fn record_features(record: &Value, space: FeatureSpace) -> Option<FeatureVector> {
    if let Some(f) = record.get("features") {
        let key = space.tag().to_ascii_lowercase();
        if let Some(sub) = f.get(key.as_str()) {
            if let Ok(v) = serde_json::from_value::<FeatureVector>(sub.clone()) {
                return Some(v);
            }
        }
        if let Ok(v) = serde_json::from_value::<FeatureVector>(f.clone()) {
            if v.space == space {
                return Some(v);
            }
        }
    }
    if record.get("compiles") == Some(&Value::Bool(false)) {
        return None;
    }
    let source = record.get("source").or_else(|| record.get("code"))?.as_str()?;
    compile(source).ok().map(|ast| extract(space, &ast))
}

pub fn record_id(record: &Value, index: usize) -> String {
    match record.get("id") {
        Some(Value::String(s)) => s.clone(),
        _ => format!("{index}"),
    }
}

/// Splits `name=path`; a bare name resolves to `<dir>/<name>.jsonl`.
pub fn named_path(spec: &str, dir: &Path) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) => (name.trim().to_string(), PathBuf::from(path.trim())),
        None => (spec.trim().to_string(), dir.join(format!("{}.jsonl", spec.trim()))),
    }
}
