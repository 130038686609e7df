//! Output plumbing: provenance envelopes for JSON reports, header comments
//! for CSV tables, and loading of configs given as preset names or files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use cryolock::io::{write_atomic, write_json};
use cryolock::Trace;

use crate::Failure;

/// A JSON report: the payload's fields plus provenance.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    pub body: &'a T,
    pub seed: u64,
    pub config_hash: &'a str,
    pub created_by: &'static str,
}

pub fn emit_json<T: Serialize>(out: Option<&Path>, body: &T, seed: u64, hash: &str) -> Result<(), Failure> {
    let env = Envelope {
        body,
        seed,
        config_hash: hash,
        created_by: cryolock::CREATED_BY,
    };
    match out {
        Some(path) => write_json(path, &env)?,
        None => {
            let mut text = serde_json::to_string_pretty(&env)?;
            text.push('\n');
            to_stdout(&text)?;
        }
    }
    Ok(())
}

/// Writes a CSV table preceded by `# key=value` provenance lines.
pub fn emit_table(
    out: Option<&Path>,
    meta: &BTreeMap<String, String>,
    body: &str,
) -> Result<(), Failure> {
    let mut text = String::new();
    for (k, v) in meta {
        let _ = writeln!(text, "# {k}={v}");
    }
    text.push_str(body);
    match out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => to_stdout(&text)?,
    }
    Ok(())
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
pub fn to_stdout(text: &str) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r,
    }
}

pub fn provenance(seed: u64, hash: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("seed".to_string(), seed.to_string()),
        ("config_hash".to_string(), hash.to_string()),
        ("created_by".to_string(), cryolock::CREATED_BY.to_string()),
    ])
}

/// Tags a trace with seed and config hash before writing.
pub fn stamp(trace: Trace, seed: u64, hash: &str) -> Trace {
    trace
        .with_meta("seed", seed)
        .with_meta("config_hash", hash)
        .with_meta("created_by", cryolock::CREATED_BY)
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), Failure> {
    trace.write_csv(path)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Trace, Failure> {
    Ok(Trace::read_csv(path)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid {
        kind: "json".into(),
        message: format!("{}: {e}", path.display()),
    })
}

/// A config given either as a preset name or as a path to a JSON file.
/// Anything that looks like a path (contains a separator or ends in `.json`)
/// is read from disk.
pub fn load_config<T: DeserializeOwned>(
    spec: &str,
    preset: impl Fn(&str) -> cryolock::Result<T>,
) -> Result<T, Failure> {
    let looks_like_path = spec.ends_with(".json") || spec.contains('/') || spec.contains('\\');
    if looks_like_path || Path::new(spec).is_file() {
        read_json(Path::new(spec))
    } else {
        Ok(preset(spec)?)
    }
}

pub fn in_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
