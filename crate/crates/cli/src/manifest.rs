//! Run manifests. Every command records its resolved configuration and
//! output paths in `manifest.json` inside the run directory, so a run can
//! be reproduced from the manifest alone. Entries are merged per command:
//! a `train` after a `gen` leaves both on file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use openloop_core::Result;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn record(
    out: &Path,
    command: &str,
    seed: u64,
    config: impl Serialize,
    artifacts: &BTreeMap<&str, String>,
) -> Result<()> {
    let path = out.join("manifest.json");
    let mut root: Map<String, Value> = if path.exists() {
        serde_json::from_reader(BufReader::new(File::open(&path)?))?
    } else {
        Map::new()
    };
    root.insert("toolkit_version".into(), json!(TOOLKIT_VERSION));
    let runs = root
        .entry("runs")
        .or_insert_with(|| Value::Object(Map::new()));
    runs[command] = json!({
        "seed": seed,
        "config": config,
        "artifacts": artifacts,
    });
    let f = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(f, &Value::Object(root))?;
    Ok(())
}
