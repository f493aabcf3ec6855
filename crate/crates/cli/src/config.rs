//! The flat JSON config file shared by every subcommand.

use std::path::Path;

use anyhow::{bail, Context, Result};
use facepipe_core::pipeline::PipelineConfig;
use facepipe_core::synthbench::DatasetConfig;
use serde_json::{Map, Value};

/// Keys accepted next to the pipeline fields.
const BENCH_KEYS: [&str; 2] = ["seed", "dataset"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    pub seed: Option<u64>,
    pub dataset: Option<DatasetConfig>,
}

/// The default config as pretty JSON, with the benchmark keys filled in.
pub fn default_json() -> String {
    let mut map = pipeline_map(&PipelineConfig::default());
    map.insert("seed".into(), Value::from(1u64));
    map.insert(
        "dataset".into(),
        serde_json::to_value(DatasetConfig::default()).expect("dataset config serializes"),
    );
    serde_json::to_string_pretty(&Value::Object(map)).expect("json value serializes")
}

fn pipeline_map(cfg: &PipelineConfig) -> Map<String, Value> {
    match serde_json::to_value(cfg).expect("pipeline config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("pipeline config is a struct"),
    }
}

pub fn parse(text: &str) -> Result<CliConfig> {
    let mut map = match serde_json::from_str::<Value>(text)? {
        Value::Object(m) => m,
        _ => bail!("config must be a JSON object"),
    };
    // The flattened preprocessing fields defeat serde's unknown-field check.
    let known = pipeline_map(&PipelineConfig::default());
    for key in map.keys() {
        if !known.contains_key(key) && !BENCH_KEYS.contains(&key.as_str()) {
            bail!("unknown config key {key:?}");
        }
    }
    let seed = map
        .remove("seed")
        .map(serde_json::from_value)
        .transpose()
        .context("config key \"seed\"")?;
    let dataset = map
        .remove("dataset")
        .map(serde_json::from_value)
        .transpose()
        .context("config key \"dataset\"")?;
    let pipeline: PipelineConfig = serde_json::from_value(Value::Object(map))?;
    pipeline.validate()?;
    Ok(CliConfig {
        pipeline,
        seed,
        dataset,
    })
}

pub fn load(path: Option<&Path>) -> Result<CliConfig> {
    match path {
        None => Ok(CliConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            parse(&text).with_context(|| format!("config {}", p.display()))
        }
    }
}
