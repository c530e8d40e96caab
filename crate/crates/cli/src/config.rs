use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Run description read from `--config`. Every field is optional; flags
/// given on the command line win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Inline spec object, or a path to a JSON spec relative to the config.
    pub potential: Option<Value>,
    #[serde(default)]
    pub units: UnitsConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsConfig {
    pub hbar: Option<f64>,
    pub mass: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(rename = "L1")]
    pub l1: Option<f64>,
    #[serde(rename = "L2")]
    pub l2: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<f64>,
    pub n_max: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub p_max: Option<f64>,
    pub p_count: Option<usize>,
    pub k1: Option<[f64; 3]>,
    pub k2: Option<Vec<[f64; 3]>>,
    pub l: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub tolerance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("config: cannot read {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CliError::Invalid(format!("field `{field}`: {}", e.inner()))
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        if let Some(t) = cfg.quadrature.tolerance {
            positive("quadrature.tolerance", t)?;
        }
        if cfg.sweep.k2.as_ref().is_some_and(Vec::is_empty) {
            return Err(CliError::Invalid("field `sweep.k2`: sweep range is empty".into()));
        }
        Ok(cfg)
    }
}

pub fn positive(field: &str, x: f64) -> CliResult<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Invalid(format!("field `{field}`: must be positive and finite, got {x}")))
    }
}

fn read_spec_file(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("field `potential`: cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("field `potential`: malformed JSON in {}: {e}", path.display())))
}

/// Turns `--potential` (a type name, a spec file or an inline object), the
/// parameter flags and the config entry into one spec object plus the
/// directory relative table paths resolve against.
pub fn resolve_potential(
    flag: Option<&str>,
    params: Map<String, Value>,
    cfg: &RunConfig,
) -> CliResult<(Value, Option<PathBuf>)> {
    let (spec, base) = match flag {
        Some(s) if s.trim_start().starts_with('{') => {
            let v = serde_json::from_str(s)
                .map_err(|e| CliError::Invalid(format!("field `potential`: malformed JSON: {e}")))?;
            (v, None)
        }
        Some(s) if s.ends_with(".json") || Path::new(s).is_file() => {
            let path = Path::new(s);
            (read_spec_file(path)?, path.parent().map(Path::to_path_buf))
        }
        Some(s) => (Value::Object(Map::from_iter([("type".to_string(), Value::String(s.to_string()))])), None),
        None => match &cfg.potential {
            Some(Value::String(p)) => {
                let path = match &cfg.base_dir {
                    Some(dir) => dir.join(p),
                    None => PathBuf::from(p),
                };
                let base = path.parent().map(Path::to_path_buf);
                (read_spec_file(&path)?, base)
            }
            Some(v) => (v.clone(), cfg.base_dir.clone()),
            None => {
                return Err(CliError::Invalid(
                    "field `potential`: required (pass --potential or set it in the config)".into(),
                ))
            }
        },
    };
    let Value::Object(mut obj) = spec else {
        return Err(CliError::Invalid("field `potential`: spec must be a JSON object".into()));
    };
    obj.extend(params);
    Ok((Value::Object(obj), base))
}
