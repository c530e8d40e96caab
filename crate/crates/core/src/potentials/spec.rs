use std::path::Path;

use serde_json::Value;

use super::{RadialPotential, TableProfile};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

fn number(obj: &serde_json::Map<String, Value>, key: &str, default: Option<f64>) -> Result<f64> {
    match obj.get(key) {
        None | Some(Value::Null) => {
            default.ok_or_else(|| Error::InvalidInput(format!("field `{key}` is required")))
        }
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::InvalidInput(format!("field `{key}`: expected a finite number, got {v}"))),
    }
}

fn positive(obj: &serde_json::Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    let x = number(obj, key, Some(default))?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::InvalidInput(format!("field `{key}`: expected a positive number, got {x}")))
    }
}

/// Reads an `r,V` table from CSV text.
pub fn read_table_csv<T: Real, R: std::io::Read>(reader: R) -> Result<TableProfile<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("table header must contain `{name}`")))
    };
    let (ir, iv) = (col("r")?, col("V")?);
    let (mut r, mut v) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize, name: &str| -> Result<T> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .map(lit)
                .ok_or_else(|| Error::InvalidInput(format!("table row {}: column `{name}` is not a number", line + 1)))
        };
        r.push(parse(ir, "r")?);
        v.push(parse(iv, "V")?);
    }
    TableProfile::new(r, v)
}

/// Builds a potential from a JSON record
/// `{"type": "yukawa"|"gaussian"|"lennard-jones"|"r4tail"|"bump"|"table", ...}`.
///
/// Table paths are resolved relative to `base_dir`. The optional keys
/// `core_cutoff`, `tail_exponent`, `tail_coefficient` and `tail_start`
/// override the built-in metadata.
pub fn potential_from_json<T: Real>(spec: &Value, base_dir: Option<&Path>) -> Result<RadialPotential<T>> {
    let obj = spec
        .as_object()
        .ok_or_else(|| Error::InvalidInput("potential spec must be a JSON object".into()))?;
    let kind = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::InvalidInput("field `type` is required and must be a string".into()))?;
    let mut pot: RadialPotential<T> = match kind {
        "zero" => RadialPotential::zero(),
        "reference" => RadialPotential::reference(),
        "yukawa" => RadialPotential::yukawa(lit(number(obj, "g", Some(1.0))?), lit(positive(obj, "mu", 1.0)?)),
        "gaussian" => {
            RadialPotential::gaussian(lit(number(obj, "amplitude", Some(1.0))?), lit(positive(obj, "width", 1.0)?))
        }
        "lennard-jones" => {
            let sigma = positive(obj, "sigma", 1.0)?;
            let cutoff = positive(obj, "core_cutoff", sigma / 2.0)?;
            RadialPotential::lennard_jones(lit(positive(obj, "epsilon", 1.0)?), lit(sigma), lit(cutoff))
        }
        "r4tail" => RadialPotential::r4tail(
            lit(number(obj, "g", Some(1.0))?),
            lit(positive(obj, "mu", 1.0)?),
            lit(number(obj, "amplitude", Some(1.0))?),
            lit(positive(obj, "a", 1.0)?),
        ),
        "bump" => {
            let power = number(obj, "power", Some(8.0))?;
            if power < 0.0 || power.fract() != 0.0 || power > 64.0 {
                return Err(Error::InvalidInput(format!("field `power`: expected an integer in [0, 64], got {power}")));
            }
            let radius = lit(positive(obj, "radius", 1.0)?);
            match obj.get("volume_integral") {
                Some(_) => RadialPotential::bump_normalized(
                    lit(number(obj, "volume_integral", None)?),
                    radius,
                    power as u32,
                ),
                None => RadialPotential::bump(lit(number(obj, "amplitude", Some(1.0))?), radius, power as u32),
            }
        }
        "table" => {
            let table = if let Some(path) = obj.get("path") {
                let path = path
                    .as_str()
                    .ok_or_else(|| Error::InvalidInput("field `path` must be a string".into()))?;
                let full = match base_dir {
                    Some(dir) => dir.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                let file = std::fs::File::open(&full)
                    .map_err(|e| Error::InvalidInput(format!("field `path`: cannot open {}: {e}", full.display())))?;
                read_table_csv(file)?
            } else {
                let column = |key: &str| -> Result<Vec<T>> {
                    obj.get(key)
                        .and_then(Value::as_array)
                        .ok_or_else(|| Error::InvalidInput(format!("field `{key}`: table needs `path` or arrays `r` and `V`")))?
                        .iter()
                        .map(|x| {
                            x.as_f64()
                                .map(lit)
                                .ok_or_else(|| Error::InvalidInput(format!("field `{key}`: entries must be numbers")))
                        })
                        .collect()
                };
                TableProfile::new(column("r")?, column("V")?)?
            };
            RadialPotential::table(table)
        }
        other => return Err(Error::InvalidInput(format!("field `type`: unknown potential `{other}`"))),
    };

    if obj.contains_key("core_cutoff") && kind != "lennard-jones" {
        pot.core_cutoff = lit(number(obj, "core_cutoff", None)?);
    }
    if obj.contains_key("tail_exponent") {
        pot.tail_exponent = lit(positive(obj, "tail_exponent", 1.0)?);
    }
    if obj.contains_key("tail_coefficient") {
        pot.tail_coefficient = lit(number(obj, "tail_coefficient", None)?);
        if kind == "table" {
            pot.support_radius = None;
        }
    }
    if obj.contains_key("tail_start") {
        pot.tail_start = lit(positive(obj, "tail_start", 1.0)?);
    }
    if pot.core_cutoff < T::zero() {
        return Err(Error::InvalidInput("field `core_cutoff`: must be nonnegative".into()));
    }
    Ok(pot)
}
