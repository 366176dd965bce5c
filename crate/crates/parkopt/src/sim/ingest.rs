//! Scenario CSV and park config loading.
//!
//! A scenario file has the header `t,p_e,p_g,p_o,R_1..R_K,X_1..X_I,H_load,G_load`
//! and a sidecar `<stem>.units.toml` declaring the energy and price units of
//! its columns. Values are converted to MWh and ¥/kWh on load.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::park_model::{ParkConfig, ScenarioSeries, SlotData};

use super::SimError;

/// Units of the columns of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    /// `MWh` or `kWh`.
    pub energy: String,
    /// `CNY/kWh` or `CNY/MWh`; `¥` and `yuan` are accepted for `CNY`.
    pub price: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            energy: "MWh".into(),
            price: "CNY/kWh".into(),
        }
    }
}

impl Units {
    /// Factors that convert energies to MWh and prices to ¥/kWh.
    pub fn factors(&self) -> Result<(f64, f64), SimError> {
        let energy = match self.energy.trim() {
            "MWh" => 1.0,
            "kWh" => 1e-3,
            other => return Err(SimError::Unit(format!("unknown energy unit `{other}`"))),
        };
        let price = self.price.trim().replace('¥', "CNY").replace("yuan", "CNY");
        let price = match price.as_str() {
            "CNY/kWh" => 1.0,
            "CNY/MWh" => 1e-3,
            other => return Err(SimError::Unit(format!("unknown price unit `{other}`"))),
        };
        Ok((energy, price))
    }
}

/// Sidecar path of a scenario file: `dir/name.csv` maps to `dir/name.units.toml`.
pub fn units_path(scenario: &Path) -> PathBuf {
    let stem = scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    scenario.with_file_name(format!("{stem}.units.toml"))
}

/// Reads and validates a scenario file with its units sidecar.
pub fn ingest_scenario(path: &Path) -> Result<ScenarioSeries, SimError> {
    let side = units_path(path);
    let text = std::fs::read_to_string(&side)
        .map_err(|e| SimError::Unit(format!("cannot read {}: {e}", side.display())))?;
    let units: Units =
        toml::from_str(&text).map_err(|e| SimError::Unit(format!("{}: {e}", side.display())))?;
    let file = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
    parse_scenario(file, &units)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, SimError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| SimError::Schema(format!("missing column `{name}`")))
}

fn indexed(headers: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>, SimError> {
    let mut out = Vec::new();
    while let Some(p) = headers
        .iter()
        .position(|h| h.trim() == format!("{prefix}_{}", out.len() + 1))
    {
        out.push(p);
    }
    if out.is_empty() {
        return Err(SimError::Schema(format!("missing column `{prefix}_1`")));
    }
    Ok(out)
}

/// Parses scenario CSV text already known to be in `units`.
pub fn parse_scenario(reader: impl Read, units: &Units) -> Result<ScenarioSeries, SimError> {
    let (ef, pf) = units.factors()?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SimError::Schema(e.to_string()))?
        .clone();
    let c_t = column(&headers, "t")?;
    let c_pe = column(&headers, "p_e")?;
    let c_pg = column(&headers, "p_g")?;
    let c_po = column(&headers, "p_o")?;
    let c_r = indexed(&headers, "R")?;
    let c_x = indexed(&headers, "X")?;
    let c_h = column(&headers, "H_load")?;
    let c_g = column(&headers, "G_load")?;
    let mut slots = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SimError::Schema(e.to_string()))?;
        let get = |c: usize| -> Result<f64, SimError> {
            let name = headers.get(c).unwrap_or("?");
            let raw = rec.get(c).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| {
                SimError::Schema(format!(
                    "row {row}: `{raw}` in column `{name}` is not a number"
                ))
            })?;
            if !v.is_finite() {
                return Err(SimError::Schema(format!(
                    "row {row}: non-finite value in `{name}`"
                )));
            }
            if v < 0.0 {
                return Err(SimError::NegativeValue {
                    slot: row,
                    column: name.to_string(),
                    value: v,
                });
            }
            Ok(v)
        };
        let t = get(c_t)?;
        if t != row as f64 {
            return Err(SimError::Schema(format!(
                "row {row}: expected t = {row}, found {t}"
            )));
        }
        slots.push(SlotData {
            p_e: get(c_pe)? * pf,
            p_g: get(c_pg)? * pf,
            p_o: get(c_po)? * pf,
            r: c_r
                .iter()
                .map(|&c| get(c).map(|v| v * ef))
                .collect::<Result<_, _>>()?,
            x_il: c_x
                .iter()
                .map(|&c| get(c).map(|v| v * ef))
                .collect::<Result<_, _>>()?,
            h_load: get(c_h)? * ef,
            g_load: get(c_g)? * ef,
        });
    }
    let series = ScenarioSeries { slots };
    series.validate(c_r.len(), c_x.len())?;
    Ok(series)
}

/// Reads and validates a park config file.
pub fn load_config(path: &Path) -> Result<ParkConfig, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let cfg: ParkConfig =
        toml::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
