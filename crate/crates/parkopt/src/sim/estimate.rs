//! Offline willingness estimation from metered demand deltas.
//!
//! The input CSV has the columns `t,p,X_IL,J` for the park aggregate and,
//! optionally, `X_i,J_i` pairs for each metered user `i = 1..`. Prices are
//! in ¥/kWh and energies in MWh.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::incentive::{
    fit_power_law, fit_shift_models, solve_shift_matrix, FittedUser, ShiftModel, UserShift,
};

use super::SimError;

/// Series read from an estimation file.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateInput {
    pub prices: Vec<f64>,
    pub x_il: Vec<f64>,
    pub j: Vec<f64>,
    /// Per-user `(X_i, J_i)` series, empty when only the aggregate is metered.
    pub users: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Aggregate power-law fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateFit {
    pub alpha: f64,
    pub gamma: f64,
}

/// Result of an estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub window: usize,
    /// Residual norm of the aggregate shift-matrix fit.
    pub residual: f64,
    /// Aggregate slope per delay `1..=window`.
    pub profile: Vec<f64>,
    pub aggregate: Option<AggregateFit>,
    pub users: Vec<FittedUser>,
}

impl Estimate {
    /// Shift model with the fitted users, or the aggregate as a single user.
    pub fn shift_model(&self, eta: f64) -> Option<ShiftModel> {
        let users: Vec<UserShift> = if self.users.is_empty() {
            let a = self.aggregate?;
            vec![UserShift {
                alpha: a.alpha,
                gamma: a.gamma,
            }]
        } else {
            self.users
                .iter()
                .map(|u| UserShift {
                    alpha: u.alpha,
                    gamma: u.gamma,
                })
                .collect()
        };
        Some(ShiftModel {
            users,
            eta,
            window: self.window,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("estimate serializes to TOML")
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

/// Parses an estimation CSV.
pub fn parse_estimate_input(reader: impl Read) -> Result<EstimateInput, SimError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SimError::Schema(e.to_string()))?
        .clone();
    let need = |n: &str| {
        column(&headers, n).ok_or_else(|| SimError::Schema(format!("missing column `{n}`")))
    };
    let (c_t, c_p, c_x, c_j) = (need("t")?, need("p")?, need("X_IL")?, need("J")?);
    let mut pairs = Vec::new();
    while let (Some(x), Some(j)) = (
        column(&headers, &format!("X_{}", pairs.len() + 1)),
        column(&headers, &format!("J_{}", pairs.len() + 1)),
    ) {
        pairs.push((x, j));
    }
    let mut input = EstimateInput {
        prices: Vec::new(),
        x_il: Vec::new(),
        j: Vec::new(),
        users: vec![(Vec::new(), Vec::new()); pairs.len()],
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SimError::Schema(e.to_string()))?;
        let get = |c: usize| -> Result<f64, SimError> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    SimError::Schema(format!("row {row}: `{raw}` is not a finite number"))
                })
        };
        if get(c_t)? != row as f64 {
            return Err(SimError::Schema(format!("row {row}: t out of sequence")));
        }
        let nonneg = |c: usize, name: &str| -> Result<f64, SimError> {
            let v = get(c)?;
            if v < 0.0 {
                return Err(SimError::NegativeValue {
                    slot: row,
                    column: name.into(),
                    value: v,
                });
            }
            Ok(v)
        };
        input.prices.push(nonneg(c_p, "p")?);
        input.x_il.push(nonneg(c_x, "X_IL")?);
        input.j.push(get(c_j)?);
        for (i, (cx, cj)) in pairs.iter().enumerate() {
            input.users[i].0.push(nonneg(*cx, &format!("X_{}", i + 1))?);
            input.users[i].1.push(get(*cj)?);
        }
    }
    Ok(input)
}

/// Fits the aggregate and, when metered, every user.
pub fn estimate(input: &EstimateInput, window: usize) -> Result<Estimate, SimError> {
    let fit = solve_shift_matrix(&input.j, &input.prices, &input.x_il, window)?;
    let slopes: Vec<(usize, f64)> = fit
        .profile
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0.0)
        .map(|(d, c)| (d + 1, *c))
        .collect();
    let aggregate = if slopes.len() >= 2 {
        let (alpha, gamma) = fit_power_law(&slopes)?;
        Some(AggregateFit { alpha, gamma })
    } else {
        None
    };
    let users = if input.users.is_empty() {
        Vec::new()
    } else {
        let matrices = input
            .users
            .iter()
            .map(|(x, j)| solve_shift_matrix(j, &input.prices, x, window).map(|f| f.matrix))
            .collect::<Result<Vec<_>, _>>()?;
        let loads: Vec<Vec<f64>> = input.users.iter().map(|(x, _)| x.clone()).collect();
        fit_shift_models(&matrices, &input.prices, &loads)?
    };
    Ok(Estimate {
        window: fit.profile.len(),
        residual: fit.residual,
        profile: fit.profile,
        aggregate,
        users,
    })
}

/// Reads `path` and runs [`estimate`].
pub fn estimate_from_csv(path: &Path, window: usize) -> Result<Estimate, SimError> {
    let file = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
    estimate(&parse_estimate_input(file)?, window)
}
