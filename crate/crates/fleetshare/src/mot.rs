//! Modes of transport and their physical/economic parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mode of transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mot {
    Walk,
    Bike,
    CarType1,
    CarType2,
    PublicTransport,
    Taxi,
}

impl Mot {
    pub const ALL: [Mot; 6] = [
        Mot::Walk,
        Mot::Bike,
        Mot::CarType1,
        Mot::CarType2,
        Mot::PublicTransport,
        Mot::Taxi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mot::Walk => "walk",
            Mot::Bike => "bike",
            Mot::CarType1 => "car_type1",
            Mot::CarType2 => "car_type2",
            Mot::PublicTransport => "public_transport",
            Mot::Taxi => "taxi",
        }
    }

    pub fn is_car(self) -> bool {
        matches!(self, Mot::CarType1 | Mot::CarType2)
    }
}

impl fmt::Display for Mot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mot {
    type Err = MotTableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mot::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| MotTableError::UnknownMode(s.to_owned()))
    }
}

/// Per-mode parameters: one row of the mode table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotParams {
    pub mode: Mot,
    /// Multiplier turning aerial distance into travelled distance; >= 1.
    pub sloping_factor: f64,
    pub emissions_g_per_km: f64,
    pub speed_kmh: f64,
    pub cost_per_km: f64,
    /// Fixed overhead per leg (parking, boarding, ...), in minutes.
    pub setup_min: f64,
    /// Capacity-restricted fleet vs. unlimited availability.
    pub shared: bool,
}

#[derive(Debug, Error)]
pub enum MotTableError {
    #[error("unknown mode of transport `{0}`")]
    UnknownMode(String),
    #[error("mode {0} appears more than once")]
    DuplicateMode(Mot),
    #[error("mode {0} missing from table")]
    MissingMode(Mot),
    #[error("mode {mode}: {what} must be {bound}, got {value}")]
    OutOfRange {
        mode: Mot,
        what: &'static str,
        bound: &'static str,
        value: f64,
    },
    #[error("invalid mode table JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// The full six-mode parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MotTable {
    rows: Vec<MotParams>,
}

impl MotTable {
    /// Default parameter set. The taxi has no published speed, sloping factor
    /// or emissions; it is treated as a combustion car with a shorter setup.
    pub fn standard() -> Self {
        let rows = vec![
            MotParams {
                mode: Mot::Walk,
                sloping_factor: 1.1,
                emissions_g_per_km: 0.0,
                speed_kmh: 5.0,
                cost_per_km: 0.0,
                setup_min: 0.0,
                shared: false,
            },
            MotParams {
                mode: Mot::Bike,
                sloping_factor: 1.3,
                emissions_g_per_km: 0.0,
                speed_kmh: 16.0,
                cost_per_km: 0.0,
                setup_min: 2.0,
                shared: false,
            },
            MotParams {
                mode: Mot::CarType1,
                sloping_factor: 1.3,
                emissions_g_per_km: 200.9,
                speed_kmh: 30.0,
                cost_per_km: 0.188,
                setup_min: 10.0,
                shared: true,
            },
            MotParams {
                mode: Mot::CarType2,
                sloping_factor: 1.3,
                emissions_g_per_km: 42.7,
                speed_kmh: 30.0,
                cost_per_km: 0.094,
                setup_min: 10.0,
                shared: true,
            },
            MotParams {
                mode: Mot::PublicTransport,
                sloping_factor: 1.5,
                emissions_g_per_km: 0.0,
                speed_kmh: 20.0,
                cost_per_km: 0.0,
                setup_min: 5.0,
                shared: false,
            },
            MotParams {
                mode: Mot::Taxi,
                sloping_factor: 1.3,
                emissions_g_per_km: 200.9,
                speed_kmh: 30.0,
                cost_per_km: 1.2,
                setup_min: 5.0,
                shared: false,
            },
        ];
        Self::from_rows(rows).expect("standard table is valid")
    }

    pub fn from_rows(rows: Vec<MotParams>) -> Result<Self, MotTableError> {
        for mode in Mot::ALL {
            let n = rows.iter().filter(|r| r.mode == mode).count();
            if n == 0 {
                return Err(MotTableError::MissingMode(mode));
            }
            if n > 1 {
                return Err(MotTableError::DuplicateMode(mode));
            }
        }
        for r in &rows {
            let checks: [(&str, &str, f64, bool); 5] = [
                ("sloping_factor", ">= 1", r.sloping_factor, r.sloping_factor >= 1.0),
                ("speed_kmh", "> 0", r.speed_kmh, r.speed_kmh > 0.0),
                ("emissions_g_per_km", ">= 0", r.emissions_g_per_km, r.emissions_g_per_km >= 0.0),
                ("cost_per_km", ">= 0", r.cost_per_km, r.cost_per_km >= 0.0),
                ("setup_min", ">= 0", r.setup_min, r.setup_min >= 0.0),
            ];
            for (what, bound, value, ok) in checks {
                if !ok || !value.is_finite() {
                    return Err(MotTableError::OutOfRange { mode: r.mode, what, bound, value });
                }
            }
        }
        Ok(Self { rows })
    }

    /// Parse a JSON array of rows (same shape as the serialized table).
    pub fn from_json(s: &str) -> Result<Self, MotTableError> {
        let rows: Vec<MotParams> = serde_json::from_str(s)?;
        Self::from_rows(rows)
    }

    pub fn get(&self, mode: Mot) -> &MotParams {
        self.rows
            .iter()
            .find(|r| r.mode == mode)
            .expect("table validated to hold all modes")
    }

    pub fn rows(&self) -> &[MotParams] {
        &self.rows
    }

    pub fn shared_modes(&self) -> impl Iterator<Item = Mot> + '_ {
        self.rows.iter().filter(|r| r.shared).map(|r| r.mode)
    }
}

impl Default for MotTable {
    fn default() -> Self {
        Self::standard()
    }
}

/// Which part of a leg's cost the solver optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "time")]
    TimeOnly,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Base => f.write_str("base"),
            Objective::TimeOnly => f.write_str("time"),
        }
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Objective::Base),
            "time" => Ok(Objective::TimeOnly),
            other => Err(format!("unknown objective `{other}` (expected base|time)")),
        }
    }
}

/// Global cost constants shared by all modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub cost_per_time_eur_per_h: f64,
    pub co2_cost_eur_per_tonne: f64,
    pub objective: Objective,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            cost_per_time_eur_per_h: 19.42,
            co2_cost_eur_per_tonne: 5.0,
            objective: Objective::Base,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_table_has_expected_shared_modes() {
        let table = MotTable::standard();
        let shared: Vec<Mot> = table.shared_modes().collect();
        assert_eq!(shared, vec![Mot::CarType1, Mot::CarType2]);
    }

    #[test]
    fn table_json_round_trips() {
        let table = MotTable::standard();
        let json = serde_json::to_string_pretty(&table).unwrap();
        let back = MotTable::from_json(&json).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn table_rejects_missing_mode() {
        let mut rows = MotTable::standard().rows().to_vec();
        rows.retain(|r| r.mode != Mot::Taxi);
        assert!(matches!(
            MotTable::from_rows(rows),
            Err(MotTableError::MissingMode(Mot::Taxi))
        ));
    }

    #[test]
    fn table_rejects_bad_sloping_factor() {
        let mut rows = MotTable::standard().rows().to_vec();
        rows[0].sloping_factor = 0.9;
        assert!(MotTable::from_rows(rows).is_err());
    }

    #[test]
    fn mode_names_parse_back() {
        for mode in Mot::ALL {
            assert_eq!(mode.as_str().parse::<Mot>().unwrap(), mode);
        }
    }
}
