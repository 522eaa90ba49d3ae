//! Leg, trip and baseline costs per mode of transport, and the savings value
//! that weights every trip arc.
//!
//! Infinite cost (a mode the user excluded or one that cannot meet the
//! schedule) and "ineligible" savings are explicit enum variants; no
//! arithmetic is ever performed on them.

use crate::instance::{Instance, Trip};
use crate::mot::{CostConfig, Mot, MotParams, Objective};
use crate::schedule::schedule_trip;

/// Absolute tolerance for monetary comparisons, in euros.
pub const MONEY_EPS: f64 = 1e-9;

/// Modes that count as the publicly available alternative when computing
/// savings. Walking stays assignable but never defines the baseline.
pub const BASELINE_MOTS: [Mot; 3] = [Mot::Bike, Mot::PublicTransport, Mot::Taxi];

pub fn sloped_distance_km(aerial_km: f64, mot: &MotParams) -> f64 {
    aerial_km * mot.sloping_factor
}

/// Travel time of one leg in minutes, setup included.
pub fn leg_travel_time_min(aerial_km: f64, mot: &MotParams) -> f64 {
    sloped_distance_km(aerial_km, mot) / mot.speed_kmh * 60.0 + mot.setup_min
}

/// Cost components of a leg (or of a whole trip, summed over its legs).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LegCost {
    pub distance_eur: f64,
    pub time_eur: f64,
    pub emissions_eur: f64,
    pub travel_time_h: f64,
}

impl LegCost {
    pub fn total_eur(&self) -> f64 {
        self.distance_eur + self.time_eur + self.emissions_eur
    }

    /// Value of this leg under the configured objective. All components stay
    /// available so the full cost can be recomputed afterwards.
    pub fn objective_eur(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Base => self.total_eur(),
            Objective::TimeOnly => self.time_eur,
        }
    }

    pub fn accumulate(&mut self, other: &LegCost) {
        self.distance_eur += other.distance_eur;
        self.time_eur += other.time_eur;
        self.emissions_eur += other.emissions_eur;
        self.travel_time_h += other.travel_time_h;
    }
}

pub fn leg_cost(aerial_km: f64, mot: &MotParams, cfg: &CostConfig) -> LegCost {
    let d = sloped_distance_km(aerial_km, mot);
    let travel_time_h = d / mot.speed_kmh + mot.setup_min / 60.0;
    LegCost {
        distance_eur: d * mot.cost_per_km,
        time_eur: travel_time_h * cfg.cost_per_time_eur_per_h,
        emissions_eur: d * mot.emissions_g_per_km * 1e-6 * cfg.co2_cost_eur_per_tonne,
        travel_time_h,
    }
}

/// Trip cost under one mode; `Infinite` is the penalty marker for a mode the
/// trip's user excluded (and, for the schedule-aware variant, for a mode that
/// cannot make the appointments).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TripCost {
    Finite(LegCost),
    Infinite,
}

impl TripCost {
    pub fn is_finite(&self) -> bool {
        matches!(self, TripCost::Finite(_))
    }

    pub fn finite(&self) -> Option<&LegCost> {
        match self {
            TripCost::Finite(c) => Some(c),
            TripCost::Infinite => None,
        }
    }

    pub fn objective_eur(&self, objective: Objective) -> Option<f64> {
        self.finite().map(|c| c.objective_eur(objective))
    }
}

/// Sum of leg costs over origin -> tasks -> destination. Does not check the
/// schedule; returns `Infinite` only when the mode is outside the trip's
/// allowed set.
pub fn trip_cost(instance: &Instance, trip: &Trip, mot: Mot) -> TripCost {
    if !trip.allows(mot) {
        return TripCost::Infinite;
    }
    TripCost::Finite(trip_cost_unrestricted(instance, trip, mot))
}

/// Like [`trip_cost`] but also infinite when the mode cannot meet the trip's
/// appointment times.
pub fn schedulable_trip_cost(instance: &Instance, trip: &Trip, mot: Mot) -> TripCost {
    if !trip.allows(mot) || schedule_trip(instance, trip, mot).is_none() {
        return TripCost::Infinite;
    }
    TripCost::Finite(trip_cost_unrestricted(instance, trip, mot))
}

/// Leg-sum cost ignoring both the allowed set and the schedule. Used for the
/// all-by-one-mode reference policies and the taxi fallback.
pub fn trip_cost_unrestricted(instance: &Instance, trip: &Trip, mot: Mot) -> LegCost {
    let params = instance.mot_table.get(mot);
    let mut sum = LegCost::default();
    for aerial_km in instance.leg_distances_km(trip) {
        sum.accumulate(&leg_cost(aerial_km, params, &instance.cost_config));
    }
    sum
}

/// Cheapest schedulable baseline for a trip: the mode the user would take if
/// no shared vehicle covers the trip. Selected by full cost, independent of
/// the solve objective, so the alternative a car competes against stays the
/// same when only the time component is optimized. Users who allow no public
/// alternative fall back to the taxi, which is always available; `None` only
/// for trips no baseline mode can schedule.
pub fn cheapest_baseline(instance: &Instance, trip: &Trip) -> Option<(Mot, LegCost)> {
    let mut best: Option<(Mot, LegCost)> = None;
    for mot in BASELINE_MOTS {
        if let TripCost::Finite(c) = schedulable_trip_cost(instance, trip, mot) {
            let better = match &best {
                None => true,
                Some((_, b)) => c.total_eur() < b.total_eur() - MONEY_EPS,
            };
            if better {
                best = Some((mot, c));
            }
        }
    }
    if best.is_none() && schedule_trip(instance, trip, Mot::Taxi).is_some() {
        best = Some((Mot::Taxi, trip_cost_unrestricted(instance, trip, Mot::Taxi)));
    }
    best
}

/// Savings of covering a trip with a shared mode instead of the cheapest
/// baseline; `Ineligible` marks trips the shared mode cannot serve at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Savings {
    Finite(f64),
    Ineligible,
}

impl Savings {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Savings::Finite(v) => Some(*v),
            Savings::Ineligible => None,
        }
    }
}

pub fn trip_savings(instance: &Instance, trip: &Trip, shared: Mot) -> Savings {
    let objective = instance.cost_config.objective;
    let shared_cost = match schedulable_trip_cost(instance, trip, shared) {
        TripCost::Finite(c) => c.objective_eur(objective),
        TripCost::Infinite => return Savings::Ineligible,
    };
    match cheapest_baseline(instance, trip) {
        Some((_, baseline)) => Savings::Finite(baseline.objective_eur(objective) - shared_cost),
        None => Savings::Ineligible,
    }
}
