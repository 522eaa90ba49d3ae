//! Seeded synthetic instances: two depots on a square plane, users with one
//! to three trips of timed meetings, and the preference-restriction variants.
//!
//! Meeting times are laid out forward along each user's day with enough slack
//! that every trip is drivable by car, so the shared fleet can always bid on
//! every generated trip. The whole construction is a pure function of
//! (seed, user count, config).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::leg_travel_time_min;
use crate::instance::{
    Depot, DepotId, Instance, MINUTES_PER_DAY, Point, Task, Trip, TripId, User, UserId,
};
use crate::mot::{CostConfig, Mot, MotTable};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub plane_km: f64,
    pub num_depots: u32,
    /// Earliest / latest start of a user's day, minutes since midnight.
    pub day_start_min: (f64, f64),
    pub task_duration_min: (f64, f64),
    /// Slack drawn between consecutive meetings on top of the car travel
    /// time, minutes.
    pub task_gap_min: (f64, f64),
    /// Probability weights for 1..=4 tasks per trip.
    pub tasks_per_trip_weights: [f64; 4],
    /// Mean hop from one stop to the next task, km. Hops are exponential, so
    /// short public-transport-friendly legs dominate but long car-friendly
    /// tours stay common.
    pub task_hop_mean_km: f64,
    /// Mean trips per user at the small and large end of the user range.
    pub trips_per_user_mean: (f64, f64),
    /// User counts over which that mean interpolates.
    pub trips_per_user_span: (u32, u32),
    /// Chance that a trip starts (or ends) at the user's home depot.
    pub home_depot_persistence: f64,
    /// Give up on a user's day after this many redraws.
    pub max_attempts: u32,
    /// Keep this much of the evening free, minutes.
    pub day_end_margin_min: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            plane_km: 20.0,
            num_depots: 2,
            day_start_min: (420.0, 600.0),
            task_duration_min: (30.0, 120.0),
            task_gap_min: (5.0, 45.0),
            tasks_per_trip_weights: [0.35, 0.35, 0.2, 0.1],
            task_hop_mean_km: 4.5,
            trips_per_user_mean: (1.54, 1.42),
            trips_per_user_span: (20, 300),
            home_depot_persistence: 0.8,
            max_attempts: 1000,
            day_end_margin_min: 20.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("num_users must be at least 1")]
    NoUsers,
    #[error("config cannot host a user's tasks within the day (user {user}, {attempts} attempts)")]
    AttemptsExhausted { user: u32, attempts: u32 },
    #[error("config needs at least one depot")]
    NoDepots,
}

fn trips_per_user_mean(cfg: &GenConfig, num_users: u32) -> f64 {
    let (lo_u, hi_u) = cfg.trips_per_user_span;
    let (lo_m, hi_m) = cfg.trips_per_user_mean;
    let t = if num_users <= lo_u {
        0.0
    } else if num_users >= hi_u {
        1.0
    } else {
        (num_users - lo_u) as f64 / (hi_u - lo_u) as f64
    };
    lo_m + (hi_m - lo_m) * t
}

pub fn generate_instance(
    seed: u64,
    num_users: u32,
    cfg: &GenConfig,
) -> Result<Instance, GenError> {
    if num_users == 0 {
        return Err(GenError::NoUsers);
    }
    if cfg.num_depots == 0 {
        return Err(GenError::NoDepots);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mot_table = MotTable::standard();
    let car = mot_table.get(Mot::CarType1).clone();
    let all_mots: BTreeSet<Mot> = Mot::ALL.into_iter().collect();

    // Offices sit in the central half of the plane.
    let depots: Vec<Depot> = (0..cfg.num_depots)
        .map(|d| Depot {
            id: DepotId(d),
            location: Point {
                x_km: rng.random_range(0.25 * cfg.plane_km..0.75 * cfg.plane_km),
                y_km: rng.random_range(0.25 * cfg.plane_km..0.75 * cfg.plane_km),
            },
            supply: BTreeMap::new(),
        })
        .collect();

    let mean = trips_per_user_mean(cfg, num_users);
    let p3 = (mean - 1.0).clamp(0.0, 2.0) * 0.25;
    let p2 = (mean - 1.0).clamp(0.0, 2.0) * 0.5;

    let mut users = Vec::with_capacity(num_users as usize);
    let mut trips: Vec<Trip> = Vec::new();
    for uid in 0..num_users {
        let home = DepotId(rng.random_range(0..cfg.num_depots));
        users.push(User { id: UserId(uid), allowed_mots: all_mots.clone(), home_depot: home });

        let r: f64 = rng.random();
        let trip_count = if r < p3 {
            3
        } else if r < p3 + p2 {
            2
        } else {
            1
        };

        let day = draw_user_day(&mut rng, cfg, &depots, home, trip_count, &car)
            .ok_or(GenError::AttemptsExhausted { user: uid, attempts: cfg.max_attempts })?;
        for (origin, dest, tasks) in day {
            trips.push(Trip {
                id: TripId(trips.len() as u32),
                user: UserId(uid),
                origin,
                dest,
                tasks,
                allowed_mots: all_mots.clone(),
            });
        }
    }

    let instance = Instance {
        seed,
        depots,
        users,
        trips,
        mot_table,
        cost_config: CostConfig::default(),
    };
    debug_assert!(instance.validate().is_ok());
    Ok(instance)
}

type TripDraft = (DepotId, DepotId, Vec<Task>);

fn draw_user_day(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    depots: &[Depot],
    home: DepotId,
    trip_count: u32,
    car: &crate::mot::MotParams,
) -> Option<Vec<TripDraft>> {
    let weight_sum: f64 = cfg.tasks_per_trip_weights.iter().sum();
    for _ in 0..cfg.max_attempts {
        let mut cursor = rng.random_range(cfg.day_start_min.0..cfg.day_start_min.1);
        let mut drafts = Vec::with_capacity(trip_count as usize);
        let mut fits = true;
        for _ in 0..trip_count {
            let origin = draw_depot(rng, cfg, depots, home);
            let dest = draw_depot(rng, cfg, depots, home);

            let mut w = rng.random_range(0.0..weight_sum);
            let mut task_count = 1;
            for (i, weight) in cfg.tasks_per_trip_weights.iter().enumerate() {
                if w < *weight {
                    task_count = i + 1;
                    break;
                }
                w -= weight;
            }

            let mut tasks = Vec::with_capacity(task_count);
            let mut prev = depots[origin.0 as usize].location;
            for _ in 0..task_count {
                let bearing = rng.random_range(0.0..std::f64::consts::TAU);
                let hop = -cfg.task_hop_mean_km * (1.0 - rng.random::<f64>()).ln();
                let location = Point {
                    x_km: (prev.x_km + hop * bearing.cos()).clamp(0.0, cfg.plane_km),
                    y_km: (prev.y_km + hop * bearing.sin()).clamp(0.0, cfg.plane_km),
                };
                let gap = rng.random_range(cfg.task_gap_min.0..cfg.task_gap_min.1);
                let travel = leg_travel_time_min(prev.distance_km(&location), car);
                let latest_arrival = cursor + gap + travel;
                let duration =
                    rng.random_range(cfg.task_duration_min.0..cfg.task_duration_min.1);
                cursor = latest_arrival + duration;
                tasks.push(Task { location, latest_arrival_min: latest_arrival, duration_min: duration });
                prev = location;
            }
            cursor += leg_travel_time_min(
                prev.distance_km(&depots[dest.0 as usize].location),
                car,
            );
            drafts.push((origin, dest, tasks));
            if cursor > MINUTES_PER_DAY - cfg.day_end_margin_min {
                fits = false;
                break;
            }
        }
        if fits {
            return Some(drafts);
        }
    }
    None
}

fn draw_depot(rng: &mut ChaCha8Rng, cfg: &GenConfig, depots: &[Depot], home: DepotId) -> DepotId {
    if depots.len() == 1 || rng.random_bool(cfg.home_depot_persistence) {
        home
    } else {
        let mut id = rng.random_range(0..depots.len() as u32 - 1);
        if id >= home.0 {
            id += 1;
        }
        DepotId(id)
    }
}

/// User MOT-preference scenarios: an unrestricted base case, a
/// demographically drawn variant, and six fixed percentage splits of
/// all / cars-only / no-cars users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrefVariant {
    None,
    PrefVar0,
    PrefVar1,
    PrefVar2,
    PrefVar3,
    PrefVar4,
    PrefVar5,
    PrefVar6,
}

impl PrefVariant {
    pub const ALL: [PrefVariant; 8] = [
        PrefVariant::None,
        PrefVariant::PrefVar0,
        PrefVariant::PrefVar1,
        PrefVariant::PrefVar2,
        PrefVariant::PrefVar3,
        PrefVariant::PrefVar4,
        PrefVariant::PrefVar5,
        PrefVariant::PrefVar6,
    ];

    /// Percent of users with (all modes, cars only, no cars); `None` for the
    /// unrestricted and the demographic variant.
    pub fn shares(self) -> Option<(u32, u32, u32)> {
        match self {
            PrefVariant::None | PrefVariant::PrefVar0 => None,
            PrefVariant::PrefVar1 => Some((40, 40, 20)),
            PrefVariant::PrefVar2 => Some((10, 10, 80)),
            PrefVariant::PrefVar3 => Some((25, 25, 50)),
            PrefVariant::PrefVar4 => Some((0, 80, 20)),
            PrefVariant::PrefVar5 => Some((0, 20, 80)),
            PrefVariant::PrefVar6 => Some((0, 50, 50)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrefVariant::None => "none",
            PrefVariant::PrefVar0 => "prefVar0",
            PrefVariant::PrefVar1 => "prefVar1",
            PrefVariant::PrefVar2 => "prefVar2",
            PrefVariant::PrefVar3 => "prefVar3",
            PrefVariant::PrefVar4 => "prefVar4",
            PrefVariant::PrefVar5 => "prefVar5",
            PrefVariant::PrefVar6 => "prefVar6",
        }
    }
}

impl fmt::Display for PrefVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrefVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PrefVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown preference variant `{s}`"))
    }
}

fn all_modes() -> BTreeSet<Mot> {
    Mot::ALL.into_iter().collect()
}

fn cars_only_modes() -> BTreeSet<Mot> {
    // the taxi stays in so a cost baseline always exists
    [Mot::CarType1, Mot::CarType2, Mot::Taxi].into_iter().collect()
}

fn no_cars_modes() -> BTreeSet<Mot> {
    [Mot::Walk, Mot::Bike, Mot::PublicTransport, Mot::Taxi].into_iter().collect()
}

/// Accepted-mode combinations drawn for the demographic variant, in the
/// order matching [`FEMALE_CATEGORY_P`] / [`MALE_CATEGORY_P`]: generic,
/// motorised only, no public transport, no motorised, cars only, public
/// transport only, bike only. Walking is kept wherever its absence would
/// leave short legs unservable.
pub fn demographic_category_modes() -> [BTreeSet<Mot>; 7] {
    [
        all_modes(),
        [Mot::CarType1, Mot::CarType2, Mot::PublicTransport, Mot::Taxi].into_iter().collect(),
        [Mot::Walk, Mot::Bike, Mot::CarType1, Mot::CarType2, Mot::Taxi].into_iter().collect(),
        [Mot::Walk, Mot::Bike].into_iter().collect(),
        cars_only_modes(),
        [Mot::PublicTransport, Mot::Walk].into_iter().collect(),
        [Mot::Bike, Mot::Walk].into_iter().collect(),
    ]
}

pub const FEMALE_CATEGORY_P: [f64; 7] = [0.19, 0.03, 0.01, 0.04, 0.18, 0.42, 0.13];
pub const MALE_CATEGORY_P: [f64; 7] = [0.18, 0.03, 0.02, 0.03, 0.26, 0.35, 0.13];
pub const MALE_SHARE: f64 = 0.53;
pub const DRIVING_LICENSE_SHARE: f64 = 0.87;

/// Rewrites every user's accepted-mode set (and their trips') according to
/// the variant. Deterministic in (instance, variant, seed).
pub fn assign_preferences(instance: &Instance, variant: PrefVariant, seed: u64) -> Instance {
    let mut out = instance.clone();
    let n = out.users.len();

    match variant {
        PrefVariant::None => {
            for user in &mut out.users {
                user.allowed_mots = all_modes();
            }
        }
        PrefVariant::PrefVar0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let categories = demographic_category_modes();
            for user in &mut out.users {
                let male = rng.random_bool(MALE_SHARE);
                let p = if male { &MALE_CATEGORY_P } else { &FEMALE_CATEGORY_P };
                let mut r: f64 = rng.random();
                let mut category = p.len() - 1;
                for (i, prob) in p.iter().enumerate() {
                    if r < *prob {
                        category = i;
                        break;
                    }
                    r -= prob;
                }
                let mut modes = categories[category].clone();
                // either both car types or neither
                if !rng.random_bool(DRIVING_LICENSE_SHARE) {
                    modes.remove(&Mot::CarType1);
                    modes.remove(&Mot::CarType2);
                }
                user.allowed_mots = modes;
            }
        }
        _ => {
            let (all_pct, cars_pct, _) = variant.shares().expect("fixed-share variant");
            let n_all = (all_pct as usize * n).div_ceil(100).min(n);
            let n_cars = (cars_pct as usize * n).div_ceil(100).min(n - n_all);
            for (i, user) in out.users.iter_mut().enumerate() {
                user.allowed_mots = if i < n_all {
                    all_modes()
                } else if i < n_all + n_cars {
                    cars_only_modes()
                } else {
                    no_cars_modes()
                };
            }
        }
    }

    for trip in &mut out.trips {
        trip.allowed_mots = out.users[trip.user.0 as usize].allowed_mots.clone();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::schedule_trip;

    #[test]
    fn identical_seeds_give_bit_identical_instances() {
        let a = generate_instance(42, 25, &GenConfig::default()).unwrap();
        let b = generate_instance(42, 25, &GenConfig::default()).unwrap();
        assert_eq!(a.to_canonical_json(), b.to_canonical_json());
        let c = generate_instance(43, 25, &GenConfig::default()).unwrap();
        assert_ne!(a.to_canonical_json(), c.to_canonical_json());
    }

    #[test]
    fn twenty_users_yield_around_thirty_trips() {
        let inst = generate_instance(42, 20, &GenConfig::default()).unwrap();
        assert!(
            (26..=36).contains(&inst.trips.len()),
            "got {} trips for 20 users",
            inst.trips.len()
        );
    }

    #[test]
    fn single_user_gets_one_to_three_trips() {
        for seed in 0..20 {
            let inst = generate_instance(seed, 1, &GenConfig::default()).unwrap();
            assert!((1..=3).contains(&inst.trips.len()));
            assert!(inst.trips.iter().all(|t| t.user == UserId(0)));
        }
    }

    #[test]
    fn every_trip_is_drivable_and_windows_do_not_overlap() {
        for seed in [1, 7, 99] {
            let inst = generate_instance(seed, 40, &GenConfig::default()).unwrap();
            for trip in &inst.trips {
                assert!(
                    schedule_trip(&inst, trip, Mot::CarType1).is_some(),
                    "seed {seed}: trip {} not drivable",
                    trip.id
                );
            }
            for user in &inst.users {
                let mut windows: Vec<(f64, f64)> = inst
                    .trips
                    .iter()
                    .filter(|t| t.user == user.id)
                    .flat_map(|t| {
                        t.tasks
                            .iter()
                            .map(|q| (q.latest_arrival_min, q.latest_arrival_min + q.duration_min))
                    })
                    .collect();
                windows.sort_by(|a, b| a.0.total_cmp(&b.0));
                for pair in windows.windows(2) {
                    assert!(pair[0].1 <= pair[1].0, "overlapping windows for user {:?}", user.id);
                }
            }
        }
    }

    #[test]
    fn mean_trips_per_user_shrinks_with_company_size() {
        let cfg = GenConfig::default();
        assert!(trips_per_user_mean(&cfg, 20) > trips_per_user_mean(&cfg, 300));
        let inst = generate_instance(5, 100, &cfg).unwrap();
        let per_user = inst.trips.len() as f64 / 100.0;
        assert!((1.2..=1.8).contains(&per_user));
    }

    #[test]
    fn large_company_lands_near_its_target_rate() {
        let inst = generate_instance(42, 300, &GenConfig::default()).unwrap();
        let per_user = inst.trips.len() as f64 / 300.0;
        assert!(
            (per_user - 1.42).abs() <= 0.15,
            "trips/user {per_user:.3} too far from 1.42"
        );
    }

    #[test]
    fn fixed_share_variant_blocks_users_in_order() {
        let inst = generate_instance(42, 20, &GenConfig::default()).unwrap();
        let with_prefs = assign_preferences(&inst, PrefVariant::PrefVar4, 42);
        for (i, user) in with_prefs.users.iter().enumerate() {
            if i < 16 {
                assert_eq!(user.allowed_mots, cars_only_modes(), "user {i}");
            } else {
                assert_eq!(user.allowed_mots, no_cars_modes(), "user {i}");
            }
        }
        // trips inherit their user's set
        for trip in &with_prefs.trips {
            assert_eq!(
                trip.allowed_mots,
                with_prefs.users[trip.user.0 as usize].allowed_mots
            );
        }
    }

    #[test]
    fn none_variant_restores_all_modes() {
        let inst = generate_instance(42, 10, &GenConfig::default()).unwrap();
        let restricted = assign_preferences(&inst, PrefVariant::PrefVar2, 42);
        let unrestricted = assign_preferences(&restricted, PrefVariant::None, 42);
        assert!(unrestricted.users.iter().all(|u| u.allowed_mots == all_modes()));
    }

    #[test]
    fn demographic_variant_matches_published_shares() {
        let inst = generate_instance(42, 10_000, &GenConfig::default()).unwrap();
        let with_prefs = assign_preferences(&inst, PrefVariant::PrefVar0, 42);
        let n = with_prefs.users.len() as f64;

        let frac = |pred: &dyn Fn(&BTreeSet<Mot>) -> bool| {
            with_prefs.users.iter().filter(|u| pred(&u.allowed_mots)).count() as f64 / n
        };
        // category probabilities folded into observable mode shares
        let cars = frac(&|m| m.contains(&Mot::CarType1));
        let cars_expected = (0.47 * (0.19 + 0.03 + 0.01 + 0.18)
            + 0.53 * (0.18 + 0.03 + 0.02 + 0.26))
            * DRIVING_LICENSE_SHARE;
        assert!((cars - cars_expected).abs() < 0.02, "cars {cars} vs {cars_expected}");

        let walk = frac(&|m| m.contains(&Mot::Walk));
        let walk_expected =
            0.47 * (0.19 + 0.01 + 0.04 + 0.42 + 0.13) + 0.53 * (0.18 + 0.02 + 0.03 + 0.35 + 0.13);
        assert!((walk - walk_expected).abs() < 0.02, "walk {walk} vs {walk_expected}");

        let bike = frac(&|m| m.contains(&Mot::Bike));
        let bike_expected =
            0.47 * (0.19 + 0.01 + 0.04 + 0.13) + 0.53 * (0.18 + 0.02 + 0.03 + 0.13);
        assert!((bike - bike_expected).abs() < 0.02, "bike {bike} vs {bike_expected}");

        // both car types or neither, and never an empty set
        for user in &with_prefs.users {
            assert_eq!(
                user.allowed_mots.contains(&Mot::CarType1),
                user.allowed_mots.contains(&Mot::CarType2)
            );
            assert!(!user.allowed_mots.is_empty());
        }
    }

    #[test]
    fn preference_assignment_is_deterministic() {
        let inst = generate_instance(42, 200, &GenConfig::default()).unwrap();
        let a = assign_preferences(&inst, PrefVariant::PrefVar0, 7);
        let b = assign_preferences(&inst, PrefVariant::PrefVar0, 7);
        assert_eq!(a, b);
        let c = assign_preferences(&inst, PrefVariant::PrefVar0, 8);
        assert_ne!(a, c);
    }
}
