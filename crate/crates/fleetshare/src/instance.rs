//! Instance data model: depots, users, trips with timed task sequences,
//! and its canonical JSON form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mot::{CostConfig, Mot, MotTable};

pub const SCHEMA_VERSION: u32 = 1;
pub const MINUTES_PER_DAY: f64 = 1440.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DepotId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripId(pub u32);

impl fmt::Display for DepotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

impl fmt::Display for TripId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Planar coordinate in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x_km: f64,
    pub y_km: f64,
}

impl Point {
    pub fn distance_km(&self, other: &Point) -> f64 {
        let dx = self.x_km - other.x_km;
        let dy = self.y_km - other.y_km;
        (dx * dx + dy * dy).sqrt()
    }
}

/// A timed meeting: location, appointment time, and how long it lasts.
/// The meeting occupies [latest_arrival_min, latest_arrival_min + duration_min];
/// arriving earlier means waiting, arriving later is infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub location: Point,
    pub latest_arrival_min: f64,
    pub duration_min: f64,
}

/// A fixed-order tour of tasks for one user, from an origin depot to a
/// destination depot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub id: TripId,
    pub user: UserId,
    pub origin: DepotId,
    pub dest: DepotId,
    pub tasks: Vec<Task>,
    pub allowed_mots: BTreeSet<Mot>,
}

impl Trip {
    pub fn allows(&self, mot: Mot) -> bool {
        self.allowed_mots.contains(&mot)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Depot {
    pub id: DepotId,
    pub location: Point,
    /// Vehicles parked here at day start per shared mode; the same counts
    /// must be back in the evening.
    pub supply: BTreeMap<Mot, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub id: UserId,
    pub allowed_mots: BTreeSet<Mot>,
    pub home_depot: DepotId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub seed: u64,
    pub depots: Vec<Depot>,
    pub users: Vec<User>,
    pub trips: Vec<Trip>,
    pub mot_table: MotTable,
    pub cost_config: CostConfig,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("{kind} ids must be dense and ordered, found {found} at position {pos}")]
    NonDenseIds { kind: &'static str, found: u32, pos: usize },
    #[error("trip {trip} references unknown {what} {id}")]
    DanglingRef { trip: TripId, what: &'static str, id: u32 },
    #[error("trip {0} has no tasks")]
    EmptyTrip(TripId),
    #[error("trip {trip} task {task}: {what} out of range ({value})")]
    BadTaskTime { trip: TripId, task: usize, what: &'static str, value: f64 },
    #[error("user {0:?} has an empty set of allowed modes")]
    EmptyMotSet(UserId),
    #[error("invalid instance JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid mode table: {0}")]
    MotTable(#[from] crate::mot::MotTableError),
}

impl Instance {
    pub fn depot(&self, id: DepotId) -> &Depot {
        &self.depots[id.0 as usize]
    }

    pub fn user(&self, id: UserId) -> &User {
        &self.users[id.0 as usize]
    }

    pub fn trip(&self, id: TripId) -> &Trip {
        &self.trips[id.0 as usize]
    }

    /// Stops of a trip in travel order: origin depot, tasks, destination depot.
    pub fn trip_points(&self, trip: &Trip) -> Vec<Point> {
        let mut pts = Vec::with_capacity(trip.tasks.len() + 2);
        pts.push(self.depot(trip.origin).location);
        pts.extend(trip.tasks.iter().map(|t| t.location));
        pts.push(self.depot(trip.dest).location);
        pts
    }

    /// Aerial distance of every leg of a trip.
    pub fn leg_distances_km(&self, trip: &Trip) -> Vec<f64> {
        let pts = self.trip_points(trip);
        pts.windows(2).map(|w| w[0].distance_km(&w[1])).collect()
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        for (pos, d) in self.depots.iter().enumerate() {
            if d.id.0 as usize != pos {
                return Err(InstanceError::NonDenseIds { kind: "depot", found: d.id.0, pos });
            }
        }
        for (pos, u) in self.users.iter().enumerate() {
            if u.id.0 as usize != pos {
                return Err(InstanceError::NonDenseIds { kind: "user", found: u.id.0, pos });
            }
            if u.allowed_mots.is_empty() {
                return Err(InstanceError::EmptyMotSet(u.id));
            }
        }
        for (pos, t) in self.trips.iter().enumerate() {
            if t.id.0 as usize != pos {
                return Err(InstanceError::NonDenseIds { kind: "trip", found: t.id.0, pos });
            }
            if t.user.0 as usize >= self.users.len() {
                return Err(InstanceError::DanglingRef { trip: t.id, what: "user", id: t.user.0 });
            }
            for depot in [t.origin, t.dest] {
                if depot.0 as usize >= self.depots.len() {
                    return Err(InstanceError::DanglingRef { trip: t.id, what: "depot", id: depot.0 });
                }
            }
            if t.tasks.is_empty() {
                return Err(InstanceError::EmptyTrip(t.id));
            }
            for (i, task) in t.tasks.iter().enumerate() {
                let arrival_ok = (0.0..MINUTES_PER_DAY).contains(&task.latest_arrival_min);
                if !arrival_ok {
                    return Err(InstanceError::BadTaskTime {
                        trip: t.id,
                        task: i,
                        what: "latest_arrival_min",
                        value: task.latest_arrival_min,
                    });
                }
                let duration_ok = task.duration_min >= 0.0; // false for NaN too
                if !duration_ok {
                    return Err(InstanceError::BadTaskTime {
                        trip: t.id,
                        task: i,
                        what: "duration_min",
                        value: task.duration_min,
                    });
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON form. Serializing, parsing and serializing again
    /// reproduces the exact same bytes.
    pub fn to_canonical_json(&self) -> String {
        let file = schema::InstanceFile::from_instance(self);
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, InstanceError> {
        let file: schema::InstanceFile = serde_json::from_str(s)?;
        file.into_instance()
    }
}

mod schema {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub struct InstanceFile {
        pub version: u32,
        pub seed: u64,
        pub depots: Vec<DepotFile>,
        pub users: Vec<UserFile>,
        pub trips: Vec<TripFile>,
        pub mot_table: MotTable,
        pub cost_config: CostConfig,
    }

    #[derive(Serialize, Deserialize)]
    pub struct DepotFile {
        pub id: u32,
        pub x_km: f64,
        pub y_km: f64,
        pub supply: BTreeMap<Mot, u32>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct UserFile {
        pub id: u32,
        pub mots: Vec<Mot>,
        pub home_depot: u32,
    }

    #[derive(Serialize, Deserialize)]
    pub struct TripFile {
        pub id: u32,
        pub user: u32,
        pub origin: u32,
        pub dest: u32,
        pub tasks: Vec<TaskFile>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct TaskFile {
        pub x_km: f64,
        pub y_km: f64,
        pub latest_arrival_min: f64,
        pub duration_min: f64,
    }

    impl InstanceFile {
        pub fn from_instance(inst: &Instance) -> Self {
            InstanceFile {
                version: SCHEMA_VERSION,
                seed: inst.seed,
                depots: inst
                    .depots
                    .iter()
                    .map(|d| DepotFile {
                        id: d.id.0,
                        x_km: d.location.x_km,
                        y_km: d.location.y_km,
                        supply: d.supply.clone(),
                    })
                    .collect(),
                users: inst
                    .users
                    .iter()
                    .map(|u| UserFile {
                        id: u.id.0,
                        mots: u.allowed_mots.iter().copied().collect(),
                        home_depot: u.home_depot.0,
                    })
                    .collect(),
                trips: inst
                    .trips
                    .iter()
                    .map(|t| TripFile {
                        id: t.id.0,
                        user: t.user.0,
                        origin: t.origin.0,
                        dest: t.dest.0,
                        tasks: t
                            .tasks
                            .iter()
                            .map(|task| TaskFile {
                                x_km: task.location.x_km,
                                y_km: task.location.y_km,
                                latest_arrival_min: task.latest_arrival_min,
                                duration_min: task.duration_min,
                            })
                            .collect(),
                    })
                    .collect(),
                mot_table: inst.mot_table.clone(),
                cost_config: inst.cost_config.clone(),
            }
        }

        pub fn into_instance(self) -> Result<Instance, InstanceError> {
            if self.version != SCHEMA_VERSION {
                return Err(InstanceError::Version(self.version));
            }
            let users: Vec<User> = self
                .users
                .into_iter()
                .map(|u| User {
                    id: UserId(u.id),
                    allowed_mots: u.mots.into_iter().collect(),
                    home_depot: DepotId(u.home_depot),
                })
                .collect();
            // A trip's allowed set is the set of its user.
            let trips = self
                .trips
                .into_iter()
                .map(|t| {
                    let allowed = users
                        .get(t.user as usize)
                        .map(|u| u.allowed_mots.clone())
                        .unwrap_or_default();
                    Trip {
                        id: TripId(t.id),
                        user: UserId(t.user),
                        origin: DepotId(t.origin),
                        dest: DepotId(t.dest),
                        tasks: t
                            .tasks
                            .into_iter()
                            .map(|task| Task {
                                location: Point { x_km: task.x_km, y_km: task.y_km },
                                latest_arrival_min: task.latest_arrival_min,
                                duration_min: task.duration_min,
                            })
                            .collect(),
                        allowed_mots: allowed,
                    }
                })
                .collect();
            let instance = Instance {
                seed: self.seed,
                depots: self
                    .depots
                    .into_iter()
                    .map(|d| Depot {
                        id: DepotId(d.id),
                        location: Point { x_km: d.x_km, y_km: d.y_km },
                        supply: d.supply,
                    })
                    .collect(),
                users,
                trips,
                mot_table: MotTable::from_rows(self.mot_table.rows().to_vec())?,
                cost_config: self.cost_config,
            };
            instance.validate()?;
            Ok(instance)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_instance() -> Instance {
        let all: BTreeSet<Mot> = Mot::ALL.into_iter().collect();
        Instance {
            seed: 7,
            depots: vec![
                Depot {
                    id: DepotId(0),
                    location: Point { x_km: 0.0, y_km: 0.0 },
                    supply: BTreeMap::new(),
                },
                Depot {
                    id: DepotId(1),
                    location: Point { x_km: 10.0, y_km: 0.0 },
                    supply: BTreeMap::new(),
                },
            ],
            users: vec![User { id: UserId(0), allowed_mots: all.clone(), home_depot: DepotId(0) }],
            trips: vec![Trip {
                id: TripId(0),
                user: UserId(0),
                origin: DepotId(0),
                dest: DepotId(1),
                tasks: vec![Task {
                    location: Point { x_km: 5.0, y_km: 1.0 },
                    latest_arrival_min: 600.0,
                    duration_min: 60.0,
                }],
                allowed_mots: all,
            }],
            mot_table: MotTable::standard(),
            cost_config: CostConfig::default(),
        }
    }

    #[test]
    fn canonical_json_round_trips_bit_exact() {
        let inst = tiny_instance();
        let json = inst.to_canonical_json();
        let back = Instance::from_json(&json).unwrap();
        assert_eq!(inst, back);
        assert_eq!(back.to_canonical_json(), json);
    }

    #[test]
    fn rejects_wrong_version() {
        let inst = tiny_instance();
        let json = inst.to_canonical_json().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(Instance::from_json(&json), Err(InstanceError::Version(99))));
    }

    #[test]
    fn leg_distances_cover_all_stops() {
        let inst = tiny_instance();
        let legs = inst.leg_distances_km(&inst.trips[0]);
        assert_eq!(legs.len(), 2);
        assert!((legs[0] - (26.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_empty_trip() {
        let mut inst = tiny_instance();
        inst.trips[0].tasks.clear();
        assert!(matches!(inst.validate(), Err(InstanceError::EmptyTrip(_))));
    }
}
