//! Trip timing: when a trip leaves its origin depot and when it is back at a
//! depot, given a mode of transport.
//!
//! Appointments are fixed: a meeting runs from its latest-arrival instant for
//! its full duration, regardless of how early the user shows up. Departure
//! from the origin is anchored so the first meeting is reached exactly on
//! time; early arrival at later meetings means waiting, being late is
//! infeasible.

use crate::cost::leg_travel_time_min;
use crate::instance::{Instance, Trip};
use crate::mot::Mot;

/// Slack for floating-point time comparisons, in minutes.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripSchedule {
    /// Departure from the origin depot, minutes since midnight.
    pub start_min: f64,
    /// Arrival back at the destination depot.
    pub end_min: f64,
}

/// Returns `None` when the mode cannot reach some meeting on time.
pub fn schedule_trip(instance: &Instance, trip: &Trip, mot: Mot) -> Option<TripSchedule> {
    let params = instance.mot_table.get(mot);
    let legs = instance.leg_distances_km(trip);

    let start_min = trip.tasks[0].latest_arrival_min - leg_travel_time_min(legs[0], params);
    let mut leave_min = trip.tasks[0].latest_arrival_min + trip.tasks[0].duration_min;
    for (i, pair) in trip.tasks.windows(2).enumerate() {
        let arrival = leave_min + leg_travel_time_min(legs[i + 1], params);
        if arrival > pair[1].latest_arrival_min + TIME_EPS {
            return None;
        }
        leave_min = pair[1].latest_arrival_min + pair[1].duration_min;
    }
    let end_min = leave_min + leg_travel_time_min(legs[legs.len() - 1], params);
    Some(TripSchedule { start_min, end_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Depot, DepotId, Point, Task, Trip, TripId, User, UserId};
    use crate::mot::{CostConfig, MotTable};
    use std::collections::{BTreeMap, BTreeSet};

    fn instance_with_tasks(tasks: Vec<Task>) -> Instance {
        let all: BTreeSet<Mot> = Mot::ALL.into_iter().collect();
        Instance {
            seed: 0,
            depots: vec![Depot {
                id: DepotId(0),
                location: Point { x_km: 0.0, y_km: 0.0 },
                supply: BTreeMap::new(),
            }],
            users: vec![User { id: UserId(0), allowed_mots: all.clone(), home_depot: DepotId(0) }],
            trips: vec![Trip {
                id: TripId(0),
                user: UserId(0),
                origin: DepotId(0),
                dest: DepotId(0),
                tasks,
                allowed_mots: all,
            }],
            mot_table: MotTable::standard(),
            cost_config: CostConfig::default(),
        }
    }

    #[test]
    fn single_task_anchors_on_latest_arrival() {
        // 10 km out and back by car: 13/30 h + 10 min = 36 min per leg.
        let inst = instance_with_tasks(vec![Task {
            location: Point { x_km: 10.0, y_km: 0.0 },
            latest_arrival_min: 600.0,
            duration_min: 60.0,
        }]);
        let s = schedule_trip(&inst, &inst.trips[0], Mot::CarType1).unwrap();
        assert!((s.start_min - (600.0 - 36.0)).abs() < 1e-9);
        assert!((s.end_min - 696.0).abs() < 1e-9);
    }

    #[test]
    fn zero_duration_task_at_depot_ends_after_setup_only() {
        let inst = instance_with_tasks(vec![Task {
            location: Point { x_km: 0.0, y_km: 0.0 },
            latest_arrival_min: 600.0,
            duration_min: 0.0,
        }]);
        let s = schedule_trip(&inst, &inst.trips[0], Mot::CarType1).unwrap();
        assert!((s.start_min - 590.0).abs() < 1e-9); // setup still paid
        assert!((s.end_min - 610.0).abs() < 1e-9);
    }

    #[test]
    fn slow_mode_misses_tight_successor() {
        let tasks = vec![
            Task {
                location: Point { x_km: 0.0, y_km: 0.0 },
                latest_arrival_min: 600.0,
                duration_min: 30.0,
            },
            Task {
                location: Point { x_km: 10.0, y_km: 0.0 },
                latest_arrival_min: 660.0,
                duration_min: 30.0,
            },
        ];
        let inst = instance_with_tasks(tasks);
        // car: 630 + 36 = 666 > 660 -> even the car misses it
        assert!(schedule_trip(&inst, &inst.trips[0], Mot::CarType1).is_none());
        // walking is hopeless too
        assert!(schedule_trip(&inst, &inst.trips[0], Mot::Walk).is_none());

        // widen the slot: car fits, walking (132 min for 11 km) still fails
        let mut tasks = inst.trips[0].tasks.clone();
        tasks[1].latest_arrival_min = 700.0;
        let inst2 = instance_with_tasks(tasks);
        assert!(schedule_trip(&inst2, &inst2.trips[0], Mot::CarType1).is_some());
        assert!(schedule_trip(&inst2, &inst2.trips[0], Mot::Walk).is_none());
    }

    #[test]
    fn waiting_before_a_later_meeting_is_allowed() {
        let tasks = vec![
            Task {
                location: Point { x_km: 1.0, y_km: 0.0 },
                latest_arrival_min: 540.0,
                duration_min: 30.0,
            },
            Task {
                location: Point { x_km: 2.0, y_km: 0.0 },
                latest_arrival_min: 900.0,
                duration_min: 30.0,
            },
        ];
        let inst = instance_with_tasks(tasks);
        let s = schedule_trip(&inst, &inst.trips[0], Mot::Bike).unwrap();
        // second meeting still starts at its appointment, not at arrival
        assert!((s.end_min - (930.0 + leg_travel_time_min(2.0, inst.mot_table.get(Mot::Bike)))).abs() < 1e-9);
    }
}
