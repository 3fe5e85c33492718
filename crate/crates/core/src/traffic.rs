//! Leader search. Vehicles only interact with vehicles sharing their route
//! and lane; each such group circulates as a closed ring along the route
//! cycle, so every vehicle's leader is the next one ahead in arc length.

use std::collections::BTreeMap;

use crate::dynamics::VehicleState;
use crate::road::LoopRoute;
use crate::units::miles_to_meters;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    /// Index of the leader in the input slice.
    pub index: usize,
    /// Bumper-to-bumper gap, m. May be non-positive when vehicles overlap.
    pub gap: f64,
    pub speed: f64,
}

/// Finds each vehicle's leader. `lengths[i]` is vehicle `i`'s length in
/// meters and `route_of(i)` its route. Vehicles alone in their group have
/// no leader.
pub fn find_leaders<'r>(
    states: &[VehicleState],
    lengths: &[f64],
    route_of: impl Fn(usize) -> &'r LoopRoute,
) -> Vec<Option<Leader>> {
    let mut groups: BTreeMap<(&str, u32), Vec<usize>> = BTreeMap::new();
    for (i, s) in states.iter().enumerate() {
        groups
            .entry((s.pos.route_id.as_str(), s.pos.lane))
            .or_default()
            .push(i);
    }
    let mut out = vec![None; states.len()];
    for members in groups.values_mut() {
        if members.len() < 2 {
            continue;
        }
        members.sort_by(|&a, &b| {
            states[a]
                .pos
                .arc_s
                .total_cmp(&states[b].pos.arc_s)
                .then(a.cmp(&b))
        });
        let n = members.len();
        for k in 0..n {
            let me = members[k];
            let ahead = members[(k + 1) % n];
            let route = route_of(me);
            let dist_mi = route.forward_distance(states[me].pos.arc_s, states[ahead].pos.arc_s);
            out[me] = Some(Leader {
                index: ahead,
                gap: miles_to_meters(dist_mi) - lengths[ahead],
                speed: states[ahead].speed,
            });
        }
    }
    out
}
