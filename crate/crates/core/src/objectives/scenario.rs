//! Toy car-following / cut-out scenario standing in for a simulator.
//!
//! Ego follows BV1 in its lane; BV2 approaches from behind in the adjacent
//! lane. BV1 brakes hard at `t_brake`. Once TTC to BV1 drops below the
//! trigger, the ego reacts after a delay and either brakes or, when braking
//! cannot avoid BV1 and the projected gap to BV2 allows it, changes lane while
//! easing off. The output is the minimum TTC of whichever conflict is active.

use serde::{Deserialize, Serialize};

use super::ttc;
use crate::domain::{Objective, SearchSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Ego initial speed (m/s).
    pub v0: f64,
    /// BV1 initial speed (m/s).
    pub v1: f64,
    /// Gap BV2 → ego (m).
    pub s2: f64,
    /// BV1 brake onset (s).
    pub t_brake: f64,
    pub dt: f64,
    pub horizon: f64,
    pub bv1_decel: f64,
    pub ego_decel: f64,
    /// Ego deceleration while changing lane.
    pub lane_change_decel: f64,
    /// Ego acceleration back to `v0` after the lane change.
    pub ego_accel: f64,
    pub reaction_time: f64,
    pub lane_change_duration: f64,
    /// Part of the lane change during which BV1 is still the active conflict.
    pub lane_change_front_time: f64,
    pub trigger_ttc: f64,
    pub min_rear_gap: f64,
    /// Reported TTC is capped here so the objective stays finite.
    pub ttc_cap: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            v0: 30.0,
            v1: 20.0,
            s2: 50.0,
            t_brake: 4.0,
            dt: 0.02,
            horizon: 15.0,
            bv1_decel: 8.0,
            ego_decel: 6.0,
            lane_change_decel: 4.0,
            ego_accel: 2.0,
            reaction_time: 0.75,
            lane_change_duration: 2.0,
            lane_change_front_time: 0.75,
            trigger_ttc: 3.0,
            min_rear_gap: 5.0,
            ttc_cap: 10.0,
        }
    }
}

/// Critical iff the minimum TTC is below this many seconds.
pub const CRITICAL_TTC: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Cruise,
    React,
    Brake,
    LaneChange,
    Done,
}

fn braking_ok(gap: f64, v_ego: f64, v_lead: f64, lead_decel: f64, ego_decel: f64) -> bool {
    if lead_decel > 0.0 {
        return gap + v_lead * v_lead / (2.0 * lead_decel) - v_ego * v_ego / (2.0 * ego_decel) > 0.0;
    }
    v_ego <= v_lead || (v_ego - v_lead).powi(2) / (2.0 * ego_decel) < gap
}

/// Minimum active-conflict TTC over the episode (seconds, may be +∞).
pub fn simulate_min_ttc(s1: f64, v2: f64, p: &ScenarioParams) -> f64 {
    let (mut xe, mut ve) = (0.0, p.v0);
    let (mut x1, mut vb1) = (s1, p.v1);
    let (mut x2, vb2) = (-p.s2, v2);
    let mut phase = Phase::Cruise;
    let mut timer = 0.0;
    let mut min_ttc = f64::INFINITY;
    let steps = (p.horizon / p.dt).round() as usize;
    let eps = 1e-9;
    let rear_gap_ok = |xe: f64, x2: f64, ve: f64| (xe - x2) + (ve - vb2) * p.lane_change_duration > p.min_rear_gap;

    for step in 0..=steps {
        let t = step as f64 * p.dt;
        let front = matches!(phase, Phase::Cruise | Phase::React | Phase::Brake)
            || (phase == Phase::LaneChange && timer < p.lane_change_front_time);
        let conflict = if front { ttc(x1 - xe, ve, vb1) } else { ttc(xe - x2, vb2, ve) };
        min_ttc = min_ttc.min(conflict);
        if min_ttc == 0.0 {
            break;
        }
        let lead_decel = if t >= p.t_brake && vb1 > 0.0 { p.bv1_decel } else { 0.0 };
        match phase {
            Phase::Cruise if ttc(x1 - xe, ve, vb1) <= p.trigger_ttc => {
                phase = Phase::React;
                timer = 0.0;
            }
            Phase::React => {
                timer += p.dt;
                if timer >= p.reaction_time - eps {
                    if braking_ok(x1 - xe, ve, vb1, lead_decel, p.ego_decel) || !rear_gap_ok(xe, x2, ve) {
                        phase = Phase::Brake;
                    } else {
                        phase = Phase::LaneChange;
                        timer = 0.0;
                    }
                }
            }
            Phase::Brake => {
                if !braking_ok(x1 - xe, ve, vb1, lead_decel, p.ego_decel) && rear_gap_ok(xe, x2, ve) {
                    phase = Phase::LaneChange;
                    timer = 0.0;
                }
            }
            Phase::LaneChange => {
                timer += p.dt;
                if timer >= p.lane_change_duration - eps {
                    phase = Phase::Done;
                }
            }
            _ => {}
        }
        let accel = match phase {
            Phase::Brake if ve > vb1 => -p.ego_decel,
            Phase::Brake => (-p.ego_decel).max((vb1 - ve) / p.dt),
            Phase::LaneChange => -p.lane_change_decel,
            Phase::Done if ve < p.v0 => p.ego_accel,
            _ => 0.0,
        };
        ve = (ve + accel * p.dt).max(0.0);
        if phase == Phase::Done {
            ve = ve.min(p.v0);
        }
        xe += ve * p.dt;
        if t >= p.t_brake {
            vb1 = (vb1 - p.bv1_decel * p.dt).max(0.0);
        }
        x1 += vb1 * p.dt;
        x2 += vb2 * p.dt;
    }
    min_ttc
}

/// Objective over `(s1, v2)`: `−min(min TTC, cap)`, critical above `−0.5`.
#[derive(Debug, Clone, Default)]
pub struct Scenario {
    pub params: ScenarioParams,
}

impl Scenario {
    pub fn space() -> SearchSpace {
        SearchSpace::new(vec![10.0, 10.0], vec![110.0, 30.0]).expect("valid box")
    }

    pub fn delta() -> f64 {
        -CRITICAL_TTC
    }
}

impl Objective for Scenario {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let space = Self::space();
        if x.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
        }
        if !space.contains(x) {
            return Err(Error::OutOfBounds { point: x.to_vec() });
        }
        Ok(-simulate_min_ttc(x[0], x[1], &self.params).min(self.params.ttc_cap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_gap_slow_rear_is_safe() {
        let t = simulate_min_ttc(110.0, 10.0, &ScenarioParams::default());
        assert!(t > CRITICAL_TTC, "{t}");
    }

    #[test]
    fn minimum_gap_is_always_critical() {
        let p = ScenarioParams::default();
        for i in 0..=40 {
            let v2 = 10.0 + 0.5 * i as f64;
            assert!(simulate_min_ttc(10.0, v2, &p) < CRITICAL_TTC, "v2 {v2}");
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let s = Scenario::default();
        let a = s.evaluate(&[63.2, 21.7]).unwrap();
        let b = s.evaluate(&[63.2, 21.7]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((-10.0..=0.0).contains(&a));
        assert!(s.evaluate(&[5.0, 20.0]).is_err());
        assert!(s.evaluate(&[50.0, 31.0]).is_err());
    }

    #[test]
    fn rear_conflict_depends_on_rear_speed() {
        // around s1 = 52 the lane change is only dangerous with a fast BV2
        let p = ScenarioParams::default();
        assert!(simulate_min_ttc(52.0, 30.0, &p) < CRITICAL_TTC);
        assert!(simulate_min_ttc(52.0, 12.0, &p) >= CRITICAL_TTC);
    }
}
