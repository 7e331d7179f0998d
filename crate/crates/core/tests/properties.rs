use std::f64::consts::PI;

use kdrrf::arm::{fk, ik, JointConfig};
use kdrrf::bench::{generate_scenario, GenConfig};
use kdrrf::geometry::{wrap_angle, Pose2};
use kdrrf::physics::{simulate, Twist2};
use kdrrf::planner::{distance, selection_probabilities, Stretch};
use kdrrf::task;
use kdrrf::world::{is_arm_valid, is_state_valid, SystemState};
use kdrrf::Scenario;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn scene(kind: &str, seed: u64) -> Scenario {
    generate_scenario(kind, &GenConfig::desk(kind), seed).unwrap()
}

fn kind() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["grasping", "relocating", "sorting_free", "sorting_regions"])
}

/// A valid state with the end-effector placed somewhere over the table.
fn placed(s: &Scenario, x: f64, y: f64, theta: f64) -> Option<SystemState> {
    let arm = ik(&Pose2::new(x, y, theta), &s.params.arm, &s.initial_state.arm)?;
    let q = SystemState {
        arm,
        objects: s.initial_state.objects.clone(),
    };
    is_state_valid(&q, s).then_some(q)
}

fn twist() -> impl Strategy<Value = Twist2> {
    (0.0..0.2f64, -PI..PI, -1.0..1.0f64).prop_map(|(v, dir, w)| Twist2::new(v * dir.cos(), v * dir.sin(), w, 0.5))
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn sweeps_agree_with_a_finer_validity_oracle(
        seed in 0u64..500,
        x in -0.5..0.5f64,
        y in 0.3..0.95f64,
        theta in -PI..PI,
        v in twist(),
    ) {
        let s = scene("sorting_regions", seed);
        let Some(q) = placed(&s, x, y, theta) else { return Ok(()) };
        let Ok(sweep) = simulate(&q, &v, &s, &s.params.physics, true) else { return Ok(()) };
        // Arm checked at a tenth of a substep, objects at each substep.
        let mut fine_ok = true;
        for pair in sweep.trace.windows(2) {
            for m in 0..=10 {
                let t = m as f64 / 10.0;
                let c: JointConfig = std::array::from_fn(|i| pair[0].arm[i] + t * (pair[1].arm[i] - pair[0].arm[i]));
                fine_ok &= is_arm_valid(&c, &s);
            }
            fine_ok &= is_state_valid(&pair[1], &s);
        }
        prop_assert_eq!(sweep.in_manifold, fine_ok);
        prop_assert_eq!(sweep.trace.last().unwrap(), &sweep.state);
        let again = simulate(&q, &v, &s, &s.params.physics, false).unwrap();
        prop_assert_eq!(again.state, sweep.state);
    }

    #[test]
    fn end_effector_follows_the_twist(
        seed in 0u64..500,
        x in -0.4..0.4f64,
        y in 0.4..0.9f64,
        theta in -PI..PI,
        v in twist(),
    ) {
        let s = scene("sorting_regions", seed);
        let Some(q) = placed(&s, x, y, theta) else { return Ok(()) };
        let Ok(sweep) = simulate(&q, &v, &s, &s.params.physics, false) else { return Ok(()) };
        let a = fk(&q.arm, &s.params.arm);
        let b = fk(&sweep.state.arm, &s.params.arm);
        prop_assert!((b.x - a.x - v.vx * v.duration).abs() < 1e-3);
        prop_assert!((b.y - a.y - v.vy * v.duration).abs() < 1e-3);
        prop_assert!(wrap_angle(b.theta - a.theta - v.omega * v.duration).abs() < 1e-3);
    }

    #[test]
    fn distance_is_a_metric(seed in 0u64..200, shifts in prop::collection::vec(-0.2..0.2f64, 9)) {
        let s = scene("sorting_regions", seed);
        let w = [0.02, 1.0, 0.1];
        let a = s.initial_state.clone();
        let mut b = a.clone();
        let mut c = a.clone();
        b.arm = std::array::from_fn(|i| a.arm[i] + shifts[i]);
        b.objects[0].pose.x += shifts[3];
        b.objects[1].pose.theta += shifts[4] * 10.0;
        c.arm = std::array::from_fn(|i| a.arm[i] - shifts[i + 5].min(0.1));
        c.objects[2].pose.y += shifts[8];
        prop_assert!(distance(&a, &a, &w) == 0.0);
        prop_assert!((distance(&a, &b, &w) - distance(&b, &a, &w)).abs() < 1e-12);
        prop_assert!(distance(&a, &c, &w) <= distance(&a, &b, &w) + distance(&b, &c, &w) + 1e-12);
    }

    #[test]
    fn selection_probabilities_form_a_distribution(
        mags in prop::collection::vec(0.0..5.0f64, 1..12),
        k in 0.5..4.0f64,
        exp in any::<bool>(),
    ) {
        let stretch = if exp { Stretch::Exp } else { Stretch::Power { k } };
        let p = selection_probabilities(&mags, stretch);
        prop_assert_eq!(p.len(), mags.len());
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Monotone in the magnitude.
        for i in 0..mags.len() {
            for j in 0..mags.len() {
                if mags[i] > mags[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn heuristics_are_non_negative_and_zero_only_near_goal(kind in kind(), seed in 0u64..300) {
        let s = scene(kind, seed);
        let t = task::build(&s).unwrap();
        let h = t.heuristic(&s.initial_state);
        prop_assert!(h >= 0.0 && h.is_finite());
        if kind == "sorting_regions" {
            prop_assert!(!t.goal(&s.initial_state));
            prop_assert!(h > 0.0);
        }
    }

    #[test]
    fn generated_scenarios_round_trip_through_json(kind in kind(), seed in any::<u64>()) {
        let s = scene(kind, seed);
        let back = Scenario::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert!(back.validate().is_ok());
    }

    #[test]
    fn wrapped_angles_stay_in_range(a in -1e4..1e4f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        prop_assert!(((a - w) / (2.0 * PI) - ((a - w) / (2.0 * PI)).round()).abs() < 1e-6);
    }
}
