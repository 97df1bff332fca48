mod common;

use common::*;
use proptest::prelude::*;
use rearrange::env::{Action, Env, EnvConfig, Setting, Shape, Variant};
use rearrange::graph::isolate_transition;
use rearrange::harness::generate_buffer;
use rearrange::metric::DistanceMetric;
use rearrange::perception::{check_filter_criteria, perceive, type_distance, PerceptionConfig};

fn arb_action() -> impl Strategy<Value = Action> {
    (0.0..1.0f64, 0.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, dx, dy)| Action::new([x, y], [dx, dy]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn grid_steps_move_at_most_one_object_between_cells(seed in 0u64..100_000, k in 1usize..=7, action in arb_action()) {
        let env = Env::new(EnvConfig::grid(k)).unwrap();
        let (state, _) = env.reset(seed).unwrap();
        let (next, moved) = env.step_traced(&state, &action);
        let changed: Vec<usize> = (0..k).filter(|&i| state.objects[i].position != next.objects[i].position).collect();
        prop_assert_eq!(changed.clone(), moved.into_iter().collect::<Vec<_>>());
        for o in &next.objects {
            prop_assert_eq!(env.snap(o.position), o.position);
        }
        let mut cells: Vec<usize> = next.objects.iter().map(|o| env.cell_of(o.position)).collect();
        cells.sort_unstable();
        cells.dedup();
        prop_assert_eq!(cells.len(), k);
    }

    #[test]
    fn table_steps_move_at_most_one_object(seed in 0u64..100_000, k in 1usize..=7, action in arb_action()) {
        let env = Env::new(EnvConfig::table(k)).unwrap();
        let (state, _) = env.reset(seed).unwrap();
        let (next, moved) = env.step_traced(&state, &action);
        let changed = (0..k).filter(|&i| state.objects[i].position != next.objects[i].position).count();
        prop_assert_eq!(changed, moved.map_or(0, |_| 1));
        let [w, h] = env.config().extent();
        for o in &next.objects {
            prop_assert!(o.position[0] > 0.0 && o.position[0] < w && o.position[1] > 0.0 && o.position[1] < h);
        }
    }

    #[test]
    fn perception_recovers_every_object(seed in 0u64..100_000, k in 1usize..=7, table in any::<bool>()) {
        let config = if table { EnvConfig::table(k) } else { EnvConfig::grid(k) };
        let env = Env::new(config.clone()).unwrap();
        let (state, _) = env.reset(seed).unwrap();
        let set = perceive(&env.render(&state), &PerceptionConfig::for_env(&config));
        prop_assert_eq!(set.len(), k);
        let pitch = config.pixel_pitch();
        for o in &state.objects {
            let rgb = o.rgb8().map(|c| c as f64 / 255.0);
            let e = set.iter().find(|e| e.type_vec[..3] == rgb).expect("colour found");
            // a triangle's centroid sits a third of its half size off its anchor
            let slack = if o.shape == Shape::Triangle { config.object_half_size() / 3.0 } else { 0.0 };
            prop_assert!((e.location[0] - o.position[0]).abs() <= pitch[0]);
            prop_assert!((e.location[1] - o.position[1]).abs() <= pitch[1] + slack);
        }
    }
}

#[test]
fn grid_type_is_stable_across_cells() {
    let f = grid();
    let p = f.perception;
    let reference = perceive(&f.env.render(&grid_state(&f.env, &[(RED, 0)])), &p)[0].type_vec.clone();
    for cell in 1..16 {
        let set = perceive(&f.env.render(&grid_state(&f.env, &[(RED, cell)])), &p);
        assert!(type_distance(&set[0].type_vec, &reference) < 1e-9, "cell {cell}");
    }
}

#[test]
fn goal_raster_shows_constrained_objects_only() {
    let env = Env::new(EnvConfig::grid(6).with_setting(Setting::Partial)).unwrap();
    for seed in 0..20 {
        let (_, task) = env.reset(seed).unwrap();
        let goal = perceive(&task.goal, &PerceptionConfig::for_env(env.config()));
        assert_eq!(goal.len(), task.constraints().len());
    }
}

#[test]
fn filter_criteria_hold_on_grid_transitions() {
    let f = grid();
    let pitch = f.config.pixel_pitch();
    for (ep, (states, moved)) in f.traced.buffer.episodes.iter().zip(f.traced.states.iter().zip(&f.traced.moved)).take(200) {
        let sets: Vec<_> = ep.observations.iter().map(|o| perceive(o, &f.perception)).collect();
        for t in 0..ep.actions.len() {
            let r = check_filter_criteria(&sets[t], &sets[t + 1], DistanceMetric::Cosine);
            assert!(!r.cardinality_mismatch);
            assert!(r.max_type_drift <= 0.05);
            assert!(r.max_location_drift <= pitch[0]);
            let m = &sets[t][r.moved.unwrap()];
            let truth = states[t].objects[moved[t]].position;
            assert!((m.location[0] - truth[0]).abs() <= pitch[0] && (m.location[1] - truth[1]).abs() <= pitch[1]);
            assert!(isolate_transition(&sets[t], &sets[t + 1], &ep.actions[t], DistanceMetric::Cosine)
                .unwrap()
                .is_some());
        }
    }
}

#[test]
fn buffer_generation_is_reproducible() {
    for variant in [Variant::Grid, Variant::Table] {
        let config = EnvConfig::defaults_for(variant);
        let a = generate_buffer(&config, 40, 5, 9).unwrap();
        let b = generate_buffer(&config, 40, 5, 9).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.digest(), generate_buffer(&config, 40, 5, 10).unwrap().digest());
    }
}

#[test]
fn full_grid_buffer_covers_every_cell() {
    let f = grid();
    let mut src = [false; 16];
    let mut dst = [false; 16];
    for (states, moved) in f.traced.states.iter().zip(&f.traced.moved) {
        for (t, &i) in moved.iter().enumerate() {
            src[f.env.cell_of(states[t].objects[i].position)] = true;
            dst[f.env.cell_of(states[t + 1].objects[i].position)] = true;
        }
    }
    assert!(src.iter().chain(&dst).all(|&b| b));
}
