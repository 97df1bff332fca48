mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rearrange::controller::{Controller, ControllerConfig, Decision, Diagnostics, FallbackCause, SelectionMode};
use rearrange::env::{Env, EnvConfig};
use rearrange::perception::{perceive, EntitySet};
use rearrange::rng::rng_from_seed;

fn argmax_controller(f: &GridFixture) -> Controller<'_> {
    let mut config = ControllerConfig::for_env(&f.config, f.graph.metric);
    config.selection = SelectionMode::Argmax;
    Controller::new(&f.graph, f.perception, config)
}

#[test]
fn one_move_from_goal_is_solved_in_one_step() {
    let f = grid();
    let ctl = argmax_controller(f);
    let state = grid_state(&f.env, &[(RED, 0), (GREEN, 5), (BLUE, 10)]);
    let task = complete_task(&f.env, &state, &[0, 5, 15]);
    let cur = perceive(&task.initial, &f.perception);
    let goal = perceive(&task.goal, &f.perception);
    let mut diag = Diagnostics::default();
    let d = ctl.decide(&cur, &goal, &mut rng_from_seed(0), &mut diag);
    let Decision::Edge { current_index, .. } = d else {
        panic!("expected an edge decision, got {d:?}");
    };
    let blue_loc = f.env.cell_center(10);
    assert!((cur[current_index].location[0] - blue_loc[0]).abs() < 0.02);
    assert!((cur[current_index].location[1] - blue_loc[1]).abs() < 0.02);
    let next = f.env.step(&state, &d.action());
    assert_eq!(f.env.unsatisfied_count(&next, &task), 0);
    assert_eq!(diag, Diagnostics::default());
}

#[test]
fn deleted_edge_falls_back_as_missing_edge() {
    let f = grid();
    let state = grid_state(&f.env, &[(RED, 0), (GREEN, 5), (BLUE, 10)]);
    let task = complete_task(&f.env, &state, &[0, 5, 15]);
    let cur = perceive(&task.initial, &f.perception);
    let goal = perceive(&task.goal, &f.perception);
    let Decision::Edge { from, to, .. } = argmax_controller(f).decide(&cur, &goal, &mut rng_from_seed(0), &mut Diagnostics::default())
    else {
        panic!("expected an edge decision");
    };
    let mut pruned = f.graph.clone();
    assert!(pruned.remove_edge(from, to).is_some());
    let ctl = Controller::new(&pruned, f.perception, argmax_controller(f).config);
    let mut diag = Diagnostics::default();
    let d = ctl.decide(&cur, &goal, &mut rng_from_seed(0), &mut diag);
    assert!(matches!(d, Decision::Fallback { cause: FallbackCause::MissingEdge, .. }));
    assert_eq!(diag.missing_edge, 1);
    assert_eq!(diag.missing_edge_total(), 1);
}

#[test]
fn satisfied_goal_yields_no_constraint() {
    let f = grid();
    let state = grid_state(&f.env, &[(RED, 0), (GREEN, 5)]);
    let task = complete_task(&f.env, &state, &[0, 5]);
    assert_eq!(task.initial, task.goal);
    let set = perceive(&task.initial, &f.perception);
    let mut diag = Diagnostics::default();
    let d = argmax_controller(f).decide(&set, &set, &mut rng_from_seed(0), &mut diag);
    assert!(matches!(d, Decision::Fallback { cause: FallbackCause::NoConstraint, .. }));
    assert_eq!(diag.no_constraint, 1);
}

#[test]
fn every_edge_decision_satisfies_one_constraint() {
    let f = grid();
    let ctl = argmax_controller(f);
    let mut edge_steps = 0;
    for k in 4..=7 {
        let env = Env::new(EnvConfig::grid(k)).unwrap();
        for seed in 0..25 {
            let (mut state, task) = env.reset(seed).unwrap();
            let goal = perceive(&task.goal, &f.perception);
            let mut rng = rng_from_seed(seed);
            let mut diag = Diagnostics::default();
            for _ in 0..4 * k {
                let before = env.unsatisfied_count(&state, &task);
                if before == 0 {
                    break;
                }
                let d = ctl.decide(&perceive(&env.render(&state), &f.perception), &goal, &mut rng, &mut diag);
                state = env.step(&state, &d.action());
                if !d.is_fallback() {
                    edge_steps += 1;
                    assert_eq!(env.unsatisfied_count(&state, &task), before - 1, "k={k} seed={seed}");
                }
            }
            assert_eq!(env.unsatisfied_count(&state, &task), 0, "k={k} seed={seed} {diag:?}");
        }
    }
    assert!(edge_steps > 0);
}

fn shuffled(set: &EntitySet, seed: u64) -> EntitySet {
    let mut entities = set.entities.clone();
    entities.shuffle(&mut rng_from_seed(seed));
    EntitySet { entities }
}

/// Bound node pairs visited by an argmax run on `state`/`task`.
fn node_trace(f: &GridFixture, env: &Env, state: &rearrange::env::EnvState, task: &rearrange::env::Task) -> Vec<(usize, usize)> {
    let ctl = argmax_controller(f);
    let goal = perceive(&task.goal, &f.perception);
    let mut state = state.clone();
    let mut trace = Vec::new();
    let mut rng = rng_from_seed(0);
    for _ in 0..16 {
        if env.unsatisfied_count(&state, task) == 0 {
            break;
        }
        let d = ctl.decide(&perceive(&env.render(&state), &f.perception), &goal, &mut rng, &mut Diagnostics::default());
        if let Decision::Edge { from, to, .. } = d {
            trace.push((from, to));
        }
        state = env.step(&state, &d.action());
    }
    trace
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decision_ignores_entity_order(seed in 0u64..10_000, perm_a in any::<u64>(), perm_b in any::<u64>(), k in 4usize..=7) {
        let f = grid();
        let env = Env::new(EnvConfig::grid(k)).unwrap();
        let (_, task) = env.reset(seed).unwrap();
        let cur = perceive(&task.initial, &f.perception);
        let goal = perceive(&task.goal, &f.perception);
        let ctl = argmax_controller(f);
        let a = ctl.decide(&cur, &goal, &mut rng_from_seed(1), &mut Diagnostics::default());
        let b = ctl.decide(&shuffled(&cur, perm_a), &shuffled(&goal, perm_b), &mut rng_from_seed(1), &mut Diagnostics::default());
        prop_assert_eq!(a.action(), b.action());
    }

    #[test]
    fn recolored_task_reuses_the_same_edges(seed in 0u64..10_000, k in 2usize..=6) {
        let f = grid();
        let env = Env::new(EnvConfig::grid(k)).unwrap();
        let (state, task) = env.reset(seed).unwrap();
        let (other, _) = env.reset(seed ^ 0x5eed).unwrap();
        let mut recolored = state.clone();
        for (o, src) in recolored.objects.iter_mut().zip(&other.objects) {
            o.color = src.color;
        }
        let retask = env.task(&recolored, task.constraints().to_vec(), task.setting);
        let original = node_trace(f, &env, &state, &task);
        prop_assert_eq!(original.len(), task.constraints().len());
        prop_assert_eq!(node_trace(f, &env, &recolored, &retask), original);
    }
}
