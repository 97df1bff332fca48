mod common;

use common::*;
use rearrange::buffer::{Episode, ExperienceBuffer};
use rearrange::controller::{Controller, ControllerConfig, Diagnostics};
use rearrange::env::{Action, Env, EnvConfig};
use rearrange::graph::{build_graph, BuildConfig, TransitionGraph};
use rearrange::harness::{generate_buffer, run_episode};
use rearrange::perception::{perceive, PerceptionConfig, StateRepr};
use rearrange::rng::rng_from_seed;

#[test]
fn grid_graph_has_one_node_per_cell() {
    let f = grid();
    assert_eq!(f.graph.node_count(), 16);
    let pitch = f.config.pixel_pitch();
    let mut cells: Vec<usize> = (0..16)
        .map(|i| {
            let loc = f.graph.node_location(i).unwrap();
            let cell = f.env.cell_of(loc);
            let c = f.env.cell_center(cell);
            assert!((loc[0] - c[0]).abs() <= pitch[0] && (loc[1] - c[1]).abs() <= pitch[1]);
            cell
        })
        .collect();
    cells.sort_unstable();
    assert_eq!(cells, (0..16).collect::<Vec<_>>());
}

#[test]
fn every_edge_moves_its_source_cell_to_its_target_cell() {
    let f = grid();
    assert!(f.graph.edge_count() > 0);
    for e in f.graph.edges() {
        let src = f.env.cell_of(f.graph.node_location(e.from).unwrap());
        let dst = f.env.cell_of(f.graph.node_location(e.to).unwrap());
        let state = grid_state(&f.env, &[(RED, src)]);
        let (next, moved) = f.env.step_traced(&state, &e.action);
        assert_eq!(moved, Some(0), "edge {} -> {}", e.from, e.to);
        assert_eq!(f.env.cell_of(next.objects[0].position), dst);
    }
}

#[test]
fn centroids_bind_to_themselves() {
    let f = grid();
    for (i, n) in f.graph.nodes.iter().enumerate() {
        let b = f.graph.bind(&n.centroid).unwrap();
        assert_eq!(b.node, i);
    }
}

#[test]
fn built_graph_survives_json() {
    let f = grid();
    let back = TransitionGraph::from_json(&f.graph.to_json()).unwrap();
    assert_eq!(back, f.graph);
    let prov = back.provenance.as_ref().unwrap();
    assert_eq!(prov.buffer_digest, f.traced.buffer.digest());
    assert_eq!(prov.clusters, 16);
}

#[test]
fn building_is_deterministic() {
    let config = EnvConfig::grid(4);
    let buffer = generate_buffer(&config, 200, 5, 11).unwrap();
    let perception = PerceptionConfig::for_env(&config);
    let build = BuildConfig::for_env(&config);
    let (a, ra) = build_graph(&buffer, &perception, &build).unwrap();
    let (b, rb) = build_graph(&buffer, &perception, &build).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(ra, rb);
}

#[test]
fn position_states_build_the_same_cells() {
    let config = EnvConfig::grid(4);
    let buffer = generate_buffer(&config, 400, 5, 2).unwrap();
    let perception = PerceptionConfig::for_env(&config).with_repr(StateRepr::Position);
    let mut build = BuildConfig::for_env(&config);
    build.isolate_metric = rearrange::metric::DistanceMetric::SquaredEuclidean;
    build.cluster_metric = build.isolate_metric;
    build.bind_metric = build.isolate_metric;
    let (g, _) = build_graph(&buffer, &perception, &build).unwrap();
    assert_eq!(g.repr, StateRepr::Position);
    let env = Env::new(config).unwrap();
    let mut cells: Vec<usize> = (0..g.node_count()).map(|i| env.cell_of(g.node_location(i).unwrap())).collect();
    cells.sort_unstable();
    cells.dedup();
    assert_eq!(cells.len(), 16);
}

/// Experience with a single red object only; the graph it yields must still
/// drive objects of other colours.
fn red_only_buffer(env: &Env, episodes: usize) -> ExperienceBuffer {
    let mut rng = rng_from_seed(3);
    let eps = (0..episodes)
        .map(|e| {
            let mut state = grid_state(env, &[(RED, e % 16)]);
            let mut observations = vec![env.render(&state)];
            let mut actions = Vec::new();
            for _ in 0..4 {
                let dest = env.random_free_position(&state, &mut rng).unwrap();
                let a = Action::between(state.objects[0].position, dest);
                state = env.step(&state, &a);
                observations.push(env.render(&state));
                actions.push(a);
            }
            Episode { observations, actions }
        })
        .collect();
    ExperienceBuffer {
        env_config: env.config().clone(),
        episodes: eps,
    }
}

#[test]
fn red_only_experience_controls_other_colors() {
    let config = EnvConfig::grid(1);
    let env = Env::new(config.clone()).unwrap();
    let buffer = red_only_buffer(&env, 600);
    let perception = PerceptionConfig::for_env(&config);
    let (graph, _) = build_graph(&buffer, &perception, &BuildConfig::for_env(&config)).unwrap();
    let ctl = Controller::new(&graph, perception, ControllerConfig::for_env(&config, graph.metric));
    let state = grid_state(&env, &[(BLUE, 0), (GREEN, 6), (YELLOW, 9)]);
    let task = complete_task(&env, &state, &[15, 3, 12]);
    let goal = perceive(&task.goal, &perception);
    let mut diag = Diagnostics::default();
    let mut rng = rng_from_seed(0);
    let outcome = run_episode(&env, &state, &task, 1.0, 0.0, &mut rng, &mut |o, _, r| {
        ctl.decide(&perceive(o, &perception), &goal, r, &mut diag).action()
    });
    assert_eq!(outcome.fsr, Some(1.0));
    assert_eq!(outcome.steps, 3);
    assert_eq!(diag, Diagnostics::default());
}
