#![allow(dead_code)]

use std::sync::OnceLock;

use rearrange::env::{Constraint, Env, EnvConfig, EnvState, Setting, Task};
use rearrange::graph::{build_graph, BuildConfig, TransitionGraph};
use rearrange::harness::{generate_traced, TracedBuffer};
use rearrange::perception::PerceptionConfig;

pub struct GridFixture {
    pub config: EnvConfig,
    pub env: Env,
    pub traced: TracedBuffer,
    pub graph: TransitionGraph,
    pub perception: PerceptionConfig,
}

/// 1000-episode 4-object grid buffer and its 16-node graph.
pub fn grid() -> &'static GridFixture {
    static CELL: OnceLock<GridFixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = EnvConfig::grid(4);
        let traced = generate_traced(&config, 1000, 5, 7).unwrap();
        let perception = PerceptionConfig::for_env(&config);
        let (graph, _) = build_graph(&traced.buffer, &perception, &BuildConfig::for_env(&config)).unwrap();
        GridFixture {
            env: Env::new(config.clone()).unwrap(),
            config,
            traced,
            graph,
            perception,
        }
    })
}

/// State with one object per `(color, cell)` pair.
pub fn grid_state(env: &Env, objects: &[([f64; 3], usize)]) -> EnvState {
    let (template, _) = Env::new(env.config().clone().with_objects(1)).unwrap().reset(0).unwrap();
    EnvState {
        objects: objects
            .iter()
            .map(|&(color, cell)| rearrange::env::ObjectSpec {
                color,
                position: env.cell_center(cell),
                ..template.objects[0].clone()
            })
            .collect(),
        step_count: 0,
    }
}

/// Complete task sending object `i` to `goal_cells[i]`.
pub fn complete_task(env: &Env, state: &EnvState, goal_cells: &[usize]) -> Task {
    let constraints = goal_cells
        .iter()
        .enumerate()
        .map(|(object, &cell)| Constraint {
            object,
            position: env.cell_center(cell),
        })
        .collect();
    env.task(state, constraints, Setting::Complete)
}

pub const RED: [f64; 3] = [1.0, 0.0, 0.0];
pub const GREEN: [f64; 3] = [0.0, 1.0, 0.0];
pub const BLUE: [f64; 3] = [0.0, 0.0, 1.0];
pub const YELLOW: [f64; 3] = [1.0, 1.0, 0.0];
