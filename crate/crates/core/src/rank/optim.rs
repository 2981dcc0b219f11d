use serde::{Deserialize, Serialize};

use super::config::OptimizerKind;
use super::params::ModelParameters;

pub const ADAGRAD_INITIAL_ACCUMULATOR: f64 = 0.1;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Per-parameter optimizer state, one buffer per parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ModelParameters) -> Self {
        let shape = |v: f64| params.groups().iter().map(|(_, g)| vec![v; g.len()]).collect();
        match kind {
            OptimizerKind::Adagrad => Self {
                kind,
                learning_rate,
                first: shape(ADAGRAD_INITIAL_ACCUMULATOR),
                second: Vec::new(),
                steps: 0,
            },
            OptimizerKind::Adam => Self {
                kind,
                learning_rate,
                first: shape(0.0),
                second: shape(0.0),
                steps: 0,
            },
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ModelParameters, grads: &ModelParameters) {
        self.steps += 1;
        let lr = self.learning_rate;
        let groups = params.groups_mut();
        let grad_groups = grads.groups();
        match self.kind {
            OptimizerKind::Adagrad => {
                for (((_, p), (_, g)), acc) in groups.into_iter().zip(grad_groups).zip(&mut self.first) {
                    for ((p, &g), a) in p.iter_mut().zip(g).zip(acc.iter_mut()) {
                        if g == 0.0 {
                            continue;
                        }
                        *a += g * g;
                        *p -= lr * g / a.sqrt();
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for ((((_, p), (_, g)), m), v) in groups
                    .into_iter()
                    .zip(grad_groups)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
                    }
                }
            }
        }
    }
}
