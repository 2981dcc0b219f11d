use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Variant};
use super::encode::Layout;

pub const EMBEDDING_INIT_RANGE: f64 = 0.05;

/// Fully connected layer; `weight[i * outputs + o]` connects input `i` to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-normal weights, zero biases.
    pub fn he_normal<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs.max(1) as f64).sqrt()).expect("finite std");
        let mut l = Self::zeros(inputs, outputs);
        for w in &mut l.weight {
            *w = normal.sample(rng);
        }
        l
    }

    /// `out = bias + x W`.
    pub fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.inputs);
        out.clear();
        out.extend_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weight[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    /// Adds `x ⊗ delta` to the weight gradient and `delta` to the bias gradient.
    pub fn accumulate(&mut self, x: &[f64], delta: &[f64]) {
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &mut self.weight[i * self.outputs..(i + 1) * self.outputs];
            for (g, d) in row.iter_mut().zip(delta) {
                *g += xi * d;
            }
        }
        for (g, d) in self.bias.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// `W delta`, the gradient with respect to the layer input.
    pub fn back(&self, delta: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            (0..self.inputs).map(|i| {
                let row = &self.weight[i * self.outputs..(i + 1) * self.outputs];
                row.iter().zip(delta).map(|(w, d)| w * d).sum::<f64>()
            }),
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// Row-major `rows x embedding_dim` table per sparse field.
    pub embeddings: Vec<Vec<f64>>,
    pub hidden: Vec<Linear>,
    pub output: Linear,
    pub wide: Vec<f64>,
    pub cluster_hidden: Option<Linear>,
    pub cluster_output: Option<Linear>,
}

impl ModelParameters {
    pub fn zeros(layout: &Layout, config: &ModelConfig) -> Self {
        let mut widths = vec![layout.input_width()];
        widths.extend(&config.hidden_sizes);
        let last = *widths.last().expect("nonempty");
        let mtl = config.variant == Variant::QcMtlrm;
        Self {
            embeddings: layout.table_rows.iter().map(|r| vec![0.0; r * layout.embedding_dim]).collect(),
            hidden: widths.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
            output: Linear::zeros(last, 1),
            wide: vec![0.0; layout.wide_size],
            cluster_hidden: mtl.then(|| Linear::zeros(last, config.cluster_head_hidden)),
            cluster_output: mtl.then(|| Linear::zeros(config.cluster_head_hidden, layout.num_clusters)),
        }
    }

    /// Embeddings uniform in ±0.05, dense layers He-normal, biases and wide
    /// weights zero. The cluster head is drawn last so the shared layers of a
    /// QC-MTLRM start identical to a DPRM with the same seed.
    pub fn init<R: Rng + ?Sized>(layout: &Layout, config: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(layout, config);
        let uniform = Uniform::new_inclusive(-EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE).expect("valid range");
        for table in &mut p.embeddings {
            for v in table.iter_mut() {
                *v = uniform.sample(rng);
            }
        }
        for l in &mut p.hidden {
            *l = Linear::he_normal(l.inputs, l.outputs, rng);
        }
        p.output = Linear::he_normal(p.output.inputs, 1, rng);
        if let Some(l) = &mut p.cluster_hidden {
            *l = Linear::he_normal(l.inputs, l.outputs, rng);
        }
        if let Some(l) = &mut p.cluster_output {
            *l = Linear::he_normal(l.inputs, l.outputs, rng);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, value: f64) {
        for g in self.groups_mut() {
            g.1.fill(value);
        }
    }

    /// Named flat views of every parameter group, in a fixed order.
    pub fn groups(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, t) in self.embeddings.iter().enumerate() {
            out.push((format!("embedding{i}"), t));
        }
        for (i, l) in self.hidden.iter().enumerate() {
            out.push((format!("hidden{i}.weight"), &l.weight));
            out.push((format!("hidden{i}.bias"), &l.bias));
        }
        out.push(("output.weight".into(), &self.output.weight));
        out.push(("output.bias".into(), &self.output.bias));
        if !self.wide.is_empty() {
            out.push(("wide".into(), &self.wide));
        }
        if let Some(l) = &self.cluster_hidden {
            out.push(("cluster_hidden.weight".into(), &l.weight));
            out.push(("cluster_hidden.bias".into(), &l.bias));
        }
        if let Some(l) = &self.cluster_output {
            out.push(("cluster_output.weight".into(), &l.weight));
            out.push(("cluster_output.bias".into(), &l.bias));
        }
        out
    }

    pub fn groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, t) in self.embeddings.iter_mut().enumerate() {
            out.push((format!("embedding{i}"), t));
        }
        for (i, l) in self.hidden.iter_mut().enumerate() {
            out.push((format!("hidden{i}.weight"), &mut l.weight));
            out.push((format!("hidden{i}.bias"), &mut l.bias));
        }
        out.push(("output.weight".into(), &mut self.output.weight));
        out.push(("output.bias".into(), &mut self.output.bias));
        if !self.wide.is_empty() {
            out.push(("wide".into(), &mut self.wide));
        }
        if let Some(l) = &mut self.cluster_hidden {
            out.push(("cluster_hidden.weight".into(), &mut l.weight));
            out.push(("cluster_hidden.bias".into(), &mut l.bias));
        }
        if let Some(l) = &mut self.cluster_output {
            out.push(("cluster_output.weight".into(), &mut l.weight));
            out.push(("cluster_output.bias".into(), &mut l.bias));
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }
}
