use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{glorot, rows_to_step_major, side_inputs, zeros_row, Batch, ParamSet};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::tensor::{Tape, Tensor, Var};

const HEAD_STREAM: u64 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub n_nodes: usize,
    pub history: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub kernel: usize,
    /// Width of the learned per-node embedding fed to the head; 0 disables it.
    pub embed_dim: usize,
    pub time_features: bool,
    pub steps_per_day: usize,
    pub head_hidden: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            n_nodes: 200,
            history: 12,
            horizon: 3,
            hidden: 64,
            blocks: 2,
            kernel: 3,
            embed_dim: 8,
            time_features: true,
            steps_per_day: 288,
            head_hidden: 64,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("n_nodes", self.n_nodes),
            ("history", self.history),
            ("horizon", self.horizon),
            ("hidden", self.hidden),
            ("kernel", self.kernel),
            ("steps_per_day", self.steps_per_day),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::Parameter(format!("teacher {name} must be positive")));
            }
        }
        Ok(())
    }

    /// Steps of block `l` (1-based) output that the head eventually reads.
    fn steps_out(&self, l: usize) -> usize {
        (1 + (self.blocks - l) * (self.kernel - 1)).min(self.history)
    }

    fn steps_in(&self, l: usize) -> usize {
        (self.steps_out(l) + self.kernel - 1).min(self.history)
    }

    fn head_width(&self) -> usize {
        let rep = if self.blocks == 0 { 0 } else { self.hidden };
        rep + self.history + self.embed_dim + if self.time_features { 2 } else { 0 }
    }
}

/// Stack of spatio-temporal blocks followed by a two-layer head.
///
/// Each block runs a causal gated temporal convolution
/// `tanh(conv_a) ⊙ σ(conv_b)` over the time axis, propagates the result with
/// the normalized adjacency, then applies a dense layer and a ReLU. The head
/// reads the last block's final-step representation next to the raw input
/// window, a learned node embedding and the time of day, so each node's own
/// level survives the smoothing. Only the time steps inside the head's
/// receptive field are computed.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherModel {
    config: TeacherConfig,
    params: ParamSet,
}

/// Result of a batched teacher forward pass (node-major rows).
#[derive(Clone, Debug)]
pub struct TeacherOutput {
    /// `[B·n × horizon]`
    pub pred: Var,
    /// Last-step representation of every block, each `[B·n × hidden]`.
    pub reps: Vec<Var>,
}

impl TeacherModel {
    pub fn new(config: TeacherConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::default();
        let (k, h) = (config.kernel, config.hidden);
        for l in 1..=config.blocks {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            let c_in = if l == 1 { 1 } else { h };
            params.push(format!("block{l}.conv_a.weight"), glorot(&mut rng, k * c_in, h));
            params.push(format!("block{l}.conv_a.bias"), zeros_row(h));
            params.push(format!("block{l}.conv_b.weight"), glorot(&mut rng, k * c_in, h));
            params.push(format!("block{l}.conv_b.bias"), zeros_row(h));
            params.push(format!("block{l}.graph.weight"), glorot(&mut rng, h, h));
            params.push(format!("block{l}.graph.bias"), zeros_row(h));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(HEAD_STREAM);
        if config.embed_dim > 0 {
            params.push("embedding", glorot(&mut rng, config.n_nodes, config.embed_dim));
        }
        let hh = config.head_hidden;
        params.push("head.hidden.weight", glorot(&mut rng, config.head_width(), hh));
        params.push("head.hidden.bias", zeros_row(hh));
        params.push("head.out.weight", glorot(&mut rng, hh, config.horizon));
        params.push("head.out.bias", zeros_row(config.horizon));
        Ok(TeacherModel { config, params })
    }

    pub(crate) fn from_parts(config: TeacherConfig, params: ParamSet) -> Result<Self> {
        let mut model = TeacherModel::new(config, 0)?;
        model.params.load_values(&params)?;
        Ok(model)
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Forward pass with parameters bound as `vars` (see [`ParamSet::bind`]).
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        adj: &NormalizedAdjacency,
    ) -> Result<TeacherOutput> {
        self.forward_with(tape, vars, batch, Some(adj))
    }

    /// Same network with message passing removed.
    pub fn forward_without_graph(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
    ) -> Result<TeacherOutput> {
        self.forward_with(tape, vars, batch, None)
    }

    fn forward_with(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        adj: Option<&NormalizedAdjacency>,
    ) -> Result<TeacherOutput> {
        let cfg = &self.config;
        if vars.len() != self.params.len() {
            return Err(Error::dim("teacher parameters", self.params.len(), vars.len()));
        }
        if batch.history() != cfg.history {
            return Err(Error::dim("teacher history", cfg.history, batch.history()));
        }
        if let Some(a) = adj {
            if a.n() != batch.n_nodes() {
                return Err(Error::dim(
                    "teacher adjacency",
                    format!("{0}×{0}", a.n()),
                    format!("{} nodes", batch.n_nodes()),
                ));
            }
        }
        let m = batch.rows();
        let mut reps = Vec::with_capacity(cfg.blocks);
        let mut head_parts = Vec::with_capacity(4);
        if cfg.blocks > 0 {
            let len0 = cfg.steps_in(1);
            let skip = (cfg.history - len0) * m;
            let seq = Tensor::new(&[len0 * m, 1], batch.sequence.data()[skip..].to_vec())?;
            let mut h = tape.constant(seq);
            let mut len_in = len0;
            for l in 1..=cfg.blocks {
                let p = &vars[(l - 1) * 6..l * 6];
                let len_out = cfg.steps_out(l);
                let taps = (0..cfg.kernel)
                    .rev()
                    .map(|j| tape.shift_rows(h, j * m))
                    .collect::<Result<Vec<_>>>()?;
                let cat = tape.concat_cols(&taps)?;
                let cat = tape.slice_rows(cat, (len_in - len_out) * m, len_out * m)?;
                let a = affine(tape, cat, p[0], p[1], len_out * m)?;
                let b = affine(tape, cat, p[2], p[3], len_out * m)?;
                let (a, b) = (tape.tanh(a), tape.sigmoid(b));
                let gate = tape.mul(a, b)?;
                let mixed = match adj {
                    Some(adj) => adj.spmm(tape, gate)?,
                    None => gate,
                };
                let y = affine(tape, mixed, p[4], p[5], len_out * m)?;
                h = tape.relu(y);
                reps.push(tape.slice_rows(h, (len_out - 1) * m, m)?);
                len_in = len_out;
            }
            head_parts.push(*reps.last().expect("at least one block"));
        }
        head_parts.push(tape.constant(batch.history_rows.clone()));
        let mut v = cfg.blocks * 6;
        let embedding = (cfg.embed_dim > 0).then(|| vars[v]);
        v += embedding.is_some() as usize;
        head_parts.extend(side_inputs(tape, embedding, batch, cfg.time_features, cfg.steps_per_day)?);
        let head_input = tape.concat_cols(&head_parts)?;
        let hidden = affine(tape, head_input, vars[v], vars[v + 1], m)?;
        let hidden = tape.relu(hidden);
        let pred = affine(tape, hidden, vars[v + 2], vars[v + 3], m)?;
        Ok(TeacherOutput { pred, reps })
    }

    /// Node-major predictions `[n × horizon]` for one window, without
    /// materializing representations.
    pub fn infer(
        &self,
        adj: &NormalizedAdjacency,
        window: &Tensor,
        time_index: usize,
    ) -> Result<Vec<f64>> {
        let batch = Batch::from_window(window, self.config.horizon, time_index)?;
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &vars, &batch, adj)?;
        Ok(tape.value(out.pred).to_vec())
    }

    /// Predictions `[horizon × n]` and per-block representations `[n × hidden]`
    /// for one `[history × n × 1]` window.
    pub fn predict(
        &self,
        adj: &NormalizedAdjacency,
        window: &Tensor,
        time_index: usize,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let batch = Batch::from_window(window, self.config.horizon, time_index)?;
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &vars, &batch, adj)?;
        let n = batch.n_nodes();
        let pred = rows_to_step_major(tape.value(out.pred), n, self.config.horizon);
        let reps = out.reps.iter().map(|&r| tape.to_tensor(r)).collect();
        Ok((Tensor::new(&[self.config.horizon, n], pred)?, reps))
    }
}

/// `x·W + b` with `b` tiled over `rows`.
pub(crate) fn affine(tape: &mut Tape, x: Var, w: Var, b: Var, rows: usize) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    let bias = tape.tile_rows(b, rows)?;
    tape.add(xw, bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::tensor::grad_check;

    fn small() -> TeacherConfig {
        TeacherConfig {
            n_nodes: 6,
            history: 4,
            horizon: 2,
            hidden: 3,
            blocks: 2,
            kernel: 3,
            embed_dim: 2,
            time_features: true,
            steps_per_day: 24,
            head_hidden: 4,
        }
    }

    fn window(n: usize, t: usize, seed: u64) -> Tensor {
        let data = (0..n * t)
            .map(|i| ((i as f64 + seed as f64) * 0.37).sin())
            .collect();
        Tensor::new(&[t, n, 1], data).unwrap()
    }

    #[test]
    fn output_shapes() {
        let m = TeacherModel::new(small(), 1).unwrap();
        let adj = Graph::ring(6).symmetric_normalize();
        let (pred, reps) = m.predict(&adj, &window(6, 4, 0), 5).unwrap();
        assert_eq!(pred.dims(), &[2, 6]);
        assert_eq!(reps.len(), 2);
        assert!(reps.iter().all(|r| r.dims() == [6, 3]));
    }

    #[test]
    fn zero_parameters_emit_bias() {
        let mut m = TeacherModel::new(small(), 1).unwrap();
        for p in m.params_mut().iter_mut() {
            let bias = p.name == "head.out.bias";
            for (k, v) in p.tensor.data_mut().iter_mut().enumerate() {
                *v = if bias { 0.5 + k as f64 } else { 0.0 };
            }
        }
        let adj = Graph::ring(6).symmetric_normalize();
        let (pred, _) = m.predict(&adj, &window(6, 4, 3), 5).unwrap();
        for i in 0..6 {
            assert_eq!(pred.at(0, i), 0.5);
            assert_eq!(pred.at(1, i), 1.5);
        }
    }

    #[test]
    fn wrong_adjacency_size() {
        let m = TeacherModel::new(small(), 1).unwrap();
        let adj = Graph::ring(5).symmetric_normalize();
        assert!(matches!(
            m.predict(&adj, &window(6, 4, 0), 5),
            Err(Error::Dimension { .. })
        ));
        let m = TeacherModel::new(small(), 1).unwrap();
        let adj = Graph::ring(6).symmetric_normalize();
        assert!(m.predict(&adj, &window(6, 5, 0), 5).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = TeacherModel::new(small(), 4).unwrap();
        let adj = Graph::erdos_renyi_geometric(6, 0.6, 2).unwrap().symmetric_normalize();
        let inputs = [window(6, 4, 1), window(6, 4, 9)];
        let targets: Vec<Vec<f64>> = (0..2)
            .map(|s| (0..12).map(|i| (i as f64 * 0.21 + s as f64).cos()).collect())
            .collect();
        let batch = Batch::from_step_major(
            6,
            4,
            2,
            &[inputs[0].data(), inputs[1].data()],
            Some(&[&targets[0], &targets[1]]),
            vec![3, 17],
        )
        .unwrap();
        let err = grad_check(&m.params().tensors(), 1e-5, |tape, vars| {
            let out = m.forward(tape, vars, &batch, &adj)?;
            let y = tape.constant(batch.targets().unwrap().clone());
            let d = tape.sub(out.pred, y)?;
            let sq = tape.square(d);
            Ok(tape.mean(sq))
        })
        .unwrap();
        assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn identity_adjacency_removes_graph() {
        let m = TeacherModel::new(small(), 2).unwrap();
        let w = window(6, 4, 5);
        let batch = Batch::from_window(&w, 2, 0).unwrap();
        let mut tape = Tape::new();
        let vars = m.params().bind_frozen(&mut tape);
        let a = m
            .forward(&mut tape, &vars, &batch, &NormalizedAdjacency::identity(6))
            .unwrap();
        let b = m.forward_without_graph(&mut tape, &vars, &batch).unwrap();
        for (x, y) in tape.value(a.pred).iter().zip(tape.value(b.pred)) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn representations_ignore_steps_outside_receptive_field() {
        // The last-step representation of L blocks with kernel K only sees the
        // final 1 + L(K−1) readings.
        let cfg = TeacherConfig { history: 8, ..small() };
        let m = TeacherModel::new(cfg, 3).unwrap();
        let adj = Graph::ring(6).symmetric_normalize();
        let mut w = window(6, 8, 2);
        let (_, r1) = m.predict(&adj, &w, 5).unwrap();
        for v in &mut w.data_mut()[..6 * 3] {
            *v += 10.0;
        }
        let (_, r2) = m.predict(&adj, &w, 5).unwrap();
        assert_eq!(r1, r2);
        for v in &mut w.data_mut()[6 * 3..6 * 4] {
            *v += 1.0;
        }
        let (_, r3) = m.predict(&adj, &w, 5).unwrap();
        assert_ne!(r1[1], r3[1]);
    }

    #[test]
    fn depth_zero_has_only_the_head() {
        let cfg = TeacherConfig { blocks: 0, ..small() };
        let m = TeacherModel::new(cfg, 1).unwrap();
        assert_eq!(m.param_count(), 6 * 2 + (4 + 2 + 2) * 4 + 4 + 4 * 2 + 2);
        let adj = Graph::ring(6).symmetric_normalize();
        let (pred, reps) = m.predict(&adj, &window(6, 4, 0), 5).unwrap();
        assert_eq!(pred.dims(), &[2, 6]);
        assert!(reps.is_empty());
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = TeacherModel::new(small(), 11).unwrap();
        let b = TeacherModel::new(small(), 11).unwrap();
        let c = TeacherModel::new(small(), 12).unwrap();
        assert!(a.params().bitwise_eq(b.params()));
        assert!(!a.params().bitwise_eq(c.params()));
    }

    #[test]
    fn shallow_blocks_are_shared_across_depths() {
        let deep = TeacherModel::new(TeacherConfig { blocks: 4, ..small() }, 5).unwrap();
        let shallow = TeacherModel::new(small(), 5).unwrap();
        for p in shallow.params().iter().filter(|p| p.name.starts_with("block")) {
            assert_eq!(Some(&p.tensor), deep.params().get(&p.name));
        }
    }

    #[test]
    fn glorot_bound_respected() {
        let m = TeacherModel::new(small(), 9).unwrap();
        let w = m.params().get("block2.conv_a.weight").unwrap();
        let bound = (6.0f64 / (9.0 + 3.0)).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        assert!(w.data().iter().any(|v| v.abs() > bound * 0.5));
    }

    #[test]
    fn default_param_count() {
        let m = TeacherModel::new(TeacherConfig::default(), 0).unwrap();
        let h = 64;
        let block1 = 2 * (3 * h + h) + h * h + h;
        let block2 = 2 * (3 * h * h + h) + h * h + h;
        let head = 200 * 8 + (h + 12 + 8 + 2) * h + h + h * 3 + 3;
        assert_eq!(m.param_count(), block1 + block2 + head);
    }
}
