use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::teacher::affine;
use super::{glorot, rows_to_step_major, side_inputs, zeros_row, Batch, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentConfig {
    pub n_nodes: usize,
    pub history: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub layers: usize,
    pub embed_dim: usize,
    pub time_features: bool,
    pub steps_per_day: usize,
    /// Width of the teacher representation targeted by the projection.
    pub teacher_hidden: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            n_nodes: 200,
            history: 12,
            horizon: 3,
            hidden: 32,
            layers: 2,
            embed_dim: 8,
            time_features: true,
            steps_per_day: 288,
            teacher_hidden: 64,
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("n_nodes", self.n_nodes),
            ("history", self.history),
            ("horizon", self.horizon),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("steps_per_day", self.steps_per_day),
            ("teacher_hidden", self.teacher_hidden),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::Parameter(format!("student {name} must be positive")));
            }
        }
        Ok(())
    }

    fn input_width(&self) -> usize {
        self.history + self.embed_dim + if self.time_features { 2 } else { 0 }
    }
}

/// Per-node MLP over `[history ‖ embedding ‖ sin/cos time of day]`.
///
/// There is no adjacency anywhere in the signature: row `i` of the output
/// depends on node `i`'s history, embedding row and the time slot only.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentModel {
    config: StudentConfig,
    params: ParamSet,
}

#[derive(Clone, Debug)]
pub struct StudentOutput {
    /// `[B·n × horizon]`
    pub pred: Var,
    /// Penultimate representation `Z`, `[B·n × hidden]`.
    pub hidden: Var,
    /// `Z·P`, `[B·n × teacher_hidden]`, when requested.
    pub projected: Option<Var>,
}

impl StudentModel {
    pub fn new(config: StudentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        if config.embed_dim > 0 {
            params.push(
                "embedding",
                glorot(&mut rng, config.n_nodes, config.embed_dim),
            );
        }
        let mut width = config.input_width();
        for l in 1..=config.layers {
            params.push(format!("layer{l}.weight"), glorot(&mut rng, width, config.hidden));
            params.push(format!("layer{l}.bias"), zeros_row(config.hidden));
            width = config.hidden;
        }
        params.push("out.weight", glorot(&mut rng, width, config.horizon));
        params.push("out.bias", zeros_row(config.horizon));
        params.push(
            "projection",
            glorot(&mut rng, config.hidden, config.teacher_hidden),
        );
        Ok(StudentModel { config, params })
    }

    pub(crate) fn from_parts(config: StudentConfig, params: ParamSet) -> Result<Self> {
        let mut model = StudentModel::new(config, 0)?;
        model.params.load_values(&params)?;
        Ok(model)
    }

    pub fn config(&self) -> &StudentConfig {
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

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        project: bool,
    ) -> Result<StudentOutput> {
        let cfg = &self.config;
        if vars.len() != self.params.len() {
            return Err(Error::dim("student parameters", self.params.len(), vars.len()));
        }
        if batch.history() != cfg.history {
            return Err(Error::dim("student history", cfg.history, batch.history()));
        }
        if batch.n_nodes() != cfg.n_nodes {
            return Err(Error::dim("student nodes", cfg.n_nodes, batch.n_nodes()));
        }
        let m = batch.rows();
        let embedding = (cfg.embed_dim > 0).then(|| vars[0]);
        let mut v = embedding.is_some() as usize;
        let mut parts = vec![tape.constant(batch.history_rows.clone())];
        parts.extend(side_inputs(tape, embedding, batch, cfg.time_features, cfg.steps_per_day)?);
        let mut z = if parts.len() == 1 {
            parts[0]
        } else {
            tape.concat_cols(&parts)?
        };
        for _ in 0..cfg.layers {
            let y = affine(tape, z, vars[v], vars[v + 1], m)?;
            z = tape.relu(y);
            v += 2;
        }
        let pred = affine(tape, z, vars[v], vars[v + 1], m)?;
        let projected = if project {
            Some(tape.matmul(z, vars[v + 2])?)
        } else {
            None
        };
        Ok(StudentOutput {
            pred,
            hidden: z,
            projected,
        })
    }

    /// Node-major predictions `[n × horizon]` for one window; the projection
    /// is skipped.
    pub fn infer(&self, window: &Tensor, time_index: usize) -> Result<Vec<f64>> {
        let batch = Batch::from_window(window, self.config.horizon, time_index)?;
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &vars, &batch, false)?;
        Ok(tape.value(out.pred).to_vec())
    }

    /// Predictions `[horizon × n]` for one window at time slot `time_index`,
    /// along with `Z` and `Z·P`.
    pub fn predict(&self, window: &Tensor, time_index: usize) -> Result<(Tensor, Tensor, Tensor)> {
        let batch = Batch::from_window(window, self.config.horizon, time_index)?;
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &vars, &batch, true)?;
        let n = batch.n_nodes();
        let pred = rows_to_step_major(tape.value(out.pred), n, self.config.horizon);
        let projected = out.projected.expect("projection requested");
        Ok((
            Tensor::new(&[self.config.horizon, n], pred)?,
            tape.to_tensor(out.hidden),
            tape.to_tensor(projected),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn small() -> StudentConfig {
        StudentConfig {
            n_nodes: 5,
            history: 4,
            horizon: 2,
            hidden: 3,
            layers: 2,
            embed_dim: 2,
            time_features: true,
            steps_per_day: 24,
            teacher_hidden: 4,
        }
    }

    fn window(n: usize, t: usize) -> Tensor {
        let data = (0..n * t).map(|i| (i as f64 * 0.53).sin()).collect();
        Tensor::new(&[t, n, 1], data).unwrap()
    }

    #[test]
    fn hand_counted_parameters() {
        let cfg = StudentConfig {
            n_nodes: 1,
            history: 1,
            horizon: 1,
            hidden: 1,
            layers: 1,
            embed_dim: 0,
            time_features: false,
            steps_per_day: 288,
            teacher_hidden: 1,
        };
        // (1×1 + 1) hidden, (1×1 + 1) output, 1×1 projection
        assert_eq!(StudentModel::new(cfg, 0).unwrap().param_count(), 5);
    }

    #[test]
    fn shapes() {
        let m = StudentModel::new(small(), 0).unwrap();
        let (pred, z, pz) = m.predict(&window(5, 4), 7).unwrap();
        assert_eq!(pred.dims(), &[2, 5]);
        assert_eq!(z.dims(), &[5, 3]);
        assert_eq!(pz.dims(), &[5, 4]);
    }

    #[test]
    fn time_index_out_of_range() {
        let m = StudentModel::new(small(), 0).unwrap();
        assert!(matches!(
            m.predict(&window(5, 4), 24),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn zero_embedding_still_runs() {
        let m = StudentModel::new(StudentConfig { embed_dim: 0, ..small() }, 0).unwrap();
        assert!(m.params().get("embedding").is_none());
        let (pred, _, _) = m.predict(&window(5, 4), 3).unwrap();
        assert!(pred.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn permuting_nodes_and_embeddings_permutes_outputs() {
        let m = StudentModel::new(small(), 1).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let w = window(5, 4);
        let mut pw = w.clone();
        for t in 0..4 {
            for (i, &p) in perm.iter().enumerate() {
                pw.data_mut()[t * 5 + i] = w.data()[t * 5 + p];
            }
        }
        let mut pm = m.clone();
        let emb = m.params().get("embedding").unwrap().clone();
        for p in pm.params_mut().iter_mut().filter(|p| p.name == "embedding") {
            for (i, &src) in perm.iter().enumerate() {
                p.tensor.data_mut()[i * 2..i * 2 + 2].copy_from_slice(&emb.data()[src * 2..src * 2 + 2]);
            }
        }
        let (a, _, _) = m.predict(&w, 5).unwrap();
        let (b, _, _) = pm.predict(&pw, 5).unwrap();
        for k in 0..2 {
            for (i, &p) in perm.iter().enumerate() {
                assert_eq!(b.at(k, i).to_bits(), a.at(k, p).to_bits());
            }
        }
    }

    #[test]
    fn other_nodes_do_not_matter() {
        let m = StudentModel::new(small(), 2).unwrap();
        let w = window(5, 4);
        let (a, _, _) = m.predict(&w, 1).unwrap();
        let mut w2 = w.clone();
        for t in 0..4 {
            for i in 1..5 {
                w2.data_mut()[t * 5 + i] += 100.0 * (i + t) as f64;
            }
        }
        let (b, _, _) = m.predict(&w2, 1).unwrap();
        assert_eq!(a.at(0, 0).to_bits(), b.at(0, 0).to_bits());
        assert_eq!(a.at(1, 0).to_bits(), b.at(1, 0).to_bits());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = StudentModel::new(small(), 3).unwrap();
        let w = window(5, 4);
        let target: Vec<f64> = (0..10).map(|i| (i as f64).cos()).collect();
        let batch =
            Batch::from_step_major(5, 4, 2, &[w.data()], Some(&[&target]), vec![6]).unwrap();
        let h = Tensor::new(&[5, 4], (0..20).map(|i| (i as f64 * 0.1).sin()).collect()).unwrap();
        let err = grad_check(&m.params().tensors(), 1e-6, |tape, vars| {
            let out = m.forward(tape, vars, &batch, true)?;
            let y = tape.constant(batch.targets().unwrap().clone());
            let d = tape.sub(out.pred, y)?;
            let sq = tape.square(d);
            let pred_loss = tape.mean(sq);
            let hv = tape.constant(h.clone());
            let e = tape.sub(out.projected.unwrap(), hv)?;
            let e2 = tape.square(e);
            let feat = tape.mean(e2);
            tape.add(pred_loss, feat)
        })
        .unwrap();
        assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = StudentModel::new(small(), 8).unwrap();
        let b = StudentModel::new(small(), 8).unwrap();
        assert!(a.params().bitwise_eq(b.params()));
    }
}
