use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distill::mad_metric;
use crate::error::{Error, Result};
use crate::graph::{csv_error, Graph};
use crate::models::{TeacherConfig, TeacherModel};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMad {
    pub depth: usize,
    pub mad: f64,
    /// Zero rows left out of the MAD pairs.
    pub excluded: usize,
}

/// MAD of the final-block representations of untrained teachers of each
/// depth, all fed the same `[history × n × 1]` window.
///
/// Block `ℓ` is initialized from its own random stream, so a deeper network
/// extends a shallower one instead of redrawing it. Depth 0 reports the MAD
/// of the raw input rows.
pub fn oversmoothing_study(
    depths: &[usize],
    graph: &Graph,
    seed: u64,
    window: &Tensor,
    hidden: usize,
) -> Result<Vec<DepthMad>> {
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(format!(
            "depths must be strictly ascending, got {depths:?}"
        )));
    }
    let dims = window.dims();
    if !matches!(dims, [_, _] | [_, _, 1]) || dims[1] != graph.n_nodes() {
        return Err(Error::dim(
            "oversmoothing window",
            window.shape(),
            format!("[history × {}]", graph.n_nodes()),
        ));
    }
    let (history, n) = (dims[0], dims[1]);
    let adj = graph.symmetric_normalize();
    let mut out = Vec::with_capacity(depths.len());
    for &depth in depths {
        let reps = if depth == 0 {
            let mut rows = vec![0.0; n * history];
            for t in 0..history {
                for i in 0..n {
                    rows[i * history + t] = window.data()[t * n + i];
                }
            }
            Tensor::new(&[n, history], rows)?
        } else {
            let cfg = TeacherConfig {
                n_nodes: n,
                history,
                horizon: 1,
                hidden,
                blocks: depth,
                kernel: 3,
                ..TeacherConfig::default()
            };
            let teacher = TeacherModel::new(cfg, seed)?;
            let (_, reps) = teacher.predict(&adj, window, 0)?;
            reps.into_iter().last().expect("depth ≥ 1")
        };
        let mad = mad_metric(&reps)?;
        out.push(DepthMad {
            depth,
            mad: mad.value,
            excluded: mad.excluded,
        });
    }
    Ok(out)
}

/// Two-column `depth,mad` CSV.
pub fn write_depth_csv(rows: &[DepthMad], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let io = |e| csv_error(path, e);
    w.write_record(["depth", "mad"]).map_err(io)?;
    for r in rows {
        w.write_record([r.depth.to_string(), r.mad.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
