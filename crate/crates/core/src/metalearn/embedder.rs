//! Embedding functions `f(x, theta)` with hand-written backward passes.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// (w1, b1, w2, b2) views into the flat parameter vector.
type MlpLayers<'a> = (
    ArrayView2<'a, f64>,
    ArrayView1<'a, f64>,
    ArrayView2<'a, f64>,
    ArrayView1<'a, f64>,
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EmbedderKind {
    /// flatten -> hidden (ReLU, dropout) -> embed
    Mlp {
        input_dim: usize,
        hidden_dim: usize,
        embed_dim: usize,
    },
    /// Frozen features used as they are; `theta` is empty.
    Identity { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderParams {
    pub kind: EmbedderKind,
    pub theta: Vec<f64>,
    pub dropout: f64,
}

pub(crate) struct Forward {
    pub z: Array2<f64>,
    /// hidden activations after ReLU and dropout
    h: Option<Array2<f64>>,
    /// d h / d pre-activation: ReLU gate times dropout scale
    gate: Option<Array2<f64>>,
}

impl EmbedderParams {
    /// Reference MLP with `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation.
    pub fn mlp(input_dim: usize, embed_dim: usize, dropout: f64, seed: u64) -> Result<Self> {
        let kind = EmbedderKind::Mlp {
            input_dim,
            hidden_dim: embed_dim,
            embed_dim,
        };
        let mut p = Self::zeros(kind, dropout)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l1, l2) = (1.0 / (input_dim as f64).sqrt(), 1.0 / (embed_dim as f64).sqrt());
        let n1 = embed_dim * input_dim + embed_dim;
        for (i, v) in p.theta.iter_mut().enumerate() {
            let lim = if i < n1 { l1 } else { l2 };
            *v = rng.random_range(-lim..lim);
        }
        Ok(p)
    }

    pub fn zeros(kind: EmbedderKind, dropout: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("dropout {dropout} outside [0, 1)")));
        }
        let n = match kind {
            EmbedderKind::Mlp {
                input_dim,
                hidden_dim,
                embed_dim,
            } => {
                if input_dim == 0 || hidden_dim == 0 || embed_dim == 0 {
                    return Err(Error::InvalidArgument("MLP dimensions must be positive".into()));
                }
                hidden_dim * input_dim + hidden_dim + embed_dim * hidden_dim + embed_dim
            }
            EmbedderKind::Identity { dim } => {
                if dim == 0 {
                    return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
                }
                0
            }
        };
        Ok(EmbedderParams {
            kind,
            theta: vec![0.0; n],
            dropout,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::zeros(EmbedderKind::Identity { dim }, 0.0)
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            EmbedderKind::Mlp { input_dim, .. } => input_dim,
            EmbedderKind::Identity { dim } => dim,
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self.kind {
            EmbedderKind::Mlp { embed_dim, .. } => embed_dim,
            EmbedderKind::Identity { dim } => dim,
        }
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    fn layers(&self) -> Option<MlpLayers<'_>> {
        let EmbedderKind::Mlp {
            input_dim: i,
            hidden_dim: h,
            embed_dim: d,
        } = self.kind
        else {
            return None;
        };
        let t = &self.theta;
        let (a, b, c) = (h * i, h * i + h, h * i + h + d * h);
        Some((
            ArrayView2::from_shape((h, i), &t[..a]).ok()?,
            ArrayView1::from(&t[a..b]),
            ArrayView2::from_shape((d, h), &t[b..c]).ok()?,
            ArrayView1::from(&t[c..]),
        ))
    }

    /// Eval-mode embeddings of a batch (rows are samples).
    pub fn embed_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, None)?.z)
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.embed_batch(view)?.row(0).to_vec())
    }

    /// Forward pass; `dropout` carries the mask RNG in training mode.
    pub(crate) fn forward(&self, x: ArrayView2<'_, f64>, dropout: Option<&mut ChaCha8Rng>) -> Result<Forward> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let Some((w1, b1, w2, b2)) = self.layers() else {
            return Ok(Forward {
                z: x.to_owned(),
                h: None,
                gate: None,
            });
        };
        let mut pre = x.dot(&w1.t());
        pre += &b1;
        let keep = 1.0 - self.dropout;
        let mut gate = pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        if let Some(rng) = dropout.filter(|_| self.dropout > 0.0) {
            gate.mapv_inplace(|g| if rng.random::<f64>() < keep { g / keep } else { 0.0 });
        }
        let h = &pre * &gate;
        let mut z = h.dot(&w2.t());
        z += &b2;
        Ok(Forward {
            z,
            h: Some(h),
            gate: Some(gate),
        })
    }

    /// d loss / d theta given d loss / d z.
    pub(crate) fn backward(&self, fwd: &Forward, x: ArrayView2<'_, f64>, dz: ArrayView2<'_, f64>) -> Vec<f64> {
        let (Some((_, _, w2, _)), Some(h), Some(gate)) = (self.layers(), &fwd.h, &fwd.gate) else {
            return Vec::new();
        };
        let dw2 = dz.t().dot(h);
        let db2 = dz.sum_axis(Axis(0));
        let da = dz.dot(&w2) * gate;
        let dw1 = da.t().dot(&x);
        let db1 = da.sum_axis(Axis(0));
        let mut g = Vec::with_capacity(self.theta.len());
        g.extend(dw1.iter());
        g.extend(db1.iter());
        g.extend(dw2.iter());
        g.extend(db2.iter());
        g
    }
}

/// Rows of `data` selected by `idx`.
pub(crate) fn gather(data: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), data.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&data.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mlp_gives_zero() {
        let p = EmbedderParams::zeros(
            EmbedderKind::Mlp {
                input_dim: 4,
                hidden_dim: 3,
                embed_dim: 2,
            },
            0.05,
        )
        .unwrap();
        assert_eq!(p.n_params(), 3 * 4 + 3 + 2 * 3 + 2);
        assert_eq!(p.embed(&[0.0; 4]).unwrap(), vec![0.0, 0.0]);
        assert!(p.embed(&[0.0; 3]).is_err());
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let p = EmbedderParams::mlp(6, 5, 0.5, 3).unwrap();
        let x = [0.1, -0.2, 0.3, 0.4, -0.5, 0.6];
        assert_eq!(p.embed(&x).unwrap(), p.embed(&x).unwrap());
        let id = EmbedderParams::identity(6).unwrap();
        assert_eq!(id.embed(&x).unwrap(), x.to_vec());
    }
}
