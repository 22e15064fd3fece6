use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear classifier `clf(z) = W z + b` over embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LinearHead {
    pub fn zeros(way: usize, dim: usize) -> Self {
        LinearHead {
            w: Array2::zeros((way, dim)),
            b: Array1::zeros(way),
        }
    }

    pub fn way(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn logits(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut l = z.dot(&self.w.t());
        l += &self.b;
        l
    }

    /// Row-wise argmax; ties go to the lowest index.
    pub fn predict(&self, z: ArrayView2<'_, f64>) -> Vec<usize> {
        argmax_rows(self.logits(z).view())
    }
}

pub fn argmax_rows(a: ArrayView2<'_, f64>) -> Vec<usize> {
    a.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (i, v) in r.iter().enumerate() {
                if *v > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Class means `p_i` of the support embeddings.
pub fn prototypes(z: ArrayView2<'_, f64>, y: &[usize], way: usize) -> Result<Array2<f64>> {
    if z.nrows() != y.len() {
        return Err(Error::Shape {
            expected: z.nrows(),
            got: y.len(),
        });
    }
    let mut p = Array2::zeros((way, z.ncols()));
    let mut n = vec![0usize; way];
    for (row, &c) in z.rows().into_iter().zip(y) {
        if c >= way {
            return Err(Error::InvalidArgument(format!("label {c} outside {way}-way head")));
        }
        let mut dst = p.row_mut(c);
        dst += &row;
        n[c] += 1;
    }
    for (c, &k) in n.iter().enumerate() {
        if k == 0 {
            return Err(Error::InvalidArgument(format!("class {c} has no support embeddings")));
        }
        p.row_mut(c).mapv_inplace(|v| v / k as f64);
    }
    Ok(p)
}

/// `w_i = 2 p_i`, `b_i = -|p_i|^2`, so `w_i . x + b_i = |x|^2 - |x - p_i|^2`.
pub fn proto_head_init(z: ArrayView2<'_, f64>, y: &[usize], way: usize) -> Result<LinearHead> {
    let p = prototypes(z, y, way)?;
    let b = p.map_axis(Axis(1), |r| -r.dot(&r));
    Ok(LinearHead { w: p * 2.0, b })
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_xent(logits: ArrayView2<'_, f64>, y: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows().max(1) as f64;
    let mut grad = logits.to_owned();
    let mut loss = 0.0;
    for ((mut row, raw), &c) in grad.rows_mut().into_iter().zip(logits.rows()).zip(y) {
        let m = raw.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z: f64 = row.sum();
        loss += m + z.ln() - raw[c];
        row.mapv_inplace(|v| v / z);
        row[c] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    (loss / n, grad)
}
