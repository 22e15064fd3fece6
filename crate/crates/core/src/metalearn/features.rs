use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::preprocess::heeg::KeyedTensor;
use crate::sampler::{ClassPool, Episode};

/// Flattened inputs (windows or frozen external embeddings) by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    index: HashMap<String, usize>,
    data: Array2<f64>,
}

impl FeatureStore {
    pub fn new(keys: Vec<String>, data: Array2<f64>) -> Result<Self> {
        if keys.len() != data.nrows() {
            return Err(Error::Shape {
                expected: data.nrows(),
                got: keys.len(),
            });
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.into_iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate feature key `{k}`")));
            }
        }
        Ok(FeatureStore { index, data })
    }

    pub fn from_keyed(kt: &KeyedTensor) -> Result<Self> {
        Self::new(kt.keys.clone(), kt.tensor.data.mapv(f64::from))
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn get(&self, id: &str) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.index.get(id).map(|&i| self.data.row(i))
    }

    pub fn rows<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<Array2<f64>> {
        let ids: Vec<&str> = ids.into_iter().collect();
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for (r, id) in ids.iter().enumerate() {
            let i = self
                .index
                .get(*id)
                .ok_or_else(|| Error::InvalidArgument(format!("no features for sample `{id}`")))?;
            out.row_mut(r).assign(&self.data.row(*i));
        }
        Ok(out)
    }

    /// Inputs and integer labels for a whole pool (labels follow pool class order).
    pub fn pool_data(&self, pool: &ClassPool) -> Result<(Array2<f64>, Vec<usize>, Vec<String>)> {
        let classes: Vec<String> = pool.classes().map(String::from).collect();
        let mut ids = Vec::new();
        let mut y = Vec::new();
        for (c, (_, samples)) in pool.iter().enumerate() {
            for s in samples {
                ids.push(s.as_str());
                y.push(c);
            }
        }
        Ok((self.rows(ids)?, y, classes))
    }

    pub fn episode_data(&self, ep: &Episode) -> Result<EpisodeData> {
        let labels = |rows: &[(String, String)]| -> Result<Vec<usize>> {
            rows.iter()
                .map(|(_, c)| {
                    ep.class_index(c)
                        .ok_or_else(|| Error::InvalidArgument(format!("class `{c}` not in episode")))
                })
                .collect()
        };
        Ok(EpisodeData {
            way: ep.way(),
            xs: self.rows(ep.support.iter().map(|(id, _)| id.as_str()))?,
            ys: labels(&ep.support)?,
            xq: self.rows(ep.query.iter().map(|(id, _)| id.as_str()))?,
            yq: labels(&ep.query)?,
        })
    }
}

/// Dense support and query tensors of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeData {
    pub way: usize,
    pub xs: Array2<f64>,
    pub ys: Vec<usize>,
    pub xq: Array2<f64>,
    pub yq: Vec<usize>,
}
