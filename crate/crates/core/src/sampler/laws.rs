//! The per-episode shot laws.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{ClassPool, SamplerConfig};
use crate::error::{Error, Result};
use crate::hierarchy::ConceptDag;

/// Guards `floor` against products like `(1/3) * 27 = 8.999...`.
const FLOOR_EPS: f64 = 1e-9;

fn unsampleable(node: &str, reason: impl Into<String>) -> Error {
    Error::Unsampleable {
        node: node.to_string(),
        reason: reason.into(),
    }
}

/// The whole span when it has at most `way_cap` leaves, else a uniform
/// `way_cap`-subset. Returned sorted.
pub fn sample_classes<R: Rng + ?Sized>(
    dag: &ConceptDag,
    node: &str,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<String>> {
    if !dag.contains(node) {
        return Err(Error::UnknownNode(node.to_string()));
    }
    let span = dag.span(node);
    if span.len() < cfg.min_span.max(2) {
        return Err(unsampleable(
            node,
            format!("span {} below minimum {}", span.len(), cfg.min_span),
        ));
    }
    let mut classes: Vec<String> = if span.len() > cfg.way_cap {
        span.choose_multiple(rng, cfg.way_cap).map(|s| s.to_string()).collect()
    } else {
        span.iter().map(|s| s.to_string()).collect()
    };
    classes.sort();
    Ok(classes)
}

fn sizes(pool: &ClassPool, classes: &[String]) -> Result<Vec<usize>> {
    classes
        .iter()
        .map(|c| {
            pool.size(c)
                .ok_or_else(|| unsampleable(c, "class has no samples in pool"))
        })
        .collect()
}

/// `k_q = min{cap, min_c floor(|S(c)| / 2)}`.
pub fn compute_query_shots(pool: &ClassPool, classes: &[String], cap: usize) -> Result<usize> {
    let s = sizes(pool, classes)?;
    let k_q = s.iter().map(|n| n / 2).min().unwrap_or(0).min(cap);
    if k_q == 0 {
        return Err(unsampleable(
            &classes.join(","),
            "some class has at most one sample, so k_q = 0",
        ));
    }
    Ok(k_q)
}

/// `|D_sup| = min{cap, sum_c ceil(beta * min{cap, |S(c)| - k_q})}`.
pub fn compute_support_size(pool: &ClassPool, classes: &[String], k_q: usize, beta: f64, cap: usize) -> Result<usize> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside (0, 1]")));
    }
    let mut total = 0usize;
    for (c, n) in classes.iter().zip(sizes(pool, classes)?) {
        if n <= k_q {
            return Err(unsampleable(c, "no samples left for support"));
        }
        total += (beta * (n - k_q).min(cap) as f64).ceil() as usize;
    }
    Ok(total.min(cap))
}

/// `R_c = softmax_c(alpha_c + log|S(c)|)`, computed with the max shift.
pub fn support_ratios(sizes: &[usize], alphas: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = sizes.iter().zip(alphas).map(|(&n, a)| a + (n as f64).ln()).collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `k_sup^c = min{floor(R_c * (d_sup - |C|)) + 1, available_c}`.
pub fn shots_from_ratios(ratios: &[f64], d_sup: usize, available: &[usize]) -> Vec<usize> {
    let spare = d_sup.saturating_sub(ratios.len()) as f64;
    ratios
        .iter()
        .zip(available)
        .map(|(r, &a)| (((r * spare) + FLOOR_EPS).floor() as usize + 1).min(a))
        .collect()
}

/// Draws `alpha_c` and returns `(shots, ratios)`, capped at `|S(c)| - k_q`.
pub fn compute_support_shots<R: Rng + ?Sized>(
    pool: &ClassPool,
    classes: &[String],
    k_q: usize,
    d_sup: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if d_sup < classes.len() {
        return Err(Error::InvalidArgument(format!(
            "support size {d_sup} smaller than way {}",
            classes.len()
        )));
    }
    let s = sizes(pool, classes)?;
    let alphas: Vec<f64> = (0..classes.len())
        .map(|_| rng.random_range(cfg.alpha_low..cfg.alpha_high))
        .collect();
    let ratios = support_ratios(&s, &alphas);
    let available: Vec<usize> = s.iter().map(|n| n.saturating_sub(k_q)).collect();
    Ok((shots_from_ratios(&ratios, d_sup, &available), ratios))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_dag, HypernymRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{BTreeMap, BTreeSet};

    fn pool_of(sizes: &[usize]) -> (ClassPool, Vec<String>) {
        let mut m = BTreeMap::new();
        let mut names = Vec::new();
        for (i, &n) in sizes.iter().enumerate() {
            let c = format!("C{i}");
            m.insert(c.clone(), (0..n).map(|j| format!("{c}_{j}")).collect());
            names.push(c);
        }
        (ClassPool::new(m).unwrap(), names)
    }

    #[test]
    fn query_shots() {
        let (p, c) = pool_of(&[30, 25, 8]);
        assert_eq!(compute_query_shots(&p, &c, 10).unwrap(), 4);
        let (p, c) = pool_of(&[100, 100]);
        assert_eq!(compute_query_shots(&p, &c, 10).unwrap(), 10);
        let (p, c) = pool_of(&[3, 21]);
        assert_eq!(compute_query_shots(&p, &c, 10).unwrap(), 1);
        let (p, c) = pool_of(&[1, 21]);
        assert!(matches!(
            compute_query_shots(&p, &c, 10),
            Err(Error::Unsampleable { .. })
        ));
    }

    #[test]
    fn support_size() {
        let (p, c) = pool_of(&[30, 25, 8]);
        assert_eq!(compute_support_size(&p, &c, 4, 0.5, 100).unwrap(), 26);
        let (p, c) = pool_of(&[200, 200, 200]);
        assert_eq!(compute_support_size(&p, &c, 10, 1.0, 100).unwrap(), 100);
        assert_eq!(compute_support_size(&p, &c, 10, 1e-12, 100).unwrap(), 3);
        assert!(compute_support_size(&p, &c, 10, 0.0, 100).is_err());
    }

    #[test]
    fn ratios_and_shots() {
        let r = support_ratios(&[10, 10, 10], &[0.0, 0.0, 0.0]);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(shots_from_ratios(&r, 30, &[100, 100, 100]), vec![10, 10, 10]);
        assert_eq!(shots_from_ratios(&r, 29, &[100, 100, 100]), vec![9, 9, 9]);
        let skewed = support_ratios(&[1000, 10], &[0.0, 0.0]);
        assert_eq!(shots_from_ratios(&skewed, 100, &[2, 100])[0], 2);
        // extreme logits stay finite
        let r = support_ratios(&[usize::MAX / 2, 1], &[700.0, -700.0]);
        assert!(r.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn class_sampling_respects_span() {
        let words: Vec<String> = (0..25).map(|i| format!("W{i:02}")).collect();
        let mut recs: Vec<HypernymRecord> = words
            .iter()
            .map(|w| HypernymRecord::new(w, "big.n.01", &["entity.n.01"]))
            .collect();
        for i in 0..7 {
            recs.push(HypernymRecord::new(&format!("S{i}"), "small.n.01", &["entity.n.01"]));
        }
        let all: BTreeSet<String> = recs.iter().map(|r| r.word.clone()).collect();
        let (dag, _) = build_dag(&recs, &all).unwrap();
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_classes(&dag, "small.n.01", &cfg, &mut rng).unwrap().len(), 7);
        let c = sample_classes(&dag, "big.n.01", &cfg, &mut rng).unwrap();
        assert_eq!(c.len(), 10);
        assert!(c.iter().all(|w| words.contains(w)));
        assert!(sample_classes(&dag, "W00", &cfg, &mut rng).is_err());
    }
}
