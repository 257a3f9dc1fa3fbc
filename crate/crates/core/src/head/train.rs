//! Mini-batch gradient descent on softmax cross-entropy, plus a
//! finite-difference gradient check.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, HeadModel, Variant, UNIT_NORM_TOLERANCE};
use crate::embedding::{norm, Gallery};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 32,
            l2: 0.0,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidArgument(format!("l2 must be non-negative, got {}", self.l2)));
        }
        Ok(())
    }
}

/// One labeled input.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f32],
    pub class: usize,
}

/// Gradient of the mean batch loss. For prior-free heads the centroid part is
/// the component tangent to each row's unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub centroids: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

/// Mean cross-entropy over prepared inputs plus `l2/2 * |W|^2`, and its
/// gradient.
fn loss_and_gradient_prepared(m: &HeadModel, batch: &[(Vec<f64>, usize)], l2: f64) -> (f64, Gradient) {
    let c = m.class_count();
    let d = m.dimension();
    let inv = 1.0 / batch.len() as f64;
    let mut gw = vec![0.0; c * d];
    let mut gb = m.bias().map(|_| vec![0.0; c]);
    let mut loss = 0.0;
    for (x, y) in batch {
        let p = softmax(&m.logits_prepared(x));
        loss -= p[*y].ln() * inv;
        for k in 0..c {
            let coef = (p[k] - if k == *y { 1.0 } else { 0.0 }) * inv;
            if coef == 0.0 {
                continue;
            }
            for (g, xv) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                *g += coef * xv;
            }
            if let Some(gb) = gb.as_mut() {
                gb[k] += coef;
            }
        }
    }
    match m.variant() {
        Variant::Biased => {
            if l2 > 0.0 {
                loss += 0.5 * l2 * m.centroids().iter().map(|w| w * w).sum::<f64>();
                gw.iter_mut().zip(m.centroids()).for_each(|(g, w)| *g += l2 * w);
            }
        }
        Variant::PriorFree => {
            // |W|^2 is constant on the sphere, so l2 has no effect here.
            for (g, w) in gw.chunks_mut(d).zip(m.rows()) {
                let radial: f64 = g.iter().zip(w).map(|(a, b)| a * b).sum();
                g.iter_mut().zip(w).for_each(|(a, b)| *a -= radial * b);
            }
        }
    }
    (loss, Gradient { centroids: gw, bias: gb })
}

fn prepare_batch(m: &HeadModel, batch: &[Sample<'_>]) -> Result<Vec<(Vec<f64>, usize)>> {
    batch
        .iter()
        .map(|s| {
            if s.class >= m.class_count() {
                return Err(Error::InvalidArgument(format!(
                    "class index {} out of range for {} classes",
                    s.class,
                    m.class_count()
                )));
            }
            Ok((m.prepare_input(s.x)?, s.class))
        })
        .collect()
}

pub fn loss_and_gradient(m: &HeadModel, batch: &[Sample<'_>], l2: f64) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let prepared = prepare_batch(m, batch)?;
    Ok(loss_and_gradient_prepared(m, &prepared, l2))
}

/// Loss as a function of raw parameters. Prior-free rows are normalized
/// inside, so the finite differences see the sphere constraint.
fn loss_at(m: &HeadModel, centroids: &[f64], bias: Option<&[f64]>, batch: &[(Vec<f64>, usize)], l2: f64) -> f64 {
    let d = m.dimension();
    let rows: Vec<Vec<f64>> = centroids
        .chunks(d)
        .map(|r| match m.variant() {
            Variant::Biased => r.to_vec(),
            Variant::PriorFree => {
                let n = norm(r);
                r.iter().map(|v| v / n).collect()
            }
        })
        .collect();
    let mut loss = 0.0;
    for (x, y) in batch {
        let z: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(k, r)| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias.map_or(0.0, |b| b[k]))
            .collect();
        loss -= softmax(&z)[*y].ln();
    }
    loss /= batch.len() as f64;
    if m.variant() == Variant::Biased {
        loss += 0.5 * l2 * centroids.iter().map(|w| w * w).sum::<f64>();
    }
    loss
}

/// Floor on the denominator of the relative error, so entries whose true
/// gradient is zero compare on an absolute scale.
const REL_ERROR_FLOOR: f64 = 1e-6;

/// Maximum relative error between the analytic gradient and central finite
/// differences with step `1e-5 * max(1, |w|)`.
pub fn gradient_check(m: &HeadModel, batch: &[Sample<'_>], l2: f64) -> Result<f64> {
    let (_, grad) = loss_and_gradient(m, batch, l2)?;
    let prepared = prepare_batch(m, batch)?;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR);
    let mut worst: f64 = 0.0;

    let mut w = m.centroids().to_vec();
    for i in 0..w.len() {
        let orig = w[i];
        let h = 1e-5 * orig.abs().max(1.0);
        w[i] = orig + h;
        let up = loss_at(m, &w, m.bias(), &prepared, l2);
        w[i] = orig - h;
        let down = loss_at(m, &w, m.bias(), &prepared, l2);
        w[i] = orig;
        worst = worst.max(rel(grad.centroids[i], (up - down) / (2.0 * h)));
    }
    if let (Some(b), Some(gb)) = (m.bias(), grad.bias.as_ref()) {
        let mut b = b.to_vec();
        for i in 0..b.len() {
            let orig = b[i];
            let h = 1e-5 * orig.abs().max(1.0);
            b[i] = orig + h;
            let up = loss_at(m, &w, Some(&b), &prepared, l2);
            b[i] = orig - h;
            let down = loss_at(m, &w, Some(&b), &prepared, l2);
            b[i] = orig;
            worst = worst.max(rel(gb[i], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

/// Trains a head on the gallery's `make/model` labels.
///
/// Without `init` the class list is the sorted set of gallery labels and rows
/// start from a seeded random draw. With `init` its labels and rows are the
/// starting point (see `reinit_classification_layer` for switching label
/// sets). Every head class needs at least one sample.
pub fn train_head(
    gallery: &Gallery,
    variant: Variant,
    cfg: &TrainConfig,
    init: Option<&HeadModel>,
) -> Result<HeadModel> {
    cfg.validate()?;
    let mut model = match init {
        Some(m) => {
            if m.variant() != variant {
                return Err(Error::InvalidArgument(format!(
                    "initial head is {}, requested {variant}",
                    m.variant()
                )));
            }
            if m.dimension() != gallery.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: m.dimension(),
                    actual: gallery.dimension(),
                    record: None,
                });
            }
            let mut m = m.clone();
            if variant == Variant::PriorFree {
                m.normalize_rows()?;
            }
            m
        }
        None => {
            let labels: BTreeSet<String> = gallery.records().iter().map(|r| r.class_label()).collect();
            if labels.len() < 2 {
                return Err(Error::SingleClass(labels.len()));
            }
            HeadModel::random(labels.into_iter().collect(), gallery.dimension(), variant, cfg.seed)?
        }
    };
    if model.class_count() < 2 {
        return Err(Error::SingleClass(model.class_count()));
    }

    let mut counts = vec![0usize; model.class_count()];
    let mut data = Vec::with_capacity(gallery.len());
    for r in gallery.records() {
        let label = r.class_label();
        let class = model.class_index(&label).ok_or_else(|| {
            Error::InvalidArgument(format!("record {:?} has class {label:?} unknown to the head", r.id))
        })?;
        counts[class] += 1;
        let x = model.prepare_input(&r.vector).map_err(|e| e.for_record(&r.id))?;
        data.push((x, class));
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(model.labels()[k].clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (_, g) = loss_and_gradient_prepared(&model, &batch, cfg.l2);
            let lr = cfg.learning_rate;
            model
                .centroids_mut()
                .iter_mut()
                .zip(&g.centroids)
                .for_each(|(w, g)| *w -= lr * g);
            if let (Some(b), Some(gb)) = (model.bias_mut(), g.bias.as_ref()) {
                b.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g);
            }
            if variant == Variant::PriorFree {
                model.normalize_rows()?;
            }
        }
        if variant == Variant::PriorFree {
            for (k, row) in model.rows().enumerate() {
                let n = norm(row);
                assert!(
                    (n - 1.0).abs() <= UNIT_NORM_TOLERANCE,
                    "epoch {epoch}: centroid {k} drifted to norm {n}"
                );
            }
        }
        log::debug!("epoch {epoch} done");
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingRecord;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_gallery(seed: u64, n: usize, d: usize, sep: f32) -> Gallery {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs = (0..n)
            .map(|i| {
                let class = i % 2;
                let mut v: Vec<f32> = (0..d).map(|_| rng.sample::<f32, _>(StandardNormal) * 0.3).collect();
                v[0] += if class == 0 { sep } else { -sep };
                v[1] += 1.0;
                EmbeddingRecord::new(format!("r{i}"), "M", format!("c{class}"), v)
            })
            .collect();
        Gallery::new(recs).unwrap()
    }

    fn accuracy(m: &HeadModel, g: &Gallery) -> f64 {
        let ok = g
            .records()
            .iter()
            .filter(|r| m.predict(&r.vector).unwrap().label == r.class_label())
            .count();
        ok as f64 / g.len() as f64
    }

    #[test]
    fn separable_classes_are_learned() {
        let g = gaussian_gallery(1, 200, 8, 2.0);
        let cfg = TrainConfig::default();
        for variant in [Variant::Biased, Variant::PriorFree] {
            let m = train_head(&g, variant, &cfg, None).unwrap();
            assert!(accuracy(&m, &g) >= 0.99, "{variant}: {}", accuracy(&m, &g));
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let g = gaussian_gallery(2, 20, 4, 2.0);
        let init = HeadModel::random(vec!["M/c0".into(), "M/c1".into()], 4, Variant::Biased, 9).unwrap();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        assert_eq!(train_head(&g, Variant::Biased, &cfg, Some(&init)).unwrap(), init);

        let raw = HeadModel::new(
            vec!["M/c0".into(), "M/c1".into()],
            4,
            vec![0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 3.0, 4.0],
            Some(vec![0.0, 0.0]),
            Variant::Biased,
            0,
        )
        .unwrap();
        let pf = HeadModel::new(
            raw.labels().to_vec(),
            4,
            raw.centroids().to_vec(),
            None,
            Variant::Biased,
            0,
        );
        assert!(pf.is_err());
        let unit = HeadModel::normalized(raw.labels().to_vec(), 4, raw.centroids().to_vec(), 0).unwrap();
        let out = train_head(&g, Variant::PriorFree, &cfg, Some(&unit)).unwrap();
        assert_eq!(out.centroids(), unit.centroids());
        assert_eq!(out.row(1), &[0.0, 0.0, 0.6, 0.8]);
    }

    #[test]
    fn class_errors() {
        let one = Gallery::new(vec![EmbeddingRecord::new("a", "M", "x", vec![1.0, 0.0])]).unwrap();
        assert!(matches!(
            train_head(&one, Variant::PriorFree, &TrainConfig::default(), None),
            Err(Error::SingleClass(1))
        ));
        let g = gaussian_gallery(3, 10, 4, 2.0);
        let init = HeadModel::random(
            vec!["M/c0".into(), "M/c1".into(), "M/ghost".into()],
            4,
            Variant::PriorFree,
            1,
        )
        .unwrap();
        assert!(matches!(
            train_head(&g, Variant::PriorFree, &TrainConfig::default(), Some(&init)),
            Err(Error::EmptyClass(l)) if l == "M/ghost"
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let g = gaussian_gallery(4, 100, 6, 1.0);
        let cfg = TrainConfig { epochs: 5, ..Default::default() };
        for v in [Variant::Biased, Variant::PriorFree] {
            let a = train_head(&g, v, &cfg, None).unwrap();
            let b = train_head(&g, v, &cfg, None).unwrap();
            assert_eq!(a, b);
            let other = train_head(&g, v, &TrainConfig { seed: 8, ..cfg }, None).unwrap();
            assert_ne!(a, other);
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng, variant: Variant) -> (HeadModel, Vec<Vec<f32>>, Vec<usize>) {
        let c = rng.random_range(2..=5);
        let d = rng.random_range(1..=8);
        let labels = (0..c).map(|k| format!("M/{k}")).collect();
        let w: Vec<f64> = (0..c * d).map(|_| rng.sample(StandardNormal)).collect();
        let m = match variant {
            Variant::Biased => {
                let b = (0..c).map(|_| rng.sample(StandardNormal)).collect();
                HeadModel::new(labels, d, w, Some(b), variant, 0).unwrap()
            }
            Variant::PriorFree => HeadModel::normalized(labels, d, w, 0).unwrap(),
        };
        let n = rng.random_range(1..=6);
        let xs = (0..n)
            .map(|_| (0..d).map(|_| rng.sample::<f32, _>(StandardNormal) + 0.1).collect())
            .collect();
        let ys = (0..n).map(|_| rng.random_range(0..c)).collect();
        (m, xs, ys)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for variant in [Variant::Biased, Variant::PriorFree] {
            for _ in 0..25 {
                let (m, xs, ys) = random_instance(&mut rng, variant);
                let batch: Vec<Sample> = xs.iter().zip(&ys).map(|(x, &class)| Sample { x, class }).collect();
                let l2 = if variant == Variant::Biased { 0.01 } else { 0.0 };
                let err = gradient_check(&m, &batch, l2).unwrap();
                assert!(err <= 1e-4, "{variant}: {err}");
            }
        }
    }

    #[test]
    fn zero_centroids_give_finite_check() {
        let m = HeadModel::new(vec!["a".into(), "b".into(), "c".into()], 2, vec![0.0; 6], Some(vec![0.0; 3]), Variant::Biased, 0).unwrap();
        let x = [1.0f32, -2.0];
        let err = gradient_check(&m, &[Sample { x: &x, class: 1 }], 0.0).unwrap();
        assert!(err.is_finite() && err <= 1e-4);
    }

    #[test]
    fn prior_free_norms_hold_every_epoch() {
        let g = gaussian_gallery(5, 60, 5, 0.5);
        let cfg = TrainConfig { epochs: 3, learning_rate: 5.0, ..Default::default() };
        let m = train_head(&g, Variant::PriorFree, &cfg, None).unwrap();
        assert!(m.rows().all(|r| (norm(r) - 1.0).abs() <= UNIT_NORM_TOLERANCE));
        assert!(m.bias().is_none());
    }
}
