//! Seeded synthetic galleries.
//!
//! Every class (make/model) owns one or more *modes*: unit directions that
//! stand in for released-year or viewpoint variants. Samples are a mode
//! direction plus isotropic Gaussian noise whose expected norm is the noise
//! level. Directions are drawn isotropically, so galleries have no shared
//! offset.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{Color, EmbeddingRecord, Gallery};
use crate::error::Result;

const MAKES: &[(&str, &[&str])] = &[
    ("Mercedes-Benz", &["C", "E", "A", "GLC"]),
    ("Volkswagen", &["Scirocco", "Golf", "Passat", "Polo"]),
    ("SEAT", &["Ibiza", "Leon", "Arona", "Ateca"]),
    ("BMW", &["3er", "5er", "X1", "X3"]),
    ("Audi", &["A3", "A4", "A6", "Q5"]),
    ("Opel", &["Corsa", "Astra", "Insignia", "Mokka"]),
];

const COLORS: &[&str] = &["white", "black", "silver", "red", "blue", "grey"];

/// Deterministic make/model name for class `i`.
pub fn class_name(i: usize) -> (String, String) {
    let models_per_make = MAKES[0].1.len();
    let make_idx = i / models_per_make;
    let model_idx = i % models_per_make;
    match MAKES.get(make_idx) {
        Some((make, models)) => (make.to_string(), models[model_idx].to_string()),
        None => (format!("Make{make_idx}"), format!("Model{model_idx}")),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = crate::embedding::norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// `direction + noise * g / sqrt(D)` with `g` standard normal, as f32.
fn noisy(rng: &mut ChaCha8Rng, direction: &[f64], noise: f64) -> Vec<f32> {
    let scale = noise / (direction.len() as f64).sqrt();
    direction
        .iter()
        .map(|&d| (d + scale * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect()
}

#[derive(Debug, Clone)]
pub struct ClassModes {
    pub make: String,
    pub model: String,
    pub modes: Vec<Vec<f64>>,
}

/// Classes with one or more unit mode directions each.
#[derive(Debug, Clone)]
pub struct ModeFixture {
    pub dimension: usize,
    pub classes: Vec<ClassModes>,
}

impl ModeFixture {
    /// `classes` classes with `modes` random unit directions each. With
    /// `orthogonal` every direction is orthogonal to every other (needs
    /// `classes * modes <= dimension`).
    pub fn generate(classes: usize, modes: usize, dimension: usize, orthogonal: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = classes * modes;
        assert!(!orthogonal || total <= dimension, "{total} orthogonal modes need dimension >= {total}");
        let mut drawn: Vec<Vec<f64>> = Vec::with_capacity(total);
        for _ in 0..total {
            let mut v = gaussian(&mut rng, dimension);
            if orthogonal {
                for u in &drawn {
                    let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
                }
            }
            drawn.push(unit(v));
        }
        let mut it = drawn.into_iter();
        let classes = (0..classes)
            .map(|c| {
                let (make, model) = class_name(c);
                ClassModes {
                    make,
                    model,
                    modes: it.by_ref().take(modes).collect(),
                }
            })
            .collect();
        ModeFixture { dimension, classes }
    }

    /// `count(class)` samples per mode of each class, in class/mode order.
    pub fn sample(
        &self,
        count: impl Fn(usize) -> usize,
        noise: f64,
        seed: u64,
        prefix: &str,
    ) -> Result<Gallery> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::new();
        for (c, class) in self.classes.iter().enumerate() {
            for (m, dir) in class.modes.iter().enumerate() {
                for i in 0..count(c) {
                    records.push(EmbeddingRecord::new(
                        format!("{prefix}c{c}m{m}-{i}"),
                        class.make.clone(),
                        class.model.clone(),
                        noisy(&mut rng, dir, noise),
                    ));
                }
            }
        }
        Gallery::new(records)
    }

    /// Video-style gallery: `tracks_per_class` tracks per class, each on a
    /// random mode with `detections` detections. Detection quality is
    /// uniform on `[0.05, 1]` and noise grows as quality drops:
    /// `noise_min + (noise_max - noise_min) * (1 - quality)`.
    pub fn sample_tracks(
        &self,
        tracks_per_class: usize,
        detections: usize,
        noise_min: f64,
        noise_max: f64,
        seed: u64,
        prefix: &str,
    ) -> Result<Gallery> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::new();
        let mut track_no = 0;
        for class in &self.classes {
            for _ in 0..tracks_per_class {
                let dir = class.modes.choose(&mut rng).expect("class has modes");
                let color = Color {
                    name: COLORS.choose(&mut rng).expect("colors").to_string(),
                    score: (rng.random_range(0.5..1.0f64) * 1000.0).round() / 1000.0,
                };
                let track = format!("{prefix}t{track_no:04}");
                let start: u64 = rng.random_range(0..500);
                for k in 0..detections {
                    let quality = (rng.random_range(0.05..1.0f64) * 1000.0).round() / 1000.0;
                    let noise = noise_min + (noise_max - noise_min) * (1.0 - quality);
                    let mut r = EmbeddingRecord::new(
                        format!("{track}-d{k}"),
                        class.make.clone(),
                        class.model.clone(),
                        noisy(&mut rng, dir, noise),
                    );
                    r.track_id = Some(track.clone());
                    r.frame = Some(start + 3 * k as u64);
                    r.quality = Some(quality);
                    r.color = Some(color.clone());
                    records.push(r);
                }
                track_no += 1;
            }
        }
        Gallery::new(records)
    }
}

/// Two mirror-image classes: means `+separation * u` and `-separation * u`
/// for a random unit `u`, isotropic noise, `counts.0` samples of the first
/// class and `counts.1` of the second.
pub fn mirrored_pair(
    counts: (usize, usize),
    dimension: usize,
    separation: f64,
    noise: f64,
    direction_seed: u64,
    sample_seed: u64,
    prefix: &str,
) -> Result<Gallery> {
    let mut rng = ChaCha8Rng::seed_from_u64(direction_seed);
    let u = unit(gaussian(&mut rng, dimension));
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut records = Vec::with_capacity(counts.0 + counts.1);
    for (class, n, sign) in [(0usize, counts.0, 1.0), (1, counts.1, -1.0)] {
        let mean: Vec<f64> = u.iter().map(|v| sign * separation * v).collect();
        let (make, model) = class_name(class);
        for i in 0..n {
            records.push(EmbeddingRecord::new(
                format!("{prefix}k{class}-{i}"),
                make.clone(),
                model.clone(),
                noisy(&mut rng, &mean, noise),
            ));
        }
    }
    Gallery::new(records)
}
