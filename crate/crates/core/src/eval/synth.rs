use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabelMatrix;
use crate::error::{Error, Result};
use crate::matrix::BowMatrix;

/// Parameters of the block-structured synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_images: usize,
    pub n_classes: usize,
    pub visual_vocab: usize,
    pub textual_vocab: usize,
    /// Fraction of tag draws replaced by a uniformly random tag.
    pub tag_noise_rate: f64,
    /// Fraction of visual-word draws replaced by a uniformly random word.
    pub visual_noise_rate: f64,
    /// Visual-word draws per image.
    pub visual_words_per_image: usize,
    /// Tag draws per image.
    pub tags_per_image: usize,
    /// Probability that an image carries a second class.
    pub multi_label_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 400,
            n_classes: 10,
            visual_vocab: 200,
            textual_vocab: 100,
            tag_noise_rate: 0.2,
            visual_noise_rate: 0.3,
            visual_words_per_image: 6,
            tags_per_image: 6,
            multi_label_rate: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_images", self.n_images),
            ("n_classes", self.n_classes),
            ("visual_vocab", self.visual_vocab),
            ("textual_vocab", self.textual_vocab),
            ("visual_words_per_image", self.visual_words_per_image),
            ("tags_per_image", self.tags_per_image),
        ] {
            if v == 0 {
                return Err(Error::param(format!("{name} must be at least 1")));
            }
        }
        for (name, r) in [
            ("tag_noise_rate", self.tag_noise_rate),
            ("visual_noise_rate", self.visual_noise_rate),
            ("multi_label_rate", self.multi_label_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::param(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        if self.visual_vocab < self.n_classes || self.textual_vocab < self.n_classes {
            return Err(Error::param("each class needs at least one visual word and one tag"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub visual: BowMatrix,
    pub textual: BowMatrix,
    pub labels: LabelMatrix,
}

/// Index range of the block owned by class `c` when `size` items are split
/// as evenly as possible among `classes`.
pub fn class_block(c: usize, classes: usize, size: usize) -> std::ops::Range<usize> {
    (c * size / classes)..((c + 1) * size / classes)
}

/// Each class owns a contiguous block of visual words and of tags. An image
/// gets one class, plus a second one with probability `multi_label_rate`;
/// every draw picks one of its classes uniformly and a word from that
/// class's block, unless the noise coin sends it to a random word of the
/// whole vocabulary.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_images;
    let c = cfg.n_classes;
    let mut labels = Array2::<u8>::zeros((n, c));
    let mut visual = Array2::<f64>::zeros((n, cfg.visual_vocab));
    let mut textual = Array2::<f64>::zeros((n, cfg.textual_vocab));

    for i in 0..n {
        let mut classes = vec![i % c];
        if c > 1 && rng.random_bool(cfg.multi_label_rate) {
            let other = (classes[0] + 1 + rng.random_range(0..c - 1)) % c;
            classes.push(other);
        }
        for &k in &classes {
            labels[[i, k]] = 1;
        }
        draw(&mut rng, &classes, c, cfg.visual_vocab, cfg.visual_words_per_image, cfg.visual_noise_rate, |j| {
            visual[[i, j]] += 1.0
        });
        draw(&mut rng, &classes, c, cfg.textual_vocab, cfg.tags_per_image, cfg.tag_noise_rate, |j| {
            textual[[i, j]] += 1.0
        });
    }

    let names = (0..c).map(|k| format!("class{k}")).collect();
    Ok(SynthDataset {
        visual: BowMatrix::new(visual)?.with_feature_ids((0..cfg.visual_vocab).map(|j| format!("v{j}")).collect())?,
        textual: BowMatrix::new(textual)?.with_feature_ids((0..cfg.textual_vocab).map(|j| format!("t{j}")).collect())?,
        labels: LabelMatrix::new(labels, names)?,
    })
}

fn draw(
    rng: &mut ChaCha8Rng,
    classes: &[usize],
    n_classes: usize,
    vocab: usize,
    draws: usize,
    noise: f64,
    mut add: impl FnMut(usize),
) {
    for _ in 0..draws {
        if rng.random_bool(noise) {
            add(rng.random_range(0..vocab));
        } else {
            let k = classes[rng.random_range(0..classes.len())];
            add(rng.random_range(class_block(k, n_classes, vocab)));
        }
    }
}

/// Deterministic shuffled split into (train, test) index lists, both sorted.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::param(format!("cannot split {n} images with test fraction {test_fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}
