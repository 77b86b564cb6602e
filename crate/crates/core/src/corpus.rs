//! Synthetic corpus of classifiable items with latent detector responses.
//!
//! Every (item, detector) pair carries one pre-sampled reading: the confidence
//! the detector reports and the seconds it takes to report it. Readings are
//! drawn once at generation time and never change, so every scheduler that is
//! later run over the same items sees exactly the same stochastic outcome.
//!
//! The confidence model is a logistic transform of a label-signed
//! discrimination term plus Gaussian noise. Each item also draws a latent
//! difficulty that pulls all of its detectors towards ambiguity at once, which
//! is what makes some items expensive for a cost-aware classifier.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

/// Version tag written into every corpus file.
pub const CORPUS_FORMAT_VERSION: u64 = 1;

/// Ground-truth class of an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    /// +1 for positive, -1 for negative.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    /// 1.0 for positive, 0.0 for negative.
    pub fn indicator(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub id: usize,
    pub mean_runtime: f64,
    pub runtime_sd: f64,
    /// How strongly the reported confidence separates the two classes, in [0, 1].
    pub discrimination: f64,
    pub noise_sd: f64,
    /// How much item hardness erodes this detector's separation, in [0, 1].
    #[serde(default = "full_sensitivity")]
    pub hardness_sensitivity: f64,
}

fn full_sensitivity() -> f64 {
    1.0
}

/// One latent detector response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub confidence: f64,
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileItem {
    pub id: u64,
    pub label: Label,
    pub size_bytes: u64,
    readings: Vec<Reading>,
}

impl FileItem {
    pub fn new(id: u64, label: Label, size_bytes: u64, readings: Vec<Reading>) -> Result<Self> {
        if readings.is_empty() {
            return Err(Error::config(format!("item {id} has no readings")));
        }
        if size_bytes == 0 {
            return Err(Error::config(format!("item {id} has zero size")));
        }
        for (j, r) in readings.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.confidence) {
                return Err(Error::config(format!(
                    "item {id} detector {j}: confidence {} outside [0, 1]",
                    r.confidence
                )));
            }
            if !(r.runtime > 0.0 && r.runtime.is_finite()) {
                return Err(Error::config(format!(
                    "item {id} detector {j}: runtime {} must be positive",
                    r.runtime
                )));
            }
        }
        Ok(FileItem {
            id,
            label,
            size_bytes,
            readings,
        })
    }

    pub fn readings(&self) -> &[Reading] {
        &self.readings
    }

    pub fn reading(&self, detector: usize) -> Reading {
        self.readings[detector]
    }

    pub fn n_detectors(&self) -> usize {
        self.readings.len()
    }
}

/// Parameters of the per-item latent difficulty `scale * u^shape`, `u ~ U(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Difficulty {
    pub scale: f64,
    pub shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_items: usize,
    pub detectors: Vec<DetectorProfile>,
    /// Fraction of positive items.
    pub class_balance: f64,
    /// Gain of the logistic confidence transform.
    pub sharpness: f64,
    pub difficulty_positive: Difficulty,
    pub difficulty_negative: Difficulty,
    /// Log-normal size distribution, in log-bytes.
    pub size_log_mean: f64,
    pub size_log_sd: f64,
    /// Runtimes scale with `(size / median_size)^size_runtime_exponent`.
    pub size_runtime_exponent: f64,
}

impl CorpusConfig {
    /// Default configuration with `n_detectors` detectors whose cost and
    /// accuracy both grow with their id.
    pub fn new(n_items: usize, n_detectors: usize) -> Self {
        CorpusConfig {
            n_items,
            detectors: default_profiles(n_detectors),
            class_balance: 0.5,
            sharpness: 1.0,
            difficulty_positive: Difficulty {
                scale: 0.99,
                shape: 2.0,
            },
            difficulty_negative: Difficulty {
                scale: 0.99,
                shape: 2.0,
            },
            size_log_mean: (512.0f64 * 1024.0).ln(),
            size_log_sd: 1.0,
            size_runtime_exponent: 0.25,
        }
    }

    pub fn n_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 {
            return Err(Error::config("corpus needs at least one item"));
        }
        if self.detectors.is_empty() {
            return Err(Error::config("corpus needs at least one detector"));
        }
        for (j, d) in self.detectors.iter().enumerate() {
            if d.id != j {
                return Err(Error::config(format!(
                    "detector ids must be contiguous from 0, found {} at position {j}",
                    d.id
                )));
            }
            if !(d.mean_runtime > 0.0 && d.mean_runtime.is_finite()) {
                return Err(Error::config(format!("detector {j}: mean_runtime must be > 0")));
            }
            if !(d.runtime_sd >= 0.0 && d.runtime_sd.is_finite()) {
                return Err(Error::config(format!("detector {j}: runtime_sd must be >= 0")));
            }
            if !(0.0..=1.0).contains(&d.discrimination) {
                return Err(Error::config(format!(
                    "detector {j}: discrimination must lie in [0, 1]"
                )));
            }
            if !(d.noise_sd >= 0.0 && d.noise_sd.is_finite()) {
                return Err(Error::config(format!("detector {j}: noise_sd must be >= 0")));
            }
            if !(0.0..=1.0).contains(&d.hardness_sensitivity) {
                return Err(Error::config(format!(
                    "detector {j}: hardness_sensitivity must lie in [0, 1]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.class_balance) {
            return Err(Error::config("class_balance must lie in [0, 1]"));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::config("sharpness must be > 0"));
        }
        for (name, d) in [
            ("difficulty_positive", self.difficulty_positive),
            ("difficulty_negative", self.difficulty_negative),
        ] {
            if !(0.0..1.0).contains(&d.scale) || !(d.shape > 0.0) {
                return Err(Error::config(format!(
                    "{name}: scale must lie in [0, 1) and shape must be > 0"
                )));
            }
        }
        if !(self.size_log_sd >= 0.0) || !self.size_log_mean.is_finite() {
            return Err(Error::config("invalid size distribution"));
        }
        if !self.size_runtime_exponent.is_finite() {
            return Err(Error::config("size_runtime_exponent must be finite"));
        }
        Ok(())
    }
}

/// Runtimes grow geometrically with detector id (0.8 s up to 12.8 s) and
/// discrimination grows linearly. The cheapest detector is precise on easy
/// items, the most expensive one is the only one robust to hard items.
pub fn default_profiles(n_detectors: usize) -> Vec<DetectorProfile> {
    (0..n_detectors)
        .map(|j| {
            let frac = if n_detectors > 1 {
                j as f64 / (n_detectors - 1) as f64
            } else {
                0.5
            };
            let mean_runtime = 0.8 * 16.0f64.powf(frac);
            let last = j + 1 == n_detectors;
            DetectorProfile {
                id: j,
                mean_runtime,
                runtime_sd: 0.25 * mean_runtime,
                discrimination: 0.6 + 0.3 * frac,
                noise_sd: if j == 0 { 0.03 } else { 0.1 },
                hardness_sensitivity: if last { 0.2 } else { 1.0 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    detectors: Vec<DetectorProfile>,
    items: Vec<FileItem>,
    seed: u64,
    generation_config: CorpusConfig,
}

impl Corpus {
    /// Assemble a corpus from hand-built parts. Every item must carry one
    /// reading per detector.
    pub fn from_parts(
        detectors: Vec<DetectorProfile>,
        items: Vec<FileItem>,
        seed: u64,
        generation_config: CorpusConfig,
    ) -> Result<Self> {
        let corpus = Corpus {
            detectors,
            items,
            seed,
            generation_config,
        };
        corpus.check()?;
        Ok(corpus)
    }

    fn check(&self) -> Result<()> {
        let k = self.detectors.len();
        if k == 0 {
            return Err(Error::config("corpus has no detectors"));
        }
        for (j, d) in self.detectors.iter().enumerate() {
            if d.id != j {
                return Err(Error::config("detector ids must be contiguous from 0"));
            }
        }
        for item in &self.items {
            if item.readings.len() != k {
                return Err(Error::config(format!(
                    "item {} has {} readings, corpus has {k} detectors",
                    item.id,
                    item.readings.len()
                )));
            }
            // Re-validate readings so a hand-edited file cannot smuggle in bad values.
            FileItem::new(item.id, item.label, item.size_bytes, item.readings.clone())?;
        }
        Ok(())
    }

    pub fn detectors(&self) -> &[DetectorProfile] {
        &self.detectors
    }

    pub fn items(&self) -> &[FileItem] {
        &self.items
    }

    pub fn n_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.generation_config
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        let pos = self
            .items
            .iter()
            .filter(|i| i.label == Label::Positive)
            .count();
        pos as f64 / self.items.len() as f64
    }

    fn with_items(&self, items: Vec<FileItem>) -> Corpus {
        Corpus {
            detectors: self.detectors.clone(),
            items,
            seed: self.seed,
            generation_config: self.generation_config.clone(),
        }
    }
}

/// Reported confidence for a label-signed evidence value `z`.
fn confidence(z: f64, discrimination: f64, sharpness: f64) -> f64 {
    if discrimination >= 1.0 {
        // Infinite gain: a perfect detector reports the label exactly.
        return if z > 0.0 {
            1.0
        } else if z < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    let logit = sharpness * z / (1.0 - discrimination);
    1.0 / (1.0 + (-logit).exp())
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, sd).expect("sd checked positive");
    for _ in 0..64 {
        let x = normal.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
    mean
}

pub fn generate_corpus(config: &CorpusConfig, seed: u64) -> Result<Corpus> {
    config.validate()?;
    let mut rng = rng_for(seed, Stream::Corpus, 0);

    let n = config.n_items;
    let n_pos = (config.class_balance * n as f64).round() as usize;
    let mut labels: Vec<Label> = (0..n)
        .map(|i| {
            if i < n_pos {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    labels.shuffle(&mut rng);

    let size_dist = LogNormal::new(config.size_log_mean, config.size_log_sd)
        .map_err(|e| Error::config(format!("size distribution: {e}")))?;
    let median_size = config.size_log_mean.exp();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut items = Vec::with_capacity(n);
    for (i, label) in labels.into_iter().enumerate() {
        let size = size_dist.sample(&mut rng).round().max(1.0);
        let scale = (size / median_size).powf(config.size_runtime_exponent);
        let difficulty = match label {
            Label::Positive => config.difficulty_positive,
            Label::Negative => config.difficulty_negative,
        };
        let u: f64 = rng.random();
        let hardness = difficulty.scale * u.powf(difficulty.shape);

        let readings = config
            .detectors
            .iter()
            .map(|d| {
                let eps: f64 = std_normal.sample(&mut rng);
                let z = label.sign() * d.discrimination * (1.0 - hardness * d.hardness_sensitivity)
                    + d.noise_sd * eps;
                let runtime =
                    truncated_normal(&mut rng, d.mean_runtime * scale, d.runtime_sd * scale);
                Reading {
                    confidence: confidence(z, d.discrimination, config.sharpness),
                    runtime,
                }
            })
            .collect();
        items.push(FileItem {
            id: i as u64,
            label,
            size_bytes: size as u64,
            readings,
        });
    }

    Ok(Corpus {
        detectors: config.detectors.clone(),
        items,
        seed,
        generation_config: config.clone(),
    })
}

/// Label-stratified split into `(train, test)`.
///
/// The test split holds `round(len * test_fraction)` items, allocated across
/// labels by largest remainder. Both halves keep the input's item order.
pub fn split_train_test(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut rng = rng_for(seed, Stream::Split, 0);

    let mut strata: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for (idx, item) in corpus.items.iter().enumerate() {
        strata[item.label as usize].push(idx);
    }

    let total_test = (corpus.len() as f64 * test_fraction).round() as usize;
    let quotas: Vec<f64> = strata
        .iter()
        .map(|s| s.len() as f64 * total_test as f64 / corpus.len().max(1) as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut leftover = total_test - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for s in order {
        if leftover == 0 {
            break;
        }
        if counts[s] < strata[s].len() {
            counts[s] += 1;
            leftover -= 1;
        }
    }

    let mut in_test = vec![false; corpus.len()];
    for (stratum, count) in strata.iter_mut().zip(&counts) {
        stratum.shuffle(&mut rng);
        for &idx in stratum.iter().take(*count) {
            in_test[idx] = true;
        }
    }

    let (test, train): (Vec<_>, Vec<_>) = corpus
        .items
        .iter()
        .cloned()
        .zip(in_test)
        .partition(|(_, t)| *t);
    Ok((
        corpus.with_items(train.into_iter().map(|(i, _)| i).collect()),
        corpus.with_items(test.into_iter().map(|(i, _)| i).collect()),
    ))
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format_version: u64,
    #[serde(flatten)]
    corpus: &'a Corpus,
}

pub fn corpus_to_json(corpus: &Corpus) -> String {
    serde_json::to_string_pretty(&EnvelopeOut {
        format_version: CORPUS_FORMAT_VERSION,
        corpus,
    })
    .expect("corpus serializes")
}

pub fn corpus_from_json(text: &str) -> Result<Corpus> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::from_json(&e, text))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse {
            offset: 0,
            message: "missing or non-integer format_version".into(),
        })?;
    if version != CORPUS_FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CORPUS_FORMAT_VERSION,
        });
    }
    let corpus: Corpus = serde_json::from_value(value).map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    corpus.check()?;
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, corpus_to_json(corpus))?;
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let text = fs::read_to_string(path)?;
    corpus_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality() {
        let c = generate_corpus(&CorpusConfig::new(4, 2), 7).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.items().iter().all(|i| i.readings().len() == 2));
    }

    #[test]
    fn deterministic() {
        let cfg = CorpusConfig::new(50, 3);
        assert_eq!(generate_corpus(&cfg, 7).unwrap(), generate_corpus(&cfg, 7).unwrap());
        assert_ne!(generate_corpus(&cfg, 7).unwrap(), generate_corpus(&cfg, 8).unwrap());
    }

    #[test]
    fn perfect_detector_reports_label() {
        let mut cfg = CorpusConfig::new(200, 2);
        cfg.detectors[1].discrimination = 1.0;
        cfg.detectors[1].noise_sd = 0.0;
        let c = generate_corpus(&cfg, 3).unwrap();
        for item in c.items() {
            let want = item.label.indicator();
            assert_eq!(item.reading(1).confidence, want);
        }
    }

    #[test]
    fn rejects_empty_config() {
        assert!(matches!(
            generate_corpus(&CorpusConfig::new(0, 2), 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_corpus(&CorpusConfig::new(5, 0), 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn class_balance_is_exact_up_to_rounding() {
        let c = generate_corpus(&CorpusConfig::new(1001, 3), 11).unwrap();
        assert!((c.positive_fraction() - 0.5).abs() <= 0.02);
    }

    #[test]
    fn positive_confidence_exceeds_negative() {
        let c = generate_corpus(&CorpusConfig::new(2000, 5), 5).unwrap();
        for j in 0..5 {
            let mean = |l: Label| {
                let v: Vec<f64> = c
                    .items()
                    .iter()
                    .filter(|i| i.label == l)
                    .map(|i| i.reading(j).confidence)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            assert!(mean(Label::Positive) >= mean(Label::Negative), "detector {j}");
        }
    }

    #[test]
    fn split_sizes_and_partition() {
        let c = generate_corpus(&CorpusConfig::new(100, 2), 1).unwrap();
        let (train, test) = split_train_test(&c, 0.1, 3).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        assert_eq!(test.positive_fraction(), 0.5);

        let small = generate_corpus(&CorpusConfig::new(10, 2), 1).unwrap();
        let (a, b) = split_train_test(&small, 0.5, 42).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let mut ids: Vec<u64> = a.items().iter().chain(b.items()).map(|i| i.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic() {
        let c = generate_corpus(&CorpusConfig::new(100, 2), 1).unwrap();
        assert_eq!(split_train_test(&c, 0.1, 3).unwrap(), split_train_test(&c, 0.1, 3).unwrap());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let c = generate_corpus(&CorpusConfig::new(10, 2), 1).unwrap();
        for f in [0.0, 1.0, -0.2, 1.5] {
            assert!(matches!(split_train_test(&c, f, 0), Err(Error::Config(_))));
        }
    }

    #[test]
    fn json_round_trip() {
        let c = generate_corpus(&CorpusConfig::new(30, 4), 99).unwrap();
        assert_eq!(corpus_from_json(&corpus_to_json(&c)).unwrap(), c);
    }

    #[test]
    fn truncated_json_is_parse_error() {
        let c = generate_corpus(&CorpusConfig::new(3, 2), 1).unwrap();
        let text = corpus_to_json(&c);
        let cut = &text[..text.len() / 2];
        match corpus_from_json(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_named() {
        let c = generate_corpus(&CorpusConfig::new(3, 2), 1).unwrap();
        let text = corpus_to_json(&c).replacen("\"format_version\": 1", "\"format_version\": 7", 1);
        let err = corpus_from_json(&text).unwrap_err();
        assert!(matches!(err, Error::Version { found: 7, expected: 1 }));
        let msg = err.to_string();
        assert!(msg.contains('7') && msg.contains('1'));
    }
}
