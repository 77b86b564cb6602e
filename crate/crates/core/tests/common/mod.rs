#![allow(dead_code)]

use hsched_core::baselines::{AuxModels, SchedulerContext};
use hsched_core::corpus::{default_profiles, Corpus, CorpusConfig, FileItem, Label, Reading};
use hsched_core::internal::action_count;
use hsched_core::rl::PolicyNet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random item whose runtimes sit on a 0.25 s grid so that ties happen.
pub fn random_item<R: Rng>(rng: &mut R, id: u64, k: usize) -> FileItem {
    let label = if rng.random_bool(0.5) {
        Label::Positive
    } else {
        Label::Negative
    };
    let readings = (0..k)
        .map(|_| Reading {
            confidence: rng.random_range(0.0..=1.0),
            runtime: 0.25 * rng.random_range(1..=20) as f64,
        })
        .collect();
    FileItem::new(id, label, rng.random_range(1..1_000_000), readings).unwrap()
}

pub fn random_items<R: Rng>(rng: &mut R, count: usize, k: usize) -> Vec<FileItem> {
    (0..count as u64).map(|id| random_item(rng, id, k)).collect()
}

/// A random network with sharpened weights, so the greedy policy makes
/// varied decisions instead of sitting near a uniform softmax.
pub fn random_net<R: Rng>(rng: &mut R, input: usize, hidden: usize, actions: usize) -> PolicyNet {
    let mut net = PolicyNet::new(input, hidden, actions, rng);
    for p in net.params_mut() {
        *p *= 3.0;
    }
    net
}

pub fn random_internal<R: Rng>(rng: &mut R, k: usize) -> PolicyNet {
    random_net(rng, k, 8, action_count(k))
}

pub fn random_outer<R: Rng>(rng: &mut R, n: usize, k: usize) -> PolicyNet {
    random_net(rng, n * (k + 1), 8, n)
}

pub fn corpus_of(items: Vec<FileItem>, k: usize) -> Corpus {
    let n = items.len();
    Corpus::from_parts(default_profiles(k), items, 0, CorpusConfig::new(n, k)).unwrap()
}

/// Everything a scheduler might need, built from random parts.
pub struct Fixture {
    pub k: usize,
    pub internal: PolicyNet,
    pub outer: PolicyNet,
    pub aux: AuxModels,
}

impl Fixture {
    pub fn new(seed: u64, k: usize, n: usize) -> Self {
        let mut r = rng(seed);
        let internal = random_internal(&mut r, k);
        let outer = random_outer(&mut r, n, k);
        let train = corpus_of(random_items(&mut r, 60, k), k);
        let aux = AuxModels::build(&train, &internal).unwrap();
        Fixture {
            k,
            internal,
            outer,
            aux,
        }
    }

    pub fn ctx(&self) -> SchedulerContext<'_> {
        SchedulerContext {
            internal: &self.internal,
            outer: Some(&self.outer),
            aux: Some(&self.aux),
        }
    }
}
