#![allow(dead_code)]

use crisiskd::corpus::{normalize_text, train_tokenizer, CleanText, Tokenizer};
use crisiskd::finetune::{split_stratified, Example, SplitSpec, Splits};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FILLER: &[&str] = &[
    "the", "city", "today", "people", "please", "update", "news", "covid", "we", "our", "is", "at", "road",
    "after", "storm", "flood", "team", "local", "night", "morning", "area", "near", "families", "center",
    "district", "group", "across", "state", "help", "support",
];

/// One marker word per class; a record's class is exactly which marker it
/// contains.
pub const MARKERS: [&str; 4] = ["needfood", "donating", "swaphelp", "weatherok"];

pub fn synthetic_texts(n: usize, seed: u64) -> Vec<(CleanText, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // imbalanced like crisis data: 40/30/10/20
    let cuts = [0.4, 0.7, 0.8, 1.0];
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let class = cuts.iter().position(|&c| u < c).unwrap();
            let len = rng.gen_range(4..12);
            let mut words: Vec<&str> = (0..len).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, MARKERS[class]);
            (normalize_text(&words.join(" ")), class)
        })
        .collect()
}

pub struct Task {
    pub tokenizer: Tokenizer,
    pub splits: Splits<Example>,
}

pub fn synthetic_task(n: usize, seed: u64, vocab: usize, max_length: usize) -> Task {
    let texts = synthetic_texts(n, seed);
    let tokenizer = train_tokenizer(texts.iter().map(|(t, _)| t), vocab).unwrap();
    let examples: Vec<Example> = texts
        .iter()
        .map(|(t, c)| Example {
            seq: tokenizer.encode(t, max_length),
            label: *c,
        })
        .collect();
    let splits = split_stratified(&examples, |e| e.label, &SplitSpec::default()).unwrap();
    Task { tokenizer, splits }
}
