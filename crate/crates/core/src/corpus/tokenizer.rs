//! Byte-level pair-merge subword tokenizer.
//!
//! Words are whitespace-delimited; every word after the first carries its
//! leading space byte so that decoding restores the original spacing.
//! `HTTPURL` and `@USER` words map straight to their reserved ids and never
//! take part in merges.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize::{CleanText, URL_TOKEN, USER_TOKEN};
use crate::{Error, Result};

pub const DEFAULT_VOCAB_SIZE: usize = 8192;
pub const DEFAULT_MAX_LENGTH: usize = 64;

const NUM_BYTES: u32 = 256;
const MIN_PAIR_COUNT: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpecialToken {
    Pad,
    Unk,
    Cls,
    Sep,
    Mask,
    Url,
    User,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 7] = [
        SpecialToken::Pad,
        SpecialToken::Unk,
        SpecialToken::Cls,
        SpecialToken::Sep,
        SpecialToken::Mask,
        SpecialToken::Url,
        SpecialToken::User,
    ];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn text(self) -> &'static str {
        match self {
            SpecialToken::Pad => "[PAD]",
            SpecialToken::Unk => "[UNK]",
            SpecialToken::Cls => "[CLS]",
            SpecialToken::Sep => "[SEP]",
            SpecialToken::Mask => "[MASK]",
            SpecialToken::Url => URL_TOKEN,
            SpecialToken::User => USER_TOKEN,
        }
    }

    fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }
}

const NUM_SPECIAL: u32 = SpecialToken::ALL.len() as u32;
const FIRST_BYTE_ID: u32 = NUM_SPECIAL;
const FIRST_MERGE_ID: u32 = NUM_SPECIAL + NUM_BYTES;

/// Encoder input: ids start with `[CLS]`, are padded with `[PAD]` to a fixed
/// length, and the mask is 1 exactly on non-pad positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().map(|&m| m as usize).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    vocab_size: usize,
    /// Byte string of every non-special id.
    pieces: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    merge_lookup: HashMap<(u32, u32), (usize, u32)>,
}

/// GPT-2 style printable alias for each byte so vocab files stay one token
/// per line with no raw whitespace.
fn byte_alias_table() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut extra = 0u32;
    for b in 0..=255u32 {
        let printable = (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b);
        table[b as usize] = if printable {
            char::from_u32(b).unwrap()
        } else {
            extra += 1;
            char::from_u32(255 + extra).unwrap()
        };
    }
    table
}

fn split_words(text: &str) -> impl Iterator<Item = (bool, &str)> {
    text.split(' ').filter(|w| !w.is_empty()).enumerate().map(|(i, w)| (i > 0, w))
}

fn special_word(word: &str) -> Option<SpecialToken> {
    match word {
        URL_TOKEN => Some(SpecialToken::Url),
        USER_TOKEN => Some(SpecialToken::User),
        _ => None,
    }
}

fn word_bytes(leading_space: bool, word: &str) -> Vec<u32> {
    let space = leading_space.then_some(b' ');
    space
        .into_iter()
        .chain(word.bytes())
        .map(|b| FIRST_BYTE_ID + u32::from(b))
        .collect()
}

struct PairStats {
    counts: HashMap<(u32, u32), u64>,
    owners: HashMap<(u32, u32), HashSet<usize>>,
}

impl PairStats {
    fn add_word(&mut self, idx: usize, symbols: &[u32], freq: u64) {
        for p in symbols.windows(2) {
            let key = (p[0], p[1]);
            *self.counts.entry(key).or_insert(0) += freq;
            self.owners.entry(key).or_default().insert(idx);
        }
    }

    fn remove_word(&mut self, symbols: &[u32], freq: u64) {
        for p in symbols.windows(2) {
            if let Some(c) = self.counts.get_mut(&(p[0], p[1])) {
                *c -= freq;
            }
        }
    }
}

fn merge_symbols(symbols: &[u32], pair: (u32, u32), new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    out
}

/// Learns merges from a normalized corpus until the vocabulary reaches
/// `vocab_size` or no pair occurs at least twice. Ties on pair frequency go
/// to the pair with the smaller ids, so training is deterministic.
pub fn train_tokenizer<'a, I>(corpus: I, vocab_size: usize) -> Result<Tokenizer>
where
    I: IntoIterator<Item = &'a CleanText>,
{
    if vocab_size <= FIRST_MERGE_ID as usize {
        return Err(Error::InvalidConfig(format!(
            "vocab_size must exceed {FIRST_MERGE_ID} (special tokens + byte alphabet)"
        )));
    }
    let mut word_index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut words: Vec<Vec<u32>> = Vec::new();
    let mut freqs: Vec<u64> = Vec::new();
    let mut any_text = false;
    for text in corpus {
        any_text = true;
        for (lead, w) in split_words(text.as_str()) {
            if special_word(w).is_some() {
                continue;
            }
            let symbols = word_bytes(lead, w);
            let idx = *word_index.entry(symbols.clone()).or_insert_with(|| {
                words.push(symbols);
                freqs.push(0);
                words.len() - 1
            });
            freqs[idx] += 1;
        }
    }
    if !any_text {
        return Err(Error::EmptyCorpus);
    }

    let mut stats = PairStats {
        counts: HashMap::new(),
        owners: HashMap::new(),
    };
    for (i, w) in words.iter().enumerate() {
        stats.add_word(i, w, freqs[i]);
    }
    let mut heap: BinaryHeap<(u64, Reverse<(u32, u32)>)> =
        stats.counts.iter().map(|(&p, &c)| (c, Reverse(p))).collect();

    let mut tok = Tokenizer::base(vocab_size);
    while tok.learned_len() < vocab_size {
        let Some((count, Reverse(pair))) = heap.pop() else { break };
        if stats.counts.get(&pair).copied() != Some(count) {
            continue; // stale entry
        }
        if count < MIN_PAIR_COUNT {
            break;
        }
        let new_id = tok.push_merge(pair);
        let owners: Vec<usize> = {
            let mut v: Vec<usize> = stats.owners.remove(&pair).unwrap_or_default().into_iter().collect();
            v.sort_unstable();
            v
        };
        let mut touched = HashSet::new();
        for idx in owners {
            let merged = merge_symbols(&words[idx], pair, new_id);
            if merged.len() == words[idx].len() {
                continue;
            }
            stats.remove_word(&words[idx], freqs[idx]);
            for p in words[idx].windows(2) {
                touched.insert((p[0], p[1]));
            }
            stats.add_word(idx, &merged, freqs[idx]);
            for p in merged.windows(2) {
                touched.insert((p[0], p[1]));
            }
            words[idx] = merged;
        }
        stats.counts.remove(&pair);
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            if let Some(&c) = stats.counts.get(&p) {
                if c > 0 {
                    heap.push((c, Reverse(p)));
                }
            }
        }
    }
    Ok(tok)
}

impl Tokenizer {
    fn base(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            pieces: (0..=255u8).map(|b| vec![b]).collect(),
            merges: Vec::new(),
            merge_lookup: HashMap::new(),
        }
    }

    fn push_merge(&mut self, pair: (u32, u32)) -> u32 {
        let new_id = FIRST_MERGE_ID + self.merges.len() as u32;
        let mut piece = self.piece(pair.0).to_vec();
        piece.extend_from_slice(self.piece(pair.1));
        self.pieces.push(piece);
        self.merge_lookup.insert(pair, (self.merges.len(), new_id));
        self.merges.push(pair);
        new_id
    }

    fn piece(&self, id: u32) -> &[u8] {
        &self.pieces[(id - FIRST_BYTE_ID) as usize]
    }

    /// Embedding-table size the tokenizer was configured for. Ids beyond
    /// [`Tokenizer::learned_len`] are never produced.
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of ids actually in use (specials + bytes + merges).
    pub fn learned_len(&self) -> usize {
        FIRST_MERGE_ID as usize + self.merges.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn special_id(&self, token: SpecialToken) -> u32 {
        token.id()
    }

    /// Printable form of a token as written to the vocab file.
    pub fn token_text(&self, id: u32) -> Option<String> {
        if let Some(s) = SpecialToken::from_id(id) {
            return Some(s.text().to_string());
        }
        if id as usize >= self.learned_len() {
            return None;
        }
        let table = byte_alias_table();
        Some(self.piece(id).iter().map(|&b| table[b as usize]).collect())
    }

    /// Looks up the id of a printable token, as found in the vocab file.
    pub fn token_id(&self, text: &str) -> Option<u32> {
        (0..self.learned_len() as u32).find(|&id| self.token_text(id).as_deref() == Some(text))
    }

    fn encode_word(&self, symbols: Vec<u32>) -> Vec<u32> {
        let mut symbols = symbols;
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|p| self.merge_lookup.get(&(p[0], p[1])).map(|&(rank, id)| (rank, (p[0], p[1]), id)))
                .min();
            let Some((_, pair, id)) = best else { break };
            symbols = merge_symbols(&symbols, pair, id);
        }
        symbols
    }

    /// Subword ids of `text` without `[CLS]`, truncation or padding.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for (lead, w) in split_words(text) {
            match special_word(w) {
                Some(s) => ids.push(s.id()),
                None => ids.extend(self.encode_word(word_bytes(lead, w))),
            }
        }
        ids
    }

    pub fn encode(&self, text: &CleanText, max_length: usize) -> TokenSequence {
        encode(self, text, max_length)
    }

    pub fn encode_batch<'a, I>(&self, texts: I, max_length: usize) -> Vec<TokenSequence>
    where
        I: IntoIterator<Item = &'a CleanText>,
    {
        texts.into_iter().map(|t| encode(self, t, max_length)).collect()
    }

    /// Inverse of [`Tokenizer::tokenize`]; `[CLS]`, `[SEP]`, `[PAD]` and
    /// `[MASK]` are dropped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut bytes: Vec<u8> = Vec::new();
        for &id in ids {
            match SpecialToken::from_id(id) {
                Some(SpecialToken::Url | SpecialToken::User | SpecialToken::Unk) => {
                    if !bytes.is_empty() {
                        bytes.push(b' ');
                    }
                    bytes.extend_from_slice(SpecialToken::from_id(id).unwrap().text().as_bytes());
                }
                Some(_) => {}
                None if (id as usize) < self.learned_len() => bytes.extend_from_slice(self.piece(id)),
                None => {}
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }

    /// `token<TAB>id` lines in id order.
    pub fn vocab_file(&self) -> String {
        let mut s = String::new();
        for id in 0..self.learned_len() as u32 {
            let _ = writeln!(s, "{}\t{}", self.token_text(id).unwrap(), id);
        }
        s
    }

    /// One `left right` pair per line, in rank order.
    pub fn merges_file(&self) -> String {
        let mut s = String::new();
        for &(a, b) in &self.merges {
            let _ = writeln!(s, "{} {}", self.token_text(a).unwrap(), self.token_text(b).unwrap());
        }
        s
    }

    pub fn save(&self, vocab_path: &Path, merges_path: &Path) -> Result<()> {
        let header = format!("#vocab_size {}\n", self.vocab_size);
        fs::write(merges_path, header + &self.merges_file()).map_err(|e| Error::io(merges_path, e))?;
        fs::write(vocab_path, self.vocab_file()).map_err(|e| Error::io(vocab_path, e))
    }

    /// Rebuilds the tokenizer from its merges and checks the vocab file
    /// against the rebuilt table.
    pub fn load(vocab_path: &Path, merges_path: &Path) -> Result<Self> {
        let merges_text = fs::read_to_string(merges_path).map_err(|e| Error::io(merges_path, e))?;
        let vocab_text = fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        Self::from_files(&vocab_text, &merges_text)
    }

    pub fn from_files(vocab_text: &str, merges_text: &str) -> Result<Self> {
        let mut lines = merges_text.lines();
        let vocab_size = lines
            .next()
            .and_then(|l| l.strip_prefix("#vocab_size "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse("merges file lacks #vocab_size header".into()))?;
        let mut tok = Tokenizer::base(vocab_size);
        let mut by_text: HashMap<String, u32> = (FIRST_BYTE_ID..FIRST_MERGE_ID)
            .map(|id| (tok.token_text(id).unwrap(), id))
            .collect();
        for (n, line) in lines.enumerate() {
            let (a, b) = line
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("merges line {}: {line:?}", n + 2)))?;
            let lookup = |t: &str| {
                by_text
                    .get(t)
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("merges line {}: unknown token {t:?}", n + 2)))
            };
            let pair = (lookup(a)?, lookup(b)?);
            let id = tok.push_merge(pair);
            by_text.entry(tok.token_text(id).unwrap()).or_insert(id);
        }
        if tok.vocab_file() != vocab_text {
            return Err(Error::Parse("vocab file does not match merges".into()));
        }
        Ok(tok)
    }
}

/// `[CLS]` + subwords, truncated to `max_length` and padded with `[PAD]`.
pub fn encode(tok: &Tokenizer, text: &CleanText, max_length: usize) -> TokenSequence {
    let max_length = max_length.max(1);
    let mut ids = Vec::with_capacity(max_length);
    ids.push(SpecialToken::Cls.id());
    ids.extend(tok.tokenize(text.as_str()).into_iter().take(max_length - 1));
    let real = ids.len();
    ids.resize(max_length, SpecialToken::Pad.id());
    let mut attention_mask = vec![1u8; real];
    attention_mask.resize(max_length, 0);
    TokenSequence { ids, attention_mask }
}
