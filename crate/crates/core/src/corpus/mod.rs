//! Text normalization, corpus records and the shared subword tokenizer.

mod normalize;
mod record;
mod tokenizer;

pub use normalize::{normalize_text, CleanText};
pub use record::{read_jsonl, write_jsonl, RawRecord};
pub use tokenizer::{
    encode, train_tokenizer, SpecialToken, TokenSequence, Tokenizer, DEFAULT_MAX_LENGTH,
    DEFAULT_VOCAB_SIZE,
};
