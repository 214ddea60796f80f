use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Normalized tweet text. Only [`normalize_text`] constructs it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CleanText(String);

impl CleanText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl AsRef<str> for CleanText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CleanText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const URL_TOKEN: &str = "HTTPURL";
pub const USER_TOKEN: &str = "@USER";

// Longest emoji sequence we try to match (ZWJ families, flags with tags).
const MAX_EMOJI_CHARS: usize = 10;
// Decoding can expose new URLs, mentions or entities (`&amp;amp;`,
// `&#64;name`); the pipeline reruns until its output stops changing.
const MAX_PASSES: usize = 8;

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)https?://\S*|\bwww\.\S+").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").unwrap())
}

/// URLs → `HTTPURL`, @mentions → `@USER`, HTML entities decoded, emoji →
/// `:shortcode:`, whitespace runs → one space, trimmed.
pub fn normalize_text(raw: &str) -> CleanText {
    let mut current = normalize_pass(raw);
    for _ in 1..MAX_PASSES {
        let next = normalize_pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    CleanText(current)
}

fn normalize_pass(raw: &str) -> String {
    let s = url_re().replace_all(raw, URL_TOKEN);
    let s = mention_re().replace_all(&s, USER_TOKEN);
    let s = decode_entities(&s);
    let s = replace_emoji(&s);
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn decode_entities(s: &str) -> String {
    let mut current = s.to_string();
    for _ in 0..MAX_PASSES {
        let next = html_escape::decode_html_entities(&current).into_owned();
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn emoji_shortcode(candidate: &str) -> Option<&'static str> {
    emojis::get(candidate).and_then(|e| e.shortcode())
}

/// Greedy longest-match replacement of emoji sequences by `:shortcode:`.
/// Emoji without a known shortcode pass through unchanged.
fn replace_emoji(s: &str) -> String {
    if s.is_ascii() {
        return s.to_string();
    }
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        // keycap sequences start with an ASCII digit, '#' or '*'
        let may_start = !c.is_ascii() || chars.get(i + 1).is_some_and(|(_, n)| !n.is_ascii());
        let mut matched = None;
        if may_start {
            let max = MAX_EMOJI_CHARS.min(chars.len() - i);
            for len in (1..=max).rev() {
                let end = chars.get(i + len).map_or(s.len(), |(b, _)| *b);
                if let Some(code) = emoji_shortcode(&s[start..end]) {
                    matched = Some((len, code));
                    break;
                }
            }
        }
        match matched {
            Some((len, code)) => {
                out.push(':');
                out.push_str(code);
                out.push(':');
                i += len;
            }
            None => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}
