use crisiskd::corpus::{normalize_text, read_jsonl, train_tokenizer, write_jsonl, RawRecord, SpecialToken, Tokenizer};
use crisiskd::dataset_builder::Label;
use proptest::prelude::*;

fn sample_corpus() -> Vec<crisiskd::corpus::CleanText> {
    [
        "need food and water in the north district",
        "we are donating food packets near the station",
        "stay safe everyone, the storm is moving east",
        "need blankets for families in the shelter",
        "donating blankets and water tonight @ngo https://t.co/x",
    ]
    .iter()
    .map(|s| normalize_text(s))
    .collect()
}

proptest! {
    #[test]
    fn normalized_text_has_no_urls_mentions_or_whitespace_runs(s in "[a-zA-Z@:/. \t\n&;#0-9wh]{0,60}") {
        let out = normalize_text(&s);
        let t = out.as_str();
        prop_assert!(!t.contains("http://") && !t.contains("https://"));
        prop_assert!(!t.contains("  ") && !t.contains('\n') && !t.contains('\t'));
        prop_assert_eq!(t.trim(), t);
        let stripped = t.replace("@USER", "");
        let mention = stripped.char_indices().any(|(i, c)| c == '@' && stripped[i + 1..].chars().next().is_some_and(|n| n.is_alphanumeric() || n == '_'));
        prop_assert!(!mention, "raw mention left in {:?}", t);
        let again = normalize_text(t);
        prop_assert_eq!(again.as_str(), t);
    }

    #[test]
    fn decode_inverts_tokenize(words in prop::collection::vec("[a-z]{1,8}", 1..8)) {
        let tok = train_tokenizer(sample_corpus().iter(), 320).unwrap();
        let text = words.join(" ");
        prop_assert_eq!(tok.decode(&tok.tokenize(&text)), text);
    }
}

#[test]
fn special_ids_are_fixed_and_bytes_follow() {
    let tok = train_tokenizer(sample_corpus().iter(), 300).unwrap();
    assert_eq!(tok.special_id(SpecialToken::Pad), 0);
    assert_eq!(tok.special_id(SpecialToken::Url), tok.token_id("HTTPURL").unwrap());
    assert_eq!(tok.special_id(SpecialToken::User), tok.token_id("@USER").unwrap());
    assert!(tok.learned_len() > 263);
    assert!(tok.learned_len() <= 300);
    assert_eq!(tok.vocab_size(), 300);
}

#[test]
fn encode_pads_truncates_and_masks() {
    let tok = train_tokenizer(sample_corpus().iter(), 300).unwrap();
    let cls = tok.special_id(SpecialToken::Cls);
    let pad = tok.special_id(SpecialToken::Pad);
    let short = tok.encode(&normalize_text("need food"), 16);
    assert_eq!(short.len(), 16);
    assert_eq!(short.ids[0], cls);
    let real = short.real_len();
    assert!(real >= 3 && real < 16);
    assert!(short.ids[real..].iter().all(|&i| i == pad));
    assert!(short.attention_mask[..real].iter().all(|&m| m == 1));
    assert!(short.attention_mask[real..].iter().all(|&m| m == 0));

    let long = tok.encode(&normalize_text(&"need food ".repeat(40)), 16);
    assert_eq!(long.len(), 16);
    assert_eq!(long.real_len(), 16);

    let url = tok.encode(&normalize_text("see https://t.co/abc now @bob"), 16);
    assert!(url.ids.contains(&tok.special_id(SpecialToken::Url)));
    assert!(url.ids.contains(&tok.special_id(SpecialToken::User)));
}

#[test]
fn training_is_deterministic() {
    let a = train_tokenizer(sample_corpus().iter(), 320).unwrap();
    let b = train_tokenizer(sample_corpus().iter(), 320).unwrap();
    assert_eq!(a.merges(), b.merges());
    assert_eq!(a.vocab_file(), b.vocab_file());
}

#[test]
fn tokenizer_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tok = train_tokenizer(sample_corpus().iter(), 320).unwrap();
    let (v, m) = (dir.path().join("vocab.txt"), dir.path().join("merges.txt"));
    tok.save(&v, &m).unwrap();
    let back = Tokenizer::load(&v, &m).unwrap();
    assert_eq!(back.merges(), tok.merges());
    assert_eq!(back.vocab_size(), tok.vocab_size());
    for text in sample_corpus() {
        assert_eq!(back.encode(&text, 24), tok.encode(&text, 24));
    }
    // a vocab file that disagrees with the merges is rejected
    let tampered = std::fs::read_to_string(&v).unwrap().replacen("need", "deen", 1);
    assert!(Tokenizer::from_files(&tampered, &std::fs::read_to_string(&m).unwrap()).is_err() || !tampered.contains("deen"));
}

#[test]
fn jsonl_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let mut a = RawRecord::new("1", "need water").with_label(Label::Request);
    a.country = Some("IND".into());
    let b = RawRecord::new("2", "all good");
    write_jsonl(&path, &[a.clone(), b.clone()]).unwrap();
    let back: Vec<RawRecord> = read_jsonl(&path).unwrap();
    assert_eq!(back, vec![a.clone(), b]);
    assert!(RawRecord::validate_all(&[a.clone(), a.clone()]).is_err());
    assert!(RawRecord::new("3", "   ").validate().is_err());
    assert!(RawRecord::new("", "x").validate().is_err());
}
