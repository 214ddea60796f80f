use crisiskd::bench::{format_speedup, render_table, run_benchmark, speedup_vs_baseline, synthetic_batch, BenchConfig};
use crisiskd::encoder::{EncoderConfig, EncoderModel};
use crisiskd::rng;
use crisiskd::Error;

fn model(h: usize, layers: usize) -> EncoderModel<f32> {
    let cfg = EncoderConfig::new(h, layers, 2, h * 2).with_vocab(100).with_max_positions(16);
    EncoderModel::new(cfg, &mut rng::stream(1, "bench")).unwrap()
}

fn quick(batch: usize) -> BenchConfig {
    BenchConfig { batch_size: batch, iterations: 3, warmup: 1, input_length: 16, seed: 5 }
}

#[test]
fn synthetic_batches_are_seeded_and_in_range() {
    let a = synthetic_batch(100, 4, 16, 9);
    assert_eq!(a, synthetic_batch(100, 4, 16, 9));
    assert_ne!(a, synthetic_batch(100, 4, 16, 10));
    assert_eq!(a.len(), 4);
    assert!(a.iter().all(|s| s.len() == 16 && s.ids.iter().all(|&i| (i as usize) < 100)));
}

#[test]
fn report_identities() {
    let r = run_benchmark("m", &model(16, 1), &quick(8)).unwrap();
    assert!(r.seconds_per_batch > 0.0);
    assert!((r.throughput * r.seconds_per_batch - 8.0).abs() <= 8.0 * 4.0 * f64::EPSILON);
    assert_eq!(r.params, model(16, 1).num_params());
    assert_eq!(speedup_vs_baseline(&r, &r).unwrap(), 1.0);
    assert_eq!(format_speedup(2.04), "x2.0");
    let table = render_table(std::slice::from_ref(&r), &r).unwrap();
    assert!(table.contains("x1.0"));
    assert!(r.to_json().unwrap().contains("\"throughput\""));
}

#[test]
fn mismatched_configs_are_not_compared() {
    let a = run_benchmark("a", &model(16, 1), &quick(8)).unwrap();
    let b = run_benchmark("b", &model(16, 1), &quick(4)).unwrap();
    assert!(matches!(speedup_vs_baseline(&a, &b), Err(Error::ConfigMismatch(_))));
}

#[test]
fn input_longer_than_positions_is_rejected() {
    let cfg = BenchConfig { input_length: 64, ..quick(2) };
    assert!(run_benchmark("m", &model(16, 1), &cfg).is_err());
}
