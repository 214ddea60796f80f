use crisiskd::numcore::{
    checkpoint, cross_entropy, kl_divergence, mse, softmax, weighted_cross_entropy, Adam, AdamConfig, ParamStore, Tape,
    Tensor,
};
use crisiskd::Error;
use proptest::prelude::*;

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn matmul_matches_triple_loop(
        (m, k, n, a, b) in (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(m, k, n)| {
            (Just(m), Just(k), Just(n), prop::collection::vec(-1.0f64..1.0, m * k), prop::collection::vec(-1.0f64..1.0, k * n))
        })
    ) {
        let mut tape: Tape<f64> = Tape::new();
        let va = tape.constant(Tensor::from_f64(&[m, k], &a).unwrap());
        let vb = tape.constant(Tensor::from_f64(&[k, n], &b).unwrap());
        let y = tape.matmul(va, vb).unwrap();
        let want = naive_matmul(&a, &b, m, k, n);
        for (g, w) in tape.value(y).data().iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_are_distributions_and_shift_invariant(row in prop::collection::vec(-30.0f64..30.0, 1..8), shift in -100.0f64..100.0) {
        let n = row.len();
        let p = softmax(&Tensor::<f64>::from_f64(&[1, n], &row).unwrap(), 1).unwrap();
        let shifted: Vec<f64> = row.iter().map(|x| x + shift).collect();
        let q = softmax(&Tensor::<f64>::from_f64(&[1, n], &shifted).unwrap(), 1).unwrap();
        prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!(*a >= 0.0 && (a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_is_non_negative(t in prop::collection::vec(-5.0f64..5.0, 4), s in prop::collection::vec(-5.0f64..5.0, 4), temp in 0.5f64..4.0) {
        let a = Tensor::from_f64(&[1, 4], &t).unwrap();
        let b = Tensor::from_f64(&[1, 4], &s).unwrap();
        prop_assert!(kl_divergence(&a, &b, temp).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&a, &a, temp).unwrap().abs() < 1e-12);
    }
}

#[test]
fn kl_matches_hand_computation() {
    let teacher = Tensor::from_f64(&[1, 2], &[0.0, 2.0f64.ln()]).unwrap();
    let student = Tensor::from_f64(&[1, 2], &[0.0, 0.0]).unwrap();
    // p = (1/3, 2/3), q = (1/2, 1/2), T = 1
    let want = (1.0 / 3.0) * ((1.0 / 3.0) / 0.5f64).ln() + (2.0 / 3.0) * ((2.0 / 3.0) / 0.5f64).ln();
    assert!((kl_divergence(&teacher, &student, 1.0).unwrap() - want).abs() < 1e-12);
    // temperature scales logits down and the result up by T²
    let t2 = Tensor::from_f64(&[1, 2], &[0.0, 2.0 * 2.0f64.ln()]).unwrap();
    assert!((kl_divergence(&t2, &student, 2.0).unwrap() - 4.0 * want).abs() < 1e-12);
}

#[test]
fn cross_entropy_matches_hand_computation() {
    let nll = |row: &[f64], c: usize| -> f64 {
        let z: f64 = row.iter().map(|x| x.exp()).sum();
        z.ln() - row[c]
    };
    let rows = [[1.0, 2.0, 0.5], [0.1, -1.0, 3.0]];
    let single = cross_entropy(&rows[0], 1, 2.0).unwrap();
    assert!((single - 2.0 * nll(&rows[0], 1)).abs() < 1e-12);
    let logits = Tensor::from_f64(&[2, 3], &[1.0, 2.0, 0.5, 0.1, -1.0, 3.0]).unwrap();
    let got = weighted_cross_entropy(&logits, &[1, 0], &[2.0, 0.5]).unwrap();
    let want = (2.0 * nll(&rows[0], 1) + 0.5 * nll(&rows[1], 0)) / 2.5;
    assert!((got - want).abs() < 1e-12);
    assert!(matches!(cross_entropy(&rows[0], 3, 1.0), Err(Error::IndexOutOfRange { .. })));
}

#[test]
fn mse_matches_hand_computation() {
    let a = Tensor::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let b = Tensor::from_f64(&[2, 2], &[0.0, 2.0, 5.0, 4.0]).unwrap();
    assert_eq!(mse(&a, &b).unwrap(), 5.0 / 4.0);
    let c = Tensor::<f64>::zeros(&[4]);
    assert!(matches!(mse(&a, &c), Err(Error::ShapeMismatch(..))));
}

#[test]
fn backward_of_composite_matches_calculus() {
    // f(x, w) = mean((x·w)²) with x: 1×2, w: 2×1, so df/dw = 2(x·w)·xᵀ
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.leaf(Tensor::from_f64(&[1, 2], &[3.0, -1.0]).unwrap());
    let w = tape.leaf(Tensor::from_f64(&[2, 1], &[0.5, 2.0]).unwrap());
    let zero = tape.constant(Tensor::from_f64(&[1, 1], &[0.0]).unwrap());
    let y = tape.matmul(x, w).unwrap();
    let loss = tape.mse(y, zero).unwrap();
    let grads = tape.backward(loss);
    let xw = 3.0 * 0.5 - 2.0;
    assert_eq!(tape.scalar(loss), xw * xw);
    assert_eq!(grads.get(w).unwrap(), &[2.0 * xw * 3.0, 2.0 * xw * -1.0]);
    assert_eq!(grads.get(x).unwrap(), &[2.0 * xw * 0.5, 2.0 * xw * 2.0]);
    assert!(grads.get(zero).is_none());
}

#[test]
fn adam_first_step_closed_form() {
    let mut params: ParamStore<f64> = ParamStore::new();
    params.insert("p", Tensor::from_f64(&[1], &[1.0]).unwrap());
    let config = AdamConfig::with_lr(0.1);
    let mut adam = Adam::new(config, &params);
    let g: f64 = 0.3;
    adam.step(&mut params, &[Some(vec![g])]).unwrap();
    // bias-corrected m̂ = g and v̂ = g² after one step
    let want = 1.0 - 0.1 * g / (g.abs() + config.eps);
    assert!((params.tensors()[0].data()[0] - want).abs() < 1e-15);
    assert_eq!(adam.step_count(), 1);
    assert!((adam.first_moment(0)[0] - 0.1 * g).abs() < 1e-15);
    assert!((adam.second_moment(0)[0] - 0.001 * g * g).abs() < 1e-15);

    // second step by hand
    let g2: f64 = -0.2;
    let m = 0.9 * 0.1 * g + 0.1 * g2;
    let v = 0.999 * 0.001 * g * g + 0.001 * g2 * g2;
    let (mh, vh) = (m / (1.0 - 0.81), v / (1.0 - 0.999f64.powi(2)));
    let want2 = want - 0.1 * mh / (vh.sqrt() + config.eps);
    adam.step(&mut params, &[Some(vec![g2])]).unwrap();
    assert!((params.tensors()[0].data()[0] - want2).abs() < 1e-14);
}

#[test]
fn adam_refuses_non_finite_gradients_without_touching_params() {
    let mut params: ParamStore<f64> = ParamStore::new();
    params.insert("a", Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
    params.insert("b", Tensor::from_f64(&[1], &[3.0]).unwrap());
    let mut adam = Adam::new(AdamConfig::default(), &params);
    let before = params.clone();
    let err = adam.step(&mut params, &[Some(vec![0.1, 0.2]), Some(vec![f64::NAN])]).unwrap_err();
    assert!(matches!(err, Error::Diverged));
    assert_eq!(params, before);
    assert_eq!(adam.step_count(), 0);
}

#[test]
fn checkpoint_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut params: ParamStore<f32> = ParamStore::new();
    params.insert("w", Tensor::new(vec![2, 3], vec![0.5, -1.25, 3.0, 1e-7, -0.0, 7.5]).unwrap());
    params.insert("b", Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
    let (bin, manifest) = (dir.path().join("p.bin"), dir.path().join("p.json"));
    checkpoint::save(&params, &bin, &manifest).unwrap();
    assert_eq!(std::fs::metadata(&bin).unwrap().len(), 9 * 4);

    let mut restored = params.clone();
    for t in restored.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    checkpoint::load_into(&mut restored, &bin, &manifest).unwrap();
    assert_eq!(checkpoint::encode(&restored).0, checkpoint::encode(&params).0);

    let all = checkpoint::load_all(&bin, &manifest).unwrap();
    assert_eq!(all.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(), ["w", "b"]);

    let mut wrong: ParamStore<f32> = ParamStore::new();
    wrong.insert("w", Tensor::zeros(&[3, 2]));
    wrong.insert("b", Tensor::zeros(&[3]));
    assert!(checkpoint::load_into(&mut wrong, &bin, &manifest).is_err());
}
