use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::packing::VOCAB_SIZE;

fn tiny(seed: u64) -> LmParameters<f64> {
    let mut p = LmParameters::init(ModelConfig { seed, ..ModelConfig::tiny() }).unwrap();
    jitter(&mut p, seed, 0.3);
    p
}

/// Spreads parameters out so nonlinearities are exercised away from zero.
fn jitter<T: Tensors<f64>>(set: &mut T, seed: u64, amount: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (_, mut t) in set.tensors_mut() {
        t.mapv_inplace(|v| v + amount * (rng.gen::<f64>() - 0.5));
    }
}

fn random_tokens(rng: &mut ChaCha8Rng, len: usize) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(0..VOCAB_SIZE as u32)).collect()
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn numeric_grad<T: Tensors<f64> + Clone>(set: &T, f: impl Fn(&T) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let n = set.num_elements();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let bump = |delta: f64| {
            let mut s = set.clone();
            let mut k = i;
            for (_, mut t) in s.tensors_mut() {
                if k < t.len() {
                    *t.iter_mut().nth(k).unwrap() += delta;
                    break;
                }
                k -= t.len();
            }
            f(&s)
        };
        out.push((bump(h) - bump(-h)) / (2.0 * h));
    }
    out
}

fn loss_of(p: &LmParameters<f64>, a: Option<&LoraAdapter<f64>>, tokens: &[u32], mask: &[bool]) -> f64 {
    let out = forward(p, a, tokens).unwrap();
    nll_loss(out.logits.as_ref().unwrap(), &shifted_targets(tokens), mask).unwrap()
}

#[test]
fn base_gradients_match_finite_differences() {
    let p = tiny(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tokens = random_tokens(&mut rng, 6);
    let mask = vec![true; 6];
    let (_, g) = backward(&p, None, &tokens, &mask, GradTarget::Base).unwrap();
    let numeric = numeric_grad(&p, |q| loss_of(q, None, &tokens, &mask));
    let err = max_rel_err(&g.params.unwrap().flat(), &numeric);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn adapter_gradients_match_finite_differences() {
    let p = tiny(3);
    let mut a = LoraAdapter::new(&p.config, 2, 4.0, 9).unwrap();
    jitter(&mut a, 4, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tokens = random_tokens(&mut rng, 7);
    let mut mask = vec![true; 7];
    mask[2] = false;
    let (_, g) = backward(&p, Some(&a), &tokens, &mask, GradTarget::Adapter).unwrap();
    assert!(g.params.is_none());
    let numeric = numeric_grad(&a, |b| loss_of(&p, Some(b), &tokens, &mask));
    let err = max_rel_err(&g.adapter.unwrap().flat(), &numeric);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn tied_head_gradients_match_finite_differences() {
    let mut p = LmParameters::init(ModelConfig { tie_embeddings: true, ..ModelConfig::tiny() }).unwrap();
    jitter(&mut p, 11, 0.3);
    let tokens = vec![5, 9, 5, 200];
    let mask = vec![true; 4];
    let (_, g) = backward(&p, None, &tokens, &mask, GradTarget::Base).unwrap();
    let numeric = numeric_grad(&p, |q| loss_of(q, None, &tokens, &mask));
    assert!(max_rel_err(&g.params.unwrap().flat(), &numeric) < 1e-4);
}

#[test]
fn hidden_state_gradients_match_finite_differences() {
    let p = tiny(21);
    let tokens = vec![1, 2, 3, 4, 5];
    let w = Array2::from_shape_fn((5, p.config.d_model), |(i, j)| ((i * 7 + j) as f64).sin());
    let obj = |q: &LmParameters<f64>| (forward_hidden(q, None, &tokens).unwrap() * &w).sum();
    let (_, cache) = forward_cached(&p, None, &tokens, false).unwrap();
    let g = backward_from(&p, None, &cache, None, Some(&w), GradTarget::Base).unwrap();
    let numeric = numeric_grad(&p, obj);
    assert!(max_rel_err(&g.params.unwrap().flat(), &numeric) < 1e-4);
}

#[test]
fn single_position_mask_equals_single_position_gradient() {
    let p = tiny(7);
    let tokens = vec![10, 20, 30, 40, 50];
    let mut mask = vec![false; 5];
    mask[2] = true;
    let (loss, g) = backward(&p, None, &tokens, &mask, GradTarget::Base).unwrap();

    // Direct computation: the loss at position 2 only depends on tokens[..=3].
    let prefix = &tokens[..4];
    let (loss2, g2) = backward(&p, None, prefix, &[false, false, true, false], GradTarget::Base).unwrap();
    assert!((loss - loss2).abs() < 1e-12);
    let (a, b) = (g.params.unwrap(), g2.params.unwrap());
    let diff = a
        .flat()
        .iter()
        .zip(b.flat())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12, "max diff {diff}");
}

#[test]
fn causality_holds_for_random_inputs() {
    let p = tiny(8);
    let a = {
        let mut a = LoraAdapter::new(&p.config, 2, 4.0, 1).unwrap();
        jitter(&mut a, 2, 0.5);
        a
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let tokens = random_tokens(&mut rng, 12);
        let j = rng.gen_range(0..12);
        let mut changed = tokens.clone();
        changed[j] = (changed[j] + 1) % VOCAB_SIZE as u32;
        for adapter in [None, Some(&a)] {
            let x = forward(&p, adapter, &tokens).unwrap().logits.unwrap();
            let y = forward(&p, adapter, &changed).unwrap().logits.unwrap();
            for i in 0..j {
                assert_eq!(x.row(i), y.row(i), "position {i} saw a change at {j}");
            }
            assert_ne!(x.row(j), y.row(j));
        }
    }
}

#[test]
fn zero_b_adapter_is_exact_identity() {
    let p = tiny(10);
    let a = LoraAdapter::new(&p.config, 8, 16.0, 3).unwrap();
    let tokens = vec![1, 2, 3, 257, 4];
    let x = forward(&p, None, &tokens).unwrap();
    let y = forward(&p, Some(&a), &tokens).unwrap();
    assert_eq!(x.logits, y.logits);
    assert_eq!(lora_merge(&p, &a).unwrap(), p);
}

#[test]
fn merge_matches_adapted_forward_and_is_not_idempotent() {
    let p = tiny(12);
    let mut a = LoraAdapter::new(&p.config, 2, 4.0, 3).unwrap();
    jitter(&mut a, 5, 0.2);
    let merged = lora_merge(&p, &a).unwrap();
    let tokens = vec![3, 1, 4, 1, 5, 9, 2, 6];
    let x = forward(&p, Some(&a), &tokens).unwrap().logits.unwrap();
    let y = forward(&merged, None, &tokens).unwrap().logits.unwrap();
    let d = (&x - &y).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v));
    assert!(d <= 1e-5, "{d}");
    assert_ne!(lora_merge(&merged, &a).unwrap(), merged);
}

#[test]
fn merge_rejects_rank_mismatch() {
    let p = tiny(13);
    let mut a = LoraAdapter::new(&p.config, 2, 4.0, 3).unwrap();
    a.rank = 3;
    assert!(matches!(lora_merge(&p, &a), Err(crate::Error::RankMismatch(_))));
}

#[test]
fn uniform_logits_give_log_vocab() {
    let logits = Array2::<f64>::zeros((3, VOCAB_SIZE));
    let loss = nll_loss(&logits, &[1, 2, 3], &[true, true, true]).unwrap();
    assert!((loss - (VOCAB_SIZE as f64).ln()).abs() < 1e-12);
    assert!((loss - 5.5568).abs() < 1e-4);
}

#[test]
fn saturated_logits_give_near_zero_loss() {
    let mut logits = Array2::<f64>::zeros((2, VOCAB_SIZE));
    logits[[0, 7]] = 1000.0;
    logits[[1, 8]] = 1000.0;
    assert!(nll_loss(&logits, &[7, 8], &[true, true]).unwrap() < 1e-6);
}

#[test]
fn pad_targets_and_empty_support() {
    let logits = Array2::<f64>::zeros((2, VOCAB_SIZE));
    assert!(matches!(
        nll_loss(&logits, &[1, 2], &[false, false]),
        Err(crate::Error::EmptyLossSupport)
    ));
    assert!(matches!(
        nll_loss(&logits, &[1, crate::packing::PAD], &[false, true]),
        Err(crate::Error::EmptyLossSupport)
    ));
}

#[test]
fn forward_shape_and_errors() {
    let p = tiny(14);
    let out = forward(&p, None, &[42]).unwrap();
    assert_eq!(out.logits.unwrap().dim(), (1, VOCAB_SIZE));
    assert_eq!(out.hidden.dim(), (1, p.config.d_model));
    assert!(matches!(
        forward(&p, None, &[VOCAB_SIZE as u32]),
        Err(crate::Error::TokenOutOfRange { .. })
    ));
    let long = vec![1; p.config.max_positions + 1];
    assert!(matches!(forward(&p, None, &long), Err(crate::Error::SequenceTooLong { .. })));
}

#[test]
fn softmax_rows_sum_to_one_in_f32() {
    let p: LmParameters<f32> = tiny(15).cast();
    let out = forward(&p, None, &[1, 2, 3, 4]).unwrap();
    for row in out.logits.unwrap().rows() {
        let m = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let s: f64 = row.iter().map(|&v| ((v - m) as f64).exp()).sum();
        let probs: f64 = row.iter().map(|&v| ((v - m) as f64).exp() / s).sum();
        assert!((probs - 1.0).abs() < 1e-6);
    }
}

#[test]
fn init_is_seed_deterministic() {
    let a = LmParameters::<f64>::init(ModelConfig::default()).unwrap();
    let b = LmParameters::<f64>::init(ModelConfig::default()).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    let c = LmParameters::<f64>::init(ModelConfig { seed: 1, ..ModelConfig::default() }).unwrap();
    assert_ne!(a.fingerprint(), c.fingerprint());
    a.check_shapes().unwrap();
}

#[test]
fn checkpoint_round_trips_both_precisions() {
    let p = tiny(16);
    let mut a = LoraAdapter::new(&p.config, 2, 4.0, 3).unwrap();
    jitter(&mut a, 6, 0.2);
    let ck = Checkpoint {
        params: p.clone(),
        adapter: Some(a),
        meta: serde_json::json!({"mode": "hulm"}),
    };
    let back = Checkpoint::<f64>::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back, ck);
    assert_eq!(&ck.to_bytes().unwrap()[..4], b"HULM");

    let ck32 = Checkpoint::new(p.cast::<f32>());
    let back32 = Checkpoint::<f32>::from_bytes(&ck32.to_bytes().unwrap()).unwrap();
    assert_eq!(back32, ck32);
}

#[test]
fn checkpoint_rejects_garbage() {
    assert!(Checkpoint::<f64>::from_bytes(b"NOPE").is_err());
    let mut bytes = Checkpoint::new(tiny(17)).to_bytes().unwrap();
    bytes.truncate(bytes.len() - 8);
    assert!(Checkpoint::<f64>::from_bytes(&bytes).is_err());
}
