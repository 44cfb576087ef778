//! Kernel correctness against the plaintext matrix-product oracle.

use ndarray::{array, Array2};
use plora_ckks::{decode, decrypt, keygen, CkksParams, KeyMaterial};
use plora_he_linalg::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn keys_for(params: &CkksParams, layout: &PackLayout, seed: u64) -> KeyMaterial {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    keygen(params, &layout.required_steps(), &mut rng).unwrap()
}

/// Dense-loop oracle: x * A1 * A2 + Q_t.
fn oracle(x: &Array2<f64>, a1: &Array2<f64>, a2: &Array2<f64>, qt: &Array2<f64>) -> Array2<f64> {
    x.dot(a1).dot(a2) + qt
}

fn rel_err(actual: &Array2<f64>, expected: &Array2<f64>) -> f64 {
    let denom = expected.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
    actual
        .iter()
        .zip(expected.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / denom
}

#[test]
fn pack_reproduces_replicated_layout() {
    let params = CkksParams::test_small();
    // d=1, m=2 (m_pad=2), r=2: slots [5, 6, 5, 6, 0, ...]
    let layout = PackLayout::new(1, 2, 2, 2, params.slot_count()).unwrap();
    let km = keys_for(&params, &layout, 1);
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let x = array![[5.0, 6.0]];
    let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
    assert_eq!(packed.cts.len(), 1);
    let slots = decode(&params, &decrypt(&params, &packed.cts[0], &km.secret).unwrap()).unwrap();
    for (i, expected) in [5.0, 6.0, 5.0, 6.0, 0.0, 0.0, 0.0, 0.0].iter().enumerate() {
        assert!((slots[i] - expected).abs() <= 1e-6, "slot {i}: {}", slots[i]);
    }
}

#[test]
fn pack_chunks_rows() {
    let params = CkksParams::test_small();
    // blocks of 512 slots -> 2 rows per ct at N=2048
    let layout = PackLayout::new(5, 64, 8, 16, params.slot_count()).unwrap();
    assert_eq!(layout.rows_per_ct, 2);
    assert_eq!(layout.ct_count, 3);
    let km = keys_for(&params, &layout, 3);
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let x = Array2::from_shape_fn((5, 64), |(i, j)| (i * 64 + j) as f64 / 512.0);
    let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
    assert_eq!(packed.cts.len(), 3);
    // row 4 lives in chunk 2, local row 0
    let slots = decode(&params, &decrypt(&params, &packed.cts[2], &km.secret).unwrap()).unwrap();
    assert!((slots[layout.slot_of(0, 3, 17)] - x[[4, 17]]).abs() <= 1e-6);
}

#[test]
fn worked_single_row_example() {
    // x=[1,2], A1=[[3],[4]], A2=[[1,-1]], Qt=[[0.5,0.5]] -> [11.5, -10.5]
    let params = CkksParams::test_small();
    let layout = PackLayout::new(1, 2, 1, 2, params.slot_count()).unwrap();
    let km = keys_for(&params, &layout, 5);
    let mut rng = ChaCha12Rng::seed_from_u64(6);

    let x = array![[1.0, 2.0]];
    let a1 = array![[3.0], [4.0]];
    let a2 = array![[1.0, -1.0]];
    let qt = array![[0.5, 0.5]];

    let ops = build_server_operands(&params, &layout, &a1, &a2, &qt, None, &mut rng).unwrap();
    let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
    let (result, stats) = he_lora_apply(&params, &packed, &ops, &km.public, false).unwrap();
    let out = extract_result(&params, &result, &km.secret).unwrap();

    assert!((out[[0, 0]] - 11.5).abs() <= 1e-3, "got {}", out[[0, 0]]);
    assert!((out[[0, 1]] + 10.5).abs() <= 1e-3, "got {}", out[[0, 1]]);
    assert_eq!(stats.levels_consumed, 3);
    assert_eq!(stats.rotations_per_ct, layout.rotations_per_ct());
}

#[test]
fn zero_a1_returns_offset_exactly() {
    let params = CkksParams::test_small();
    let layout = PackLayout::new(2, 8, 2, 4, params.slot_count()).unwrap();
    let km = keys_for(&params, &layout, 7);
    let mut rng = ChaCha12Rng::seed_from_u64(8);

    let x = Array2::from_shape_fn((2, 8), |_| rng.random_range(-1.0..1.0f64));
    let a1 = Array2::zeros((8, 2));
    let a2 = Array2::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0f64));
    let qt = Array2::from_shape_fn((2, 4), |_| rng.random_range(-2.0..2.0f64));

    let ops = build_server_operands(&params, &layout, &a1, &a2, &qt, Some(5.0), &mut rng).unwrap();
    let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
    let (result, _) = he_lora_apply(&params, &packed, &ops, &km.public, false).unwrap();
    let out = extract_result(&params, &result, &km.secret).unwrap();
    let err = rel_err(&out, &qt);
    assert!(err <= 1e-3, "annihilation error {err}");
}

#[test]
fn depth_and_rotation_contract() {
    let params = CkksParams::test_small();
    for (m, r) in [(2usize, 1usize), (8, 2), (64, 8), (16, 4)] {
        let layout = PackLayout::new(2, m, r, m.min(4), params.slot_count()).unwrap();
        let km = keys_for(&params, &layout, 9);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let x = Array2::from_shape_fn((2, m), |_| rng.random_range(-1.0..1.0f64));
        let a1 = Array2::from_shape_fn((m, r), |_| rng.random_range(-1.0..1.0f64));
        let a2 = Array2::from_shape_fn((r, layout.n), |_| rng.random_range(-1.0..1.0f64));
        let qt = Array2::zeros((2, layout.n));

        let ops = build_server_operands(&params, &layout, &a1, &a2, &qt, None, &mut rng).unwrap();
        let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
        let input_level = packed.level;
        let (result, stats) = he_lora_apply(&params, &packed, &ops, &km.public, false).unwrap();

        assert_eq!(result.level, input_level - 3, "depth contract at m={m}, r={r}");
        assert_eq!(stats.levels_consumed, 3);
        let expected_rot =
            2 * (layout.m_pad.trailing_zeros() as usize) + layout.r_pad.trailing_zeros() as usize;
        assert_eq!(stats.rotations_per_ct, expected_rot, "rotations at m={m}, r={r}");
        assert_eq!(stats.plaintext_mults_per_ct, 3);

        let out = extract_result(&params, &result, &km.secret).unwrap();
        let expected = oracle(&x, &a1, &a2, &qt);
        assert!(rel_err(&out, &expected) <= 1e-3);
    }
}

#[test]
fn random_sweep_matches_oracle() {
    let params = CkksParams::test_small();
    let mut rng = ChaCha12Rng::seed_from_u64(1234);
    for trial in 0..10 {
        let d: usize = rng.random_range(1..=4);
        let m: usize = rng.random_range(1..=32);
        let r: usize = rng.random_range(1..=4);
        let m_pad = m.next_power_of_two();
        let n: usize = rng.random_range(1..=m_pad);
        let layout = PackLayout::new(d, m, r, n, params.slot_count()).unwrap();
        let km = keys_for(&params, &layout, 100 + trial);
        let x = Array2::from_shape_fn((d, m), |_| rng.random_range(-1.0..1.0f64));
        let a1 = Array2::from_shape_fn((m, r), |_| rng.random_range(-1.0..1.0f64));
        let a2 = Array2::from_shape_fn((r, n), |_| rng.random_range(-1.0..1.0f64));
        let qt = Array2::from_shape_fn((d, n), |_| rng.random_range(-1.0..1.0f64));

        let ops = build_server_operands(&params, &layout, &a1, &a2, &qt, Some(3.0), &mut rng).unwrap();
        let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
        let parallel = trial % 2 == 0;
        let (result, _) = he_lora_apply(&params, &packed, &ops, &km.public, parallel).unwrap();
        let out = extract_result(&params, &result, &km.secret).unwrap();
        let expected = oracle(&x, &a1, &a2, &qt);
        let err = rel_err(&out, &expected);
        assert!(err <= 1e-3, "trial {trial} (d={d} m={m} r={r} n={n}): error {err}");
    }
}

#[test]
fn multi_chunk_rows_reassemble_in_order() {
    let params = CkksParams::test_small();
    let layout = PackLayout::new(5, 64, 8, 8, params.slot_count()).unwrap();
    assert!(layout.ct_count > 1);
    let km = keys_for(&params, &layout, 20);
    let mut rng = ChaCha12Rng::seed_from_u64(21);

    let x = Array2::from_shape_fn((5, 64), |(i, _)| i as f64 / 4.0);
    let a1 = Array2::from_shape_fn((64, 8), |_| rng.random_range(-0.2..0.2f64));
    let a2 = Array2::from_shape_fn((8, 8), |_| rng.random_range(-0.2..0.2f64));
    let qt = Array2::zeros((5, 8));

    let ops = build_server_operands(&params, &layout, &a1, &a2, &qt, Some(2.0), &mut rng).unwrap();
    let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
    let (result, _) = he_lora_apply(&params, &packed, &ops, &km.public, true).unwrap();
    let out = extract_result(&params, &result, &km.secret).unwrap();
    let expected = oracle(&x, &a1, &a2, &qt);
    assert!(rel_err(&out, &expected) <= 1e-3);
}

#[test]
fn identity_embedding_returns_leading_columns() {
    // A1*A2 embeds the n x n identity into the top-left block, so the kernel
    // returns x's first n columns.
    let params = CkksParams::test_small();
    let (m, n, r) = (8usize, 2usize, 2usize);
    let layout = PackLayout::new(2, m, r, n, params.slot_count()).unwrap();
    let km = keys_for(&params, &layout, 30);
    let mut rng = ChaCha12Rng::seed_from_u64(31);

    let mut a1 = Array2::zeros((m, r));
    a1[[0, 0]] = 1.0;
    a1[[1, 1]] = 1.0;
    let mut a2 = Array2::zeros((r, n));
    a2[[0, 0]] = 1.0;
    a2[[1, 1]] = 1.0;
    let x = Array2::from_shape_fn((2, m), |_| rng.random_range(-1.0..1.0f64));
    let qt = Array2::zeros((2, n));

    let ops = build_server_operands(&params, &layout, &a1, &a2, &qt, Some(4.0), &mut rng).unwrap();
    let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
    let (result, _) = he_lora_apply(&params, &packed, &ops, &km.public, false).unwrap();
    let out = extract_result(&params, &result, &km.secret).unwrap();
    for i in 0..2 {
        for j in 0..n {
            assert!((out[[i, j]] - x[[i, j]]).abs() <= 1e-3);
        }
    }
}

/// Junk slots decrypt to values that are statistically uniform over the
/// declared range and carry no dependence on A2.
#[test]
fn junk_slots_are_opaque() {
    let params = CkksParams::test_small();
    let layout = PackLayout::new(2, 8, 2, 4, params.slot_count()).unwrap();
    let km = keys_for(&params, &layout, 40);
    let bound = 24.0;

    let collect_junk = |a2: &Array2<f64>, seed: u64| -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((2, 8), |_| rng.random_range(-1.0..1.0f64));
        let a1 = Array2::from_shape_fn((8, 2), |_| rng.random_range(-1.0..1.0f64));
        let qt = Array2::zeros((2, 4));
        let ops =
            build_server_operands(&params, &layout, &a1, a2, &qt, Some(bound), &mut rng).unwrap();
        let packed = pack_input(&params, &x, &layout, &km.public, &mut rng).unwrap();
        let (result, _) = he_lora_apply(&params, &packed, &ops, &km.public, false).unwrap();
        let slots =
            decode(&params, &decrypt(&params, &result.cts[0], &km.secret).unwrap()).unwrap();
        let mut junk = Vec::new();
        for l in 0..layout.rows_per_ct {
            for rho in 0..layout.r_pad {
                for j in 0..layout.m_pad {
                    let is_result = rho == 0 && j < layout.n;
                    if !is_result {
                        junk.push(slots[layout.slot_of(l, rho, j)]);
                    }
                }
            }
        }
        junk
    };

    let mut rng = ChaCha12Rng::seed_from_u64(41);
    let a2_a = Array2::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0f64));
    let a2_b = Array2::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0f64));

    let mut junk_a = Vec::new();
    let mut junk_b = Vec::new();
    for s in 0..12 {
        junk_a.extend(collect_junk(&a2_a, 500 + s));
        junk_b.extend(collect_junk(&a2_b, 500 + s)); // same seeds, different A2
    }

    // residual partial sums are bounded by ~m * |x| * |a1| * |a2| = 8 here
    let slack = 8.0;
    for junk in [&junk_a, &junk_b] {
        let n = junk.len() as f64;
        let mean = junk.iter().sum::<f64>() / n;
        let tol = 4.0 * (bound + slack) / (3.0 * n).sqrt();
        assert!(mean.abs() <= tol, "junk mean {mean} beyond {tol}");
        assert!(junk.iter().all(|v| v.abs() <= bound + slack));
        let min = junk.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = junk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min < -0.7 * bound && max > 0.7 * bound);
    }

    // distributional independence from A2: compare means and variances
    let stats = |junk: &[f64]| {
        let n = junk.len() as f64;
        let mean = junk.iter().sum::<f64>() / n;
        let var = junk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    };
    let (ma, va) = stats(&junk_a);
    let (mb, vb) = stats(&junk_b);
    let uniform_sd = (bound * bound / 3.0).sqrt();
    assert!((ma - mb).abs() <= 8.0 * uniform_sd / (junk_a.len() as f64).sqrt() + 0.5);
    assert!((va / vb - 1.0).abs() <= 0.25, "variances drifted: {va} vs {vb}");
}

/// With Q_t = 0 and junk disabled the kernel is linear in x.
#[test]
fn kernel_is_linear_without_offsets() {
    let params = CkksParams::test_small();
    let layout = PackLayout::new(2, 8, 2, 4, params.slot_count()).unwrap();
    let km = keys_for(&params, &layout, 50);
    let mut rng = ChaCha12Rng::seed_from_u64(51);

    let a1 = Array2::from_shape_fn((8, 2), |_| rng.random_range(-1.0..1.0f64));
    let a2 = Array2::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0f64));
    let qt = Array2::zeros((2, 4));
    let ops = build_server_operands(&params, &layout, &a1, &a2, &qt, None, &mut rng).unwrap();

    let x1 = Array2::from_shape_fn((2, 8), |_| rng.random_range(-0.5..0.5f64));
    let x2 = Array2::from_shape_fn((2, 8), |_| rng.random_range(-0.5..0.5f64));
    let x_sum = &x1 + &x2;

    let apply = |x: &Array2<f64>, rng: &mut ChaCha12Rng| {
        let packed = pack_input(&params, x, &layout, &km.public, rng).unwrap();
        let (result, _) = he_lora_apply(&params, &packed, &ops, &km.public, false).unwrap();
        extract_result(&params, &result, &km.secret).unwrap()
    };

    let y1 = apply(&x1, &mut rng);
    let y2 = apply(&x2, &mut rng);
    let y_sum = apply(&x_sum, &mut rng);
    let expected = &y1 + &y2;
    let err = rel_err(&y_sum, &expected);
    assert!(err <= 1e-3, "linearity violated: {err}");
}
