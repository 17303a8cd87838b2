mod common;

use std::time::Instant;

use common::rank_one;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorfill::completion::{
    complete, complete_patch, spectral_k, svt, svt_truncated, update_weights,
    weights_from_normalized_ranks, CompletionParams, RankSurrogate,
};
use tensorfill::grid::{inverse_rearrange, unfold, Mode, Patch, RearrangedTensor, Tensor3};

fn remove_random(truth: &Tensor3<f64>, fraction: f64, seed: u64) -> RearrangedTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = truth.len();
    let mut omega = vec![true; n];
    for i in sample(&mut rng, n, (fraction * n as f64).round() as usize) {
        omega[i] = false;
    }
    let data = Tensor3::from_vec(
        truth.shape(),
        truth.as_slice().iter().zip(&omega).map(|(v, &ok)| if ok { *v } else { 0.0 }).collect(),
    )
    .unwrap();
    RearrangedTensor {
        data,
        omega: Tensor3::from_vec(truth.shape(), omega).unwrap(),
    }
}

fn relative_error(a: &Tensor3<f64>, b: &Tensor3<f64>) -> f64 {
    let num: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
    num.sqrt() / b.frobenius_norm()
}

#[test]
fn rank_one_exact_recovery() {
    let truth = rank_one([16, 23, 10], 11);
    assert!(truth.as_slice().iter().all(|&v| (0.1..=0.9).contains(&v)));
    let observed = remove_random(&truth, 0.3, 12);
    for surrogate in [RankSurrogate::Truncated, RankSurrogate::Nuclear] {
        let start = Instant::now();
        let params = CompletionParams { surrogate, ..Default::default() };
        let out = complete(&observed, &params).unwrap();
        let err = relative_error(&out.tensor.data, &truth);
        println!(
            "rank-1 recovery ({surrogate:?}): rel err {err:.2e}, {} iterations, {:.2}s, weights {:?}",
            out.iterations,
            start.elapsed().as_secs_f64(),
            out.weights
        );
        assert!(err < 1e-2);
        for (o, (&v, &ok)) in observed.data.as_slice().iter().zip(observed.omega.as_slice()).enumerate() {
            if ok {
                assert_eq!(out.tensor.data.as_slice()[o], v);
            }
        }
    }
}

/// Reference through a full SVD: leading `keep` values untouched.
fn truncated_by_svd(m: &DMatrix<f64>, threshold: f64, keep: usize) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut s = svd.singular_values.clone();
    for (rank, &i) in order.iter().enumerate() {
        if rank >= keep {
            s[i] = (s[i] - threshold).max(0.0);
        }
    }
    svd.u.unwrap() * DMatrix::from_diagonal(&s) * svd.v_t.unwrap()
}

#[test]
fn truncated_svt_matches_full_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let (r, c) = (rng.gen_range(1..9), rng.gen_range(1..9));
        let m = DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let theta = rng.gen_range(0.0..2.0);
        let keep = rng.gen_range(0..4);
        let diff = (svt_truncated(&m, theta, keep).unwrap() - truncated_by_svd(&m, theta, keep)).abs().max();
        assert!(diff < 1e-9, "{r}x{c} keep {keep}: {diff}");
    }
}

#[test]
fn rank_one_weights_follow_mode_sizes() {
    let truth = rank_one([6, 9, 4], 2);
    for mode in Mode::ALL {
        let s = tensorfill::completion::singular_values(&unfold(&truth, mode));
        assert_eq!(spectral_k(&s, 0.85).unwrap(), 1);
    }
    // k_n = 1 on every mode, so k~ = 1/s_n and w ∝ s_n
    let w = update_weights(&truth, 0.85).unwrap().as_array();
    let s = [6.0, 9.0, 4.0];
    for n in 0..3 {
        assert!((w[n] - s[n] / 19.0).abs() < 1e-12, "{w:?}");
    }
}

/// Whole 4x4 patch missing for 12 consecutive steps; the raw tensor form has
/// no way to see the other years at the same steps.
#[test]
fn rearranged_form_beats_raw_form_on_block_gaps() {
    let (m, nd, ny) = (4, 23, 10);
    let truth = rank_one([m * m, nd, ny], 21);
    let truth_patch = inverse_rearrange(
        &RearrangedTensor {
            omega: Tensor3::filled(truth.shape(), true),
            data: truth.clone(),
        },
        m,
        m,
    )
    .unwrap();
    let gap = 100..112;
    let omega = Tensor3::from_fn([m, m, nd * ny], |_, _, t| !gap.contains(&t));
    let data = Tensor3::from_fn([m, m, nd * ny], |i, j, t| {
        if gap.contains(&t) { 0.0 } else { *truth_patch.data.get(i, j, t) }
    });
    let patch = Patch::new(data, omega).unwrap();

    let block_mae = |p: &Patch| {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                for t in gap.clone() {
                    s += (p.data.get(i, j, t) - truth_patch.data.get(i, j, t)).abs();
                }
            }
        }
        s / (m * m * gap.len()) as f64
    };
    let rearranged = complete_patch(&patch, nd, &CompletionParams::default()).unwrap();
    let raw = complete_patch(
        &patch,
        nd,
        &CompletionParams { use_rearranged_form: false, ..Default::default() },
    )
    .unwrap();
    let (a, b) = (block_mae(&rearranged), block_mae(&raw));
    println!("block MAE rearranged {a:.4}, raw {b:.4}");
    assert!(b >= 2.0 * a);
}

#[test]
fn fully_valid_patch_is_identity_and_empty_patch_errors() {
    let data = Tensor3::from_fn([3, 3, 46], |i, j, t| 0.1 + 0.01 * (i + j + t % 23) as f64);
    let full = Patch::new(data.clone(), Tensor3::filled([3, 3, 46], true)).unwrap();
    assert_eq!(complete_patch(&full, 23, &CompletionParams::default()).unwrap(), full);
    let empty = Patch::new(data, Tensor3::filled([3, 3, 46], false)).unwrap();
    assert!(matches!(
        complete_patch(&empty, 23, &CompletionParams::default()),
        Err(tensorfill::Error::EmptyPatch)
    ));
}

#[test]
fn weights_sum_to_one_on_random_tensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let shape = [rng.gen_range(1..7), rng.gen_range(1..7), rng.gen_range(1..7)];
        let x = Tensor3::from_fn(shape, |_, _, _| rng.gen_range(-1.0..1.0));
        let w = update_weights(&x, 0.85).unwrap().as_array();
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(w.iter().all(|&v| v > 0.0));
    }
}

fn small_matrix() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        (
            proptest::collection::vec(-2.0f64..2.0, r * c),
            proptest::collection::vec(-2.0f64..2.0, r * c),
        )
            .prop_map(move |(a, b)| (DMatrix::from_vec(r, c, a), DMatrix::from_vec(r, c, b)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn svt_is_non_expansive((a, b) in small_matrix(), theta in 0.0f64..3.0) {
        let lhs = (svt(&a, theta).unwrap() - svt(&b, theta).unwrap()).norm();
        prop_assert!(lhs <= (&a - &b).norm() + 1e-9);
    }

    #[test]
    fn larger_tau_never_gives_smaller_k(
        mut sigma in proptest::collection::vec(0.0f64..10.0, 1..12),
        t1 in 0.01f64..0.99,
        t2 in 0.01f64..0.99,
    ) {
        sigma.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sigma.iter().sum::<f64>() > 0.0);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(spectral_k(&sigma, lo).unwrap() <= spectral_k(&sigma, hi).unwrap());
    }

    #[test]
    fn weight_rule_normalizes(k in proptest::array::uniform3(1e-3f64..=1.0)) {
        let w = weights_from_normalized_ranks(k).unwrap().as_array();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        // inverse relationship
        for a in 0..3 {
            for b in 0..3 {
                if k[a] < k[b] {
                    prop_assert!(w[a] > w[b]);
                }
            }
        }
    }
}
