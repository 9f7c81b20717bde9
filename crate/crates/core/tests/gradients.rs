//! Central-difference checks of every hand-written backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siamzero::nnkernel::{grad_check, relative_error};
use siamzero::selfcheck::*;

fn assert_all_pass(reports: Reports) {
    let (name, r) = worst(&reports);
    assert!(
        r.passes(TOL),
        "{name}: max relative error {} at {} of {}",
        r.max_rel_error,
        r.worst_index,
        r.checked
    );
}

#[test]
fn conv2d_matches_central_differences() {
    assert_all_pass(conv2d_reports());
}

#[test]
fn dense_matches_central_differences() {
    assert_all_pass(dense_reports());
}

#[test]
fn batchnorm_train_matches_central_differences() {
    assert_all_pass(batchnorm_reports());
}

#[test]
fn sigmoid_bce_composite_matches_central_differences() {
    assert_all_pass(sigmoid_bce_reports());
}

#[test]
fn softmax_cross_entropy_matches_central_differences() {
    assert_all_pass(softmax_ce_reports());
}

/// Pair loss as a function of the embedded batch and the head.
#[test]
fn pair_loss_over_features_matches_central_differences() {
    assert_all_pass(pair_loss_feature_reports());
}

/// Every trainable tensor of the network, in double precision where the
/// step can be small enough to stay clear of ReLU and pooling switches.
#[test]
fn full_pair_loss_gradients_in_f64() {
    for seed in 0..5u64 {
        let problem = pair_problem::<f64>(seed);
        let grads = analytic_grads(&problem);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (ti, g) in grads.iter().enumerate() {
            let picks = rand::seq::index::sample(&mut rng, g.len(), g.len().min(8)).into_vec();
            let base: Vec<f64> = picks
                .iter()
                .map(|&i| problem.model.clone().trainable_mut()[ti].data()[i])
                .collect();
            let want: Vec<f64> = picks.iter().map(|&i| g[i]).collect();
            let report = grad_check(
                |v: &[f64]| {
                    let mut m = problem.model.clone();
                    {
                        let mut params = m.trainable_mut();
                        for (&i, &x) in picks.iter().zip(v) {
                            params[ti].data_mut()[i] = x;
                        }
                    }
                    loss_and_branches(&m, &problem.batch).0
                },
                &base,
                &want,
                1e-6,
            );
            assert!(report.passes(1e-4), "tensor {ti}, seed {seed}: {report:?}");
        }
    }
}

/// The single-precision backward pass agrees with the double-precision one
/// on the same network and batch.
#[test]
fn full_pair_loss_gradients_in_f32_track_f64() {
    for seed in 0..5u64 {
        let single = analytic_grads(&pair_problem::<f32>(seed));
        let double = analytic_grads(&pair_problem::<f64>(seed));
        for (ti, (a, b)) in single.iter().zip(&double).enumerate() {
            for (x, y) in a.iter().zip(b) {
                assert!(
                    relative_error(*x as f64, *y) <= 1e-3,
                    "tensor {ti}, seed {seed}: {x} vs {y}"
                );
            }
        }
    }
}

/// Off the kinks, single-precision differences of the whole network differ
/// from the backward pass by no more than forward rounding noise. Entries
/// with a near-zero true gradient (conv biases ahead of batch norm) are
/// dominated by that noise, so a relative bound is not meaningful there.
#[test]
fn full_pair_loss_in_f32_is_within_rounding_noise() {
    for seed in 0..5 {
        let probe = full_pair_loss_probe(seed, 6);
        assert!(probe.checked > 0);
        assert!(probe.max_noise_units <= 32.0, "seed {seed}: {probe:?}");
    }
}
