//! Seeded finite-difference suites for every hand-written backward pass.

use crate::nnkernel::*;
use crate::prep::{NormalizedImage, CANVAS};
use crate::scalar::Scalar;
use crate::siamese::{
    build_model, pair_loss, pair_loss_and_grads, ArchitectureSpec, Model, PairBatch, PairIndex,
    SimilarityHead,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const EPS: f32 = 1e-3;
/// Relative error an analytic gradient may show.
pub const TOL: f64 = 1e-2;

fn uniform(rng: &mut ChaCha8Rng, len: usize, scale: f32) -> Vec<f32> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor<f32> {
    let len = shape.iter().product();
    Tensor::new(shape, uniform(rng, len, scale)).unwrap()
}

/// Scalar probe `Σ r·y` turning a tensor output into a loss.
fn project(y: &Tensor<f32>, r: &[f32]) -> f64 {
    y.data()
        .iter()
        .zip(r)
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

/// Named reports, one per checked gradient.
pub type Reports = Vec<(String, GradCheckReport)>;

pub fn worst(reports: &Reports) -> (&str, GradCheckReport) {
    let (name, r) = reports
        .iter()
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error))
        .expect("at least one report");
    (name, *r)
}

const CONV_SHAPES: [(usize, usize, usize, usize, usize, usize); 5] = [
    (1, 1, 1, 4, 4, 3),
    (2, 2, 3, 5, 6, 3),
    (1, 3, 2, 4, 4, 1),
    (2, 1, 2, 7, 7, 5),
    (3, 2, 2, 6, 4, 3),
];

pub fn conv2d_reports() -> Reports {
    let mut out = Vec::new();
    for (seed, &(n, ci, co, h, w, k)) in CONV_SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let x = tensor(&mut rng, &[n, ci, h, w], 1.0);
        let wt = tensor(&mut rng, &[co, ci, k, k], 1.0);
        let b = tensor(&mut rng, &[co], 1.0);
        let r = uniform(&mut rng, n * co * h * w, 1.0);
        let gout = Tensor::new(&[n, co, h, w], r.clone()).unwrap();
        let g = conv2d_backward(&x, &wt, &gout).unwrap();

        let fx = |v: &[f32]| {
            let xv = Tensor::new(x.shape(), v.to_vec()).unwrap();
            project(&conv2d_forward(&xv, &wt, &b).unwrap(), &r)
        };
        out.push((
            format!("conv dx #{seed}"),
            grad_check(fx, x.data(), g.dx.data(), EPS),
        ));
        let fw = |v: &[f32]| {
            let wv = Tensor::new(wt.shape(), v.to_vec()).unwrap();
            project(&conv2d_forward(&x, &wv, &b).unwrap(), &r)
        };
        out.push((
            format!("conv dw #{seed}"),
            grad_check(fw, wt.data(), g.dw.data(), EPS),
        ));
        let fb = |v: &[f32]| {
            let bv = Tensor::new(b.shape(), v.to_vec()).unwrap();
            project(&conv2d_forward(&x, &wt, &bv).unwrap(), &r)
        };
        out.push((
            format!("conv db #{seed}"),
            grad_check(fb, b.data(), g.db.data(), EPS),
        ));
    }
    out
}

pub fn dense_reports() -> Reports {
    let mut out = Vec::new();
    for (seed, &(n, din, dout)) in [(1, 3, 2), (2, 5, 4), (4, 8, 3), (3, 1, 6), (5, 16, 8)]
        .iter()
        .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed as u64);
        let x = tensor(&mut rng, &[n, din], 1.0);
        let w = tensor(&mut rng, &[dout, din], 1.0);
        let b = tensor(&mut rng, &[dout], 1.0);
        let r = uniform(&mut rng, n * dout, 1.0);
        let g = dense_backward(&x, &w, &Tensor::new(&[n, dout], r.clone()).unwrap()).unwrap();
        let with = |x: &Tensor<f32>, w: &Tensor<f32>, b: &Tensor<f32>| {
            project(&dense_forward(x, w, b).unwrap(), &r)
        };

        let fx = |v: &[f32]| with(&Tensor::new(x.shape(), v.to_vec()).unwrap(), &w, &b);
        out.push((
            format!("dense dx #{seed}"),
            grad_check(fx, x.data(), g.dx.data(), EPS),
        ));
        let fw = |v: &[f32]| with(&x, &Tensor::new(w.shape(), v.to_vec()).unwrap(), &b);
        out.push((
            format!("dense dw #{seed}"),
            grad_check(fw, w.data(), g.dw.data(), EPS),
        ));
        let fb = |v: &[f32]| with(&x, &w, &Tensor::new(b.shape(), v.to_vec()).unwrap());
        out.push((
            format!("dense db #{seed}"),
            grad_check(fb, b.data(), g.db.data(), EPS),
        ));
    }
    out
}

pub fn batchnorm_reports() -> Reports {
    let mut out = Vec::new();
    for (seed, &(n, c, h, w)) in [
        (2, 1, 2, 2),
        (3, 2, 3, 3),
        (4, 3, 2, 1),
        (2, 2, 4, 4),
        (5, 1, 3, 2),
    ]
    .iter()
    .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed as u64);
        let x = tensor(&mut rng, &[n, c, h, w], 2.0);
        let mut state = BatchNormState::<f32>::new(c);
        state.gamma =
            Tensor::new(&[c], (0..c).map(|_| rng.random_range(0.5..1.5)).collect()).unwrap();
        state.beta = tensor(&mut rng, &[c], 1.0);
        let r = uniform(&mut rng, x.len(), 1.0);
        let (_, cache) = batchnorm_train(&x, &mut state.clone()).unwrap();
        let g = batchnorm_backward(&Tensor::new(x.shape(), r.clone()).unwrap(), &cache, &state)
            .unwrap();

        let base = state.clone();
        let fx = |v: &[f32]| {
            let (y, _) = batchnorm_train(
                &Tensor::new(x.shape(), v.to_vec()).unwrap(),
                &mut base.clone(),
            )
            .unwrap();
            project(&y, &r)
        };
        out.push((
            format!("bn dx #{seed}"),
            grad_check(fx, x.data(), g.dx.data(), EPS),
        ));
        let fg = |v: &[f32]| {
            let mut s = base.clone();
            s.gamma = Tensor::new(&[c], v.to_vec()).unwrap();
            project(&batchnorm_train(&x, &mut s).unwrap().0, &r)
        };
        out.push((
            format!("bn dgamma #{seed}"),
            grad_check(fg, base.gamma.data(), g.dgamma.data(), EPS),
        ));
        let fb = |v: &[f32]| {
            let mut s = base.clone();
            s.beta = Tensor::new(&[c], v.to_vec()).unwrap();
            project(&batchnorm_train(&x, &mut s).unwrap().0, &r)
        };
        out.push((
            format!("bn dbeta #{seed}"),
            grad_check(fb, base.beta.data(), g.dbeta.data(), EPS),
        ));
    }
    out
}

/// `Σ bce(σ(z), y)` against both the chained pieces and the fused derivative.
pub fn sigmoid_bce_reports() -> Reports {
    let mut out = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let z = uniform(&mut rng, 8, 4.0);
        let y: Vec<f32> = (0..8)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let chained: Vec<f32> = z
            .iter()
            .zip(&y)
            .map(|(&zi, &yi)| {
                let p = sigmoid_scalar(zi);
                bce_backward(p, yi) * p * (1.0 - p)
            })
            .collect();
        let fused: Vec<f32> = z
            .iter()
            .zip(&y)
            .map(|(&zi, &yi)| sigmoid_bce(zi, yi).1)
            .collect();
        let f = |v: &[f32]| {
            v.iter()
                .zip(&y)
                .map(|(&zi, &yi)| bce_loss(sigmoid_scalar(zi), yi) as f64)
                .sum()
        };
        out.push((
            format!("bce chained #{seed}"),
            grad_check(f, &z, &chained, EPS),
        ));
        out.push((format!("bce fused #{seed}"), grad_check(f, &z, &fused, EPS)));
    }
    out
}

pub fn softmax_ce_reports() -> Reports {
    let mut out = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let n = 1 + seed as usize;
        let logits = tensor(&mut rng, &[n, 3], 3.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        let f = |v: &[f32]| {
            softmax_cross_entropy(&Tensor::new(&[n, 3], v.to_vec()).unwrap(), &labels)
                .unwrap()
                .0 as f64
        };
        out.push((
            format!("softmax ce #{seed}"),
            grad_check(f, logits.data(), g.data(), EPS),
        ));
    }
    out
}

/// Every component suite, by operator name.
pub fn component_suites() -> Vec<(&'static str, Reports)> {
    vec![
        ("conv2d", conv2d_reports()),
        ("dense", dense_reports()),
        ("batchnorm", batchnorm_reports()),
        ("sigmoid+bce", sigmoid_bce_reports()),
        ("softmax+ce", softmax_ce_reports()),
        ("pair loss", pair_loss_feature_reports()),
    ]
}

fn random_image(rng: &mut ChaCha8Rng) -> NormalizedImage {
    NormalizedImage::new(
        (0..CANVAS * CANVAS)
            .map(|_| rng.random_range(0.0..1.0))
            .collect(),
    )
    .unwrap()
}

pub struct PairProblem<T> {
    pub model: Model<T>,
    pub batch: PairBatch<T>,
}

/// A narrow network with a random head and a batch of 3 to 5 random images.
pub fn pair_problem<T: Scalar>(seed: u64) -> PairProblem<T> {
    let arch = ArchitectureSpec::default().narrowed(16);
    let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
    let mut model = build_model::<T>(&arch, seed).unwrap();
    // a zero head would block every gradient below it
    for v in model.head.weight.data_mut() {
        *v = T::lit(rng.random_range(-1.0..1.0));
    }
    model.head.bias.data_mut()[0] = T::lit(rng.random_range(-0.5..0.5));
    let count = 3 + seed as usize % 3;
    let images: Vec<NormalizedImage> = (0..count).map(|_| random_image(&mut rng)).collect();
    let refs: Vec<&NormalizedImage> = images.iter().collect();
    let pairs = (0..count)
        .map(|i| PairIndex {
            template: i,
            sample: (i + 1 + seed as usize) % count,
            label: i % 2 == 0,
        })
        .filter(|p| p.template != p.sample)
        .collect();
    let batch = PairBatch::new(&refs, pairs).unwrap();
    PairProblem { model, batch }
}

/// Loss plus the branch taken by every ReLU, pooling window and `|f1 − f2|`.
pub fn loss_and_branches<T: Scalar>(model: &Model<T>, batch: &PairBatch<T>) -> (f64, Vec<usize>) {
    let mut m = model.clone();
    let (feat, trace) = m.forward_train(&batch.images).unwrap();
    let mut pattern = trace.branch_pattern();
    for p in &batch.pairs {
        let (a, b) = (feat.outer(p.template), feat.outer(p.sample));
        pattern.extend(a.iter().zip(b).map(|(x, y)| usize::from(x > y)));
    }
    (pair_loss(&feat, &batch.pairs, &m.head).unwrap().0, pattern)
}

pub fn analytic_grads<T: Scalar>(problem: &PairProblem<T>) -> Vec<Vec<T>> {
    let mut m = problem.model.clone();
    pair_loss_and_grads(&mut m, &problem.batch).unwrap();
    m.trainable_mut()
        .iter()
        .map(|t| {
            t.grad()
                .map(<[T]>::to_vec)
                .unwrap_or_else(|| vec![T::zero(); t.len()])
        })
        .collect()
}

fn with_entry<T: Scalar>(model: &Model<T>, tensor: usize, index: usize, value: T) -> Model<T> {
    let mut m = model.clone();
    m.trainable_mut()[tensor].data_mut()[index] = value;
    m
}

/// Outcome of probing the end-to-end pair loss in single precision.
#[derive(Clone, Copy, Debug, Default)]
pub struct PairLossProbe {
    pub checked: usize,
    /// Probes whose `±EPS` step flips a ReLU, pooling or `|·|` branch; the
    /// loss is not differentiable across that step.
    pub crossing: usize,
    pub max_rel_error: f64,
    /// Largest error among crossing probes, reported but not judged.
    pub crossing_max_rel_error: f64,
    /// Largest `|analytic − numeric|` off the kinks, in units of one f32
    /// rounding of the loss spread over the `2·EPS` step.
    pub max_noise_units: f64,
}

/// Central differences of the full pair loss for `per_tensor` entries of
/// every trainable tensor, at step [`EPS`] in `f32`.
pub fn full_pair_loss_probe(seed: u64, per_tensor: usize) -> PairLossProbe {
    let problem = pair_problem::<f32>(seed);
    let grads = analytic_grads(&problem);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss = loss_and_branches(&problem.model, &problem.batch).0;
    let noise_unit = f32::EPSILON as f64 * loss.abs().max(1.0) / (2.0 * EPS as f64);
    let mut out = PairLossProbe::default();
    for (ti, g) in grads.iter().enumerate() {
        let picks = rand::seq::index::sample(&mut rng, g.len(), g.len().min(per_tensor));
        for i in picks {
            let x = problem.model.clone().trainable_mut()[ti].data()[i];
            let (hi, lo) = (x + EPS, x - EPS);
            let (f_hi, p_hi) =
                loss_and_branches(&with_entry(&problem.model, ti, i, hi), &problem.batch);
            let (f_lo, p_lo) =
                loss_and_branches(&with_entry(&problem.model, ti, i, lo), &problem.batch);
            let numeric = (f_hi - f_lo) / (hi - lo) as f64;
            let err = relative_error(g[i] as f64, numeric);
            if p_hi != p_lo {
                out.crossing += 1;
                out.crossing_max_rel_error = out.crossing_max_rel_error.max(err);
            } else {
                out.checked += 1;
                out.max_rel_error = out.max_rel_error.max(err);
                let units = (g[i] as f64 - numeric).abs() / noise_unit;
                out.max_noise_units = out.max_noise_units.max(units);
            }
        }
    }
    out
}

/// `[n, dim]` features whose entries in each column are pairwise at least
/// `gap` apart, so no `|f1 − f2|` sits within a probe step of its kink.
fn separated_features(rng: &mut ChaCha8Rng, n: usize, dim: usize, gap: f32) -> Tensor<f32> {
    let mut data = vec![0f32; n * dim];
    for k in 0..dim {
        let mut column: Vec<f32> = Vec::with_capacity(n);
        while column.len() < n {
            let v = rng.random_range(-2.0..2.0);
            if column.iter().all(|&u| (u - v).abs() >= gap) {
                column.push(v);
            }
        }
        for (row, v) in column.into_iter().enumerate() {
            data[row * dim + k] = v;
        }
    }
    Tensor::new(&[n, dim], data).unwrap()
}

/// Mean pair loss over every ordered pair of an embedded batch, checked
/// against the features and both head parameters, over (images, width) shapes.
pub fn pair_loss_feature_reports() -> Reports {
    let mut out = Vec::new();
    for (seed, &(n, dim)) in [(2, 4), (3, 8), (4, 16), (5, 32), (6, 128)]
        .iter()
        .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed as u64);
        let feats = separated_features(&mut rng, n, dim, 1e-2);
        let pairs: Vec<PairIndex> = (0..n)
            .flat_map(|t| (0..n).filter(move |&s| s != t).map(move |s| (t, s)))
            .map(|(template, sample)| PairIndex {
                template,
                sample,
                label: rng.random_bool(0.5),
            })
            .collect();
        // Keep the logits well inside the clamp so the loss stays differentiable.
        let scale = 2.0 / (dim as f32).sqrt();
        let head = SimilarityHead::new(uniform(&mut rng, dim, scale), rng.random_range(-0.5..0.5))
            .unwrap();
        let (_, dfeat, dw, db) = pair_loss(&feats, &pairs, &head).unwrap();

        let ff = |v: &[f32]| {
            pair_loss(&Tensor::new(&[n, dim], v.to_vec()).unwrap(), &pairs, &head)
                .unwrap()
                .0
        };
        out.push((
            format!("pair loss dfeat #{seed}"),
            grad_check(ff, feats.data(), dfeat.data(), EPS),
        ));
        let fw = |v: &[f32]| {
            let h = SimilarityHead::new(v.to_vec(), head.bias.data()[0]).unwrap();
            pair_loss(&feats, &pairs, &h).unwrap().0
        };
        out.push((
            format!("pair loss dw #{seed}"),
            grad_check(fw, head.weight.data(), &dw, EPS),
        ));
        let fb = |v: &[f32]| {
            let h = SimilarityHead::new(head.weight.data().to_vec(), v[0]).unwrap();
            pair_loss(&feats, &pairs, &h).unwrap().0
        };
        out.push((
            format!("pair loss db #{seed}"),
            grad_check(fb, head.bias.data(), &[db], EPS),
        ));
    }
    out
}
