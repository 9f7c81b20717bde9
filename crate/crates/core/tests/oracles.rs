//! Forward passes and bookkeeping checked against naive reference code.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siamzero::dataio::GrayImage;
use siamzero::matcher::{build_template_matrix, classify, classify_direct, classify_restricted};
use siamzero::nnkernel::{conv2d_forward, dense_forward, maxpool2_forward, Tensor};
use siamzero::pairs::{generate_pairs, pair_counts};
use siamzero::prep::{aspect_map, preprocess, target_box, NormalizedImage, CANVAS};
use siamzero::siamese::{build_model, ArchitectureSpec, Model};

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::new(
        shape,
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Zero-padded "same" convolution written as the textbook seven-deep loop.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (n, ci, h, wd) = x.dims4().unwrap();
    let (co, _, k, _) = w.dims4().unwrap();
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; n * co * h * wd];
    for s in 0..n {
        for o in 0..co {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b.data()[o];
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                let xv =
                                    x.data()[((s * ci + c) * h + sy as usize) * wd + sx as usize];
                                acc += xv * w.data()[((o * ci + c) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((s * co + o) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(n, ci, co, h, w, k) in &[
        (1, 1, 1, 3, 3, 3),
        (2, 3, 4, 6, 5, 3),
        (1, 2, 2, 8, 8, 5),
        (3, 1, 2, 4, 7, 1),
        (1, 4, 3, 2, 2, 3),
    ] {
        let x = random_tensor(&mut rng, &[n, ci, h, w]);
        let wt = random_tensor(&mut rng, &[co, ci, k, k]);
        let b = random_tensor(&mut rng, &[co]);
        let got = conv2d_forward(&x, &wt, &b).unwrap();
        assert_eq!(got.shape(), &[n, co, h, w]);
        for (a, e) in got.data().iter().zip(naive_conv(&x, &wt, &b)) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }
}

#[test]
fn maxpool_matches_window_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_tensor(&mut rng, &[2, 3, 6, 4]);
    let (y, arg) = maxpool2_forward(&x).unwrap();
    assert_eq!(y.shape(), &[2, 3, 3, 2]);
    let d = x.data();
    let mut i = 0;
    for p in 0..6 {
        for oy in 0..3 {
            for ox in 0..2 {
                let window: Vec<usize> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dy, dx)| p * 24 + (2 * oy + dy) * 4 + 2 * ox + dx)
                    .collect();
                let best = window.iter().map(|&j| d[j]).fold(f64::MIN, f64::max);
                assert_eq!(y.data()[i], best);
                assert_eq!(d[arg[i]], best);
                assert!(window.contains(&arg[i]));
                i += 1;
            }
        }
    }
}

#[test]
fn maxpool_ties_go_to_the_first_cell() {
    let x = Tensor::new(&[1, 1, 2, 2], vec![1.0f32, 1.0, 1.0, 1.0]).unwrap();
    assert_eq!(maxpool2_forward(&x).unwrap().1, vec![0]);
}

#[test]
fn dense_matches_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random_tensor(&mut rng, &[4, 7]);
    let w = random_tensor(&mut rng, &[3, 7]);
    let b = random_tensor(&mut rng, &[3]);
    let y = dense_forward(&x, &w, &b).unwrap();
    for s in 0..4 {
        for o in 0..3 {
            let e: f64 = b.data()[o]
                + (0..7)
                    .map(|i| w.data()[o * 7 + i] * x.data()[s * 7 + i])
                    .sum::<f64>();
            assert!((y.data()[s * 3 + o] - e).abs() < 1e-12);
        }
    }
}

#[test]
fn pair_counts_over_the_grid() {
    for c in [1usize, 2, 5, 10] {
        for n in [1usize, 3, 5] {
            // Uneven class sizes, every one at least n.
            let sizes: Vec<usize> = (0..c).map(|i| n + i % 3).collect();
            let classes: Vec<(u32, usize)> = sizes
                .iter()
                .enumerate()
                .map(|(i, &m)| (i as u32 * 3, m))
                .collect();
            let list = generate_pairs(&classes, n, 5).unwrap();
            let pos: usize = sizes.iter().sum();
            let neg = c * (c - 1) * n;
            assert_eq!(list.label_counts(), (pos, neg), "c={c} n={n}");
            assert_eq!(pair_counts(&sizes, n), (pos, neg));

            let uniform: Vec<(u32, usize)> = (0..c as u32).map(|i| (i, n)).collect();
            assert_eq!(generate_pairs(&uniform, n, 5).unwrap().len(), n * c * c);
        }
    }
}

/// Rebuilds the expected multiset cell by cell: every sample of class i is a
/// positive for i, and each (i, j ≠ i) cell holds exactly n distinct samples of j.
#[test]
fn pair_list_matches_cell_enumeration() {
    let classes = [(2u32, 4usize), (5, 3), (9, 6), (11, 3)];
    let n = 3;
    let list = generate_pairs(&classes, n, 17).unwrap();
    let mut cells: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for r in &list.records {
        assert_eq!(r.label, r.template_class == r.sample.class_id);
        cells
            .entry((r.template_class, r.sample.class_id))
            .or_default()
            .push(r.sample.index);
    }
    for &(i, mi) in &classes {
        for &(j, mj) in &classes {
            let mut got = cells.remove(&(i, j)).unwrap_or_default();
            got.sort();
            if i == j {
                assert_eq!(got, (0..mi).collect::<Vec<_>>());
            } else {
                assert_eq!(got.len(), n);
                assert!(
                    got.windows(2).all(|w| w[0] < w[1]),
                    "repeat in cell ({i},{j})"
                );
                assert!(got.iter().all(|&k| k < mj));
            }
        }
    }
    assert!(cells.is_empty());
}

#[test]
fn aspect_map_reference_values() {
    assert_eq!(aspect_map(1.0).unwrap(), 1.0);
    assert!((aspect_map(0.5).unwrap() - 0.84090).abs() < 1e-4);
    // √sin(π/4) = 2^(-1/4)
    assert!((aspect_map(0.5).unwrap() - 2f64.powf(-0.25)).abs() < 1e-15);
    assert_eq!(target_box(32, 64).unwrap(), (54, 64));
    assert_eq!(target_box(64, 64).unwrap(), (64, 64));
}

#[test]
fn black_square_lands_centered() {
    let mut img = GrayImage::filled(40, 30, 255).unwrap();
    for y in 5..17 {
        for x in 20..32 {
            img.set(x, y, 0);
        }
    }
    let out = preprocess(&img, 0).unwrap();
    let (mut mass, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            let v = out.get(x, y) as f64;
            mass += v;
            cx += v * x as f64;
            cy += v * y as f64;
        }
    }
    assert!((cx / mass - 31.5).abs() <= 1.0 && (cy / mass - 31.5).abs() <= 1.0);
    assert!(out.pixels().iter().all(|&v| v == 1.0));
}

fn glyph(rng: &mut ChaCha8Rng) -> NormalizedImage {
    NormalizedImage::new(
        (0..CANVAS * CANVAS)
            .map(|_| rng.random_range(0.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn toy_model() -> Model<f32> {
    build_model(&ArchitectureSpec::default().narrowed(8), 21).unwrap()
}

#[test]
fn cached_and_direct_classification_agree() {
    let mut model = toy_model();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for v in model.head.weight.data_mut() {
        *v = rng.random_range(-1.0..0.5);
    }
    let templates: Vec<(u32, NormalizedImage)> =
        [4u32, 1, 7].iter().map(|&c| (c, glyph(&mut rng))).collect();
    let refs: Vec<(u32, &NormalizedImage)> = templates.iter().map(|(c, t)| (*c, t)).collect();
    let matrix = build_template_matrix(&model, &refs).unwrap();
    let all: BTreeSet<u32> = [1, 4, 7].into();
    for _ in 0..10 {
        let q = glyph(&mut rng);
        let f = model.embed(&q.to_tensor()).unwrap();
        let cached = classify(f.data(), &matrix, &model.head).unwrap();
        let direct = classify_direct(&model, &q, &refs).unwrap();
        assert_eq!(cached.class_id, direct.class_id);
        assert_eq!(cached.probability.to_bits(), direct.probability.to_bits());
        let restricted = classify_restricted(f.data(), &matrix, &model.head, &all).unwrap();
        assert_eq!(restricted, cached);
    }
}

#[test]
fn duplicate_templates_resolve_to_the_lower_id() {
    let model = toy_model();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let t = glyph(&mut rng);
    let matrix = build_template_matrix(&model, &[(9, &t), (3, &t)]).unwrap();
    let f = model.embed(&glyph(&mut rng).to_tensor()).unwrap();
    assert_eq!(
        classify(f.data(), &matrix, &model.head).unwrap().class_id,
        3
    );
}
