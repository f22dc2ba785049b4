mod common;

use common::*;
use nalgebra::DMatrix;
use ttn::analysis::{entanglement_spectrum, ttn_overlap, Cut};
use ttn::feature::{feature_vector, vectorize_image, FeatureConfig};
use ttn::model::{TtnLayout, TtnModel};
use ttn::tensor::DenseTensor;
use ttn::trainer::{down_pass, train, up_pass, TrainConfig, TrainingSet, YES};

const TOL: f64 = 1e-8;

fn models() -> Vec<TtnModel> {
    [2, 3]
        .iter()
        .map(|&chi| TtnModel::init_random(TtnLayout::binary(4, 2, chi).unwrap(), 40 + chi as u64).unwrap())
        .collect()
}

#[test]
fn forward_equals_dense_contraction() {
    for model in models() {
        let psi = dense_psi(&model);
        for img in random_images(5, 4, 2, 1) {
            let expected = matvec(&psi, &kron_image(&img));
            let got = model.forward(&img).unwrap();
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).abs() <= TOL, "{got:?} vs {expected:?}");
            }
        }
    }
}

#[test]
fn dense_map_has_orthonormal_rows() {
    for model in models() {
        let psi = dense_psi(&model);
        for i in 0..psi.len() {
            for j in 0..psi.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&psi[i], &psi[j]) - target).abs() <= TOL);
            }
        }
    }
}

#[test]
fn overlap_equals_dense_inner_product() {
    let pairs = [
        (TtnLayout::binary(2, 2, 2).unwrap(), 1, 2),
        (TtnLayout::binary(4, 2, 2).unwrap(), 3, 4),
        (TtnLayout::binary(4, 2, 3).unwrap(), 5, 6),
    ];
    for (layout, sa, sb) in pairs {
        let p = TtnModel::init_random(layout, sa).unwrap();
        let q = TtnModel::init_random(layout, sb).unwrap();
        let expected = dot(&dense_psi(&p)[YES], &dense_psi(&q)[YES]).abs();
        assert!((ttn_overlap(&p, &q).unwrap() - expected).abs() <= TOL);
        assert!((ttn_overlap(&p, &p).unwrap() - 1.0).abs() <= TOL);
    }
}

/// Squared Schmidt values of `state` for a bipartition of the 16 pixels.
fn dense_schmidt_sq(state: &[f64], part_a: &[usize]) -> Vec<f64> {
    let part_b: Vec<usize> = (0..16).filter(|j| !part_a.contains(j)).collect();
    let mut m = DMatrix::<f64>::zeros(1 << part_a.len(), 1 << part_b.len());
    for (conf, &amp) in state.iter().enumerate() {
        let bit = |j: usize| (conf >> (15 - j)) & 1;
        let row = part_a.iter().fold(0, |acc, &j| acc * 2 + bit(j));
        let col = part_b.iter().fold(0, |acc, &j| acc * 2 + bit(j));
        m[(row, col)] = amp;
    }
    let rho = &m * m.transpose();
    let mut ev: Vec<f64> = rho.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn check_spectrum(model: &TtnModel) {
    let psi = dense_psi(model);
    let upper: Vec<usize> = (0..8).collect();
    let left: Vec<usize> = (0..16).filter(|j| j % 4 < 2).collect();
    for (cut, part) in [(Cut::UpDown, upper), (Cut::LeftRight, left)] {
        let spec = entanglement_spectrum(model, cut).unwrap();
        let dense = dense_schmidt_sq(&psi[YES], &part);
        for (i, &p) in dense.iter().enumerate() {
            let ours = spec.spectrum.get(i).map_or(0.0, |l| l * l);
            assert!((ours - p).abs() <= TOL, "{cut}: Λ²[{i}] {ours} vs {p}");
        }
        let entropy: f64 = dense.iter().filter(|&&p| p > 1e-300).map(|&p| -p * p.ln()).sum();
        assert!(
            (spec.entropy - entropy).abs() <= TOL,
            "{cut}: S {} vs {entropy}",
            spec.entropy
        );
        assert!((spec.norm_sq - 1.0).abs() <= TOL);
    }
}

#[test]
fn entanglement_equals_dense_schmidt_decomposition() {
    for model in models() {
        check_spectrum(&model);
    }
}

#[test]
fn entanglement_of_trained_model_equals_dense_schmidt_decomposition() {
    let ds = dark_bright(10, 4, 2, 7);
    let set = TrainingSet::one_vs_all(&ds, 1);
    let init = TtnModel::init_random(TtnLayout::binary(4, 2, 2).unwrap(), 9).unwrap();
    let (model, _) = train(
        init,
        &set,
        &TrainConfig {
            max_sweeps: 3,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    check_spectrum(&model);
}

#[test]
fn single_tensor_model_is_one_contraction() {
    let model = TtnModel::init_random(TtnLayout::binary(2, 3, 3).unwrap(), 11).unwrap();
    let px = [0.1, 0.7, 0.4, 1.0];
    let img = vectorize_image(&px, 2, &FeatureConfig::new(3).unwrap()).unwrap();
    let v: Vec<Vec<f64>> = px.iter().map(|&x| feature_vector(x, 3).unwrap()).collect();
    let t = model.top();
    let out = model.forward(&img).unwrap();
    for (u, &o) in out.iter().enumerate() {
        let mut expected = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for e in 0..3 {
                        expected += t.get(&[u, a, b, c, e]) * v[0][a] * v[1][b] * v[2][c] * v[3][e];
                    }
                }
            }
        }
        assert!((o - expected).abs() <= 1e-12);
    }
}

/// `T[u, a, b, c, e] = δ(u, a) δ(b, 0) δ(c, 0) δ(e, 0)`.
fn copy_first_child(n: usize) -> DenseTensor {
    DenseTensor::from_fn(&[n; 5], |i| {
        if i[0] == i[1] && i[2] == 0 && i[3] == 0 && i[4] == 0 {
            1.0
        } else {
            0.0
        }
    })
}

#[test]
fn copy_first_child_network_reproduces_top_left_pixel() {
    let layout = TtnLayout::binary(4, 2, 2).unwrap();
    let tensors = (1..=layout.num_layers)
        .map(|k| (0..layout.layer_len(k)).map(|_| copy_first_child(2)).collect())
        .collect();
    let model = TtnModel::from_tensors(layout, tensors).unwrap();
    assert!(model.max_isometry_error() <= 1e-15);
    let cfg = FeatureConfig::new(2).unwrap();
    for x in [0.0, 0.3, 0.8, 1.0] {
        let mut px = vec![0.0; 16];
        px[0] = x;
        let img = vectorize_image(&px, 4, &cfg).unwrap();
        let out = model.forward(&img).unwrap();
        let expected = feature_vector(x, 2).unwrap();
        assert!((out[0] - expected[0]).abs() <= 1e-15 && (out[1] - expected[1]).abs() <= 1e-15);
    }
}

#[test]
fn cached_up_vectors_equal_partial_contractions() {
    for model in models() {
        let images = random_images(6, 4, 2, 13);
        let set = TrainingSet::new(&images, vec![0, 1, 0, 1, 1, 0]).unwrap();
        let up = up_pass(&model, &set).unwrap();
        let layout = *model.layout();
        for k in 1..=layout.num_layers {
            let grid = layout.grid_side(k);
            for m in 0..layout.layer_len(k) {
                let (r, c) = (m / grid, m % grid);
                let dense = dense_node(&model, k, r, c);
                let pixels = block_pixels(k, r, c);
                let cached = up.node(k, m);
                let dim = layout.up_dim(k);
                for (n, img) in images.iter().enumerate() {
                    let expected = matvec(&dense, &kron_pixels(img, &pixels));
                    for (a, b) in cached[n * dim..(n + 1) * dim].iter().zip(&expected) {
                        assert!((a - b).abs() <= 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn intermediate_vectors_are_contracted_not_amplified() {
    for model in models() {
        for img in random_images(8, 4, 2, 17) {
            for rep in model.layer_representations(&img).unwrap() {
                for i in 0..rep.len() {
                    let norm = dot(rep.vector(i), rep.vector(i)).sqrt();
                    assert!(norm <= 1.0 + 1e-10, "layer {} node {i}: {norm}", rep.layer);
                }
            }
        }
    }
}

#[test]
fn every_node_closes_to_the_same_scalar() {
    for model in models() {
        let images = random_images(5, 4, 2, 19);
        let targets = vec![0, 1, 1, 0, 1];
        let set = TrainingSet::new(&images, targets.clone()).unwrap();
        let up = up_pass(&model, &set).unwrap();
        let down = down_pass(&model, &set, &up).unwrap();
        let psi = dense_psi(&model);
        let layout = *model.layout();
        for (n, img) in images.iter().enumerate() {
            let expected = matvec(&psi, &kron_image(img))[targets[n]];
            for (k, m) in layout.nodes() {
                let t = model.tensor(k, m);
                let (up_dim, down_dim) = (layout.up_dim(k), layout.down_dim(k));
                let kids: Vec<&[f64]> = layout
                    .children(k, m)
                    .iter()
                    .map(|&c| {
                        if k == 1 {
                            img.pixel(c)
                        } else {
                            let dim = layout.up_dim(k - 1);
                            &up.node(k - 1, c)[n * dim..(n + 1) * dim]
                        }
                    })
                    .collect();
                let dvec = &down.node(k, m)[n * up_dim..(n + 1) * up_dim];
                let mut value = 0.0;
                for u in 0..up_dim {
                    for a in 0..down_dim {
                        for b in 0..down_dim {
                            for c in 0..down_dim {
                                for e in 0..down_dim {
                                    value += dvec[u]
                                        * t.get(&[u, a, b, c, e])
                                        * kids[0][a]
                                        * kids[1][b]
                                        * kids[2][c]
                                        * kids[3][e];
                                }
                            }
                        }
                    }
                }
                assert!((value - expected).abs() <= 1e-10, "node ({k},{m})");
            }
        }
    }
}
