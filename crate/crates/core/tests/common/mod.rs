//! Independent oracles for the integration tests. Nothing here calls the
//! crate's contraction kernels; tree geometry is re-derived from pixel
//! coordinates.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttn::data::Dataset;
use ttn::feature::{vectorize_image, FeatureConfig, VectorizedImage};
use ttn::model::TtnModel;

/// Value of node `(k, r, c)` for a basis configuration `s[row][col]`.
fn node_vector(model: &TtnModel, k: usize, r: usize, c: usize, s: &[Vec<usize>]) -> Vec<f64> {
    let l = model.layout();
    if k == 0 {
        let mut e = vec![0.0; l.d];
        e[s[r][c]] = 1.0;
        return e;
    }
    let grid = l.side >> k;
    let t = model.tensor(k, r * grid + c);
    let sh = t.shape().to_vec();
    let kids: Vec<Vec<f64>> = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .iter()
        .map(|&(dr, dc)| node_vector(model, k - 1, 2 * r + dr, 2 * c + dc, s))
        .collect();
    let mut out = vec![0.0; sh[0]];
    for (u, o) in out.iter_mut().enumerate() {
        for a in 0..sh[1] {
            for b in 0..sh[2] {
                for cc in 0..sh[3] {
                    for e in 0..sh[4] {
                        *o += t.get(&[u, a, b, cc, e]) * kids[0][a] * kids[1][b] * kids[2][cc] * kids[3][e];
                    }
                }
            }
        }
    }
    out
}

/// Pixels covered by node `(k, r, c)`, row-major within its block.
pub fn block_pixels(k: usize, r: usize, c: usize) -> Vec<(usize, usize)> {
    let w = 1 << k;
    (0..w * w).map(|i| (r * w + i / w, c * w + i % w)).collect()
}

/// Dense map of node `(k, r, c)`: `up × d^(4^k)`, configurations indexed
/// by block pixels in row-major order, first pixel most significant.
pub fn dense_node(model: &TtnModel, k: usize, r: usize, c: usize) -> Vec<Vec<f64>> {
    let l = model.layout();
    let pixels = block_pixels(k, r, c);
    let n_conf = l.d.pow(pixels.len() as u32);
    let up = l.up_dim(k);
    let mut out = vec![vec![0.0; n_conf]; up];
    let mut s = vec![vec![0usize; l.side]; l.side];
    for conf in 0..n_conf {
        let mut rem = conf;
        for &(pr, pc) in pixels.iter().rev() {
            s[pr][pc] = rem % l.d;
            rem /= l.d;
        }
        let v = node_vector(model, k, r, c, &s);
        for u in 0..up {
            out[u][conf] = v[u];
        }
    }
    out
}

/// The full map Ψ as a `D × d^N` matrix (row-major pixel order).
pub fn dense_psi(model: &TtnModel) -> Vec<Vec<f64>> {
    dense_node(model, model.layout().num_layers, 0, 0)
}

/// Kronecker product of the feature vectors of `pixels`, first most
/// significant.
pub fn kron_pixels(img: &VectorizedImage, pixels: &[(usize, usize)]) -> Vec<f64> {
    let mut acc = vec![1.0];
    for &(r, c) in pixels {
        let v = img.vector(r, c);
        acc = acc.iter().flat_map(|a| v.iter().map(move |x| a * x)).collect();
    }
    acc
}

pub fn kron_image(img: &VectorizedImage) -> Vec<f64> {
    let side = img.side();
    let pixels: Vec<_> = (0..side * side).map(|j| (j / side, j % side)).collect();
    kron_pixels(img, &pixels)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

pub fn random_pixels(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()
}

pub fn random_images(count: usize, side: usize, d: usize, seed: u64) -> Vec<VectorizedImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = FeatureConfig::new(d).unwrap();
    (0..count)
        .map(|_| vectorize_image(&random_pixels(side * side, &mut rng), side, &cfg).unwrap())
        .collect()
}

/// All-dark (label 0) and all-bright (label 1) images with a little noise.
pub fn dark_bright(per_class: usize, side: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = FeatureConfig::new(d).unwrap();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * per_class {
        let label = i % 2;
        let px: Vec<f64> = (0..side * side)
            .map(|_| {
                let noise = rng.random_range(0.0..0.2);
                if label == 0 {
                    noise
                } else {
                    1.0 - noise
                }
            })
            .collect();
        images.push(vectorize_image(&px, side, &cfg).unwrap());
        labels.push(label);
    }
    Dataset::new(images, labels).unwrap()
}
