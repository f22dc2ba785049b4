//! Batched node kernels shared by inference and training.
//!
//! Samples are processed in fixed chunks of [`CHUNK`]. Per-chunk partial sums
//! are reduced in chunk order so results are bit-identical for any worker
//! count.

use std::ops::Range;

use crate::feature::VectorizedImage;
use crate::par;
use crate::tensor::gemm;

pub(crate) const CHUNK: usize = 128;

/// Where the per-sample vectors feeding one child slot come from.
#[derive(Clone, Copy)]
pub(crate) enum Source<'a> {
    Pixels {
        images: &'a [VectorizedImage],
        pixel: usize,
    },
    Nodes {
        data: &'a [f64],
        dim: usize,
    },
}

impl<'a> Source<'a> {
    #[inline]
    pub(crate) fn get(&self, n: usize) -> &'a [f64] {
        match *self {
            Source::Pixels { images, pixel } => images[n].pixel(pixel),
            Source::Nodes { data, dim } => &data[n * dim..(n + 1) * dim],
        }
    }
}

/// `out = v1 ⊗ v2 ⊗ v3 ⊗ v4`, each of length `dim`.
pub(crate) fn kron4(v: [&[f64]; 4], dim: usize, out: &mut Vec<f64>) {
    out.resize(dim.pow(4), 0.0);
    kron4_into(v, dim, out);
}

#[inline]
fn kron4_into(v: [&[f64]; 4], dim: usize, out: &mut [f64]) {
    let mut o = 0;
    for &a in v[0] {
        for &b in v[1] {
            let ab = a * b;
            for &c in v[2] {
                let abc = ab * c;
                for &e in v[3] {
                    out[o] = abc * e;
                    o += 1;
                }
            }
        }
    }
    debug_assert_eq!(o, dim.pow(4));
}

/// `out = M·x` for a row-major `rows × x.len()` matrix.
pub(crate) fn matvec(m: &[f64], rows: usize, x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o = m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn kron_rows(children: &[Source; 4], dim: usize, range: Range<usize>, out: &mut Vec<f64>) {
    let width = dim.pow(4);
    out.resize(range.len() * width, 0.0);
    for (row, n) in range.enumerate() {
        kron4_into(
            [
                children[0].get(n),
                children[1].get(n),
                children[2].get(n),
                children[3].get(n),
            ],
            dim,
            &mut out[row * width..(row + 1) * width],
        );
    }
}

fn chunk_range(ci: usize, n: usize) -> Range<usize> {
    ci * CHUNK..((ci + 1) * CHUNK).min(n)
}

fn num_chunks(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

/// Up-vectors of one node for all `n` samples: `N × up`.
pub(crate) fn batch_up(t: &[f64], up: usize, down: usize, children: &[Source; 4], n: usize) -> Vec<f64> {
    let width = down.pow(4);
    let mut out = vec![0.0; n * up];
    par::for_each_chunk_mut(&mut out, CHUNK * up, |ci, out_chunk| {
        let range = chunk_range(ci, n);
        let rows = range.len();
        let mut kron = Vec::new();
        kron_rows(children, down, range, &mut kron);
        // out (rows × up) = K (rows × width) · Tᵀ (width × up)
        gemm(rows, width, up, 1.0, &kron, width, 1, t, 1, width, 0.0, out_chunk, up);
    });
    out
}

/// Environment `Σ_n down_n ⊗ kron(children_n)` as an `up × down⁴` block.
pub(crate) fn batch_env(down_vecs: &[f64], up: usize, down: usize, children: &[Source; 4], n: usize) -> Vec<f64> {
    let width = down.pow(4);
    let partials = par::map_range(num_chunks(n), |ci| {
        let range = chunk_range(ci, n);
        let rows = range.len();
        let start = range.start;
        let mut kron = Vec::new();
        kron_rows(children, down, range, &mut kron);
        let mut part = vec![0.0; up * width];
        // part (up × width) = Dᵀ (up × rows) · K (rows × width)
        gemm(
            up,
            rows,
            width,
            1.0,
            &down_vecs[start * up..],
            1,
            up,
            &kron,
            width,
            1,
            0.0,
            &mut part,
            width,
        );
        part
    });
    let mut env = vec![0.0; up * width];
    for part in &partials {
        env.iter_mut().zip(part).for_each(|(e, p)| *e += p);
    }
    env
}

/// Down-vectors of child `slot` of a node: contract the node's down-vector
/// through its tensor and the three sibling up-vectors. Returns `N × down`.
pub(crate) fn batch_down(
    t: &[f64],
    up: usize,
    down: usize,
    parent_down: &[f64],
    children: &[Source; 4],
    slot: usize,
    n: usize,
) -> Vec<f64> {
    let width = down.pow(4);
    let mut out = vec![0.0; n * down];
    par::for_each_chunk_mut(&mut out, CHUNK * down, |ci, out_chunk| {
        let range = chunk_range(ci, n);
        let rows = range.len();
        let start = range.start;
        let mut w = vec![0.0; rows * width];
        // W (rows × width) = P (rows × up) · T (up × width)
        gemm(
            rows,
            up,
            width,
            1.0,
            &parent_down[start * up..],
            up,
            1,
            t,
            width,
            1,
            0.0,
            &mut w,
            width,
        );
        for (row, sample) in range.enumerate() {
            let vecs = [
                children[0].get(sample),
                children[1].get(sample),
                children[2].get(sample),
                children[3].get(sample),
            ];
            contract_except(
                &w[row * width..(row + 1) * width],
                down,
                vecs,
                slot,
                &mut out_chunk[row * down..(row + 1) * down],
            );
        }
    });
    out
}

/// Contracts a `dim⁴` block with three of the four vectors, leaving axis
/// `slot` open.
#[allow(clippy::needless_range_loop)]
pub(crate) fn contract_except(w: &[f64], dim: usize, v: [&[f64]; 4], slot: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let one = 1.0;
    let mut idx = 0;
    for a in 0..dim {
        let fa = if slot == 0 { one } else { v[0][a] };
        for b in 0..dim {
            let fb = if slot == 1 { fa } else { fa * v[1][b] };
            for c in 0..dim {
                let fc = if slot == 2 { fb } else { fb * v[2][c] };
                for e in 0..dim {
                    let fe = if slot == 3 { fc } else { fc * v[3][e] };
                    let open = [a, b, c, e][slot];
                    out[open] += w[idx] * fe;
                    idx += 1;
                }
            }
        }
    }
}
