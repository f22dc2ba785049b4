//! Tree tensor network over a square image.
//!
//! Layer `k` (1-based) holds `(side / 2^k)²` tensors laid out row-major on a
//! grid of edge `side / 2^k`. Each tensor has axes
//! `(up, top-left, top-right, bottom-left, bottom-right)`: it coarse-grains a
//! 2×2 block of layer `k − 1` into one vector. Layer 0 is the pixel grid.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::feature::VectorizedImage;
use crate::kernels;
use crate::par;
use crate::tensor::{orthonormalize_rows, row_orthonormality_error, DenseTensor};

/// Default tolerance of the `T·Tᵀ = I` check.
pub const ISOMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TtnLayout {
    pub side: usize,
    pub num_layers: usize,
    pub d: usize,
    pub chi: usize,
    pub out_dim: usize,
}

impl fmt::Display for TtnLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "side={} K={} d={} chi={} D={}",
            self.side, self.num_layers, self.d, self.chi, self.out_dim
        )
    }
}

impl TtnLayout {
    pub fn new(side: usize, d: usize, chi: usize, out_dim: usize) -> Result<Self> {
        if side < 2 || !side.is_power_of_two() {
            return Err(Error::Layout(format!(
                "image side {side} must be a power of 2 and at least 2"
            )));
        }
        let layout = Self {
            side,
            num_layers: side.trailing_zeros() as usize,
            d,
            chi,
            out_dim,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Binary yes/no layout (`D = 2`).
    pub fn binary(side: usize, d: usize, chi: usize) -> Result<Self> {
        Self::new(side, d, chi, 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 2 || !self.side.is_power_of_two() || 1usize << self.num_layers != self.side {
            return Err(Error::Layout(format!("inconsistent side/layer count: {self}")));
        }
        if self.d < 2 || self.chi < 1 || self.out_dim < 1 {
            return Err(Error::Layout(format!("bond dimensions out of range: {self}")));
        }
        for k in 1..=self.num_layers {
            let down = self.down_dim(k);
            let up = self.up_dim(k);
            if (up as u128) > (down as u128).pow(4) {
                return Err(Error::Layout(format!(
                    "layer {k} needs an isometry from {down}^4 onto {up} dimensions, which does not exist ({self})"
                )));
            }
        }
        Ok(())
    }

    /// Edge length of the node grid at `layer` (layer 0 = pixels).
    pub fn grid_side(&self, layer: usize) -> usize {
        self.side >> layer
    }

    pub fn layer_len(&self, layer: usize) -> usize {
        let g = self.grid_side(layer);
        g * g
    }

    /// Dimension of the vectors living on layer `layer` nodes (0 = pixels).
    pub fn node_dim(&self, layer: usize) -> usize {
        match layer {
            0 => self.d,
            k if k == self.num_layers => self.out_dim,
            _ => self.chi,
        }
    }

    pub fn down_dim(&self, layer: usize) -> usize {
        self.node_dim(layer - 1)
    }

    pub fn up_dim(&self, layer: usize) -> usize {
        self.node_dim(layer)
    }

    pub fn tensor_shape(&self, layer: usize) -> [usize; 5] {
        let down = self.down_dim(layer);
        [self.up_dim(layer), down, down, down, down]
    }

    /// Indices in layer `layer − 1` of the four children of node `index`,
    /// in the order top-left, top-right, bottom-left, bottom-right.
    pub fn children(&self, layer: usize, index: usize) -> [usize; 4] {
        let g = self.grid_side(layer);
        let cg = 2 * g;
        let (r, c) = (index / g, index % g);
        let tl = 2 * r * cg + 2 * c;
        [tl, tl + 1, tl + cg, tl + cg + 1]
    }

    /// Parent index in layer `layer + 1` and the child slot `0..4`.
    pub fn parent(&self, layer: usize, index: usize) -> (usize, usize) {
        let g = self.grid_side(layer);
        let (r, c) = (index / g, index % g);
        let pg = g / 2;
        ((r / 2) * pg + c / 2, (r % 2) * 2 + c % 2)
    }

    /// Iterates over every node `(layer, index)` from layer 1 upward.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.num_layers).flat_map(move |k| (0..self.layer_len(k)).map(move |m| (k, m)))
    }

    pub fn num_tensors(&self) -> usize {
        (1..=self.num_layers).map(|k| self.layer_len(k)).sum()
    }
}

/// Renormalized vectors of one layer for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerRepresentation {
    pub layer: usize,
    pub grid_side: usize,
    pub dim: usize,
    /// `grid_side² × dim`, nodes in row-major grid order.
    pub vectors: Vec<f64>,
}

impl LayerRepresentation {
    pub fn vector(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct TtnModel {
    layout: TtnLayout,
    // tensors[k - 1][m]
    tensors: Vec<Vec<DenseTensor>>,
    revision: u64,
}

impl PartialEq for TtnModel {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.tensors == other.tensors
    }
}

impl TtnModel {
    /// Every tensor an isometry obtained from a seeded Gaussian matrix.
    pub fn init_random(layout: TtnLayout, seed: u64) -> Result<Self> {
        layout.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::with_capacity(layout.num_layers);
        for k in 1..=layout.num_layers {
            let shape = layout.tensor_shape(k);
            let cols = shape[1..].iter().product::<usize>();
            let mut layer = Vec::with_capacity(layout.layer_len(k));
            for _ in 0..layout.layer_len(k) {
                let raw: Vec<f64> = (0..shape[0] * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
                let q = orthonormalize_rows(&DenseTensor::new(vec![shape[0], cols], raw)?)?;
                layer.push(q.reshape(&shape)?);
            }
            tensors.push(layer);
        }
        Ok(Self {
            layout,
            tensors,
            revision: 0,
        })
    }

    /// Assembles a model from explicit tensors, listed layer-major.
    pub fn from_tensors(layout: TtnLayout, tensors: Vec<Vec<DenseTensor>>) -> Result<Self> {
        layout.validate()?;
        if tensors.len() != layout.num_layers {
            return Err(Error::Layout(format!(
                "{} layers given for layout {layout}",
                tensors.len()
            )));
        }
        for (k, layer) in (1..).zip(&tensors) {
            if layer.len() != layout.layer_len(k) {
                return Err(Error::Layout(format!(
                    "layer {k} has {} tensors, layout {layout} needs {}",
                    layer.len(),
                    layout.layer_len(k)
                )));
            }
            for t in layer {
                if t.shape() != layout.tensor_shape(k) {
                    return Err(Error::Layout(format!(
                        "layer {k} tensor has shape {:?}, expected {:?}",
                        t.shape(),
                        layout.tensor_shape(k)
                    )));
                }
            }
        }
        Ok(Self {
            layout,
            tensors,
            revision: 0,
        })
    }

    pub fn layout(&self) -> &TtnLayout {
        &self.layout
    }

    /// Incremented on every mutation; caches compare against it.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn tensor(&self, layer: usize, index: usize) -> &DenseTensor {
        &self.tensors[layer - 1][index]
    }

    pub fn top(&self) -> &DenseTensor {
        &self.tensors[self.layout.num_layers - 1][0]
    }

    pub fn tensors(&self) -> impl Iterator<Item = ((usize, usize), &DenseTensor)> {
        self.layout.nodes().map(move |(k, m)| ((k, m), self.tensor(k, m)))
    }

    pub fn set_tensor(&mut self, layer: usize, index: usize, tensor: DenseTensor) -> Result<()> {
        if layer == 0 || layer > self.layout.num_layers || index >= self.layout.layer_len(layer) {
            return Err(Error::Layout(format!("no node ({layer},{index}) in {}", self.layout)));
        }
        if tensor.shape() != self.layout.tensor_shape(layer) {
            return Err(Error::Layout(format!(
                "tensor shape {:?} does not fit node ({layer},{index}), expected {:?}",
                tensor.shape(),
                self.layout.tensor_shape(layer)
            )));
        }
        self.tensors[layer - 1][index] = tensor;
        self.revision += 1;
        Ok(())
    }

    /// `‖T·Tᵀ − I_up‖_max` with the four down axes grouped.
    pub fn isometry_error(&self, layer: usize, index: usize) -> f64 {
        let t = self.tensor(layer, index);
        let up = t.shape()[0];
        row_orthonormality_error(up, t.len() / up, t.data())
    }

    pub fn max_isometry_error(&self) -> f64 {
        self.layout
            .nodes()
            .map(|(k, m)| self.isometry_error(k, m))
            .fold(0.0, f64::max)
    }

    /// Fails on the first tensor whose isometry error exceeds `tol`.
    pub fn check_isometric(&self, tol: f64) -> Result<()> {
        for (k, m) in self.layout.nodes() {
            let deviation = self.isometry_error(k, m);
            if deviation.is_nan() || deviation > tol {
                return Err(Error::NotIsometric {
                    layer: k,
                    index: m,
                    deviation,
                });
            }
        }
        Ok(())
    }

    fn check_image(&self, image: &VectorizedImage) -> Result<()> {
        if image.side() != self.layout.side || image.d() != self.layout.d {
            return Err(Error::Layout(format!(
                "image side={} d={} does not fit model {}",
                image.side(),
                image.d(),
                self.layout
            )));
        }
        Ok(())
    }

    /// Contracts the image through the whole tree; returns the `D`-vector
    /// `Ψ†|v⟩`.
    pub fn forward(&self, image: &VectorizedImage) -> Result<Vec<f64>> {
        let reps = self.layer_representations(image)?;
        Ok(reps.into_iter().last().expect("at least one layer").vectors)
    }

    /// Forward pass over many images.
    pub fn forward_batch(&self, images: &[VectorizedImage]) -> Result<Vec<Vec<f64>>> {
        for img in images {
            self.check_image(img)?;
        }
        Ok(par::map(images, |img| {
            self.layer_representations_unchecked(img)
                .pop()
                .expect("at least one layer")
                .vectors
        }))
    }

    /// Vectors of every layer, from the raw pixel vectors (layer 0) up to
    /// the output (layer K).
    pub fn layer_representations(&self, image: &VectorizedImage) -> Result<Vec<LayerRepresentation>> {
        self.check_image(image)?;
        Ok(self.layer_representations_unchecked(image))
    }

    fn layer_representations_unchecked(&self, image: &VectorizedImage) -> Vec<LayerRepresentation> {
        let layout = &self.layout;
        let mut reps = Vec::with_capacity(layout.num_layers + 1);
        reps.push(LayerRepresentation {
            layer: 0,
            grid_side: layout.side,
            dim: layout.d,
            vectors: image.as_slice().to_vec(),
        });
        let mut kron = Vec::new();
        for k in 1..=layout.num_layers {
            let below = reps.last().expect("previous layer");
            let down = layout.down_dim(k);
            let up = layout.up_dim(k);
            let mut vectors = vec![0.0; layout.layer_len(k) * up];
            for (m, out) in vectors.chunks_exact_mut(up).enumerate() {
                let ch = layout.children(k, m);
                kernels::kron4(
                    [
                        below.vector(ch[0]),
                        below.vector(ch[1]),
                        below.vector(ch[2]),
                        below.vector(ch[3]),
                    ],
                    down,
                    &mut kron,
                );
                kernels::matvec(self.tensor(k, m).data(), up, &kron, out);
            }
            reps.push(LayerRepresentation {
                layer: k,
                grid_side: layout.grid_side(k),
                dim: up,
                vectors,
            });
        }
        reps
    }

    /// Output vector index with the largest magnitude, lowest index on ties.
    pub fn predict_index(output: &[f64]) -> usize {
        let mut best = 0;
        for (i, v) in output.iter().enumerate() {
            if v.abs() > output[best].abs() {
                best = i;
            }
        }
        best
    }
}
