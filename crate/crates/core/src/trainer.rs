//! Sweep training under exact isometry constraints.
//!
//! For the node being updated, the environment `E` is the contraction of the
//! whole cost network with that tensor removed:
//! `E = Σ_n down_n ⊗ c1_n ⊗ c2_n ⊗ c3_n ⊗ c4_n`, where `down_n` is the label
//! vector of sample `n` carried down the tree and `c*_n` are the up-vectors of
//! the four children. The cost is `f = −Tr(T·E)` and the optimal isometry is
//! `T = A·Bᵀ` from the SVD `E = A·Λ·Bᵀ`, giving `f = −ΣΛ`.
//!
//! Up- and down-vectors are cached per node and sample. After a tensor
//! update only the up-vectors above it and the down-vectors outside its
//! ancestor chain are invalidated; they are recomputed lazily.
//!
//! Two optional modes change the weighting of samples but not the model:
//! `normalize_nodes` rescales cached node vectors to unit norm (the norm of
//! the node being updated is held fixed while its environment is built), and
//! `balance_targets` gives every target the same total weight. Neither keeps
//! the recorded cost exactly monotone once node norms move.

use std::borrow::Cow;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::feature::VectorizedImage;
use crate::kernels::{self, Source};
use crate::model::TtnModel;
use crate::tensor::{svd_matrix, DenseTensor};

/// Label index of a "yes" answer.
pub const YES: usize = 0;
/// Label index of a "no" answer.
pub const NO: usize = 1;

/// Singular values below `DEGENERATE_RTOL · s_max` are treated as null
/// directions of the environment.
const DEGENERATE_RTOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_sweeps: usize,
    /// Stop once `|Δf| / |f|` between sweeps falls below this.
    pub cost_tolerance: f64,
    /// Seeds the completion of degenerate environments.
    pub seed: u64,
    /// Environments always sum all samples; `false` is rejected.
    pub full_batch: bool,
    /// Rescale every intermediate node vector to unit norm per sample.
    pub normalize_nodes: bool,
    /// Weight samples so every target contributes equally to the cost.
    pub balance_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 20,
            cost_tolerance: 1e-4,
            seed: 0,
            full_batch: true,
            normalize_nodes: false,
            balance_targets: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps < 1 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        if self.cost_tolerance.is_nan() || self.cost_tolerance <= 0.0 {
            return Err(Error::Config("cost_tolerance must be positive".into()));
        }
        if !self.full_batch {
            return Err(Error::Config("only full-batch environments are supported".into()));
        }
        Ok(())
    }
}

/// Images paired with output-basis targets (`YES`/`NO` for binary models).
#[derive(Clone, Debug)]
pub struct TrainingSet<'a> {
    images: &'a [VectorizedImage],
    targets: Cow<'a, [usize]>,
}

impl<'a> TrainingSet<'a> {
    pub fn new(images: &'a [VectorizedImage], targets: Vec<usize>) -> Result<Self> {
        if images.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} images but {} targets",
                images.len(),
                targets.len()
            )));
        }
        Ok(Self {
            images,
            targets: Cow::Owned(targets),
        })
    }

    /// Uses the dataset labels directly as output indices.
    pub fn from_dataset(ds: &'a Dataset) -> Self {
        Self {
            images: ds.images(),
            targets: Cow::Borrowed(ds.labels()),
        }
    }

    /// Samples of `positive` become `YES`, all others `NO`.
    pub fn one_vs_all(ds: &'a Dataset, positive: usize) -> Self {
        let targets = ds
            .labels()
            .iter()
            .map(|&l| if l == positive { YES } else { NO })
            .collect();
        Self {
            images: ds.images(),
            targets: Cow::Owned(targets),
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &'a [VectorizedImage] {
        self.images
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// `N / (t · count(target_n))` for the `t` targets that occur, so each
    /// target carries the same total weight.
    pub fn balanced_weights(&self, out_dim: usize) -> Vec<f64> {
        let mut counts = vec![0usize; out_dim];
        for &t in self.targets.iter() {
            counts[t] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count() as f64;
        let n = self.len() as f64;
        self.targets.iter().map(|&t| n / (present * counts[t] as f64)).collect()
    }

    fn check(&self, model: &TtnModel) -> Result<()> {
        let layout = model.layout();
        if self.is_empty() {
            return Err(Error::Domain("empty training set".into()));
        }
        if let Some(img) = self
            .images
            .iter()
            .find(|img| img.side() != layout.side || img.d() != layout.d)
        {
            return Err(Error::Layout(format!(
                "sample side={} d={} does not fit model {layout}",
                img.side(),
                img.d()
            )));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t >= layout.out_dim) {
            return Err(Error::Domain(format!(
                "target {t} out of range for output dimension {}",
                layout.out_dim
            )));
        }
        Ok(())
    }
}

/// Environment of one node, shaped like its tensor.
#[derive(Clone, Debug)]
pub struct EnvironmentTensor {
    pub layer: usize,
    pub index: usize,
    pub tensor: DenseTensor,
}

impl EnvironmentTensor {
    /// `Tr(T·E)` with all five axes paired.
    pub fn trace_with(&self, t: &DenseTensor) -> f64 {
        t.data().iter().zip(self.tensor.data()).map(|(a, b)| a * b).sum()
    }
}

/// Result of the SVD projection of one environment.
#[derive(Clone, Debug)]
pub struct TensorUpdate {
    pub tensor: DenseTensor,
    /// Singular values of the environment, descending.
    pub singular_values: Vec<f64>,
}

impl TensorUpdate {
    pub fn singular_sum(&self) -> f64 {
        self.singular_values.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub cost: f64,
    pub train_accuracy: f64,
    pub seconds: f64,
}

/// Per-sweep cost, training accuracy and wall time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTrace {
    pub initial_cost: f64,
    pub records: Vec<SweepRecord>,
    pub converged: bool,
}

impl SweepTrace {
    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(self.initial_cost, |r| r.cost)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_accuracy)
    }

    /// `sweep,cost,train_accuracy,seconds` with a header row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sweep,cost,train_accuracy,seconds")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{}",
                r.sweep,
                crate::report::fmt_real(r.cost),
                crate::report::fmt_real(r.train_accuracy),
                crate::report::fmt_real(r.seconds)
            )?;
        }
        Ok(())
    }
}

/// Reported after every single-tensor update during training.
#[derive(Debug)]
pub struct UpdateEvent<'m> {
    pub sweep: usize,
    pub layer: usize,
    pub index: usize,
    /// `−Tr(T_old·E)`, the cost before the update.
    pub cost_before: f64,
    /// `−Tr(T_new·E)`, the cost after the update.
    pub cost_after: f64,
    pub singular_sum: f64,
    pub model: &'m TtnModel,
}

/// Projects an environment onto the closest isometry: `T = A·Bᵀ` for
/// `E = A·Λ·Bᵀ` (E grouped as `up × down⁴`).
///
/// Null directions of a rank-deficient `E` are filled from the rows of
/// `previous`, orthogonalized, falling back to seeded random vectors.
pub fn update_tensor(previous: &DenseTensor, env: &EnvironmentTensor, seed: u64) -> Result<TensorUpdate> {
    let e = &env.tensor;
    if e.shape() != previous.shape() {
        return Err(Error::Shape(format!(
            "environment shape {:?} differs from tensor shape {:?}",
            e.shape(),
            previous.shape()
        )));
    }
    if !e.is_finite() {
        return Err(Error::NumericDomain("non-finite environment".into()));
    }
    let up = e.shape()[0];
    let width = e.len() / up;
    let dec = svd_matrix(up, width, e.data())?;
    let s_max = dec.s.first().copied().unwrap_or(0.0);
    let rank = dec
        .s
        .iter()
        .take_while(|&&s| s > DEGENERATE_RTOL * s_max && s > 0.0)
        .count();

    // right factors: rows of Bᵀ for the retained directions, completed below
    let mut rows: Vec<Vec<f64>> = (0..rank)
        .map(|i| dec.vt.data()[i * width..(i + 1) * width].to_vec())
        .collect();
    if rank < up {
        let a = dec.u.data();
        let prev = previous.data();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((env.layer as u64) << 32) ^ env.index as u64);
        for i in rank..up {
            // candidate: previous rows combined along the null left vector a_i
            let mut cand = vec![0.0; width];
            for r in 0..up {
                let coef = a[r * up + i];
                for (c, p) in cand.iter_mut().zip(&prev[r * width..(r + 1) * width]) {
                    *c += coef * p;
                }
            }
            let mut accepted = orthogonalize(&mut cand, &rows);
            while !accepted {
                cand.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
                accepted = orthogonalize(&mut cand, &rows);
            }
            rows.push(cand);
        }
    }

    // T = Σ_i a_i ⊗ rows_i
    let a = dec.u.data();
    let mut t = vec![0.0; up * width];
    for (i, row) in rows.iter().enumerate() {
        for r in 0..up {
            let coef = a[r * up + i];
            if coef != 0.0 {
                for (x, v) in t[r * width..(r + 1) * width].iter_mut().zip(row) {
                    *x += coef * v;
                }
            }
        }
    }
    Ok(TensorUpdate {
        tensor: DenseTensor::new(e.shape().to_vec(), t)?,
        singular_values: dec.s,
    })
}

/// Two-pass Gram-Schmidt of `v` against orthonormal `basis`; normalizes `v`.
/// Returns false if `v` lies (numerically) in their span.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm0 == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-8 * norm0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Per-node, per-sample vector cache with validity flags.
#[derive(Clone, Debug)]
struct NodeCache {
    // data[k - 1][m]: N × dim(k)
    data: Vec<Vec<Vec<f64>>>,
    valid: Vec<Vec<bool>>,
}

impl NodeCache {
    fn new(model: &TtnModel) -> Self {
        let layout = model.layout();
        let data = (1..=layout.num_layers)
            .map(|k| vec![Vec::new(); layout.layer_len(k)])
            .collect();
        let valid = (1..=layout.num_layers)
            .map(|k| vec![false; layout.layer_len(k)])
            .collect();
        Self { data, valid }
    }

    fn is_valid(&self, k: usize, m: usize) -> bool {
        self.valid[k - 1][m]
    }

    fn get(&self, k: usize, m: usize) -> &[f64] {
        debug_assert!(self.is_valid(k, m));
        &self.data[k - 1][m]
    }

    fn store(&mut self, k: usize, m: usize, v: Vec<f64>) {
        self.data[k - 1][m] = v;
        self.valid[k - 1][m] = true;
    }

    fn invalidate(&mut self, k: usize, m: usize) {
        self.valid[k - 1][m] = false;
    }
}

/// Lazily maintained up/down caches for one model and training set.
struct Workspace<'s> {
    set: &'s TrainingSet<'s>,
    up: NodeCache,
    down: NodeCache,
    // per-sample norms of the raw node vectors, only when normalizing
    norms: Option<Vec<Vec<Vec<f64>>>>,
    weights: Option<Vec<f64>>,
}

impl<'s> Workspace<'s> {
    fn new(model: &TtnModel, set: &'s TrainingSet<'s>) -> Self {
        Self {
            set,
            up: NodeCache::new(model),
            down: NodeCache::new(model),
            norms: None,
            weights: None,
        }
    }

    fn for_training(model: &TtnModel, set: &'s TrainingSet<'s>, cfg: &TrainConfig) -> Self {
        let mut ws = if cfg.normalize_nodes {
            Self::normalizing(model, set)
        } else {
            Self::new(model, set)
        };
        if cfg.balance_targets {
            ws.weights = Some(set.balanced_weights(model.layout().out_dim));
        }
        ws
    }

    fn weight(&self, n: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[n])
    }

    fn normalizing(model: &TtnModel, set: &'s TrainingSet<'s>) -> Self {
        let layout = model.layout();
        let mut ws = Self::new(model, set);
        ws.norms = Some(
            (1..=layout.num_layers)
                .map(|k| vec![Vec::new(); layout.layer_len(k)])
                .collect(),
        );
        ws
    }

    /// Down-vectors of `(k, m)` as seen by its raw (unnormalized) output.
    fn effective_down(&self, model: &TtnModel, k: usize, m: usize) -> Cow<'_, [f64]> {
        let down = self.down.get(k, m);
        match &self.norms {
            Some(norms) if k < model.layout().num_layers => {
                let dim = model.layout().up_dim(k);
                let nu = &norms[k - 1][m];
                let mut v = down.to_vec();
                for (row, &x) in v.chunks_exact_mut(dim).zip(nu) {
                    let w = if x > 0.0 { 1.0 / x } else { 0.0 };
                    row.iter_mut().for_each(|r| *r *= w);
                }
                Cow::Owned(v)
            }
            _ => Cow::Borrowed(down),
        }
    }

    fn n(&self) -> usize {
        self.set.len()
    }

    fn child_sources(&self, model: &TtnModel, k: usize, m: usize) -> [Source<'_>; 4] {
        let layout = model.layout();
        let ch = layout.children(k, m);
        let dim = layout.node_dim(k - 1);
        ch.map(|c| {
            if k == 1 {
                Source::Pixels {
                    images: self.set.images(),
                    pixel: c,
                }
            } else {
                Source::Nodes {
                    data: self.up.get(k - 1, c),
                    dim,
                }
            }
        })
    }

    fn ensure_up(&mut self, model: &TtnModel, k: usize, m: usize) {
        if k == 0 || self.up.is_valid(k, m) {
            return;
        }
        let layout = *model.layout();
        for c in layout.children(k, m) {
            self.ensure_up(model, k - 1, c);
        }
        let mut v = kernels::batch_up(
            model.tensor(k, m).data(),
            layout.up_dim(k),
            layout.down_dim(k),
            &self.child_sources(model, k, m),
            self.n(),
        );
        if k < layout.num_layers {
            if let Some(norms) = &mut self.norms {
                let dim = layout.up_dim(k);
                let nu: Vec<f64> = v
                    .chunks_exact_mut(dim)
                    .map(|row| {
                        let x = row.iter().map(|r| r * r).sum::<f64>().sqrt();
                        if x > 0.0 {
                            row.iter_mut().for_each(|r| *r /= x);
                        }
                        x
                    })
                    .collect();
                norms[k - 1][m] = nu;
            }
        }
        self.up.store(k, m, v);
    }

    fn ensure_all_up(&mut self, model: &TtnModel) {
        let layout = *model.layout();
        for (k, m) in layout.nodes() {
            self.ensure_up(model, k, m);
        }
    }

    fn ensure_down(&mut self, model: &TtnModel, k: usize, m: usize) {
        if self.down.is_valid(k, m) {
            return;
        }
        let layout = *model.layout();
        if k == layout.num_layers {
            let dim = layout.out_dim;
            let mut v = vec![0.0; self.n() * dim];
            for (n, &t) in self.set.targets().iter().enumerate() {
                v[n * dim + t] = self.weight(n);
            }
            self.down.store(k, m, v);
            return;
        }
        let (p, slot) = layout.parent(k, m);
        self.ensure_down(model, k + 1, p);
        for (s, c) in layout.children(k + 1, p).into_iter().enumerate() {
            if s != slot {
                self.ensure_up(model, k, c);
            }
        }
        let sources = {
            let ch = layout.children(k + 1, p);
            let dim = layout.node_dim(k);
            // the open slot is never read; point it at a sibling
            let sib = ch[if slot == 0 { 1 } else { 0 }];
            ch.map(|c| {
                let c = if c == m { sib } else { c };
                Source::Nodes {
                    data: self.up.get(k, c),
                    dim,
                }
            })
        };
        let parent_down = self.effective_down(model, k + 1, p);
        let v = kernels::batch_down(
            model.tensor(k + 1, p).data(),
            layout.up_dim(k + 1),
            layout.down_dim(k + 1),
            &parent_down,
            &sources,
            slot,
            self.n(),
        );
        self.down.store(k, m, v);
    }

    fn environment(&mut self, model: &TtnModel, k: usize, m: usize) -> Result<EnvironmentTensor> {
        let layout = *model.layout();
        for c in layout.children(k, m) {
            self.ensure_up(model, k - 1, c);
        }
        self.ensure_down(model, k, m);
        let env = kernels::batch_env(
            &self.effective_down(model, k, m),
            layout.up_dim(k),
            layout.down_dim(k),
            &self.child_sources(model, k, m),
            self.n(),
        );
        Ok(EnvironmentTensor {
            layer: k,
            index: m,
            tensor: DenseTensor::new(layout.tensor_shape(k).to_vec(), env)?,
        })
    }

    /// Marks everything that depends on tensor `(k, m)` as stale.
    fn tensor_changed(&mut self, model: &TtnModel, k: usize, m: usize) {
        let layout = *model.layout();
        let mut ancestors = Vec::new();
        let (mut kk, mut mm) = (k, m);
        while kk < layout.num_layers {
            let (p, _) = layout.parent(kk, mm);
            kk += 1;
            mm = p;
            ancestors.push((kk, mm));
        }
        self.up.invalidate(k, m);
        for &(a, b) in &ancestors {
            self.up.invalidate(a, b);
        }
        // with normalization the ancestors' norms feed every down-vector
        let keep_ancestors = self.norms.is_none();
        for (a, b) in layout.nodes() {
            if !(keep_ancestors && ancestors.contains(&(a, b))) {
                self.down.invalidate(a, b);
            }
        }
    }

    fn root(&self, model: &TtnModel) -> &[f64] {
        self.up.get(model.layout().num_layers, 0)
    }

    /// Cost and accuracy from the (valid) root up-vectors.
    fn cost_and_accuracy(&self, model: &TtnModel) -> (f64, f64) {
        let dim = model.layout().out_dim;
        let root = self.root(model);
        let mut cost = 0.0;
        let mut correct = 0usize;
        for (n, &t) in self.set.targets().iter().enumerate() {
            let out = &root[n * dim..(n + 1) * dim];
            cost -= self.weight(n) * out[t];
            if TtnModel::predict_index(out) == t {
                correct += 1;
            }
        }
        (cost, correct as f64 / self.n() as f64)
    }
}

/// Cached up-vectors of every node for every sample.
#[derive(Clone, Debug)]
pub struct UpCache {
    revision: u64,
    cache: NodeCache,
}

impl UpCache {
    /// Up-vectors of node `(layer, index)`, `N × dim` row-major.
    pub fn node(&self, layer: usize, index: usize) -> &[f64] {
        self.cache.get(layer, index)
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    fn check(&self, model: &TtnModel) -> Result<()> {
        if self.revision != model.revision() {
            return Err(Error::CacheInvalid {
                cache_revision: self.revision,
                model_revision: model.revision(),
            });
        }
        Ok(())
    }
}

/// Cached down-vectors of every node for every sample.
#[derive(Clone, Debug)]
pub struct DownCache {
    revision: u64,
    cache: NodeCache,
}

impl DownCache {
    pub fn node(&self, layer: usize, index: usize) -> &[f64] {
        self.cache.get(layer, index)
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }
}

/// Bottom-up contraction of every sample through every node.
pub fn up_pass(model: &TtnModel, set: &TrainingSet<'_>) -> Result<UpCache> {
    set.check(model)?;
    let mut ws = Workspace::new(model, set);
    ws.ensure_all_up(model);
    Ok(UpCache {
        revision: model.revision(),
        cache: ws.up,
    })
}

/// Top-down contraction of the label vectors; needs a fresh up-cache.
pub fn down_pass(model: &TtnModel, set: &TrainingSet<'_>, up: &UpCache) -> Result<DownCache> {
    set.check(model)?;
    up.check(model)?;
    let mut ws = Workspace::new(model, set);
    ws.up = up.cache.clone();
    let layout = *model.layout();
    for k in (1..=layout.num_layers).rev() {
        for m in 0..layout.layer_len(k) {
            ws.ensure_down(model, k, m);
        }
    }
    Ok(DownCache {
        revision: model.revision(),
        cache: ws.down,
    })
}

/// Environment of node `(layer, index)` from full caches.
pub fn environment(
    model: &TtnModel,
    node: (usize, usize),
    set: &TrainingSet<'_>,
    up: &UpCache,
    down: &DownCache,
) -> Result<EnvironmentTensor> {
    up.check(model)?;
    if down.revision != model.revision() {
        return Err(Error::CacheInvalid {
            cache_revision: down.revision,
            model_revision: model.revision(),
        });
    }
    let (k, m) = node;
    let layout = model.layout();
    if k == 0 || k > layout.num_layers || m >= layout.layer_len(k) {
        return Err(Error::Layout(format!("no node ({k},{m}) in {layout}")));
    }
    let mut ws = Workspace::new(model, set);
    ws.up = up.cache.clone();
    ws.down = down.cache.clone();
    ws.environment(model, k, m)
}

/// `f = −Σ_n ⟨p̃_n|p_n⟩`.
pub fn cost(model: &TtnModel, set: &TrainingSet<'_>) -> Result<f64> {
    let up = up_pass(model, set)?;
    let dim = model.layout().out_dim;
    let root = up.node(model.layout().num_layers, 0);
    Ok(-set
        .targets()
        .iter()
        .enumerate()
        .map(|(n, &t)| root[n * dim + t])
        .sum::<f64>())
}

/// Trains with the default no-op observer.
pub fn train(model: TtnModel, set: &TrainingSet<'_>, cfg: &TrainConfig) -> Result<(TtnModel, SweepTrace)> {
    train_observed(model, set, cfg, |_| {})
}

/// Sweeps layer 1 → K, index-ascending, replacing each tensor by the
/// isometric optimum of its environment. `observer` sees every update.
pub fn train_observed<F>(
    mut model: TtnModel,
    set: &TrainingSet<'_>,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<(TtnModel, SweepTrace)>
where
    F: FnMut(&UpdateEvent<'_>),
{
    cfg.validate()?;
    set.check(&model)?;
    model.check_isometric(1e-8)?;
    let layout = *model.layout();

    let mut ws = Workspace::for_training(&model, set, cfg);
    ws.ensure_all_up(&model);
    let (initial_cost, _) = ws.cost_and_accuracy(&model);
    let mut trace = SweepTrace {
        initial_cost,
        records: Vec::new(),
        converged: false,
    };
    let mut prev_cost = initial_cost;

    for sweep in 1..=cfg.max_sweeps {
        let start = Instant::now();
        for (k, m) in layout.nodes() {
            let env = ws.environment(&model, k, m)?;
            let before = -env.trace_with(model.tensor(k, m));
            let upd = update_tensor(model.tensor(k, m), &env, cfg.seed)?;
            let after = -env.trace_with(&upd.tensor);
            if !after.is_finite() {
                return Err(Error::NumericFailure {
                    sweep,
                    message: format!("non-finite cost at node ({k},{m})"),
                });
            }
            let singular_sum = upd.singular_sum();
            model.set_tensor(k, m, upd.tensor)?;
            ws.tensor_changed(&model, k, m);
            observer(&UpdateEvent {
                sweep,
                layer: k,
                index: m,
                cost_before: before,
                cost_after: after,
                singular_sum,
                model: &model,
            });
        }
        ws.ensure_all_up(&model);
        let (cost, acc) = ws.cost_and_accuracy(&model);
        if !cost.is_finite() {
            return Err(Error::NumericFailure {
                sweep,
                message: "non-finite cost".into(),
            });
        }
        trace.records.push(SweepRecord {
            sweep,
            cost,
            train_accuracy: acc,
            seconds: start.elapsed().as_secs_f64(),
        });
        let rel = (cost - prev_cost).abs() / cost.abs().max(f64::MIN_POSITIVE);
        prev_cost = cost;
        if rel < cfg.cost_tolerance {
            trace.converged = true;
            break;
        }
    }
    Ok((model, trace))
}
