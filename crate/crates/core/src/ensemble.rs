//! One-against-all classification with one binary tree per class.
//!
//! The class state of model `p` is `|ψ_p⟩ = Ψ_p|yes⟩`; an image `|v⟩` is
//! scored by `F_p = |⟨v|ψ_p⟩|`, the magnitude of the yes-component of the
//! forward output, and assigned to the class with the largest score.

use std::fmt;
use std::io::Write;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::feature::VectorizedImage;
use crate::model::{TtnLayout, TtnModel};
use crate::par;
use crate::report::fmt_real;
use crate::trainer::{self, SweepTrace, TrainConfig, TrainingSet, NO, YES};

#[derive(Clone, Debug)]
pub struct Ensemble {
    classes: Vec<usize>,
    models: Vec<TtnModel>,
}

impl Ensemble {
    pub fn new(classes: Vec<usize>, models: Vec<TtnModel>) -> Result<Self> {
        if classes.is_empty() || classes.len() != models.len() {
            return Err(Error::Domain(format!(
                "{} classes for {} models",
                classes.len(),
                models.len()
            )));
        }
        let mut sorted = classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != classes.len() {
            return Err(Error::Domain(format!("duplicate class ids in {classes:?}")));
        }
        let first = *models[0].layout();
        for m in &models {
            let l = m.layout();
            if l.side != first.side || l.d != first.d {
                return Err(Error::LayoutMismatch {
                    expected: first,
                    found: *l,
                });
            }
            if l.out_dim == 0 {
                return Err(Error::Layout(format!("model {l} has no yes component")));
            }
        }
        Ok(Self { classes, models })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn models(&self) -> &[TtnModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn model_for(&self, class: usize) -> Option<&TtnModel> {
        self.classes.iter().position(|&c| c == class).map(|i| &self.models[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &TtnModel)> {
        self.classes.iter().copied().zip(&self.models)
    }
}

/// `F_p` for every class, in ensemble order.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityVector {
    pub classes: Vec<usize>,
    pub values: Vec<f64>,
}

/// Training setup of one class model.
#[derive(Clone, Debug)]
pub struct ClassJob {
    pub class: usize,
    pub layout: TtnLayout,
    pub train: TrainConfig,
    pub init_seed: u64,
}

/// Trains one yes/no model per job: samples of the job's class are `YES`,
/// every other sample is `NO`.
pub fn train_one_vs_all(ds: &Dataset, jobs: &[ClassJob]) -> Result<(Ensemble, Vec<SweepTrace>)> {
    if jobs.len() < 2 {
        return Err(Error::Domain("one-against-all needs at least 2 classes".into()));
    }
    for job in jobs {
        if ds.count_of(job.class) == 0 {
            return Err(Error::Domain(format!("class {} has no training samples", job.class)));
        }
    }
    let results = par::map(jobs, |job| -> Result<(TtnModel, SweepTrace)> {
        let model = TtnModel::init_random(job.layout, job.init_seed)?;
        let set = TrainingSet::one_vs_all(ds, job.class);
        trainer::train(model, &set, &job.train)
    });
    let mut models = Vec::with_capacity(jobs.len());
    let mut traces = Vec::with_capacity(jobs.len());
    for r in results {
        let (m, t) = r?;
        models.push(m);
        traces.push(t);
    }
    let ensemble = Ensemble::new(jobs.iter().map(|j| j.class).collect(), models)?;
    Ok((ensemble, traces))
}

/// `|⟨v|ψ_p⟩|` = magnitude of the yes-component of `forward(model, image)`.
pub fn class_state_overlap(model: &TtnModel, image: &VectorizedImage) -> Result<f64> {
    Ok(model.forward(image)?[YES].abs())
}

/// Class with the largest fidelity; ties go to the lowest class id.
pub fn predict(ensemble: &Ensemble, image: &VectorizedImage) -> Result<(usize, FidelityVector)> {
    let values = ensemble
        .models
        .iter()
        .map(|m| class_state_overlap(m, image))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (&c, &f) in ensemble.classes.iter().zip(&values) {
        best = match best {
            Some((bc, bf)) if bf > f || (bf == f && bc < c) => Some((bc, bf)),
            _ => Some((c, f)),
        };
    }
    let (class, _) = best.expect("non-empty ensemble");
    Ok((
        class,
        FidelityVector {
            classes: ensemble.classes.clone(),
            values,
        },
    ))
}

/// Anything that maps an image to a class id.
pub trait Classifier: Sync {
    fn classes(&self) -> Vec<usize>;
    fn classify(&self, image: &VectorizedImage) -> Result<usize>;
}

impl Classifier for Ensemble {
    fn classes(&self) -> Vec<usize> {
        let mut c = self.classes.clone();
        c.sort_unstable();
        c
    }

    fn classify(&self, image: &VectorizedImage) -> Result<usize> {
        predict(self, image).map(|(c, _)| c)
    }
}

/// A single yes/no model deciding between two classes by the larger
/// output magnitude.
#[derive(Clone, Debug)]
pub struct BinaryClassifier {
    pub model: TtnModel,
    pub positive: usize,
    pub negative: usize,
}

impl BinaryClassifier {
    pub fn training_set<'a>(&self, ds: &'a Dataset) -> TrainingSet<'a> {
        TrainingSet::one_vs_all(ds, self.positive)
    }
}

impl Classifier for BinaryClassifier {
    fn classes(&self) -> Vec<usize> {
        let mut c = vec![self.positive, self.negative];
        c.sort_unstable();
        c
    }

    fn classify(&self, image: &VectorizedImage) -> Result<usize> {
        let out = self.model.forward(image)?;
        Ok(match TtnModel::predict_index(&out) {
            YES => self.positive,
            NO => self.negative,
            other => unreachable!("binary model produced index {other}"),
        })
    }
}

/// Counts with rows = true class and columns = predicted class.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    pub classes: Vec<usize>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub total: usize,
    pub correct: usize,
    /// Recall per class, same order as the confusion matrix.
    pub per_class: Vec<f64>,
    pub confusion: ConfusionMatrix,
}

impl Evaluation {
    /// Per-class accuracy rows, then the confusion matrix, both as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "class,samples,accuracy")?;
        for (i, c) in self.confusion.classes.iter().enumerate() {
            let n: usize = self.confusion.counts[i].iter().sum();
            writeln!(w, "{c},{n},{}", fmt_real(self.per_class[i]))?;
        }
        writeln!(w, "all,{},{}", self.total, fmt_real(self.accuracy))?;
        writeln!(w)?;
        let header: Vec<String> = self.confusion.classes.iter().map(|c| format!("pred_{c}")).collect();
        writeln!(w, "true,{}", header.join(","))?;
        for (i, c) in self.confusion.classes.iter().enumerate() {
            let row: Vec<String> = self.confusion.counts[i].iter().map(|x| x.to_string()).collect();
            writeln!(w, "{c},{}", row.join(","))?;
        }
        Ok(())
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6} {:>8} {:>9}", "class", "samples", "accuracy")?;
        for (i, c) in self.confusion.classes.iter().enumerate() {
            let n: usize = self.confusion.counts[i].iter().sum();
            writeln!(f, "{c:>6} {n:>8} {:>8.2}%", 100.0 * self.per_class[i])?;
        }
        writeln!(f, "{:>6} {:>8} {:>8.2}%", "all", self.total, 100.0 * self.accuracy)?;
        writeln!(f)?;
        write!(f, "{:>6}", "true\\p")?;
        for c in &self.confusion.classes {
            write!(f, " {c:>6}")?;
        }
        writeln!(f)?;
        for (i, c) in self.confusion.classes.iter().enumerate() {
            write!(f, "{c:>6}")?;
            for x in &self.confusion.counts[i] {
                write!(f, " {x:>6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Accuracy and confusion matrix of `clf` on a labeled dataset.
pub fn evaluate<C: Classifier + ?Sized>(clf: &C, ds: &Dataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Domain("empty evaluation set".into()));
    }
    let classes = clf.classes();
    let position = |c: usize| classes.iter().position(|&x| x == c);
    if let Some(&bad) = ds.labels().iter().find(|&&l| position(l).is_none()) {
        return Err(Error::Domain(format!(
            "label {bad} is not one of the classes {classes:?}"
        )));
    }
    let predictions = par::map(ds.images(), |img| clf.classify(img))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (&truth, &pred) in ds.labels().iter().zip(&predictions) {
        let p = position(pred).expect("classifier predicts one of its classes");
        counts[position(truth).expect("checked")][p] += 1;
    }
    let correct: usize = (0..k).map(|i| counts[i][i]).sum();
    let per_class = (0..k)
        .map(|i| {
            let n: usize = counts[i].iter().sum();
            if n == 0 {
                0.0
            } else {
                counts[i][i] as f64 / n as f64
            }
        })
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / ds.len() as f64,
        total: ds.len(),
        correct,
        per_class,
        confusion: ConfusionMatrix { classes, counts },
    })
}
