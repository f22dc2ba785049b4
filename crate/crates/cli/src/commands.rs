use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ttn::analysis::{entanglement_report, fidelity_matrix};
use ttn::data::{
    build_dataset, cifar10_paths, load_cifar10, load_mnist_idx, mnist_paths, Dataset, DatasetConfig, RawImageSet,
};
use ttn::ensemble::{evaluate, train_one_vs_all, BinaryClassifier, ClassJob, Ensemble, Evaluation};
use ttn::format;
use ttn::model::TtnModel;
use ttn::report::fmt_real;
use ttn::trainer::{train, SweepTrace, TrainingSet};

use crate::config::{entries, RunConfig};
use crate::error::{write_failed, CliError, CliResult};

pub const MANIFEST: &str = "manifest.txt";
pub const TRACE: &str = "trace.csv";
pub const TIMING: &str = "timing.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
        }
    }
}

/// Resolves the data directory: config entry, then `TTN_DATA_DIR`.
fn data_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    cfg.data_dir
        .clone()
        .or_else(|| std::env::var_os("TTN_DATA_DIR").map(PathBuf::from))
        .ok_or_else(|| CliError::usage("no data directory: pass --data-dir or set TTN_DATA_DIR"))
}

fn load_raw(cfg: &RunConfig, split: Split) -> CliResult<RawImageSet> {
    let dir = data_dir(cfg)?;
    let train = split == Split::Train;
    let raw = match cfg.dataset {
        crate::config::DatasetKind::Mnist => {
            let (img, lab) = mnist_paths(&dir, train);
            load_mnist_idx(img, lab)
        }
        crate::config::DatasetKind::Cifar10 => load_cifar10(&cifar10_paths(&dir, train)),
    };
    raw.map_err(|e| {
        CliError::incompatible(format!(
            "cannot load {} {} data from {}: {e}",
            cfg.dataset.name(),
            split.name(),
            dir.display()
        ))
    })
}

pub fn load_dataset(cfg: &RunConfig, split: Split) -> CliResult<Dataset> {
    let raw = load_raw(cfg, split)?;
    let mut dc = DatasetConfig::new(cfg.d, cfg.side())?;
    dc.classes = Some(cfg.classes.clone());
    dc.per_class = match split {
        Split::Train => cfg.samples_per_class,
        Split::Test => cfg.test_samples_per_class,
    };
    dc.gray = cfg.gray;
    dc.resample = cfg.resample;
    Ok(build_dataset(&raw, &dc)?)
}

fn create_file(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| write_failed(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> CliResult<()> {
    let mut w = create_file(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| write_failed(path, e))
}

fn model_file(cfg: &RunConfig, class: usize) -> String {
    if cfg.is_binary() {
        format!("model_{}_vs_{}.ttn", cfg.classes[0], cfg.classes[1])
    } else {
        format!("model_{class}.ttn")
    }
}

/// Config echo plus versions, the training mode and the model file names.
fn manifest_text(cfg: &RunConfig, files: &[String]) -> String {
    format!(
        "# ttn run manifest\nttn_version={}\nformat_version={}\nmode={}\nmodels={}\n{}",
        env!("CARGO_PKG_VERSION"),
        format::VERSION,
        if cfg.is_binary() { "binary" } else { "one-vs-all" },
        files.join(","),
        cfg.to_text()
    )
}

/// Trained models described by a manifest.
pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub files: Vec<String>,
}

impl Run {
    /// Reads `dir/manifest.txt`; `overrides` (config file then flags) are
    /// applied on top of the stored configuration.
    pub fn open(dir: &Path, overrides: &[(String, String)]) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let text =
            fs::read_to_string(&path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let mut config = RunConfig::default();
        let mut files = Vec::new();
        let source = path.display().to_string();
        for (key, value) in entries(&text, &source)? {
            match key.as_str() {
                "ttn_version" | "mode" => {}
                "format_version" => {
                    if value != format::VERSION.to_string() {
                        return Err(CliError::incompatible(format!(
                            "{source}: model format version {value}, this build reads {}",
                            format::VERSION
                        )));
                    }
                }
                "models" => files = value.split(',').map(|s| s.trim().to_string()).collect(),
                _ => config.set(&key, &value).map_err(|e| e.context(&source))?,
            }
        }
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        config.validate()?;
        let expected = if config.is_binary() { 1 } else { config.classes.len() };
        if files.len() != expected {
            return Err(CliError::incompatible(format!(
                "{source}: {} model files for classes {:?}",
                files.len(),
                config.classes
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            files,
        })
    }

    pub fn models(&self) -> CliResult<Vec<TtnModel>> {
        let layout = self.config.layout()?;
        self.files
            .iter()
            .map(|f| {
                let path = self.dir.join(f);
                format::load_expecting(&path, &layout).map_err(|e| CliError::from(e).context(path.display()))
            })
            .collect()
    }

    /// One model per class, or a single model for the first class of a
    /// binary run.
    pub fn ensemble(&self) -> CliResult<Ensemble> {
        let classes = if self.config.is_binary() {
            vec![self.config.classes[0]]
        } else {
            self.config.classes.clone()
        };
        Ok(Ensemble::new(classes, self.models()?)?)
    }
}

fn write_traces(out: &Path, classes: &[usize], traces: &[SweepTrace]) -> CliResult<()> {
    write_with(&out.join(TRACE), |w| {
        writeln!(w, "class,sweep,cost,train_accuracy")?;
        for (c, t) in classes.iter().zip(traces) {
            for r in &t.records {
                writeln!(w, "{c},{},{},{}", r.sweep, fmt_real(r.cost), fmt_real(r.train_accuracy))?;
            }
        }
        Ok(())
    })?;
    write_with(&out.join(TIMING), |w| {
        writeln!(w, "class,sweep,seconds")?;
        for (c, t) in classes.iter().zip(traces) {
            for r in &t.records {
                writeln!(w, "{c},{},{:.6}", r.sweep, r.seconds)?;
            }
        }
        Ok(())
    })
}

pub fn train_cmd(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    if cfg.classes.len() < 2 {
        return Err(CliError::usage("train needs at least two classes"));
    }
    fs::create_dir_all(out).map_err(|e| write_failed(out, e))?;
    let ds = load_dataset(cfg, Split::Train)?;
    let layout = cfg.layout()?;
    eprintln!(
        "training {} on {} samples ({}×{}, d={}, chi={})",
        if cfg.is_binary() {
            format!("{} vs {}", cfg.classes[0], cfg.classes[1])
        } else {
            format!("{} one-vs-all models", cfg.classes.len())
        },
        ds.len(),
        layout.side,
        layout.side,
        cfg.d,
        cfg.chi
    );
    let (models, trace_classes, traces) = if cfg.is_binary() {
        let positive = cfg.classes[0];
        let init = TtnModel::init_random(layout, cfg.seed.wrapping_add(positive as u64))?;
        let (model, trace) = train(init, &TrainingSet::one_vs_all(&ds, positive), &cfg.train_config())?;
        (vec![model], vec![positive], vec![trace])
    } else {
        let jobs: Vec<ClassJob> = cfg
            .classes
            .iter()
            .map(|&class| ClassJob {
                class,
                layout,
                train: cfg.train_config(),
                init_seed: cfg.seed.wrapping_add(class as u64),
            })
            .collect();
        let (ens, traces) = train_one_vs_all(&ds, &jobs)?;
        (ens.models().to_vec(), cfg.classes.clone(), traces)
    };

    let mut files = Vec::new();
    for (model, &class) in models.iter().zip(&trace_classes) {
        let name = model_file(cfg, class);
        let path = out.join(&name);
        fs::write(&path, format::to_bytes(model)).map_err(|e| write_failed(&path, e))?;
        files.push(name);
    }
    write_traces(out, &trace_classes, &traces)?;
    let manifest = out.join(MANIFEST);
    fs::write(&manifest, manifest_text(cfg, &files)).map_err(|e| write_failed(&manifest, e))?;
    for (class, t) in trace_classes.iter().zip(&traces) {
        println!(
            "class {class}: {} sweeps, cost {:.6}, train accuracy {:.4}{}",
            t.records.len(),
            t.final_cost(),
            t.final_accuracy().unwrap_or(f64::NAN),
            if t.converged { " (converged)" } else { "" }
        );
    }
    println!("wrote {} model file(s) to {}", files.len(), out.display());
    Ok(())
}

pub fn eval_cmd(run: &Run, split: Split, out: &Path) -> CliResult<Evaluation> {
    let ds = load_dataset(&run.config, split)?;
    let ev = if run.config.is_binary() {
        let model = run.models()?.pop().expect("one model");
        let clf = BinaryClassifier {
            model,
            positive: run.config.classes[0],
            negative: run.config.classes[1],
        };
        evaluate(&clf, &ds)?
    } else {
        evaluate(&run.ensemble()?, &ds)?
    };
    fs::create_dir_all(out).map_err(|e| write_failed(out, e))?;
    write_with(&out.join(format!("eval_{}.csv", split.name())), |w| ev.write_csv(w))?;
    print!("{ev}");
    Ok(ev)
}

pub fn analyze_cmd(run: &Run, out: &Path) -> CliResult<()> {
    let ens = run.ensemble()?;
    fs::create_dir_all(out).map_err(|e| write_failed(out, e))?;
    if ens.len() < 2 {
        eprintln!("warning: fidelities need at least two class models; writing entanglement only");
    } else {
        let f = fidelity_matrix(&ens)?;
        write_with(&out.join("fidelity.csv"), |w| f.write_csv(w))?;
        println!("fidelity |<psi_p|psi_q>|");
        print!("{}", f.heatmap());
        if let Some(&(a, b, v)) = f.ranked_pairs().first() {
            println!("largest off-diagonal: F({a},{b}) = {v:.4}");
        }
    }
    let report = entanglement_report(&ens)?;
    write_with(&out.join("entanglement.csv"), |w| report.write_csv(w))?;
    println!(
        "{:>6} {:>10} {:>10} {:>10}",
        "class", "S(up|dn)", "S(lt|rt)", "2 ln chi"
    );
    for r in &report.rows {
        println!(
            "{:>6} {:>10.5} {:>10.5} {:>10.5}",
            r.class,
            r.up_down.entropy,
            r.left_right.entropy,
            2.0 * (r.chi as f64).ln()
        );
    }
    Ok(())
}

pub fn export_cmd(
    run: &Run,
    class: Option<usize>,
    layers: Option<&[usize]>,
    split: Split,
    out: &Path,
) -> CliResult<()> {
    let ens = run.ensemble()?;
    let class = class.unwrap_or(ens.classes()[0]);
    let model = ens
        .model_for(class)
        .ok_or_else(|| CliError::usage(format!("no model for class {class}; available: {:?}", ens.classes())))?;
    let num_layers = model.layout().num_layers;
    let layers: Vec<usize> = layers.map_or_else(|| (0..=num_layers).collect(), <[usize]>::to_vec);
    if let Some(&bad) = layers.iter().find(|&&k| k > num_layers) {
        return Err(CliError::usage(format!("layer {bad} out of range 0..={num_layers}")));
    }
    let ds = load_dataset(&run.config, split)?;
    fs::create_dir_all(out).map_err(|e| write_failed(out, e))?;
    let mut writers = Vec::new();
    for &k in &layers {
        let path = out.join(format!("embeddings_layer{k}.csv"));
        let mut w = create_file(&path)?;
        let width = model.layout().layer_len(k) * model.layout().node_dim(k);
        let header: Vec<String> = (0..width).map(|i| format!("x{i}")).collect();
        writeln!(w, "sample,label,{}", header.join(",")).map_err(|e| write_failed(&path, e))?;
        writers.push((path, w));
    }
    for (n, (img, &label)) in ds.images().iter().zip(ds.labels()).enumerate() {
        let reps = model.layer_representations(img)?;
        for (&k, (path, w)) in layers.iter().zip(writers.iter_mut()) {
            let row: Vec<String> = reps[k].vectors.iter().map(|&x| fmt_real(x)).collect();
            writeln!(w, "{n},{label},{}", row.join(",")).map_err(|e| write_failed(path, e))?;
        }
    }
    for (path, mut w) in writers {
        w.flush().map_err(|e| write_failed(&path, e))?;
    }
    println!(
        "exported {} samples for class {class} model, layers {layers:?}, to {}",
        ds.len(),
        out.display()
    );
    Ok(())
}
