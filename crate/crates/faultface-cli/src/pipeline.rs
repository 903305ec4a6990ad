//! End-to-end pipeline: ingest -> portraits -> per-class GAN training ->
//! balancing -> SSIM report -> CNN training -> evaluation -> summary.
//!
//! Every stage reads its inputs from the previous stage's on-disk
//! artifacts and writes its own, so each is runnable standalone; the
//! full run is just the stages in order. All artifacts are deterministic
//! in (config, seed): no timestamps, sorted traversals, fixed float
//! formatting.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use faultface::classifier::{self, ClassifierConfig};
use faultface::dataset::{
    class_histogram, load_manifest, load_record, segment_record, BehaviorClass, Window,
};
use faultface::derive_seed;
use faultface::gan::{self, AdvConfig, GanFlavor, GanModel, LossRecord, TrainSink};
use faultface::metrics::{self, ConfusionMatrix, MetricsReport};
use faultface::nn::checkpoint;
use faultface::portrait::{self, Portrait, PortraitKind};

use crate::config::{ConfigError, ExperimentConfig};
use crate::pgm;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit code 1.
    Config(String),
    /// Missing or malformed data: exit code 2.
    Data(String),
    /// NaN/Inf during training: exit code 3.
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {}", m),
            CliError::Data(m) => write!(f, "data error: {}", m),
            CliError::Numeric(m) => write!(f, "numeric failure: {}", m),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<faultface::Error> for CliError {
    fn from(e: faultface::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn in_stage<T>(name: &str, r: CliResult<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("stage {}: {}", name, m)),
        CliError::Data(m) => CliError::Data(format!("stage {}: {}", name, m)),
        CliError::Numeric(m) => CliError::Numeric(format!("stage {}: {}", name, m)),
    })
}

fn fmt_f(v: f64) -> String {
    format!("{:.6}", v)
}

// ---------------------------------------------------------------------
// Portrait sets on disk
// ---------------------------------------------------------------------

struct PortraitSet<'a> {
    cfg: &'a ExperimentConfig,
    subdir: &'static str,
}

impl<'a> PortraitSet<'a> {
    fn dir(&self) -> PathBuf {
        self.cfg.output_dir.join(self.subdir)
    }

    fn index_path(&self) -> PathBuf {
        self.dir().join("index.csv")
    }

    /// Write portraits plus an index of their metadata; `indices` pair
    /// each portrait with its window (or generation) number.
    fn write(&self, portraits: &[Portrait], indices: &[usize]) -> CliResult<()> {
        let dir = self.dir();
        fs::create_dir_all(&dir)?;
        let mut index = String::from("path,kind,label,source_id,window_index\n");
        for (p, &idx) in portraits.iter().zip(indices) {
            let name = pgm::portrait_filename(p, idx);
            pgm::write_pgm(p, &dir.join(&name))?;
            index.push_str(&format!(
                "{},{},{},{},{}\n",
                name, p.kind, p.label, p.source_id, idx
            ));
        }
        fs::write(self.index_path(), index)?;
        Ok(())
    }

    fn load(&self) -> CliResult<Vec<Portrait>> {
        let index_path = self.index_path();
        let text = fs::read_to_string(&index_path).map_err(|e| {
            CliError::Data(format!(
                "{}: {} (run the producing stage first)",
                index_path.display(),
                e
            ))
        })?;
        let dir = self.dir();
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(CliError::Data(format!(
                    "{} line {}: want 5 fields",
                    index_path.display(),
                    i + 1
                )));
            }
            let kind = PortraitKind::parse(fields[1]).ok_or_else(|| {
                CliError::Data(format!("{} line {}: bad kind", index_path.display(), i + 1))
            })?;
            let label = BehaviorClass::parse(fields[2]).ok_or_else(|| {
                CliError::Data(format!("{} line {}: bad label", index_path.display(), i + 1))
            })?;
            let pixels = pgm::read_pgm(&dir.join(fields[0]))?;
            out.push(Portrait::new(pixels, kind, label, fields[3])?);
        }
        Ok(out)
    }
}

fn training_set(cfg: &ExperimentConfig) -> PortraitSet<'_> {
    PortraitSet {
        cfg,
        subdir: "portraits/training",
    }
}

fn original_set(cfg: &ExperimentConfig) -> PortraitSet<'_> {
    PortraitSet {
        cfg,
        subdir: "portraits/original",
    }
}

fn balanced_set(cfg: &ExperimentConfig) -> PortraitSet<'_> {
    PortraitSet {
        cfg,
        subdir: "balanced",
    }
}

// ---------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------

/// Load the manifest, report per-class counts and the imbalance ratio.
pub fn stage_ingest(cfg: &ExperimentConfig) -> CliResult<()> {
    in_stage("ingest", || -> CliResult<()> {
        let manifest = load_manifest(&cfg.manifest)?;
        let hist = class_histogram(&manifest);
        fs::create_dir_all(&cfg.output_dir)?;
        let mut report = String::from("class,count\n");
        for class in BehaviorClass::ALL {
            report.push_str(&format!("{},{}\n", class, hist.counts[class.index()]));
        }
        report.push_str(&format!("total,{}\n", hist.total()));
        report.push_str(&format!(
            "imbalance_ratio,{}\n",
            hist.imbalance_ratio().map(fmt_f).unwrap_or_else(|| "inf".into())
        ));
        fs::write(cfg.output_dir.join("ingest_report.csv"), report)?;
        eprintln!(
            "[ingest] {} records, counts {:?}",
            hist.total(),
            hist.counts
        );
        Ok(())
    }())
}

fn load_windows(cfg: &ExperimentConfig) -> CliResult<Vec<(Window, f64)>> {
    let manifest = load_manifest(&cfg.manifest)?;
    let base = cfg
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut out = Vec::new();
    for entry in &manifest.entries {
        let record = load_record(entry, &base)?;
        for w in segment_record(&record, cfg.stride) {
            out.push((w, record.sample_rate));
        }
    }
    Ok(out)
}

/// Render the training portraits (every window) and the original-replica
/// portraits (the first `validation_windows_per_record` windows of each
/// record).
pub fn stage_portraits(cfg: &ExperimentConfig) -> CliResult<()> {
    in_stage("portrait", || -> CliResult<()> {
        let pairs = load_windows(cfg)?;
        if pairs.is_empty() {
            return Err(CliError::Data(
                "no windows produced; records may be shorter than 784 samples".into(),
            ));
        }
        let windows: Vec<Window> = pairs.iter().map(|(w, _)| w.clone()).collect();
        let rates: Vec<f64> = pairs.iter().map(|(_, r)| *r).collect();
        let portraits = portrait::make_portraits(cfg.kind, &windows, &rates, &cfg.morse)?;
        let indices: Vec<usize> = windows.iter().map(|w| w.index).collect();
        training_set(cfg).write(&portraits, &indices)?;

        let keep: Vec<usize> = windows
            .iter()
            .enumerate()
            .filter(|(_, w)| w.index < cfg.validation_windows_per_record)
            .map(|(i, _)| i)
            .collect();
        let replica: Vec<Portrait> = keep.iter().map(|&i| portraits[i].clone()).collect();
        let replica_idx: Vec<usize> = keep.iter().map(|&i| windows[i].index).collect();
        original_set(cfg).write(&replica, &replica_idx)?;
        eprintln!(
            "[portrait] {} training portraits, {} original-replica portraits ({})",
            portraits.len(),
            replica.len(),
            cfg.kind
        );
        Ok(())
    }())
}

fn gan_dir(cfg: &ExperimentConfig, class: BehaviorClass) -> PathBuf {
    cfg.output_dir.join("gan").join(class.name())
}

fn adv_config_for(cfg: &ExperimentConfig, class: BehaviorClass) -> AdvConfig {
    AdvConfig {
        seed: derive_seed(cfg.seed, "gan", class.index() as u64),
        ..cfg.adv.clone()
    }
}

pub fn build_model(
    cfg: &ExperimentConfig,
    class: BehaviorClass,
) -> CliResult<GanModel> {
    let adv = adv_config_for(cfg, class);
    let model = match cfg.flavor {
        GanFlavor::Dcgan => gan::build_dcgan(&adv, class, cfg.kind)?,
        GanFlavor::MlpGan => gan::build_mlp_gan(&adv, class, cfg.kind)?,
    };
    Ok(model)
}

struct DiskSink {
    dir: PathBuf,
    history: Vec<LossRecord>,
}

impl TrainSink for DiskSink {
    fn on_log(&mut self, record: &LossRecord) {
        self.history.push(*record);
    }

    fn on_checkpoint(&mut self, iteration: usize, model: &GanModel) -> faultface::Result<()> {
        checkpoint::save_params(
            &model.gen_params,
            &self.dir.join(format!("generator_{:06}.ffnc", iteration)),
        )
    }
}

fn write_meta(
    path: &Path,
    cfg: &ExperimentConfig,
    adv: &AdvConfig,
    model: &GanModel,
    iterations: usize,
) -> CliResult<()> {
    let mut meta = String::new();
    meta.push_str(&format!("flavor={}\n", model.flavor));
    meta.push_str(&format!("class={}\n", model.class_label));
    meta.push_str(&format!("kind={}\n", model.portrait_kind));
    meta.push_str(&format!("iteration={}\n", iterations));
    meta.push_str(&format!("seed={}\n", adv.seed));
    meta.push_str(&format!("experiment_seed={}\n", cfg.seed));
    meta.push_str(&format!("learning_rate={}\n", adv.learning_rate));
    meta.push_str(&format!("batch_size={}\n", adv.batch_size));
    meta.push_str(&format!("d_steps={}\n", adv.d_steps));
    meta.push_str(&format!("noise_dim={}\n", adv.noise_dim));
    meta.push_str(&format!(
        "lr_decay={}\n",
        adv.lr_decay.map(|v| v.to_string()).unwrap_or_default()
    ));
    let (g0, g1, g2) = adv.gen_channels;
    meta.push_str(&format!("gen_channels={},{},{}\n", g0, g1, g2));
    let (d0, d1, d2) = adv.disc_channels;
    meta.push_str(&format!("disc_channels={},{},{}\n", d0, d1, d2));
    fs::write(path, meta)?;
    Ok(())
}

fn train_one_gan(cfg: &ExperimentConfig, class: BehaviorClass, reals: Vec<Portrait>) -> CliResult<()> {
    if reals.is_empty() {
        return Err(CliError::Data(format!(
            "no training portraits for class {}",
            class
        )));
    }
    let dir = gan_dir(cfg, class);
    fs::create_dir_all(&dir)?;
    let adv = adv_config_for(cfg, class);
    let model = build_model(cfg, class)?;
    let mut sink = DiskSink {
        dir: dir.clone(),
        history: Vec::new(),
    };
    let (trained, history) = gan::train_adversarial_with(model, &reals, &adv, &mut sink)?;

    checkpoint::save_params(&trained.gen_params, &dir.join("generator.ffnc"))?;
    checkpoint::save_params(&trained.disc_params, &dir.join("discriminator.ffnc"))?;
    write_meta(&dir.join("model.meta"), cfg, &adv, &trained, adv.iterations)?;

    let mut csv = String::from("iter,d_loss,g_loss\n");
    for r in &history {
        csv.push_str(&format!("{},{},{}\n", r.iter, r.d_loss, r.g_loss));
    }
    fs::write(dir.join("loss_history.csv"), csv)?;
    let last = history.last();
    eprintln!(
        "[train-gan] {} done ({} portraits, {} iterations, final d={:.4} g={:.4})",
        class,
        reals.len(),
        adv.iterations,
        last.map(|r| r.d_loss).unwrap_or(f64::NAN),
        last.map(|r| r.g_loss).unwrap_or(f64::NAN),
    );
    Ok(())
}

/// Train one GAN per class on the training portraits (or a single class
/// when `only` is given). Per-class trainings are independent; they run
/// concurrently up to the worker limit, each seeded from the experiment
/// seed and its class index.
pub fn stage_train_gans(cfg: &ExperimentConfig, only: Option<BehaviorClass>) -> CliResult<()> {
    in_stage("train-gan", || -> CliResult<()> {
        let all = training_set(cfg).load()?;
        let classes: Vec<BehaviorClass> = match only {
            Some(c) => vec![c],
            None => BehaviorClass::ALL.to_vec(),
        };
        let jobs: Vec<(BehaviorClass, Vec<Portrait>)> = classes
            .iter()
            .map(|&c| (c, all.iter().filter(|p| p.label == c).cloned().collect()))
            .collect();

        #[cfg(feature = "parallel")]
        let results: Vec<CliResult<()>> = {
            use rayon::prelude::*;
            jobs.par_iter()
                .map(|(c, reals)| train_one_gan(cfg, *c, reals.clone()))
                .collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<CliResult<()>> = jobs
            .iter()
            .map(|(c, reals)| train_one_gan(cfg, *c, reals.clone()))
            .collect();

        for r in results {
            r?;
        }
        Ok(())
    }())
}

/// Reload a trained model from its checkpoints.
pub fn load_model(cfg: &ExperimentConfig, class: BehaviorClass) -> CliResult<GanModel> {
    let dir = gan_dir(cfg, class);
    let mut model = build_model(cfg, class)?;
    model.gen_params = checkpoint::load_params_for(&model.gen_net, &dir.join("generator.ffnc"))
        .map_err(|e| CliError::Data(format!("{} (train the {} model first)", e, class)))?;
    model.disc_params =
        checkpoint::load_params_for(&model.disc_net, &dir.join("discriminator.ffnc"))
            .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(model)
}

/// Generate portraits from one trained model into `generated/<class>/`.
pub fn stage_generate(cfg: &ExperimentConfig, class: BehaviorClass, n: usize) -> CliResult<()> {
    in_stage("generate", || -> CliResult<()> {
        let model = load_model(cfg, class)?;
        let seed = derive_seed(cfg.seed, "generate-cli", class.index() as u64);
        let portraits = gan::generate_portraits(&model, n, seed)?;
        let set = PortraitSet {
            cfg,
            subdir: "generated",
        };
        let dir = set.dir().join(class.name());
        fs::create_dir_all(&dir)?;
        let mut index = String::from("path,kind,label,source_id,window_index\n");
        for (i, p) in portraits.iter().enumerate() {
            let name = pgm::portrait_filename(p, i);
            pgm::write_pgm(p, &dir.join(&name))?;
            index.push_str(&format!("{},{},{},{},{}\n", name, p.kind, p.label, p.source_id, i));
        }
        fs::write(dir.join("index.csv"), index)?;
        eprintln!("[generate] {} portraits for {}", n, class);
        Ok(())
    }())
}

/// Generate `target_per_class` portraits from every class model and
/// write the balanced set plus its provenance manifest.
pub fn stage_balance(cfg: &ExperimentConfig) -> CliResult<()> {
    in_stage("balance", || -> CliResult<()> {
        let models: Vec<GanModel> = BehaviorClass::ALL
            .iter()
            .map(|&c| load_model(cfg, c))
            .collect::<CliResult<_>>()?;
        let set = gan::balance_dataset(&models, cfg.target_per_class, cfg.seed)?;
        let indices: Vec<usize> = (0..set.portraits.len())
            .map(|i| i % cfg.target_per_class)
            .collect();
        balanced_set(cfg).write(&set.portraits, &indices)?;

        let mut prov = String::from("class,kind,model_id,seed,count\n");
        for e in &set.provenance {
            prov.push_str(&format!(
                "{},{},{},{},{}\n",
                e.class, e.kind, e.model_id, e.seed, e.count
            ));
        }
        fs::write(cfg.output_dir.join("balanced").join("provenance.csv"), prov)?;
        eprintln!(
            "[balance] {} synthetic portraits ({} per class)",
            set.portraits.len(),
            cfg.target_per_class
        );
        Ok(())
    }())
}

/// All-pairs SSIM of original vs generated portraits, per class.
pub fn stage_ssim(cfg: &ExperimentConfig) -> CliResult<()> {
    in_stage("ssim-report", || -> CliResult<()> {
        let originals = training_set(cfg).load()?;
        let generated = balanced_set(cfg).load()?;
        let dir = cfg.output_dir.join("ssim");
        fs::create_dir_all(&dir)?;
        let mut stats_csv = String::from("class,kind,mean,std,range,pairs\n");
        for class in BehaviorClass::ALL {
            let orig: Vec<Portrait> = originals.iter().filter(|p| p.label == class).cloned().collect();
            let synth: Vec<Portrait> = generated.iter().filter(|p| p.label == class).cloned().collect();
            let stats = metrics::ssim_distribution(&orig, &synth)?;
            let mut pairs_csv = String::from("orig_id,gen_id,ssim\n");
            for &(i, j, v) in &stats.pairs {
                pairs_csv.push_str(&format!(
                    "{},{},{}\n",
                    orig[i].source_id, synth[j].source_id, v
                ));
            }
            fs::write(dir.join(format!("pairs_{}.csv", class)), pairs_csv)?;
            stats_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                class,
                cfg.kind,
                fmt_f(stats.mean),
                fmt_f(stats.std),
                fmt_f(stats.range),
                stats.pairs.len()
            ));
            eprintln!(
                "[ssim-report] {}: mean {:.4} std {:.4} range {:.4} over {} pairs",
                class,
                stats.mean,
                stats.std,
                stats.range,
                stats.pairs.len()
            );
        }
        fs::write(dir.join("stats.csv"), stats_csv)?;
        Ok(())
    }())
}

fn classifier_cfg(cfg: &ExperimentConfig) -> ClassifierConfig {
    ClassifierConfig {
        seed: derive_seed(cfg.seed, "classifier", 0),
        ..cfg.classifier.clone()
    }
}

/// Train the CNN on the balanced set and record per-epoch accuracies.
pub fn stage_train_cnn(cfg: &ExperimentConfig) -> CliResult<()> {
    in_stage("train-cnn", || -> CliResult<()> {
        let balanced = balanced_set(cfg).load()?;
        let ccfg = classifier_cfg(cfg);
        let (net, params) = classifier::build_cnn_with(ccfg.seed, ccfg.channels)?;
        let (trained, history) = classifier::train_cnn(&net, params, &balanced, &ccfg)?;
        let dir = cfg.output_dir.join("cnn");
        fs::create_dir_all(&dir)?;
        checkpoint::save_params(&trained, &dir.join("model.ffnc"))?;
        let mut csv = String::from("epoch,train_acc,val_acc\n");
        for r in &history {
            csv.push_str(&format!("{},{},{}\n", r.epoch, r.train_acc, r.val_acc));
        }
        fs::write(dir.join("history.csv"), csv)?;
        let mut meta = String::new();
        meta.push_str(&format!("epochs={}\n", ccfg.epochs));
        meta.push_str(&format!("learning_rate={}\n", ccfg.learning_rate));
        meta.push_str(&format!("batch_size={}\n", ccfg.batch_size));
        meta.push_str(&format!("train_per_class={}\n", ccfg.train_per_class));
        meta.push_str(&format!("val_per_class={}\n", ccfg.val_per_class));
        meta.push_str(&format!("seed={}\n", ccfg.seed));
        let (c0, c1, c2) = ccfg.channels;
        meta.push_str(&format!("channels={},{},{}\n", c0, c1, c2));
        fs::write(dir.join("model.meta"), meta)?;
        let last = history.last();
        eprintln!(
            "[train-cnn] {} epochs, final train_acc {:.4} val_acc {:.4}",
            history.len(),
            last.map(|r| r.train_acc).unwrap_or(f64::NAN),
            last.map(|r| r.val_acc).unwrap_or(f64::NAN),
        );
        Ok(())
    }())
}

fn write_confusion(path: &Path, cm: &ConfusionMatrix) -> CliResult<()> {
    let mut csv = String::from("predicted\\true");
    for c in BehaviorClass::ALL {
        csv.push_str(&format!(",{}", c));
    }
    csv.push('\n');
    for predicted in BehaviorClass::ALL {
        csv.push_str(predicted.name());
        for actual in BehaviorClass::ALL {
            csv.push_str(&format!(",{}", cm.count(predicted, actual)));
        }
        csv.push('\n');
    }
    fs::write(path, csv)?;
    Ok(())
}

fn read_confusion(path: &Path) -> CliResult<ConfusionMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))?;
    let mut counts = [[0usize; 6]; 6];
    for (row, line) in text.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::Data(format!("{}: malformed row {}", path.display(), row)));
        }
        for (col, f) in fields[1..].iter().enumerate() {
            counts[row][col] = f
                .parse()
                .map_err(|_| CliError::Data(format!("{}: bad count {:?}", path.display(), f)))?;
        }
    }
    Ok(ConfusionMatrix::from_counts(counts))
}

fn write_metrics(path: &Path, report: &MetricsReport) -> CliResult<()> {
    let mut csv = String::from("class,TP,FP,FN,accuracy,coverage,harmonic_mean\n");
    for (i, m) in report.per_class.iter().enumerate() {
        let class = BehaviorClass::from_index(i).unwrap();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            class,
            m.tp,
            m.fp,
            m.fn_,
            fmt_f(m.accuracy),
            fmt_f(m.coverage),
            fmt_f(m.harmonic_mean)
        ));
    }
    fs::write(path, csv)?;
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOutcome {
    pub validation_accuracy: f64,
    pub original_accuracy: f64,
}

/// Evaluate the trained CNN on the balanced validation split and on the
/// original-replica portraits; write confusion matrices and Eq.-style
/// metric tables for both.
pub fn stage_evaluate(cfg: &ExperimentConfig) -> CliResult<EvalOutcome> {
    in_stage("evaluate", || -> CliResult<EvalOutcome> {
        let balanced = balanced_set(cfg).load()?;
        let originals = original_set(cfg).load()?;
        let ccfg = classifier_cfg(cfg);
        let net = classifier::build_cnn_spec(ccfg.channels)?;
        let params = checkpoint::load_params_for(&net, &cfg.output_dir.join("cnn/model.ffnc"))
            .map_err(|e| CliError::Data(format!("{} (train the CNN first)", e)))?;

        let (_, val) = classifier::split_train_val(&balanced, &ccfg)?;
        let cm_val = classifier::evaluate(&net, &params, &val)?;
        let cm_orig = classifier::evaluate(&net, &params, &originals)?;

        let dir = cfg.output_dir.join("reports");
        fs::create_dir_all(&dir)?;
        write_confusion(&dir.join("confusion_validation.csv"), &cm_val)?;
        write_confusion(&dir.join("confusion_original.csv"), &cm_orig)?;
        let report_val = metrics::report_all(&cm_val)?;
        let report_orig = metrics::report_all(&cm_orig)?;
        write_metrics(&dir.join("metrics_validation.csv"), &report_val)?;
        write_metrics(&dir.join("metrics_original.csv"), &report_orig)?;

        eprintln!(
            "[evaluate] validation accuracy {:.4} ({} portraits), original accuracy {:.4} ({} portraits)",
            report_val.overall_accuracy,
            cm_val.total(),
            report_orig.overall_accuracy,
            cm_orig.total()
        );
        Ok(EvalOutcome {
            validation_accuracy: report_val.overall_accuracy,
            original_accuracy: report_orig.overall_accuracy,
        })
    }())
}

fn sha256_hex(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{:02x}", b));
    }
    Ok(hex)
}

fn walk_sorted(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            walk_sorted(root, &path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Assemble the machine-readable run summary: stage statuses, the full
/// config echo, headline metrics, SSIM statistics, and a content-hash
/// inventory of every artifact.
pub fn emit_reports(cfg: &ExperimentConfig, stages: &[(&str, bool)]) -> CliResult<PathBuf> {
    in_stage("report", || -> CliResult<PathBuf> {
        let mut rows: Vec<(String, String, String)> = Vec::new();
        for (name, ok) in stages {
            rows.push((
                "stage".into(),
                (*name).into(),
                if *ok { "ok".into() } else { "failed".into() },
            ));
        }
        for (k, v) in cfg.echo() {
            rows.push(("config".into(), k, v));
        }

        // headline metrics re-derived from the confusion matrices on disk
        let reports_dir = cfg.output_dir.join("reports");
        for (tag, file) in [
            ("validation", "confusion_validation.csv"),
            ("original", "confusion_original.csv"),
        ] {
            let cm = read_confusion(&reports_dir.join(file))?;
            let report = metrics::report_all(&cm)?;
            rows.push((
                "metric".into(),
                format!("{}.overall_accuracy", tag),
                fmt_f(report.overall_accuracy),
            ));
            for (i, m) in report.per_class.iter().enumerate() {
                let class = BehaviorClass::from_index(i).unwrap();
                rows.push((
                    "metric".into(),
                    format!("{}.{}.accuracy", tag, class),
                    fmt_f(m.accuracy),
                ));
                rows.push((
                    "metric".into(),
                    format!("{}.{}.coverage", tag, class),
                    fmt_f(m.coverage),
                ));
                rows.push((
                    "metric".into(),
                    format!("{}.{}.harmonic_mean", tag, class),
                    fmt_f(m.harmonic_mean),
                ));
            }
        }

        // SSIM statistics from the ssim stage
        let stats_path = cfg.output_dir.join("ssim/stats.csv");
        let stats_text = fs::read_to_string(&stats_path)
            .map_err(|e| CliError::Data(format!("{}: {}", stats_path.display(), e)))?;
        for line in stats_text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                continue;
            }
            rows.push(("ssim".into(), format!("{}.mean", fields[0]), fields[2].into()));
            rows.push(("ssim".into(), format!("{}.std", fields[0]), fields[3].into()));
            rows.push(("ssim".into(), format!("{}.range", fields[0]), fields[4].into()));
        }

        rows.push((
            "note".into(),
            "metrics".into(),
            "coverage uses the strict column-sum false-negative tally".into(),
        ));

        // artifact inventory
        let mut files = Vec::new();
        walk_sorted(&cfg.output_dir, &cfg.output_dir, &mut files)?;
        let summary_path = cfg.output_dir.join("summary.csv");
        for path in files {
            if path == summary_path {
                continue;
            }
            let rel = path
                .strip_prefix(&cfg.output_dir)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            rows.push(("artifact".into(), rel, sha256_hex(&path)?));
        }

        let mut csv = String::from("section,key,value\n");
        for (s, k, v) in rows {
            csv.push_str(&format!("{},{},{}\n", s, k, v));
        }
        fs::write(&summary_path, csv)?;
        eprintln!("[report] wrote {}", summary_path.display());
        Ok(summary_path)
    }())
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary_path: PathBuf,
    pub validation_accuracy: f64,
    pub original_accuracy: f64,
}

/// The whole pipeline in order. Any stage error aborts the run with a
/// stage-named diagnostic.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunOutcome> {
    fs::create_dir_all(&cfg.output_dir)?;
    let mut stages: Vec<(&str, bool)> = Vec::new();
    let run = |name: &'static str,
                   stages: &mut Vec<(&str, bool)>,
                   f: &mut dyn FnMut() -> CliResult<()>|
     -> CliResult<()> {
        let result = f();
        stages.push((name, result.is_ok()));
        result
    };

    run("ingest", &mut stages, &mut || stage_ingest(cfg))?;
    run("portrait", &mut stages, &mut || stage_portraits(cfg))?;
    run("train-gan", &mut stages, &mut || stage_train_gans(cfg, None))?;
    run("balance", &mut stages, &mut || stage_balance(cfg))?;
    run("ssim-report", &mut stages, &mut || stage_ssim(cfg))?;
    run("train-cnn", &mut stages, &mut || stage_train_cnn(cfg))?;
    let mut eval = None;
    run("evaluate", &mut stages, &mut || {
        eval = Some(stage_evaluate(cfg)?);
        Ok(())
    })?;
    let eval = eval.expect("evaluate stage ran");
    let summary_path = emit_reports(cfg, &stages)?;
    Ok(RunOutcome {
        summary_path,
        validation_accuracy: eval.validation_accuracy,
        original_accuracy: eval.original_accuracy,
    })
}
