//! End-to-end orchestration: preprocessing, features, reduction, training,
//! evaluation and reporting.

pub mod corpus;
mod eval;
pub mod synth;
mod train;

use std::fmt::Write as _;
use std::path::Path;

pub use eval::{evaluate, format_percent, EvalReport};
pub use synth::{generate_synthetic, RawUtterance, SynthSpec};
pub use train::{accuracy, batches_per_epoch, train, Curves, EpochRecord, TrainConfig, TrainOutcome};

use crate::checkpoint::{Container, Tensor};
use crate::dataset::{split_indices, LabeledDataset, LabeledItem, Partition, SpeakerIndex, SplitRatios};
use crate::dsp::{apply_filter, design_bandpass, design_notch, BiquadCascade};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{
    extract_eeg_features, extract_mfcc, fuse, normalize_features, EegFeatureConfig, FeatureSequence, FeatureStats,
    MfccConfig, Modality, EEG_CHANNELS, FEATURES_PER_CHANNEL,
};
use crate::ica::{ArtifactReport, FastIcaOptions, IcaCleaner, RejectionThresholds};
use crate::kpca::{cumulative_explained_variance, fit_kpca, subsample_frames, KernelSpec, KpcaModel};
use crate::nn::{Checkpoint, ModelConfig, Params};
use crate::rng::Rng;
use crate::signal::SignalRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub bandpass_order: usize,
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
    pub ica_enabled: bool,
    pub ica: FastIcaOptions,
    pub thresholds: RejectionThresholds,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            bandpass_order: 4,
            bandpass_low_hz: 0.1,
            bandpass_high_hz: 70.0,
            notch_hz: 60.0,
            notch_q: 30.0,
            ica_enabled: true,
            ica: FastIcaOptions::default(),
            thresholds: RejectionThresholds::default(),
        }
    }
}

impl PreprocessConfig {
    /// Band-pass followed by the notch.
    pub fn filter(&self, sample_rate_hz: f64) -> Result<BiquadCascade> {
        let bp = design_bandpass(self.bandpass_order, self.bandpass_low_hz, self.bandpass_high_hz, sample_rate_hz)?;
        let notch = design_notch(self.notch_hz, self.notch_q, sample_rate_hz)?;
        Ok(bp.then(&notch))
    }
}

/// Filters one EEG recording and, if enabled, removes artifact components.
pub fn preprocess_eeg(
    eeg: &SignalRecord,
    config: &PreprocessConfig,
    rng: &mut Rng,
    exec: Execution,
) -> Result<(SignalRecord, Option<ArtifactReport>)> {
    let filtered = apply_filter(&config.filter(eeg.sample_rate())?, eeg, exec)?;
    if !config.ica_enabled {
        return Ok((filtered, None));
    }
    let cleaner = IcaCleaner {
        options: config.ica,
        thresholds: config.thresholds,
    };
    let (clean, report, _) = cleaner.clean(&filtered, rng)?;
    Ok((clean, Some(report)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeatureConfig {
    pub eeg: EegFeatureConfig,
    pub mfcc: MfccConfig,
    /// z-score every modality with training-partition statistics.
    pub normalize: bool,
}

impl FeatureConfig {
    pub fn standard() -> Self {
        Self {
            normalize: true,
            ..Self::default()
        }
    }
}

pub fn extract_features(
    audio: &SignalRecord,
    clean_eeg: &SignalRecord,
    config: &FeatureConfig,
    utterance_id: &str,
) -> Result<(FeatureSequence, FeatureSequence)> {
    let mfcc = extract_mfcc(audio, &config.mfcc, utterance_id)?;
    let eeg = extract_eeg_features(clean_eeg, &config.eeg, utterance_id)?;
    Ok((mfcc, eeg))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KpcaConfig {
    pub kernel: KernelSpec,
    pub n_components: usize,
    pub max_frames: usize,
}

impl Default for KpcaConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            n_components: Modality::Eeg30.dim(),
            max_frames: 4000,
        }
    }
}

/// z-score on training statistics followed by kernel PCA: EEG155 -> EEG30.
#[derive(Clone, Debug, PartialEq)]
pub struct EegReducer {
    pub stats: FeatureStats,
    pub kpca: KpcaModel,
}

impl EegReducer {
    pub fn fit(train: &[&FeatureSequence], config: &KpcaConfig, normalize: bool, rng: &Rng, exec: Execution) -> Result<Self> {
        let dim = Modality::Eeg155.dim();
        if let Some(s) = train.iter().find(|s| s.modality() != Modality::Eeg155) {
            return Err(Error::dimension("KPCA input", dim, s.dim()));
        }
        let stats = if normalize {
            FeatureStats::fit(train.iter().copied())?
        } else {
            FeatureStats::identity(dim)
        };
        let normed: Vec<FeatureSequence> = train.iter().map(|s| normalize_features(&stats, s)).collect::<Result<_>>()?;
        let x = subsample_frames(&normed, config.max_frames, &mut rng.derive("kpca/subsample"))?;
        let kpca = fit_kpca(&x, config.kernel, config.n_components, exec)?;
        Ok(Self { stats, kpca })
    }

    pub fn apply(&self, eeg155: &FeatureSequence, exec: Execution) -> Result<FeatureSequence> {
        self.kpca.transform_sequence(&normalize_features(&self.stats, eeg155)?, exec)
    }

    pub fn to_container(&self) -> Container {
        let k = &self.kpca;
        let (code, a, b) = match k.kernel {
            KernelSpec::Linear => (0, 0.0, 0.0),
            KernelSpec::Polynomial { degree, coef0 } => (1, degree as f64, coef0),
            KernelSpec::Rbf { gamma } => (2, gamma, 0.0),
        };
        Container {
            config: vec![k.input_dim() as u32, k.n_components() as u32, k.support_vectors.rows() as u32],
            tensors: vec![
                Tensor::vector("kpca.kernel", &[code as f64, a, b]),
                Tensor::matrix("kpca.support_vectors", &k.support_vectors),
                Tensor::matrix("kpca.alphas", &k.alphas),
                Tensor::vector("kpca.eigenvalues", &k.eigenvalues),
                Tensor::vector("kpca.row_means", &k.row_means),
                Tensor::vector("kpca.scalars", &[k.total_mean, k.total_variance]),
                Tensor::vector("norm.mean", &self.stats.mean),
                Tensor::vector("norm.std", &self.stats.std),
            ],
        }
    }

    pub fn from_container(c: &Container, origin: &Path) -> Result<Self> {
        if c.config.len() != 3 {
            return Err(Error::format(origin, "not a KPCA model"));
        }
        let (d, m, n) = (c.config[0] as usize, c.config[1] as usize, c.config[2] as usize);
        let kern = c.expect("kpca.kernel", &[3], origin)?;
        let kernel = match kern[0] as u32 {
            0 => KernelSpec::Linear,
            1 => KernelSpec::Polynomial { degree: kern[1] as u32, coef0: kern[2] },
            2 => KernelSpec::Rbf { gamma: kern[1] },
            other => return Err(Error::format(origin, format!("unknown kernel code {other}"))),
        };
        let scalars = c.expect("kpca.scalars", &[2], origin)?;
        let kpca = KpcaModel {
            support_vectors: c.expect_matrix("kpca.support_vectors", n, d, origin)?,
            kernel,
            alphas: c.expect_matrix("kpca.alphas", n, m, origin)?,
            eigenvalues: c.expect("kpca.eigenvalues", &[m], origin)?,
            total_variance: scalars[1],
            row_means: c.expect("kpca.row_means", &[n], origin)?,
            total_mean: scalars[0],
        };
        let stats = FeatureStats {
            mean: c.expect("norm.mean", &[d], origin)?,
            std: c.expect("norm.std", &[d], origin)?,
        };
        Ok(Self { stats, kpca })
    }
}

/// The input sequence a modality's classifier sees.
pub fn modality_sequence(modality: Modality, mfcc: &FeatureSequence, eeg30: &FeatureSequence) -> Result<FeatureSequence> {
    match modality {
        Modality::Mfcc13 => Ok(mfcc.clone()),
        Modality::Eeg30 => Ok(eeg30.clone()),
        Modality::Fused43 => fuse(mfcc, eeg30),
        Modality::Eeg155 => Err(Error::Config("classifiers take mfcc13, eeg30 or fused43".into())),
    }
}

/// Normalizes every item with statistics of the training partition.
pub fn normalize_dataset(data: &LabeledDataset, enabled: bool) -> Result<(LabeledDataset, FeatureStats)> {
    let dim = data.items().first().map(|i| i.sequence.dim()).ok_or_else(|| Error::input("empty dataset"))?;
    let stats = if enabled {
        FeatureStats::fit(data.partition(Partition::Train).map(|i| &i.sequence))?
    } else {
        FeatureStats::identity(dim)
    };
    Ok((data.map_sequences(|s| normalize_features(&stats, s))?, stats))
}

/// Checks the fixed feature widths and the classifier output size.
pub fn check_dimension_contracts<T: crate::matrix::Scalar>(data: &LabeledDataset, modality: Modality, params: &Params<T>) -> Result<()> {
    let checks = [
        ("EEG feature width", Modality::Eeg155.dim(), EEG_CHANNELS * FEATURES_PER_CHANNEL),
        ("MFCC width", 13, Modality::Mfcc13.dim()),
        ("reduced EEG width", 30, Modality::Eeg30.dim()),
        ("fused width", Modality::Mfcc13.dim() + Modality::Eeg30.dim(), Modality::Fused43.dim()),
        ("classifier input width", modality.dim(), params.config.input_dim),
        ("dense units", data.n_speakers(), params.config.n_speakers),
        ("dense weight rows", data.n_speakers(), params.dense_weight.rows()),
    ];
    for (what, expected, actual) in checks {
        if expected != actual {
            return Err(Error::dimension(what, expected, actual));
        }
    }
    if let Some(it) = data.items().iter().find(|i| i.sequence.modality() != modality || i.sequence.dim() != modality.dim()) {
        return Err(Error::dimension(
            format!("features of {}", it.sequence.utterance_id()),
            modality.dim(),
            it.sequence.dim(),
        ));
    }
    data.check_isolation()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelShape {
    pub tcn_filters: usize,
    pub tcn_width: usize,
    pub tcn_dilation: usize,
    pub gru_hidden: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let m = ModelConfig::new(1, 2);
        Self {
            tcn_filters: m.tcn_filters,
            tcn_width: m.tcn_width,
            tcn_dilation: m.tcn_dilation,
            gru_hidden: m.gru_hidden,
        }
    }
}

impl ModelShape {
    pub fn config(&self, input_dim: usize, n_speakers: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            n_speakers,
            tcn_filters: self.tcn_filters,
            tcn_width: self.tcn_width,
            tcn_dilation: self.tcn_dilation,
            gru_hidden: self.gru_hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub kpca: KpcaConfig,
    pub split: SplitRatios,
    pub model: ModelShape,
    pub train: TrainConfig,
    pub modalities: Vec<Modality>,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::standard(),
            kpca: KpcaConfig::default(),
            split: SplitRatios::default(),
            model: ModelShape::default(),
            train: TrainConfig::default(),
            modalities: vec![Modality::Mfcc13, Modality::Eeg30, Modality::Fused43],
            seed: 0,
            exec: Execution::Sequential,
        }
    }
}

/// Per-utterance features with labels and a fixed partition.
#[derive(Clone, Debug)]
pub struct PreparedCorpus {
    pub speakers: SpeakerIndex,
    pub labels: Vec<usize>,
    pub partitions: Vec<Partition>,
    pub mfcc: Vec<FeatureSequence>,
    pub eeg155: Vec<FeatureSequence>,
    pub artifact_reports: Vec<Option<ArtifactReport>>,
}

impl PreparedCorpus {
    pub fn n_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn dataset(&self, sequences: Vec<FeatureSequence>) -> Result<LabeledDataset> {
        let items = sequences
            .into_iter()
            .zip(&self.labels)
            .zip(&self.partitions)
            .map(|((sequence, &speaker), &partition)| LabeledItem { sequence, speaker, partition })
            .collect();
        LabeledDataset::new(items, self.n_speakers())
    }

    pub fn train_eeg155(&self) -> Vec<&FeatureSequence> {
        self.eeg155
            .iter()
            .zip(&self.partitions)
            .filter(|(_, &p)| p == Partition::Train)
            .map(|(s, _)| s)
            .collect()
    }
}

/// Preprocesses, extracts features and splits a corpus.
pub fn prepare_corpus(corpus: &[RawUtterance], config: &ExperimentConfig) -> Result<PreparedCorpus> {
    if corpus.is_empty() {
        return Err(Error::input("corpus is empty"));
    }
    let per: Vec<Result<(FeatureSequence, FeatureSequence, Option<ArtifactReport>)>> = config.exec.map(corpus, |u| {
        let (clean, report) = preprocess_utterance(u, config)?;
        let (mfcc, eeg) = extract_features(&u.audio, &clean, &config.features, &u.utterance_id)?;
        Ok((mfcc, eeg, report))
    });
    let names: Vec<&str> = corpus.iter().map(|u| u.speaker_label.as_str()).collect();
    let (speakers, labels, partitions) = assign_split(&names, config)?;
    let (mut mfcc, mut eeg155, mut artifact_reports) = (Vec::new(), Vec::new(), Vec::new());
    for (u, r) in corpus.iter().zip(per) {
        let (m, e, rep) = r?;
        check_alignment(u, &m, &e)?;
        mfcc.push(m);
        eeg155.push(e);
        artifact_reports.push(rep);
    }
    Ok(PreparedCorpus {
        speakers,
        labels,
        partitions,
        mfcc,
        eeg155,
        artifact_reports,
    })
}

/// [`preprocess_eeg`] with the utterance's ICA seed derived from the root seed.
pub fn preprocess_utterance(u: &RawUtterance, config: &ExperimentConfig) -> Result<(SignalRecord, Option<ArtifactReport>)> {
    let mut rng = Rng::new(config.seed).derive(&format!("ica/{}", u.utterance_id));
    preprocess_eeg(&u.eeg, &config.preprocess, &mut rng, Execution::Sequential)
}

/// Speaker ids in order of first appearance and the stratified partition.
pub fn assign_split(speaker_labels: &[&str], config: &ExperimentConfig) -> Result<(SpeakerIndex, Vec<usize>, Vec<Partition>)> {
    let mut speakers = SpeakerIndex::default();
    let labels: Vec<usize> = speaker_labels.iter().map(|s| speakers.id_or_insert(s)).collect();
    let partitions = split_indices(&labels, speakers.len(), config.split, &mut Rng::new(config.seed).derive("split"))?;
    Ok((speakers, labels, partitions))
}

/// Equal-length recordings must give frame counts within one of each other.
pub fn check_alignment(u: &RawUtterance, mfcc: &FeatureSequence, eeg: &FeatureSequence) -> Result<()> {
    if u.audio.duration_s() == u.eeg.duration_s() && mfcc.len().abs_diff(eeg.len()) > 1 {
        return Err(Error::Alignment(format!(
            "{}: {} MFCC frames vs {} EEG frames for equal-length recordings",
            u.utterance_id,
            mfcc.len(),
            eeg.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ModalityResult {
    pub modality: Modality,
    pub checkpoint: Checkpoint,
    pub curves: Curves,
    pub report: EvalReport,
}

/// Trains and evaluates one classifier on already reduced features.
pub fn run_modality(
    prepared: &PreparedCorpus,
    eeg30: &[FeatureSequence],
    modality: Modality,
    config: &ExperimentConfig,
) -> Result<ModalityResult> {
    let seqs = prepared
        .mfcc
        .iter()
        .zip(eeg30)
        .map(|(m, e)| modality_sequence(modality, m, e))
        .collect::<Result<Vec<_>>>()?;
    train_modality(prepared, seqs, modality, config)
}

/// Trains and evaluates one classifier on its input sequences, given in
/// corpus order.
pub fn train_modality(
    prepared: &PreparedCorpus,
    seqs: Vec<FeatureSequence>,
    modality: Modality,
    config: &ExperimentConfig,
) -> Result<ModalityResult> {
    let (data, stats) = normalize_dataset(&prepared.dataset(seqs)?, config.features.normalize)?;
    let model = config.model.config(modality.dim(), prepared.n_speakers());
    // every modality shares the initialization and batch order
    let rng = Rng::new(config.seed).derive("train");
    let out = train(&data, model, &config.train, &rng, config.exec)?;
    check_dimension_contracts(&data, modality, &out.params)?;
    let report = evaluate(&out.params, &data, config.exec)?;
    Ok(ModalityResult {
        modality,
        checkpoint: Checkpoint {
            params: out.params,
            norm_mean: stats.mean,
            norm_std: stats.std,
            adam: Some(out.adam),
        },
        curves: out.curves,
        report,
    })
}

/// Accuracies in the fixed column order MFCC, EEG, MFCC+EEG.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComparisonTable {
    pub cells: [Option<(usize, usize)>; 3],
}

impl ComparisonTable {
    pub const HEADERS: [&'static str; 3] = ["MFCC", "EEG", "MFCC+EEG"];

    pub fn column(modality: Modality) -> Option<usize> {
        match modality {
            Modality::Mfcc13 => Some(0),
            Modality::Eeg30 => Some(1),
            Modality::Fused43 => Some(2),
            Modality::Eeg155 => None,
        }
    }

    fn values(&self) -> Vec<String> {
        self.cells
            .iter()
            .map(|c| c.map(|(k, n)| format_percent(k, n)).unwrap_or_else(|| "-".into()))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for h in Self::HEADERS {
            let _ = write!(out, "{h:>10}");
        }
        out.push('\n');
        for v in self.values() {
            let _ = write!(out, "{v:>10}");
        }
        out.push('\n');
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::HEADERS.join(","), self.values().join(","))
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub table: ComparisonTable,
    pub results: Vec<ModalityResult>,
    pub reducer: EegReducer,
    pub explained_variance: Vec<f64>,
    pub partition_counts: [usize; 3],
}

impl ExperimentReport {
    pub fn summary(&self) -> String {
        let [tr, va, te] = self.partition_counts;
        let mut out = format!("partition sizes: train {tr}, val {va}, test {te}\n");
        if let Some(v) = self.explained_variance.last() {
            let _ = writeln!(out, "KPCA cumulative explained variance at {} components: {v:.4}", self.explained_variance.len());
        }
        out.push('\n');
        out.push_str(&self.table.to_text());
        for r in &self.results {
            let _ = write!(out, "\n[{}] ", r.modality.name());
            out.push_str(&r.report.to_text());
        }
        out
    }
}

/// One model per modality on identical splits and seeds.
pub fn run_experiment(corpus: &[RawUtterance], config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.modalities.is_empty() {
        return Err(Error::Config("no modalities requested".into()));
    }
    let prepared = prepare_corpus(corpus, config)?;
    let root = Rng::new(config.seed);
    let reducer = EegReducer::fit(&prepared.train_eeg155(), &config.kpca, config.features.normalize, &root, config.exec)?;
    let eeg30 = prepared
        .eeg155
        .iter()
        .map(|s| reducer.apply(s, config.exec))
        .collect::<Result<Vec<_>>>()?;
    let mut table = ComparisonTable::default();
    let mut results = Vec::new();
    for &m in &config.modalities {
        let col = ComparisonTable::column(m)
            .ok_or_else(|| Error::Config(format!("modality {} cannot be classified directly", m.name())))?;
        let r = run_modality(&prepared, &eeg30, m, config)?;
        table.cells[col] = Some((r.report.correct(), r.report.total()));
        results.push(r);
    }
    let counts = prepared.dataset(prepared.mfcc.clone())?.counts();
    Ok(ExperimentReport {
        table,
        results,
        explained_variance: cumulative_explained_variance(&reducer.kpca),
        reducer,
        partition_counts: counts,
    })
}
