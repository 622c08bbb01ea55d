//! Flat `section.key=value` run configuration.
//!
//! Values start at their defaults, are overridden by a config file, then by
//! `--set` flags. Every key is parsed and validated before any stage runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use spkid_core::dataset::SplitRatios;
use spkid_core::dsp::FrameSpec;
use spkid_core::error::{Error, Result};
use spkid_core::exec::Execution;
use spkid_core::features::{EegFeatureConfig, MfccConfig, Modality};
use spkid_core::ica::{FastIcaOptions, RejectionThresholds};
use spkid_core::kpca::KernelSpec;
use spkid_core::nn::AdamConfig;
use spkid_core::pipeline::{
    ExperimentConfig, FeatureConfig, KpcaConfig, ModelShape, PreprocessConfig, SynthSpec, TrainConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// Given by the method description.
    Stated,
    /// An implementation decision.
    Chosen,
}

impl Source {
    fn tag(self) -> &'static str {
        match self {
            Source::Stated => "stated",
            Source::Chosen => "chosen",
        }
    }
}

pub struct KeySpec {
    pub name: &'static str,
    pub default: String,
    pub source: Source,
    pub help: &'static str,
}

fn key(name: &'static str, default: impl ToString, source: Source, help: &'static str) -> KeySpec {
    KeySpec {
        name,
        default: default.to_string(),
        source,
        help,
    }
}

fn kernel_text(k: KernelSpec) -> String {
    match k {
        KernelSpec::Linear => "linear".into(),
        KernelSpec::Polynomial { degree, coef0 } => format!("poly:{degree}:{coef0}"),
        KernelSpec::Rbf { gamma } => format!("rbf:{gamma}"),
    }
}

fn modality_list(ms: &[Modality]) -> String {
    ms.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
}

/// Every configurable key with its default.
pub fn keys() -> Vec<KeySpec> {
    use Source::{Chosen, Stated};
    let s = SynthSpec::default();
    let p = PreprocessConfig::default();
    let e = EegFeatureConfig::default();
    let m = MfccConfig::default();
    let f = FeatureConfig::standard();
    let k = KpcaConfig::default();
    let sp = SplitRatios::default();
    let ms = ModelShape::default();
    let t = TrainConfig::default();
    let a = AdamConfig::default();
    let x = ExperimentConfig::default();
    vec![
        key("paths.corpus", "corpus", Chosen, "corpus directory (manifest.csv, audio/, eeg/)"),
        key("paths.work", "work", Chosen, "directory for stage outputs"),
        key("run.seed", x.seed, Chosen, "root seed; every stage derives its own stream from it"),
        key("run.threads", 1, Chosen, "worker threads; above 1 enables the data-parallel mode"),
        key("synth.n_speakers", s.n_speakers, Chosen, "speakers in the synthetic corpus"),
        key("synth.utterances_per_speaker", s.utterances_per_speaker, Chosen, "utterances per speaker"),
        key("synth.duration_s", s.duration_s, Chosen, "utterance length in seconds"),
        key("synth.separability", s.separability, Chosen, "distance between speaker signatures; 0 makes speakers identical"),
        key("synth.noise_db", s.noise_db, Chosen, "audio noise level relative to speech, dB"),
        key("synth.blink_rate_hz", s.blink_rate_hz, Chosen, "mean rate of blink artifacts in the EEG"),
        key("dsp.bandpass_order", p.bandpass_order, Stated, "IIR band-pass order (second-order sections)"),
        key("dsp.bandpass_low_hz", p.bandpass_low_hz, Stated, "band-pass lower cutoff"),
        key("dsp.bandpass_high_hz", p.bandpass_high_hz, Stated, "band-pass upper cutoff"),
        key("dsp.notch_hz", p.notch_hz, Stated, "mains notch frequency"),
        key("dsp.notch_q", p.notch_q, Chosen, "notch quality factor"),
        key("ica.enabled", p.ica_enabled, Stated, "run ICA artifact removal"),
        key("ica.max_iter", p.ica.max_iter, Chosen, "FastICA iteration limit"),
        key("ica.tol", p.ica.tol, Chosen, "FastICA convergence tolerance"),
        key("ica.kurtosis", p.thresholds.kurtosis, Chosen, "reject components with |excess kurtosis| above this"),
        key("ica.low_freq_ratio", p.thresholds.low_freq_ratio, Chosen, "reject components with more low-frequency power than this fraction"),
        key("ica.low_freq_cutoff_hz", p.thresholds.low_freq_cutoff_hz, Chosen, "edge of the low-frequency band"),
        key("ica.max_zscore", p.thresholds.max_zscore, Chosen, "reject components whose peak z-score exceeds this"),
        key("features.eeg.frame_length", e.frame.frame_length(), Chosen, "EEG analysis window, samples"),
        key("features.eeg.hop_length", e.frame.hop_length(), Stated, "EEG hop, samples (100 Hz feature rate)"),
        key("features.eeg.mwa_window", e.mwa_window, Chosen, "moving-average window, samples"),
        key("features.mfcc.pre_emphasis", m.pre_emphasis, Chosen, "pre-emphasis coefficient"),
        key("features.mfcc.frame_length", m.frame_length, Chosen, "MFCC window, samples"),
        key("features.mfcc.hop_length", m.hop_length, Stated, "MFCC hop, samples (100 Hz feature rate)"),
        key("features.mfcc.n_fft", m.n_fft, Chosen, "FFT size"),
        key("features.mfcc.n_mels", m.n_mels, Chosen, "mel filters"),
        key("features.mfcc.log_floor", m.log_floor, Chosen, "floor applied before the log"),
        key("features.mfcc.start_offset", m.start_offset, Chosen, "samples skipped before the first window"),
        key("features.normalize", f.normalize, Chosen, "z-score features with training statistics"),
        key("kpca.kernel", kernel_text(k.kernel), Chosen, "linear | poly:<degree>:<coef0> | rbf:<gamma>"),
        key("kpca.n_components", k.n_components, Stated, "reduced EEG dimension"),
        key("kpca.max_frames", k.max_frames, Chosen, "training frames subsampled for the kernel matrix"),
        key("split.train", sp.train, Stated, "training fraction"),
        key("split.val", sp.val, Stated, "validation fraction"),
        key("split.test", sp.test, Stated, "test fraction"),
        key("model.tcn_filters", ms.tcn_filters, Stated, "TCN filters"),
        key("model.tcn_width", ms.tcn_width, Chosen, "TCN kernel width"),
        key("model.tcn_dilation", ms.tcn_dilation, Chosen, "TCN dilation"),
        key("model.gru_hidden", ms.gru_hidden, Stated, "GRU hidden units"),
        key("train.epochs", "auto", Stated, "epochs; auto = 300 below 8 speakers, 500 otherwise"),
        key("train.batch_size", t.batch_size, Stated, "mini-batch size"),
        key("train.carve_validation", t.carve_validation, Chosen, "take validation from the end of the training partition"),
        key("train.validation_fraction", t.validation_fraction, Stated, "fraction carved when train.carve_validation is set"),
        key("train.lr", a.lr, Chosen, "Adam learning rate"),
        key("train.beta1", a.beta1, Chosen, "Adam first-moment decay"),
        key("train.beta2", a.beta2, Chosen, "Adam second-moment decay"),
        key("train.epsilon", a.epsilon, Chosen, "Adam epsilon"),
        key("experiment.modalities", modality_list(&x.modalities), Chosen, "classifiers trained by `experiment`"),
    ]
}

/// Text listing every key, for `--help`.
pub fn key_table() -> String {
    let ks = keys();
    let w = ks.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let dw = ks.iter().map(|k| k.default.len()).max().unwrap_or(0);
    let mut out = String::from(
        "Configuration keys (set in a --config file as key=value, or with --set key=value).\n\
         'stated' defaults come from the method description, 'chosen' ones are implementation decisions.\n\n",
    );
    for k in &ks {
        let _ = writeln!(out, "  {:w$}  {:dw$}  [{}]  {}", k.name, k.default, k.source.tag(), k.help);
    }
    out
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub work: PathBuf,
    pub threads: usize,
    pub synth: SynthSpec,
    pub experiment: ExperimentConfig,
}

/// Key/value settings with defaults filled in.
#[derive(Clone, Debug)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: keys().into_iter().map(|k| (k.name.to_string(), k.default)).collect(),
        }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key '{key}' (see --help for the list)"))),
        }
    }

    /// Applies a `key=value` assignment.
    pub fn assign(&mut self, text: &str) -> Result<()> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{text}'")))?;
        self.set(k.trim(), v)
    }

    /// Reads a file of `key=value` lines; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.assign(line)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    /// All keys and their current values, one `key=value` per line.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn raw(&self, key: &str) -> &str {
        &self.values[key]
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
    }

    fn float(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parse(key)?;
        if !v.is_finite() {
            return Err(Error::Config(format!("{key} must be finite")));
        }
        Ok(v)
    }

    pub fn build(&self) -> Result<RunConfig> {
        let threads: usize = self.parse("run.threads")?;
        if threads == 0 {
            return Err(Error::Config("run.threads must be at least 1".into()));
        }
        let synth = SynthSpec {
            n_speakers: self.parse("synth.n_speakers")?,
            utterances_per_speaker: self.parse("synth.utterances_per_speaker")?,
            duration_s: self.float("synth.duration_s")?,
            separability: self.float("synth.separability")?,
            noise_db: self.float("synth.noise_db")?,
            blink_rate_hz: self.float("synth.blink_rate_hz")?,
            seed: self.parse("run.seed")?,
        };
        synth.validate()?;
        let preprocess = PreprocessConfig {
            bandpass_order: self.parse("dsp.bandpass_order")?,
            bandpass_low_hz: self.float("dsp.bandpass_low_hz")?,
            bandpass_high_hz: self.float("dsp.bandpass_high_hz")?,
            notch_hz: self.float("dsp.notch_hz")?,
            notch_q: self.float("dsp.notch_q")?,
            ica_enabled: self.parse("ica.enabled")?,
            ica: FastIcaOptions {
                max_iter: self.parse("ica.max_iter")?,
                tol: self.float("ica.tol")?,
            },
            thresholds: RejectionThresholds {
                kurtosis: self.float("ica.kurtosis")?,
                low_freq_ratio: self.float("ica.low_freq_ratio")?,
                low_freq_cutoff_hz: self.float("ica.low_freq_cutoff_hz")?,
                max_zscore: self.float("ica.max_zscore")?,
            },
        };
        // designing the filters validates the band edges
        preprocess
            .filter(spkid_core::features::EEG_RATE_HZ)
            .map_err(|e| Error::Config(e.to_string()))?;
        let frame = FrameSpec::new(self.parse("features.eeg.frame_length")?, self.parse("features.eeg.hop_length")?)
            .map_err(|e| Error::Config(e.to_string()))?;
        let features = FeatureConfig {
            eeg: EegFeatureConfig {
                frame,
                mwa_window: self.parse("features.eeg.mwa_window")?,
            },
            mfcc: MfccConfig {
                pre_emphasis: self.float("features.mfcc.pre_emphasis")?,
                frame_length: self.parse("features.mfcc.frame_length")?,
                hop_length: self.parse("features.mfcc.hop_length")?,
                n_fft: self.parse("features.mfcc.n_fft")?,
                n_mels: self.parse("features.mfcc.n_mels")?,
                log_floor: self.float("features.mfcc.log_floor")?,
                start_offset: self.parse("features.mfcc.start_offset")?,
                ..MfccConfig::default()
            },
            normalize: self.parse("features.normalize")?,
        };
        let kernel = KernelSpec::parse(self.raw("kpca.kernel"))?;
        let kpca = KpcaConfig {
            kernel,
            n_components: self.parse("kpca.n_components")?,
            max_frames: self.parse("kpca.max_frames")?,
        };
        if kpca.n_components != Modality::Eeg30.dim() {
            return Err(Error::Config(format!(
                "kpca.n_components must be {} (the reduced EEG width), got {}",
                Modality::Eeg30.dim(),
                kpca.n_components
            )));
        }
        if kpca.max_frames < kpca.n_components {
            return Err(Error::Config("kpca.max_frames must be at least kpca.n_components".into()));
        }
        let split = SplitRatios {
            train: self.float("split.train")?,
            val: self.float("split.val")?,
            test: self.float("split.test")?,
        };
        split.validate().map_err(|e| Error::Config(e.to_string()))?;
        let model = ModelShape {
            tcn_filters: self.parse("model.tcn_filters")?,
            tcn_width: self.parse("model.tcn_width")?,
            tcn_dilation: self.parse("model.tcn_dilation")?,
            gru_hidden: self.parse("model.gru_hidden")?,
        };
        model.config(1, 2).validate()?;
        let epochs = match self.raw("train.epochs") {
            "auto" => None,
            _ => Some(self.parse("train.epochs")?),
        };
        let train = TrainConfig {
            epochs,
            batch_size: self.parse("train.batch_size")?,
            carve_validation: self.parse("train.carve_validation")?,
            validation_fraction: self.float("train.validation_fraction")?,
            adam: AdamConfig {
                lr: self.float("train.lr")?,
                beta1: self.float("train.beta1")?,
                beta2: self.float("train.beta2")?,
                epsilon: self.float("train.epsilon")?,
            },
        };
        train.validate()?;
        let modalities = parse_modalities(self.raw("experiment.modalities"))?;
        let experiment = ExperimentConfig {
            preprocess,
            features,
            kpca,
            split,
            model,
            train,
            modalities,
            seed: self.parse("run.seed")?,
            exec: if threads > 1 { Execution::Parallel } else { Execution::Sequential },
        };
        Ok(RunConfig {
            corpus: PathBuf::from(self.raw("paths.corpus")),
            work: PathBuf::from(self.raw("paths.work")),
            threads,
            synth,
            experiment,
        })
    }
}

/// A classifier modality: `mfcc13`, `eeg30` or `fused43`.
pub fn parse_classifier_modality(s: &str) -> Result<Modality> {
    match Modality::parse(s.trim()) {
        Some(m @ (Modality::Mfcc13 | Modality::Eeg30 | Modality::Fused43)) => Ok(m),
        _ => Err(Error::Config(format!("modality must be mfcc13, eeg30 or fused43, got '{s}'"))),
    }
}

fn parse_modalities(s: &str) -> Result<Vec<Modality>> {
    let ms = s.split(',').map(parse_classifier_modality).collect::<Result<Vec<_>>>()?;
    if ms.is_empty() {
        return Err(Error::Config("experiment.modalities is empty".into()));
    }
    Ok(ms)
}
