//! One function per subcommand. Each reads its inputs from the corpus or
//! work directory and writes its outputs under the work directory:
//!
//! ```text
//! work/clean/<id>.eegr, <id>.artifacts.csv     preprocess
//! work/features/<id>.{mfcc13,eeg155}.fseq      features
//! work/split.csv                               features
//! work/kpca.nspk, kpca_variance.csv            kpca
//! work/features/<id>.eeg30.fseq                kpca
//! work/model_<modality>.nspk, curves/          train
//! work/eval_<modality>.txt                     eval
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use spkid_core::dataset::{LabeledDataset, LabeledItem, Partition, SpeakerIndex};
use spkid_core::error::{Error, Result};
use spkid_core::features::{normalize_features, read_fseq, write_fseq, FeatureSequence, FeatureStats, Modality};
use spkid_core::kpca::explained_variance_csv;
use spkid_core::nn::Checkpoint;
use spkid_core::pipeline::corpus::{read_corpus, read_eegr, read_manifest, read_split, write_corpus, write_eegr, write_split};
use spkid_core::pipeline::{
    assign_split, check_alignment, evaluate, extract_features, generate_synthetic, modality_sequence,
    preprocess_utterance, run_experiment, train_modality, Curves, EegReducer, ModalityResult, PreparedCorpus,
    RawUtterance,
};
use spkid_core::rng::Rng;

use crate::config::{RunConfig, Settings};
use crate::plot::curves_svg;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn manifest(cfg: &RunConfig) -> PathBuf {
    cfg.corpus.join("manifest.csv")
}

fn clean_path(work: &Path, id: &str) -> PathBuf {
    work.join("clean").join(format!("{id}.eegr"))
}

fn feature_path(work: &Path, id: &str, modality: Modality) -> PathBuf {
    work.join("features").join(format!("{id}.{}.fseq", modality.name()))
}

fn model_path(work: &Path, modality: Modality) -> PathBuf {
    work.join(format!("model_{}.nspk", modality.name()))
}

pub fn synth(cfg: &RunConfig) -> Result<String> {
    let corpus = generate_synthetic(&cfg.synth)?;
    create_dir(&cfg.corpus)?;
    let m = write_corpus(&cfg.corpus, &corpus)?;
    Ok(format!("wrote {} utterances; manifest {}", corpus.len(), m.display()))
}

pub fn preprocess(cfg: &RunConfig) -> Result<String> {
    let corpus = read_corpus(&manifest(cfg))?;
    let dir = cfg.work.join("clean");
    create_dir(&dir)?;
    let results = cfg.experiment.exec.map(&corpus, |u| -> Result<usize> {
        let (clean, report) = preprocess_utterance(u, &cfg.experiment)?;
        write_eegr(&clean_path(&cfg.work, &u.utterance_id), &clean)?;
        match report {
            Some(r) => {
                write_text(&dir.join(format!("{}.artifacts.csv", u.utterance_id)), &r.to_csv())?;
                Ok(r.rejected.len())
            }
            None => Ok(0),
        }
    });
    let rejected: usize = results.into_iter().sum::<Result<usize>>()?;
    Ok(format!(
        "cleaned {} recordings; {rejected} artifact components removed",
        corpus.len()
    ))
}

pub fn features(cfg: &RunConfig) -> Result<String> {
    let corpus = read_corpus(&manifest(cfg))?;
    create_dir(&cfg.work.join("features"))?;
    let results = cfg.experiment.exec.map(&corpus, |u| -> Result<()> {
        let clean = read_eegr(&clean_path(&cfg.work, &u.utterance_id))?;
        let (mfcc, eeg) = extract_features(&u.audio, &clean, &cfg.experiment.features, &u.utterance_id)?;
        check_alignment(u, &mfcc, &eeg)?;
        write_fseq(&feature_path(&cfg.work, &u.utterance_id, Modality::Mfcc13), &mfcc)?;
        write_fseq(&feature_path(&cfg.work, &u.utterance_id, Modality::Eeg155), &eeg)
    });
    results.into_iter().collect::<Result<()>>()?;
    let ids: Vec<&str> = corpus.iter().map(|u| u.utterance_id.as_str()).collect();
    let speakers: Vec<&str> = corpus.iter().map(|u| u.speaker_label.as_str()).collect();
    let (index, _, partitions) = assign_split(&speakers, &cfg.experiment)?;
    write_split(&cfg.work.join("split.csv"), &ids, &speakers, &partitions)?;
    let count = |p| partitions.iter().filter(|&&q| q == p).count();
    Ok(format!(
        "extracted features for {} utterances of {} speakers; split train {}, val {}, test {}",
        corpus.len(),
        index.len(),
        count(Partition::Train),
        count(Partition::Val),
        count(Partition::Test)
    ))
}

/// Utterance ids, labels and partitions from `split.csv`.
struct Split {
    ids: Vec<String>,
    speakers: SpeakerIndex,
    labels: Vec<usize>,
    partitions: Vec<Partition>,
}

fn load_split(work: &Path) -> Result<Split> {
    let rows = read_split(&work.join("split.csv"))?;
    let speakers = SpeakerIndex::from_labels(rows.iter().map(|r| r.1.as_str()));
    let labels = rows.iter().map(|r| speakers.id(&r.1).unwrap()).collect();
    Ok(Split {
        ids: rows.iter().map(|r| r.0.clone()).collect(),
        speakers,
        labels,
        partitions: rows.iter().map(|r| r.2).collect(),
    })
}

fn load_features(work: &Path, ids: &[String], modality: Modality) -> Result<Vec<FeatureSequence>> {
    ids.iter().map(|id| read_fseq(&feature_path(work, id, modality), id)).collect()
}

pub fn kpca(cfg: &RunConfig) -> Result<String> {
    let split = load_split(&cfg.work)?;
    let eeg155 = load_features(&cfg.work, &split.ids, Modality::Eeg155)?;
    let train: Vec<&FeatureSequence> = eeg155
        .iter()
        .zip(&split.partitions)
        .filter(|(_, &p)| p == Partition::Train)
        .map(|(s, _)| s)
        .collect();
    let x = &cfg.experiment;
    let reducer = EegReducer::fit(&train, &x.kpca, x.features.normalize, &Rng::new(x.seed), x.exec)?;
    reducer.to_container().write(&cfg.work.join("kpca.nspk"))?;
    write_text(&cfg.work.join("kpca_variance.csv"), &explained_variance_csv(&reducer.kpca))?;
    for (id, s) in split.ids.iter().zip(&eeg155) {
        write_fseq(&feature_path(&cfg.work, id, Modality::Eeg30), &reducer.apply(s, x.exec)?)?;
    }
    let curve = spkid_core::kpca::cumulative_explained_variance(&reducer.kpca);
    Ok(format!(
        "fit KPCA on {} training frames; cumulative explained variance at {} components: {:.4}",
        reducer.kpca.support_vectors.rows(),
        curve.len(),
        curve.last().copied().unwrap_or(0.0)
    ))
}

fn sequences(work: &Path, split: &Split, modality: Modality) -> Result<Vec<FeatureSequence>> {
    let mfcc = match modality {
        Modality::Eeg30 => None,
        _ => Some(load_features(work, &split.ids, Modality::Mfcc13)?),
    };
    let eeg = match modality {
        Modality::Mfcc13 => None,
        _ => Some(load_features(work, &split.ids, Modality::Eeg30)?),
    };
    match (mfcc, eeg) {
        (Some(m), None) => Ok(m),
        (None, Some(e)) => Ok(e),
        (Some(m), Some(e)) => m.iter().zip(&e).map(|(a, b)| modality_sequence(modality, a, b)).collect(),
        (None, None) => unreachable!(),
    }
}

fn write_curves(work: &Path, modality: Modality, curves: &Curves) -> Result<()> {
    let dir = work.join("curves");
    create_dir(&dir)?;
    write_text(&dir.join(format!("{}.csv", modality.name())), &curves.to_csv())?;
    write_text(
        &dir.join(format!("{}.svg", modality.name())),
        &curves_svg(curves, &format!("{} accuracy", modality.name())),
    )
}

fn save_result(work: &Path, r: &ModalityResult) -> Result<()> {
    r.checkpoint.save(&model_path(work, r.modality))?;
    write_curves(work, r.modality, &r.curves)
}

pub fn train(cfg: &RunConfig, modality: Modality) -> Result<String> {
    let split = load_split(&cfg.work)?;
    let seqs = sequences(&cfg.work, &split, modality)?;
    let prepared = PreparedCorpus {
        speakers: split.speakers,
        labels: split.labels,
        partitions: split.partitions,
        mfcc: Vec::new(),
        eeg155: Vec::new(),
        artifact_reports: Vec::new(),
    };
    let r = train_modality(&prepared, seqs, modality, &cfg.experiment)?;
    save_result(&cfg.work, &r)?;
    let last = r.curves.epochs.last().expect("at least one epoch");
    let val = last.val_accuracy.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    Ok(format!(
        "trained {} for {} epochs: final train accuracy {:.4}, validation accuracy {val}; saved {}",
        modality.name(),
        last.epoch,
        last.train_accuracy,
        model_path(&cfg.work, modality).display()
    ))
}

pub fn eval(cfg: &RunConfig, modality: Modality) -> Result<String> {
    let path = model_path(&cfg.work, modality);
    let ck = Checkpoint::load(&path)?;
    let entries = read_manifest(&manifest(cfg))?;
    let n_manifest = SpeakerIndex::from_labels(entries.iter().map(|e| e.speaker_label.as_str())).len();
    let c = ck.params.config;
    if c.n_speakers != n_manifest {
        return Err(Error::Dimension {
            context: format!("dense units of {} against the manifest's speaker count", path.display()),
            expected: n_manifest,
            actual: c.n_speakers,
        });
    }
    if c.input_dim != modality.dim() {
        return Err(Error::Dimension {
            context: format!("input width of {} for {}", path.display(), modality.name()),
            expected: modality.dim(),
            actual: c.input_dim,
        });
    }
    let split = load_split(&cfg.work)?;
    let stats = FeatureStats {
        mean: ck.norm_mean.clone(),
        std: ck.norm_std.clone(),
    };
    let items = sequences(&cfg.work, &split, modality)?
        .into_iter()
        .zip(split.labels.iter().zip(&split.partitions))
        .map(|(s, (&speaker, &partition))| {
            Ok(LabeledItem {
                sequence: normalize_features(&stats, &s)?,
                speaker,
                partition,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let data = LabeledDataset::new(items, split.speakers.len())?;
    let report = evaluate(&ck.params, &data, cfg.experiment.exec)?;
    let text = format!("[{}] {}", modality.name(), report.to_text());
    write_text(&cfg.work.join(format!("eval_{}.txt", modality.name())), &text)?;
    Ok(text.trim_end().to_string())
}

pub fn experiment(cfg: &RunConfig, settings: &Settings, synthetic: bool) -> Result<String> {
    let corpus: Vec<RawUtterance> = if synthetic {
        generate_synthetic(&cfg.synth)?
    } else {
        read_corpus(&manifest(cfg))?
    };
    let report = run_experiment(&corpus, &cfg.experiment)?;
    let w = &cfg.work;
    create_dir(w)?;
    write_text(&w.join("config.txt"), &settings.to_text())?;
    report.reducer.to_container().write(&w.join("kpca.nspk"))?;
    write_text(&w.join("kpca_variance.csv"), &explained_variance_csv(&report.reducer.kpca))?;
    for r in &report.results {
        save_result(w, r)?;
    }
    write_text(&w.join("table.csv"), &report.table.to_csv())?;
    write_text(&w.join("table.txt"), &report.table.to_text())?;
    let summary = report.summary();
    write_text(&w.join("report.txt"), &summary)?;
    Ok(summary.trim_end().to_string())
}
