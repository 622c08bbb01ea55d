//! On-disk corpus: PCM-16 WAV audio, `EEGR` EEG files and a CSV manifest.
//!
//! `EEGR` layout (little-endian): magic `EEGR`, version `u16`, channels
//! `u16`, sample rate `u32` (Hz), then `f32` samples channel-major. The
//! sample count per channel follows from the file length.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::RawUtterance;
use crate::dataset::Partition;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::SignalRecord;

const EEGR_MAGIC: &[u8; 4] = b"EEGR";
const EEGR_VERSION: u16 = 1;
const EEGR_HEADER: usize = 12;

pub fn encode_eegr(eeg: &SignalRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(EEGR_HEADER + eeg.samples().data().len() * 4);
    out.extend_from_slice(EEGR_MAGIC);
    out.extend_from_slice(&EEGR_VERSION.to_le_bytes());
    out.extend_from_slice(&(eeg.channels() as u16).to_le_bytes());
    out.extend_from_slice(&(eeg.sample_rate().round() as u32).to_le_bytes());
    for &v in eeg.samples().data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_eegr(bytes: &[u8], origin: &Path) -> Result<SignalRecord> {
    if bytes.len() < EEGR_HEADER || &bytes[..4] != EEGR_MAGIC {
        return Err(Error::format(origin, "missing EEGR header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != EEGR_VERSION {
        return Err(Error::format(origin, format!("unsupported version {version}")));
    }
    let channels = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let rate = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let body = &bytes[EEGR_HEADER..];
    if channels == 0 || rate == 0 || !body.len().is_multiple_of(4 * channels) {
        return Err(Error::format(origin, "EEGR body does not match channel count"));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let t = data.len() / channels;
    SignalRecord::with_default_labels(rate as f64, Matrix::new(channels, t, data)?)
        .map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_eegr(path: &Path, eeg: &SignalRecord) -> Result<()> {
    fs::write(path, encode_eegr(eeg)).map_err(|e| Error::io(path, e))
}

pub fn read_eegr(path: &Path) -> Result<SignalRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_eegr(&bytes, path)
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// Mono PCM-16; samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, audio: &SignalRecord) -> Result<()> {
    if audio.channels() != 1 {
        return Err(Error::input("WAV output supports mono audio only"));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &v in audio.channel(0) {
        let s = (v.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        w.write_sample(s).map_err(|e| wav_error(path, e))?;
    }
    w.finalize().map_err(|e| wav_error(path, e))
}

pub fn read_wav(path: &Path) -> Result<SignalRecord> {
    let mut r = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = r.spec();
    if spec.channels != 1 || spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(path, "expected mono 16-bit PCM"));
    }
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / i16::MAX as f64))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    SignalRecord::mono(spec.sample_rate as f64, samples).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_label: String,
    pub audio_path: String,
    pub eeg_path: String,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for e in entries {
        w.serialize(e).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let entries = r
        .deserialize()
        .collect::<std::result::Result<Vec<ManifestEntry>, _>>()
        .map_err(|e| csv_error(path, e))?;
    let mut seen = std::collections::HashSet::new();
    for e in &entries {
        if !seen.insert(&e.utterance_id) {
            return Err(Error::format(path, format!("duplicate utterance_id '{}'", e.utterance_id)));
        }
    }
    Ok(entries)
}

/// One row of `split.csv`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub utterance_id: String,
    pub speaker_label: String,
    pub partition: String,
}

pub fn write_split(path: &Path, ids: &[&str], speakers: &[&str], partitions: &[Partition]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for ((id, spk), p) in ids.iter().zip(speakers).zip(partitions) {
        let row = SplitEntry {
            utterance_id: id.to_string(),
            speaker_label: spk.to_string(),
            partition: p.as_str().to_string(),
        };
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `split.csv` and returns `(utterance_id, speaker_label, partition)`.
pub fn read_split(path: &Path) -> Result<Vec<(String, String, Partition)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: SplitEntry = row.map_err(|e| csv_error(path, e))?;
        let p = Partition::parse(&row.partition)
            .ok_or_else(|| Error::format(path, format!("unknown partition '{}'", row.partition)))?;
        out.push((row.utterance_id, row.speaker_label, p));
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

/// Resolves a manifest path relative to the manifest's directory.
pub fn resolve(manifest: &Path, entry_path: &str) -> PathBuf {
    let p = Path::new(entry_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Writes `dir/manifest.csv`, `dir/audio/<id>.wav` and `dir/eeg/<id>.eegr`.
/// Returns the manifest path.
pub fn write_corpus(dir: &Path, corpus: &[RawUtterance]) -> Result<PathBuf> {
    for sub in ["audio", "eeg"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(corpus.len());
    for u in corpus {
        let audio_rel = format!("audio/{}.wav", u.utterance_id);
        let eeg_rel = format!("eeg/{}.eegr", u.utterance_id);
        write_wav(&dir.join(&audio_rel), &u.audio)?;
        write_eegr(&dir.join(&eeg_rel), &u.eeg)?;
        entries.push(ManifestEntry {
            utterance_id: u.utterance_id.clone(),
            speaker_label: u.speaker_label.clone(),
            audio_path: audio_rel,
            eeg_path: eeg_rel,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

pub fn read_corpus(manifest: &Path) -> Result<Vec<RawUtterance>> {
    read_manifest(manifest)?
        .into_iter()
        .map(|e| {
            Ok(RawUtterance {
                audio: read_wav(&resolve(manifest, &e.audio_path))?,
                eeg: read_eegr(&resolve(manifest, &e.eeg_path))?,
                utterance_id: e.utterance_id,
                speaker_label: e.speaker_label,
            })
        })
        .collect()
}
