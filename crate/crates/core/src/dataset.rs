//! Labels, one-hot targets, and the stratified train/val/test partition.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::rng::Rng;

pub fn one_hot(label: usize, n_classes: usize) -> Result<Vec<f64>> {
    if label >= n_classes {
        return Err(Error::input(format!(
            "label {label} out of range for {n_classes} classes"
        )));
    }
    let mut v = vec![0.0; n_classes];
    v[label] = 1.0;
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Partition> {
        match s {
            "train" => Some(Partition::Train),
            "val" => Some(Partition::Val),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }

    fn index(self) -> usize {
        match self {
            Partition::Train => 0,
            Partition::Val => 1,
            Partition::Test => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|v| !(0.0..=1.0).contains(v)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!(
                "split ratios must be in [0,1] and sum to 1, got {:?}",
                r
            )));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` into parts proportional to
/// `weights`. Ties go to the earlier part.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut short = total - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    counts
}

/// Stratified partition of items labelled `labels` (dense, `< n_speakers`).
///
/// Global partition sizes follow largest-remainder rounding of the ratios;
/// per-speaker allocations are rounded so that row and column totals agree,
/// and every speaker keeps at least one training item. Item order within a
/// speaker is shuffled by `rng`.
pub fn split_indices(
    labels: &[usize],
    n_speakers: usize,
    ratios: SplitRatios,
    rng: &mut Rng,
) -> Result<Vec<Partition>> {
    ratios.validate()?;
    if labels.len() < n_speakers {
        return Err(Error::input(format!(
            "{} items cannot cover {n_speakers} speakers",
            labels.len()
        )));
    }
    let mut by_speaker: Vec<Vec<usize>> = vec![Vec::new(); n_speakers];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_speakers {
            return Err(Error::input(format!("speaker id {l} >= {n_speakers}")));
        }
        by_speaker[l].push(i);
    }
    if let Some(s) = by_speaker.iter().position(Vec::is_empty) {
        return Err(Error::input(format!("speaker {s} has no items")));
    }

    let r = ratios.as_array();
    let targets = largest_remainder(labels.len(), &r);
    // floors, then fill by descending remainder while both margins have room
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(n_speakers);
    let mut cells: Vec<(f64, usize, usize)> = Vec::new();
    for (s, items) in by_speaker.iter().enumerate() {
        let mut row = [0usize; 3];
        for p in 0..3 {
            let q = items.len() as f64 * r[p];
            row[p] = q.floor() as usize;
            cells.push((q - q.floor(), s, p));
        }
        alloc.push(row);
    }
    cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
    let row_short = |alloc: &[[usize; 3]], s: usize| by_speaker[s].len() - alloc[s].iter().sum::<usize>();
    let col_short = |alloc: &[[usize; 3]], p: usize| {
        targets[p].saturating_sub(alloc.iter().map(|row| row[p]).sum::<usize>())
    };
    for &(_, s, p) in &cells {
        if row_short(&alloc, s) > 0 && col_short(&alloc, p) > 0 {
            alloc[s][p] += 1;
        }
    }
    // anything left over: rows first, to whichever column is still short
    for s in 0..n_speakers {
        while row_short(&alloc, s) > 0 {
            let p = (0..3).find(|&p| col_short(&alloc, p) > 0).unwrap_or(0);
            alloc[s][p] += 1;
        }
    }
    for row in alloc.iter_mut() {
        if row[0] == 0 {
            let donor = if row[1] >= row[2] { 1 } else { 2 };
            row[donor] -= 1;
            row[0] += 1;
        }
    }

    let mut out = vec![Partition::Train; labels.len()];
    for (s, items) in by_speaker.iter().enumerate() {
        let mut items = items.clone();
        rng.shuffle(&mut items);
        let [n_train, n_val, _] = alloc[s];
        for (k, &i) in items.iter().enumerate() {
            out[i] = if k < n_train {
                Partition::Train
            } else if k < n_train + n_val {
                Partition::Val
            } else {
                Partition::Test
            };
        }
    }
    Ok(out)
}

/// Dense speaker ids assigned in order of first appearance.
#[derive(Clone, Debug, Default)]
pub struct SpeakerIndex {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl SpeakerIndex {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut idx = Self::default();
        for l in labels {
            idx.id_or_insert(l);
        }
        idx
    }

    pub fn id_or_insert(&mut self, name: &str) -> usize {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct LabeledItem {
    pub sequence: FeatureSequence,
    pub speaker: usize,
    pub partition: Partition,
}

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    items: Vec<LabeledItem>,
    n_speakers: usize,
}

impl LabeledDataset {
    /// Assembles a dataset from an existing partition assignment.
    pub fn new(items: Vec<LabeledItem>, n_speakers: usize) -> Result<Self> {
        let mut in_train = vec![false; n_speakers];
        for it in &items {
            if it.speaker >= n_speakers {
                return Err(Error::input(format!(
                    "speaker id {} >= {n_speakers}",
                    it.speaker
                )));
            }
            if it.partition == Partition::Train {
                in_train[it.speaker] = true;
            }
        }
        if let Some(s) = in_train.iter().position(|t| !t) {
            return Err(Error::input(format!("speaker {s} has no training item")));
        }
        let ds = Self { items, n_speakers };
        ds.check_isolation()?;
        Ok(ds)
    }

    /// Stratified random split of `(sequence, speaker)` pairs.
    pub fn split(
        pairs: Vec<(FeatureSequence, usize)>,
        n_speakers: usize,
        ratios: SplitRatios,
        rng: &mut Rng,
    ) -> Result<Self> {
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let parts = split_indices(&labels, n_speakers, ratios, rng)?;
        let items = pairs
            .into_iter()
            .zip(parts)
            .map(|((sequence, speaker), partition)| LabeledItem {
                sequence,
                speaker,
                partition,
            })
            .collect();
        Self::new(items, n_speakers)
    }

    pub fn items(&self) -> &[LabeledItem] {
        &self.items
    }

    pub fn n_speakers(&self) -> usize {
        self.n_speakers
    }

    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &LabeledItem> {
        self.items.iter().filter(move |it| it.partition == p)
    }

    pub fn count(&self, p: Partition) -> usize {
        self.partition(p).count()
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for it in &self.items {
            c[it.partition.index()] += 1;
        }
        c
    }

    /// No utterance id may occur in two partitions.
    pub fn check_isolation(&self) -> Result<()> {
        let mut seen: HashMap<&str, Partition> = HashMap::new();
        for it in &self.items {
            let id = it.sequence.utterance_id();
            match seen.get(id) {
                Some(&p) if p != it.partition => {
                    return Err(Error::input(format!(
                        "utterance {id} appears in both {} and {}",
                        p.as_str(),
                        it.partition.as_str()
                    )))
                }
                _ => {
                    seen.insert(id, it.partition);
                }
            }
        }
        Ok(())
    }

    /// Same items and partition with every sequence replaced by `f`.
    pub fn map_sequences(&self, mut f: impl FnMut(&FeatureSequence) -> Result<FeatureSequence>) -> Result<Self> {
        let items = self
            .items
            .iter()
            .map(|it| {
                Ok(LabeledItem {
                    sequence: f(&it.sequence)?,
                    speaker: it.speaker,
                    partition: it.partition,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            items,
            n_speakers: self.n_speakers,
        })
    }

    /// Moves the trailing `fraction` of the training items (in dataset order)
    /// to the validation partition. Items previously reserved for validation
    /// are excluded from the result.
    pub fn carve_validation_from_train(&self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::input(format!("validation fraction {fraction} not in (0,1)")));
        }
        let train_idx: Vec<usize> = (0..self.items.len())
            .filter(|&i| self.items[i].partition == Partition::Train)
            .collect();
        let n_val = ((train_idx.len() as f64) * fraction).floor() as usize;
        let cut = train_idx.len() - n_val;
        let mut kept: Vec<LabeledItem> = Vec::with_capacity(self.items.len());
        for (i, it) in self.items.iter().enumerate() {
            match it.partition {
                Partition::Val => continue,
                Partition::Train => {
                    let pos = train_idx.binary_search(&i).unwrap();
                    let mut it = it.clone();
                    if pos >= cut {
                        it.partition = Partition::Val;
                    }
                    kept.push(it);
                }
                Partition::Test => kept.push(it.clone()),
            }
        }
        Self::new(kept, self.n_speakers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(0, 4).unwrap(), vec![1., 0., 0., 0.]);
        assert_eq!(one_hot(3, 4).unwrap(), vec![0., 0., 0., 1.]);
        assert_eq!(one_hot(7, 8).unwrap(), vec![0., 0., 0., 0., 0., 0., 0., 1.]);
        assert!(one_hot(4, 4).is_err());
    }

    fn counts(parts: &[Partition]) -> [usize; 3] {
        let mut c = [0; 3];
        for p in parts {
            c[p.index()] += 1;
        }
        c
    }

    #[test]
    fn split_100_items() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let parts = split_indices(&labels, 4, SplitRatios::default(), &mut Rng::new(11)).unwrap();
        assert_eq!(counts(&parts), [80, 10, 10]);
    }

    #[test]
    fn split_1800_items() {
        let labels: Vec<usize> = (0..1800).map(|i| i % 4).collect();
        let parts = split_indices(&labels, 4, SplitRatios::default(), &mut Rng::new(5)).unwrap();
        assert_eq!(counts(&parts), [1440, 180, 180]);
        // an 8-speaker corpus of 1440 gives a 144-item test set
        let labels: Vec<usize> = (0..1440).map(|i| i % 8).collect();
        let parts = split_indices(&labels, 8, SplitRatios::default(), &mut Rng::new(5)).unwrap();
        assert_eq!(counts(&parts), [1152, 144, 144]);
    }

    #[test]
    fn split_deterministic() {
        let labels: Vec<usize> = (0..57).map(|i| (i * 7) % 3).collect();
        let a = split_indices(&labels, 3, SplitRatios::default(), &mut Rng::new(9)).unwrap();
        let b = split_indices(&labels, 3, SplitRatios::default(), &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_errors() {
        assert!(split_indices(&[0, 1], 3, SplitRatios::default(), &mut Rng::new(0)).is_err());
        assert!(split_indices(&[0, 0, 0], 2, SplitRatios::default(), &mut Rng::new(0)).is_err());
        let bad = SplitRatios { train: 0.5, val: 0.1, test: 0.1 };
        assert!(split_indices(&[0, 1], 2, bad, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn singleton_speaker_lands_in_train() {
        let labels = vec![0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1];
        let parts = split_indices(&labels, 2, SplitRatios::default(), &mut Rng::new(2)).unwrap();
        assert_eq!(parts[0], Partition::Train);
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(7, &[0.8, 0.1, 0.1]), vec![5, 1, 1]);
    }

    #[test]
    fn speaker_index_first_appearance() {
        let idx = SpeakerIndex::from_labels(["bob", "amy", "bob", "cat"]);
        assert_eq!(idx.id("bob"), Some(0));
        assert_eq!(idx.id("amy"), Some(1));
        assert_eq!(idx.id("cat"), Some(2));
        assert_eq!(idx.len(), 3);
    }

    proptest::proptest! {
        #[test]
        fn split_margins_hold(per in proptest::collection::vec(1usize..40, 2..9), seed in 0u64..1000) {
            let labels: Vec<usize> = per.iter().enumerate().flat_map(|(s, &n)| std::iter::repeat_n(s, n)).collect();
            let parts = split_indices(&labels, per.len(), SplitRatios::default(), &mut Rng::new(seed)).unwrap();
            let c = counts(&parts);
            let t = largest_remainder(labels.len(), &[0.8, 0.1, 0.1]);
            for p in 0..3 {
                proptest::prop_assert!((c[p] as i64 - t[p] as i64).abs() <= per.len() as i64);
            }
            for s in 0..per.len() {
                proptest::prop_assert!(labels.iter().zip(&parts).any(|(&l, &p)| l == s && p == Partition::Train));
            }
        }
    }
}
