//! Pair and triplet mappings over a labelled dataset.
//!
//! * IM pairs every sample with a random classmate; the pair label is the class.
//! * IIM pairs every sample with one random member of every class; the pair
//!   label is the unordered class pair, e.g. `"1-3"`.
//! * ISIM emits one matching (label 1) and one non-matching (label 0) pair per sample.
//! * TM emits one `(anchor, positive, negative)` triple per sample.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::Prng;

/// Features `x` (N×p), labels in `[0, n_classes)` and the original label values.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Matrix,
    y: Vec<usize>,
    n_classes: usize,
    label_names: Vec<i64>,
}

impl LabeledDataset {
    pub fn new(x: Matrix, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        let names = (0..n_classes as i64).collect();
        Self::with_label_names(x, y, names)
    }

    /// `label_names[k]` is the external label that contiguous class `k` stands for.
    pub fn with_label_names(x: Matrix, y: Vec<usize>, label_names: Vec<i64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::contract(format!(
                "dataset has {} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        let n_classes = label_names.len();
        if let Some(bad) = y.iter().find(|&&l| l >= n_classes) {
            return Err(Error::contract(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        x.ensure_finite("dataset features")?;
        Ok(LabeledDataset {
            x,
            y,
            n_classes,
            label_names,
        })
    }

    /// Remap arbitrary integer labels to `[0, C)` in ascending order of value.
    pub fn from_raw_labels(x: Matrix, raw: &[i64]) -> Result<Self> {
        let mut names: Vec<i64> = raw.to_vec();
        names.sort_unstable();
        names.dedup();
        let lookup: HashMap<i64, usize> = names.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let y = raw.iter().map(|v| lookup[v]).collect();
        Self::with_label_names(x, y, names)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn label_names(&self) -> &[i64] {
        &self.label_names
    }

    /// Rows `idx`, keeping the class count and label names of `self`.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
            label_names: self.label_names.clone(),
        }
    }

    /// Same labels, new features (e.g. after standardisation).
    pub fn with_features(&self, x: Matrix) -> Result<LabeledDataset> {
        Self::with_label_names(x, self.y.clone(), self.label_names.clone())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.y {
            c[l] += 1;
        }
        c
    }
}

/// Row indices bucketed by class: `groups[c]` lists every row with label `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassGroups(Vec<Vec<usize>>);

impl ClassGroups {
    pub fn get(&self, class: usize) -> &[usize] {
        &self.0[class]
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.0.iter().map(Vec::as_slice)
    }

    fn require_pairable(&self) -> Result<()> {
        for (c, g) in self.0.iter().enumerate() {
            if g.len() < 2 {
                return Err(Error::Mapping(format!(
                    "class {c} has {} sample(s); at least 2 are needed to draw a distinct partner",
                    g.len()
                )));
            }
        }
        Ok(())
    }

    /// Uniform member of `class` other than `exclude`, by rejection.
    fn partner(&self, class: usize, exclude: usize, rng: &mut Prng) -> usize {
        let g = &self.0[class];
        loop {
            let j = g[rng.random_range(0..g.len())];
            if j != exclude {
                return j;
            }
        }
    }

    fn any(&self, class: usize, rng: &mut Prng) -> usize {
        let g = &self.0[class];
        g[rng.random_range(0..g.len())]
    }
}

/// Group rows by label. Every class in `[0, C)` must be present unless the dataset is empty.
pub fn build_class_groups(dataset: &LabeledDataset) -> Result<ClassGroups> {
    if dataset.is_empty() {
        return Ok(ClassGroups(Vec::new()));
    }
    let mut groups = vec![Vec::new(); dataset.n_classes()];
    for (i, &l) in dataset.y().iter().enumerate() {
        groups[l].push(i);
    }
    if let Some(c) = groups.iter().position(Vec::is_empty) {
        return Err(Error::contract(format!(
            "labels are not contiguous: class {c} of {} has no samples",
            dataset.n_classes()
        )));
    }
    Ok(ClassGroups(groups))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Im,
    Iim,
    Isim,
    Tm,
}

impl MappingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MappingKind::Im => "im",
            MappingKind::Iim => "iim",
            MappingKind::Isim => "isim",
            MappingKind::Tm => "tm",
        }
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MappingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "im" => Ok(MappingKind::Im),
            "iim" => Ok(MappingKind::Iim),
            "isim" => Ok(MappingKind::Isim),
            "tm" => Ok(MappingKind::Tm),
            other => Err(Error::Usage(format!(
                "unknown mapping '{other}'; expected one of im, iim, isim, tm"
            ))),
        }
    }
}

/// Output width of the classification head for a mapping over `n_classes` classes.
///
/// Triplet mapping has no head and reports 0.
pub fn n_class_for(kind: MappingKind, n_classes: usize) -> usize {
    match kind {
        MappingKind::Im => n_classes,
        MappingKind::Iim => n_classes + n_classes * n_classes.saturating_sub(1) / 2,
        MappingKind::Isim => 1,
        MappingKind::Tm => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelKind {
    Categorical(usize),
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
    pub kind: LabelKind,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletSet {
    pub triples: Vec<(usize, usize, usize)>,
}

/// Output of any mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MappedSet {
    Pairs(PairSet),
    Triplets(TripletSet),
}

impl MappedSet {
    pub fn len(&self) -> usize {
        match self {
            MappedSet::Pairs(p) => p.len(),
            MappedSet::Triplets(t) => t.triples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Canonical `"min-max"` label for an unordered class pair.
pub fn iim_label(a: usize, b: usize, n_classes: usize) -> Result<String> {
    if a >= n_classes || b >= n_classes {
        return Err(Error::contract(format!(
            "iim_label: ({a}, {b}) out of range for {n_classes} classes"
        )));
    }
    Ok(format!("{}-{}", a.min(b), a.max(b)))
}

/// Every unordered class pair `(a, b)` with `a ≤ b`, ordered by `(a, b)`, with contiguous ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    n_classes: usize,
    labels: Vec<String>,
    ids: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new(n_classes: usize) -> Self {
        let mut labels = Vec::with_capacity(n_class_for(MappingKind::Iim, n_classes));
        for a in 0..n_classes {
            for b in a..n_classes {
                labels.push(format!("{a}-{b}"));
            }
        }
        let ids = labels
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        LabelVocabulary {
            n_classes,
            labels,
            ids,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn id_of_pair(&self, a: usize, b: usize) -> Result<usize> {
        let s = iim_label(a, b, self.n_classes)?;
        Ok(self.ids[&s])
    }

    /// Class pair `(a, b)`, `a ≤ b`, named by an id.
    pub fn decode(&self, id: usize) -> Option<(usize, usize)> {
        let s = self.labels.get(id)?;
        let (a, b) = s.split_once('-')?;
        Some((a.parse().ok()?, b.parse().ok()?))
    }
}

pub fn im_map(dataset: &LabeledDataset, rng: &mut Prng) -> Result<PairSet> {
    let cg = build_class_groups(dataset)?;
    cg.require_pairable()?;
    let mut pairs = Vec::with_capacity(dataset.len());
    let mut labels = Vec::with_capacity(dataset.len());
    for (i, &yi) in dataset.y().iter().enumerate() {
        pairs.push((i, cg.partner(yi, i, rng)));
        labels.push(yi);
    }
    Ok(PairSet {
        pairs,
        labels,
        kind: LabelKind::Categorical(dataset.n_classes()),
    })
}

pub fn iim_map(dataset: &LabeledDataset, rng: &mut Prng) -> Result<(PairSet, LabelVocabulary)> {
    let cg = build_class_groups(dataset)?;
    cg.require_pairable()?;
    let c = dataset.n_classes();
    let vocab = LabelVocabulary::new(c);
    let mut pairs = Vec::with_capacity(dataset.len() * c);
    let mut labels = Vec::with_capacity(dataset.len() * c);
    for (i, &yi) in dataset.y().iter().enumerate() {
        for class in 0..c {
            let j = if class == yi {
                cg.partner(class, i, rng)
            } else {
                cg.any(class, rng)
            };
            pairs.push((i, j));
            labels.push(vocab.id_of_pair(yi, class)?);
        }
    }
    Ok((
        PairSet {
            pairs,
            labels,
            kind: LabelKind::Categorical(vocab.len()),
        },
        vocab,
    ))
}

pub fn isim_map(dataset: &LabeledDataset, rng: &mut Prng) -> Result<PairSet> {
    let c = dataset.n_classes();
    if c < 2 {
        return Err(Error::Mapping(format!(
            "ISIM needs at least 2 classes, dataset has {c}"
        )));
    }
    let cg = build_class_groups(dataset)?;
    cg.require_pairable()?;
    let mut pairs = Vec::with_capacity(2 * dataset.len());
    let mut labels = Vec::with_capacity(2 * dataset.len());
    for (i, &yi) in dataset.y().iter().enumerate() {
        pairs.push((i, cg.partner(yi, i, rng)));
        labels.push(1);
        let other = loop {
            let yj = rng.random_range(0..c);
            if yj != yi {
                break yj;
            }
        };
        pairs.push((i, cg.any(other, rng)));
        labels.push(0);
    }
    Ok(PairSet {
        pairs,
        labels,
        kind: LabelKind::Binary,
    })
}

pub fn triplet_map(dataset: &LabeledDataset, rng: &mut Prng) -> Result<TripletSet> {
    let c = dataset.n_classes();
    if c < 2 {
        return Err(Error::Mapping(format!(
            "triplet mapping needs at least 2 classes, dataset has {c}"
        )));
    }
    let cg = build_class_groups(dataset)?;
    cg.require_pairable()?;
    let mut triples = Vec::with_capacity(dataset.len());
    for (i, &yi) in dataset.y().iter().enumerate() {
        let same = cg.get(yi);
        let own = same.iter().position(|&k| k == i).expect("row is in its class group");
        let mut k = rng.random_range(0..same.len() - 1);
        if k >= own {
            k += 1;
        }
        let mut neg_class = rng.random_range(0..c - 1);
        if neg_class >= yi {
            neg_class += 1;
        }
        triples.push((i, same[k], cg.any(neg_class, rng)));
    }
    Ok(TripletSet { triples })
}

/// Apply the mapping named by `kind`.
pub fn map(kind: MappingKind, dataset: &LabeledDataset, rng: &mut Prng) -> Result<MappedSet> {
    Ok(match kind {
        MappingKind::Im => MappedSet::Pairs(im_map(dataset, rng)?),
        MappingKind::Iim => MappedSet::Pairs(iim_map(dataset, rng)?.0),
        MappingKind::Isim => MappedSet::Pairs(isim_map(dataset, rng)?),
        MappingKind::Tm => MappedSet::Triplets(triplet_map(dataset, rng)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::prng;

    fn ds(labels: &[usize], n_classes: usize) -> LabeledDataset {
        let x = Matrix::zeros(labels.len(), 2);
        LabeledDataset::new(x, labels.to_vec(), n_classes).unwrap()
    }

    #[test]
    fn class_groups() {
        let cg = build_class_groups(&ds(&[0, 1, 0, 1], 2)).unwrap();
        assert_eq!(cg.get(0), &[0, 2]);
        assert_eq!(cg.get(1), &[1, 3]);
        let cg = build_class_groups(&ds(&[0, 0, 0], 1)).unwrap();
        assert_eq!(cg.get(0), &[0, 1, 2]);
        assert!(build_class_groups(&ds(&[], 0)).unwrap().is_empty());
        assert!(matches!(
            build_class_groups(&ds(&[0, 2, 0], 3)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn raw_labels_are_remapped() {
        let d = LabeledDataset::from_raw_labels(Matrix::zeros(3, 1), &[5, 9, 5]).unwrap();
        assert_eq!(d.n_classes(), 2);
        assert_eq!(d.y(), &[0, 1, 0]);
        assert_eq!(d.label_names(), &[5, 9]);
    }

    #[test]
    fn n_class_counts() {
        assert_eq!(n_class_for(MappingKind::Im, 10), 10);
        assert_eq!(n_class_for(MappingKind::Iim, 10), 55);
        assert_eq!(n_class_for(MappingKind::Iim, 4), 10);
        assert_eq!(n_class_for(MappingKind::Iim, 1), 1);
        assert_eq!(n_class_for(MappingKind::Isim, 7), 1);
    }

    #[test]
    fn iim_labels_are_canonical() {
        assert_eq!(iim_label(3, 1, 4).unwrap(), "1-3");
        assert_eq!(iim_label(2, 2, 4).unwrap(), "2-2");
        assert!(iim_label(4, 0, 4).is_err());
        for a in 0..6 {
            for b in 0..6 {
                assert_eq!(iim_label(a, b, 6).unwrap(), iim_label(b, a, 6).unwrap());
            }
        }
    }

    #[test]
    fn vocabulary_size_and_decode() {
        assert_eq!(LabelVocabulary::new(10).len(), 55);
        assert_eq!(LabelVocabulary::new(4).len(), 10);
        let v = LabelVocabulary::new(12);
        for id in 0..v.len() {
            let (a, b) = v.decode(id).unwrap();
            assert!(a <= b);
            assert_eq!(v.id_of_pair(b, a).unwrap(), id);
        }
    }

    #[test]
    fn forced_partner() {
        let d = ds(&[0, 0, 1, 1], 2);
        let p = im_map(&d, &mut prng(0)).unwrap();
        assert_eq!(p.pairs, vec![(0, 1), (1, 0), (2, 3), (3, 2)]);
        assert_eq!(p.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn singleton_class_fails_fast() {
        let d = ds(&[0, 0, 1], 2);
        for kind in [MappingKind::Im, MappingKind::Iim, MappingKind::Isim, MappingKind::Tm] {
            match map(kind, &d, &mut prng(0)) {
                Err(Error::Mapping(msg)) => assert!(msg.contains("class 1"), "{msg}"),
                other => panic!("{kind}: expected mapping error, got {other:?}"),
            }
        }
    }

    #[test]
    fn isim_and_tm_need_two_classes() {
        let d = ds(&[0, 0, 0], 1);
        assert!(matches!(isim_map(&d, &mut prng(0)), Err(Error::Mapping(_))));
        assert!(matches!(triplet_map(&d, &mut prng(0)), Err(Error::Mapping(_))));
    }

    #[test]
    fn isim_alternates_labels() {
        let d = ds(&[0, 1, 1, 0], 2);
        let p = isim_map(&d, &mut prng(3)).unwrap();
        assert_eq!(p.labels, vec![1, 0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(p.kind, LabelKind::Binary);
    }

    #[test]
    fn iim_emits_n_times_c() {
        let d = ds(&[0, 1, 2, 3, 0, 1, 2, 3, 0], 4);
        let (p, v) = iim_map(&d, &mut prng(1)).unwrap();
        assert_eq!(p.len(), 9 * 4);
        assert_eq!(v.len(), 10);
        assert_eq!(p.kind, LabelKind::Categorical(10));
    }

    #[test]
    fn mapping_kind_parses() {
        for s in ["im", "iim", "isim", "tm"] {
            assert_eq!(s.parse::<MappingKind>().unwrap().as_str(), s);
        }
        assert!("xx".parse::<MappingKind>().is_err());
    }

    #[test]
    fn im_partner_uniformity() {
        // one class of three: partners of row 0 are rows 1 and 2 with probability 1/2 each
        let d = ds(&[0, 0, 0], 1);
        let mut rng = prng(77);
        let draws = 10_000;
        let mut hits = [0usize; 3];
        for _ in 0..draws {
            let p = im_map(&d, &mut rng).unwrap();
            hits[p.pairs[0].1] += 1;
        }
        assert_eq!(hits[0], 0);
        let sd = (draws as f64 * 0.25).sqrt();
        for &h in &hits[1..] {
            assert!((h as f64 - draws as f64 / 2.0).abs() < 5.0 * sd, "{hits:?}");
        }
    }
}
