use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Category, GoldLabel, ImageRef, Sample};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset {path} is not a JSON array of records: {reason}")]
    Format { path: String, reason: String },
    #[error("record {id}: unknown label {label:?}")]
    UnknownLabel { id: String, label: String },
    #[error("record {id}: unknown category {category:?}")]
    UnknownCategory { id: String, category: String },
    #[error("record {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
}

/// Maps source label and category strings onto the fixed enums. Lookups
/// are exact first, then case-insensitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelMapping {
    pub labels: BTreeMap<String, GoldLabel>,
    pub categories: BTreeMap<String, Category>,
}

impl Default for LabelMapping {
    fn default() -> Self {
        let labels = [
            ("Fake", GoldLabel::Misinformation),
            ("True", GoldLabel::NotMisinformation),
            ("misinformation", GoldLabel::Misinformation),
            ("not_misinformation", GoldLabel::NotMisinformation),
        ];
        let categories = [
            ("textual_distortion", Category::TextualDistortion),
            ("textual_veracity_distortion", Category::TextualDistortion),
            ("visual_distortion", Category::VisualDistortion),
            ("visual_veracity_distortion", Category::VisualDistortion),
            ("cross_modal_mismatch", Category::CrossModalMismatch),
            ("mismatch", Category::CrossModalMismatch),
            ("authentic", Category::Authentic),
            ("original", Category::Authentic),
        ];
        LabelMapping {
            labels: labels.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            categories: categories.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
        }
    }
}

fn lookup<T: Copy>(table: &BTreeMap<String, T>, key: &str) -> Option<T> {
    let key = key.trim();
    table
        .get(key)
        .copied()
        .or_else(|| table.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| *v))
}

impl LabelMapping {
    pub fn label(&self, raw: &str) -> Option<GoldLabel> {
        lookup(&self.labels, raw)
    }

    pub fn category(&self, raw: &str) -> Option<Category> {
        lookup(&self.categories, raw)
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    image: String,
    headline: String,
    gold_label: String,
    category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    /// Resolved against the dataset file's directory.
    pub image: PathBuf,
    pub headline: String,
    pub gold_label: GoldLabel,
    pub category: Category,
    /// The image file did not exist at load time.
    #[serde(default)]
    pub image_missing: bool,
}

impl DatasetRecord {
    pub fn to_sample(&self) -> Sample {
        Sample {
            id: self.id.clone(),
            image_ref: ImageRef::Path(self.image.clone()),
            headline: self.headline.clone(),
            gold_label: Some(self.gold_label),
            category: Some(self.category),
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, IngestError> {
    load_dataset_with(path, &LabelMapping::default())
}

pub fn load_dataset_with(path: &Path, mapping: &LabelMapping) -> Result<Vec<DatasetRecord>, IngestError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: shown.clone(),
        source,
    })?;
    let raw: Vec<RawRecord> = serde_json::from_str(&text).map_err(|e| IngestError::Format {
        path: shown.clone(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(raw.len());
    for r in raw {
        if !seen.insert(r.id.clone()) {
            return Err(IngestError::DuplicateId(r.id));
        }
        let gold_label = mapping.label(&r.gold_label).ok_or_else(|| IngestError::UnknownLabel {
            id: r.id.clone(),
            label: r.gold_label.clone(),
        })?;
        let category = mapping
            .category(&r.category)
            .ok_or_else(|| IngestError::UnknownCategory {
                id: r.id.clone(),
                category: r.category.clone(),
            })?;
        let image = base.join(&r.image);
        let record = DatasetRecord {
            image_missing: !image.is_file(),
            id: r.id,
            image,
            headline: r.headline,
            gold_label,
            category,
        };
        record.to_sample().validate().map_err(|e| IngestError::Invalid {
            id: record.id.clone(),
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("sampling fraction must be in (0, 1], got {0}")]
pub struct FractionError(pub f64);

/// Seeded per-class subsample: each gold class is ordered by id, shuffled
/// with ChaCha8, and truncated to `round(fraction * class size)`. The
/// result is returned in id order.
pub fn stratified_sample(
    records: &[DatasetRecord],
    fraction: f64,
    seed: u64,
) -> Result<Vec<DatasetRecord>, FractionError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(FractionError(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for class in [GoldLabel::Misinformation, GoldLabel::NotMisinformation] {
        let mut members: Vec<&DatasetRecord> = records.iter().filter(|r| r.gold_label == class).collect();
        members.sort_by(|a, b| a.id.cmp(&b.id));
        members.shuffle(&mut rng);
        let take = (fraction * members.len() as f64).round() as usize;
        picked.extend(members.into_iter().take(take).cloned());
    }
    picked.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("data.json");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_and_resolves_images() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("img")).unwrap();
        fs::write(dir.path().join("img/a.jpg"), b"x").unwrap();
        let p = write(
            dir.path(),
            r#"[
              {"id":"a","image":"img/a.jpg","headline":"h1","gold_label":"Fake","category":"visual_veracity_distortion"},
              {"id":"b","image":"img/b.jpg","headline":"h2","gold_label":"True","category":"original"},
              {"id":"c","image":"img/a.jpg","headline":"h3","gold_label":"misinformation","category":"Mismatch"}
            ]"#,
        );
        let recs = load_dataset(&p).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].image, dir.path().join("img/a.jpg"));
        assert_eq!(recs[0].category, Category::VisualDistortion);
        assert_eq!(recs[1].gold_label, GoldLabel::NotMisinformation);
        assert_eq!(recs[2].category, Category::CrossModalMismatch);
        assert_eq!(recs.iter().filter(|r| r.image_missing).count(), 1);
    }

    #[test]
    fn unknown_label_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"[{"id":"q7","image":"x.jpg","headline":"h","gold_label":"Maybe","category":"original"}]"#,
        );
        let err = load_dataset(&p).unwrap_err();
        assert!(matches!(&err, IngestError::UnknownLabel { id, .. } if id == "q7"));
        assert!(err.to_string().contains("q7"));
    }

    #[test]
    fn custom_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"[{"id":"a","image":"x.jpg","headline":"h","gold_label":"Maybe","category":"original"}]"#,
        );
        let mut m = LabelMapping::default();
        m.labels.insert("Maybe".into(), GoldLabel::NotMisinformation);
        assert_eq!(
            load_dataset_with(&p, &m).unwrap()[0].gold_label,
            GoldLabel::NotMisinformation
        );
    }

    #[test]
    fn rejects_duplicates_and_bad_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"[{"id":"a","image":"x","headline":"h","gold_label":"Fake","category":"mismatch"},
                {"id":"a","image":"x","headline":"h","gold_label":"Fake","category":"mismatch"}]"#,
        );
        assert!(matches!(load_dataset(&p), Err(IngestError::DuplicateId(_))));
        let p = write(
            dir.path(),
            r#"[{"id":"a","image":"x","headline":"h","gold_label":"Fake","category":"original"}]"#,
        );
        assert!(matches!(load_dataset(&p), Err(IngestError::Invalid { .. })));
    }

    fn synthetic(pos: usize, neg: usize) -> Vec<DatasetRecord> {
        (0..pos + neg)
            .map(|i| DatasetRecord {
                id: format!("s{i:05}"),
                image: PathBuf::from("x.jpg"),
                headline: "h".into(),
                gold_label: if i < pos {
                    GoldLabel::Misinformation
                } else {
                    GoldLabel::NotMisinformation
                },
                category: if i < pos {
                    Category::TextualDistortion
                } else {
                    Category::Authentic
                },
                image_missing: false,
            })
            .collect()
    }

    #[test]
    fn full_fraction_is_identity() {
        let recs = synthetic(7, 3);
        assert_eq!(stratified_sample(&recs, 1.0, 42).unwrap(), recs);
        assert!(stratified_sample(&recs, 0.0, 42).is_err());
        assert!(stratified_sample(&recs, 1.5, 42).is_err());
    }

    proptest! {
        #[test]
        fn class_sizes_follow_rounding(pos in 0usize..60, neg in 0usize..60, f in 0.01f64..=1.0, seed: u64) {
            let recs = synthetic(pos, neg);
            let out = stratified_sample(&recs, f, seed).unwrap();
            let p = out.iter().filter(|r| r.gold_label.is_positive()).count();
            prop_assert_eq!(p, (f * pos as f64).round() as usize);
            prop_assert_eq!(out.len() - p, (f * neg as f64).round() as usize);
            prop_assert!(out.windows(2).all(|w| w[0].id < w[1].id));
            prop_assert_eq!(&out, &stratified_sample(&recs, f, seed).unwrap());
        }
    }
}
