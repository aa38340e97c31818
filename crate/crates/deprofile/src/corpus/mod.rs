//! Source-record types and ingest: skeleton records from the two clinical
//! sources, social-media candidate records, vocabulary/schema validation,
//! and confidence thresholding of raw timelines.
//!
//! All record types round-trip through serde; maps are `BTreeMap` so a
//! load-then-serialize cycle yields canonically ordered output.

pub mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use vocab::{is_social_label, normalize_attribute, ASSESSMENT_ATTRIBUTES};

/// Closed age buckets; serialized exactly as the bucket label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBucket {
    #[serde(rename = "0-17")]
    Under18,
    #[serde(rename = "18-25")]
    From18To25,
    #[serde(rename = "26-35")]
    From26To35,
    #[serde(rename = "36-50")]
    From36To50,
    #[serde(rename = "50+")]
    Over50,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Employment {
    Employed,
    Unemployed,
    Student,
    Retired,
    #[serde(rename = "Unknown")]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaritalStatus {
    Married,
    Single,
    Divorced,
    Widowed,
    #[serde(rename = "Unknown")]
    Unknown,
}

/// A demographic field that may carry the `Unknown` sentinel.
pub trait MaybeUnknown {
    fn is_unknown(&self) -> bool;
}

macro_rules! impl_demo_field {
    ($ty:ty) => {
        impl MaybeUnknown for $ty {
            fn is_unknown(&self) -> bool {
                matches!(self, <$ty>::Unknown)
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                // Display mirrors the wire token.
                let token = serde_json::to_value(self).expect("enum serializes");
                write!(f, "{}", token.as_str().expect("string token"))
            }
        }
    };
}

impl_demo_field!(AgeBucket);
impl_demo_field!(Gender);
impl_demo_field!(Employment);
impl_demo_field!(MaritalStatus);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: AgeBucket,
    pub gender: Gender,
    pub employment: Employment,
    pub marital: MaritalStatus,
}

/// Ordinal risk levels from the assessment source; higher is more severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub depression: u8,
    pub suicide: u8,
}

/// Big Five scores, each an integer in `[1, 7]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalityVector {
    #[serde(rename = "o")]
    pub openness: u8,
    #[serde(rename = "c")]
    pub conscientiousness: u8,
    #[serde(rename = "e")]
    pub extraversion: u8,
    #[serde(rename = "a")]
    pub agreeableness: u8,
    #[serde(rename = "n")]
    pub neuroticism: u8,
}

impl PersonalityVector {
    pub fn new(o: u8, c: u8, e: u8, a: u8, n: u8) -> Self {
        PersonalityVector {
            openness: o,
            conscientiousness: c,
            extraversion: e,
            agreeableness: a,
            neuroticism: n,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            f64::from(self.openness),
            f64::from(self.conscientiousness),
            f64::from(self.extraversion),
            f64::from(self.agreeableness),
            f64::from(self.neuroticism),
        ]
    }

    /// Trait names paired with scores, in O-C-E-A-N order.
    pub fn traits(&self) -> [(&'static str, u8); 5] {
        [
            ("Openness", self.openness),
            ("Conscientiousness", self.conscientiousness),
            ("Extraversion", self.extraversion),
            ("Agreeableness", self.agreeableness),
            ("Neuroticism", self.neuroticism),
        ]
    }

    fn validate(&self) -> Result<()> {
        for (name, score) in self.traits() {
            if !(1..=7).contains(&score) {
                return Err(Error::invalid(format!(
                    "personality score {name}={score} outside [1, 7]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymptomLabel {
    Positive,
    Negative,
    NotMentioned,
}

/// Per-attribute positive/negative/not_mentioned labels over the full
/// canonical checklist. The key set must equal [`ASSESSMENT_ATTRIBUTES`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct SymptomChecklist {
    pub labels: BTreeMap<String, SymptomLabel>,
}

impl SymptomChecklist {
    /// A checklist with every attribute `not_mentioned`.
    pub fn unmentioned() -> Self {
        SymptomChecklist {
            labels: ASSESSMENT_ATTRIBUTES
                .iter()
                .map(|a| (a.to_string(), SymptomLabel::NotMentioned))
                .collect(),
        }
    }

    /// Normalizes keys to canonical form. Two raw keys collapsing to the
    /// same canonical name is an error.
    pub fn normalized(self) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (raw, label) in self.labels {
            let key = normalize_attribute(&raw);
            if labels.insert(key.clone(), label).is_some() {
                return Err(Error::invalid(format!(
                    "checklist keys collide after normalization: {key:?}"
                )));
            }
        }
        Ok(SymptomChecklist { labels })
    }

    /// Checks the key set equals the canonical attribute list exactly.
    pub fn validate_keys(&self) -> Result<()> {
        let canonical: BTreeSet<&str> = ASSESSMENT_ATTRIBUTES.iter().copied().collect();
        let present: BTreeSet<&str> = self.labels.keys().map(String::as_str).collect();
        let missing: Vec<&&str> = canonical.difference(&present).collect();
        let extra: Vec<&&str> = present.difference(&canonical).collect();
        if missing.is_empty() && extra.is_empty() {
            return Ok(());
        }
        let mut msg = String::from("checklist key set mismatch");
        if !missing.is_empty() {
            msg.push_str(&format!("; missing {missing:?}"));
        }
        if !extra.is_empty() {
            msg.push_str(&format!("; unexpected {extra:?}"));
        }
        Err(Error::invalid(msg))
    }

    pub fn get(&self, attribute: &str) -> Option<SymptomLabel> {
        self.labels.get(attribute).copied()
    }

    pub fn positives(&self) -> BTreeSet<String> {
        self.filtered(SymptomLabel::Positive)
    }

    pub fn negatives(&self) -> BTreeSet<String> {
        self.filtered(SymptomLabel::Negative)
    }

    fn filtered(&self, wanted: SymptomLabel) -> BTreeSet<String> {
        self.labels
            .iter()
            .filter(|(_, l)| **l == wanted)
            .map(|(a, _)| a.clone())
            .collect()
    }

    /// True iff some attribute is positive on one side and negative on the
    /// other. `not_mentioned` never conflicts.
    pub fn conflicts_with(&self, other: &SymptomChecklist) -> bool {
        self.labels.iter().any(|(attr, mine)| {
            matches!(
                (mine, other.get(attr)),
                (SymptomLabel::Positive, Some(SymptomLabel::Negative))
                    | (SymptomLabel::Negative, Some(SymptomLabel::Positive))
            )
        })
    }

    /// Per-attribute merge preferring definite labels over `not_mentioned`.
    /// Precondition: no conflicts (checked by the caller).
    pub fn merged_with(&self, other: &SymptomChecklist) -> SymptomChecklist {
        let mut labels = self.labels.clone();
        for (attr, theirs) in &other.labels {
            let entry = labels.entry(attr.clone()).or_insert(SymptomLabel::NotMentioned);
            if *entry == SymptomLabel::NotMentioned {
                *entry = *theirs;
            }
        }
        SymptomChecklist { labels }
    }
}

/// Unified clinical profile: one record per patient skeleton. The same
/// schema carries the counseling-side and assessment-side source records,
/// each with its own snippet list populated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSkeleton {
    pub id: String,
    pub demographics: Demographics,
    pub risk: RiskProfile,
    pub personality: PersonalityVector,
    pub symptoms: SymptomChecklist,
    pub assessment_snippets: Vec<String>,
    pub counseling_snippets: Vec<String>,
}

/// One dated, confidence-scored symptom or life-event mention. The kind is
/// carried by the stream the item belongs to, not by the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineItem {
    /// Absolute day index; larger is more recent.
    pub day: i64,
    pub label: String,
    pub text: String,
    /// Classifier confidence in `[0, 1]`.
    pub score: f64,
}

/// Social-media candidate: positive-only symptom set plus two dated
/// timelines (symptom mentions and life events).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialCandidate {
    pub id: String,
    pub demographics: Demographics,
    pub personality: PersonalityVector,
    pub symptom_set: BTreeSet<String>,
    pub symptom_timeline: Vec<TimelineItem>,
    pub event_timeline: Vec<TimelineItem>,
}

impl SocialCandidate {
    /// Latest day across both timelines; `None` when both are empty.
    pub fn latest_day(&self) -> Option<i64> {
        self.symptom_timeline
            .iter()
            .chain(&self.event_timeline)
            .map(|i| i.day)
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Minimum confidence retained by [`threshold_timeline`] (`>=`).
    #[serde(default = "default_score_threshold")]
    pub score_threshold: f64,
    /// Strict mode fails on the first invalid record; lenient mode skips
    /// invalid records and reports their line numbers.
    #[serde(default = "default_strict")]
    pub strict: bool,
}

fn default_score_threshold() -> f64 {
    0.8
}

fn default_strict() -> bool {
    true
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { score_threshold: 0.8, strict: true }
    }
}

/// One skipped input line and why it was skipped (lenient mode only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

/// Loader output: validated records plus the lenient-mode skip report.
#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub skipped: Vec<SkippedLine>,
}

trait SourceRecord: serde::de::DeserializeOwned {
    fn id(&self) -> &str;
    /// Normalization plus semantic validation after the serde parse.
    fn finalize(self) -> Result<Self>;
}

impl SourceRecord for PatientSkeleton {
    fn id(&self) -> &str {
        &self.id
    }

    fn finalize(mut self) -> Result<Self> {
        if self.id.is_empty() {
            return Err(Error::invalid("empty id"));
        }
        self.personality.validate()?;
        self.symptoms = self.symptoms.normalized()?;
        self.symptoms.validate_keys()?;
        Ok(self)
    }
}

impl SourceRecord for SocialCandidate {
    fn id(&self) -> &str {
        &self.id
    }

    fn finalize(self) -> Result<Self> {
        if self.id.is_empty() {
            return Err(Error::invalid("empty id"));
        }
        self.personality.validate()?;
        for label in &self.symptom_set {
            if !is_social_label(label) {
                return Err(Error::invalid(format!(
                    "symptom_set label {label:?} not in the social vocabulary"
                )));
            }
        }
        for (stream, items) in [
            ("symptom_timeline", &self.symptom_timeline),
            ("event_timeline", &self.event_timeline),
        ] {
            for item in items {
                if !(0.0..=1.0).contains(&item.score) {
                    return Err(Error::invalid(format!(
                        "{stream} item day {} score {} outside [0, 1]",
                        item.day, item.score
                    )));
                }
                if item.label.is_empty() {
                    return Err(Error::invalid(format!("{stream} item day {} has empty label", item.day)));
                }
            }
        }
        Ok(self)
    }
}

fn load_records<T: SourceRecord>(path: &Path, config: &IngestConfig) -> Result<Ingested<T>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<T> = Vec::new();
    let mut skipped = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<T, _> = serde_json::from_str(line);
        let record = match parsed {
            Ok(r) => r,
            Err(e) => {
                if config.strict {
                    return Err(Error::schema(path, line_no, e.to_string()));
                }
                skipped.push(SkippedLine { line: line_no, reason: e.to_string() });
                continue;
            }
        };
        let record = match record.finalize() {
            Ok(r) => r,
            Err(e) => {
                if config.strict {
                    return Err(Error::schema(path, line_no, e.to_string()));
                }
                skipped.push(SkippedLine { line: line_no, reason: e.to_string() });
                continue;
            }
        };
        if !seen_ids.insert(record.id().to_string()) {
            let dup = Error::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: record.id().to_string(),
            };
            if config.strict {
                return Err(dup);
            }
            skipped.push(SkippedLine { line: line_no, reason: dup.to_string() });
            continue;
        }
        records.push(record);
    }
    Ok(Ingested { records, skipped })
}

/// Loads one skeleton-schema JSONL file (clinical source or merged output).
pub fn load_skeletons(path: &Path, config: &IngestConfig) -> Result<Ingested<PatientSkeleton>> {
    load_records(path, config)
}

/// Loads a candidate JSONL file.
pub fn load_candidates(path: &Path, config: &IngestConfig) -> Result<Ingested<SocialCandidate>> {
    load_records(path, config)
}

/// Retains items with `score >= p`, preserving input order.
pub fn threshold_timeline(items: &[TimelineItem], p: f64) -> Result<Vec<TimelineItem>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("score threshold {p} outside [0, 1]")));
    }
    Ok(items.iter().filter(|i| i.score >= p).cloned().collect())
}

/// Serializes records as JSONL, one canonical JSON object per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// A skeleton with every field populated and the full canonical
    /// checklist; `positives`/`negatives` override individual attributes.
    pub fn skeleton(id: &str, positives: &[&str], negatives: &[&str]) -> PatientSkeleton {
        let mut symptoms = SymptomChecklist::unmentioned();
        for attr in positives {
            assert!(
                symptoms.labels.insert(attr.to_string(), SymptomLabel::Positive).is_some(),
                "unknown attribute {attr}"
            );
        }
        for attr in negatives {
            assert!(
                symptoms.labels.insert(attr.to_string(), SymptomLabel::Negative).is_some(),
                "unknown attribute {attr}"
            );
        }
        PatientSkeleton {
            id: id.to_string(),
            demographics: Demographics {
                age: AgeBucket::From18To25,
                gender: Gender::M,
                employment: Employment::Student,
                marital: MaritalStatus::Single,
            },
            risk: RiskProfile { depression: 2, suicide: 1 },
            personality: PersonalityVector::new(4, 4, 3, 5, 6),
            symptoms,
            assessment_snippets: vec!["Doctor: how do you sleep? Patient: badly.".into()],
            counseling_snippets: vec!["I just feel stuck lately.".into()],
        }
    }

    pub fn candidate(id: &str, symptom_set: &[&str]) -> SocialCandidate {
        SocialCandidate {
            id: id.to_string(),
            demographics: Demographics {
                age: AgeBucket::From18To25,
                gender: Gender::M,
                employment: Employment::Student,
                marital: MaritalStatus::Single,
            },
            personality: PersonalityVector::new(4, 4, 3, 5, 6),
            symptom_set: symptom_set.iter().map(|s| s.to_string()).collect(),
            symptom_timeline: vec![],
            event_timeline: vec![],
        }
    }
}
