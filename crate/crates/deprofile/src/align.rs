//! Two-stage profile alignment: deterministic merge of the two clinical
//! sources (stage 1), then demographic prefiltering, symptom projection,
//! conflict pruning, similarity scoring, and strict-threshold ranking of
//! social-media candidates (stage 2).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::vocab::{
    ASSESSMENT_ATTRIBUTES, PAIRED_SOCIAL_ATTRIBUTES, SOCIAL_ONLY_ATTRIBUTES,
};
use crate::corpus::{Demographics, MaybeUnknown, PatientSkeleton, SocialCandidate};
use crate::error::{Error, Result};

/// How `Unknown` demographic values participate in the prefilter.
/// Strict treats `Unknown` as an ordinary value (matches only itself);
/// lenient lets `Unknown` match anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    /// Candidates must score strictly above both thresholds.
    #[serde(default = "default_threshold")]
    pub sim_symp_threshold: f64,
    #[serde(default = "default_threshold")]
    pub sim_pers_threshold: f64,
    #[serde(default)]
    pub unknown_policy: UnknownPolicy,
}

fn default_threshold() -> f64 {
    0.8
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            sim_symp_threshold: 0.8,
            sim_pers_threshold: 0.8,
            unknown_policy: UnknownPolicy::Strict,
        }
    }
}

/// Mapping between social-media symptom labels and assessment attributes.
/// Ships with the built-in pairing but can be loaded from a file; the
/// paired portion must be injective so the reverse lookup is well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct SymptomTaxonomyMap {
    pairs: BTreeMap<String, String>,
    social_only: BTreeSet<String>,
    reverse: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    pairs: BTreeMap<String, String>,
    social_only: BTreeSet<String>,
}

impl Default for SymptomTaxonomyMap {
    fn default() -> Self {
        let pairs = PAIRED_SOCIAL_ATTRIBUTES
            .iter()
            .map(|(s, a)| (s.to_string(), a.to_string()))
            .collect();
        let social_only = SOCIAL_ONLY_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
        SymptomTaxonomyMap::from_parts(pairs, social_only).expect("built-in taxonomy is valid")
    }
}

impl SymptomTaxonomyMap {
    pub fn from_parts(
        pairs: BTreeMap<String, String>,
        social_only: BTreeSet<String>,
    ) -> Result<Self> {
        let mut reverse = BTreeMap::new();
        for (social, assessment) in &pairs {
            if !ASSESSMENT_ATTRIBUTES.contains(&assessment.as_str()) {
                return Err(Error::invalid(format!(
                    "taxonomy target {assessment:?} is not a checklist attribute"
                )));
            }
            if social_only.contains(social) {
                return Err(Error::invalid(format!(
                    "label {social:?} is both paired and social-only"
                )));
            }
            if reverse.insert(assessment.clone(), social.clone()).is_some() {
                return Err(Error::invalid(format!(
                    "taxonomy is not injective: {assessment:?} has two social labels"
                )));
            }
        }
        Ok(SymptomTaxonomyMap { pairs, social_only, reverse })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TaxonomyFile =
            serde_json::from_str(&raw).map_err(|e| Error::schema(path, 0, e.to_string()))?;
        SymptomTaxonomyMap::from_parts(file.pairs, file.social_only)
    }

    /// Assessment-side categories reachable from social labels.
    pub fn shared_categories(&self) -> BTreeSet<&str> {
        self.pairs.values().map(String::as_str).collect()
    }

    pub fn assessment_for(&self, social_label: &str) -> Option<&str> {
        self.pairs.get(social_label).map(String::as_str)
    }

    pub fn social_for(&self, assessment_attribute: &str) -> Option<&str> {
        self.reverse.get(assessment_attribute).map(String::as_str)
    }

    pub fn knows(&self, social_label: &str) -> bool {
        self.pairs.contains_key(social_label) || self.social_only.contains(social_label)
    }

    /// Projects a candidate symptom set into the shared category space.
    /// Unpaired labels are dropped from the shared set but reported.
    /// Labels the taxonomy has never seen are an error in strict mode and
    /// are treated as unpaired otherwise.
    pub fn project(&self, symptom_set: &BTreeSet<String>, strict: bool) -> Result<ProjectedSymptoms> {
        let mut shared = BTreeSet::new();
        let mut unpaired = BTreeSet::new();
        for label in symptom_set {
            match self.pairs.get(label) {
                Some(assessment) => {
                    shared.insert(assessment.clone());
                }
                None => {
                    if strict && !self.social_only.contains(label) {
                        return Err(Error::invalid(format!(
                            "symptom label {label:?} unknown to the taxonomy"
                        )));
                    }
                    unpaired.insert(label.clone());
                }
            }
        }
        Ok(ProjectedSymptoms { shared, unpaired })
    }
}

/// Result of projecting a candidate's labels: the shared-space categories
/// that score and prune, plus the labels that have no counterpart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectedSymptoms {
    pub shared: BTreeSet<String>,
    pub unpaired: BTreeSet<String>,
}

/// Stage-1 merge: every (counseling, assessment) pair whose four
/// demographic fields are equal and whose checklists never oppose each
/// other yields one unified skeleton. Demographics come from either side,
/// risk from the assessment record, personality from the counseling
/// record, snippets from their respective sides, and checklists merge
/// per attribute with definite labels winning over `not_mentioned`.
pub fn match_stage1(
    counseling: &[PatientSkeleton],
    assessment: &[PatientSkeleton],
) -> Vec<PatientSkeleton> {
    let mut merged = Vec::new();
    for c in counseling {
        for a in assessment {
            if c.demographics != a.demographics {
                continue;
            }
            if c.symptoms.conflicts_with(&a.symptoms) {
                continue;
            }
            merged.push(PatientSkeleton {
                id: format!("{}+{}", c.id, a.id),
                demographics: a.demographics,
                risk: a.risk,
                personality: c.personality,
                symptoms: c.symptoms.merged_with(&a.symptoms),
                assessment_snippets: a.assessment_snippets.clone(),
                counseling_snippets: c.counseling_snippets.clone(),
            });
        }
    }
    merged
}

fn field_matches<T: PartialEq + MaybeUnknown>(a: &T, b: &T, policy: UnknownPolicy) -> bool {
    match policy {
        UnknownPolicy::Strict => a == b,
        UnknownPolicy::Lenient => a == b || a.is_unknown() || b.is_unknown(),
    }
}

/// Keeps candidates whose four demographic fields match the skeleton under
/// the configured `Unknown` policy. Order is preserved.
pub fn demographic_prefilter<'a>(
    demographics: &Demographics,
    candidates: &'a [SocialCandidate],
    policy: UnknownPolicy,
) -> Vec<&'a SocialCandidate> {
    candidates
        .iter()
        .filter(|c| {
            field_matches(&demographics.age, &c.demographics.age, policy)
                && field_matches(&demographics.gender, &c.demographics.gender, policy)
                && field_matches(&demographics.employment, &c.demographics.employment, policy)
                && field_matches(&demographics.marital, &c.demographics.marital, policy)
        })
        .collect()
}

/// True iff the candidate survives conflict pruning: no projected category
/// is explicitly negative in the skeleton checklist.
pub fn prune_conflicts(skeleton: &PatientSkeleton, projected: &BTreeSet<String>) -> bool {
    projected
        .iter()
        .all(|category| skeleton.symptoms.get(category) != Some(crate::corpus::SymptomLabel::Negative))
}

/// Symptom similarity: |skeleton positives ∩ candidate shared set| divided
/// by |candidate shared set|. Both sets live in the shared category space.
pub fn sim_symp(positives: &BTreeSet<String>, candidate_shared: &BTreeSet<String>) -> Result<f64> {
    if candidate_shared.is_empty() {
        return Err(Error::invalid(
            "candidate shared symptom set is empty; similarity undefined",
        ));
    }
    let overlap = candidate_shared.intersection(positives).count();
    Ok(overlap as f64 / candidate_shared.len() as f64)
}

/// Personality similarity: cosine of the two Big Five vectors. The [1, 7]
/// domain keeps norms positive, so the value is always defined.
pub fn sim_pers(a: &crate::corpus::PersonalityVector, b: &crate::corpus::PersonalityVector) -> f64 {
    let va = a.as_array();
    let vb = b.as_array();
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(na > 0.0 && nb > 0.0, "personality vectors are never zero");
    dot / (na * nb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub sim_symp: f64,
    pub sim_pers: f64,
    pub sim_total: f64,
}

impl MatchScore {
    pub fn new(sim_symp: f64, sim_pers: f64) -> Self {
        MatchScore { sim_symp, sim_pers, sim_total: sim_symp + sim_pers }
    }
}

/// Strict threshold check: both components must exceed their thresholds
/// (exact `>`, no epsilon).
pub fn meets_thresholds(score: &MatchScore, config: &AlignConfig) -> bool {
    score.sim_symp > config.sim_symp_threshold && score.sim_pers > config.sim_pers_threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate_id: String,
    pub score: MatchScore,
}

/// One skeleton plus its ranked surviving candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedProfile {
    pub skeleton: PatientSkeleton,
    pub ranked: Vec<RankedCandidate>,
}

/// Wire form of a unified profile line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedProfileRecord {
    pub skeleton_id: String,
    pub candidates: Vec<RankedCandidateRecord>,
    pub thresholds: ThresholdRecord,
    pub policy_flags: PolicyFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidateRecord {
    pub candidate_id: String,
    pub sim_symp: f64,
    pub sim_pers: f64,
    pub sim_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub sim_symp: f64,
    pub sim_pers: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyFlags {
    pub unknown_policy: UnknownPolicy,
}

impl UnifiedProfile {
    pub fn to_record(&self, config: &AlignConfig) -> UnifiedProfileRecord {
        UnifiedProfileRecord {
            skeleton_id: self.skeleton.id.clone(),
            candidates: self
                .ranked
                .iter()
                .map(|r| RankedCandidateRecord {
                    candidate_id: r.candidate_id.clone(),
                    sim_symp: r.score.sim_symp,
                    sim_pers: r.score.sim_pers,
                    sim_total: r.score.sim_total,
                })
                .collect(),
            thresholds: ThresholdRecord {
                sim_symp: config.sim_symp_threshold,
                sim_pers: config.sim_pers_threshold,
            },
            policy_flags: PolicyFlags { unknown_policy: config.unknown_policy },
        }
    }
}

/// Stage-2 expansion for one skeleton: prefilter, project, prune, score,
/// threshold, rank. Candidates with an empty shared projection cannot be
/// scored and are excluded. Ranking is by total similarity descending,
/// ties by symptom similarity descending, then candidate id ascending.
pub fn expand_stage2(
    skeleton: &PatientSkeleton,
    candidates: &[SocialCandidate],
    taxonomy: &SymptomTaxonomyMap,
    config: &AlignConfig,
) -> Result<UnifiedProfile> {
    let positives = skeleton.symptoms.positives();
    let mut ranked = Vec::new();
    for candidate in demographic_prefilter(&skeleton.demographics, candidates, config.unknown_policy)
    {
        let projected = taxonomy.project(&candidate.symptom_set, false)?;
        if projected.shared.is_empty() {
            continue;
        }
        if !prune_conflicts(skeleton, &projected.shared) {
            continue;
        }
        let score = MatchScore::new(
            sim_symp(&positives, &projected.shared)?,
            sim_pers(&skeleton.personality, &candidate.personality),
        );
        if meets_thresholds(&score, config) {
            ranked.push(RankedCandidate { candidate_id: candidate.id.clone(), score });
        }
    }
    ranked.sort_by(|x, y| {
        y.score
            .sim_total
            .total_cmp(&x.score.sim_total)
            .then(y.score.sim_symp.total_cmp(&x.score.sim_symp))
            .then(x.candidate_id.cmp(&y.candidate_id))
    });
    Ok(UnifiedProfile { skeleton: skeleton.clone(), ranked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testutil::{candidate, skeleton};
    use crate::corpus::{AgeBucket, Gender, PersonalityVector};
    use proptest::prelude::*;

    fn set(labels: &[&str]) -> BTreeSet<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn default_taxonomy_is_valid_and_reversible() {
        let tax = SymptomTaxonomyMap::default();
        assert_eq!(tax.shared_categories().len(), 17);
        assert_eq!(tax.assessment_for("Depressed Mood"), Some("emotion-depressed mood"));
        assert_eq!(tax.social_for("emotion-depressed mood"), Some("Depressed Mood"));
        assert_eq!(tax.assessment_for("Anxious Mood"), None);
        assert!(tax.knows("Anxious Mood"));
        assert!(!tax.knows("Chronic Pain"));
    }

    #[test]
    fn taxonomy_rejects_non_injective_pairs() {
        let mut pairs = BTreeMap::new();
        pairs.insert("A".to_string(), "mental state-fatigue".to_string());
        pairs.insert("B".to_string(), "mental state-fatigue".to_string());
        let err = SymptomTaxonomyMap::from_parts(pairs, BTreeSet::new()).unwrap_err();
        assert!(err.to_string().contains("not injective"));

        let mut bad_target = BTreeMap::new();
        bad_target.insert("A".to_string(), "no-such-attribute".to_string());
        assert!(SymptomTaxonomyMap::from_parts(bad_target, BTreeSet::new()).is_err());
    }

    #[test]
    fn projection_splits_shared_from_unpaired() {
        let tax = SymptomTaxonomyMap::default();
        let projected = tax
            .project(&set(&["Depressed Mood", "Anxious Mood", "Sleep Disturbance"]), true)
            .unwrap();
        assert_eq!(projected.shared, set(&["emotion-depressed mood", "sleep-sleep disturbance"]));
        assert_eq!(projected.unpaired, set(&["Anxious Mood"]));

        let only_unpaired = tax.project(&set(&["Anxious Mood"]), true).unwrap();
        assert!(only_unpaired.shared.is_empty());

        assert!(tax.project(&set(&["Chronic Pain"]), true).is_err());
        let lenient = tax.project(&set(&["Chronic Pain"]), false).unwrap();
        assert_eq!(lenient.unpaired, set(&["Chronic Pain"]));
    }

    #[test]
    fn stage1_merges_only_agreeing_pairs() {
        // c1/a1 share demographics and agree; c2 opposes a1 on fatigue;
        // a2's demographics differ from everyone's.
        let c1 = skeleton("c1", &["mental state-fatigue"], &[]);
        let mut c2 = skeleton("c2", &[], &["mental state-fatigue"]);
        c2.counseling_snippets = vec!["c2 voice".into()];
        let a1 = skeleton("a1", &["mental state-fatigue", "sleep-light sleep"], &[]);
        let mut a2 = skeleton("a2", &[], &[]);
        a2.demographics.age = AgeBucket::From36To50;

        let merged = match_stage1(&[c1.clone(), c2], &[a1.clone(), a2]);
        let ids: Vec<&str> = merged.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["c1+a1"]);
        assert_eq!(merged[0].counseling_snippets, c1.counseling_snippets);
        assert_eq!(merged[0].assessment_snippets, a1.assessment_snippets);
        assert_eq!(merged[0].personality, c1.personality);
        assert_eq!(merged[0].risk, a1.risk);
        assert_eq!(
            merged[0].symptoms.get("sleep-light sleep"),
            Some(crate::corpus::SymptomLabel::Positive)
        );
    }

    #[test]
    fn stage1_matches_exhaustive_mini_oracle() {
        // Brute-force oracle over a 3x3 grid: pair (i, j) matches iff
        // demographics equal and no positive/negative opposition.
        let mut counseling = vec![
            skeleton("c1", &["mental state-fatigue"], &[]),
            skeleton("c2", &[], &["screening-mania"]),
            skeleton("c3", &[], &[]),
        ];
        counseling[2].demographics.gender = Gender::F;
        let mut assessment = vec![
            skeleton("a1", &["screening-mania"], &[]),
            skeleton("a2", &["mental state-fatigue"], &[]),
            skeleton("a3", &[], &[]),
        ];
        assessment[2].demographics.age = AgeBucket::Over50;

        let mut expected = Vec::new();
        for c in &counseling {
            for a in &assessment {
                let demo_ok = c.demographics == a.demographics;
                let conflict = c.symptoms.labels.iter().any(|(attr, l)| {
                    use crate::corpus::SymptomLabel::*;
                    matches!(
                        (l, a.symptoms.get(attr)),
                        (Positive, Some(Negative)) | (Negative, Some(Positive))
                    )
                });
                if demo_ok && !conflict {
                    expected.push(format!("{}+{}", c.id, a.id));
                }
            }
        }
        let merged = match_stage1(&counseling, &assessment);
        let got: Vec<String> = merged.iter().map(|s| s.id.clone()).collect();
        assert_eq!(got, expected);
        // c2 x a1 opposes on mania, c3 and a3 fail demographics.
        assert_eq!(got, vec!["c1+a1", "c1+a2", "c2+a2"]);
    }

    #[test]
    fn prefilter_policy_table() {
        let s = skeleton("s", &[], &[]);
        let mut exact = candidate("exact", &["Depressed Mood"]);
        let mut unknown_gender = candidate("unk", &["Depressed Mood"]);
        unknown_gender.demographics.gender = Gender::Unknown;
        let mut off = candidate("off", &["Depressed Mood"]);
        off.demographics.age = AgeBucket::Over50;
        exact.id = "exact".into();

        let pool = vec![exact, unknown_gender, off];
        let strict = demographic_prefilter(&s.demographics, &pool, UnknownPolicy::Strict);
        assert_eq!(strict.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), vec!["exact"]);
        let lenient = demographic_prefilter(&s.demographics, &pool, UnknownPolicy::Lenient);
        assert_eq!(
            lenient.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
            vec!["exact", "unk"]
        );
    }

    #[test]
    fn pruning_rejects_projection_onto_negatives() {
        let s = skeleton("s", &["mental state-fatigue"], &["suicide-suicide attempt"]);
        assert!(!prune_conflicts(&s, &set(&["suicide-suicide attempt"])));
        assert!(prune_conflicts(&s, &set(&["mental state-fatigue"])));
        assert!(prune_conflicts(&s, &set(&["emotion-depressed mood"])), "not_mentioned passes");
    }

    #[test]
    fn sim_symp_spot_values() {
        let positives = set(&["emotion-depressed mood", "sleep-sleep disturbance"]);
        assert_eq!(sim_symp(&positives, &positives).unwrap(), 1.0);
        let half = set(&["emotion-depressed mood", "screening-mania"]);
        assert_eq!(sim_symp(&positives, &half).unwrap(), 0.5);
        let superset_positives = set(&[
            "emotion-depressed mood",
            "sleep-sleep disturbance",
            "mental state-fatigue",
        ]);
        assert_eq!(
            sim_symp(&superset_positives, &set(&["sleep-sleep disturbance"])).unwrap(),
            1.0
        );
        assert!(sim_symp(&positives, &BTreeSet::new()).is_err());
    }

    #[test]
    fn sim_pers_spot_values() {
        let a = PersonalityVector::new(4, 4, 3, 5, 6);
        assert!((sim_pers(&a, &a) - 1.0).abs() < 1e-15);
        // Proportional vectors are exactly parallel.
        let b = PersonalityVector::new(1, 2, 3, 2, 1);
        let b2 = PersonalityVector::new(2, 4, 6, 4, 2);
        assert!((sim_pers(&b, &b2) - 1.0).abs() < 1e-15);
        // Opposed extremes: dot 17, squared norms 53.
        let lo = PersonalityVector::new(1, 1, 1, 1, 7);
        let hi = PersonalityVector::new(7, 1, 1, 1, 1);
        assert!((sim_pers(&lo, &hi) - 17.0 / 53.0).abs() < 1e-12);
    }

    fn scoring_skeleton() -> PatientSkeleton {
        skeleton(
            "sk",
            &[
                "emotion-depressed mood",
                "sleep-sleep disturbance",
                "mental state-fatigue",
                "suicide-hopelessness",
                "mental state-inattention",
            ],
            &["screening-mania"],
        )
    }

    #[test]
    fn expand_excludes_boundary_and_ranks_survivors() {
        let sk = scoring_skeleton();
        let tax = SymptomTaxonomyMap::default();
        let config = AlignConfig::default();

        // 4 of 5 projected labels positive: sim_symp exactly 0.8, excluded.
        let boundary = candidate(
            "boundary",
            &[
                "Depressed Mood",
                "Sleep Disturbance",
                "Decreased Energy Tiredness Fatigue",
                "Pessimism",
                "Poor Memory",
            ],
        );
        // All projected labels positive: sim_symp 1.0.
        let perfect = candidate("perfect", &["Depressed Mood", "Sleep Disturbance"]);
        // Projects onto the negative mania attribute: pruned.
        let conflicted = candidate("conflicted", &["Drastical Shift In Mood And Energy"]);
        // Social-only labels project to nothing: unscorable, excluded.
        let ghost = candidate("ghost", &["Anxious Mood", "Panic Fear"]);
        // Personality far from the skeleton: sim_pers 17/53, excluded.
        let mut alien = candidate("alien", &["Depressed Mood"]);
        alien.personality = PersonalityVector::new(7, 1, 1, 1, 1);
        let mut sk_alien = sk.clone();
        sk_alien.personality = PersonalityVector::new(1, 1, 1, 1, 7);

        let pool = vec![boundary, perfect, conflicted, ghost, alien];
        let profile = expand_stage2(&sk, &pool, &tax, &config).unwrap();
        assert_eq!(profile.ranked.len(), 1);
        assert_eq!(profile.ranked[0].candidate_id, "perfect");
        assert_eq!(profile.ranked[0].score.sim_symp, 1.0);

        let profile = expand_stage2(&sk_alien, &pool, &tax, &config).unwrap();
        assert!(profile.ranked.iter().all(|r| r.candidate_id != "alien"));
    }

    #[test]
    fn threshold_comparison_is_strict_without_epsilon() {
        let config = AlignConfig::default();
        let at = MatchScore::new(0.8, 1.0);
        assert_eq!(at.sim_symp, 4.0 / 5.0, "0.8 literal equals the 4/5 ratio");
        assert!(!meets_thresholds(&at, &config));
        let above = MatchScore::new(0.8 + 1e-9, 1.0);
        assert!(meets_thresholds(&above, &config));
        let pers_at = MatchScore::new(1.0, 0.8);
        assert!(!meets_thresholds(&pers_at, &config));
    }

    #[test]
    fn ranking_orders_by_total_then_symp_then_id() {
        let sk = scoring_skeleton();
        let tax = SymptomTaxonomyMap::default();
        let config = AlignConfig::default();

        // Two identical-scoring candidates (tie) plus one lower total.
        let tie_b = candidate("u08", &["Depressed Mood", "Sleep Disturbance"]);
        let tie_a = candidate("u07", &["Depressed Mood", "Sleep Disturbance"]);
        let lower = candidate(
            "u01",
            &[
                "Depressed Mood",
                "Sleep Disturbance",
                "Decreased Energy Tiredness Fatigue",
                "Pessimism",
                "Poor Memory",
                "Inattention",
            ],
        ); // 5 of 6 positive: sim_symp 5/6.
        let profile = expand_stage2(&sk, &[tie_b, lower, tie_a], &tax, &config).unwrap();
        let order: Vec<&str> = profile.ranked.iter().map(|r| r.candidate_id.as_str()).collect();
        assert_eq!(order, vec!["u07", "u08", "u01"]);
        assert!(profile.ranked[0].score.sim_total > profile.ranked[2].score.sim_total);
    }

    #[test]
    fn empty_prefilter_yields_empty_profile() {
        let mut sk = scoring_skeleton();
        sk.demographics.age = AgeBucket::Under18;
        let pool = vec![candidate("u1", &["Depressed Mood"])];
        let profile =
            expand_stage2(&sk, &pool, &SymptomTaxonomyMap::default(), &AlignConfig::default())
                .unwrap();
        assert!(profile.ranked.is_empty());
    }

    #[test]
    fn profile_record_carries_thresholds_and_policy() {
        let sk = scoring_skeleton();
        let profile = expand_stage2(
            &sk,
            &[candidate("u1", &["Depressed Mood"])],
            &SymptomTaxonomyMap::default(),
            &AlignConfig::default(),
        )
        .unwrap();
        let record = profile.to_record(&AlignConfig::default());
        let json = serde_json::to_value(&record).unwrap();
        assert_eq!(json["skeleton_id"], "sk");
        assert_eq!(json["thresholds"]["sim_symp"], 0.8);
        assert_eq!(json["policy_flags"]["unknown_policy"], "strict");
        assert_eq!(json["candidates"][0]["sim_total"], 2.0);
    }

    proptest! {
        #[test]
        fn sim_symp_is_a_ratio_in_unit_range(
            pos_idx in proptest::collection::btree_set(0usize..17, 0..17),
            cand_idx in proptest::collection::btree_set(0usize..17, 1..17),
        ) {
            let shared: Vec<String> = PAIRED_SOCIAL_ATTRIBUTES
                .iter()
                .map(|(_, a)| a.to_string())
                .collect();
            let positives: BTreeSet<String> =
                pos_idx.iter().map(|i| shared[*i].clone()).collect();
            let cand: BTreeSet<String> =
                cand_idx.iter().map(|i| shared[*i].clone()).collect();
            let s = sim_symp(&positives, &cand).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            let subset = cand.is_subset(&positives);
            prop_assert_eq!(s == 1.0, subset);
        }

        #[test]
        fn sim_pers_is_symmetric_and_positive(
            a in proptest::array::uniform5(1u8..=7),
            b in proptest::array::uniform5(1u8..=7),
        ) {
            let va = PersonalityVector::new(a[0], a[1], a[2], a[3], a[4]);
            let vb = PersonalityVector::new(b[0], b[1], b[2], b[3], b[4]);
            let ab = sim_pers(&va, &vb);
            let ba = sim_pers(&vb, &va);
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!(ab > 0.0 && ab <= 1.0 + 1e-15);
        }

        #[test]
        fn removing_a_non_survivor_never_changes_the_ranking(
            drop_idx in 0usize..5,
        ) {
            let sk = scoring_skeleton();
            let tax = SymptomTaxonomyMap::default();
            let config = AlignConfig::default();
            let pool = vec![
                candidate("u1", &["Depressed Mood", "Sleep Disturbance"]),
                candidate("u2", &["Anxious Mood"]),
                candidate("u3", &["Drastical Shift In Mood And Energy"]),
                candidate("u4", &["Pessimism"]),
                candidate("u5", &["Depressed Mood", "Poor Memory"]),
            ];
            let full = expand_stage2(&sk, &pool, &tax, &config).unwrap();
            let survivors: BTreeSet<String> =
                full.ranked.iter().map(|r| r.candidate_id.clone()).collect();
            let dropped = pool[drop_idx].id.clone();
            prop_assume!(!survivors.contains(&dropped));
            let reduced: Vec<_> =
                pool.into_iter().enumerate().filter(|(i, _)| *i != drop_idx).map(|(_, c)| c).collect();
            let again = expand_stage2(&sk, &reduced, &tax, &config).unwrap();
            prop_assert_eq!(full.ranked, again.ranked);
        }
    }
}
