//! Closed vocabularies shared by every module: the assessment-side symptom
//! attribute checklist and the social-media symptom label set.
//!
//! These lists are the wire contract for checklists and candidate symptom
//! sets; validation compares against them byte-for-byte after
//! [`normalize_attribute`].

/// Canonical assessment-interview symptom attributes. Checklists must carry
/// exactly this key set. Names are `{group}-{attribute}`, lowercase ASCII.
pub const ASSESSMENT_ATTRIBUTES: &[&str] = &[
    "sleep-light sleep",
    "sleep-difficulty falling asleep",
    "sleep-frequent dreaming",
    "sleep-early awakening",
    "sleep-sleep disturbance",
    "sleep-reduced sleep duration",
    "appetite-binge eating",
    "appetite-significant weight change",
    "appetite-loss of appetite",
    "appetite-appetite disturbance",
    "suicide-hopelessness",
    "suicide-suicidal ideation",
    "suicide-low self-worth",
    "suicide-self-blame",
    "suicide-self-harm tendency",
    "suicide-suicide attempt",
    "screening-mania",
    "screening-family history",
    "somatic-somatic discomfort",
    "somatic-psychomotor agitation",
    "somatic-psychomotor retardation",
    "emotion-depressed mood",
    "emotion-depressed mood over two weeks",
    "emotion-diurnal variation",
    "interest-loss of interest",
    "interest-scope all activities",
    "interest-emotional blunting",
    "interest-cause",
    "interest-loss of interest over two weeks",
    "interest-scope past hobbies",
    "social functioning-difficulty in daily life",
    "social functioning-difficulty in study or work",
    "social functioning-avoid social contact",
    "social functioning-avoid support from family or friends",
    "mental state-fatigue",
    "mental state-memory decline",
    "mental state-lack of confidence",
    "mental state-indecisiveness",
    "mental state-inattention",
];

/// Social-media symptom labels that pair 1:1 with an assessment attribute.
/// The pairing is the default [`crate::align::SymptomTaxonomyMap`].
pub const PAIRED_SOCIAL_ATTRIBUTES: &[(&str, &str)] = &[
    ("Decreased Energy Tiredness Fatigue", "mental state-fatigue"),
    ("Depressed Mood", "emotion-depressed mood"),
    ("Inattention", "mental state-inattention"),
    ("Indecisiveness", "mental state-indecisiveness"),
    ("Suicidal Ideas", "suicide-suicidal ideation"),
    ("Worthlessness And Guilty", "suicide-low self-worth"),
    ("Diminished Emotional Expression", "interest-emotional blunting"),
    ("Drastical Shift In Mood And Energy", "screening-mania"),
    ("Loss Of Interest Or Motivation", "interest-loss of interest"),
    ("Pessimism", "suicide-hopelessness"),
    ("Poor Memory", "mental state-memory decline"),
    ("Sleep Disturbance", "sleep-sleep disturbance"),
    ("Hyperactivity Agitation", "somatic-psychomotor agitation"),
    ("Catatonic Behavior", "somatic-psychomotor retardation"),
    ("Fear About Social Situations", "social functioning-avoid social contact"),
    ("Weight And Appetite Change", "appetite-appetite disturbance"),
    ("Fear Of Gaining Weight", "appetite-significant weight change"),
];

/// Social-media symptom labels with no assessment counterpart. They are
/// legal in candidate symptom sets but never enter the shared category
/// space, so they can neither score nor conflict.
pub const SOCIAL_ONLY_ATTRIBUTES: &[&str] = &[
    "Anxious Mood",
    "Autonomic Symptoms",
    "Cardiovascular Symptoms",
    "Gastrointestinal Symptoms",
    "Genitourinary Symptoms",
    "Respiratory Symptoms",
    "Impulsivity",
    "Avoidance Of Stimuli",
    "Compensatory Behaviors To Prevent Weight Gain",
    "Compulsions",
    "Fears Of Being Negatively Evaluated",
    "Flight Of Ideas",
    "Intrusion Symptoms",
    "More Talktive",
    "Obsession",
    "Obsessions",
    "Panic Fear",
    "Do Things Easily Get Painful Consequences",
    "Anger Irritability",
];

/// Normalizes a checklist key before membership checks: trim, lowercase
/// ASCII, collapse internal whitespace runs to single spaces.
pub fn normalize_attribute(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut last_space = false;
    for ch in raw.trim().chars() {
        if ch.is_whitespace() {
            if !last_space {
                out.push(' ');
            }
            last_space = true;
        } else {
            out.push(ch.to_ascii_lowercase());
            last_space = false;
        }
    }
    out
}

/// True iff `label` is a known social-media symptom label (paired or
/// social-only). Comparison is exact; social labels are Title Case in the
/// upstream taxonomy and are not case-folded.
pub fn is_social_label(label: &str) -> bool {
    PAIRED_SOCIAL_ATTRIBUTES.iter().any(|(s, _)| *s == label)
        || SOCIAL_ONLY_ATTRIBUTES.contains(&label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn attribute_list_has_no_duplicates_and_is_normalized() {
        let set: BTreeSet<&str> = ASSESSMENT_ATTRIBUTES.iter().copied().collect();
        assert_eq!(set.len(), ASSESSMENT_ATTRIBUTES.len());
        for name in ASSESSMENT_ATTRIBUTES {
            assert_eq!(normalize_attribute(name), *name, "{name} not canonical");
        }
    }

    #[test]
    fn group_sizes_match_the_source_checklist() {
        let count = |prefix: &str| {
            ASSESSMENT_ATTRIBUTES
                .iter()
                .filter(|a| a.starts_with(prefix))
                .count()
        };
        assert_eq!(count("sleep-"), 6);
        assert_eq!(count("appetite-"), 4);
        assert_eq!(count("suicide-"), 6);
        assert_eq!(count("screening-"), 2);
        assert_eq!(count("somatic-"), 3);
        assert_eq!(count("emotion-"), 3);
        assert_eq!(count("interest-"), 6);
        assert_eq!(count("social functioning-"), 4);
        assert_eq!(count("mental state-"), 5);
        assert_eq!(ASSESSMENT_ATTRIBUTES.len(), 6 + 4 + 6 + 2 + 3 + 3 + 6 + 4 + 5);
    }

    #[test]
    fn pairing_targets_are_assessment_attributes_and_injective() {
        let mut targets = BTreeSet::new();
        for (social, assessment) in PAIRED_SOCIAL_ATTRIBUTES {
            assert!(
                ASSESSMENT_ATTRIBUTES.contains(assessment),
                "{assessment} missing from checklist"
            );
            assert!(targets.insert(*assessment), "{assessment} mapped twice");
            assert!(!SOCIAL_ONLY_ATTRIBUTES.contains(social));
        }
        assert_eq!(PAIRED_SOCIAL_ATTRIBUTES.len(), 17);
        assert_eq!(SOCIAL_ONLY_ATTRIBUTES.len(), 19);
    }

    #[test]
    fn normalization_is_idempotent_and_folds_case_and_whitespace() {
        assert_eq!(normalize_attribute("  Sleep-Light   Sleep "), "sleep-light sleep");
        assert_eq!(normalize_attribute("mental state-fatigue"), "mental state-fatigue");
        let once = normalize_attribute("SCREENING-MANIA");
        assert_eq!(normalize_attribute(&once), once);
    }
}
