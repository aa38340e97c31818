//! Modular system-prompt assembly: seven components (B, R, P, S, A, C, T)
//! rendered by deterministic template fill from a unified profile and its
//! memory cards, concatenated in a fixed order.
//!
//! The tag-set argument realizes every ablation variant: `basic` is
//! {B, R, P}, `full` enables everything, and so on; see [`ABLATIONS`].

pub mod interview;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::align::SymptomTaxonomyMap;
use crate::coc::{CandidateMemory, GraphNode, NodeKind};
use crate::corpus::{PatientSkeleton, PersonalityVector};
use crate::error::{Error, Result};

/// Discretized Big Five level: Low iff score <= 2, Medium iff 2 < score <= 5,
/// High iff score > 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OceanLevel {
    Low,
    Medium,
    High,
}

impl fmt::Display for OceanLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OceanLevel::Low => "Low",
            OceanLevel::Medium => "Medium",
            OceanLevel::High => "High",
        })
    }
}

pub fn discretize(score: u8) -> OceanLevel {
    if score <= 2 {
        OceanLevel::Low
    } else if score <= 5 {
        OceanLevel::Medium
    } else {
        OceanLevel::High
    }
}

/// Each trait paired with its level, in O-C-E-A-N order.
pub fn discretize_ocean(personality: &PersonalityVector) -> [(&'static str, OceanLevel); 5] {
    personality.traits().map(|(name, score)| (name, discretize(score)))
}

/// Prompt components in their fixed concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentTag {
    B,
    R,
    P,
    S,
    A,
    C,
    T,
}

pub const ALL_TAGS: [ComponentTag; 7] = [
    ComponentTag::B,
    ComponentTag::R,
    ComponentTag::P,
    ComponentTag::S,
    ComponentTag::A,
    ComponentTag::C,
    ComponentTag::T,
];

impl fmt::Display for ComponentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentTag::B => "B",
            ComponentTag::R => "R",
            ComponentTag::P => "P",
            ComponentTag::S => "S",
            ComponentTag::A => "A",
            ComponentTag::C => "C",
            ComponentTag::T => "T",
        })
    }
}

impl std::str::FromStr for ComponentTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "B" => Ok(ComponentTag::B),
            "R" => Ok(ComponentTag::R),
            "P" => Ok(ComponentTag::P),
            "S" => Ok(ComponentTag::S),
            "A" => Ok(ComponentTag::A),
            "C" => Ok(ComponentTag::C),
            "T" => Ok(ComponentTag::T),
            other => Err(Error::Config(format!("unknown prompt component tag {other:?}"))),
        }
    }
}

/// Parses a comma-separated tag list such as `"B,R,P,S,T"`.
pub fn parse_tags(spec: &str) -> Result<BTreeSet<ComponentTag>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Named ablation variants and the tag sets that realize them.
pub const ABLATIONS: [(&str, &[ComponentTag]); 6] = [
    ("basic", &[ComponentTag::B, ComponentTag::R, ComponentTag::P]),
    ("basic_t", &[ComponentTag::B, ComponentTag::R, ComponentTag::P, ComponentTag::T]),
    ("basic_s", &[ComponentTag::B, ComponentTag::R, ComponentTag::P, ComponentTag::S]),
    (
        "basic_st",
        &[ComponentTag::B, ComponentTag::R, ComponentTag::P, ComponentTag::S, ComponentTag::T],
    ),
    (
        "full_wo_t",
        &[
            ComponentTag::B,
            ComponentTag::R,
            ComponentTag::P,
            ComponentTag::S,
            ComponentTag::A,
            ComponentTag::C,
        ],
    ),
    ("full", &ALL_TAGS),
];

pub fn ablation_tags(name: &str) -> Option<BTreeSet<ComponentTag>> {
    ABLATIONS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, tags)| tags.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptComponent {
    pub tag: ComponentTag,
    pub text: String,
}

/// Everything a component render may draw on. `memory` is the selected
/// candidate's timeline memory; components degrade gracefully without it.
#[derive(Clone, Copy)]
pub struct PromptInputs<'a> {
    pub skeleton: &'a PatientSkeleton,
    pub memory: Option<&'a CandidateMemory>,
    pub taxonomy: &'a SymptomTaxonomyMap,
    /// How many style snippets components A and C quote (first k, no sampling).
    pub snippet_count: usize,
    /// Card budget for component T, most recent first; `None` keeps all.
    pub max_cards: Option<usize>,
}

const B_TEMPLATE: &str = "Use ONLY the following demographic profile:\n\
Age: <AGE>\n\
Gender: <GENDER>\n\
Employment status: <WORK_STATUS>\n\
Marital status: <MARITAL_STATUS>";

const R_TEMPLATE: &str = "You currently have <DEPRESSION_RISK_LEVEL> risk of depression.\n\
You currently have <SUICIDE_RISK_LEVEL> risk of suicide.\n\
\n\
Although you may have some symptoms and negative life events, you must stay consistent with \
the specified depression severity and suicide risk. If you are asked to fill in any scale, \
answer according to the condition described here.";

const P_HEADER: &str = "Follow the Big Five personality instructions below. Make decisions and \
speak in this style throughout the conversation, but do NOT explicitly mention psychological \
trait terms.";

/// Per-trait instructions indexed Low, Medium, High; O-C-E-A-N order.
const TRAIT_INSTRUCTIONS: [(&str, [&str; 3]); 5] = [
    (
        "Openness",
        [
            "Be traditional; focus on established facts; avoid abstract/vague ideas.",
            "Balance pragmatism and innovation.",
            "Be imaginative; use metaphors; embrace novelty and abstraction.",
        ],
    ),
    (
        "Conscientiousness",
        [
            "Be casual and unstructured; may appear procrastinating.",
            "Be reliable and organized, with flexibility when appropriate.",
            "Be highly disciplined and detail-oriented.",
        ],
    ),
    (
        "Extraversion",
        [
            "Be reserved; answer briefly; avoid initiating topics.",
            "Communicate smoothly without dominating.",
            "Be enthusiastic and energetic; actively lead the conversation.",
        ],
    ),
    (
        "Agreeableness",
        [
            "Be blunt; focus on facts; be skeptical/critical.",
            "Be friendly but with boundaries.",
            "Be gentle and accommodating; avoid conflicts.",
        ],
    ),
    (
        "Neuroticism",
        [
            "Be unshakably calm and emotionally stable.",
            "Show normal emotional reactivity and recovery.",
            "Show anxiety and mood swings; worry easily.",
        ],
    ),
];

const S_TEMPLATE: &str = "Below are the patient's positive symptom attributes. Some positive \
attributes are associated with timeline time points; when asked about these attributes, mention \
the time points explicitly.\n\
\n\
<POSITIVE_ATTRIBUTE_DESCRIPTIONS_WITH_OPTIONAL_TIMELINE>\n\
\n\
Other symptom timeline information (if available):\n\
<EXTRA_TIMELINE_SNIPPETS>\n\
\n\
Below are descriptions of the patient's normal conditions. If you are asked about any of these \
symptoms/attributes, you must deny them.\n\
\n\
<NEGATIVE_ATTRIBUTE_DESCRIPTIONS>";

const A_TEMPLATE: &str = "Assessment-style reference (style only): Use the following diagnostic \
interview snippets only to imitate answering style (brief answers, vague frequency/severity, \
more details only when probed).\n\
\n\
<ASSESSMENT_DIALOGUE_SNIPPETS>";

const C_TEMPLATE: &str = "Counseling-style reference (style only): Use the following counseling \
snippets only to imitate interaction style (tone, hesitation, avoidance, emotional expression).\n\
\n\
<COUNSELING_DIALOGUE_SNIPPETS>";

const T_TEMPLATE: &str = "Use the Life-Event Timeline Cards below to describe changes in mood \
and functioning.\n\
Rules:\n\
1) Only use events/impacts that appear in the cards; do not invent details.\n\
2) Include the time expression from the card when mentioning an event/impact.\n\
3) Only claim causality if both the event and the change are supported by the cards.\n\
4) Cite at most 1-2 cards per answer; avoid list-like narration.\n\
\n\
<LIFE_EVENT_CARDS>";

const PLACEHOLDERS: [&str; 12] = [
    "<AGE>",
    "<GENDER>",
    "<WORK_STATUS>",
    "<MARITAL_STATUS>",
    "<DEPRESSION_RISK_LEVEL>",
    "<SUICIDE_RISK_LEVEL>",
    "<POSITIVE_ATTRIBUTE_DESCRIPTIONS_WITH_OPTIONAL_TIMELINE>",
    "<EXTRA_TIMELINE_SNIPPETS>",
    "<NEGATIVE_ATTRIBUTE_DESCRIPTIONS>",
    "<ASSESSMENT_DIALOGUE_SNIPPETS>",
    "<COUNSELING_DIALOGUE_SNIPPETS>",
    "<LIFE_EVENT_CARDS>",
];

const EMPTY_SECTION: &str = "(none)";

fn bullet_list(lines: &[String]) -> String {
    if lines.is_empty() {
        EMPTY_SECTION.to_string()
    } else {
        lines.join("\n")
    }
}

fn snippet_section(snippets: &[String], count: usize) -> String {
    bullet_list(
        &snippets.iter().take(count).map(|s| format!("- {s}")).collect::<Vec<_>>(),
    )
}

fn render_b(inputs: &PromptInputs<'_>) -> String {
    let d = &inputs.skeleton.demographics;
    B_TEMPLATE
        .replace("<AGE>", &d.age.to_string())
        .replace("<GENDER>", &d.gender.to_string())
        .replace("<WORK_STATUS>", &d.employment.to_string())
        .replace("<MARITAL_STATUS>", &d.marital.to_string())
}

fn render_r(inputs: &PromptInputs<'_>) -> String {
    let risk = &inputs.skeleton.risk;
    R_TEMPLATE
        .replace("<DEPRESSION_RISK_LEVEL>", &format!("level {}", risk.depression))
        .replace("<SUICIDE_RISK_LEVEL>", &format!("level {}", risk.suicide))
}

fn render_p(inputs: &PromptInputs<'_>) -> String {
    let levels = discretize_ocean(&inputs.skeleton.personality);
    let mut blocks = vec![P_HEADER.to_string()];
    for ((name, instructions), (_, level)) in TRAIT_INSTRUCTIONS.iter().zip(levels) {
        let instruction = instructions[level as usize];
        blocks.push(format!("{name}:\n- {level}: {instruction}"));
    }
    blocks.join("\n\n")
}

/// Symptom nodes of the memory graph keyed by the checklist attribute they
/// project to; nodes that project to no positive attribute are returned
/// separately as extra timeline material.
fn symptom_nodes_by_attribute<'a>(
    inputs: &PromptInputs<'a>,
    positives: &BTreeSet<String>,
) -> (BTreeMap<String, Vec<&'a GraphNode>>, Vec<&'a GraphNode>) {
    let mut by_attribute: BTreeMap<String, Vec<&GraphNode>> = BTreeMap::new();
    let mut extra = Vec::new();
    if let Some(memory) = inputs.memory {
        for node in memory.graph.nodes.iter().filter(|n| n.kind == NodeKind::Symptom) {
            match inputs.taxonomy.assessment_for(&node.label) {
                Some(attr) if positives.contains(attr) => {
                    by_attribute.entry(attr.to_string()).or_default().push(node);
                }
                _ => extra.push(node),
            }
        }
    }
    (by_attribute, extra)
}

fn render_s(inputs: &PromptInputs<'_>) -> String {
    let positives = inputs.skeleton.symptoms.positives();
    let negatives = inputs.skeleton.symptoms.negatives();
    let (by_attribute, extra) = symptom_nodes_by_attribute(inputs, &positives);

    let positive_lines: Vec<String> = positives
        .iter()
        .map(|attr| match by_attribute.get(attr) {
            Some(nodes) => {
                let mut labels: Vec<&str> = Vec::new();
                for node in nodes {
                    if !labels.contains(&node.time_norm.relative_label.as_str()) {
                        labels.push(&node.time_norm.relative_label);
                    }
                }
                format!("- {attr} (timeline: {})", labels.join(", "))
            }
            None => format!("- {attr}"),
        })
        .collect();

    let extra_lines: Vec<String> = extra
        .iter()
        .map(|node| {
            format!(
                "- \"{}\" ({}): {}",
                node.label, node.time_norm.relative_label, node.evidence
            )
        })
        .collect();

    let negative_lines: Vec<String> =
        negatives.iter().map(|attr| format!("- {attr}")).collect();

    S_TEMPLATE
        .replace(
            "<POSITIVE_ATTRIBUTE_DESCRIPTIONS_WITH_OPTIONAL_TIMELINE>",
            &bullet_list(&positive_lines),
        )
        .replace("<EXTRA_TIMELINE_SNIPPETS>", &bullet_list(&extra_lines))
        .replace("<NEGATIVE_ATTRIBUTE_DESCRIPTIONS>", &bullet_list(&negative_lines))
}

fn render_t(inputs: &PromptInputs<'_>) -> String {
    let card_lines: Vec<String> = match inputs.memory {
        None => Vec::new(),
        Some(memory) => {
            // Cards are stored most recent episode first, so a budget keeps
            // the most recent ones.
            let budget = inputs.max_cards.unwrap_or(usize::MAX);
            memory
                .cards
                .iter()
                .take(budget)
                .map(|card| format!("- ({}) {}", card.time_range, card.card_text))
                .collect()
        }
    };
    T_TEMPLATE.replace("<LIFE_EVENT_CARDS>", &bullet_list(&card_lines))
}

pub fn render_component(tag: ComponentTag, inputs: &PromptInputs<'_>) -> Result<PromptComponent> {
    let text = match tag {
        ComponentTag::B => render_b(inputs),
        ComponentTag::R => render_r(inputs),
        ComponentTag::P => render_p(inputs),
        ComponentTag::S => render_s(inputs),
        ComponentTag::A => A_TEMPLATE.replace(
            "<ASSESSMENT_DIALOGUE_SNIPPETS>",
            &snippet_section(&inputs.skeleton.assessment_snippets, inputs.snippet_count),
        ),
        ComponentTag::C => C_TEMPLATE.replace(
            "<COUNSELING_DIALOGUE_SNIPPETS>",
            &snippet_section(&inputs.skeleton.counseling_snippets, inputs.snippet_count),
        ),
        ComponentTag::T => render_t(inputs),
    };
    if let Some(stray) = PLACEHOLDERS.iter().find(|p| text.contains(**p)) {
        return Err(Error::invalid(format!(
            "component {tag} left placeholder {stray} unsubstituted"
        )));
    }
    Ok(PromptComponent { tag, text })
}

/// Concatenates the enabled components in fixed B, R, P, S, A, C, T order,
/// separated by blank lines.
pub fn assemble_prompt(
    inputs: &PromptInputs<'_>,
    enabled_tags: &BTreeSet<ComponentTag>,
) -> Result<String> {
    if enabled_tags.is_empty() {
        return Err(Error::invalid("prompt assembly needs at least one component tag"));
    }
    let blocks: Vec<String> = ALL_TAGS
        .iter()
        .filter(|tag| enabled_tags.contains(tag))
        .map(|tag| render_component(*tag, inputs).map(|c| c.text))
        .collect::<Result<_>>()?;
    Ok(blocks.join("\n\n"))
}
