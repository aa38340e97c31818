//! Chain-of-Change agent: converts a candidate's dated timelines into a
//! temporal knowledge graph, buckets nodes into episodes, and renders
//! deterministic memory cards for prompt assembly.
//!
//! Day arithmetic is anchored at the most recent retained item (or an
//! explicit anchor); `days_ago = anchor - day`, and the retention window is
//! half-open at the old end: `anchor - horizon < day <= anchor`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{SocialCandidate, TimelineItem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocConfig {
    /// Anchor day; `None` resolves to the latest day across both timelines.
    pub anchor_day: Option<i64>,
    /// Retention horizon H in days.
    #[serde(default = "default_horizon_days")]
    pub horizon_days: i64,
    /// Episode bucket width W in days.
    #[serde(default = "default_window_days")]
    pub window_days: i64,
    /// When false the extraction pass is skipped and all triples stay absent.
    #[serde(default)]
    pub extraction_enabled: bool,
    /// Materialize the full transitive closure of the temporal order
    /// instead of the reduction chain.
    #[serde(default)]
    pub transitive_closure: bool,
}

fn default_horizon_days() -> i64 {
    90
}

fn default_window_days() -> i64 {
    7
}

impl Default for CocConfig {
    fn default() -> Self {
        CocConfig {
            anchor_day: None,
            horizon_days: 90,
            window_days: 7,
            extraction_enabled: false,
            transitive_closure: false,
        }
    }
}

impl CocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_days < 1 {
            return Err(Error::invalid(format!("horizon_days {} must be >= 1", self.horizon_days)));
        }
        if self.window_days < 1 {
            return Err(Error::invalid(format!("window_days {} must be >= 1", self.window_days)));
        }
        Ok(())
    }
}

/// Normalized time point: day offset from the anchor plus its rendered
/// relative expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeNorm {
    pub days_ago: i64,
    pub relative_label: String,
}

fn unit_phrase(n: i64, unit: &str) -> String {
    if n == 1 {
        format!("1 {unit} ago")
    } else {
        format!("{n} {unit}s ago")
    }
}

/// Renders a non-negative day offset as a relative expression:
/// 0 "today"; 1 "yesterday"; 2-6 "N days ago"; 7-27 "N weeks ago";
/// 28-364 "N months ago" (floor days/30, minimum 1); 365+ "N years ago".
pub fn relative_label(days_ago: i64) -> String {
    assert!(days_ago >= 0, "days_ago must be non-negative");
    match days_ago {
        0 => "today".to_string(),
        1 => "yesterday".to_string(),
        2..=6 => format!("{days_ago} days ago"),
        7..=27 => unit_phrase(days_ago / 7, "week"),
        28..=364 => unit_phrase((days_ago / 30).max(1), "month"),
        _ => unit_phrase(days_ago / 365, "year"),
    }
}

/// Normalizes an absolute day against the anchor. Days after the anchor
/// are invalid.
pub fn time_normalize(day: i64, anchor_day: i64) -> Result<TimeNorm> {
    if day > anchor_day {
        return Err(Error::invalid(format!("day {day} is after the anchor {anchor_day}")));
    }
    let days_ago = anchor_day - day;
    Ok(TimeNorm { days_ago, relative_label: relative_label(days_ago) })
}

/// Keeps items with `anchor - horizon < day <= anchor`, sorted by day
/// ascending; input order breaks ties (stable).
pub fn retain_horizon(items: &[TimelineItem], anchor_day: i64, horizon_days: i64) -> Vec<TimelineItem> {
    let mut kept: Vec<TimelineItem> = items
        .iter()
        .filter(|i| i.day > anchor_day - horizon_days && i.day <= anchor_day)
        .cloned()
        .collect();
    kept.sort_by_key(|i| i.day);
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Symptom,
    LifeEvent,
}

/// Structured content extracted from one node's evidence text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeTriple {
    Symptom {
        subject: String,
        experience: String,
        severity_frequency: String,
    },
    Event {
        actor: String,
        action: String,
        impact: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleExtraction {
    pub triple: NodeTriple,
    pub summary: Option<String>,
}

/// Structured-extraction backend. Implementations live in the gateway
/// module; `Ok(None)` means the extractor declined this node.
pub trait TripleExtractor: Send + Sync {
    fn extract(&self, kind: NodeKind, label: &str, text: &str) -> Result<Option<TripleExtraction>>;
}

/// Enriches one node. Transport failures degrade to `None` with a warning
/// so a flaky extractor can never drop a node.
pub fn extract_triple(
    kind: NodeKind,
    label: &str,
    text: &str,
    extractor: &dyn TripleExtractor,
) -> Option<TripleExtraction> {
    match extractor.extract(kind, label, text) {
        Ok(result) => result,
        Err(e) => {
            log::warn!("triple extraction failed for {label:?}: {e}");
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    /// Raw source text the node was built from.
    pub evidence: String,
    pub time_norm: TimeNorm,
    pub timestamp_day: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple: Option<NodeTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    TemporalPrecedes,
    Persists,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub relation: Relation,
}

/// Nodes are stored in global temporal order: day ascending, same-day
/// symptoms before events, input order within a stream. Every edge points
/// from an earlier node to a strictly later position, so the graph is
/// acyclic by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TemporalGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
}

/// Builds the graph from horizon-filtered items. Preconditions: every item
/// day is within `(anchor - horizon, anchor]`.
pub fn build_graph(
    symptom_items: &[TimelineItem],
    event_items: &[TimelineItem],
    anchor_day: i64,
    config: &CocConfig,
) -> Result<TemporalGraph> {
    config.validate()?;
    let mut staged: Vec<(NodeKind, &TimelineItem)> = Vec::new();
    staged.extend(symptom_items.iter().map(|i| (NodeKind::Symptom, i)));
    staged.extend(event_items.iter().map(|i| (NodeKind::LifeEvent, i)));
    // Stable sort: day ascending, symptoms before events on the same day,
    // original stream order otherwise.
    staged.sort_by_key(|(kind, item)| (item.day, matches!(kind, NodeKind::LifeEvent) as u8));

    let mut nodes = Vec::with_capacity(staged.len());
    for (idx, (kind, item)) in staged.iter().enumerate() {
        let time_norm = time_normalize(item.day, anchor_day)?;
        nodes.push(GraphNode {
            id: format!("n{idx}"),
            kind: *kind,
            label: item.label.clone(),
            evidence: item.text.clone(),
            time_norm,
            timestamp_day: item.day,
            triple: None,
            summary: None,
        });
    }

    let mut edges = Vec::new();
    if config.transitive_closure {
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                edges.push(Edge {
                    from: nodes[i].id.clone(),
                    to: nodes[j].id.clone(),
                    relation: Relation::TemporalPrecedes,
                });
            }
        }
    } else {
        for pair in nodes.windows(2) {
            edges.push(Edge {
                from: pair[0].id.clone(),
                to: pair[1].id.clone(),
                relation: Relation::TemporalPrecedes,
            });
        }
    }

    // Persistence: consecutive occurrences of the same symptom label.
    let mut last_seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut persists = Vec::new();
    for (idx, node) in nodes.iter().enumerate() {
        if node.kind != NodeKind::Symptom {
            continue;
        }
        if let Some(prev) = last_seen.insert(node.label.as_str(), idx) {
            persists.push(Edge {
                from: nodes[prev].id.clone(),
                to: nodes[idx].id.clone(),
                relation: Relation::Persists,
            });
        }
    }
    edges.extend(persists);

    Ok(TemporalGraph { nodes, edges })
}

/// One episode: the nodes whose `days_ago` falls in bucket
/// `floor(days_ago / W)`. `time_range` is the member min/max of `days_ago`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: i64,
    /// Node ids in graph (chronological) order.
    pub members: Vec<String>,
    pub time_range: (i64, i64),
}

/// Buckets graph nodes into episodes, returned in ascending bucket order
/// (most recent episode first). Empty buckets are not materialized.
pub fn aggregate_episodes(graph: &TemporalGraph, config: &CocConfig) -> Result<Vec<Episode>> {
    config.validate()?;
    let mut buckets: BTreeMap<i64, Vec<&GraphNode>> = BTreeMap::new();
    for node in &graph.nodes {
        buckets.entry(node.time_norm.days_ago / config.window_days).or_default().push(node);
    }
    Ok(buckets
        .into_iter()
        .map(|(episode_id, members)| {
            let min = members.iter().map(|n| n.time_norm.days_ago).min().expect("non-empty");
            let max = members.iter().map(|n| n.time_norm.days_ago).max().expect("non-empty");
            Episode {
                episode_id,
                members: members.iter().map(|n| n.id.clone()).collect(),
                time_range: (min, max),
            }
        })
        .collect())
}

/// Memory card: the episode's time range plus rendered salient content.
/// The text field serializes as `card_cn` for bit-compatibility with the
/// upstream card files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryCard {
    pub episode_id: i64,
    pub time_range: String,
    #[serde(rename = "card_cn")]
    pub card_text: String,
}

fn format_days_span(lo: i64, hi: i64) -> String {
    if lo == hi {
        if lo == 1 {
            "1 day ago".to_string()
        } else {
            format!("{lo} days ago")
        }
    } else {
        format!("{lo}-{hi} days ago")
    }
}

fn node_phrase(node: &GraphNode) -> String {
    let mut part = format!(
        "\"{}\" at {} ({})",
        node.label, node.time_norm.relative_label, node.time_norm.days_ago
    );
    if let Some(triple) = &node.triple {
        let (a, b, c) = match triple {
            NodeTriple::Symptom { subject, experience, severity_frequency } => {
                (subject, experience, severity_frequency)
            }
            NodeTriple::Event { actor, action, impact } => (actor, action, impact),
        };
        part.push_str(&format!(" [{a}; {b}; {c}]"));
    }
    if let Some(summary) = &node.summary {
        part.push_str(&format!(" ({summary})"));
    }
    part
}

/// Renders one card per non-empty episode. The representative time point
/// is the episode's most recent node (smallest `days_ago`; the latest node
/// in graph order breaks ties). Card text interpolates only node labels,
/// triples/summaries, and normalized time points.
pub fn render_cards(episodes: &[Episode], graph: &TemporalGraph) -> Result<Vec<MemoryCard>> {
    let by_id: BTreeMap<&str, &GraphNode> =
        graph.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let mut cards = Vec::new();
    for episode in episodes {
        if episode.members.is_empty() {
            continue;
        }
        let members: Vec<&GraphNode> = episode
            .members
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("episode references unknown node {id}")))
            })
            .collect::<Result<_>>()?;
        let min_days = members.iter().map(|n| n.time_norm.days_ago).min().expect("non-empty");
        let representative = members
            .iter()
            .rfind(|n| n.time_norm.days_ago == min_days)
            .expect("non-empty");

        let phrase_list = |kind: NodeKind| -> String {
            let parts: Vec<String> = members
                .iter()
                .filter(|n| n.kind == kind)
                .map(|n| node_phrase(n))
                .collect();
            if parts.is_empty() {
                "none".to_string()
            } else {
                parts.join("; ")
            }
        };

        let card_text = format!(
            "Representative time: {} ({}). Symptoms: {}. Life events: {}.",
            representative.time_norm.relative_label,
            representative.time_norm.days_ago,
            phrase_list(NodeKind::Symptom),
            phrase_list(NodeKind::LifeEvent),
        );
        cards.push(MemoryCard {
            episode_id: episode.episode_id,
            time_range: format_days_span(episode.time_range.0, episode.time_range.1),
            card_text,
        });
    }
    Ok(cards)
}

/// Everything the agent produces for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMemory {
    pub anchor_day: i64,
    pub graph: TemporalGraph,
    pub cards: Vec<MemoryCard>,
}

/// Full agent pipeline for one candidate: resolve the anchor, filter both
/// streams to the horizon, build the graph, optionally enrich nodes with
/// extracted triples, bucket into episodes, render cards.
pub fn build_memory(
    candidate: &SocialCandidate,
    config: &CocConfig,
    extractor: Option<&dyn TripleExtractor>,
) -> Result<CandidateMemory> {
    config.validate()?;
    let anchor_day = match config.anchor_day.or_else(|| candidate.latest_day()) {
        Some(day) => day,
        None => {
            return Ok(CandidateMemory {
                anchor_day: 0,
                graph: TemporalGraph::default(),
                cards: Vec::new(),
            })
        }
    };
    let symptoms = retain_horizon(&candidate.symptom_timeline, anchor_day, config.horizon_days);
    let events = retain_horizon(&candidate.event_timeline, anchor_day, config.horizon_days);
    let mut graph = build_graph(&symptoms, &events, anchor_day, config)?;

    if config.extraction_enabled {
        if let Some(extractor) = extractor {
            for node in &mut graph.nodes {
                if let Some(extraction) =
                    extract_triple(node.kind, &node.label, &node.evidence, extractor)
                {
                    node.triple = Some(extraction.triple);
                    node.summary = extraction.summary;
                }
            }
        }
    }

    let episodes = aggregate_episodes(&graph, config)?;
    let cards = render_cards(&episodes, &graph)?;
    Ok(CandidateMemory { anchor_day, graph, cards })
}

/// Wire form of one persisted memory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryFile {
    pub profile_id: String,
    pub user_id: String,
    pub anchor_day: i64,
    #[serde(rename = "H")]
    pub horizon_days: i64,
    #[serde(rename = "W")]
    pub window_days: i64,
    pub graph: TemporalGraph,
    pub cards: Vec<MemoryCard>,
}

impl MemoryFile {
    pub fn new(profile_id: &str, user_id: &str, config: &CocConfig, memory: CandidateMemory) -> Self {
        MemoryFile {
            profile_id: profile_id.to_string(),
            user_id: user_id.to_string(),
            anchor_day: memory.anchor_day,
            horizon_days: config.horizon_days,
            window_days: config.window_days,
            graph: memory.graph,
            cards: memory.cards,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testutil::candidate;
    use proptest::prelude::*;

    fn item(day: i64, label: &str) -> TimelineItem {
        TimelineItem { day, label: label.into(), text: format!("{label} on day {day}"), score: 0.9 }
    }

    struct StubExtractor;

    impl TripleExtractor for StubExtractor {
        fn extract(
            &self,
            kind: NodeKind,
            label: &str,
            _text: &str,
        ) -> Result<Option<TripleExtraction>> {
            if label == "explode" {
                return Err(Error::backend("stub", "transport down"));
            }
            if label == "decline" {
                return Ok(None);
            }
            let triple = match kind {
                NodeKind::Symptom => NodeTriple::Symptom {
                    subject: "self".into(),
                    experience: format!("{label} episode"),
                    severity_frequency: "most days".into(),
                },
                NodeKind::LifeEvent => NodeTriple::Event {
                    actor: "self".into(),
                    action: label.to_string(),
                    impact: "mood drop".into(),
                },
            };
            Ok(Some(TripleExtraction { triple, summary: Some(format!("{label} summary")) }))
        }
    }

    #[test]
    fn relative_label_table_boundaries() {
        let cases = [
            (0, "today"),
            (1, "yesterday"),
            (2, "2 days ago"),
            (6, "6 days ago"),
            (7, "1 week ago"),
            (13, "1 week ago"),
            (14, "2 weeks ago"),
            (27, "3 weeks ago"),
            (28, "1 month ago"),
            (29, "1 month ago"),
            (59, "1 month ago"),
            (60, "2 months ago"),
            (89, "2 months ago"),
            (364, "12 months ago"),
            (365, "1 year ago"),
            (1825, "5 years ago"),
        ];
        for (days, expected) in cases {
            assert_eq!(relative_label(days), expected, "days_ago={days}");
        }
    }

    #[test]
    fn time_normalize_rejects_future_days() {
        let norm = time_normalize(86, 100).unwrap();
        assert_eq!(norm.days_ago, 14);
        assert_eq!(norm.relative_label, "2 weeks ago");
        assert!(time_normalize(101, 100).is_err());
        assert_eq!(time_normalize(100, 100).unwrap().relative_label, "today");
    }

    #[test]
    fn horizon_is_half_open_at_the_old_end() {
        let items = vec![item(10, "a"), item(11, "b"), item(100, "c"), item(55, "d")];
        let kept = retain_horizon(&items, 100, 90);
        let days: Vec<i64> = kept.iter().map(|i| i.day).collect();
        assert_eq!(days, vec![11, 55, 100], "day 10 sits exactly on the open boundary");
    }

    #[test]
    fn graph_chain_and_persistence_edges() {
        let symptoms = vec![item(1, "fatigue"), item(3, "insomnia"), item(5, "fatigue")];
        let events = vec![item(5, "job loss")];
        let graph = build_graph(&symptoms, &events, 5, &CocConfig::default()).unwrap();
        assert_eq!(graph.nodes.len(), 4);
        // Same-day tie: the fatigue symptom precedes the job loss event.
        assert_eq!(graph.nodes[2].label, "fatigue");
        assert_eq!(graph.nodes[3].label, "job loss");

        let chain: Vec<(&str, &str)> = graph
            .edges
            .iter()
            .filter(|e| e.relation == Relation::TemporalPrecedes)
            .map(|e| (e.from.as_str(), e.to.as_str()))
            .collect();
        assert_eq!(chain, vec![("n0", "n1"), ("n1", "n2"), ("n2", "n3")]);

        let persists: Vec<(&str, &str)> = graph
            .edges
            .iter()
            .filter(|e| e.relation == Relation::Persists)
            .map(|e| (e.from.as_str(), e.to.as_str()))
            .collect();
        assert_eq!(persists, vec![("n0", "n2")], "consecutive same-label symptoms persist");
    }

    #[test]
    fn same_day_items_keep_stream_input_order() {
        let symptoms = vec![item(7, "second"), item(7, "third")];
        let mut symptoms_reordered = symptoms.clone();
        symptoms_reordered[0].label = "first-symptom".into();
        symptoms_reordered[1].label = "second-symptom".into();
        let events = vec![item(7, "first-event"), item(7, "second-event")];
        let graph = build_graph(&symptoms_reordered, &events, 7, &CocConfig::default()).unwrap();
        let labels: Vec<&str> = graph.nodes.iter().map(|n| n.label.as_str()).collect();
        assert_eq!(labels, vec!["first-symptom", "second-symptom", "first-event", "second-event"]);
    }

    #[test]
    fn closure_flag_materializes_all_ordered_pairs() {
        let symptoms = vec![item(1, "a"), item(2, "b"), item(3, "c")];
        let config = CocConfig { transitive_closure: true, ..CocConfig::default() };
        let graph = build_graph(&symptoms, &[], 3, &config).unwrap();
        let temporal = graph
            .edges
            .iter()
            .filter(|e| e.relation == Relation::TemporalPrecedes)
            .count();
        assert_eq!(temporal, 3, "3 choose 2 ordered pairs");
    }

    #[test]
    fn single_item_graph_has_no_edges() {
        let graph = build_graph(&[item(4, "only")], &[], 4, &CocConfig::default()).unwrap();
        assert_eq!(graph.nodes.len(), 1);
        assert!(graph.edges.is_empty());
    }

    #[test]
    fn episodes_bucket_by_floor_division() {
        let symptoms = vec![item(100, "a"), item(97, "b"), item(90, "c"), item(85, "d")];
        let graph = build_graph(&symptoms, &[], 100, &CocConfig::default()).unwrap();
        let episodes = aggregate_episodes(&graph, &CocConfig::default()).unwrap();
        // days_ago: 0, 3, 10, 15 with W=7: buckets 0, 0, 1, 2.
        let ids: Vec<i64> = episodes.iter().map(|e| e.episode_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(episodes[0].time_range, (0, 3));
        assert_eq!(episodes[1].time_range, (10, 10));
        assert_eq!(episodes[2].time_range, (15, 15));

        let narrow = CocConfig { window_days: 1, ..CocConfig::default() };
        let per_day = aggregate_episodes(&graph, &narrow).unwrap();
        assert_eq!(per_day.len(), 4);
        assert_eq!(per_day[0].episode_id, 0);
        assert_eq!(per_day[3].episode_id, 15);
    }

    #[test]
    fn cards_pin_representative_time_and_serialize_card_cn() {
        let symptoms = vec![item(86, "Sleep Disturbance"), item(84, "Depressed Mood")];
        let events = vec![item(79, "job loss")];
        let graph = build_graph(&symptoms, &events, 100, &CocConfig::default()).unwrap();
        let episodes = aggregate_episodes(&graph, &CocConfig::default()).unwrap();
        let cards = render_cards(&episodes, &graph).unwrap();
        assert_eq!(cards.len(), 2);
        // Episode 2 holds days_ago 14 and 16; representative is the most
        // recent node (14).
        assert_eq!(cards[0].episode_id, 2);
        assert_eq!(cards[0].time_range, "14-16 days ago");
        assert_eq!(
            cards[0].card_text,
            "Representative time: 2 weeks ago (14). Symptoms: \"Depressed Mood\" at 2 weeks ago \
             (16); \"Sleep Disturbance\" at 2 weeks ago (14). Life events: none.",
        );
        assert_eq!(cards[1].episode_id, 3);
        assert_eq!(cards[1].time_range, "21 days ago");
        assert!(cards[1].card_text.contains("\"job loss\" at 3 weeks ago (21)"));

        let json = serde_json::to_value(&cards[0]).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, vec!["card_cn", "episode_id", "time_range"]);
    }

    #[test]
    fn build_memory_handles_empty_timelines() {
        let c = candidate("u-empty", &["Depressed Mood"]);
        let memory = build_memory(&c, &CocConfig::default(), None).unwrap();
        assert!(memory.graph.nodes.is_empty());
        assert!(memory.cards.is_empty());
    }

    #[test]
    fn build_memory_is_deterministic_and_hand_countable() {
        let mut c = candidate("u-full", &["Depressed Mood"]);
        c.symptom_timeline = vec![
            item(1000, "Depressed Mood"),
            item(996, "Decreased Energy Tiredness Fatigue"),
            item(986, "Sleep Disturbance"),
            item(984, "Decreased Energy Tiredness Fatigue"),
            item(880, "Pessimism"), // 120 days old: outside the horizon
        ];
        c.event_timeline = vec![item(979, "job loss"), item(955, "breakup")];
        let config = CocConfig::default();
        let memory = build_memory(&c, &config, None).unwrap();
        assert_eq!(memory.anchor_day, 1000);
        assert_eq!(memory.graph.nodes.len(), 6);
        // days_ago 0, 4, 14, 16, 21, 45 with W=7: buckets 0, 0, 2, 2, 3, 6.
        let episode_ids: Vec<i64> = memory.cards.iter().map(|card| card.episode_id).collect();
        assert_eq!(episode_ids, vec![0, 2, 3, 6]);
        // Persistence between the two fatigue mentions, plus the 5-chain.
        let persists = memory
            .graph
            .edges
            .iter()
            .filter(|e| e.relation == Relation::Persists)
            .count();
        assert_eq!(persists, 1);

        let again = build_memory(&c, &config, None).unwrap();
        assert_eq!(
            serde_json::to_string(&memory).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn extraction_enriches_without_dropping_nodes() {
        let mut c = candidate("u-x", &["Depressed Mood"]);
        c.symptom_timeline = vec![item(10, "explode"), item(9, "decline"), item(8, "Depressed Mood")];
        let config = CocConfig { extraction_enabled: true, ..CocConfig::default() };
        let memory = build_memory(&c, &config, Some(&StubExtractor)).unwrap();
        assert_eq!(memory.graph.nodes.len(), 3, "failures never drop nodes");
        let by_label: BTreeMap<&str, &GraphNode> =
            memory.graph.nodes.iter().map(|n| (n.label.as_str(), n)).collect();
        assert!(by_label["explode"].triple.is_none());
        assert!(by_label["decline"].triple.is_none());
        assert!(by_label["Depressed Mood"].triple.is_some());
        assert!(memory.cards.iter().any(|c| c.card_text.contains("[self; Depressed Mood episode; most days]")));

        // Extraction disabled: identical graph except triples/summaries.
        let disabled = build_memory(&c, &CocConfig::default(), Some(&StubExtractor)).unwrap();
        assert!(disabled.graph.nodes.iter().all(|n| n.triple.is_none() && n.summary.is_none()));
        assert_eq!(disabled.graph.edges, memory.graph.edges);
    }

    #[test]
    fn memory_file_wire_shape() {
        let c = candidate("u9", &["Depressed Mood"]);
        let config = CocConfig::default();
        let memory = build_memory(&c, &config, None).unwrap();
        let file = MemoryFile::new("c01+a01", "u9", &config, memory);
        let json = serde_json::to_value(&file).unwrap();
        for key in ["profile_id", "user_id", "anchor_day", "H", "W", "graph", "cards"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["H"], 90);
        assert_eq!(json["W"], 7);
    }

    proptest! {
        #[test]
        fn episodes_partition_nodes_and_edges_point_forward(
            days in proptest::collection::vec(0i64..400, 1..40),
            h in prop_oneof![Just(30i64), Just(90i64)],
            w in prop_oneof![Just(1i64), Just(7i64), Just(14i64)],
        ) {
            let anchor = 400;
            let items: Vec<TimelineItem> =
                days.iter().map(|d| item(*d, "Depressed Mood")).collect();
            let config = CocConfig {
                horizon_days: h,
                window_days: w,
                ..CocConfig::default()
            };
            let kept = retain_horizon(&items, anchor, h);
            prop_assert!(kept.iter().all(|i| i.day > anchor - h && i.day <= anchor));
            let graph = build_graph(&kept, &[], anchor, &config).unwrap();
            let episodes = aggregate_episodes(&graph, &config).unwrap();

            let mut seen = 0usize;
            for e in &episodes {
                for id in &e.members {
                    let node = graph.nodes.iter().find(|n| &n.id == id).unwrap();
                    prop_assert_eq!(node.time_norm.days_ago / w, e.episode_id);
                    seen += 1;
                }
                prop_assert!(e.time_range.0 <= e.time_range.1);
            }
            prop_assert_eq!(seen, graph.nodes.len());

            let index_of = |id: &str| graph.nodes.iter().position(|n| n.id == id).unwrap();
            for edge in &graph.edges {
                prop_assert!(index_of(&edge.from) < index_of(&edge.to));
            }
        }
    }
}
