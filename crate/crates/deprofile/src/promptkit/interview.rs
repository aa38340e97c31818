//! Three-stage interview protocol: a persona stage, a symptom stage, and a
//! phased timeline stage, driven from an editable question script. The full
//! dialogue history accompanies every turn, so answers can build on earlier
//! ones.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatClient, ChatTurn, Role, ScriptedChat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterviewStage {
    Persona,
    Symptom,
    Timeline,
}

impl fmt::Display for InterviewStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterviewStage::Persona => "persona",
            InterviewStage::Symptom => "symptom",
            InterviewStage::Timeline => "timeline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptQuestion {
    pub stage: InterviewStage,
    pub question_id: String,
    pub category: String,
    pub text: String,
}

/// Ordered question list. Valid scripts are non-empty, use unique question
/// ids, and never step back to an earlier stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewScript {
    pub questions: Vec<ScriptQuestion>,
}

impl InterviewScript {
    pub fn from_json(raw: &str) -> Result<Self> {
        let script: InterviewScript = serde_json::from_str(raw)
            .map_err(|e| Error::invalid(format!("bad interview script: {e}")))?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw).map_err(|e| match e {
            Error::Invalid(msg) => Error::schema(path, 1, msg),
            other => other,
        })
    }

    /// The question list this crate ships with, embedded at compile time.
    pub fn bundled() -> &'static InterviewScript {
        static BUNDLED: OnceLock<InterviewScript> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            InterviewScript::from_json(include_str!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/fixtures/interview_script.json"
            )))
            .expect("bundled script is valid")
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.questions.is_empty() {
            return Err(Error::invalid("interview script has no questions"));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut last_stage = InterviewStage::Persona;
        for q in &self.questions {
            if !seen.insert(q.question_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate question id {:?}",
                    q.question_id
                )));
            }
            if q.stage < last_stage {
                return Err(Error::invalid(format!(
                    "question {:?} steps back from stage {last_stage} to {}",
                    q.question_id, q.stage
                )));
            }
            last_stage = q.stage;
        }
        Ok(())
    }

    pub fn stage_questions(&self, stage: InterviewStage) -> impl Iterator<Item = &ScriptQuestion> {
        self.questions.iter().filter(move |q| q.stage == stage)
    }
}

/// What to do when a turn's backend call fails after retries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptStatus {
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub question_id: String,
    pub stage: InterviewStage,
    pub question: String,
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTranscript {
    pub profile_id: String,
    pub backend: String,
    pub config_hash: String,
    pub status: TranscriptStatus,
    pub turns: Vec<TranscriptTurn>,
}

#[derive(Debug, Clone, Copy)]
pub struct InterviewSetup<'a> {
    pub profile_id: &'a str,
    pub config_hash: &'a str,
    pub system_prompt: &'a str,
    pub failure_policy: FailurePolicy,
}

/// Runs the whole script against one patient backend. Failed turns are
/// recorded with their error; the failure policy decides whether the
/// interview stops there or moves to the next question. Failed turns are
/// not added to the running history.
pub fn run_interview(
    setup: &InterviewSetup<'_>,
    script: &InterviewScript,
    client: &dyn ChatClient,
) -> DialogueTranscript {
    let mut history: Vec<ChatTurn> = Vec::new();
    let mut turns = Vec::new();
    let mut status = TranscriptStatus::Complete;

    for q in &script.questions {
        match client.chat(setup.system_prompt, &history, &q.text) {
            Ok(answer) => {
                history.push(ChatTurn { role: Role::User, text: q.text.clone() });
                history.push(ChatTurn { role: Role::Assistant, text: answer.clone() });
                turns.push(TranscriptTurn {
                    question_id: q.question_id.clone(),
                    stage: q.stage,
                    question: q.text.clone(),
                    answer,
                    error: None,
                });
            }
            Err(err) => match setup.failure_policy {
                FailurePolicy::Abort => {
                    status = TranscriptStatus::Aborted;
                    turns.push(TranscriptTurn {
                        question_id: q.question_id.clone(),
                        stage: q.stage,
                        question: q.text.clone(),
                        answer: String::new(),
                        error: Some(err.to_string()),
                    });
                    break;
                }
                FailurePolicy::Continue => {
                    turns.push(TranscriptTurn {
                        question_id: q.question_id.clone(),
                        stage: q.stage,
                        question: q.text.clone(),
                        answer: String::new(),
                        error: Some(err.to_string()),
                    });
                }
            },
        }
    }

    DialogueTranscript {
        profile_id: setup.profile_id.to_string(),
        backend: client.name().to_string(),
        config_hash: setup.config_hash.to_string(),
        status,
        turns,
    }
}

/// Builds a scripted patient from an answers-by-question-id table, keyed by
/// the question texts the interview will actually send. Every script
/// question must have an answer and every answer key must name a script
/// question.
pub fn scripted_patient(
    script: &InterviewScript,
    answers_by_qid: &BTreeMap<String, String>,
) -> Result<ScriptedChat> {
    let mut pairs = Vec::with_capacity(script.questions.len());
    for q in &script.questions {
        let answer = answers_by_qid.get(&q.question_id).ok_or_else(|| {
            Error::invalid(format!("no scripted answer for question id {:?}", q.question_id))
        })?;
        pairs.push((q.text.clone(), answer.clone()));
    }
    for qid in answers_by_qid.keys() {
        if !script.questions.iter().any(|q| &q.question_id == qid) {
            return Err(Error::invalid(format!(
                "scripted answer for unknown question id {qid:?}"
            )));
        }
    }
    Ok(ScriptedChat::from_pairs(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{EchoChat, SequenceChat};
    use std::sync::Mutex;

    fn mini_script() -> InterviewScript {
        InterviewScript {
            questions: vec![
                ScriptQuestion {
                    stage: InterviewStage::Persona,
                    question_id: "q1".into(),
                    category: "Profile".into(),
                    text: "How old are you?".into(),
                },
                ScriptQuestion {
                    stage: InterviewStage::Symptom,
                    question_id: "q2".into(),
                    category: "Sleep".into(),
                    text: "How is your sleep?".into(),
                },
                ScriptQuestion {
                    stage: InterviewStage::Timeline,
                    question_id: "q3".into(),
                    category: "Timeline".into(),
                    text: "What happened three months ago?".into(),
                },
            ],
        }
    }

    fn setup<'a>(policy: FailurePolicy) -> InterviewSetup<'a> {
        InterviewSetup {
            profile_id: "p1",
            config_hash: "cafebabe",
            system_prompt: "You are a patient.",
            failure_policy: policy,
        }
    }

    #[test]
    fn bundled_script_has_the_expected_shape() {
        let script = InterviewScript::bundled();
        script.validate().unwrap();
        assert_eq!(script.questions.len(), 63);

        let persona: Vec<_> = script.stage_questions(InterviewStage::Persona).collect();
        assert_eq!(persona.len(), 9);
        assert_eq!(persona.iter().filter(|q| q.category == "Profile").count(), 4);
        assert_eq!(persona.iter().filter(|q| q.category == "Big Five").count(), 5);
        assert_eq!(script.stage_questions(InterviewStage::Symptom).count(), 44);
        assert_eq!(script.stage_questions(InterviewStage::Timeline).count(), 10);
        assert_eq!(script.questions[0].text, "How old are you?");
    }

    #[test]
    fn validation_rejects_backward_stages_and_duplicate_ids() {
        let mut backwards = mini_script();
        backwards.questions.swap(0, 2);
        assert!(backwards.validate().is_err());

        let mut duped = mini_script();
        duped.questions[2].question_id = "q1".into();
        assert!(duped.validate().is_err());

        assert!(InterviewScript { questions: vec![] }.validate().is_err());
    }

    #[test]
    fn echo_interview_completes_with_answers_equal_to_questions() {
        let script = mini_script();
        let transcript = run_interview(&setup(FailurePolicy::Abort), &script, &EchoChat);
        assert_eq!(transcript.status, TranscriptStatus::Complete);
        assert_eq!(transcript.turns.len(), 3);
        for (turn, q) in transcript.turns.iter().zip(&script.questions) {
            assert_eq!(turn.question_id, q.question_id);
            assert_eq!(turn.answer, q.text);
            assert_eq!(turn.stage, q.stage);
            assert!(turn.error.is_none());
        }
        assert_eq!(transcript.backend, "echo");
        assert_eq!(transcript.config_hash, "cafebabe");
    }

    #[test]
    fn each_turn_sees_the_full_prior_history() {
        struct HistoryProbe {
            lengths: Mutex<Vec<usize>>,
        }
        impl ChatClient for HistoryProbe {
            fn chat(&self, system: &str, history: &[ChatTurn], user: &str) -> crate::Result<String> {
                assert_eq!(system, "You are a patient.");
                self.lengths.lock().unwrap().push(history.len());
                Ok(format!("answer to {user}"))
            }
            fn name(&self) -> &str {
                "probe"
            }
        }
        let probe = HistoryProbe { lengths: Mutex::new(Vec::new()) };
        run_interview(&setup(FailurePolicy::Abort), &mini_script(), &probe);
        assert_eq!(*probe.lengths.lock().unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn abort_policy_stops_at_the_failing_turn() {
        // Two replies, then the sequence is exhausted and errors at turn 3.
        let client = SequenceChat::new(["fine".to_string(), "poorly".to_string()]);
        let transcript = run_interview(&setup(FailurePolicy::Abort), &mini_script(), &client);
        assert_eq!(transcript.status, TranscriptStatus::Aborted);
        assert_eq!(transcript.turns.len(), 3);
        assert!(transcript.turns[2].error.is_some());
        assert_eq!(transcript.turns[2].answer, "");
        assert!(transcript.turns[..2].iter().all(|t| t.error.is_none()));
    }

    #[test]
    fn continue_policy_records_the_failure_and_moves_on() {
        let script = mini_script();
        let answers = BTreeMap::from([
            ("q1".to_string(), "I am 24.".to_string()),
            ("q3".to_string(), "I changed jobs.".to_string()),
        ]);
        // q2 has no scripted answer, so that turn fails.
        let client = ScriptedChat::from_pairs([
            (script.questions[0].text.clone(), answers["q1"].clone()),
            (script.questions[2].text.clone(), answers["q3"].clone()),
        ]);
        let transcript = run_interview(&setup(FailurePolicy::Continue), &script, &client);
        assert_eq!(transcript.status, TranscriptStatus::Complete);
        assert_eq!(transcript.turns.len(), 3);
        assert!(transcript.turns[1].error.is_some());
        assert_eq!(transcript.turns[2].answer, "I changed jobs.");
    }

    #[test]
    fn scripted_patient_requires_a_complete_answer_table() {
        let script = mini_script();
        let complete = BTreeMap::from([
            ("q1".to_string(), "a1".to_string()),
            ("q2".to_string(), "a2".to_string()),
            ("q3".to_string(), "a3".to_string()),
        ]);
        let client = scripted_patient(&script, &complete).unwrap();
        let transcript = run_interview(&setup(FailurePolicy::Abort), &script, &client);
        assert_eq!(transcript.status, TranscriptStatus::Complete);
        assert_eq!(transcript.turns[1].answer, "a2");

        let mut missing = complete.clone();
        missing.remove("q2");
        let err = scripted_patient(&script, &missing).unwrap_err();
        assert!(err.to_string().contains("q2"));

        let mut extra = complete;
        extra.insert("q9".to_string(), "ghost".to_string());
        let err = scripted_patient(&script, &extra).unwrap_err();
        assert!(err.to_string().contains("q9"));
    }

    #[test]
    fn interviews_with_deterministic_mocks_are_reproducible() {
        let script = mini_script();
        let answers = BTreeMap::from([
            ("q1".to_string(), "a1".to_string()),
            ("q2".to_string(), "a2".to_string()),
            ("q3".to_string(), "a3".to_string()),
        ]);
        let client = scripted_patient(&script, &answers).unwrap();
        let one = run_interview(&setup(FailurePolicy::Abort), &script, &client);
        let two = run_interview(&setup(FailurePolicy::Abort), &script, &client);
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&two).unwrap()
        );
    }
}
