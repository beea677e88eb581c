use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StudyError;

/// An answer is an integer scale point or free text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Scale(i64),
    Text(String),
}

/// Answers keyed by question id.
pub type Answers = BTreeMap<String, AnswerValue>;

/// Longest accepted free-text answer, in characters.
pub const MAX_TEXT_CHARS: usize = 5_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionKind {
    #[serde(rename = "likert-1-5")]
    Likert5,
    #[serde(rename = "free-text")]
    FreeText,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub prompt: String,
    pub kind: QuestionKind,
    #[serde(default = "yes")]
    pub required: bool,
}

fn yes() -> bool {
    true
}

/// Operator-supplied survey: questions asked for every track and once at the end.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub per_track: Vec<Question>,
    pub global: Vec<Question>,
}

impl QuestionSet {
    pub fn new(per_track: Vec<Question>, global: Vec<Question>) -> Result<Self, StudyError> {
        let set = Self { per_track, global };
        set.validate()?;
        Ok(set)
    }

    pub fn from_json(text: &str) -> Result<Self, StudyError> {
        let set: Self = serde_json::from_str(text).map_err(|e| StudyError::Config(format!("questions: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StudyError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        for (name, qs) in [("per_track", &self.per_track), ("global", &self.global)] {
            let mut seen = HashSet::new();
            for q in qs {
                if q.id.trim().is_empty() {
                    return Err(StudyError::Config(format!("{name}: empty question id")));
                }
                if !seen.insert(q.id.as_str()) {
                    return Err(StudyError::Config(format!("{name}: duplicate question id {:?}", q.id)));
                }
            }
        }
        Ok(())
    }

    pub fn check_track_answers(&self, answers: &Answers) -> Result<(), StudyError> {
        check_answers(&self.per_track, answers)
    }

    pub fn check_global_answers(&self, answers: &Answers) -> Result<(), StudyError> {
        check_answers(&self.global, answers)
    }
}

impl Default for QuestionSet {
    /// A small generic survey, used when no question file is configured.
    fn default() -> Self {
        let q = |id: &str, prompt: &str, kind, required| Question {
            id: id.into(),
            prompt: prompt.into(),
            kind,
            required,
        };
        Self {
            per_track: vec![
                q(
                    "fit",
                    "How well does this song fit your taste?",
                    QuestionKind::Likert5,
                    true,
                ),
                q(
                    "familiar",
                    "How familiar is this song to you?",
                    QuestionKind::Likert5,
                    true,
                ),
                q(
                    "comment",
                    "Anything else about this song?",
                    QuestionKind::FreeText,
                    false,
                ),
            ],
            global: vec![
                q(
                    "overall",
                    "Overall, how appropriate were these recommendations?",
                    QuestionKind::Likert5,
                    true,
                ),
                q("diversity", "How varied was the list?", QuestionKind::Likert5, true),
                q("feedback", "Any other feedback?", QuestionKind::FreeText, false),
            ],
        }
    }
}

fn check_answers(questions: &[Question], answers: &Answers) -> Result<(), StudyError> {
    for id in answers.keys() {
        if !questions.iter().any(|q| &q.id == id) {
            return Err(StudyError::InvalidAnswer(id.clone()));
        }
    }
    for q in questions {
        let invalid = || StudyError::InvalidAnswer(q.id.clone());
        match (answers.get(&q.id), q.kind) {
            (None, _) if q.required => return Err(invalid()),
            (None, _) => {}
            (Some(AnswerValue::Scale(v)), QuestionKind::Likert5) if (1..=5).contains(v) => {}
            (Some(AnswerValue::Text(t)), QuestionKind::FreeText) => {
                if (q.required && t.trim().is_empty()) || t.chars().count() > MAX_TEXT_CHARS {
                    return Err(invalid());
                }
            }
            _ => return Err(invalid()),
        }
    }
    Ok(())
}
