//! Turns a transcript into a segmentation prompt.
//!
//! Plain expressions use `"<image>\nPlease segment {exp}."`; expressions that
//! read as questions use `"<image>\n{exp} Please respond with a segmentation
//! mask."`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGE_TOKEN: &str = "<image>\n";

const DEFAULT_INTERROGATIVES: &[&str] = &[
    "what", "which", "who", "whom", "whose", "where", "when", "why", "how", "is", "are", "was",
    "were", "do", "does", "did", "can", "could", "will", "would", "should",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    /// "Please segment {exp}."
    Segment = 1,
    /// "{exp} Please respond with a segmentation mask."
    Respond = 2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub template_id: TemplateId,
}

/// Decides whether an expression already reads like a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuestionHeuristic {
    /// Lower-case first words that mark a question.
    pub interrogatives: Vec<String>,
}

impl Default for QuestionHeuristic {
    fn default() -> Self {
        Self {
            interrogatives: DEFAULT_INTERROGATIVES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl QuestionHeuristic {
    /// Ends in `?`, or the first word (punctuation stripped, any case) is an
    /// interrogative.
    pub fn is_question(&self, exp: &str) -> bool {
        let exp = exp.trim();
        if exp.ends_with('?') {
            return true;
        }
        let Some(first) = exp.split_whitespace().next() else {
            return false;
        };
        let word = first
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        self.interrogatives.contains(&word)
    }

    pub fn build_prompt(&self, exp: &str) -> Result<Prompt> {
        let exp = exp.trim();
        if exp.is_empty() {
            return Err(Error::Usage("cannot build a prompt from an empty expression".into()));
        }
        if self.is_question(exp) {
            return Ok(Prompt {
                text: format!("{IMAGE_TOKEN}{exp} Please respond with a segmentation mask."),
                template_id: TemplateId::Respond,
            });
        }
        let body = exp.trim_end_matches('.');
        Ok(Prompt {
            text: format!("{IMAGE_TOKEN}Please segment {body}."),
            template_id: TemplateId::Segment,
        })
    }
}

pub fn is_question(exp: &str) -> bool {
    QuestionHeuristic::default().is_question(exp)
}

pub fn build_prompt(exp: &str) -> Result<Prompt> {
    QuestionHeuristic::default().build_prompt(exp)
}
