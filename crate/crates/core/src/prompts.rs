//! Prompt templates for the three prompt formats.
//!
//! A fewshot prompt is an instruction block, two worked examples and the
//! test item. Instruction-only drops the examples; zeroshot is the bare item
//! with no scaffolding.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PromptFormat, QuestionType};

/// Item-slot substitutes used to expose the contextual label prior.
pub const CONTENT_FREE_INPUTS: [&str; 3] = ["N/A", "[MASK]", ""];

/// Line appended after the item so scoring happens at the response position.
pub const RESPONSE_CUE: &str = "\nResponse:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTemplate {
    Arith,
    Babi,
    Comps,
    Ewok,
    /// Shared by SNLI and MNLI.
    Nli,
    /// Shared by all MMLU subject domains.
    Mmlu,
}

struct Example {
    body: &'static str,
    response: &'static str,
}

const YES_NO_INSTRUCTION: &str = "Answer the following yes-no questions:";
const NLI_INSTRUCTION: &str = "Answer the following Recognizing Textual Entailment questions using a single digit. Entailment (0) implies the hypothesis is true given the premise. Neutral (1) implies the premise doesn't provide enough information to determine the hypothesis. Contradiction (2) implies the hypothesis is false given the premise.";
const MMLU_INSTRUCTION: &str = "Answer the following multiple choice questions:";

const ARITH_EXAMPLES: [Example; 2] = [
    Example {
        body: "Question: Is 7 minus 9 equal to 4?",
        response: "No",
    },
    Example {
        body: "Question: Is 17 plus 15 equal to 32?",
        response: "Yes",
    },
];
const BABI_EXAMPLES: [Example; 2] = [
    Example {
        body: "Question: Marshall is in the car. Is Marshall in the building?",
        response: "No",
    },
    Example {
        body: "Question: Nathan is a pianist. Pianists like oranges. Does Nathan like oranges?",
        response: "Yes",
    },
];
const COMPS_EXAMPLES: [Example; 2] = [
    Example {
        body: "Question: Does a blueberry fire bullets?",
        response: "No",
    },
    Example {
        body: "Question: Does a turtle have a hard shell?",
        response: "Yes",
    },
];
const EWOK_EXAMPLES: [Example; 2] = [
    Example {
        body: "Question: Claire sees something that is fabric. Can Claire pour it?",
        response: "No",
    },
    Example {
        body: "Question: Sally pays salary to Harry. Is Sally Harry's boss?",
        response: "Yes",
    },
];
const NLI_EXAMPLES: [Example; 2] = [
    Example {
        body: "Premise: A man is playing a guitar. Hypothesis: A person is making music.",
        response: "0",
    },
    // the trailing space is part of the original prompt
    Example {
        body: "Premise: A woman is reading a book in the library. Hypothesis: A woman is swimming. ",
        response: "2",
    },
];
const MMLU_EXAMPLES: [Example; 2] = [
    Example {
        body: "Question: What is the shape of the Earth?\nOptions: (A) Cone, (B) Cube, (C) Sphere, (D) Cylinder",
        response: "C",
    },
    Example {
        body: "Question: What is the color of the sky?\nOptions: (A) Red, (B) Blue, (C) Green, (D) Yellow",
        response: "B",
    },
];

impl DatasetTemplate {
    pub const ALL: [DatasetTemplate; 6] = [Self::Arith, Self::Babi, Self::Comps, Self::Ewok, Self::Nli, Self::Mmlu];

    /// Template for a dataset id, case-insensitively. MMLU subject domains
    /// map to the MMLU template.
    pub fn for_dataset(dataset_id: &str) -> Option<Self> {
        let id = dataset_id.to_ascii_uppercase().replace(['-', ' ', '.'], "_");
        Some(match id.as_str() {
            "ARITH" => Self::Arith,
            "BABI" => Self::Babi,
            "COMPS" => Self::Comps,
            "EWOK" => Self::Ewok,
            "SNLI" | "MNLI" | "MULTINLI" | "NLI" => Self::Nli,
            "MMLU" | "STEM" | "HUMANITIES" | "OTHERS" | "SOCIAL_SCI_" | "SOCIAL_SCI" | "SOCIAL_SCIENCE" => Self::Mmlu,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Arith => "arith",
            Self::Babi => "babi",
            Self::Comps => "comps",
            Self::Ewok => "ewok",
            Self::Nli => "nli",
            Self::Mmlu => "mmlu",
        }
    }

    pub fn question_type(self) -> QuestionType {
        match self {
            Self::Nli => QuestionType::ThreeChoice,
            Self::Mmlu => QuestionType::FourChoice,
            _ => QuestionType::TwoChoice,
        }
    }

    fn instruction(self) -> &'static str {
        match self {
            Self::Nli => NLI_INSTRUCTION,
            Self::Mmlu => MMLU_INSTRUCTION,
            _ => YES_NO_INSTRUCTION,
        }
    }

    fn examples(self) -> &'static [Example; 2] {
        match self {
            Self::Arith => &ARITH_EXAMPLES,
            Self::Babi => &BABI_EXAMPLES,
            Self::Comps => &COMPS_EXAMPLES,
            Self::Ewok => &EWOK_EXAMPLES,
            Self::Nli => &NLI_EXAMPLES,
            Self::Mmlu => &MMLU_EXAMPLES,
        }
    }

    /// Header of the test-item block, up to where the item text goes.
    fn slot_header(self) -> &'static str {
        match self {
            Self::Nli => "#EXAMPLE:",
            _ => "#EXAMPLE\nQuestion:",
        }
    }

    /// Separator between the slot header and the item text.
    fn slot_separator(self) -> &'static str {
        match self {
            Self::Nli => "\n",
            _ => " ",
        }
    }
}

impl fmt::Display for DatasetTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("format mismatch: {dataset} has no {format} template")]
    FormatMismatch {
        dataset: DatasetTemplate,
        format: PromptFormat,
    },
    #[error("format mismatch: {dataset} is {expected}, items are {found}")]
    QuestionTypeMismatch {
        dataset: DatasetTemplate,
        expected: QuestionType,
        found: QuestionType,
    },
    #[error("no prompt template for dataset '{0}'")]
    UnknownDataset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub dataset: DatasetTemplate,
    pub format: PromptFormat,
    /// Append [`RESPONSE_CUE`] after the item for scaffolded formats.
    pub response_cue: bool,
}

impl PromptTemplate {
    pub fn new(dataset: DatasetTemplate, format: PromptFormat) -> Result<Self, PromptError> {
        if dataset.question_type() == QuestionType::ThreeChoice && format == PromptFormat::Zeroshot {
            return Err(PromptError::FormatMismatch { dataset, format });
        }
        Ok(Self {
            dataset,
            format,
            response_cue: true,
        })
    }

    pub fn for_dataset(dataset_id: &str, format: PromptFormat) -> Result<Self, PromptError> {
        let dataset = DatasetTemplate::for_dataset(dataset_id)
            .ok_or_else(|| PromptError::UnknownDataset(dataset_id.to_string()))?;
        Self::new(dataset, format)
    }

    pub fn with_response_cue(mut self, on: bool) -> Self {
        self.response_cue = on;
        self
    }

    pub fn question_type(&self) -> QuestionType {
        self.dataset.question_type()
    }

    /// Everything before the item text.
    pub fn stem(&self) -> String {
        let d = self.dataset;
        let mut out = String::new();
        if self.format == PromptFormat::Zeroshot {
            return out;
        }
        out.push_str("#INSTRUCTIONS\n");
        out.push_str(d.instruction());
        out.push_str("\n\n");
        if self.format == PromptFormat::Fewshot {
            for ex in d.examples() {
                out.push_str("#EXAMPLE\n");
                out.push_str(ex.body);
                out.push_str("\nResponse: ");
                out.push_str(ex.response);
                out.push_str("\n\n");
            }
        }
        out.push_str(d.slot_header());
        out
    }

    /// The full prompt for one item, ending where the response token is scored.
    pub fn build(&self, item: &str) -> String {
        if self.format == PromptFormat::Zeroshot {
            return item.to_string();
        }
        let mut out = self.stem();
        out.push_str(self.dataset.slot_separator());
        out.push_str(item);
        if self.response_cue {
            out.push_str(RESPONSE_CUE);
        }
        out
    }
}

/// Builds a prompt, checking the items' question type against the template.
pub fn build_prompt(template: &PromptTemplate, question_type: QuestionType, item: &str) -> Result<String, PromptError> {
    if template.question_type() != question_type {
        return Err(PromptError::QuestionTypeMismatch {
            dataset: template.dataset,
            expected: template.question_type(),
            found: question_type,
        });
    }
    Ok(template.build(item))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroshot_is_the_bare_item() {
        let t = PromptTemplate::new(DatasetTemplate::Arith, PromptFormat::Zeroshot).unwrap();
        assert_eq!(t.build("Is 1 plus 1 equal to 2?"), "Is 1 plus 1 equal to 2?");
    }

    #[test]
    fn nli_has_no_zeroshot() {
        assert_eq!(
            PromptTemplate::new(DatasetTemplate::Nli, PromptFormat::Zeroshot),
            Err(PromptError::FormatMismatch {
                dataset: DatasetTemplate::Nli,
                format: PromptFormat::Zeroshot
            })
        );
        assert!(PromptTemplate::for_dataset("SNLI", PromptFormat::Zeroshot).is_err());
    }

    #[test]
    fn fewshot_ends_with_item_and_cue() {
        let t = PromptTemplate::new(DatasetTemplate::Arith, PromptFormat::Fewshot).unwrap();
        let p = t.build("Is 1 plus 1 equal to 2?");
        assert!(p.starts_with("#INSTRUCTIONS\nAnswer the following yes-no questions:\n\n#EXAMPLE\n"));
        assert!(p.ends_with("#EXAMPLE\nQuestion: Is 1 plus 1 equal to 2?\nResponse:"));
        assert_eq!(p.matches("#EXAMPLE").count(), 3);
        let bare = t.with_response_cue(false).build("x");
        assert!(bare.ends_with("Question: x"));
    }

    #[test]
    fn instruction_only_drops_examples() {
        let t = PromptTemplate::new(DatasetTemplate::Mmlu, PromptFormat::InstructionOnly).unwrap();
        assert_eq!(
            t.build("Q?\nOptions: (A) a, (B) b, (C) c, (D) d"),
            "#INSTRUCTIONS\nAnswer the following multiple choice questions:\n\n#EXAMPLE\nQuestion: Q?\nOptions: (A) a, (B) b, (C) c, (D) d\nResponse:"
        );
    }

    #[test]
    fn dataset_lookup() {
        assert_eq!(DatasetTemplate::for_dataset("mnli"), Some(DatasetTemplate::Nli));
        assert_eq!(DatasetTemplate::for_dataset("STEM"), Some(DatasetTemplate::Mmlu));
        assert_eq!(DatasetTemplate::for_dataset("Social Sci."), Some(DatasetTemplate::Mmlu));
        assert_eq!(DatasetTemplate::for_dataset("bAbI"), Some(DatasetTemplate::Babi));
        assert_eq!(DatasetTemplate::for_dataset("imagenet"), None);
    }

    #[test]
    fn question_type_is_checked() {
        let t = PromptTemplate::new(DatasetTemplate::Mmlu, PromptFormat::Fewshot).unwrap();
        assert!(build_prompt(&t, QuestionType::TwoChoice, "x").is_err());
        assert!(build_prompt(&t, QuestionType::FourChoice, "x").is_ok());
    }
}
