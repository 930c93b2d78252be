//! Instruction and few-shot prompt templates.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PRECEDING_CONTEXT: &str = "### Preceding Context :";
pub const LEGAL_PASSAGE: &str = "### Legal Passage :";
pub const OUTPUT_TAG: &str = "<output>";

const GURE_PREAMBLE: &str =
    "You are a helpful assistant specializing in generating legal passages \
that naturally align with the preceding context.\n\n\
Based on the given preceding context, please generate a legal passage that is coherent, relevant, \
and contextually appropriate.\n\n";

const Q2D_INSTRUCTION: &str = "Write a following legal passage that is coherent, relevant, and \
contextually appropriate based on preceding context.\n\n";

const COT_STEPS: &str = "### Note: Examples provided below do not include intermediate steps due \
to sampling constraints.\n\n\
### Step 1: Understand the preceding context.\n\n\
### Step 2: Identify the key legal elements and principles required for coherence.\n\n\
### Step 3: Generate a legal passage that logically follows and aligns with the context.\n\n\
### Note: You can generate any intermediate step but, please mark final output with '<output>' tag.\n\n\n\n";

/// Number of in-context examples the few-shot templates carry.
pub const FEW_SHOT_EXAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Gure,
    Q2d,
    Q2dCot,
}

impl TemplateKind {
    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Gure => "gure",
            TemplateKind::Q2d => "q2d",
            TemplateKind::Q2dCot => "q2d_cot",
        }
    }
}

/// One in-context example. `steps` holds the two intermediate reasoning
/// steps shown in chain-of-thought examples; when absent only the final
/// `<output>` line is rendered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub context: String,
    pub passage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<[String; 2]>,
}

impl FewShotExample {
    pub fn new(context: impl Into<String>, passage: impl Into<String>) -> Self {
        Self {
            context: context.into(),
            passage: passage.into(),
            steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: TemplateKind,
    examples: Vec<FewShotExample>,
}

impl PromptTemplate {
    pub fn gure() -> Self {
        Self {
            kind: TemplateKind::Gure,
            examples: Vec::new(),
        }
    }

    pub fn q2d(examples: Vec<FewShotExample>) -> Result<Self> {
        Self::few_shot(TemplateKind::Q2d, examples)
    }

    pub fn q2d_cot(examples: Vec<FewShotExample>) -> Result<Self> {
        Self::few_shot(TemplateKind::Q2dCot, examples)
    }

    pub fn few_shot(kind: TemplateKind, examples: Vec<FewShotExample>) -> Result<Self> {
        if kind == TemplateKind::Gure {
            return Ok(Self::gure());
        }
        if examples.len() != FEW_SHOT_EXAMPLES {
            return Err(Error::InvalidArgument(format!(
                "{} template needs exactly {FEW_SHOT_EXAMPLES} examples, got {}",
                kind.name(),
                examples.len()
            )));
        }
        if let Some(i) = examples
            .iter()
            .position(|e| e.context.trim().is_empty() || e.passage.trim().is_empty())
        {
            return Err(Error::InvalidArgument(format!(
                "{} example {} has an empty context or passage",
                kind.name(),
                i + 1
            )));
        }
        Ok(Self { kind, examples })
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    /// Stable digest of the template kind and its examples.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.name().as_bytes());
        for e in &self.examples {
            for part in [&e.context, &e.passage] {
                h.update((part.len() as u64).to_le_bytes());
                h.update(part.as_bytes());
            }
            match &e.steps {
                Some([a, b]) => {
                    h.update([1u8]);
                    for part in [a, b] {
                        h.update((part.len() as u64).to_le_bytes());
                        h.update(part.as_bytes());
                    }
                }
                None => h.update([0u8]),
            }
        }
        hex::encode(h.finalize())
    }

    /// Renders the prompt. Without a passage the text ends right after
    /// `### Legal Passage :` (inference mode); with one, the passage follows
    /// (training-record mode).
    pub fn render(&self, context: &str, passage: Option<&str>) -> Result<String> {
        if context.trim().is_empty() {
            return Err(Error::MissingPlaceholder {
                template: self.kind.name(),
                placeholder: "{Context}",
            });
        }
        if passage.is_some_and(|p| p.trim().is_empty()) {
            return Err(Error::MissingPlaceholder {
                template: self.kind.name(),
                placeholder: "{Passage}",
            });
        }
        let mut out = String::with_capacity(1024 + context.len());
        match self.kind {
            TemplateKind::Gure => out.push_str(GURE_PREAMBLE),
            TemplateKind::Q2d => {
                out.push_str(Q2D_INSTRUCTION);
                out.push_str("Examples:\n\n");
                for e in &self.examples {
                    push_block(&mut out, PRECEDING_CONTEXT, &e.context);
                    push_block(&mut out, LEGAL_PASSAGE, &e.passage);
                }
                out.push_str("Query:\n\n");
            }
            TemplateKind::Q2dCot => {
                out.push_str(Q2D_INSTRUCTION);
                out.push_str(COT_STEPS);
                out.push_str("Examples:\n\n");
                for e in &self.examples {
                    push_block(&mut out, PRECEDING_CONTEXT, &e.context);
                    if let Some([s1, s2]) = &e.steps {
                        push_block(&mut out, "### Step1:", s1);
                        push_block(&mut out, "### Step2:", s2);
                    }
                    push_block(&mut out, "### Step3: <output>", &e.passage);
                }
                out.push_str("\n\nQuery:\n\n");
            }
        }
        push_block(&mut out, PRECEDING_CONTEXT, context);
        out.push_str(LEGAL_PASSAGE);
        if let Some(p) = passage {
            out.push(' ');
            out.push_str(p);
        }
        Ok(out)
    }
}

fn push_block(out: &mut String, label: &str, value: &str) {
    out.push_str(label);
    out.push(' ');
    out.push_str(value);
    out.push_str("\n\n");
}

/// Final passage of a chain-of-thought generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CotOutput {
    pub passage: String,
    /// True when no `<output>` tag was found and the whole text was used.
    pub missing_tag: bool,
}

/// Text after the last `<output>` tag, trimmed. Falls back to the whole
/// generation (flagged) when the tag is absent.
pub fn parse_cot_output(raw: &str) -> CotOutput {
    match raw.rfind(OUTPUT_TAG) {
        Some(i) => CotOutput {
            passage: raw[i + OUTPUT_TAG.len()..]
                .trim()
                .trim_end_matches("</output>")
                .trim()
                .to_owned(),
            missing_tag: false,
        },
        None => CotOutput {
            passage: raw.trim().to_owned(),
            missing_tag: true,
        },
    }
}

/// Drops prompt scaffolding a model may echo: a leading `### Legal Passage :`
/// and anything from the next `### Preceding Context` / `### Legal Passage`
/// marker on.
pub fn strip_scaffolding(generation: &str) -> &str {
    let mut text = generation.trim_start();
    while let Some(rest) = text.strip_prefix(LEGAL_PASSAGE) {
        text = rest.trim_start();
    }
    let cut = ["### Preceding Context", "### Legal Passage"]
        .iter()
        .filter_map(|m| text.find(m))
        .min()
        .unwrap_or(text.len());
    text[..cut].trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples(with_steps: bool) -> Vec<FewShotExample> {
        (1..=3)
            .map(|i| FewShotExample {
                context: format!("example context {i}"),
                passage: format!("example passage {i}"),
                steps: with_steps.then(|| [format!("step one {i}"), format!("step two {i}")]),
            })
            .collect()
    }

    #[test]
    fn gure_inference_prompt_is_verbatim() {
        let p = PromptTemplate::gure().render("X", None).unwrap();
        let expected = "You are a helpful assistant specializing in generating legal passages that naturally align with the preceding context.\n\
\n\
Based on the given preceding context, please generate a legal passage that is coherent, relevant, and contextually appropriate.\n\
\n\
### Preceding Context : X\n\
\n\
### Legal Passage :";
        assert_eq!(p, expected);
        assert!(p.ends_with("### Legal Passage :"));
    }

    #[test]
    fn gure_training_prompt_carries_passage() {
        let p = PromptTemplate::gure().render("X", Some("Y")).unwrap();
        assert!(p.contains("### Preceding Context : X"));
        assert!(p.ends_with("### Legal Passage : Y"));
    }

    #[test]
    fn q2d_has_four_context_blocks() {
        let t = PromptTemplate::q2d(examples(false)).unwrap();
        let p = t.render("the query", None).unwrap();
        assert_eq!(p.matches("### Preceding Context").count(), 4);
        assert_eq!(p.matches("### Legal Passage").count(), 4);
        assert!(p.starts_with("Write a following legal passage"));
        assert!(p.contains("Examples:\n\n### Preceding Context : example context 1\n\n### Legal Passage : example passage 1\n\n"));
        assert!(p.ends_with("Query:\n\n### Preceding Context : the query\n\n### Legal Passage :"));
        assert!(!p.contains("{Context}") && !p.contains("{Passage}"));
    }

    #[test]
    fn q2d_cot_layout() {
        let t = PromptTemplate::q2d_cot(examples(true)).unwrap();
        let p = t.render("the query", None).unwrap();
        assert_eq!(p.matches("### Preceding Context").count(), 4);
        assert_eq!(p.matches("### Step3: <output>").count(), 3);
        assert!(p.contains("### Step1: step one 2\n\n### Step2: step two 2\n\n### Step3: <output> example passage 2"));
        assert!(p.contains("please mark final output with '<output>' tag."));
        assert!(p.ends_with("### Legal Passage :"));

        let bare = PromptTemplate::q2d_cot(examples(false))
            .unwrap()
            .render("q", None)
            .unwrap();
        assert!(!bare.contains("### Step1:"));
        assert_eq!(bare.matches("### Step3: <output>").count(), 3);
    }

    #[test]
    fn few_shot_needs_three_examples() {
        let mut ex = examples(false);
        ex.pop();
        assert!(PromptTemplate::q2d(ex).is_err());
    }

    #[test]
    fn missing_context_is_error() {
        let err = PromptTemplate::gure().render("  ", None).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingPlaceholder {
                placeholder: "{Context}",
                ..
            }
        ));
        assert!(PromptTemplate::gure().render("x", Some("")).is_err());
    }

    #[test]
    fn template_hash_tracks_examples() {
        let a = PromptTemplate::q2d(examples(false)).unwrap();
        let mut ex = examples(false);
        ex[0].passage.push('!');
        let b = PromptTemplate::q2d(ex).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(
            a.hash(),
            PromptTemplate::q2d(examples(false)).unwrap().hash()
        );
        assert_ne!(PromptTemplate::gure().hash(), a.hash());
    }

    #[test]
    fn cot_parsing() {
        assert_eq!(
            parse_cot_output("Step1… <output> the rule is X"),
            CotOutput {
                passage: "the rule is X".into(),
                missing_tag: false
            }
        );
        assert_eq!(
            parse_cot_output(" just text "),
            CotOutput {
                passage: "just text".into(),
                missing_tag: true
            }
        );
        assert_eq!(
            parse_cot_output("draft <output> first try\nrevised <output> final answer"),
            CotOutput {
                passage: "final answer".into(),
                missing_tag: false
            }
        );
        assert_eq!(
            parse_cot_output("<output> wrapped </output>").passage,
            "wrapped"
        );
    }

    #[test]
    fn scaffolding_is_stripped() {
        assert_eq!(
            strip_scaffolding("### Legal Passage : The rule."),
            "The rule."
        );
        assert_eq!(
            strip_scaffolding("The rule.\n\n### Preceding Context : more\n\n### Legal Passage : x"),
            "The rule."
        );
        assert_eq!(strip_scaffolding("  plain  "), "plain");
    }
}
