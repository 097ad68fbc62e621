use serde::{Deserialize, Serialize};

use super::SynthError;

/// Generation instruction sent as the system prompt to both providers.
pub const SYSTEM_PROMPT: &str = "You are an AI assistant specialized in biomedical topics.

You are provided with a text description (Figure Caption) of a figure image from a biomedical research paper. In some cases, you may have additional text (Figure Context) that mentions the image. Unfortunately, you don\u{2019}t have access to the actual image.

Your task is to generate questions and answers about the visual aspects of the image based on the provided description, which adhering to the following guidelines:

- Focus on the visual aspects of the image that can be inferred without referring to specific facts, terms, abbreviations, dates, numbers, or names.

- Avoid using phrases like \"mentioned\", \"caption\", or \"context\". Refer to the information as being \"in the image\".

- Ensure questions are diverse and cover a range of visual aspects of the image.

- Include at least 2-3 turns of questions and answers about the visual aspects of the image.

- Answer responsibly, avoiding overconfidence, and do not provide medical advice or diagnostic information. Encourage the user to consult a healthcare professional for advice.

Now, generate sample conversations based on these guidelines.";

/// One figure to synthesize a conversation for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSample {
    pub id: String,
    #[serde(alias = "image")]
    pub image_ref: String,
    #[serde(alias = "fig_caption")]
    pub caption: String,
    #[serde(default)]
    pub context_mentions: Vec<String>,
}

/// A curated (input, output) demonstration placed before the real sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Renders the sample the way the generators expect it: few-shot pairs
/// first, then the caption and one numbered line per in-context mention,
/// every section separated by a blank line.
pub fn build_prompt(sample: &CaptionSample, fewshots: &[FewShot]) -> Result<Prompt, SynthError> {
    if sample.caption.trim().is_empty() {
        return Err(SynthError::EmptyCaption(sample.id.clone()));
    }
    let mut sections: Vec<String> = Vec::with_capacity(2 * fewshots.len() + 1 + sample.context_mentions.len());
    for shot in fewshots {
        sections.push(shot.input.trim().to_string());
        sections.push(shot.output.trim().to_string());
    }
    sections.push(format!("Figure Caption: {}", sample.caption.trim()));
    for (k, mention) in sample.context_mentions.iter().enumerate() {
        sections.push(format!("In Context Mentioning #{}: {}", k + 1, mention.trim()));
    }
    Ok(Prompt {
        system: SYSTEM_PROMPT.to_string(),
        user: sections.join("\n\n"),
    })
}
