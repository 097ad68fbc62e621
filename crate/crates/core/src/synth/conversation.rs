use serde::{Deserialize, Serialize};

use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Human,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

/// Alternating Human/Assistant turns, Human first, at least two turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    turns: Vec<Turn>,
}

impl Conversation {
    pub fn new(turns: Vec<Turn>) -> Result<Self, SynthError> {
        match turns.first() {
            None => return Err(SynthError::NoTurnsFound),
            Some(t) if t.role == Role::Assistant => return Err(SynthError::DanglingAssistant),
            _ => {}
        }
        if let Some(i) = turns.windows(2).position(|w| w[0].role == w[1].role) {
            return Err(SynthError::RoleOrderViolation {
                turn: i + 1,
                role: turns[i + 1].role,
            });
        }
        if turns.len() < 2 {
            return Err(SynthError::TooFewTurns(turns.len()));
        }
        Ok(Self { turns })
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// Number of complete question/answer pairs.
    pub fn qa_pairs(&self) -> usize {
        self.turns.len() / 2
    }
}

const IMAGE_TOKEN: &str = "<image>";

// Recognises "User:", "Assistant:", and the bold variants "**User**:" and
// "**User:**". Returns the role and the remainder of the line.
fn role_prefix(line: &str) -> Option<(Role, &str)> {
    let trimmed = line.trim_start();
    let (bold, rest) = match trimmed.strip_prefix("**") {
        Some(r) => (true, r),
        None => (false, trimmed),
    };
    let (role, rest) = if let Some(r) = rest.strip_prefix("User") {
        (Role::Human, r)
    } else {
        let r = rest.strip_prefix("Assistant")?;
        (Role::Assistant, r)
    };
    let rest = if bold {
        if let Some(r) = rest.strip_prefix("**:") {
            r
        } else {
            rest.strip_prefix(":**")?
        }
    } else {
        rest.strip_prefix(':')?
    };
    Some((role, rest))
}

// Drops a leading image placeholder, with the literal "\n" escape or real
// whitespace that follows it. The instruct writer re-inserts it.
fn strip_image_token(text: &str) -> &str {
    match text.strip_prefix(IMAGE_TOKEN) {
        Some(rest) => rest.strip_prefix("\\n").unwrap_or(rest).trim_start(),
        None => text,
    }
}

/// Parses generated text into turns. Lines that open with a role prefix start
/// a new turn; other lines continue the current turn (lines before the first
/// turn are ignored). Each turn is trimmed.
pub fn parse_conversation(text: &str) -> Result<Conversation, SynthError> {
    let mut turns: Vec<(Role, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        match role_prefix(line) {
            Some((role, rest)) => turns.push((role, vec![rest])),
            None => {
                if let Some((_, lines)) = turns.last_mut() {
                    lines.push(line);
                }
            }
        }
    }
    let turns = turns
        .into_iter()
        .map(|(role, lines)| {
            let joined = lines.join("\n");
            let mut body = joined.trim();
            if role == Role::Human {
                body = strip_image_token(body);
            }
            Turn {
                role,
                text: body.to_string(),
            }
        })
        .collect();
    Conversation::new(turns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes() {
        assert_eq!(role_prefix("User: hi"), Some((Role::Human, " hi")));
        assert_eq!(role_prefix("**User**: hi"), Some((Role::Human, " hi")));
        assert_eq!(role_prefix("**Assistant:** ok"), Some((Role::Assistant, " ok")));
        assert_eq!(role_prefix("  Assistant:x"), Some((Role::Assistant, "x")));
        assert_eq!(role_prefix("Users: hi"), None);
        assert_eq!(role_prefix("**User** hi"), None);
        assert_eq!(role_prefix("The User: said"), None);
    }

    #[test]
    fn dangling_assistant() {
        assert!(matches!(
            parse_conversation("Assistant: hi"),
            Err(SynthError::DanglingAssistant)
        ));
    }

    #[test]
    fn no_turns() {
        assert!(matches!(parse_conversation(""), Err(SynthError::NoTurnsFound)));
        assert!(matches!(
            parse_conversation("just some prose\nwithout roles"),
            Err(SynthError::NoTurnsFound)
        ));
    }

    #[test]
    fn consecutive_assistants() {
        let err = parse_conversation("User: q\nAssistant: a\nAssistant: b").unwrap_err();
        assert!(matches!(
            err,
            SynthError::RoleOrderViolation {
                turn: 2,
                role: Role::Assistant
            }
        ));
    }

    #[test]
    fn single_question_is_too_short() {
        assert!(matches!(
            parse_conversation("User: only a question"),
            Err(SynthError::TooFewTurns(1))
        ));
    }

    #[test]
    fn multi_line_answer() {
        let text = "Here is the conversation:\n\nUser: What is shown?\nAssistant: Line one.\nLine two.\nLine three.\n";
        let conv = parse_conversation(text).unwrap();
        assert_eq!(conv.turns().len(), 2);
        assert_eq!(conv.turns()[0].text, "What is shown?");
        assert_eq!(conv.turns()[1].text, "Line one.\nLine two.\nLine three.");
    }

    #[test]
    fn image_token_variants() {
        for text in [
            "User: <image>\\nWhere?\nAssistant: There.",
            "User: <image>\nWhere?\nAssistant: There.",
            "User: Where?\nAssistant: There.",
        ] {
            let conv = parse_conversation(text).unwrap();
            assert_eq!(conv.turns()[0].text, "Where?", "{text:?}");
        }
    }

    #[test]
    fn bold_markers() {
        let conv = parse_conversation("**User**: a?\n**Assistant**: b.\n**User:** c?\n**Assistant:** d.").unwrap();
        let texts: Vec<_> = conv.turns().iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["a?", "b.", "c?", "d."]);
        assert_eq!(conv.qa_pairs(), 2);
    }
}
