//! Parses a generated multi-turn conversation into role-tagged turns.

use medvl::synth::parse_conversation;

const TEXT: &str = "User: <image>\\nWhat imaging modality is this?
Assistant: This is an axial CT slice of the abdomen.
**User**: Is there free fluid?
**Assistant**: A small amount of fluid
sits in the right paracolic gutter.";

fn main() {
    match parse_conversation(TEXT) {
        Ok(conv) => {
            for turn in conv.turns() {
                println!("{:?}: {}", turn.role, turn.text);
            }
            println!("{} QA pairs", conv.qa_pairs());
        }
        Err(e) => eprintln!("parse failed: {e}"),
    }

    for bad in ["no markers here", "Assistant: answer first\nUser: question"] {
        println!("{bad:?} -> {}", parse_conversation(bad).unwrap_err());
    }
}
