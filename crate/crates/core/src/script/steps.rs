use super::{Script, ScriptError};

/// Parses a numbered step list ("1. get out of car\n2. ...") into a chain.
/// Steps may also be separated by `;` on a single line. Numbering is optional
/// and only the listed order matters.
pub fn parse_steps(goal: &str, text: &str) -> Result<Script, ScriptError> {
    let mut labels = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        for part in line.split(';') {
            let part = part.trim();
            if part.is_empty() || part == "..." {
                continue;
            }
            let label = strip_number(part);
            if label.is_empty() {
                return Err(ScriptError::Syntax {
                    line: line_no + 1,
                    column: 1,
                    message: format!("step {part:?} has no text"),
                });
            }
            labels.push(label.to_owned());
        }
    }
    Script::chain(goal, labels)
}

fn strip_number(step: &str) -> &str {
    let digits = step.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return step;
    }
    let rest = &step[digits..];
    match rest.chars().next() {
        Some('.') | Some(')') | Some(':') => rest[1..].trim(),
        _ => step,
    }
}
