//! Scripted token streams that solve a task and then keep talking.

use super::SimError;
use crate::suppression::ScriptedSource;
use crate::trace::TokenEvent;

/// Scripted tokens are stamped at this rate.
const SCRIPT_TOKENS_PER_S: f64 = 20.0;

/// Filler a babbling model emits after the solution: blank lines, stray
/// indentation and commented-out usage examples. Every prefix of a filler
/// sequence leaves Python source syntactically intact.
const FILLER: &[&str] = &[
    "\n",
    "# Example usage:\n",
    "  ",
    "\n",
    "# Test the function\n",
    "    ",
    "# print(result)\n",
    "\n",
    " ",
    "# Output:\n",
    "# Expected output above\n",
    "\n",
    "  ",
    "  ",
    "# Additional test cases\n",
    "# assert ...\n",
];

pub fn babble_filler(count: usize) -> Vec<String> {
    FILLER
        .iter()
        .cycle()
        .take(count)
        .map(|s| s.to_string())
        .collect()
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits source text into token-like pieces: words (absorbing one leading
/// space), whitespace runs and single punctuation characters. A newline is
/// glued onto the preceding token. Concatenating the pieces gives back the
/// input.
pub fn tokenize_code(code: &str) -> Vec<String> {
    let chars: Vec<char> = code.chars().collect();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            match out.last_mut() {
                Some(last) if !last.ends_with('\n') => last.push('\n'),
                _ => out.push("\n".into()),
            }
            i += 1;
        } else if c == ' ' || c == '\t' {
            let start = i;
            while i < chars.len() && (chars[i] == ' ' || chars[i] == '\t') {
                i += 1;
            }
            let mut tok: String = chars[start..i].iter().collect();
            if tok == " " && i < chars.len() && is_word(chars[i]) {
                while i < chars.len() && is_word(chars[i]) {
                    tok.push(chars[i]);
                    i += 1;
                }
            }
            out.push(tok);
        } else if is_word(c) {
            let start = i;
            while i < chars.len() && is_word(chars[i]) {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

/// Solution tokens followed by `babble_tokens` filler tokens, cut at
/// `budget`. A stream shorter than the budget ends with an empty-text
/// end-of-sequence token; a stream that reaches the budget never does.
pub fn generate_babbler_stream(
    solution_tokens: &[String],
    babble_tokens: usize,
    budget: usize,
) -> Result<ScriptedSource, SimError> {
    if !solution_tokens.last().is_some_and(|t| t.contains('\n')) {
        return Err(SimError::SolutionWithoutNewline);
    }
    let mut texts: Vec<String> = solution_tokens.to_vec();
    texts.extend(babble_filler(babble_tokens));
    let padded = texts.len() >= budget;
    texts.truncate(budget);
    if !padded {
        texts.push(String::new());
    }
    let n = texts.len();
    let tokens = texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| TokenEvent {
            index: i as u32 + 1,
            t: (i + 1) as f64 / SCRIPT_TOKENS_PER_S,
            text: Some(text),
            eos: !padded && i + 1 == n,
        })
        .collect();
    Ok(ScriptedSource::new(tokens))
}
