use serde::{Deserialize, Serialize};

/// Which part of the accumulated output is handed to the validators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeExtraction {
    /// The whole accumulated text.
    #[default]
    Raw,
    /// The last fenced code block; an unterminated block counts.
    FencedBlock,
}

impl std::str::FromStr for CodeExtraction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(CodeExtraction::Raw),
            "fenced-block" | "fenced" => Ok(CodeExtraction::FencedBlock),
            other => Err(format!("unknown extraction mode {other:?}")),
        }
    }
}

pub fn extract_code(text: &str, mode: CodeExtraction) -> Option<&str> {
    match mode {
        CodeExtraction::Raw => Some(text),
        CodeExtraction::FencedBlock => last_fenced_block(text),
    }
}

fn last_fenced_block(text: &str) -> Option<&str> {
    let mut open_body: Option<usize> = None;
    let mut last: Option<&str> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let is_fence = line.trim_start().starts_with("```");
        // A fence line only counts once it is complete.
        if is_fence && line.ends_with('\n') {
            match open_body.take() {
                Some(start) => last = Some(&text[start..offset]),
                None => open_body = Some(offset + line.len()),
            }
        }
        offset += line.len();
    }
    match open_body {
        Some(start) => Some(&text[start..]),
        None => last,
    }
}
