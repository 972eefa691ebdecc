use std::path::Path;

use crate::trace::{read_token_stream, TokenEvent, TraceError};

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("token source failed: {0}")]
    Other(String),
}

/// Anything that yields generated tokens one at a time: a scripted replay,
/// the simulator or a live stream.
pub trait TokenSource {
    /// `Ok(None)` once the source has nothing more to emit.
    fn next_token(&mut self) -> Result<Option<TokenEvent>, SourceError>;
}

/// Replays a fixed list of token events.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedSource {
    tokens: Vec<TokenEvent>,
    pos: usize,
}

impl ScriptedSource {
    pub fn new(tokens: Vec<TokenEvent>) -> Self {
        Self { tokens, pos: 0 }
    }

    /// Loads a token-stream file. Text is required on every token.
    pub fn from_file(path: &Path) -> Result<Self, SourceError> {
        let tokens = read_token_stream(path)?;
        if let Some(tok) = tokens.iter().find(|t| t.text.is_none()) {
            return Err(SourceError::Other(format!(
                "{}: token {} has no text",
                path.display(),
                tok.index
            )));
        }
        Ok(Self::new(tokens))
    }

    pub fn tokens(&self) -> &[TokenEvent] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<TokenEvent> {
        self.tokens
    }

    pub fn rewind(&mut self) {
        self.pos = 0;
    }
}

impl TokenSource for ScriptedSource {
    fn next_token(&mut self) -> Result<Option<TokenEvent>, SourceError> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        Ok(tok)
    }
}
