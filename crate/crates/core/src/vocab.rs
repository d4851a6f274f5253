use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Ordered token symbols with the two sentinels every sequence needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    mask_id: TokenId,
    pad_id: TokenId,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, mask_id: TokenId, pad_id: TokenId) -> Result<Self> {
        if tokens.len() < 3 {
            return Err(Error::config(format!("vocabulary needs at least 3 tokens, got {}", tokens.len())));
        }
        if mask_id == pad_id {
            return Err(Error::config("mask and pad sentinels must differ"));
        }
        if mask_id >= tokens.len() || pad_id >= tokens.len() {
            return Err(Error::config("sentinel index outside vocabulary"));
        }
        Ok(Self { tokens, mask_id, pad_id })
    }

    /// `size` anonymous symbols `t0, t1, ...` with mask at 0 and pad at 1.
    pub fn synthetic(size: usize) -> Result<Self> {
        let tokens = (0..size)
            .map(|i| match i {
                0 => "<mask>".to_string(),
                1 => "<pad>".to_string(),
                _ => format!("t{i}"),
            })
            .collect();
        Self::new(tokens, 0, 1)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id_of(&self, symbol: &str) -> Option<TokenId> {
        self.tokens.iter().position(|t| t == symbol)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Renders token ids as a string; sentinels render as `_` (mask) and `~` (pad).
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| {
                if id == self.mask_id {
                    "_".to_string()
                } else if id == self.pad_id {
                    "~".to_string()
                } else {
                    self.symbol(id).unwrap_or("?").to_string()
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_vocabularies() {
        assert!(Vocabulary::synthetic(2).is_err());
        let toks: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert!(Vocabulary::new(toks.clone(), 1, 1).is_err());
        assert!(Vocabulary::new(toks.clone(), 0, 3).is_err());
        assert!(Vocabulary::new(toks, 0, 2).is_ok());
    }
}
