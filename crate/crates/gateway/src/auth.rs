//! Static bearer tokens.
//!
//! ```json
//! {"tokens": [{"token": "s3cret", "user_id": "root", "role": "super_admin"}]}
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Caller, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub token: String,
    pub user_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TokenFile {
    pub tokens: Vec<TokenEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    by_token: HashMap<String, Caller>,
}

#[derive(Debug, thiserror::Error)]
pub enum TokenError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("token for {0:?} is empty or duplicated")]
    BadToken(String),
}

impl TokenTable {
    pub fn from_entries(entries: impl IntoIterator<Item = TokenEntry>) -> Result<Self, TokenError> {
        let mut by_token = HashMap::new();
        for e in entries {
            if e.token.is_empty() || by_token.contains_key(&e.token) {
                return Err(TokenError::BadToken(e.user_id));
            }
            by_token.insert(e.token, Caller::new(e.user_id, e.role));
        }
        Ok(Self { by_token })
    }

    pub fn load(path: &Path) -> Result<Self, TokenError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| TokenError::Io {
            path: p.clone(),
            source,
        })?;
        let file: TokenFile = serde_json::from_str(&text).map_err(|e| TokenError::Parse {
            path: p,
            message: e.to_string(),
        })?;
        Self::from_entries(file.tokens)
    }

    pub fn lookup(&self, token: &str) -> Option<&Caller> {
        self.by_token.get(token)
    }

    pub fn len(&self) -> usize {
        self.by_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.json");
        std::fs::write(
            &path,
            r#"{"tokens":[{"token":"a","user_id":"root","role":"super_admin"},{"token":"b","user_id":"uma","role":"user"}]}"#,
        )
        .unwrap();
        let t = TokenTable::load(&path).unwrap();
        assert_eq!(t.lookup("a"), Some(&Caller::new("root", Role::SuperAdmin)));
        assert_eq!(t.lookup("b").unwrap().role, Role::User);
        assert!(t.lookup("c").is_none());

        let dup = (0..2).map(|i| TokenEntry {
            token: "x".into(),
            user_id: format!("u{i}"),
            role: Role::User,
        });
        assert!(matches!(
            TokenTable::from_entries(dup),
            Err(TokenError::BadToken(_))
        ));
    }
}
