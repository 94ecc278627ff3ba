//! Rule-based redaction of personal details in report text.

use std::path::Path;

use regex::Regex;

use crate::error::{CliError, CliResult};

/// Ordered `(pattern, placeholder)` substitutions.
#[derive(Debug, Clone, Default)]
pub struct PatternTable {
    rules: Vec<(Regex, String)>,
}

impl PatternTable {
    /// Builds the table, rejecting invalid regexes and placeholders that
    /// some pattern would match again (which would break idempotence).
    pub fn new<I, P, S>(rules: I) -> CliResult<Self>
    where
        I: IntoIterator<Item = (P, S)>,
        P: AsRef<str>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        for (pattern, placeholder) in rules {
            let re = Regex::new(pattern.as_ref())
                .map_err(|e| CliError::config(format!("invalid pattern {:?}: {e}", pattern.as_ref())))?;
            out.push((re, placeholder.into()));
        }
        for (_, placeholder) in &out {
            if let Some((re, _)) = out.iter().find(|(re, _)| re.is_match(placeholder)) {
                return Err(CliError::config(format!(
                    "placeholder {placeholder:?} is matched by pattern {:?}",
                    re.as_str()
                )));
            }
        }
        Ok(Self { rules: out })
    }

    /// Parses `regex<TAB>placeholder` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (pattern, placeholder) = line
                .split_once('\t')
                .ok_or_else(|| CliError::config(format!("pattern line {} has no tab separator", n + 1)))?;
            rules.push((pattern.to_string(), placeholder.to_string()));
        }
        Self::new(rules)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn apply(&self, text: &str) -> String {
        let mut out = text.to_string();
        for (re, placeholder) in &self.rules {
            out = re.replace_all(&out, regex::NoExpand(placeholder)).into_owned();
        }
        out
    }
}
