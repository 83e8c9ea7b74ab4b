//! Line-based structured text shared by the on-disk formats.
//!
//! The format is deliberately tiny: `key: value` headers in a fixed order,
//! list fields as `key:` followed by `  - [..]` items, two-space indent,
//! trailing newline. The writer is byte-deterministic and the parser only
//! accepts what the writer emits (plus insignificant value whitespace).

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextError {
    #[error("line {line}: expected `{expected}`")]
    ExpectedKey { line: usize, expected: String },
    #[error("line {line}: malformed list item")]
    BadItem { line: usize },
    #[error("line {line}: {msg}")]
    BadValue { line: usize, msg: String },
    #[error("unexpected trailing content at line {line}")]
    Trailing { line: usize },
}

pub struct Lines<'a> {
    items: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Self {
        Lines { items: text.lines().collect(), pos: 0 }
    }

    pub fn line_no(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).copied()
    }

    /// Consumes `key: value` and returns the raw value.
    pub fn scalar(&mut self, key: &str) -> Result<&'a str, TextError> {
        let line = self.line_no();
        let raw = self.peek().ok_or_else(|| TextError::ExpectedKey { line, expected: key.to_string() })?;
        let prefix = format!("{}:", key);
        let rest = raw
            .strip_prefix(&prefix)
            .ok_or_else(|| TextError::ExpectedKey { line, expected: key.to_string() })?;
        self.pos += 1;
        Ok(rest.trim())
    }

    /// Consumes `key:` (or `key: []`) plus any following `  - ...` items.
    pub fn list(&mut self, key: &str) -> Result<Vec<&'a str>, TextError> {
        let header = self.scalar(key)?;
        if header == "[]" {
            return Ok(Vec::new());
        }
        if !header.is_empty() {
            return Err(TextError::BadValue {
                line: self.line_no() - 1,
                msg: format!("list field `{}` takes no inline value", key),
            });
        }
        let mut out = Vec::new();
        while let Some(raw) = self.peek() {
            if let Some(item) = raw.strip_prefix("  - ") {
                out.push(item.trim());
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(out)
    }

    pub fn finish(&self) -> Result<(), TextError> {
        if self.pos < self.items.len() {
            Err(TextError::Trailing { line: self.line_no() })
        } else {
            Ok(())
        }
    }
}

/// Parses `[a, b, c]` into raw element strings; `[]` gives an empty vec.
pub fn bracket_list(text: &str) -> Option<Vec<String>> {
    let inner = text.strip_prefix('[')?.strip_suffix(']')?;
    let inner = inner.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    Some(inner.split(',').map(|part| part.trim().to_string()).collect())
}

pub fn unquote(text: &str) -> Option<&str> {
    text.strip_prefix('"')?.strip_suffix('"')
}

pub fn quote(text: &str) -> String {
    format!("\"{}\"", text)
}

pub fn parse_usize(text: &str, line: usize) -> Result<usize, TextError> {
    text.parse()
        .map_err(|_| TextError::BadValue { line, msg: format!("expected unsigned integer, got `{}`", text) })
}
