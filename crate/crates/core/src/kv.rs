//! The small `key = value` text grammar shared by scenario files, toy
//! simulator configs and column layouts.
//!
//! ```text
//! # comment
//! model = 199
//! [subsequence]
//! tstep_n = 300 600
//! nstep_n = 20 130
//! ```
//!
//! Lines before the first `[section]` header belong to an unnamed section.
//! Sections may repeat; order is preserved.

use thiserror::Error;

use crate::numfmt::parse_real;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value` or `[section]`")]
    Syntax { line: usize },
    #[error("line {line}: invalid value for `{key}`: {value}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("missing key `{key}` in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// Empty for the leading unnamed section.
    pub name: String,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut sections = vec![Section {
            name: String::new(),
            entries: Vec::new(),
        }];
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or(KvError::Syntax { line: line_no })?
                    .trim();
                if name.is_empty() {
                    return Err(KvError::Syntax { line: line_no });
                }
                sections.push(Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(KvError::Syntax { line: line_no })?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(KvError::Syntax { line: line_no });
            }
            let current = sections.last_mut().expect("at least one section");
            if current.entries.iter().any(|e| e.key == key) {
                return Err(KvError::DuplicateKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            current.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: line_no,
            });
        }
        Ok(Document { sections })
    }

    /// The leading unnamed section.
    pub fn root(&self) -> &Section {
        &self.sections[0]
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    /// The single section with this name, if any. Later duplicates are ignored.
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry, KvError> {
        self.get(key).ok_or_else(|| KvError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }
}

impl Entry {
    fn invalid(&self) -> KvError {
        KvError::InvalidValue {
            line: self.line,
            key: self.key.clone(),
            value: self.value.clone(),
        }
    }

    pub fn real(&self) -> Result<f64, KvError> {
        parse_real(&self.value).ok_or_else(|| self.invalid())
    }

    pub fn reals(&self) -> Result<Vec<f64>, KvError> {
        self.value
            .split_whitespace()
            .map(|tok| parse_real(tok).ok_or_else(|| self.invalid()))
            .collect()
    }

    pub fn int<T: std::str::FromStr>(&self) -> Result<T, KvError> {
        self.value.parse().map_err(|_| self.invalid())
    }

    pub fn ints<T: std::str::FromStr>(&self) -> Result<Vec<T>, KvError> {
        self.value
            .split_whitespace()
            .map(|tok| tok.parse().map_err(|_| self.invalid()))
            .collect()
    }

    /// Accepts `true/false`, `yes/no`, `1/0` and the Fortran `.t./.f.` forms.
    pub fn boolean(&self) -> Result<bool, KvError> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | ".t." | ".true." => Ok(true),
            "false" | "no" | "0" | ".f." | ".false." => Ok(false),
            _ => Err(self.invalid()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let doc = Document::parse(
            "# header\nmodel = 199\n\n[subsequence]\ntstep_n = 1 2 # trailing\nnstep_n = 3 4\n[subsequence]\ntstep_n = 5\nnstep_n = 1\n",
        )
        .unwrap();
        assert_eq!(doc.root().require("model").unwrap().int::<u32>().unwrap(), 199);
        let subs: Vec<_> = doc.sections_named("subsequence").collect();
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].require("tstep_n").unwrap().reals().unwrap(), vec![1.0, 2.0]);
        assert_eq!(subs[1].require("nstep_n").unwrap().ints::<u64>().unwrap(), vec![1]);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        assert_eq!(Document::parse("a = 1\nnonsense\n"), Err(KvError::Syntax { line: 2 }));
        assert_eq!(Document::parse("[open\n"), Err(KvError::Syntax { line: 1 }));
        assert!(matches!(
            Document::parse("a = 1\na = 2\n"),
            Err(KvError::DuplicateKey { line: 2, .. })
        ));
    }

    #[test]
    fn booleans() {
        let doc = Document::parse("a = .t.\nb = .F.\nc = maybe\n").unwrap();
        let root = doc.root();
        assert!(root.require("a").unwrap().boolean().unwrap());
        assert!(!root.require("b").unwrap().boolean().unwrap());
        assert!(root.require("c").unwrap().boolean().is_err());
    }
}
