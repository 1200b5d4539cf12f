//! Filling required card fields from an answers file or interactive prompts.
//!
//! Answers file format: UTF-8, one `key = value` per line. `#` starts a
//! comment line. In values, `\n` is a newline and `\\` a backslash; list
//! fields (`tags`, `authors`, `source_links`) separate items with `;`.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::Path;

use super::{CardError, CardFields, PartialCardFields};

const KEYS: [&str; 7] = ["license", "pretty_name", "tags", "authors", "citation", "description", "source_links"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Answers {
    values: BTreeMap<String, String>,
}

fn unescape(raw: &str, line: usize) -> Result<String, CardError> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            other => {
                return Err(CardError::InvalidAnswers {
                    line,
                    reason: format!("unknown escape \\{}", other.map(String::from).unwrap_or_default()),
                })
            }
        }
    }
    Ok(out)
}

impl Answers {
    pub fn parse(text: &str) -> Result<Self, CardError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.trim_start_matches('\u{feff}').lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(CardError::InvalidAnswers { line, reason: "expected `key = value`".into() });
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(CardError::InvalidAnswers { line, reason: format!("unknown key {key:?}") });
            }
            if values.insert(key.to_string(), unescape(value.trim(), line)?).is_some() {
                return Err(CardError::InvalidAnswers { line, reason: format!("duplicate key {key:?}") });
            }
        }
        Ok(Answers { values })
    }

    pub fn load(path: &Path) -> Result<Self, CardError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Non-empty answer for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.trim().is_empty())
    }

    fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(split_list)
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

pub trait Prompter {
    /// Ask for one field; an empty reply means "no answer".
    fn ask(&mut self, field: &'static str, question: &str) -> io::Result<String>;
}

/// Prompts on stderr and reads one line per answer from stdin. Accepts the
/// same escapes as the answers file.
pub struct TerminalPrompter;

impl Prompter for TerminalPrompter {
    fn ask(&mut self, field: &'static str, question: &str) -> io::Result<String> {
        let mut err = io::stderr().lock();
        write!(err, "{question} [{field}]: ")?;
        err.flush()?;
        let mut line = String::new();
        io::stdin().lock().read_line(&mut line)?;
        unescape(line.trim(), 0).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))
    }
}

fn question(field: &str) -> &'static str {
    match field {
        "license" => "SPDX license identifier (e.g. CC-BY-4.0)",
        "pretty_name" => "Human-readable dataset name",
        "authors" => "Authors, separated by ';'",
        "citation" => "Citation text or BibTeX (use \\n for line breaks)",
        _ => "Short dataset description",
    }
}

fn required(
    field: &'static str,
    answer: Option<&str>,
    harvested: Option<String>,
    prompter: &mut Option<&mut dyn Prompter>,
) -> Result<String, CardError> {
    if let Some(a) = answer {
        return Ok(a.to_string());
    }
    if let Some(h) = harvested.filter(|h| !h.trim().is_empty()) {
        return Ok(h);
    }
    match prompter {
        Some(p) => {
            let reply = p.ask(field, question(field))?;
            if reply.trim().is_empty() {
                Err(CardError::MissingRequiredField(field))
            } else {
                Ok(reply)
            }
        }
        None => Err(CardError::MissingRequiredField(field)),
    }
}

/// Complete `fields`. An answer replaces the harvested value; a prompt is
/// only issued for a required field that is still empty. Without a
/// prompter, any such field is an error.
pub fn prompt_missing(
    fields: PartialCardFields,
    answers: &Answers,
    mut prompter: Option<&mut dyn Prompter>,
) -> Result<CardFields, CardError> {
    let license = required("license", answers.get("license"), fields.license, &mut prompter)?;
    let pretty_name = required("pretty_name", answers.get("pretty_name"), fields.pretty_name, &mut prompter)?;
    let authors = match answers.list("authors").filter(|a| !a.is_empty()) {
        Some(a) => a,
        None if !fields.authors.is_empty() => fields.authors,
        None => split_list(&required("authors", None, None, &mut prompter)?),
    };
    if authors.is_empty() {
        return Err(CardError::MissingRequiredField("authors"));
    }
    let citation = required("citation", answers.get("citation"), fields.citation, &mut prompter)?;
    let description = required("description", answers.get("description"), fields.description, &mut prompter)?;
    Ok(CardFields {
        license: license.trim().to_string(),
        pretty_name: pretty_name.split_whitespace().collect::<Vec<_>>().join(" "),
        tags: answers.list("tags").unwrap_or(fields.tags),
        authors,
        citation,
        description,
        source_links: answers.list("source_links").unwrap_or(fields.source_links),
        source_attributes: fields.source_attributes,
        size_category: fields.size_category,
    })
}
