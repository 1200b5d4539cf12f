//! Dataset card (`README.md`): study metadata harvesting, answer
//! collection and rendering.

mod answers;
mod biostudies;
mod render;

use thiserror::Error;

pub use answers::{prompt_missing, Answers, Prompter, TerminalPrompter};
pub use biostudies::{harvest_study_metadata, is_valid_accession, BIOSTUDIES_API_BASE};
pub use render::{render_card, CARD_FILE_NAME};

#[derive(Debug, Error)]
pub enum CardError {
    #[error("accession {0:?} is neither an IDR study (idrNNNN) nor a BioStudies accession (S-...)")]
    InvalidAccession(String),
    #[error("study metadata service unreachable: {0}")]
    SourceUnreachable(String),
    #[error("unknown accession {0:?}")]
    UnknownAccession(String),
    #[error("malformed study metadata: {0}")]
    Malformed(String),
    #[error("required card field {0:?} has no value")]
    MissingRequiredField(&'static str),
    #[error("answers line {line}: {reason}")]
    InvalidAnswers { line: usize, reason: String },
    #[error("reading answers: {0}")]
    Io(#[from] std::io::Error),
}

/// Hub size bucket for the total number of manifest rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub enum SizeCategory {
    #[default]
    Under1K,
    From1KTo10K,
    From10KTo100K,
    From100KTo1M,
    From1MTo10M,
    From10MTo100M,
    From100MTo1B,
    From1BTo10B,
    From10BTo100B,
    From100BTo1T,
    Over1T,
}

impl SizeCategory {
    pub fn from_rows(rows: u64) -> Self {
        use SizeCategory::*;
        const ORDER: [SizeCategory; 11] = [
            Under1K, From1KTo10K, From10KTo100K, From100KTo1M, From1MTo10M, From10MTo100M,
            From100MTo1B, From1BTo10B, From10BTo100B, From100BTo1T, Over1T,
        ];
        let mut bound = 1_000u64;
        for cat in &ORDER[..10] {
            if rows < bound {
                return *cat;
            }
            bound = bound.saturating_mul(10);
        }
        Over1T
    }

    pub fn label(self) -> &'static str {
        use SizeCategory::*;
        match self {
            Under1K => "n<1K",
            From1KTo10K => "1K<n<10K",
            From10KTo100K => "10K<n<100K",
            From100KTo1M => "100K<n<1M",
            From1MTo10M => "1M<n<10M",
            From10MTo100M => "10M<n<100M",
            From100MTo1B => "100M<n<1B",
            From1BTo10B => "1B<n<10B",
            From10BTo100B => "10B<n<100B",
            From100BTo1T => "100B<n<1T",
            Over1T => "n>1T",
        }
    }
}

/// Card metadata as far as it is known; harvesters fill what they can.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialCardFields {
    pub license: Option<String>,
    pub pretty_name: Option<String>,
    pub tags: Vec<String>,
    pub authors: Vec<String>,
    pub citation: Option<String>,
    pub description: Option<String>,
    pub source_links: Vec<String>,
    /// Study attributes with no card field, kept verbatim.
    pub source_attributes: Vec<(String, String)>,
    pub size_category: SizeCategory,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CardFields {
    pub license: String,
    pub pretty_name: String,
    pub tags: Vec<String>,
    pub authors: Vec<String>,
    pub citation: String,
    pub description: String,
    pub source_links: Vec<String>,
    pub source_attributes: Vec<(String, String)>,
    pub size_category: SizeCategory,
}

/// Fields that must be present before a card can be rendered.
pub const REQUIRED_FIELDS: [&str; 5] = ["license", "pretty_name", "authors", "citation", "description"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_buckets() {
        let cases = [
            (0, "n<1K"),
            (999, "n<1K"),
            (1_000, "1K<n<10K"),
            (9_999, "1K<n<10K"),
            (10_000, "10K<n<100K"),
            (999_999, "100K<n<1M"),
            (1_000_000, "1M<n<10M"),
            (999_999_999_999, "100B<n<1T"),
            (1_000_000_000_000, "n>1T"),
            (u64::MAX, "n>1T"),
        ];
        for (rows, label) in cases {
            assert_eq!(SizeCategory::from_rows(rows).label(), label, "rows={rows}");
        }
    }
}
