//! Value bank: the paired traditional/secular hypotheses scored against
//! every premise, together with the interview questions and factor loadings.
//!
//! Banks are declared in TOML so other value sets can be audited without
//! code changes. The vendored default lives in `data/default_bank.toml`.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// TOML source of the built-in bank.
pub const DEFAULT_BANK_TOML: &str = include_str!("../data/default_bank.toml");

/// Dimension id reserved for the general value prompt.
pub const GENERAL_ID: &str = "general";

/// Which pole of the traditional-secular axis a hypothesis affirms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Traditional,
    Secular,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Traditional, Polarity::Secular];

    /// Suffix used by stub marker tokens (`t` / `s`).
    pub fn short(self) -> char {
        match self {
            Polarity::Traditional => 't',
            Polarity::Secular => 's',
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Traditional => "traditional",
            Polarity::Secular => "secular",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDimension {
    pub id: String,
    pub wvs_value: String,
    pub question: String,
    pub traditional_hypothesis: String,
    pub secular_hypothesis: String,
    pub factor_loading: f64,
}

impl ValueDimension {
    pub fn hypothesis(&self, polarity: Polarity) -> &str {
        match polarity {
            Polarity::Traditional => &self.traditional_hypothesis,
            Polarity::Secular => &self.secular_hypothesis,
        }
    }
}

/// One flattened hypothesis ready for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub dimension_id: String,
    pub text: String,
    pub polarity: Polarity,
    pub loading: f64,
}

/// Position inside a bank file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub path: PathBuf,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.path.display(), self.line, self.column)
    }
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("cannot read value bank {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: parse error: {message}")]
    Parse { location: Location, message: String },
    #[error("{location}: duplicate dimension id `{id}`")]
    DuplicateId { location: Location, id: String },
    #[error("{location}: factor loading {loading} for `{id}` is outside (0, 1]")]
    LoadingOutOfRange {
        location: Location,
        id: String,
        loading: f64,
    },
    #[error("{location}: dimension `{id}` has identical traditional and secular hypotheses")]
    IdenticalHypotheses { location: Location, id: String },
    #[error("{location}: {what} must not be empty")]
    EmptyField { location: Location, what: String },
    #[error("{location}: dimension id `{id}` is reserved")]
    ReservedId { location: Location, id: String },
    #[error("{location}: bank has no dimensions")]
    NoDimensions { location: Location },
    #[error("{location}: general prompt duplicates the question of dimension `{id}`")]
    GeneralPromptRepeated { location: Location, id: String },
    #[error("cannot serialize value bank: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// An ordered, validated set of value dimensions plus the general prompt.
///
/// Immutable once built; share it freely between threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueBank {
    general_prompt: String,
    #[serde(rename = "dimension")]
    dimensions: Vec<ValueDimension>,
}

#[derive(Deserialize)]
struct RawBank {
    general_prompt: toml::Spanned<String>,
    #[serde(rename = "dimension", default)]
    dimensions: Vec<RawDimension>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDimension {
    id: toml::Spanned<String>,
    wvs_value: String,
    question: String,
    traditional_hypothesis: String,
    secular_hypothesis: String,
    factor_loading: toml::Spanned<f64>,
}

fn locate(path: &Path, text: &str, span: Range<usize>) -> Location {
    let offset = span.start.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = offset - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    Location {
        path: path.to_path_buf(),
        line,
        column,
    }
}

impl ValueBank {
    /// Builds a bank from in-memory parts, enforcing every invariant.
    pub fn new(general_prompt: String, dimensions: Vec<ValueDimension>) -> Result<Self, BankError> {
        let bank = ValueBank {
            general_prompt,
            dimensions,
        };
        // Validation lives in the loader; round-trip through it.
        Self::from_toml_str(&bank.to_toml()?, Path::new("<memory>"))
    }

    /// The built-in bank.
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_BANK_TOML, Path::new("<builtin>")).expect("vendored bank is valid")
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, BankError> {
        let raw: RawBank = toml::from_str(text).map_err(|e| BankError::Parse {
            location: locate(origin, text, e.span().unwrap_or(0..0)),
            message: e.message().to_string(),
        })?;

        let prompt_loc = locate(origin, text, raw.general_prompt.span());
        let general_prompt = raw.general_prompt.into_inner();
        if general_prompt.trim().is_empty() {
            return Err(BankError::EmptyField {
                location: prompt_loc,
                what: "general_prompt".into(),
            });
        }
        if raw.dimensions.is_empty() {
            return Err(BankError::NoDimensions {
                location: locate(origin, text, 0..0),
            });
        }

        let mut seen = HashSet::new();
        let mut dimensions = Vec::with_capacity(raw.dimensions.len());
        for raw_dim in raw.dimensions {
            let id_loc = locate(origin, text, raw_dim.id.span());
            let loading_loc = locate(origin, text, raw_dim.factor_loading.span());
            let id = raw_dim.id.into_inner();
            let loading = raw_dim.factor_loading.into_inner();

            if id.trim().is_empty() {
                return Err(BankError::EmptyField {
                    location: id_loc,
                    what: "id".into(),
                });
            }
            if id == GENERAL_ID {
                return Err(BankError::ReservedId { location: id_loc, id });
            }
            if !seen.insert(id.clone()) {
                return Err(BankError::DuplicateId { location: id_loc, id });
            }
            if !(loading > 0.0 && loading <= 1.0) {
                return Err(BankError::LoadingOutOfRange {
                    location: loading_loc,
                    id,
                    loading,
                });
            }
            for (what, value) in [
                ("question", &raw_dim.question),
                ("traditional_hypothesis", &raw_dim.traditional_hypothesis),
                ("secular_hypothesis", &raw_dim.secular_hypothesis),
            ] {
                if value.trim().is_empty() {
                    return Err(BankError::EmptyField {
                        location: id_loc,
                        what: format!("{what} of `{id}`"),
                    });
                }
            }
            if raw_dim.traditional_hypothesis == raw_dim.secular_hypothesis {
                return Err(BankError::IdenticalHypotheses { location: id_loc, id });
            }
            if raw_dim.question == general_prompt {
                return Err(BankError::GeneralPromptRepeated {
                    location: prompt_loc,
                    id,
                });
            }
            dimensions.push(ValueDimension {
                id,
                wvs_value: raw_dim.wvs_value,
                question: raw_dim.question,
                traditional_hypothesis: raw_dim.traditional_hypothesis,
                secular_hypothesis: raw_dim.secular_hypothesis,
                factor_loading: loading,
            });
        }

        Ok(ValueBank {
            general_prompt,
            dimensions,
        })
    }

    pub fn general_prompt(&self) -> &str {
        &self.general_prompt
    }

    pub fn dimensions(&self) -> &[ValueDimension] {
        &self.dimensions
    }

    pub fn dimension(&self, id: &str) -> Option<&ValueDimension> {
        self.dimensions.iter().find(|d| d.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.id == id)
    }

    pub fn loadings(&self) -> Vec<f64> {
        self.dimensions.iter().map(|d| d.factor_loading).collect()
    }

    /// Sum of all factor loadings; the largest magnitude any projection can reach.
    pub fn loading_total(&self) -> f64 {
        self.dimensions.iter().map(|d| d.factor_loading).sum()
    }

    /// Maps a hypothesis text back to its dimension and polarity.
    pub fn lookup_hypothesis(&self, text: &str) -> Option<(&ValueDimension, Polarity)> {
        self.dimensions.iter().find_map(|d| {
            Polarity::BOTH
                .into_iter()
                .find(|p| d.hypothesis(*p) == text)
                .map(|p| (d, p))
        })
    }

    /// Flattens the bank for scoring: dimension order, traditional before secular.
    pub fn hypothesis_pairs(&self) -> Vec<HypothesisEntry> {
        self.dimensions
            .iter()
            .flat_map(|d| {
                Polarity::BOTH.into_iter().map(move |p| HypothesisEntry {
                    dimension_id: d.id.clone(),
                    text: d.hypothesis(p).to_string(),
                    polarity: p,
                    loading: d.factor_loading,
                })
            })
            .collect()
    }

    pub fn to_toml(&self) -> Result<String, BankError> {
        Ok(toml::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), BankError> {
        std::fs::write(path, self.to_toml()?).map_err(|source| BankError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Reads and validates a bank file.
pub fn load_bank(path: &Path) -> Result<ValueBank, BankError> {
    let text = std::fs::read_to_string(path).map_err(|source| BankError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ValueBank::from_toml_str(&text, path)
}
