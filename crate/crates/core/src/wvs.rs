//! Survey microdata ingest: complete-case filtering, midpoint recoding of each
//! item onto [-1, 1] (−1 = traditional pole), and axis projection.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::ValueBank;
use crate::projection::{project_wvs, AxisProjection};

/// Ordered answer options, traditional end first unless `invert` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub column: String,
    pub dimension_id: String,
    /// Options are `1..=n_options`. Mutually exclusive with `values`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_options: Option<u32>,
    /// Explicit ordered option codes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<i64>>,
    /// Set when higher codes are more traditional.
    #[serde(default)]
    pub invert: bool,
    #[serde(default)]
    pub missing_codes: Vec<i64>,
}

const NEGATIVE_SENTINELS: [i64; 5] = [-5, -4, -3, -2, -1];

impl VariableSpec {
    pub fn scale(column: &str, dimension_id: &str, n_options: u32, invert: bool) -> Self {
        VariableSpec {
            column: column.into(),
            dimension_id: dimension_id.into(),
            n_options: Some(n_options),
            values: None,
            invert,
            missing_codes: NEGATIVE_SENTINELS.to_vec(),
        }
    }

    /// Defaults for the five traditional-secular items of survey wave 7.
    pub fn defaults() -> Vec<VariableSpec> {
        vec![
            // 1 = not at all important .. 10 = very important
            VariableSpec::scale("Q164", "god", 10, true),
            // Autonomy index, -2 (obedience + faith) .. 2 (independence + determination)
            VariableSpec {
                column: "Y003".into(),
                dimension_id: "child".into(),
                n_options: None,
                values: Some(vec![-2, -1, 0, 1, 2]),
                invert: false,
                missing_codes: vec![-5, -4, -3],
            },
            // 1 = never justifiable .. 10 = always justifiable
            VariableSpec::scale("Q184", "abortion", 10, false),
            // 1 = very proud .. 4 = not at all proud
            VariableSpec::scale("Q254", "pride", 4, false),
            // 1 = good thing, 2 = don't mind, 3 = bad thing
            VariableSpec::scale("Q45", "authority", 3, false),
        ]
    }

    pub fn options(&self) -> Result<Vec<i64>, RecodeError> {
        let opts = match (&self.n_options, &self.values) {
            (Some(n), None) => (1..=i64::from(*n)).collect(),
            (None, Some(v)) => v.clone(),
            _ => {
                return Err(RecodeError::BadSpec(format!(
                    "{}: give exactly one of n_options or values",
                    self.column
                )))
            }
        };
        if opts.len() < 2 {
            return Err(RecodeError::BadSpec(format!(
                "{}: needs at least 2 options",
                self.column
            )));
        }
        let mut sorted = opts.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != opts.len() {
            return Err(RecodeError::BadSpec(format!("{}: repeated option code", self.column)));
        }
        if let Some(c) = opts.iter().find(|c| self.missing_codes.contains(c)) {
            return Err(RecodeError::BadSpec(format!(
                "{}: option {c} is also a missing code",
                self.column
            )));
        }
        Ok(opts)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RecodeError {
    #[error("code {0} marks a missing answer")]
    Missing(i64),
    #[error("code {0} is not an answer option")]
    NotAnOption(i64),
    #[error("invalid variable spec: {0}")]
    BadSpec(String),
}

/// Maps 1-based position `k` on an `n`-point scale to [-1, 1].
///
/// Odd scales put the middle option at 0; even scales put both middle
/// options at 0. Ends map to -1 and +1. A 2-point scale has no interior,
/// so its two options are the ends.
pub fn recode_position(k: usize, n: usize) -> f64 {
    assert!(n >= 2 && (1..=n).contains(&k), "position {k} outside 1..={n}");
    if n == 2 {
        return if k == 1 { -1.0 } else { 1.0 };
    }
    if n % 2 == 1 {
        let center = n.div_ceil(2);
        (k as f64 - center as f64) / (center - 1) as f64
    } else {
        let half = n / 2;
        if k <= half {
            (k as f64 - half as f64) / (half - 1) as f64
        } else {
            (k - half - 1) as f64 / (half - 1) as f64
        }
    }
}

pub fn recode_variable(raw: i64, spec: &VariableSpec) -> Result<f64, RecodeError> {
    if spec.missing_codes.contains(&raw) {
        return Err(RecodeError::Missing(raw));
    }
    let opts = spec.options()?;
    let idx = opts
        .iter()
        .position(|&o| o == raw)
        .ok_or(RecodeError::NotAnOption(raw))?;
    let n = opts.len();
    let k = if spec.invert { n - idx } else { idx + 1 };
    Ok(recode_position(k, n))
}

/// Comparison age groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBracket {
    #[serde(rename = "16-24")]
    From16To24,
    #[serde(rename = "25-34")]
    From25To34,
    #[serde(rename = "35-44")]
    From35To44,
    #[serde(rename = "45-54")]
    From45To54,
    #[serde(rename = "55-64")]
    From55To64,
    #[serde(rename = "65+")]
    From65,
}

impl AgeBracket {
    pub const ALL: [AgeBracket; 6] = [
        AgeBracket::From16To24,
        AgeBracket::From25To34,
        AgeBracket::From35To44,
        AgeBracket::From45To54,
        AgeBracket::From55To64,
        AgeBracket::From65,
    ];

    pub fn from_age(age: u32) -> Option<Self> {
        Some(match age {
            0..=15 => return None,
            16..=24 => AgeBracket::From16To24,
            25..=34 => AgeBracket::From25To34,
            35..=44 => AgeBracket::From35To44,
            45..=54 => AgeBracket::From45To54,
            55..=64 => AgeBracket::From55To64,
            _ => AgeBracket::From65,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBracket::From16To24 => "16-24",
            AgeBracket::From25To34 => "25-34",
            AgeBracket::From35To44 => "35-44",
            AgeBracket::From45To54 => "45-54",
            AgeBracket::From55To64 => "55-64",
            AgeBracket::From65 => "65+",
        }
    }
}

impl fmt::Display for AgeBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Links a prompt nationality label to the survey's country code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NationCode {
    pub label: String,
    pub code: String,
    pub name: String,
}

/// Where demographics live in the extract and how they are coded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WvsLayout {
    pub id_column: String,
    pub nation_column: String,
    pub age_column: String,
    pub sex_column: String,
    /// Raw sex code to profile label.
    pub sex_codes: BTreeMap<String, String>,
    pub nations: Vec<NationCode>,
    pub min_age: u32,
}

impl Default for WvsLayout {
    fn default() -> Self {
        let nations = [
            ("German", "DEU", "Germany"),
            ("Japanese", "JPN", "Japan"),
            ("Czech", "CZE", "Czech Republic"),
            ("American", "USA", "United States"),
            ("Romanian", "ROU", "Romania"),
            ("Vietnamese", "VNM", "Vietnam"),
            ("Venezuelan", "VEN", "Venezuela"),
            ("Nigerian", "NGA", "Nigeria"),
        ]
        .into_iter()
        .map(|(label, code, name)| NationCode {
            label: label.into(),
            code: code.into(),
            name: name.into(),
        })
        .collect();
        WvsLayout {
            id_column: "D_INTERVIEW".into(),
            nation_column: "B_COUNTRY_ALPHA".into(),
            age_column: "Q262".into(),
            sex_column: "Q260".into(),
            sex_codes: [("1", "man"), ("2", "woman")]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            nations,
            min_age: 16,
        }
    }
}

impl WvsLayout {
    pub fn nation_name(&self, label: &str) -> Option<&str> {
        self.nations.iter().find(|n| n.label == label).map(|n| n.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WvsRespondent {
    pub respondent_id: String,
    pub nation: String,
    pub age: u32,
    pub sex: String,
    pub recoded: BTreeMap<String, f64>,
    pub projection: AxisProjection,
}

impl WvsRespondent {
    pub fn age_bracket(&self) -> Option<AgeBracket> {
        AgeBracket::from_age(self.age)
    }
}

/// Rows dropped per reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub rows_read: usize,
    pub retained: usize,
    /// Country outside the configured nations.
    pub nation: usize,
    /// Missing demographic field or item answer.
    pub incomplete: usize,
    /// Younger than the minimum age.
    pub underage: usize,
    /// Value present but not a valid code.
    pub invalid_code: usize,
    /// Row could not be parsed as CSV.
    pub unparseable: usize,
}

#[derive(Debug, Error)]
pub enum WvsError {
    #[error("cannot read survey extract {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("survey extract is missing column `{0}`")]
    MissingColumn(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Spec(#[from] RecodeError),
    #[error("variable specs do not match the value bank: {0}")]
    BankMismatch(String),
}

pub struct IngestOutput {
    pub respondents: Vec<WvsRespondent>,
    pub report: DropReport,
}

enum RowFault {
    Incomplete,
    InvalidCode,
    Underage,
}

fn parse_code(field: &str) -> Option<Result<i64, ()>> {
    let f = field.trim();
    if f.is_empty() {
        return None;
    }
    Some(
        f.parse::<i64>()
            .or_else(|_| {
                f.parse::<f64>()
                    .map_err(|_| ())
                    .and_then(|x| if x.fract() == 0.0 { Ok(x as i64) } else { Err(()) })
            })
            .map_err(|_| ()),
    )
}

fn check_specs(specs: &[VariableSpec], bank: &ValueBank) -> Result<(), WvsError> {
    for s in specs {
        s.options()?;
        if bank.dimension(&s.dimension_id).is_none() {
            return Err(WvsError::BankMismatch(format!(
                "`{}` maps to unknown dimension `{}`",
                s.column, s.dimension_id
            )));
        }
    }
    for d in bank.dimensions() {
        let n = specs.iter().filter(|s| s.dimension_id == d.id).count();
        if n != 1 {
            return Err(WvsError::BankMismatch(format!(
                "dimension `{}` has {n} variables, expected 1",
                d.id
            )));
        }
    }
    Ok(())
}

pub fn ingest_path(
    path: &Path,
    specs: &[VariableSpec],
    layout: &WvsLayout,
    bank: &ValueBank,
) -> Result<IngestOutput, WvsError> {
    let file = std::fs::File::open(path).map_err(|source| WvsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest(file, specs, layout, bank)
}

/// Streams the extract, keeping complete cases from the configured nations.
pub fn ingest<R: Read>(
    reader: R,
    specs: &[VariableSpec],
    layout: &WvsLayout,
    bank: &ValueBank,
) -> Result<IngestOutput, WvsError> {
    check_specs(specs, bank)?;
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| WvsError::MissingColumn(name.to_string()))
    };
    let id_col = col(&layout.id_column)?;
    let nation_col = col(&layout.nation_column)?;
    let age_col = col(&layout.age_column)?;
    let sex_col = col(&layout.sex_column)?;
    let var_cols = specs.iter().map(|s| col(&s.column)).collect::<Result<Vec<_>, _>>()?;

    let mut report = DropReport::default();
    let mut respondents = Vec::new();
    for row in rdr.records() {
        report.rows_read += 1;
        let Ok(row) = row else {
            report.unparseable += 1;
            continue;
        };
        let field = |i: usize| row.get(i).unwrap_or("").trim();

        let code = field(nation_col);
        let Some(nation) = layout.nations.iter().find(|n| n.code == code) else {
            report.nation += 1;
            continue;
        };

        let outcome = (|| -> Result<WvsRespondent, RowFault> {
            let id = field(id_col);
            if id.is_empty() {
                return Err(RowFault::Incomplete);
            }
            let age = match parse_code(field(age_col)) {
                None => return Err(RowFault::Incomplete),
                Some(Err(())) => return Err(RowFault::InvalidCode),
                Some(Ok(a)) if a < 0 => return Err(RowFault::Incomplete),
                Some(Ok(a)) => a as u32,
            };
            let sex_raw = field(sex_col);
            if sex_raw.is_empty() || sex_raw.starts_with('-') {
                return Err(RowFault::Incomplete);
            }
            let sex = layout.sex_codes.get(sex_raw).ok_or(RowFault::InvalidCode)?;

            let mut recoded = BTreeMap::new();
            let mut fault = None;
            for (spec, &c) in specs.iter().zip(&var_cols) {
                let value = match parse_code(field(c)) {
                    None => Err(RowFault::Incomplete),
                    Some(Err(())) => Err(RowFault::InvalidCode),
                    Some(Ok(raw)) => match recode_variable(raw, spec) {
                        Ok(v) => Ok(v),
                        Err(RecodeError::Missing(_)) => Err(RowFault::Incomplete),
                        Err(_) => Err(RowFault::InvalidCode),
                    },
                };
                match value {
                    Ok(v) => {
                        recoded.insert(spec.dimension_id.clone(), v);
                    }
                    // a missing answer outranks a bad code elsewhere in the row
                    Err(RowFault::Incomplete) => return Err(RowFault::Incomplete),
                    Err(f) => fault = fault.or(Some(f)),
                }
            }
            if let Some(f) = fault {
                return Err(f);
            }
            if age < layout.min_age {
                return Err(RowFault::Underage);
            }
            let projection = project_wvs(&recoded, bank, id).expect("recoded values are in range");
            Ok(WvsRespondent {
                respondent_id: id.to_string(),
                nation: nation.label.clone(),
                age,
                sex: sex.clone(),
                recoded,
                projection,
            })
        })();

        match outcome {
            Ok(r) => {
                report.retained += 1;
                respondents.push(r);
            }
            Err(RowFault::Incomplete) => report.incomplete += 1,
            Err(RowFault::InvalidCode) => report.invalid_code += 1,
            Err(RowFault::Underage) => report.underage += 1,
        }
    }
    Ok(IngestOutput { respondents, report })
}
