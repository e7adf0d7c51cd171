//! Projection of resonance labels and recoded survey answers onto the
//! traditional-secular axis. Negative values sit at the traditional pole.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{Polarity, ValueBank};
use crate::grid::DemographicProfile;
use crate::llm::PremiseRecord;
use crate::rvr::{ResonanceLabel, ScoreRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TraditionalOnly,
    SecularOnly,
    #[default]
    Combined,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::TraditionalOnly, Mode::SecularOnly, Mode::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TraditionalOnly => "traditional_only",
            Mode::SecularOnly => "secular_only",
            Mode::Combined => "combined",
        }
    }

    fn needs(self, polarity: Polarity) -> bool {
        !matches!(
            (self, polarity),
            (Mode::TraditionalOnly, Polarity::Secular) | (Mode::SecularOnly, Polarity::Traditional)
        )
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown projection mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisProjection {
    pub value: f64,
    pub mode: Mode,
    pub subject_key: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("no {polarity} score for dimension `{dimension}`")]
    MissingScore { dimension: String, polarity: Polarity },
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("no recoded value for dimension `{0}`")]
    MissingValue(String),
    #[error("recoded value {value} for `{dimension}` is outside [-1, 1]")]
    OutOfRange { dimension: String, value: f64 },
}

/// Traditional and secular labels of one premise, per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DimensionScores {
    pub traditional: Option<ResonanceLabel>,
    pub secular: Option<ResonanceLabel>,
}

impl DimensionScores {
    pub fn new(traditional: ResonanceLabel, secular: ResonanceLabel) -> Self {
        DimensionScores {
            traditional: Some(traditional),
            secular: Some(secular),
        }
    }

    fn get(&self, p: Polarity) -> Option<ResonanceLabel> {
        match p {
            Polarity::Traditional => self.traditional,
            Polarity::Secular => self.secular,
        }
    }
}

/// Weighted sum over dimensions.
///
/// * traditional-only: `-Σ w·r_T`
/// * secular-only: `+Σ w·r_S`
/// * combined: `Σ (w/2)·(r_S - r_T)`
///
/// Labels absent from the chosen mode are ignored; pass 0 for them.
pub fn project_labels(loadings: &[f64], traditional: &[i8], secular: &[i8], mode: Mode) -> f64 {
    debug_assert!(loadings.len() == traditional.len() && loadings.len() == secular.len());
    let mut acc = 0.0;
    for ((&w, &rt), &rs) in loadings.iter().zip(traditional).zip(secular) {
        acc += match mode {
            Mode::TraditionalOnly => -w * f64::from(rt),
            Mode::SecularOnly => w * f64::from(rs),
            Mode::Combined => (w / 2.0) * f64::from(rs - rt),
        };
    }
    acc
}

pub fn project_premise(
    scores: &HashMap<String, DimensionScores>,
    bank: &ValueBank,
    mode: Mode,
    subject_key: &str,
) -> Result<AxisProjection, ProjectionError> {
    if let Some(unknown) = scores.keys().find(|k| bank.dimension(k).is_none()) {
        return Err(ProjectionError::UnknownDimension(unknown.clone()));
    }
    let n = bank.dimensions().len();
    let (mut rt, mut rs) = (vec![0i8; n], vec![0i8; n]);
    for (i, d) in bank.dimensions().iter().enumerate() {
        let entry = scores.get(&d.id).copied().unwrap_or_default();
        for p in Polarity::BOTH {
            if !mode.needs(p) {
                continue;
            }
            let label = entry.get(p).ok_or_else(|| ProjectionError::MissingScore {
                dimension: d.id.clone(),
                polarity: p,
            })?;
            match p {
                Polarity::Traditional => rt[i] = label.value(),
                Polarity::Secular => rs[i] = label.value(),
            }
        }
    }
    Ok(AxisProjection {
        value: project_labels(&bank.loadings(), &rt, &rs, mode),
        mode,
        subject_key: subject_key.to_string(),
    })
}

/// `Σ w·v` over recoded survey answers, each in [-1, 1].
pub fn project_wvs(
    recoded: &BTreeMap<String, f64>,
    bank: &ValueBank,
    subject_key: &str,
) -> Result<AxisProjection, ProjectionError> {
    if let Some(unknown) = recoded.keys().find(|k| bank.dimension(k).is_none()) {
        return Err(ProjectionError::UnknownDimension(unknown.clone()));
    }
    let mut acc = 0.0;
    for d in bank.dimensions() {
        let v = *recoded
            .get(&d.id)
            .ok_or_else(|| ProjectionError::MissingValue(d.id.clone()))?;
        if !(-1.0..=1.0).contains(&v) {
            return Err(ProjectionError::OutOfRange {
                dimension: d.id.clone(),
                value: v,
            });
        }
        acc += d.factor_loading * v;
    }
    Ok(AxisProjection {
        value: acc,
        mode: Mode::Combined,
        subject_key: subject_key.to_string(),
    })
}

/// One premise's position under one mode, with the provenance analysis needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub subject_key: String,
    pub prompt_id: String,
    pub sample_index: u32,
    pub dimension_id: String,
    pub profile: DemographicProfile,
    pub mode: Mode,
    pub value: f64,
}

/// Groups score records by premise `(prompt_id, sample_index)`.
///
/// Returns premises in sorted key order with their subject key.
pub fn group_scores(scores: &[ScoreRecord]) -> BTreeMap<(String, u32), (String, HashMap<String, DimensionScores>)> {
    let mut out: BTreeMap<(String, u32), (String, HashMap<String, DimensionScores>)> = BTreeMap::new();
    for s in scores {
        let entry = out
            .entry((s.prompt_id.clone(), s.sample_index))
            .or_insert_with(|| (s.premise_key.clone(), HashMap::new()));
        let d = entry.1.entry(s.dimension_id.clone()).or_default();
        match s.polarity {
            Polarity::Traditional => d.traditional = Some(s.label),
            Polarity::Secular => d.secular = Some(s.label),
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum ProjectScoresError {
    #[error("premise {prompt_id}#{sample_index}: {source}")]
    Premise {
        prompt_id: String,
        sample_index: u32,
        #[source]
        source: ProjectionError,
    },
    #[error("scores reference premise {0}#{1} which is not in the premise dataset")]
    UnknownPremise(String, u32),
}

/// Projects every scored premise under each requested mode.
///
/// Output order: premise key order, then the order of `modes`.
pub fn project_scores(
    scores: &[ScoreRecord],
    premises: &[PremiseRecord],
    bank: &ValueBank,
    modes: &[Mode],
) -> Result<Vec<ProjectionRecord>, ProjectScoresError> {
    let lookup: HashMap<(&str, u32), &PremiseRecord> = premises
        .iter()
        .map(|p| ((p.prompt_id.as_str(), p.sample_index), p))
        .collect();
    let mut out = Vec::new();
    for ((prompt_id, sample_index), (subject, dims)) in group_scores(scores) {
        let premise = lookup
            .get(&(prompt_id.as_str(), sample_index))
            .ok_or_else(|| ProjectScoresError::UnknownPremise(prompt_id.clone(), sample_index))?;
        for &mode in modes {
            let proj = project_premise(&dims, bank, mode, &subject).map_err(|source| ProjectScoresError::Premise {
                prompt_id: prompt_id.clone(),
                sample_index,
                source,
            })?;
            out.push(ProjectionRecord {
                subject_key: subject.clone(),
                prompt_id: prompt_id.clone(),
                sample_index,
                dimension_id: premise.dimension_id.clone(),
                profile: premise.profile.clone(),
                mode,
                value: proj.value,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ResonanceLabel::*;

    fn uniform(bank: &ValueBank, t: ResonanceLabel, s: ResonanceLabel) -> HashMap<String, DimensionScores> {
        bank.dimensions()
            .iter()
            .map(|d| (d.id.clone(), DimensionScores::new(t, s)))
            .collect()
    }

    #[test]
    fn combined_extreme_traditional() {
        let bank = ValueBank::builtin();
        let v = project_premise(&uniform(&bank, Resonance, Conflict), &bank, Mode::Combined, "k")
            .unwrap()
            .value;
        // 0.7 + 0.61 + 0.61 + 0.60 + 0.51 = 3.03
        assert!((v + 3.03).abs() < 1e-12);
    }

    #[test]
    fn neutral_is_zero_in_every_mode() {
        let bank = ValueBank::builtin();
        for mode in Mode::ALL {
            let v = project_premise(&uniform(&bank, Neutral, Neutral), &bank, mode, "k").unwrap();
            assert_eq!(v.value, 0.0);
        }
    }

    #[test]
    fn single_god_resonance() {
        let bank = ValueBank::builtin();
        let mut scores = uniform(&bank, Neutral, Neutral);
        scores.get_mut("god").unwrap().traditional = Some(Resonance);
        let v = project_premise(&scores, &bank, Mode::TraditionalOnly, "k").unwrap();
        assert!((v.value + 0.7).abs() < 1e-12);
    }

    #[test]
    fn polar_modes_need_only_their_side() {
        let bank = ValueBank::builtin();
        let only_t: HashMap<_, _> = bank
            .dimensions()
            .iter()
            .map(|d| {
                (
                    d.id.clone(),
                    DimensionScores {
                        traditional: Some(Resonance),
                        secular: None,
                    },
                )
            })
            .collect();
        assert!(project_premise(&only_t, &bank, Mode::TraditionalOnly, "k").is_ok());
        assert_eq!(
            project_premise(&only_t, &bank, Mode::Combined, "k"),
            Err(ProjectionError::MissingScore {
                dimension: "god".into(),
                polarity: Polarity::Secular
            })
        );
        let mut extra = uniform(&bank, Neutral, Neutral);
        extra.insert("weather".into(), DimensionScores::default());
        assert_eq!(
            project_premise(&extra, &bank, Mode::Combined, "k"),
            Err(ProjectionError::UnknownDimension("weather".into()))
        );
    }

    #[test]
    fn wvs_projection() {
        let bank = ValueBank::builtin();
        let all = |v: f64| -> BTreeMap<String, f64> { bank.dimensions().iter().map(|d| (d.id.clone(), v)).collect() };
        assert!((project_wvs(&all(-1.0), &bank, "r").unwrap().value + 3.03).abs() < 1e-12);
        assert_eq!(project_wvs(&all(0.0), &bank, "r").unwrap().value, 0.0);
        let mut one = all(0.0);
        one.insert("god".into(), -1.0);
        assert!((project_wvs(&one, &bank, "r").unwrap().value + 0.7).abs() < 1e-12);
        one.insert("god".into(), 1.5);
        assert!(matches!(
            project_wvs(&one, &bank, "r"),
            Err(ProjectionError::OutOfRange { .. })
        ));
        one.remove("god");
        assert_eq!(
            project_wvs(&one, &bank, "r"),
            Err(ProjectionError::MissingValue("god".into()))
        );
    }

    #[test]
    fn mode_parses() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>(), Ok(m));
        }
        assert!("both".parse::<Mode>().is_err());
    }
}
