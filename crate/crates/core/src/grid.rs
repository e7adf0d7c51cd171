//! Demographic grid and interview-prompt rendering.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{ValueBank, GENERAL_ID};
use crate::hashing::short_digest;

/// Bumped whenever the rendered prompt text changes shape.
pub const TEMPLATE_VERSION: &str = "interview-v1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct DemographicProfile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nationality: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<String>,
}

impl DemographicProfile {
    pub fn new(age: Option<u32>, nationality: Option<&str>, sex: Option<&str>) -> Self {
        DemographicProfile {
            age,
            nationality: nationality.map(str::to_owned),
            sex: sex.map(str::to_owned),
        }
    }

    pub fn shape(&self) -> Shape {
        match (self.age.is_some(), self.nationality.is_some(), self.sex.is_some()) {
            (true, true, true) => Shape::AgeNationSex,
            (true, true, false) => Shape::AgeNation,
            (true, false, true) => Shape::AgeSex,
            (false, true, true) => Shape::NationSex,
            (true, false, false) => Shape::Age,
            (false, true, false) => Shape::Nation,
            (false, false, true) => Shape::Sex,
            (false, false, false) => Shape::Empty,
        }
    }

    pub fn is_full_triple(&self) -> bool {
        self.shape() == Shape::AgeNationSex
    }

    /// Checks the profile against configured level sets.
    pub fn validate(&self, levels: &LevelSets) -> Result<(), GridError> {
        if self.shape() == Shape::Empty {
            return Err(GridError::EmptyProfile);
        }
        if let Some(age) = self.age {
            if !levels.ages.contains(&age) {
                return Err(GridError::UnknownLevel {
                    kind: "age",
                    value: age.to_string(),
                });
            }
        }
        if let Some(n) = &self.nationality {
            if !levels.nations.contains(n) {
                return Err(GridError::UnknownLevel {
                    kind: "nationality",
                    value: n.clone(),
                });
            }
        }
        if let Some(s) = &self.sex {
            if !levels.sexes.contains(s) {
                return Err(GridError::UnknownLevel {
                    kind: "sex",
                    value: s.clone(),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for DemographicProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = [
            self.age.map(|a| a.to_string()),
            self.nationality.clone(),
            self.sex.clone(),
        ]
        .into_iter()
        .flatten()
        .collect();
        f.write_str(&parts.join("/"))
    }
}

/// Which demographic fields a profile fills in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    AgeNationSex,
    AgeNation,
    AgeSex,
    NationSex,
    Age,
    Nation,
    Sex,
    Empty,
}

impl Shape {
    /// The seven non-empty shapes in enumeration order.
    pub const ALL: [Shape; 7] = [
        Shape::AgeNationSex,
        Shape::AgeNation,
        Shape::AgeSex,
        Shape::NationSex,
        Shape::Age,
        Shape::Nation,
        Shape::Sex,
    ];

    fn uses(self) -> (bool, bool, bool) {
        match self {
            Shape::AgeNationSex => (true, true, true),
            Shape::AgeNation => (true, true, false),
            Shape::AgeSex => (true, false, true),
            Shape::NationSex => (false, true, true),
            Shape::Age => (true, false, false),
            Shape::Nation => (false, true, false),
            Shape::Sex => (false, false, true),
            Shape::Empty => (false, false, false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSets {
    pub ages: Vec<u32>,
    pub nations: Vec<String>,
    pub sexes: Vec<String>,
}

impl Default for LevelSets {
    fn default() -> Self {
        LevelSets {
            ages: vec![20, 30, 40, 50, 60, 75],
            nations: [
                "German",
                "Japanese",
                "Czech",
                "American",
                "Romanian",
                "Vietnamese",
                "Venezuelan",
                "Nigerian",
            ]
            .map(String::from)
            .to_vec(),
            sexes: vec!["man".into(), "woman".into()],
        }
    }
}

impl LevelSets {
    /// Profile count over all seven shapes: ANS + AN + AS + NS + A + N + S.
    pub fn profile_count(&self) -> usize {
        let (a, n, s) = (self.ages.len(), self.nations.len(), self.sexes.len());
        a * n * s + a * n + a * s + n * s + a + n + s
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("level set `{0}` is empty")]
    EmptyLevels(&'static str),
    #[error("level set `{kind}` lists `{value}` more than once")]
    DuplicateLevel { kind: &'static str, value: String },
    #[error("{kind} `{value}` is not in the configured level set")]
    UnknownLevel { kind: &'static str, value: String },
    #[error("profile has no demographic fields")]
    EmptyProfile,
}

fn check_unique<T: fmt::Display + Eq + std::hash::Hash>(kind: &'static str, values: &[T]) -> Result<(), GridError> {
    let mut seen = HashSet::new();
    for v in values {
        if !seen.insert(v) {
            return Err(GridError::DuplicateLevel {
                kind,
                value: v.to_string(),
            });
        }
    }
    Ok(())
}

/// Every profile over all seven combination shapes.
pub fn enumerate_profiles(levels: &LevelSets) -> Result<Vec<DemographicProfile>, GridError> {
    enumerate_shapes(levels, &Shape::ALL)
}

/// Profiles for the requested shapes only, in shape order then level order.
///
/// Only level sets used by at least one requested shape must be non-empty.
pub fn enumerate_shapes(levels: &LevelSets, shapes: &[Shape]) -> Result<Vec<DemographicProfile>, GridError> {
    let (need_a, need_n, need_s) = shapes.iter().fold((false, false, false), |acc, s| {
        let u = s.uses();
        (acc.0 || u.0, acc.1 || u.1, acc.2 || u.2)
    });
    if need_a && levels.ages.is_empty() {
        return Err(GridError::EmptyLevels("ages"));
    }
    if need_n && levels.nations.is_empty() {
        return Err(GridError::EmptyLevels("nations"));
    }
    if need_s && levels.sexes.is_empty() {
        return Err(GridError::EmptyLevels("sexes"));
    }
    check_unique("ages", &levels.ages)?;
    check_unique("nations", &levels.nations)?;
    check_unique("sexes", &levels.sexes)?;

    fn slot<T: Clone>(used: bool, values: &[T]) -> Vec<Option<T>> {
        if used {
            values.iter().cloned().map(Some).collect()
        } else {
            vec![None]
        }
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for shape in shapes {
        let (ua, un, us) = shape.uses();
        if !(ua || un || us) {
            continue;
        }
        for age in slot(ua, &levels.ages) {
            for nationality in slot(un, &levels.nations) {
                for sex in slot(us, &levels.sexes) {
                    let p = DemographicProfile {
                        age,
                        nationality: nationality.clone(),
                        sex: sex.clone(),
                    };
                    if seen.insert(p.clone()) {
                        out.push(p);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub profile: DemographicProfile,
    pub dimension_id: String,
    pub question: String,
    pub rendered_prompt: String,
}

impl PromptRecord {
    pub fn is_general(&self) -> bool {
        self.dimension_id == GENERAL_ID
    }
}

pub fn prompt_id(profile: &DemographicProfile, dimension_id: &str) -> String {
    let age = profile.age.map(|a| a.to_string()).unwrap_or_default();
    let key = [
        TEMPLATE_VERSION,
        &age,
        profile.nationality.as_deref().unwrap_or(""),
        profile.sex.as_deref().unwrap_or(""),
        dimension_id,
    ]
    .join("\u{1f}");
    short_digest(key.as_bytes())
}

// "an 8 year old", "an 18 year old", "an American"
fn article_for(word: &str) -> &'static str {
    let lower = word.to_ascii_lowercase();
    let vowel_sound = match lower.chars().next() {
        Some(c) if c.is_ascii_digit() => {
            let digits: String = lower.chars().take_while(|c| c.is_ascii_digit()).collect();
            digits.starts_with('8') || digits == "11" || digits == "18"
        }
        Some(c) => "aeiou".contains(c),
        None => false,
    };
    if vowel_sound {
        "an"
    } else {
        "a"
    }
}

/// Renders the persona sentence plus interview framing.
///
/// Missing demographic slots are dropped, and the indefinite article follows
/// whichever word comes first.
pub fn render_prompt(profile: &DemographicProfile, question: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    if let Some(age) = profile.age {
        words.push(format!("{age} year old"));
    }
    if let Some(n) = &profile.nationality {
        words.push(n.trim().to_string());
    }
    if let Some(s) = &profile.sex {
        words.push(s.trim().to_string());
    }
    let persona = words.join(" ");
    let question = question.trim();
    let terminator = if question.ends_with(['?', '.', '!']) { "" } else { "." };
    format!(
        "You are {} {persona} participating in an ethnographic interview. \
         Briefly answer the interviewer's question. Question: {question}{terminator} Response:",
        article_for(&persona)
    )
}

/// One record per profile per question: each bank dimension, then the general prompt.
pub fn render_prompts(profiles: &[DemographicProfile], bank: &ValueBank) -> Vec<PromptRecord> {
    let questions: Vec<(&str, &str)> = bank
        .dimensions()
        .iter()
        .map(|d| (d.id.as_str(), d.question.as_str()))
        .chain(std::iter::once((GENERAL_ID, bank.general_prompt())))
        .collect();
    profiles
        .iter()
        .flat_map(|p| {
            questions.iter().map(move |(id, q)| PromptRecord {
                prompt_id: prompt_id(p, id),
                profile: p.clone(),
                dimension_id: (*id).to_string(),
                question: (*q).to_string(),
                rendered_prompt: render_prompt(p, q),
            })
        })
        .collect()
}
