//! Comparative statistics between generated-text projections and survey
//! respondents: grouped box summaries, group-mean regression with nation
//! fixed effects, and the polarity ablation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

use crate::bank::{ValueBank, GENERAL_ID};
use crate::projection::{group_scores, project_premise, Mode, ProjectionError, ProjectionRecord};
use crate::rvr::ScoreRecord;
use crate::wvs::{AgeBracket, WvsRespondent};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no observations left after filtering")]
    EmptyDataset,
    #[error("generated-text groups and survey groups do not overlap ({llm_groups} vs {wvs_groups} groups)")]
    DisjointGrids { llm_groups: usize, wvs_groups: usize },
    #[error("premise {prompt_id}#{sample_index}: {source}")]
    Projection {
        prompt_id: String,
        sample_index: u32,
        source: ProjectionError,
    },
}

/// Which premises enter the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisFilter {
    /// Only responses to the general value prompt.
    pub general_only: bool,
    /// Only personas with age, nationality and sex all set.
    pub full_triple_only: bool,
    pub mode: Mode,
    /// Optional subset of nationality labels; applies to both sources.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nations: Option<Vec<String>>,
}

impl Default for AnalysisFilter {
    fn default() -> Self {
        AnalysisFilter {
            general_only: true,
            full_triple_only: true,
            mode: Mode::Combined,
            nations: None,
        }
    }
}

impl AnalysisFilter {
    fn nation_ok(&self, nation: Option<&str>) -> bool {
        match (&self.nations, nation) {
            (None, _) => true,
            (Some(list), Some(n)) => list.iter().any(|x| x == n),
            (Some(_), None) => false,
        }
    }

    pub fn accepts(&self, r: &ProjectionRecord) -> bool {
        r.mode == self.mode
            && (!self.general_only || r.dimension_id == GENERAL_ID)
            && (!self.full_triple_only || r.profile.is_full_triple())
            && self.nation_ok(r.profile.nationality.as_deref())
    }

    pub fn accepts_respondent(&self, r: &WvsRespondent) -> bool {
        self.nation_ok(Some(&r.nation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slice {
    Nation,
    Age,
    Sex,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::Nation, Slice::Age, Slice::Sex];

    pub fn as_str(self) -> &'static str {
        match self {
            Slice::Nation => "nation",
            Slice::Age => "age",
            Slice::Sex => "sex",
        }
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Slice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Slice::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown slice `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Llm,
    Wvs,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Llm => "llm",
            Source::Wvs => "wvs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct GroupKey {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub age_bracket: Option<AgeBracket>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sex: Option<String>,
}

impl GroupKey {
    pub fn label(&self) -> String {
        let parts: Vec<String> = [
            self.nation.clone(),
            self.age_bracket.map(|a| a.label().to_string()),
            self.sex.clone(),
        ]
        .into_iter()
        .flatten()
        .collect();
        parts.join("/")
    }
}

/// Five-number box summary with Tukey whiskers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (n - 1 denominator); 0 for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Quartiles are medians of the lower and upper halves, excluding the
/// overall median when `n` is odd. Whiskers reach the most extreme
/// observation within 1.5 IQR of the box.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = median_sorted(&v);
    let (lower, upper) = (&v[..n / 2], &v[n.div_ceil(2)..]);
    let q1 = if lower.is_empty() { median } else { median_sorted(lower) };
    let q3 = if upper.is_empty() { median } else { median_sorted(upper) };
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_low = *v.iter().find(|&&x| x >= lo_fence).expect("q1 itself is inside");
    let whisker_high = *v.iter().rev().find(|&&x| x <= hi_fence).expect("q3 itself is inside");
    Some(BoxStats {
        n,
        mean: mean(&v),
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub slice: Slice,
    pub group_key: GroupKey,
    pub source: Source,
    #[serde(flatten)]
    pub stats: BoxStats,
}

fn llm_slice_key(r: &ProjectionRecord, slice: Slice) -> Option<GroupKey> {
    let p = &r.profile;
    Some(match slice {
        Slice::Nation => GroupKey {
            nation: Some(p.nationality.clone()?),
            ..GroupKey::default()
        },
        Slice::Age => GroupKey {
            age_bracket: Some(AgeBracket::from_age(p.age?)?),
            ..GroupKey::default()
        },
        Slice::Sex => GroupKey {
            sex: Some(p.sex.clone()?),
            ..GroupKey::default()
        },
    })
}

fn wvs_slice_key(r: &WvsRespondent, slice: Slice) -> Option<GroupKey> {
    Some(match slice {
        Slice::Nation => GroupKey {
            nation: Some(r.nation.clone()),
            ..GroupKey::default()
        },
        Slice::Age => GroupKey {
            age_bracket: Some(r.age_bracket()?),
            ..GroupKey::default()
        },
        Slice::Sex => GroupKey {
            sex: Some(r.sex.clone()),
            ..GroupKey::default()
        },
    })
}

/// One box per group per source, ordered by group then source.
///
/// Input order does not matter.
pub fn summarize(
    llm: &[ProjectionRecord],
    wvs: &[WvsRespondent],
    slice: Slice,
    filter: &AnalysisFilter,
) -> Result<Vec<GroupSummary>, AnalysisError> {
    let mut groups: BTreeMap<(GroupKey, Source), Vec<f64>> = BTreeMap::new();
    for r in llm.iter().filter(|r| filter.accepts(r)) {
        if let Some(k) = llm_slice_key(r, slice) {
            groups.entry((k, Source::Llm)).or_default().push(r.value);
        }
    }
    for r in wvs.iter().filter(|r| filter.accepts_respondent(r)) {
        if let Some(k) = wvs_slice_key(r, slice) {
            groups.entry((k, Source::Wvs)).or_default().push(r.projection.value);
        }
    }
    if groups.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    if let Some(wanted) = &filter.nations {
        if slice == Slice::Nation {
            for n in wanted {
                if !groups.keys().any(|(k, _)| k.nation.as_deref() == Some(n)) {
                    log::warn!("nation `{n}` has no observations; omitted");
                }
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|((group_key, source), values)| GroupSummary {
            slice,
            group_key,
            source,
            stats: box_stats(&values).expect("groups are non-empty"),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeanRow {
    pub nation: String,
    pub age_bracket: AgeBracket,
    pub sex: String,
    pub n_llm: usize,
    pub n_wvs: usize,
    pub mean_llm: f64,
    pub mean_wvs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeansTable {
    pub rows: Vec<GroupMeanRow>,
    /// Groups seen only in generated text.
    pub llm_only: Vec<GroupKey>,
    /// Groups seen only in the survey.
    pub wvs_only: Vec<GroupKey>,
}

/// Mean projection per nation × age bracket × sex, for groups both sources cover.
pub fn group_means(
    llm: &[ProjectionRecord],
    wvs: &[WvsRespondent],
    filter: &AnalysisFilter,
) -> Result<GroupMeansTable, AnalysisError> {
    let mut l: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in llm.iter().filter(|r| filter.accepts(r)) {
        let p = &r.profile;
        let (Some(n), Some(a), Some(s)) = (&p.nationality, p.age.and_then(AgeBracket::from_age), &p.sex) else {
            continue;
        };
        l.entry(GroupKey {
            nation: Some(n.clone()),
            age_bracket: Some(a),
            sex: Some(s.clone()),
        })
        .or_default()
        .push(r.value);
    }
    let mut w: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in wvs.iter().filter(|r| filter.accepts_respondent(r)) {
        let Some(a) = r.age_bracket() else { continue };
        w.entry(GroupKey {
            nation: Some(r.nation.clone()),
            age_bracket: Some(a),
            sex: Some(r.sex.clone()),
        })
        .or_default()
        .push(r.projection.value);
    }
    if l.is_empty() && w.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let mut rows = Vec::new();
    for (k, lv) in &l {
        if let Some(wv) = w.get(k) {
            rows.push(GroupMeanRow {
                nation: k.nation.clone().expect("set above"),
                age_bracket: k.age_bracket.expect("set above"),
                sex: k.sex.clone().expect("set above"),
                n_llm: lv.len(),
                n_wvs: wv.len(),
                mean_llm: mean(lv),
                mean_wvs: mean(wv),
            });
        }
    }
    if rows.is_empty() {
        return Err(AnalysisError::DisjointGrids {
            llm_groups: l.len(),
            wvs_groups: w.len(),
        });
    }
    let llm_only: Vec<GroupKey> = l.keys().filter(|k| !w.contains_key(*k)).cloned().collect();
    let wvs_only: Vec<GroupKey> = w.keys().filter(|k| !l.contains_key(*k)).cloned().collect();
    if !llm_only.is_empty() || !wvs_only.is_empty() {
        log::warn!(
            "{} groups lack survey data and {} lack generated text; excluded",
            llm_only.len(),
            wvs_only.len()
        );
    }
    Ok(GroupMeansTable {
        rows,
        llm_only,
        wvs_only,
    })
}

/// `***` p < 0.001, `**` p < 0.01, `*` p < 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Simple OLS of one nation's `mean_wvs` on `mean_llm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub nation: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root mean squared residual, n denominator.
    pub rmse: f64,
    /// F-test of the slope, two-sided.
    pub p_value: f64,
    pub n_groups: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

impl RegressionFit {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }
}

/// Shared slope with one intercept per nation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledFit {
    pub slope: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_std_error: Option<f64>,
    pub p_value: f64,
    pub nation_intercepts: BTreeMap<String, f64>,
    /// Against the grand mean.
    pub r_squared: f64,
    /// Against nation means (variance left after the intercepts).
    pub within_r_squared: f64,
    pub rmse: f64,
    pub n_groups: usize,
    pub df_resid: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub pooled: PooledFit,
    pub per_nation: Vec<RegressionFit>,
}

const DEGENERACY_TOL: f64 = 1e-12;

/// p-values come out of libm special functions whose last bits differ
/// between platforms; ten significant digits keep outputs byte-stable.
fn round_p(p: f64) -> f64 {
    if p == 0.0 || !p.is_finite() {
        return p;
    }
    let mag = 10f64.powi(9 - p.abs().log10().floor() as i32);
    (p * mag).round() / mag
}

pub fn fit_simple(nation: &str, x: &[f64], y: &[f64]) -> RegressionFit {
    let n = x.len();
    let nf = n as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let flat = |reason: &str| RegressionFit {
        nation: nation.into(),
        slope: 0.0,
        intercept: my,
        r_squared: 0.0,
        rmse: (syy / nf).sqrt(),
        p_value: 1.0,
        n_groups: n,
        degenerate: Some(reason.into()),
    };
    if n < 3 {
        return flat("fewer than 3 groups");
    }
    let scale_x = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if sxx <= DEGENERACY_TOL * scale_x * scale_x * nf {
        return flat("mean_llm is constant");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (intercept + slope * a);
            e * e
        })
        .sum();
    let rmse = (ssr / nf).sqrt();
    if syy == 0.0 {
        return RegressionFit {
            slope,
            intercept,
            rmse,
            ..flat("mean_wvs is constant")
        };
    }
    let r_squared = (1.0 - ssr / syy).clamp(0.0, 1.0);
    let df = nf - 2.0;
    let p_value = if ssr <= DEGENERACY_TOL * syy {
        0.0
    } else {
        let f = (syy - ssr) / (ssr / df);
        let dist = FisherSnedecor::new(1.0, df).expect("df > 0");
        round_p((1.0 - dist.cdf(f)).clamp(0.0, 1.0))
    };
    RegressionFit {
        nation: nation.into(),
        slope,
        intercept,
        r_squared,
        rmse,
        p_value,
        n_groups: n,
        degenerate: None,
    }
}

fn fit_pooled(rows: &[GroupMeanRow], nations: &[String]) -> PooledFit {
    let n = rows.len();
    let k = nations.len();
    let idx: BTreeMap<&str, usize> = nations.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut x = DMatrix::<f64>::zeros(n, k + 1);
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.mean_wvs));
    for (i, r) in rows.iter().enumerate() {
        x[(i, 0)] = r.mean_llm;
        x[(i, 1 + idx[r.nation.as_str()])] = 1.0;
    }
    let df_resid = n.saturating_sub(k + 1);
    let empty = |reason: &str| PooledFit {
        slope: 0.0,
        slope_std_error: None,
        p_value: 1.0,
        nation_intercepts: BTreeMap::new(),
        r_squared: 0.0,
        within_r_squared: 0.0,
        rmse: 0.0,
        n_groups: n,
        df_resid,
        degenerate: Some(reason.into()),
    };
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = (0..=k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if n < k + 1 || (0..=k).any(|i| r[(i, i)].abs() <= 1e-10 * rmax.max(1.0)) {
        return empty("design matrix is rank deficient");
    }
    let qty = qr.q().transpose() * &y;
    let beta = r.solve_upper_triangular(&qty).expect("full rank checked above");
    let resid = &y - &x * &beta;
    let ssr = resid.norm_squared();
    let my = y.mean();
    let sst = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>();
    let mut nation_sum = vec![(0.0, 0usize); k];
    for r in rows {
        let e = &mut nation_sum[idx[r.nation.as_str()]];
        e.0 += r.mean_wvs;
        e.1 += 1;
    }
    let ss_within: f64 = rows
        .iter()
        .map(|r| {
            let (s, c) = nation_sum[idx[r.nation.as_str()]];
            let d = r.mean_wvs - s / c as f64;
            d * d
        })
        .sum();
    let ratio = |den: f64| {
        if den > 0.0 {
            (1.0 - ssr / den).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };

    let (se, p_value) = if df_resid == 0 {
        (None, 1.0)
    } else {
        let sigma2 = ssr / df_resid as f64;
        // (X'X)^-1 = R^-1 R^-T; entry (0,0) is the squared norm of row 0 of R^-1.
        let rinv = r.clone().try_inverse().expect("full rank");
        let var0 = rinv.row(0).norm_squared();
        let se = (sigma2 * var0).sqrt();
        let p = if se == 0.0 {
            if beta[0] == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            let t = beta[0] / se;
            let dist = StudentsT::new(0.0, 1.0, df_resid as f64).expect("df > 0");
            round_p((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
        };
        (Some(se), p)
    };

    PooledFit {
        slope: beta[0],
        slope_std_error: se,
        p_value,
        nation_intercepts: nations
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), beta[1 + i]))
            .collect(),
        r_squared: ratio(sst),
        within_r_squared: ratio(ss_within),
        rmse: (ssr / n as f64).sqrt(),
        n_groups: n,
        df_resid,
        degenerate: None,
    }
}

/// Per-nation simple OLS plus the pooled nation-intercept model.
pub fn fixed_effects_regression(table: &GroupMeansTable) -> Result<RegressionReport, AnalysisError> {
    if table.rows.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let nations: Vec<String> = table
        .rows
        .iter()
        .map(|r| r.nation.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let per_nation = nations
        .iter()
        .map(|nation| {
            let (x, y): (Vec<f64>, Vec<f64>) = table
                .rows
                .iter()
                .filter(|r| &r.nation == nation)
                .map(|r| (r.mean_llm, r.mean_wvs))
                .unzip();
            let fit = fit_simple(nation, &x, &y);
            if let Some(why) = &fit.degenerate {
                log::warn!("regression for {nation} is degenerate: {why}");
            }
            fit
        })
        .collect();
    Ok(RegressionReport {
        pooled: fit_pooled(&table.rows, &nations),
        per_nation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub prompt_id: String,
    pub sample_index: u32,
    pub subject_key: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSeries {
    pub mode: Mode,
    pub variance: f64,
    pub stats: BoxStats,
    pub values: Vec<AblationPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub series: Vec<ModeSeries>,
}

impl AblationReport {
    pub fn mode(&self, mode: Mode) -> &ModeSeries {
        self.series.iter().find(|s| s.mode == mode).expect("all modes present")
    }
}

/// Projects every premise under all three modes over the same premise set.
pub fn ablate(scores: &[ScoreRecord], bank: &ValueBank) -> Result<AblationReport, AnalysisError> {
    let grouped = group_scores(scores);
    if grouped.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let mut series = Vec::new();
    for mode in Mode::ALL {
        let mut values = Vec::with_capacity(grouped.len());
        for ((prompt_id, sample_index), (subject, dims)) in &grouped {
            let p = project_premise(dims, bank, mode, subject).map_err(|source| AnalysisError::Projection {
                prompt_id: prompt_id.clone(),
                sample_index: *sample_index,
                source,
            })?;
            values.push(AblationPoint {
                prompt_id: prompt_id.clone(),
                sample_index: *sample_index,
                subject_key: subject.clone(),
                value: p.value,
            });
        }
        let raw: Vec<f64> = values.iter().map(|v| v.value).collect();
        series.push(ModeSeries {
            mode,
            variance: variance(&raw),
            stats: box_stats(&raw).expect("non-empty"),
            values,
        });
    }
    Ok(AblationReport { series })
}
