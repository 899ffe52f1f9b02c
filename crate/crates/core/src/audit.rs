//! Significance audits of published estimates, translation of a logistic
//! coefficient into a relative risk at mean covariates, and the lag-sum
//! diagnostic.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gee::{FitError, FitResult};
use crate::modelspec::{linear_predictor, mean_covariate_row, DesignError, DesignMatrix, Family, ModelParams};
use crate::stats::{logistic, logit, two_sided_p, z_critical};

/// Lower bound within this fraction of the estimate counts as "close to 0".
pub const DEFAULT_NEAR_ZERO_FRACTION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("cannot compare a coefficient record with a percent record ({0} vs {1})")]
    MixedRepresentations(String, String),
    #[error("record {label}: {message}")]
    InvalidRecord { label: String, message: String },
    #[error("relative risk {target_rr} cannot be reached with beta1 = {beta1}: it must lie strictly between 1 and exp(beta1) = {max_rr}")]
    NoValidBaseline { beta1: f64, target_rr: f64, max_rr: f64 },
    #[error("risk translation needs a logistic fit")]
    NotLogistic,
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("records csv row {row}: {message}")]
    Csv { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scale", rename_all = "snake_case")]
pub enum Estimate {
    Coef { coef: f64, se: f64 },
    Percent { percent: f64, low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub group: String,
    pub label: String,
    pub estimate: Estimate,
    /// The source treats this estimate as no effect.
    pub claimed_null: bool,
}

impl EstimateRecord {
    pub fn coef(group: &str, label: &str, coef: f64, se: f64) -> Result<Self, AuditError> {
        if !(se > 0.0 && se.is_finite() && coef.is_finite()) {
            return Err(AuditError::InvalidRecord {
                label: label.to_string(),
                message: format!("need finite coef and se > 0 (got {coef}, {se})"),
            });
        }
        Ok(EstimateRecord {
            group: group.to_string(),
            label: label.to_string(),
            estimate: Estimate::Coef { coef, se },
            claimed_null: false,
        })
    }

    pub fn percent(group: &str, label: &str, percent: f64, low: f64, high: f64) -> Result<Self, AuditError> {
        if !(low <= percent && percent <= high) {
            return Err(AuditError::InvalidRecord {
                label: label.to_string(),
                message: format!("need low <= percent <= high (got {percent} [{low}, {high}])"),
            });
        }
        Ok(EstimateRecord {
            group: group.to_string(),
            label: label.to_string(),
            estimate: Estimate::Percent { percent, low, high },
            claimed_null: false,
        })
    }

    pub fn claimed_null(mut self) -> Self {
        self.claimed_null = true;
        self
    }

    pub fn point(&self) -> f64 {
        match self.estimate {
            Estimate::Coef { coef, .. } => coef,
            Estimate::Percent { percent, .. } => percent,
        }
    }

    /// Reported interval for percents, `coef ± z·se` for coefficients.
    pub fn ci(&self, level: f64) -> (f64, f64) {
        match self.estimate {
            Estimate::Coef { coef, se } => {
                let z = z_critical(level);
                (coef - z * se, coef + z * se)
            }
            Estimate::Percent { low, high, .. } => (low, high),
        }
    }
}

fn contains(ci: (f64, f64), x: f64) -> bool {
    ci.0 <= x && x <= ci.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub overlap: bool,
    pub e1_in_ci2: bool,
    pub e2_in_ci1: bool,
    /// Naive difference z-score; coefficient records only.
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub distinguishable: bool,
    pub caveat: String,
}

const COEF_CAVEAT: &str =
    "naive z treats the two estimates as independent and as coming from one valid joint model; neither is established";
const PERCENT_CAVEAT: &str =
    "percent-scale records are compared by interval logic only because no standard errors are reported";

/// Distinguishable means the intervals are disjoint and, when a z-score is
/// available, its two-sided p is below `1 - level`.
pub fn compare(e1: &EstimateRecord, e2: &EstimateRecord, level: f64) -> Result<ComparisonVerdict, AuditError> {
    let (ci1, ci2) = (e1.ci(level), e2.ci(level));
    let overlap = ci1.0 <= ci2.1 && ci2.0 <= ci1.1;
    let (z, p, caveat) = match (e1.estimate, e2.estimate) {
        (Estimate::Coef { coef: c1, se: s1 }, Estimate::Coef { coef: c2, se: s2 }) => {
            let z = (c1 - c2) / (s1 * s1 + s2 * s2).sqrt();
            (Some(z), Some(two_sided_p(z)), COEF_CAVEAT)
        }
        (Estimate::Percent { .. }, Estimate::Percent { .. }) => (None, None, PERCENT_CAVEAT),
        _ => return Err(AuditError::MixedRepresentations(e1.label.clone(), e2.label.clone())),
    };
    let distinguishable = !overlap && p.is_none_or(|p| p < 1.0 - level);
    Ok(ComparisonVerdict {
        overlap,
        e1_in_ci2: contains(ci2, e1.point()),
        e2_in_ci1: contains(ci1, e2.point()),
        z,
        p,
        distinguishable,
        caveat: caveat.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallacyFlag {
    /// Covariate 1 significant, covariate 2 not, and the intervals overlap.
    TreatedInsignificantAsZero,
    /// Covariate 2's interval contains covariate 1's.
    EngulfingCi,
    /// Claimed-null estimate whose interval is not close to 0.
    NullClaimNotCloseToZero,
}

impl FallacyFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            FallacyFlag::TreatedInsignificantAsZero => "treated_insignificant_as_zero",
            FallacyFlag::EngulfingCi => "engulfing_ci",
            FallacyFlag::NullClaimNotCloseToZero => "null_claim_not_close_to_zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAudit {
    pub group: String,
    pub first: String,
    pub second: String,
    pub verdict: ComparisonVerdict,
    pub flags: Vec<FallacyFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleAudit {
    pub group: String,
    pub label: String,
    pub ci: (f64, f64),
    pub ci_excludes_zero: bool,
    pub flags: Vec<FallacyFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub level: f64,
    pub near_zero_fraction: f64,
    pub pairs: Vec<PairAudit>,
    pub singles: Vec<SingleAudit>,
}

fn pair_flags(e1: &EstimateRecord, e2: &EstimateRecord, v: &ComparisonVerdict, level: f64) -> Vec<FallacyFlag> {
    let (ci1, ci2) = (e1.ci(level), e2.ci(level));
    let mut flags = Vec::new();
    if !contains(ci1, 0.0) && contains(ci2, 0.0) && v.overlap {
        flags.push(FallacyFlag::TreatedInsignificantAsZero);
    }
    if ci2.0 <= ci1.0 && ci1.1 <= ci2.1 && ci1 != ci2 {
        flags.push(FallacyFlag::EngulfingCi);
    }
    flags
}

/// Audits records that the source reports as null.
pub fn audit_single(record: &EstimateRecord, level: f64, near_zero_fraction: f64) -> SingleAudit {
    let ci = record.ci(level);
    let excludes = !contains(ci, 0.0);
    let far_lower = ci.0.abs() > near_zero_fraction * record.point().abs();
    let mut flags = Vec::new();
    if record.claimed_null && (excludes || far_lower) {
        flags.push(FallacyFlag::NullClaimNotCloseToZero);
    }
    SingleAudit {
        group: record.group.clone(),
        label: record.label.clone(),
        ci,
        ci_excludes_zero: excludes,
        flags,
    }
}

/// Compares every pair of records within a group, in file order, and runs the
/// single-record check on every claimed-null record.
pub fn audit_table(records: &[EstimateRecord], level: f64, near_zero_fraction: f64) -> Result<AuditReport, AuditError> {
    let mut pairs = Vec::new();
    for (a, e1) in records.iter().enumerate() {
        for e2 in records[a + 1..].iter().filter(|e| e.group == e1.group) {
            let verdict = compare(e1, e2, level)?;
            let flags = pair_flags(e1, e2, &verdict, level);
            pairs.push(PairAudit {
                group: e1.group.clone(),
                first: e1.label.clone(),
                second: e2.label.clone(),
                verdict,
                flags,
            });
        }
    }
    let singles = records
        .iter()
        .filter(|r| r.claimed_null)
        .map(|r| audit_single(r, level, near_zero_fraction))
        .collect();
    Ok(AuditReport {
        level,
        near_zero_fraction,
        pairs,
        singles,
    })
}

pub mod fixtures {
    //! Published estimates used by the audit.
    use super::EstimateRecord;

    fn c(group: &str, label: &str, coef: f64, se: f64) -> EstimateRecord {
        EstimateRecord::coef(group, label, coef, se).expect("fixture is valid")
    }

    fn p(group: &str, label: &str, pct: f64, lo: f64, hi: f64) -> EstimateRecord {
        EstimateRecord::percent(group, label, pct, lo, hi).expect("fixture is valid")
    }

    pub const MUTUAL: &str = "FP<->LP";
    pub const FP_NAMES_LP: &str = "FP->LP";
    pub const LP_NAMES_FP: &str = "LP->FP";

    fn triple(group: &str, v: [(f64, f64); 3]) -> Vec<EstimateRecord> {
        [MUTUAL, FP_NAMES_LP, LP_NAMES_FP]
            .iter()
            .zip(v)
            .map(|(l, (e, s))| c(group, l, e, s))
            .collect()
    }

    fn triple_pct(group: &str, v: [(f64, f64, f64); 3]) -> Vec<EstimateRecord> {
        [MUTUAL, FP_NAMES_LP, LP_NAMES_FP]
            .iter()
            .zip(v)
            .map(|(l, (e, lo, hi))| p(group, l, e, lo, hi))
            .collect()
    }

    /// Directional friendship estimates, grouped by source.
    pub fn table1() -> Vec<EstimateRecord> {
        let mut v = Vec::new();
        v.extend(triple_pct(
            "obesity p.376",
            [(171.0, 59.0, 326.0), (57.0, 6.0, 123.0), (13.0, -28.0, 68.0)],
        ));
        v.extend(triple("obesity suppl. p.3", [(1.19, 0.33), (0.52, 0.23), (0.11, 0.28)]));
        v.push(c("peer p.1401", FP_NAMES_LP, 0.033, 0.014));
        v.push(c("peer p.1401", LP_NAMES_FP, 0.002, 0.014));
        v.extend(triple_pct(
            "smoking pp.2254,2256",
            [(43.0, 1.0, 69.0), (36.0, 12.0, 55.0), (15.0, -35.0, 50.0)],
        ));
        v.extend(triple(
            "smoking suppl. p.18",
            [(0.66, 0.33), (0.51, 0.19), (0.21, 0.27)],
        ));
        v.extend(triple_pct(
            "happiness p.6",
            [(63.0, 12.0, 148.0), (25.0, 1.0, 57.0), (12.0, -13.0, 47.0)],
        ));
        v.extend(triple(
            "happiness suppl. p.9",
            [(2.07, 0.79), (0.70, 0.34), (0.32, 0.41)],
        ));
        v.extend(triple(
            "loneliness pp.983-984",
            [(0.41, 0.13), (0.29, 0.11), (0.35, 0.30)],
        ));
        v
    }

    /// Significant covariate 1 against an insignificant covariate 2.
    pub fn table2() -> Vec<EstimateRecord> {
        let pair = |g: &str, (l1, p1, lo1, hi1): (&str, f64, f64, f64), (l2, p2, lo2, hi2): (&str, f64, f64, f64)| {
            [p(g, l1, p1, lo1, hi1), p(g, l2, p2, lo2, hi2).claimed_null()]
        };
        [
            pair(
                "obesity sex",
                ("same sex", 71.0, 13.0, 145.0),
                ("opposite sex", -9.0, -62.0, 117.0),
            ),
            pair(
                "obesity same sex",
                ("M same sex", 100.0, 26.0, 197.0),
                ("F same sex", 38.0, -39.0, 161.0),
            ),
            pair(
                "smoking FP college",
                ("FP college", 57.0, 29.0, 75.0),
                ("LP no college", 4.0, -67.0, 43.0),
            ),
            pair(
                "smoking LP college",
                ("LP college", 55.0, 26.0, 74.0),
                ("LP no college", 4.0, -67.0, 43.0),
            ),
            pair(
                "smoking both college",
                ("both college", 61.0, 28.0, 81.0),
                ("LP no college", 4.0, -67.0, 43.0),
            ),
            [
                c("smoking period", "late period", -70.89, 35.9),
                c("smoking period", "early period", 11.49, 13.3).claimed_null(),
            ],
            pair(
                "happiness friend distance",
                ("nearby friend", 25.0, 1.0, 57.0),
                ("distant friend", -3.0, -15.0, 10.0),
            ),
            pair(
                "happiness spouse",
                ("coresident spouse", 8.0, 0.2, 16.0),
                ("non-coresident spouse", 2.0, -18.0, 31.0),
            ),
            pair(
                "happiness sibling distance",
                ("nearby sibling", 14.0, 1.0, 28.0),
                ("distant sibling", 2.0, -3.0, 8.0),
            ),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    /// Estimates reported as null effects.
    pub fn table3() -> Vec<EstimateRecord> {
        vec![
            p("obesity sibling", "opposite sex sibling", 27.0, 3.0, 54.0).claimed_null(),
            c("smoking centrality early", "early current centrality", 2.20, 91.31).claimed_null(),
            c("smoking centrality late", "late current centrality", -138.00, 156.00).claimed_null(),
            c("happiness unhappy alter", "additional unhappy alter", -0.06, 0.03).claimed_null(),
            c("happiness coworkers", "coworkers", -0.29, 0.16).claimed_null(),
        ]
    }

    pub fn by_name(name: &str) -> Option<Vec<EstimateRecord>> {
        match name {
            "table1" => Some(table1()),
            "table2" => Some(table2()),
            "table3" => Some(table3()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskIncrease {
    /// `100 (RR - 1)` at mean covariates.
    pub percent: f64,
    /// Percent at the ends of the beta1 Wald interval.
    pub interval: (f64, f64),
    pub baseline_prob: f64,
    /// `100 (exp(beta1) - 1)`.
    pub odds_increase_percent: f64,
}

/// Relative risk of the alter having the trait at the mean-covariate row.
pub fn relative_risk_at(params: &ModelParams, row: &crate::modelspec::DesignRow) -> (f64, f64) {
    let mut r = row.clone();
    r.alter_current = 0.0;
    let p0 = logistic(linear_predictor(params, &r));
    r.alter_current = 1.0;
    let p1 = logistic(linear_predictor(params, &r));
    (p1 / p0, p0)
}

/// Risk increase from `params`; `beta1_se` sets the interval (degenerate
/// when absent).
pub fn risk_increase(
    params: &ModelParams,
    beta1_se: Option<f64>,
    design: &DesignMatrix,
    level: f64,
) -> Result<RiskIncrease, AuditError> {
    if design.family != Family::LogitBinary {
        return Err(AuditError::NotLogistic);
    }
    let row = mean_covariate_row(design)?;
    let (rr, p0) = relative_risk_at(params, &row);
    let half = beta1_se.map_or(0.0, |se| z_critical(level) * se);
    // The map from beta1 to relative risk is increasing.
    let at = |b: f64| {
        let mut q = *params;
        q.beta1 = b;
        100.0 * (relative_risk_at(&q, &row).0 - 1.0)
    };
    Ok(RiskIncrease {
        percent: 100.0 * (rr - 1.0),
        interval: (at(params.beta1 - half), at(params.beta1 + half)),
        baseline_prob: p0,
        odds_increase_percent: 100.0 * (params.beta1.exp() - 1.0),
    })
}

pub fn risk_increase_fit(fit: &FitResult, design: &DesignMatrix, level: f64) -> Result<RiskIncrease, AuditError> {
    if fit.family != Family::LogitBinary {
        return Err(AuditError::NotLogistic);
    }
    risk_increase(&fit.params, Some(fit.robust_se_of("beta1")?), design, level)
}

/// Relative risk for an alter effect `beta1` at baseline probability `p0`.
pub fn relative_risk(beta1: f64, p0: f64) -> f64 {
    logistic(logit(p0) + beta1) / p0
}

/// Baseline probability at which `beta1` yields relative risk `target_rr`.
pub fn invert_baseline(beta1: f64, target_rr: f64) -> Result<f64, AuditError> {
    let odds_ratio = beta1.exp();
    if !(target_rr > 1.0 && target_rr < odds_ratio) {
        return Err(AuditError::NoValidBaseline {
            beta1,
            target_rr,
            max_rr: odds_ratio,
        });
    }
    // RR = OR / (1 + p (OR - 1)), solved for p.
    Ok((odds_ratio / target_rr - 1.0) / (odds_ratio - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSum {
    pub beta1: f64,
    pub beta2: f64,
    pub sum: f64,
    /// `sqrt(se1^2 + se2^2)`, ignoring their covariance.
    pub se: Option<f64>,
    pub opposite_signs: bool,
    pub interpretation: String,
}

pub fn lag_sum_diagnostic(fit: &FitResult) -> LagSum {
    let (b1, b2) = (fit.params.beta1, fit.params.beta2);
    let se = match (fit.robust_se_of("beta1"), fit.robust_se_of("beta2")) {
        (Ok(a), Ok(b)) => Some((a * a + b * b).sqrt()),
        _ => None,
    };
    let opposite_signs = b1 * b2 < 0.0;
    let interpretation = if opposite_signs {
        format!(
            "beta1 = {b1:.4} and beta2 = {b2:.4} have opposite signs and sum to {:.4}: the association is with the change in the alter's trait, so the lagged alter term amplifies beta1 instead of removing a shared baseline",
            b1 + b2
        )
    } else {
        format!("beta1 = {b1:.4} and beta2 = {b2:.4} do not have opposite signs")
    };
    LagSum {
        beta1: b1,
        beta2: b2,
        sum: b1 + b2,
        se,
        opposite_signs,
        interpretation,
    }
}

const RECORD_HEADER: [&str; 8] = ["group", "label", "coef", "se", "percent", "lo", "hi", "claimed_null"];

/// Reads `group,label,coef,se,percent,lo,hi,claimed_null`. Only `label`
/// plus either `coef,se` or `percent,lo,hi` are required; other columns may
/// be absent or blank.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<EstimateRecord>, AuditError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| AuditError::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let label_col = col("label").ok_or(AuditError::Csv {
        row: 1,
        message: "missing label column".into(),
    })?;
    let idx: Vec<Option<usize>> = RECORD_HEADER.iter().map(|h| col(h)).collect();
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 2;
        let rec = rec.map_err(|e| AuditError::Csv {
            row,
            message: e.to_string(),
        })?;
        let field = |k: usize| idx[k].and_then(|c| rec.get(c)).filter(|s| !s.is_empty());
        let num = |k: usize| -> Result<Option<f64>, AuditError> {
            field(k)
                .map(|s| {
                    s.parse::<f64>().map_err(|_| AuditError::Csv {
                        row,
                        message: format!("{} = {s:?} is not a number", RECORD_HEADER[k]),
                    })
                })
                .transpose()
        };
        let group = field(0).unwrap_or("").to_string();
        let label = rec.get(label_col).unwrap_or("").to_string();
        let record = match (num(2)?, num(3)?, num(4)?, num(5)?, num(6)?) {
            (Some(c), Some(s), None, None, None) => EstimateRecord::coef(&group, &label, c, s)?,
            (None, None, Some(p), Some(lo), Some(hi)) => EstimateRecord::percent(&group, &label, p, lo, hi)?,
            _ => {
                return Err(AuditError::Csv {
                    row,
                    message: "need exactly one of coef,se or percent,lo,hi".into(),
                })
            }
        };
        let claimed = match field(7) {
            None => false,
            Some(s) => s.parse::<bool>().map_err(|_| AuditError::Csv {
                row,
                message: format!("claimed_null = {s:?} is not true/false"),
            })?,
        };
        out.push(EstimateRecord {
            claimed_null: claimed,
            ..record
        });
    }
    Ok(out)
}

pub fn records_csv(records: &[EstimateRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_HEADER).expect("in-memory write");
    for r in records {
        let (c, s, p, lo, hi) = match r.estimate {
            Estimate::Coef { coef, se } => (
                coef.to_string(),
                se.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ),
            Estimate::Percent { percent, low, high } => (
                String::new(),
                String::new(),
                percent.to_string(),
                low.to_string(),
                high.to_string(),
            ),
        };
        w.write_record([&r.group, &r.label, &c, &s, &p, &lo, &hi, &r.claimed_null.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

fn flag_list(flags: &[FallacyFlag]) -> String {
    flags.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(";")
}

/// One row per pair, then one row per claimed-null record.
pub fn verdicts_csv(report: &AuditReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind",
        "group",
        "first",
        "second",
        "overlap",
        "first_in_second_ci",
        "second_in_first_ci",
        "z",
        "p",
        "distinguishable",
        "ci_excludes_zero",
        "flags",
    ])
    .expect("in-memory write");
    for p in &report.pairs {
        let v = &p.verdict;
        w.write_record([
            "pair",
            &p.group,
            &p.first,
            &p.second,
            &v.overlap.to_string(),
            &v.e1_in_ci2.to_string(),
            &v.e2_in_ci1.to_string(),
            &opt(v.z),
            &opt(v.p),
            &v.distinguishable.to_string(),
            "",
            &flag_list(&p.flags),
        ])
        .expect("in-memory write");
    }
    for s in &report.singles {
        w.write_record([
            "single",
            &s.group,
            &s.label,
            "",
            "",
            "",
            "",
            "",
            "",
            "",
            &s.ci_excludes_zero.to_string(),
            &flag_list(&s.flags),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::modelspec::{wave_dummies, DesignRow};
    use crate::netpanel::PersonId;
    use proptest::prelude::*;

    fn find<'a>(recs: &'a [EstimateRecord], group: &str, label: &str) -> &'a EstimateRecord {
        recs.iter().find(|r| r.group == group && r.label == label).unwrap()
    }

    #[test]
    fn percent_comparison_example() {
        let t = table1();
        let v = compare(
            find(&t, "obesity p.376", FP_NAMES_LP),
            find(&t, "obesity p.376", LP_NAMES_FP),
            0.95,
        )
        .unwrap();
        assert!(v.overlap && v.e1_in_ci2 && v.e2_in_ci1 && !v.distinguishable);
        assert!(v.z.is_none());
    }

    #[test]
    fn coefficient_comparison_example() {
        let t = table1();
        let g = "obesity suppl. p.3";
        let v = compare(find(&t, g, FP_NAMES_LP), find(&t, g, LP_NAMES_FP), 0.95).unwrap();
        let z = v.z.unwrap();
        assert!((z - 0.41 / (0.23f64.powi(2) + 0.28f64.powi(2)).sqrt()).abs() < 1e-12);
        assert!((z - 1.13).abs() < 0.01);
        assert!((v.p.unwrap() - 0.26).abs() < 0.005);
        assert!(!v.distinguishable);
        let same = compare(find(&t, g, MUTUAL), find(&t, g, MUTUAL), 0.95).unwrap();
        assert_eq!(same.z, Some(0.0));
        assert!(same.overlap);
    }

    #[test]
    fn mixed_records_rejected() {
        let a = EstimateRecord::coef("", "a", 1.0, 0.5).unwrap();
        let b = EstimateRecord::percent("", "b", 1.0, 0.0, 2.0).unwrap();
        assert!(matches!(
            compare(&a, &b, 0.95),
            Err(AuditError::MixedRepresentations(..))
        ));
    }

    #[test]
    fn invalid_records_rejected() {
        assert!(EstimateRecord::coef("", "a", 1.0, 0.0).is_err());
        assert!(EstimateRecord::percent("", "a", 5.0, 6.0, 7.0).is_err());
    }

    #[test]
    fn disjoint_coefficients_are_distinguishable() {
        let a = EstimateRecord::coef("", "a", 3.0, 0.2).unwrap();
        let b = EstimateRecord::coef("", "b", 0.0, 0.2).unwrap();
        let v = compare(&a, &b, 0.95).unwrap();
        assert!(v.distinguishable && !v.overlap);
    }

    #[test]
    fn table1_nothing_distinguishable() {
        let rep = audit_table(&table1(), 0.95, DEFAULT_NEAR_ZERO_FRACTION).unwrap();
        assert_eq!(rep.pairs.len(), 3 * 7 + 1);
        assert!(rep.pairs.iter().all(|p| !p.verdict.distinguishable));
    }

    #[test]
    fn table2_flags() {
        let rep = audit_table(&table2(), 0.95, DEFAULT_NEAR_ZERO_FRACTION).unwrap();
        assert_eq!(rep.pairs.len(), 9);
        assert!(rep.pairs.iter().all(|p| !p.verdict.distinguishable));
        let spouse = rep.pairs.iter().find(|p| p.group == "happiness spouse").unwrap();
        assert!(spouse.flags.contains(&FallacyFlag::EngulfingCi));
        assert!(spouse.flags.contains(&FallacyFlag::TreatedInsignificantAsZero));
        let friend = rep
            .pairs
            .iter()
            .find(|p| p.group == "happiness friend distance")
            .unwrap();
        assert!(!friend.flags.contains(&FallacyFlag::EngulfingCi));
    }

    #[test]
    fn table3_sibling_flag() {
        let rep = audit_table(&table3(), 0.95, DEFAULT_NEAR_ZERO_FRACTION).unwrap();
        assert!(rep.pairs.is_empty());
        let sib = rep.singles.iter().find(|s| s.label == "opposite sex sibling").unwrap();
        assert!(sib.ci_excludes_zero);
        assert_eq!(sib.flags, vec![FallacyFlag::NullClaimNotCloseToZero]);
    }

    #[test]
    fn identical_pair_has_no_flags() {
        let a = EstimateRecord::percent("g", "a", 10.0, -5.0, 20.0).unwrap();
        let b = EstimateRecord::percent("g", "b", 10.0, -5.0, 20.0).unwrap();
        let rep = audit_table(&[a, b], 0.95, DEFAULT_NEAR_ZERO_FRACTION).unwrap();
        assert!(rep.pairs[0].flags.is_empty());
    }

    #[test]
    fn invert_baseline_examples() {
        let p = invert_baseline(0.52, 1.57).unwrap();
        assert!((p - 0.1046).abs() < 5e-4, "{p}");
        assert!((relative_risk(0.52, p) - 1.57).abs() < 1e-12);
        let near_one = invert_baseline(0.52, 1.0 + 1e-6).unwrap();
        assert!(near_one > 0.999 && near_one < 1.0);
        assert!(matches!(
            invert_baseline(0.11, 1.13),
            Err(AuditError::NoValidBaseline { .. })
        ));
    }

    /// Bisection on the increasing map `p -> -RR(p)`.
    fn bisect_baseline(beta1: f64, rr: f64) -> f64 {
        let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if relative_risk(beta1, mid) > rr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn closed_form_matches_bisection() {
        for (b, rr) in [(0.52, 1.57), (1.19, 2.71), (0.3, 1.1), (2.0, 5.0)] {
            let p = invert_baseline(b, rr).unwrap();
            assert!((p - bisect_baseline(b, rr)).abs() < 1e-10);
        }
    }

    fn one_row_design(age: f64) -> DesignMatrix {
        let id = PersonId::new("x");
        let mut d = DesignMatrix::new(Family::LogitBinary);
        d.rows.push(DesignRow {
            response: 0.0,
            alter_current: 0.3,
            alter_lagged: 0.0,
            ego_lagged: 0.0,
            wave_dummies: wave_dummies(2, Family::LogitBinary),
            age,
            female: 0.0,
            education: 0.0,
            cluster: id.clone(),
            fp_id: id.clone(),
            alter_id: id,
            wave: 2,
        });
        d
    }

    fn baseline_params(p0: f64, beta1: f64) -> ModelParams {
        ModelParams {
            alpha: logit(p0),
            beta1,
            ..Default::default()
        }
    }

    #[test]
    fn risk_increase_examples() {
        let d = one_row_design(40.0);
        let zero = risk_increase(&baseline_params(0.2, 0.0), None, &d, 0.95).unwrap();
        assert!(zero.percent.abs() < 1e-12);
        assert_eq!(zero.interval.0, zero.interval.1);

        let p0 = invert_baseline(0.52, 1.57).unwrap();
        let r = risk_increase(&baseline_params(p0, 0.52), Some(0.23), &d, 0.95).unwrap();
        assert!((r.percent - 57.0).abs() < 1e-8);
        assert!((r.baseline_prob - p0).abs() < 1e-12);
        assert!(r.interval.0 < r.percent && r.percent < r.interval.1);

        let mut lin = d.clone();
        lin.family = Family::LinearCount;
        assert!(matches!(
            risk_increase(&baseline_params(0.2, 0.3), None, &lin, 0.95),
            Err(AuditError::NotLogistic)
        ));
    }

    #[test]
    fn risk_below_odds_increase() {
        let d = one_row_design(40.0);
        for k in 1..=60 {
            let b = k as f64 * 0.05;
            let r = risk_increase(&baseline_params(0.3, b), None, &d, 0.95).unwrap();
            assert!(r.percent < r.odds_increase_percent);
        }
    }

    #[test]
    fn lag_sum_examples() {
        use crate::gee::{fit_logistic_gee, FitOptions};
        let id = |s: &str| PersonId::new(s);
        let mut d = DesignMatrix::new(Family::LogitBinary);
        for (n, (x, y)) in [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0)]
            .into_iter()
            .enumerate()
        {
            let mut r = one_row_design(0.0).rows.remove(0);
            r.age = 0.0;
            r.alter_current = x;
            r.response = y;
            r.cluster = id(&format!("c{n}"));
            d.rows.push(r);
        }
        let mut fit = fit_logistic_gee(&d, &FitOptions::default()).unwrap();
        fit.params.beta1 = 1.0;
        fit.params.beta2 = -1.0;
        let l = lag_sum_diagnostic(&fit);
        assert_eq!(l.sum, 0.0);
        assert!(l.opposite_signs);
        fit.params.beta1 = 0.0;
        fit.params.beta2 = 0.0;
        let l = lag_sum_diagnostic(&fit);
        assert_eq!(l.sum, 0.0);
        assert!(!l.opposite_signs);
    }

    #[test]
    fn records_round_trip() {
        let all: Vec<EstimateRecord> = [table1(), table2(), table3()].concat();
        let back = read_records(records_csv(&all).as_bytes()).unwrap();
        assert_eq!(back, all);
    }

    #[test]
    fn minimal_csv_formats() {
        let coef = read_records("label,coef,se\na,1.19,0.33\nb,0.52,0.23\n".as_bytes()).unwrap();
        assert_eq!(coef.len(), 2);
        assert_eq!(coef[0].group, "");
        let pct = read_records("label,percent,lo,hi\na,57,6,123\n".as_bytes()).unwrap();
        assert_eq!(pct[0].ci(0.95), (6.0, 123.0));
        assert!(read_records("label,coef\na,1\n".as_bytes()).is_err());
        assert!(read_records("label,coef,se\na,x,1\n".as_bytes()).is_err());
    }

    #[test]
    fn verdict_csv_lists_everything() {
        let rep = audit_table(&[table2(), table3()].concat(), 0.95, DEFAULT_NEAR_ZERO_FRACTION).unwrap();
        let s = verdicts_csv(&rep);
        assert_eq!(s.lines().count(), 1 + 9 + 9 + 5);
        assert!(s.contains("engulfing_ci"));
    }

    proptest! {
        #[test]
        fn compare_symmetric(c1 in -3.0..3.0f64, s1 in 0.01..2.0f64, c2 in -3.0..3.0f64, s2 in 0.01..2.0f64,
                             level in 0.5..0.99f64) {
            let a = EstimateRecord::coef("", "a", c1, s1).unwrap();
            let b = EstimateRecord::coef("", "b", c2, s2).unwrap();
            let ab = compare(&a, &b, level).unwrap();
            let ba = compare(&b, &a, level).unwrap();
            prop_assert_eq!(ab.distinguishable, ba.distinguishable);
            if ab.distinguishable {
                prop_assert!(ab.p.unwrap() < 1.0 - level);
            }
        }

        #[test]
        fn risk_increasing_in_beta1(p0 in 0.01..0.99f64, b in -3.0..3.0f64, db in 0.001..1.0f64) {
            let a = relative_risk(b, p0);
            let c = relative_risk(b + db, p0);
            prop_assert!(c > a);
        }

        #[test]
        fn translate_then_invert(p0 in 0.01..0.99f64, b in 0.01..3.0f64) {
            let rr = relative_risk(b, p0);
            let back = invert_baseline(b, rr).unwrap();
            prop_assert!((back - p0).abs() < 1e-8);
        }
    }
}
