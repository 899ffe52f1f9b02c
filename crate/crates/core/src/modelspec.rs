//! Tie-level regression design.
//!
//! One [`DesignRow`] per `(fp, alter, wave)` in a tie set, laid out as
//!
//! ```text
//! eta = alpha + beta1*Y[j,t] + beta2*Y[j,t-1] + beta3*Y[i,t-1]
//!     + sum_{n=3..7} gamma_n*W_n(t) + delta1*A[i,t] + delta2*F[i] + delta3*E[i,t]
//! ```
//!
//! with `i` the focal participant and `j` the alter. The same layout serves
//! the logistic (binary trait) and linear (0..7 count) families.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netpanel::{CohortPanel, PanelError, PersonId, TieSelector, TieSet, TraitKind};

pub const N_COEF: usize = 12;
pub const N_WAVE_DUMMIES: usize = 5;
/// Wave coded by the first dummy; wave 2 is the baseline.
pub const FIRST_DUMMY_WAVE: u8 = 3;

pub const COEF_NAMES: [&str; N_COEF] = [
    "alpha", "beta1", "beta2", "beta3", "gamma3", "gamma4", "gamma5", "gamma6", "gamma7", "delta1", "delta2", "delta3",
];

pub fn coef_index(name: &str) -> Option<usize> {
    COEF_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("missing exam for `{person}` at wave {wave}")]
    MissingExam { person: String, wave: u8 },
    #[error("unknown person `{0}`")]
    UnknownPerson(String),
    #[error("design is empty")]
    Empty,
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// gamma_3 .. gamma_7
    pub gamma: [f64; N_WAVE_DUMMIES],
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl ModelParams {
    pub fn to_array(&self) -> [f64; N_COEF] {
        let g = self.gamma;
        [
            self.alpha,
            self.beta1,
            self.beta2,
            self.beta3,
            g[0],
            g[1],
            g[2],
            g[3],
            g[4],
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    pub fn from_array(v: [f64; N_COEF]) -> Self {
        ModelParams {
            alpha: v[0],
            beta1: v[1],
            beta2: v[2],
            beta3: v[3],
            gamma: [v[4], v[5], v[6], v[7], v[8]],
            delta1: v[9],
            delta2: v[10],
            delta3: v[11],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        coef_index(name).map(|i| self.to_array()[i])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LogitBinary,
    LinearCount,
}

impl Family {
    pub fn for_trait(kind: TraitKind) -> Self {
        match kind {
            TraitKind::Binary => Family::LogitBinary,
            TraitKind::Count0to7 => Family::LinearCount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub response: f64,
    pub alter_current: f64,
    pub alter_lagged: f64,
    pub ego_lagged: f64,
    /// W_3 .. W_7
    pub wave_dummies: [f64; N_WAVE_DUMMIES],
    pub age: f64,
    pub female: f64,
    pub education: f64,
    pub cluster: PersonId,
    pub fp_id: PersonId,
    pub alter_id: PersonId,
    pub wave: u8,
}

impl DesignRow {
    /// Covariate vector aligned with [`COEF_NAMES`] (leading 1 for alpha).
    pub fn features(&self) -> [f64; N_COEF] {
        let w = self.wave_dummies;
        [
            1.0,
            self.alter_current,
            self.alter_lagged,
            self.ego_lagged,
            w[0],
            w[1],
            w[2],
            w[3],
            w[4],
            self.age,
            self.female,
            self.education,
        ]
    }

    /// Overwrites the covariate named by `coef` (not `alpha`).
    pub fn set_feature(&mut self, coef: usize, value: f64) {
        match coef {
            1 => self.alter_current = value,
            2 => self.alter_lagged = value,
            3 => self.ego_lagged = value,
            4..=8 => self.wave_dummies[coef - 4] = value,
            9 => self.age = value,
            10 => self.female = value,
            11 => self.education = value,
            _ => panic!("feature {coef} is not settable"),
        }
    }
}

/// Dummy coding for a wave: one indicator for waves 3..=7, none for wave 2.
pub fn wave_dummies(wave: u8, family: Family) -> [f64; N_WAVE_DUMMIES] {
    let mut w = [0.0; N_WAVE_DUMMIES];
    if wave >= FIRST_DUMMY_WAVE {
        let idx = (wave - FIRST_DUMMY_WAVE) as usize;
        // The count model carries only gamma_7.
        let active = match family {
            Family::LogitBinary => true,
            Family::LinearCount => idx == N_WAVE_DUMMIES - 1,
        };
        if active && idx < N_WAVE_DUMMIES {
            w[idx] = 1.0;
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub rows: Vec<DesignRow>,
    pub family: Family,
}

impl DesignMatrix {
    pub fn new(family: Family) -> Self {
        DesignMatrix {
            rows: Vec::new(),
            family,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: DesignMatrix) {
        debug_assert_eq!(self.family, other.family);
        self.rows.extend(other.rows);
    }

    /// CSV with one column per row field, for external cross-checks.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "fp_id,alter_id,wave,cluster,response,alter_current,alter_lagged,ego_lagged,w3,w4,w5,w6,w7,age,female,education\n",
        );
        for r in &self.rows {
            let w = r.wave_dummies;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.fp_id,
                r.alter_id,
                r.wave,
                r.cluster,
                r.response,
                r.alter_current,
                r.alter_lagged,
                r.ego_lagged,
                w[0],
                w[1],
                w[2],
                w[3],
                w[4],
                r.age,
                r.female,
                r.education
            );
        }
        s
    }
}

fn trait_at(panel: &CohortPanel, id: &PersonId, wave: u8) -> Result<f64, DesignError> {
    panel
        .exam(id, wave)
        .map(|e| e.trait_value as f64)
        .ok_or_else(|| DesignError::MissingExam {
            person: id.0.clone(),
            wave,
        })
}

/// One row per pair of `tie_set`, clustered on the focal participant.
pub fn build_design(panel: &CohortPanel, tie_set: &TieSet) -> Result<DesignMatrix, DesignError> {
    let family = Family::for_trait(panel.trait_kind());
    let t = tie_set.wave;
    let mut rows = Vec::with_capacity(tie_set.len());
    for (fp, alter) in &tie_set.pairs {
        let person = panel
            .person(fp)
            .ok_or_else(|| DesignError::UnknownPerson(fp.0.clone()))?;
        let exam = panel.exam(fp, t).ok_or_else(|| DesignError::MissingExam {
            person: fp.0.clone(),
            wave: t,
        })?;
        rows.push(DesignRow {
            response: exam.trait_value as f64,
            alter_current: trait_at(panel, alter, t)?,
            alter_lagged: trait_at(panel, alter, t - 1)?,
            ego_lagged: trait_at(panel, fp, t - 1)?,
            wave_dummies: wave_dummies(t, family),
            age: exam.age_years,
            female: if person.female { 1.0 } else { 0.0 },
            education: exam.education_years,
            cluster: fp.clone(),
            fp_id: fp.clone(),
            alter_id: alter.clone(),
            wave: t,
        });
    }
    Ok(DesignMatrix { rows, family })
}

/// Stacks the designs of `selector` over every wave `t >= 2` of the panel.
pub fn build_design_for_selector(panel: &CohortPanel, selector: &TieSelector) -> Result<DesignMatrix, DesignError> {
    let mut design = DesignMatrix::new(Family::for_trait(panel.trait_kind()));
    for wave in panel.waves().into_iter().filter(|w| *w >= 2) {
        let ts = panel.tie_set(wave, selector)?;
        design.extend(build_design(panel, &ts)?);
    }
    Ok(design)
}

pub fn linear_predictor(params: &ModelParams, row: &DesignRow) -> f64 {
    params.to_array().iter().zip(row.features()).map(|(b, x)| b * x).sum()
}

/// Column means of every covariate; response and provenance cleared.
pub fn mean_covariate_row(design: &DesignMatrix) -> Result<DesignRow, DesignError> {
    if design.is_empty() {
        return Err(DesignError::Empty);
    }
    let n = design.len() as f64;
    let mut sums = [0.0; N_COEF];
    for row in &design.rows {
        for (s, x) in sums.iter_mut().zip(row.features()) {
            *s += x;
        }
    }
    let m: Vec<f64> = sums.iter().map(|s| s / n).collect();
    Ok(DesignRow {
        response: 0.0,
        alter_current: m[1],
        alter_lagged: m[2],
        ego_lagged: m[3],
        wave_dummies: [m[4], m[5], m[6], m[7], m[8]],
        age: m[9],
        female: m[10],
        education: m[11],
        cluster: PersonId::new(""),
        fp_id: PersonId::new(""),
        alter_id: PersonId::new(""),
        wave: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netpanel::{ExamRecord, PersonRecord, TieClass, TieKind, TieRecord};
    use proptest::prelude::*;

    pub(crate) fn row(alter_current: f64) -> DesignRow {
        DesignRow {
            response: 1.0,
            alter_current,
            alter_lagged: 0.0,
            ego_lagged: 1.0,
            wave_dummies: wave_dummies(4, Family::LogitBinary),
            age: 52.0,
            female: 1.0,
            education: 14.0,
            cluster: "a".into(),
            fp_id: "a".into(),
            alter_id: "b".into(),
            wave: 4,
        }
    }

    fn panel(n_waves: u8, alters: &[&str]) -> CohortPanel {
        let mut persons = vec![PersonRecord {
            person_id: "fp".into(),
            is_fp: true,
            female: true,
            birth_year: 1940,
        }];
        let mut ties = Vec::new();
        for a in alters {
            persons.push(PersonRecord {
                person_id: (*a).into(),
                is_fp: false,
                female: false,
                birth_year: 1945,
            });
            for w in 1..=n_waves {
                ties.push(TieRecord {
                    wave: w,
                    source_id: "fp".into(),
                    target_id: (*a).into(),
                    tie_kind: TieKind::Friend,
                });
            }
        }
        let mut exams = Vec::new();
        for (k, p) in persons.iter().enumerate() {
            for w in 1..=n_waves {
                exams.push(ExamRecord {
                    person_id: p.person_id.clone(),
                    wave: w,
                    exam_year: 1967 + 4 * w as i32,
                    trait_value: ((k + w as usize) % 2) as u8,
                    age_years: 30.0 + 4.0 * w as f64,
                    education_years: 12.0,
                });
            }
        }
        CohortPanel::new(TraitKind::Binary, persons, exams, ties).unwrap()
    }

    #[test]
    fn wave_two_row_has_no_dummies() {
        let p = panel(2, &["x"]);
        let ts = p.tie_set(2, &TieSelector::friends(TieClass::FpNamesLp)).unwrap();
        let d = build_design(&p, &ts).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.rows[0].wave_dummies, [0.0; 5]);
        assert_eq!(d.family, Family::LogitBinary);
    }

    #[test]
    fn one_pair_over_six_waves_shares_cluster() {
        let p = panel(7, &["x"]);
        let d = build_design_for_selector(&p, &TieSelector::friends(TieClass::FpNamesLp)).unwrap();
        assert_eq!(d.len(), 6);
        assert!(d.rows.iter().all(|r| r.cluster == PersonId::from("fp")));
        for r in &d.rows {
            let set: f64 = r.wave_dummies.iter().sum();
            assert_eq!(set, if r.wave == 2 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn two_alters_differ_only_in_alter_columns() {
        let p = panel(3, &["x", "y"]);
        let ts = p.tie_set(3, &TieSelector::friends(TieClass::FpNamesLp)).unwrap();
        let d = build_design(&p, &ts).unwrap();
        assert_eq!(d.len(), 2);
        let (a, b) = (&d.rows[0], &d.rows[1]);
        assert_eq!(a.response, b.response);
        assert_eq!(a.ego_lagged, b.ego_lagged);
        assert_eq!(a.cluster, b.cluster);
        assert_ne!(a.alter_current, b.alter_current);
    }

    #[test]
    fn count_family_keeps_only_gamma7() {
        assert_eq!(wave_dummies(7, Family::LinearCount), [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(wave_dummies(6, Family::LinearCount), [0.0; 5]);
        assert_eq!(wave_dummies(5, Family::LogitBinary), [0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn predictor_examples() {
        let r = row(1.0);
        assert_eq!(linear_predictor(&ModelParams::default(), &r), 0.0);
        let p = ModelParams {
            alpha: 1.0,
            ..Default::default()
        };
        assert_eq!(linear_predictor(&p, &r), 1.0);
        let p = ModelParams {
            beta1: 1.19,
            alpha: -0.3,
            delta1: 0.01,
            ..Default::default()
        };
        let diff = linear_predictor(&p, &row(1.0)) - linear_predictor(&p, &row(0.0));
        assert!((diff - 1.19).abs() < 1e-12);
    }

    #[test]
    fn mean_row_examples() {
        let mut a = row(1.0);
        let mut b = row(0.0);
        a.female = 0.0;
        b.female = 1.0;
        a.age = 40.0;
        b.age = 60.0;
        let d = DesignMatrix {
            rows: vec![a.clone(), b],
            family: Family::LogitBinary,
        };
        let m = mean_covariate_row(&d).unwrap();
        assert_eq!(m.female, 0.5);
        assert_eq!(m.age, 50.0);
        assert_eq!(m.alter_current, 0.5);
        assert_eq!(m.fp_id.as_str(), "");

        let single = DesignMatrix {
            rows: vec![a.clone()],
            family: Family::LogitBinary,
        };
        let m = mean_covariate_row(&single).unwrap();
        assert_eq!(m.features(), a.features());

        assert!(matches!(
            mean_covariate_row(&DesignMatrix::new(Family::LogitBinary)),
            Err(DesignError::Empty)
        ));
    }

    #[test]
    fn params_array_order_matches_names() {
        let mut v = [0.0; N_COEF];
        for (i, x) in v.iter_mut().enumerate() {
            *x = i as f64;
        }
        let p = ModelParams::from_array(v);
        assert_eq!(p.get("beta3"), Some(3.0));
        assert_eq!(p.get("gamma7"), Some(8.0));
        assert_eq!(p.get("delta3"), Some(11.0));
        assert_eq!(p.to_array(), v);
        assert_eq!(p.get("beta9"), None);
    }

    fn arb_params() -> impl Strategy<Value = ModelParams> {
        proptest::array::uniform12(-5.0f64..5.0).prop_map(ModelParams::from_array)
    }

    proptest! {
        #[test]
        fn predictor_is_affine_in_params(p in arb_params(), q in arb_params(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut combo = [0.0; N_COEF];
            for (i, c) in combo.iter_mut().enumerate() {
                *c = a * p.to_array()[i] + b * q.to_array()[i];
            }
            let r = row(1.0);
            let lhs = linear_predictor(&ModelParams::from_array(combo), &r);
            let rhs = a * linear_predictor(&p, &r) + b * linear_predictor(&q, &r);
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
