//! GEE fits with an independence working correlation.
//!
//! Under independence the estimating equations are the pooled GLM score
//! equations, solved here by IRLS (Newton with canonical link). Variance is
//! the cluster-robust sandwich `A^-1 B A^-1` with `A = X'WX` and
//! `B = sum_c s_c s_c'`, `s_c` the score contribution of cluster `c`.
//!
//! Columns that are identically zero in a design (e.g. dummies for waves the
//! panel never reaches) are structurally inactive: their coefficient is
//! reported as 0 with no standard error, and they are excluded from the fit.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modelspec::{
    coef_index, linear_predictor, DesignMatrix, DesignRow, Family, ModelParams, COEF_NAMES, N_COEF,
};
use crate::stats::{logistic, z_critical};

/// Coefficients beyond this magnitude mean fitted probabilities below ~1e-13.
pub const SEPARATION_BOUND: f64 = 30.0;
const COLLINEAR_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("design is empty")]
    EmptyDesign,
    #[error("{expected:?} fit requested on a {found:?} design")]
    WrongFamily { expected: Family, found: Family },
    #[error("collinear design: {} depend on earlier columns", .dependent.join(", "))]
    Collinear { dependent: Vec<String> },
    #[error("perfect separation suspected: |{column}| exceeded {SEPARATION_BOUND}")]
    Separation { column: String },
    #[error("information matrix is singular")]
    Singular,
    #[error("unknown coefficient `{0}`")]
    UnknownCoefficient(String),
    #[error("coefficient `{0}` is inactive in this fit")]
    InactiveCoefficient(String),
    #[error("fit did not converge")]
    NotConverged,
    #[error("predict_prob requires a logistic fit")]
    NotLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on `max |score|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Multiply the sandwich by `g / (g - 1)` for `g` clusters.
    pub cluster_correction: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 100,
            cluster_correction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FitJson", try_from = "FitJson")]
pub struct FitResult {
    pub family: Family,
    pub params: ModelParams,
    /// `None` for inactive coefficients.
    pub robust_se: [Option<f64>; N_COEF],
    pub naive_se: [Option<f64>; N_COEF],
    pub n_rows: usize,
    pub n_clusters: usize,
    pub converged: bool,
    pub iterations: usize,
    pub max_score_norm: f64,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Result<f64, FitError> {
        self.params
            .get(name)
            .ok_or_else(|| FitError::UnknownCoefficient(name.into()))
    }

    pub fn robust_se_of(&self, name: &str) -> Result<f64, FitError> {
        let i = coef_index(name).ok_or_else(|| FitError::UnknownCoefficient(name.into()))?;
        self.robust_se[i].ok_or_else(|| FitError::InactiveCoefficient(name.into()))
    }

    pub fn naive_se_of(&self, name: &str) -> Result<f64, FitError> {
        let i = coef_index(name).ok_or_else(|| FitError::UnknownCoefficient(name.into()))?;
        self.naive_se[i].ok_or_else(|| FitError::InactiveCoefficient(name.into()))
    }

    pub fn is_active(&self, name: &str) -> bool {
        coef_index(name).is_some_and(|i| self.robust_se[i].is_some())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CoefJson {
    name: String,
    estimate: f64,
    robust_se: Option<f64>,
    naive_se: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConvergenceJson {
    converged: bool,
    iterations: usize,
    max_score_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitJson {
    family: Family,
    n_rows: usize,
    n_clusters: usize,
    coefficients: Vec<CoefJson>,
    convergence: ConvergenceJson,
}

impl From<FitResult> for FitJson {
    fn from(f: FitResult) -> Self {
        let est = f.params.to_array();
        FitJson {
            family: f.family,
            n_rows: f.n_rows,
            n_clusters: f.n_clusters,
            coefficients: (0..N_COEF)
                .map(|i| CoefJson {
                    name: COEF_NAMES[i].into(),
                    estimate: est[i],
                    robust_se: f.robust_se[i],
                    naive_se: f.naive_se[i],
                })
                .collect(),
            convergence: ConvergenceJson {
                converged: f.converged,
                iterations: f.iterations,
                max_score_norm: f.max_score_norm,
            },
        }
    }
}

impl TryFrom<FitJson> for FitResult {
    type Error = String;

    fn try_from(j: FitJson) -> Result<Self, String> {
        let mut est = [0.0; N_COEF];
        let mut robust = [None; N_COEF];
        let mut naive = [None; N_COEF];
        let mut seen = [false; N_COEF];
        for c in j.coefficients {
            let i = coef_index(&c.name).ok_or_else(|| format!("unknown coefficient `{}`", c.name))?;
            est[i] = c.estimate;
            robust[i] = c.robust_se;
            naive[i] = c.naive_se;
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(format!("missing coefficient `{}`", COEF_NAMES[i]));
        }
        Ok(FitResult {
            family: j.family,
            params: ModelParams::from_array(est),
            robust_se: robust,
            naive_se: naive,
            n_rows: j.n_rows,
            n_clusters: j.n_clusters,
            converged: j.convergence.converged,
            iterations: j.convergence.iterations,
            max_score_norm: j.convergence.max_score_norm,
        })
    }
}

/// Design rows in canonical order, reduced to the active columns.
struct Prepared {
    x: DMatrix<f64>,
    y: DVector<f64>,
    cluster_of: Vec<usize>,
    n_clusters: usize,
    active: Vec<usize>,
}

fn canonical_rows(design: &DesignMatrix) -> Vec<&DesignRow> {
    let mut rows: Vec<&DesignRow> = design.rows.iter().collect();
    rows.sort_by(|a, b| {
        (&a.cluster, &a.fp_id, &a.alter_id, a.wave)
            .cmp(&(&b.cluster, &b.fp_id, &b.alter_id, b.wave))
            .then_with(|| {
                a.features()
                    .iter()
                    .chain([a.response].iter())
                    .zip(b.features().iter().chain([b.response].iter()))
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    rows
}

fn prepare(design: &DesignMatrix) -> Result<Prepared, FitError> {
    if design.is_empty() {
        return Err(FitError::EmptyDesign);
    }
    let rows = canonical_rows(design);
    let feats: Vec<[f64; N_COEF]> = rows.iter().map(|r| r.features()).collect();
    let active: Vec<usize> = (0..N_COEF).filter(|&j| feats.iter().any(|f| f[j] != 0.0)).collect();
    let n = rows.len();
    let x = DMatrix::from_fn(n, active.len(), |i, k| feats[i][active[k]]);
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.response));

    let dependent = dependent_columns(&x);
    if !dependent.is_empty() {
        return Err(FitError::Collinear {
            dependent: dependent.iter().map(|&k| COEF_NAMES[active[k]].to_string()).collect(),
        });
    }

    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        let next = ids.len();
        ids.entry(r.cluster.as_str()).or_insert(next);
    }
    let cluster_of = rows.iter().map(|r| ids[r.cluster.as_str()]).collect();
    Ok(Prepared {
        x,
        y,
        cluster_of,
        n_clusters: ids.len(),
        active,
    })
}

/// Columns (by position) lying in the span of the preceding ones.
fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for k in 0..x.ncols() {
        let col = x.column(k).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            dependent.push(k);
            continue;
        }
        let mut v = col / norm;
        // Two Gram-Schmidt passes keep the residual accurate.
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let r = v.norm();
        if r < COLLINEAR_TOL {
            dependent.push(k);
        } else {
            basis.push(v / r);
        }
    }
    dependent
}

fn mean_of(family: Family, eta: f64) -> f64 {
    match family {
        Family::LogitBinary => logistic(eta),
        Family::LinearCount => eta,
    }
}

fn weight_of(family: Family, mu: f64) -> f64 {
    match family {
        Family::LogitBinary => mu * (1.0 - mu),
        Family::LinearCount => 1.0,
    }
}

fn log_lik(family: Family, y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    match family {
        Family::LogitBinary => y
            .iter()
            .zip(eta.iter())
            .map(|(&y, &e)| {
                // y*eta - log(1 + e^eta), stable.
                y * e
                    - if e > 0.0 {
                        e + (-e).exp().ln_1p()
                    } else {
                        e.exp().ln_1p()
                    }
            })
            .sum(),
        Family::LinearCount => -0.5 * y.iter().zip(eta.iter()).map(|(y, e)| (y - e).powi(2)).sum::<f64>(),
    }
}

fn information(family: Family, x: &DMatrix<f64>, eta: &DVector<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut info = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let w = weight_of(family, mean_of(family, eta[i]));
        let xi = x.row(i);
        for a in 0..p {
            let wa = w * xi[a];
            if wa == 0.0 {
                continue;
            }
            for b in a..p {
                info[(a, b)] += wa * xi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    info
}

fn invert_spd(m: DMatrix<f64>) -> Result<DMatrix<f64>, FitError> {
    m.cholesky().map(|c| c.inverse()).ok_or(FitError::Singular)
}

fn fit_family(
    design: &DesignMatrix,
    family: Family,
    opts: &FitOptions,
    start: Option<&ModelParams>,
) -> Result<FitResult, FitError> {
    if design.family != family {
        return Err(FitError::WrongFamily {
            expected: family,
            found: design.family,
        });
    }
    let prep = prepare(design)?;
    let Prepared {
        x,
        y,
        cluster_of,
        n_clusters,
        active,
    } = prep;
    let (n, p) = x.shape();

    let mut beta = DVector::from_iterator(p, active.iter().map(|&j| start.map_or(0.0, |s| s.to_array()[j])));
    let mut eta = &x * &beta;
    let mut ll = log_lik(family, &y, &eta);
    let mut iterations = 0;
    let mut converged = false;
    let mut score_norm;

    loop {
        let resid = DVector::from_iterator(n, (0..n).map(|i| y[i] - mean_of(family, eta[i])));
        let score = x.transpose() * &resid;
        score_norm = score.amax();
        let info = information(family, &x, &eta);
        let step = info.cholesky().ok_or(FitError::Singular)?.solve(&score);
        // Under separation the score vanishes while the Newton step stays
        // large, so both must be small.
        if score_norm < opts.tol && step.amax() < STEP_TOL {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        // Step halving guards the early Newton steps.
        let mut t = 1.0;
        let mut next;
        loop {
            next = &beta + &step * t;
            let next_eta = &x * &next;
            let next_ll = log_lik(family, &y, &next_eta);
            if next_ll >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-4 {
                eta = next_eta;
                ll = next_ll;
                break;
            }
            t *= 0.5;
        }
        beta = next;
        if family == Family::LogitBinary {
            if let Some((k, _)) = beta.iter().enumerate().find(|(_, b)| b.abs() > SEPARATION_BOUND) {
                return Err(FitError::Separation {
                    column: COEF_NAMES[active[k]].to_string(),
                });
            }
        }
    }

    let info = information(family, &x, &eta);
    let bread = invert_spd(info)?;

    let mut scores = vec![DVector::<f64>::zeros(p); n_clusters];
    let mut rss = 0.0;
    for i in 0..n {
        let r = y[i] - mean_of(family, eta[i]);
        rss += r * r;
        scores[cluster_of[i]].axpy(r, &x.row(i).transpose(), 1.0);
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for s in &scores {
        meat.ger(1.0, s, s, 1.0);
    }
    if opts.cluster_correction && n_clusters > 1 {
        meat *= n_clusters as f64 / (n_clusters as f64 - 1.0);
    }
    let robust = &bread * meat * &bread;

    let dispersion = match family {
        Family::LogitBinary => 1.0,
        Family::LinearCount => {
            if n > p {
                rss / (n - p) as f64
            } else {
                f64::NAN
            }
        }
    };

    let mut est = [0.0; N_COEF];
    let mut robust_se = [None; N_COEF];
    let mut naive_se = [None; N_COEF];
    for (k, &j) in active.iter().enumerate() {
        est[j] = beta[k];
        robust_se[j] = Some(robust[(k, k)].max(0.0).sqrt());
        naive_se[j] = Some((dispersion * bread[(k, k)]).max(0.0).sqrt());
    }

    Ok(FitResult {
        family,
        params: ModelParams::from_array(est),
        robust_se,
        naive_se,
        n_rows: n,
        n_clusters,
        converged,
        iterations,
        max_score_norm: score_norm,
    })
}

/// Pooled logistic fit with cluster-robust variance.
pub fn fit_logistic_gee(design: &DesignMatrix, opts: &FitOptions) -> Result<FitResult, FitError> {
    fit_family(design, Family::LogitBinary, opts, None)
}

/// Same as [`fit_logistic_gee`] but starting IRLS from `start`.
pub fn fit_logistic_gee_from(
    design: &DesignMatrix,
    opts: &FitOptions,
    start: &ModelParams,
) -> Result<FitResult, FitError> {
    fit_family(design, Family::LogitBinary, opts, Some(start))
}

/// OLS point estimates with cluster-robust variance.
pub fn fit_linear_gee(design: &DesignMatrix, opts: &FitOptions) -> Result<FitResult, FitError> {
    fit_family(design, Family::LinearCount, opts, None)
}

/// Dispatches on the design's family.
pub fn fit(design: &DesignMatrix, opts: &FitOptions) -> Result<FitResult, FitError> {
    fit_family(design, design.family, opts, None)
}

pub fn predict_prob(fit: &FitResult, row: &DesignRow) -> Result<f64, FitError> {
    if fit.family != Family::LogitBinary {
        return Err(FitError::NotLogistic);
    }
    Ok(logistic(linear_predictor(&fit.params, row)))
}

/// `estimate ± z(level) * robust_se`.
pub fn wald_ci_coef(fit: &FitResult, coef: &str, level: f64) -> Result<(f64, f64), FitError> {
    let est = fit.estimate(coef)?;
    let se = fit.robust_se_of(coef)?;
    if !fit.converged {
        return Err(FitError::NotConverged);
    }
    let z = z_critical(level);
    Ok((est - z * se, est + z * se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::wave_dummies;
    use crate::netpanel::PersonId;
    use crate::stats::logit;

    pub(crate) fn blank_row(cluster: &str, response: f64) -> DesignRow {
        DesignRow {
            response,
            alter_current: 0.0,
            alter_lagged: 0.0,
            ego_lagged: 0.0,
            wave_dummies: wave_dummies(2, Family::LogitBinary),
            age: 0.0,
            female: 0.0,
            education: 0.0,
            cluster: PersonId::new(cluster),
            fp_id: PersonId::new(cluster),
            alter_id: PersonId::new("alter"),
            wave: 2,
        }
    }

    fn binary_covariate_design(singletons: bool) -> DesignMatrix {
        let mut rows = Vec::new();
        for (x, successes) in [(0.0, 30), (1.0, 60)] {
            for k in 0..100 {
                let cluster = if singletons {
                    format!("c{x}-{k}")
                } else {
                    format!("c{}", k % 10)
                };
                let mut r = blank_row(&cluster, if k < successes { 1.0 } else { 0.0 });
                r.alter_current = x;
                r.alter_id = PersonId::new(format!("a{x}-{k}"));
                rows.push(r);
            }
        }
        DesignMatrix {
            rows,
            family: Family::LogitBinary,
        }
    }

    #[test]
    fn intercept_only_half_ones() {
        let rows = (0..10).map(|k| blank_row(&format!("c{k}"), (k % 2) as f64)).collect();
        let d = DesignMatrix {
            rows,
            family: Family::LogitBinary,
        };
        let f = fit_logistic_gee(&d, &FitOptions::default()).unwrap();
        assert!(f.converged);
        assert!(f.params.alpha.abs() < 1e-12);
        assert!(!f.is_active("beta1"));
        assert!(f.robust_se_of("beta1").is_err());
    }

    #[test]
    fn saturated_two_by_two_matches_closed_form() {
        let d = binary_covariate_design(false);
        let f = fit_logistic_gee(&d, &FitOptions::default()).unwrap();
        assert!(f.converged);
        let a = logit(0.3);
        let b = logit(0.6) - logit(0.3);
        assert!((f.params.alpha - a).abs() < 1e-8, "{}", f.params.alpha);
        assert!((f.params.beta1 - b).abs() < 1e-8);
        assert!((a - -0.8473).abs() < 1e-4 && (b - 1.2528).abs() < 1e-4);
        let mut r = blank_row("z", 0.0);
        r.alter_current = 1.0;
        assert!((predict_prob(&f, &r).unwrap() - 0.6).abs() < 1e-8);
    }

    #[test]
    fn naive_se_matches_closed_form_for_saturated_model() {
        // Var(alpha) = 1/(n0 p0 q0), Var(beta) = 1/(n0 p0 q0) + 1/(n1 p1 q1).
        let f = fit_logistic_gee(&binary_covariate_design(true), &FitOptions::default()).unwrap();
        let v0: f64 = 1.0 / (100.0 * 0.3 * 0.7);
        let v1: f64 = 1.0 / (100.0 * 0.6 * 0.4);
        assert!((f.naive_se_of("alpha").unwrap() - v0.sqrt()).abs() < 1e-9);
        assert!((f.naive_se_of("beta1").unwrap() - (v0 + v1).sqrt()).abs() < 1e-9);
        // In a saturated model the HC0 sandwich equals the model-based variance.
        assert!((f.robust_se_of("beta1").unwrap() - (v0 + v1).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn separation_is_reported() {
        let mut rows = Vec::new();
        for k in 0..20 {
            let x = (k % 2) as f64;
            let mut r = blank_row(&format!("c{k}"), x);
            r.alter_current = x;
            rows.push(r);
        }
        let d = DesignMatrix {
            rows,
            family: Family::LogitBinary,
        };
        match fit_logistic_gee(&d, &FitOptions::default()) {
            Err(FitError::Separation { column }) => assert!(column == "beta1" || column == "alpha"),
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn collinear_columns_are_named() {
        let mut rows = Vec::new();
        for k in 0..20 {
            let mut r = blank_row(&format!("c{k}"), (k % 3 == 0) as u8 as f64);
            r.alter_current = (k % 2) as f64;
            r.alter_lagged = 2.0 * r.alter_current;
            r.age = 40.0 + k as f64;
            rows.push(r);
        }
        let d = DesignMatrix {
            rows,
            family: Family::LogitBinary,
        };
        match fit_logistic_gee(&d, &FitOptions::default()) {
            Err(FitError::Collinear { dependent }) => {
                assert_eq!(dependent, vec!["beta2".to_string()])
            }
            other => panic!("expected collinearity, got {other:?}"),
        }
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let d = binary_covariate_design(false);
        let opts = FitOptions {
            max_iter: 1,
            ..Default::default()
        };
        let f = fit_logistic_gee(&d, &opts).unwrap();
        assert!(!f.converged);
        assert_eq!(f.iterations, 1);
        assert!(wald_ci_coef(&f, "beta1", 0.95).is_err());
    }

    #[test]
    fn family_mismatch_is_rejected() {
        let d = binary_covariate_design(false);
        assert!(matches!(
            fit_linear_gee(&d, &FitOptions::default()),
            Err(FitError::WrongFamily { .. })
        ));
        assert!(matches!(
            fit_logistic_gee(&DesignMatrix::new(Family::LogitBinary), &FitOptions::default()),
            Err(FitError::EmptyDesign)
        ));
    }

    fn linear_row(cluster: &str, x: f64, y: f64) -> DesignRow {
        let mut r = blank_row(cluster, y);
        r.alter_current = x;
        r.alter_id = PersonId::new(format!("a{x}"));
        r
    }

    #[test]
    fn exact_line_is_recovered() {
        let rows = (0..6)
            .map(|k| linear_row(&format!("c{}", k % 2), k as f64, 2.0 * k as f64))
            .collect();
        let d = DesignMatrix {
            rows,
            family: Family::LinearCount,
        };
        let f = fit_linear_gee(&d, &FitOptions::default()).unwrap();
        assert!((f.params.beta1 - 2.0).abs() < 1e-12);
        assert!(f.params.alpha.abs() < 1e-12);
        assert!(f.max_score_norm < 1e-8);
        assert!(f.robust_se_of("beta1").unwrap() < 1e-10);
    }

    #[test]
    fn four_row_sandwich_by_hand() {
        // x = 0,0,1,1 in clusters A={r0,r2}, B={r1,r3}; y = 1,3,5,3.
        // OLS: alpha = 2, beta = 2; residuals e = -1, +1, +1, -1.
        // Cluster scores: s_A = (e0+e2, e2) = (0, 1), s_B = (0, -1).
        // X'X = [[4,2],[2,2]], inverse = [[0.5,-0.5],[-0.5,1]].
        // B = [[0,0],[0,2]]; V = Inv B Inv => V_aa = 0.5, V_bb = 2.
        let rows = vec![
            linear_row("A", 0.0, 1.0),
            linear_row("B", 0.0, 3.0),
            linear_row("A", 1.0, 5.0),
            linear_row("B", 1.0, 3.0),
        ];
        let mut rows = rows;
        for (k, r) in rows.iter_mut().enumerate() {
            r.alter_id = PersonId::new(format!("r{k}"));
        }
        let d = DesignMatrix {
            rows,
            family: Family::LinearCount,
        };
        let f = fit_linear_gee(&d, &FitOptions::default()).unwrap();
        assert!((f.params.alpha - 2.0).abs() < 1e-12);
        assert!((f.params.beta1 - 2.0).abs() < 1e-12);
        assert!((f.robust_se_of("alpha").unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((f.robust_se_of("beta1").unwrap() - 2.0f64.sqrt()).abs() < 1e-12);
        // Naive: sigma^2 = 4 / (4 - 2) = 2; Var(beta) = 2 * 1.
        assert!((f.naive_se_of("beta1").unwrap() - 2.0f64.sqrt()).abs() < 1e-12);

        let corrected = fit_linear_gee(
            &d,
            &FitOptions {
                cluster_correction: true,
                ..Default::default()
            },
        )
        .unwrap();
        // g/(g-1) = 2.
        assert!((corrected.robust_se_of("beta1").unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn row_order_does_not_change_fit() {
        let d = binary_covariate_design(false);
        let mut shuffled = d.clone();
        shuffled.rows.reverse();
        shuffled.rows.swap(3, 150);
        let a = fit_logistic_gee(&d, &FitOptions::default()).unwrap();
        let b = fit_logistic_gee(&shuffled, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wald_interval_examples() {
        let mut f = fit_logistic_gee(&binary_covariate_design(false), &FitOptions::default()).unwrap();
        f.params.beta1 = 1.19;
        f.robust_se[1] = Some(0.33);
        let (lo, hi) = wald_ci_coef(&f, "beta1", 0.95).unwrap();
        assert!((lo - 0.543).abs() < 5e-4 && (hi - 1.837).abs() < 5e-4);
        f.params.beta1 = 0.0;
        f.robust_se[1] = Some(1.0);
        let (lo, hi) = wald_ci_coef(&f, "beta1", 0.95).unwrap();
        assert!((lo + 1.96).abs() < 1e-3 && (hi - 1.96).abs() < 1e-3);
        let (lo, hi) = wald_ci_coef(&f, "beta1", 0.0).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
        assert!(matches!(
            wald_ci_coef(&f, "theta", 0.95),
            Err(FitError::UnknownCoefficient(_))
        ));
    }

    #[test]
    fn predict_prob_examples() {
        let mut f = fit_logistic_gee(&binary_covariate_design(false), &FitOptions::default()).unwrap();
        f.params = ModelParams::default();
        let r = blank_row("z", 0.0);
        assert_eq!(predict_prob(&f, &r).unwrap(), 0.5);
        f.params.alpha = 1e4;
        let p = predict_prob(&f, &r).unwrap();
        assert!(p < 1.0 && p.is_finite());
        f.family = Family::LinearCount;
        assert!(matches!(predict_prob(&f, &r), Err(FitError::NotLogistic)));
    }

    #[test]
    fn fit_json_round_trip() {
        let f = fit_logistic_gee(&binary_covariate_design(false), &FitOptions::default()).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"beta1\"") && s.contains("\"convergence\""));
        let back: FitResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
