//! Checks that the tie-level models cannot hold jointly for every tie.
//!
//! Each oracle evaluates the model equations on a small configuration of
//! ties and measures how far they are from being simultaneously satisfiable.

use std::collections::BTreeMap;

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Matrix4x3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modelspec::{linear_predictor, wave_dummies, DesignMatrix, DesignRow, Family, ModelParams};
use crate::netpanel::PersonId;

/// Residual below which a linear system counts as solvable.
pub const CONSISTENCY_TOL: f64 = 1e-10;
pub const MAX_WITNESSES: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum ConsistencyError {
    #[error("|beta1| = 1 makes the reciprocal pair equations singular")]
    SingularConfiguration,
    #[error("compatibility grid must be at least 100 (got {0})")]
    GridTooSmall(usize),
}

/// Everything the model needs about one person apart from their current trait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonContext {
    pub lagged_trait: f64,
    pub age: f64,
    pub female: bool,
    pub education: f64,
}

impl Default for PersonContext {
    fn default() -> Self {
        PersonContext {
            lagged_trait: 0.0,
            age: 50.0,
            female: false,
            education: 12.0,
        }
    }
}

/// Ties `(i, k)` and `(k, m)` with `m != i`; `m_current` is held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub wave: u8,
    pub i: PersonContext,
    pub k: PersonContext,
    pub m: PersonContext,
    pub m_current: f64,
}

/// Ties `(i, j)`, `(j, i)`, `(j, k)`, `(k, j)` with `k != i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalConfig {
    pub wave: u8,
    pub i: PersonContext,
    pub j: PersonContext,
    pub k: PersonContext,
}

fn row(family: Family, wave: u8, ego: &PersonContext, alter: &PersonContext, alter_current: f64) -> DesignRow {
    let none = PersonId::new("");
    DesignRow {
        response: 0.0,
        alter_current,
        alter_lagged: alter.lagged_trait,
        ego_lagged: ego.lagged_trait,
        wave_dummies: wave_dummies(wave, family),
        age: ego.age,
        female: ego.female as u8 as f64,
        education: ego.education,
        cluster: none.clone(),
        fp_id: none.clone(),
        alter_id: none,
        wave,
    }
}

/// The four model log-odds along the chain: `Y_i` given `Y_k = 0, 1` and
/// `Y_k` given `Y_i = 0, 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ChainLogOdds {
    i_given_k: [f64; 2],
    k_given_i: [f64; 2],
}

fn chain_log_odds(params: &ModelParams, c: &ChainConfig) -> ChainLogOdds {
    let fam = Family::LogitBinary;
    let i_given_k = [0.0, 1.0].map(|yk| linear_predictor(params, &row(fam, c.wave, &c.i, &c.k, yk)));
    // The (k, m) equation never sees Y_i.
    let lk = linear_predictor(params, &row(fam, c.wave, &c.k, &c.m, c.m_current));
    ChainLogOdds {
        i_given_k,
        k_given_i: [lk, lk],
    }
}

/// LHS minus RHS of the two-way factorization of
/// `log P[Y_i=1, Y_k=1 | D] / P[Y_i=0, Y_k=0 | D]`.
pub fn cyclic_identity_residual(params: &ModelParams, config: &ChainConfig) -> f64 {
    let lo = chain_log_odds(params, config);
    (lo.i_given_k[1] + lo.k_given_i[0]) - (lo.k_given_i[1] + lo.i_given_k[0])
}

/// Result of the brute-force search for a joint law of `(Y_i, Y_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatibilitySearch {
    pub gap: f64,
    /// Best joint found, indexed `[p00, p01, p10, p11]` as `p[y_i][y_k]`.
    pub joint: [f64; 4],
}

/// Max deviation of a joint's conditional log-odds from the model's.
/// `logp` holds `log p[y_i][y_k]` in the order `00, 01, 10, 11`.
fn deviation(logp: &[f64; 4], lo: &ChainLogOdds) -> f64 {
    let [l00, l01, l10, l11] = *logp;
    [
        (l10 - l00) - lo.i_given_k[0],
        (l11 - l01) - lo.i_given_k[1],
        (l01 - l00) - lo.k_given_i[0],
        (l11 - l10) - lo.k_given_i[1],
    ]
    .iter()
    .fold(0.0f64, |m, d| m.max(d.abs()))
}

struct GapCost(ChainLogOdds);

impl CostFunction for GapCost {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        Ok(deviation(&[0.0, x[0], x[1], x[2]], &self.0))
    }
}

fn nelder_mead(lo: ChainLogOdds, start: [f64; 3], step: f64) -> (Vec<f64>, f64) {
    let mut simplex = vec![start.to_vec()];
    for d in 0..3 {
        let mut v = start.to_vec();
        v[d] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-15)
        .expect("valid tolerance");
    let res = Executor::new(GapCost(lo), solver)
        .configure(|s| s.max_iters(4000))
        .run()
        .expect("cost is infallible");
    let best = res.state.best_param.unwrap_or_else(|| start.to_vec());
    let cost = res.state.best_cost;
    (best, cost)
}

/// Simplex grid over interior joints at resolution `grid`, then
/// Nelder-Mead refinement in log-probability space from the best cells.
pub fn compatibility_search(
    params: &ModelParams,
    config: &ChainConfig,
    grid: usize,
) -> Result<CompatibilitySearch, ConsistencyError> {
    if grid < 100 {
        return Err(ConsistencyError::GridTooSmall(grid));
    }
    let lo = chain_log_odds(params, config);
    const KEEP: usize = 5;
    let mut best: Vec<(f64, [f64; 3])> = Vec::with_capacity(KEEP + 1);
    let r = grid;
    for a in 1..r {
        for b in 1..r - a {
            for c in 1..r - a - b {
                let d = r - a - b - c;
                if d == 0 {
                    continue;
                }
                let l00 = (a as f64).ln();
                let x = [(b as f64).ln() - l00, (c as f64).ln() - l00, (d as f64).ln() - l00];
                let cost = deviation(&[0.0, x[0], x[1], x[2]], &lo);
                if best.len() < KEEP || cost < best[best.len() - 1].0 {
                    best.push((cost, x));
                    best.sort_by(|p, q| p.0.total_cmp(&q.0));
                    best.truncate(KEEP);
                }
            }
        }
    }

    let mut winner = (f64::INFINITY, vec![0.0; 3]);
    for (_, x) in &best {
        let mut point = *x;
        let mut step = 0.5;
        // Restarts shrink the simplex around the incumbent.
        for _ in 0..6 {
            let (p, cost) = nelder_mead(lo, point, step);
            point = [p[0], p[1], p[2]];
            if cost < winner.0 {
                winner = (cost, p);
            }
            step *= 0.1;
        }
    }
    let x = winner.1;
    let un = [1.0, x[0].exp(), x[1].exp(), x[2].exp()];
    let total: f64 = un.iter().sum();
    Ok(CompatibilitySearch {
        gap: winner.0,
        joint: un.map(|u| u / total),
    })
}

pub fn joint_compatibility_gap(
    params: &ModelParams,
    config: &ChainConfig,
    grid: usize,
) -> Result<f64, ConsistencyError> {
    compatibility_search(params, config, grid).map(|s| s.gap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub fp_id: PersonId,
    pub wave: u8,
    pub n_alters: usize,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub tol: f64,
    /// `(fp, wave)` groups with at least two alters.
    pub n_groups: usize,
    pub n_violations: usize,
    pub max_spread: f64,
    /// At most [`MAX_WITNESSES`] violations, largest spread first.
    pub witnesses: Vec<Violation>,
}

/// Groups whose alters disagree on `beta1 * Y_j,t + beta2 * Y_j,t-1`.
pub fn multinaming_violations(design: &DesignMatrix, params: &ModelParams, tol: f64) -> ViolationReport {
    let mut groups: BTreeMap<(&PersonId, u8), (usize, f64, f64)> = BTreeMap::new();
    for r in &design.rows {
        let v = params.beta1 * r.alter_current + params.beta2 * r.alter_lagged;
        let g = groups
            .entry((&r.fp_id, r.wave))
            .or_insert((0, f64::INFINITY, f64::NEG_INFINITY));
        g.0 += 1;
        g.1 = g.1.min(v);
        g.2 = g.2.max(v);
    }
    let mut violations: Vec<Violation> = Vec::new();
    let mut n_groups = 0;
    let mut max_spread = 0.0f64;
    for ((fp, wave), (n, lo, hi)) in groups {
        if n < 2 {
            continue;
        }
        n_groups += 1;
        let spread = hi - lo;
        max_spread = max_spread.max(spread);
        if spread > tol {
            violations.push(Violation {
                fp_id: fp.clone(),
                wave,
                n_alters: n,
                spread,
            });
        }
    }
    let n_violations = violations.len();
    violations.sort_by(|a, b| b.spread.total_cmp(&a.spread));
    violations.truncate(MAX_WITNESSES);
    ViolationReport {
        tol,
        n_groups,
        n_violations,
        max_spread,
        witnesses: violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub residual_norm: f64,
    pub rank: usize,
    pub consistent: bool,
    /// Least-squares `(E_i, E_j, E_k)`.
    pub solution: [f64; 3],
}

/// Expected-value equations of the linear model over the four reciprocal
/// ties, solved by least squares in the unknowns `E[Y_m,t | t-1]`.
pub fn linear_overdetermination(
    params: &ModelParams,
    config: &ReciprocalConfig,
) -> Result<ConsistencyReport, ConsistencyError> {
    let b1 = params.beta1;
    if b1.abs() == 1.0 {
        return Err(ConsistencyError::SingularConfiguration);
    }
    let fam = Family::LinearCount;
    let w = config.wave;
    // Everything but the alter's current trait, for each ordered tie.
    let own = |ego: &PersonContext, alter: &PersonContext| linear_predictor(params, &row(fam, w, ego, alter, 0.0));
    let (i, j, k) = (&config.i, &config.j, &config.k);
    #[rustfmt::skip]
    let a = Matrix4x3::new(
        1.0, -b1, 0.0,
        -b1, 1.0, 0.0,
        0.0, 1.0, -b1,
        0.0, -b1, 1.0,
    );
    let rhs = Vector4::new(own(i, j), own(j, i), own(j, k), own(k, j));
    let svd = a.svd(true, true);
    let rank = svd.rank(1e-12);
    let x = svd.solve(&rhs, 1e-12).expect("u and v were computed");
    let residual_norm = (a * x - rhs).norm();
    Ok(ConsistencyReport {
        residual_norm,
        rank,
        consistent: residual_norm < CONSISTENCY_TOL,
        solution: [x[0], x[1], x[2]],
    })
}
