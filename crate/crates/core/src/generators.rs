//! Synthetic cohorts for the rival explanations of friend-trait association
//! (homophily, shared environment, induction, and a null world), and the
//! nearest-neighbour ball experiment.
//!
//! Every person gets a latent position drawn uniformly from the unit ball.
//! People name their nearest neighbour in that space (sometimes also the
//! second nearest); only a thinned subset of the true naming network is
//! recorded in the panel, mimicking a sparse friendship survey.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netpanel::{CohortPanel, ExamRecord, PanelError, PersonId, PersonRecord, TieKind, TieRecord, TraitKind};
use crate::rng::{substream, Stream};
use crate::stats::{logistic, logit};

pub const FIRST_EXAM_YEAR: i32 = 1971;
pub const YEARS_BETWEEN_EXAMS: i32 = 4;
/// Orthant shocks use at most this many leading coordinates.
const MAX_SHOCK_DIMS: usize = 12;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("n_persons must be at least 2 (got {0})")]
    TooFewPersons(usize),
    #[error("n_waves must be in 2..=7 (got {0})")]
    BadWaveCount(u8),
    #[error("dim must be at least 1")]
    ZeroDim,
    #[error("{name} = {value} is not a probability")]
    NotProbability { name: &'static str, value: f64 },
    #[error("trait_base_rate must lie strictly inside (0, 1) (got {0})")]
    DegenerateBaseRate(f64),
    #[error("{name} = {value} is not finite")]
    NotFinite { name: &'static str, value: f64 },
    #[error("dominance check needs two nonempty samples")]
    EmptySample,
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Trait driven by a person's own latent position.
    Homophily,
    /// Trait driven by a regional shock shared by co-located persons.
    SharedEnvironment,
    /// Trait driven by named friends' previous-wave traits.
    Induction,
    /// Independent traits.
    Null,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::Homophily,
        Mechanism::SharedEnvironment,
        Mechanism::Induction,
        Mechanism::Null,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Homophily => "homophily",
            Mechanism::SharedEnvironment => "shared_environment",
            Mechanism::Induction => "induction",
            Mechanism::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Option<Mechanism> {
        let s = s.replace('-', "_");
        Mechanism::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub mechanism: Mechanism,
    pub n_persons: usize,
    pub n_waves: u8,
    pub dim: usize,
    pub fp_fraction: f64,
    /// Probability a person names anyone at all.
    pub naming_rate: f64,
    /// Probability a true naming is recorded in the panel.
    pub observability: f64,
    /// Probability a namer also names the second-nearest person.
    pub second_name_rate: f64,
    pub trait_base_rate: f64,
    /// Log-odds coefficient on the person's own previous trait.
    pub persistence: f64,
    pub mechanism_strength: f64,
    pub trait_kind: TraitKind,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mechanism: Mechanism::Null,
            n_persons: 2000,
            n_waves: 4,
            dim: 2,
            fp_fraction: 0.5,
            naming_rate: 0.45,
            observability: 0.25,
            second_name_rate: 0.1,
            trait_base_rate: 0.25,
            persistence: 1.5,
            mechanism_strength: 1.0,
            trait_kind: TraitKind::Binary,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.n_persons < 2 {
            return Err(GenError::TooFewPersons(self.n_persons));
        }
        if !(2..=7).contains(&self.n_waves) {
            return Err(GenError::BadWaveCount(self.n_waves));
        }
        if self.dim == 0 {
            return Err(GenError::ZeroDim);
        }
        for (name, value) in [
            ("fp_fraction", self.fp_fraction),
            ("naming_rate", self.naming_rate),
            ("observability", self.observability),
            ("second_name_rate", self.second_name_rate),
            ("trait_base_rate", self.trait_base_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(GenError::NotProbability { name, value });
            }
        }
        if self.trait_base_rate <= 0.0 || self.trait_base_rate >= 1.0 {
            return Err(GenError::DegenerateBaseRate(self.trait_base_rate));
        }
        for (name, value) in [
            ("persistence", self.persistence),
            ("mechanism_strength", self.mechanism_strength),
        ] {
            if !value.is_finite() {
                return Err(GenError::NotFinite { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPosition {
    pub coords: Vec<f64>,
}

impl LatentPosition {
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mechanism: Mechanism,
    pub latent: BTreeMap<PersonId, LatentPosition>,
    pub true_induction_coefficient: f64,
    /// Every true naming `(source, target)`, observed or not.
    pub true_namings: Vec<(PersonId, PersonId)>,
}

/// Uniform point in the unit ball: Gaussian direction, radius `U^(1/d)`.
pub fn uniform_in_ball(dim: usize, rng: &mut Stream) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let r = rng.random::<f64>().powf(1.0 / dim as f64);
            return v.into_iter().map(|x| x / norm * r).collect();
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the nearest and second-nearest points to `i`; distance ties
/// go to the smaller index.
fn nearest_two(points: &[Vec<f64>], i: usize) -> (usize, Option<usize>) {
    let mut best: Option<(f64, usize)> = None;
    let mut second: Option<(f64, usize)> = None;
    for (j, p) in points.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = dist2(&points[i], p);
        // Strict comparisons keep the earlier (smaller) index on ties.
        if best.is_none_or(|(bd, _)| d < bd) {
            second = best;
            best = Some((d, j));
        } else if second.is_none_or(|(sd, _)| d < sd) {
            second = Some((d, j));
        }
    }
    (best.expect("at least two points").1, second.map(|s| s.1))
}

/// Nearest-neighbour index of every point.
pub fn nearest_neighbors(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len()).map(|i| nearest_two(points, i).0).collect()
}

fn person_ids(n: usize) -> Vec<PersonId> {
    let width = n.to_string().len();
    (0..n).map(|i| PersonId::new(format!("p{i:0width$}"))).collect()
}

fn orthant(coords: &[f64]) -> usize {
    coords
        .iter()
        .take(MAX_SHOCK_DIMS)
        .enumerate()
        .map(|(k, c)| if *c >= 0.0 { 1 << k } else { 0 })
        .sum()
}

fn draw_trait(kind: TraitKind, p: f64, rng: &mut Stream) -> u8 {
    match kind {
        TraitKind::Binary => rng.random_bool(p) as u8,
        TraitKind::Count0to7 => Binomial::new(7, p).expect("p in (0,1)").sample(rng) as u8,
    }
}

/// Previous trait on the log-odds scale's unit: 0/1, or days/7 for counts.
fn scaled(kind: TraitKind, y: u8) -> f64 {
    y as f64 / kind.max_value() as f64
}

/// Simulates a panel under `config.mechanism`.
pub fn gen_cohort(config: &GeneratorConfig) -> Result<(CohortPanel, GroundTruth), GenError> {
    config.validate()?;
    let n = config.n_persons;
    let mut rng = substream(config.seed, 0);

    let positions: Vec<Vec<f64>> = (0..n).map(|_| uniform_in_ball(config.dim, &mut rng)).collect();
    let ids = person_ids(n);

    let persons: Vec<PersonRecord> = ids
        .iter()
        .map(|id| PersonRecord {
            person_id: id.clone(),
            is_fp: rng.random_bool(config.fp_fraction),
            female: rng.random_bool(0.5),
            birth_year: rng.random_range(1920..=1960),
        })
        .collect();
    let education: Vec<f64> = (0..n).map(|_| rng.random_range(8..=20) as f64).collect();

    // True naming network, fixed across waves.
    let mut named: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, targets) in named.iter_mut().enumerate() {
        if !rng.random_bool(config.naming_rate) {
            continue;
        }
        let (first, second) = nearest_two(&positions, i);
        targets.push(first);
        if let Some(s) = second {
            if rng.random_bool(config.second_name_rate) {
                targets.push(s);
            }
        }
    }
    let mut observed: Vec<(usize, usize)> = Vec::new();
    for (i, targets) in named.iter().enumerate() {
        for &j in targets {
            if rng.random_bool(config.observability) {
                observed.push((i, j));
            }
        }
    }

    let base = logit(config.trait_base_rate);
    let kind = config.trait_kind;
    let n_orthants = 1usize << config.dim.min(MAX_SHOCK_DIMS);
    let mut exams = Vec::with_capacity(n * config.n_waves as usize);
    let mut prev: Vec<Option<u8>> = vec![None; n];
    for wave in 1..=config.n_waves {
        let shocks: Vec<f64> = match config.mechanism {
            Mechanism::SharedEnvironment => (0..n_orthants).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            _ => Vec::new(),
        };
        let exam_year = FIRST_EXAM_YEAR + YEARS_BETWEEN_EXAMS * (wave as i32 - 1);
        let mut current = vec![0u8; n];
        for i in 0..n {
            let lag = prev[i].map_or(0.0, |y| scaled(kind, y));
            let eta = match config.mechanism {
                Mechanism::Null => base,
                Mechanism::Homophily => base + config.mechanism_strength * positions[i][0] + config.persistence * lag,
                Mechanism::SharedEnvironment => {
                    base + config.mechanism_strength * shocks[orthant(&positions[i])] + config.persistence * lag
                }
                Mechanism::Induction => {
                    let friends = &named[i];
                    let exposure = if friends.is_empty() || prev[i].is_none() {
                        0.0
                    } else {
                        friends
                            .iter()
                            .map(|&j| prev[j].map_or(0.0, |y| scaled(kind, y)))
                            .sum::<f64>()
                            / friends.len() as f64
                    };
                    base + config.mechanism_strength * exposure + config.persistence * lag
                }
            };
            current[i] = draw_trait(kind, logistic(eta), &mut rng);
        }
        for i in 0..n {
            exams.push(ExamRecord {
                person_id: ids[i].clone(),
                wave,
                exam_year,
                trait_value: current[i],
                age_years: (exam_year - persons[i].birth_year) as f64,
                education_years: education[i],
            });
            prev[i] = Some(current[i]);
        }
    }

    let mut ties = Vec::with_capacity(observed.len() * config.n_waves as usize);
    for wave in 1..=config.n_waves {
        for &(i, j) in &observed {
            ties.push(TieRecord {
                wave,
                source_id: ids[i].clone(),
                target_id: ids[j].clone(),
                tie_kind: TieKind::Friend,
            });
        }
    }

    let panel = CohortPanel::new(kind, persons, exams, ties)?;
    let truth = GroundTruth {
        mechanism: config.mechanism,
        latent: ids
            .iter()
            .cloned()
            .zip(positions.into_iter().map(|coords| LatentPosition { coords }))
            .collect(),
        true_induction_coefficient: match config.mechanism {
            Mechanism::Induction => config.mechanism_strength,
            _ => 0.0,
        },
        true_namings: named
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.iter().map(move |&j| (i, j)))
            .map(|(i, j)| (ids[i].clone(), ids[j].clone()))
            .collect(),
    };
    Ok((panel, truth))
}

/// Recorded friendship sparsity among focal participants at one wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    /// Fraction of FPs with at least one recorded naming.
    pub fp_naming_fraction: f64,
    /// Mean number of distinct recorded friends (either direction) per FP.
    pub friends_per_fp: f64,
}

pub fn sparsity(panel: &CohortPanel, wave: u8) -> Sparsity {
    let fps: Vec<&PersonId> = panel.persons().filter(|p| p.is_fp).map(|p| &p.person_id).collect();
    if fps.is_empty() {
        return Sparsity {
            fp_naming_fraction: 0.0,
            friends_per_fp: 0.0,
        };
    }
    let mut naming = 0usize;
    let mut friends = 0usize;
    for fp in &fps {
        let nb: Vec<&PersonId> = panel.neighbors(wave, fp).collect();
        friends += nb.len();
        if nb
            .iter()
            .any(|alter| panel.named(wave, fp, alter, Some(TieKind::Friend)))
        {
            naming += 1;
        }
    }
    Sparsity {
        fp_naming_fraction: naming as f64 / fps.len() as f64,
        friends_per_fp: friends as f64 / fps.len() as f64,
    }
}

/// One replicate of the nearest-neighbour ball experiment.
#[derive(Debug, Clone)]
pub struct NnReplicate {
    pub points: Vec<Vec<f64>>,
    /// `nearest[i]` is the point `i` names.
    pub nearest: Vec<usize>,
    /// Unordered reciprocal pairs `(i, j)` with `i < j`.
    pub mutual_pairs: Vec<(usize, usize)>,
    /// The globally closest pair, `i < j`.
    pub closest_pair: (usize, usize),
}

impl NnReplicate {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist2(&self.points[i], &self.points[j]).sqrt()
    }
}

pub fn nn_ball_replicate(n: usize, dim: usize, rng: &mut Stream) -> NnReplicate {
    assert!(n >= 2 && dim >= 1);
    let points: Vec<Vec<f64>> = (0..n).map(|_| uniform_in_ball(dim, rng)).collect();
    let nearest = nearest_neighbors(&points);
    let mutual_pairs = (0..n)
        .filter(|&i| nearest[nearest[i]] == i && i < nearest[i])
        .map(|i| (i, nearest[i]))
        .collect();
    let mut closest = (f64::INFINITY, (0, 1));
    for i in 0..n {
        for j in i + 1..n {
            let d = dist2(&points[i], &points[j]);
            if d < closest.0 {
                closest = (d, (i, j));
            }
        }
    }
    NnReplicate {
        points,
        nearest,
        mutual_pairs,
        closest_pair: closest.1,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceSamples {
    /// One entry per reciprocal pair.
    pub mutual: Vec<f64>,
    /// One entry per non-reciprocated naming.
    pub nonmutual: Vec<f64>,
}

impl DistanceSamples {
    pub fn push_replicate(&mut self, rep: &NnReplicate) {
        for (i, &j) in rep.nearest.iter().enumerate() {
            let d = rep.distance(i, j);
            if rep.nearest[j] == i {
                if i < j {
                    self.mutual.push(d);
                }
            } else {
                self.nonmutual.push(d);
            }
        }
    }
}

/// Replicate `r` uses substream `(seed, r)`; replicates run in parallel.
pub fn nn_ball_replicates(n: usize, dim: usize, replicates: usize, seed: u64) -> Vec<NnReplicate> {
    (0..replicates)
        .into_par_iter()
        .map(|r| nn_ball_replicate(n, dim, &mut substream(seed, r as u64)))
        .collect()
}

pub fn nn_ball_experiment(n: usize, dim: usize, replicates: usize, seed: u64) -> DistanceSamples {
    let mut samples = DistanceSamples::default();
    for rep in nn_ball_replicates(n, dim, replicates, seed) {
        samples.push_replicate(&rep);
    }
    samples
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub n_mutual: usize,
    pub n_nonmutual: usize,
    /// `min_d F_mutual(d) - F_nonmutual(d)` over the grid.
    pub grid_min_diff: f64,
    /// Largest negative excursion tolerated as sampling noise (one-sided
    /// DKW-type bound at the 1% level).
    pub tolerance: f64,
    pub dominance_holds: bool,
    /// One-sided two-sample statistic `max_d F_mutual(d) - F_nonmutual(d)`.
    pub statistic: f64,
    pub p_value: f64,
    pub n_perms: usize,
    /// `(d, F_mutual(d), F_nonmutual(d))` on the grid.
    pub grid: Vec<(f64, f64, f64)>,
}

fn ecdf(sorted: &[f64], d: f64) -> f64 {
    sorted.partition_point(|x| *x <= d) as f64 / sorted.len() as f64
}

/// `max_d F_a(d) - F_b(d)` over pooled points; `labels[k]` marks sample a.
fn one_sided_ks(order: &[f64], labels: &[bool], n_a: usize, n_b: usize) -> f64 {
    let (mut ca, mut cb) = (0usize, 0usize);
    let mut best = 0.0f64;
    let mut k = 0;
    while k < order.len() {
        // Consume ties together.
        let v = order[k];
        while k < order.len() && order[k] == v {
            if labels[k] {
                ca += 1;
            } else {
                cb += 1;
            }
            k += 1;
        }
        best = best.max(ca as f64 / n_a as f64 - cb as f64 / n_b as f64);
    }
    best
}

/// Tests whether mutual distances are stochastically smaller.
pub fn dominance_check(
    samples: &DistanceSamples,
    grid_size: usize,
    n_perms: usize,
    seed: u64,
) -> Result<DominanceReport, GenError> {
    let (m, nm) = (&samples.mutual, &samples.nonmutual);
    if m.is_empty() || nm.is_empty() {
        return Err(GenError::EmptySample);
    }
    let mut sm = m.clone();
    let mut sn = nm.clone();
    sm.sort_by(f64::total_cmp);
    sn.sort_by(f64::total_cmp);
    let max_d = sm.last().unwrap().max(*sn.last().unwrap());
    let steps = grid_size.max(2);
    let grid: Vec<(f64, f64, f64)> = (0..steps)
        .map(|k| {
            let d = max_d * k as f64 / (steps - 1) as f64;
            (d, ecdf(&sm, d), ecdf(&sn, d))
        })
        .collect();
    let grid_min_diff = grid.iter().map(|(_, a, b)| a - b).fold(f64::INFINITY, f64::min);
    let (n_a, n_b) = (sm.len(), sn.len());
    let tolerance = ((1.0f64 / 0.01).ln() / 2.0 * (n_a + n_b) as f64 / (n_a * n_b) as f64).sqrt();

    let mut pooled: Vec<(f64, bool)> = m
        .iter()
        .map(|&d| (d, true))
        .chain(nm.iter().map(|&d| (d, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let order: Vec<f64> = pooled.iter().map(|p| p.0).collect();
    let labels: Vec<bool> = pooled.iter().map(|p| p.1).collect();
    let statistic = one_sided_ks(&order, &labels, n_a, n_b);

    let exceed: usize = (0..n_perms)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let mut perm = labels.clone();
            perm.shuffle(&mut rng);
            (one_sided_ks(&order, &perm, n_a, n_b) >= statistic) as usize
        })
        .sum();
    let p_value = (1 + exceed) as f64 / (1 + n_perms) as f64;

    Ok(DominanceReport {
        n_mutual: n_a,
        n_nonmutual: n_b,
        grid_min_diff,
        tolerance,
        dominance_holds: grid_min_diff >= -tolerance,
        statistic,
        p_value,
        n_perms,
        grid,
    })
}
