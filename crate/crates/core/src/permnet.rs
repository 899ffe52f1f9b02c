//! Trait association by degree of separation, compared against networks
//! whose trait labels have been randomly shuffled.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netpanel::{CohortPanel, PersonId, TraitKind};
use crate::rng::substream;
use crate::stats::quantile_sorted;

pub const DEFAULT_COUNT_THRESHOLD: u8 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum PermError {
    #[error("wave {0} is not in the panel")]
    WaveAbsent(u8),
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("n_perms must be at least 1")]
    NoPerms,
    #[error("no pair at degree {degree} has an alter with the trait")]
    NotComputable { degree: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermOptions {
    /// Follow namings source to target only.
    pub directed: bool,
    /// Count traits at or above this value count as having the trait.
    pub count_threshold: u8,
}

impl Default for PermOptions {
    fn default() -> Self {
        PermOptions {
            directed: false,
            count_threshold: DEFAULT_COUNT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeAssociation {
    pub degree: usize,
    pub observed: f64,
    pub perm_mean: f64,
    pub rel_increase: f64,
    /// Percentile permutation interval for `rel_increase`; not a confidence
    /// interval.
    pub perm_interval: (f64, f64),
    pub n_pairs: usize,
    pub n_perms: usize,
    /// Replicates in which the degree was computable.
    pub n_computable: usize,
}

/// Persons examined at a wave, their dichotomized traits, and the wave's graph.
struct WaveGraph {
    ids: Vec<PersonId>,
    is_fp: Vec<bool>,
    trait_on: Vec<bool>,
    adj: Vec<Vec<usize>>,
}

impl WaveGraph {
    fn build(panel: &CohortPanel, wave: u8, opts: &PermOptions) -> Result<WaveGraph, PermError> {
        if !panel.has_wave(wave) {
            return Err(PermError::WaveAbsent(wave));
        }
        let threshold = match panel.trait_kind() {
            TraitKind::Binary => 1,
            TraitKind::Count0to7 => opts.count_threshold,
        };
        let mut ids = Vec::new();
        let mut is_fp = Vec::new();
        let mut trait_on = Vec::new();
        for p in panel.persons() {
            if let Some(e) = panel.exam(&p.person_id, wave) {
                ids.push(p.person_id.clone());
                is_fp.push(p.is_fp);
                trait_on.push(e.trait_value >= threshold);
            }
        }
        let index: BTreeMap<&PersonId, usize> = ids.iter().enumerate().map(|(n, id)| (id, n)).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for t in panel.ties().iter().filter(|t| t.wave == wave) {
            let (Some(&s), Some(&d)) = (index.get(&t.source_id), index.get(&t.target_id)) else {
                continue;
            };
            adj[s].push(d);
            if !opts.directed {
                adj[d].push(s);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        Ok(WaveGraph {
            ids,
            is_fp,
            trait_on,
            adj,
        })
    }

    /// `pairs[k-1]` holds index pairs `(fp, alter)` at geodesic distance `k`.
    fn pairs_by_degree(&self, max_k: usize) -> Vec<Vec<(usize, usize)>> {
        let n = self.ids.len();
        let mut out = vec![Vec::new(); max_k];
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        let mut seen = Vec::new();
        for src in (0..n).filter(|&i| self.is_fp[i]) {
            dist[src] = 0;
            seen.push(src);
            queue.push_back(src);
            while let Some(u) = queue.pop_front() {
                let du = dist[u];
                if du == max_k {
                    continue;
                }
                for &v in &self.adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = du + 1;
                        seen.push(v);
                        queue.push_back(v);
                        out[du].push((src, v));
                    }
                }
            }
            for v in seen.drain(..) {
                dist[v] = usize::MAX;
            }
        }
        for level in &mut out {
            level.sort_unstable();
        }
        out
    }
}

fn q_k(pairs: &[(usize, usize)], y: &[bool]) -> Option<f64> {
    let (mut both, mut alter) = (0usize, 0usize);
    for &(i, j) in pairs {
        if y[j] {
            alter += 1;
            both += y[i] as usize;
        }
    }
    (alter > 0).then(|| both as f64 / alter as f64)
}

/// Ordered pairs `(fp, alter)` at distance exactly `k`, sorted.
pub fn degree_pairs(
    panel: &CohortPanel,
    wave: u8,
    k: usize,
    opts: &PermOptions,
) -> Result<Vec<(PersonId, PersonId)>, PermError> {
    if k == 0 {
        return Err(PermError::ZeroDegree);
    }
    let g = WaveGraph::build(panel, wave, opts)?;
    let mut all = g.pairs_by_degree(k);
    Ok(all
        .pop()
        .unwrap_or_default()
        .into_iter()
        .map(|(i, j)| (g.ids[i].clone(), g.ids[j].clone()))
        .collect())
}

/// Conditional prevalence of the trait in FPs whose degree-`k` alter has it.
pub fn degree_association(panel: &CohortPanel, wave: u8, k: usize, opts: &PermOptions) -> Result<f64, PermError> {
    if k == 0 {
        return Err(PermError::ZeroDegree);
    }
    let g = WaveGraph::build(panel, wave, opts)?;
    let pairs = g.pairs_by_degree(k);
    q_k(&pairs[k - 1], &g.trait_on).ok_or(PermError::NotComputable { degree: k })
}

/// Observed association at degrees `1..=max_k` against `n_perms` shuffles of
/// the trait over all persons examined at `wave`. Degrees that are not
/// computable in the data or in every replicate are left out.
pub fn permutation_test(
    panel: &CohortPanel,
    wave: u8,
    max_k: usize,
    n_perms: usize,
    seed: u64,
    opts: &PermOptions,
) -> Result<Vec<DegreeAssociation>, PermError> {
    if max_k == 0 {
        return Err(PermError::ZeroDegree);
    }
    if n_perms == 0 {
        return Err(PermError::NoPerms);
    }
    let g = WaveGraph::build(panel, wave, opts)?;
    let pairs = g.pairs_by_degree(max_k);
    let replicates: Vec<Vec<Option<f64>>> = (0..n_perms)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let mut y = g.trait_on.clone();
            y.shuffle(&mut rng);
            pairs.iter().map(|p| q_k(p, &y)).collect()
        })
        .collect();

    let mut out = Vec::new();
    for (idx, level) in pairs.iter().enumerate() {
        let Some(observed) = q_k(level, &g.trait_on) else {
            continue;
        };
        let mut reps: Vec<f64> = replicates.iter().filter_map(|r| r[idx]).collect();
        if reps.is_empty() {
            continue;
        }
        reps.sort_by(f64::total_cmp);
        let perm_mean = reps.iter().sum::<f64>() / reps.len() as f64;
        let ratio = |den: f64| {
            if den > 0.0 {
                observed / den - 1.0
            } else {
                f64::INFINITY
            }
        };
        out.push(DegreeAssociation {
            degree: idx + 1,
            observed,
            perm_mean,
            rel_increase: ratio(perm_mean),
            perm_interval: (
                ratio(quantile_sorted(&reps, 0.975)),
                ratio(quantile_sorted(&reps, 0.025)),
            ),
            n_pairs: level.len(),
            n_perms,
            n_computable: reps.len(),
        });
    }
    Ok(out)
}

pub fn associations_csv(rows: &[DegreeAssociation]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "degree",
        "observed",
        "perm_mean",
        "rel_increase",
        "low",
        "high",
        "n_pairs",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.degree.to_string(),
            r.observed.to_string(),
            r.perm_mean.to_string(),
            r.rel_increase.to_string(),
            r.perm_interval.0.to_string(),
            r.perm_interval.1.to_string(),
            r.n_pairs.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netpanel::{ExamRecord, PersonRecord, TieKind, TieRecord};

    fn panel(n: usize, edges: &[(usize, usize)], y: &[u8]) -> CohortPanel {
        let id = |i: usize| PersonId::new(format!("n{i}"));
        let persons = (0..n)
            .map(|i| PersonRecord {
                person_id: id(i),
                is_fp: true,
                female: false,
                birth_year: 1930,
            })
            .collect();
        let exams = (0..n)
            .map(|i| ExamRecord {
                person_id: id(i),
                wave: 1,
                exam_year: 1971,
                trait_value: y[i],
                age_years: 41.0,
                education_years: 12.0,
            })
            .collect();
        let ties = edges
            .iter()
            .map(|&(s, t)| TieRecord {
                wave: 1,
                source_id: id(s),
                target_id: id(t),
                tie_kind: TieKind::Friend,
            })
            .collect();
        CohortPanel::new(TraitKind::Binary, persons, exams, ties).unwrap()
    }

    fn path(y: &[u8]) -> CohortPanel {
        panel(4, &[(0, 1), (1, 2), (2, 3)], y)
    }

    #[test]
    fn path_pairs() {
        let p = path(&[1, 1, 0, 0]);
        let o = PermOptions::default();
        assert_eq!(degree_pairs(&p, 1, 1, &o).unwrap().len(), 6);
        let far = degree_pairs(&p, 1, 3, &o).unwrap();
        assert_eq!(far, vec![("n0".into(), "n3".into()), ("n3".into(), "n0".into())]);
        assert!(degree_pairs(&p, 1, 4, &o).unwrap().is_empty());
        assert_eq!(degree_pairs(&p, 2, 1, &o), Err(PermError::WaveAbsent(2)));
    }

    #[test]
    fn directed_distances_follow_namings() {
        let p = path(&[1, 1, 0, 0]);
        let o = PermOptions {
            directed: true,
            ..Default::default()
        };
        assert_eq!(degree_pairs(&p, 1, 1, &o).unwrap().len(), 3);
        assert_eq!(degree_pairs(&p, 1, 3, &o).unwrap(), vec![("n0".into(), "n3".into())]);
    }

    #[test]
    fn path_association() {
        let o = PermOptions::default();
        let q = degree_association(&path(&[1, 1, 0, 0]), 1, 1, &o).unwrap();
        assert!((q - 2.0 / 3.0).abs() < 1e-15);
        for k in 1..=3 {
            assert_eq!(degree_association(&path(&[1, 1, 1, 1]), 1, k, &o).unwrap(), 1.0);
        }
        assert_eq!(
            degree_association(&path(&[0, 0, 0, 0]), 1, 1, &o),
            Err(PermError::NotComputable { degree: 1 })
        );
    }

    /// Mean of q_1 over every distinct placement of the trait.
    fn exhaustive_mean(n: usize, edges: &[(usize, usize)], ones: usize, k: usize) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != ones {
                continue;
            }
            let y: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            if let Ok(q) = degree_association(&panel(n, edges, &y), 1, k, &PermOptions::default()) {
                total += q;
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn exhaustive_path_mean() {
        let m = exhaustive_mean(4, &[(0, 1), (1, 2), (2, 3)], 2, 1);
        assert!((m - 11.0 / 36.0).abs() < 1e-15);
        let rel = (2.0 / 3.0) / m - 1.0;
        assert!((rel - (24.0 / 11.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_enumeration() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (5, 6), (6, 7), (2, 6)];
        let y = [1, 1, 0, 1, 0, 0, 1, 0];
        let exact = exhaustive_mean(8, &edges, 4, 1);
        let res = permutation_test(&panel(8, &edges, &y), 1, 2, 4000, 3, &PermOptions::default()).unwrap();
        let d1 = &res[0];
        assert_eq!(d1.degree, 1);
        // Every placement of four ones is computable at degree 1 here.
        assert_eq!(d1.n_computable, 4000);
        let se = 0.5 / (4000f64).sqrt();
        assert!((d1.perm_mean - exact).abs() < 3.0 * se, "{} vs {exact}", d1.perm_mean);
    }

    #[test]
    fn permutation_test_path() {
        let res = permutation_test(&path(&[1, 1, 0, 0]), 1, 3, 3000, 1, &PermOptions::default()).unwrap();
        let d1 = &res[0];
        assert!((d1.observed - 2.0 / 3.0).abs() < 1e-15);
        assert!((d1.perm_mean - 11.0 / 36.0).abs() < 0.03);
        assert!(d1.perm_interval.0 <= d1.rel_increase);
        // P2.5 of q_1 is zero, so the upper end is unbounded.
        assert_eq!(d1.perm_interval.1, f64::INFINITY);
        assert_eq!(d1.n_pairs, 6);
    }

    #[test]
    fn reproducible_and_id_invariant() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4)];
        let y = [1, 0, 1, 1, 0];
        let a = permutation_test(&panel(5, &edges, &y), 1, 2, 200, 9, &PermOptions::default()).unwrap();
        let b = permutation_test(&panel(5, &edges, &y), 1, 2, 200, 9, &PermOptions::default()).unwrap();
        assert_eq!(a, b);
        // Relabel node i as 4 - i; id order reverses.
        let rev: Vec<(usize, usize)> = edges.iter().map(|&(s, t)| (4 - s, 4 - t)).collect();
        let ry: Vec<u8> = y.iter().rev().copied().collect();
        let c = permutation_test(&panel(5, &rev, &ry), 1, 2, 200, 9, &PermOptions::default()).unwrap();
        for (x, z) in a.iter().zip(&c) {
            assert_eq!(x.observed, z.observed);
            assert_eq!(x.n_pairs, z.n_pairs);
        }
    }

    #[test]
    fn shuffles_preserve_trait_count() {
        let y = vec![true, false, true, true, false, false];
        let mut rng = substream(4, 0);
        let mut z = y.clone();
        for _ in 0..50 {
            z.shuffle(&mut rng);
            assert_eq!(z.iter().filter(|b| **b).count(), 3);
        }
    }

    #[test]
    fn edgeless_graph_has_no_degrees() {
        let p = panel(4, &[], &[1, 0, 1, 0]);
        assert!(permutation_test(&p, 1, 3, 10, 0, &PermOptions::default())
            .unwrap()
            .is_empty());
        assert!(degree_pairs(&p, 1, 1, &PermOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn argument_errors() {
        let p = path(&[1, 1, 0, 0]);
        let o = PermOptions::default();
        assert_eq!(permutation_test(&p, 1, 0, 10, 0, &o), Err(PermError::ZeroDegree));
        assert_eq!(permutation_test(&p, 1, 1, 0, 0, &o), Err(PermError::NoPerms));
    }

    #[test]
    fn csv_has_header() {
        let res = permutation_test(&path(&[1, 1, 0, 0]), 1, 1, 10, 0, &PermOptions::default()).unwrap();
        let s = associations_csv(&res);
        assert!(s.starts_with("degree,observed,perm_mean,rel_increase,low,high,n_pairs\n1,"));
    }
}
