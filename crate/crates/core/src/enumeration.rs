//! All structurally distinct realizations, found as subgraphs of the dense
//! realization by successively excluding its edges.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;

use crate::conic::DEFAULT_TOL;
use crate::kinetic::{Edge, Realization};
use crate::realization::{dense_realization_with_stats, dense_within, RealizationProblem};
use crate::{Error, Result};

/// Subset of the dense support, one bit per dense edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Mask(u128);

impl Mask {
    fn full(len: usize) -> Self {
        if len == 128 {
            Mask(u128::MAX)
        } else {
            Mask((1u128 << len) - 1)
        }
    }

    fn contains(self, bit: usize) -> bool {
        self.0 >> bit & 1 == 1
    }

    fn without(self, bit: usize) -> Self {
        Mask(self.0 & !(1u128 << bit))
    }

    fn is_empty(self) -> bool {
        self.0 == 0
    }

    fn bits(self) -> impl Iterator<Item = usize> {
        (0..128).filter(move |&b| self.contains(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoundRealization {
    /// Reactions, sorted.
    pub edges: Vec<Edge>,
    /// A representative realization with exactly these reactions.
    pub realization: Realization,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnumerationStats {
    /// Distinct constrained dense computations.
    pub subproblems: usize,
    /// Conic solves across all subproblems.
    pub solves: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSet {
    pub dense: Realization,
    /// Sorted by edge count, then lexicographically by edges.
    pub supports: Vec<FoundRealization>,
    pub stats: EnumerationStats,
    /// Set when the search stopped early; `supports` is then incomplete.
    pub partial: bool,
    pub failure: Option<String>,
}

impl RealizationSet {
    pub fn count(&self) -> usize {
        self.supports.len()
    }

    pub fn contains(&self, edges: &BTreeSet<Edge>) -> bool {
        self.supports
            .iter()
            .any(|f| f.edges.len() == edges.len() && f.edges.iter().all(|e| edges.contains(e)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub completed: usize,
    pub queued: usize,
    pub found: usize,
}

pub struct EnumerateOptions<'a> {
    pub tol: f64,
    /// Stop (with the partial flag) once this many realizations are known.
    pub max_realizations: Option<usize>,
    pub progress: Option<&'a (dyn Fn(Progress) + Sync)>,
}

impl Default for EnumerateOptions<'_> {
    fn default() -> Self {
        EnumerateOptions {
            tol: DEFAULT_TOL,
            max_realizations: None,
            progress: None,
        }
    }
}

/// Result of one constrained dense computation.
#[derive(Clone)]
struct Node {
    support: Mask,
    realization: Realization,
}

struct Search<'a> {
    problem: &'a RealizationProblem,
    dense_edges: Vec<Edge>,
    tol: f64,
}

impl Search<'_> {
    fn edges(&self, mask: Mask) -> BTreeSet<Edge> {
        mask.bits().map(|b| self.dense_edges[b]).collect()
    }

    fn mask_of(&self, edges: &BTreeSet<Edge>) -> Result<Mask> {
        let mut bits = 0u128;
        for e in edges {
            match self.dense_edges.iter().position(|d| d == e) {
                Some(b) => bits |= 1u128 << b,
                None => {
                    return Err(Error::NumericFailure(format!(
                        "constrained solution uses {e}, which is outside the dense support"
                    )))
                }
            }
        }
        Ok(Mask(bits))
    }

    /// Dense realization using only `allowed`.
    fn solve(&self, allowed: Mask) -> Result<(Option<Node>, usize)> {
        match dense_within(self.problem, &self.edges(allowed), self.tol)? {
            None => Ok((None, 0)),
            Some((realization, stats)) => {
                let support = self.mask_of(&realization.support)?;
                Ok((Some(Node { support, realization }), stats.solves))
            }
        }
    }
}

/// Every realization whose support is a distinct reaction graph.
pub fn enumerate_all(problem: &RealizationProblem) -> Result<RealizationSet> {
    enumerate_with(problem, &EnumerateOptions::default())
}

/// Breadth-first search over exclusion sets. A node is a set of allowed
/// edges together with a floor: only edges above the floor may still be
/// excluded, so each exclusion set is generated once. The allowed set of a
/// child is the parent's constrained dense support minus one edge, and
/// nodes with the same allowed set share their solve. Nodes at one depth
/// run in parallel; merging is ordered, so results do not depend on
/// scheduling.
pub fn enumerate_with(problem: &RealizationProblem, opts: &EnumerateOptions) -> Result<RealizationSet> {
    let start = Instant::now();
    let (dense, dense_stats) = dense_realization_with_stats(problem, opts.tol)?;
    let dense_edges: Vec<Edge> = dense.support.iter().copied().collect();
    if dense_edges.len() > 128 {
        return Err(Error::Overflow(format!(
            "dense support has {} reactions; at most 128 can be enumerated",
            dense_edges.len()
        )));
    }
    let search = Search {
        problem,
        dense_edges,
        tol: opts.tol,
    };
    let mut stats = EnumerationStats {
        subproblems: 1,
        solves: dense_stats.solves,
        wall_time_secs: 0.0,
    };
    let full = Mask::full(search.dense_edges.len());
    let mut solved: BTreeMap<Mask, Option<Node>> = BTreeMap::new();
    solved.insert(
        full,
        Some(Node {
            support: full,
            realization: dense.clone(),
        }),
    );
    // Lowest floor each allowed set has been expanded with.
    let mut expanded: BTreeMap<Mask, usize> = BTreeMap::new();
    let mut found: BTreeMap<Mask, Realization> = BTreeMap::new();
    let mut frontier: Vec<(Mask, usize)> = vec![(full, 0)];
    let mut completed = 0;
    let mut partial = false;
    let mut failure = None;

    'search: while !frontier.is_empty() {
        // Solve the allowed sets of this level, then the exact-support checks
        // for every support they produce.
        let pending: BTreeSet<Mask> = frontier.iter().map(|&(a, _)| a).filter(|a| !solved.contains_key(a)).collect();
        if let Err(e) = solve_batch(&search, pending, &mut solved, &mut stats) {
            partial = true;
            failure = Some(e.to_string());
            break 'search;
        }
        let supports: BTreeSet<Mask> = frontier
            .iter()
            .filter_map(|(a, _)| solved[a].as_ref().map(|n| n.support))
            .filter(|s| !s.is_empty() && !solved.contains_key(s))
            .collect();
        if let Err(e) = solve_batch(&search, supports, &mut solved, &mut stats) {
            partial = true;
            failure = Some(e.to_string());
            break 'search;
        }

        let mut next: BTreeSet<(Mask, usize)> = BTreeSet::new();
        for &(allowed, floor) in &frontier {
            completed += 1;
            let Some(node) = solved[&allowed].as_ref() else {
                continue;
            };
            let s = node.support;
            if s.is_empty() {
                continue;
            }
            if let Some(Some(check)) = solved.get(&s) {
                if check.support == s {
                    found.entry(s).or_insert_with(|| check.realization.clone());
                } else {
                    warn!(
                        "support of size {} failed the exact-support check; skipped",
                        s.0.count_ones()
                    );
                }
            }
            if let Some(cap) = opts.max_realizations {
                if found.len() >= cap {
                    partial = true;
                    break 'search;
                }
            }
            for bit in s.bits().filter(|&b| b + 1 > floor) {
                let child = (s.without(bit), bit + 1);
                if expanded.get(&child.0).is_some_and(|&f| f <= child.1) {
                    continue;
                }
                next.insert(child);
            }
        }
        // Keep the lowest floor per allowed set; it dominates the others.
        let mut level: BTreeMap<Mask, usize> = BTreeMap::new();
        for (a, f) in next {
            level.entry(a).and_modify(|g| *g = (*g).min(f)).or_insert(f);
        }
        for (&a, &f) in &level {
            expanded.insert(a, f);
        }
        frontier = level.into_iter().collect();
        if let Some(hook) = opts.progress {
            hook(Progress {
                completed,
                queued: frontier.len(),
                found: found.len(),
            });
        }
        debug!("enumeration level done: {} found, {} queued", found.len(), frontier.len());
    }

    let mut supports: Vec<FoundRealization> = found
        .into_iter()
        .map(|(mask, realization)| FoundRealization {
            edges: search.edges(mask).into_iter().collect(),
            realization,
        })
        .collect();
    if let Some(cap) = opts.max_realizations {
        supports.truncate(cap);
    }
    supports.sort_by(|a, b| a.edges.len().cmp(&b.edges.len()).then_with(|| a.edges.cmp(&b.edges)));
    stats.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(RealizationSet {
        dense,
        supports,
        stats,
        partial,
        failure,
    })
}

fn solve_batch(search: &Search, masks: BTreeSet<Mask>, solved: &mut BTreeMap<Mask, Option<Node>>, stats: &mut EnumerationStats) -> Result<()> {
    let masks: Vec<Mask> = masks.into_iter().collect();
    let results: Vec<Result<(Option<Node>, usize)>> = masks.par_iter().map(|&a| search.solve(a)).collect();
    for (a, r) in masks.into_iter().zip(results) {
        let (node, solves) = r?;
        stats.subproblems += 1;
        stats.solves += solves;
        solved.insert(a, node);
    }
    Ok(())
}

/// Checks every nonempty subset of the dense support directly. Only for
/// validation; refuses dense supports above 20 reactions.
pub fn brute_force_enumerate(problem: &RealizationProblem) -> Result<RealizationSet> {
    let start = Instant::now();
    let (dense, dense_stats) = dense_realization_with_stats(problem, DEFAULT_TOL)?;
    let dense_edges: Vec<Edge> = dense.support.iter().copied().collect();
    let rd = dense_edges.len();
    if rd > 20 {
        return Err(Error::Invalid(format!(
            "brute force needs 2^{rd} solves; refusing dense supports above 20 reactions"
        )));
    }
    let search = Search {
        problem,
        dense_edges,
        tol: DEFAULT_TOL,
    };
    let subsets: Vec<Mask> = (1..(1u128 << rd)).map(Mask).collect();
    let results: Vec<Result<Option<(Mask, Realization, usize)>>> = subsets
        .par_iter()
        .map(|&s| {
            let (node, solves) = search.solve(s)?;
            Ok(node.filter(|n| n.support == s).map(|n| (s, n.realization, solves)))
        })
        .collect();
    let mut supports = Vec::new();
    let mut solves = dense_stats.solves;
    for r in results {
        if let Some((mask, realization, k)) = r? {
            solves += k;
            supports.push(FoundRealization {
                edges: search.edges(mask).into_iter().collect(),
                realization,
            });
        }
    }
    supports.sort_by(|a, b| a.edges.len().cmp(&b.edges.len()).then_with(|| a.edges.cmp(&b.edges)));
    Ok(RealizationSet {
        dense,
        supports,
        stats: EnumerationStats {
            subproblems: subsets.len() + 1,
            solves,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
        partial: false,
        failure: None,
    })
}

/// One row of an exclusion study.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionRow {
    pub excluded: BTreeSet<Edge>,
    pub count: usize,
    pub partial: bool,
}

/// Realization counts with each set of reactions forbidden in turn. Every
/// set must lie inside the dense support of the unconstrained problem; a set
/// that leaves no realization counts zero.
pub fn exclusion_study(problem: &RealizationProblem, exclusions: &[BTreeSet<Edge>]) -> Result<Vec<ExclusionRow>> {
    let dense = dense_realization_with_stats(problem, DEFAULT_TOL)?.0;
    let mut rows = Vec::with_capacity(exclusions.len());
    for h in exclusions {
        if let Some(e) = h.iter().find(|e| !dense.support.contains(e)) {
            return Err(Error::Invalid(format!("excluded reaction {e} is not in the dense realization")));
        }
        let row = match enumerate_all(&problem.with_exclusions(h)) {
            Ok(set) => ExclusionRow {
                excluded: h.clone(),
                count: set.count(),
                partial: set.partial,
            },
            Err(Error::Infeasible(_)) => ExclusionRow {
                excluded: h.clone(),
                count: 0,
                partial: false,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use crate::kinetic::{r_max, ComplexMatrix};
    use crate::realization::UncertaintyRegion;
    use nalgebra::DMatrix;

    #[test]
    fn exact_benchmark_is_unique() {
        let problem = RealizationProblem::exact(&benchmark::system());
        let set = enumerate_all(&problem).unwrap();
        assert_eq!(set.count(), 1);
        assert!(set.contains(&benchmark::true_edges()));
        assert!(!set.partial);
        let brute = brute_force_enumerate(&problem).unwrap();
        assert_eq!(brute.count(), 1);
    }

    /// Two species, complexes X1, X2 and 0, with `M` chosen so the dense
    /// support has three edges.
    fn toy(rho: f64) -> RealizationProblem {
        let y = ComplexMatrix::new(DMatrix::from_row_slice(2, 3, &[1, 0, 0, 0, 1, 0])).unwrap();
        // X1 -> X2 at rate 1, X2 -> 0 at rate 1, 0 -> X1 at rate 1.
        let m = DMatrix::from_row_slice(2, 3, &[-1.0, 0.0, 1.0, 1.0, -1.0, 0.0]);
        let region = if rho == 0.0 {
            UncertaintyRegion::exact(m)
        } else {
            UncertaintyRegion::spherical(m, rho).unwrap()
        };
        RealizationProblem::new(y, region, BTreeSet::new()).unwrap()
    }

    #[test]
    fn toy_matches_brute_force() {
        // ‖M̄‖_F = 2 puts M = 0 on the sphere boundary; stay clear of it.
        for rho in [0.0, 0.3, 1.2, 2.5] {
            let problem = toy(rho);
            let set = enumerate_all(&problem).unwrap();
            let brute = brute_force_enumerate(&problem).unwrap();
            let a: Vec<_> = set.supports.iter().map(|f| f.edges.clone()).collect();
            let b: Vec<_> = brute.supports.iter().map(|f| f.edges.clone()).collect();
            assert_eq!(a, b, "rho = {rho}");
            let rd = set.dense.support.len();
            assert!(set.count() as u128 <= r_max(rd, 1).unwrap());
        }
    }

    #[test]
    fn supports_are_realizable_subgraphs() {
        let problem = toy(0.3);
        let set = enumerate_all(&problem).unwrap();
        assert!(set.contains(&set.dense.support));
        for f in &set.supports {
            assert!(f.edges.iter().all(|e| set.dense.support.contains(e)));
            let rz = &f.realization;
            assert_eq!(rz.support.iter().copied().collect::<Vec<_>>(), f.edges);
            assert!(problem.region.contains(&rz.coefficients, 1e-6));
        }
    }

    #[test]
    fn cap_sets_partial_flag() {
        let problem = toy(1.2);
        let full = enumerate_all(&problem).unwrap();
        assert!(full.count() > 2);
        let opts = EnumerateOptions {
            max_realizations: Some(2),
            ..Default::default()
        };
        let capped = enumerate_with(&problem, &opts).unwrap();
        assert!(capped.partial);
        assert_eq!(capped.count(), 2);
    }

    #[test]
    fn excluding_the_dense_support_counts_zero() {
        let problem = RealizationProblem::exact(&benchmark::system());
        let rows = exclusion_study(&problem, &[BTreeSet::new(), benchmark::true_edges()]).unwrap();
        assert_eq!(rows[0].count, 1);
        assert_eq!(rows[1].count, 0);
        let bad = exclusion_study(&problem, &[BTreeSet::from([Edge::new(3, 0)])]);
        assert!(bad.is_err());
    }
}
