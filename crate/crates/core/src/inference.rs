//! Top-k route inference.
//!
//! [`top_k_routes`] runs list Viterbi in tree-trellis form over the trellis
//! of positions × POIs (start pinned at position 0, self-transitions
//! forbidden). A backward Viterbi pass bounds, for every trellis node, the
//! best score of any completion. A best-first forward search then grows
//! route prefixes ordered by prefix score plus that bound, so complete
//! routes come out in non-increasing score order. A prefix that revisits a
//! POI is discarded together with all of its extensions.
//!
//! A bound that ignores repeats is loose when a few attractive POIs can be
//! cycled through. The backward pass therefore forbids stepping straight
//! back and tracks a handful of such hub POIs in the state so each is used
//! at most once. Each new prefix is also bounded by the best distinct
//! unused POIs, each credited with its best incoming transition, and the
//! smaller bound is used.
//!
//! [`brute_force_top_k`] enumerates every repeat-free route and is the
//! reference oracle for small instances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{RouteScorer, ScoredRoute};

/// Maximum number of repeating prefixes discarded before giving up.
pub const EMISSION_CAP: usize = 1_000_000;
/// Maximum route count [`brute_force_top_k`] agrees to enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKResult {
    /// Sorted by total descending, ties by POI-id sequence ascending.
    pub routes: Vec<ScoredRoute>,
    /// Fewer than k repeat-free routes exist.
    pub truncated: bool,
}

/// Sort order of a result list: higher total first, then lexicographically
/// smaller POI-id sequence.
pub fn route_order(a: &ScoredRoute, b: &ScoredRoute) -> Ordering {
    b.total.total_cmp(&a.total).then_with(|| a.pois.cmp(&b.pois))
}

fn finish(mut routes: Vec<ScoredRoute>, k: usize) -> TopKResult {
    routes.sort_by(route_order);
    routes.truncate(k);
    TopKResult {
        truncated: routes.len() < k,
        routes,
    }
}

/// Number of repeat-free routes of `length` POIs with a fixed start among
/// `n` POIs: (n−1)! / (n−length)!.
pub fn route_space_size(n: usize, length: usize) -> u128 {
    if length == 0 || length > n {
        return 0;
    }
    (1..length).fold(1u128, |acc, j| acc.saturating_mul((n - j) as u128))
}

/// Most POIs the completion bound forbids from repeating.
const MAX_HUBS: usize = 3;

/// Best completion values of one trellis node: the best over all next
/// POIs, that next POI, and the best over the others.
#[derive(Debug, Clone, Copy)]
struct Completion {
    best: f64,
    next: u32,
    second: f64,
    second_next: u32,
}

impl Completion {
    const END: Self = Self {
        best: 0.0,
        next: u32::MAX,
        second: 0.0,
        second_next: u32::MAX,
    };

    const NONE: Self = Self {
        best: f64::NEG_INFINITY,
        next: u32::MAX,
        second: f64::NEG_INFINITY,
        second_next: u32::MAX,
    };

    /// Best completion whose next POI is not `excluded`.
    fn excluding(&self, excluded: usize) -> f64 {
        if self.next as usize == excluded {
            self.second
        } else {
            self.best
        }
    }
}

/// Upper bounds on the best completion of every trellis node, over walks
/// that never step straight back to the POI they came from and visit each
/// hub POI at most once. Repeat-free routes are such walks. The trellis
/// state carries the set of hubs visited so far as a bit mask.
struct Bounds {
    n: usize,
    masks: usize,
    /// Bit of each POI in the hub mask, 0 for non-hubs.
    hub_bit: Vec<u32>,
    /// Indexed by `(t * masks + mask) * n + v`.
    table: Vec<Completion>,
}

impl Bounds {
    fn new(scorer: &RouteScorer<'_>, hubs: &[usize]) -> Self {
        let (n, l) = (scorer.n_pois(), scorer.length());
        let masks = 1 << hubs.len();
        let mut hub_bit = vec![0; n];
        for (i, &h) in hubs.iter().enumerate() {
            hub_bit[h] = 1 << i;
        }
        let mut bounds = Self {
            n,
            masks,
            hub_bit,
            table: vec![Completion::NONE; l * masks * n],
        };
        let last = (l - 1) * masks * n;
        bounds.table[last..].fill(Completion::END);
        for t in (0..l - 1).rev() {
            for mask in 0..masks as u32 {
                for v in 0..n {
                    if bounds.hub_bit[v] & !mask != 0 {
                        continue;
                    }
                    let mut c = Completion::NONE;
                    for u in (0..n).filter(|&u| u != v) {
                        let g = bounds.gain(scorer, t, mask, v, u);
                        if g > c.best {
                            c = Completion {
                                best: g,
                                next: u as u32,
                                second: c.best,
                                second_next: c.next,
                            };
                        } else if g > c.second {
                            c.second = g;
                            c.second_next = u as u32;
                        }
                    }
                    let slot = bounds.slot(t, mask, v);
                    bounds.table[slot] = c;
                }
            }
        }
        bounds
    }

    /// Hubs are picked by tracing the bound's best walk from the start and
    /// adding whatever it repeats, until the walk is repeat-free or the hub
    /// budget is spent.
    fn adaptive(scorer: &RouteScorer<'_>) -> Self {
        let mut hubs = Vec::new();
        loop {
            let bounds = Self::new(scorer, &hubs);
            let walk = bounds.trace(scorer);
            let mut seen = vec![false; bounds.n];
            let before = hubs.len();
            for &v in &walk {
                if std::mem::replace(&mut seen[v], true) && !hubs.contains(&v) && hubs.len() < MAX_HUBS {
                    hubs.push(v);
                }
            }
            if hubs.len() == before {
                return bounds;
            }
        }
    }

    fn slot(&self, t: usize, mask: u32, v: usize) -> usize {
        (t * self.masks + mask as usize) * self.n + v
    }

    fn bit(&self, v: usize) -> u32 {
        self.hub_bit[v]
    }

    fn get(&self, t: usize, mask: u32, v: usize) -> &Completion {
        &self.table[self.slot(t, mask, v)]
    }

    /// Bound on stepping from `v` at position `t` to `u` and completing
    /// from there.
    fn gain(&self, scorer: &RouteScorer<'_>, t: usize, mask: u32, v: usize, u: usize) -> f64 {
        let b = self.hub_bit[u];
        if mask & b != 0 {
            return f64::NEG_INFINITY;
        }
        scorer.transition_score(v, u) + scorer.poi_score(u) + self.get(t + 1, mask | b, u).excluding(v)
    }

    fn trace(&self, scorer: &RouteScorer<'_>) -> Vec<usize> {
        let mut v = scorer.start();
        let (mut mask, mut prev) = (self.bit(v), u32::MAX);
        let mut walk = vec![v];
        for t in 0..scorer.length() - 1 {
            let c = self.get(t, mask, v);
            let next = if c.next == prev { c.second_next } else { c.next };
            if next == u32::MAX {
                break;
            }
            walk.push(next as usize);
            (prev, v) = (v as u32, next as usize);
            mask |= self.bit(v);
        }
        walk
    }
}

#[derive(Debug, Clone, Copy)]
struct Prefix {
    parent: u32,
    poi: u32,
    depth: u32,
    /// Hubs on the prefix.
    mask: u32,
    score: f64,
}

/// Successor `child` of a prefix. A sibling-chain entry (`tight == false`)
/// is keyed by the completion bound and stands for `child` and every later
/// sibling; a tight entry stands for `child` alone under its tighter bound.
#[derive(Debug, Clone, Copy)]
struct Frontier {
    bound: f64,
    prefix: u32,
    child: u32,
    tight: bool,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // max-heap: highest bound first, then older prefixes and earlier children
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.prefix.cmp(&self.prefix))
            .then_with(|| other.child.cmp(&self.child))
            .then_with(|| self.tight.cmp(&other.tight))
    }
}

struct Search<'s, 'a> {
    scorer: &'s RouteScorer<'a>,
    bounds: Bounds,
    /// POIs by `poi_score + best incoming transition`, descending.
    credit: Vec<(f64, u32)>,
    /// Successors of each trellis state sorted by gain, built on demand.
    successors: Vec<Option<Vec<(f64, u32)>>>,
    prefixes: Vec<Prefix>,
}

impl Search<'_, '_> {
    fn successors(&mut self, t: usize, mask: u32, v: usize) -> &[(f64, u32)] {
        let n = self.scorer.n_pois();
        let slot = self.bounds.slot(t, mask, v);
        if self.successors[slot].is_none() {
            let mut list: Vec<(f64, u32)> = (0..n)
                .filter(|&u| u != v)
                .map(|u| (self.bounds.gain(self.scorer, t, mask, v, u), u as u32))
                .filter(|&(gain, _)| gain > f64::NEG_INFINITY)
                .collect();
            list.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            self.successors[slot] = Some(list);
        }
        self.successors[slot].as_deref().expect("filled above")
    }

    fn frontier(&mut self, prefix: u32, child: u32) -> Option<Frontier> {
        let p = self.prefixes[prefix as usize];
        let &(gain, _) = self.successors(p.depth as usize, p.mask, p.poi as usize).get(child as usize)?;
        Some(Frontier {
            bound: p.score + gain,
            prefix,
            child,
            tight: false,
        })
    }

    /// Best total over `remaining` further POIs, distinct from each other,
    /// from `extra` and from the prefix.
    fn distinct_bound(&self, prefix: u32, extra: u32, remaining: usize) -> f64 {
        self.credit
            .iter()
            .filter(|&&(_, w)| w != extra && !self.contains(prefix, w))
            .take(remaining)
            .map(|&(c, _)| c)
            .sum()
    }

    fn contains(&self, mut prefix: u32, poi: u32) -> bool {
        loop {
            let p = self.prefixes[prefix as usize];
            if p.poi == poi {
                return true;
            }
            if p.parent == u32::MAX {
                return false;
            }
            prefix = p.parent;
        }
    }

    fn path(&self, mut prefix: u32, last: u32) -> Vec<usize> {
        let mut path = vec![last as usize];
        while prefix != u32::MAX {
            let p = self.prefixes[prefix as usize];
            path.push(p.poi as usize);
            prefix = p.parent;
        }
        path.reverse();
        path
    }
}

/// The k best repeat-free routes for the scorer's query, exactly.
pub fn top_k_routes(scorer: &RouteScorer<'_>, k: usize) -> Result<TopKResult> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let (n, l) = (scorer.n_pois(), scorer.length());
    let mut credit: Vec<(f64, u32)> = (0..n)
        .map(|w| {
            let best_in = (0..n)
                .filter(|&x| x != w)
                .map(|x| scorer.transition_score(x, w))
                .fold(f64::NEG_INFINITY, f64::max);
            (scorer.poi_score(w) + best_in, w as u32)
        })
        .collect();
    credit.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let bounds = Bounds::adaptive(scorer);
    let mut search = Search {
        scorer,
        successors: vec![None; bounds.table.len()],
        prefixes: vec![Prefix {
            parent: u32::MAX,
            poi: scorer.start() as u32,
            depth: 0,
            mask: bounds.bit(scorer.start()),
            score: scorer.poi_score(scorer.start()),
        }],
        bounds,
        credit,
    };
    let mut heap = BinaryHeap::new();
    heap.extend(search.frontier(0, 0));

    let mut survivors: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut filtered = 0usize;
    while let Some(next) = heap.pop() {
        // Candidates tied with the k-th survivor (up to summation-order
        // rounding) are still collected so the tie-break sees all of them.
        if let Some((kth, _)) = survivors.get(k - 1) {
            if next.bound < kth - 1e-9 * (1.0 + kth.abs()) {
                break;
            }
        }
        let parent = search.prefixes[next.prefix as usize];
        let (t, v) = (parent.depth as usize, parent.poi as usize);
        let u = search.successors(t, parent.mask, v)[next.child as usize].1;
        if !next.tight {
            heap.extend(search.frontier(next.prefix, next.child + 1));
            if search.contains(next.prefix, u) {
                filtered += 1;
                if filtered > EMISSION_CAP {
                    return Err(Error::EmissionCap {
                        filtered,
                        found: survivors.len(),
                        wanted: k,
                    });
                }
                continue;
            }
            let remaining = l - t - 2;
            if remaining > 0 {
                let step = scorer.transition_score(v, u as usize) + scorer.poi_score(u as usize);
                let tight = parent.score + step + search.distinct_bound(next.prefix, u, remaining);
                if tight < next.bound {
                    if tight > f64::NEG_INFINITY {
                        heap.push(Frontier { bound: tight, tight: true, ..next });
                    }
                    continue;
                }
            }
        }
        if t + 2 == l {
            survivors.push((next.bound, search.path(next.prefix, u)));
            continue;
        }
        let id = search.prefixes.len() as u32;
        search.prefixes.push(Prefix {
            parent: next.prefix,
            poi: u,
            depth: parent.depth + 1,
            mask: parent.mask | search.bounds.bit(u as usize),
            score: parent.score + scorer.transition_score(v, u as usize) + scorer.poi_score(u as usize),
        });
        heap.extend(search.frontier(id, 0));
    }

    let routes = survivors.iter().map(|(_, path)| scorer.score_indices(path)).collect();
    Ok(finish(routes, k))
}

/// Exhaustive enumeration of every repeat-free route, scored with the same
/// arithmetic and sorted with the same tie-break as [`top_k_routes`].
pub fn brute_force_top_k(scorer: &RouteScorer<'_>, k: usize) -> Result<TopKResult> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let count = route_space_size(scorer.n_pois(), scorer.length());
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    struct Enumeration<'r, 'a> {
        scorer: &'r RouteScorer<'a>,
        k: usize,
        path: Vec<usize>,
        used: Vec<bool>,
        // worst retained route on top
        best: BinaryHeap<Ranked>,
    }

    impl Enumeration<'_, '_> {
        fn visit(&mut self) {
            if self.path.len() == self.scorer.length() {
                let route = self.scorer.score_indices(&self.path);
                if route.total > f64::NEG_INFINITY {
                    self.best.push(Ranked(route));
                    if self.best.len() > self.k {
                        self.best.pop();
                    }
                }
                return;
            }
            for v in 0..self.scorer.n_pois() {
                if !self.used[v] {
                    self.used[v] = true;
                    self.path.push(v);
                    self.visit();
                    self.path.pop();
                    self.used[v] = false;
                }
            }
        }
    }

    let mut search = Enumeration {
        scorer,
        k,
        path: vec![scorer.start()],
        used: vec![false; scorer.n_pois()],
        best: BinaryHeap::with_capacity(k + 1),
    };
    search.used[scorer.start()] = true;
    search.visit();
    Ok(finish(search.best.into_iter().map(|r| r.0).collect(), k))
}

/// Heap adapter: "greater" means worse under [`route_order`].
struct Ranked(ScoredRoute);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        route_order(&self.0, &other.0)
    }
}
