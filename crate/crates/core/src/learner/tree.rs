//! Binary CART trees grown on a bag of row indices.
//!
//! Numeric features split at midpoints between consecutive distinct values
//! (`x <= threshold` goes left); categorical features split one level against
//! the rest (the level goes left). A split is kept only if it strictly lowers
//! node impurity (Gini or variance). Among equally good splits the lowest
//! feature index wins, then the lowest threshold or level code.
//!
//! Gini comparisons are exact: the split score `sum_c L_c^2 / n_L + sum_c R_c^2 / n_R`
//! is compared as a rational with integer numerator and denominator.

use std::cmp::Ordering;

use crate::data::{Dataset, Feature, Target};
use crate::rng::Pcg32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    /// Rows with `x <= threshold` go left.
    LessEq(f64),
    /// Rows with this level go left.
    Level(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafValue {
    Class(u32),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(LeafValue),
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub mtry: usize,
    pub min_node_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Grows a tree on `bag` (row indices, duplicates allowed).
    pub fn grow(data: &Dataset, mut bag: Vec<usize>, params: GrowParams, rng: &mut Pcg32) -> Tree {
        assert!(!bag.is_empty(), "cannot grow a tree on an empty bag");
        let mut grower = Grower::new(data, params);
        let mut nodes = vec![Node::Leaf(LeafValue::Value(0.0))];
        let mut stack = vec![(0usize, 0usize, bag.len())];
        while let Some((id, lo, hi)) = stack.pop() {
            let samples = &mut bag[lo..hi];
            match grower.best_split(samples, rng) {
                None => nodes[id] = Node::Leaf(grower.leaf_value(samples)),
                Some((feature, rule)) => {
                    let n_left = stable_partition(samples, &mut grower.scratch_rows, |r| {
                        goes_left(&data.features[feature], rule, r)
                    });
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf(LeafValue::Value(0.0)));
                    nodes.push(Node::Leaf(LeafValue::Value(0.0)));
                    nodes[id] = Node::Split {
                        feature,
                        rule,
                        left,
                        right,
                    };
                    // Right pushed first so the left subtree is grown first.
                    stack.push((right, lo + n_left, hi));
                    stack.push((left, lo, lo + n_left));
                }
            }
        }
        Tree { nodes }
    }

    pub fn predict_row(&self, data: &Dataset, row: usize) -> LeafValue {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    id = if goes_left(&data.features[*feature], *rule, row) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_of(&self, data: &Dataset, row: usize) -> usize {
        let mut id = 0;
        while let Node::Split {
            feature,
            rule,
            left,
            right,
        } = &self.nodes[id]
        {
            id = if goes_left(&data.features[*feature], *rule, row) {
                *left
            } else {
                *right
            };
        }
        id
    }
}

#[inline]
pub(crate) fn goes_left(feature: &Feature, rule: SplitRule, row: usize) -> bool {
    match (feature, rule) {
        (Feature::Numeric(x), SplitRule::LessEq(t)) => x[row] <= t,
        (Feature::Categorical { codes, .. }, SplitRule::Level(l)) => codes[row] == l,
        _ => unreachable!("split rule does not match feature kind"),
    }
}

/// Moves rows satisfying `pred` to the front, preserving relative order on
/// both sides. Returns the number of rows moved to the front.
fn stable_partition(rows: &mut [usize], scratch: &mut Vec<usize>, pred: impl Fn(usize) -> bool) -> usize {
    scratch.clear();
    let mut n_left = 0;
    for i in 0..rows.len() {
        let r = rows[i];
        if pred(r) {
            rows[n_left] = r;
            n_left += 1;
        } else {
            scratch.push(r);
        }
    }
    rows[n_left..].copy_from_slice(scratch);
    n_left
}

/// A split score `num / den` compared exactly.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    fn compare(&self, other: &Ratio) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// `sl/nl + sr/nr` as a single fraction.
fn gini_score(sl: u64, nl: u64, sr: u64, nr: u64) -> Ratio {
    Ratio {
        num: u128::from(sl) * u128::from(nr) + u128::from(sr) * u128::from(nl),
        den: u128::from(nl) * u128::from(nr),
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    params: GrowParams,
    n_classes: usize,
    candidates: Vec<usize>,
    scratch_rows: Vec<usize>,
    pairs_class: Vec<(f64, u32)>,
    pairs_value: Vec<(f64, f64)>,
    counts: Vec<u64>,
    left_counts: Vec<u64>,
    level_counts: Vec<u64>,
    level_sums: Vec<(u64, f64)>,
}

impl<'a> Grower<'a> {
    fn new(data: &'a Dataset, params: GrowParams) -> Self {
        Grower {
            data,
            params,
            n_classes: data.target.n_classes(),
            candidates: (0..data.n_features()).collect(),
            scratch_rows: Vec::new(),
            pairs_class: Vec::new(),
            pairs_value: Vec::new(),
            counts: Vec::new(),
            left_counts: Vec::new(),
            level_counts: Vec::new(),
            level_sums: Vec::new(),
        }
    }

    fn leaf_value(&self, samples: &[usize]) -> LeafValue {
        match &self.data.target {
            Target::Classes { codes, .. } => {
                let mut counts = vec![0u64; self.n_classes];
                for &r in samples {
                    counts[codes[r] as usize] += 1;
                }
                LeafValue::Class(majority(&counts))
            }
            Target::Values(y) => {
                let mut sum = 0.0;
                for &r in samples {
                    sum += y[r];
                }
                LeafValue::Value(sum / samples.len() as f64)
            }
        }
    }

    /// Draws `mtry` distinct features (partial Fisher–Yates), ascending.
    fn draw_candidates(&mut self, rng: &mut Pcg32) -> Vec<usize> {
        let p = self.candidates.len();
        let m = self.params.mtry.min(p);
        for t in 0..m {
            let j = t + rng.index(p - t);
            self.candidates.swap(t, j);
        }
        let mut chosen = self.candidates[..m].to_vec();
        chosen.sort_unstable();
        chosen
    }

    fn best_split(&mut self, samples: &[usize], rng: &mut Pcg32) -> Option<(usize, SplitRule)> {
        if samples.len() < self.params.min_node_size || samples.len() < 2 {
            return None;
        }
        match &self.data.target {
            Target::Classes { codes, .. } => {
                let mut counts = std::mem::take(&mut self.counts);
                counts.clear();
                counts.resize(self.n_classes, 0);
                for &r in samples {
                    counts[codes[r] as usize] += 1;
                }
                let n = samples.len() as u64;
                if counts.contains(&n) {
                    self.counts = counts;
                    return None;
                }
                let parent = Ratio {
                    num: counts.iter().map(|&c| u128::from(c * c)).sum(),
                    den: u128::from(n),
                };
                let total_sq: u64 = counts.iter().map(|&c| c * c).sum();
                self.counts = counts;
                let feats = self.draw_candidates(rng);
                let mut best: Option<(usize, SplitRule)> = None;
                let mut best_score = parent;
                for f in feats {
                    if let Some((rule, score)) = self.best_gini_split(f, samples, codes, total_sq) {
                        if score.compare(&best_score) == Ordering::Greater {
                            best_score = score;
                            best = Some((f, rule));
                        }
                    }
                }
                best
            }
            Target::Values(y) => {
                let first = y[samples[0]];
                if samples.iter().all(|&r| y[r] == first) {
                    return None;
                }
                let n = samples.len() as f64;
                let sum: f64 = samples.iter().map(|&r| y[r]).sum();
                let mean = sum / n;
                let sst: f64 = samples.iter().map(|&r| (y[r] - mean) * (y[r] - mean)).sum();
                let parent = sum * sum / n;
                let min_gain = 1e-10 * sst;
                let feats = self.draw_candidates(rng);
                let mut best: Option<(usize, SplitRule)> = None;
                let mut best_score = parent + min_gain;
                for f in feats {
                    if let Some((rule, score)) = self.best_variance_split(f, samples, y, sum) {
                        if score > best_score {
                            best_score = score;
                            best = Some((f, rule));
                        }
                    }
                }
                best
            }
        }
    }

    fn best_gini_split(
        &mut self,
        feature: usize,
        samples: &[usize],
        codes: &[u32],
        total_sq: u64,
    ) -> Option<(SplitRule, Ratio)> {
        let n = samples.len() as u64;
        let k = self.n_classes;
        match &self.data.features[feature] {
            Feature::Numeric(x) => {
                let pairs = &mut self.pairs_class;
                pairs.clear();
                pairs.extend(samples.iter().map(|&r| (x[r], codes[r])));
                pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                if pairs[0].0 == pairs[pairs.len() - 1].0 {
                    return None;
                }
                let left = &mut self.left_counts;
                left.clear();
                left.resize(k, 0);
                // `counts` holds the node's class counts.
                let mut right_counts = self.counts.clone();
                let (mut sl, mut sr) = (0u64, total_sq);
                let mut best: Option<(SplitRule, Ratio)> = None;
                for i in 0..pairs.len() - 1 {
                    let c = pairs[i].1 as usize;
                    sl += 2 * left[c] + 1;
                    left[c] += 1;
                    sr -= 2 * right_counts[c] - 1;
                    right_counts[c] -= 1;
                    let (a, b) = (pairs[i].0, pairs[i + 1].0);
                    if a < b {
                        let nl = (i + 1) as u64;
                        let score = gini_score(sl, nl, sr, n - nl);
                        if best.as_ref().is_none_or(|(_, s)| score.compare(s) == Ordering::Greater) {
                            best = Some((SplitRule::LessEq(midpoint(a, b)), score));
                        }
                    }
                }
                best
            }
            Feature::Categorical { levels, codes: lv } => {
                let n_levels = levels.len();
                let table = &mut self.level_counts;
                table.clear();
                table.resize(n_levels * k, 0);
                for &r in samples {
                    table[lv[r] as usize * k + codes[r] as usize] += 1;
                }
                let node = &self.counts;
                let mut best: Option<(SplitRule, Ratio)> = None;
                for l in 0..n_levels {
                    let row = &table[l * k..(l + 1) * k];
                    let nl: u64 = row.iter().sum();
                    if nl == 0 || nl == n {
                        continue;
                    }
                    let sl: u64 = row.iter().map(|&c| c * c).sum();
                    let sr: u64 = row.iter().zip(node).map(|(&c, &t)| (t - c) * (t - c)).sum();
                    let score = gini_score(sl, nl, sr, n - nl);
                    if best.as_ref().is_none_or(|(_, s)| score.compare(s) == Ordering::Greater) {
                        best = Some((SplitRule::Level(l as u32), score));
                    }
                }
                best
            }
        }
    }

    fn best_variance_split(
        &mut self,
        feature: usize,
        samples: &[usize],
        y: &[f64],
        total: f64,
    ) -> Option<(SplitRule, f64)> {
        let n = samples.len();
        match &self.data.features[feature] {
            Feature::Numeric(x) => {
                let pairs = &mut self.pairs_value;
                pairs.clear();
                pairs.extend(samples.iter().map(|&r| (x[r], y[r])));
                pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                if pairs[0].0 == pairs[n - 1].0 {
                    return None;
                }
                let mut sl = 0.0;
                let mut best: Option<(SplitRule, f64)> = None;
                for i in 0..n - 1 {
                    sl += pairs[i].1;
                    let (a, b) = (pairs[i].0, pairs[i + 1].0);
                    if a < b {
                        let nl = (i + 1) as f64;
                        let sr = total - sl;
                        let score = sl * sl / nl + sr * sr / (n as f64 - nl);
                        if best.is_none_or(|(_, s)| score > s) {
                            best = Some((SplitRule::LessEq(midpoint(a, b)), score));
                        }
                    }
                }
                best
            }
            Feature::Categorical { levels, codes: lv } => {
                let sums = &mut self.level_sums;
                sums.clear();
                sums.resize(levels.len(), (0, 0.0));
                for &r in samples {
                    let e = &mut sums[lv[r] as usize];
                    e.0 += 1;
                    e.1 += y[r];
                }
                let mut best: Option<(SplitRule, f64)> = None;
                for (l, &(nl, sl)) in sums.iter().enumerate() {
                    if nl == 0 || nl as usize == n {
                        continue;
                    }
                    let nl = nl as f64;
                    let sr = total - sl;
                    let score = sl * sl / nl + sr * sr / (n as f64 - nl);
                    if best.is_none_or(|(_, s)| score > s) {
                        best = Some((SplitRule::Level(l as u32), score));
                    }
                }
                best
            }
        }
    }
}

/// Midpoint of `a < b` that is strictly below `b`.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    if m < b && m >= a {
        m
    } else {
        a
    }
}

/// Most frequent class; ties go to the smallest code.
pub(crate) fn majority(counts: &[u64]) -> u32 {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best as u32
}
