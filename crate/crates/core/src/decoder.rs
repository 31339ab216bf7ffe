//! Label decoding: per-token marginal argmax, or exact segment-level
//! dynamic programs that trade mislabeling cost against the number of
//! distinct segments copied from the neighbors.
//!
//! Every contiguous label subsequence of the neighbors is stored in a trie
//! ([`SegmentDict`]). The programs minimize
//!
//! ```text
//! J(t) = min_{k, z ∈ dict, |z| = k}  J(t-k) + c + Σ_j cost(t-k+j, z_j),   J(0) = 0
//! ```
//!
//! over states `(segment start, trie node)`. With known gold labels the
//! per-position cost is a 0/1 mismatch; with model marginals it is the
//! expected mislabeling `1 - p(y_j = z_j)`.
//!
//! Ties are broken deterministically: fewer segments first, then the
//! lexicographically smallest label-id sequence.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::copy_model::MarginalMatrix;
use crate::corpus::LabelVocab;
use crate::error::{arg, Error, Result};
use crate::matrix::Matrix;
use crate::retrieval::NeighborSet;
use crate::scalar::Real;

pub const DEFAULT_MAX_SEGMENT: usize = 64;

/// Brute-force limits: sentence length and number of enumerated labelings.
pub const BRUTE_FORCE_MAX_LEN: usize = 12;
pub const BRUTE_FORCE_MAX_COMBINATIONS: f64 = 2e6;

#[derive(Debug, Clone)]
struct Node {
    label: usize,
    depth: usize,
    parent: usize,
    /// `(label, node)` sorted by label.
    children: Vec<(usize, usize)>,
    /// `(neighbor m, start offset)` of the first occurrence of this path.
    exemplar: (usize, usize),
}

/// Prefix trie of every distinct contiguous label subsequence (up to
/// `l_max` long) of a set of label sequences. Node 0 is the empty root.
#[derive(Debug, Clone)]
pub struct SegmentDict {
    nodes: Vec<Node>,
    l_max: usize,
    max_label: Option<usize>,
}

impl SegmentDict {
    pub fn from_sequences<'a>(sequences: impl IntoIterator<Item = &'a [usize]>, l_max: usize) -> Self {
        let root = Node { label: usize::MAX, depth: 0, parent: 0, children: Vec::new(), exemplar: (0, 0) };
        let mut dict = Self { nodes: vec![root], l_max, max_label: None };
        for (m, seq) in sequences.into_iter().enumerate() {
            for start in 0..seq.len() {
                let end = seq.len().min(start + l_max);
                let mut node = 0;
                for &label in &seq[start..end] {
                    node = dict.child_or_insert(node, label, (m, start));
                }
            }
        }
        dict
    }

    fn child_or_insert(&mut self, node: usize, label: usize, exemplar: (usize, usize)) -> usize {
        match self.nodes[node].children.binary_search_by_key(&label, |&(l, _)| l) {
            Ok(i) => self.nodes[node].children[i].1,
            Err(i) => {
                let id = self.nodes.len();
                let depth = self.nodes[node].depth + 1;
                self.nodes.push(Node { label, depth, parent: node, children: Vec::new(), exemplar });
                self.nodes[node].children.insert(i, (label, id));
                self.max_label = Some(self.max_label.map_or(label, |m| m.max(label)));
                id
            }
        }
    }

    /// Number of nodes including the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes[node].children.iter().map(|&(_, c)| c)
    }

    pub fn label(&self, node: usize) -> usize {
        self.nodes[node].label
    }

    pub fn depth(&self, node: usize) -> usize {
        self.nodes[node].depth
    }

    pub fn exemplar(&self, node: usize) -> (usize, usize) {
        self.nodes[node].exemplar
    }

    /// Label sequence spelled by the root-to-`node` path.
    pub fn path(&self, mut node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes[node].depth);
        while node != 0 {
            out.push(self.nodes[node].label);
            node = self.nodes[node].parent;
        }
        out.reverse();
        out
    }

    /// Node id of `seq`, if stored.
    pub fn find(&self, seq: &[usize]) -> Option<usize> {
        let mut node = 0;
        for &label in seq {
            let ch = &self.nodes[node].children;
            node = ch[ch.binary_search_by_key(&label, |&(l, _)| l).ok()?].1;
        }
        Some(node)
    }

    /// Non-root nodes grouped by depth (index 0 is empty).
    pub fn nodes_by_depth(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.max_depth() + 1];
        for (id, n) in self.nodes.iter().enumerate().skip(1) {
            out[n.depth].push(id);
        }
        out
    }

    fn label_width(&self) -> usize {
        self.max_label.map_or(0, |m| m + 1)
    }
}

pub fn build_segment_dict<T: Real>(ns: &NeighborSet<T>, l_max: usize) -> SegmentDict {
    SegmentDict::from_sequences(ns.label_sequences(), l_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DPConfig<T> {
    /// Cost charged per segment.
    pub c: T,
    /// Longest segment the program may use.
    pub l_max: usize,
    /// Skip trie subtrees that are provably dominated. Results are identical
    /// with and without pruning.
    pub prune: bool,
}

impl<T: Real> DPConfig<T> {
    pub fn new(c: T) -> Self {
        Self { c, l_max: DEFAULT_MAX_SEGMENT, prune: false }
    }

    fn validate(&self) -> Result<()> {
        if !self.c.is_finite() || self.c < T::zero() {
            return arg(format!("segment cost {} must be finite and non-negative", self.c));
        }
        if self.l_max == 0 {
            return arg("maximum segment length must be positive");
        }
        Ok(())
    }
}

/// One copied segment: `len` labels starting at `start`, taken from
/// neighbor `neighbor` at token offset `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub neighbor: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult<T> {
    pub labels: Vec<usize>,
    pub segments: Vec<Segment>,
    /// `segments.len() · c + cost_term`.
    pub objective: T,
    /// Accumulated per-token cost (mismatches or expected mislabelings).
    pub cost_term: T,
}

impl<T: Real> DecodeResult<T> {
    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// Recomputes the objective from the labels and a cost source.
    pub fn recompute_objective(&self, c: T, costs: &CostSource<'_, T>) -> T {
        let term: T = self.labels.iter().enumerate().map(|(j, &l)| costs.cost(j, l)).sum();
        T::lit(self.segments.len() as f64) * c + term
    }

    /// True when segments tile `[0, T)` in order and every segment's labels
    /// equal its exemplar's slice of the neighbor labels.
    pub fn provenance_is_sound(&self, neighbor_labels: &[&[usize]]) -> bool {
        let mut pos = 0;
        for seg in &self.segments {
            if seg.start != pos || seg.len == 0 {
                return false;
            }
            let Some(src) = neighbor_labels.get(seg.neighbor) else { return false };
            if seg.offset + seg.len > src.len()
                || self.labels.get(seg.start..seg.start + seg.len) != Some(&src[seg.offset..seg.offset + seg.len])
            {
                return false;
            }
            pos += seg.len;
        }
        pos == self.labels.len()
    }
}

/// Per-position labeling cost.
#[derive(Debug, Clone, Copy)]
pub enum CostSource<'a, T> {
    /// 1 when the label differs from the gold label, else 0.
    Gold(&'a [usize]),
    /// `1 - p(y_j = label)`; types absent from the marginals cost 1.
    Marginals(&'a MarginalMatrix<T>),
}

impl<T: Real> CostSource<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            CostSource::Gold(g) => g.len(),
            CostSource::Marginals(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cost(&self, pos: usize, label: usize) -> T {
        match self {
            CostSource::Gold(g) => {
                if g[pos] == label {
                    T::zero()
                } else {
                    T::one()
                }
            }
            CostSource::Marginals(m) => T::one() - m.prob(pos, label),
        }
    }

    /// Dense `T × width` cost table for the labels the dictionary can emit.
    fn table(&self, width: usize) -> Matrix<T> {
        let mut out = Matrix::zeros(self.len(), width);
        for j in 0..self.len() {
            for l in 0..width {
                out.set(j, l, self.cost(j, l));
            }
        }
        out
    }
}

fn tie_tolerance<T: Real>(a: T, b: T) -> T {
    T::epsilon() * T::lit(64.0) * T::one().max(a.abs()).max(b.abs())
}

/// Total order on candidate solutions: objective (with a rounding tolerance),
/// then segment count, then labels.
fn compare<T: Real>(a: (T, usize, &[usize]), b: (T, usize, &[usize])) -> Ordering {
    if (a.0 - b.0).abs() > tie_tolerance(a.0, b.0) {
        return a.0.partial_cmp(&b.0).unwrap();
    }
    a.1.cmp(&b.1).then_with(|| a.2.cmp(b.2))
}

#[derive(Clone)]
struct Best<T> {
    objective: T,
    cost: T,
    segments: usize,
    labels: Vec<usize>,
    back: (usize, usize),
}

fn check_inputs<T: Real>(dict: &SegmentDict, cfg: &DPConfig<T>, len: usize) -> Result<()> {
    cfg.validate()?;
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if len == 0 {
        return arg("cannot decode an empty sentence");
    }
    Ok(())
}

fn run_dp<T: Real>(costs: &CostSource<'_, T>, dict: &SegmentDict, cfg: &DPConfig<T>) -> Result<DecodeResult<T>> {
    let n = costs.len();
    check_inputs(dict, cfg, n)?;
    let table = costs.table(dict.label_width());
    let max_len = cfg.l_max.min(dict.l_max());
    let mut best: Vec<Option<Best<T>>> = vec![None; n + 1];
    best[0] = Some(Best { objective: T::zero(), cost: T::zero(), segments: 0, labels: Vec::new(), back: (0, 0) });

    // Margin above the largest tie tolerance any objective can reach, so
    // pruning never removes a solution the tie-break could still prefer.
    let bound = T::lit(n as f64) * (cfg.c + T::one());
    let prune_margin = T::lit(4.0) * tie_tolerance(bound, bound);

    // DFS frame: (node, position after node, running objective, running cost)
    let mut stack: Vec<(usize, usize, T, T)> = Vec::new();
    let mut path: Vec<usize> = Vec::new();
    for start in 0..n {
        let Some(base) = best[start].clone() else { continue };
        stack.clear();
        stack.push((0, start, base.objective + cfg.c, base.cost));
        path.clear();
        while let Some((node, pos, obj, cost)) = stack.pop() {
            let depth = dict.depth(node);
            path.truncate(depth.saturating_sub(1));
            if node != 0 {
                path.push(dict.label(node));
                let segments = base.segments + 1;
                let replace = match &best[pos] {
                    None => true,
                    Some(cur) => {
                        // every extension is matched by a fresh segment after `cur`
                        if cfg.prune && obj > cur.objective + cfg.c + prune_margin {
                            continue;
                        }
                        if (obj - cur.objective).abs() > tie_tolerance(obj, cur.objective) {
                            obj < cur.objective
                        } else {
                            let mut labels = base.labels.clone();
                            labels.extend_from_slice(&path);
                            compare((obj, segments, &labels), (cur.objective, cur.segments, &cur.labels)) == Ordering::Less
                        }
                    }
                };
                if replace {
                    let mut labels = base.labels.clone();
                    labels.extend_from_slice(&path);
                    best[pos] = Some(Best { objective: obj, cost, segments, labels, back: (start, node) });
                }
            }
            if pos == n || depth == max_len {
                continue;
            }
            // push in reverse so the smallest label is explored first
            let children: Vec<usize> = dict.children(node).collect();
            for &child in children.iter().rev() {
                let c = table.get(pos, dict.label(child));
                stack.push((child, pos + 1, obj + c, cost + c));
            }
        }
    }

    let fin = best[n].clone().expect("every position is reachable from a non-empty dictionary");
    let mut segments = Vec::with_capacity(fin.segments);
    let mut end = n;
    while end > 0 {
        let (start, node) = best[end].as_ref().unwrap().back;
        let (neighbor, offset) = dict.exemplar(node);
        segments.push(Segment { start, len: end - start, neighbor, offset });
        end = start;
    }
    segments.reverse();
    Ok(DecodeResult { labels: fin.labels, segments, objective: fin.objective, cost_term: fin.cost })
}

/// Fewest-mistakes reconstruction of known labels from dictionary segments.
pub fn dp_reconstruct<T: Real>(gold: &[usize], dict: &SegmentDict, cfg: &DPConfig<T>) -> Result<DecodeResult<T>> {
    run_dp(&CostSource::Gold(gold), dict, cfg)
}

/// Prediction minimizing `c · #segments` plus the expected number of mislabelings.
pub fn dp_decode_expected<T: Real>(mm: &MarginalMatrix<T>, dict: &SegmentDict, cfg: &DPConfig<T>) -> Result<DecodeResult<T>> {
    run_dp(&CostSource::Marginals(mm), dict, cfg)
}

/// Per-token argmax of the marginals; ties go to the lowest type id.
pub fn predict_marginal<T: Real>(mm: &MarginalMatrix<T>) -> Vec<usize> {
    (0..mm.rows())
        .map(|t| {
            let row = mm.probs().row(t);
            let mut best = (mm.types()[0], row[0]);
            for (&ty, &p) in mm.types().iter().zip(row).skip(1) {
                if p > best.1 || (p == best.1 && ty < best.0) {
                    best = (ty, p);
                }
            }
            best.0
        })
        .collect()
}

/// Left-to-right greedy segmentation: at each position take the dictionary
/// sequence with the fewest mismatches, preferring longer sequences and then
/// smaller labels on ties. Feasible, not optimal.
pub fn greedy_reconstruct<T: Real>(gold: &[usize], dict: &SegmentDict, cfg: &DPConfig<T>) -> Result<DecodeResult<T>> {
    let costs = CostSource::Gold(gold);
    check_inputs(dict, cfg, gold.len())?;
    let n = gold.len();
    let max_len = cfg.l_max.min(dict.l_max());
    let mut labels = Vec::with_capacity(n);
    let mut segments = Vec::new();
    let mut objective = T::zero();
    let mut cost_term = T::zero();
    let mut pos = 0;
    while pos < n {
        // (mismatches, node, path)
        let mut choice: Option<(T, usize, Vec<usize>)> = None;
        let mut stack = vec![(0usize, T::zero())];
        while let Some((node, mism)) = stack.pop() {
            if node != 0 {
                let path = dict.path(node);
                let better = match &choice {
                    None => true,
                    Some((m, _, p)) => mism < *m || (mism == *m && (path.len() > p.len() || (path.len() == p.len() && path < *p))),
                };
                if better {
                    choice = Some((mism, node, path));
                }
            }
            let depth = dict.depth(node);
            if pos + depth < n && depth < max_len {
                for child in dict.children(node) {
                    stack.push((child, mism + costs.cost(pos + depth, dict.label(child))));
                }
            }
        }
        let (_, node, path) = choice.expect("non-empty dictionary");
        let (neighbor, offset) = dict.exemplar(node);
        segments.push(Segment { start: pos, len: path.len(), neighbor, offset });
        objective += cfg.c;
        for (j, &l) in path.iter().enumerate() {
            let c = costs.cost(pos + j, l);
            objective += c;
            cost_term += c;
        }
        labels.extend_from_slice(&path);
        pos += path.len();
    }
    Ok(DecodeResult { labels, segments, objective, cost_term })
}

/// Exhaustive minimum over every segmentation and every dictionary sequence
/// for each segment, under the same tie-break as the dynamic programs.
/// Refuses inputs longer than [`BRUTE_FORCE_MAX_LEN`] or with more than
/// [`BRUTE_FORCE_MAX_COMBINATIONS`] labelings.
pub fn brute_force_decode<T: Real>(costs: &CostSource<'_, T>, dict: &SegmentDict, cfg: &DPConfig<T>) -> Result<DecodeResult<T>> {
    let n = costs.len();
    check_inputs(dict, cfg, n)?;
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::GuardExceeded(format!("length {n} exceeds {BRUTE_FORCE_MAX_LEN}")));
    }
    let max_len = cfg.l_max.min(dict.l_max());
    let by_depth = dict.nodes_by_depth();
    let width = |k: usize| if k <= max_len { by_depth.get(k).map_or(0, Vec::len) as f64 } else { 0.0 };
    let mut count = vec![0f64; n + 1];
    count[0] = 1.0;
    for t in 1..=n {
        count[t] = (1..=t).map(|k| count[t - k] * width(k)).sum();
    }
    if count[n] > BRUTE_FORCE_MAX_COMBINATIONS {
        return Err(Error::GuardExceeded(format!("{} labelings exceed {BRUTE_FORCE_MAX_COMBINATIONS}", count[n])));
    }
    let paths: Vec<Vec<(usize, Vec<usize>)>> = by_depth
        .iter()
        .map(|nodes| nodes.iter().map(|&id| (id, dict.path(id))).collect())
        .collect();

    // objective, cost term, labels, (neighbor, offset) per segment
    type Best<T> = (T, T, Vec<usize>, Vec<(usize, usize)>);

    struct Search<'a, T> {
        costs: &'a CostSource<'a, T>,
        c: T,
        n: usize,
        max_len: usize,
        paths: &'a [Vec<(usize, Vec<usize>)>],
        labels: Vec<usize>,
        chosen: Vec<(usize, usize)>,
        best: Option<Best<T>>,
    }

    impl<T: Real> Search<'_, T> {
        fn go(&mut self, pos: usize, obj: T, cost: T) {
            if pos == self.n {
                let better = match &self.best {
                    None => true,
                    Some((bo, _, bl, bs)) => compare((obj, self.chosen.len(), &self.labels), (*bo, bs.len(), bl)) == Ordering::Less,
                };
                if better {
                    self.best = Some((obj, cost, self.labels.clone(), self.chosen.clone()));
                }
                return;
            }
            for k in 1..=(self.n - pos).min(self.max_len).min(self.paths.len() - 1) {
                for (node, path) in &self.paths[k] {
                    let mut o = obj + self.c;
                    let mut c = cost;
                    for (j, &l) in path.iter().enumerate() {
                        let v = self.costs.cost(pos + j, l);
                        o += v;
                        c += v;
                    }
                    self.labels.extend_from_slice(path);
                    self.chosen.push((pos, *node));
                    self.go(pos + k, o, c);
                    self.chosen.pop();
                    self.labels.truncate(pos);
                }
            }
        }
    }

    let mut search = Search { costs, c: cfg.c, n, max_len, paths: &paths, labels: Vec::new(), chosen: Vec::new(), best: None };
    search.go(0, T::zero(), T::zero());
    let (objective, cost_term, labels, chosen) = search.best.expect("non-empty dictionary covers every length");
    let segments = chosen
        .iter()
        .map(|&(start, node)| {
            let (neighbor, offset) = dict.exemplar(node);
            Segment { start, len: dict.depth(node), neighbor, offset }
        })
        .collect();
    Ok(DecodeResult { labels, segments, objective, cost_term })
}

/// One line per segment:
/// `seg <start> <len> from=neighbor:<m> offset:<k> labels=<l1,...>`.
pub fn format_provenance<T: Real>(result: &DecodeResult<T>, vocab: &LabelVocab) -> String {
    let mut out = String::new();
    for seg in &result.segments {
        let labels: Vec<&str> = result.labels[seg.start..seg.start + seg.len].iter().map(|&l| vocab.label(l)).collect();
        writeln!(
            out,
            "seg {} {} from=neighbor:{} offset:{} labels={}",
            seg.start,
            seg.len,
            seg.neighbor,
            seg.offset,
            labels.join(",")
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn dict(seqs: &[&[usize]], l_max: usize) -> SegmentDict {
        SegmentDict::from_sequences(seqs.iter().copied(), l_max)
    }

    fn mm(types: Vec<usize>, rows: Vec<Vec<f64>>) -> MarginalMatrix<f64> {
        let w = types.len();
        MarginalMatrix::new(types, Matrix::from_rows(w, rows).unwrap()).unwrap()
    }

    #[test]
    fn dictionary_examples() {
        let d = dict(&[&[0]], 64);
        assert_eq!(d.node_count(), 2);
        let d = dict(&[&[0, 1]], 64);
        assert_eq!(d.node_count(), 4);
        for p in [&[0][..], &[1], &[0, 1]] {
            assert!(d.find(p).is_some());
        }
        assert!(d.find(&[1, 0]).is_none());
        let capped = dict(&[&[0, 1, 2]], 2);
        assert!(capped.find(&[0, 1, 2]).is_none());
        assert_eq!(capped.max_depth(), 2);
    }

    #[test]
    fn dictionary_matches_substring_set() {
        let seqs: Vec<Vec<usize>> = vec![vec![0, 1, 0, 1, 2], vec![2, 2, 0], vec![1, 0, 1]];
        for l_max in 1..6 {
            let d = SegmentDict::from_sequences(seqs.iter().map(Vec::as_slice), l_max);
            let mut set = BTreeSet::new();
            for s in &seqs {
                for i in 0..s.len() {
                    for j in i + 1..=s.len().min(i + l_max) {
                        set.insert(s[i..j].to_vec());
                    }
                }
            }
            assert_eq!(d.node_count(), set.len() + 1);
            for id in 1..d.node_count() {
                let (m, off) = d.exemplar(id);
                let p = d.path(id);
                assert_eq!(&seqs[m][off..off + p.len()], p.as_slice());
            }
        }
    }

    #[test]
    fn verbatim_gold_is_one_segment() {
        let d = dict(&[&[3, 1, 2], &[0, 1, 2, 3, 0]], 64);
        for c in [0.1, 0.4, 5.0] {
            let r = dp_reconstruct(&[0, 1, 2, 3, 0], &d, &DPConfig::new(c)).unwrap();
            assert_eq!(r.num_segments(), 1);
            assert_eq!(r.cost_term, 0.0);
            assert_eq!(r.objective, c);
            assert_eq!(r.segments[0], Segment { start: 0, len: 5, neighbor: 1, offset: 0 });
            let g = greedy_reconstruct(&[0, 1, 2, 3, 0], &d, &DPConfig::new(c)).unwrap();
            assert_eq!(g, r);
        }
    }

    #[test]
    fn empty_dictionary_and_bad_config() {
        let d = dict(&[], 64);
        assert!(matches!(dp_reconstruct(&[0], &d, &DPConfig::new(0.5)), Err(Error::EmptyDictionary)));
        assert!(greedy_reconstruct(&[0], &d, &DPConfig::new(0.5)).is_err());
        let d = dict(&[&[0]], 64);
        assert!(dp_reconstruct(&[0], &d, &DPConfig::new(-1.0)).is_err());
        assert!(dp_reconstruct(&[0], &d, &DPConfig::new(f64::NAN)).is_err());
    }

    #[test]
    fn single_token_brute_force() {
        let d = dict(&[&[4]], 64);
        let r = brute_force_decode(&CostSource::Gold(&[4]), &d, &DPConfig::new(0.7)).unwrap();
        assert_eq!(r.labels, vec![4]);
        assert_eq!(r.objective, 0.7);
        let guard = brute_force_decode(&CostSource::Gold(&[4; 13]), &d, &DPConfig::new(0.7));
        assert!(matches!(guard, Err(Error::GuardExceeded(_))));
    }

    #[test]
    fn greedy_uses_more_segments_than_dp() {
        // a gold type absent from the neighbors breaks greedy's exact matches
        let d = dict(&[&[0, 1, 2]], 64);
        let gold = [0, 9, 2];
        let cfg = DPConfig::new(0.5);
        let dp = dp_reconstruct(&gold, &d, &cfg).unwrap();
        let greedy = greedy_reconstruct(&gold, &d, &cfg).unwrap();
        assert_eq!(dp.num_segments(), 1);
        assert_eq!(greedy.num_segments(), 2);
        assert!(greedy.objective > dp.objective);
    }

    #[test]
    fn predict_marginal_examples() {
        assert_eq!(predict_marginal(&mm(vec![2], vec![vec![1.0], vec![1.0]])), vec![2, 2]);
        assert_eq!(predict_marginal(&mm(vec![0, 1], vec![vec![0.3, 0.7]])), vec![1]);
        assert_eq!(predict_marginal(&mm(vec![5, 2], vec![vec![0.5, 0.5]])), vec![2]);
    }

    #[test]
    fn absent_types_cost_one() {
        let m = mm(vec![0], vec![vec![1.0]]);
        assert_eq!(CostSource::Marginals(&m).cost(0, 3), 1.0);
        let d = dict(&[&[0, 3]], 64);
        let r = dp_decode_expected(&m, &d, &DPConfig::new(0.0)).unwrap();
        assert_eq!(r.labels, vec![0]);
    }

    #[test]
    fn provenance_dump_format() {
        let d = dict(&[&[1, 0], &[0, 0, 1]], 64);
        // [0,0,1] + [1] is the only two-segment exact cover
        let r = dp_reconstruct(&[0, 0, 1, 1], &d, &DPConfig::new(1.0)).unwrap();
        let vocab = LabelVocab::from_types(["O".to_string(), "B-PER".to_string()]).unwrap();
        let dump = format_provenance(&r, &vocab);
        assert_eq!(dump, "seg 0 3 from=neighbor:1 offset:0 labels=O,O,B-PER\nseg 3 1 from=neighbor:0 offset:0 labels=B-PER\n");
        assert!(r.provenance_is_sound(&[&[1, 0], &[0, 0, 1]]));
    }

    #[test]
    fn works_in_single_precision() {
        let d = dict(&[&[0, 1, 1], &[1, 0]], 64);
        let m = MarginalMatrix::new(vec![0, 1], Matrix::from_rows(2, vec![vec![0.9f32, 0.1], vec![0.4, 0.6], vec![0.2, 0.8]]).unwrap()).unwrap();
        let cfg = DPConfig::new(0.4f32);
        let dp = dp_decode_expected(&m, &d, &cfg).unwrap();
        let bf = brute_force_decode(&CostSource::Marginals(&m), &d, &cfg).unwrap();
        assert!((dp.objective - bf.objective).abs() < 1e-6);
        assert_eq!(dp.labels, vec![0, 1, 1]);
    }
}
