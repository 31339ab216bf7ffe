//! Token-level label copying.
//!
//! The probability that input token `t` copies the label of flat neighbor
//! token `i` is `softmax_i(x_t · x'_i)`, normalized over every label token of
//! every neighbor. Marginalizing over neighbor tokens that share a label type
//! gives per-type probabilities; the training loss is the negative log of the
//! gold type's marginal.

use crate::error::{arg, Result};
use crate::matrix::Matrix;
use crate::retrieval::NeighborSet;
use crate::scalar::{dot, log_sum_exp, Real};

/// `T × N_total` inner products `x_t · x'_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyLogits<T>(pub Matrix<T>);

pub fn copy_logits<T: Real>(x: &Matrix<T>, ns: &NeighborSet<T>) -> Result<CopyLogits<T>> {
    if x.cols() != ns.dim() {
        return arg(format!("input width {} does not match neighbor width {}", x.cols(), ns.dim()));
    }
    let flat = ns.flat_embeddings();
    let mut out = Matrix::zeros(x.rows(), flat.rows());
    for t in 0..x.rows() {
        let xt = x.row(t);
        for (i, o) in out.row_mut(t).iter_mut().enumerate() {
            *o = dot(xt, flat.row(i));
        }
    }
    Ok(CopyLogits(out))
}

/// Row-normalized copy distribution, held as log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyPosterior<T> {
    log_probs: Matrix<T>,
}

impl<T: Real> CopyPosterior<T> {
    pub fn log_probs(&self) -> &Matrix<T> {
        &self.log_probs
    }

    pub fn prob(&self, t: usize, i: usize) -> T {
        self.log_probs.get(t, i).exp()
    }

    pub fn probs(&self) -> Matrix<T> {
        self.log_probs.map(T::exp)
    }

    pub fn rows(&self) -> usize {
        self.log_probs.rows()
    }

    pub fn cols(&self) -> usize {
        self.log_probs.cols()
    }
}

pub fn copy_posterior<T: Real>(logits: &CopyLogits<T>) -> Result<CopyPosterior<T>> {
    let l = &logits.0;
    if l.cols() == 0 {
        return arg("copy posterior over an empty neighbor set");
    }
    let mut log_probs = l.clone();
    for t in 0..l.rows() {
        let row = log_probs.row_mut(t);
        let lse = log_sum_exp(row.iter().copied());
        row.iter_mut().for_each(|v| *v -= lse);
    }
    Ok(CopyPosterior { log_probs })
}

/// Per-token distribution over the label types present in the neighbor set.
/// Column `c` holds type `types[c]`; columns follow first appearance in the
/// flattened neighbor labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalMatrix<T> {
    types: Vec<usize>,
    probs: Matrix<T>,
}

impl<T: Real> MarginalMatrix<T> {
    pub fn new(types: Vec<usize>, probs: Matrix<T>) -> Result<Self> {
        if types.len() != probs.cols() {
            return arg(format!("{} type columns for a matrix of width {}", types.len(), probs.cols()));
        }
        let mut sorted = types.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != types.len() {
            return arg("marginal type columns must be distinct");
        }
        Ok(Self { types, probs })
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    pub fn probs(&self) -> &Matrix<T> {
        &self.probs
    }

    pub fn rows(&self) -> usize {
        self.probs.rows()
    }

    pub fn column_of(&self, label: usize) -> Option<usize> {
        self.types.iter().position(|&t| t == label)
    }

    /// `p(y_t = label)`; zero for types absent from the neighbors.
    pub fn prob(&self, t: usize, label: usize) -> T {
        self.column_of(label).map_or(T::zero(), |c| self.probs.get(t, c))
    }
}

/// Column index per flat position, and the type of each column.
fn group_by_type(flat_labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut types: Vec<usize> = Vec::new();
    let groups = flat_labels
        .iter()
        .map(|&l| match types.iter().position(|&t| t == l) {
            Some(c) => c,
            None => {
                types.push(l);
                types.len() - 1
            }
        })
        .collect();
    (types, groups)
}

pub fn marginal_over_types<T: Real>(p: &CopyPosterior<T>, ns: &NeighborSet<T>) -> Result<MarginalMatrix<T>> {
    if p.cols() != ns.total_tokens() {
        return arg(format!("posterior width {} does not match {} neighbor tokens", p.cols(), ns.total_tokens()));
    }
    let (types, groups) = group_by_type(ns.flat_labels());
    let mut probs = Matrix::zeros(p.rows(), types.len());
    let mut buckets: Vec<Vec<T>> = vec![Vec::new(); types.len()];
    for t in 0..p.rows() {
        buckets.iter_mut().for_each(Vec::clear);
        for (i, &lp) in p.log_probs().row(t).iter().enumerate() {
            buckets[groups[i]].push(lp);
        }
        for (c, b) in buckets.iter().enumerate() {
            probs.set(t, c, log_sum_exp(b.iter().copied()).exp());
        }
    }
    MarginalMatrix::new(types, probs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<T> {
    /// Sum of the non-skipped per-token values.
    pub nll: T,
    /// `None` marks a token whose gold type is absent from the neighbors.
    pub per_token: Vec<Option<T>>,
    pub skipped: usize,
}

impl<T: Real> LossReport<T> {
    pub fn scored_tokens(&self) -> usize {
        self.per_token.len() - self.skipped
    }
}

fn check_gold<T: Real>(p: &CopyPosterior<T>, ns: &NeighborSet<T>, gold: &[usize]) -> Result<()> {
    if gold.len() != p.rows() {
        return arg(format!("{} gold labels for {} tokens", gold.len(), p.rows()));
    }
    if p.cols() != ns.total_tokens() {
        return arg(format!("posterior width {} does not match {} neighbor tokens", p.cols(), ns.total_tokens()));
    }
    Ok(())
}

/// Log of the gold-type mass per token (`None` when the type is absent).
fn gold_log_mass<T: Real>(p: &CopyPosterior<T>, ns: &NeighborSet<T>, gold: &[usize]) -> Vec<Option<T>> {
    let flat = ns.flat_labels();
    gold.iter()
        .enumerate()
        .map(|(t, &g)| {
            let row = p.log_probs().row(t);
            let matching = flat.iter().zip(row).filter(|(&l, _)| l == g).map(|(_, &lp)| lp);
            flat.contains(&g).then(|| log_sum_exp(matching))
        })
        .collect()
}

/// Negative latent-marginal log-likelihood of the gold labels. Tokens whose
/// gold type does not occur among the neighbors are skipped and counted.
pub fn nll<T: Real>(p: &CopyPosterior<T>, ns: &NeighborSet<T>, gold: &[usize]) -> Result<LossReport<T>> {
    check_gold(p, ns, gold)?;
    let per_token: Vec<Option<T>> = gold_log_mass(p, ns, gold).into_iter().map(|m| m.map(|v| -v)).collect();
    let skipped = per_token.iter().filter(|v| v.is_none()).count();
    let nll = per_token.iter().flatten().copied().sum();
    Ok(LossReport { nll, per_token, skipped })
}

/// Gradient of [`nll`] with respect to the input embeddings only; neighbor
/// embeddings are constants. Row `t` is `Σ_i (p_ti − q_ti) x'_i`, where `q_t`
/// is the posterior restricted to gold-type positions and renormalized.
pub fn grad_wrt_input<T: Real>(p: &CopyPosterior<T>, ns: &NeighborSet<T>, gold: &[usize]) -> Result<Matrix<T>> {
    check_gold(p, ns, gold)?;
    let flat = ns.flat_embeddings();
    let labels = ns.flat_labels();
    let mut grad = Matrix::zeros(p.rows(), ns.dim());
    for (t, mass) in gold_log_mass(p, ns, gold).into_iter().enumerate() {
        let Some(log_gold) = mass else { continue };
        let row = p.log_probs().row(t);
        let out = grad.row_mut(t);
        for (i, &lp) in row.iter().enumerate() {
            let prob = lp.exp();
            let restricted = if labels[i] == gold[t] { (lp - log_gold).exp() } else { T::zero() };
            let w = prob - restricted;
            if w != T::zero() {
                for (o, &e) in out.iter_mut().zip(flat.row(i)) {
                    *o += w * e;
                }
            }
        }
    }
    Ok(grad)
}
