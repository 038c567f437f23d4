//! Greedy tree growth, weakest-link pruning, cross-validated subtree
//! selection and prediction.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censoring::{CensoringModel, Truncation, DEFAULT_POSITIVITY_FLOOR, DEFAULT_TAU_QUANTILE};
use crate::cif::{AalenJohansen, CifModel, FineGrayParams, FineGrayTrue};
use crate::data::{split_folds, Dataset, TimeGrid};
use crate::error::{Error, Result};
use crate::losses::{isotonic_nondecreasing, precompute_stats, LossKind, LossStats, NodeSums, Quadratic};

pub const TREE_SCHEMA: &str = "cif-tree/v1";

/// A split must improve the loss by more than this fraction of the root's
/// coefficient mass, which screens out floating-point noise.
pub const GAIN_TOLERANCE: f64 = 1e-10;

/// Candidate gains closer than this fraction of the parent loss are ties,
/// resolved in favour of the earlier candidate.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Which observations count towards `minbucket` and `minsplit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    AllObs,
    UncensoredOnly,
}

impl CountMode {
    pub fn default_for(kind: LossKind) -> Self {
        if kind.is_ipcw() {
            CountMode::UncensoredOnly
        } else {
            CountMode::AllObs
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    Min,
    OneSe,
}

impl FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(SelectionRule::Min),
            "1se" | "one-se" | "one_se" => Ok(SelectionRule::OneSe),
            other => Err(Error::InvalidArgument(format!("unknown selection rule '{other}'"))),
        }
    }
}

/// Where along each pruning interval the held-out risk is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaEval {
    /// `sqrt(alpha_r * alpha_{r+1})`, with the last interval evaluated at infinity.
    GeometricMean,
    /// The critical value `alpha_r` itself.
    Endpoint,
}

/// Source of the CIF model used for imputation by `bj` and `dr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiSpec {
    None,
    AalenJohansen,
    FineGray(FineGrayParams),
}

impl PsiSpec {
    pub fn build(&self, data: &Dataset) -> Option<Box<dyn CifModel>> {
        match self {
            PsiSpec::None => None,
            PsiSpec::AalenJohansen => Some(Box::new(AalenJohansen::fit(data))),
            PsiSpec::FineGray(p) => Some(Box::new(FineGrayTrue::new(*p))),
        }
    }
}

impl fmt::Display for PsiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsiSpec::None => f.write_str("none"),
            PsiSpec::AalenJohansen => f.write_str("aj"),
            PsiSpec::FineGray(p) => write!(f, "fg-true:{},{},{}", p.beta1, p.beta2, p.p),
        }
    }
}

impl FromStr for PsiSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("aj") {
            return Ok(PsiSpec::AalenJohansen);
        }
        if s.eq_ignore_ascii_case("none") {
            return Ok(PsiSpec::None);
        }
        if let Some(rest) = s.strip_prefix("fg-true:") {
            let parts: Vec<f64> = rest
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("bad fg-true parameters '{rest}': {e}")))?;
            if parts.len() != 3 {
                return Err(Error::InvalidArgument(
                    "fg-true needs three parameters: beta1,beta2,p".into(),
                ));
            }
            return Ok(PsiSpec::FineGray(FineGrayParams::new(parts[0], parts[1], parts[2])?));
        }
        Err(Error::InvalidArgument(format!(
            "unknown psi '{s}' (expected aj or fg-true:<b1,b2,p>)"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub loss: LossKind,
    pub cause: usize,
    pub grid: TimeGrid,
    pub minbucket: usize,
    pub minsplit: usize,
    pub max_depth: usize,
    pub folds: usize,
    pub cv_repeats: usize,
    pub seed: u64,
    /// `None` picks the loss-dependent default.
    pub count_mode: Option<CountMode>,
    pub selection: SelectionRule,
    pub alpha_eval: AlphaEval,
    /// Refit the censoring and CIF models on each training fold.
    pub refit_per_fold: bool,
    /// Monotone post-processing of leaf values across the grid.
    pub isotonic: bool,
    pub floor: f64,
    /// Cap on the standard IPCW horizon as a quantile of observed times.
    pub tau_quantile: Option<f64>,
}

impl FitConfig {
    pub fn new(loss: LossKind, grid: TimeGrid) -> Self {
        FitConfig {
            loss,
            cause: 1,
            grid,
            minbucket: 10,
            minsplit: 30,
            max_depth: 30,
            folds: 10,
            cv_repeats: 1,
            seed: 0,
            count_mode: None,
            selection: SelectionRule::Min,
            alpha_eval: AlphaEval::GeometricMean,
            refit_per_fold: false,
            isotonic: false,
            floor: DEFAULT_POSITIVITY_FLOOR,
            tau_quantile: Some(DEFAULT_TAU_QUANTILE),
        }
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            floor: self.floor,
            quantile: self.tau_quantile,
        }
    }

    pub fn count_mode(&self) -> CountMode {
        self.count_mode.unwrap_or_else(|| CountMode::default_for(self.loss))
    }

    pub fn validate(&self) -> Result<()> {
        if self.minbucket == 0 {
            return Err(Error::InvalidArgument("minbucket must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument("need at least 2 folds".into()));
        }
        if self.cv_repeats == 0 {
            return Err(Error::InvalidArgument("cv repeats must be at least 1".into()));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(Error::InvalidArgument("positivity floor must lie in (0,1)".into()));
        }
        if let Some(q) = self.tau_quantile {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::InvalidArgument("tau quantile must lie in (0,1]".into()));
            }
        }
        if self.minsplit < 2 * self.minbucket {
            log::warn!(
                "minsplit {} is below twice minbucket {}",
                self.minsplit,
                self.minbucket
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub covariate: usize,
    /// Observations with value `<= cutpoint` go left.
    pub cutpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub depth: usize,
    pub n: usize,
    /// Members counted under the fit's count mode.
    pub n_eligible: usize,
    pub split: Option<Split>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Raw node estimate per grid time.
    pub beta: Vec<f64>,
    /// Node loss at its own estimate, normalized by the root size.
    pub risk: f64,
    /// Smallest penalty at which this node becomes a leaf.
    pub prune_alpha: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// A fitted tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub schema: String,
    pub loss: String,
    pub cause: usize,
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub isotonic: bool,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    fn is_internal_at(&self, id: usize, alpha: f64) -> bool {
        let node = &self.nodes[id];
        !node.is_leaf() && node.prune_alpha > alpha
    }

    /// Leaf reached by `w` in the subtree pruned at `alpha`.
    pub fn route(&self, w: &[f64], alpha: f64) -> usize {
        let mut id = 0;
        while self.is_internal_at(id, alpha) {
            let node = &self.nodes[id];
            let s = node.split.unwrap();
            id = if w[s.covariate] <= s.cutpoint {
                node.left.unwrap()
            } else {
                node.right.unwrap()
            };
        }
        id
    }

    /// Reported CIF values of a node: clamped to `[0, 1]`, optionally monotone.
    pub fn node_cif(&self, id: usize) -> Vec<f64> {
        let clamped: Vec<f64> = self.nodes[id].beta.iter().map(|b| b.clamp(0.0, 1.0)).collect();
        if self.isotonic {
            isotonic_nondecreasing(&clamped)
        } else {
            clamped
        }
    }

    pub fn predict(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.predict_at(w, -1.0)
    }

    pub fn predict_at(&self, w: &[f64], alpha: f64) -> Result<Vec<f64>> {
        if w.len() != self.n_covariates() {
            return Err(Error::InvalidArgument(format!(
                "expected {} covariates, got {}",
                self.n_covariates(),
                w.len()
            )));
        }
        Ok(self.node_cif(self.route(w, alpha)))
    }

    fn collect_leaves(&self, alpha: f64, out: &mut Vec<usize>) {
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            if self.is_internal_at(id, alpha) {
                stack.push(self.nodes[id].right.unwrap());
                stack.push(self.nodes[id].left.unwrap());
            } else {
                out.push(id);
            }
        }
    }

    /// Leaf ids in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        self.leaves_at(-1.0)
    }

    pub fn leaves_at(&self, alpha: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(alpha, &mut out);
        out
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    /// Internal nodes in depth-first order.
    pub fn splits(&self) -> Vec<Split> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if let Some(s) = node.split {
                out.push(s);
                stack.push(node.right.unwrap());
                stack.push(node.left.unwrap());
            }
        }
        out
    }

    /// Sum of leaf risks.
    pub fn risk(&self) -> f64 {
        self.leaves().iter().map(|&id| self.nodes[id].risk).sum()
    }

    /// Copy of the subtree pruned at `alpha`, renumbered depth-first.
    pub fn pruned(&self, alpha: f64) -> Tree {
        let mut nodes = Vec::new();
        self.copy_node(0, alpha, &mut nodes);
        Tree {
            nodes,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Tree {
        Tree {
            schema: self.schema.clone(),
            loss: self.loss.clone(),
            cause: self.cause,
            times: self.times.clone(),
            weights: self.weights.clone(),
            covariate_names: self.covariate_names.clone(),
            isotonic: self.isotonic,
            nodes: Vec::new(),
        }
    }

    fn copy_node(&self, id: usize, alpha: f64, out: &mut Vec<Node>) -> usize {
        let new_id = out.len();
        let mut node = self.nodes[id].clone();
        node.id = new_id;
        out.push(node);
        if self.is_internal_at(id, alpha) {
            let l = self.copy_node(self.nodes[id].left.unwrap(), alpha, out);
            let r = self.copy_node(self.nodes[id].right.unwrap(), alpha, out);
            out[new_id].left = Some(l);
            out[new_id].right = Some(r);
        } else {
            let n = &mut out[new_id];
            n.split = None;
            n.left = None;
            n.right = None;
            n.prune_alpha = 0.0;
        }
        new_id
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Tree> {
        let tree: Tree = serde_json::from_str(s)?;
        if tree.schema != TREE_SCHEMA {
            return Err(Error::Validation(format!(
                "unsupported tree schema '{}' (expected {TREE_SCHEMA})",
                tree.schema
            )));
        }
        Ok(tree)
    }
}

/// Grows trees from one set of quadratic coefficients.
pub struct Grower<'a> {
    data: &'a Dataset,
    quad: &'a Quadratic,
    eligible: Vec<bool>,
    config: &'a FitConfig,
}

impl<'a> Grower<'a> {
    pub fn new(data: &'a Dataset, quad: &'a Quadratic, config: &'a FitConfig) -> Self {
        let mode = config.count_mode();
        let eligible = data
            .iter()
            .map(|o| mode == CountMode::AllObs || o.delta)
            .collect();
        Grower {
            data,
            quad,
            eligible,
            config,
        }
    }

    /// Grows the maximal tree on `members` and annotates pruning penalties.
    pub fn grow(&self, members: &[usize]) -> Result<Tree> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("cannot grow a tree on no data".into()));
        }
        let root_sums = self.quad.sums(members);
        let root_beta = self.quad.estimate(&root_sums).ok_or_else(|| {
            Error::Inestimable(format!(
                "root node with {} members has zero {} weight",
                members.len(),
                self.config.loss
            ))
        })?;
        let scale = 1.0 / members.len() as f64;
        let mass: f64 = members
            .iter()
            .map(|&i| {
                (0..self.quad.n_times())
                    .map(|j| self.quad.weights()[j] * (self.quad.a(i, j).abs() + self.quad.b(i, j).abs()))
                    .sum::<f64>()
            })
            .sum();
        let mut state = GrowState {
            nodes: Vec::new(),
            scale,
            tolerance: GAIN_TOLERANCE * mass,
        };
        let root_loss = self.quad.min_loss(&root_sums).unwrap();
        self.grow_node(members.to_vec(), root_sums, root_beta, root_loss, 0, &mut state);
        let mut tree = Tree {
            schema: TREE_SCHEMA.to_string(),
            loss: self.config.loss.as_str().to_string(),
            cause: self.config.cause,
            times: self.config.grid.times().to_vec(),
            weights: self.config.grid.weights().to_vec(),
            covariate_names: self.data.covariate_names().to_vec(),
            isotonic: self.config.isotonic,
            nodes: state.nodes,
        };
        annotate_prune_alphas(&mut tree);
        Ok(tree)
    }

    fn grow_node(
        &self,
        members: Vec<usize>,
        sums: NodeSums,
        beta: Vec<f64>,
        loss: f64,
        depth: usize,
        state: &mut GrowState,
    ) -> usize {
        let id = state.nodes.len();
        let n_eligible = members.iter().filter(|&&i| self.eligible[i]).count();
        state.nodes.push(Node {
            id,
            depth,
            n: members.len(),
            n_eligible,
            split: None,
            left: None,
            right: None,
            beta,
            risk: loss * state.scale,
            prune_alpha: 0.0,
        });
        if n_eligible < self.config.minsplit || depth >= self.config.max_depth {
            return id;
        }
        let Some(best) = self.best_split(&members, &sums, loss, n_eligible) else {
            return id;
        };
        if best.gain <= state.tolerance {
            return id;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = members
            .iter()
            .partition(|&&i| self.data.get(i).covariates[best.split.covariate] <= best.split.cutpoint);
        drop(members);
        let (ls, rs) = (self.quad.sums(&left), self.quad.sums(&right));
        let (lb, rb) = (self.quad.estimate(&ls).unwrap(), self.quad.estimate(&rs).unwrap());
        let (ll, rl) = (self.quad.min_loss(&ls).unwrap(), self.quad.min_loss(&rs).unwrap());
        state.nodes[id].split = Some(best.split);
        let l = self.grow_node(left, ls, lb, ll, depth + 1, state);
        let r = self.grow_node(right, rs, rb, rl, depth + 1, state);
        state.nodes[id].left = Some(l);
        state.nodes[id].right = Some(r);
        id
    }

    /// Best admissible split by prefix-sum scan. Ties (see [`TIE_TOLERANCE`])
    /// keep the first found, i.e. the lowest covariate index and then the
    /// smallest cutpoint.
    pub fn best_split(
        &self,
        members: &[usize],
        total: &NodeSums,
        parent_loss: f64,
        n_eligible: usize,
    ) -> Option<SplitCandidate> {
        let minbucket = self.config.minbucket;
        let mut best: Option<SplitCandidate> = None;
        let tie = TIE_TOLERANCE * parent_loss.abs();
        let mut order = members.to_vec();
        let mut running = NodeSums::zeros(self.quad.n_times());
        for c in 0..self.data.n_covariates() {
            let x = |i: usize| self.data.get(i).covariates[c];
            order.sort_by(|&p, &q| x(p).total_cmp(&x(q)).then(p.cmp(&q)));
            running.count = 0;
            running.a.iter_mut().for_each(|v| *v = 0.0);
            running.b.iter_mut().for_each(|v| *v = 0.0);
            let mut left_eligible = 0;
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                self.quad.add(&mut running, i);
                left_eligible += self.eligible[i] as usize;
                let (x0, x1) = (x(i), x(order[pos + 1]));
                if x0 == x1 {
                    continue;
                }
                if left_eligible < minbucket || n_eligible - left_eligible < minbucket {
                    continue;
                }
                let Some(l) = self.quad.min_loss(&running) else { continue };
                let Some(r) = self.quad.min_loss_complement(total, &running) else { continue };
                let gain = parent_loss - l - r;
                if best.as_ref().is_none_or(|b| gain > b.gain + tie) {
                    best = Some(SplitCandidate {
                        split: Split {
                            covariate: c,
                            cutpoint: midpoint(x0, x1),
                        },
                        gain,
                    });
                }
            }
        }
        best
    }
}

struct GrowState {
    nodes: Vec<Node>,
    scale: f64,
    tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub split: Split,
    /// Unnormalized loss reduction.
    pub gain: f64,
}

/// Midpoint of two distinct sorted values that still separates them.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Weakest-link pruning: assigns each internal node the penalty at which it
/// collapses. Nodes whose subtree does not lower the risk collapse at 0.
fn annotate_prune_alphas(tree: &mut Tree) {
    let n = tree.nodes.len();
    let mut active = vec![true; n];
    for node in tree.nodes.iter_mut() {
        node.prune_alpha = 0.0;
    }
    let mut current = 0.0_f64;
    loop {
        // Subtree risk and leaf count of every active internal node, children first.
        let mut sub_risk = vec![0.0; n];
        let mut sub_leaves = vec![0usize; n];
        let mut best: Option<(f64, usize)> = None;
        for id in (0..n).rev() {
            let node = &tree.nodes[id];
            if !active[id] {
                continue;
            }
            match (node.left, node.right) {
                (Some(l), Some(r)) if active[l] => {
                    sub_risk[id] = sub_risk[l] + sub_risk[r];
                    sub_leaves[id] = sub_leaves[l] + sub_leaves[r];
                    let g = (node.risk - sub_risk[id]) / (sub_leaves[id] - 1) as f64;
                    if best.is_none_or(|(bg, _)| g < bg) {
                        best = Some((g, id));
                    }
                }
                _ => {
                    sub_risk[id] = node.risk;
                    sub_leaves[id] = 1;
                }
            }
        }
        let Some((g, _)) = best else { break };
        let alpha = g.max(current).max(0.0);
        // Collapse every internal node whose link is this weak, ancestors first.
        let tol = 1e-12 * alpha.abs().max(1e-300);
        for id in 0..n {
            let node = &tree.nodes[id];
            let (Some(l), Some(r)) = (node.left, node.right) else { continue };
            if !active[id] || !active[l] {
                continue;
            }
            let g = (node.risk - sub_risk[id]) / (sub_leaves[id] - 1) as f64;
            if g > alpha + tol {
                continue;
            }
            tree.nodes[id].prune_alpha = alpha;
            let mut stack = vec![l, r];
            while let Some(c) = stack.pop() {
                active[c] = false;
                if let (Some(cl), Some(cr)) = (tree.nodes[c].left, tree.nodes[c].right) {
                    if active[cl] {
                        tree.nodes[c].prune_alpha = alpha;
                    }
                    stack.push(cl);
                    stack.push(cr);
                }
            }
        }
        current = alpha;
    }
}

/// The nested sequence of subtrees indexed by critical penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunePath {
    /// Increasing critical values; subtree `r` is optimal on `[alphas[r], alphas[r+1])`.
    pub alphas: Vec<f64>,
    pub leaves: Vec<usize>,
    pub train_risk: Vec<f64>,
    pub cv_risk: Option<Vec<f64>>,
    pub cv_se: Option<Vec<f64>>,
}

impl PrunePath {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Penalty at which the held-out risk of subtree `r` is evaluated.
    pub fn eval_alpha(&self, r: usize, rule: AlphaEval) -> f64 {
        match rule {
            AlphaEval::Endpoint => self.alphas[r],
            AlphaEval::GeometricMean => {
                if r + 1 < self.alphas.len() {
                    (self.alphas[r] * self.alphas[r + 1]).sqrt()
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

pub fn prune_path(tree: &Tree) -> PrunePath {
    let mut alphas = vec![0.0];
    let mut internal: Vec<f64> = tree
        .nodes
        .iter()
        .filter(|n| !n.is_leaf() && n.prune_alpha > 0.0)
        .map(|n| n.prune_alpha)
        .collect();
    internal.sort_by(f64::total_cmp);
    internal.dedup();
    alphas.extend(internal);
    let leaves = alphas.iter().map(|&a| tree.leaves_at(a).len()).collect();
    let train_risk = alphas
        .iter()
        .map(|&a| tree.leaves_at(a).iter().map(|&id| tree.nodes[id].risk).sum())
        .collect();
    PrunePath {
        alphas,
        leaves,
        train_risk,
        cv_risk: None,
        cv_se: None,
    }
}

/// Everything needed to evaluate a tree on held-out subjects.
pub struct FitContext {
    pub cens: CensoringModel,
    pub psi: Option<Box<dyn CifModel>>,
    pub stats: LossStats,
    pub quad: Quadratic,
}

impl FitContext {
    pub fn build(data: &Dataset, config: &FitConfig, psi: PsiSpec) -> Result<Self> {
        if config.loss.needs_psi() && psi == PsiSpec::None {
            return Err(Error::InvalidArgument(format!(
                "loss '{}' needs a CIF model (psi)",
                config.loss
            )));
        }
        let cens = CensoringModel::fit_km(data);
        let psi_model = if config.loss.needs_psi() { psi.build(data) } else { None };
        let stats = precompute_stats(data, &cens, psi_model.as_deref(), &config.grid, config.cause, config.truncation())?;
        if config.loss == LossKind::Ipcw1 {
            if let Some(&t_last) = config.grid.times().last() {
                if stats.tau() < t_last {
                    log::warn!(
                        "truncation horizon tau = {} precedes grid time {}; later indicators use the truncated weights",
                        stats.tau(),
                        t_last
                    );
                }
            }
        }
        let quad = stats.quadratic(config.loss)?;
        Ok(FitContext {
            cens,
            psi: psi_model,
            stats,
            quad,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// The selected subtree.
    pub tree: Tree,
    /// The maximal tree with pruning penalties.
    pub full: Tree,
    pub path: PrunePath,
    pub selected: usize,
    pub selected_alpha: f64,
    pub tau: f64,
}

/// Held-out per-subject loss of each path subtree, for one repeat.
fn fold_losses(
    data: &Dataset,
    config: &FitConfig,
    psi: PsiSpec,
    ctx: &FitContext,
    path: &PrunePath,
    folds: &[Vec<usize>],
) -> Result<Vec<Option<Vec<f64>>>> {
    let n = data.len();
    let per_fold: Vec<Result<Option<Vec<(usize, Vec<f64>)>>>> = folds
        .par_iter()
        .map(|held| {
            let mut in_fold = vec![false; n];
            held.iter().for_each(|&i| in_fold[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
            let grown = if config.refit_per_fold {
                let sub = data.subset(&train)?;
                let local = FitContext::build(&sub, config, psi);
                match local {
                    Ok(local) => Grower::new(&sub, &local.quad, config)
                        .grow(&(0..sub.len()).collect::<Vec<_>>()),
                    Err(e) => Err(e),
                }
            } else {
                Grower::new(data, &ctx.quad, config).grow(&train)
            };
            let tree = match grown {
                Ok(t) => t,
                Err(e) if e.is_numerical() => {
                    log::warn!("skipping cross-validation fold: {e}");
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            let mut out = Vec::with_capacity(held.len());
            for &i in held {
                let w = &data.get(i).covariates;
                let phi = (0..path.len())
                    .map(|r| {
                        let pred = tree.node_cif(tree.route(w, path.eval_alpha(r, config.alpha_eval)));
                        ctx.quad.observation_loss(i, &pred)
                    })
                    .collect();
                out.push((i, phi));
            }
            Ok(Some(out))
        })
        .collect();
    let mut phi: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut used = 0;
    for fold in per_fold {
        if let Some(rows) = fold? {
            used += 1;
            for (i, v) in rows {
                phi[i] = Some(v);
            }
        }
    }
    if used == 0 {
        return Err(Error::Inestimable("every cross-validation fold failed".into()));
    }
    Ok(phi)
}

/// Fills the path's held-out risks. Risk per fold is the mean loss of its
/// held-out subjects; folds are averaged, then repeats are averaged.
pub fn cross_validate(
    data: &Dataset,
    config: &FitConfig,
    psi: PsiSpec,
    ctx: &FitContext,
    path: &mut PrunePath,
) -> Result<()> {
    if config.folds > data.len() {
        return Err(Error::InvalidArgument(format!(
            "{} folds requested for {} observations",
            config.folds,
            data.len()
        )));
    }
    let r_len = path.len();
    let mut risk = vec![0.0; r_len];
    let mut phi_mean = vec![vec![0.0; r_len]; data.len()];
    let mut phi_count = vec![0usize; data.len()];
    for rep in 0..config.cv_repeats {
        let folds = split_folds(data.len(), config.folds, config.seed.wrapping_add(rep as u64))?;
        let phi = fold_losses(data, config, psi, ctx, path, &folds)?;
        let mut used = 0;
        let mut rep_risk = vec![0.0; r_len];
        for fold in &folds {
            if fold.iter().any(|&i| phi[i].is_none()) {
                continue;
            }
            used += 1;
            for r in 0..r_len {
                let s: f64 = fold.iter().map(|&i| phi[i].as_ref().unwrap()[r]).sum();
                rep_risk[r] += s / fold.len() as f64;
            }
        }
        for r in 0..r_len {
            risk[r] += rep_risk[r] / used as f64 / config.cv_repeats as f64;
        }
        for (i, v) in phi.iter().enumerate() {
            if let Some(v) = v {
                phi_count[i] += 1;
                for r in 0..r_len {
                    phi_mean[i][r] += v[r];
                }
            }
        }
    }
    let observed: Vec<usize> = (0..data.len()).filter(|&i| phi_count[i] > 0).collect();
    let m = observed.len() as f64;
    let se = (0..r_len)
        .map(|r| {
            let vals: Vec<f64> = observed
                .iter()
                .map(|&i| phi_mean[i][r] / phi_count[i] as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            (var / m).sqrt()
        })
        .collect();
    path.cv_risk = Some(risk);
    path.cv_se = Some(se);
    Ok(())
}

/// Index of the chosen subtree. Ties in risk go to the smaller tree.
pub fn select(path: &PrunePath, rule: SelectionRule) -> usize {
    let Some(risk) = path.cv_risk.as_ref() else {
        return 0;
    };
    let (mut best, mut best_risk) = (0, f64::INFINITY);
    for (r, &v) in risk.iter().enumerate() {
        if v < best_risk {
            best = r;
            best_risk = v;
        }
    }
    let slack = match rule {
        SelectionRule::Min => 0.0,
        SelectionRule::OneSe => path.cv_se.as_ref().map_or(0.0, |se| se[best]),
    };
    let threshold = best_risk + slack + 1e-12 * best_risk.abs().max(1e-300);
    (0..risk.len()).rev().find(|&r| risk[r] <= threshold).unwrap_or(best)
}

/// Grow, prune, cross-validate and select.
pub fn fit(data: &Dataset, config: &FitConfig, psi: PsiSpec) -> Result<FitResult> {
    config.validate()?;
    if config.loss == LossKind::Full && data.censoring_fraction() > 0.0 {
        log::warn!("full-data loss on censored data treats censored subjects as event-free");
    }
    let ctx = FitContext::build(data, config, psi)?;
    fit_with_context(data, config, psi, &ctx)
}

pub fn fit_with_context(data: &Dataset, config: &FitConfig, psi: PsiSpec, ctx: &FitContext) -> Result<FitResult> {
    let all: Vec<usize> = (0..data.len()).collect();
    let full = Grower::new(data, &ctx.quad, config).grow(&all)?;
    let mut path = prune_path(&full);
    if path.len() > 1 {
        cross_validate(data, config, psi, ctx, &mut path)?;
    }
    let selected = select(&path, config.selection);
    let selected_alpha = path.alphas[selected];
    Ok(FitResult {
        tree: full.pruned(selected_alpha),
        full,
        path,
        selected,
        selected_alpha,
        tau: ctx.stats.tau(),
    })
}
