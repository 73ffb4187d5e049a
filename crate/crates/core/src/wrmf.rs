//! Confidence-weighted matrix factorization trained by alternating least squares.
//!
//! The artist-artist matrix stands in for a user-item matrix: every
//! observed similarity `(i, j)` has preference 1 and confidence `1 + alpha`,
//! every other cell has preference 0 and confidence 1. Each half-sweep fixes
//! one factor matrix and solves the ridge regression for every row of the
//! other in closed form, using the precomputed Gramian plus corrections for
//! the observed entries only.

use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::SimilarityGraph;
use crate::exec::Exec;
use crate::linalg::{dot, spd_solve};
use crate::ranking::{rank_by_score, UserVector};

#[derive(Debug, Error, PartialEq)]
pub enum WrmfError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("cannot train on an empty similarity graph")]
    EmptyGraph,
    #[error("non-finite factors in sweep {sweep} ({side} update)")]
    NonFinite { sweep: usize, side: &'static str },
    #[error("dimension mismatch: model has {model} artists, input has {input}")]
    DimensionMismatch { model: usize, input: usize },
    #[error("fold-in needs at least one seed artist")]
    EmptyUser,
    #[error("fold-in system is singular")]
    Singular,
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("unknown candidate index {0}")]
    UnknownCandidate(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrmfConfig {
    /// Embedding dimension `k`.
    pub factors: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for WrmfConfig {
    fn default() -> Self {
        WrmfConfig {
            factors: 128,
            lambda: 0.1,
            alpha: 15.0,
            sweeps: 15,
            seed: 0,
        }
    }
}

impl WrmfConfig {
    pub fn validate(&self) -> Result<(), WrmfError> {
        if self.factors == 0 {
            return Err(WrmfError::InvalidConfig("factors must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(WrmfError::InvalidConfig("lambda must be finite and >= 0"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(WrmfError::InvalidConfig("alpha must be finite and >= 0"));
        }
        if self.sweeps == 0 {
            return Err(WrmfError::InvalidConfig("sweeps must be >= 1"));
        }
        Ok(())
    }
}

/// Row factors `X` (one row per artist as a "user") and column factors `Y`
/// (one row per artist as an "item"), both `n × k`.
#[derive(Clone, Debug)]
pub struct FactorModel {
    config: WrmfConfig,
    row_factors: Array2<f64>,
    col_factors: Array2<f64>,
    col_gram: OnceLock<Vec<f64>>,
}

impl PartialEq for FactorModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.row_factors == other.row_factors
            && self.col_factors == other.col_factors
    }
}

impl FactorModel {
    pub fn from_parts(
        config: WrmfConfig,
        row_factors: Array2<f64>,
        col_factors: Array2<f64>,
    ) -> Result<Self, WrmfError> {
        let k = config.factors;
        if row_factors.ncols() != k || col_factors.ncols() != k {
            return Err(WrmfError::InvalidConfig("factor width must equal config.factors"));
        }
        if row_factors.nrows() != col_factors.nrows() {
            return Err(WrmfError::DimensionMismatch {
                model: row_factors.nrows(),
                input: col_factors.nrows(),
            });
        }
        Ok(FactorModel {
            config,
            row_factors: row_factors.as_standard_layout().into_owned(),
            col_factors: col_factors.as_standard_layout().into_owned(),
            col_gram: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &WrmfConfig {
        &self.config
    }

    pub fn n_artists(&self) -> usize {
        self.row_factors.nrows()
    }

    pub fn row_factors(&self) -> ArrayView2<'_, f64> {
        self.row_factors.view()
    }

    pub fn col_factors(&self) -> ArrayView2<'_, f64> {
        self.col_factors.view()
    }

    fn col_gram(&self) -> &[f64] {
        self.col_gram.get_or_init(|| gramian(self.col_factors.view()))
    }

    pub fn is_finite(&self) -> bool {
        self.row_factors.iter().chain(self.col_factors.iter()).all(|v| v.is_finite())
    }

    /// Predicted preference `x_i · y_j`.
    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.row_factors.row(i).dot(&self.col_factors.row(j))
    }
}

fn gramian(m: ArrayView2<'_, f64>) -> Vec<f64> {
    let g = m.t().dot(&m);
    g.as_standard_layout().iter().copied().collect()
}

/// Closed-form ridge solve for one row given the fixed opposite factor:
/// `(FᵀF + λI + α Σⱼ fⱼfⱼᵀ) x = (1 + α) Σⱼ fⱼ` over the observed columns `j`.
fn solve_row(
    gram: &[f64],
    fixed: ArrayView2<'_, f64>,
    observed: &[usize],
    lambda: f64,
    alpha: f64,
) -> Option<Vec<f64>> {
    let k = fixed.ncols();
    let mut a = gram.to_vec();
    for d in 0..k {
        a[d * k + d] += lambda;
    }
    let mut b = vec![0.0; k];
    for &j in observed {
        let f = fixed.row(j);
        let f = f.as_slice().expect("factors are in standard layout");
        for p in 0..k {
            b[p] += (1.0 + alpha) * f[p];
            let af = alpha * f[p];
            // cholesky reads the lower triangle only
            for (dst, &fq) in a[p * k..p * k + p + 1].iter_mut().zip(&f[..=p]) {
                *dst += af * fq;
            }
        }
    }
    spd_solve(&mut a, k, &mut b).ok()?;
    b.iter().all(|v| v.is_finite()).then_some(b)
}

/// Drives ALS one half-sweep at a time. [`train_wrmf`] is the usual entry point.
pub struct WrmfTrainer<'g> {
    graph: &'g SimilarityGraph,
    cols: Vec<Vec<usize>>,
    model: FactorModel,
    exec: Exec,
    sweep: usize,
}

impl<'g> WrmfTrainer<'g> {
    pub fn new(graph: &'g SimilarityGraph, config: WrmfConfig, exec: Exec) -> Result<Self, WrmfError> {
        config.validate()?;
        if graph.is_empty() {
            return Err(WrmfError::EmptyGraph);
        }
        let n = graph.len();
        let k = config.factors;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = 1.0 / (k as f64).sqrt();
        let mut init = || {
            Array2::from_shape_simple_fn((n, k), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
        };
        let row_factors = init();
        let col_factors = init();
        Ok(WrmfTrainer {
            graph,
            cols: graph.transpose_rows(),
            model: FactorModel::from_parts(config, row_factors, col_factors)?,
            exec,
            sweep: 0,
        })
    }

    pub fn model(&self) -> &FactorModel {
        &self.model
    }

    pub fn into_model(self) -> FactorModel {
        self.model
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweep
    }

    /// Re-solves every row of `X` with `Y` fixed.
    pub fn update_rows(&mut self) -> Result<(), WrmfError> {
        let WrmfConfig { lambda, alpha, .. } = self.model.config;
        let fixed = self.model.col_factors.view();
        let gram = gramian(fixed);
        let rows = self.graph.rows();
        let solved = self
            .exec
            .map(rows.len(), |i| solve_row(&gram, fixed, &rows[i], lambda, alpha));
        Self::store(&mut self.model.row_factors, solved, self.sweep, "row")?;
        Ok(())
    }

    /// Re-solves every row of `Y` with `X` fixed.
    pub fn update_cols(&mut self) -> Result<(), WrmfError> {
        let WrmfConfig { lambda, alpha, .. } = self.model.config;
        let fixed = self.model.row_factors.view();
        let gram = gramian(fixed);
        let cols = &self.cols;
        let solved = self
            .exec
            .map(cols.len(), |j| solve_row(&gram, fixed, &cols[j], lambda, alpha));
        Self::store(&mut self.model.col_factors, solved, self.sweep, "column")?;
        self.model.col_gram = OnceLock::new();
        Ok(())
    }

    fn store(
        target: &mut Array2<f64>,
        solved: Vec<Option<Vec<f64>>>,
        sweep: usize,
        side: &'static str,
    ) -> Result<(), WrmfError> {
        for (mut row, sol) in target.rows_mut().into_iter().zip(solved) {
            let sol = sol.ok_or(WrmfError::NonFinite { sweep, side })?;
            row.iter_mut().zip(sol).for_each(|(dst, v)| *dst = v);
        }
        Ok(())
    }

    /// One full sweep: rows, then columns.
    pub fn sweep(&mut self) -> Result<(), WrmfError> {
        self.update_rows()?;
        self.update_cols()?;
        self.sweep += 1;
        Ok(())
    }
}

pub fn train_wrmf(graph: &SimilarityGraph, config: &WrmfConfig) -> Result<FactorModel, WrmfError> {
    train_wrmf_with(graph, config, Exec::default(), |_, _| {})
}

/// Trains with an explicit execution mode; `on_sweep` sees the model after each full sweep.
pub fn train_wrmf_with(
    graph: &SimilarityGraph,
    config: &WrmfConfig,
    exec: Exec,
    mut on_sweep: impl FnMut(usize, &FactorModel),
) -> Result<FactorModel, WrmfError> {
    let mut trainer = WrmfTrainer::new(graph, config.clone(), exec)?;
    for s in 0..config.sweeps {
        trainer.sweep()?;
        on_sweep(s + 1, trainer.model());
    }
    Ok(trainer.into_model())
}

/// `Σᵢⱼ cᵢⱼ (pᵢⱼ − xᵢ·yⱼ)² + λ(‖X‖² + ‖Y‖²)` over every cell of the matrix.
pub fn objective(model: &FactorModel, graph: &SimilarityGraph) -> Result<f64, WrmfError> {
    if model.n_artists() != graph.len() {
        return Err(WrmfError::DimensionMismatch {
            model: model.n_artists(),
            input: graph.len(),
        });
    }
    let WrmfConfig { lambda, alpha, .. } = model.config;
    let x = model.row_factors.view();
    let y = model.col_factors.view();
    // Σᵢⱼ (xᵢ·yⱼ)² = ⟨XᵀX, YᵀY⟩
    let all_cells = dot(&gramian(x), &gramian(y));
    let mut observed = 0.0;
    for (i, row) in graph.rows().iter().enumerate() {
        for &j in row {
            let s = model.score(i, j);
            observed += (1.0 + alpha) * (1.0 - s) * (1.0 - s) - s * s;
        }
    }
    let reg = lambda * (x.iter().map(|v| v * v).sum::<f64>() + y.iter().map(|v| v * v).sum::<f64>());
    Ok(all_cells + observed + reg)
}

/// Embeds a seed-artist vector into the factor space with the same ridge
/// solve used for row updates: `u = (YᵀCY + λI)⁻¹ YᵀCp`.
pub fn fold_in_user(model: &FactorModel, user: &UserVector) -> Result<Vec<f64>, WrmfError> {
    if user.dim() != model.n_artists() {
        return Err(WrmfError::DimensionMismatch {
            model: model.n_artists(),
            input: user.dim(),
        });
    }
    if user.is_empty() {
        return Err(WrmfError::EmptyUser);
    }
    let WrmfConfig { lambda, alpha, .. } = model.config;
    solve_row(model.col_gram(), model.col_factors.view(), user.seeds(), lambda, alpha)
        .ok_or(WrmfError::Singular)
}

/// Candidates ordered by `user · yⱼ`, highest first, ties by index.
pub fn rank_candidates(
    model: &FactorModel,
    user: &[f64],
    candidates: &[usize],
) -> Result<Vec<(usize, f64)>, WrmfError> {
    if candidates.is_empty() {
        return Err(WrmfError::NoCandidates);
    }
    if user.len() != model.config.factors {
        return Err(WrmfError::DimensionMismatch {
            model: model.config.factors,
            input: user.len(),
        });
    }
    let scored = candidates
        .iter()
        .map(|&c| {
            if c >= model.n_artists() {
                return Err(WrmfError::UnknownCandidate(c));
            }
            let y = model.col_factors.row(c);
            Ok((c, dot(user, y.as_slice().expect("standard layout"))))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rank_by_score(scored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn random_graph(n: usize, density: f64, seed: u64) -> SimilarityGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SimilarityGraph::from_rows(
            (0..n)
                .map(|i| (0..n).filter(|&j| j != i && rng.random_bool(density)).collect())
                .collect(),
        )
    }

    fn cliques(sizes: &[usize]) -> SimilarityGraph {
        let mut rows = Vec::new();
        let mut start = 0;
        for &s in sizes {
            for i in start..start + s {
                rows.push((start..start + s).filter(|&j| j != i).collect());
            }
            start += s;
        }
        SimilarityGraph::from_rows(rows)
    }

    fn dense_objective(model: &FactorModel, graph: &SimilarityGraph) -> f64 {
        let n = graph.len();
        let c = model.config();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = if graph.contains(i, j) { 1.0 } else { 0.0 };
                let conf = 1.0 + c.alpha * p;
                let e = p - model.score(i, j);
                total += conf * e * e;
            }
        }
        let sq: f64 = model.row_factors().iter().chain(model.col_factors().iter()).map(|v| v * v).sum();
        total + c.lambda * sq
    }

    #[test]
    fn objective_matches_dense_sum() {
        let g = random_graph(15, 0.2, 3);
        let cfg = WrmfConfig { factors: 4, sweeps: 2, ..Default::default() };
        let m = train_wrmf(&g, &cfg).unwrap();
        let fast = objective(&m, &g).unwrap();
        let slow = dense_objective(&m, &g);
        assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0));
    }

    #[test]
    fn zero_factors_objective() {
        let cfg = WrmfConfig { factors: 3, ..Default::default() };
        let zero = |n| Array2::zeros((n, 3));
        let empty = SimilarityGraph::from_rows(vec![vec![]; 4]);
        let m = FactorModel::from_parts(cfg.clone(), zero(4), zero(4)).unwrap();
        assert_eq!(objective(&m, &empty).unwrap(), 0.0);

        let g = SimilarityGraph::from_rows(vec![vec![1, 2], vec![0], vec![], vec![2]]);
        assert_eq!(objective(&m, &g).unwrap(), 16.0 * 4.0);
    }

    #[test]
    fn exact_fit_has_zero_objective() {
        // λ = 0, α = 0 and X Yᵀ equal to the 0/1 matrix exactly.
        let cfg = WrmfConfig { factors: 2, lambda: 0.0, alpha: 0.0, ..Default::default() };
        let g = SimilarityGraph::from_rows(vec![vec![1], vec![0]]);
        let x = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let m = FactorModel::from_parts(cfg, x, y).unwrap();
        assert_eq!(objective(&m, &g).unwrap(), 0.0);
    }

    #[test]
    fn zero_graph_drives_factors_to_zero() {
        let g = SimilarityGraph::from_rows(vec![vec![]; 6]);
        let cfg = WrmfConfig { factors: 3, sweeps: 3, ..Default::default() };
        let m = train_wrmf(&g, &cfg).unwrap();
        assert!(m.row_factors().iter().chain(m.col_factors().iter()).all(|v| v.abs() < 1e-12));
        assert!(objective(&m, &g).unwrap() < 1e-20);
    }

    #[test]
    fn two_cliques_separate() {
        let g = cliques(&[4, 4]);
        let cfg = WrmfConfig { factors: 2, sweeps: 500, seed: 11, ..Default::default() };
        let m = train_wrmf(&g, &cfg).unwrap();
        let block = |i: usize| i / 4;
        let mut min_intra = f64::INFINITY;
        let mut max_cross = f64::NEG_INFINITY;
        for i in 0..8 {
            for j in 0..8 {
                if i == j {
                    continue;
                }
                let s = m.score(i, j);
                if block(i) == block(j) {
                    min_intra = min_intra.min(s);
                } else {
                    max_cross = max_cross.max(s);
                }
            }
        }
        assert!(min_intra > max_cross, "{min_intra} vs {max_cross}");

        // Plain gradient descent on the dense objective as an independent minimizer.
        let gd = gradient_descent_minimum(&g, &cfg, 20_000);
        let als = objective(&m, &g).unwrap();
        // ALS converges slowly near the optimum, so allow 0.1%.
        assert!(als <= gd * (1.0 + 1e-3), "ALS {als} vs GD {gd}");
    }

    fn gradient_descent_minimum(g: &SimilarityGraph, cfg: &WrmfConfig, steps: usize) -> f64 {
        let n = g.len();
        let k = cfg.factors;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut x: Vec<f64> = (0..n * k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut y: Vec<f64> = (0..n * k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let lr = 0.005;
        let pc = |i: usize, j: usize| if g.contains(i, j) { (1.0, 1.0 + cfg.alpha) } else { (0.0, 1.0) };
        for _ in 0..steps {
            let mut gx = vec![0.0; n * k];
            let mut gy = vec![0.0; n * k];
            for i in 0..n {
                for j in 0..n {
                    let (p, c) = pc(i, j);
                    let s: f64 = (0..k).map(|d| x[i * k + d] * y[j * k + d]).sum();
                    let r = -2.0 * c * (p - s);
                    for d in 0..k {
                        gx[i * k + d] += r * y[j * k + d];
                        gy[j * k + d] += r * x[i * k + d];
                    }
                }
            }
            for d in 0..n * k {
                gx[d] += 2.0 * cfg.lambda * x[d];
                gy[d] += 2.0 * cfg.lambda * y[d];
                x[d] -= lr * gx[d];
                y[d] -= lr * gy[d];
            }
        }
        let model = FactorModel::from_parts(
            cfg.clone(),
            Array2::from_shape_vec((n, k), x).unwrap(),
            Array2::from_shape_vec((n, k), y).unwrap(),
        )
        .unwrap();
        dense_objective(&model, g)
    }

    #[test]
    fn objective_non_increasing_on_random_graph() {
        let g = random_graph(50, 0.1, 5);
        let cfg = WrmfConfig { factors: 8, sweeps: 10, seed: 2, ..Default::default() };
        let mut t = WrmfTrainer::new(&g, cfg, Exec::default()).unwrap();
        let mut prev = objective(t.model(), &g).unwrap();
        for _ in 0..10 {
            t.update_rows().unwrap();
            let o = objective(t.model(), &g).unwrap();
            assert!(o <= prev * (1.0 + 1e-12), "{o} > {prev}");
            prev = o;
            t.update_cols().unwrap();
            let o = objective(t.model(), &g).unwrap();
            assert!(o <= prev * (1.0 + 1e-12), "{o} > {prev}");
            prev = o;
        }
    }

    #[test]
    fn fold_in_identity_factors() {
        let n = 5;
        let cfg = WrmfConfig { factors: n, ..Default::default() };
        let eye = Array2::eye(n);
        let m = FactorModel::from_parts(cfg, eye.clone(), eye).unwrap();
        let u = fold_in_user(&m, &UserVector::new(n, [2]).unwrap()).unwrap();
        let expected = 16.0 / 16.1;
        for (d, v) in u.iter().enumerate() {
            if d == 2 {
                assert!((v - expected).abs() < 1e-15);
                assert!((v - 0.99379).abs() < 1e-5);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn fold_in_rejects_empty_and_mismatched_users() {
        let g = random_graph(6, 0.3, 1);
        let m = train_wrmf(&g, &WrmfConfig { factors: 2, sweeps: 1, ..Default::default() }).unwrap();
        assert_eq!(fold_in_user(&m, &UserVector::new(6, []).unwrap()), Err(WrmfError::EmptyUser));
        assert!(matches!(
            fold_in_user(&m, &UserVector::new(7, [0]).unwrap()),
            Err(WrmfError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fold_in_singular_without_regularization() {
        let cfg = WrmfConfig { factors: 2, lambda: 0.0, ..Default::default() };
        let m = FactorModel::from_parts(cfg, Array2::zeros((3, 2)), Array2::zeros((3, 2))).unwrap();
        assert_eq!(fold_in_user(&m, &UserVector::new(3, [0]).unwrap()), Err(WrmfError::Singular));
    }

    #[test]
    fn fold_in_of_own_row_matches_row_update() {
        let g = random_graph(30, 0.15, 8);
        let cfg = WrmfConfig { factors: 6, sweeps: 1, seed: 4, ..Default::default() };
        let mut t = WrmfTrainer::new(&g, cfg, Exec::Sequential).unwrap();
        t.sweep().unwrap();
        t.update_rows().unwrap();
        let m = t.model();
        for i in 0..g.len() {
            let u = fold_in_user(m, &UserVector::new(g.len(), g.row(i).iter().copied()).unwrap());
            let Ok(u) = u else {
                assert!(g.row(i).is_empty());
                continue;
            };
            for (a, b) in u.iter().zip(m.row_factors().row(i)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn ranking_rules() {
        let cfg = WrmfConfig { factors: 3, ..Default::default() };
        let y = Array2::from_shape_vec((3, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let m = FactorModel::from_parts(cfg.clone(), Array2::zeros((3, 3)), y).unwrap();
        let r = rank_candidates(&m, &[0.0, 1.0, 0.0], &[0, 1, 2]).unwrap();
        assert_eq!(r[0].0, 1);

        let same = Array2::from_shape_fn((4, 3), |(_, c)| c as f64);
        let m = FactorModel::from_parts(cfg, Array2::zeros((4, 3)), same).unwrap();
        let r = rank_candidates(&m, &[1.0, 1.0, 1.0], &[3, 1, 2, 0]).unwrap();
        assert_eq!(r.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);

        assert_eq!(rank_candidates(&m, &[1.0; 3], &[]), Err(WrmfError::NoCandidates));
        assert_eq!(rank_candidates(&m, &[1.0; 3], &[9]), Err(WrmfError::UnknownCandidate(9)));
    }

    #[test]
    fn deterministic_across_exec_modes() {
        let g = random_graph(40, 0.1, 9);
        let cfg = WrmfConfig { factors: 5, sweeps: 3, seed: 77, ..Default::default() };
        let a = train_wrmf_with(&g, &cfg, Exec::Sequential, |_, _| {}).unwrap();
        let b = train_wrmf_with(&g, &cfg, Exec::Parallel, |_, _| {}).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        assert!(WrmfConfig { factors: 0, ..Default::default() }.validate().is_err());
        assert!(WrmfConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(WrmfConfig { sweeps: 0, ..Default::default() }.validate().is_err());
        assert_eq!(
            train_wrmf(&SimilarityGraph::default(), &WrmfConfig::default()).unwrap_err(),
            WrmfError::EmptyGraph
        );
    }
}
