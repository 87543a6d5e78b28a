//! Linear contextual bandit over stimulus layouts.
//!
//! A context is a luminance grid plus one object cell per stimulus; an arm is
//! a full layout (one cell per stimulus). Each (context, arm) pair maps to a
//! `3N` feature vector of transformed reward components, and the expected
//! reward is modelled as linear in those features. The estimate is the ridge
//! solution `A^-1 b` with `A = I + sum x x^T`, and arms are scored by
//! `x^T theta + lambda * sqrt(x^T A^-1 x)`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::luminance::LuminanceGrid;
use crate::reward::{RewardConfig, RewardModel, StimulusAssessment};

/// Default exploration coefficient.
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// A grid cell, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Euclidean distance between cell centers, in grid units.
    pub fn distance(self, other: Cell) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx.hypot(dy)
    }

    pub fn index(self, n_g: usize) -> usize {
        self.y * n_g + self.x
    }

    fn check(self, n_g: usize) -> Result<()> {
        if self.x < n_g && self.y < n_g {
            Ok(())
        } else {
            Err(Error::OutOfGrid {
                x: self.x as i64,
                y: self.y as i64,
                n_g,
            })
        }
    }
}

impl From<[usize; 2]> for Cell {
    fn from([x, y]: [usize; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

/// Scene context: luminance grid and the object each stimulus selects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextGrid {
    pub grid: LuminanceGrid,
    pub objects: Vec<Cell>,
}

impl ContextGrid {
    pub fn new(grid: LuminanceGrid, objects: Vec<Cell>) -> Result<Self> {
        if objects.is_empty() {
            return Err(Error::Empty("context has no objects"));
        }
        for &o in &objects {
            o.check(grid.side())?;
        }
        Ok(Self { grid, objects })
    }

    pub fn side(&self) -> usize {
        self.grid.side()
    }

    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }
}

/// One cell per stimulus, in object order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Layout {
    pub positions: Vec<Cell>,
}

impl Layout {
    pub fn new(positions: Vec<Cell>) -> Self {
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks bounds and pairwise distinctness against a grid side.
    pub fn validate(&self, n_g: usize) -> Result<()> {
        for (i, &p) in self.positions.iter().enumerate() {
            p.check(n_g)?;
            if self.positions[..i].contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "stimuli {} and {i} share cell ({}, {})",
                    self.positions[..i].iter().position(|&q| q == p).unwrap(),
                    p.x,
                    p.y
                )));
            }
        }
        Ok(())
    }

    /// Distance from stimulus `i` to its nearest neighbor, grid units
    /// (`+inf` for a single stimulus).
    pub fn nearest_neighbor_distance(&self, i: usize) -> f64 {
        self.positions
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &q)| self.positions[i].distance(q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest pairwise distance in the layout.
    pub fn min_pairwise_distance(&self) -> f64 {
        (0..self.len())
            .map(|i| self.nearest_neighbor_distance(i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Correspondence-wise distance between two layouts of equal length.
    pub fn distance(&self, other: &Layout) -> f64 {
        self.positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| a.distance(*b))
            .sum()
    }
}

/// Reward-transformed `(luminance, ISD, SOD)` triple per stimulus, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Per-stimulus component triples.
    pub fn triples(&self) -> Vec<[f64; 3]> {
        self.0.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }
}

/// Raw per-stimulus quantities of a layout in a context.
pub fn assess(
    context: &ContextGrid,
    arm: &Layout,
    config: &RewardConfig,
) -> Result<Vec<StimulusAssessment>> {
    if arm.len() != context.n_objects() {
        return Err(Error::DimensionMismatch {
            expected: context.n_objects(),
            actual: arm.len(),
        });
    }
    let n_g = context.side();
    for &p in &arm.positions {
        p.check(n_g)?;
    }
    Ok(arm
        .positions
        .iter()
        .enumerate()
        .map(|(i, &p)| StimulusAssessment {
            luminance: context.grid.get(p.x, p.y),
            nearest_neighbor_distance: arm.nearest_neighbor_distance(i) * config.degrees_per_cell,
            object_distance: p.distance(context.objects[i]),
        })
        .collect())
}

/// Feature vector of a (context, arm) pair: slot `3i` luminance reward,
/// `3i + 1` ISD reward, `3i + 2` SOD reward.
pub fn build_features(context: &ContextGrid, arm: &Layout, model: &RewardModel) -> Result<FeatureVector> {
    let assessments = assess(context, arm, &model.config)?;
    Ok(FeatureVector(
        assessments.iter().flat_map(|s| model.components(s)).collect(),
    ))
}

/// Ridge-regression bandit state.
#[derive(Debug, Clone)]
pub struct BanditState {
    theta: DVector<f64>,
    design: DMatrix<f64>,
    design_inv: DMatrix<f64>,
    b: DVector<f64>,
    lambda: f64,
    observation_count: u64,
}

impl PartialEq for BanditState {
    fn eq(&self, other: &Self) -> bool {
        self.theta == other.theta
            && self.design == other.design
            && self.lambda == other.lambda
            && self.observation_count == other.observation_count
    }
}

impl BanditState {
    /// Fresh state: `theta = 0`, `A = I`.
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            theta: DVector::zeros(dim),
            design: DMatrix::identity(dim, dim),
            design_inv: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
            lambda,
            observation_count: 0,
        })
    }

    /// State with explicit parameters; `b` is recovered as `A theta`.
    pub fn from_parts(theta: Vec<f64>, design_row_major: Vec<f64>, lambda: f64, observation_count: u64) -> Result<Self> {
        let dim = theta.len();
        if design_row_major.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: design_row_major.len(),
            });
        }
        ensure_finite(&theta, "theta")?;
        ensure_finite(&design_row_major, "design matrix")?;
        let mut state = Self::new(dim, lambda)?;
        let design = DMatrix::from_row_slice(dim, dim, &design_row_major);
        if (&design - design.transpose()).amax() > 1e-9 * design.amax().max(1.0) {
            return Err(Error::InvalidInput("design matrix is not symmetric".into()));
        }
        let chol = design.clone().cholesky().ok_or(Error::Singular)?;
        state.theta = DVector::from_vec(theta);
        state.b = &design * &state.theta;
        state.design_inv = chol.inverse();
        state.design = design;
        state.observation_count = observation_count;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        self.theta.as_slice()
    }

    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(())
    }

    pub fn observation_count(&self) -> u64 {
        self.observation_count
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            })
        }
    }

    /// `x^T theta`.
    pub fn predict_reward(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.theta.iter()).map(|(a, b)| a * b).sum()
    }

    /// `sqrt(x^T A^-1 x)`.
    pub fn confidence_width(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.width_unchecked(x))
    }

    fn width_unchecked(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut q = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.design_inv[(i, j)] * x[j];
            }
            q += x[i] * row;
        }
        q.max(0.0).sqrt()
    }

    /// Optimistic score `x^T theta + lambda * ||x||_{A^-1}`.
    pub fn ucb_score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.predict_unchecked(x) + self.lambda * self.width_unchecked(x))
    }

    /// Folds one observation into `A` and `b` and re-solves for `theta`.
    pub fn update(&mut self, x: &[f64], reward: f64) -> Result<()> {
        self.check_dim(x)?;
        ensure_finite(x, "feature vector")?;
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        let xv = DVector::from_column_slice(x);
        self.design.ger(1.0, &xv, &xv, 1.0);
        self.b.axpy(reward, &xv, 1.0);
        let chol = self.design.clone().cholesky().ok_or(Error::Singular)?;
        self.theta = chol.solve(&self.b);
        self.design_inv = chol.inverse();
        self.observation_count += 1;
        Ok(())
    }

    /// Fresh state folded over `(features, reward)` samples in order.
    pub fn train_features<'a, I>(dim: usize, lambda: f64, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut state = Self::new(dim, lambda)?;
        let mut any = false;
        for (x, r) in samples {
            state.update(x, r)?;
            any = true;
        }
        if !any {
            return Err(Error::Empty("training dataset"));
        }
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.dim();
        let design: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.design[(i, j)])
            .collect();
        Ok(serde_json::to_string_pretty(&StateFile {
            theta: self.theta.as_slice().to_vec(),
            design_matrix: design,
            lambda: self.lambda,
            observation_count: self.observation_count,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StateFile = serde_json::from_str(text)?;
        Self::from_parts(file.theta, file.design_matrix, file.lambda, file.observation_count)
    }
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    theta: Vec<f64>,
    design_matrix: Vec<f64>,
    lambda: f64,
    observation_count: u64,
}

/// One training triplet: context, arm and observed reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub context: ContextGrid,
    pub arm: Layout,
    pub reward: f64,
}

/// Trains a fresh bandit on triplets, in dataset order.
pub fn train(dataset: &[Triplet], model: &RewardModel, lambda: f64) -> Result<BanditState> {
    let first = dataset.first().ok_or(Error::Empty("training dataset"))?;
    let dim = 3 * first.context.n_objects();
    let mut state = BanditState::new(dim, lambda)?;
    for t in dataset {
        let x = build_features(&t.context, &t.arm, model)?;
        state.update(x.as_slice(), t.reward)?;
    }
    Ok(state)
}

pub fn write_triplets<W: Write>(mut out: W, triplets: &[Triplet]) -> Result<()> {
    for t in triplets {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_triplets<R: BufRead>(input: R) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardCurve;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn unit(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    fn two_anchor_model(n: usize, degrees_per_cell: f64) -> RewardModel {
        RewardModel {
            luminance: RewardCurve::from_anchors(&[(0.1, 0.91), (0.9, 0.25)]).unwrap(),
            isd: RewardCurve::from_anchors(&[(5.0, 0.46), (40.0, 0.92)]).unwrap(),
            config: RewardConfig {
                n_stimuli: n,
                degrees_per_cell,
                ..RewardConfig::default()
            },
            ..RewardModel::default()
        }
    }

    fn context(n_g: usize, objects: &[(usize, usize)]) -> ContextGrid {
        let grid = LuminanceGrid::uniform(n_g, 0.5).unwrap();
        ContextGrid::new(grid, objects.iter().map(|&(x, y)| Cell::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn stimuli_on_objects_get_full_sod_reward() {
        let objs = [(0, 0), (3, 1), (5, 5), (9, 2), (2, 8), (11, 11)];
        let ctx = context(12, &objs);
        let arm = Layout::new(ctx.objects.clone());
        let x = build_features(&ctx, &arm, &RewardModel::default()).unwrap();
        assert_eq!(x.len(), 18);
        for t in x.triples() {
            assert_eq!(t[2], 1.0);
        }
    }

    #[test]
    fn adjacent_stimuli_get_zero_isd_reward() {
        let ctx = context(6, &[(2, 2), (3, 2)]);
        let arm = Layout::new(ctx.objects.clone());
        let x = build_features(&ctx, &arm, &two_anchor_model(2, 5.0)).unwrap();
        assert_eq!(x.as_slice()[1], 0.0);
        assert_eq!(x.as_slice()[4], 0.0);
    }

    #[test]
    fn features_reject_out_of_grid_positions() {
        let ctx = context(6, &[(2, 2), (3, 2)]);
        let arm = Layout::new(vec![Cell::new(2, 2), Cell::new(6, 0)]);
        assert!(matches!(
            build_features(&ctx, &arm, &two_anchor_model(2, 5.0)),
            Err(Error::OutOfGrid { .. })
        ));
    }

    #[test]
    fn predict_examples() {
        let fresh = BanditState::new(18, 0.5).unwrap();
        assert_eq!(fresh.predict_reward(&[0.3; 18]).unwrap(), 0.0);

        let mut e1 = vec![0.0; 18];
        e1[0] = 1.0;
        let s = BanditState::from_parts(e1.clone(), DMatrix::<f64>::identity(18, 18).as_slice().to_vec(), 0.5, 0).unwrap();
        let mut x = vec![0.0; 18];
        x[0] = 0.5;
        assert_eq!(s.predict_reward(&x).unwrap(), 0.5);

        let ones = BanditState::from_parts(vec![1.0; 18], DMatrix::<f64>::identity(18, 18).as_slice().to_vec(), 0.5, 0).unwrap();
        assert!((ones.predict_reward(&[1.0 / 18.0; 18]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ones.predict_reward(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ucb_examples() {
        let fresh = BanditState::new(18, 0.5).unwrap();
        let x = unit(18, 4);
        assert!((fresh.ucb_score(&x).unwrap() - 0.5).abs() < 1e-12);

        let mut greedy = BanditState::new(18, 0.0).unwrap();
        greedy.update(&[0.2; 18], 0.7).unwrap();
        let probe = [0.4; 18];
        assert_eq!(greedy.ucb_score(&probe).unwrap(), greedy.predict_reward(&probe).unwrap());

        let mut s = BanditState::new(18, 0.5).unwrap();
        let mut last = s.confidence_width(&x).unwrap();
        for _ in 0..20 {
            s.update(&x, 0.3).unwrap();
            let w = s.confidence_width(&x).unwrap();
            assert!(w < last);
            last = w;
        }
    }

    #[test]
    fn update_examples() {
        let mut s = BanditState::new(18, 0.5).unwrap();
        s.update(&unit(18, 0), 1.0).unwrap();
        assert!((s.design_matrix()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((s.design_matrix()[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((s.theta()[0] - 0.5).abs() < 1e-12);
        assert!(s.theta()[1..].iter().all(|&t| t.abs() < 1e-15));
        assert_eq!(s.observation_count(), 1);

        let mut z = BanditState::new(18, 0.5).unwrap();
        z.update(&unit(18, 0), 0.0).unwrap();
        assert!(z.theta().iter().all(|&t| t == 0.0));

        let mut rep = BanditState::new(18, 0.5).unwrap();
        let x: Vec<f64> = (0..18).map(|i| (i as f64 + 1.0) / 20.0).collect();
        for _ in 0..1000 {
            rep.update(&x, 0.8).unwrap();
        }
        assert!((rep.predict_reward(&x).unwrap() - 0.8).abs() < 1e-3);
    }

    #[test]
    fn update_rejects_non_finite() {
        let mut s = BanditState::new(3, 0.5).unwrap();
        assert!(s.update(&[f64::NAN, 0.0, 0.0], 1.0).is_err());
        assert!(s.update(&[0.0, 0.0, 0.0], f64::INFINITY).is_err());
        assert_eq!(s.observation_count(), 0);
    }

    #[test]
    fn train_single_sample_matches_update() {
        let ctx = context(6, &[(1, 1), (4, 4)]);
        let arm = Layout::new(vec![Cell::new(1, 2), Cell::new(4, 3)]);
        let model = two_anchor_model(2, 4.0);
        let t = Triplet {
            context: ctx.clone(),
            arm: arm.clone(),
            reward: 0.6,
        };
        let trained = train(&[t], &model, 0.5).unwrap();
        let mut manual = BanditState::new(6, 0.5).unwrap();
        manual.update(build_features(&ctx, &arm, &model).unwrap().as_slice(), 0.6).unwrap();
        assert_eq!(trained, manual);
        assert!(matches!(train(&[], &model, 0.5), Err(Error::Empty(_))));
    }

    #[test]
    fn training_is_order_invariant() {
        let mut rng = crate::rng::substream(3, "order");
        let samples: Vec<(Vec<f64>, f64)> = (0..200)
            .map(|_| ((0..18).map(|_| rng.random::<f64>()).collect(), rng.random::<f64>()))
            .collect();
        let fwd = BanditState::train_features(18, 0.5, samples.iter().map(|(x, r)| (x.as_slice(), *r))).unwrap();
        let rev = BanditState::train_features(18, 0.5, samples.iter().rev().map(|(x, r)| (x.as_slice(), *r))).unwrap();
        for (a, b) in fwd.theta().iter().zip(rev.theta()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn recovers_linear_parameters() {
        let mut rng = crate::rng::substream(11, "recovery");
        let theta_star: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut s = BanditState::new(18, 0.5).unwrap();
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..18).map(|_| rng.random::<f64>()).collect();
            let r: f64 = x.iter().zip(&theta_star).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng);
            s.update(&x, r).unwrap();
        }
        let err: f64 = s.theta().iter().zip(&theta_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 0.05, "recovery error {err}");
    }

    #[test]
    fn state_json_round_trip() {
        let mut s = BanditState::new(4, 0.25).unwrap();
        s.update(&[0.1, 0.2, 0.3, 0.4], 0.5).unwrap();
        s.update(&[0.9, 0.0, 0.3, 0.1], 0.2).unwrap();
        let text = s.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["design_matrix"].as_array().unwrap().len(), 16);
        assert_eq!(v["observation_count"], 2);
        let back = BanditState::from_json(&text).unwrap();
        for (a, b) in back.theta().iter().zip(s.theta()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut a = s.clone();
        let mut b2 = back.clone();
        a.update(&[0.5; 4], 0.9).unwrap();
        b2.update(&[0.5; 4], 0.9).unwrap();
        for (x, y) in a.theta().iter().zip(b2.theta()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(BanditState::from_json("{\"theta\":[1.0],\"design_matrix\":[-1.0],\"lambda\":0.5,\"observation_count\":0}").is_err());
    }

    #[test]
    fn triplets_jsonl_round_trip() {
        let ctx = context(3, &[(0, 0), (2, 2)]);
        let t = Triplet {
            context: ctx,
            arm: Layout::new(vec![Cell::new(0, 1), Cell::new(2, 1)]),
            reward: 0.25,
        };
        let mut buf = Vec::new();
        write_triplets(&mut buf, &[t.clone(), t.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"arm\":[[0,1],[2,1]]"));
        assert_eq!(read_triplets(buf.as_slice()).unwrap(), vec![t.clone(), t]);
    }

    proptest! {
        #[test]
        fn design_matrix_stays_spd(xs in proptest::collection::vec((proptest::collection::vec(-2.0f64..2.0, 5), -1.0f64..1.0), 1..40)) {
            let mut s = BanditState::new(5, 0.5).unwrap();
            for (x, r) in &xs {
                s.update(x, *r).unwrap();
            }
            let a = s.design_matrix();
            prop_assert!((a - a.transpose()).amax() < 1e-9);
            let eig = a.clone().symmetric_eigen();
            prop_assert!(eig.eigenvalues.iter().all(|&l| l >= 1.0 - 1e-9));
            prop_assert!(s.theta().iter().all(|t| t.is_finite()));
        }

        #[test]
        fn ucb_is_optimistic(xs in proptest::collection::vec((proptest::collection::vec(0.0f64..1.0, 6), 0.0f64..1.0), 0..20), probe in proptest::collection::vec(0.0f64..1.0, 6), lambda in 0.0f64..3.0) {
            let mut s = BanditState::new(6, lambda).unwrap();
            for (x, r) in &xs {
                s.update(x, *r).unwrap();
            }
            let p = s.predict_reward(&probe).unwrap();
            prop_assert!(s.ucb_score(&probe).unwrap() >= p);
            let l1: f64 = s.theta().iter().map(|t| t.abs()).sum();
            prop_assert!(p.abs() <= l1 + 1e-12);
        }
    }
}
