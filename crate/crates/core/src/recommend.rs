//! Candidate sampling and layout recommendation.
//!
//! Candidates keep every stimulus within `d_max` of its object and never
//! stack two stimuli in one cell. A batch is drawn by farthest-first
//! traversal over an oversampled random pool, so it spreads across the arm
//! space. The bandit scores each candidate; a batch is accepted once its
//! top-scoring arm has a predicted reward at or above the threshold.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{build_features, BanditState, Cell, ContextGrid, Layout, Triplet};
use crate::error::{Error, Result};
use crate::reward::{RewardFactors, RewardModel};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub batch_size: usize,
    /// Minimum predicted reward for a batch to be accepted.
    pub threshold: f64,
    pub max_batches: usize,
    /// Random pool size as a multiple of `batch_size`.
    pub pool_factor: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            batch_size: 2000,
            threshold: 0.8,
            max_batches: 5,
            pool_factor: 2,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_batches == 0 || self.pool_factor == 0 {
            return Err(Error::InvalidInput(
                "batch_size, max_batches and pool_factor must be positive".into(),
            ));
        }
        if !self.threshold.is_finite() || self.threshold < 0.0 {
            return Err(Error::InvalidInput(format!("invalid threshold {}", self.threshold)));
        }
        Ok(())
    }
}

/// Cells within `d_max` of each object.
pub fn feasible_cells(context: &ContextGrid, d_max: f64) -> Vec<Vec<Cell>> {
    let n_g = context.side();
    context
        .objects
        .iter()
        .map(|&o| {
            (0..n_g)
                .flat_map(|y| (0..n_g).map(move |x| Cell::new(x, y)))
                .filter(|c| c.distance(o) <= d_max + 1e-9)
                .collect()
        })
        .collect()
}

/// Augmenting-path assignment of distinct cells; on failure returns the
/// object that could not be placed.
fn match_distinct(feasible: &[Vec<Cell>]) -> std::result::Result<Vec<Cell>, usize> {
    fn augment(
        obj: usize,
        feasible: &[Vec<Cell>],
        owner: &mut std::collections::HashMap<Cell, usize>,
        seen: &mut std::collections::HashSet<Cell>,
    ) -> bool {
        for &c in &feasible[obj] {
            if seen.insert(c) {
                let free = match owner.get(&c) {
                    None => true,
                    Some(&other) => augment(other, feasible, owner, seen),
                };
                if free {
                    owner.insert(c, obj);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = std::collections::HashMap::new();
    for obj in 0..feasible.len() {
        let mut seen = std::collections::HashSet::new();
        if !augment(obj, feasible, &mut owner, &mut seen) {
            return Err(obj);
        }
    }
    let mut out = vec![Cell::new(0, 0); feasible.len()];
    for (c, obj) in owner {
        out[obj] = c;
    }
    Ok(out)
}

/// One random feasible layout without duplicate cells.
pub fn random_layout(feasible: &[Vec<Cell>], rng: &mut ChaCha8Rng) -> Result<Layout> {
    let n = feasible.len();
    if let Some(obj) = feasible.iter().position(|f| f.is_empty()) {
        return Err(Error::Infeasible { object: obj });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut positions = vec![Cell::new(0, 0); n];
    'attempt: for _ in 0..32 {
        order.shuffle(rng);
        let mut used: Vec<Cell> = Vec::with_capacity(n);
        for &i in &order {
            let free = feasible[i].iter().filter(|c| !used.contains(c)).count();
            if free == 0 {
                continue 'attempt;
            }
            let pick = rng.random_range(0..free);
            let cell = *feasible[i].iter().filter(|c| !used.contains(c)).nth(pick).unwrap();
            positions[i] = cell;
            used.push(cell);
        }
        return Ok(Layout::new(positions));
    }
    match_distinct(feasible)
        .map(Layout::new)
        .map_err(|object| Error::Infeasible { object })
}

/// Draws a farthest-first batch of `config.batch_size` candidates.
pub fn sample_candidates(
    context: &ContextGrid,
    d_max: f64,
    config: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Layout>> {
    config.validate()?;
    let feasible = feasible_cells(context, d_max);
    let pool_size = config.batch_size * config.pool_factor;
    let pool: Vec<Layout> = (0..pool_size)
        .map(|_| random_layout(&feasible, rng))
        .collect::<Result<_>>()?;
    Ok(farthest_first(context.side(), &pool, config.batch_size)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Greedy farthest-first selection of `k` pool indices, starting at index 0.
pub fn farthest_first(n_g: usize, pool: &[Layout], k: usize) -> Vec<usize> {
    if pool.is_empty() || k == 0 {
        return Vec::new();
    }
    let cells = n_g * n_g;
    let table: Vec<f64> = (0..cells * cells)
        .map(|ij| {
            let (a, b) = (ij / cells, ij % cells);
            Cell::new(a % n_g, a / n_g).distance(Cell::new(b % n_g, b / n_g))
        })
        .collect();
    let n = pool[0].len();
    let encoded: Vec<usize> = pool
        .iter()
        .flat_map(|l| l.positions.iter().map(|c| c.index(n_g) * cells))
        .collect();
    let last_row = |i: usize| -> Vec<usize> { encoded[i * n..(i + 1) * n].iter().map(|&p| p / cells).collect() };

    let mut chosen = Vec::with_capacity(k.min(pool.len()));
    let mut min_dist = vec![f64::INFINITY; pool.len()];
    let mut next = 0;
    while chosen.len() < k.min(pool.len()) {
        chosen.push(next);
        let last = last_row(next);
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (enc, md)) in encoded.chunks_exact(n).zip(min_dist.iter_mut()).enumerate() {
            let d: f64 = enc.iter().zip(&last).map(|(&p, &q)| table[p + q]).sum();
            if d < *md {
                *md = d;
            }
            if *md > best.0 {
                best = (*md, i);
            }
        }
        next = best.1;
    }
    chosen
}

/// Outcome of a recommendation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub positions: Layout,
    /// Exploitation-only prediction `x^T theta` of the returned layout.
    pub predicted_reward: f64,
    pub below_threshold: bool,
    pub batches_used: usize,
}

impl Recommendation {
    pub fn layout(&self) -> &Layout {
        &self.positions
    }
}

/// Samples batches until the UCB-best arm's predicted reward reaches the
/// threshold, or returns the best arm seen after `max_batches` batches.
pub fn recommend(
    state: &BanditState,
    context: &ContextGrid,
    model: &RewardModel,
    config: &SamplerConfig,
) -> Result<Recommendation> {
    config.validate()?;
    let mut rng = substream(config.seed, "recommend");
    // (ucb, prediction, layout)
    let mut best: Option<(f64, f64, Layout)> = None;
    for batch in 1..=config.max_batches {
        let candidates = sample_candidates(context, model.config.d_max, config, &mut rng)?;
        let mut batch_best: Option<(f64, f64, &Layout)> = None;
        for cand in &candidates {
            let x = build_features(context, cand, model)?;
            let score = state.ucb_score(x.as_slice())?;
            if batch_best.as_ref().is_none_or(|b| score > b.0) {
                let pred = state.predict_reward(x.as_slice())?;
                batch_best = Some((score, pred, cand));
            }
        }
        let (score, pred, layout) = batch_best.expect("batch_size >= 1");
        if pred >= config.threshold {
            return Ok(Recommendation {
                positions: layout.clone(),
                predicted_reward: pred,
                below_threshold: false,
                batches_used: batch,
            });
        }
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, pred, layout.clone()));
        }
    }
    let (_, pred, layout) = best.expect("max_batches >= 1");
    Ok(Recommendation {
        positions: layout,
        predicted_reward: pred,
        below_threshold: true,
        batches_used: config.max_batches,
    })
}

/// Recommendation with ISD excluded from features; `state` must have been
/// trained under the same exclusion.
pub fn loo_recommend(
    state: &BanditState,
    context: &ContextGrid,
    model: &RewardModel,
    config: &SamplerConfig,
) -> Result<Recommendation> {
    let loo = model.clone().with_factors(RewardFactors::LUMINANCE_ONLY);
    recommend(state, context, &loo, config)
}

/// Stimuli placed directly on their objects.
pub fn no_layout(context: &ContextGrid) -> Layout {
    Layout::new(context.objects.clone())
}

/// Uniformly random feasible arms per context, rewarded by the layout reward.
pub fn sample_training_triplets(
    contexts: &[ContextGrid],
    model: &RewardModel,
    arms_per_context: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Triplet>> {
    let mut out = Vec::with_capacity(contexts.len() * arms_per_context);
    for ctx in contexts {
        let feasible = feasible_cells(ctx, model.config.d_max);
        for _ in 0..arms_per_context {
            let arm = random_layout(&feasible, rng)?;
            let x = build_features(ctx, &arm, model)?;
            let reward = model.reward_from_components(&x.triples());
            out.push(Triplet {
                context: ctx.clone(),
                arm,
                reward,
            });
        }
    }
    Ok(out)
}

/// Trains a bandit on random arms over the given contexts.
pub fn train_on_contexts(
    contexts: &[ContextGrid],
    model: &RewardModel,
    arms_per_context: usize,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<BanditState> {
    let first = contexts.first().ok_or(Error::Empty("training contexts"))?;
    let mut state = BanditState::new(3 * first.n_objects(), lambda)?;
    for ctx in contexts {
        let feasible = feasible_cells(ctx, model.config.d_max);
        for _ in 0..arms_per_context {
            let arm = random_layout(&feasible, rng)?;
            let x = build_features(ctx, &arm, model)?;
            let reward = model.reward_from_components(&x.triples());
            state.update(x.as_slice(), reward)?;
        }
    }
    if state.observation_count() == 0 {
        return Err(Error::Empty("training dataset"));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::luminance::LuminanceGrid;
    use crate::reward::RewardConfig;

    fn ctx(grid: LuminanceGrid, objs: &[(usize, usize)]) -> ContextGrid {
        ContextGrid::new(grid, objs.iter().map(|&(x, y)| Cell::new(x, y)).collect()).unwrap()
    }

    fn model(n: usize) -> RewardModel {
        RewardModel {
            config: RewardConfig {
                n_stimuli: n,
                ..RewardConfig::default()
            },
            ..RewardModel::default()
        }
    }

    #[test]
    fn single_candidate_batch() {
        let c = ctx(LuminanceGrid::uniform(12, 0.3).unwrap(), &[(2, 2), (8, 8)]);
        let cfg = SamplerConfig {
            batch_size: 1,
            ..SamplerConfig::default()
        };
        let batch = sample_candidates(&c, 3.0 * 2f64.sqrt(), &cfg, &mut substream(1, "t")).unwrap();
        assert_eq!(batch.len(), 1);
        batch[0].validate(12).unwrap();
        for (p, o) in batch[0].positions.iter().zip(&c.objects) {
            assert!(p.distance(*o) <= 3.0 * 2f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn isolated_objects_give_identical_candidates() {
        let c = ctx(LuminanceGrid::uniform(12, 0.3).unwrap(), &[(0, 0), (5, 5), (11, 3)]);
        let cfg = SamplerConfig {
            batch_size: 20,
            ..SamplerConfig::default()
        };
        let batch = sample_candidates(&c, 0.5, &cfg, &mut substream(2, "t")).unwrap();
        assert!(batch.iter().all(|l| l.positions == c.objects));
    }

    #[test]
    fn colliding_isolated_objects_are_infeasible() {
        let grid = LuminanceGrid::uniform(4, 0.3).unwrap();
        let c = ContextGrid::new(grid, vec![Cell::new(1, 1), Cell::new(1, 1)]).unwrap();
        let cfg = SamplerConfig {
            batch_size: 2,
            ..SamplerConfig::default()
        };
        let err = sample_candidates(&c, 0.5, &cfg, &mut substream(2, "t")).unwrap_err();
        assert!(matches!(err, Error::Infeasible { object: 1 }), "{err}");
    }

    #[test]
    fn tight_neighborhoods_still_find_distinct_cells() {
        // two objects sharing a 2-cell neighborhood: only two assignments exist
        let grid = LuminanceGrid::uniform(2, 0.3).unwrap();
        let c = ContextGrid::new(grid, vec![Cell::new(0, 0), Cell::new(0, 0)]).unwrap();
        let feasible: Vec<Vec<Cell>> = vec![vec![Cell::new(0, 0), Cell::new(1, 0)]; 2];
        let l = random_layout(&feasible, &mut substream(5, "t")).unwrap();
        l.validate(2).unwrap();
        assert!(match_distinct(&feasible).is_ok());
        let _ = c;
    }

    fn mean_min_pairwise(batch: &[Layout]) -> f64 {
        let n = batch.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| batch[i].distance(&batch[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn farthest_first_is_more_diverse_than_uniform() {
        let objs = [(2, 2), (5, 3), (9, 2), (3, 8), (7, 7), (10, 10)];
        let c = ctx(LuminanceGrid::uniform(12, 0.3).unwrap(), &objs);
        let d_max = 3.0 * 2f64.sqrt();
        let feasible = feasible_cells(&c, d_max);
        let cfg = SamplerConfig {
            batch_size: 100,
            ..SamplerConfig::default()
        };
        let (mut ff, mut uni) = (0.0, 0.0);
        for seed in 0..20 {
            let mut rng = substream(seed, "diversity");
            ff += mean_min_pairwise(&sample_candidates(&c, d_max, &cfg, &mut rng).unwrap());
            let random: Vec<Layout> = (0..100).map(|_| random_layout(&feasible, &mut rng).unwrap()).collect();
            uni += mean_min_pairwise(&random);
        }
        assert!(ff >= uni, "farthest-first {ff} vs uniform {uni}");
    }

    fn half_dark_context() -> ContextGrid {
        // left half dark, right half bright
        let n_g = 12;
        let cells = (0..n_g * n_g).map(|i| if i % n_g < 6 { 0.05 } else { 0.95 }).collect();
        let grid = LuminanceGrid::new(n_g, cells).unwrap();
        ctx(grid, &[(5, 1), (6, 3), (5, 5), (6, 7), (5, 9), (6, 11)])
    }

    #[test]
    fn recommendation_prefers_dark_cells() {
        let c = half_dark_context();
        let m = model(6);
        // hand-set theta: only luminance slots matter
        let theta: Vec<f64> = (0..18).map(|i| if i % 3 == 0 { 1.0 / 6.0 } else { 0.0 }).collect();
        let eye: Vec<f64> = nalgebra::DMatrix::<f64>::identity(18, 18).as_slice().to_vec();
        let state = BanditState::from_parts(theta, eye, 0.0, 0).unwrap();
        let cfg = SamplerConfig {
            batch_size: 300,
            threshold: 0.8,
            ..SamplerConfig::default()
        };
        let rec = recommend(&state, &c, &m, &cfg).unwrap();
        let mut lums: Vec<f64> = c.grid.cells().to_vec();
        lums.sort_by(f64::total_cmp);
        let median = lums[lums.len() / 2];
        for p in &rec.positions.positions {
            assert!(c.grid.get(p.x, p.y) < median);
        }
        assert!(!rec.below_threshold);
        assert_eq!(rec.batches_used, 1);
    }

    #[test]
    fn unreachable_threshold_exhausts_batches() {
        let c = half_dark_context();
        let m = model(6);
        let state = BanditState::new(18, 0.5).unwrap();
        let cfg = SamplerConfig {
            batch_size: 50,
            threshold: 1.1,
            max_batches: 3,
            ..SamplerConfig::default()
        };
        let rec = recommend(&state, &c, &m, &cfg).unwrap();
        assert!(rec.below_threshold);
        assert_eq!(rec.batches_used, 3);
    }

    #[test]
    fn single_arm_space_is_returned_in_first_batch() {
        let c = ctx(LuminanceGrid::uniform(6, 0.0).unwrap(), &[(1, 1), (4, 4)]);
        let mut m = model(2);
        m.config.d_max = 0.5;
        let mut state = BanditState::new(6, 0.5).unwrap();
        let x = build_features(&c, &no_layout(&c), &m).unwrap();
        for _ in 0..200 {
            state.update(x.as_slice(), 1.0).unwrap();
        }
        let rec = recommend(&state, &c, &m, &SamplerConfig { batch_size: 5, ..SamplerConfig::default() }).unwrap();
        assert_eq!(rec.positions, no_layout(&c));
        assert_eq!(rec.batches_used, 1);
        assert!(rec.predicted_reward >= 0.8);
    }

    #[test]
    fn recommend_is_deterministic() {
        let c = half_dark_context();
        let m = model(6);
        let mut rng = substream(9, "train");
        let state = train_on_contexts(&[c.clone()], &m, 300, 0.5, &mut rng).unwrap();
        let cfg = SamplerConfig {
            batch_size: 200,
            seed: 42,
            ..SamplerConfig::default()
        };
        let a = recommend(&state, &c, &m, &cfg).unwrap();
        let b = recommend(&state, &c, &m, &cfg).unwrap();
        assert_eq!(a, b);
        for (p, o) in a.positions.positions.iter().zip(&c.objects) {
            assert!(p.distance(*o) <= m.config.d_max + 1e-9);
        }
    }

    #[test]
    fn no_layout_overlays_objects() {
        let c = half_dark_context();
        let l = no_layout(&c);
        assert_eq!(l.positions, c.objects);
        for (p, o) in l.positions.iter().zip(&c.objects) {
            assert_eq!(p.distance(*o), 0.0);
        }
    }

    #[test]
    fn recommendation_json_shape() {
        let rec = Recommendation {
            positions: Layout::new(vec![Cell::new(1, 2)]),
            predicted_reward: 0.5,
            below_threshold: true,
            batches_used: 2,
        };
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["positions"], serde_json::json!([[1, 2]]));
        assert_eq!(v["batches_used"], 2);
        assert_eq!(v["below_threshold"], true);
    }
}
