//! Gaussian-membership fuzzy attention.
//!
//! Each rule `j` projects a token `x` to a query `W_j^Q x`, scores it against
//! the rule centre `r_j` with a diagonal Mahalanobis distance, and the
//! softmax of the negative distances weights the value projections
//! `W_j^V x`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// One rule, with matrices stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRule {
    pub center: Vec<f64>,
    pub variances: Vec<f64>,
    /// `query_dim x input_dim`
    pub query: Vec<f64>,
    /// `value_dim x input_dim`
    pub value: Vec<f64>,
}

/// A set of rules sharing dimensions, with parameters flattened per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyLayer {
    input_dim: usize,
    query_dim: usize,
    value_dim: usize,
    n_rules: usize,
    pub(crate) centers: Vec<f64>,
    pub(crate) log_variances: Vec<f64>,
    pub(crate) queries: Vec<f64>,
    pub(crate) values: Vec<f64>,
}

/// Gradient buffers with the same layout as [`FuzzyLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGrad {
    pub centers: Vec<f64>,
    pub log_variances: Vec<f64>,
    pub queries: Vec<f64>,
    pub values: Vec<f64>,
}

/// Intermediate values of one token's forward pass.
#[derive(Debug, Clone, Default)]
pub struct TokenCache {
    residuals: Vec<f64>,
    projections: Vec<f64>,
    strengths: Vec<f64>,
}

impl TokenCache {
    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }
}

impl FuzzyLayer {
    pub fn new(rules: Vec<FuzzyRule>, input_dim: usize) -> Result<Self> {
        let first = rules.first().ok_or(Error::Empty("fuzzy rules"))?;
        let (query_dim, value_dim) = (first.center.len(), first.value.len() / input_dim.max(1));
        if input_dim == 0 || query_dim == 0 || value_dim == 0 {
            return Err(Error::InvalidInput("fuzzy rule dimensions must be positive".into()));
        }
        let mut layer = Self {
            input_dim,
            query_dim,
            value_dim,
            n_rules: rules.len(),
            centers: Vec::new(),
            log_variances: Vec::new(),
            queries: Vec::new(),
            values: Vec::new(),
        };
        for rule in rules {
            let check = |actual: usize, expected: usize| {
                if actual == expected {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch { expected, actual })
                }
            };
            check(rule.center.len(), query_dim)?;
            check(rule.variances.len(), query_dim)?;
            check(rule.query.len(), query_dim * input_dim)?;
            check(rule.value.len(), value_dim * input_dim)?;
            if rule.variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidInput("fuzzy rule variances must be positive and finite".into()));
            }
            for part in [&rule.center, &rule.query, &rule.value] {
                ensure_finite(part, "fuzzy rule parameters")?;
            }
            layer.centers.extend_from_slice(&rule.center);
            layer.log_variances.extend(rule.variances.iter().map(|v| v.ln()));
            layer.queries.extend_from_slice(&rule.query);
            layer.values.extend_from_slice(&rule.value);
        }
        Ok(layer)
    }

    /// Random initialization. Queries are Gaussian with variance
    /// `1 / input_dim`, centres start at zero and variances at one. With
    /// `identity_values` (square layers only) every value matrix starts as
    /// the identity plus small noise, so the layer initially passes its
    /// input through.
    pub fn random<R: Rng + ?Sized>(
        n_rules: usize,
        input_dim: usize,
        query_dim: usize,
        value_dim: usize,
        identity_values: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if n_rules == 0 || input_dim == 0 || query_dim == 0 || value_dim == 0 {
            return Err(Error::InvalidInput("fuzzy layer dimensions must be positive".into()));
        }
        if identity_values && value_dim != input_dim {
            return Err(Error::InvalidInput("identity value init needs a square value matrix".into()));
        }
        let q_std = Normal::new(0.0, (1.0 / input_dim as f64).sqrt()).unwrap();
        let v_noise = if identity_values { 0.05 } else { (1.0 / input_dim as f64).sqrt() };
        let v_std = Normal::new(0.0, v_noise).unwrap();
        let mut queries = Vec::with_capacity(n_rules * query_dim * input_dim);
        let mut values = Vec::with_capacity(n_rules * value_dim * input_dim);
        for _ in 0..n_rules {
            queries.extend((0..query_dim * input_dim).map(|_| q_std.sample(rng)));
            for r in 0..value_dim {
                for c in 0..input_dim {
                    let base = if identity_values && r == c { 1.0 } else { 0.0 };
                    values.push(base + v_std.sample(rng));
                }
            }
        }
        Ok(Self {
            input_dim,
            query_dim,
            value_dim,
            n_rules,
            centers: vec![0.0; n_rules * query_dim],
            log_variances: vec![0.0; n_rules * query_dim],
            queries,
            values,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn query_dim(&self) -> usize {
        self.query_dim
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn n_rules(&self) -> usize {
        self.n_rules
    }

    pub fn rule(&self, j: usize) -> FuzzyRule {
        let (q, v, d) = (self.query_dim, self.value_dim, self.input_dim);
        FuzzyRule {
            center: self.centers[j * q..(j + 1) * q].to_vec(),
            variances: self.log_variances[j * q..(j + 1) * q].iter().map(|s| s.exp()).collect(),
            query: self.queries[j * q * d..(j + 1) * q * d].to_vec(),
            value: self.values[j * v * d..(j + 1) * v * d].to_vec(),
        }
    }

    pub fn rules(&self) -> Vec<FuzzyRule> {
        (0..self.n_rules).map(|j| self.rule(j)).collect()
    }

    pub fn zero_grad(&self) -> FuzzyGrad {
        FuzzyGrad {
            centers: vec![0.0; self.centers.len()],
            log_variances: vec![0.0; self.log_variances.len()],
            queries: vec![0.0; self.queries.len()],
            values: vec![0.0; self.values.len()],
        }
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.centers, &mut self.log_variances, &mut self.queries, &mut self.values]
    }

    /// Normalized firing strengths of every rule for one token.
    pub fn firing_strengths(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_token(x)?;
        let mut cache = TokenCache::default();
        let mut y = vec![0.0; self.value_dim];
        self.forward_token(x, &mut cache, &mut y);
        Ok(cache.strengths)
    }

    fn check_token(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Writes the attended output for token `x` into `y` and records the
    /// intermediates needed by [`backward_token`](Self::backward_token).
    pub fn forward_token(&self, x: &[f64], cache: &mut TokenCache, y: &mut [f64]) {
        let (d, q, v, n) = (self.input_dim, self.query_dim, self.value_dim, self.n_rules);
        cache.residuals.resize(n * q, 0.0);
        cache.projections.resize(n * v, 0.0);
        cache.strengths.resize(n, 0.0);
        for j in 0..n {
            let mut dist = 0.0;
            for k in 0..q {
                let row = &self.queries[(j * q + k) * d..(j * q + k + 1) * d];
                let e = dot(row, x) - self.centers[j * q + k];
                cache.residuals[j * q + k] = e;
                dist += e * e * (-self.log_variances[j * q + k]).exp();
            }
            cache.strengths[j] = -dist;
            for k in 0..v {
                let row = &self.values[(j * v + k) * d..(j * v + k + 1) * d];
                cache.projections[j * v + k] = dot(row, x);
            }
        }
        softmax_in_place(&mut cache.strengths);
        y.fill(0.0);
        for j in 0..n {
            let w = cache.strengths[j];
            for (yk, pk) in y.iter_mut().zip(&cache.projections[j * v..(j + 1) * v]) {
                *yk += w * pk;
            }
        }
    }

    /// Accumulates parameter gradients for one token given the output
    /// gradient `gy`, and adds the input gradient to `gx` when requested.
    pub fn backward_token(&self, x: &[f64], cache: &TokenCache, gy: &[f64], grad: &mut FuzzyGrad, gx: Option<&mut [f64]>) {
        let (d, q, v, n) = (self.input_dim, self.query_dim, self.value_dim, self.n_rules);
        let w = &cache.strengths;
        let gw: Vec<f64> = (0..n).map(|j| dot(gy, &cache.projections[j * v..(j + 1) * v])).collect();
        let mean_gw = dot(w, &gw);
        let mut gx = gx;
        for j in 0..n {
            // gradient of the loss with respect to the distance of rule j
            let gdist = -w[j] * (gw[j] - mean_gw);
            for k in 0..q {
                let idx = j * q + k;
                let inv_var = (-self.log_variances[idx]).exp();
                let e = cache.residuals[idx];
                let ge = gdist * 2.0 * e * inv_var;
                grad.log_variances[idx] -= gdist * e * e * inv_var;
                grad.centers[idx] -= ge;
                let row = idx * d;
                axpy(ge, x, &mut grad.queries[row..row + d]);
                if let Some(gx) = gx.as_deref_mut() {
                    axpy(ge, &self.queries[row..row + d], gx);
                }
            }
            for k in 0..v {
                let coef = w[j] * gy[k];
                let row = (j * v + k) * d;
                axpy(coef, x, &mut grad.values[row..row + d]);
                if let Some(gx) = gx.as_deref_mut() {
                    axpy(coef, &self.values[row..row + d], gx);
                }
            }
        }
    }
}

impl FuzzyGrad {
    pub(crate) fn parts(&self) -> [&Vec<f64>; 4] {
        [&self.centers, &self.log_variances, &self.queries, &self.values]
    }

    pub(crate) fn fill_zero(&mut self) {
        for part in [&mut self.centers, &mut self.log_variances, &mut self.queries, &mut self.values] {
            part.fill(0.0);
        }
    }
}

/// Temporal attention: every column `x(t)` of `signal` (channels x time) is a
/// token. Returns the attended signal and the `T x N_r` firing strengths.
pub fn tal_forward(signal: &DMatrix<f64>, layer: &FuzzyLayer) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if signal.nrows() != layer.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: layer.input_dim(),
            actual: signal.nrows(),
        });
    }
    let (c, t) = signal.shape();
    let mut out = DMatrix::zeros(layer.value_dim(), t);
    let mut strengths = DMatrix::zeros(t, layer.n_rules());
    let mut cache = TokenCache::default();
    for ti in 0..t {
        let x = &signal.as_slice()[ti * c..(ti + 1) * c];
        layer.forward_token(x, &mut cache, out.column_mut(ti).as_mut_slice());
        for (j, w) in cache.strengths.iter().enumerate() {
            strengths[(ti, j)] = *w;
        }
    }
    Ok((out, strengths))
}

/// Spatial attention: every channel row of `signal` is a token. Returns the
/// `value_dim x C` attended features and the `C x N_r` firing strengths.
pub fn sal_forward(signal: &DMatrix<f64>, layer: &FuzzyLayer) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    tal_forward(&signal.transpose(), layer)
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::{prop_assert, proptest};

    fn identity(n: usize) -> Vec<f64> {
        (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect()
    }

    fn rule(center: Vec<f64>, variances: Vec<f64>, n: usize) -> FuzzyRule {
        FuzzyRule {
            center,
            variances,
            query: identity(n),
            value: identity(n),
        }
    }

    #[test]
    fn single_rule_has_unit_strength() {
        let layer = FuzzyLayer::random(1, 3, 3, 3, true, &mut substream(1, "t")).unwrap();
        assert_eq!(layer.firing_strengths(&[5.0, -2.0, 1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn identical_rules_split_evenly() {
        let r = rule(vec![0.3, -0.1], vec![1.0, 2.0], 2);
        let layer = FuzzyLayer::new(vec![r.clone(), r], 2).unwrap();
        let w = layer.firing_strengths(&[1.0, 2.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_softmax() {
        // rule 2 sits at squared Mahalanobis distance ln 4 from the input
        let layer = FuzzyLayer::new(
            vec![rule(vec![0.0], vec![1.0], 1), rule(vec![4f64.ln().sqrt()], vec![1.0], 1)],
            1,
        )
        .unwrap();
        let w = layer.firing_strengths(&[0.0]).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-6 && (w[1] - 0.2).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn distant_rules_do_not_overflow() {
        let layer = FuzzyLayer::new(vec![rule(vec![1e6], vec![1e-6], 1), rule(vec![2e6], vec![1e-6], 1)], 1).unwrap();
        let w = layer.firing_strengths(&[0.0]).unwrap();
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_rejected() {
        assert!(FuzzyLayer::new(vec![rule(vec![0.0], vec![0.0], 1)], 1).is_err());
        assert!(FuzzyLayer::new(vec![], 1).is_err());
    }

    #[test]
    fn identity_values_pass_input_through() {
        let layer = FuzzyLayer::new(vec![rule(vec![0.0, 0.0], vec![1.0, 1.0], 2)], 2).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let (y, s) = tal_forward(&x, &layer).unwrap();
        assert_eq!(y, x);
        assert_eq!(s.shape(), (3, 1));
    }

    #[test]
    fn zero_values_give_zero_output() {
        let mut layer = FuzzyLayer::random(3, 2, 2, 2, false, &mut substream(2, "t")).unwrap();
        layer.values.fill(0.0);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(tal_forward(&x, &layer).unwrap().0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sal_is_tal_on_transpose() {
        let layer = FuzzyLayer::random(2, 4, 3, 2, false, &mut substream(3, "t")).unwrap();
        let y = DMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let (a, sa) = sal_forward(&y, &layer).unwrap();
        let (b, sb) = tal_forward(&y.transpose(), &layer).unwrap();
        assert!((a - b).abs().max() <= 1e-12);
        assert!((sa.clone() - sb).abs().max() <= 1e-12);
        assert_eq!(sa.shape(), (5, 2));
    }

    proptest! {
        #[test]
        fn strengths_sum_to_one(seed in 0u64..500, scale in 0.01f64..50.0) {
            let mut rng = substream(seed, "prop");
            let mut layer = FuzzyLayer::random(4, 3, 3, 3, false, &mut rng).unwrap();
            for c in layer.centers.iter_mut() {
                *c = rng.random_range(-2.0..2.0);
            }
            for s in layer.log_variances.iter_mut() {
                *s = rng.random_range(-3.0..3.0);
            }
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-scale..scale)).collect();
            let w = layer.firing_strengths(&x).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
