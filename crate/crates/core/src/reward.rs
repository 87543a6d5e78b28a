//! Reward functions for stimulus layouts.
//!
//! Luminance and inter-stimulus distance (ISD) rewards come from measured
//! decoding accuracies: each anchor set is min-max normalized and
//! interpolated piecewise-linearly. The stimulus-object distance (SOD) reward
//! is a linear falloff. A layout's reward blends the mean and the minimum of
//! the per-stimulus component sums.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LUMINANCE_ANCHORS: &str = include_str!("../data/luminance_anchors.csv");
const ISD_ANCHORS: &str = include_str!("../data/isd_anchors.csv");

/// Monotone piecewise-linear interpolant over normalized accuracy anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCurve {
    anchors: Vec<(f64, f64)>,
    rewards: Vec<f64>,
}

impl RewardCurve {
    /// Builds a curve from `(factor, accuracy)` points sorted by factor.
    pub fn from_anchors(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a reward curve needs at least 2 anchors, got {}",
                points.len()
            )));
        }
        if points.iter().any(|(x, a)| !x.is_finite() || !a.is_finite()) {
            return Err(Error::NonFinite("reward anchors"));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput(format!(
                "anchor factors must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, a)| {
                (lo.min(a), hi.max(a))
            });
        if hi <= lo {
            return Err(Error::InvalidInput(
                "all anchor accuracies are equal; the curve has no dynamic range".into(),
            ));
        }
        let rewards = points.iter().map(|&(_, a)| (a - lo) / (hi - lo)).collect();
        Ok(Self {
            anchors: points.to_vec(),
            rewards,
        })
    }

    /// Parses `factor,accuracy` CSV; lines starting with `#` are ignored.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            factor: f64,
            accuracy: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["factor", "accuracy"] {
            return Err(Error::Format(format!(
                "anchor CSV header must be `factor,accuracy`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let points = rdr
            .deserialize::<Row>()
            .map(|row| row.map(|r| (r.factor, r.accuracy)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_anchors(&points)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    /// Luminance anchors shipped with the crate (normalized luminance 0.1..0.9).
    pub fn default_luminance() -> Self {
        Self::from_csv(LUMINANCE_ANCHORS.as_bytes()).expect("bundled luminance anchors are valid")
    }

    /// ISD anchors shipped with the crate (5..45 degrees of visual angle).
    pub fn default_isd() -> Self {
        Self::from_csv(ISD_ANCHORS.as_bytes()).expect("bundled ISD anchors are valid")
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    /// Normalized reward at each anchor.
    pub fn anchor_rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Reward at `x`, clamped to the terminal anchors outside their range.
    /// `+inf` maps to the last anchor.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.anchors.len();
        if x.is_nan() {
            return self.rewards[0];
        }
        if x <= self.anchors[0].0 {
            return self.rewards[0];
        }
        if x >= self.anchors[n - 1].0 {
            return self.rewards[n - 1];
        }
        // first anchor strictly above x
        let hi = self.anchors.partition_point(|&(f, _)| f <= x);
        let (x0, x1) = (self.anchors[hi - 1].0, self.anchors[hi].0);
        let (r0, r1) = (self.rewards[hi - 1], self.rewards[hi]);
        let t = (x - x0) / (x1 - x0);
        (r0 + t * (r1 - r0)).clamp(0.0, 1.0)
    }
}

impl RewardCurve {
    /// Interpolated raw accuracy at `x`, clamped like [`eval`](Self::eval).
    pub fn accuracy(&self, x: f64) -> f64 {
        let (lo, hi) = self.accuracy_range();
        lo + self.eval(x) * (hi - lo)
    }

    /// Lowest and highest anchor accuracy.
    pub fn accuracy_range(&self) -> (f64, f64) {
        self.anchors
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, a)| (lo.min(a), hi.max(a)))
    }
}

/// `max(0, 1 - d / d_max)`.
pub fn sod_reward(distance: f64, d_max: f64) -> f64 {
    (1.0 - distance / d_max).max(0.0)
}

/// Blend weight, SOD radius, stimulus count and the grid-to-angle scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub alpha: f64,
    pub d_max: f64,
    pub n_stimuli: usize,
    /// Visual angle spanned by one grid cell, in degrees.
    pub degrees_per_cell: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            d_max: 3.0 * std::f64::consts::SQRT_2,
            n_stimuli: 6,
            degrees_per_cell: 4.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::InvalidInput(format!("d_max must be positive, got {}", self.d_max)));
        }
        if self.n_stimuli == 0 {
            return Err(Error::InvalidInput("n_stimuli must be at least 1".into()));
        }
        if !(self.degrees_per_cell > 0.0 && self.degrees_per_cell.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "degrees_per_cell must be positive, got {}",
                self.degrees_per_cell
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Which reward components take part in the layout reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardFactors {
    pub luminance: bool,
    pub isd: bool,
    pub sod: bool,
}

impl RewardFactors {
    /// Joint luminance + ISD optimization.
    pub const JOINT: Self = Self {
        luminance: true,
        isd: true,
        sod: true,
    };

    /// Luminance-only optimization: ISD excluded.
    pub const LUMINANCE_ONLY: Self = Self {
        luminance: true,
        isd: false,
        sod: true,
    };

    pub fn mask(&self) -> [bool; 3] {
        [self.luminance, self.isd, self.sod]
    }

    pub fn active(&self) -> usize {
        self.mask().iter().filter(|&&on| on).count()
    }
}

impl Default for RewardFactors {
    fn default() -> Self {
        Self::JOINT
    }
}

/// Raw per-stimulus quantities that feed the reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusAssessment {
    /// Normalized background luminance under the stimulus.
    pub luminance: f64,
    /// Distance to the nearest other stimulus, degrees of visual angle.
    pub nearest_neighbor_distance: f64,
    /// Distance to the paired object, grid units.
    pub object_distance: f64,
}

/// The curves, the configuration and the active factor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub luminance: RewardCurve,
    pub isd: RewardCurve,
    pub config: RewardConfig,
    pub factors: RewardFactors,
}

impl Default for RewardModel {
    fn default() -> Self {
        Self {
            luminance: RewardCurve::default_luminance(),
            isd: RewardCurve::default_isd(),
            config: RewardConfig::default(),
            factors: RewardFactors::JOINT,
        }
    }
}

impl RewardModel {
    pub fn with_factors(mut self, factors: RewardFactors) -> Self {
        self.factors = factors;
        self
    }

    /// `[r_L, r_D, r_O]` for one stimulus; inactive components are zero.
    pub fn components(&self, s: &StimulusAssessment) -> [f64; 3] {
        let [lum, isd, sod] = self.factors.mask();
        [
            if lum { self.luminance.eval(s.luminance) } else { 0.0 },
            if isd { self.isd.eval(s.nearest_neighbor_distance) } else { 0.0 },
            if sod { sod_reward(s.object_distance, self.config.d_max) } else { 0.0 },
        ]
    }

    /// Layout reward of a full assessment list.
    pub fn layout_reward(&self, assessments: &[StimulusAssessment]) -> Result<f64> {
        if assessments.is_empty() {
            return Err(Error::Empty("layout has no stimuli"));
        }
        if assessments.len() != self.config.n_stimuli {
            return Err(Error::DimensionMismatch {
                expected: self.config.n_stimuli,
                actual: assessments.len(),
            });
        }
        let comps: Vec<[f64; 3]> = assessments.iter().map(|s| self.components(s)).collect();
        Ok(self.reward_from_components(&comps))
    }

    /// Blended mean/min reward of per-stimulus component triples, divided by
    /// the number of active factors.
    pub fn reward_from_components(&self, components: &[[f64; 3]]) -> f64 {
        blend_reward(components, self.config.alpha, self.factors.active())
    }
}

/// `alpha * mean(sum_i) / k + (1 - alpha) * min(sum_i) / k`.
pub fn blend_reward(components: &[[f64; 3]], alpha: f64, active: usize) -> f64 {
    if components.is_empty() || active == 0 {
        return 0.0;
    }
    let sums = components.iter().map(|c| c[0] + c[1] + c[2]);
    let (total, min) = sums.fold((0.0, f64::INFINITY), |(t, m), s| (t + s, m.min(s)));
    let k = active as f64;
    let n = components.len() as f64;
    (alpha * total / (k * n) + (1.0 - alpha) * min / k).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn luminance_endpoints_normalize_to_unit_range() {
        let curve = RewardCurve::from_anchors(&[(0.1, 0.91), (0.9, 0.25)]).unwrap();
        assert_eq!(curve.eval(0.1), 1.0);
        assert_eq!(curve.eval(0.9), 0.0);
    }

    #[test]
    fn isd_endpoints_normalize_to_unit_range() {
        let curve = RewardCurve::from_anchors(&[(5.0, 0.46), (40.0, 0.92)]).unwrap();
        assert_eq!(curve.eval(5.0), 0.0);
        assert_eq!(curve.eval(40.0), 1.0);
    }

    #[test]
    fn raw_accuracy_interpolates_anchors() {
        let lum = RewardCurve::default_luminance();
        assert!((lum.accuracy(0.1) - 0.91).abs() < 1e-12);
        assert!((lum.accuracy(0.9) - 0.25).abs() < 1e-12);
        assert!((lum.accuracy(0.85) - 0.33).abs() < 1e-12);
        assert!((lum.accuracy(0.0) - 0.91).abs() < 1e-12);
        assert_eq!(RewardCurve::default_isd().accuracy_range(), (0.46, 0.92));
    }

    #[test]
    fn linear_midpoint() {
        let curve = RewardCurve::from_anchors(&[(0.0, 0.3), (1.0, 0.8)]).unwrap();
        assert!((curve.eval(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clamps_outside_anchor_range() {
        let curve = RewardCurve::from_anchors(&[(1.0, 0.2), (2.0, 0.6), (3.0, 0.4)]).unwrap();
        assert_eq!(curve.eval(-5.0), 0.0);
        assert!((curve.eval(10.0) - 0.5).abs() < 1e-12);
        assert_eq!(curve.eval(f64::INFINITY), curve.eval(10.0));
        assert_eq!(curve.eval(2.0), 1.0);
    }

    #[test]
    fn bundled_curves_hit_printed_endpoints() {
        let lum = RewardCurve::default_luminance();
        assert_eq!(lum.anchors().len(), 9);
        assert_eq!(lum.eval(0.1), 1.0);
        assert_eq!(lum.eval(0.9), 0.0);
        let isd = RewardCurve::default_isd();
        assert_eq!(isd.anchors().len(), 9);
        assert_eq!(isd.eval(5.0), 0.0);
        assert_eq!(isd.eval(40.0), 1.0);
    }

    #[test]
    fn rejects_bad_anchor_sets() {
        assert!(RewardCurve::from_anchors(&[(0.1, 0.5)]).is_err());
        assert!(RewardCurve::from_anchors(&[(0.2, 0.5), (0.2, 0.6)]).is_err());
        assert!(RewardCurve::from_anchors(&[(0.3, 0.5), (0.2, 0.6)]).is_err());
        assert!(RewardCurve::from_anchors(&[(0.1, 0.5), (0.2, 0.5)]).is_err());
        assert!(RewardCurve::from_csv("x,y\n1,2\n2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn sod_examples() {
        let d_max = 3.0 * 2f64.sqrt();
        assert_eq!(sod_reward(0.0, d_max), 1.0);
        assert_eq!(sod_reward(d_max, d_max), 0.0);
        assert_eq!(sod_reward(2.0 * d_max, d_max), 0.0);
    }

    fn model(alpha: f64, n: usize) -> RewardModel {
        RewardModel {
            config: RewardConfig {
                alpha,
                n_stimuli: n,
                ..RewardConfig::default()
            },
            ..RewardModel::default()
        }
    }

    #[test]
    fn layout_reward_hand_case() {
        // per-stimulus sums 3.0 and 1.5
        let comps = [[1.0, 1.0, 1.0], [0.5, 0.5, 0.5]];
        let r = model(0.25, 2).reward_from_components(&comps);
        assert!((r - 0.5625).abs() < 1e-9, "{r}");
    }

    #[test]
    fn layout_reward_perfect_layout_is_one() {
        for alpha in [0.0, 0.25, 0.7, 1.0] {
            let r = model(alpha, 3).reward_from_components(&[[1.0; 3]; 3]);
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layout_reward_from_assessments() {
        let m = model(0.25, 2);
        let s = StimulusAssessment {
            luminance: 0.1,
            nearest_neighbor_distance: 40.0,
            object_distance: 0.0,
        };
        assert!((m.layout_reward(&[s, s]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(m.layout_reward(&[]), Err(Error::Empty(_))));
        assert!(m.layout_reward(&[s]).is_err());
    }

    #[test]
    fn luminance_only_factors_renormalize() {
        let m = model(0.25, 2).with_factors(RewardFactors::LUMINANCE_ONLY);
        let s = StimulusAssessment {
            luminance: 0.1,
            nearest_neighbor_distance: 5.0,
            object_distance: 0.0,
        };
        assert_eq!(m.components(&s), [1.0, 0.0, 1.0]);
        assert!((m.layout_reward(&[s, s]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reward_config_json() {
        let c = RewardConfig::from_json(
            r#"{"alpha":0.5,"d_max":2.0,"n_stimuli":4,"degrees_per_cell":5.0}"#,
        )
        .unwrap();
        assert_eq!(c.n_stimuli, 4);
        assert!(RewardConfig::from_json(
            r#"{"alpha":1.5,"d_max":2.0,"n_stimuli":4,"degrees_per_cell":5.0}"#
        )
        .is_err());
    }

    fn arb_components(n: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
        proptest::collection::vec(proptest::array::uniform3(0.0f64..=1.0), n)
    }

    proptest! {
        #[test]
        fn reward_bounds_and_alpha_extremes(comps in arb_components(4)) {
            let sums: Vec<f64> = comps.iter().map(|c| c.iter().sum()).collect();
            let mean = sums.iter().sum::<f64>() / 4.0;
            let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!((blend_reward(&comps, 1.0, 3) - mean / 3.0).abs() < 1e-12);
            prop_assert!((blend_reward(&comps, 0.0, 3) - min / 3.0).abs() < 1e-12);
            let r = blend_reward(&comps, 0.25, 3);
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn reward_is_monotone_in_components(comps in arb_components(3), i in 0usize..3, j in 0usize..3, bump in 0.0f64..1.0, alpha in 0.0f64..=1.0) {
            let mut raised = comps.clone();
            raised[i][j] = (raised[i][j] + bump).min(1.0);
            prop_assert!(blend_reward(&raised, alpha, 3) >= blend_reward(&comps, alpha, 3) - 1e-12);
        }

        #[test]
        fn raising_the_weakest_stimulus_strictly_helps(comps in arb_components(3), alpha in 0.0f64..0.99) {
            let sums: Vec<f64> = comps.iter().map(|c| c.iter().sum()).collect();
            let (idx, _) = sums.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
            let Some(j) = (0..3).find(|&j| comps[idx][j] < 0.9) else { return Ok(()); };
            // make the minimum unique so the raise moves the min term
            let unique = sums.iter().enumerate().all(|(i, &s)| i == idx || s > sums[idx] + 0.2);
            prop_assume!(unique);
            let mut raised = comps.clone();
            raised[idx][j] += 0.1;
            prop_assert!(blend_reward(&raised, alpha, 3) > blend_reward(&comps, alpha, 3));
        }

        #[test]
        fn curve_reproduces_anchors_and_brackets(accs in proptest::collection::vec(0.0f64..1.0, 3..8), t in 0.0f64..1.0) {
            let points: Vec<(f64, f64)> = accs.iter().enumerate().map(|(i, &a)| (i as f64 * 0.5, a)).collect();
            prop_assume!(accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - accs.iter().cloned().fold(f64::INFINITY, f64::min) > 1e-6);
            let curve = RewardCurve::from_anchors(&points).unwrap();
            for (k, &(x, _)) in points.iter().enumerate() {
                prop_assert!((curve.eval(x) - curve.anchor_rewards()[k]).abs() < 1e-12);
            }
            for k in 0..points.len() - 1 {
                let x = points[k].0 + t * 0.5;
                let (a, b) = (curve.anchor_rewards()[k], curve.anchor_rewards()[k + 1]);
                let v = curve.eval(x);
                prop_assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
            }
        }

        #[test]
        fn sod_is_lipschitz_and_non_increasing(d1 in 0.0f64..20.0, d2 in 0.0f64..20.0, d_max in 0.1f64..10.0) {
            let (r1, r2) = (sod_reward(d1, d_max), sod_reward(d2, d_max));
            prop_assert!((r1 - r2).abs() <= (d1 - d2).abs() / d_max + 1e-12);
            if d1 <= d2 { prop_assert!(r1 >= r2); }
        }
    }
}
