use std::io::Write;

use serde::{Deserialize, Serialize};

use super::sim::{Method, TrialRecord};
use crate::error::{Error, Result};

/// Time needed to shift attention to the next target.
pub const ATTENTION_SHIFT_S: f64 = 0.135;

/// Information transfer rate in bits per minute. Below chance the rate is
/// reported as 0.
pub fn itr(accuracy: f64, n_targets: usize, t_c_seconds: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::InvalidInput(format!("accuracy must lie in [0, 1], got {accuracy}")));
    }
    if n_targets < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 targets, got {n_targets}")));
    }
    if !(t_c_seconds > 0.0 && t_c_seconds.is_finite()) {
        return Err(Error::InvalidInput(format!("decision time must be positive, got {t_c_seconds}")));
    }
    let n = n_targets as f64;
    if accuracy <= 1.0 / n {
        return Ok(0.0);
    }
    let xlog = |x: f64| if x > 0.0 { x * x.log2() } else { 0.0 };
    let wrong = 1.0 - accuracy;
    let bits = n.log2() + xlog(accuracy) + if wrong > 0.0 { wrong * (wrong / (n - 1.0)).log2() } else { 0.0 };
    Ok((bits * 60.0 / t_c_seconds).max(0.0))
}

/// Decode window plus the attention shift.
pub fn decision_time(window_s: f64) -> f64 {
    window_s + ATTENTION_SHIFT_S
}

/// Accuracy and ITR of one method at one decode window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub window_s: f64,
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Standard deviation of per-round accuracy.
    pub accuracy_std: f64,
    pub itr_bits_per_min: f64,
    /// Standard deviation of per-round ITR.
    pub itr_std: f64,
    pub t_c_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub methods: Vec<MethodMetrics>,
}

impl SessionMetrics {
    /// Aggregates valid trial records per method and decode window, in the
    /// order methods and windows first appear.
    pub fn from_records(records: &[TrialRecord], n_targets: usize) -> Result<Self> {
        let mut keys: Vec<(Method, f64)> = Vec::new();
        for r in records {
            if !keys.iter().any(|&(m, w)| m == r.method && w == r.window_s) {
                keys.push((r.method, r.window_s));
            }
        }
        let methods = keys
            .into_iter()
            .map(|(method, window_s)| {
                let subset: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.method == method && r.window_s == window_s && r.valid)
                    .collect();
                method_metrics(method, window_s, &subset, n_targets)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { methods })
    }

    pub fn get(&self, method: Method, window_s: f64) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == method && m.window_s == window_s)
    }

    /// Table with one row per method and decode window.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "window_s",
            "trials",
            "accuracy",
            "accuracy_std",
            "itr_bits_per_min",
            "itr_std",
        ])?;
        for m in &self.methods {
            w.write_record([
                m.method.to_string(),
                format!("{:.2}", m.window_s),
                m.trials.to_string(),
                format!("{:.4}", m.accuracy),
                format!("{:.4}", m.accuracy_std),
                format!("{:.2}", m.itr_bits_per_min),
                format!("{:.2}", m.itr_std),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn method_metrics(method: Method, window_s: f64, records: &[&TrialRecord], n_targets: usize) -> Result<MethodMetrics> {
    let t_c = decision_time(window_s);
    let correct = records.iter().filter(|r| r.is_correct()).count();
    let accuracy = if records.is_empty() { 0.0 } else { correct as f64 / records.len() as f64 };
    let mut rounds: Vec<usize> = records.iter().map(|r| r.round).collect();
    rounds.sort_unstable();
    rounds.dedup();
    let mut per_round_acc = Vec::with_capacity(rounds.len());
    let mut per_round_itr = Vec::with_capacity(rounds.len());
    for round in rounds {
        let rs: Vec<_> = records.iter().filter(|r| r.round == round).collect();
        let acc = rs.iter().filter(|r| r.is_correct()).count() as f64 / rs.len() as f64;
        per_round_acc.push(acc);
        per_round_itr.push(itr(acc, n_targets, t_c)?);
    }
    Ok(MethodMetrics {
        method,
        window_s,
        trials: records.len(),
        correct,
        accuracy,
        accuracy_std: std_dev(&per_round_acc),
        itr_bits_per_min: itr(accuracy, n_targets, t_c)?,
        itr_std: std_dev(&per_round_itr),
        t_c_s: t_c,
    })
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    #[test]
    fn itr_reference_values() {
        assert_eq!(itr(1.0 / 6.0, 6, 3.135).unwrap(), 0.0);
        assert!((itr(1.0, 6, 3.135).unwrap() - 49.48).abs() < 0.01);
        assert!((itr(0.89, 6, 3.135).unwrap() - 35.02).abs() < 0.01);
        assert_eq!(itr(0.0, 6, 3.0).unwrap(), 0.0);
        assert_eq!(itr(0.1, 6, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn itr_domain_errors() {
        assert!(itr(1.1, 6, 3.0).is_err());
        assert!(itr(0.5, 1, 3.0).is_err());
        assert!(itr(0.5, 6, 0.0).is_err());
    }

    #[test]
    fn decision_time_adds_attention_shift() {
        assert!((decision_time(3.0) - 3.135).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn itr_monotone_in_accuracy(a in 1.0f64 / 6.0..1.0, b in 1.0f64 / 6.0..1.0, t in 0.5f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(itr(lo, 6, t).unwrap() <= itr(hi, 6, t).unwrap() + 1e-12);
        }

        #[test]
        fn itr_decreasing_in_time(p in 0.0f64..=1.0, t1 in 0.5f64..5.0, t2 in 0.5f64..5.0) {
            let (short, long) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let (a, b) = (itr(p, 6, short).unwrap(), itr(p, 6, long).unwrap());
            prop_assert!(b <= a + 1e-12);
            prop_assert!(b >= 0.0);
        }
    }
}
