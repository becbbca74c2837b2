//! Streaming mean and variance over an ensemble, per recorded time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Welford accumulator; `merge` uses the pairwise update of Chan et al.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += d * w;
        self.m2 += other.m2 + d * d * self.n as f64 * w;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Sample variance `M2 / (n - 1)`; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Per-time statistics of `fold(delta)`, and optionally of `fold(delta')`
/// and of the fidelity `(1 + cos delta) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub delta: Vec<Welford>,
    pub nominal: Option<Vec<Welford>>,
    pub fidelity: Option<Vec<Welford>>,
}

impl EnsembleStats {
    pub fn new(times: Vec<f64>, with_nominal: bool, with_fidelity: bool) -> Self {
        let n = times.len();
        EnsembleStats {
            times,
            delta: vec![Welford::new(); n],
            nominal: with_nominal.then(|| vec![Welford::new(); n]),
            fidelity: with_fidelity.then(|| vec![Welford::new(); n]),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of paths aggregated.
    pub fn count(&self) -> u64 {
        self.delta.first().map_or(0, Welford::count)
    }

    /// Adds one path, given raw angles at every recorded time. Values are
    /// folded here.
    pub fn push_path(&mut self, delta: &[f64], nominal: Option<&[f64]>) -> Result<()> {
        if delta.len() != self.len() {
            return Err(Error::argument("delta", format!("expected {} samples, got {}", self.len(), delta.len())));
        }
        for (acc, &d) in self.delta.iter_mut().zip(delta) {
            acc.push(crate::qubit::fold(d));
        }
        if let Some(fid) = self.fidelity.as_mut() {
            for (acc, &d) in fid.iter_mut().zip(delta) {
                acc.push(0.5 * (1.0 + d.cos()));
            }
        }
        match (self.nominal.as_mut(), nominal) {
            (Some(accs), Some(values)) => {
                if values.len() != accs.len() {
                    return Err(Error::argument("nominal", "length differs from the time grid".to_string()));
                }
                for (acc, &d) in accs.iter_mut().zip(values) {
                    acc.push(crate::qubit::fold(d));
                }
            }
            (None, None) => {}
            (Some(_), None) => return Err(Error::argument("nominal", "required by these statistics".to_string())),
            (None, Some(_)) => return Err(Error::argument("nominal", "not tracked by these statistics".to_string())),
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &EnsembleStats) -> Result<()> {
        if self.times != other.times {
            return Err(Error::argument("other", "time grids differ".to_string()));
        }
        if self.nominal.is_some() != other.nominal.is_some() || self.fidelity.is_some() != other.fidelity.is_some() {
            return Err(Error::argument("other", "tracked quantities differ".to_string()));
        }
        merge_all(&mut self.delta, &other.delta);
        if let (Some(a), Some(b)) = (self.nominal.as_mut(), other.nominal.as_ref()) {
            merge_all(a, b);
        }
        if let (Some(a), Some(b)) = (self.fidelity.as_mut(), other.fidelity.as_ref()) {
            merge_all(a, b);
        }
        Ok(())
    }

    pub fn mean_delta(&self) -> Vec<f64> {
        self.delta.iter().map(Welford::mean).collect()
    }

    pub fn std_delta(&self) -> Vec<f64> {
        self.delta.iter().map(Welford::std).collect()
    }
}

fn merge_all(a: &mut [Welford], b: &[Welford]) {
    for (x, y) in a.iter_mut().zip(b) {
        x.merge(y);
    }
}
