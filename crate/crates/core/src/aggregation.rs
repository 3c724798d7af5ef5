//! Baseline aggregation rules over a round's submitted models.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::{distance_unchecked, ClientUpdate, ParamVector};

/// Server-side rule combining the round's local models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationRule {
    FedAvg,
    CoordinateMedian,
    TrimmedMean { gamma: f64 },
    Krum { f: usize, m: usize },
    /// Spatial-temporal filter; see [`crate::stpa`].
    Stpa,
}

impl AggregationRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::TrimmedMean { gamma } if !(gamma > 0.0 && gamma < 0.5) => Err(
                Error::InvalidArgument(format!("trim rate {gamma} outside (0, 0.5)")),
            ),
            Self::Krum { m: 0, .. } => Err(Error::InvalidArgument("krum needs m >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::FedAvg => "fed_avg",
            Self::CoordinateMedian => "coordinate_median",
            Self::TrimmedMean { .. } => "trimmed_mean",
            Self::Krum { .. } => "krum",
            Self::Stpa => "stpa",
        }
    }

    /// Applies a stateless rule. `Stpa` carries momentum state and is
    /// rejected here.
    pub fn aggregate(&self, updates: &[ClientUpdate]) -> Result<ParamVector> {
        self.validate()?;
        match *self {
            Self::FedAvg => fed_avg(updates),
            Self::CoordinateMedian => coordinate_median(updates),
            Self::TrimmedMean { gamma } => trimmed_mean(updates, gamma),
            Self::Krum { f, m } => krum(updates, f, m),
            Self::Stpa => Err(Error::InvalidArgument(
                "stpa is stateful; use stpa::stpa_round".into(),
            )),
        }
    }
}

fn common_dim(updates: &[ClientUpdate]) -> Result<usize> {
    let first = updates.first().ok_or(Error::Empty("client updates"))?;
    let dim = first.model.dim();
    for u in &updates[1..] {
        check_dim(dim, u.model.dim())?;
    }
    Ok(dim)
}

/// Sample-count weighted mean.
pub fn fed_avg(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let dim = common_dim(updates)?;
    let total: usize = updates.iter().map(|u| u.sample_count).sum();
    let mut out = vec![0.0; dim];
    for u in updates {
        let w = u.sample_count as f64 / total as f64;
        for (o, v) in out.iter_mut().zip(u.model.as_slice()) {
            *o += w * v;
        }
    }
    Ok(ParamVector::new(out))
}

/// Unweighted mean.
pub fn mean(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let dim = common_dim(updates)?;
    let mut out = vec![0.0; dim];
    for u in updates {
        for (o, v) in out.iter_mut().zip(u.model.as_slice()) {
            *o += v;
        }
    }
    let n = updates.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(ParamVector::new(out))
}

/// Applies `reduce` to the sorted values of every coordinate.
fn per_coordinate(updates: &[ClientUpdate], reduce: impl Fn(&[f64]) -> f64) -> Result<ParamVector> {
    let dim = common_dim(updates)?;
    let mut column = Vec::with_capacity(updates.len());
    let out = (0..dim)
        .map(|i| {
            column.clear();
            column.extend(updates.iter().map(|u| u.model.as_slice()[i]));
            column.sort_by(f64::total_cmp);
            reduce(&column)
        })
        .collect();
    Ok(ParamVector::new(out))
}

/// Per-coordinate median; even counts average the two middle values.
pub fn coordinate_median(updates: &[ClientUpdate]) -> Result<ParamVector> {
    per_coordinate(updates, |sorted| {
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        }
    })
}

/// Number of values dropped from each end.
pub fn trim_count(n: usize, gamma: f64) -> usize {
    (gamma * n as f64).floor() as usize
}

/// Per-coordinate mean after dropping `floor(gamma * n)` values from each end.
pub fn trimmed_mean(updates: &[ClientUpdate], gamma: f64) -> Result<ParamVector> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::InvalidArgument(format!("trim rate {gamma} outside (0, 0.5)")));
    }
    let n = updates.len();
    let k = trim_count(n, gamma);
    if n < 2 * k + 1 {
        return Err(Error::InvalidArgument(format!(
            "trimmed mean keeps no values: n = {n}, trim {k} per side"
        )));
    }
    per_coordinate(updates, |sorted| {
        let kept = &sorted[k..n - k];
        let mut acc = 0.0;
        for v in kept {
            acc += v;
        }
        acc / kept.len() as f64
    })
}

/// Krum score of every update: the sum of plain Euclidean distances to its
/// `n - f - 2` nearest other updates.
pub fn krum_scores(updates: &[ClientUpdate], f: usize) -> Result<Vec<f64>> {
    common_dim(updates)?;
    let n = updates.len();
    if n < f + 3 {
        return Err(Error::InvalidArgument(format!(
            "krum needs n - f - 2 >= 1, got n = {n}, f = {f}"
        )));
    }
    let neighbours = n - f - 2;
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = distance_unchecked(updates[i].model.as_slice(), updates[j].model.as_slice());
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut row = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| dist[i * n + j]));
            row.sort_by(f64::total_cmp);
            row[..neighbours].iter().sum()
        })
        .collect())
}

/// Positions (into `updates`) of the `m` lowest-scoring updates, ties broken
/// by smaller slot.
pub fn krum_select(updates: &[ClientUpdate], f: usize, m: usize) -> Result<Vec<usize>> {
    let scores = krum_scores(updates, f)?;
    let n = updates.len();
    if m == 0 || m > n - f - 2 {
        return Err(Error::InvalidArgument(format!(
            "krum needs 1 <= m <= n - f - 2, got m = {m}, n = {n}, f = {f}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then(updates[a].slot.cmp(&updates[b].slot))
    });
    order.truncate(m);
    Ok(order)
}

/// Unweighted mean of the `m` updates Krum selects.
pub fn krum(updates: &[ClientUpdate], f: usize, m: usize) -> Result<ParamVector> {
    let chosen: Vec<ClientUpdate> = krum_select(updates, f, m)?
        .into_iter()
        .map(|i| updates[i].clone())
        .collect();
    mean(&chosen)
}
