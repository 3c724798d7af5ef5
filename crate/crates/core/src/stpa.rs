//! Spatial-temporal pattern analysis (STPA) aggregation.
//!
//! Each round runs two filters over the submitted local models:
//!
//! 1. **Spatial.** Pseudo-gradients `Δw_i = w_t - w_i` are compared pairwise
//!    by cosine similarity. Complete-linkage agglomerative clustering on
//!    distance `1 - s` stops at two clusters. If the largest similarity
//!    across the two clusters is below `s_t`, only the strictly larger
//!    cluster is kept; otherwise (or on an exact size tie) every update is
//!    kept. The inner rule (median by default) aggregates the kept models.
//! 2. **Temporal.** The aggregate pseudo-gradient `Δw` feeds an exponential
//!    moving average `v <- β v + (1 - β) Δw`. With `α = cos(Δw, v)`, a round
//!    with `α <= 0` is discarded; otherwise `w_{t+1} = w_t - η0 α v`.
//!
//! No cluster structure survives between rounds; only `v` is carried.
//!
//! Positions within the `updates` slice act as slots throughout.

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationRule;
use crate::error::{check_dim, Error, Result};
use crate::vector::{cosine_unchecked, subtract, ClientUpdate, ParamVector};

/// Pairwise cosine similarities, row-major, symmetric with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    s: Vec<f64>,
}

impl AffinityMatrix {
    /// Builds a matrix from a full row-major table. Entries are clamped to
    /// `[-1, 1]` and the diagonal is forced to 1; asymmetric input is rejected.
    pub fn from_rows(n: usize, s: Vec<f64>) -> Result<Self> {
        check_dim(n * n, s.len())?;
        let mut s: Vec<f64> = s.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        for i in 0..n {
            s[i * n + i] = 1.0;
            for j in 0..i {
                if s[i * n + j] != s[j * n + i] {
                    return Err(Error::InvalidArgument(format!(
                        "affinity not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, s })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.n + j]
    }
}

/// Outcome of the spatial stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    pub c1: Vec<usize>,
    pub c2: Vec<usize>,
    pub cross_similarity: f64,
    pub benign: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StpaConfig {
    #[serde(default = "default_s_t")]
    pub s_t: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    #[serde(default = "default_inner")]
    pub inner_rule: AggregationRule,
}

fn default_s_t() -> f64 {
    0.02
}
fn default_beta() -> f64 {
    0.5
}
fn default_eta0() -> f64 {
    1.0
}
fn default_inner() -> AggregationRule {
    AggregationRule::CoordinateMedian
}

impl Default for StpaConfig {
    /// `s_t = 0.02`, `β = 0.5`, `η0 = 1.0`, coordinate median.
    fn default() -> Self {
        Self {
            s_t: default_s_t(),
            beta: default_beta(),
            eta0: default_eta0(),
            inner_rule: default_inner(),
        }
    }
}

impl StpaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_t > -1.0 && self.s_t < 1.0) {
            return Err(Error::InvalidArgument(format!("s_t {} outside (-1, 1)", self.s_t)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta {} outside [0, 1)", self.beta)));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta0 {} must be positive", self.eta0)));
        }
        if self.inner_rule == AggregationRule::Stpa {
            return Err(Error::InvalidArgument("inner rule cannot be stpa".into()));
        }
        self.inner_rule.validate()
    }
}

/// Exponential moving average of aggregated pseudo-gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub v: ParamVector,
}

impl MomentumState {
    pub fn new(dim: usize) -> Self {
        Self {
            v: ParamVector::zeros(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub new_model: ParamVector,
    pub alpha: f64,
    pub eta: f64,
    pub discarded: bool,
    /// Filled in by [`stpa_round`]; zero from [`adaptive_update`].
    pub benign_count: usize,
}

/// `s[i][j] = cos(w_t - w_i, w_t - w_j)` with the diagonal forced to 1.
pub fn build_affinity(global_model: &ParamVector, updates: &[ClientUpdate]) -> Result<AffinityMatrix> {
    if updates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "affinity needs at least 2 updates, got {}",
            updates.len()
        )));
    }
    let deltas = updates
        .iter()
        .map(|u| subtract(global_model, &u.model))
        .collect::<Result<Vec<_>>>()?;
    let n = deltas.len();
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        s[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = cosine_unchecked(deltas[i].as_slice(), deltas[j].as_slice());
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    Ok(AffinityMatrix { n, s })
}

/// Complete-linkage agglomeration on `1 - s`, stopped at two clusters.
///
/// The closest pair merges first; exact ties go to the lexicographically
/// smallest `(min slot, min slot)` pair. `c1` is the cluster holding slot 0.
pub fn bipartition(affinity: &AffinityMatrix) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = affinity.n;
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "bipartition needs at least 2 slots, got {n}"
        )));
    }
    // Active clusters stay ordered by their smallest member, so scanning
    // pairs in index order realises the lexicographic tie-break.
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // dist[a][b]: complete-linkage distance between active clusters a and b
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 1.0 - affinity.get(i, j)).collect())
        .collect();

    while clusters.len() > 2 {
        let mut best = (0, 1);
        let mut best_d = f64::INFINITY;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                if dist[a][b] < best_d {
                    best_d = dist[a][b];
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        for c in 0..clusters.len() {
            let merged = dist[a][c].max(dist[b][c]);
            dist[a][c] = merged;
            dist[c][a] = merged;
        }
        dist[a][a] = 0.0;
        let absorbed = clusters.remove(b);
        clusters[a].extend(absorbed);
        clusters[a].sort_unstable();
        dist.remove(b);
        for row in &mut dist {
            row.remove(b);
        }
    }
    let c2 = clusters.pop().expect("two clusters");
    let c1 = clusters.pop().expect("two clusters");
    Ok((c1, c2))
}

/// Largest similarity between any member of `c1` and any member of `c2`.
pub fn cross_similarity(affinity: &AffinityMatrix, c1: &[usize], c2: &[usize]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &i in c1 {
        for &j in c2 {
            best = best.max(affinity.get(i, j));
        }
    }
    best
}

/// Picks the benign slots: the strictly larger cluster when the clusters are
/// separated (`cross < s_t`), otherwise all slots.
pub fn split_decision(affinity: &AffinityMatrix, c1: &[usize], c2: &[usize], s_t: f64) -> Vec<usize> {
    let cross = cross_similarity(affinity, c1, c2);
    if cross < s_t && c1.len() != c2.len() {
        let mut larger = if c1.len() > c2.len() { c1 } else { c2 }.to_vec();
        larger.sort_unstable();
        return larger;
    }
    let mut all: Vec<usize> = c1.iter().chain(c2).copied().collect();
    all.sort_unstable();
    all
}

/// Runs the whole spatial stage.
pub fn spatial_filter(global_model: &ParamVector, updates: &[ClientUpdate], s_t: f64) -> Result<ClusterPartition> {
    let affinity = build_affinity(global_model, updates)?;
    let (c1, c2) = bipartition(&affinity)?;
    let cross = cross_similarity(&affinity, &c1, &c2);
    let benign = split_decision(&affinity, &c1, &c2, s_t);
    Ok(ClusterPartition {
        c1,
        c2,
        cross_similarity: cross,
        benign,
    })
}

/// `v <- β v + (1 - β) Δw`
pub fn momentum_step(state: &MomentumState, delta_w: &ParamVector, beta: f64) -> Result<MomentumState> {
    check_dim(state.v.dim(), delta_w.dim())?;
    let v = state
        .v
        .as_slice()
        .iter()
        .zip(delta_w.as_slice())
        .map(|(v, d)| beta * v + (1.0 - beta) * d)
        .collect::<Vec<_>>();
    Ok(MomentumState { v: ParamVector::new(v) })
}

/// Scales the momentum step by the agreement `α = cos(Δw, v)`.
///
/// `state_after` must already include this round's `Δw`.
pub fn adaptive_update(
    w_t: &ParamVector,
    state_after: &MomentumState,
    delta_w: &ParamVector,
    eta0: f64,
) -> Result<StepOutcome> {
    check_dim(w_t.dim(), delta_w.dim())?;
    check_dim(w_t.dim(), state_after.v.dim())?;
    let alpha = cosine_unchecked(delta_w.as_slice(), state_after.v.as_slice());
    if alpha <= 0.0 {
        return Ok(StepOutcome {
            new_model: w_t.clone(),
            alpha,
            eta: 0.0,
            discarded: true,
            benign_count: 0,
        });
    }
    let eta = eta0 * alpha;
    Ok(StepOutcome {
        new_model: w_t.axpy(-eta, &state_after.v)?,
        alpha,
        eta,
        discarded: false,
        benign_count: 0,
    })
}

/// One full STPA aggregation round.
///
/// The returned state carries the advanced momentum even when the round is
/// discarded. A single update skips clustering and counts as benign.
pub fn stpa_round(
    w_t: &ParamVector,
    updates: &[ClientUpdate],
    state: &MomentumState,
    cfg: &StpaConfig,
) -> Result<(StepOutcome, MomentumState)> {
    cfg.validate()?;
    let benign: Vec<ClientUpdate> = match updates.len() {
        0 => return Err(Error::Empty("client updates")),
        1 => updates.to_vec(),
        _ => spatial_filter(w_t, updates, cfg.s_t)?
            .benign
            .into_iter()
            .map(|i| updates[i].clone())
            .collect(),
    };
    let aggregate = cfg.inner_rule.aggregate(&benign)?;
    let delta_w = subtract(w_t, &aggregate)?;
    let next = momentum_step(state, &delta_w, cfg.beta)?;
    let mut outcome = adaptive_update(w_t, &next, &delta_w, cfg.eta0)?;
    outcome.benign_count = benign.len();
    Ok((outcome, next))
}
