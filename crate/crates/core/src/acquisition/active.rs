use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{degrees, normalize_features, Dataset};
use crate::model::{
    mc_dropout_predict, predict, train_with_inputs, ModelConfig, ModelInputs, TrainWarning, UpliftModel,
    UpliftPrediction,
};
use crate::real::Real;
use crate::rng::{indexed_stream, Stream};
use crate::tensor::Matrix;

use super::{compute_scores, greedy_select, kmeans, ClusterModel, ScoreWeights, SelectionProblem, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Greedy,
    /// Each round uses random scores with probability ε, model scores otherwise.
    #[serde(rename = "eg")]
    EpsilonGreedy,
    Random,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Greedy => "greedy",
            Policy::EpsilonGreedy => "eg",
            Policy::Random => "random",
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Policy::Greedy),
            "eg" | "epsilon-greedy" => Ok(Policy::EpsilonGreedy),
            "random" => Ok(Policy::Random),
            other => Err(Error::Config(format!(
                "unknown policy '{other}' (expected greedy, eg or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveConfig {
    pub initial_fraction: f64,
    pub target_fraction: f64,
    pub rounds: usize,
    pub policy: Policy,
    pub epsilon: f64,
    pub weights: ScoreWeights,
    /// Requested k-means cluster count; capped at the pool size.
    pub clusters: usize,
    pub kmeans_iterations: usize,
    pub mc_passes: usize,
    /// Score users near their centroid highly instead of far from it.
    pub prefer_central: bool,
    pub seed: u64,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        ActiveConfig {
            initial_fraction: 0.04,
            target_fraction: 0.2,
            rounds: 5,
            policy: Policy::Greedy,
            epsilon: 0.5,
            weights: ScoreWeights::default(),
            clusters: 50,
            kmeans_iterations: 100,
            mc_passes: 30,
            prefer_central: false,
            seed: 0,
        }
    }
}

impl ActiveConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.initial_fraction, self.target_fraction);
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::param(format!("initial fraction {a} outside (0, 1]")));
        }
        if !(b <= 1.0) {
            return Err(Error::param(format!("target fraction {b} exceeds 1")));
        }
        if b < a {
            return Err(Error::param(format!("target fraction {b} below initial fraction {a}")));
        }
        if self.rounds == 0 && b > a {
            return Err(Error::param("at least one round is needed to grow the labeled set"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::param(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if self.clusters == 0 || self.mc_passes == 0 {
            return Err(Error::param("cluster count and MC passes must be positive"));
        }
        self.weights.validate()
    }

    /// Seed-set size and per-round batch size for a pool of `n` users.
    pub fn budgets(&self, n: usize) -> (usize, usize) {
        let ceil = |v: f64| num_traits::Float::ceil(v - 1e-9).max(0.0) as usize;
        let seed = ceil(self.initial_fraction * n as f64).min(n);
        let per_round = if self.rounds == 0 {
            0
        } else {
            ceil((self.target_fraction - self.initial_fraction) * n as f64 / self.rounds as f64)
        };
        (seed, per_round)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 0 is the seed set.
    pub round: usize,
    /// Which scores drove the selection: "seed", "model" or "random".
    pub scoring: String,
    /// Dataset user indices, highest score first.
    pub batch: Vec<usize>,
    pub objective: f64,
    pub budget: usize,
    pub treated_cap: usize,
    pub caps: Vec<usize>,
    pub slack: super::Slack,
    pub labeled_total: usize,
}

#[derive(Debug, Clone)]
pub struct ActiveOutcome<T> {
    pub model: UpliftModel<T>,
    /// Dropout-free outputs of the final model, with the MC-dropout variance as Q.
    pub prediction: UpliftPrediction,
    /// Dataset users labeled by the end, ascending.
    pub labeled: Vec<usize>,
    /// Pool users never selected, ascending.
    pub remainder: Vec<usize>,
    /// Dataset users eligible for selection; cluster assignments follow this order.
    pub pool: Vec<usize>,
    pub history: Vec<RoundRecord>,
    pub clusters: ClusterModel,
    pub warnings: Vec<TrainWarning>,
}

impl<T> ActiveOutcome<T> {
    /// Re-checks every logged batch: budget, treated cap, cluster caps, and
    /// disjointness from everything labeled before it.
    pub fn audit(&self, treatment: &[bool]) -> core::result::Result<(), String> {
        let mut position = alloc::collections::BTreeMap::new();
        for (i, &u) in self.pool.iter().enumerate() {
            position.insert(u, i);
        }
        let mut taken = alloc::collections::BTreeSet::new();
        for r in &self.history {
            let at = |msg: String| format!("round {}: {msg}", r.round);
            if r.batch.len() > r.budget {
                return Err(at(format!("{} users over budget {}", r.batch.len(), r.budget)));
            }
            if r.caps.iter().sum::<usize>() > r.budget || r.caps.len() != self.clusters.k {
                return Err(at(format!("caps {:?} inconsistent with budget {}", r.caps, r.budget)));
            }
            let mut counts = vec![0usize; self.clusters.k];
            let mut treated = 0;
            for &u in &r.batch {
                let i = *position.get(&u).ok_or_else(|| at(format!("user {u} not in pool")))?;
                if !taken.insert(u) {
                    return Err(at(format!("user {u} selected twice")));
                }
                counts[self.clusters.assignment[i]] += 1;
                treated += usize::from(treatment[u]);
            }
            if treated > r.treated_cap || r.treated_cap != super::treated_cap(r.budget) {
                return Err(at(format!("{treated} treated over cap {}", r.treated_cap)));
            }
            if let Some(c) = (0..counts.len()).find(|&c| counts[c] > r.caps[c]) {
                return Err(at(format!("cluster {c} holds {} over cap {}", counts[c], r.caps[c])));
            }
            if taken.len() != r.labeled_total {
                return Err(at(format!("{} labeled, log says {}", taken.len(), r.labeled_total)));
            }
        }
        if taken.iter().copied().ne(self.labeled.iter().copied()) {
            return Err("final labeled set differs from the union of batches".into());
        }
        Ok(())
    }
}

/// Pool-local selection state shared by all rounds.
struct Pool {
    users: Vec<usize>,
    treatment: Vec<bool>,
    degree: Vec<f64>,
    distance: Vec<f64>,
    clusters: ClusterModel,
}

impl Pool {
    fn problem<'a>(&'a self, scores: &'a [f64], labeled: &'a [bool], budget: usize) -> SelectionProblem<'a> {
        SelectionProblem {
            scores,
            treatment: &self.treatment,
            assignment: &self.clusters.assignment,
            clusters: self.clusters.k,
            budget,
            labeled,
        }
    }
}

fn record(round: usize, scoring: &str, pool: &Pool, sel: &SelectionResult, labeled_total: usize) -> RoundRecord {
    RoundRecord {
        round,
        scoring: String::from(scoring),
        batch: sel.selected.iter().map(|&i| pool.users[i]).collect(),
        objective: sel.objective,
        budget: sel.budget,
        treated_cap: sel.treated_cap,
        caps: sel.caps.clone(),
        slack: sel.slack.clone(),
        labeled_total,
    }
}

/// Seeds a labeled set from degree and centroid distance, then alternates
/// training, MC-dropout scoring and constrained batch selection.
///
/// The pool is the dataset's labeled users; a pool user's outcome is only read
/// once it has been selected.
pub fn active_learning_run<T: Real>(
    dataset: &Dataset,
    model_config: &ModelConfig,
    config: &ActiveConfig,
) -> Result<ActiveOutcome<T>> {
    config.validate()?;
    model_config.validate()?;
    let pool_users = dataset.labeled_users();
    let n = pool_users.len();
    if n == 0 {
        return Err(Error::NoTrainingData("dataset has no labeled users to query".into()));
    }
    let (seed_size, batch) = config.budgets(n);
    let goal = seed_size.max(
        num_traits::Float::ceil(config.target_fraction * n as f64 - 1e-9) as usize,
    );

    let normalized = normalize_features(dataset.user_features());
    let d = normalized.cols();
    let mut rows = Vec::with_capacity(n * d);
    for &u in &pool_users {
        rows.extend_from_slice(normalized.row(u));
    }
    let points = Matrix::from_vec(n, d, rows)?;
    let clusters = kmeans(&points, config.clusters.min(n), config.seed, config.kmeans_iterations)?;
    let all_degrees = degrees(dataset.graph());
    let pool = Pool {
        treatment: pool_users.iter().map(|&u| dataset.treatment()[u]).collect(),
        degree: pool_users.iter().map(|&u| all_degrees[u]).collect(),
        distance: clusters
            .distance
            .iter()
            .map(|&m| if config.prefer_central { -m } else { m })
            .collect(),
        users: pool_users,
        clusters,
    };

    let mut labeled = vec![false; n];
    let mut history = Vec::new();
    let seed_weights = ScoreWeights {
        uncertainty: 0.0,
        ..config.weights
    };
    let seed_scores = candidate_scores(&pool, &vec![0.0; n], &labeled, seed_weights)?;
    let first = greedy_select(&pool.problem(&seed_scores, &labeled, seed_size))?;
    for &i in &first.selected {
        labeled[i] = true;
    }
    history.push(record(0, "seed", &pool, &first, first.selected.len()));

    let inputs = ModelInputs::<T>::new(dataset);
    let labeled_users = |labeled: &[bool]| -> Vec<usize> {
        (0..n).filter(|&i| labeled[i]).map(|i| pool.users[i]).collect()
    };
    let mut warnings = Vec::new();
    let mut total = first.selected.len();
    for round in 1..=config.rounds {
        let budget = batch.min(goal.saturating_sub(total));
        if budget == 0 {
            break;
        }
        let mut rng = indexed_stream(config.seed, Stream::Acquisition, round as u32);
        let explore = match config.policy {
            Policy::Greedy => false,
            Policy::Random => true,
            Policy::EpsilonGreedy => rng.random::<f64>() < config.epsilon,
        };
        let (scores, scoring) = if explore {
            ((0..n).map(|_| rng.random::<f64>()).collect::<Vec<f64>>(), "random")
        } else {
            let (model, report) = train_with_inputs(&inputs, &labeled_users(&labeled), model_config)?;
            warnings.extend(report.warnings);
            let mc = mc_dropout_predict(&model, &inputs, config.mc_passes, mc_seed(config.seed, round))?;
            let q: Vec<f64> = pool.users.iter().map(|&u| mc.uncertainty[u]).collect();
            (candidate_scores(&pool, &q, &labeled, config.weights)?, "model")
        };
        let sel = greedy_select(&pool.problem(&scores, &labeled, budget))?;
        for &i in &sel.selected {
            labeled[i] = true;
        }
        total += sel.selected.len();
        history.push(record(round, scoring, &pool, &sel, total));
    }

    let final_users = labeled_users(&labeled);
    let (model, report) = train_with_inputs(&inputs, &final_users, model_config)?;
    warnings.extend(report.warnings);
    let mut prediction = predict(&model, &inputs)?;
    prediction.uncertainty = mc_dropout_predict(&model, &inputs, config.mc_passes, mc_seed(config.seed, config.rounds + 1))?
        .uncertainty;
    let remainder = (0..n).filter(|&i| !labeled[i]).map(|i| pool.users[i]).collect();
    Ok(ActiveOutcome {
        model,
        prediction,
        labeled: final_users,
        remainder,
        pool: pool.users,
        history,
        clusters: pool.clusters,
        warnings,
    })
}

fn mc_seed(seed: u64, round: usize) -> u64 {
    seed ^ ((round as u64) << 48)
}

/// Combined scores with the min-max ranges taken over unlabeled users only;
/// labeled users get 0 and are never selected anyway.
fn candidate_scores(pool: &Pool, uncertainty: &[f64], labeled: &[bool], weights: ScoreWeights) -> Result<Vec<f64>> {
    let candidates: Vec<usize> = (0..labeled.len()).filter(|&i| !labeled[i]).collect();
    let pick = |v: &[f64]| -> Vec<f64> { candidates.iter().map(|&i| v[i]).collect() };
    let scores = compute_scores(
        &pick(uncertainty),
        &pick(&pool.degree),
        &pick(&pool.distance),
        weights,
    )?;
    let mut out = vec![0.0; labeled.len()];
    for (&i, &s) in candidates.iter().zip(&scores.combined) {
        out[i] = s;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SyntheticConfig};

    fn data(n: usize) -> Dataset {
        generate_synthetic(&SyntheticConfig::new(n, 40, 4, 0.05, 3)).unwrap().dataset
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            projection_dim: 8,
            gnn_dim: 8,
            head_dims: vec![4],
            epochs: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn budget_arithmetic() {
        let cfg = ActiveConfig::default();
        assert_eq!(cfg.budgets(500), (20, 16));
        let cfg = ActiveConfig {
            initial_fraction: 0.01,
            target_fraction: 0.05,
            ..ActiveConfig::default()
        };
        assert_eq!(cfg.budgets(500), (5, 4));
    }

    #[test]
    fn four_to_twenty_percent_runs_five_batches_of_sixteen() {
        let d = data(500);
        let cfg = ActiveConfig {
            mc_passes: 5,
            ..ActiveConfig::default()
        };
        let out = active_learning_run::<f32>(&d, &tiny_model(), &cfg).unwrap();
        assert_eq!(out.history.len(), 6);
        assert_eq!(out.history[0].batch.len(), 20);
        assert!(out.history[1..].iter().all(|r| r.batch.len() == 16));
        assert_eq!(out.labeled.len(), 100);
        assert_eq!(out.remainder.len(), 400);
        assert_eq!(out.prediction.len(), 500);
        out.audit(d.treatment()).unwrap();
    }

    #[test]
    fn equal_fractions_mean_no_query_rounds() {
        let d = data(100);
        let cfg = ActiveConfig {
            initial_fraction: 0.1,
            target_fraction: 0.1,
            clusters: 5,
            mc_passes: 2,
            ..ActiveConfig::default()
        };
        let out = active_learning_run::<f32>(&d, &tiny_model(), &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.labeled.len(), 10);
    }

    #[test]
    fn policies_share_batch_sizes_and_pass_audit() {
        let d = data(200);
        let base = ActiveConfig {
            initial_fraction: 0.05,
            target_fraction: 0.2,
            clusters: 10,
            mc_passes: 4,
            ..ActiveConfig::default()
        };
        let mut sizes = Vec::new();
        let mut batches = Vec::new();
        for policy in [Policy::Greedy, Policy::Random, Policy::EpsilonGreedy] {
            let out = active_learning_run::<f32>(&d, &tiny_model(), &ActiveConfig { policy, ..base.clone() }).unwrap();
            out.audit(d.treatment()).unwrap();
            sizes.push(out.history.iter().map(|r| r.batch.len()).collect::<Vec<_>>());
            batches.push(out.labeled.clone());
        }
        assert_eq!(sizes[0], sizes[1]);
        assert_eq!(sizes[0], sizes[2]);
        assert_ne!(batches[0], batches[1]);
    }

    #[test]
    fn runs_are_reproducible() {
        let d = data(120);
        let cfg = ActiveConfig {
            policy: Policy::EpsilonGreedy,
            clusters: 6,
            mc_passes: 3,
            ..ActiveConfig::default()
        };
        let a = active_learning_run::<f32>(&d, &tiny_model(), &cfg).unwrap();
        let b = active_learning_run::<f32>(&d, &tiny_model(), &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        assert_eq!(a.prediction, b.prediction);
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        let d = data(50);
        for (a, b) in [(0.1, 1.5), (0.3, 0.2), (0.0, 0.2)] {
            let cfg = ActiveConfig {
                initial_fraction: a,
                target_fraction: b,
                ..ActiveConfig::default()
            };
            assert!(matches!(
                active_learning_run::<f32>(&d, &tiny_model(), &cfg),
                Err(Error::Parameter(_))
            ));
        }
    }

    #[test]
    fn policy_names() {
        assert_eq!("eg".parse::<Policy>().unwrap(), Policy::EpsilonGreedy);
        assert_eq!("random".parse::<Policy>().unwrap(), Policy::Random);
        assert!("ucb".parse::<Policy>().is_err());
    }
}
