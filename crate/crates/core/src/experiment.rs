//! Seeded end-to-end trials: generate → sample → estimate → recover →
//! validate, with one report row per (trial, sample size).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{sample, tuple_frequencies, EmpiricalProvider, FrequencyTable};
use crate::io::save_json;
use crate::model::{random_dag, DiscreteDag, JointTable, RandomDagOptions, DEFAULT_CAPACITY};
use crate::oracle::{
    marginal, markov_deviation, ExactProvider, MarginalProvider, DEFAULT_TOLERANCE,
};
use crate::par;
use crate::recovery::{attach_cpts, recover_structure, ProviderDecider};
use crate::vcbounds::{required_sample_size, risk_bound, vc_upper_bound, RiskBound, SampleSizes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Recovery from exact marginals of the generated joint.
    Exact,
    /// Recovery from k-tuple frequencies of sampled data.
    #[default]
    Empirical,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_floor() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub delta: usize,
    /// Per-variable cardinalities; exclusive with `d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cards: Option<Vec<usize>>,
    /// Uniform cardinality; exclusive with `cards`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub sample_sizes: Vec<usize>,
    pub epsilon: f64,
    pub delta_risk: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub mode: Mode,
    /// Tolerance for the Markov check against the exact joint.
    /// Defaults to 1e-2 (empirical) or 1e-8 (exact).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_tol: Option<f64>,
    /// Adds a wall-time column; reports are then no longer reproducible byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn cardinalities(&self) -> Result<Vec<usize>> {
        match (&self.cards, self.d) {
            (Some(c), None) => Ok(c.clone()),
            (None, Some(d)) => Ok(vec![d; self.n]),
            (None, None) => Ok(vec![2; self.n]),
            (Some(_), Some(_)) => Err(Error::InvalidParameter(
                "give either cards or d, not both".into(),
            )),
        }
    }

    pub fn tuple_size(&self) -> usize {
        (2 * self.delta + 1).min(self.n)
    }

    pub fn validation_tol(&self) -> f64 {
        self.validation_tol.unwrap_or(match self.mode {
            Mode::Exact => 1e-8,
            Mode::Empirical => 1e-2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let cards = self.cardinalities()?;
        if self.n == 0 || cards.len() != self.n {
            return bad(format!("n = {} with {} cardinalities", self.n, cards.len()));
        }
        if cards.contains(&0) {
            return bad("cardinalities must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.delta_risk > 0.0 && self.delta_risk < 1.0) {
            return bad(format!(
                "delta_risk must lie in (0, 1), got {}",
                self.delta_risk
            ));
        }
        let tol = self.validation_tol();
        if tol.is_nan() || tol <= 0.0 {
            return bad("validation_tol must be positive".into());
        }
        if self.mode == Mode::Empirical
            && (self.sample_sizes.is_empty() || self.sample_sizes.contains(&0))
        {
            return bad("empirical mode needs positive sample sizes".into());
        }
        let size: u128 = cards.iter().map(|&c| c as u128).product();
        if size > DEFAULT_CAPACITY as u128 {
            return Err(Error::Capacity {
                required: size,
                capacity: DEFAULT_CAPACITY,
            });
        }
        // alpha and floor are checked by the generator itself
        random_dag(&cards, self.delta, 0, &self.dag_options()).map(|_| ())
    }

    pub fn dag_options(&self) -> RandomDagOptions {
        RandomDagOptions {
            alpha: self.alpha,
            floor: self.floor,
            random_in_degree: false,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed of `master` along `path` (e.g. trial, sample-size index).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &step| {
        splitmix64(acc ^ splitmix64(step))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    MarkovOk,
    ModelViolation,
    MarkovFail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub sample_seed: Option<u64>,
    pub l: Option<usize>,
    pub outcome: Outcome,
    /// 1-based label of the node where recovery stopped.
    pub failing_node: Option<usize>,
    /// `max |f(M) − P(M)|` over every k-tuple cylinder set.
    pub max_freq_deviation: Option<f64>,
    /// `max_x |P(x) − ∏ P(x_j | p_j)|` for the recovered parents.
    pub markov_deviation: Option<f64>,
    /// `max_x |P(x) − P̂(x)|` for the recovered network with estimated CPTs.
    pub learned_joint_deviation: Option<f64>,
    pub max_tuple_size: usize,
    pub tuple_budget: usize,
    pub graph_equal: bool,
    pub uniform_rows: usize,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeSummary {
    pub l: Option<usize>,
    pub trials: usize,
    pub markov_ok: usize,
    pub model_violation: usize,
    pub markov_fail: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub graph_equal_rate: f64,
    pub max_tuple_size: usize,
    /// Fraction of trials where every k-tuple frequency was within ε.
    pub within_epsilon_rate: Option<f64>,
    pub risk_bound: Option<RiskBound>,
    /// `1 − min(1, risk bound)`: guaranteed lower bound on `within_epsilon_rate`'s expectation.
    pub predicted_within_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub tuple_size: usize,
    pub vc_upper_bound: Option<f64>,
    pub required_sample_sizes: Option<SampleSizes>,
    pub per_sample_size: Vec<SampleSizeSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<TrialReport>,
    pub summary: ExperimentSummary,
}

struct Instance {
    dag: DiscreteDag,
    joint: JointTable,
}

/// Runs every trial, in parallel where enabled; rows come back in
/// (trial, sample size) order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let cards = config.cardinalities()?;
    let rows: Vec<TrialReport> =
        par::map_range(config.trials, |trial| run_trial(config, &cards, trial))
            .into_iter()
            .flatten()
            .collect();
    let summary = summarize(config, &cards, &rows);
    Ok(ExperimentReport { rows, summary })
}

fn run_trial(config: &ExperimentConfig, cards: &[usize], trial: usize) -> Vec<TrialReport> {
    let seed = derive_seed(config.seed, &[trial as u64]);
    let k = config.tuple_size();
    let blank = |l, sample_seed| TrialReport {
        trial,
        seed,
        sample_seed,
        l,
        outcome: Outcome::Error,
        failing_node: None,
        max_freq_deviation: None,
        markov_deviation: None,
        learned_joint_deviation: None,
        max_tuple_size: 0,
        tuple_budget: k,
        graph_equal: false,
        uniform_rows: 0,
        error: None,
        wall_time_ms: None,
    };
    let instance = random_dag(cards, config.delta, seed, &config.dag_options()).and_then(|dag| {
        let joint = dag.factorized_joint()?;
        Ok(Instance { dag, joint })
    });
    let instance = match instance {
        Ok(i) => i,
        Err(e) => {
            return vec![TrialReport {
                error: Some(e.to_string()),
                ..blank(None, None)
            }]
        }
    };

    let timed = |row: &mut TrialReport, start: Instant| {
        if config.record_timing {
            row.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
    };
    match config.mode {
        Mode::Exact => {
            let start = Instant::now();
            let mut row = blank(None, None);
            let provider = ExactProvider::new(&instance.joint, k);
            let decider = ProviderDecider::exact(&provider, DEFAULT_TOLERANCE);
            recover_into(&mut row, config, &instance, &decider, &provider);
            timed(&mut row, start);
            vec![row]
        }
        Mode::Empirical => config
            .sample_sizes
            .iter()
            .enumerate()
            .map(|(li, &l)| {
                let start = Instant::now();
                let sample_seed = derive_seed(config.seed, &[trial as u64, li as u64]);
                let mut row = blank(Some(l), Some(sample_seed));
                let freq =
                    sample(&instance.dag, l, sample_seed).and_then(|s| tuple_frequencies(&s, k));
                match freq {
                    Ok(freq) => {
                        row.max_freq_deviation =
                            max_frequency_deviation(&freq, &instance.joint).ok();
                        match EmpiricalProvider::new(&freq) {
                            Ok(provider) => {
                                let decider = ProviderDecider::empirical(&provider, config.epsilon);
                                recover_into(&mut row, config, &instance, &decider, &provider);
                            }
                            Err(e) => row.error = Some(e.to_string()),
                        }
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                timed(&mut row, start);
                row
            })
            .collect(),
    }
}

fn recover_into(
    row: &mut TrialReport,
    config: &ExperimentConfig,
    instance: &Instance,
    decider: &ProviderDecider<'_>,
    provider: &dyn MarginalProvider,
) {
    let recovered = recover_structure(decider, instance.joint.n(), config.delta);
    row.max_tuple_size = provider.max_requested();
    let skeleton = match recovered {
        Ok((skeleton, _)) => skeleton,
        Err(Error::ModelViolation { node, .. }) => {
            row.outcome = Outcome::ModelViolation;
            row.failing_node = Some(node + 1);
            return;
        }
        Err(e) => {
            row.error = Some(e.to_string());
            return;
        }
    };
    row.graph_equal = skeleton.parents == instance.dag.parent_sets();
    let checked = markov_deviation(&instance.joint, &skeleton.parents).and_then(|dev| {
        let attached = attach_cpts(&skeleton, provider)?;
        let learned = attached.dag.factorized_joint()?;
        let learned_dev = learned
            .probs()
            .iter()
            .zip(instance.joint.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok((dev, learned_dev, attached.uniform_rows.len()))
    });
    row.max_tuple_size = provider.max_requested();
    match checked {
        Ok((dev, learned_dev, uniform_rows)) => {
            row.markov_deviation = Some(dev);
            row.learned_joint_deviation = Some(learned_dev);
            row.uniform_rows = uniform_rows;
            row.outcome = if dev <= config.validation_tol() {
                Outcome::MarkovOk
            } else {
                Outcome::MarkovFail
            };
        }
        Err(e) => row.error = Some(e.to_string()),
    }
}

/// `max |f(M) − P(M)|` over every cylinder set on a stored k-set, counting
/// unrealized keys as frequency 0.
pub fn max_frequency_deviation(freq: &FrequencyTable, joint: &JointTable) -> Result<f64> {
    if freq.cards() != joint.cards() {
        return Err(Error::ShapeMismatch(
            "frequency table and joint disagree".into(),
        ));
    }
    let l = freq.l() as f64;
    let mut worst: f64 = 0.0;
    for ps in freq.position_sets() {
        let exact = marginal(joint, ps)?;
        let counts = freq.marginal_counts_via(ps, ps)?;
        for (&c, &p) in counts.iter().zip(exact.probs()) {
            worst = worst.max((c as f64 / l - p).abs());
        }
    }
    Ok(worst)
}

fn summarize(
    config: &ExperimentConfig,
    cards: &[usize],
    rows: &[TrialReport],
) -> ExperimentSummary {
    let k = config.tuple_size();
    let n = config.n as u64;
    let dmax = *cards.iter().max().unwrap_or(&1) as u64;
    let h = vc_upper_bound(n, k as u64, dmax).ok();
    let required = required_sample_size(n, k as u64, dmax, config.epsilon, config.delta_risk).ok();
    let ls: Vec<Option<usize>> = match config.mode {
        Mode::Exact => vec![None],
        Mode::Empirical => config.sample_sizes.iter().map(|&l| Some(l)).collect(),
    };
    let per_sample_size = ls
        .into_iter()
        .map(|l| {
            let group: Vec<&TrialReport> = rows.iter().filter(|r| r.l == l).collect();
            let count = |o| group.iter().filter(|r| r.outcome == o).count();
            let total = group.len();
            let rate = |x: usize| {
                if total == 0 {
                    0.0
                } else {
                    x as f64 / total as f64
                }
            };
            let within = group
                .iter()
                .filter_map(|r| r.max_freq_deviation)
                .filter(|&dev| dev < config.epsilon)
                .count();
            let bound = match (l, h) {
                (Some(l), Some(h)) => risk_bound(h, l as u64, config.epsilon).ok(),
                _ => None,
            };
            SampleSizeSummary {
                l,
                trials: total,
                markov_ok: count(Outcome::MarkovOk),
                model_violation: count(Outcome::ModelViolation),
                markov_fail: count(Outcome::MarkovFail),
                errors: count(Outcome::Error),
                success_rate: rate(count(Outcome::MarkovOk)),
                graph_equal_rate: rate(group.iter().filter(|r| r.graph_equal).count()),
                max_tuple_size: group.iter().map(|r| r.max_tuple_size).max().unwrap_or(0),
                within_epsilon_rate: l.map(|_| rate(within)),
                risk_bound: bound,
                predicted_within_epsilon: bound.map(|b| 1.0 - b.clamped),
            }
        })
        .collect();
    // the summary describes the run, not where it was written
    let config = ExperimentConfig {
        output_dir: None,
        ..config.clone()
    };
    ExperimentSummary {
        config,
        tuple_size: k,
        vc_upper_bound: h,
        required_sample_sizes: required,
        per_sample_size,
    }
}

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn write_trial_reports<W: Write>(rows: &[TrialReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trial_reports<R: Read>(r: R) -> Result<Vec<TrialReport>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Writes `trials.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = std::io::BufWriter::new(fs::File::create(dir.join(TRIALS_FILE))?);
    write_trial_reports(&report.rows, file)?;
    save_json(&report.summary, dir.join(SUMMARY_FILE))
}
