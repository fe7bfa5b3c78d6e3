use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tuplenet::estimation::dependence_threshold;
use tuplenet::experiment::{run_experiment, write_report, ExperimentConfig};
use tuplenet::io::{
    load_dag, load_samples, read_frequencies, write_dag, write_frequencies, write_json,
    write_samples,
};
use tuplenet::model::{random_dag, RandomDagOptions};
use tuplenet::oracle::{markov_deviation, ExactProvider, MarginalProvider};
use tuplenet::recovery::{
    attach_cpts, recover_structure, AttachedDag, ProviderDecider, RecoveryTrace,
};
use tuplenet::vcbounds::{
    binary_value_pairs, cylinder_count, required_sample_size, risk_bound, shatter_witness,
    vc_lower_bound, vc_upper_bound, vc_upper_bound_from_count, verify_shattered, ShatterVerdict,
    ShatterWitness,
};
use tuplenet::{sample as draw_samples, tuple_frequencies, EmpiricalProvider, Error};

use crate::{
    BoundsArgs, EstimateArgs, ExperimentArgs, Format, GenerateArgs, Output, RecoverArgs,
    RecoverMode, SampleArgs, WitnessArgs,
};

/// Tolerance of the Markov check printed after exact recovery.
const VALIDATION_TOL: f64 = 1e-8;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::ModelViolation { .. }) => 2,
            _ => 1,
        }
    }

    /// The reader of stdout went away, e.g. `tuplenet bounds ... | head -1`.
    pub fn is_broken_pipe(&self) -> bool {
        matches!(self, CliError::Core(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Verification(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn only(format: Format, allowed: &[Format], command: &str) -> CliResult {
    if allowed.contains(&format) {
        Ok(())
    } else {
        Err(CliError::Usage(
            format!("{command} does not support --format {format:?}").to_lowercase(),
        ))
    }
}

fn emit(out: &Output, body: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    match &out.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Status lines go to stdout when the main artifact went to a file.
fn status(out: &Output, line: &str) {
    if out.output.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

pub fn generate(a: &GenerateArgs) -> CliResult {
    only(a.format, &[Format::Json], "generate")?;
    let cards = match (&a.cards, a.n) {
        (Some(c), _) => c.clone(),
        (None, Some(n)) => vec![a.d; n],
        (None, None) => return Err(CliError::Usage("give --cards or --n".into())),
    };
    let opts = RandomDagOptions {
        alpha: a.alpha,
        floor: a.floor,
        random_in_degree: a.random_in_degree,
    };
    let dag = random_dag(&cards, a.delta, a.seed, &opts)?;
    emit(&a.out, |w| Ok(write_dag(&dag, w)?))
}

pub fn sample(a: &SampleArgs) -> CliResult {
    only(a.format, &[Format::Csv], "sample")?;
    let dag = load_dag(&a.dag)?;
    let samples = draw_samples(&dag, a.l, a.seed)?;
    emit(&a.out, |w| Ok(write_samples(&samples, w)?))
}

pub fn estimate(a: &EstimateArgs) -> CliResult {
    only(a.format, &[Format::Json], "estimate")?;
    let samples = load_samples(&a.samples, a.cards.as_deref())?;
    let freq = tuple_frequencies(&samples, a.k)?;
    emit(&a.out, |w| Ok(write_frequencies(&freq, w)?))
}

fn finish_recovery(
    a: &RecoverArgs,
    provider: &dyn MarginalProvider,
    recovered: tuplenet::Result<(tuplenet::Skeleton, RecoveryTrace)>,
) -> CliResult<AttachedDag> {
    let (skeleton, trace) = recovered?;
    if let Some(path) = &a.trace {
        write_json(&trace, BufWriter::new(File::create(path)?))?;
    }
    let attached = attach_cpts(&skeleton, provider)?;
    emit(&a.out, |w| Ok(write_dag(&attached.dag, w)?))?;
    Ok(attached)
}

pub fn recover(a: &RecoverArgs) -> CliResult {
    only(a.format, &[Format::Json], "recover")?;
    match a.mode {
        RecoverMode::Exact => {
            if a.epsilon.is_some() {
                return Err(CliError::Usage(
                    "--epsilon applies to --mode empirical".into(),
                ));
            }
            let truth = load_dag(&a.input)?;
            let delta = a.delta.unwrap_or(truth.delta());
            let joint = truth.factorized_joint()?;
            let budget = (2 * delta + 1).min(joint.n());
            let provider = ExactProvider::new(&joint, budget);
            let decider = ProviderDecider::exact(&provider, a.tol);
            let recovered = recover_structure(&decider, joint.n(), delta);
            let attached = finish_recovery(a, &provider, recovered)?;
            let dev = markov_deviation(&joint, attached.dag.parent_sets())?;
            let verdict = if dev <= VALIDATION_TOL {
                "markov-compatible"
            } else {
                "NOT markov-compatible"
            };
            status(
                &a.out,
                &format!(
                    "validation: {verdict}, max deviation {dev:.3e} (tolerance {VALIDATION_TOL:e}), max tuple size {} of {budget}",
                    provider.max_requested()
                ),
            );
        }
        RecoverMode::Empirical => {
            let delta = a
                .delta
                .ok_or_else(|| CliError::Usage("--mode empirical needs --delta".into()))?;
            let epsilon = a
                .epsilon
                .ok_or_else(|| CliError::Usage("--mode empirical needs --epsilon".into()))?;
            let is_json = a
                .input
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let freq = if is_json {
                read_frequencies(BufReader::new(File::open(&a.input)?))?
            } else {
                let samples = load_samples(&a.input, a.cards.as_deref())?;
                tuple_frequencies(&samples, (2 * delta + 1).min(samples.n()))?
            };
            let budget = (2 * delta + 1).min(freq.n());
            if freq.k() < budget {
                return Err(CliError::Usage(format!(
                    "frequency table holds {}-tuples, recovery with delta {delta} needs {budget}",
                    freq.k()
                )));
            }
            let provider = EmpiricalProvider::new(&freq)?;
            let decider = ProviderDecider::empirical(&provider, epsilon);
            let recovered = recover_structure(&decider, freq.n(), delta);
            let attached = finish_recovery(a, &provider, recovered)?;
            status(
                &a.out,
                &format!(
                    "decider: empirical, epsilon {epsilon}, threshold {}, l {}, max tuple size {} of {budget}, uniform rows {}",
                    dependence_threshold(epsilon),
                    freq.l(),
                    provider.max_requested(),
                    attached.uniform_rows.len()
                ),
            );
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BoundsReport {
    n: u64,
    k: u64,
    d: u64,
    epsilon: f64,
    delta_risk: f64,
    cylinder_count: Option<u128>,
    crude_count: f64,
    vc_upper_bound: f64,
    vc_lower_bound: u32,
    l_suff: u64,
    l_risk: u64,
    risk_at_l_risk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    vc_upper_bound_from_count: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    risk_at_l_risk_from_count: Option<f64>,
}

/// `key: value` lines in field order; values use their JSON spelling.
fn text_lines(value: &Value, w: &mut dyn Write) -> io::Result<()> {
    if let Value::Object(map) = value {
        for (key, v) in map {
            match v {
                Value::Null => writeln!(w, "{key}: none")?,
                other => writeln!(w, "{key}: {other}")?,
            }
        }
    }
    Ok(())
}

pub fn bounds(a: &BoundsArgs) -> CliResult {
    only(a.format, &[Format::Text, Format::Json], "bounds")?;
    if a.k == 0 || a.k > a.n {
        return Err(CliError::Usage(format!(
            "need 1 <= k <= n, got k = {}, n = {}",
            a.k, a.n
        )));
    }
    let count = cylinder_count(a.n, a.k, a.d);
    let crude = ((a.n * a.d) as f64).powf(a.k as f64);
    let h = vc_upper_bound(a.n, a.k, a.d)?;
    let sizes = required_sample_size(a.n, a.k, a.d, a.epsilon, a.delta_risk)?;
    let (tight_h, tight_risk) = if a.tight {
        let th = vc_upper_bound_from_count(a.n, a.k, a.d)?;
        (Some(th), Some(risk_bound(th, sizes.l_risk, a.epsilon)?.raw))
    } else {
        (None, None)
    };
    let report = BoundsReport {
        n: a.n,
        k: a.k,
        d: a.d,
        epsilon: a.epsilon,
        delta_risk: a.delta_risk,
        cylinder_count: count.ok().map(|c| c.exact),
        crude_count: crude,
        vc_upper_bound: h,
        vc_lower_bound: vc_lower_bound(a.n, a.k)?,
        l_suff: sizes.l_suff,
        l_risk: sizes.l_risk,
        risk_at_l_risk: risk_bound(h, sizes.l_risk, a.epsilon)?.raw,
        vc_upper_bound_from_count: tight_h,
        risk_at_l_risk_from_count: tight_risk,
    };
    emit(&a.out, |w| match a.format {
        Format::Json => Ok(write_json(&report, w)?),
        _ => Ok(text_lines(&serde_json::to_value(&report)?, w)?),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct WitnessDocument {
    witness: ShatterWitness,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verdict: Option<ShatterVerdict>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WitnessInput {
    Document(WitnessDocument),
    Bare(ShatterWitness),
}

fn write_witness_text(doc: &WitnessDocument, w: &mut dyn Write) -> io::Result<()> {
    let wit = &doc.witness;
    writeln!(w, "n: {}, k: {}, points: {}", wit.n, wit.k, wit.l_points)?;
    writeln!(w, "matrix:")?;
    for row in &wit.matrix {
        let bits: String = row.iter().map(|b| char::from(b'0' + b)).collect();
        writeln!(w, "  {bits}")?;
    }
    writeln!(w, "points:")?;
    for p in &wit.points {
        let vals: Vec<String> = p.iter().map(usize::to_string).collect();
        writeln!(w, "  ({})", vals.join(","))?;
    }
    if let Some(v) = &doc.verdict {
        match v.failing_subset {
            None => writeln!(
                w,
                "shattered: true ({} subsets certified)",
                v.certificates.len()
            )?,
            Some(s) => writeln!(w, "shattered: false (subset {s:#b} not cut out)")?,
        }
    }
    Ok(())
}

pub fn witness(a: &WitnessArgs) -> CliResult {
    only(a.format, &[Format::Json, Format::Text], "witness")?;
    let wit = match (&a.verify, a.n) {
        (Some(path), _) => match serde_json::from_reader(BufReader::new(File::open(path)?))? {
            WitnessInput::Document(doc) => doc.witness,
            WitnessInput::Bare(w) => w,
        },
        (None, Some(n)) => {
            let k = a.k.ok_or_else(|| CliError::Usage("give --k".into()))?;
            shatter_witness(n, k, &binary_value_pairs(n))?
        }
        (None, None) => return Err(CliError::Usage("give --n or --verify".into())),
    };
    let verdict = verify_shattered(&wit, a.k.unwrap_or(wit.k));
    let shattered = verdict.shattered;
    let doc = WitnessDocument {
        witness: wit,
        verdict: Some(verdict),
    };
    emit(&a.out, |w| match a.format {
        Format::Json => Ok(write_json(&doc, w)?),
        _ => Ok(write_witness_text(&doc, w)?),
    })?;
    if shattered {
        Ok(())
    } else {
        Err(CliError::Verification("witness verification failed".into()))
    }
}

pub fn experiment(a: &ExperimentArgs) -> CliResult {
    only(a.format, &[Format::Text, Format::Json], "experiment")?;
    let mut config = ExperimentConfig::from_json(&fs::read_to_string(&a.config)?)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(dir) = &a.output {
        config.output_dir = Some(dir.clone());
    }
    let dir = config.output_dir.clone().ok_or_else(|| {
        CliError::Usage("no output directory: set output_dir or pass --output".into())
    })?;
    let report = run_experiment(&config)?;
    write_report(&report, Path::new(&dir))?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    match a.format {
        Format::Json => write_json(&report.summary, &mut w)?,
        _ => {
            for s in &report.summary.per_sample_size {
                let l = s.l.map_or_else(|| "exact".to_string(), |l| l.to_string());
                writeln!(
                    w,
                    "l {l}: {}/{} markov-ok, {} model-violation, {} markov-fail, {} error, max tuple size {}",
                    s.markov_ok, s.trials, s.model_violation, s.markov_fail, s.errors, s.max_tuple_size
                )?;
            }
            writeln!(w, "reports written to {}", dir.display())?;
        }
    }
    Ok(())
}
