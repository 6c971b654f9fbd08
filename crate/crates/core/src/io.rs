//! File formats: model, behaviour-policy, experiment, run-record and solve
//! files as JSON, bulk sweep results as CSV.
//!
//! Every JSON file carries `"version": 1`. A missing version is read as 1;
//! any other version is rejected. Schema problems are reported with the
//! JSON pointer of the offending value, e.g. `/discount` or
//! `/transitions/2/0`. Writes go to a temporary file in the target directory
//! and are renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{ExponentFit, Oracle, RunSpec, SweepConfig, SweepOutcome, ThresholdRow};
use crate::learners::{Algorithm, RunRecord};
use crate::mdp::{FiniteHorizonMdp, QTable, TabularMdp, VTable};
use crate::sampling::BehaviorPolicy;

/// Version written into, and accepted from, every file.
pub const FORMAT_VERSION: u64 = 1;
/// Environment variable naming a directory for relative output paths.
pub const OUTPUT_DIR_ENV: &str = "QLAB_OUTPUT_DIR";

const MIGRATION_HINT: &str =
    "re-export the file with a matching qlab release, or convert it to the version 1 schema and set \"version\": 1";

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Resolves a relative output path against [`OUTPUT_DIR_ENV`] when set.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let name = path.file_name().ok_or_else(|| schema("", format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        use std::io::Write;
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e));
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_json(&text)
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| schema("", format!("invalid JSON: {e}")))
}

fn to_pretty(value: &Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Checks the `version` field of a top-level object and removes it.
fn take_version(value: &mut Value) -> Result<()> {
    let obj = value.as_object_mut().ok_or_else(|| schema("", "expected a JSON object"))?;
    match obj.remove("version") {
        None => Ok(()),
        Some(v) => match v.as_u64() {
            Some(FORMAT_VERSION) => Ok(()),
            Some(found) => Err(Error::UnsupportedVersion {
                found,
                supported: FORMAT_VERSION,
                hint: MIGRATION_HINT.into(),
            }),
            None => Err(schema("/version", "expected a non-negative integer")),
        },
    }
}

fn with_version(mut value: Value) -> Value {
    if let Value::Object(obj) = &mut value {
        let mut out = Map::new();
        out.insert("version".into(), Value::from(FORMAT_VERSION));
        out.append(obj);
        Value::Object(out)
    } else {
        value
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

/// Typed decoding with JSON-pointer error locations.
fn decode<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut pointer = pointer_of(e.path());
        let message = e.inner().to_string();
        // a missing field is reported at its parent; point at the field itself
        if let Some(rest) = message.strip_prefix("missing field `") {
            if let Some(name) = rest.split('`').next() {
                pointer = format!("{pointer}/{name}");
            }
        }
        schema(pointer, message)
    })
}

fn encode<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| Error::Numerical(e.to_string()))
}

fn save_versioned<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, &to_pretty(&with_version(encode(value)?))?)
}

fn load_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut v = read_json(path)?;
    take_version(&mut v)?;
    decode(v)
}

// ---------------------------------------------------------------------------
// Model files

/// A model file: discounted, or finite-horizon when a `horizon` key is present.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Discounted(TabularMdp),
    FiniteHorizon(FiniteHorizonMdp),
}

struct Reader<'a> {
    obj: &'a Map<String, Value>,
}

impl<'a> Reader<'a> {
    fn new(v: &'a Value) -> Result<Self> {
        Ok(Self {
            obj: v.as_object().ok_or_else(|| schema("", "expected a JSON object"))?,
        })
    }

    fn field(&self, key: &str) -> Result<&'a Value> {
        self.obj.get(key).ok_or_else(|| schema(format!("/{key}"), "missing required field"))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.field(key)?
            .as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| schema(format!("/{key}"), "expected a non-negative integer"))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.field(key)?.as_f64().ok_or_else(|| schema(format!("/{key}"), "expected a number"))
    }

    fn bool(&self, key: &str) -> Result<bool> {
        self.field(key)?.as_bool().ok_or_else(|| schema(format!("/{key}"), "expected true or false"))
    }
}

/// Flattens a nested array of the given shape, leaf by leaf.
fn flatten<T>(
    v: &Value,
    pointer: &str,
    shape: &[usize],
    leaf: &dyn Fn(&Value) -> Option<T>,
    leaf_kind: &str,
    out: &mut Vec<T>,
) -> Result<()> {
    match shape.split_first() {
        None => {
            out.push(leaf(v).ok_or_else(|| schema(pointer, format!("expected {leaf_kind}")))?);
            Ok(())
        }
        Some((&n, rest)) => {
            let arr = v.as_array().ok_or_else(|| schema(pointer, "expected an array"))?;
            if arr.len() != n {
                return Err(schema(pointer, format!("expected {n} entries, found {}", arr.len())));
            }
            for (i, x) in arr.iter().enumerate() {
                flatten(x, &format!("{pointer}/{i}"), rest, leaf, leaf_kind, out)?;
            }
            Ok(())
        }
    }
}

fn numbers(v: &Value, pointer: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    flatten(v, pointer, shape, &Value::as_f64, "a number", &mut out)?;
    Ok(out)
}

fn nest(flat: &[f64], shape: &[usize]) -> Value {
    match shape.split_first() {
        None => Value::from(flat[0]),
        Some((&n, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array((0..n).map(|i| nest(&flat[i * stride..(i + 1) * stride], rest)).collect())
        }
    }
}

fn mdp_from_value(v: &Value) -> Result<TabularMdp> {
    let r = Reader::new(v)?;
    let ns = r.usize("num_states")?;
    let na = r.usize("num_actions")?;
    let discount = r.f64("discount")?;
    let reward = numbers(r.field("rewards")?, "/rewards", &[ns, na])?;
    let transition = numbers(r.field("transitions")?, "/transitions", &[ns, na, ns])?;
    let mask = match r.obj.get("action_mask") {
        None | Some(Value::Null) => None,
        Some(m) => {
            let mut out = Vec::new();
            flatten(m, "/action_mask", &[ns, na], &Value::as_bool, "true or false", &mut out)?;
            Some(out)
        }
    };
    TabularMdp::new(ns, na, discount, transition, reward, mask)
}

fn mdp_to_value(mdp: &TabularMdp) -> Value {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut obj = Map::new();
    obj.insert("version".into(), Value::from(FORMAT_VERSION));
    obj.insert("num_states".into(), Value::from(ns));
    obj.insert("num_actions".into(), Value::from(na));
    obj.insert("discount".into(), Value::from(mdp.discount()));
    obj.insert("rewards".into(), nest(mdp.rewards(), &[ns, na]));
    obj.insert("transitions".into(), nest(mdp.transitions(), &[ns, na, ns]));
    if mdp.has_mask() {
        let rows = (0..ns).map(|s| Value::from(mdp.mask()[s * na..(s + 1) * na].to_vec())).collect();
        obj.insert("action_mask".into(), Value::Array(rows));
    }
    Value::Object(obj)
}

fn finite_from_value(v: &Value) -> Result<FiniteHorizonMdp> {
    let r = Reader::new(v)?;
    let ns = r.usize("num_states")?;
    let na = r.usize("num_actions")?;
    let h = r.usize("horizon")?;
    let time_invariant = match r.obj.get("time_invariant") {
        None => false,
        Some(_) => r.bool("time_invariant")?,
    };
    let kernels = if time_invariant { 1 } else { h };
    let flat_r = numbers(r.field("rewards")?, "/rewards", &[h, ns, na])?;
    let flat_t = numbers(r.field("transitions")?, "/transitions", &[kernels, ns, na, ns])?;
    let pairs = ns * na;
    let rewards = flat_r.chunks(pairs.max(1)).map(<[f64]>::to_vec).collect();
    let transitions = flat_t.chunks((pairs * ns).max(1)).map(<[f64]>::to_vec).collect();
    FiniteHorizonMdp::new(ns, na, h, time_invariant, transitions, rewards)
}

fn finite_to_value(f: &FiniteHorizonMdp) -> Value {
    let (ns, na, h) = (f.num_states(), f.num_actions(), f.horizon());
    let mut obj = Map::new();
    obj.insert("version".into(), Value::from(FORMAT_VERSION));
    obj.insert("num_states".into(), Value::from(ns));
    obj.insert("num_actions".into(), Value::from(na));
    obj.insert("horizon".into(), Value::from(h));
    obj.insert("time_invariant".into(), Value::from(f.is_time_invariant()));
    obj.insert(
        "rewards".into(),
        Value::Array(f.reward_tables().iter().map(|r| nest(r, &[ns, na])).collect()),
    );
    obj.insert(
        "transitions".into(),
        Value::Array(f.kernels().iter().map(|k| nest(k, &[ns, na, ns])).collect()),
    );
    Value::Object(obj)
}

/// Parses model JSON text; the model is validated.
pub fn parse_model(text: &str) -> Result<Model> {
    let mut v = parse_json(text)?;
    take_version(&mut v)?;
    if v.get("horizon").is_some() {
        finite_from_value(&v).map(Model::FiniteHorizon)
    } else {
        mdp_from_value(&v).map(Model::Discounted)
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_model(&text)
}

/// Loads a discounted model.
pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    match load_model(path)? {
        Model::Discounted(m) => Ok(m),
        Model::FiniteHorizon(_) => Err(schema("/horizon", "expected a discounted model")),
    }
}

pub fn load_finite_horizon(path: &Path) -> Result<FiniteHorizonMdp> {
    match load_model(path)? {
        Model::FiniteHorizon(f) => Ok(f),
        Model::Discounted(_) => Err(schema("/horizon", "missing required field")),
    }
}

pub fn mdp_to_json(mdp: &TabularMdp) -> String {
    serde_json::to_string_pretty(&mdp_to_value(mdp)).expect("plain JSON values serialize")
}

pub fn save_mdp(mdp: &TabularMdp, path: &Path) -> Result<()> {
    write_atomic(path, &to_pretty(&mdp_to_value(mdp))?)
}

pub fn save_finite_horizon(f: &FiniteHorizonMdp, path: &Path) -> Result<()> {
    write_atomic(path, &to_pretty(&finite_to_value(f))?)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    match model {
        Model::Discounted(m) => save_mdp(m, path),
        Model::FiniteHorizon(f) => save_finite_horizon(f, path),
    }
}

// ---------------------------------------------------------------------------
// Behaviour policies

#[derive(Serialize, Deserialize)]
struct BehaviorFile {
    probabilities: Vec<Vec<f64>>,
}

/// Reads `{"version": 1, "probabilities": [[...], ...]}`.
pub fn load_behavior(path: &Path) -> Result<BehaviorPolicy> {
    let f: BehaviorFile = load_versioned(path)?;
    BehaviorPolicy::from_rows(f.probabilities)
}

pub fn save_behavior(b: &BehaviorPolicy, path: &Path) -> Result<()> {
    save_versioned(
        &BehaviorFile {
            probabilities: b.to_rows(),
        },
        path,
    )
}

// ---------------------------------------------------------------------------
// Experiment files

/// A single run or a sweep, as read from `{"version": 1, "run": {...}}` or
/// `{"version": 1, "sweep": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentFile {
    Run(RunSpec),
    Sweep(SweepConfig),
}

impl ExperimentFile {
    /// Resolves relative instance and behaviour paths against `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        match self {
            ExperimentFile::Run(r) => ExperimentFile::Run(r.resolved(base)),
            ExperimentFile::Sweep(s) => ExperimentFile::Sweep(s.resolved(base)),
        }
    }
}

pub fn parse_experiment(text: &str) -> Result<ExperimentFile> {
    let mut v = parse_json(text)?;
    take_version(&mut v)?;
    decode(v)
}

pub fn experiment_to_json(exp: &ExperimentFile) -> Result<String> {
    serde_json::to_string_pretty(&with_version(encode(exp)?)).map_err(|e| Error::Numerical(e.to_string()))
}

/// Loads an experiment file with relative paths resolved against its
/// directory.
pub fn load_experiment(path: &Path) -> Result<ExperimentFile> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let exp = parse_experiment(&text)?;
    Ok(exp.resolved(path.parent().unwrap_or(Path::new("."))))
}

pub fn save_experiment(exp: &ExperimentFile, path: &Path) -> Result<()> {
    save_versioned(exp, path)
}

// ---------------------------------------------------------------------------
// Run records and solve output

pub fn save_run_record(rec: &RunRecord, path: &Path) -> Result<()> {
    save_versioned(rec, path)
}

pub fn load_run_record(path: &Path) -> Result<RunRecord> {
    load_versioned(path)
}

pub fn run_record_to_json(rec: &RunRecord) -> Result<String> {
    serde_json::to_string_pretty(&with_version(encode(rec)?)).map_err(|e| Error::Numerical(e.to_string()))
}

/// Output of the exact solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveOutput {
    Discounted {
        q: QTable,
        v: VTable,
        iterations: usize,
        residual: f64,
    },
    FiniteHorizon {
        /// One table per step, step 1 first.
        q: Vec<QTable>,
        v: Vec<VTable>,
    },
}

impl SolveOutput {
    /// The oracle a learner of kind `algorithm` is scored against.
    pub fn oracle_for(&self, algorithm: Algorithm) -> Result<Oracle> {
        match (self, algorithm) {
            (SolveOutput::Discounted { q, .. }, Algorithm::SyncQ | Algorithm::AsyncQ) => Ok(Oracle::Q(q.clone())),
            (SolveOutput::Discounted { v, .. }, Algorithm::SyncTd) => Ok(Oracle::V(v.clone())),
            (SolveOutput::FiniteHorizon { q, .. }, Algorithm::FiniteQ) => Ok(Oracle::PerStep(q.clone())),
            _ => Err(Error::InvalidParameter(format!("solve output does not fit {algorithm}"))),
        }
    }
}

pub fn solve_output_to_json(out: &SolveOutput) -> Result<String> {
    serde_json::to_string_pretty(&with_version(encode(out)?)).map_err(|e| Error::Numerical(e.to_string()))
}

pub fn save_solve_output(out: &SolveOutput, path: &Path) -> Result<()> {
    save_versioned(out, path)
}

pub fn load_solve_output(path: &Path) -> Result<SolveOutput> {
    load_versioned(path)
}

// ---------------------------------------------------------------------------
// Sweep results

/// JSON summary of a sweep: fits, flags and a config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: SweepConfig,
    pub cells: Vec<crate::experiments::CellSummary>,
    pub aborted: Vec<crate::experiments::AbortedCell>,
    #[serde(default)]
    pub fits: Vec<ExponentFit>,
    #[serde(default)]
    pub thresholds: Vec<ThresholdRow>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn save_sweep_summary(summary: &SweepSummary, path: &Path) -> Result<()> {
    save_versioned(summary, path)
}

pub fn load_sweep_summary(path: &Path) -> Result<SweepSummary> {
    load_versioned(path)
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).map_err(|e| Error::Numerical(e.to_string()))?;
    w.into_inner().map_err(|e| Error::Numerical(e.to_string()))
}

/// One row per run: `algorithm,gamma,T,seed,error,walltime`.
pub fn runs_csv(outcome: &SweepOutcome) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["algorithm", "gamma", "T", "seed", "error", "walltime"])?;
        for r in &outcome.runs {
            w.write_record([
                r.algorithm.to_string(),
                r.gamma.to_string(),
                r.t.to_string(),
                r.seed.to_string(),
                r.error.to_string(),
                r.wall_time_secs.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Long format for plotting: `algorithm,gamma,T,statistic,value` with the
/// statistics `aggregate`, `median`, `q1` and `q3` of every cell.
pub fn plot_data_csv(outcome: &SweepOutcome) -> Result<Vec<u8>> {
    let alg = outcome.config.algorithm.to_string();
    csv_bytes(|w| {
        w.write_record(["algorithm", "gamma", "T", "statistic", "value"])?;
        for c in &outcome.cells {
            for (name, value) in [("aggregate", c.aggregate), ("median", c.median), ("q1", c.q1), ("q3", c.q3)] {
                w.write_record([alg.clone(), c.gamma.to_string(), c.t.to_string(), name.into(), value.to_string()])?;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{InstanceSource, RunSpec};
    use crate::hard::build_hard_mdp;
    use crate::mdp::random::{random_finite_horizon, random_mdp};
    use crate::schedules::ScheduleSpec;

    fn schema_pointer(e: Error) -> String {
        match e {
            Error::Schema { pointer, .. } => pointer,
            other => panic!("expected a schema error, got {other}"),
        }
    }

    #[test]
    fn hard_instance_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hard.json");
        let m = build_hard_mdp(0.8).unwrap();
        save_mdp(&m, &p).unwrap();
        let back = load_mdp(&p).unwrap();
        assert_eq!(back, m);
        assert!(back.transitions().iter().zip(m.transitions()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"version\": 1"));
        assert!(text.contains("action_mask"));
    }

    #[test]
    fn large_random_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("big.json");
        let m = random_mdp(100, 2, 0.97, 5).unwrap();
        save_mdp(&m, &p).unwrap();
        let back = load_mdp(&p).unwrap();
        let delta = back.transitions().iter().zip(m.transitions()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert_eq!(delta, 0.0);
        assert_eq!(back, m);
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let ok = mdp_to_json(&random_mdp(2, 2, 0.9, 1).unwrap());
        let mut v: Value = serde_json::from_str(&ok).unwrap();
        v.as_object_mut().unwrap().remove("discount");
        assert_eq!(schema_pointer(parse_model(&v.to_string()).unwrap_err()), "/discount");

        let mut v: Value = serde_json::from_str(&ok).unwrap();
        v["transitions"][1][0] = Value::from(vec![1.0]);
        assert_eq!(schema_pointer(parse_model(&v.to_string()).unwrap_err()), "/transitions/1/0");

        let mut v: Value = serde_json::from_str(&ok).unwrap();
        v["rewards"][0][1] = Value::from("x");
        assert_eq!(schema_pointer(parse_model(&v.to_string()).unwrap_err()), "/rewards/0/1");
        assert!(parse_model("[1, 2]").is_err());
        assert!(parse_model("{not json").is_err());
    }

    #[test]
    fn invalid_models_list_violations() {
        let ok = mdp_to_json(&random_mdp(2, 2, 0.9, 1).unwrap());
        let mut v: Value = serde_json::from_str(&ok).unwrap();
        v["transitions"][0][0] = Value::from(vec![0.7, 0.7]);
        v["rewards"][1][1] = Value::from(1.5);
        match parse_model(&v.to_string()).unwrap_err() {
            Error::Invalid(list) => {
                let kinds: Vec<&str> = list.iter().map(|x| x.kind()).collect();
                assert!(kinds.contains(&"row-sum") && kinds.contains(&"reward-range"), "{kinds:?}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn versions() {
        let ok = mdp_to_json(&random_mdp(2, 2, 0.9, 1).unwrap());
        let mut v: Value = serde_json::from_str(&ok).unwrap();
        v.as_object_mut().unwrap().remove("version");
        assert!(parse_model(&v.to_string()).is_ok());
        v["version"] = Value::from(2);
        let err = parse_model(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion { found: 2, .. }));
        assert!(err.to_string().contains("convert"));
    }

    #[test]
    fn finite_horizon_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for tv in [false, true] {
            let p = dir.path().join(format!("f{tv}.json"));
            let f = random_finite_horizon(3, 2, 4, tv, 9).unwrap();
            save_finite_horizon(&f, &p).unwrap();
            assert_eq!(load_finite_horizon(&p).unwrap(), f);
            assert!(load_mdp(&p).is_err());
        }
    }

    #[test]
    fn behavior_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        let b = BehaviorPolicy::from_rows(vec![vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        save_behavior(&b, &p).unwrap();
        assert_eq!(load_behavior(&p).unwrap(), b);
    }

    #[test]
    fn experiment_files_round_trip() {
        let run = ExperimentFile::Run(RunSpec {
            algorithm: Algorithm::SyncQ,
            instance: InstanceSource::File { path: "m.json".into() },
            gamma: None,
            horizon: None,
            schedule: ScheduleSpec::RescaledLinear { c: 1.0, log_exponent: Some(3) },
            iterations: 1000,
            seed: u64::MAX,
            init: Default::default(),
            checkpoint_every: 100,
            snapshots: false,
            start_state: 0,
            behavior: None,
        });
        let sweep = ExperimentFile::Sweep(SweepConfig::new(
            Algorithm::SyncTd,
            InstanceSource::HardMrp,
            vec![0.85, 0.9, 0.95],
            vec![1_000_000],
            ScheduleSpec::Linear,
            20,
            7,
        ));
        for exp in [run, sweep] {
            let text = experiment_to_json(&exp).unwrap();
            let back = parse_experiment(&text).unwrap();
            assert_eq!(back, exp);
            assert_eq!(experiment_to_json(&back).unwrap(), text);
        }
        let err = parse_experiment(r#"{"version":1,"sweep":{"algorithm":"sync_q"}}"#).unwrap_err();
        assert_eq!(schema_pointer(err), "/sweep/instance");
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.json");
        fs::write(&p, r#"{"version":1,"run":{"algorithm":"sync_q","instance":{"kind":"file","path":"m.json"},"schedule":{"kind":"linear"},"iterations":5,"seed":1}}"#).unwrap();
        let ExperimentFile::Run(r) = load_experiment(&p).unwrap() else { panic!() };
        assert_eq!(r.instance, InstanceSource::File { path: dir.path().join("m.json") });
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
