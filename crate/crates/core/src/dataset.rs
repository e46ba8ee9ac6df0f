//! Suite files, the init/eval split and the synthetic benchmark generator.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{curvature_profile, is_self_intersecting, road_length};
use crate::model::{LabeledCase, MIN_SUITE_SIZE, Outcome, Point, TestSuite};
use crate::validate::{ValidationReport, validate_suite};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed suite file: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: invalid suite: {report}")]
    Validation { path: PathBuf, report: ValidationReport },
    #[error("split of {len} cases at fraction {fraction} leaves an empty side")]
    DegenerateSplit { len: usize, fraction: f64 },
    #[error("invalid split fraction {0}; must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("suite {suite_id}: {attempts} consecutive roads rejected as self-intersecting")]
    GenerationExhausted { suite_id: String, attempts: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_owned(), source }
}

/// Reads suites from some on-disk representation. Adapters for other
/// dataset layouts implement this and hand back validated suites.
pub trait SuiteReader {
    fn read_suite(&self, path: &Path) -> Result<TestSuite, DatasetError>;
}

/// The canonical JSON suite format.
#[derive(Debug, Clone, Copy, Default)]
pub struct JsonSuiteReader;

impl SuiteReader for JsonSuiteReader {
    fn read_suite(&self, path: &Path) -> Result<TestSuite, DatasetError> {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let suite: TestSuite = serde_json::from_reader(BufReader::new(file)).map_err(|e| {
            use serde_json::error::Category;
            match e.classify() {
                Category::Data => DatasetError::Schema { path: path.to_owned(), message: e.to_string() },
                Category::Io => DatasetError::Io { path: path.to_owned(), source: e.into() },
                Category::Syntax | Category::Eof => {
                    DatasetError::Parse { path: path.to_owned(), message: e.to_string() }
                }
            }
        })?;
        let report = validate_suite(&suite);
        if !report.is_valid() {
            return Err(DatasetError::Validation { path: path.to_owned(), report });
        }
        Ok(suite)
    }
}

pub fn load_suite(path: impl AsRef<Path>) -> Result<TestSuite, DatasetError> {
    JsonSuiteReader.read_suite(path.as_ref())
}

pub fn store_suite(suite: &TestSuite, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, suite).map_err(|e| DatasetError::Io { path: path.to_owned(), source: e.into() })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Suite files of a benchmark directory, in manifest order when a manifest
/// exists, otherwise sorted by file name.
pub fn benchmark_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, DatasetError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| DatasetError::Parse { path: manifest_path.clone(), message: e.to_string() })?;
        return Ok(manifest.suites.iter().map(|s| dir.join(&s.file)).collect());
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") && path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub init_fraction: f64,
    /// `None` keeps the stored case order.
    pub shuffle_seed: Option<u64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { init_fraction: 0.8, shuffle_seed: None }
    }
}

impl SplitSpec {
    pub fn init_size(&self, len: usize) -> usize {
        (self.init_fraction * len as f64).floor() as usize
    }
}

/// Splits a suite into the initialization part and the evaluation part.
pub fn split_suite(suite: &TestSuite, spec: &SplitSpec) -> Result<(TestSuite, TestSuite), DatasetError> {
    let f = spec.init_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(DatasetError::InvalidFraction(f));
    }
    let len = suite.cases.len();
    let n_init = spec.init_size(len);
    if n_init == 0 || n_init == len {
        return Err(DatasetError::DegenerateSplit { len, fraction: f });
    }
    let mut cases = suite.cases.clone();
    if let Some(seed) = spec.shuffle_seed {
        cases.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let eval = cases.split_off(n_init);
    Ok((TestSuite::new(suite.suite_id.clone(), cases), TestSuite::new(suite.suite_id.clone(), eval)))
}

/// Fraction of failing cases.
pub fn suite_failure_rate(suite: &TestSuite) -> f64 {
    if suite.cases.is_empty() {
        return 0.0;
    }
    suite.fault_count() as f64 / suite.cases.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T> Range<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTimeModel {
    pub base_sec: f64,
    pub sec_per_meter: f64,
    /// Uniform jitter in `[0, jitter_sec)` added per case.
    pub jitter_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_suites: usize,
    pub cases_per_suite: usize,
    pub seed: u64,
    pub segment_count: Range<usize>,
    /// Range of |curvature| per segment, 1/m. The sign is drawn separately.
    pub curvature_amplitude: Range<f64>,
    /// Segment length range, meters.
    pub segment_length: Range<f64>,
    pub road_width: f64,
    /// A case fails iff the maximum |curvature| of its profile exceeds this.
    pub fail_curvature_threshold: f64,
    pub label_noise: f64,
    pub sim_time: SimTimeModel,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_suites: 36,
            cases_per_suite: 950,
            seed: 0,
            segment_count: Range::new(2, 5),
            curvature_amplitude: Range::new(0.0, 0.08),
            segment_length: Range::new(15.0, 50.0),
            road_width: 8.0,
            fail_curvature_threshold: DEFAULT_FAIL_THRESHOLD,
            label_noise: 0.0,
            sim_time: SimTimeModel { base_sec: 20.0, sec_per_meter: 0.25, jitter_sec: 5.0 },
        }
    }
}

/// Threshold that yields a pooled failure rate of about 0.40 under the
/// default curvature and segment ranges.
pub const DEFAULT_FAIL_THRESHOLD: f64 = 0.0677;

/// Attempts per road before the generator gives up.
pub const MAX_ROAD_ATTEMPTS: usize = 1000;

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidConfig(m));
        if self.n_suites < 1 {
            return bad("n_suites must be at least 1".into());
        }
        if self.cases_per_suite < MIN_SUITE_SIZE {
            return bad(format!("cases_per_suite must be at least {MIN_SUITE_SIZE}, got {}", self.cases_per_suite));
        }
        let sc = self.segment_count;
        if sc.min < 1 || sc.min > sc.max {
            return bad(format!("segment_count range [{}, {}] is empty or zero", sc.min, sc.max));
        }
        let ca = self.curvature_amplitude;
        if !(ca.min >= 0.0 && ca.min <= ca.max && ca.max.is_finite()) {
            return bad(format!("curvature_amplitude range [{}, {}] is invalid", ca.min, ca.max));
        }
        let sl = self.segment_length;
        if !(sl.min >= 1.0 && sl.min <= sl.max && sl.max.is_finite()) {
            return bad(format!("segment_length range [{}, {}] is invalid (min 1 m)", sl.min, sl.max));
        }
        if !(self.road_width > 0.0 && self.road_width.is_finite()) {
            return bad(format!("road_width {} must be positive", self.road_width));
        }
        if !(self.fail_curvature_threshold > 0.0 && self.fail_curvature_threshold.is_finite()) {
            return bad(format!("fail_curvature_threshold {} must be positive", self.fail_curvature_threshold));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return bad(format!("label_noise {} must lie in [0, 1)", self.label_noise));
        }
        let st = self.sim_time;
        if ![st.base_sec, st.sec_per_meter, st.jitter_sec].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return bad("sim_time parameters must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn suite_id(&self, index: usize) -> String {
        format!("synthetic_{:03}", index + 1)
    }
}

/// Generates `n_suites` labeled suites. Suite `i` draws from ChaCha stream
/// `i` of the configured seed, so suites are independent of each other and
/// of the number of suites generated.
pub fn generate_suites(config: &GeneratorConfig) -> Result<Vec<TestSuite>, DatasetError> {
    config.validate()?;
    (0..config.n_suites).into_par_iter().map(|i| generate_suite(config, i)).collect()
}

pub fn generate_suite(config: &GeneratorConfig, index: usize) -> Result<TestSuite, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let suite_id = config.suite_id(index);
    let mut cases = Vec::with_capacity(config.cases_per_suite);
    for c in 0..config.cases_per_suite {
        let road = generate_road(config, &mut rng).ok_or_else(|| DatasetError::GenerationExhausted {
            suite_id: suite_id.clone(),
            attempts: MAX_ROAD_ATTEMPTS,
        })?;
        let max_kappa = curvature_profile(&road).expect("generated roads have >= 3 points").max_abs_kappa();
        let mut fails = max_kappa > config.fail_curvature_threshold;
        let flip: f64 = rng.random();
        if flip < config.label_noise {
            fails = !fails;
        }
        let jitter: f64 = rng.random();
        let st = config.sim_time;
        let sim = st.base_sec + st.sec_per_meter * road_length(&road) + st.jitter_sec * jitter;
        let outcome = if fails { Outcome::Fail } else { Outcome::Pass };
        cases.push(LabeledCase::new(format!("{suite_id}_t{c:04}"), road, outcome, quantize(sim)));
    }
    Ok(TestSuite::new(suite_id, cases))
}

/// Micrometre quantization keeps files compact; curvature and labels are
/// computed from the quantized points.
fn quantize(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn sample_f64(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.min == r.max { r.min } else { rng.random_range(r.min..r.max) }
}

/// Builds one road by integrating a piecewise-constant curvature signal at
/// 1 m steps. `None` after `MAX_ROAD_ATTEMPTS` rejected candidates.
fn generate_road(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Option<Vec<Point>> {
    for _ in 0..MAX_ROAD_ATTEMPTS {
        let n_segments = rng.random_range(config.segment_count.min..=config.segment_count.max);
        let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
        let (mut x, mut y) = (0.0_f64, 0.0_f64);
        let mut road = vec![Point::new(0.0, 0.0)];
        for _ in 0..n_segments {
            let amplitude = sample_f64(rng, config.curvature_amplitude);
            let kappa = if rng.random::<bool>() { amplitude } else { -amplitude };
            let steps = sample_f64(rng, config.segment_length).round().max(1.0) as usize;
            for _ in 0..steps {
                // chord along the mid-step heading: constant curvature puts
                // the points on a common circle
                let mid = heading + 0.5 * kappa;
                x += mid.cos();
                y += mid.sin();
                heading += kappa;
                road.push(Point::new(quantize(x), quantize(y)));
            }
        }
        if road.len() >= 3 && is_well_formed(&road) && !is_self_intersecting(&road, config.road_width) {
            return Some(road);
        }
    }
    None
}

fn is_well_formed(road: &[Point]) -> bool {
    road.windows(2).all(|w| w[0] != w[1]) && road.windows(3).all(|w| w[0] != w[2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub suite_id: String,
    pub file: String,
    /// ChaCha stream index under the manifest seed.
    pub stream: u64,
    pub cases: usize,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub suites: Vec<ManifestEntry>,
}

/// Generates the benchmark and writes one file per suite plus a manifest.
pub fn write_benchmark(config: &GeneratorConfig, dir: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let dir = dir.as_ref();
    let suites = generate_suites(config)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(suites.len());
    for (i, suite) in suites.iter().enumerate() {
        let file = format!("{}.json", suite.suite_id);
        store_suite(suite, dir.join(&file))?;
        entries.push(ManifestEntry {
            suite_id: suite.suite_id.clone(),
            file,
            stream: i as u64,
            cases: suite.len(),
            failure_rate: suite_failure_rate(suite),
        });
    }
    let manifest = Manifest { seed: config.seed, generator: config.clone(), suites: entries };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}
