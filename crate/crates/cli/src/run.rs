//! `run`: load, embed, and write `manifest.json`, per-step embeddings, the
//! stress trace, the summary and optional Shepard samples.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use pglimmer::datamatrix::{load_chunk_dir, load_csv};
use pglimmer::glimmer::run_glimmer;
use pglimmer::metric::{full_normalized_stress, shepard_sample};
use pglimmer::{
    rng, DataMatrix64, PackedWindow, ProgressSnapshot64, ProgressiveEngine, SnapshotKind, StressTrace64,
};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::args::{FullStressArg, ModeArg, RunArgs};
use crate::settings::{read_manifest, RunSettings};
use crate::{usage, CliError, CliResult};

const SHEPARD_TAG: u64 = 0x5348_4550;

#[derive(Debug, Clone, PartialEq)]
pub struct InputInfo {
    pub kind: &'static str,
    pub sha256: String,
    pub points: usize,
    pub dims: usize,
    pub chunks: usize,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub active_dims: usize,
    pub iterations: usize,
    pub full_stress: Option<f64>,
    pub duration: Duration,
}

#[derive(Debug)]
pub struct RunReport {
    pub settings: RunSettings,
    pub input: InputInfo,
    pub steps: Vec<StepRecord>,
    pub files: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn chunk_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

/// SHA-256 of the input bytes; for a directory, of every chunk file's name
/// and contents in load order.
pub fn input_digest(path: &Path) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        for f in chunk_files(path)? {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update(fs::read(&f).with_context(|| format!("reading {}", f.display()))?);
            h.update([0u8]);
        }
    } else {
        h.update(fs::read(path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(hex(&h.finalize()))
}

fn load(settings: &RunSettings) -> CliResult<(DataMatrix64, InputInfo)> {
    let path = &settings.input;
    if !path.exists() {
        return Err(CliError::Runtime(anyhow!("input {} does not exist", path.display())));
    }
    let (matrix, kind) = if path.is_dir() {
        if settings.chunk_width.is_some() {
            return Err(usage("--chunk-width applies to CSV input, not a chunk directory"));
        }
        (load_chunk_dir::<f64>(path)?, "chunk_dir")
    } else {
        (load_csv::<f64>(path, settings.chunk_width.unwrap_or(1))?, "csv")
    };
    let info = InputInfo {
        kind,
        sha256: input_digest(path)?,
        points: matrix.point_count(),
        dims: matrix.total_dims(),
        chunks: matrix.chunks().len(),
    };
    Ok((matrix, info))
}

fn embedding_csv(positions: &[[f64; 2]]) -> String {
    let mut s = String::from("point_id,x,y\n");
    for (i, p) in positions.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", p[0], p[1]);
    }
    s
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    trace: String,
    summary: String,
}

impl Outputs {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            trace: String::from("step,iteration,raw,smoothed,filter_length\n"),
            summary: String::from("step,active_dims,iterations_used,full_normalized_stress,duration_ms\n"),
        })
    }

    fn write(&mut self, name: String, contents: &str) -> CliResult<()> {
        let path = self.dir.join(&name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name);
        Ok(())
    }

    fn trace(&mut self, step: usize, trace: &StressTrace64) {
        for (i, raw) in trace.raw.iter().enumerate() {
            let smoothed = trace.smoothed[i].map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                self.trace,
                "{step},{},{raw},{smoothed},{}",
                i + 1,
                trace.filter_lengths[i]
            );
        }
    }

    fn step(&mut self, r: &StepRecord) {
        let stress = r.full_stress.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            self.summary,
            "{},{},{},{stress},{}",
            r.step,
            r.active_dims,
            r.iterations,
            r.duration.as_secs_f64() * 1e3
        );
    }

    fn shepard(&mut self, settings: &RunSettings, step: usize, window: &PackedWindow<f64>, positions: &[[f64; 2]]) -> CliResult<()> {
        let Some(pairs) = settings.shepard_pairs else {
            return Ok(());
        };
        let e = pglimmer::Embedding::from_positions(positions.to_vec());
        let seed = rng::derive(settings.seed, &[SHEPARD_TAG, step as u64]);
        let sample = shepard_sample(window, &e, pairs, seed)?;
        let mut s = String::from("high,low\n");
        for (h, l) in &sample.pairs {
            let _ = writeln!(s, "{h},{l}");
        }
        self.write(format!("shepard_step_{step}.csv"), &s)
    }
}

fn run_batch(settings: &RunSettings, mut matrix: DataMatrix64, out: &mut Outputs) -> CliResult<Vec<StepRecord>> {
    for id in matrix.chunk_ids() {
        matrix.activate(id)?;
    }
    let started = Instant::now();
    let result = run_glimmer(&matrix, &settings.glimmer)?;
    let duration = started.elapsed();
    let window = matrix.pack_active();
    let full_stress = match settings.full_stress.expect("resolved") {
        FullStressArg::Never => None,
        _ => Some(full_normalized_stress(&window, &result.embedding)?),
    };
    let record = StepRecord {
        step: 0,
        active_dims: matrix.active_dims(),
        iterations: result.total_iterations(),
        full_stress,
        duration,
    };
    out.write("embedding_step_0.csv".into(), &embedding_csv(result.embedding.positions()))?;
    out.trace(0, &result.trace());
    out.step(&record);
    out.shepard(settings, 0, &window, result.embedding.positions())?;
    Ok(vec![record])
}

fn run_engine(settings: &RunSettings, matrix: DataMatrix64, out: &mut Outputs) -> CliResult<Vec<StepRecord>> {
    let config = settings.progressive_config().expect("progressive settings");
    let mut engine = ProgressiveEngine::new(matrix, config)?;
    let mut records = Vec::new();
    let pending: RefCell<Vec<ProgressSnapshot64>> = RefCell::new(Vec::new());
    let mut keep = |s: &ProgressSnapshot64| {
        if s.kind == SnapshotKind::Intermediate {
            pending.borrow_mut().push(s.clone());
        }
    };

    let mut next = Some(engine.initialize(&mut keep)?);
    while let Some(snap) = next {
        // Written after the step so file output stays out of the step timing.
        for inter in pending.take() {
            out.write(
                format!("embedding_step_{}_iter_{}.csv", inter.step, inter.iterations),
                &embedding_csv(&inter.positions),
            )?;
        }
        let record = StepRecord {
            step: snap.step,
            active_dims: snap.active_dims,
            iterations: snap.iterations,
            full_stress: snap.full_stress,
            duration: snap.duration,
        };
        out.write(format!("embedding_step_{}.csv", snap.step), &embedding_csv(&snap.positions))?;
        if let Some(t) = &snap.trace {
            out.trace(snap.step, t);
        }
        out.step(&record);
        out.shepard(settings, snap.step, engine.window(), &snap.positions)?;
        records.push(record);
        next = engine.step_next(&mut keep)?;
    }
    Ok(records)
}

/// Execute a resolved run and write every output file into `out_dir`.
pub fn execute(mut settings: RunSettings, out_dir: &Path, expected_digest: Option<&str>) -> CliResult<RunReport> {
    let (matrix, input) = load(&settings)?;
    if let Some(want) = expected_digest {
        if want != input.sha256 {
            return Err(CliError::Runtime(anyhow!(
                "input {} does not match the manifest digest",
                settings.input.display()
            )));
        }
    }
    settings.resolve(input.points, input.chunks)?;
    let mut out = Outputs::new(out_dir)?;
    let steps = match settings.mode {
        ModeArg::Batch => run_batch(&settings, matrix, &mut out)?,
        ModeArg::Progressive | ModeArg::Sliding => run_engine(&settings, matrix, &mut out)?,
    };
    let (trace, summary) = (std::mem::take(&mut out.trace), std::mem::take(&mut out.summary));
    out.write("stress_trace.csv".into(), &trace)?;
    out.write("summary.csv".into(), &summary)?;

    let mut files = out.files.clone();
    files.push("manifest.json".into());
    files.sort();
    let report = RunReport {
        settings,
        input,
        steps,
        files,
    };
    let manifest = serde_json::to_string_pretty(&Value::Object(manifest(&report)))
        .map_err(|e| CliError::Runtime(e.into()))?;
    fs::write(out_dir.join("manifest.json"), manifest + "\n")?;
    Ok(report)
}

/// The complete flat manifest of a finished run.
pub fn manifest(report: &RunReport) -> Map<String, Value> {
    let mut m = report.settings.to_manifest();
    m.insert("command".into(), Value::from("run"));
    m.insert("tool".into(), Value::from("pglimmer"));
    m.insert("tool_version".into(), Value::from(env!("CARGO_PKG_VERSION")));
    m.insert("scalar".into(), Value::from("f64"));
    m.insert("input_kind".into(), Value::from(report.input.kind));
    m.insert("input_sha256".into(), Value::from(report.input.sha256.clone()));
    m.insert("input_points".into(), Value::from(report.input.points));
    m.insert("input_dims".into(), Value::from(report.input.dims));
    m.insert("input_chunks".into(), Value::from(report.input.chunks));
    m.insert("steps".into(), Value::from(report.steps.len()));
    m.insert(
        "step_duration_ms".into(),
        Value::from(
            report
                .steps
                .iter()
                .map(|s| s.duration.as_secs_f64() * 1e3)
                .collect::<Vec<_>>(),
        ),
    );
    m.insert("output_files".into(), Value::from(report.files.clone()));
    m
}

pub fn cmd_run(a: &RunArgs) -> CliResult<RunReport> {
    match &a.from_manifest {
        Some(path) => {
            let given = [
                a.input.is_some(),
                a.mode.is_some(),
                a.chunk_width.is_some(),
                a.max_iters.is_some(),
                a.order.is_some(),
                a.order_seed.is_some(),
                a.init.is_some(),
                a.evict.is_some(),
                a.window_chunks.is_some(),
                a.emit_every.is_some(),
                a.full_stress.is_some(),
                a.stress_reference.is_some(),
                a.shepard_pairs.is_some(),
                a.seed.is_some(),
                a.k.is_some(),
                a.step_size.is_some(),
                a.damping.is_some(),
                a.tolerance.is_some(),
            ];
            if given.iter().any(|&g| g) {
                return Err(usage("--from-manifest takes no other run flags besides --out"));
            }
            let m = read_manifest(path)?;
            let settings = RunSettings::from_manifest(&m, path)?;
            let digest = m.get("input_sha256").and_then(Value::as_str).map(str::to_string);
            execute(settings, &a.out, digest.as_deref())
        }
        None => execute(RunSettings::from_args(a)?, &a.out, None),
    }
}
