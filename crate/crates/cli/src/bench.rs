//! Paired-experiment suites: progressive step time against batch time,
//! sliding-window overlap against fresh batch runs, and temporal against
//! random chunk order.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use anyhow::Context;
use pglimmer::datamatrix::generate;
use pglimmer::glimmer::run_glimmer;
use pglimmer::metric::full_normalized_stress;
use pglimmer::progressive::{run_progressive, run_sliding};
use pglimmer::{
    rng, ChunkOrder, DataMatrix64, FullStressPolicy, GlimmerConfig64, InitMode, IterationCap,
    LayoutConfig64, NoObserver, ProgressionMode, ProgressiveConfig64, StressReference, SyntheticSpec,
};

use crate::args::{BenchArgs, Suite};
use crate::settings::parse_cap;
use crate::{quantile, usage, CliResult};

const ORDER_TAG: u64 = 0x4f52_4445;

/// Walk step scale of the order comparison data.
pub const WALK_SCALE: f64 = 0.1;

fn progressive_config(seed: u64) -> ProgressiveConfig64 {
    ProgressiveConfig64 {
        layout: LayoutConfig64 {
            seed,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn all_active(mut m: DataMatrix64) -> CliResult<DataMatrix64> {
    for id in m.chunk_ids() {
        m.activate(id)?;
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct RuntimeRun {
    pub seed: u64,
    pub batch: Duration,
    pub batch_iterations: usize,
    /// `(duration, iterations)` of every progressive step, step 0 first.
    pub steps: Vec<(Duration, usize)>,
}

/// Batch Glimmer on all dimensions against progressive Glimmer over chunks
/// of `chunk_width`, same uniform data and seed.
pub fn runtime_run(points: usize, dims: usize, chunk_width: usize, seed: u64) -> CliResult<RuntimeRun> {
    let m: DataMatrix64 = generate(&SyntheticSpec::uniform(points, dims, seed))?;
    let full = all_active(m.clone())?;
    let started = Instant::now();
    let batch = run_glimmer(&full, &GlimmerConfig64::default().with_seed(seed))?;
    let batch_time = started.elapsed();

    let cfg = ProgressiveConfig64 {
        full_stress: FullStressPolicy::Never,
        ..progressive_config(seed)
    };
    let run = run_progressive(m.rechunk(chunk_width)?, &cfg, &mut NoObserver)?;
    Ok(RuntimeRun {
        seed,
        batch: batch_time,
        batch_iterations: batch.total_iterations(),
        steps: run.snapshots.iter().map(|s| (s.duration, s.iterations)).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct OverlapRun {
    pub change_pct: usize,
    pub seed: u64,
    pub progressive_stress: f64,
    pub batch_stress: f64,
    pub ratio: f64,
}

/// Chunk width for replacing `change_pct` percent of a `window`-dimension window.
pub fn overlap_width(window: usize, change_pct: usize) -> CliResult<usize> {
    let w = window * change_pct / 100;
    if w == 0 || !(window * change_pct).is_multiple_of(100) || !window.is_multiple_of(w) {
        return Err(usage(format!(
            "{change_pct}% of a {window}-dimension window is not a whole number of equal chunks"
        )));
    }
    Ok(w)
}

/// Slide a `window`-dimension window over uniform data, replacing
/// `change_pct` percent of it per step for `steps` steps, and compare the
/// final stress with a fresh batch run on the final window.
pub fn overlap_run(
    points: usize,
    window: usize,
    change_pct: usize,
    steps: usize,
    seed: u64,
    cap: IterationCap,
) -> CliResult<OverlapRun> {
    let w = overlap_width(window, change_pct)?;
    let window_chunks = window / w;
    let m: DataMatrix64 = generate(&SyntheticSpec::uniform(points, window + steps * w, seed))?;
    let m = m.rechunk(w)?;
    let cfg = ProgressiveConfig64 {
        max_iterations: cap,
        init_mode: InitMode::GlimmerOnFirstChunk,
        mode: ProgressionMode::Sliding {
            window_chunks,
            evict: 1,
        },
        full_stress: FullStressPolicy::Final,
        ..progressive_config(seed)
    };
    let run = run_sliding(m.clone(), &cfg, &mut NoObserver)?;
    let progressive_stress = run.final_snapshot().full_stress.expect("final stress requested");

    let mut last = m;
    last.deactivate_all();
    for &id in &run.order[run.order.len() - window_chunks..] {
        last.activate(id)?;
    }
    let batch = run_glimmer(&last, &GlimmerConfig64::default().with_seed(seed))?;
    let batch_stress = full_normalized_stress(&last, &batch.embedding)?;
    Ok(OverlapRun {
        change_pct,
        seed,
        progressive_stress,
        batch_stress,
        ratio: progressive_stress / batch_stress,
    })
}

#[derive(Debug, Clone)]
pub struct OrderRun {
    pub seed: u64,
    pub random: bool,
    pub final_stress: f64,
    /// Stress against all dimensions after every step, when requested.
    pub curve: Option<Vec<f64>>,
    pub iterations: usize,
}

/// Progressive run over width-1 chunks of a smooth temporal walk, in
/// temporal or seeded random order. Stress is measured against all
/// dimensions.
pub fn order_run(points: usize, dims: usize, cap: IterationCap, seed: u64, random: bool, curve: bool) -> CliResult<OrderRun> {
    let m: DataMatrix64 = generate(&SyntheticSpec::walk(points, dims, WALK_SCALE, seed))?;
    let cfg = ProgressiveConfig64 {
        max_iterations: cap,
        order: if random {
            ChunkOrder::Random(rng::derive(seed, &[ORDER_TAG]))
        } else {
            ChunkOrder::Given
        },
        full_stress: if curve {
            FullStressPolicy::PerStep
        } else {
            FullStressPolicy::Final
        },
        stress_reference: StressReference::AllDimensions,
        ..progressive_config(seed)
    };
    let run = run_progressive(m, &cfg, &mut NoObserver)?;
    Ok(OrderRun {
        seed,
        random,
        final_stress: run.final_snapshot().full_stress.expect("final stress requested"),
        curve: curve.then(|| run.snapshots.iter().map(|s| s.full_stress.expect("per step")).collect()),
        iterations: run.snapshots.iter().map(|s| s.iterations).sum(),
    })
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn quartile_rows(csv: &mut String, prefix: impl Fn(&str) -> String, columns: &[&[f64]]) {
    for (label, q) in [("q1", 0.25), ("median", 0.5), ("q3", 0.75)] {
        let values: Vec<String> = columns.iter().map(|c| quantile(c, q).to_string()).collect();
        let _ = writeln!(csv, "{}{}", prefix(label), values.join(","));
    }
}

pub fn runtime_csv(runs: &[RuntimeRun]) -> String {
    let mut s = String::from("record,seed,mode,step,duration_ms,iterations\n");
    for r in runs {
        let _ = writeln!(s, "run,{},batch,,{},{}", r.seed, ms(r.batch), r.batch_iterations);
        for (i, (d, it)) in r.steps.iter().enumerate() {
            let _ = writeln!(s, "run,{},progressive,{i},{},{it}", r.seed, ms(*d));
        }
    }
    let batch_ms: Vec<f64> = runs.iter().map(|r| ms(r.batch)).collect();
    let batch_it: Vec<f64> = runs.iter().map(|r| r.batch_iterations as f64).collect();
    quartile_rows(&mut s, |l| format!("{l},,batch,,"), &[&batch_ms, &batch_it]);
    let step_ms: Vec<f64> = runs.iter().flat_map(|r| r.steps.iter().map(|p| ms(p.0))).collect();
    let step_it: Vec<f64> = runs.iter().flat_map(|r| r.steps.iter().map(|p| p.1 as f64)).collect();
    quartile_rows(&mut s, |l| format!("{l},,progressive,,"), &[&step_ms, &step_it]);
    s
}

pub fn overlap_csv(runs: &[OverlapRun]) -> String {
    let mut s = String::from("record,change_pct,seed,progressive_stress,batch_stress,ratio\n");
    for r in runs {
        let _ = writeln!(
            s,
            "run,{},{},{},{},{}",
            r.change_pct, r.seed, r.progressive_stress, r.batch_stress, r.ratio
        );
    }
    let mut changes: Vec<usize> = runs.iter().map(|r| r.change_pct).collect();
    changes.dedup();
    for c in changes {
        let sel: Vec<&OverlapRun> = runs.iter().filter(|r| r.change_pct == c).collect();
        let p: Vec<f64> = sel.iter().map(|r| r.progressive_stress).collect();
        let b: Vec<f64> = sel.iter().map(|r| r.batch_stress).collect();
        let q: Vec<f64> = sel.iter().map(|r| r.ratio).collect();
        quartile_rows(&mut s, |l| format!("{l},{c},,"), &[&p, &b, &q]);
    }
    s
}

pub fn order_csv(runs: &[OrderRun]) -> String {
    let mut s = String::from("record,seed,order,final_stress,iterations\n");
    let name = |random: bool| if random { "random" } else { "temporal" };
    for r in runs {
        let _ = writeln!(s, "run,{},{},{},{}", r.seed, name(r.random), r.final_stress, r.iterations);
    }
    for random in [false, true] {
        let sel: Vec<&OrderRun> = runs.iter().filter(|r| r.random == random).collect();
        if sel.is_empty() {
            continue;
        }
        let f: Vec<f64> = sel.iter().map(|r| r.final_stress).collect();
        let it: Vec<f64> = sel.iter().map(|r| r.iterations as f64).collect();
        quartile_rows(&mut s, |l| format!("{l},,{},", name(random)), &[&f, &it]);
    }
    s
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let seeds = a.seeds.unwrap_or(match a.suite {
        Suite::Runtime => 1,
        _ => 5,
    });
    if seeds == 0 {
        return Err(usage("--seeds must be >= 1"));
    }
    let reject = |flag: &str, set: bool| if set { Err(usage(format!("{flag} does not apply to this suite"))) } else { Ok(()) };
    let csv = match a.suite {
        Suite::Runtime => {
            reject("--window", a.window.is_some())?;
            reject("--changes", a.changes.is_some())?;
            reject("--steps", a.steps.is_some())?;
            reject("--max-iters", a.max_iters.is_some())?;
            let points = a.points.unwrap_or(5000);
            let dims = a.dims.unwrap_or(100);
            let width = a.chunk_width.unwrap_or(10);
            if points < 3 || dims < 2 || width == 0 {
                return Err(usage("runtime needs --points >= 3, --dims >= 2, --chunk-width >= 1"));
            }
            let runs = (0..seeds)
                .map(|s| runtime_run(points, dims, width, s))
                .collect::<CliResult<Vec<_>>>()?;
            runtime_csv(&runs)
        }
        Suite::OverlapSweep => {
            reject("--dims", a.dims.is_some())?;
            reject("--chunk-width", a.chunk_width.is_some())?;
            let points = a.points.unwrap_or(1000);
            let window = a.window.unwrap_or(50);
            let steps = a.steps.unwrap_or(5);
            let cap = a.max_iters.as_deref().map(parse_cap).transpose()?.unwrap_or(IterationCap::Unlimited);
            let changes = a.changes.clone().unwrap_or_else(|| vec![10, 20, 50]);
            for &c in &changes {
                overlap_width(window, c)?;
            }
            let mut runs = Vec::new();
            for &c in &changes {
                for s in 0..seeds {
                    runs.push(overlap_run(points, window, c, steps, s, cap)?);
                }
            }
            overlap_csv(&runs)
        }
        Suite::OrderCompare => {
            reject("--window", a.window.is_some())?;
            reject("--changes", a.changes.is_some())?;
            reject("--steps", a.steps.is_some())?;
            reject("--chunk-width", a.chunk_width.is_some())?;
            let points = a.points.unwrap_or(2000);
            let dims = a.dims.unwrap_or(120);
            let cap = a.max_iters.as_deref().map(parse_cap).transpose()?.unwrap_or(IterationCap::Finite(100));
            if dims < 2 {
                return Err(usage("order-compare needs --dims >= 2"));
            }
            let mut runs = Vec::new();
            for s in 0..seeds {
                runs.push(order_run(points, dims, cap, s, false, false)?);
                runs.push(order_run(points, dims, cap, s, true, false)?);
            }
            order_csv(&runs)
        }
    };
    match &a.out {
        Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}
