//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pglimmer::convergence::{sinc_kernel, ConvergenceMonitor};
use pglimmer::datamatrix::generate;
use pglimmer::glimmer::run_glimmer;
use pglimmer::layout::{init_neighbors, layout_step, spring_increment, update_neighbors};
use pglimmer::metric::{full_normalized_stress, sparse_stress_term};
use pglimmer::progressive::run_progressive;
use pglimmer::*;
use pglimmer_cli::bench::{order_run, overlap_run, runtime_run};
use pglimmer_cli::median;
use rand::Rng;

type Outcome = Result<String, String>;

// scipy.signal.firwin(10, 0.1, window="hamming"); scipy normalizes the
// cutoff to Nyquist, so 0.1 there is 0.05 cycles/sample.
const FIRWIN_10: [f64; 10] = [
    0.011982297073578192,
    0.032593697188218536,
    0.08880972436230841,
    0.1590336085502214,
    0.20758067282567344,
    0.20758067282567344,
    0.15903360855022144,
    0.08880972436230844,
    0.032593697188218536,
    0.011982297073578192,
];

// scipy.signal.firwin(50, 0.1, window="hamming")
const FIRWIN_50: [f64; 50] = [
    0.0010238500047165585,
    0.0010083892952389125,
    0.000948246733499247,
    0.000761638811650422,
    0.0003372016711648948,
    -0.000436388976388832,
    -0.0016325800317719874,
    -0.0032478357340676783,
    -0.00516932145753781,
    -0.007157117541522565,
    -0.008846923808790796,
    -0.00977618720746698,
    -0.009432759136369881,
    -0.007321180622120364,
    -0.003038182712509845,
    0.003653393499727342,
    0.0127638376678742,
    0.02403951519917748,
    0.03695727064637827,
    0.050753864163914496,
    0.0644890495326389,
    0.07713590209350576,
    0.08768775307963002,
    0.09526826816413135,
    0.09923029666529896,
    0.09923029666529896,
    0.09526826816413136,
    0.08768775307963002,
    0.07713590209350576,
    0.06448904953263891,
    0.0507538641639145,
    0.03695727064637827,
    0.024039515199177484,
    0.0127638376678742,
    0.0036533934997273433,
    -0.003038182712509845,
    -0.007321180622120367,
    -0.009432759136369883,
    -0.009776187207466985,
    -0.008846923808790801,
    -0.007157117541522573,
    -0.005169321457537813,
    -0.0032478357340676783,
    -0.0016325800317719883,
    -0.000436388976388832,
    0.0003372016711648953,
    0.000761638811650422,
    0.0009482467334992481,
    0.0010083892952389125,
    0.0010238500047165585,
];

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn all_active(mut m: DataMatrix64) -> DataMatrix64 {
    for id in m.chunk_ids() {
        m.activate(id).unwrap();
    }
    m
}

fn naive_stress(data: &[f64], dims: usize, pos: &[[f64; 2]]) -> f64 {
    let n = pos.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut hd = 0.0;
            for c in 0..dims {
                let r = data[i * dims + c] - data[j * dims + c];
                hd += r * r;
            }
            let hd: f64 = hd.sqrt();
            let ld = ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2)).sqrt();
            num += (hd - ld) * (hd - ld);
            den += hd * hd;
        }
    }
    (num / den).sqrt()
}

fn stress_oracle() -> Outcome {
    let started = Instant::now();
    let mut r = rng::stream(11, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = r.random_range(2..=200);
        let dims = r.random_range(1..=12);
        let width = r.random_range(1..=dims);
        let data: Vec<f64> = (0..n * dims).map(|_| r.random_range(-3.0..3.0)).collect();
        let pos: Vec<[f64; 2]> = (0..n).map(|_| [r.random(), r.random()]).collect();
        let m = all_active(DataMatrix::from_row_major(&data, n, dims, width, None).unwrap());
        let got = full_normalized_stress(&m, &Embedding::from_positions(pos.clone())).unwrap();
        let want = naive_stress(&data, dims, &pos);
        worst = worst.max((got - want).abs() / want);
    }
    let elapsed = started.elapsed();
    ensure(worst <= 1e-12, || format!("max relative error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("max relative error {worst:.1e}, {elapsed:.2?}"))
}

fn filter_correctness() -> Outcome {
    let mut worst_gain: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for len in 2..=64 {
        for cutoff in [0.01, 0.05, 0.1, 0.25, 0.45] {
            let k = sinc_kernel::<f64>(len, cutoff).unwrap();
            worst_gain = worst_gain.max((k.iter().sum::<f64>() - 1.0).abs());
            for i in 0..len {
                worst_sym = worst_sym.max((k[i] - k[len - 1 - i]).abs());
            }
        }
    }
    let mut worst_coef: f64 = 0.0;
    for (len, oracle) in [(10, &FIRWIN_10[..]), (50, &FIRWIN_50[..])] {
        let k = sinc_kernel::<f64>(len, 0.05).unwrap();
        for (a, b) in k.iter().zip(oracle) {
            worst_coef = worst_coef.max((a - b).abs());
        }
    }
    ensure(worst_gain <= 1e-12, || format!("DC gain error {worst_gain:e}"))?;
    ensure(worst_sym <= 1e-12, || format!("asymmetry {worst_sym:e}"))?;
    ensure(worst_coef <= 1e-9, || format!("coefficient error {worst_coef:e}"))?;
    Ok(format!(
        "gain {worst_gain:.1e}, symmetry {worst_sym:.1e}, firwin {worst_coef:.1e}"
    ))
}

fn filter_schedule() -> Outcome {
    let mut m = ConvergenceMonitor::new(ConvergenceConfig64::default());
    for k in 0..400 {
        if m.observe((-0.01 * k as f64).exp()) == convergence::Decision::Converged {
            return Err(format!("converged after {} samples", k + 1));
        }
    }
    let mut seen = m.trace().filter_lengths.clone();
    seen.dedup();
    ensure(seen == [10, 20, 30, 40, 50], || format!("lengths {seen:?}"))?;
    Ok(format!("lengths {seen:?}"))
}

fn batch_quality() -> Outcome {
    let started = Instant::now();
    let stresses: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let m = all_active(generate(&SyntheticSpec::plane(500, 10, 2, 0.0, s)).unwrap());
            let r = run_glimmer(&m, &GlimmerConfig64::default().with_seed(s)).unwrap();
            full_normalized_stress(&m, &r.embedding).unwrap()
        })
        .collect();
    let med = median(&stresses);
    let elapsed = started.elapsed();
    ensure(med < 0.05, || format!("median stress {med} over {stresses:?}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("median stress {med:.4}, {elapsed:.2?}"))
}

fn progressive_vs_batch() -> Outcome {
    let mut ratios = Vec::new();
    let mut decreases = Vec::new();
    for &s in &SEEDS {
        let m: DataMatrix64 = generate(&SyntheticSpec::uniform(1000, 50, s)).unwrap();
        let full = all_active(m.clone());
        let batch = run_glimmer(&full, &GlimmerConfig64::default().with_seed(s)).unwrap();
        let batch_stress = full_normalized_stress(&full, &batch.embedding).unwrap();
        let cfg = ProgressiveConfig64 {
            stress_reference: StressReference::AllDimensions,
            layout: LayoutConfig64 {
                seed: s,
                ..Default::default()
            },
            ..Default::default()
        };
        let run = run_progressive(m.rechunk(5).unwrap(), &cfg, &mut NoObserver).unwrap();
        let curve: Vec<f64> = run.snapshots.iter().map(|p| p.full_stress.unwrap()).collect();
        let last = *curve.last().unwrap();
        ratios.push(last / batch_stress);
        decreases.push((curve[3], last));
    }
    let med = median(&ratios);
    ensure(med <= 1.10, || format!("median final/batch {med:.4} ({ratios:?})"))?;
    for (s, (step3, last)) in SEEDS.iter().zip(&decreases) {
        ensure(last <= step3, || format!("seed {s}: final {last:.4} > step 3 {step3:.4}"))?;
    }
    let (s3, l) = decreases[0];
    Ok(format!("median final/batch {med:.4}; seed 0 step 3 {s3:.4} -> final {l:.4}"))
}

fn warm_start_identity() -> Outcome {
    let m: DataMatrix64 = generate(&SyntheticSpec::walk(80, 8, 0.1, 6)).unwrap();
    let cfg = ProgressiveConfig64 {
        max_iterations: IterationCap::Finite(1),
        convergence: ConvergenceConfig64 {
            rel_tolerance: f64::INFINITY,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut e = ProgressiveEngine::new(m.rechunk(2).unwrap(), cfg).unwrap();
    let mut prior = e.initialize(&mut NoObserver).unwrap();
    let mut steps = 0;
    while e.begin_step().unwrap() {
        ensure(e.embedding().positions() == &prior.positions[..], || {
            format!("positions changed before step {}", prior.step + 1)
        })?;
        ensure(e.embedding().forces().iter().all(|f| *f == [0.0, 0.0]), || "forces not reset".into())?;
        prior = e.finish_step(&mut NoObserver).unwrap();
        steps += 1;
    }
    Ok(format!("{steps} steps warm-started bit-identically"))
}

fn overlap_degradation() -> Outcome {
    let started = Instant::now();
    let mut medians = Vec::new();
    for pct in [10, 20, 50] {
        let ratios: Vec<f64> = SEEDS
            .iter()
            .map(|&s| overlap_run(1000, 50, pct, 5, s, IterationCap::Unlimited).unwrap().ratio)
            .collect();
        medians.push((pct, median(&ratios)));
    }
    let elapsed = started.elapsed();
    let at = |p: usize| medians.iter().find(|m| m.0 == p).unwrap().1;
    let shown: Vec<String> = medians.iter().map(|(p, r)| format!("{p}%: {r:.4}")).collect();
    let shown = shown.join(", ");
    ensure(at(10) <= 1.25, || format!("ratio(10%) too high; {shown}"))?;
    ensure(at(50) > at(10), || format!("no degradation with overlap; {shown}"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{shown}, {elapsed:.2?}"))
}

fn order_insensitivity() -> Outcome {
    let cap = IterationCap::Finite(100);
    let temporal: Vec<f64> = SEEDS
        .iter()
        .map(|&s| order_run(2000, 120, cap, s, false, false).unwrap().final_stress)
        .collect();
    let random: Vec<f64> = SEEDS
        .iter()
        .map(|&s| order_run(2000, 120, cap, s, true, false).unwrap().final_stress)
        .collect();
    let (t, r) = (median(&temporal), median(&random));
    let rel = (t - r).abs() / t.min(r);
    ensure(rel <= 0.25, || format!("temporal {t:.4} vs random {r:.4}, {:.1}% apart", rel * 100.0))?;
    Ok(format!("temporal {t:.4}, random {r:.4}, {:.1}% apart", rel * 100.0))
}

fn runtime_trend() -> Outcome {
    let run = runtime_run(5000, 100, 10, 0).unwrap();
    let steps: Vec<f64> = run.steps.iter().map(|s| s.0.as_secs_f64()).collect();
    let batch = run.batch.as_secs_f64();
    let slowest = steps.iter().cloned().fold(0.0, f64::max);
    let med = median(&steps);
    ensure(slowest < batch, || format!("slowest step {slowest:.3}s >= batch {batch:.3}s"))?;
    ensure(med < 0.5 * batch, || format!("median step {med:.3}s >= half of batch {batch:.3}s"))?;
    Ok(format!(
        "batch {:.0} ms, slowest step {:.0} ms, median step {:.0} ms",
        batch * 1e3,
        slowest * 1e3,
        med * 1e3
    ))
}

/// Output file contents with the wall-clock fields removed.
fn masked(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let bytes = fs::read(dir.join(&name)).unwrap();
            let bytes = match name.as_str() {
                "summary.csv" => String::from_utf8(bytes)
                    .unwrap()
                    .lines()
                    .map(|l| l.rsplit_once(',').unwrap().0.to_owned() + "\n")
                    .collect::<String>()
                    .into_bytes(),
                "manifest.json" => {
                    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                    v.as_object_mut().unwrap().remove("step_duration_ms");
                    serde_json::to_vec(&v).unwrap()
                }
                _ => bytes,
            };
            (name, bytes)
        })
        .collect()
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_pglimmer");
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let call = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        ensure(out.status.success(), || {
            format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
        })
    };
    call(&["generate", "--kind", "walk", "--points", "300", "--dims", "24", "--seed", "3", "--out", &p("walk.csv")])?;
    let runs: [&[&str]; 3] = [
        &["--chunk-width", "3", "--order", "random", "--emit-every", "20", "--shepard-pairs", "200"],
        &["--chunk-width", "4", "--mode", "sliding", "--init", "glimmer", "--max-iters", "60"],
        &["--mode", "batch", "--chunk-width", "6", "--shepard-pairs", "100"],
    ];
    let input = p("walk.csv");
    let mut files = 0;
    for (i, extra) in runs.iter().enumerate() {
        let first = p(&format!("r{i}"));
        let mut args = vec!["run", "--input", &input, "--out", &first, "--seed", "7"];
        args.extend_from_slice(extra);
        call(&args)?;
        let manifest = format!("{first}/manifest.json");
        for copy in ["a", "b"] {
            let again = p(&format!("r{i}{copy}"));
            call(&["run", "--from-manifest", &manifest, "--out", &again])?;
            let (x, y) = (masked(Path::new(&first)), masked(Path::new(&again)));
            ensure(x.len() == y.len(), || format!("run {i}: file sets differ"))?;
            for ((na, a), (nb, b)) in x.iter().zip(&y) {
                ensure(na == nb && a == b, || format!("run {i}: {na} differs"))?;
            }
            files += x.len();
        }
    }
    Ok(format!("{files} files identical across replays (durations masked)"))
}

fn gradient_sign() -> Outcome {
    let mut r = rng::stream(21, &[]);
    let cfg = LayoutConfig64::default();
    let h = 1e-6;
    let mut compared = 0;
    for case in 0..50 {
        let n = 9;
        let high: Vec<f64> = (0..n - 1).map(|_| r.random_range(0.1..2.0)).collect();
        let pos: Vec<[f64; 2]> = (0..n).map(|_| [r.random(), r.random()]).collect();
        let e = Embedding::from_positions(pos.clone());
        let (inc, _) = spring_increment(&e, 0, (1..n).map(|j| (j, high[j - 1])), &cfg);
        let objective = |p: [f64; 2]| {
            let low: Vec<f64> = (1..n)
                .map(|j| ((p[0] - pos[j][0]).powi(2) + (p[1] - pos[j][1]).powi(2)).sqrt())
                .collect();
            sparse_stress_term(&high, &low)
        };
        for axis in 0..2 {
            let (mut plus, mut minus) = (pos[0], pos[0]);
            plus[axis] += h;
            minus[axis] -= h;
            let grad = (objective(plus) - objective(minus)) / (2.0 * h);
            if grad.abs() > 1e-7 {
                ensure(inc[axis].signum() == (-grad).signum(), || {
                    format!("case {case} axis {axis}: force {} vs gradient {grad}", inc[axis])
                })?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} components agree over 50 configurations"))
}

fn no_nan() -> Outcome {
    let base = SyntheticSpec::uniform(60, 5, 8).sample().unwrap();
    let mut data = base.clone();
    data.extend_from_slice(&base);
    data.extend_from_slice(&base[..5 * 20]);
    let n = 140;
    let window = PackedWindow::new(data.clone(), n, 5);
    let cfg = LayoutConfig64::default();
    let mut e = Embedding::from_positions(vec![[0.25, 0.75]; n]);
    let mut nb = init_neighbors::<f64>(n, 8, 4).unwrap();
    for it in 0..1000 {
        layout_step(&window, &mut e, &mut nb, &cfg);
        update_neighbors(&window, &mut nb, 9, it);
    }
    ensure(e.all_finite(), || "non-finite coordinates after 1000 iterations".into())?;

    let m = all_active(DataMatrix::from_row_major(&data, n, 5, 5, None).unwrap());
    let g = run_glimmer(&m, &GlimmerConfig64::default()).unwrap();
    ensure(g.embedding.all_finite(), || "non-finite batch layout".into())?;
    Ok(format!("{} repaired forces, all coordinates finite", e.repaired_forces()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("stress oracle equivalence", stress_oracle),
        ("filter correctness", filter_correctness),
        ("adaptive filter schedule", filter_schedule),
        ("batch quality", batch_quality),
        ("progressive vs batch convergence", progressive_vs_batch),
        ("warm-start identity", warm_start_identity),
        ("overlap degradation", overlap_degradation),
        ("order insensitivity", order_insensitivity),
        ("runtime trend", runtime_trend),
        ("determinism", determinism),
        ("gradient sign check", gradient_sign),
        ("no-NaN robustness", no_nan),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
