//! Fully resolved run configuration and its flat JSON form in `manifest.json`.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pglimmer::{
    ChunkOrder, ConvergenceConfig64, FullStressPolicy, GlimmerConfig64, InitMode, IterationCap,
    LayoutConfig64, ProgressionMode, ProgressiveConfig64, StressReference,
};
use serde_json::{Map, Value};

use crate::args::{FullStressArg, InitArg, ModeArg, OrderArg, ReferenceArg, RunArgs};
use crate::{usage, CliError, CliResult};

/// Above this many points full stress is only computed for the final step
/// unless asked otherwise.
pub const PER_STEP_STRESS_LIMIT: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub input: PathBuf,
    pub mode: ModeArg,
    /// Columns per chunk for CSV input; `None` for a chunk directory.
    pub chunk_width: Option<usize>,
    pub seed: u64,
    /// `None` resolves from the point count.
    pub full_stress: Option<FullStressArg>,
    pub shepard_pairs: Option<usize>,
    pub layout: LayoutConfig64,
    pub glimmer: GlimmerConfig64,
    /// Progressive and sliding modes only.
    pub max_iters: Option<IterationCap>,
    pub order: Option<OrderArg>,
    pub order_seed: Option<u64>,
    pub init: Option<InitArg>,
    pub evict: Option<usize>,
    /// `None` resolves to half the chunk count (rounded up).
    pub window_chunks: Option<usize>,
    pub emit_every: Option<usize>,
    pub stress_reference: Option<ReferenceArg>,
    pub convergence: Option<ConvergenceConfig64>,
}

pub fn parse_cap(s: &str) -> CliResult<IterationCap> {
    if s.eq_ignore_ascii_case("unlimited") {
        return Ok(IterationCap::Unlimited);
    }
    match s.parse::<usize>() {
        Ok(0) => Err(usage("--max-iters must be >= 1")),
        Ok(z) => Ok(IterationCap::Finite(z)),
        Err(_) => Err(usage(format!("--max-iters expects a number or `unlimited`, got `{s}`"))),
    }
}

fn cap_name(c: IterationCap) -> Value {
    match c {
        IterationCap::Finite(z) => Value::from(z),
        IterationCap::Unlimited => Value::from("unlimited"),
    }
}

fn name<E: ValueEnum>(e: &E) -> String {
    e.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn parse_enum<E: ValueEnum>(key: &str, s: &str) -> CliResult<E> {
    E::from_str(s, false).map_err(|_| usage(format!("manifest: bad value `{s}` for {key}")))
}

impl RunSettings {
    pub fn from_args(a: &RunArgs) -> CliResult<Self> {
        let input = a.input.clone().ok_or_else(|| usage("--input is required"))?;
        let mode = a.mode.unwrap_or(ModeArg::Progressive);
        let progressive = mode != ModeArg::Batch;
        let sliding = mode == ModeArg::Sliding;

        let batch_only_conflicts = [
            ("--max-iters", a.max_iters.is_some()),
            ("--order", a.order.is_some()),
            ("--order-seed", a.order_seed.is_some()),
            ("--init", a.init.is_some()),
            ("--emit-every", a.emit_every.is_some()),
            ("--stress-reference", a.stress_reference.is_some()),
        ];
        if !progressive {
            if let Some((flag, _)) = batch_only_conflicts.iter().find(|(_, set)| *set) {
                return Err(usage(format!("{flag} needs --mode progressive or sliding")));
            }
        }
        if !sliding {
            if a.evict.is_some() {
                return Err(usage("--evict needs --mode sliding"));
            }
            if a.window_chunks.is_some() {
                return Err(usage("--window-chunks needs --mode sliding"));
            }
        }
        if a.order_seed.is_some() && a.order != Some(OrderArg::Random) {
            return Err(usage("--order-seed needs --order random"));
        }
        if a.chunk_width == Some(0) {
            return Err(usage("--chunk-width must be >= 1"));
        }
        if a.emit_every == Some(0) {
            return Err(usage("--emit-every must be >= 1"));
        }
        if a.shepard_pairs == Some(0) {
            return Err(usage("--shepard-pairs must be >= 1"));
        }
        if a.evict == Some(0) || a.window_chunks == Some(0) {
            return Err(usage("--evict and --window-chunks must be >= 1"));
        }

        let seed = a.seed.unwrap_or(0);
        let mut layout = LayoutConfig64 {
            seed,
            ..Default::default()
        };
        if let Some(k) = a.k {
            layout.k = k;
        }
        if let Some(s) = a.step_size {
            layout.step_size = s;
        }
        if let Some(d) = a.damping {
            layout.damping = d;
        }
        layout.validate().map_err(|e| usage(e.to_string()))?;
        let mut glimmer = GlimmerConfig64 {
            layout,
            ..Default::default()
        };
        let mut convergence = ConvergenceConfig64::default();
        if let Some(t) = a.tolerance {
            glimmer.convergence.rel_tolerance = t;
            convergence.rel_tolerance = t;
        }
        glimmer.validate().map_err(|e| usage(e.to_string()))?;
        convergence.validate().map_err(|e| usage(e.to_string()))?;

        let order = progressive.then(|| a.order.unwrap_or(OrderArg::Temporal));
        Ok(Self {
            input,
            mode,
            chunk_width: a.chunk_width,
            seed,
            full_stress: a.full_stress,
            shepard_pairs: a.shepard_pairs,
            layout,
            glimmer,
            max_iters: if progressive {
                Some(a.max_iters.as_deref().map(parse_cap).transpose()?.unwrap_or(IterationCap::Unlimited))
            } else {
                None
            },
            order,
            order_seed: (order == Some(OrderArg::Random)).then(|| a.order_seed.unwrap_or(seed)),
            init: progressive.then(|| a.init.unwrap_or(InitArg::First2)),
            evict: sliding.then(|| a.evict.unwrap_or(1)),
            window_chunks: a.window_chunks,
            emit_every: a.emit_every,
            stress_reference: progressive.then(|| a.stress_reference.unwrap_or(ReferenceArg::Window)),
            convergence: progressive.then_some(convergence),
        })
    }

    /// Fill the data-dependent defaults.
    pub fn resolve(&mut self, points: usize, chunks: usize) -> CliResult<()> {
        if self.full_stress.is_none() {
            self.full_stress = Some(if points <= PER_STEP_STRESS_LIMIT {
                FullStressArg::PerChunk
            } else {
                FullStressArg::Final
            });
        }
        if self.mode == ModeArg::Sliding {
            let window = *self.window_chunks.get_or_insert(chunks.div_ceil(2));
            let evict = self.evict.unwrap_or(1);
            if window > chunks {
                return Err(usage(format!("window of {window} chunks but the input has {chunks}")));
            }
            if evict > window {
                return Err(usage(format!("cannot evict {evict} of {window} window chunks")));
            }
        }
        Ok(())
    }

    pub fn progressive_config(&self) -> Option<ProgressiveConfig64> {
        let max_iterations = self.max_iters?;
        let mode = match self.mode {
            ModeArg::Batch => return None,
            ModeArg::Progressive => ProgressionMode::Append,
            ModeArg::Sliding => ProgressionMode::Sliding {
                window_chunks: self.window_chunks.expect("resolved"),
                evict: self.evict.expect("set for sliding"),
            },
        };
        Some(ProgressiveConfig64 {
            max_iterations,
            emit_every: self.emit_every,
            init_mode: match self.init? {
                InitArg::First2 => InitMode::FirstTwoDims,
                InitArg::Glimmer => InitMode::GlimmerOnFirstChunk,
            },
            order: match self.order? {
                OrderArg::Temporal => ChunkOrder::Given,
                OrderArg::Random => ChunkOrder::Random(self.order_seed.expect("set for random order")),
            },
            mode,
            reset_forces: true,
            full_stress: match self.full_stress.expect("resolved") {
                FullStressArg::PerChunk => FullStressPolicy::PerStep,
                FullStressArg::Final => FullStressPolicy::Final,
                FullStressArg::Never => FullStressPolicy::Never,
            },
            stress_reference: match self.stress_reference? {
                ReferenceArg::Window => StressReference::ActiveWindow,
                ReferenceArg::All => StressReference::AllDimensions,
            },
            layout: self.layout,
            convergence: self.convergence?,
            glimmer: self.glimmer,
        })
    }

    /// Configuration part of the manifest. Every default is explicit.
    pub fn to_manifest(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let opt = |v: Option<Value>| v.unwrap_or(Value::Null);
        m.insert("input_path".into(), Value::from(self.input.to_string_lossy().into_owned()));
        m.insert("mode".into(), Value::from(name(&self.mode)));
        m.insert("chunk_width".into(), opt(self.chunk_width.map(Value::from)));
        m.insert("seed".into(), Value::from(self.seed));
        m.insert("full_stress".into(), opt(self.full_stress.map(|v| Value::from(name(&v)))));
        m.insert("shepard_pairs".into(), opt(self.shepard_pairs.map(Value::from)));
        m.insert("layout_k".into(), Value::from(self.layout.k));
        m.insert("layout_step_size".into(), Value::from(self.layout.step_size));
        m.insert("layout_damping".into(), Value::from(self.layout.damping));
        m.insert("layout_min_distance_epsilon".into(), Value::from(self.layout.min_distance_epsilon));
        let g = &self.glimmer;
        m.insert("glimmer_decimation_factor".into(), Value::from(g.decimation_factor));
        m.insert("glimmer_min_level_size".into(), Value::from(g.min_level_size));
        m.insert("glimmer_max_iterations_per_level".into(), Value::from(g.max_iterations_per_level));
        m.insert("glimmer_filter_base_length".into(), Value::from(g.convergence.base_filter_length));
        m.insert("glimmer_filter_max_length".into(), Value::from(g.convergence.max_filter_length));
        m.insert("glimmer_filter_length_step".into(), Value::from(g.convergence.length_step));
        m.insert("glimmer_filter_cutoff".into(), Value::from(g.convergence.cutoff));
        m.insert("glimmer_filter_rel_tolerance".into(), Value::from(g.convergence.rel_tolerance));
        m.insert("max_iters".into(), opt(self.max_iters.map(cap_name)));
        m.insert("order".into(), opt(self.order.map(|v| Value::from(name(&v)))));
        m.insert("order_seed".into(), opt(self.order_seed.map(Value::from)));
        m.insert("init".into(), opt(self.init.map(|v| Value::from(name(&v)))));
        m.insert("evict".into(), opt(self.evict.map(Value::from)));
        m.insert("window_chunks".into(), opt(self.window_chunks.map(Value::from)));
        m.insert("emit_every".into(), opt(self.emit_every.map(Value::from)));
        m.insert(
            "stress_reference".into(),
            opt(self.stress_reference.map(|v| Value::from(name(&v)))),
        );
        m.insert("reset_forces".into(), Value::from(self.mode != ModeArg::Batch));
        if let Some(c) = &self.convergence {
            m.insert("filter_base_length".into(), Value::from(c.base_filter_length));
            m.insert("filter_max_length".into(), Value::from(c.max_filter_length));
            m.insert("filter_length_step".into(), Value::from(c.length_step));
            m.insert("filter_cutoff".into(), Value::from(c.cutoff));
            m.insert("filter_rel_tolerance".into(), Value::from(c.rel_tolerance));
        }
        m
    }

    pub fn from_manifest(m: &Map<String, Value>, manifest_path: &Path) -> CliResult<Self> {
        let get = |k: &str| m.get(k).filter(|v| !v.is_null());
        let need = |k: &str| get(k).ok_or_else(|| usage(format!("manifest: missing {k}")));
        let uint = |k: &str| -> CliResult<Option<u64>> {
            get(k)
                .map(|v| v.as_u64().ok_or_else(|| usage(format!("manifest: {k} is not an integer"))))
                .transpose()
        };
        let float = |k: &str| -> CliResult<f64> {
            need(k)?.as_f64().ok_or_else(|| usage(format!("manifest: {k} is not a number")))
        };
        let string = |k: &str| -> CliResult<Option<String>> {
            get(k)
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| usage(format!("manifest: {k} is not a string")))
                })
                .transpose()
        };
        let size = |k: &str| uint(k).map(|v| v.map(|x| x as usize));
        let need_size = |k: &str| size(k)?.ok_or_else(|| usage(format!("manifest: missing {k}")));

        let mut input = PathBuf::from(string("input_path")?.ok_or_else(|| usage("manifest: missing input_path"))?);
        if input.is_relative() && !input.exists() {
            if let Some(dir) = manifest_path.parent() {
                input = dir.join(input);
            }
        }
        let mode: ModeArg = parse_enum("mode", &string("mode")?.ok_or_else(|| usage("manifest: missing mode"))?)?;
        let seed = uint("seed")?.ok_or_else(|| usage("manifest: missing seed"))?;
        let layout = LayoutConfig64 {
            k: need_size("layout_k")?,
            step_size: float("layout_step_size")?,
            damping: float("layout_damping")?,
            min_distance_epsilon: float("layout_min_distance_epsilon")?,
            seed,
        };
        let glimmer = GlimmerConfig64 {
            layout,
            convergence: ConvergenceConfig64 {
                base_filter_length: need_size("glimmer_filter_base_length")?,
                max_filter_length: need_size("glimmer_filter_max_length")?,
                length_step: need_size("glimmer_filter_length_step")?,
                cutoff: float("glimmer_filter_cutoff")?,
                rel_tolerance: float("glimmer_filter_rel_tolerance")?,
            },
            decimation_factor: need_size("glimmer_decimation_factor")?,
            min_level_size: need_size("glimmer_min_level_size")?,
            max_iterations_per_level: need_size("glimmer_max_iterations_per_level")?,
        };
        glimmer.validate().map_err(|e| usage(format!("manifest: {e}")))?;
        let max_iters = match get("max_iters") {
            None => None,
            Some(Value::String(s)) => Some(parse_cap(s)?),
            Some(v) => Some(parse_cap(&v.to_string())?),
        };
        let convergence = if mode == ModeArg::Batch {
            None
        } else {
            let c = ConvergenceConfig64 {
                base_filter_length: need_size("filter_base_length")?,
                max_filter_length: need_size("filter_max_length")?,
                length_step: need_size("filter_length_step")?,
                cutoff: float("filter_cutoff")?,
                rel_tolerance: float("filter_rel_tolerance")?,
            };
            c.validate().map_err(|e| usage(format!("manifest: {e}")))?;
            Some(c)
        };
        let enum_opt = |k: &str| -> CliResult<Option<String>> { string(k) };
        Ok(Self {
            input,
            mode,
            chunk_width: size("chunk_width")?,
            seed,
            full_stress: enum_opt("full_stress")?.map(|s| parse_enum("full_stress", &s)).transpose()?,
            shepard_pairs: size("shepard_pairs")?,
            layout,
            glimmer,
            max_iters,
            order: enum_opt("order")?.map(|s| parse_enum("order", &s)).transpose()?,
            order_seed: uint("order_seed")?,
            init: enum_opt("init")?.map(|s| parse_enum("init", &s)).transpose()?,
            evict: size("evict")?,
            window_chunks: size("window_chunks")?,
            emit_every: size("emit_every")?,
            stress_reference: enum_opt("stress_reference")?
                .map(|s| parse_enum("stress_reference", &s))
                .transpose()?,
            convergence,
        })
    }
}

/// Read and parse a manifest file.
pub fn read_manifest(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("reading {}: {e}", path.display())))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(usage(format!("{} is not a JSON object", path.display()))),
        Err(e) => Err(usage(format!("{}: {e}", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::{Cli, Command};
    use clap::Parser;

    fn run_args(extra: &[&str]) -> RunArgs {
        let mut argv = vec!["pglimmer", "run", "--input", "d.csv", "--out", "o"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Run(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn conflicting_flags_are_usage_errors() {
        for extra in [
            &["--evict", "1"][..],
            &["--mode", "batch", "--order", "random"],
            &["--order-seed", "3"],
            &["--max-iters", "0"],
            &["--max-iters", "lots"],
            &["--mode", "progressive", "--window-chunks", "2"],
        ] {
            let e = RunSettings::from_args(&run_args(extra)).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{extra:?}");
        }
    }

    #[test]
    fn manifest_round_trip() {
        let mut s = RunSettings::from_args(&run_args(&[
            "--mode",
            "sliding",
            "--evict",
            "2",
            "--order",
            "random",
            "--order-seed",
            "9",
            "--max-iters",
            "100",
            "--init",
            "glimmer",
            "--step-size",
            "0.125",
        ]))
        .unwrap();
        s.resolve(100, 6).unwrap();
        let m = s.to_manifest();
        let back = RunSettings::from_manifest(&m, Path::new("manifest.json")).unwrap();
        assert_eq!(back, s);

        let mut b = RunSettings::from_args(&run_args(&["--mode", "batch"])).unwrap();
        b.resolve(100, 6).unwrap();
        let back = RunSettings::from_manifest(&b.to_manifest(), Path::new("m.json")).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn data_dependent_defaults() {
        let mut s = RunSettings::from_args(&run_args(&["--mode", "sliding"])).unwrap();
        s.resolve(6000, 5).unwrap();
        assert_eq!(s.full_stress, Some(FullStressArg::Final));
        assert_eq!(s.window_chunks, Some(3));
        let mut s = RunSettings::from_args(&run_args(&["--mode", "sliding", "--window-chunks", "9"])).unwrap();
        assert_eq!(s.resolve(10, 5).unwrap_err().exit_code(), 2);
    }
}
