use std::fs::{self, File};
use std::io::{BufWriter, Write};

use anyhow::Context;
use pglimmer::datamatrix::write_csv;
use pglimmer::{SyntheticKind, SyntheticSpec};

use crate::args::{GenerateArgs, KindArg};
use crate::{usage, CliResult};

pub fn spec_from_args(a: &GenerateArgs) -> SyntheticSpec {
    let kind = match a.kind {
        KindArg::Uniform => SyntheticKind::UniformRandom,
        KindArg::Walk => SyntheticKind::SmoothTemporalWalk {
            step_scale: a.walk_scale,
        },
        KindArg::Plane => SyntheticKind::PlaneEmbedded {
            intrinsic: a.intrinsic,
            noise: a.noise,
        },
    };
    SyntheticSpec {
        kind,
        point_count: a.points,
        dimension_count: a.dims,
        seed: a.seed,
    }
}

pub fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let spec = spec_from_args(a);
    spec.validate().map_err(|e| usage(e.to_string()))?;
    if a.split_width == Some(0) {
        return Err(usage("--split-width must be >= 1"));
    }
    let values = spec.sample()?;
    let (n, d) = (spec.point_count, spec.dimension_count);

    match a.split_width {
        None => {
            let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            let mut w = BufWriter::new(file);
            write_csv(&mut w, &values, d)?;
            w.flush()?;
        }
        Some(width) => {
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            let files = d.div_ceil(width);
            let digits = (files.max(2) - 1).to_string().len().max(3);
            for f in 0..files {
                let (start, end) = (f * width, ((f + 1) * width).min(d));
                let mut part = Vec::with_capacity(n * (end - start));
                for i in 0..n {
                    part.extend_from_slice(&values[i * d + start..i * d + end]);
                }
                let path = a.out.join(format!("t{f:0digits$}.csv"));
                let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                write_csv(&mut w, &part, end - start)?;
                w.flush()?;
            }
        }
    }
    log::info!("wrote {n} x {d} {} data to {}", spec.kind.name(), a.out.display());
    Ok(())
}
