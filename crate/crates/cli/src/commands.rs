use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde_json::{json, Value};

use evsub::calibrate::{calibrate_threshold, CalibrationRequest};
use evsub::evio::{read_events, source_id_for, to_voxel_grid, write_csv, write_evs1, FileFormat, VoxelGrid};
use evsub::metrics::{cost_model, count_histogram, nauc, offset_sweep, temporal_phase_sweep, AccuracyCurve};
use evsub::synth::{synth_scene, Shape, SignalSpec, SynthConfig};
use evsub::{stream_stats, EventStream, SamplerConfig, StreamGeometry};

use crate::files::{expand_inputs, write_atomic, write_temp, StagedOutputs};
use crate::params::{draw_offset, MethodParams};
use crate::report::{num, ReportFormat, Table};
use crate::{
    CalibrateArgs, Cli, CliError, Command, CostArgs, EventFormat, HistogramArgs, NaucArgs, StatsArgs,
    SubsampleArgs, SweepArgs, SynthArgs, VoxelArgs,
};

type CmdResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: Cli) -> CmdResult {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Data(anyhow!("cannot start worker pool: {e}")))?;
    }
    let (seed, format) = (cli.seed, cli.format);
    match cli.command {
        Command::Subsample(a) => subsample(a, seed, format),
        Command::Calibrate(a) => calibrate(a, seed),
        Command::Stats(a) => stats(a, format),
        Command::Nauc(a) => nauc_cmd(a, format),
        Command::Cost(a) => cost(a, seed, format),
        Command::SweepOffsets(a) => sweep(a, format),
        Command::Synth(a) => synth(a, seed, format),
        Command::Histogram(a) => histogram(a, seed, format),
        Command::Voxel(a) => voxel(a),
    }
}

fn load(path: &Path) -> anyhow::Result<EventStream> {
    read_events(path, FileFormat::from_path(path)).with_context(|| format!("reading {}", path.display()))
}

/// Reads every input in parallel, keeping input order.
fn load_all(paths: &[PathBuf]) -> anyhow::Result<Vec<EventStream>> {
    paths.par_iter().map(|p| load(p)).collect()
}

fn write_stream(stream: &EventStream, format: FileFormat, w: &mut dyn Write) -> io::Result<()> {
    let mut w = w;
    match format {
        FileFormat::Evs1Binary => write_evs1(stream, &mut w),
        FileFormat::CsvText => write_csv(stream, &mut w),
    }
}

fn event_format(f: EventFormat) -> FileFormat {
    match f {
        EventFormat::Evs1 => FileFormat::Evs1Binary,
        EventFormat::Csv => FileFormat::CsvText,
    }
}

fn extension(f: FileFormat) -> &'static str {
    match f {
        FileFormat::Evs1Binary => "evs",
        FileFormat::CsvText => "csv",
    }
}

fn print(table: &Table, format: ReportFormat) {
    print!("{}", table.render(format));
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn subsample(a: SubsampleArgs, seed: Option<u64>, format: ReportFormat) -> CmdResult {
    let params = a.params.resolve(seed)?;
    let template = params.build(true)?;
    let random_offset = params.random_offset();
    if random_offset && !matches!(template, SamplerConfig::Spatial(_) | SamplerConfig::Temporal(_)) {
        return Err(usage("--offset random applies to the spatial and temporal methods only"));
    }
    let seed = params.seed();
    let inputs = expand_inputs(&a.inputs)?;

    let single = inputs.len() == 1 && a.inputs[0].is_file() && !a.output.is_dir();
    let targets: Vec<(PathBuf, FileFormat)> = if single {
        let fmt = a.out_format.map_or_else(|| FileFormat::from_path(&a.output), event_format);
        vec![(a.output.clone(), fmt)]
    } else {
        inputs
            .iter()
            .map(|p| {
                let fmt = a.out_format.map_or_else(|| FileFormat::from_path(p), event_format);
                let name = format!("{}.{}", source_id_for(p), extension(fmt));
                (a.output.join(name), fmt)
            })
            .collect()
    };
    let mut seen = HashSet::new();
    for ((t, _), i) in targets.iter().zip(&inputs) {
        if !seen.insert(t.clone()) {
            return Err(usage(format!("two inputs map to the same output {}", t.display())));
        }
        if inputs.iter().any(|p| same_file(p, t)) {
            return Err(usage(format!("output {} would overwrite input {}", t.display(), i.display())));
        }
    }
    if !single {
        fs::create_dir_all(&a.output)
            .with_context(|| format!("cannot create output directory {}", a.output.display()))?;
    }

    let results: Vec<anyhow::Result<(Vec<Value>, String, PathBuf)>> = inputs
        .par_iter()
        .zip(&targets)
        .map(|(input, (target, fmt))| {
            let stream = load(input)?;
            let (cfg, offset) = if random_offset {
                draw_offset(&template, seed, &stream.source_id)
            } else {
                (template, String::new())
            };
            let out = cfg.apply(&stream);
            let temp = write_temp(target, |w| write_stream(&out, *fmt, w))?;
            let row = vec![
                json!(input.display().to_string()),
                json!(target.display().to_string()),
                json!(stream.len()),
                json!(out.len()),
                json!(offset),
            ];
            Ok((row, offset, temp))
        })
        .collect();

    let mut staged = StagedOutputs::new();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (r, (target, _)) in results.into_iter().zip(&targets) {
        match r {
            Ok((row, _, temp)) => {
                staged.add(temp, target.clone());
                rows.push(row);
            }
            Err(e) => errors.push(e),
        }
    }
    if let Some(first) = errors.into_iter().next() {
        // dropping `staged` removes every output written so far
        return Err(CliError::Data(first.context("no outputs were written")));
    }
    staged.commit()?;

    let mut table = Table::new(&["input", "output", "events", "kept", "offset"]);
    let (mut total_in, mut total_kept) = (0u64, 0u64);
    for row in rows {
        if random_offset {
            eprintln!("{}: offset {}", row[0].as_str().unwrap_or_default(), row[4].as_str().unwrap_or_default());
        }
        total_in += row[2].as_u64().unwrap_or(0);
        total_kept += row[3].as_u64().unwrap_or(0);
        table.push(row);
    }
    table.push(vec![json!("total"), Value::Null, json!(total_in), json!(total_kept), Value::Null]);
    print(&table, format);
    Ok(())
}

fn calibrate(a: CalibrateArgs, seed: Option<u64>) -> CmdResult {
    let params = a.params.resolve(seed)?;
    let template = params.build(false)?;
    let free = template
        .free_parameter()
        .ok_or_else(|| usage(format!("method {} has no parameter to calibrate", template.method())))?;
    if !(a.target > 0.0 && a.target.is_finite()) {
        return Err(usage(format!("--target must be positive, got {}", a.target)));
    }
    let bracket = match (a.lo, a.hi) {
        (None, None) => None,
        (Some(lo), Some(hi)) => Some((lo, hi)),
        _ => return Err(usage("--lo and --hi must be given together")),
    };
    let inputs = expand_inputs(&a.inputs)?;
    let data = load_all(&inputs)?;

    let mut req = CalibrationRequest::new(&data, template, a.target);
    req.rel_tol = a.rel_tol;
    req.max_iters = a.max_iters;
    req.bracket = bracket;
    let r = calibrate_threshold(&req)?;

    let mut text = format!(
        "# {} = {} gives mean {} over {} files (target {}) after {} iterations\n",
        free.name(),
        r.parameter,
        r.achieved_mean,
        data.len(),
        a.target,
        r.iterations
    );
    if !r.converged {
        text.push_str("# not converged within the iteration limit\n");
    }
    text.push_str(&MethodParams::from_config(&r.config, params.seed()).to_toml());
    match &a.output {
        Some(path) => write_atomic(path, |w| w.write_all(text.as_bytes()))?,
        None => print!("{text}"),
    }
    eprintln!(
        "{} = {}: mean {} (target {}, {} iterations)",
        free.name(),
        r.parameter,
        r.achieved_mean,
        a.target,
        r.iterations
    );
    if !r.converged {
        return Err(CliError::Data(anyhow!(
            "calibration stopped after {} iterations at mean {}, outside {}% of {}",
            r.iterations,
            r.achieved_mean,
            100.0 * a.rel_tol,
            a.target
        )));
    }
    Ok(())
}

fn stats(a: StatsArgs, format: ReportFormat) -> CmdResult {
    let inputs = expand_inputs(&a.inputs)?;
    let data = load_all(&inputs)?;
    let mut table = Table::new(&[
        "file", "width", "height", "events", "positive", "negative", "t_first", "t_last", "duration_us", "rate_hz",
    ]);
    for (p, s) in inputs.iter().zip(&data) {
        let st = stream_stats(s);
        table.push(vec![
            json!(p.display().to_string()),
            json!(s.geometry.width),
            json!(s.geometry.height),
            json!(st.n_events),
            json!(st.n_pos),
            json!(st.n_neg),
            s.events.first().map_or(Value::Null, |e| json!(e.t)),
            s.events.last().map_or(Value::Null, |e| json!(e.t)),
            json!(st.duration),
            num(st.mean_rate),
        ]);
    }
    print(&table, format);
    Ok(())
}

fn nauc_cmd(a: NaucArgs, format: ReportFormat) -> CmdResult {
    let mut table = Table::new(&["curve", "nauc"]);
    for path in &a.curves {
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let curve = AccuracyCurve::from_csv(BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))?;
        let v = nauc(&curve);
        let cell = match format {
            ReportFormat::Csv => json!(format!("{v:.3}")),
            ReportFormat::Json => num(v),
        };
        table.push(vec![json!(path.display().to_string()), cell]);
    }
    print(&table, format);
    Ok(())
}

fn cost(a: CostArgs, seed: Option<u64>, format: ReportFormat) -> CmdResult {
    let cfg = a.params.resolve(seed)?.build(false)?;
    if a.width == 0 || a.height == 0 {
        return Err(usage("--width and --height must be positive"));
    }
    let r = cost_model(&cfg, StreamGeometry::new(a.width, a.height));
    let mut table = Table::new(&["method", "memory", "memory_units", "macs_per_event"]);
    table.push(vec![
        json!(r.method.name()),
        json!(r.memory_symbolic),
        json!(r.memory_units),
        json!(r.macs_per_event),
    ]);
    print(&table, format);
    Ok(())
}

fn sweep(a: SweepArgs, format: ReportFormat) -> CmdResult {
    let temporal = a.wt_ms.is_some() || a.rt.is_some();
    let spatial = a.rx.is_some() || a.ry.is_some();
    if temporal == spatial {
        return Err(usage("give either --rx and --ry, or --wt-ms and --rt"));
    }
    // validate the periods before reading anything
    let plan = if temporal {
        let (Some(wt), Some(rt)) = (a.wt_ms, a.rt) else {
            return Err(usage("--wt-ms and --rt must be given together"));
        };
        if !(wt > 0.0 && wt.is_finite()) {
            return Err(usage(format!("--wt-ms must be positive, got {wt}")));
        }
        let w_t = (wt * 1000.0).round() as u64;
        evsub::samplers::TemporalConfig::new(w_t, rt, 0)?;
        Err((w_t, rt))
    } else {
        let (Some(rx), Some(ry)) = (a.rx, a.ry) else {
            return Err(usage("--rx and --ry must be given together"));
        };
        evsub::samplers::SpatialConfig::new(rx, ry, 0, 0)?;
        Ok((rx, ry))
    };
    let stream = load(&a.input)?;
    let stem = source_id_for(&a.input);
    let mut outputs: Vec<(String, EventStream)> = Vec::new();
    let table = match plan {
        Ok((rx, ry)) => {
            let rows = offset_sweep(&stream, rx, ry, a.out_dir.is_some())?;
            let mut t = Table::new(&["rx0", "ry0", "kept"]);
            for r in rows {
                t.push(vec![json!(r.r_x0), json!(r.r_y0), json!(r.kept)]);
                if let Some(out) = r.output {
                    outputs.push((format!("{stem}_rx0-{}_ry0-{}.evs", r.r_x0, r.r_y0), out));
                }
            }
            t
        }
        Err((w_t, rt)) => {
            let classes = temporal_phase_sweep(&stream, w_t, rt)?;
            let mut t = Table::new(&["dt0_us", "kept"]);
            for (dt0, out) in classes {
                t.push(vec![json!(dt0), json!(out.len())]);
                outputs.push((format!("{stem}_dt0-{dt0}.evs"), out));
            }
            t
        }
    };
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let temps: Vec<anyhow::Result<(PathBuf, PathBuf)>> = outputs
            .par_iter()
            .map(|(name, s)| {
                let target = dir.join(name);
                let temp = write_temp(&target, |w| write_stream(s, FileFormat::Evs1Binary, w))?;
                Ok((temp, target))
            })
            .collect();
        let mut staged = StagedOutputs::new();
        let mut first_err = None;
        for t in temps {
            match t {
                Ok((temp, target)) => staged.add(temp, target),
                Err(e) => first_err = first_err.or(Some(e)),
            }
        }
        if let Some(e) = first_err {
            return Err(CliError::Data(e));
        }
        staged.commit()?;
    }
    print(&table, format);
    Ok(())
}

fn numbers(flag: &str, spec: &str, expected: usize) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--{flag} expects {expected} comma-separated numbers, got {spec:?}")))?;
    if v.len() != expected {
        return Err(usage(format!("--{flag} expects {expected} numbers, got {}", v.len())));
    }
    Ok(v)
}

fn synth(a: SynthArgs, seed: Option<u64>, format: ReportFormat) -> CmdResult {
    if a.width == 0 || a.height == 0 {
        return Err(usage("--width and --height must be positive"));
    }
    if !(a.duration_ms >= 0.0 && a.duration_ms.is_finite()) {
        return Err(usage("--duration-ms must be a non-negative number"));
    }
    let seed = seed.unwrap_or(0);
    let mut cfg = SynthConfig::new(
        StreamGeometry::new(a.width, a.height),
        (a.duration_ms * 1000.0).round() as u64,
        seed,
    )
    .with_noise(a.noise_rate / 1e6)
    .with_source_id(source_id_for(&a.output));
    cfg.pos_fraction = a.pos_fraction;
    let spec = |v: &[f64], shape: Shape, rate: f64| SignalSpec {
        shape,
        start: (v[0], v[1]),
        end: (v[2], v[3]),
        rate: rate / 1e6,
    };
    for d in &a.dot {
        let v = numbers("dot", d, 6)?;
        cfg = cfg.with_signal(spec(&v, Shape::Dot { radius: v[4] }, v[5]));
    }
    for c in &a.corner {
        let v = numbers("corner", c, 6)?;
        cfg = cfg.with_signal(spec(&v, Shape::Corner { arm: v[4] }, v[5]));
    }
    for e in &a.edge {
        let v = numbers("edge", e, 7)?;
        cfg = cfg.with_signal(spec(&v, Shape::Edge { length: v[4], angle: v[5] }, v[6]));
    }
    let scene = synth_scene(&cfg)?;

    let labels = a.labels.clone().unwrap_or_else(|| {
        a.output.with_file_name(format!("{}.labels.csv", source_id_for(&a.output)))
    });
    if labels == a.output {
        return Err(usage("the label file must differ from the event file"));
    }
    let fmt = FileFormat::from_path(&a.output);
    let mut staged = StagedOutputs::new();
    staged.add(write_temp(&a.output, |w| write_stream(&scene.stream, fmt, w))?, a.output.clone());
    staged.add(write_temp(&labels, |mut w| scene.write_labels(&mut w))?, labels.clone());
    staged.commit()?;

    let signal = scene.labels.iter().filter(|l| l.is_signal()).count();
    let mut table = Table::new(&["output", "labels", "events", "signal", "noise"]);
    table.push(vec![
        json!(a.output.display().to_string()),
        json!(labels.display().to_string()),
        json!(scene.stream.len()),
        json!(signal),
        json!(scene.stream.len() - signal),
    ]);
    print(&table, format);
    Ok(())
}

fn histogram(a: HistogramArgs, seed: Option<u64>, format: ReportFormat) -> CmdResult {
    count_histogram(&[], &a.edges)?;
    let params = a.params.resolve(seed)?;
    let sampler = match params.method {
        Some(_) => Some(params.build(true)?),
        None => None,
    };
    let inputs = expand_inputs(&a.inputs)?;
    let counts: Vec<usize> = inputs
        .par_iter()
        .map(|p| {
            let s = load(p)?;
            Ok(sampler.map_or(s.len(), |c| c.apply(&s).len()))
        })
        .collect::<anyhow::Result<_>>()?;
    let bins = count_histogram(&counts, &a.edges)?;
    let mut table = Table::new(&["lo", "hi", "count"]);
    for (i, n) in bins.iter().enumerate() {
        table.push(vec![num(a.edges[i]), num(a.edges[i + 1]), json!(n)]);
    }
    print(&table, format);
    Ok(())
}

fn write_npy(grid: &VoxelGrid, w: &mut dyn Write) -> io::Result<()> {
    let (c, h, wd) = grid.shape();
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({c}, {h}, {wd}), }}");
    // magic (6) + version (2) + length (2) + header + newline, padded to 64
    let pad = (64 - (10 + header.len() + 1) % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');
    w.write_all(b"\x93NUMPY\x01\x00")?;
    w.write_all(&(header.len() as u16).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for v in &grid.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn voxel(a: VoxelArgs) -> CmdResult {
    if a.bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }
    let stream = load(&a.input)?;
    let grid = to_voxel_grid(&stream, a.bins);
    write_atomic(&a.output, |w| write_npy(&grid, w))?;
    let (c, h, w) = grid.shape();
    eprintln!("wrote {} with shape ({c}, {h}, {w})", a.output.display());
    Ok(())
}
