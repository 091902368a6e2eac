use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evsub::evio::{read_evs1, write_csv, write_evs1};
use evsub::rng::SplitMix64;
use evsub::{Event, EventStream, StreamGeometry};

fn evsub() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_evsub"));
    c.env_remove("EVSUB_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    evsub().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn random_stream(w: u16, h: u16, n: usize, seed: u64, id: &str) -> EventStream {
    let mut rng = SplitMix64::new(seed);
    let mut t = 0;
    let events = (0..n)
        .map(|_| {
            t += rng.below(50);
            Event::new(rng.below(w as u64) as u16, rng.below(h as u64) as u16, t, if rng.next_f64() < 0.5 { 1 } else { -1 })
        })
        .collect();
    EventStream::new(StreamGeometry::new(w, h), events, id)
}

fn save(dir: &Path, name: &str, s: &EventStream) -> PathBuf {
    let p = dir.join(name);
    let mut buf = Vec::new();
    if name.ends_with(".csv") {
        write_csv(s, &mut buf).unwrap();
    } else {
        write_evs1(s, &mut buf).unwrap();
    }
    fs::write(&p, buf).unwrap();
    p
}

fn load(p: &Path) -> EventStream {
    read_evs1(&fs::read(p).unwrap()[..], "x").unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV report, without header and total row.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with("total"))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn random_quarter_is_binomial_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "in.evs", &random_stream(128, 96, 100_000, 1, "in"));
    let a = dir.path().join("a.evs");
    let b = dir.path().join("b.evs");
    for out in [&a, &b] {
        ok(run(&["subsample", "--method", "random", "--rho", "0.25", "--seed", "7", s(&input), "-o", s(out)]));
    }
    let n = load(&a).len();
    assert!((24_000..=26_000).contains(&n), "{n}");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn spatial_quarter_on_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let events = (0..48u16)
        .flat_map(|y| (0..64u16).map(move |x| (x, y)))
        .enumerate()
        .map(|(i, (x, y))| Event::new(x, y, i as u64, 1))
        .collect();
    let input = save(dir.path(), "grid.evs", &EventStream::new(StreamGeometry::new(64, 48), events, "grid"));
    let out = dir.path().join("o.evs");
    let o = ok(run(&[
        "subsample", "--method", "spatial", "--rx", "2", "--ry", "2", "--rx0", "0", "--ry0", "0", s(&input), "-o", s(&out),
    ]));
    let kept = load(&out);
    assert_eq!(kept.len(), 64 * 48 / 4);
    assert!(kept.events.iter().all(|e| e.x % 2 == 0 && e.y % 2 == 0));
    assert!(stdout(&o).contains(",3072,768,"));
}

#[test]
fn cost_table() {
    let o = ok(run(&["cost", "--method", "corner", "--wc", "7"]));
    assert!(stdout(&o).contains(",1960\n"), "{}", stdout(&o));
    let o = ok(run(&["cost", "--method", "density", "--wd", "7", "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["macs_per_event"], 196);
    let o = ok(run(&["cost", "--method", "random"]));
    assert!(stdout(&o).contains("random,O(1),1,0"), "{}", stdout(&o));
}

#[test]
fn sweep_has_80_rows_summing_to_n() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "in.evs", &random_stream(100, 80, 20_000, 2, "in"));
    let o = ok(run(&["sweep-offsets", "--rx", "10", "--ry", "8", s(&input)]));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 80);
    let sum: usize = rows.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(sum, 20_000);

    let out_dir = dir.path().join("classes");
    let o = ok(run(&["sweep-offsets", "--wt-ms", "10", "--rt", "4", s(&input), "--out-dir", s(&out_dir)]));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["0", "2500", "5000", "7500"]);
    let written: usize = fs::read_dir(&out_dir).unwrap().map(|e| load(&e.unwrap().path()).len()).sum();
    assert_eq!(written, 20_000);
}

#[test]
fn nauc_prints_three_decimals_and_reports_lines() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("c.csv");
    fs::write(&good, "mean_count,accuracy\n10,1.0\n100,1.0\n1000,1.0\n").unwrap();
    let o = ok(run(&["nauc", s(&good)]));
    assert!(stdout(&o).trim_end().ends_with(",1.000"), "{}", stdout(&o));
    let three = dir.path().join("d.csv");
    fs::write(&three, "10,0.4\n100,0.6\n1000,0.8\n").unwrap();
    let o = ok(run(&["nauc", s(&three), "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v[0]["nauc"].as_f64().unwrap() - 0.6).abs() < 1e-12);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "mean_count,accuracy\n10,0.5\n20,oops\n").unwrap();
    let o = run(&["nauc", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes_and_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "in.evs", &random_stream(32, 32, 500, 3, "in"));
    let out = dir.path().join("out.evs");

    let o = run(&["subsample", "--method", "random", "--bogus", s(&input), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["subsample", "--method", "density", "--wd", "6", "--fthresh", "2", s(&input), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["subsample", "--method", "random", s(&input), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "missing --rho");
    let o = run(&["subsample", "--method", "random", "--rho", "0.5", s(&dir.path().join("nope.evs")), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    // one corrupt file in a batch: nothing is written
    let batch = dir.path().join("batch");
    fs::create_dir(&batch).unwrap();
    for i in 0..5 {
        save(&batch, &format!("v{i}.evs"), &random_stream(32, 32, 300, 10 + i, "v"));
    }
    let mut bytes = fs::read(batch.join("v3.evs")).unwrap();
    bytes.truncate(bytes.len() - 5);
    fs::write(batch.join("v3.evs"), bytes).unwrap();
    let outdir = dir.path().join("outs");
    let o = run(&["subsample", "--method", "random", "--rho", "0.5", s(&batch), "-o", s(&outdir)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("v3.evs"));
    assert_eq!(fs::read_dir(&outdir).unwrap().count(), 0);
}

#[test]
fn parallel_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch");
    fs::create_dir(&batch).unwrap();
    for i in 0..12 {
        save(&batch, &format!("rec{i:02}.evs"), &random_stream(64, 48, 3_000, 40 + i, "r"));
    }
    let methods: [&[&str]; 3] = [
        &["--method", "random", "--rho", "0.3"],
        &["--method", "density", "--fthresh", "2.5", "--tau-ms", "10"],
        &["--method", "spatial", "--rx", "4", "--ry", "3", "--offset", "random"],
    ];
    for m in methods {
        let mut outs = Vec::new();
        for jobs in ["1", "8", "8"] {
            let outdir = dir.path().join(format!("o{jobs}-{}", outs.len()));
            let mut args = vec!["subsample", "--seed", "5", "--jobs", jobs, s(&batch), "-o", s(&outdir)];
            args.extend_from_slice(m);
            let o = ok(run(&args));
            let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&outdir)
                .unwrap()
                .map(|e| {
                    let p = e.unwrap().path();
                    (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
                })
                .collect();
            files.sort();
            let report = stdout(&o).replace(s(&outdir), "OUT");
            outs.push((files, report, o.stderr.clone()));
        }
        assert_eq!(outs[0].0.len(), 12);
        assert!(outs.windows(2).all(|w| w[0] == w[1]), "{m:?}");
    }
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "in.evs", &random_stream(32, 32, 5_000, 4, "in"));
    let run_seed = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut c = evsub();
        if let Some(e) = env {
            c.env("EVSUB_SEED", e);
        }
        c.args(["subsample", "--method", "random", "--rho", "0.5", s(&input), "-o", s(&out)]);
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        assert!(c.output().unwrap().status.success());
        fs::read(out).unwrap()
    };
    let env9 = run_seed(Some("9"), None, "a.evs");
    assert_eq!(env9, run_seed(None, Some("9"), "b.evs"));
    assert_eq!(run_seed(Some("3"), Some("9"), "c.evs"), env9);
    assert_ne!(run_seed(None, None, "d.evs"), env9);
}

#[test]
fn calibrate_fragment_feeds_subsample() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    for i in 0..8 {
        save(&data, &format!("v{i}.evs"), &random_stream(64, 48, 4_000 + 200 * i as usize, 60 + i, "v"));
    }
    let frag = dir.path().join("density.toml");
    ok(run(&[
        "calibrate", "--method", "density", "--thresh-mode", "random", "--tau-ms", "20", "--seed", "11",
        "--target", "1000", s(&data), "-o", s(&frag),
    ]));
    let text = fs::read_to_string(&frag).unwrap();
    assert!(text.contains("method = \"density\"") && text.contains("fthresh = "), "{text}");

    let outdir = dir.path().join("out");
    let o = ok(run(&["subsample", "--config", s(&frag), s(&data), "-o", s(&outdir)]));
    let total: usize = csv_rows(&stdout(&o)).iter().map(|r| r[3].parse::<usize>().unwrap()).sum();
    let mean = total as f64 / 8.0;
    assert!((mean / 1000.0 - 1.0).abs() <= 0.02, "{mean}");

    // flags override the file
    let o = ok(run(&["subsample", "--config", s(&frag), "--fthresh", "keep-none", s(&data), "-o", s(&outdir)]));
    assert!(stdout(&o).contains("total,,"), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with(",0,"), "{}", stdout(&o));

    let o = run(&["calibrate", "--method", "random", "--target", "1e9", s(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("feasible range"));
    let o = run(&["calibrate", "--method", "spatial", "--rx", "2", "--ry", "2", "--target", "10", s(&data)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_stats_histogram_voxel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scene.evs");
    let o = ok(run(&[
        "synth", "-o", s(&out), "--seed", "3", "--noise-rate", "2000", "--dot", "10,10,50,30,4,3000",
        "--corner", "20,30,40,10,6,1000", "--edge", "40,40,30,20,10,0,1000",
    ]));
    let labels = fs::read_to_string(dir.path().join("scene.labels.csv")).unwrap();
    let n = load(&out).len();
    assert_eq!(labels.lines().count(), n + 1);
    assert!(labels.starts_with("index,label\n0,"));
    let row = &csv_rows(&stdout(&o))[0];
    assert_eq!(row[2].parse::<usize>().unwrap(), n);

    let o = ok(run(&["stats", s(&out), "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["events"], n);
    assert_eq!(v[0]["width"], 64);

    let csv_in = save(dir.path(), "small.csv", &random_stream(16, 16, 40, 1, "s"));
    let o = ok(run(&["histogram", "--edges", "0,50,10000", s(&out), s(&csv_in)]));
    assert_eq!(stdout(&o), "lo,hi,count\n0,50,1\n50,10000,1\n");
    let edges = format!("0,{},1000000", n / 2);
    let o = ok(run(&["histogram", "--edges", &edges, s(&out), s(&csv_in)]));
    assert_eq!(stdout(&o), format!("lo,hi,count\n0,{},1\n{},1000000,1\n", n / 2, n / 2));
    let o = ok(run(&["histogram", "--edges", &edges, "--method", "random", "--rho", "0.01", s(&out), s(&csv_in)]));
    assert_eq!(stdout(&o), format!("lo,hi,count\n0,{},2\n{},1000000,0\n", n / 2, n / 2));
    assert_eq!(run(&["histogram", "--edges", "5,1", s(&out)]).status.code(), Some(2));

    let npy = dir.path().join("v.npy");
    ok(run(&["voxel", s(&out), "-o", s(&npy), "--bins", "5"]));
    let bytes = fs::read(&npy).unwrap();
    assert_eq!(&bytes[..6], b"\x93NUMPY");
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body = &bytes[10 + hlen..];
    assert_eq!(body.len(), 8 * 10 * 48 * 64);
    let total: f64 = body.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).sum();
    assert!((total - n as f64).abs() < 1e-6);
}

#[test]
fn csv_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "in.csv", &random_stream(20, 20, 300, 8, "in"));
    let out = dir.path().join("out.csv");
    ok(run(&["subsample", "--method", "temporal", "--wt-ms", "1", "--rt", "2", s(&input), "-o", s(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# width=20 height=20"), "{text}");
}

#[test]
fn corner_sentinels_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "in.evs", &random_stream(32, 32, 800, 9, "in"));
    let out = dir.path().join("o.evs");
    ok(run(&["subsample", "--method", "corner", "--hthresh", "keep-all", s(&input), "-o", s(&out)]));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&input).unwrap());
    ok(run(&["subsample", "--method", "corner", "--hthresh", "keep-none", s(&input), "-o", s(&out)]));
    assert_eq!(load(&out).len(), 0);
    ok(run(&["subsample", "--method", "corner", "--hthresh", "-2.5", s(&input), "-o", s(&out)]));
}

struct Level {
    rxy: (u16, u16),
    rt: u64,
    rho: f64,
    p_ec: f64,
    h: [f64; 3],
    f: [f64; 3],
}

/// Every level of the published parameter grid, per dataset where it differs
/// (N-Caltech101, N-Cars, DVS-Gesture).
const LEVELS: [Level; 6] = [
    Level { rxy: (2, 2), rt: 4, rho: 1.0 / 4.0, p_ec: 0.75, h: [0.067, 0.091, 0.077], f: [3.33, 3.33, 4.63] },
    Level { rxy: (4, 3), rt: 12, rho: 1.0 / 12.0, p_ec: 0.75, h: [0.23, 0.25, 0.17], f: [10.0, 10.0, 11.63] },
    Level { rxy: (6, 6), rt: 36, rho: 1.0 / 36.0, p_ec: 1.0, h: [0.68, 0.56, 0.5], f: [30.0, 30.0, 38.56] },
    Level { rxy: (12, 10), rt: 120, rho: 1.0 / 120.0, p_ec: 1.0, h: [1.52, 1.0, 16.7], f: [66.67, 66.67, 111.11] },
    Level { rxy: (15, 12), rt: 180, rho: 1.0 / 180.0, p_ec: 1.0, h: [3.85, 1.67, 3.33], f: [166.67, 166.67, 250.0] },
    Level { rxy: (25, 16), rt: 400, rho: 1.0 / 400.0, p_ec: 1.0, h: [9.10, 2.5, 7.70], f: [400.0, 400.0, 555.56] },
];

fn table_rows() -> Vec<(String, Vec<(String, String)>)> {
    let mut rows = Vec::new();
    for (li, l) in LEVELS.iter().enumerate() {
        for (di, dataset) in ["ncaltech101", "ncars", "dvsgesture"].iter().enumerate() {
            let tag = |m: &str| format!("L{}-{dataset}-{m}", li + 1);
            let kv = |pairs: &[(&str, String)]| pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<Vec<_>>();
            rows.push((tag("spatial"), kv(&[("method", "spatial".into()), ("rx", l.rxy.0.to_string()), ("ry", l.rxy.1.to_string())])));
            rows.push((tag("temporal"), kv(&[("method", "temporal".into()), ("rt", l.rt.to_string()), ("wt-ms", "10".into())])));
            rows.push((tag("random"), kv(&[("method", "random".into()), ("rho", l.rho.to_string())])));
            rows.push((
                tag("event-count"),
                kv(&[("method", "event-count".into()), ("rx", l.rxy.0.to_string()), ("ry", l.rxy.1.to_string()), ("p-thresh", l.p_ec.to_string())]),
            ));
            rows.push((
                tag("corner"),
                kv(&[
                    ("method", "corner".into()),
                    ("wc", "7".into()),
                    ("ksize", "3".into()),
                    ("block-size", "2".into()),
                    ("k", "0.04".into()),
                    ("hthresh", l.h[di].to_string()),
                ]),
            ));
            rows.push((
                tag("density"),
                kv(&[("method", "density".into()), ("tau-ms", "30".into()), ("wd", "7".into()), ("fthresh", l.f[di].to_string())]),
            ));
        }
    }
    rows
}

fn toml_value(key: &str, v: &str) -> String {
    if key == "method" {
        format!("\"{v}\"")
    } else if key == "rho" || key == "p-thresh" || key == "k" || key == "hthresh" || key == "fthresh" || key == "tau-ms" || key == "wt-ms" {
        // floats in TOML need a decimal point or exponent
        let f: f64 = v.parse().unwrap();
        format!("{f:?}")
    } else {
        v.to_string()
    }
}

#[test]
fn every_published_parameter_row_is_a_flag_set() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "in.evs", &random_stream(120, 90, 6_000, 12, "in"));
    let rows = table_rows();
    assert_eq!(rows.len(), 6 * 6 * 3);
    for (name, kv) in rows {
        let by_flags = dir.path().join(format!("{name}.evs"));
        let mut args: Vec<String> = vec!["subsample".into(), "--seed".into(), "1".into()];
        for (k, v) in &kv {
            args.push(format!("--{k}"));
            args.push(v.clone());
        }
        args.extend([s(&input).to_string(), "-o".into(), s(&by_flags).to_string()]);
        let o = evsub().args(&args).output().unwrap();
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));

        let cfg = dir.path().join(format!("{name}.toml"));
        let text: String = kv.iter().map(|(k, v)| format!("{k} = {}\n", toml_value(k, v))).collect();
        fs::write(&cfg, text).unwrap();
        let by_file = dir.path().join(format!("{name}-file.evs"));
        ok(run(&["subsample", "--seed", "1", "--config", s(&cfg), s(&input), "-o", s(&by_file)]));
        assert_eq!(fs::read(&by_flags).unwrap(), fs::read(&by_file).unwrap(), "{name}");

        let kept = load(&by_flags).len();
        assert!(kept <= 6_000 || name.contains("event-count"), "{name}: {kept}");
    }
}
