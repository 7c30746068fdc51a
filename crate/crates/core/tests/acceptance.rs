//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use modelsentry::container::ZipWriter;
use modelsentry::forge::corpus::{CorpusManifest, FixtureKind, DEFAULT_SEED};
use modelsentry::forge::oracle::{oracle_streams, transcript};
use modelsentry::forge::{
    dumps, emit_corpus, emit_keras_h5, emit_keras_lambda_config, emit_keras_zip, emit_reduce_payload_pickle,
    emit_torch_like_zip, PickleValue,
};
use modelsentry::pickle::{disassemble, ParseLimits};
use modelsentry::policy::integrity::{verify_integrity, DIGEST_PREFIX, IntegrityManifest, IntegrityStatus};
use modelsentry::scan::{scan_reader, Kind};
use modelsentry::{render, scan_file, scan_tree, Finding, Locus, OutputFormat, Policy, RuleId, ScanOptions, Severity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const TRANSCRIPTS: &str = include_str!("golden/pickle_transcripts.json");
const LOADER_ROOTS: &str = include_str!("golden/loader_roots.json");
const MARKER: &str = "true # FIXTURE-MARKER";
const MIB: u64 = 1024 * 1024;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: CorpusManifest,
}

fn corpus() -> Corpus {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path().join("corpus");
    let manifest = emit_corpus(&root, DEFAULT_SEED).expect("forge corpus");
    Corpus { _dir: dir, root, manifest }
}

fn by_path(report: &modelsentry::ScanReport, root: &Path) -> BTreeMap<String, Vec<Finding>> {
    let prefix = format!("{}/", root.to_string_lossy());
    report
        .files
        .iter()
        .map(|f| (f.path.strip_prefix(&prefix).unwrap_or(&f.path).to_string(), f.findings.clone()))
        .collect()
}

fn has(findings: &[Finding], rule: RuleId, min: Severity) -> bool {
    findings.iter().any(|f| f.rule_id == rule && f.severity >= min)
}

/// Peak resident set size of this process, in bytes.
fn peak_rss() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn reset_peak_rss() -> bool {
    fs::write("/proc/self/clear_refs", "5").is_ok()
}

fn c1_detection_matrix(c: &Corpus) -> Outcome {
    let started = Instant::now();
    let report = scan_tree(&[c.root.clone()], &Policy::default_policy(), &ScanOptions::default());
    let elapsed = started.elapsed();
    let files = by_path(&report, &c.root);
    let malicious: Vec<_> = c.manifest.fixtures.iter().filter(|f| f.kind.is_malicious()).collect();
    let benign: Vec<_> = c.manifest.fixtures.iter().filter(|f| !f.kind.is_malicious()).collect();
    let classes: BTreeSet<_> = malicious.iter().map(|f| format!("{:?}", f.kind)).collect();
    ensure(malicious.len() >= 10, || format!("only {} malicious fixtures", malicious.len()))?;
    ensure(benign.len() >= 20, || format!("only {} benign fixtures", benign.len()))?;
    ensure(classes.len() >= 4, || format!("only {} attack classes", classes.len()))?;
    for fx in &malicious {
        let found = files.get(&fx.path).ok_or_else(|| format!("{} not scanned", fx.path))?;
        for e in &fx.expected {
            ensure(has(found, e.rule_id, e.min_severity), || {
                format!("{}: missing {} >= {}", fx.id, e.rule_id, e.min_severity)
            })?;
        }
    }
    for fx in &benign {
        let found = files.get(&fx.path).ok_or_else(|| format!("{} not scanned", fx.path))?;
        if let Some(f) = found.iter().find(|f| f.severity >= Severity::High) {
            return Err(format!("{}: {} {} on benign fixture", fx.id, f.severity, f.rule_id));
        }
    }
    ensure(elapsed < Duration::from_secs(10), || format!("scan took {elapsed:?}"))?;
    Ok(format!(
        "{} malicious ({} classes), {} benign, {:.2}s",
        malicious.len(),
        classes.len(),
        benign.len(),
        elapsed.as_secs_f64()
    ))
}

fn scan_bytes(bytes: &[u8], name: &str) -> Vec<Finding> {
    scan_reader(&mut Cursor::new(bytes), name, &Policy::default_policy(), &ScanOptions::default()).findings
}

fn c2_reduce_and_injection(c: &Corpus) -> Outcome {
    let mut checked = 0;
    for proto in 0..=5 {
        let f = scan_bytes(&emit_reduce_payload_pickle(MARKER, proto).unwrap(), "reduce.pkl");
        ensure(has(&f, RuleId::PickleDangerousGlobal, Severity::Critical), || format!("p{proto}: no CRITICAL global"))?;
        let call = f
            .iter()
            .find(|f| f.rule_id == RuleId::PickleCall && f.severity == Severity::Critical)
            .ok_or_else(|| format!("p{proto}: no CRITICAL call"))?;
        ensure(call.evidence.contains(MARKER), || format!("p{proto}: evidence {:?}", call.evidence))?;
        checked += 1;
    }
    for fx in c.manifest.fixtures.iter().filter(|f| f.kind == FixtureKind::InjectedStream) {
        let f = scan_bytes(&fs::read(c.root.join(&fx.path)).unwrap(), &fx.path);
        for (rule, sev) in [
            (RuleId::PickleDangerousGlobal, Severity::Critical),
            (RuleId::PickleCall, Severity::Critical),
            (RuleId::PickleResidualStack, Severity::High),
        ] {
            ensure(f.iter().any(|x| x.rule_id == rule && x.severity == sev), || format!("{}: missing {rule} {sev}", fx.id))?;
        }
        checked += 1;
    }
    Ok(format!("{checked} streams"))
}

fn c3_keras_lambda() -> Outcome {
    let config = emit_keras_lambda_config(true);
    let containers = [("model.h5", emit_keras_h5(&config)), ("model.keras", emit_keras_zip(&config).unwrap())];
    for (name, bytes) in containers {
        let f = scan_bytes(&bytes, name);
        let hit = f
            .iter()
            .find(|f| f.rule_id == RuleId::KerasLambdaCode && f.severity == Severity::High)
            .ok_or_else(|| format!("{name}: no KERAS_LAMBDA_CODE HIGH"))?;
        let path = match &hit.locus {
            Locus::JsonPath(p) => p.clone(),
            Locus::Entry { inner: Some(inner), .. } => match &**inner {
                Locus::JsonPath(p) => p.clone(),
                other => return Err(format!("{name}: locus {other}")),
            },
            other => return Err(format!("{name}: locus {other}")),
        };
        ensure(path == "config.layers[1]", || format!("{name}: json path {path}"))?;
    }
    Ok("h5 and zip at config.layers[1]".into())
}

fn c4_oracle() -> Outcome {
    let golden: BTreeMap<String, Vec<String>> = serde_json::from_str(TRANSCRIPTS).map_err(|e| e.to_string())?;
    let streams = oracle_streams().map_err(|e| e.to_string())?;
    ensure(streams.len() >= 50, || format!("{} streams", streams.len()))?;
    for p in ["_p0", "_p2", "_p4"] {
        ensure(streams.iter().any(|(n, _)| n.contains(p)), || format!("no {p} stream"))?;
    }
    ensure(streams.iter().any(|(n, _)| n.contains("malicious")), || "no malicious stream".into())?;
    ensure(streams.iter().any(|(n, _)| n.contains("benign")), || "no benign stream".into())?;
    let mut mismatches = 0;
    for (name, bytes) in &streams {
        let program = disassemble(bytes, &ParseLimits::default()).map_err(|e| format!("{name}: {e}"))?;
        if golden.get(name) != Some(&transcript(&program)) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatching transcripts"))?;
    Ok(format!("{} streams, 0 mismatches", streams.len()))
}

fn c5_loader_roots(c: &Corpus) -> Outcome {
    let golden: BTreeMap<String, Value> = serde_json::from_str(LOADER_ROOTS).map_err(|e| e.to_string())?;
    let injected: Vec<_> = c.manifest.fixtures.iter().filter(|f| f.benign_root.is_some()).collect();
    ensure(!injected.is_empty(), || "no injected fixtures".into())?;
    for fx in &injected {
        let seen = golden.get(&fx.id).ok_or_else(|| format!("{}: no loader record", fx.id))?;
        ensure(Some(&seen["root"]) == fx.benign_root.as_ref(), || {
            format!("{}: loader returned {} but manifest says {:?}", fx.id, seen["root"], fx.benign_root)
        })?;
        ensure(seen["calls"].as_array().is_some_and(|c| c.len() == 1), || format!("{}: calls {}", fx.id, seen["calls"]))?;
    }
    ensure(golden.len() == injected.len(), || format!("{} records for {} fixtures", golden.len(), injected.len()))?;
    Ok(format!("{} injected fixtures", injected.len()))
}

fn mutate(rng: &mut ChaCha8Rng, seeds: &[Vec<u8>]) -> Vec<u8> {
    match rng.gen_range(0..3) {
        0 => {
            let n = rng.gen_range(0..2048);
            (0..n).map(|_| rng.gen()).collect()
        }
        1 => {
            let s = &seeds[rng.gen_range(0..seeds.len())];
            s[..rng.gen_range(0..=s.len())].to_vec()
        }
        _ => {
            let mut s = seeds[rng.gen_range(0..seeds.len())].clone();
            if !s.is_empty() {
                for _ in 0..rng.gen_range(1..=4) {
                    let i = rng.gen_range(0..s.len());
                    s[i] ^= 1 << rng.gen_range(0..8);
                }
            }
            s
        }
    }
}

fn c6_parser_totality(c: &Corpus) -> Outcome {
    const N: usize = 10_000;
    let seeds: Vec<Vec<u8>> = c.manifest.fixtures.iter().map(|f| fs::read(c.root.join(&f.path)).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let inputs: Vec<Vec<u8>> = (0..N).map(|_| mutate(&mut rng, &seeds)).collect();
    reset_peak_rss();

    let (in_tx, in_rx) = mpsc::channel::<(usize, Vec<u8>)>();
    let (out_tx, out_rx) = mpsc::channel::<(usize, bool)>();
    let worker = std::thread::spawn(move || {
        let policy = Policy::default_policy();
        let opts = ScanOptions { max_entry_bytes: 64 * MIB, ..Default::default() };
        for (i, data) in in_rx {
            let ok = std::panic::catch_unwind(|| {
                let r = scan_reader(&mut Cursor::new(&data), "fuzz", &policy, &opts);
                r.kind.kind != Kind::Unknown || r.findings.iter().all(|f| f.severity == Severity::Info)
            });
            if out_tx.send((i, ok.unwrap_or(false))).is_err() {
                return;
            }
        }
    });
    let prev_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut slowest = Duration::ZERO;
    let mut failure = None;
    for (i, data) in inputs.into_iter().enumerate() {
        let started = Instant::now();
        in_tx.send((i, data)).unwrap();
        match out_rx.recv_timeout(Duration::from_secs(1)) {
            Ok((_, true)) => slowest = slowest.max(started.elapsed()),
            Ok((_, false)) => {
                failure = Some(format!("input {i} panicked or gave an inconsistent report"));
                break;
            }
            Err(_) => {
                failure = Some(format!("input {i} exceeded 1s"));
                break;
            }
        }
    }
    std::panic::set_hook(prev_hook);
    drop(in_tx);
    if failure.is_none() {
        worker.join().map_err(|_| "worker died".to_string())?;
    }
    if let Some(f) = failure {
        return Err(f);
    }
    let peak = peak_rss().unwrap_or(0);
    ensure(peak < 512 * MIB, || format!("peak RSS {} MiB", peak / MIB))?;
    Ok(format!("{N} inputs, slowest {:.1}ms, peak RSS {} MiB", slowest.as_secs_f64() * 1e3, peak / MIB))
}

fn c7_determinism(c: &Corpus) -> Outcome {
    let policy = Policy::default_policy();
    let run = |jobs| render(&scan_tree(&[c.root.clone()], &policy, &ScanOptions { jobs, ..Default::default() }), OutputFormat::Json);
    let a = run(1);
    let b = run(8);
    let again = run(8);
    ensure(a == b, || "jobs 1 and 8 differ".into())?;
    ensure(b == again, || "repeated run differs".into())?;
    Ok(format!("{} byte report identical across 3 runs", a.len()))
}

/// Children this process has waited for, from /proc/self/stat: (cminflt, cutime, cstime).
fn child_accounting() -> Option<(u64, u64, u64)> {
    let stat = fs::read_to_string("/proc/self/stat").ok()?;
    let rest = &stat[stat.rfind(')')? + 2..];
    let f: Vec<&str> = rest.split_whitespace().collect();
    // f[0] is field 3 (state); cminflt, cutime and cstime are fields 11, 16 and 17
    Some((f.get(8)?.parse().ok()?, f.get(13)?.parse().ok()?, f.get(14)?.parse().ok()?))
}

fn live_children() -> usize {
    let Ok(tasks) = fs::read_dir("/proc/self/task") else { return 0 };
    tasks
        .filter_map(Result::ok)
        .filter_map(|t| fs::read_to_string(t.path().join("children")).ok())
        .map(|s| s.split_whitespace().count())
        .sum()
}

fn c8_sentinel(c: &Corpus) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sentinel = dir.path().join("SENTINEL");
    // Payloads that would leave a file behind if anything ever ran them.
    let command = format!("touch {} # FIXTURE-MARKER", sentinel.display());
    let extra = dir.path().join("extra");
    fs::create_dir(&extra).unwrap();
    for proto in [0u8, 2, 4] {
        fs::write(extra.join(format!("sentinel_p{proto}.pkl")), emit_reduce_payload_pickle(&command, proto).unwrap()).unwrap();
    }
    fs::write(extra.join("sentinel.pt"), emit_torch_like_zip(&emit_reduce_payload_pickle(&command, 2).unwrap()).unwrap())
        .unwrap();

    let before = child_accounting().ok_or("cannot read /proc/self/stat")?;
    let report = scan_tree(&[c.root.join("malicious"), extra.clone()], &Policy::default_policy(), &ScanOptions::default());
    let after = child_accounting().ok_or("cannot read /proc/self/stat")?;
    ensure(report.summary.critical > 0, || "scan found nothing".into())?;
    ensure(!sentinel.exists(), || "sentinel file was created".into())?;
    ensure(before == after, || format!("child process accounting changed: {before:?} -> {after:?}"))?;
    ensure(live_children() == 0, || "child processes present".into())?;
    Ok(format!("{} files scanned, no sentinel, no children", report.files.len()))
}

fn c9_integrity(c: &Corpus) -> Outcome {
    let files: Vec<(String, Vec<u8>)> =
        c.manifest.fixtures.iter().map(|f| (f.path.clone(), fs::read(c.root.join(&f.path)).unwrap())).collect();
    let mut manifest = IntegrityManifest::default();
    for (path, bytes) in &files {
        let digest = modelsentry::policy::integrity::sha256_stream(&bytes[..]).unwrap();
        manifest.entries.insert(path.clone(), format!("{DIGEST_PREFIX}{digest}"));
    }
    for (path, bytes) in &files {
        let st = verify_integrity(&bytes[..], Path::new(path), &manifest).unwrap();
        ensure(st == IntegrityStatus::Verified, || format!("{path}: {st:?}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let (path, bytes) = &files[rng.gen_range(0..files.len())];
        let mut flipped = bytes.clone();
        let i = rng.gen_range(0..flipped.len());
        flipped[i] ^= 1 << rng.gen_range(0..8);
        let st = verify_integrity(&flipped[..], Path::new(path), &manifest).unwrap();
        ensure(matches!(st, IntegrityStatus::Mismatch { .. }), || format!("{path} byte {i}: {st:?}"))?;
    }
    Ok(format!("{} files verified, 50/50 flips detected", files.len()))
}

fn c10_throughput() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("big.pt");
    let storage_key = PickleValue::Persistent(Box::new(PickleValue::Tuple(vec![
        PickleValue::text("storage"),
        PickleValue::global("torch", "FloatStorage"),
        PickleValue::text("0"),
        PickleValue::text("cpu"),
        PickleValue::Int(25 * 1024 * 1024),
    ])));
    let tensor = PickleValue::call(
        PickleValue::global("torch._utils", "_rebuild_tensor_v2"),
        vec![
            storage_key,
            PickleValue::Int(0),
            PickleValue::Tuple(vec![PickleValue::Int(25 * 1024), PickleValue::Int(1024)]),
            PickleValue::Tuple(vec![PickleValue::Int(1024), PickleValue::Int(1)]),
            PickleValue::Bool(false),
            PickleValue::call(PickleValue::global("collections", "OrderedDict"), vec![]),
        ],
    );
    let state = PickleValue::Call {
        callee: Box::new(PickleValue::global("collections", "OrderedDict")),
        args: vec![],
        dict_items: vec![(PickleValue::text("weight"), tensor)],
        state: None,
    };
    let pickle = dumps(&state, 2).map_err(|e| e.to_string())?;
    {
        let mut zip = ZipWriter::new(BufWriter::new(File::create(&path).map_err(|e| e.to_string())?));
        zip.add_stored("big/data.pkl", &pickle).map_err(|e| e.to_string())?;
        zip.add_stored("big/version", b"3\n").map_err(|e| e.to_string())?;
        zip.start_stored("big/data/0").map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut chunk = vec![0u8; MIB as usize];
        for _ in 0..100 {
            for v in chunk.chunks_mut(4) {
                v.copy_from_slice(&(rng.gen::<f32>() - 0.5).to_le_bytes());
            }
            zip.write_data(&chunk).map_err(|e| e.to_string())?;
        }
        zip.finish_stored().map_err(|e| e.to_string())?;
        zip.finish().map_err(|e| e.to_string())?.flush().map_err(|e| e.to_string())?;
    }
    let size = fs::metadata(&path).map_err(|e| e.to_string())?.len();
    ensure(size >= 100 * MIB, || format!("archive is {size} bytes"))?;
    let exact = reset_peak_rss();
    let base = peak_rss().unwrap_or(0);
    let started = Instant::now();
    let report = scan_file(&path, &Policy::default_policy(), &ScanOptions::default());
    let elapsed = started.elapsed();
    let peak = peak_rss().unwrap_or(0);
    ensure(report.errors.is_empty(), || format!("errors: {:?}", report.errors))?;
    ensure(report.findings.is_empty(), || format!("findings on clean archive: {:?}", report.findings))?;
    ensure(elapsed < Duration::from_secs(5), || format!("scan took {elapsed:?}"))?;
    ensure(peak < 512 * MIB, || format!("peak RSS {} MiB", peak / MIB))?;
    Ok(format!(
        "{} MiB in {:.2}s, peak RSS {} MiB (before {} MiB{})",
        size / MIB,
        elapsed.as_secs_f64(),
        peak / MIB,
        base / MIB,
        if exact { "" } else { ", peak not resettable" }
    ))
}

fn main() {
    let c = corpus();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("detection matrix", Box::new(|| c1_detection_matrix(&c))),
        ("reduce and injection reproduction", Box::new(|| c2_reduce_and_injection(&c))),
        ("lambda layer reproduction", Box::new(c3_keras_lambda)),
        ("oracle transcript equivalence", Box::new(c4_oracle)),
        ("loader consistency of injection", Box::new(|| c5_loader_roots(&c))),
        ("parser totality", Box::new(|| c6_parser_totality(&c))),
        ("determinism", Box::new(|| c7_determinism(&c))),
        ("no-execution sentinel", Box::new(|| c8_sentinel(&c))),
        ("integrity check", Box::new(|| c9_integrity(&c))),
        ("throughput sanity", Box::new(c10_throughput)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
