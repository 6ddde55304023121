//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use parcel_core::codec::{decode, encode};
use parcel_core::detectors::{largest_hotspot, xray_classify};
use parcel_core::metrics::{classification_report, ConfusionMatrix};
use parcel_core::model::{
    EventKind, Fragility, Nature, ObjectClass, ParcelInstance, ParcelLabel, Station, ThermalMap, ZoneSet, DEFAULT_ZONES,
};
use parcel_core::rng::{prng_stream, SplitMix64};
use parcel_core::sim::{run, validate_log, write_jsonl, Scenario, ScenarioParcel};
use parcel_core::tracking::{replay, Checkpoint, TrackError, TrackingStore};
use parcel_core::{ChannelModel, Report};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn parcelctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parcelctl"))
        .args(args)
        .output()
        .expect("parcelctl runs")
}

fn stdout_of(out: &Output) -> Result<String, String> {
    if !out.status.success() {
        return Err(format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    String::from_utf8(out.stdout.clone()).map_err(|e| e.to_string())
}

const TABLE_TEXT: &str = "              precision    recall  f1-score   support

        BLADE      0.87      0.87      0.87        15
          GUN      0.78      0.82      0.80        17
        KNIFE      0.82      0.93      0.87        15
     SHURIKEN      0.96      0.91      0.94        57
NON_DANGEROUS      0.87      0.87      0.87        15

     accuracy                          0.89       119
    macro avg      0.86      0.88      0.87       119
 weighted avg      0.89      0.89      0.89       119
";

const TABLE_JSON: &str = r#"{"classes":[{"class":"BLADE","precision":0.87,"recall":0.87,"f1":0.87,"support":15},{"class":"GUN","precision":0.78,"recall":0.82,"f1":0.8,"support":17},{"class":"KNIFE","precision":0.82,"recall":0.93,"f1":0.87,"support":15},{"class":"SHURIKEN","precision":0.96,"recall":0.91,"f1":0.94,"support":57},{"class":"NON_DANGEROUS","precision":0.87,"recall":0.87,"f1":0.87,"support":15}],"accuracy":0.89,"macro_avg":{"precision":0.86,"recall":0.88,"f1":0.87},"weighted_avg":{"precision":0.89,"recall":0.89,"f1":0.89},"total_support":119}"#;

fn table_reproduction(tmp: &Path) -> Outcome {
    let report = repo_root().join("scenarios/reference_report.json");
    let start = Instant::now();
    let rec_text = stdout_of(&parcelctl(&[
        "reconstruct-matrix",
        "--report",
        report.to_str().unwrap(),
    ]))?;
    let rec: Value = serde_json::from_str(&rec_text).map_err(|e| e.to_string())?;
    ensure(rec["diagonal"] == json!([13, 14, 14, 52, 13]), || {
        format!("diagonal {}", rec["diagonal"])
    })?;
    ensure(rec["column_sums"] == json!([15, 18, 17, 54, 15]), || {
        format!("column sums {}", rec["column_sums"])
    })?;
    let matrix_path = tmp.join("reconstructed.json");
    std::fs::write(&matrix_path, &rec_text).map_err(|e| e.to_string())?;
    let text = stdout_of(&parcelctl(&["report", "--matrix", matrix_path.to_str().unwrap()]))?;
    let elapsed = start.elapsed();
    ensure(text == TABLE_TEXT, || format!("rendered table differs:\n{text}"))?;
    let json_text = stdout_of(&parcelctl(&[
        "report",
        "--matrix",
        matrix_path.to_str().unwrap(),
        "--json",
    ]))?;
    ensure(json_text.trim_end() == TABLE_JSON, || {
        format!("report JSON differs: {json_text}")
    })?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "unique diagonal and margins, every cell matches ({} ms)",
        elapsed.as_millis()
    ))
}

fn channel_fidelity() -> Outcome {
    const N: u64 = 100_000;
    let start = Instant::now();
    let model = ChannelModel::reference();
    let counts = ConfusionMatrix::reference();
    let rows = counts.row_sums();
    let dangerous = parcel_core::detectors::DetectorConfig::default().dangerous_classes;
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for class in ObjectClass::ALL {
        let i = class.index();
        let expected = counts.counts[i][i] as f64 / rows[i] as f64;
        let mut hits = 0u64;
        for k in 0..N {
            let mut rng = prng_stream(20_240_601 + i as u64, k, Station::Xray);
            let outcome = xray_classify(class, &model, &dangerous, &mut rng).map_err(|e| e.to_string())?;
            if outcome.measurement == parcel_core::model::Measurement::PredictedClass(class) {
                hits += 1;
            }
        }
        let recall = hits as f64 / N as f64;
        worst = worst.max((recall - expected).abs());
        details.push(format!("{} {:.4}/{:.4}", class.name(), recall, expected));
        ensure((recall - expected).abs() <= 0.01, || {
            format!("{}: recall {recall:.4} vs {expected:.4}", class.name())
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max |deviation| {worst:.4}; {} ({} ms)",
        details.join(", "),
        elapsed.as_millis()
    ))
}

fn random_label(rng: &mut SplitMix64, id: String) -> ParcelLabel {
    let mut pick = |n: u64| rng.next_u64() % n;
    let dims = [10 + pick(591) as u32, 10 + pick(591) as u32, 10 + pick(591) as u32];
    let weight_g = 1 + pick(50_000) as u32;
    let zone = DEFAULT_ZONES[pick(DEFAULT_ZONES.len() as u64) as usize].to_string();
    let nature = if pick(2) == 0 {
        Nature::Metallic
    } else {
        Nature::Nonmetallic
    };
    let fragility = if pick(2) == 0 {
        Fragility::Fragile
    } else {
        Fragility::Regular
    };
    let alphabet: Vec<char> = "abc XYZ%09~!é|\u{0939}\u{1F4E6}"
        .chars()
        .filter(|&c| c != '|')
        .collect();
    let mut address = String::new();
    for _ in 0..pick(50) {
        let c = alphabet[pick(alphabet.len() as u64) as usize];
        if address.len() + c.len_utf8() > 120 {
            break;
        }
        address.push(c);
    }
    ParcelLabel {
        id,
        weight_g,
        dims_mm: dims,
        zone,
        nature,
        fragility,
        address,
    }
}

fn random_id(rng: &mut SplitMix64) -> String {
    const CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    (0..12).map(|_| CHARS[(rng.next_u64() % 36) as usize] as char).collect()
}

fn random_scenario(rng: &mut SplitMix64) -> Scenario {
    let n = (rng.next_u64() % 15) as usize;
    let parcels = (0..n)
        .map(|i| {
            let label = random_label(rng, format!("S{i:011}"));
            let mut p = ParcelInstance::clean(label);
            p.true_class = ObjectClass::ALL[(rng.next_u64() % 5) as usize];
            if rng.next_u64().is_multiple_of(4) {
                p.metal_mass_g = rng.next_f64() * 20.0;
                p.orientation_factor = rng.next_f64();
            }
            if rng.next_u64().is_multiple_of(4) {
                p.true_weight_g *= 0.8 + 0.4 * rng.next_f64();
            }
            if rng.next_u64().is_multiple_of(3) {
                let (r, c) = (1 + (rng.next_u64() % 5) as usize, 1 + (rng.next_u64() % 5) as usize);
                p.thermal_map = ThermalMap(
                    (0..r)
                        .map(|_| (0..c).map(|_| 15.0 + 45.0 * rng.next_f64()).collect())
                        .collect(),
                );
            }
            ScenarioParcel {
                arrival_s: (rng.next_u64() % 60) as f64 * 0.5,
                instance: p,
            }
        })
        .collect();
    let mut s = Scenario {
        parcels,
        seed: rng.next_u64(),
        sort_basis: [
            parcel_core::sorter::SortBasis::Weight,
            parcel_core::sorter::SortBasis::Dimensions,
            parcel_core::sorter::SortBasis::Zone,
        ][(rng.next_u64() % 3) as usize],
        ..Scenario::default()
    };
    if rng.next_u64().is_multiple_of(2) {
        let k = s.bins.bin_ids(s.sort_basis).len();
        s.bins.belt_positions_m = Some((1..=k).map(|j| j as f64).collect());
    }
    s
}

fn jsonl_bytes(s: &Scenario) -> Result<Vec<u8>, String> {
    let r = run(s).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_jsonl(&r.events, &mut buf).map_err(|e| e.to_string())?;
    Ok(buf)
}

fn conservation_and_determinism(tmp: &Path) -> Outcome {
    const SCENARIOS: usize = 1_000;
    let mut rng = SplitMix64::new(0xC0FFEE);
    let mut parcels = 0u64;
    for k in 0..SCENARIOS {
        let s = random_scenario(&mut rng);
        let r = run(&s).map_err(|e| format!("scenario {k}: {e}"))?;
        let n = s.parcels.len() as u64;
        parcels += n;
        ensure(r.totals.injected == n && r.totals.dumped + r.totals.binned == n, || {
            format!("scenario {k}: totals {:?} for {n} parcels", r.totals)
        })?;
        let mut terminals: HashMap<&str, u32> = HashMap::new();
        for ev in r.events.iter().filter(|e| e.payload.is_terminal()) {
            *terminals.entry(&ev.parcel_id).or_default() += 1;
        }
        ensure(
            terminals.len() as u64 == n && terminals.values().all(|&c| c == 1),
            || format!("scenario {k}: terminal events {terminals:?}"),
        )?;
        let problems = validate_log(&r.events);
        ensure(problems.is_empty(), || format!("scenario {k}: {problems:?}"))?;
        ensure(jsonl_bytes(&s)? == jsonl_bytes(&s)?, || {
            format!("scenario {k}: logs differ between runs")
        })?;
    }

    // The same check through the binary, including a TOML scenario with a basis override.
    for (scenario, extra) in [
        ("one_clean_parcel.json", vec![]),
        ("mixed_batch.toml", vec!["--basis", "weight"]),
    ] {
        let path = repo_root().join("scenarios").join(scenario);
        let mut logs = Vec::new();
        for round in 0..2 {
            let out = tmp.join(format!("{scenario}.{round}.jsonl"));
            let mut args = vec![
                "simulate",
                "--scenario",
                path.to_str().unwrap(),
                "--seed",
                "99",
                "--out",
                out.to_str().unwrap(),
            ];
            args.extend(&extra);
            stdout_of(&parcelctl(&args))?;
            logs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        ensure(logs[0] == logs[1], || {
            format!("{scenario}: CLI logs differ between runs")
        })?;
    }
    Ok(format!(
        "{SCENARIOS} random scenarios, {parcels} parcels; CLI logs byte-identical"
    ))
}

fn union_find_largest(cells: u16) -> u32 {
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    let hot = |i: usize| cells >> i & 1 == 1;
    let mut parent: Vec<usize> = (0..16).collect();
    for i in 0..16 {
        if !hot(i) {
            continue;
        }
        let (r, c) = (i / 4, i % 4);
        if c + 1 < 4 && hot(i + 1) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, i + 1));
            parent[a] = b;
        }
        if r + 1 < 4 && hot(i + 4) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, i + 4));
            parent[a] = b;
        }
    }
    let mut sizes: HashMap<usize, u32> = HashMap::new();
    for i in (0..16).filter(|&i| hot(i)) {
        *sizes.entry(find(&mut parent, i)).or_default() += 1;
    }
    sizes.values().copied().max().unwrap_or(0)
}

/// Textbook per-class counting straight from the definitions, in f64.
fn naive_report(counts: &[Vec<u64>]) -> Vec<f64> {
    let n = counts.len();
    let total: u64 = counts.iter().flatten().sum();
    let mut out = Vec::new();
    let mut correct = 0;
    let (mut mp, mut mr, mut mf, mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        let mut tp = 0;
        let mut fp = 0;
        let mut fneg = 0;
        for (t, row) in counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                if t == k && p == k {
                    tp += c;
                } else if p == k {
                    fp += c;
                } else if t == k {
                    fneg += c;
                }
            }
        }
        correct += tp;
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fneg == 0 {
            0.0
        } else {
            tp as f64 / (tp + fneg) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let support = (tp + fneg) as f64;
        out.extend([precision, recall, f1, support]);
        mp += precision / n as f64;
        mr += recall / n as f64;
        mf += f1 / n as f64;
        wp += precision * support / total as f64;
        wr += recall * support / total as f64;
        wf += f1 * support / total as f64;
    }
    out.extend([correct as f64 / total as f64, mp, mr, mf, wp, wr, wf]);
    out
}

fn flatten(r: &Report) -> Vec<f64> {
    let mut v = Vec::new();
    for c in &r.classes {
        v.extend([c.precision, c.recall, c.f1, c.support as f64]);
    }
    v.extend([
        r.accuracy,
        r.macro_avg.precision,
        r.macro_avg.recall,
        r.macro_avg.f1,
        r.weighted_avg.precision,
        r.weighted_avg.recall,
        r.weighted_avg.f1,
    ]);
    v
}

/// Calls `f` on every vector of `cells` non-negative integers summing to at most `budget`.
fn for_each_composition(cells: usize, budget: u64, f: &mut dyn FnMut(&[u64])) {
    fn go(buf: &mut Vec<u64>, cells: usize, budget: u64, f: &mut dyn FnMut(&[u64])) {
        if buf.len() == cells {
            f(buf);
            return;
        }
        for v in 0..=budget {
            buf.push(v);
            go(buf, cells, budget - v, f);
            buf.pop();
        }
    }
    go(&mut Vec::with_capacity(cells), cells, budget, f);
}

fn oracle_equivalences() -> Outcome {
    // IR: every binary 4x4 grid.
    for cells in 0..=u16::MAX {
        let map = ThermalMap(
            (0..4)
                .map(|r| {
                    (0..4)
                        .map(|c| if cells >> (r * 4 + c) & 1 == 1 { 40.0 } else { 20.0 })
                        .collect()
                })
                .collect(),
        );
        let got = largest_hotspot(&map, 35.0);
        let want = union_find_largest(cells);
        ensure(got == want, || format!("grid {cells:#06x}: {got} vs {want}"))?;
    }

    // Metrics: every matrix with up to 3 classes and total at most 12.
    let mut matrices = 0u64;
    let mut mismatch = None;
    for n in 1..=3usize {
        let names: Vec<String> = (0..n).map(|i| format!("C{i}")).collect();
        for_each_composition(n * n, 12, &mut |flat| {
            if mismatch.is_some() {
                return;
            }
            let counts: Vec<Vec<u64>> = flat.chunks(n).map(<[u64]>::to_vec).collect();
            let m = ConfusionMatrix::new(names.clone(), counts.clone()).unwrap();
            matrices += 1;
            match classification_report::<f64>(&m) {
                Err(_) if m.total() == 0 => {}
                Err(e) => mismatch = Some(format!("{counts:?}: {e}")),
                Ok(r) => {
                    let got = flatten(&r);
                    let want = naive_report(&counts);
                    if got.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-12) {
                        mismatch = Some(format!("{counts:?}: {got:?} vs {want:?}"));
                    }
                }
            }
        });
    }
    if let Some(m) = mismatch {
        return Err(m);
    }

    // Codec: random round trips and single-byte corruptions.
    const LABELS: usize = 10_000;
    let mut rng = SplitMix64::new(0x5EED);
    let zones = ZoneSet::default();
    let mut substitutions = 0u64;
    let mut deletions = 0u64;
    let substitution_escapes = 0u64;
    let mut deletion_escapes = 0u64;
    for k in 0..LABELS {
        let id = random_id(&mut rng);
        let label = random_label(&mut rng, id);
        let payload = encode(&label);
        let back = decode(&payload, &zones).map_err(|e| format!("label {k}: {e}"))?;
        ensure(back == label, || format!("label {k}: round trip changed {label:?}"))?;
        if k % 20 != 0 {
            continue;
        }
        let bytes = payload.as_bytes();
        for i in 0..bytes.len() {
            for b in (0x20u8..=0x7e).filter(|&b| b != bytes[i]) {
                let mut v = bytes.to_vec();
                v[i] = b;
                substitutions += 1;
                let s = String::from_utf8(v).expect("ASCII");
                ensure(decode(&s, &zones).is_err(), || {
                    format!("substitution accepted: {payload} -> {s}")
                })?;
            }
            let mut v = bytes.to_vec();
            v.remove(i);
            deletions += 1;
            if decode(&String::from_utf8(v).expect("ASCII"), &zones).is_ok() {
                deletion_escapes += 1;
            }
        }
    }
    let mutations = substitutions + deletions;
    let escapes = substitution_escapes + deletion_escapes;
    let rate = escapes as f64 / mutations as f64;
    ensure(rate <= 1.0 / 256.0, || {
        format!("corruption escape rate {rate} ({escapes}/{mutations})")
    })?;
    Ok(format!(
        "65536 grids; {matrices} matrices; {LABELS} round trips; 0/{substitutions} substitutions and {deletion_escapes}/{deletions} deletions accepted (rate {rate:.2e})"
    ))
}

fn hand_trace(tmp: &Path) -> Outcome {
    let scenario = repo_root().join("scenarios/one_clean_parcel.json");
    let out = tmp.join("trace.jsonl");
    stdout_of(&parcelctl(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]))?;
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let got: Vec<(String, f64)> = text
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["kind"].as_str().unwrap().to_string(), v["ts"].as_f64().unwrap())
        })
        .collect();
    let want: Vec<(String, f64)> = [
        (EventKind::Arrive, 0.0),
        (EventKind::StationStart, 2.0),
        (EventKind::StationDone, 3.0),
        (EventKind::StationStart, 5.0),
        (EventKind::StationDone, 6.0),
        (EventKind::StationStart, 8.0),
        (EventKind::StationDone, 9.0),
        (EventKind::StationStart, 11.0),
        (EventKind::StationDone, 12.0),
        (EventKind::Binned, 14.0),
    ]
    .into_iter()
    .map(|(k, t)| (serde_json::to_value(k).unwrap().as_str().unwrap().to_string(), t))
    .collect();
    ensure(got == want, || format!("timeline {got:?}"))?;
    Ok(format!(
        "{} events: ARRIVE 0, START/DONE 2,3,5,6,8,9,11,12, BINNED 14",
        got.len()
    ))
}

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(args: &[&str]) -> Result<Server, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_parcelctl"))
        .args(["serve", "--port", "0"])
        .args(args)
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    loop {
        line.clear();
        if stderr.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
            let _ = child.kill();
            return Err("server exited before listening".into());
        }
        if let Some(addr) = line.trim().strip_prefix("listening on ") {
            let base = addr.to_string();
            std::thread::spawn(move || std::io::copy(&mut stderr, &mut std::io::sink()));
            return Ok(Server { child, base });
        }
    }
}

fn http(method: &str, url: &str, body: Option<&str>) -> Result<(u16, String), String> {
    let client = reqwest::blocking::Client::new();
    let mut req = client.request(method.parse().unwrap(), url);
    if let Some(b) = body {
        req = req.header("content-type", "application/json").body(b.to_string());
    }
    let resp = req.send().map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    Ok((status, resp.text().map_err(|e| e.to_string())?))
}

fn expect_status(
    method: &str,
    url: &str,
    body: Option<&str>,
    status: u16,
    code: Option<&str>,
) -> Result<Value, String> {
    let (got, text) = http(method, url, body)?;
    ensure(got == status, || format!("{method} {url}: status {got}, body {text}"))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| format!("{method} {url}: non-JSON body {text:?}: {e}"))?;
    if let Some(code) = code {
        ensure(v["code"] == code && v["message"].is_string(), || {
            format!("{method} {url}: body {text}")
        })?;
    }
    Ok(v)
}

fn api_contract(tmp: &Path) -> Outcome {
    // Pairs from the reconstructed matrix, plus a small simulation log.
    let rec_text = stdout_of(&parcelctl(&[
        "reconstruct-matrix",
        "--report",
        repo_root().join("scenarios/reference_report.json").to_str().unwrap(),
    ]))?;
    let rec: Value = serde_json::from_str(&rec_text).map_err(|e| e.to_string())?;
    let m: ConfusionMatrix = serde_json::from_value(rec["matrix"].clone()).map_err(|e| e.to_string())?;
    let pairs_path = tmp.join("pairs.csv");
    let mut csv = String::from("truth,predicted\n");
    for (t, p) in m.to_pairs() {
        csv.push_str(&format!("{t},{p}\n"));
    }
    std::fs::write(&pairs_path, csv).map_err(|e| e.to_string())?;
    let sim_log = tmp.join("api_sim.jsonl");
    stdout_of(&parcelctl(&[
        "simulate",
        "--scenario",
        repo_root().join("scenarios/mixed_batch.toml").to_str().unwrap(),
        "--out",
        sim_log.to_str().unwrap(),
    ]))?;
    let track_log = tmp.join("api_track.jsonl");

    let server = start_server(&[
        "--log",
        track_log.to_str().unwrap(),
        "--sim-log",
        sim_log.to_str().unwrap(),
        "--pairs",
        pairs_path.to_str().unwrap(),
    ])?;
    let base = format!("{}/api/v1", server.base);

    let label = json!({
        "id": "ABC123DEF456", "weight_g": 500, "dims_mm": [100, 100, 100], "zone": "DL",
        "nature": "NONMETALLIC", "fragility": "REGULAR", "address": "x",
        "route": [{"name": "Jaipur", "lat": 26.9124, "lon": 75.7873}, {"name": "Delhi", "lat": 28.6139, "lon": 77.209}]
    });
    let created = expect_status("POST", &format!("{base}/parcels"), Some(&label.to_string()), 201, None)?;
    ensure(created == json!({"id": "ABC123DEF456"}), || {
        format!("201 body {created}")
    })?;
    expect_status(
        "POST",
        &format!("{base}/parcels"),
        Some(&label.to_string()),
        409,
        Some("DUPLICATE"),
    )?;
    let mut bad = label.clone();
    bad["weight_g"] = json!(0);
    bad["id"] = json!("ZZZ123DEF456");
    let v = expect_status(
        "POST",
        &format!("{base}/parcels"),
        Some(&bad.to_string()),
        400,
        Some("VALIDATION"),
    )?;
    ensure(v["fields"] == json!(["weight_g below minimum 1"]), || {
        format!("validation body {v}")
    })?;
    expect_status(
        "POST",
        &format!("{base}/parcels"),
        Some("{not json"),
        400,
        Some("BAD_REQUEST"),
    )?;

    let track = expect_status("GET", &format!("{base}/parcels/ABC123DEF456/track"), None, 200, None)?;
    ensure(track["status"] == "REGISTERED" && track["reached"] == json!([]), || {
        format!("track {track}")
    })?;
    expect_status(
        "GET",
        &format!("{base}/parcels/NOSUCHPARCEL/track"),
        None,
        404,
        Some("NOT_FOUND"),
    )?;
    for (name, ts) in [("Jaipur", 1.0), ("Delhi", 2.0)] {
        expect_status(
            "POST",
            &format!("{base}/parcels/ABC123DEF456/checkpoints"),
            Some(&json!({"name": name, "ts": ts}).to_string()),
            200,
            None,
        )?;
    }
    let cli_track = stdout_of(&parcelctl(&["track", "--url", &server.base, "ABC123DEF456"]))?;
    let cli_track: Value = serde_json::from_str(&cli_track).map_err(|e| e.to_string())?;
    ensure(
        cli_track["status"] == "DELIVERED" && cli_track["reached"].as_array().map(Vec::len) == Some(2),
        || format!("track via CLI {cli_track}"),
    )?;
    let missing = parcelctl(&["track", "--url", &server.base, "NOSUCHPARCEL"]);
    ensure(
        missing.status.code() == Some(1) && String::from_utf8_lossy(&missing.stderr).contains("NOT_FOUND"),
        || "track of unknown parcel should exit 1 with NOT_FOUND".into(),
    )?;

    let (status, report) = http("GET", &format!("{base}/report/classification"), None)?;
    ensure(status == 200 && report == TABLE_JSON, || {
        format!("report {status}: {report}")
    })?;
    let bins = expect_status("GET", &format!("{base}/bins"), None, 200, None)?;
    let occupied: u64 = bins["bins"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    ensure(
        bins["injected"] == 3 && occupied + bins["dumped"].as_u64().unwrap() == 3,
        || format!("bins {bins}"),
    )?;
    drop(server);

    let empty = start_server(&["--log", tmp.join("empty_track.jsonl").to_str().unwrap()])?;
    let base = format!("{}/api/v1", empty.base);
    expect_status(
        "GET",
        &format!("{base}/report/classification"),
        None,
        404,
        Some("NOT_FOUND"),
    )?;
    expect_status("GET", &format!("{base}/bins"), None, 404, Some("NOT_FOUND"))?;
    Ok("201/400/404/409 cases and golden report JSON over a live server".into())
}

fn tracking_durability(tmp: &Path) -> Outcome {
    const SEQUENCES: u64 = 1_000;
    let mut rng = SplitMix64::new(0x7AC4);
    let mut truncations = 0;
    for k in 0..SEQUENCES {
        let path = tmp.join(format!("durability_{k}.jsonl"));
        let store = TrackingStore::open(&path).map_err(|e| e.to_string())?;
        let mut states = vec![(*store.snapshot()).clone()];
        for _ in 0..(1 + rng.next_u64() % 30) {
            let parcel = format!("P{}", rng.next_u64() % 4);
            let ts = (rng.next_u64() % 100) as f64;
            let result = match rng.next_u64() % 5 {
                0 => {
                    let len = rng.next_u64() % 4;
                    let route = (0..len)
                        .map(|j| Checkpoint::new(format!("H{j}"), j as f64 * 0.5, -(j as f64)))
                        .collect();
                    store.register_route(&parcel, route, ts).map(drop)
                }
                1 => store.mark_dumped(&parcel, ts).map(drop),
                _ => store
                    .record_checkpoint(&parcel, &format!("H{}", rng.next_u64() % 3), ts)
                    .map(drop),
            };
            if result.is_ok() {
                states.push((*store.snapshot()).clone());
            }
        }
        let live = (*store.snapshot()).clone();
        drop(store);
        let replayed = replay(&path).map_err(|e| format!("sequence {k}: {e}"))?;
        ensure(replayed == live, || {
            format!("sequence {k}: replay differs from live state")
        })?;

        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        if bytes.is_empty() {
            continue;
        }
        let cut = (rng.next_u64() % bytes.len() as u64) as usize;
        std::fs::write(&path, &bytes[..cut]).map_err(|e| e.to_string())?;
        let complete = bytes[..cut].iter().filter(|&&b| b == b'\n').count();
        let partial = cut > 0 && bytes[cut - 1] != b'\n';
        match replay(&path) {
            Err(TrackError::CorruptLine { line, recovered, .. }) => {
                ensure(partial && line == complete + 1, || {
                    format!("sequence {k}: corrupt line {line}")
                })?;
                ensure(*recovered == states[complete], || {
                    format!("sequence {k}: recovered state differs")
                })?;
                truncations += 1;
            }
            Ok(state) => ensure(!partial && state == states[complete], || {
                format!("sequence {k}: cut at {cut}")
            })?,
            Err(e) => return Err(format!("sequence {k}: {e}")),
        }
        let (store, _) = TrackingStore::open_recovering(&path).map_err(|e| e.to_string())?;
        ensure(*store.snapshot() == states[complete], || {
            format!("sequence {k}: recovering open differs")
        })?;
    }
    Ok(format!(
        "{SEQUENCES} operation sequences replayed exactly; {truncations} torn tails recovered"
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Check)> = vec![
        (
            "1 reference report reproduction",
            Box::new(|| table_reproduction(tmp.path())),
        ),
        ("2 X-ray channel fidelity", Box::new(channel_fidelity)),
        (
            "3 conservation and determinism",
            Box::new(|| conservation_and_determinism(tmp.path())),
        ),
        ("4 oracle equivalences", Box::new(oracle_equivalences)),
        ("5 hand-traced timeline", Box::new(|| hand_trace(tmp.path()))),
        ("6 API contract", Box::new(|| api_contract(tmp.path()))),
        ("7 tracking durability", Box::new(|| tracking_durability(tmp.path()))),
    ];
    let mut results = BTreeMap::new();
    let mut out = std::io::stdout().lock();
    for (name, check) in &criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let line = match &outcome {
            Ok(detail) => format!("criterion {name}: PASS ({detail})"),
            Err(why) => format!("criterion {name}: FAIL ({why})"),
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
        results.insert(*name, outcome.is_ok());
    }
    let failed = results.values().filter(|ok| !**ok).count();
    writeln!(out, "acceptance: {} passed, {failed} failed", results.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
