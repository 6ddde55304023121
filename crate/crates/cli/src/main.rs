//! `parcelctl`: encode and decode labels, run simulations, compute and
//! reconstruct classification reports, serve the HTTP API and query tracking.
//!
//! Machine output goes to stdout, diagnostics to stderr. Exit status is 0 on
//! success, 1 on a domain or runtime error (the error code is printed on
//! stderr) and 2 on a usage error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use parcel_core::codec::{decode, encode};
use parcel_core::metrics::{
    classification_report, infer_classes, read_pairs_csv, reconstruct_matrix, render_report, ConfusionMatrix,
    MetricsError, RoundedReport,
};
use parcel_core::model::{validate_label, RawLabel, ZoneSet};
use parcel_core::sim::{read_jsonl, run, write_jsonl, Scenario};
use parcel_core::sorter::SortBasis;
use parcel_core::tracking::TrackingStore;
use parcel_core::Report;
use parcel_service::AppState;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "parcelctl", version, about = "Parcel scan-and-sort pipeline tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode label fields into a PMS1 payload.
    Encode {
        #[arg(long)]
        id: String,
        #[arg(long, allow_negative_numbers = true)]
        weight_g: i64,
        /// Dimensions in millimetres as LxWxH.
        #[arg(long, value_parser = parse_dims)]
        dims: Dims,
        #[arg(long)]
        zone: String,
        /// METALLIC or NONMETALLIC.
        #[arg(long)]
        nature: String,
        /// FRAGILE or REGULAR.
        #[arg(long)]
        fragility: String,
        #[arg(long, allow_hyphen_values = true)]
        address: String,
        /// Comma-separated zone codes accepted for this label.
        #[arg(long, value_delimiter = ',')]
        zones: Option<Vec<String>>,
    },
    /// Decode a PMS1 payload and print the label as JSON.
    Decode {
        payload: String,
        #[arg(long, value_delimiter = ',')]
        zones: Option<Vec<String>>,
    },
    /// Run a scenario and write its JSONL event log.
    Simulate {
        /// Scenario file (JSON, or TOML with a .toml extension).
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the sort basis: weight, dims or zone.
        #[arg(long)]
        basis: Option<SortBasis>,
    },
    /// Print the classification report for a pairs CSV or a confusion matrix.
    #[command(group(ArgGroup::new("input").required(true).args(["pairs", "matrix"])))]
    Report {
        /// CSV with a `truth,predicted` header.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// JSON `{"classes": [...], "counts": [[...]]}`, or a reconstruction with a `matrix` field.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Print the rounded report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Recover the integer confusion matrix behind a rounded report.
    ReconstructMatrix {
        /// Report JSON with per-class precision, recall, support and the accuracy.
        #[arg(long)]
        report: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Tracking log; created if missing, a corrupt tail is truncated.
        #[arg(long)]
        log: PathBuf,
        /// Simulation event log for bin occupancy and the classification report.
        #[arg(long)]
        sim_log: Option<PathBuf>,
        /// Pairs CSV for the classification report; overrides the one derived from --sim-log.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        zones: Option<Vec<String>>,
    },
    /// Fetch a parcel's track from a running server.
    Track {
        #[arg(long)]
        url: String,
        id: String,
    },
}

#[derive(Clone, Debug)]
struct Dims(Vec<i64>);

fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        return Err(format!("expected LxWxH, got {s:?}"));
    }
    parts
        .iter()
        .map(|p| p.parse::<i64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Dims)
}

struct Failure {
    code: String,
    message: String,
}

impl From<parcel_core::Error> for Failure {
    fn from(e: parcel_core::Error) -> Self {
        Failure {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        parcel_core::Error::from(e).into()
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        parcel_core::Error::from(e).into()
    }
}

fn failure(code: &str, message: impl Into<String>) -> Failure {
    Failure {
        code: code.to_string(),
        message: message.into(),
    }
}

fn zone_set(zones: Option<Vec<String>>) -> ZoneSet {
    zones.map(ZoneSet::new).unwrap_or_default()
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| failure("IO", format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> Result<ConfusionMatrix, Failure> {
    let value: Value = serde_json::from_reader(BufReader::new(open(path)?))
        .map_err(|e| failure("BAD_INPUT", format!("{}: {e}", path.display())))?;
    let inner = value.get("matrix").cloned().unwrap_or(value);
    let m: ConfusionMatrix =
        serde_json::from_value(inner).map_err(|e| failure("BAD_INPUT", format!("{}: {e}", path.display())))?;
    m.validate()?;
    Ok(m)
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    Ok(read_pairs_csv(open(path)?)?)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Encode {
            id,
            weight_g,
            dims,
            zone,
            nature,
            fragility,
            address,
            zones,
        } => {
            let raw = RawLabel {
                id: Some(id),
                weight_g: Some(weight_g),
                dims_mm: Some(dims.0),
                zone: Some(zone),
                nature: Some(nature),
                fragility: Some(fragility),
                address: Some(address),
            };
            let label = validate_label(&raw, &zone_set(zones)).map_err(parcel_core::Error::from)?;
            writeln!(out, "{}", encode(&label))?;
        }
        Command::Decode { payload, zones } => {
            let label = decode(&payload, &zone_set(zones)).map_err(parcel_core::Error::from)?;
            writeln!(out, "{}", serde_json::to_string(&label).expect("label serializes"))?;
        }
        Command::Simulate {
            scenario,
            seed,
            out: log_path,
            basis,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(basis) = basis {
                s.sort_basis = basis;
            }
            let report = run(&s).map_err(parcel_core::Error::from)?;
            let mut w = BufWriter::new(File::create(&log_path)?);
            write_jsonl(&report.events, &mut w)?;
            w.flush()?;
            writeln!(out, "{}", report.summary())?;
        }
        Command::Report { pairs, matrix, json } => {
            let m = match (pairs, matrix) {
                (Some(p), _) => {
                    let pairs = read_pairs(&p)?;
                    let classes = infer_classes(&pairs);
                    parcel_core::metrics::from_pairs(pairs.iter().map(|(t, p)| (t, p)), &classes)?
                }
                (None, Some(m)) => read_matrix(&m)?,
                (None, None) => unreachable!("clap requires one input"),
            };
            let report: Report = classification_report(&m)?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&report.rounded()).expect("report serializes")
                )?;
            } else {
                write!(out, "{}", render_report(&report))?;
            }
        }
        Command::ReconstructMatrix { report } => {
            let text =
                std::fs::read_to_string(&report).map_err(|e| failure("IO", format!("{}: {e}", report.display())))?;
            let rounded = RoundedReport::from_json(&text)?;
            let rec = reconstruct_matrix(&rounded)?;
            writeln!(
                out,
                "{}",
                serde_json::to_string(&rec).expect("reconstruction serializes")
            )?;
        }
        Command::Serve {
            port,
            host,
            log,
            sim_log,
            pairs,
            zones,
        } => {
            let (store, dropped) = TrackingStore::open_recovering(&log).map_err(parcel_core::Error::from)?;
            if let Some(e) = dropped {
                eprintln!("warning: {}: {e}; continuing from the valid prefix", log.display());
            }
            let mut state = AppState::new(store, zone_set(zones));
            if let Some(path) = sim_log {
                let events = read_jsonl(BufReader::new(open(&path)?))?;
                state = state.with_sim_log(&events);
            }
            if let Some(path) = pairs {
                state = state.with_pairs(&read_pairs(&path)?);
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                parcel_service::serve(listener, state).await
            })?;
        }
        Command::Track { url, id } => {
            let endpoint = format!("{}/api/v1/parcels/{id}/track", url.trim_end_matches('/'));
            let resp = reqwest::blocking::get(&endpoint).map_err(|e| failure("IO", format!("{endpoint}: {e}")))?;
            let status = resp.status();
            let body = resp.text().map_err(|e| failure("IO", e.to_string()))?;
            if !status.is_success() {
                let code = serde_json::from_str::<Value>(&body)
                    .ok()
                    .and_then(|v| v.get("code").and_then(Value::as_str).map(String::from))
                    .unwrap_or_else(|| format!("HTTP_{}", status.as_u16()));
                return Err(failure(&code, format!("{endpoint}: {status}: {body}")));
            }
            writeln!(out, "{}", body.trim_end())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if f.message.starts_with(&f.code) {
                eprintln!("error: {}", f.message);
            } else {
                eprintln!("error: {}: {}", f.code, f.message);
            }
            ExitCode::from(1)
        }
    }
}
