//! Command-line front end: campaign execution, threshold calibration and
//! sweeps, and offline re-analysis of records files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hypos::config::{parse_config, ScenarioConfig};
use hypos::policy::{calibrate_eta, PolicyKind, UeClass};
use hypos::records::{format_sig, read_records, write_records};
use hypos::runner::{
    availability, reselect, run_campaign, summarize, CampaignSummary, UeRecord,
    SUMMARY_PERCENTILES,
};

/// Environment variable that overrides the output directory of `run`.
const OUT_DIR_ENV: &str = "HYPOS_OUT";

#[derive(Parser)]
#[command(name = "hypos", version, about = "Hybrid GNSS/cellular vehicle positioning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign and report availability and error percentiles.
    Run {
        /// Scenario configuration file (TOML).
        config: PathBuf,
        /// Override the configured number of drops.
        #[arg(long)]
        drops: Option<u32>,
        /// Override the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for records.csv, summary.txt and summary.json.
        /// Without it the summary goes to standard output only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a campaign and print the selection threshold calibrated as the
    /// median neighbor-ToA gap over class-A UEs, in nanoseconds.
    CalibrateEta {
        config: PathBuf,
        #[arg(long)]
        drops: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run the selector over a shared campaign for each threshold value
    /// and print the availability-vs-threshold table.
    SweepEta {
        config: PathBuf,
        /// Threshold values in nanoseconds, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        drops: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute availability and percentiles from a records file.
    Report {
        records: PathBuf,
        /// Availability threshold in meters.
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("hypos: error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), String> {
    match command {
        Command::Run { config, drops, seed, out } => cmd_run(&config, drops, seed, out),
        Command::CalibrateEta { config, drops, seed } => cmd_calibrate(&config, drops, seed),
        Command::SweepEta { config, values, drops, seed } => {
            cmd_sweep(&config, &values, drops, seed)
        }
        Command::Report { records, threshold } => cmd_report(&records, threshold),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn effective_out(flag: Option<PathBuf>) -> Option<PathBuf> {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Some(PathBuf::from(dir)),
        _ => flag,
    }
}

fn cmd_run(
    config: &Path,
    drops: Option<u32>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), String> {
    let cfg = load_config(config)?;
    let n_drops = drops.unwrap_or(cfg.campaign.n_drops);
    let base_seed = seed.unwrap_or(cfg.campaign.base_seed);

    let (records, summary) = run_campaign(&cfg, n_drops, base_seed).map_err(|e| e.to_string())?;
    let text = render_summary(&summary);
    print!("{text}");

    if let Some(dir) = effective_out(out) {
        fs::create_dir_all(&dir)
            .map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
        write_records(&records, &dir.join("records.csv")).map_err(|e| e.to_string())?;
        fs::write(dir.join("summary.txt"), &text)
            .map_err(|e| format!("cannot write summary.txt: {e}"))?;
        let json = summary_json(&summary);
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&json).unwrap())
            .map_err(|e| format!("cannot write summary.json: {e}"))?;
        println!("wrote {}", dir.join("records.csv").display());
    }
    Ok(())
}

fn cmd_calibrate(config: &Path, drops: Option<u32>, seed: Option<u64>) -> Result<(), String> {
    let cfg = load_config(config)?;
    let n_drops = drops.unwrap_or(cfg.campaign.n_drops);
    let base_seed = seed.unwrap_or(cfg.campaign.base_seed);

    let (records, _) = run_campaign(&cfg, n_drops, base_seed).map_err(|e| e.to_string())?;
    let class_a_gaps: Vec<f64> = records
        .iter()
        .filter(|r| r.class == UeClass::A)
        .filter_map(|r| r.zeta_s)
        .collect();
    let eta = calibrate_eta(&class_a_gaps).map_err(|e| e.to_string())?;
    println!(
        "calibrated eta: {} ns  (median of {} class-A gap samples over {} UEs)",
        format_sig(eta * 1e9),
        class_a_gaps.len(),
        records.len()
    );
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    values_ns: &[f64],
    drops: Option<u32>,
    seed: Option<u64>,
) -> Result<(), String> {
    let cfg = load_config(config)?;
    let n_drops = drops.unwrap_or(cfg.campaign.n_drops);
    let base_seed = seed.unwrap_or(cfg.campaign.base_seed);
    let threshold = cfg.campaign.availability_threshold_m;

    let (records, _) = run_campaign(&cfg, n_drops, base_seed).map_err(|e| e.to_string())?;
    println!(
        "availability at {} m over {} UEs ({} drops, seed {})",
        format_sig(threshold),
        records.len(),
        n_drops,
        base_seed
    );
    println!("{:>10}  {:>8}  {:>8}  {:>8}  {:>8}", "eta_ns", "spntv", "e-spntv", "gnss", "tdoa");
    for &eta_ns in values_ns {
        let reselected = reselect(&records, eta_ns * 1e-9);
        println!(
            "{:>10}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
            format_sig(eta_ns),
            availability(&reselected, PolicyKind::Spntv, threshold),
            availability(&reselected, PolicyKind::ESpntv, threshold),
            availability(&reselected, PolicyKind::GnssOnly, threshold),
            availability(&reselected, PolicyKind::TdoaOnly, threshold),
        );
    }
    Ok(())
}

fn cmd_report(records_path: &Path, threshold: f64) -> Result<(), String> {
    let records = read_records(records_path).map_err(|e| e.to_string())?;
    if records.is_empty() {
        return Err(format!("{}: no records", records_path.display()));
    }
    let summary = summarize(&records, 0, 0, threshold, f64::NAN);
    print!("{}", render_summary(&summary));
    Ok(())
}

fn render_summary(summary: &CampaignSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "campaign: {} UEs over {} drops (seed {})\n",
        summary.n_records, summary.n_drops, summary.base_seed
    ));
    out.push_str(&format!(
        "classes: {} A / {} B; final eta {} ns\n",
        summary.class_a_count,
        summary.class_b_count,
        format_sig(summary.final_eta_ns)
    ));
    out.push_str(&format!(
        "{:<10} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9}\n",
        "method",
        format!("av@{}m", format_sig(summary.availability_threshold_m)),
        "outage",
        "p50_m",
        "p67_m",
        "p90_m",
        "p95_m"
    ));
    for m in &summary.methods {
        out.push_str(&format!(
            "{:<10} {:>8.4} {:>8.4} {:>9} {:>9} {:>9} {:>9}\n",
            m.method.label(),
            m.availability,
            m.unavailable_fraction,
            format_sig(m.percentiles[0]),
            format_sig(m.percentiles[1]),
            format_sig(m.percentiles[2]),
            format_sig(m.percentiles[3]),
        ));
    }
    out
}

fn summary_json(summary: &CampaignSummary) -> serde_json::Value {
    serde_json::json!({
        "n_records": summary.n_records,
        "n_drops": summary.n_drops,
        "base_seed": summary.base_seed,
        "availability_threshold_m": summary.availability_threshold_m,
        "final_eta_ns": summary.final_eta_ns,
        "class_a_count": summary.class_a_count,
        "class_b_count": summary.class_b_count,
        "percentile_levels": SUMMARY_PERCENTILES,
        "methods": summary.methods.iter().map(|m| {
            serde_json::json!({
                "method": m.method.label(),
                "availability": m.availability,
                "unavailable_fraction": m.unavailable_fraction,
                "percentiles_m": m.percentiles,
            })
        }).collect::<Vec<_>>(),
    })
}

// Re-analysis helpers shared with the integration tests.
#[allow(dead_code)]
fn availability_of_file(path: &Path, method: PolicyKind, threshold: f64) -> Result<f64, String> {
    let records: Vec<UeRecord> = read_records(path).map_err(|e| e.to_string())?;
    Ok(availability(&records, method, threshold))
}
