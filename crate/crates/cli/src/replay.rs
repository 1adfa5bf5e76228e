use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;

use probesense_core::density::{CountStore, DensityConfig, DensitySample};
use probesense_core::journey::FlowMatrix;
use probesense_core::pipeline::{replay_archive, replay_flows, RunSummary};

use crate::error::CliError;

pub const DENSITY_HEADER: &str = "ts_ms,scanner_id,count";
pub const FLOWS_HEADER: &str = "from,to,count";

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Output directory of an earlier `simulate`
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sweep_interval_s: Option<u32>,
    #[arg(long)]
    pub expiry_window_s: Option<u32>,
    #[arg(long)]
    pub gap_threshold_s: Option<u32>,
    /// Where to write density.csv and flows.csv [default: OUT/replay]
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub samples: Vec<DensitySample>,
    pub flow: FlowMatrix,
    /// `None` when the configuration differs from the recorded run.
    pub matches_stored: Option<bool>,
}

fn load_summary(out: &Path) -> Result<RunSummary, CliError> {
    let p = out.join("summary.json");
    let text = fs::read_to_string(&p).map_err(|e| {
        CliError::Validation(format!(
            "{}: {e} (is this a simulate output directory?)",
            p.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
}

fn write_csv(path: &Path, text: String) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn replay(args: &ReplayArgs, w: &mut dyn Write) -> Result<ReplayOutcome, CliError> {
    let summary = load_summary(&args.out)?;
    let recorded = summary.config.density;
    let density = DensityConfig::new(
        args.sweep_interval_s.unwrap_or(recorded.sweep_interval_s),
        args.expiry_window_s.unwrap_or(recorded.expiry_window_s),
    )
    .map_err(CliError::validation)?;
    let gap = args
        .gap_threshold_s
        .unwrap_or(summary.config.gap_threshold_s);
    if gap == 0 {
        return Err(CliError::Validation("gap_threshold_s must be > 0".into()));
    }

    let store = args.out.join("store");
    let samples = replay_archive(&store, density, &summary.replay)?;
    let flow = replay_flows(&store, gap, &summary.replay)?;

    let dir = args
        .report_dir
        .clone()
        .unwrap_or_else(|| args.out.join("replay"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let mut text = format!("{DENSITY_HEADER}\n");
    for s in &samples {
        text.push_str(&format!("{},{},{}\n", s.ts, s.scanner_id, s.count));
    }
    write_csv(&dir.join("density.csv"), text)?;
    let mut text = format!("{FLOWS_HEADER}\n");
    for ((from, to), n) in &flow.flows {
        text.push_str(&format!("{from},{to},{n}\n"));
    }
    write_csv(&dir.join("flows.csv"), text)?;

    let out = |w: &mut dyn Write, s: String| writeln!(w, "{s}").map_err(CliError::runtime);
    out(
        w,
        format!(
            "replayed {} density samples, {} flows",
            samples.len(),
            flow.total()
        ),
    )?;

    let mut matches_stored = None;
    if density == recorded {
        for scanner in &summary.replay.scanners {
            let stored = CountStore::read(&store, scanner).map_err(CliError::runtime)?;
            let mine: Vec<&DensitySample> = samples
                .iter()
                .filter(|s| &s.scanner_id == scanner)
                .collect();
            if stored.len() != mine.len() || stored.iter().zip(&mine).any(|(a, b)| a != *b) {
                return Err(CliError::Runtime(format!(
                    "replayed series for {scanner} differs from the stored counts"
                )));
            }
        }
        if gap == summary.config.gap_threshold_s && flow.total() != summary.flow_total {
            return Err(CliError::Runtime(format!(
                "replayed flow total {} differs from the recorded {}",
                flow.total(),
                summary.flow_total
            )));
        }
        matches_stored = Some(true);
        out(w, "series identical to the stored counts".into())?;
    } else {
        out(
            w,
            "configuration differs from the recorded run; stored counts not compared".into(),
        )?;
    }
    out(w, format!("wrote {}", dir.display()))?;
    Ok(ReplayOutcome {
        samples,
        flow,
        matches_stored,
    })
}
