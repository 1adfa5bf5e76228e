use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;

use probesense_core::sim::{
    experiment_report_for, profile_from_table3, run_scenario, write_report_csv, DeviceSpec,
    ReportRow, Scenario, ScenarioFile, ScreenState,
};

use crate::error::CliError;

const BENCH: &str = "bench";
const PHONE: &str = "phone";

#[derive(Debug, Clone, Args)]
pub struct PhoneArgs {
    /// One of iPhone6S, SamsungS7, SamsungJ5, XiaomiMiNote3
    #[arg(long)]
    pub model: String,
    /// on or off
    #[arg(long)]
    pub screen: ScreenState,
    #[arg(long, default_value_t = 3600.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV destination [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One phone next to one scanner for the whole run, screen fixed.
pub fn phone_rows(args: &PhoneArgs) -> Result<Vec<ReportRow>, CliError> {
    profile_from_table3(&args.model)?;
    if !args.duration_s.is_finite() || args.duration_s < 0.0 {
        return Err(CliError::Validation(format!(
            "--duration-s must be >= 0, got {}",
            args.duration_s
        )));
    }
    let mut device = DeviceSpec::new(PHONE, args.model.as_str()).screen(0.0, args.screen);
    if args.duration_s > 0.0 {
        device = device.stay(BENCH, 0.0, args.duration_s);
    }
    let file = ScenarioFile::new(args.seed, args.duration_s)
        .scanner(BENCH, BENCH)
        .device(device);
    let output = run_scenario(&Scenario::resolve(&file)?);
    Ok(experiment_report_for(&output, PHONE))
}

pub fn phone_experiment(args: &PhoneArgs, w: &mut dyn Write) -> Result<usize, CliError> {
    let rows = phone_rows(args)?;
    match &args.out {
        Some(p) => {
            let f =
                File::create(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            let mut f = BufWriter::new(f);
            write_report_csv(&rows, &mut f)
                .and_then(|_| f.flush())
                .map_err(CliError::runtime)?;
        }
        None => write_report_csv(&rows, &mut *w).map_err(CliError::runtime)?,
    }
    Ok(rows.len())
}
