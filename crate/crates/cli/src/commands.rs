//! Subcommand bodies.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use mmfbmc::asymptotic::mean_saturation_sinr;
use mmfbmc::channel::{draw_channels, estimate_pdp};
use mmfbmc::harness::{estimator_agreement, sweep_antennas, AgreementLattice, FilterVariant, AGREEMENT_TOLERANCE_DB};
use mmfbmc::io::{
    fmt_db, read_channel_bin, read_filter_csv, write_channel_bin, write_filter_csv, write_pdp_csv, write_sinr_csv,
    write_spectrum_csv,
};
use mmfbmc::modem::{basis_function, real_inner_product};
use mmfbmc::prototype::{
    composite_pulse, design_modified, design_phydyas, matched_filter, nyquist_error, rectangular, spectrum,
    DEFAULT_REGULARIZATION, GRID_FACTOR,
};
use mmfbmc::{ExperimentConfig, PrototypeFilter};

use crate::{CliError, Status, Task};

pub const VALIDATION_SCHEMA: &str = "# mmfbmc-validation v1";

pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-3;
pub const NYQUIST_TOLERANCE: f64 = 1e-3;

/// Files written by a command and whether its checks passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub artifacts: Vec<String>,
}

impl Outcome {
    fn passed(artifacts: Vec<String>) -> Self {
        Self { status: Status::Passed, artifacts }
    }
}

pub fn run_task(task: &Task, config: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    if !matches!(task, Task::Saturation) {
        fs::create_dir_all(out_dir)?;
    }
    match task {
        Task::DesignFilter => design_filter(config, out_dir),
        Task::Validate { filter } => validate(config, filter.as_deref(), out_dir),
        Task::Sweep => sweep(config, out_dir),
        Task::Saturation => saturation(config),
        Task::EstimatePdp { channel, save_channel } => pdp_estimate(config, channel.as_deref(), *save_channel, out_dir),
    }
}

fn create(out_dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(out_dir.join(name))?))
}

fn design_filter(config: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let (m, overlap) = (config.num_subcarriers, config.overlap);
    let pdp = config.pdp.build()?;
    let p = design_phydyas(m, overlap)?;
    let grid = GRID_FACTOR * overlap * m;
    let modified = design_modified(&p, &pdp, grid, DEFAULT_REGULARIZATION)?;
    write_filter_csv(create(out_dir, "filter_original.csv")?, &p)?;
    write_filter_csv(create(out_dir, "filter_modified.csv")?, &modified)?;
    write_spectrum_csv(
        create(out_dir, "spectrum.csv")?,
        grid,
        &[
            ("original_db", spectrum(&p, grid)?.magnitude_db()),
            ("modified_db", spectrum(&modified, grid)?.magnitude_db()),
            ("rectangular_db", spectrum(&rectangular(m)?, grid)?.magnitude_db()),
        ],
    )?;
    let peak = p.taps().iter().map(|t| t.norm()).fold(0.0, f64::max);
    let lo = p.first_lag().min(modified.first_lag());
    let hi = p.last_lag().max(modified.last_lag());
    let deviation = (lo..=hi).map(|l| (p.at(l) - modified.at(l)).norm()).fold(0.0, f64::max) / peak;
    println!("M={m} overlap={overlap} L={}: max tap deviation {:.2}% of peak", pdp.len(), 100.0 * deviation);
    Ok(Outcome::passed(vec!["filter_original.csv".into(), "filter_modified.csv".into(), "spectrum.csv".into()]))
}

/// Worst `|<a, a'>_R|` over distinct basis pairs with `|dm| <= 4`,
/// `|dn| <= 8`, and worst `|<a, a>_R - 1|`.
pub fn orthogonality_errors(p: &PrototypeFilter) -> Result<(f64, f64), CliError> {
    let total = p.num_subcarriers() as i64;
    let reference = basis_function(0, 0, p)?;
    let self_error = (real_inner_product(&reference, &reference) - 1.0).abs();
    let mut cross: f64 = 0.0;
    for dm in -4i64..=4 {
        for dn in -8isize..=8 {
            if dm == 0 && dn == 0 {
                continue;
            }
            let a = basis_function(dm.rem_euclid(total) as usize, dn, p)?;
            cross = cross.max(real_inner_product(&reference, &a).abs());
        }
    }
    Ok((cross, self_error))
}

struct Check {
    suite: &'static str,
    case: String,
    value: f64,
    threshold: f64,
}

impl Check {
    fn passes(&self) -> bool {
        self.value <= self.threshold
    }
}

fn validate(config: &ExperimentConfig, filter: Option<&Path>, out_dir: &Path) -> Result<Outcome, CliError> {
    let p = match filter {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::Config(format!("cannot open filter {}: {e}", path.display())))?;
            read_filter_csv(file)?
        }
        None => design_phydyas(config.num_subcarriers, config.overlap)?,
    };
    let m = p.num_subcarriers();
    let mut checks = Vec::new();

    let (cross, self_error) = orthogonality_errors(&p)?;
    checks.push(Check {
        suite: "orthogonality",
        case: "max cross term".into(),
        value: cross,
        threshold: ORTHOGONALITY_TOLERANCE,
    });
    checks.push(Check {
        suite: "orthogonality",
        case: "unit norm error".into(),
        value: self_error,
        threshold: ORTHOGONALITY_TOLERANCE,
    });

    let q = composite_pulse(&p, &matched_filter(&p), None)?;
    checks.push(Check {
        suite: "nyquist",
        case: "ideal channel".into(),
        value: nyquist_error(&q, m)?,
        threshold: NYQUIST_TOLERANCE,
    });
    let pdp = config.pdp.build()?;
    let modified = design_modified(&p, &pdp, GRID_FACTOR * p.overlap() * m, DEFAULT_REGULARIZATION)?;
    let q = composite_pulse(&p, &matched_filter(&modified), Some(&pdp))?;
    checks.push(Check {
        suite: "nyquist",
        case: "modified filter with PDP".into(),
        value: nyquist_error(&q, m)?,
        threshold: NYQUIST_TOLERANCE,
    });

    for point in estimator_agreement(config, &AgreementLattice::standard(&config.pdp))? {
        let pdp_name = match point.pdp.taps() {
            1 => "delta".to_string(),
            l => format!("L={l}"),
        };
        checks.push(Check {
            suite: "estimator-agreement",
            case: format!(
                "N={} K={} {} {} {}",
                point.antennas,
                point.users,
                point.variant.as_str(),
                pdp_name,
                point.detector
            ),
            value: point.gap_db(),
            threshold: AGREEMENT_TOLERANCE_DB,
        });
    }

    let mut w = create(out_dir, "validation_report.csv")?;
    std::io::Write::write_all(&mut w, format!("{VALIDATION_SCHEMA}\n").as_bytes())?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["suite", "case", "value", "threshold", "pass"])?;
    for c in &checks {
        csv.write_record([
            c.suite.to_string(),
            c.case.clone(),
            format!("{:.6e}", c.value),
            format!("{:e}", c.threshold),
            c.passes().to_string(),
        ])?;
        println!(
            "{:<20} {:<40} {:.3e} <= {:e}  {}",
            c.suite,
            c.case,
            c.value,
            c.threshold,
            if c.passes() { "ok" } else { "FAILED" }
        );
    }
    csv.flush()?;
    let failed = checks.iter().filter(|c| !c.passes()).count();
    let status = if failed == 0 { Status::Passed } else { Status::Failed };
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(Outcome { status, artifacts: vec!["validation_report.csv".into()] })
}

fn sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let records = sweep_antennas(config)?;
    write_sinr_csv(create(out_dir, "sinr.csv")?, &records)?;
    for r in &records {
        println!(
            "N={:<4} {:<5} {:<9} {:>9} dB (+- {})",
            r.antennas,
            r.detector.as_str(),
            r.waveform.to_string(),
            fmt_db(r.sinr_db),
            fmt_db(r.stderr_db)
        );
    }
    Ok(Outcome::passed(vec!["sinr.csv".into()]))
}

fn saturation(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let pdp = config.pdp.build()?;
    let p = design_phydyas(config.num_subcarriers, config.overlap)?;
    let window = config.window();
    for &v in &config.variants {
        let rx = match v {
            FilterVariant::Original => matched_filter(&p),
            FilterVariant::Modified => matched_filter(&design_modified(
                &p,
                &pdp,
                GRID_FACTOR * config.overlap * config.num_subcarriers,
                DEFAULT_REGULARIZATION,
            )?),
        };
        println!("{} {} dB", v.as_str(), fmt_db(mean_saturation_sinr(&p, &rx, &pdp, window)?));
    }
    Ok(Outcome::passed(Vec::new()))
}

fn pdp_estimate(
    config: &ExperimentConfig,
    channel: Option<&Path>,
    save: bool,
    out_dir: &Path,
) -> Result<Outcome, CliError> {
    let mut artifacts = vec!["pdp_estimate.csv".to_string()];
    let est = match channel {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::Config(format!("cannot open channel {}: {e}", path.display())))?;
            estimate_pdp(&read_channel_bin(std::io::BufReader::new(file))?)?
        }
        None => {
            let pdp = config.pdp.build()?;
            let n = *config.antennas.iter().max().expect("validated");
            let ch = draw_channels(&pdp, n, config.users, config.seed)?;
            if save {
                write_channel_bin(create(out_dir, "channel.bin")?, &ch)?;
                artifacts.push("channel.bin".into());
            }
            let est = estimate_pdp(&ch)?;
            let err = est.powers().iter().zip(pdp.powers()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            println!("N={n} K={}: max error {:.4} of peak power", config.users, err / pdp.max_power());
            est
        }
    };
    write_pdp_csv(create(out_dir, "pdp_estimate.csv")?, &est)?;
    Ok(Outcome::passed(artifacts))
}
