//! Layered configuration: defaults, TOML file, flags.

use std::fs;

use mmfbmc::harness::PdpSpec;
use mmfbmc::io::read_pdp_csv;
use mmfbmc::ExperimentConfig;

use crate::{CliError, GlobalArgs, Overrides};

/// Parses a TOML document over `base`. Keys absent from the document keep
/// their `base` values; unknown keys are rejected.
pub fn parse_toml(text: &str, base: &ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    let file: toml::Table = text.parse().map_err(|e| CliError::Config(format!("config: {e}")))?;
    let mut merged = match toml::Value::try_from(base) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("config serializes to a table"),
    };
    merged.extend(file);
    toml::Value::Table(merged).try_into().map_err(|e| CliError::Config(format!("config: {e}")))
}

pub fn resolve(global: &GlobalArgs, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let base = if global.paper_scale { ExperimentConfig::paper_scale() } else { ExperimentConfig::desk() };
    let mut c = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            parse_toml(&text, &base)?
        }
        None => base,
    };
    if let Some(seed) = global.seed {
        c.seed = seed;
    }
    if let Some(v) = o.num_subcarriers {
        c.num_subcarriers = v;
    }
    if let Some(v) = o.overlap {
        c.overlap = v;
    }
    if let Some(v) = o.users {
        c.users = v;
    }
    if let Some(v) = &o.antennas {
        c.antennas = v.clone();
    }
    if let Some(v) = o.symbols {
        c.symbols = v;
    }
    if let Some(v) = o.trials {
        c.trials = v;
    }
    if let Some(v) = o.snr_db {
        c.snr_db = v;
    }
    if let Some(v) = &o.detectors {
        c.detectors = v.clone();
    }
    if let Some(v) = &o.variants {
        c.variants = v.clone();
    }
    if let Some(v) = o.estimator {
        c.estimator = v;
    }
    if o.no_cp_ofdm {
        c.cp_ofdm = false;
    }
    if let Some(path) = &o.pdp_file {
        let file = fs::File::open(path)
            .map_err(|e| CliError::Config(format!("cannot open PDP file {}: {e}", path.display())))?;
        let pdp = read_pdp_csv(file).map_err(|e| CliError::Config(format!("PDP file {}: {e}", path.display())))?;
        c.pdp = PdpSpec::Custom { powers: pdp.powers().to_vec() };
    }
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}
