//! Monte Carlo SINR experiments over the array size.

pub mod agreement;
pub mod coefficient;
pub mod end_to_end;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::{mean_saturation_sinr, InterferenceWindow};
use crate::channel::{draw_channels_for_trial, exponential_pdp, ChannelSet, PowerDelayProfile};
use crate::combining::{combiner, CombinerMatrix, Detector};
use crate::dsp::{self, C64};
use crate::error::{Error, Result};
use crate::prototype::{
    design_modified, design_phydyas, matched_filter, PrototypeFilter, DEFAULT_REGULARIZATION, GRID_FACTOR,
};
use crate::rng::{self, Domain};

pub use agreement::{estimator_agreement, lattice_detector, AgreementLattice, AgreementPoint, AGREEMENT_TOLERANCE_DB};
pub use coefficient::{project, sinr_coefficient_estimator, ChannelTaps, InterferenceTable, Projection, SinrTerms};
pub use end_to_end::{end_to_end_sinrs, pam_grid, sinr_end_to_end_estimator, EndToEndSetup};

/// Reported SINR when the noise variance is zero and nothing else limits it.
pub const SINR_CAP_DB: f64 = 200.0;

/// Bootstrap resamples for the standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterVariant {
    Original,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Coefficient,
    EndToEnd,
}

/// Waveform of one SINR record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Waveform {
    Fbmc(FilterVariant),
    CpOfdm,
}

impl FilterVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterVariant::Original => "original",
            FilterVariant::Modified => "modified",
        }
    }
}

impl FromStr for FilterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(FilterVariant::Original),
            "modified" => Ok(FilterVariant::Modified),
            other => Err(Error::Parse(format!("unknown filter variant '{other}'"))),
        }
    }
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Coefficient => "coefficient",
            Estimator::EndToEnd => "end-to-end",
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coefficient" => Ok(Estimator::Coefficient),
            "end-to-end" => Ok(Estimator::EndToEnd),
            other => Err(Error::Parse(format!("unknown estimator '{other}'"))),
        }
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Waveform::Fbmc(v) => f.write_str(v.as_str()),
            Waveform::CpOfdm => f.write_str("cp-ofdm"),
        }
    }
}

/// Power delay profile description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PdpSpec {
    Exponential { alpha: f64, taps: usize },
    Delta,
    Custom { powers: Vec<f64> },
}

impl PdpSpec {
    pub fn build(&self) -> Result<PowerDelayProfile> {
        match self {
            PdpSpec::Exponential { alpha, taps } => exponential_pdp(*alpha, *taps),
            PdpSpec::Delta => Ok(PowerDelayProfile::delta()),
            PdpSpec::Custom { powers } => PowerDelayProfile::new(powers.clone()),
        }
    }

    pub fn taps(&self) -> usize {
        match self {
            PdpSpec::Exponential { taps, .. } => *taps,
            PdpSpec::Delta => 1,
            PdpSpec::Custom { powers } => powers.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_subcarriers: usize,
    pub overlap: usize,
    pub users: usize,
    pub antennas: Vec<usize>,
    /// Symbols per burst for the end-to-end estimator.
    pub symbols: usize,
    pub trials: usize,
    pub snr_db: f64,
    pub pdp: PdpSpec,
    pub variants: Vec<FilterVariant>,
    pub detectors: Vec<Detector>,
    pub estimator: Estimator,
    pub seed: u64,
    /// Adds a CP-OFDM/ZF record per array size.
    pub cp_ofdm: bool,
    /// CP length; defaults to the channel memory.
    pub cp_len: Option<usize>,
    pub max_dm: usize,
    /// Defaults to `2 overlap + 2`.
    pub max_dn: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Reduced-scale setup: M=128, K=5, L=20.
    pub fn desk() -> Self {
        Self {
            num_subcarriers: 128,
            overlap: 4,
            users: 5,
            antennas: vec![16, 32, 64, 128, 256],
            symbols: 50,
            trials: 50,
            snr_db: 10.0,
            pdp: PdpSpec::Exponential { alpha: 0.1, taps: 20 },
            variants: vec![FilterVariant::Original, FilterVariant::Modified],
            detectors: vec![Detector::Mrc, Detector::Zf, Detector::Mmse],
            estimator: Estimator::Coefficient,
            seed: 1,
            cp_ofdm: true,
            cp_len: None,
            max_dm: 4,
            max_dn: None,
        }
    }

    /// Full-scale setup: M=256, K=10, L=40, N up to 512.
    pub fn paper_scale() -> Self {
        Self {
            num_subcarriers: 256,
            users: 10,
            antennas: vec![16, 32, 64, 128, 256, 512],
            pdp: PdpSpec::Exponential { alpha: 0.1, taps: 40 },
            ..Self::desk()
        }
    }

    pub fn window(&self) -> InterferenceWindow {
        InterferenceWindow { max_dm: self.max_dm, max_dn: self.max_dn.unwrap_or(2 * self.overlap + 2) }
    }

    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.snr_db)
    }

    /// Edge symbols dropped by the end-to-end estimator.
    pub fn guard(&self) -> usize {
        2 * self.overlap
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_subcarriers < 4 || !self.num_subcarriers.is_multiple_of(2) {
            return Err(Error::InvalidSubcarrierCount(self.num_subcarriers));
        }
        if !(2..=4).contains(&self.overlap) {
            return Err(Error::UnsupportedOverlap(self.overlap));
        }
        if self.users == 0 {
            return bad("at least one user is required".into());
        }
        if self.antennas.is_empty() || self.antennas.contains(&0) {
            return bad("antenna list must be nonempty and positive".into());
        }
        if self.trials == 0 {
            return bad("at least one trial is required".into());
        }
        if !self.snr_db.is_finite() {
            return bad(format!("SNR must be finite, got {}", self.snr_db));
        }
        if self.variants.is_empty() && !self.cp_ofdm {
            return bad("nothing to simulate: no filter variant and no CP-OFDM baseline".into());
        }
        if !self.variants.is_empty() && self.detectors.is_empty() {
            return bad("at least one detector is required".into());
        }
        if self.trials > u32::MAX as usize || self.antennas.iter().any(|&n| n > u32::MAX as usize) {
            return bad("trial and antenna counts must fit in 32 bits".into());
        }
        let min_n = *self.antennas.iter().min().unwrap_or(&0);
        let needs_zf = self.detectors.contains(&Detector::Zf) && !self.variants.is_empty();
        if (needs_zf || self.cp_ofdm) && min_n < self.users {
            return bad(format!("zero forcing needs N >= K, got N = {min_n}, K = {}", self.users));
        }
        if self.estimator == Estimator::EndToEnd && self.symbols < 2 * self.guard() + 3 {
            return bad(format!("need at least {} symbols per burst", 2 * self.guard() + 3));
        }
        let memory = self.pdp.taps() - 1;
        if let Some(cp) = self.cp_len {
            if self.cp_ofdm && cp < memory {
                return Err(Error::CyclicPrefixTooShort { cp, memory });
            }
        }
        self.pdp.build().map(|_| ())
    }
}

/// `sigma^2 = 10^{-SNR/10}` for unit transmit power per user.
pub fn noise_variance(snr_db: f64) -> f64 {
    dsp::from_db(-snr_db)
}

/// Transmit prototype, applied receive filter and coefficient table for
/// one filter variant.
#[derive(Debug, Clone)]
pub struct FilterSetup {
    pub variant: FilterVariant,
    pub p_tx: PrototypeFilter,
    pub p_rx: PrototypeFilter,
    pub table: InterferenceTable,
}

impl FilterSetup {
    pub fn new(
        variant: FilterVariant,
        num_subcarriers: usize,
        overlap: usize,
        pdp: &PowerDelayProfile,
        window: InterferenceWindow,
    ) -> Result<Self> {
        let p_tx = design_phydyas(num_subcarriers, overlap)?;
        let p_rx = match variant {
            FilterVariant::Original => matched_filter(&p_tx),
            FilterVariant::Modified => {
                let grid = GRID_FACTOR * overlap * num_subcarriers;
                matched_filter(&design_modified(&p_tx, pdp, grid, DEFAULT_REGULARIZATION)?)
            }
        };
        let table = InterferenceTable::new(&p_tx, &p_rx, pdp.len(), window)?;
        Ok(Self { variant, p_tx, p_rx, table })
    }
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrRecord {
    pub antennas: usize,
    pub users: usize,
    pub num_subcarriers: usize,
    pub detector: Detector,
    pub waveform: Waveform,
    pub estimator: Estimator,
    pub snr_db: f64,
    pub sinr_db: f64,
    pub stderr_db: f64,
    pub saturation_db: Option<f64>,
    pub seed: u64,
    pub trials: usize,
    /// Seconds spent on this array size, shared by its records.
    pub wall_time_s: f64,
}

/// Per-realization CP-OFDM/ZF SINR of every `(user, subcarrier)`,
/// `1 / (sigma^2 [(H^H H)^{-1}]_{kk})`, capped at [`SINR_CAP_DB`].
pub fn cp_ofdm_zf_sinrs(
    ch: &ChannelSet,
    num_subcarriers: usize,
    noise_variance: f64,
    cp_len: usize,
) -> Result<Vec<f64>> {
    let memory = ch.taps_per_link() - 1;
    if cp_len < memory {
        return Err(Error::CyclicPrefixTooShort { cp: cp_len, memory });
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidNoiseVariance(noise_variance));
    }
    let cap = dsp::from_db(SINR_CAP_DB);
    let users = ch.users();
    let mut out = vec![0.0; users * num_subcarriers];
    for r in ch.frequency_responses(num_subcarriers) {
        let w = combiner(Detector::Zf, &r.values, noise_variance)?;
        for k in 0..users {
            let noise = noise_variance * w.column(k).norm_squared();
            out[k * num_subcarriers + r.subcarrier] = if noise > 0.0 { (1.0 / noise).min(cap) } else { cap };
        }
    }
    Ok(out)
}

/// CP-OFDM/ZF SINR (dB) for `antennas` receive antennas, averaged over
/// users, subcarriers and the configured trials.
pub fn cp_ofdm_zf_baseline(config: &ExperimentConfig, antennas: usize) -> Result<f64> {
    let pdp = config.pdp.build()?;
    let cp = config.cp_len.unwrap_or(pdp.len() - 1);
    let means = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let ch = draw_channels_for_trial(&pdp, antennas, config.users, config.seed, t as u32)?;
            Ok(mean(&cp_ofdm_zf_sinrs(&ch, config.num_subcarriers, config.noise_variance(), cp)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(dsp::db(mean(&means)))
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Bootstrap standard error (dB) of `10 log10(mean)` over trial means.
pub fn bootstrap_stderr_db(trial_means: &[f64], seed: u64, stream: u32) -> f64 {
    let n = trial_means.len();
    if n < 2 {
        return 0.0;
    }
    let mut r = rng::substream(seed, Domain::Bootstrap, stream, 0);
    let stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| dsp::db((0..n).map(|_| trial_means[r.random_range(0..n)]).sum::<f64>() / n as f64))
        .collect();
    let mu = mean(&stats);
    (stats.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / (stats.len() - 1) as f64).sqrt()
}

/// Combiners of every subcarrier for one detector.
pub fn subcarrier_combiners(
    ch: &ChannelSet,
    num_subcarriers: usize,
    detector: Detector,
    noise_variance: f64,
) -> Result<Vec<CombinerMatrix>> {
    ch.frequency_responses(num_subcarriers)
        .into_iter()
        .map(|r| {
            Ok(CombinerMatrix { subcarrier: r.subcarrier, values: combiner(detector, &r.values, noise_variance)? })
        })
        .collect()
}

/// Linear SINR of every `(user, subcarrier)` from the coefficient domain.
pub fn coefficient_sinrs(
    table: &InterferenceTable,
    ch: &ChannelSet,
    combiners: &[CombinerMatrix],
    noise_variance: f64,
) -> Result<Vec<f64>> {
    let total = combiners.len();
    let taps = ChannelTaps::new(ch);
    let mut out = vec![0.0; ch.users() * total];
    for w in combiners {
        for (k, t) in table.subcarrier_terms(&taps, &w.values, w.subcarrier)?.iter().enumerate() {
            out[k * total + w.subcarrier] = table.sinr(t, noise_variance);
        }
    }
    Ok(out)
}

/// Per-trial means in record order: for each array size, every
/// `(variant, detector)` pair and then CP-OFDM if enabled.
fn run_trial(
    config: &ExperimentConfig,
    pdp: &PowerDelayProfile,
    setups: &[FilterSetup],
    trial: u32,
) -> Result<Vec<f64>> {
    let n_max = *config.antennas.iter().max().expect("validated");
    let full = draw_channels_for_trial(pdp, n_max, config.users, config.seed, trial)?;
    let sigma2 = config.noise_variance();
    let mut out = Vec::new();
    for &n in &config.antennas {
        let ch = full.truncated(n)?;
        let responses = ch.frequency_responses(config.num_subcarriers);
        let combiners: Vec<Vec<CombinerMatrix>> = config
            .detectors
            .iter()
            .map(|&d| {
                responses
                    .iter()
                    .map(|r| Ok(CombinerMatrix { subcarrier: r.subcarrier, values: combiner(d, &r.values, sigma2)? }))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut block = vec![0.0; setups.len() * combiners.len()];
        match config.estimator {
            Estimator::Coefficient => {
                let taps = ChannelTaps::new(&ch);
                for (di, ws) in combiners.iter().enumerate() {
                    let mut acc = vec![0.0; setups.len()];
                    for w in ws {
                        let proj = project(&taps, &w.values, w.subcarrier, config.num_subcarriers)?;
                        for (si, s) in setups.iter().enumerate() {
                            acc[si] += s.table.terms(&proj)?.iter().map(|t| s.table.sinr(t, sigma2)).sum::<f64>();
                        }
                    }
                    for (si, a) in acc.into_iter().enumerate() {
                        block[si * combiners.len() + di] = a / (ws.len() * config.users) as f64;
                    }
                }
            }
            Estimator::EndToEnd => {
                for (si, s) in setups.iter().enumerate() {
                    let setup = EndToEndSetup {
                        p_tx: &s.p_tx,
                        p_rx: &s.p_rx,
                        table: &s.table,
                        symbols: config.symbols,
                        noise_variance: sigma2,
                        guard: config.guard(),
                    };
                    for (di, ws) in combiners.iter().enumerate() {
                        block[si * combiners.len() + di] =
                            mean(&end_to_end_sinrs(&setup, &ch, ws, config.seed, trial)?);
                    }
                }
            }
        }
        out.extend(block);
        if config.cp_ofdm {
            let cp = config.cp_len.unwrap_or(pdp.len() - 1);
            out.push(mean(&cp_ofdm_zf_sinrs(&ch, config.num_subcarriers, sigma2, cp)?));
        }
    }
    Ok(out)
}

/// One record per `(N, variant, detector)` plus one CP-OFDM/ZF record per
/// `N` when enabled. Trials run in parallel; results do not depend on the
/// thread count.
pub fn sweep_antennas(config: &ExperimentConfig) -> Result<Vec<SinrRecord>> {
    config.validate()?;
    let started = Instant::now();
    let pdp = config.pdp.build()?;
    let window = config.window();
    let setups = config
        .variants
        .iter()
        .map(|&v| FilterSetup::new(v, config.num_subcarriers, config.overlap, &pdp, window))
        .collect::<Result<Vec<_>>>()?;
    let saturation = match setups.iter().find(|s| s.variant == FilterVariant::Original) {
        Some(s) => Some(mean_saturation_sinr(&s.p_tx, &s.p_rx, &pdp, window)?),
        None => None,
    };
    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, &pdp, &setups, t as u32))
        .collect::<Result<Vec<_>>>()?;
    let elapsed = started.elapsed().as_secs_f64() / config.antennas.len() as f64;

    let mut labels = Vec::new();
    for &n in &config.antennas {
        for s in &setups {
            for &d in &config.detectors {
                labels.push((n, d, Waveform::Fbmc(s.variant)));
            }
        }
        if config.cp_ofdm {
            labels.push((n, Detector::Zf, Waveform::CpOfdm));
        }
    }
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, (n, detector, waveform))| {
            let means: Vec<f64> = per_trial.iter().map(|t| t[i]).collect();
            SinrRecord {
                antennas: n,
                users: config.users,
                num_subcarriers: config.num_subcarriers,
                detector,
                waveform,
                estimator: config.estimator,
                snr_db: config.snr_db,
                sinr_db: dsp::db(mean(&means)),
                stderr_db: bootstrap_stderr_db(&means, config.seed, i as u32),
                saturation_db: if waveform == Waveform::Fbmc(FilterVariant::Original) { saturation } else { None },
                seed: config.seed,
                trials: config.trials,
                wall_time_s: elapsed,
            }
        })
        .collect())
}

/// Flat single-tap channel of unit gain for every link.
pub fn flat_channel(antennas: usize, users: usize) -> Result<ChannelSet> {
    ChannelSet::from_taps(antennas, users, 1, vec![C64::new(1.0, 0.0); antennas * users])
}

/// `H` for a single-tap channel.
pub fn flat_response(ch: &ChannelSet) -> DMatrix<C64> {
    DMatrix::from_fn(ch.antennas(), ch.users(), |i, k| ch.link(i, k)[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_cp_ofdm_is_ten_db() {
        let ch = flat_channel(1, 1).unwrap();
        let s = cp_ofdm_zf_sinrs(&ch, 8, 0.1, 0).unwrap();
        assert!(s.iter().all(|v| (dsp::db(*v) - 10.0).abs() < 1e-12));
        let capped = cp_ofdm_zf_sinrs(&ch, 8, 0.0, 0).unwrap();
        assert!(capped.iter().all(|v| (dsp::db(*v) - SINR_CAP_DB).abs() < 1e-9));
    }

    #[test]
    fn short_prefix_is_rejected() {
        let pdp = exponential_pdp(0.1, 5).unwrap();
        let ch = draw_channels_for_trial(&pdp, 2, 1, 1, 0).unwrap();
        assert!(matches!(cp_ofdm_zf_sinrs(&ch, 8, 0.1, 3), Err(Error::CyclicPrefixTooShort { cp: 3, memory: 4 })));
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::desk().validate().is_ok());
        assert!(ExperimentConfig::paper_scale().validate().is_ok());
        let c = ExperimentConfig { antennas: vec![2], ..ExperimentConfig::desk() };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let c = ExperimentConfig { trials: 0, ..ExperimentConfig::desk() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { cp_len: Some(3), ..ExperimentConfig::desk() };
        assert!(matches!(c.validate(), Err(Error::CyclicPrefixTooShort { .. })));
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let x = [1.0, 2.0, 1.5, 1.2, 0.9];
        assert_eq!(bootstrap_stderr_db(&x, 3, 0), bootstrap_stderr_db(&x, 3, 0));
        assert!(bootstrap_stderr_db(&x, 3, 0) > 0.0);
        assert_eq!(bootstrap_stderr_db(&[2.0], 3, 0), 0.0);
    }

    #[test]
    fn tiny_sweep_is_reproducible() {
        let c = ExperimentConfig {
            num_subcarriers: 16,
            users: 2,
            antennas: vec![2, 4],
            trials: 3,
            pdp: PdpSpec::Exponential { alpha: 0.5, taps: 3 },
            ..ExperimentConfig::desk()
        };
        let a = sweep_antennas(&c).unwrap();
        assert_eq!(a.len(), 2 * (2 * 3 + 1));
        let b = sweep_antennas(&c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.sinr_db, y.sinr_db);
            assert_eq!(x.stderr_db, y.stderr_db);
        }
        assert!(a[0].saturation_db.is_some());
        assert!(a.iter().all(|r| r.sinr_db.is_finite() && r.stderr_db.is_finite()));
    }
}
