//! Time-domain SINR: known PAM bursts through the full chain.

use rand::Rng;
use rayon::prelude::*;

use super::coefficient::{ChannelTaps, InterferenceTable};
use crate::channel::{apply_channel_for_trial, ChannelSet};
use crate::combining::{combine_detect, CombinerMatrix};
use crate::dsp;
use crate::error::{Error, Result};
use crate::modem::{analyze, synthesize, SymbolGrid};
use crate::prototype::PrototypeFilter;
use crate::rng::{self, Domain};

/// Everything the end-to-end estimator needs besides the channel.
#[derive(Debug, Clone, Copy)]
pub struct EndToEndSetup<'a> {
    pub p_tx: &'a PrototypeFilter,
    pub p_rx: &'a PrototypeFilter,
    /// Supplies the desired coefficient of each user.
    pub table: &'a InterferenceTable,
    pub symbols: usize,
    pub noise_variance: f64,
    /// Symbols dropped at each burst edge.
    pub guard: usize,
}

impl EndToEndSetup<'_> {
    fn interior(&self) -> Result<std::ops::Range<usize>> {
        if self.symbols < 2 * self.guard + 3 {
            return Err(Error::InvalidConfig(format!(
                "{} symbols leave fewer than 3 interior symbols with guard {}",
                self.symbols, self.guard
            )));
        }
        Ok(self.guard..self.symbols - self.guard)
    }
}

/// Uniform random `+-1` grid for user `k`.
pub fn pam_grid(num_subcarriers: usize, symbols: usize, seed: u64, trial: u32, user: usize) -> SymbolGrid<f64> {
    let mut r = rng::substream(seed, Domain::Data, trial, user as u32);
    SymbolGrid::from_fn(num_subcarriers, symbols, |_, _| if r.random::<bool>() { 1.0 } else { -1.0 })
}

/// Linear SINR of every `(user, subcarrier)`, user-major.
///
/// Each user's detected symbols are compared with `g d`, `g` being the real
/// desired coefficient; the residual power is averaged over interior
/// symbols and the ratio is scaled by `(n - 2)/n` to remove the bias of
/// inverting a sample mean of `n` squared Gaussian residuals.
pub fn end_to_end_sinrs(
    setup: &EndToEndSetup<'_>,
    ch: &ChannelSet,
    combiners: &[CombinerMatrix],
    seed: u64,
    trial: u32,
) -> Result<Vec<f64>> {
    let total = setup.p_tx.num_subcarriers();
    let interior = setup.interior()?;
    let users = ch.users();
    let data: Vec<SymbolGrid<f64>> = (0..users).map(|k| pam_grid(total, setup.symbols, seed, trial, k)).collect();
    let signals = data.par_iter().map(|d| synthesize(d, setup.p_tx)).collect::<Result<Vec<_>>>()?;
    let received = apply_channel_for_trial(&signals, ch, setup.noise_variance, seed, trial)?;
    let end = (setup.symbols as isize - 1) * (total / 2) as isize - setup.p_rx.first_lag();
    let grids = received
        .into_par_iter()
        .map(|y| analyze(&y.extended_to(end), setup.p_rx, setup.symbols))
        .collect::<Result<Vec<_>>>()?;
    let detected = combine_detect(combiners, &grids)?;

    let taps = ChannelTaps::new(ch);
    let scale = 1.0 / setup.table.tx_energy().sqrt();
    let n = interior.len() as f64;
    let mut out = vec![0.0; users * total];
    for (m, w) in combiners.iter().enumerate() {
        let terms = setup.table.subcarrier_terms(&taps, &w.values, m)?;
        for k in 0..users {
            let g = terms[k].desired * scale;
            let mse: f64 = interior
                .clone()
                .map(|t| {
                    let e = detected[k].get(m, t) - g * data[k].get(m, t);
                    e * e
                })
                .sum::<f64>()
                / n;
            out[k * total + m] = g * g / mse * (n - 2.0) / n;
        }
    }
    Ok(out)
}

/// Mean over users and subcarriers of [`end_to_end_sinrs`], in dB.
pub fn sinr_end_to_end_estimator(
    setup: &EndToEndSetup<'_>,
    ch: &ChannelSet,
    combiners: &[CombinerMatrix],
    seed: u64,
) -> Result<f64> {
    let s = end_to_end_sinrs(setup, ch, combiners, seed, 0)?;
    Ok(dsp::db(s.iter().sum::<f64>() / s.len() as f64))
}
