//! Multi-antenna, multi-user frequency-selective Rayleigh channels.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dsp::{self, C64, ZERO};
use crate::error::{Error, Result};
use crate::modem::TimeSignal;
use crate::rng::{self, Domain};

/// Tap powers `rho(l)` at integer sample delays, normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    powers: Vec<f64>,
}

impl PowerDelayProfile {
    /// Normalizes `powers` to unit sum.
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if powers.is_empty() {
            return Err(Error::InvalidPdp("empty profile".into()));
        }
        if let Some(bad) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidPdp(format!("tap power {bad} is not a nonnegative number")));
        }
        let total: f64 = powers.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidPdp("all-zero profile".into()));
        }
        Ok(Self { powers: powers.into_iter().map(|p| p / total).collect() })
    }

    pub fn delta() -> Self {
        Self { powers: vec![1.0] }
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn max_power(&self) -> f64 {
        self.powers.iter().cloned().fold(0.0, f64::max)
    }
}

/// `rho(l) = e^{-alpha l} / sum_k e^{-alpha k}`, `l = 0 .. L-1`.
pub fn exponential_pdp(alpha: f64, num_taps: usize) -> Result<PowerDelayProfile> {
    if num_taps == 0 {
        return Err(Error::InvalidPdp("number of taps must be positive".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidPdp(format!("decay rate must be positive, got {alpha}")));
    }
    PowerDelayProfile::new((0..num_taps).map(|l| (-alpha * l as f64).exp()).collect())
}

/// Channel impulse responses `h_{i,k}(l)` for N antennas and K users.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    taps: Vec<C64>,
    antennas: usize,
    users: usize,
    len: usize,
    seed: Option<u64>,
}

impl ChannelSet {
    /// Wraps a deterministic tap tensor laid out as `[(i * K + k) * L + l]`.
    pub fn from_taps(antennas: usize, users: usize, len: usize, taps: Vec<C64>) -> Result<Self> {
        if antennas == 0 || users == 0 || len == 0 {
            return Err(Error::DimensionMismatch("channel dimensions must be positive".into()));
        }
        if taps.len() != antennas * users * len {
            return Err(Error::DimensionMismatch(format!(
                "{} taps for shape ({antennas}, {users}, {len})",
                taps.len()
            )));
        }
        Ok(Self { taps, antennas, users, len, seed: None })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Channel memory L in taps.
    pub fn taps_per_link(&self) -> usize {
        self.len
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn raw(&self) -> &[C64] {
        &self.taps
    }

    /// `h_{i,k}(.)`.
    pub fn link(&self, antenna: usize, user: usize) -> &[C64] {
        let start = (antenna * self.users + user) * self.len;
        &self.taps[start..start + self.len]
    }

    /// First `n` antennas of this set.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.antennas {
            return Err(Error::DimensionMismatch(format!("cannot keep {n} of {} antennas", self.antennas)));
        }
        Ok(Self { taps: self.taps[..n * self.users * self.len].to_vec(), antennas: n, ..self.clone() })
    }

    /// `H_m` for every subcarrier, via one length-M FFT per link.
    pub fn frequency_responses(&self, num_subcarriers: usize) -> Vec<SubcarrierResponse> {
        let m_total = num_subcarriers;
        let spectra: Vec<Vec<C64>> = (0..self.antennas * self.users)
            .map(|link| {
                let mut buf = vec![ZERO; m_total];
                for (l, &h) in self.taps[link * self.len..(link + 1) * self.len].iter().enumerate() {
                    buf[l % m_total] += h;
                }
                dsp::fft(&mut buf);
                buf
            })
            .collect();
        (0..m_total)
            .map(|m| SubcarrierResponse {
                subcarrier: m,
                values: DMatrix::from_fn(self.antennas, self.users, |i, k| spectra[i * self.users + k][m]),
            })
            .collect()
    }
}

/// i.i.d. `CN(0, rho(l))` taps, deterministic in `seed`.
pub fn draw_channels(pdp: &PowerDelayProfile, antennas: usize, users: usize, seed: u64) -> Result<ChannelSet> {
    draw_channels_for_trial(pdp, antennas, users, seed, 0)
}

/// As [`draw_channels`], from the substream of Monte Carlo trial `trial`.
///
/// Antenna `i` draws its `K * L` taps from its own stream, so the channel of
/// N antennas is a prefix of the channel of any larger array with the same
/// seed and trial.
pub fn draw_channels_for_trial(
    pdp: &PowerDelayProfile,
    antennas: usize,
    users: usize,
    seed: u64,
    trial: u32,
) -> Result<ChannelSet> {
    if antennas == 0 || users == 0 {
        return Err(Error::DimensionMismatch("need at least one antenna and one user".into()));
    }
    let len = pdp.len();
    let taps: Vec<C64> = (0..antennas)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = rng::substream(seed, Domain::Channel, trial, i as u32);
            let mut row = Vec::with_capacity(users * len);
            for _ in 0..users {
                for &power in pdp.powers() {
                    row.push(rng::complex_gaussian(&mut rng, power));
                }
            }
            row
        })
        .collect();
    Ok(ChannelSet { taps, antennas, users, len, seed: Some(seed) })
}

/// Channel matrix `H_m` (N x K) at one subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierResponse {
    pub subcarrier: usize,
    pub values: DMatrix<C64>,
}

/// `H_m^{i,k} = sum_l h_{i,k}(l) e^{-j 2 pi m l / M}`.
pub fn frequency_response(ch: &ChannelSet, m: usize, num_subcarriers: usize) -> Result<SubcarrierResponse> {
    if m >= num_subcarriers {
        return Err(Error::IndexOutOfRange { index: m, bound: num_subcarriers });
    }
    let values = DMatrix::from_fn(ch.antennas, ch.users, |i, k| {
        ch.link(i, k).iter().enumerate().map(|(l, &h)| h * dsp::twiddle(-((m * l) as i64), num_subcarriers)).sum()
    });
    Ok(SubcarrierResponse { subcarrier: m, values })
}

/// `y_i = sum_k h_{i,k} * x_k + nu_i`, noise `CN(0, noise_variance)`.
pub fn apply_channel(
    signals: &[TimeSignal],
    ch: &ChannelSet,
    noise_variance: f64,
    seed: u64,
) -> Result<Vec<TimeSignal>> {
    apply_channel_for_trial(signals, ch, noise_variance, seed, 0)
}

/// As [`apply_channel`], with antenna `i` drawing noise from the
/// `(seed, trial, i)` substream.
pub fn apply_channel_for_trial(
    signals: &[TimeSignal],
    ch: &ChannelSet,
    noise_variance: f64,
    seed: u64,
    trial: u32,
) -> Result<Vec<TimeSignal>> {
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidNoiseVariance(noise_variance));
    }
    if signals.len() != ch.users {
        return Err(Error::DimensionMismatch(format!("{} signals for {} users", signals.len(), ch.users)));
    }
    let first = signals.first().ok_or_else(|| Error::DimensionMismatch("no signals".into()))?;
    if signals.iter().any(|s| s.len() != first.len() || s.start() != first.start()) {
        return Err(Error::DimensionMismatch("user signals must share length and start".into()));
    }
    let out_len = first.len() + ch.len - 1;
    Ok((0..ch.antennas)
        .into_par_iter()
        .map(|i| {
            let mut y = vec![ZERO; out_len];
            for (k, x) in signals.iter().enumerate() {
                for (l, &h) in ch.link(i, k).iter().enumerate() {
                    if h == ZERO {
                        continue;
                    }
                    for (n, &v) in x.samples().iter().enumerate() {
                        y[n + l] += h * v;
                    }
                }
            }
            if noise_variance > 0.0 {
                let mut rng = rng::substream(seed, Domain::Noise, trial, i as u32);
                for v in &mut y {
                    *v += rng::complex_gaussian(&mut rng, noise_variance);
                }
            }
            TimeSignal::new(y, first.start())
        })
        .collect())
}

/// `rho_hat(l) = (1/NK) sum_{i,k} |h_{i,k}(l)|^2`, renormalized.
pub fn estimate_pdp(ch: &ChannelSet) -> Result<PowerDelayProfile> {
    let mut acc = vec![0.0; ch.len];
    for link in ch.taps.chunks(ch.len) {
        for (a, h) in acc.iter_mut().zip(link) {
            *a += h.norm_sqr();
        }
    }
    PowerDelayProfile::new(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_closed_form() {
        let pdp = exponential_pdp(0.1, 40).unwrap();
        let a: f64 = 0.1;
        let norm = (1.0 - (-a).exp()) / (1.0 - (-a * 40.0).exp());
        for (l, &r) in pdp.powers().iter().enumerate() {
            assert!((r - (-a * l as f64).exp() * norm).abs() < 1e-15);
        }
        assert!((pdp.powers()[0] - 0.096938).abs() < 5e-6);
        assert!((pdp.powers()[39] - 0.0019622).abs() < 5e-7);
        assert!((pdp.powers().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_edge_cases() {
        assert_eq!(exponential_pdp(0.7, 1).unwrap().powers(), &[1.0]);
        let steep = exponential_pdp(50.0, 2).unwrap();
        assert!((steep.powers()[0] - 1.0).abs() < 1e-20 && steep.powers()[1] < 1e-20);
        assert!(exponential_pdp(0.1, 0).is_err());
        assert!(exponential_pdp(0.0, 3).is_err());
    }

    #[test]
    fn pdp_validation() {
        assert!(PowerDelayProfile::new(vec![]).is_err());
        assert!(PowerDelayProfile::new(vec![0.0, 0.0]).is_err());
        assert!(PowerDelayProfile::new(vec![1.0, -0.1]).is_err());
        assert!(PowerDelayProfile::new(vec![1.0, f64::NAN]).is_err());
        let p = PowerDelayProfile::new(vec![2.0, 6.0]).unwrap();
        assert_eq!(p.powers(), &[0.25, 0.75]);
    }

    #[test]
    fn draw_is_deterministic_and_prefix_consistent() {
        let pdp = exponential_pdp(0.1, 5).unwrap();
        let a = draw_channels(&pdp, 6, 3, 11).unwrap();
        let b = draw_channels(&pdp, 6, 3, 11).unwrap();
        assert_eq!(a, b);
        let small = draw_channels(&pdp, 4, 3, 11).unwrap();
        assert_eq!(a.truncated(4).unwrap().raw(), small.raw());
        let c = draw_channels(&pdp, 6, 3, 12).unwrap();
        assert_ne!(a.raw(), c.raw());
    }

    #[test]
    fn tap_statistics() {
        let pdp = exponential_pdp(0.3, 4).unwrap();
        let ch = draw_channels(&pdp, 100, 100, 5).unwrap();
        let n = (100 * 100) as f64;
        for l in 0..4 {
            let var: f64 = (0..100)
                .flat_map(|i| (0..100).map(move |k| (i, k)))
                .map(|(i, k)| ch.link(i, k)[l].norm_sqr())
                .sum::<f64>()
                / n;
            assert!((var / pdp.powers()[l] - 1.0).abs() < 0.05, "tap {l}: {var}");
        }
        // correlation between two distinct links, normalized
        let mut corr = ZERO;
        let (mut ea, mut eb) = (0.0, 0.0);
        for i in 0..100 {
            for k in 0..50 {
                let a = ch.link(i, 2 * k)[0];
                let b = ch.link(i, 2 * k + 1)[0];
                corr += a * b.conj();
                ea += a.norm_sqr();
                eb += b.norm_sqr();
            }
        }
        assert!(corr.norm() / (ea * eb).sqrt() <= 0.05);
    }

    #[test]
    fn frequency_response_cases() {
        let delta = ChannelSet::from_taps(1, 1, 1, vec![C64::new(1.0, 0.0)]).unwrap();
        for m in 0..8 {
            let h = frequency_response(&delta, m, 8).unwrap();
            assert!((h.values[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let delay = ChannelSet::from_taps(1, 1, 2, vec![ZERO, C64::new(1.0, 0.0)]).unwrap();
        let all = delay.frequency_responses(8);
        for m in 0..8 {
            let expected = dsp::twiddle(-(m as i64), 8);
            let h = frequency_response(&delay, m, 8).unwrap();
            assert!((h.values[(0, 0)] - expected).norm() < 1e-15);
            assert!((all[m].values[(0, 0)] - expected).norm() < 1e-12);
        }
        assert!(frequency_response(&delay, 8, 8).is_err());
    }

    #[test]
    fn frequency_response_parseval_and_mean_power() {
        let pdp = exponential_pdp(0.1, 20).unwrap();
        let ch = draw_channels(&pdp, 100, 100, 9).unwrap();
        let m_total = 32;
        let hs = ch.frequency_responses(m_total);
        for (i, k) in [(0, 0), (3, 7), (99, 99)] {
            let lhs: f64 = hs.iter().map(|h| h.values[(i, k)].norm_sqr()).sum::<f64>() / m_total as f64;
            let rhs = dsp::energy(ch.link(i, k));
            assert!((lhs - rhs).abs() < 1e-10 * rhs.max(1.0));
        }
        let mean: f64 = hs[5].values.iter().map(|v| v.norm_sqr()).sum::<f64>() / 1e4;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn apply_channel_identity_and_noise() {
        let x = TimeSignal::new((0..16).map(|i| C64::new(i as f64, -1.0)).collect(), -3);
        let ch = ChannelSet::from_taps(3, 1, 1, vec![C64::new(1.0, 0.0); 3]).unwrap();
        let ys = apply_channel(std::slice::from_ref(&x), &ch, 0.0, 1).unwrap();
        assert!(ys.iter().all(|y| *y == x));

        let zero = TimeSignal::new(vec![ZERO; 100_000], 0);
        let ch = ChannelSet::from_taps(1, 1, 1, vec![C64::new(1.0, 0.0)]).unwrap();
        let y = &apply_channel(&[zero], &ch, 0.1, 4).unwrap()[0];
        let p = dsp::energy(y.samples()) / y.len() as f64;
        assert!((p / 0.1 - 1.0).abs() < 0.05, "{p}");
    }

    #[test]
    fn apply_channel_is_linear_with_shared_noise() {
        let pdp = exponential_pdp(0.2, 3).unwrap();
        let ch = draw_channels(&pdp, 2, 1, 3).unwrap();
        let x1 = TimeSignal::new((0..20).map(|i| C64::new((i as f64).sin(), 0.5)).collect(), 0);
        let x2 = TimeSignal::new((0..20).map(|i| C64::new(1.0, (i as f64).cos())).collect(), 0);
        let sum = TimeSignal::new(x1.samples().iter().zip(x2.samples()).map(|(a, b)| a + b).collect(), 0);
        let zero = TimeSignal::new(vec![ZERO; 20], 0);
        let run = |x: &TimeSignal| apply_channel(std::slice::from_ref(x), &ch, 0.3, 8).unwrap();
        let (ys, y1, y2, y0) = (run(&sum), run(&x1), run(&x2), run(&zero));
        for i in 0..2 {
            for n in 0..ys[i].len() {
                let lhs = ys[i].samples()[n] + y0[i].samples()[n];
                let rhs = y1[i].samples()[n] + y2[i].samples()[n];
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_channel_errors() {
        let ch = ChannelSet::from_taps(1, 2, 1, vec![C64::new(1.0, 0.0); 2]).unwrap();
        let a = TimeSignal::new(vec![ZERO; 4], 0);
        let b = TimeSignal::new(vec![ZERO; 5], 0);
        assert!(apply_channel(&[a.clone(), b], &ch, 0.0, 0).is_err());
        assert!(apply_channel(&[a.clone(), a.clone()], &ch, -1.0, 0).is_err());
        assert!(apply_channel(&[a], &ch, 0.0, 0).is_err());
    }

    #[test]
    fn pdp_estimation() {
        let pdp = exponential_pdp(0.1, 40).unwrap();
        let ch = draw_channels(&pdp, 400, 10, 21).unwrap();
        let est = estimate_pdp(&ch).unwrap();
        let err = est.powers().iter().zip(pdp.powers()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 0.05 * pdp.max_power(), "{err}");
        assert!((est.powers().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let single = ChannelSet::from_taps(1, 1, 1, vec![C64::new(0.3, -0.7)]).unwrap();
        assert_eq!(estimate_pdp(&single).unwrap().powers(), &[1.0]);

        let delta = draw_channels(&PowerDelayProfile::new(vec![1.0, 0.0, 0.0]).unwrap(), 5, 2, 1).unwrap();
        let est = estimate_pdp(&delta).unwrap();
        assert!((est.powers()[0] - 1.0).abs() < 1e-12);
        assert_eq!(&est.powers()[1..], &[0.0, 0.0]);
    }
}
