//! Prototype filters.
//!
//! A [`PrototypeFilter`] stores its taps together with the index of the tap
//! that plays the role of `l = 0`. All lag arithmetic in the crate (modem
//! basis functions, composite pulses, equivalent channels) is expressed in
//! lags relative to that centre, so filters of different lengths and
//! alignments compose without extra bookkeeping.

use crate::channel::PowerDelayProfile;
use crate::dsp::{self, C64, ZERO};
use crate::error::{Error, Result};

/// Default DTFT grid density: `grid = GRID_FACTOR * overlap * M`.
pub const GRID_FACTOR: usize = 16;
/// Smallest grid density accepted by [`design_modified`].
pub const MIN_GRID_FACTOR: usize = 8;
/// Default regularization factor of the spectral division.
pub const DEFAULT_REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFilter {
    taps: Vec<C64>,
    num_subcarriers: usize,
    overlap: usize,
    center: usize,
}

impl PrototypeFilter {
    pub fn new(taps: Vec<C64>, num_subcarriers: usize, overlap: usize, center: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidConfig("prototype filter has no taps".into()));
        }
        if num_subcarriers == 0 || overlap == 0 {
            return Err(Error::InvalidConfig("subcarrier count and overlap must be positive".into()));
        }
        if center >= taps.len() {
            return Err(Error::IndexOutOfRange { index: center, bound: taps.len() });
        }
        let e = dsp::energy(&taps);
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::InvalidConfig(format!("prototype filter energy must be finite and positive, got {e}")));
        }
        Ok(Self { taps, num_subcarriers, overlap, center })
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn center_index(&self) -> usize {
        self.center
    }

    /// Lag of the first tap.
    pub fn first_lag(&self) -> isize {
        -(self.center as isize)
    }

    /// Lag of the last tap.
    pub fn last_lag(&self) -> isize {
        (self.taps.len() - 1 - self.center) as isize
    }

    /// Tap at lag `l`, zero outside the support.
    pub fn at(&self, l: isize) -> C64 {
        let idx = l + self.center as isize;
        if idx < 0 || idx as usize >= self.taps.len() {
            ZERO
        } else {
            self.taps[idx as usize]
        }
    }

    pub fn energy(&self) -> f64 {
        dsp::energy(&self.taps)
    }

    /// Largest imaginary part relative to the peak magnitude.
    pub fn imag_ratio(&self) -> f64 {
        let peak = self.peak();
        self.taps.iter().map(|t| t.im.abs()).fold(0.0, f64::max) / peak
    }

    /// Largest `|p(l) - p(-l)|` over lags where both taps exist, relative to
    /// the peak magnitude.
    pub fn symmetry_error(&self) -> f64 {
        let peak = self.peak();
        let reach = self.center.min(self.taps.len() - 1 - self.center);
        (1..=reach).map(|j| (self.taps[self.center + j] - self.taps[self.center - j]).norm()).fold(0.0, f64::max) / peak
    }

    fn peak(&self) -> f64 {
        self.taps.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self { taps: self.taps.iter().map(|t| t * factor).collect(), ..self.clone() }
    }
}

/// Frequency-sampling coefficients `G_k` of the PHYDYAS design.
fn phydyas_coefficients(overlap: usize) -> Option<Vec<f64>> {
    let g1 = 0.971_960_f64;
    match overlap {
        2 => Some(vec![1.0, std::f64::consts::FRAC_1_SQRT_2]),
        3 => Some(vec![1.0, 0.911_438, 0.411_438]),
        4 => Some(vec![1.0, g1, std::f64::consts::FRAC_1_SQRT_2, (1.0 - g1 * g1).sqrt()]),
        _ => None,
    }
}

/// PHYDYAS prototype filter of length `overlap * M`, unit energy.
///
/// `p(l) = G0 + 2 sum_k (-1)^k G_k cos(2 pi k (l + 1) / (overlap M))` for
/// `l = 0 .. overlap*M - 1`. The response is symmetric about tap
/// `overlap*M/2 - 1`, which becomes the centre; the final tap is the
/// (numerically tiny) unpaired edge sample.
pub fn design_phydyas(num_subcarriers: usize, overlap: usize) -> Result<PrototypeFilter> {
    if num_subcarriers < 4 || !num_subcarriers.is_multiple_of(2) {
        return Err(Error::InvalidSubcarrierCount(num_subcarriers));
    }
    let coeffs = phydyas_coefficients(overlap).ok_or(Error::UnsupportedOverlap(overlap))?;
    let len = overlap * num_subcarriers;
    let mut taps: Vec<f64> = (0..len)
        .map(|l| {
            let arg = 2.0 * std::f64::consts::PI * (l + 1) as f64 / len as f64;
            coeffs[0]
                + 2.0
                    * coeffs
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(k, g)| {
                            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
                            sign * g * (k as f64 * arg).cos()
                        })
                        .sum::<f64>()
        })
        .collect();
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    PrototypeFilter::new(taps.into_iter().map(|t| C64::new(t, 0.0)).collect(), num_subcarriers, overlap, len / 2 - 1)
}

/// Unit-energy rectangular pulse of length `M` (the CP-free OFDM subcarrier
/// pulse), used as the sinc reference in spectral plots.
pub fn rectangular(num_subcarriers: usize) -> Result<PrototypeFilter> {
    let a = 1.0 / (num_subcarriers as f64).sqrt();
    PrototypeFilter::new(vec![C64::new(a, 0.0); num_subcarriers], num_subcarriers, 1, num_subcarriers / 2)
}

/// `p*(-l)`.
pub fn matched_filter(p: &PrototypeFilter) -> PrototypeFilter {
    let taps: Vec<C64> = p.taps.iter().rev().map(|t| t.conj()).collect();
    let center = p.taps.len() - 1 - p.center;
    PrototypeFilter { taps, center, ..p.clone() }
}

/// A complex sequence with a designated `l = 0` sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositePulse {
    pub values: Vec<C64>,
    pub zero_index: usize,
}

impl CompositePulse {
    pub fn at(&self, l: isize) -> C64 {
        let idx = l + self.zero_index as isize;
        if idx < 0 || idx as usize >= self.values.len() {
            ZERO
        } else {
            self.values[idx as usize]
        }
    }

    pub fn first_lag(&self) -> isize {
        -(self.zero_index as isize)
    }

    pub fn last_lag(&self) -> isize {
        (self.values.len() - 1 - self.zero_index) as isize
    }
}

/// Linear convolution `p_tx * [rho] * p_rx`, where `p_rx` is the receive
/// filter as applied (pass `matched_filter(p)` for the matched receiver).
pub fn composite_pulse(
    p_tx: &PrototypeFilter,
    p_rx: &PrototypeFilter,
    pdp: Option<&PowerDelayProfile>,
) -> Result<CompositePulse> {
    if p_tx.num_subcarriers != p_rx.num_subcarriers {
        return Err(Error::SubcarrierMismatch(p_tx.num_subcarriers, p_rx.num_subcarriers));
    }
    let mut values = dsp::convolve(&p_tx.taps, &p_rx.taps);
    if let Some(pdp) = pdp {
        let rho: Vec<C64> = pdp.powers().iter().map(|&r| C64::new(r, 0.0)).collect();
        values = dsp::convolve(&values, &rho);
    }
    Ok(CompositePulse { values, zero_index: p_tx.center + p_rx.center })
}

/// `max_{r != 0} |q(rM)| / |q(0)|`.
pub fn nyquist_error(q: &CompositePulse, num_subcarriers: usize) -> Result<f64> {
    let peak = q.at(0).norm();
    if peak == 0.0 {
        return Err(Error::ZeroPeak);
    }
    let m = num_subcarriers as isize;
    let lo = q.first_lag().div_euclid(m);
    let hi = q.last_lag().div_euclid(m);
    Ok((lo..=hi).filter(|&r| r != 0).map(|r| q.at(r * m).norm() / peak).fold(0.0, f64::max))
}

/// Samples of a DTFT on the uniform grid `omega_k = 2 pi k / grid_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpectrum {
    values: Vec<C64>,
}

impl FilterSpectrum {
    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Magnitude in dB relative to the largest bin.
    pub fn magnitude_db(&self) -> Vec<f64> {
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        self.values.iter().map(|v| 20.0 * (v.norm() / peak).max(1e-300).log10()).collect()
    }

    /// Inverse transform on the grid. Entry `i` is the sample at lag `i`
    /// modulo `grid_size`.
    pub fn inverse(&self) -> Vec<C64> {
        let mut buf = self.values.clone();
        dsp::ifft(&mut buf);
        let n = buf.len() as f64;
        buf.iter_mut().for_each(|v| *v /= n);
        buf
    }
}

/// Lag-indexed sequence laid out circularly on a grid of `grid` points.
fn circular(seq: impl Iterator<Item = (isize, C64)>, grid: usize) -> Vec<C64> {
    let mut buf = vec![ZERO; grid];
    for (l, v) in seq {
        buf[l.rem_euclid(grid as isize) as usize] += v;
    }
    buf
}

/// `P(omega) = sum_l p(l) e^{-j omega l}` on a grid, lags relative to the
/// filter centre.
pub fn spectrum(p: &PrototypeFilter, grid_size: usize) -> Result<FilterSpectrum> {
    if grid_size < p.len() {
        return Err(Error::GridTooSmall { grid: grid_size, required: p.len() });
    }
    let mut buf = circular(p.taps.iter().enumerate().map(|(i, &t)| (i as isize - p.center as isize, t)), grid_size);
    dsp::fft(&mut buf);
    Ok(FilterSpectrum { values: buf })
}

/// Output of [`design_modified_report`].
#[derive(Debug, Clone)]
pub struct ModifiedDesign {
    pub filter: PrototypeFilter,
    /// Fraction of the untruncated response energy kept by the window.
    pub captured_energy: f64,
}

/// PDP-compensated analysis prototype, `P~ = P / conj(rho_bar)`.
///
/// See [`design_modified_report`]; this returns only the filter.
pub fn design_modified(
    p: &PrototypeFilter,
    pdp: &PowerDelayProfile,
    grid_size: usize,
    regularization: f64,
) -> Result<PrototypeFilter> {
    design_modified_report(p, pdp, grid_size, regularization).map(|d| d.filter)
}

/// Builds the PDP-compensated analysis prototype.
///
/// Samples `P(omega)` and `rho_bar(omega)` on the grid, forms
/// `P rho_bar / (|rho_bar|^2 + eps)` with `eps = regularization * max|rho_bar|^2`,
/// inverse-transforms, and keeps the `len(p) + L - 1` consecutive (circular)
/// samples holding the most energy. The result is rescaled so that
/// `composite_pulse(p, matched_filter(p~), rho)` equals 1 at `l = 0`.
pub fn design_modified_report(
    p: &PrototypeFilter,
    pdp: &PowerDelayProfile,
    grid_size: usize,
    regularization: f64,
) -> Result<ModifiedDesign> {
    if !(regularization >= 0.0 && regularization.is_finite()) {
        return Err(Error::InvalidConfig(format!("regularization must be nonnegative, got {regularization}")));
    }
    let rho = pdp.powers();
    let window = p.len() + rho.len() - 1;
    let required = (MIN_GRID_FACTOR * p.overlap * p.num_subcarriers).max(window + rho.len());
    if grid_size < required {
        return Err(Error::GridTooSmall { grid: grid_size, required });
    }
    let big_p = spectrum(p, grid_size)?;
    let mut rho_bar = circular(rho.iter().enumerate().map(|(l, &r)| (l as isize, C64::new(r, 0.0))), grid_size);
    dsp::fft(&mut rho_bar);
    let max_mag2 = rho_bar.iter().map(|r| r.norm_sqr()).fold(0.0, f64::max);
    if max_mag2 == 0.0 {
        return Err(Error::InvalidPdp("all-zero power delay profile".into()));
    }
    if regularization == 0.0 {
        if let Some(bin) = rho_bar.iter().position(|r| r.norm() < 1e-12 * max_mag2.sqrt()) {
            return Err(Error::IllPosedDivision { bin });
        }
    }
    let eps = regularization * max_mag2;
    let modified = FilterSpectrum {
        values: big_p.values.iter().zip(&rho_bar).map(|(&pv, &r)| pv * r / (r.norm_sqr() + eps)).collect(),
    };
    let full = modified.inverse();

    // Circular window of `window` samples with the largest energy.
    let e: Vec<f64> = full.iter().map(|v| v.norm_sqr()).collect();
    let total: f64 = e.iter().sum();
    let mut run: f64 = e[..window].iter().sum();
    let (mut best_start, mut best) = (0usize, run);
    for start in 1..grid_size {
        run += e[(start + window - 1) % grid_size] - e[start - 1];
        if run > best {
            best = run;
            best_start = start;
        }
    }
    let captured: f64 = (0..window).map(|j| e[(best_start + j) % grid_size]).sum();
    let center = (grid_size - best_start) % grid_size;
    if center >= window {
        return Err(Error::InvalidConfig("modified filter window does not contain lag 0".into()));
    }
    let taps: Vec<C64> = (0..window).map(|j| full[(best_start + j) % grid_size]).collect();
    let raw = PrototypeFilter::new(taps, p.num_subcarriers, p.overlap, center)?;

    // Desired composite tap q(0) = sum_a sum_b p(a) rho(b) conj(p~(a + b)).
    let mut q0 = ZERO;
    for a in p.first_lag()..=p.last_lag() {
        let pa = p.at(a);
        for (b, &r) in rho.iter().enumerate() {
            q0 += pa * r * raw.at(a + b as isize).conj();
        }
    }
    if q0.norm() == 0.0 {
        return Err(Error::ZeroPeak);
    }
    Ok(ModifiedDesign { filter: raw.scaled(1.0 / q0.conj()), captured_energy: captured / total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::exponential_pdp;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn brute_autocorr_at(p: &PrototypeFilter, lag: isize) -> C64 {
        // sum_l p(l) conj(p(l - lag)), written independently of `convolve`.
        (p.first_lag()..=p.last_lag()).map(|l| p.at(l) * p.at(l - lag).conj()).sum()
    }

    #[test]
    fn phydyas_256_shape() {
        let p = design_phydyas(256, 4).unwrap();
        assert_eq!(p.len(), 1024);
        assert!((p.energy() - 1.0).abs() < 1e-12);
        assert!(p.imag_ratio() == 0.0);
        assert!(p.symmetry_error() < 1e-12);
        assert_eq!(p.center_index(), 511);
        // unpaired edge tap is the frequency-sampling zero
        assert!(p.taps()[1023].norm() < 1e-6 * p.taps()[511].norm());
    }

    #[test]
    fn phydyas_m4_nyquist_by_brute_force() {
        let p = design_phydyas(4, 4).unwrap();
        let q0 = brute_autocorr_at(&p, 0).norm();
        for lag in [-8isize, -4, 4, 8] {
            let v = brute_autocorr_at(&p, lag).norm();
            assert!(v <= 1e-3 * q0, "lag {lag}: {v}");
        }
    }

    #[test]
    fn phydyas_rejects_bad_parameters() {
        assert!(matches!(design_phydyas(5, 4), Err(Error::InvalidSubcarrierCount(5))));
        assert!(matches!(design_phydyas(2, 4), Err(Error::InvalidSubcarrierCount(2))));
        assert!(matches!(design_phydyas(64, 5), Err(Error::UnsupportedOverlap(5))));
        for k in [2, 3, 4] {
            assert!(design_phydyas(16, k).is_ok());
        }
    }

    #[test]
    fn matched_filter_definition() {
        let p = PrototypeFilter::new(vec![c(1.0, 0.0), c(0.0, 1.0)], 4, 1, 0).unwrap();
        let q = matched_filter(&p);
        assert_eq!(q.taps(), &[c(0.0, -1.0), c(1.0, 0.0)]);
        assert_eq!(q.center_index(), 1);
        assert_eq!(q.at(0), c(1.0, 0.0));
        assert_eq!(q.at(-1), c(0.0, -1.0));
        assert!((q.energy() - p.energy()).abs() < 1e-15);
    }

    #[test]
    fn matched_phydyas_is_itself_by_lag() {
        let p = design_phydyas(64, 4).unwrap();
        let q = matched_filter(&p);
        let lo = p.first_lag().min(q.first_lag());
        let hi = p.last_lag().max(q.last_lag());
        let worst = (lo..=hi).map(|l| (p.at(l) - q.at(l)).norm()).fold(0.0, f64::max);
        // only the unpaired edge tap differs
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn composite_peak_and_delta_pdp_identity() {
        let p = design_phydyas(64, 4).unwrap();
        let q = composite_pulse(&p, &matched_filter(&p), None).unwrap();
        assert!((q.at(0) - c(1.0, 0.0)).norm() < 1e-12);
        let delta = PowerDelayProfile::new(vec![1.0]).unwrap();
        let qd = composite_pulse(&p, &matched_filter(&p), Some(&delta)).unwrap();
        assert_eq!(q, qd);
    }

    #[test]
    fn composite_mismatched_m() {
        let p = design_phydyas(64, 4).unwrap();
        let r = design_phydyas(32, 4).unwrap();
        assert!(matches!(composite_pulse(&p, &r, None), Err(Error::SubcarrierMismatch(64, 32))));
    }

    #[test]
    fn composite_with_pdp_breaks_nyquist() {
        let p = design_phydyas(64, 4).unwrap();
        let pdp = exponential_pdp(0.1, 10).unwrap();
        let q = composite_pulse(&p, &matched_filter(&p), Some(&pdp)).unwrap();
        // brute force sample of the triple convolution at l = 64
        let mut v = ZERO;
        for (b, &r) in pdp.powers().iter().enumerate() {
            v += r * brute_autocorr_at(&p, 64 - b as isize);
        }
        assert!((q.at(64) - v).norm() < 1e-12);
        assert!(nyquist_error(&q, 64).unwrap() > 1e-3);
    }

    #[test]
    fn nyquist_error_trivial_cases() {
        let delta = CompositePulse { values: vec![c(1.0, 0.0)], zero_index: 0 };
        assert_eq!(nyquist_error(&delta, 8).unwrap(), 0.0);
        let mut values = vec![ZERO; 17];
        values[8] = c(1.0, 0.0);
        values[16] = c(0.1, 0.0);
        let q = CompositePulse { values, zero_index: 8 };
        assert!((nyquist_error(&q, 8).unwrap() - 0.1).abs() < 1e-15);
        let z = CompositePulse { values: vec![ZERO, c(1.0, 0.0)], zero_index: 0 };
        assert!(matches!(nyquist_error(&z, 1), Err(Error::ZeroPeak)));
    }

    #[test]
    fn spectrum_of_delta_and_parseval() {
        let d = PrototypeFilter::new(vec![c(1.0, 0.0)], 4, 1, 0).unwrap();
        let s = spectrum(&d, 16).unwrap();
        assert!(s.values().iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));

        let p = design_phydyas(64, 4).unwrap();
        let s = spectrum(&p, 2048).unwrap();
        let mean: f64 = s.values().iter().map(|v| v.norm_sqr()).sum::<f64>() / 2048.0;
        assert!((mean - p.energy()).abs() < 1e-10 * p.energy());
        assert!(matches!(spectrum(&p, 100), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn spectrum_inverse_round_trip() {
        let p = design_phydyas(16, 4).unwrap();
        let back = spectrum(&p, 2 * p.len()).unwrap().inverse();
        for l in p.first_lag()..=p.last_lag() {
            let v = back[l.rem_euclid(back.len() as isize) as usize];
            assert!((v - p.at(l)).norm() < 1e-10);
        }
    }

    #[test]
    fn phydyas_first_sidelobe_below_35db() {
        let m = 256;
        let p = design_phydyas(m, 4).unwrap();
        let grid = 16 * 4 * m;
        let db = spectrum(&p, grid).unwrap().magnitude_db();
        // walk from DC to the first local minimum, then take the max beyond it
        // within the first few subcarrier spacings
        let mut k = 1;
        while db[k + 1] < db[k] {
            k += 1;
        }
        let sidelobe = db[k..(4 * grid / m)].iter().cloned().fold(f64::MIN, f64::max);
        assert!(sidelobe < -35.0, "{sidelobe}");
    }

    #[test]
    fn modified_with_delta_pdp_is_identity() {
        let p = design_phydyas(64, 4).unwrap();
        let delta = PowerDelayProfile::new(vec![1.0]).unwrap();
        let pt = design_modified(&p, &delta, GRID_FACTOR * 4 * 64, DEFAULT_REGULARIZATION).unwrap();
        assert_eq!(pt.len(), p.len());
        assert_eq!(pt.center_index(), p.center_index());
        let worst = p.taps().iter().zip(pt.taps()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn modified_restores_nyquist_and_captures_energy() {
        let m = 256;
        let p = design_phydyas(m, 4).unwrap();
        let pdp = exponential_pdp(0.1, 40).unwrap();
        let d = design_modified_report(&p, &pdp, GRID_FACTOR * 4 * m, DEFAULT_REGULARIZATION).unwrap();
        assert!(d.captured_energy >= 1.0 - 1e-8, "{}", d.captured_energy);
        assert_eq!(d.filter.len(), 4 * m + 39);
        let q = composite_pulse(&p, &matched_filter(&d.filter), Some(&pdp)).unwrap();
        assert!((q.at(0) - c(1.0, 0.0)).norm() < 1e-12);
        let modified = nyquist_error(&q, m).unwrap();
        let original = nyquist_error(&composite_pulse(&p, &matched_filter(&p), Some(&pdp)).unwrap(), m).unwrap();
        assert!(modified <= 1e-3, "{modified}");
        assert!(original >= 100.0 * modified, "{original} vs {modified}");
    }

    #[test]
    fn modified_errors() {
        let p = design_phydyas(16, 4).unwrap();
        let pdp = exponential_pdp(0.1, 4).unwrap();
        assert!(matches!(design_modified(&p, &pdp, 64, 0.0), Err(Error::GridTooSmall { .. })));
        // [0.5, 0.5] has an exact null at omega = pi
        let notch = PowerDelayProfile::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(design_modified(&p, &notch, 1024, 0.0), Err(Error::IllPosedDivision { .. })));
        assert!(design_modified(&p, &notch, 1024, 1e-3).is_ok());
    }
}
