//! FBMC/OQAM synthesis and analysis filter banks.
//!
//! Basis functions are `a_{m,n}(l) = p(l - nM/2) e^{j 2 pi m (l - nM/2) / M} j^{m+n}`,
//! with the subcarrier modulation anchored to the shifted argument so that
//! the transmit/receive chain is time invariant at the symbol rate. Both
//! banks are realized per symbol with an M-point inverse FFT: the filter
//! taps are folded modulo M, which is exact for any filter length.

use std::f64::consts::SQRT_2;

use crate::dsp::{self, C64, ZERO};
use crate::error::{Error, Result};
use crate::prototype::PrototypeFilter;

/// Gain applied by [`analyze`]; undoes the `1/sqrt(2 E_p)` power
/// normalization of [`synthesize`] for unit-energy prototypes.
pub const ANALYSIS_GAIN: f64 = SQRT_2;

/// Complex baseband samples; `samples[0]` sits at sample index `start`.
/// Samples outside the stored range are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<C64>,
    start: isize,
}

impl TimeSignal {
    pub fn new(samples: Vec<C64>, start: isize) -> Self {
        Self { samples, start }
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn start(&self) -> isize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the last stored sample.
    pub fn end(&self) -> isize {
        self.start + self.samples.len() as isize - 1
    }

    pub fn at(&self, l: isize) -> C64 {
        let idx = l - self.start;
        if idx < 0 || idx as usize >= self.samples.len() {
            ZERO
        } else {
            self.samples[idx as usize]
        }
    }

    /// Zero-extends the signal so that it ends at sample `end`.
    pub fn extended_to(mut self, end: isize) -> Self {
        if end > self.end() {
            let extra = (end - self.end()) as usize;
            self.samples.extend(std::iter::repeat_n(ZERO, extra));
        }
        self
    }

    pub fn power(&self) -> f64 {
        dsp::energy(&self.samples) / self.samples.len() as f64
    }
}

/// M x T array indexed `(subcarrier, symbol)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid<T> {
    subcarriers: usize,
    symbols: usize,
    values: Vec<T>,
}

impl<T: Copy + Default> SymbolGrid<T> {
    pub fn zeros(subcarriers: usize, symbols: usize) -> Self {
        Self { subcarriers, symbols, values: vec![T::default(); subcarriers * symbols] }
    }

    pub fn from_fn(subcarriers: usize, symbols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(subcarriers * symbols);
        for m in 0..subcarriers {
            for n in 0..symbols {
                values.push(f(m, n));
            }
        }
        Self { subcarriers, symbols, values }
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn get(&self, m: usize, n: usize) -> T {
        self.values[m * self.symbols + n]
    }

    pub fn set(&mut self, m: usize, n: usize, v: T) {
        self.values[m * self.symbols + n] = v;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

impl SymbolGrid<C64> {
    /// Real part of every entry.
    pub fn real_part(&self) -> SymbolGrid<f64> {
        SymbolGrid {
            subcarriers: self.subcarriers,
            symbols: self.symbols,
            values: self.values.iter().map(|v| v.re).collect(),
        }
    }

    /// Converts a grid that should carry real PAM data, rejecting any entry
    /// with an imaginary part above `tol`.
    pub fn into_real(self, tol: f64) -> Result<SymbolGrid<f64>> {
        let worst = self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        if worst > tol {
            return Err(Error::NotReal(worst));
        }
        Ok(self.real_part())
    }
}

/// `e^{j theta_{m,n}}` with `theta = (pi/2)(m + n)`.
pub fn oqam_phase(m: i64, n: i64) -> C64 {
    dsp::j_pow(m + n)
}

fn half_symbol(p: &PrototypeFilter) -> Result<usize> {
    let m = p.num_subcarriers();
    if !m.is_multiple_of(2) {
        return Err(Error::InvalidSubcarrierCount(m));
    }
    Ok(m / 2)
}

/// `a_{m,n}(l)` for prototype `p`.
pub fn basis_function(m: usize, n: isize, p: &PrototypeFilter) -> Result<TimeSignal> {
    let total = p.num_subcarriers();
    if m >= total {
        return Err(Error::IndexOutOfRange { index: m, bound: total });
    }
    let shift = n * half_symbol(p)? as isize;
    let phase = oqam_phase(m as i64, n as i64);
    let samples =
        (p.first_lag()..=p.last_lag()).map(|a| p.at(a) * dsp::twiddle(m as i64 * a as i64, total) * phase).collect();
    Ok(TimeSignal::new(samples, shift + p.first_lag()))
}

/// `Re{ sum_l a(l) conj(b(l)) }` over the common support.
pub fn real_inner_product(a: &TimeSignal, b: &TimeSignal) -> f64 {
    let lo = a.start().max(b.start());
    let hi = a.end().min(b.end());
    (lo..=hi).map(|l| (a.at(l) * b.at(l).conj()).re).sum()
}

/// Power normalization `s = sum_m E_p / (M/2) = 2 E_p`: symbols of unit
/// power scaled by `1/sqrt(s)` give `E{|x(l)|^2} = 1`.
pub fn power_normalization(p: &PrototypeFilter) -> f64 {
    2.0 * p.energy()
}

/// `x(l) = s^{-1/2} sum_n sum_m d_{m,n} a_{m,n}(l)` for `n = 0 .. T-1`.
///
/// The output starts at the first lag of `p` and holds
/// `(T - 1) M/2 + len(p)` samples.
pub fn synthesize(d: &SymbolGrid<f64>, p: &PrototypeFilter) -> Result<TimeSignal> {
    let total = p.num_subcarriers();
    if d.subcarriers() != total {
        return Err(Error::SubcarrierMismatch(d.subcarriers(), total));
    }
    if d.symbols() == 0 {
        return Err(Error::DimensionMismatch("data grid has no symbols".into()));
    }
    let half = half_symbol(p)?;
    let scale = 1.0 / power_normalization(p).sqrt();
    let len = (d.symbols() - 1) * half + p.len();
    let mut x = vec![ZERO; len];
    let mut buf = vec![ZERO; total];
    for n in 0..d.symbols() {
        let mut active = false;
        for (m, slot) in buf.iter_mut().enumerate() {
            let v = d.get(m, n);
            active |= v != 0.0;
            *slot = oqam_phase(m as i64, n as i64) * v * scale;
        }
        if !active {
            continue;
        }
        dsp::ifft(&mut buf);
        // tap i sits at lag i - c and lands on sample n*half + (i - c), which
        // is output index n*half + i
        for (i, &tap) in p.taps().iter().enumerate() {
            let lag = i as isize - p.center_index() as isize;
            x[n * half + i] += tap * buf[lag.rem_euclid(total as isize) as usize];
        }
    }
    Ok(TimeSignal::new(x, p.first_lag()))
}

/// Matched filtering with `p_rx` at each subcarrier, sampling at
/// `l = nM/2`, OQAM phase compensation and the [`ANALYSIS_GAIN`]:
///
/// `y_{m,n} = sqrt(2) j^{-(m+n)} sum_k y(nM/2 - k) p_rx(k) e^{j 2 pi m k / M}`.
///
/// The signal is taken as zero before its first sample; it must extend at
/// least to the last sample read by symbol `T - 1`.
pub fn analyze(y: &TimeSignal, p_rx: &PrototypeFilter, symbols: usize) -> Result<SymbolGrid<C64>> {
    let total = p_rx.num_subcarriers();
    let half = half_symbol(p_rx)? as isize;
    if symbols == 0 {
        return Err(Error::DimensionMismatch("requested zero symbols".into()));
    }
    let needed = (symbols as isize - 1) * half - p_rx.first_lag();
    if y.end() < needed {
        return Err(Error::SignalTooShort { symbols, needed, available: y.end() });
    }
    let mut grid = SymbolGrid::zeros(total, symbols);
    let mut buf = vec![ZERO; total];
    for n in 0..symbols {
        buf.iter_mut().for_each(|b| *b = ZERO);
        let at = n as isize * half;
        for (i, &tap) in p_rx.taps().iter().enumerate() {
            let k = i as isize - p_rx.center_index() as isize;
            let v = y.at(at - k);
            if v != ZERO {
                buf[k.rem_euclid(total as isize) as usize] += v * tap;
            }
        }
        dsp::ifft(&mut buf);
        for (m, &v) in buf.iter().enumerate() {
            grid.set(m, n, v * oqam_phase(m as i64, n as i64).conj() * ANALYSIS_GAIN);
        }
    }
    Ok(grid)
}

/// `H_{mm',nn'} = h_{mm'}(n - n') e^{j(theta_{m',n'} - theta_{m,n})}` with
/// `h_{mm'}(l) = (p_{m'} * h * p_{rx,m})(l M/2)`, evaluated by direct
/// summation. `h` holds the channel taps at delays `0, 1, ...`; `p_rx` is the
/// receive filter as applied.
pub fn interference_coefficient(
    p_tx: &PrototypeFilter,
    p_rx: &PrototypeFilter,
    h: &[C64],
    m: usize,
    m_prime: usize,
    delta_n: isize,
) -> Result<C64> {
    let total = p_tx.num_subcarriers();
    if p_rx.num_subcarriers() != total {
        return Err(Error::SubcarrierMismatch(total, p_rx.num_subcarriers()));
    }
    for idx in [m, m_prime] {
        if idx >= total {
            return Err(Error::IndexOutOfRange { index: idx, bound: total });
        }
    }
    let tau = delta_n * half_symbol(p_tx)? as isize;
    let mut acc = ZERO;
    for a in p_tx.first_lag()..=p_tx.last_lag() {
        let tx = p_tx.at(a) * dsp::twiddle(m_prime as i64 * a as i64, total);
        for (b, &hb) in h.iter().enumerate() {
            let k = tau - a - b as isize;
            let rx = p_rx.at(k);
            if rx != ZERO {
                acc += tx * hb * rx * dsp::twiddle(m as i64 * k as i64, total);
            }
        }
    }
    Ok(acc * dsp::j_pow(m_prime as i64 - m as i64 - delta_n as i64))
}
