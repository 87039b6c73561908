//! Coefficient-domain SINR: `G = W^H H` evaluated from a per-filter-pair
//! table instead of time-domain simulation.
//!
//! For subcarrier offset `dm = m' - m` and symbol lag `dn`,
//!
//! `G_{kk'} = (-1)^{m dn} j^{m' - m - dn} sum_b Z_{kk'}(b) C_dm(dn M/2 - b)`
//!
//! with `Z(b) = W^H A_b e^{-j 2 pi m b / M}`, `A_b` the N x K matrix of taps
//! at delay `b`, and `C_dm = (p_tx e^{j 2 pi dm l / M}) * p_rx`. Only `Z`
//! depends on the channel realization.

use nalgebra::{DMatrix, DVector};

use crate::asymptotic::{check_tail, offsets, InterferenceWindow};
use crate::channel::ChannelSet;
use crate::combining::CombinerMatrix;
use crate::dsp::{self, C64, ZERO};
use crate::error::{Error, Result};
use crate::prototype::PrototypeFilter;

/// Extra subcarrier offsets covered by the tail check.
const TAIL_MARGIN: usize = 4;

/// `C_dm(dn M/2 - b)` for every in-window `(dm, dn)` and `b < L`.
#[derive(Debug, Clone)]
pub struct InterferenceTable {
    num_subcarriers: usize,
    taps: usize,
    window: InterferenceWindow,
    offsets: Vec<i64>,
    tx_energy: f64,
    rx_energy: f64,
    values: Vec<C64>,
    gram: DMatrix<f64>,
    gram_other: DMatrix<f64>,
    desired_row: DVector<f64>,
}

/// Desired tap and interference power for one user on one subcarrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrTerms {
    /// `Re{G_desired}`.
    pub desired: f64,
    /// Sum of `Re^2{G}` over all other in-window terms and users.
    pub interference: f64,
    /// `||w_{m,k}||^2`.
    pub combiner_norm_sqr: f64,
}

fn lag_response(p_tx: &PrototypeFilter, p_rx: &PrototypeFilter, dm: i64) -> (Vec<C64>, isize) {
    let total = p_tx.num_subcarriers();
    let tx: Vec<C64> =
        (p_tx.first_lag()..=p_tx.last_lag()).map(|a| p_tx.at(a) * dsp::twiddle(dm * a as i64, total)).collect();
    (dsp::convolve(&tx, p_rx.taps()), p_tx.first_lag() + p_rx.first_lag())
}

impl InterferenceTable {
    /// Tabulates the filter pair for channels of `taps` delays.
    ///
    /// Fails with [`Error::WindowTooSmall`] when more than the asymptotic
    /// tail limit of the tabulated energy, summed over delays, lies outside
    /// `window`.
    pub fn new(
        p_tx: &PrototypeFilter,
        p_rx: &PrototypeFilter,
        taps: usize,
        window: InterferenceWindow,
    ) -> Result<Self> {
        let total = p_tx.num_subcarriers();
        if p_rx.num_subcarriers() != total {
            return Err(Error::SubcarrierMismatch(total, p_rx.num_subcarriers()));
        }
        if !total.is_multiple_of(2) {
            return Err(Error::InvalidSubcarrierCount(total));
        }
        if taps == 0 {
            return Err(Error::InvalidPdp("channel needs at least one tap".into()));
        }
        let half = (total / 2) as isize;
        let in_window: Vec<i64> =
            offsets(window.max_dm, total).into_iter().filter(|dm| window.contains(*dm, 0)).collect();
        let n_dn = 2 * window.max_dn + 1;
        let mut values = Vec::with_capacity(in_window.len() * n_dn * taps);
        let (mut inside, mut outside) = (0.0, 0.0);
        for dm in offsets(window.max_dm + TAIL_MARGIN, total) {
            let (c, first) = lag_response(p_tx, p_rx, dm);
            let at = |l: isize| {
                let i = l - first;
                if i < 0 || i as usize >= c.len() {
                    ZERO
                } else {
                    c[i as usize]
                }
            };
            let last = first + c.len() as isize - 1;
            let lo = first.div_euclid(half) - 1;
            let hi = (last + taps as isize).div_euclid(half) + 1;
            for dn in lo..=hi {
                let e: f64 = (0..taps as isize).map(|b| at(dn * half - b).norm_sqr()).sum();
                if window.contains(dm, dn as i64) {
                    inside += e;
                } else {
                    outside += e;
                }
            }
            if in_window.contains(&dm) {
                for dn in -(window.max_dn as isize)..=window.max_dn as isize {
                    values.extend((0..taps as isize).map(|b| at(dn * half - b)));
                }
            }
        }
        check_tail(inside, outside)?;
        // rows [Re, -Im] of j^{dm - dn} C_dm(dn M/2 - b)
        let n_rows = in_window.len() * n_dn;
        let mut t = DMatrix::<f64>::zeros(n_rows, 2 * taps);
        let mut desired_row = DVector::zeros(2 * taps);
        for (di, &dm) in in_window.iter().enumerate() {
            for (j, dn) in (-(window.max_dn as i64)..=window.max_dn as i64).enumerate() {
                let r = di * n_dn + j;
                let phase = dsp::j_pow(dm - dn);
                for b in 0..taps {
                    let v = values[r * taps + b] * phase;
                    t[(r, b)] = v.re;
                    t[(r, taps + b)] = -v.im;
                }
                if dm == 0 && dn == 0 {
                    desired_row = t.row(r).transpose();
                }
            }
        }
        let gram = t.transpose() * &t;
        let gram_other = &gram - &desired_row * desired_row.transpose();
        Ok(Self {
            num_subcarriers: total,
            taps,
            window,
            offsets: in_window,
            tx_energy: p_tx.energy(),
            rx_energy: p_rx.energy(),
            values,
            gram,
            gram_other,
            desired_row,
        })
    }

    pub fn window(&self) -> InterferenceWindow {
        self.window
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    /// Energy of the transmit prototype; the synthesis bank scales symbols
    /// by `1/sqrt(2 E_tx)`.
    pub fn tx_energy(&self) -> f64 {
        self.tx_energy
    }

    pub fn rx_energy(&self) -> f64 {
        self.rx_energy
    }

    fn slice(&self, dm_index: usize, dn: isize) -> &[C64] {
        let n_dn = 2 * self.window.max_dn + 1;
        let row = dm_index * n_dn + (dn + self.window.max_dn as isize) as usize;
        &self.values[row * self.taps..(row + 1) * self.taps]
    }

    /// Post-detection noise variance of `Re{w^H y}` in the unit-data domain.
    pub fn noise_term(&self, combiner_norm_sqr: f64, noise_variance: f64) -> f64 {
        self.tx_energy * noise_variance * combiner_norm_sqr * self.rx_energy
    }

    /// All in-window coefficients `G_{kk'}(dm, dn)` for subcarrier `m`, as
    /// `(dm, dn, K x K matrix)`.
    pub fn coefficients(
        &self,
        taps: &ChannelTaps,
        w: &DMatrix<C64>,
        m: usize,
    ) -> Result<Vec<(i64, i64, DMatrix<C64>)>> {
        let z = project(taps, w, m, self.num_subcarriers)?.z;
        let users = w.ncols();
        let mut out = Vec::with_capacity(self.rows());
        for (di, &dm) in self.offsets.iter().enumerate() {
            for dn in -(self.window.max_dn as isize)..=self.window.max_dn as isize {
                let t = self.slice(di, dn);
                let phase = self.phase(m, dm, dn as i64);
                let g = DMatrix::from_fn(users, users, |k, kp| {
                    let s: C64 = (0..self.taps).map(|b| z[(k, b * users + kp)] * t[b]).sum();
                    s * phase
                });
                out.push((dm, dn as i64, g));
            }
        }
        Ok(out)
    }

    fn rows(&self) -> usize {
        self.offsets.len() * (2 * self.window.max_dn + 1)
    }

    /// `(-1)^{m dn} j^{m' - m - dn}` with `m'` wrapped into `[0, M)`.
    fn phase(&self, m: usize, dm: i64, dn: i64) -> C64 {
        let mp = (m as i64 + dm).rem_euclid(self.num_subcarriers as i64);
        let flip = if (m as i64 * dn).rem_euclid(2) == 0 { 0 } else { 2 };
        dsp::j_pow(mp - m as i64 - dn + flip)
    }

    /// Desired/interference split for every user on subcarrier `m`.
    pub fn subcarrier_terms(&self, taps: &ChannelTaps, w: &DMatrix<C64>, m: usize) -> Result<Vec<SinrTerms>> {
        self.terms(&project(taps, w, m, self.num_subcarriers)?)
    }

    /// As [`Self::subcarrier_terms`] for a precomputed projection, which
    /// can be shared by tables built for the same channel length.
    ///
    /// The OQAM phase of every term is `+-j^{dm - dn}` whatever `m` is, so
    /// with the rotated rows stacked as `T` the interference of user k is
    /// `sum_k' z_{kk'}^T (T^T T) z_{kk'}` less the desired term, where
    /// `z_{kk'}` holds the real and imaginary parts of `Z_{kk'}(b)`.
    pub fn terms(&self, proj: &Projection) -> Result<Vec<SinrTerms>> {
        if proj.taps != self.taps {
            return Err(Error::DimensionMismatch(format!(
                "table built for {} taps, channel has {}",
                self.taps, proj.taps
            )));
        }
        if proj.num_subcarriers != self.num_subcarriers {
            return Err(Error::SubcarrierMismatch(self.num_subcarriers, proj.num_subcarriers));
        }
        let users = proj.users;
        let l = self.taps;
        let zr = DMatrix::<f64>::from_fn(2 * l, users * users, |row, col| {
            let (k, kp) = (col % users, col / users);
            let v = proj.z[(k, (row % l) * users + kp)];
            if row < l {
                v.re
            } else {
                v.im
            }
        });
        let y = &self.gram * &zr;
        let y_other = &self.gram_other * &zr;
        Ok((0..users)
            .map(|k| {
                let mut interference = 0.0;
                for kp in 0..users {
                    let c = k + kp * users;
                    let q = if kp == k { &y_other } else { &y };
                    interference += zr.column(c).dot(&q.column(c));
                }
                SinrTerms {
                    desired: self.desired_row.dot(&zr.column(k + k * users)),
                    interference: interference.max(0.0),
                    combiner_norm_sqr: proj.norms[k],
                }
            })
            .collect())
    }

    /// Linear SINR from a term split.
    pub fn sinr(&self, terms: &SinrTerms, noise_variance: f64) -> f64 {
        let den = terms.interference + self.noise_term(terms.combiner_norm_sqr, noise_variance);
        terms.desired * terms.desired / den
    }
}

/// `Z(b) = W^H A_b e^{-j 2 pi m b / M}` for one subcarrier.
#[derive(Debug, Clone)]
pub struct Projection {
    /// K x (L K), column `b K + k'`.
    z: DMatrix<C64>,
    norms: Vec<f64>,
    users: usize,
    taps: usize,
    num_subcarriers: usize,
}

/// Projects the channel taps onto the combiner of subcarrier `m`.
pub fn project(taps: &ChannelTaps, w: &DMatrix<C64>, m: usize, num_subcarriers: usize) -> Result<Projection> {
    if m >= num_subcarriers {
        return Err(Error::IndexOutOfRange { index: m, bound: num_subcarriers });
    }
    if taps.stacked.nrows() != w.nrows() || taps.users != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "combiner is {:?} for {} antennas and {} users",
            w.shape(),
            taps.stacked.nrows(),
            taps.users
        )));
    }
    let mut z = w.ad_mul(&taps.stacked);
    for b in 0..taps.taps {
        let tw = dsp::twiddle(-((m * b) as i64), num_subcarriers);
        for c in b * taps.users..(b + 1) * taps.users {
            z.column_mut(c).iter_mut().for_each(|v| *v *= tw);
        }
    }
    Ok(Projection {
        z,
        norms: w.column_iter().map(|c| c.norm_squared()).collect(),
        users: taps.users,
        taps: taps.taps,
        num_subcarriers,
    })
}

/// Channel taps of all links stacked as N x (L K), column `b K + k`.
#[derive(Debug, Clone)]
pub struct ChannelTaps {
    stacked: DMatrix<C64>,
    users: usize,
    taps: usize,
}

impl ChannelTaps {
    pub fn new(ch: &ChannelSet) -> Self {
        let (users, taps) = (ch.users(), ch.taps_per_link());
        let stacked = DMatrix::from_fn(ch.antennas(), taps * users, |i, c| ch.link(i, c % users)[c / users]);
        Self { stacked, users, taps }
    }
}

/// SINR (dB) of user `k` on the combiner's subcarrier for one channel
/// realization.
pub fn sinr_coefficient_estimator(
    ch: &ChannelSet,
    w: &CombinerMatrix,
    table: &InterferenceTable,
    k: usize,
    noise_variance: f64,
) -> Result<f64> {
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidNoiseVariance(noise_variance));
    }
    if k >= ch.users() {
        return Err(Error::IndexOutOfRange { index: k, bound: ch.users() });
    }
    let terms = table.subcarrier_terms(&ChannelTaps::new(ch), &w.values, w.subcarrier)?;
    Ok(dsp::db(table.sinr(&terms[k], noise_variance)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channels, exponential_pdp};
    use crate::combining::zf;
    use crate::modem::interference_coefficient;
    use crate::prototype::{design_phydyas, matched_filter};

    #[test]
    fn table_matches_direct_coefficients() {
        let p = design_phydyas(16, 4).unwrap();
        let rx = matched_filter(&p);
        let pdp = exponential_pdp(0.3, 4).unwrap();
        let ch = draw_channels(&pdp, 3, 2, 4).unwrap();
        let table = InterferenceTable::new(&p, &rx, 4, InterferenceWindow::for_overlap(4)).unwrap();
        let a = ChannelTaps::new(&ch);
        let m = 15;
        let h_m = ch.frequency_responses(16)[m].values.clone();
        let w = zf(&h_m).unwrap();
        for (dm, dn, g) in table.coefficients(&a, &w, m).unwrap() {
            let mp = (m as i64 + dm).rem_euclid(16) as usize;
            for k in 0..2 {
                for kp in 0..2 {
                    let direct: C64 = (0..3)
                        .map(|i| {
                            w[(i, k)].conj()
                                * interference_coefficient(&p, &rx, ch.link(i, kp), m, mp, dn as isize).unwrap()
                        })
                        .sum();
                    assert!((g[(k, kp)] - direct).norm() < 1e-12, "({dm},{dn},{k},{kp})");
                }
            }
        }
    }

    #[test]
    fn fast_terms_match_coefficients() {
        let p = design_phydyas(32, 4).unwrap();
        let rx = matched_filter(&p);
        let pdp = exponential_pdp(0.2, 6).unwrap();
        let ch = draw_channels(&pdp, 5, 3, 8).unwrap();
        let table = InterferenceTable::new(&p, &rx, 6, InterferenceWindow::for_overlap(4)).unwrap();
        let a = ChannelTaps::new(&ch);
        for m in [0, 1, 17, 31] {
            let w = zf(&ch.frequency_responses(32)[m].values).unwrap();
            let terms = table.subcarrier_terms(&a, &w, m).unwrap();
            let coeffs = table.coefficients(&a, &w, m).unwrap();
            for (k, t) in terms.iter().enumerate() {
                let mut desired = 0.0;
                let mut interference = 0.0;
                for (dm, dn, g) in &coeffs {
                    for kp in 0..3 {
                        if *dm == 0 && *dn == 0 && kp == k {
                            desired = g[(k, kp)].re;
                        } else {
                            interference += g[(k, kp)].re.powi(2);
                        }
                    }
                }
                assert!((t.desired - desired).abs() < 1e-12);
                assert!((t.interference - interference).abs() < 1e-12 * (1.0 + interference));
            }
        }
    }

    #[test]
    fn single_user_flat_channel_is_noise_limited() {
        let p = design_phydyas(32, 4).unwrap();
        let rx = matched_filter(&p);
        let ch = ChannelSet::from_taps(1, 1, 1, vec![C64::new(1.0, 0.0)]).unwrap();
        let table = InterferenceTable::new(&p, &rx, 1, InterferenceWindow::for_overlap(4)).unwrap();
        let w = CombinerMatrix { subcarrier: 7, values: zf(&DMatrix::from_element(1, 1, C64::new(1.0, 0.0))).unwrap() };
        let s = sinr_coefficient_estimator(&ch, &w, &table, 0, 0.1).unwrap();
        assert!((s - 10.0).abs() < 0.01, "{s}");
        let s0 = sinr_coefficient_estimator(&ch, &w, &table, 0, 0.0).unwrap();
        assert!(s0 >= 60.0, "{s0}");
    }

    #[test]
    fn mismatched_taps_are_rejected() {
        let p = design_phydyas(16, 4).unwrap();
        let rx = matched_filter(&p);
        let table = InterferenceTable::new(&p, &rx, 2, InterferenceWindow::for_overlap(4)).unwrap();
        let ch = ChannelSet::from_taps(1, 1, 1, vec![C64::new(1.0, 0.0)]).unwrap();
        let w = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        assert!(table.subcarrier_terms(&ChannelTaps::new(&ch), &w, 0).is_err());
        let small = InterferenceWindow { max_dm: 1, max_dn: 1 };
        assert!(matches!(InterferenceTable::new(&p, &rx, 2, small), Err(Error::WindowTooSmall { .. })));
    }
}
