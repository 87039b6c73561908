//! Large-array limit of the MRC-combined equivalent channel.
//!
//! With MRC and i.i.d. taps, `(1/N) sum_i conj(H_m^{i,k}) h_{i,k}(l)`
//! converges to `rho(l) e^{j 2 pi m l / M}`, so the residual interference
//! is set by the prototype and the PDP alone.

use crate::channel::{ChannelSet, PowerDelayProfile};
use crate::dsp::{self, C64, ZERO};
use crate::error::{Error, Result};
use crate::modem::interference_coefficient;
use crate::prototype::PrototypeFilter;

/// Maximum fraction of interference energy allowed outside the window.
pub const TAIL_LIMIT: f64 = 1e-8;

/// Extra subcarrier offsets examined beyond the window by the tail check.
const TAIL_MARGIN: usize = 4;

/// Interference terms kept in SINR sums: `|dm| <= max_dm`, `|dn| <= max_dn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterferenceWindow {
    pub max_dm: usize,
    pub max_dn: usize,
}

impl InterferenceWindow {
    pub fn for_overlap(overlap: usize) -> Self {
        Self { max_dm: 4, max_dn: 2 * overlap + 2 }
    }

    pub fn contains(&self, dm: i64, dn: i64) -> bool {
        dm.unsigned_abs() as usize <= self.max_dm && dn.unsigned_abs() as usize <= self.max_dn
    }
}

/// Sequence sampled at symbol lags, `values[i]` at `dn = first_dn + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolLagResponse {
    pub first_dn: i64,
    pub values: Vec<C64>,
}

impl SymbolLagResponse {
    pub fn at(&self, dn: i64) -> C64 {
        let i = dn - self.first_dn;
        if i < 0 || i as usize >= self.values.len() {
            ZERO
        } else {
            self.values[i as usize]
        }
    }

    pub fn last_dn(&self) -> i64 {
        self.first_dn + self.values.len() as i64 - 1
    }
}

/// `rho_m(l) = rho(l) e^{j 2 pi m l / M}`.
pub fn modulated_pdp(pdp: &PowerDelayProfile, m: usize, num_subcarriers: usize) -> Vec<C64> {
    pdp.powers().iter().enumerate().map(|(l, &r)| dsp::twiddle((m * l) as i64, num_subcarriers) * r).collect()
}

fn check_pair(p_tx: &PrototypeFilter, p_rx: &PrototypeFilter) -> Result<usize> {
    let total = p_tx.num_subcarriers();
    if p_rx.num_subcarriers() != total {
        return Err(Error::SubcarrierMismatch(total, p_rx.num_subcarriers()));
    }
    Ok(total)
}

/// `u(k) = (rho_m * p_{rx,m})(k)` for `k` from `first_lag(p_rx)`.
fn receive_side(p_rx: &PrototypeFilter, pdp: &PowerDelayProfile, m: usize) -> Vec<C64> {
    let total = p_rx.num_subcarriers();
    let rho = modulated_pdp(pdp, m, total);
    let rx: Vec<C64> =
        (p_rx.first_lag()..=p_rx.last_lag()).map(|k| p_rx.at(k) * dsp::twiddle(m as i64 * k as i64, total)).collect();
    dsp::convolve(&rho, &rx)
}

fn decimated(p_tx: &PrototypeFilter, p_rx: &PrototypeFilter, u: &[C64], m_prime: usize) -> SymbolLagResponse {
    let total = p_tx.num_subcarriers();
    let half = (total / 2) as isize;
    let u_first = p_rx.first_lag();
    let first = p_tx.first_lag() + u_first;
    let last = p_tx.last_lag() + u_first + u.len() as isize - 1;
    let first_dn = first.div_euclid(half) + (first.rem_euclid(half) != 0) as isize;
    let last_dn = last.div_euclid(half);
    let tx: Vec<C64> = (p_tx.first_lag()..=p_tx.last_lag())
        .map(|a| p_tx.at(a) * dsp::twiddle(m_prime as i64 * a as i64, total))
        .collect();
    let values = (first_dn..=last_dn)
        .map(|dn| {
            let tau = dn * half;
            tx.iter()
                .enumerate()
                .map(|(i, &t)| {
                    let a = p_tx.first_lag() + i as isize;
                    let j = tau - a - u_first;
                    if j < 0 || j as usize >= u.len() {
                        ZERO
                    } else {
                        t * u[j as usize]
                    }
                })
                .sum()
        })
        .collect();
    SymbolLagResponse { first_dn: first_dn as i64, values }
}

/// `g_{mm'}(dn) = (p_{m'} * rho_m * p_{rx,m})(dn M/2)` over every `dn`
/// where it can be nonzero.
pub fn asymptotic_equivalent_channel(
    p_tx: &PrototypeFilter,
    p_rx: &PrototypeFilter,
    pdp: &PowerDelayProfile,
    m: usize,
    m_prime: usize,
) -> Result<SymbolLagResponse> {
    let total = check_pair(p_tx, p_rx)?;
    for idx in [m, m_prime] {
        if idx >= total {
            return Err(Error::IndexOutOfRange { index: idx, bound: total });
        }
    }
    if total % 2 != 0 {
        return Err(Error::InvalidSubcarrierCount(total));
    }
    let u = receive_side(p_rx, pdp, m);
    Ok(decimated(p_tx, p_rx, &u, m_prime))
}

/// Signed subcarrier offsets examined around m, each paired with its
/// wrapped index. Offsets are distinct modulo M.
pub(crate) fn offsets(reach: usize, total: usize) -> Vec<i64> {
    let total = total as i64;
    if 2 * reach as i64 + 1 >= total {
        (-(total / 2)..total - total / 2).collect()
    } else {
        (-(reach as i64)..=reach as i64).collect()
    }
}

/// Interference coefficient with OQAM phase, `m'` wrapped into `[0, M)`.
fn with_phase(g: C64, m: usize, dm: i64, dn: i64, total: usize) -> C64 {
    let mp = (m as i64 + dm).rem_euclid(total as i64);
    g * dsp::j_pow(mp - m as i64 - dn)
}

/// Limit SINR (dB) of subcarrier `m` as `N -> infinity` under MRC.
///
/// Fails with [`Error::WindowTooSmall`] when more than [`TAIL_LIMIT`] of the
/// interference energy falls outside `window`.
pub fn saturation_sinr(
    p_tx: &PrototypeFilter,
    p_rx: &PrototypeFilter,
    pdp: &PowerDelayProfile,
    m: usize,
    window: InterferenceWindow,
) -> Result<f64> {
    let total = check_pair(p_tx, p_rx)?;
    if m >= total {
        return Err(Error::IndexOutOfRange { index: m, bound: total });
    }
    let u = receive_side(p_rx, pdp, m);
    let mut desired = 0.0;
    let mut interference = 0.0;
    let mut inside = 0.0;
    let mut outside = 0.0;
    for dm in offsets(window.max_dm + TAIL_MARGIN, total) {
        let mp = (m as i64 + dm).rem_euclid(total as i64) as usize;
        let g = decimated(p_tx, p_rx, &u, mp);
        for (i, &v) in g.values.iter().enumerate() {
            let dn = g.first_dn + i as i64;
            let c = with_phase(v, m, dm, dn, total);
            if dm == 0 && dn == 0 {
                desired = c.re;
                inside += c.norm_sqr();
            } else if window.contains(dm, dn) {
                interference += c.re * c.re;
                inside += c.norm_sqr();
            } else {
                outside += c.norm_sqr();
            }
        }
    }
    check_tail(inside, outside)?;
    Ok(dsp::db(desired * desired / interference))
}

pub(crate) fn check_tail(inside: f64, outside: f64) -> Result<()> {
    let tail = outside / (inside + outside);
    if tail > TAIL_LIMIT {
        return Err(Error::WindowTooSmall { tail, limit: TAIL_LIMIT });
    }
    Ok(())
}

/// Saturation SINR averaged over all subcarriers in the linear domain.
pub fn mean_saturation_sinr(
    p_tx: &PrototypeFilter,
    p_rx: &PrototypeFilter,
    pdp: &PowerDelayProfile,
    window: InterferenceWindow,
) -> Result<f64> {
    let total = check_pair(p_tx, p_rx)?;
    let mut acc = 0.0;
    for m in 0..total {
        acc += dsp::from_db(saturation_sinr(p_tx, p_rx, pdp, m, window)?);
    }
    Ok(dsp::db(acc / total as f64))
}

/// Finite-N MRC-combined coefficient `(1/N) sum_i conj(H_m^{i,k})
/// H^{i,k'}_{mm',dn}` and its limit, `g_{mm'}(dn)` with phase for `k = k'`
/// and zero otherwise.
#[allow(clippy::too_many_arguments)]
pub fn asymptotic_mrc_limit_check(
    ch: &ChannelSet,
    p_tx: &PrototypeFilter,
    p_rx: &PrototypeFilter,
    pdp: &PowerDelayProfile,
    m: usize,
    m_prime: usize,
    dn: isize,
    k: usize,
    k_prime: usize,
) -> Result<(C64, C64)> {
    let total = check_pair(p_tx, p_rx)?;
    if k >= ch.users() || k_prime >= ch.users() {
        return Err(Error::IndexOutOfRange { index: k.max(k_prime), bound: ch.users() });
    }
    let n = ch.antennas();
    let mut acc = ZERO;
    for i in 0..n {
        let hk: C64 = ch.link(i, k).iter().enumerate().map(|(l, &h)| h * dsp::twiddle(-((m * l) as i64), total)).sum();
        acc += hk.conj() * interference_coefficient(p_tx, p_rx, ch.link(i, k_prime), m, m_prime, dn)?;
    }
    let empirical = acc / n as f64;
    let limit = if k == k_prime {
        let g = asymptotic_equivalent_channel(p_tx, p_rx, pdp, m, m_prime)?;
        g.at(dn as i64) * dsp::j_pow(m_prime as i64 - m as i64 - dn as i64)
    } else {
        ZERO
    };
    Ok((empirical, limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::exponential_pdp;
    use crate::prototype::{design_phydyas, matched_filter};

    #[test]
    fn delta_pdp_gives_the_prototype_floor() {
        let p = design_phydyas(64, 4).unwrap();
        let rx = matched_filter(&p);
        let w = InterferenceWindow::for_overlap(4);
        let s = saturation_sinr(&p, &rx, &PowerDelayProfile::delta(), 5, w).unwrap();
        assert!(s >= 55.0, "{s}");
    }

    #[test]
    fn decimated_response_matches_direct_sum() {
        let p = design_phydyas(16, 4).unwrap();
        let rx = matched_filter(&p);
        let pdp = exponential_pdp(0.3, 5).unwrap();
        let g = asymptotic_equivalent_channel(&p, &rx, &pdp, 3, 4).unwrap();
        let rho = modulated_pdp(&pdp, 3, 16);
        for dn in g.first_dn - 2..=g.last_dn() + 2 {
            let direct =
                interference_coefficient(&p, &rx, &rho, 3, 4, dn as isize).unwrap() * dsp::j_pow(-(4 - 3 - dn));
            assert!((g.at(dn) - direct).norm() < 1e-12, "dn = {dn}");
        }
    }

    #[test]
    fn tiny_window_is_rejected() {
        let p = design_phydyas(32, 4).unwrap();
        let rx = matched_filter(&p);
        let w = InterferenceWindow { max_dm: 1, max_dn: 1 };
        let r = saturation_sinr(&p, &rx, &exponential_pdp(0.1, 8).unwrap(), 0, w);
        assert!(matches!(r, Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn window_membership() {
        let w = InterferenceWindow::for_overlap(4);
        assert_eq!(w.max_dn, 10);
        assert!(w.contains(-4, 10) && !w.contains(5, 0) && !w.contains(0, -11));
    }
}
