//! Per-subcarrier linear combiners and detection.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsp::{C64, ZERO};
use crate::error::{Error, Result};
use crate::modem::SymbolGrid;

/// Condition number of `H^H H` above which ZF is refused.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Mrc,
    Zf,
    Mmse,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::Mrc, Detector::Zf, Detector::Mmse];

    pub fn as_str(self) -> &'static str {
        match self {
            Detector::Mrc => "mrc",
            Detector::Zf => "zf",
            Detector::Mmse => "mmse",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrc" => Ok(Detector::Mrc),
            "zf" => Ok(Detector::Zf),
            "mmse" => Ok(Detector::Mmse),
            other => Err(Error::Parse(format!("unknown detector '{other}'"))),
        }
    }
}

/// Combiner `W_m` (N x K) for one subcarrier; user k is detected as
/// `Re{ w_k^H y_m }`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerMatrix {
    pub subcarrier: usize,
    pub values: DMatrix<C64>,
}

/// `W = H D^{-1}` with `D = diag(||h_k||^2)`.
pub fn mrc(h: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let mut w = h.clone();
    for (k, mut col) in w.column_iter_mut().enumerate() {
        let norm = col.norm_squared();
        if norm == 0.0 {
            return Err(Error::ZeroColumn(k));
        }
        col /= C64::new(norm, 0.0);
    }
    Ok(w)
}

/// `W = H (H^H H)^{-1}`, computed from the thin QR factorization `H = QR`
/// as `W = Q R^{-H}`.
pub fn zf(h: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let (n, k) = h.shape();
    if n < k {
        return Err(Error::DimensionMismatch(format!("zero forcing needs N >= K, got N = {n}, K = {k}")));
    }
    if let Some(c) = (0..k).find(|&c| h.column(c).iter().all(|v| *v == ZERO)) {
        return Err(Error::ZeroColumn(c));
    }
    let qr = h.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let cond = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if cond.is_nan() || cond > MAX_GRAM_CONDITION {
        return Err(Error::Singular(cond));
    }
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k)).ok_or(Error::Singular(cond))?;
    Ok(qr.q() * r_inv.adjoint())
}

/// `W = H (H^H H + sigma^2 I)^{-1}`.
pub fn mmse(h: &DMatrix<C64>, noise_variance: f64) -> Result<DMatrix<C64>> {
    if noise_variance.is_nan() || noise_variance <= 0.0 || !noise_variance.is_finite() {
        return Err(Error::InvalidNoiseVariance(noise_variance));
    }
    let k = h.ncols();
    let a = h.adjoint() * h + DMatrix::<C64>::identity(k, k) * C64::new(noise_variance, 0.0);
    let chol = a.cholesky().ok_or(Error::Singular(f64::INFINITY))?;
    // W^H = A^{-1} H^H
    Ok(chol.solve(&h.adjoint()).adjoint())
}

/// Dispatches on the detector kind. `noise_variance` is used by MMSE only.
pub fn combiner(detector: Detector, h: &DMatrix<C64>, noise_variance: f64) -> Result<DMatrix<C64>> {
    match detector {
        Detector::Mrc => mrc(h),
        Detector::Zf => zf(h),
        Detector::Mmse => mmse(h, noise_variance),
    }
}

/// `d_hat_{k,m,n} = Re{ w_{m,k}^H y_{m,n} }` for every user.
///
/// `combiners[m]` belongs to subcarrier m; `received[i]` is the analysis
/// output of antenna i.
pub fn combine_detect(combiners: &[CombinerMatrix], received: &[SymbolGrid<C64>]) -> Result<Vec<SymbolGrid<f64>>> {
    let first = received.first().ok_or_else(|| Error::DimensionMismatch("no received grids".into()))?;
    let (total, symbols) = (first.subcarriers(), first.symbols());
    if combiners.len() != total {
        return Err(Error::DimensionMismatch(format!("{} combiners for {total} subcarriers", combiners.len())));
    }
    if received.iter().any(|g| g.subcarriers() != total || g.symbols() != symbols) {
        return Err(Error::DimensionMismatch("received grids differ in shape".into()));
    }
    let antennas = received.len();
    let users = combiners[0].values.ncols();
    for (m, w) in combiners.iter().enumerate() {
        if w.subcarrier != m || w.values.nrows() != antennas || w.values.ncols() != users {
            return Err(Error::DimensionMismatch(format!(
                "combiner {m} is {}x{} for subcarrier {}, expected {antennas}x{users}",
                w.values.nrows(),
                w.values.ncols(),
                w.subcarrier
            )));
        }
    }
    let mut out = vec![SymbolGrid::zeros(total, symbols); users];
    for (m, w) in combiners.iter().enumerate() {
        for n in 0..symbols {
            for (k, grid) in out.iter_mut().enumerate() {
                let v: f64 = (0..antennas).map(|i| (w.values[(i, k)].conj() * received[i].get(m, n)).re).sum();
                grid.set(m, n, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};

    fn random_matrix(n: usize, k: usize, seed: u64) -> DMatrix<C64> {
        let mut r = rng::substream(seed, Domain::Channel, 0, 0);
        DMatrix::from_fn(n, k, |_, _| rng::complex_gaussian(&mut r, 1.0))
    }

    fn identity_error(w: &DMatrix<C64>, h: &DMatrix<C64>) -> f64 {
        let k = h.ncols();
        (w.adjoint() * h - DMatrix::<C64>::identity(k, k)).norm()
    }

    #[test]
    fn zf_inverts_the_channel() {
        for (n, k) in [(8, 3), (5, 5), (64, 10)] {
            let h = random_matrix(n, k, n as u64);
            assert!(identity_error(&zf(&h).unwrap(), &h) < 1e-8);
        }
    }

    #[test]
    fn zf_rejects_rank_deficient_channels() {
        let mut h = random_matrix(6, 3, 1);
        let c0 = h.column(0).clone_owned();
        h.set_column(2, &(c0 * C64::new(2.0, -1.0)));
        assert!(matches!(zf(&h), Err(Error::Singular(_))));
        assert!(matches!(zf(&random_matrix(2, 3, 1)), Err(Error::DimensionMismatch(_))));
        let mut z = random_matrix(4, 2, 1);
        z.set_column(1, &DMatrix::zeros(4, 1).column(0));
        assert!(matches!(zf(&z), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn mrc_normalizes_columns() {
        let h = random_matrix(16, 4, 3);
        let w = mrc(&h).unwrap();
        for k in 0..4 {
            let g = (w.column(k).adjoint() * h.column(k))[(0, 0)];
            assert!((g - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        let z = DMatrix::<C64>::zeros(4, 2);
        assert!(matches!(mrc(&z), Err(Error::ZeroColumn(0))));
    }

    #[test]
    fn single_user_zf_is_mrc() {
        let h = random_matrix(12, 1, 9);
        assert!((zf(&h).unwrap() - mrc(&h).unwrap()).norm() < 1e-14 * mrc(&h).unwrap().norm() * 10.0);
    }

    #[test]
    fn mmse_limits() {
        let h = random_matrix(10, 4, 5);
        let z = zf(&h).unwrap();
        assert!((mmse(&h, 1e-12).unwrap() - &z).norm() / z.norm() < 1e-6);
        let w = mmse(&h, 1e6).unwrap();
        for k in 0..4 {
            let (wk, hk) = (w.column(k), h.column(k));
            let cos = (wk.adjoint() * hk)[(0, 0)].norm() / (wk.norm() * hk.norm());
            assert!(cos >= 1.0 - 1e-4, "{cos}");
        }
        assert!(matches!(mmse(&h, 0.0), Err(Error::InvalidNoiseVariance(_))));
    }

    #[test]
    fn mrc_cross_terms_vanish_for_large_arrays() {
        let h = random_matrix(4096, 2, 11);
        let w = mrc(&h).unwrap();
        let g = w.adjoint() * &h;
        assert!(g[(0, 1)].norm() < 0.05 && g[(1, 0)].norm() < 0.05);
    }

    #[test]
    fn detector_names_round_trip() {
        for d in Detector::ALL {
            assert_eq!(d.as_str().parse::<Detector>().unwrap(), d);
        }
        assert!("foo".parse::<Detector>().is_err());
    }

    #[test]
    fn combine_detect_applies_hermitian() {
        let h = random_matrix(3, 2, 2);
        let w = zf(&h).unwrap();
        let d = [1.0, -1.0];
        let received: Vec<SymbolGrid<C64>> =
            (0..3).map(|i| SymbolGrid::from_fn(1, 1, |_, _| h[(i, 0)] * d[0] + h[(i, 1)] * d[1])).collect();
        let out = combine_detect(&[CombinerMatrix { subcarrier: 0, values: w }], &received).unwrap();
        assert!((out[0].get(0, 0) - 1.0).abs() < 1e-12);
        assert!((out[1].get(0, 0) + 1.0).abs() < 1e-12);
    }
}
