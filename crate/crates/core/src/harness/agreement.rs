//! Cross-check of the coefficient-domain estimator against the
//! end-to-end one over a grid of small configurations.

use rayon::prelude::*;

use super::{
    coefficient_sinrs, end_to_end_sinrs, mean, subcarrier_combiners, EndToEndSetup, ExperimentConfig, FilterSetup,
    FilterVariant, PdpSpec,
};
use crate::channel::draw_channels_for_trial;
use crate::combining::Detector;
use crate::dsp;
use crate::error::Result;

/// Largest tolerated gap between the two estimators.
pub const AGREEMENT_TOLERANCE_DB: f64 = 0.5;

/// Configurations the two estimators are compared on.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementLattice {
    pub antennas: Vec<usize>,
    pub users: Vec<usize>,
    pub variants: Vec<FilterVariant>,
    pub pdps: Vec<PdpSpec>,
}

impl AgreementLattice {
    /// `N in {1, 8, 64}`, `K in {1, 4}`, both variants, flat and
    /// exponential profiles.
    pub fn standard(pdp: &PdpSpec) -> Self {
        Self {
            antennas: vec![1, 8, 64],
            users: vec![1, 4],
            variants: vec![FilterVariant::Original, FilterVariant::Modified],
            pdps: vec![PdpSpec::Delta, pdp.clone()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementPoint {
    pub antennas: usize,
    pub users: usize,
    pub variant: FilterVariant,
    pub pdp: PdpSpec,
    pub detector: Detector,
    pub coefficient_db: f64,
    pub end_to_end_db: f64,
}

impl AgreementPoint {
    pub fn gap_db(&self) -> f64 {
        (self.coefficient_db - self.end_to_end_db).abs()
    }

    pub fn passes(&self) -> bool {
        self.gap_db() <= AGREEMENT_TOLERANCE_DB
    }
}

/// ZF where it exists, MMSE otherwise.
pub fn lattice_detector(antennas: usize, users: usize) -> Detector {
    if antennas >= users {
        Detector::Zf
    } else {
        Detector::Mmse
    }
}

/// Runs both estimators on every lattice point. Subcarriers, overlap, SNR,
/// burst length, trial count and seed come from `config`.
pub fn estimator_agreement(config: &ExperimentConfig, lattice: &AgreementLattice) -> Result<Vec<AgreementPoint>> {
    let sigma2 = config.noise_variance();
    let window = config.window();
    let mut out = Vec::new();
    for spec in &lattice.pdps {
        let pdp = spec.build()?;
        for &variant in &lattice.variants {
            let setup = FilterSetup::new(variant, config.num_subcarriers, config.overlap, &pdp, window)?;
            let e2e = EndToEndSetup {
                p_tx: &setup.p_tx,
                p_rx: &setup.p_rx,
                table: &setup.table,
                symbols: config.symbols,
                noise_variance: sigma2,
                guard: config.guard(),
            };
            for &n in &lattice.antennas {
                for &k in &lattice.users {
                    let detector = lattice_detector(n, k);
                    let pairs = (0..config.trials)
                        .into_par_iter()
                        .map(|t| {
                            let ch = draw_channels_for_trial(&pdp, n, k, config.seed, t as u32)?;
                            let ws = subcarrier_combiners(&ch, config.num_subcarriers, detector, sigma2)?;
                            let c = mean(&coefficient_sinrs(&setup.table, &ch, &ws, sigma2)?);
                            let e = mean(&end_to_end_sinrs(&e2e, &ch, &ws, config.seed, t as u32)?);
                            Ok((c, e))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let (c, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                    out.push(AgreementPoint {
                        antennas: n,
                        users: k,
                        variant,
                        pdp: spec.clone(),
                        detector,
                        coefficient_db: dsp::db(mean(&c)),
                        end_to_end_db: dsp::db(mean(&e)),
                    });
                }
            }
        }
    }
    Ok(out)
}
