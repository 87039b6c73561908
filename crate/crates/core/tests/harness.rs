use mmfbmc::channel::{draw_channels, exponential_pdp};
use mmfbmc::combining::Detector;
use mmfbmc::harness::{
    cp_ofdm_zf_baseline, estimator_agreement, flat_channel, lattice_detector, sinr_end_to_end_estimator,
    subcarrier_combiners, sweep_antennas, AgreementLattice, EndToEndSetup, ExperimentConfig, FilterSetup,
    FilterVariant, PdpSpec, Waveform,
};
use mmfbmc::ExperimentConfig as Reexported;

fn small() -> ExperimentConfig {
    ExperimentConfig { trials: 20, symbols: 50, ..ExperimentConfig::desk() }
}

#[test]
fn estimators_agree_on_lattice() {
    let config = small();
    let lattice = AgreementLattice::standard(&config.pdp);
    let points = estimator_agreement(&config, &lattice).unwrap();
    assert_eq!(points.len(), 24);
    for p in &points {
        assert!(
            p.passes(),
            "N={} K={} {:?} {:?}: {:.3} vs {:.3}",
            p.antennas,
            p.users,
            p.variant,
            p.pdp,
            p.coefficient_db,
            p.end_to_end_db
        );
    }
    assert_eq!(lattice_detector(1, 4), Detector::Mmse);
}

#[test]
fn noiseless_flat_end_to_end() {
    let pdp = exponential_pdp(0.1, 1).unwrap();
    let config = ExperimentConfig { num_subcarriers: 64, ..small() };
    let s = FilterSetup::new(FilterVariant::Original, 64, 4, &pdp, config.window()).unwrap();
    let setup =
        EndToEndSetup { p_tx: &s.p_tx, p_rx: &s.p_rx, table: &s.table, symbols: 40, noise_variance: 0.0, guard: 8 };
    let ch = flat_channel(1, 1).unwrap();
    let ws = subcarrier_combiners(&ch, 64, Detector::Zf, 0.0).unwrap();
    let a = sinr_end_to_end_estimator(&setup, &ch, &ws, 9).unwrap();
    assert!(a >= 55.0, "{a}");

    let random = draw_channels(&exponential_pdp(0.3, 4).unwrap(), 4, 2, 3).unwrap();
    let t =
        FilterSetup::new(FilterVariant::Original, 64, 4, &exponential_pdp(0.3, 4).unwrap(), config.window()).unwrap();
    let noisy = EndToEndSetup { p_tx: &t.p_tx, p_rx: &t.p_rx, table: &t.table, noise_variance: 0.1, ..setup };
    let ws = subcarrier_combiners(&random, 64, Detector::Mmse, 0.1).unwrap();
    let x = sinr_end_to_end_estimator(&noisy, &random, &ws, 5).unwrap();
    let y = sinr_end_to_end_estimator(&noisy, &random, &ws, 5).unwrap();
    assert_eq!(x.to_bits(), y.to_bits());
    assert_ne!(x, sinr_end_to_end_estimator(&noisy, &random, &ws, 6).unwrap());
}

#[test]
fn cp_ofdm_array_gain() {
    let config = ExperimentConfig { trials: 20, ..ExperimentConfig::desk() };
    let s: Vec<f64> = [64, 128, 256].iter().map(|&n| cp_ofdm_zf_baseline(&config, n).unwrap()).collect();
    for w in s.windows(2) {
        assert!((w[1] - w[0] - 3.0103).abs() <= 0.5, "{s:?}");
    }
}

#[test]
fn large_array_detectors_converge() {
    let config = ExperimentConfig {
        num_subcarriers: 32,
        users: 4,
        antennas: vec![2048],
        trials: 4,
        pdp: PdpSpec::Exponential { alpha: 0.2, taps: 6 },
        variants: vec![FilterVariant::Original],
        cp_ofdm: false,
        ..ExperimentConfig::desk()
    };
    let records = sweep_antennas(&config).unwrap();
    let sinr: Vec<f64> = records.iter().map(|r| r.sinr_db).collect();
    let spread = sinr.iter().cloned().fold(f64::MIN, f64::max) - sinr.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 1.0, "{sinr:?}");
    let saturation = records[0].saturation_db.unwrap();
    assert!(sinr.iter().all(|s| *s <= saturation + 1.0), "{sinr:?} vs {saturation}");
}

#[test]
fn sweep_is_reproducible_and_ordered() {
    let config: Reexported = ExperimentConfig {
        num_subcarriers: 32,
        users: 2,
        antennas: vec![4, 8],
        trials: 3,
        pdp: PdpSpec::Exponential { alpha: 0.3, taps: 5 },
        ..ExperimentConfig::desk()
    };
    let a = sweep_antennas(&config).unwrap();
    let b = sweep_antennas(&config).unwrap();
    assert_eq!(a.len(), 2 * (2 * 3 + 1));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.sinr_db.to_bits(), y.sinr_db.to_bits());
        assert_eq!(x.stderr_db.to_bits(), y.stderr_db.to_bits());
        assert!(x.stderr_db.is_finite());
    }
    assert_eq!(a[6].waveform, Waveform::CpOfdm);
    assert!(a
        .iter()
        .filter(|r| r.saturation_db.is_some())
        .all(|r| r.waveform == Waveform::Fbmc(FilterVariant::Original)));
    let other = sweep_antennas(&ExperimentConfig { seed: 2, ..config }).unwrap();
    assert_ne!(a[0].sinr_db, other[0].sinr_db);
}
