use std::f64::consts::PI;

use phasesync::circular::wrap_signed;
use phasesync::io::{read_tensor, write_tensor_bin, write_tensor_csv};
use phasesync::psmetrics::{pairwise_tensor, sliding_apply, PairSource};
use phasesync::signals::{band_limit, extract_phases, phases_of};
use phasesync::simharness::{run_simulation, SimConfig, SimId};
use phasesync::states::{run_state_pipeline, GroupMatrix, StateConfig};
use phasesync::surrogates::{cpp_surrogate, make_rng, segment_cycles};
use phasesync::{BandSpec, Metric, RoiDataset, WindowSpec};
use rand_distr::{Distribution, StandardNormal};

fn coupled_dataset(seed: u64, lag: f64) -> RoiDataset {
    let mut rng = make_rng(seed, 0);
    let (t, tr) = (240, 2.0);
    let w = 2.0 * PI * 0.05 * tr;
    let rows = (0..3)
        .map(|r| {
            (0..t)
                .map(|k| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (w * k as f64 + lag * r as f64).sin() + 0.2 * z
                })
                .collect()
        })
        .collect();
    RoiDataset::unlabeled(rows, tr).unwrap()
}

#[test]
fn locked_regions_show_high_synchrony_end_to_end() {
    let data = coupled_dataset(3, PI / 6.0);
    let phases = extract_phases(&data, &BandSpec::default()).unwrap();
    let plv = pairwise_tensor(PairSource::Phases(&phases), Metric::Plv, Some(WindowSpec::new(30).unwrap())).unwrap();
    assert_eq!((plv.n_pairs(), plv.n_times, plv.start), (3, 240 - 29, 29));
    let interior: Vec<f64> = (30..plv.n_times - 30).filter_map(|t| plv.get(0, t)).collect();
    assert!(interior.iter().all(|&v| v > 0.95), "{:?}", interior.iter().copied().fold(1.0, f64::min));

    // Adjacent regions lead by pi/6, so CRP sits near cos(pi/6).
    let crp = pairwise_tensor(PairSource::Phases(&phases), Metric::Crp, None).unwrap();
    let p = crp.pair_position(0, 1).unwrap();
    let mid: Vec<f64> = (40..200).map(|t| crp.get(p, t).unwrap()).collect();
    let mean = mid.iter().sum::<f64>() / mid.len() as f64;
    assert!((mean - (PI / 6.0).cos()).abs() < 0.05, "{mean}");
}

#[test]
fn signal_metrics_use_band_limited_rows() {
    let data = coupled_dataset(4, 0.0);
    let rows = band_limit(&data, &BandSpec::default()).unwrap();
    let w = Some(WindowSpec::new(28).unwrap());
    let csw = pairwise_tensor(PairSource::Signals { rows: &rows, tr_seconds: 2.0 }, Metric::Csw, w).unwrap();
    let pw = pairwise_tensor(PairSource::Signals { rows: &rows, tr_seconds: 2.0 }, Metric::PwCsw, w).unwrap();
    assert_eq!(csw.start, 27);
    assert_eq!(pw.start, 28);
    assert_eq!(pw.n_times + 1, csw.n_times);
    let direct = sliding_apply(Metric::Csw, &rows[0], &rows[2], w).unwrap();
    let p = csw.pair_position(0, 2).unwrap();
    assert_eq!(csw.row(p), &direct.values[..]);
    assert!(direct.valid_mean().unwrap() > 0.9);
}

#[test]
fn tensors_survive_both_file_formats() {
    let data = coupled_dataset(5, 0.3);
    let phases = phases_of(&band_limit(&data, &BandSpec::default()).unwrap(), 2.0).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for (metric, window) in [(Metric::Toroidal, Some(WindowSpec::new(16).unwrap())), (Metric::Coherence, None)] {
        let t = pairwise_tensor(PairSource::Phases(&phases), metric, window).unwrap();
        let (csv, bin) = (tmp.path().join(format!("{metric}.csv")), tmp.path().join(format!("{metric}.bin")));
        write_tensor_csv(&csv, &t).unwrap();
        write_tensor_bin(&bin, &t).unwrap();
        assert_eq!(read_tensor(&bin).unwrap(), t);
        let back = read_tensor(&csv).unwrap();
        assert_eq!((back.metric, back.window, back.start, back.n_times), (t.metric, t.window, t.start, t.n_times));
        for (a, b) in back.values.iter().zip(&t.values) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
}

#[test]
fn surrogate_keeps_cycle_shapes() {
    let phase: Vec<f64> = (0..300).map(|k| wrap_signed(0.21 * k as f64 + 0.01 * (k as f64).sin()).unwrap()).collect();
    let mut rng = make_rng(11, 1);
    let s = cpp_surrogate(&phase, &mut rng).unwrap();
    assert_eq!(s.len(), phase.len());
    let mut a = segment_cycles(&phase).unwrap().cycle_lengths();
    let mut b = segment_cycles(&s).unwrap().cycle_lengths();
    a.sort_unstable();
    b.sort_unstable();
    assert_eq!(a, b);
}

#[test]
fn simulation_is_reproducible_and_shaped() {
    let mut cfg = SimConfig::new(SimId::Ramp, true, 99);
    cfg.n_realizations = 12;
    let a = run_simulation(&cfg).unwrap();
    let b = run_simulation(&cfg).unwrap();
    assert_eq!(a.cells.len(), 11);
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.mean, y.mean);
        assert_eq!(x.lower95, y.lower95);
        assert!(x.mean.iter().zip(&x.lower95).zip(&x.upper95).all(|((m, l), u)| !(m < l || m > u)));
    }
    let plv = a.cell(Metric::Plv, Some(120)).unwrap();
    assert_eq!(plv.len(), cfg.n_samples - 119);
    cfg.seed = 100;
    let c = run_simulation(&cfg).unwrap();
    assert_ne!(c.cells[0].mean, a.cells[0].mean);
}

#[test]
fn states_split_two_kinds_of_subject_windows() {
    // Half of each subject's samples are in-phase, half anti-phase.
    let tensors: Vec<_> = (0..3u64)
        .map(|s| {
            let mut rng = make_rng(s, 2);
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|r| {
                    (0..120)
                        .map(|k| {
                            let flip = if k >= 60 && r % 2 == 1 { PI } else { 0.0 };
                            let z: f64 = StandardNormal.sample(&mut rng);
                            wrap_signed(0.3 * k as f64 + flip + 0.2 * z).unwrap()
                        })
                        .collect()
                })
                .collect();
            let p = phasesync::PhaseMatrix::new(rows, 2.0).unwrap();
            pairwise_tensor(PairSource::Phases(&p), Metric::Crp, None).unwrap()
        })
        .collect();
    let group = GroupMatrix::concatenate(&tensors).unwrap();
    assert_eq!((group.dim(), group.n_columns()), (6, 360));
    let cfg = StateConfig { restarts: 20, ..StateConfig::default() };
    let out = run_state_pipeline(&tensors, &cfg).unwrap();
    let labels = &out.result.labels;
    for s in 0..3 {
        let base = s * 120;
        assert!(labels[base..base + 60].iter().all(|&l| l == labels[base]));
        assert!(labels[base + 60..base + 120].iter().all(|&l| l != labels[base]));
    }
    assert_eq!(out.centroid_matrices.len(), 2);
}
