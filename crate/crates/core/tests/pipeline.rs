use koopman_core::dynamics::{simulate_linear, simulate_multiregime, simulate_pendulum, Trajectory};
use koopman_core::edmd::{eig, eval_eigenfunctions, koopman_modes, solve_koopman};
use koopman_core::gram::compute_gram;
use koopman_core::hankel::{build_hankel, hankel_dmd, hankel_eigenfunctions, DmdRank};
use koopman_core::io;
use koopman_core::preprocess::{davies_bouldin, eigenfunction_features, fit_truncated_svd};
use koopman_core::reskoopnet::{train, TrainConfig};
use koopman_core::residual::{pseudospectrum, rectangular_grid, resdmd_filter, residuals_for_spectrum};
use koopman_core::{c64, linalg, Dictionary, FixedDictionary, Mat, NeuralDictionary, SnapshotPairs};

fn oracle() -> SnapshotPairs {
    let m = linalg::from_row_major(&[0.9, 0.2, 0.0, 0.5], 2, 2);
    simulate_linear(m.as_ref(), 12, 15, 21).unwrap()
}

#[test]
fn file_round_trip_then_spectrum() {
    let dir = std::env::temp_dir().join(format!("koopman-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let data = oracle();
    for (name, binary) in [("d.csv", false), ("d.bin", true)] {
        let path = dir.join(name);
        io::write_snapshots(&path, &data, binary).unwrap();
        assert_eq!(io::read_snapshots(&path).unwrap(), data);
    }

    let dict = FixedDictionary::monomial(2, 1).unwrap();
    let psi_x = dict.evaluate_batch(data.x()).unwrap();
    let psi_y = dict.evaluate_batch(data.y()).unwrap();
    let gram = compute_gram(psi_x.as_ref(), psi_y.as_ref()).unwrap();
    let spec = residuals_for_spectrum(&eig(&solve_koopman(&gram, 0.0).unwrap(), &gram).unwrap(), &gram).unwrap();
    let path = dir.join("s.csv");
    io::write_spectrum(&path, &spec, &["oracle".into()]).unwrap();
    let rows = io::read_spectrum(&path).unwrap();
    assert_eq!(rows.len(), 3);
    for (row, pair) in rows.iter().zip(&spec.pairs) {
        assert_eq!(row.lambda, pair.lambda);
        assert_eq!(row.residual, pair.residual);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn filtered_spectrum_modes_reconstruct_states() {
    let data = oracle();
    let dict = FixedDictionary::monomial(2, 2).unwrap();
    let psi_x = dict.evaluate_batch(data.x()).unwrap();
    let psi_y = dict.evaluate_batch(data.y()).unwrap();
    let gram = compute_gram(psi_x.as_ref(), psi_y.as_ref()).unwrap();
    let spec = residuals_for_spectrum(&eig(&solve_koopman(&gram, 0.0).unwrap(), &gram).unwrap(), &gram).unwrap();
    let kept = resdmd_filter(&spec, 1e-6).unwrap();
    let mut lams: Vec<f64> = kept.eigenvalues().iter().map(|l| l.re).collect();
    lams.sort_by(f64::total_cmp);
    let expected = [0.25, 0.45, 0.5, 0.81, 0.9, 1.0];
    assert_eq!(lams.len(), expected.len());
    for (a, b) in lams.iter().zip(expected) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    let modes = koopman_modes(&kept, psi_x.as_ref(), data.x()).unwrap();
    assert!(modes.relative_error < 1e-8);

    let phi = eval_eigenfunctions(&dict, &kept, data.y()).unwrap();
    let phi_x = eval_eigenfunctions(&dict, &kept, data.x()).unwrap();
    for (j, lam) in kept.eigenvalues().iter().enumerate() {
        for i in 0..data.m() {
            assert!((phi[(i, j)] - lam * phi_x[(i, j)]).norm() < 1e-8 * (1.0 + phi_x[(i, j)].norm()));
        }
    }
}

#[test]
fn pseudospectrum_contains_filtered_eigenvalues() {
    let data = oracle();
    let dict = FixedDictionary::monomial(2, 1).unwrap();
    let psi_x = dict.evaluate_batch(data.x()).unwrap();
    let psi_y = dict.evaluate_batch(data.y()).unwrap();
    let gram = compute_gram(psi_x.as_ref(), psi_y.as_ref()).unwrap();
    let spec = eig(&solve_koopman(&gram, 0.0).unwrap(), &gram).unwrap();
    let mut points = rectangular_grid((0.3, 1.1), (-0.2, 0.2), 9, 5);
    points.extend(spec.eigenvalues());
    let grid = pseudospectrum(&gram, &points, 1e-6, 0.0).unwrap();
    let accepted = grid.accepted_points();
    for lam in spec.eigenvalues() {
        assert!(accepted.contains(&lam));
    }
    assert!(accepted.iter().all(|z| spec.eigenvalues().iter().any(|l| (z - l).norm() < 1e-3)));
}

#[test]
fn reduced_coordinates_recover_eigenvalues() {
    // a 2-d system embedded in 5-d through an orthonormal map
    let base = oracle();
    let q = linalg::from_row_major(
        &[0.6, 0.0, 0.0, 0.8, 0.0, 0.0, 0.6, 0.8, 0.0, 0.0],
        2,
        5,
    );
    let x = base.x() * &q;
    let y = base.y() * &q;
    let reducer = fit_truncated_svd(x.as_ref(), 2).unwrap();
    let reduced = SnapshotPairs::new(reducer.project(x.as_ref()).unwrap(), reducer.project(y.as_ref()).unwrap()).unwrap();
    let dict = FixedDictionary::monomial(2, 1).unwrap();
    let psi_x = dict.evaluate_batch(reduced.x()).unwrap();
    let psi_y = dict.evaluate_batch(reduced.y()).unwrap();
    let gram = compute_gram(psi_x.as_ref(), psi_y.as_ref()).unwrap();
    let spec = eig(&solve_koopman(&gram, 0.0).unwrap(), &gram).unwrap();
    let lams: Vec<f64> = spec.eigenvalues().iter().map(|l| l.re).collect();
    for want in [1.0, 0.9, 0.5] {
        assert!(lams.iter().any(|l| (l - want).abs() < 1e-8), "{lams:?}");
    }
    let modes = koopman_modes(&spec, psi_x.as_ref(), reduced.x()).unwrap();
    let lifted = reducer.lift_modes(modes.modes.as_ref()).unwrap();
    assert_eq!((lifted.nrows(), lifted.ncols()), (3, 5));
    let phi = eval_eigenfunctions(&dict, &spec, reduced.x()).unwrap();
    let recon = &phi * &lifted;
    let err = (0..x.nrows())
        .flat_map(|i| (0..5).map(move |j| (i, j)))
        .map(|(i, j)| (recon[(i, j)] - c64::new(x[(i, j)], 0.0)).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn hankel_features_separate_regimes() {
    let trials = simulate_multiregime(3, 6, 4, 60, 0.0, 2).unwrap();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for t in &trials {
        let h = build_hankel(&t.trajectory, 8).unwrap();
        let spec = hankel_dmd(&h, DmdRank::Fixed(4)).unwrap();
        let phi = hankel_eigenfunctions(&h, &spec).unwrap();
        features.push(eigenfunction_features(phi.as_ref(), 2, h.ncols()).unwrap());
        labels.push(t.label as i64);
    }
    let f = Mat::from_fn(features.len(), features[0].len(), |i, j| features[i][j]);
    let dbi = davies_bouldin(f.as_ref(), &labels).unwrap();
    assert!(dbi.is_finite() && dbi >= 0.0);
    assert!(dbi < 1e-6, "{dbi}");
}

#[test]
fn trained_dictionary_survives_serialization() {
    let data = simulate_pendulum(4, 30, 0.5, 8).unwrap();
    let dict = NeuralDictionary::new(2, &[8, 8], 5, 3).unwrap();
    let config = TrainConfig {
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let model = train(&data, dict, &config).unwrap();
    let restored = NeuralDictionary::from_json(&model.dictionary.to_json().unwrap()).unwrap();
    let states = data.x();
    assert_eq!(
        restored.evaluate_batch(states).unwrap(),
        model.dictionary.evaluate_batch(states).unwrap()
    );
    let traj = Trajectory::from_matrix(states.subrows(0, 30), 0.5).unwrap();
    assert_eq!(traj.len(), 30);
}
