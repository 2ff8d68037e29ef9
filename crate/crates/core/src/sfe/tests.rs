use super::*;
use crate::ufe::max_principal_angle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn gaussian_classes(
    seed: u64,
    p: usize,
    means: &[Vec<f64>],
    per_class: usize,
    sd: f64,
) -> LabeledSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = Normal::new(0.0, sd).unwrap();
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    for (c, mu) in means.iter().enumerate() {
        for _ in 0..per_class {
            cols.extend((0..p).map(|b| mu.get(b).copied().unwrap_or(0.0) + nd.sample(&mut rng)));
            labels.push(c + 1);
        }
    }
    LabeledSamples::new(DMatrix::from_column_slice(p, labels.len(), &cols), labels).unwrap()
}

fn random_samples(seed: u64, p: usize, m: usize, k: usize) -> LabeledSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(p, m, |_, _| rng.random_range(-1.0..1.0));
    let labels = (0..m).map(|i| i % k + 1).collect();
    LabeledSamples::new(x, labels).unwrap()
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b).abs() / (a.norm() * b.norm())
}

/// Cyclic Jacobi eigenvalues, ascending.
fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn one_nn_accuracy(
    train: &DMatrix<f64>,
    train_y: &[usize],
    test: &DMatrix<f64>,
    test_y: &[usize],
) -> f64 {
    let correct = (0..test.ncols())
        .filter(|&i| {
            let best = (0..train.ncols())
                .min_by(|&a, &b| {
                    let da = (train.column(a) - test.column(i)).norm_squared();
                    let db = (train.column(b) - test.column(i)).norm_squared();
                    da.total_cmp(&db)
                })
                .unwrap();
            train_y[best] == test_y[i]
        })
        .count();
    correct as f64 / test.ncols() as f64
}

#[test]
fn one_hot_columns_are_indicators() {
    let s = random_samples(1, 3, 7, 3);
    let y = s.one_hot();
    for (i, col) in y.column_iter().enumerate() {
        assert_eq!(col.sum(), 1.0);
        assert_eq!(col[s.labels()[i] - 1], 1.0);
    }
    assert_eq!(s.class_counts(), &[3, 2, 2]);
}

#[test]
fn invalid_label_sets() {
    let x = DMatrix::zeros(2, 3);
    assert!(matches!(
        LabeledSamples::new(x.clone(), vec![1, 3, 3]),
        Err(Error::EmptyClass(2))
    ));
    assert!(LabeledSamples::new(x.clone(), vec![0, 1, 1]).is_err());
    assert!(LabeledSamples::new(x, vec![1, 1]).is_err());
}

#[test]
fn single_sample_classes_have_no_within_scatter() {
    let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
    let s = LabeledSamples::new(x, vec![1, 2]).unwrap();
    let sc = scatter_matrices(&s, None).unwrap();
    assert!(sc.s_w.amax() == 0.0);
    assert!(sc.s_b.amax() > 0.0);
}

#[test]
fn scatter_identity_and_psd() {
    for seed in 0..5 {
        let s = random_samples(seed, 5, 30, 4);
        let sc = scatter_matrices(&s, None).unwrap();
        let st = total_scatter(&s);
        assert!((&sc.s_w + &sc.s_b - &st).amax() <= 1e-6 * st.amax());
        for m in [&sc.s_w, &sc.s_b] {
            let ev = jacobi_eigenvalues(m);
            assert!(ev[0] >= -1e-8 * ev[ev.len() - 1]);
        }
    }
}

#[test]
fn lda_like_pairwise_weights_reduce_to_classical_scatters() {
    for seed in 0..5 {
        let s = random_samples(10 + seed, 4, 24, 3);
        let m = s.len() as f64;
        let ww = graph::lda_affinity(s.labels()).w;
        let wb = DMatrix::from_fn(s.len(), s.len(), |i, j| 1.0 / m - ww[(i, j)]);
        let weighted = scatter_matrices(&s, Some((&ww, &wb))).unwrap();
        let classic = scatter_matrices(&s, None).unwrap();
        assert!((&weighted.s_w - &classic.s_w).amax() <= 1e-8);
        assert!((&weighted.s_b - &classic.s_b).amax() <= 1e-8);
    }
}

#[test]
fn asymmetric_weights_are_rejected() {
    let s = random_samples(2, 3, 4, 2);
    let mut w = DMatrix::zeros(4, 4);
    w[(0, 1)] = 1.0;
    assert!(scatter_matrices(&s, Some((&w, &w))).is_err());
}

#[test]
fn lda_two_class_direction_matches_closed_form() {
    let means = vec![vec![0.0; 5], vec![2.0, 1.0, 0.0, 0.0, 0.0]];
    let s = gaussian_classes(3, 5, &means, 100, 1.0);
    let model = lda(&s, 0.0).unwrap();
    assert_eq!(model.output_dim(), 1);
    let sc = scatter_matrices(&s, None).unwrap();
    let cm = s.class_means();
    let diff = cm.column(1) - cm.column(0);
    let expected = sc.s_w.clone().lu().solve(&diff).unwrap();
    assert!(cosine(&model.basis.column(0).into_owned(), &expected) >= 0.99);
}

#[test]
fn lda_dimension_is_k_minus_one() {
    let s = random_samples(4, 6, 40, 4);
    assert_eq!(lda(&s, 0.0).unwrap().output_dim(), 3);
    assert_eq!(rlda(&s, None).unwrap().output_dim(), 3);
}

#[test]
fn singular_within_scatter_needs_ridge() {
    // Five bands, two classes, four samples: S_w has rank 2.
    let s = random_samples(5, 5, 4, 2);
    let err = lda(&s, 0.0).unwrap_err();
    assert!(err.to_string().contains("γ"), "{err}");
    assert!(lda(&s, 1e-3).is_ok());
}

#[test]
fn lda_is_scale_invariant_with_scaled_ridge() {
    let s = random_samples(6, 4, 30, 3);
    let c = 7.0;
    let scaled = LabeledSamples::new(s.x() * c, s.labels().to_vec()).unwrap();
    let a = lda(&s, 0.05).unwrap();
    let b = lda(&scaled, 0.05 * c * c).unwrap();
    for j in 0..a.output_dim() {
        let u = a.basis.column(j).into_owned();
        let v = b.basis.column(j).into_owned();
        assert!(cosine(&u, &v) >= 1.0 - 1e-8);
    }
}

#[test]
fn lfda_agrees_with_lda_on_unimodal_classes() {
    let means = vec![vec![0.0; 4], vec![3.0, 1.0, 0.0, 0.0]];
    let s = gaussian_classes(7, 4, &means, 80, 1.0);
    let a = lda(&s, 0.0).unwrap();
    let b = lfda(&s, 1, &LfdaParams::default()).unwrap();
    let cos = cosine(
        &a.basis.column(0).into_owned(),
        &b.basis.column(0).into_owned(),
    );
    assert!(cos >= 0.95, "{cos}");
    let sc = scatter_matrices(&s, None).unwrap();
    assert!((&sc.s_w - sc.s_w.transpose()).amax() == 0.0);
}

/// Class 1 has two modes at ±4 on band 0, class 2 sits between them; both
/// classes share the same mean, so only local structure separates them.
fn bimodal(seed: u64, per_mode: usize) -> LabeledSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tight = Normal::new(0.0, 0.5).unwrap();
    let wide = Normal::new(0.0, 1.0).unwrap();
    let p = 4;
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    for (centre, label) in [(-4.0, 1), (4.0, 1), (0.0, 2), (0.0, 2)] {
        for _ in 0..per_mode {
            cols.push(centre + tight.sample(&mut rng));
            cols.extend((1..p).map(|_| wide.sample(&mut rng)));
            labels.push(label);
        }
    }
    LabeledSamples::new(DMatrix::from_column_slice(p, labels.len(), &cols), labels).unwrap()
}

#[test]
fn lfda_beats_lda_on_multimodal_classes() {
    let train = bimodal(8, 40);
    let test = bimodal(9, 100);
    let a = lda(&train, 0.0).unwrap();
    let b = lfda(&train, 1, &LfdaParams::default()).unwrap();
    let oa = |m: &ProjectionModel| {
        one_nn_accuracy(
            &m.project(train.x()).unwrap(),
            train.labels(),
            &m.project(test.x()).unwrap(),
            test.labels(),
        )
    };
    let (oa_lda, oa_lfda) = (oa(&a), oa(&b));
    assert!(oa_lfda >= oa_lda, "lfda {oa_lfda} < lda {oa_lda}");
    assert!(oa_lfda > 0.9);
}

#[test]
fn fsda_rejects_flat_class_spectra() {
    let x = DMatrix::from_fn(4, 6, |_, j| {
        if j < 3 {
            1.0 + j as f64
        } else {
            5.0 + j as f64
        }
    });
    let s = LabeledSamples::new(x, vec![1, 1, 1, 2, 2, 2]).unwrap();
    let ss = between_spectral_scatter(&s);
    assert!(ss.s_f.amax() == 0.0);
    assert!(matches!(
        fsda(&s, 2, 1e-3),
        Err(Error::NoSpectralDiscriminant)
    ));
}

#[test]
fn fsda_stage_one_matches_direct_eigenvalues() {
    for seed in 0..4 {
        let s = random_samples(20 + seed, 8, 40, 4);
        let ss = between_spectral_scatter(&s);
        let mean_h = DVector::from_iterator(
            s.k(),
            (0..s.k()).map(|j| ss.h.column(j).sum() / s.bands() as f64),
        );
        assert!((&ss.h_bar - mean_h).amax() <= 1e-12);
        let mut ours = linalg::sym_eig(&ss.s_f, s.k()).unwrap().values;
        ours.reverse();
        let brute = jacobi_eigenvalues(&ss.s_f);
        for (a, b) in ours.iter().zip(&brute) {
            assert!((a - b).abs() <= 1e-9 * brute[brute.len() - 1].abs().max(1e-12));
        }
        let model = fsda(&s, 3, 1e-6).unwrap();
        assert_eq!(model.input_dim(), 8);
        assert!(model.output_dim() <= 3);
    }
}

#[test]
fn gda_with_class_graph_matches_lda() {
    let means = vec![
        vec![0.0; 5],
        vec![2.0, 1.0, 0.0, 0.0, 0.0],
        vec![0.0, 2.0, 2.0, 0.0, 0.0],
    ];
    let s = gaussian_classes(11, 5, &means, 60, 1.0);
    let g = graph::lda_affinity(s.labels());
    let gda = gda_project(&s, &g, 2, 0.0, MethodKind::Sgda).unwrap();
    let plain = lda(&s, 0.0).unwrap();
    assert!(max_principal_angle(&gda.basis, &plain.basis) < 1e-3);
}

#[test]
fn gda_satisfies_constraint_and_beats_random_directions() {
    let s = random_samples(12, 5, 40, 3);
    let g = graph::collaborative_affinity(s.x(), 0.1, Some(s.labels())).unwrap();
    let gamma = 1e-3;
    let model = gda_project(&s, &g, 2, gamma, MethodKind::Cgda).unwrap();
    let b = gda_constraint(&s, &g, gamma);
    let pbp = model.basis.transpose() * &b * &model.basis;
    assert!((pbp - DMatrix::<f64>::identity(2, 2)).amax() <= 1e-5);

    let xc = center_with(s.x(), &column_mean(s.x()));
    let a = &xc * &g.laplacian * xc.transpose();
    let objective = |p: &DMatrix<f64>| (p.transpose() * &a * p).trace();
    let best = objective(&model.basis);
    // Random feasible P = B^{-1/2} Q with orthonormal Q.
    let eig = b.clone().symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let q = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        assert!(best <= objective(&(&inv_sqrt * q)) + 1e-9);
    }
}

#[test]
fn projection_of_cubes() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let data: Vec<f64> = (0..3 * 5 * 1000)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let cube = HsiCube::new(3, 50, 100, data, None).unwrap();
    let x = cube.matrix();
    let mean = column_mean(&x);
    let identity = ProjectionModel {
        kind: MethodKind::Raw,
        basis: DMatrix::identity(3, 3),
        mean: mean.clone(),
        eigenvalues: vec![],
    };
    let stack = apply_projection(&identity, &cube).unwrap();
    assert!((stack.features - center_with(&x, &mean)).amax() == 0.0);

    let idx: Vec<usize> = (0..cube.pixels()).step_by(37).collect();
    let labels = idx.iter().map(|i| i % 3 + 1).collect();
    let s = LabeledSamples::from_cube(&cube, &idx, labels).unwrap();
    let model = lda(&s, 0.0).unwrap();
    let z_train = model.project(s.x()).unwrap();
    let all = apply_projection(&model, &cube).unwrap();
    for (j, &i) in idx.iter().enumerate() {
        assert!((all.features.column(i) - z_train.column(j)).amax() <= 1e-10);
    }
    let bad = HsiCube::new(2, 1, 1, vec![0.0, 0.0], None).unwrap();
    assert!(apply_projection(&model, &bad).is_err());
}

#[test]
fn jplay_features_classify_a_separable_toy_set() {
    use crate::classify::{rf_predict, rf_train, ForestParams};
    let means = vec![
        vec![1.0, 0.2, 0.2, 0.5, 0.3, 0.1],
        vec![0.2, 1.0, 0.3, 0.1, 0.5, 0.4],
        vec![0.3, 0.2, 1.0, 0.4, 0.1, 0.6],
    ];
    let train = gaussian_classes(15, 6, &means, 30, 0.1);
    let test = gaussian_classes(16, 6, &means, 100, 0.1);
    let model = jplay(&train, &JPlayParams::default()).unwrap();
    let params = ForestParams {
        n_trees: 50,
        ..ForestParams::default()
    };
    let oa = |ztrain: &DMatrix<f64>, ztest: &DMatrix<f64>| {
        let forest = rf_train(ztrain, train.labels(), &params).unwrap();
        let pred = rf_predict(&forest, ztest).unwrap().labels;
        pred.iter()
            .zip(test.labels())
            .filter(|(a, b)| a == b)
            .count() as f64
            / pred.len() as f64
    };
    let raw = oa(train.x(), test.x());
    let jp = oa(
        &model.project_columns(train.x()).unwrap(),
        &model.project_columns(test.x()).unwrap(),
    );
    assert!(jp >= raw, "jplay {jp} < raw {raw}");
}
