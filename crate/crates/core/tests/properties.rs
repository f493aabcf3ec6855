//! Property tests for module invariants.

use facepipe_core::eval::{auc, roc, ScoreSet};
use facepipe_core::features::{band_mask, dft2, extract_features, Band, BandEdges, Descriptor, Domain};
use facepipe_core::fusion::{fuse, ClassifierParams, FusionModel, GaussianParams};
use facepipe_core::linalg::Matrix;
use facepipe_core::pipeline::PipelineConfig;
use facepipe_core::preprocess::{
    anisotropic_diffuse, gradient, integrate_gradients, normalized_gradient, preprocess_chain, GradientOperator,
    PreprocessConfig,
};
use facepipe_core::rng::SplitMix64;
use facepipe_core::subspace::{center_gram, fit_kpca, kernel_eval, project, KernelSpec};
use facepipe_core::synthbench::{run_benchmark, BenchConfig, DatasetConfig};
use facepipe_core::Image;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn random_image(w: usize, h: usize, lo: f64, hi: f64, seed: u64) -> Image {
    let mut rng = SplitMix64::new(seed);
    Image::from_fn(w, h, |_, _| rng.uniform(lo, hi)).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = SplitMix64::new(seed);
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn kernel(which: u8) -> KernelSpec {
    match which {
        0 => KernelSpec::Linear,
        1 => KernelSpec::Polynomial { degree: 2, offset: 1.0 },
        _ => KernelSpec::Rbf { gamma: 0.5 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_gradient_is_scale_invariant(
        w in 3usize..20, h in 3usize..20, seed in any::<u64>(), c in 0.5f64..4.0,
    ) {
        // Intensities >= 0.05 keep the smoothed image far above epsilon.
        let cfg = PreprocessConfig::default();
        let x = random_image(w, h, 0.05, 1.0, seed);
        let a = normalized_gradient(&x, &cfg).unwrap();
        let b = normalized_gradient(&x.scale(c).unwrap(), &cfg).unwrap();
        prop_assert!(max_abs_diff(a.gx(), b.gx()) < 1e-9);
        prop_assert!(max_abs_diff(a.gy(), b.gy()) < 1e-9);
    }

    #[test]
    fn diffusion_conserves_mean(
        w in 1usize..24, h in 1usize..24, seed in any::<u64>(),
        kappa in 0.01f64..1.0, lambda in 0.01f64..0.25, iters in 0usize..40,
    ) {
        let x = random_image(w, h, 0.0, 1.0, seed);
        let out = anisotropic_diffuse(&x, kappa, lambda, iters).unwrap();
        prop_assert!((out.mean() - x.mean()).abs() < 1e-9 * iters.max(1) as f64);
    }

    #[test]
    fn preprocess_chain_is_deterministic(w in 3usize..20, h in 3usize..20, seed in any::<u64>(), sobel in any::<bool>()) {
        let cfg = PreprocessConfig {
            gradient_operator: if sobel { GradientOperator::Sobel } else { GradientOperator::Central },
            ..PreprocessConfig::default()
        };
        let x = random_image(w, h, 0.0, 1.0, seed);
        prop_assert_eq!(preprocess_chain(&x, &cfg).unwrap(), preprocess_chain(&x, &cfg).unwrap());
    }

    #[test]
    fn dft_matches_naive_and_parseval(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
        let x = random_image(w, h, -1.0, 1.0, seed);
        let spec = dft2(&x);
        for u in 0..h {
            for v in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let phase = -2.0 * std::f64::consts::PI
                            * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                        re += x.get(i, j) * phase.cos();
                        im += x.get(i, j) * phase.sin();
                    }
                }
                prop_assert!((spec.re()[u * w + v] - re).abs() < 1e-9);
                prop_assert!((spec.im()[u * w + v] - im).abs() < 1e-9);
            }
        }
        let spatial: f64 = x.data().iter().map(|v| v * v).sum();
        prop_assert!((spec.energy() / (w * h) as f64 - spatial).abs() <= 1e-9 * spatial);
    }

    #[test]
    fn features_are_unit_or_zero(w in 2usize..17, h in 2usize..17, seed in any::<u64>(), zero in any::<bool>()) {
        let x = if zero { Image::filled(w, h, 0.0).unwrap() } else { random_image(w, h, 0.0, 1.0, seed) };
        let spec = dft2(&x);
        for d in Descriptor::default_selection() {
            let Ok(f) = extract_features(&spec, d, &BandEdges::default()) else { continue };
            let norm = f.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12, "{} {}", d, norm);
        }
    }

    #[test]
    fn magnitude_features_ignore_circular_shift(
        w in 4usize..17, h in 4usize..17, seed in any::<u64>(), dr in 0usize..16, dc in 0usize..16,
    ) {
        let x = random_image(w, h, 0.0, 1.0, seed);
        let shifted = Image::from_fn(w, h, |r, c| x.get((r + dr) % h, (c + dc) % w)).unwrap();
        let (a, b) = (dft2(&x), dft2(&shifted));
        for band in [Band::Low, Band::Mid, Band::Full] {
            let d = Descriptor::new(Domain::Magnitude, band);
            let (Ok(fa), Ok(fb)) = (extract_features(&a, d, &BandEdges::default()), extract_features(&b, d, &BandEdges::default())) else { continue };
            prop_assert!(max_abs_diff(&fa.values, &fb.values) < 1e-9);
        }
    }

    #[test]
    fn band_masks_partition(w in 1usize..33, h in 1usize..33, low in 0.01f64..0.2, gap in 0.01f64..0.25) {
        let edges = BandEdges { low, mid: (low + gap).min(0.5) };
        let l = band_mask(w, h, Band::Low, &edges);
        let m = band_mask(w, h, Band::Mid, &edges);
        let f = band_mask(w, h, Band::Full, &edges);
        prop_assert_eq!(f.len(), w * h);
        prop_assert!(l.iter().all(|i| !m.contains(i)));
        prop_assert!(l.contains(&0));
        prop_assert_eq!(&l, &band_mask(w, h, Band::Low, &edges));
        prop_assert_eq!(&m, &band_mask(w, h, Band::Mid, &edges));
    }

    #[test]
    fn kpca_invariants(n in 2usize..16, d in 1usize..8, seed in any::<u64>(), which in 0u8..3) {
        let x = random_matrix(n, d, seed);
        let spec = kernel(which);
        let model = fit_kpca(&x, spec, n).unwrap();
        let ev = &model.eigenvalues;
        prop_assert!(ev.iter().all(|&l| l > 0.0));
        prop_assert!(ev.windows(2).all(|p| p[0] >= p[1]));

        let proj = model.training_projections();
        for k in 0..model.n_components() {
            let col = proj.column(k);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!((var - ev[k] / n as f64).abs() < 1e-6);
        }
        for i in 0..n {
            let p = project(&model, x.row(i)).unwrap();
            prop_assert!(max_abs_diff(&p, proj.row(i)) < 1e-9);
        }

        let mut gram = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] = kernel_eval(x.row(i), x.row(j), &spec).unwrap();
            }
        }
        let centered = center_gram(&gram).unwrap();
        for i in 0..n {
            prop_assert!(centered.row(i).iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn linear_kpca_is_pca(n in 3usize..21, d in 1usize..11, seed in any::<u64>()) {
        let x = random_matrix(n, d, seed);
        let m = (n - 1).min(d);
        let model = fit_kpca(&x, KernelSpec::Linear, m).unwrap();
        prop_assert_eq!(model.n_components(), m);
        let xm = DMatrix::from_row_slice(n, d, x.data());
        let means = xm.row_mean();
        let xc = DMatrix::from_fn(n, d, |i, j| xm[(i, j)] - means[j]);
        let eig = SymmetricEigen::new(xc.transpose() * &xc / n as f64);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let proj = model.training_projections();
        for (k, &e) in order.iter().take(m).enumerate() {
            let scores = &xc * eig.eigenvectors.column(e);
            let ours = DVector::from_vec(proj.column(k));
            let err = (&ours - &scores).amax().min((&ours + &scores).amax());
            prop_assert!(err < 1e-6, "component {}: {}", k, err);
        }
    }

    #[test]
    fn fusion_is_monotone_for_equal_variances(
        m_diff in -1.0f64..0.5, gap in 0.01f64..1.0, var in 0.001f64..1.0,
        s in -2.0f64..2.0, step in 1e-6f64..1.0,
    ) {
        let model = FusionModel::new(vec![ClassifierParams {
            same: GaussianParams::new(m_diff + gap, var).unwrap(),
            diff: GaussianParams::new(m_diff, var).unwrap(),
        }]).unwrap();
        prop_assert!(fuse(&model, &[s + step]).unwrap() > fuse(&model, &[s]).unwrap());
    }

    #[test]
    fn fusion_is_additive_and_antisymmetric(
        params in proptest::collection::vec((-1.0f64..1.0, 0.01f64..1.0, -1.0f64..1.0, 0.01f64..1.0, -1.0f64..1.0), 1..7),
    ) {
        let classifiers: Vec<ClassifierParams> = params.iter().map(|&(ms, vs, md, vd, _)| ClassifierParams {
            same: GaussianParams::new(ms, vs).unwrap(),
            diff: GaussianParams::new(md, vd).unwrap(),
        }).collect();
        let scores: Vec<f64> = params.iter().map(|p| p.4).collect();
        let model = FusionModel::new(classifiers.clone()).unwrap();
        let total = fuse(&model, &scores).unwrap();
        let parts: f64 = classifiers.iter().zip(&scores)
            .map(|(c, &s)| fuse(&FusionModel::new(vec![*c]).unwrap(), &[s]).unwrap())
            .sum();
        prop_assert!((total - parts).abs() <= 1e-12 * total.abs().max(1.0));
        prop_assert_eq!(fuse(&model.swapped(), &scores).unwrap(), -total);
    }

    #[test]
    fn auc_of_identical_distributions_is_half(
        base in proptest::collection::vec(-10i32..10, 1..30), kg in 1usize..4, ki in 1usize..4,
    ) {
        let values: Vec<f64> = base.iter().map(|&v| v as f64).collect();
        let repeat = |k: usize| values.iter().cycle().take(values.len() * k).copied().collect::<Vec<_>>();
        let set = ScoreSet::new(repeat(kg), repeat(ki));
        let a = auc(&roc(&set).unwrap());
        let tol = 1.0 / (2.0 * set.genuine.len().min(set.impostor.len()) as f64);
        prop_assert!((a - 0.5).abs() <= tol, "{}", a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn poisson_matches_dense_solve(w in 1usize..17, h in 1usize..17, seed in any::<u64>()) {
        let cfg = PreprocessConfig {
            integration_tol: 1e-12,
            integration_iters: 1_000_000,
            ..PreprocessConfig::default()
        };
        let mut rng = SplitMix64::new(seed);
        let n = w * h;
        let field = facepipe_core::preprocess::GradientField::new(
            w, h,
            (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        ).unwrap();
        let mut g = DMatrix::<f64>::zeros(2 * n, n);
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                g[(i, r * w + (c + 1).min(w - 1))] += 0.5;
                g[(i, r * w + c.saturating_sub(1))] -= 0.5;
                g[(n + i, (r + 1).min(h - 1) * w + c)] += 0.5;
                g[(n + i, r.saturating_sub(1) * w + c)] -= 0.5;
            }
        }
        let rhs = DVector::from_iterator(2 * n, field.gx().iter().chain(field.gy()).copied());
        // GᵀN is orthogonal to the constants, so adding 11ᵀ/n to GᵀG pins the
        // mean without changing the rest of the solution.
        let a = g.transpose() * &g + DMatrix::from_element(n, n, 1.0 / n as f64);
        let b = g.transpose() * rhs + DVector::from_element(n, 0.5);
        let dense = a.cholesky().unwrap().solve(&b);
        let out = integrate_gradients(&field, &cfg).unwrap();
        prop_assert!(out.converged);
        let err = out.image.data().iter().zip(dense.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(err < 1e-6, "{}", err);
    }

    #[test]
    fn gradient_round_trip_on_grids(w in 2usize..12, h in 2usize..12, seed in any::<u64>()) {
        let cfg = PreprocessConfig { integration_tol: 1e-11, integration_iters: 1_000_000, ..PreprocessConfig::default() };
        let x = random_image(w, h, 0.0, 1.0, seed);
        let out = integrate_gradients(&gradient(&x, GradientOperator::Central).unwrap(), &cfg).unwrap();
        let shift = 0.5 - x.mean();
        let expected: Vec<f64> = x.data().iter().map(|v| v + shift).collect();
        prop_assert!(max_abs_diff(out.image.data(), &expected) < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn benchmark_is_bit_identical_on_rerun(seed in any::<u64>()) {
        let bench = BenchConfig {
            seed,
            dataset: DatasetConfig { n_ids: 3, imgs_per_id: 2, size: 16, n_blobs: 4, ..DatasetConfig::default() },
        };
        let cfg = PipelineConfig { n_components: 5, ..PipelineConfig::default() };
        let a = run_benchmark(&bench, &cfg).unwrap();
        let b = run_benchmark(&bench, &cfg).unwrap();
        prop_assert_eq!(a.summary_text(), b.summary_text());
        prop_assert_eq!(a.pipeline.scores_csv(&a.test), b.pipeline.scores_csv(&b.test));
        prop_assert_eq!(a.baseline.roc_csv(), b.baseline.roc_csv());
        prop_assert_eq!(a.test.manifest_csv(), b.test.manifest_csv());
    }
}
