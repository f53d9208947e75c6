use kernel_spectra::gram::{
    self, convergence_curve, convergence_predictor, generalization_measure, projection_profile, EigenMethod,
    Spectrum,
};
use kernel_spectra::linalg::Matrix;
use kernel_spectra::exec::with_threads;
use kernel_spectra::Exec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn unit_rows(seed: u64, n: usize, d: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
    for mut row in m.outer_iter_mut() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.mapv_inplace(|x| x / norm);
    }
    m
}

fn psd(seed: u64, n: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
    a.t().dot(&a) / n as f64
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn random_rows_match_monte_carlo() {
    let samples = 1_000_000;
    let rows = unit_rows(20, 20, 8);
    let h = gram::gram_from_embedded(rows.view()).unwrap();
    let mc = gram::gram_monte_carlo(rows.view(), samples, 7).unwrap();
    let tol = 4.0 / (samples as f64).sqrt();
    let within = h.h.iter().zip(mc.h.iter()).filter(|(a, b)| (*a - *b).abs() <= tol).count();
    assert!(within as f64 >= 0.99 * h.h.len() as f64, "{within} of {}", h.h.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn closed_form_matches_monte_carlo(seed in any::<u64>(), n in 2usize..=20, d in 2usize..=8) {
        let samples = 1_000_000;
        let rows = unit_rows(seed, n, d);
        let h = gram::gram_from_embedded(rows.view()).unwrap();
        let mc = gram::gram_monte_carlo(rows.view(), samples, seed ^ 1).unwrap();
        let tol = 4.0 / (samples as f64).sqrt();
        let within = h.h.iter().zip(mc.h.iter()).filter(|(a, b)| (*a - *b).abs() <= tol).count();
        prop_assert!(within as f64 >= 0.99 * (n * n) as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embedded_equals_kernel_matrix_path(seed in any::<u64>(), n in 1usize..30, d in 1usize..10) {
        let rows = unit_rows(seed, n, d);
        let a = gram::gram_from_embedded(rows.view()).unwrap();
        let k = kernel_spectra::linalg::row_gram(rows.view(), Exec::Sequential);
        let b = gram::gram_from_kernel_matrix(k.view()).unwrap();
        prop_assert_eq!(a.h, b.h);
    }

    #[test]
    fn gram_matrix_invariants(seed in any::<u64>(), n in 1usize..40, d in 1usize..12) {
        let rows = unit_rows(seed, n, d);
        let g = gram::gram_from_embedded(rows.view()).unwrap();
        for i in 0..n {
            prop_assert!((g.h[[i, i]] - 0.5).abs() <= 1e-12);
            for j in 0..n {
                prop_assert!((g.h[[i, j]] - g.h[[j, i]]).abs() <= 1e-12);
            }
        }
        let s = g.spectrum().unwrap();
        let lmax = s.lambda_max();
        prop_assert!(*s.values.last().unwrap() >= -1e-8 * lmax);
        let sum: f64 = s.values.iter().sum();
        prop_assert!((sum - n as f64 / 2.0).abs() <= 1e-8 * n as f64);
    }

    #[test]
    fn spectrum_reconstructs(seed in any::<u64>(), n in 1usize..60) {
        let h = psd(seed, n);
        for method in [EigenMethod::Jacobi, EigenMethod::TridiagonalQl] {
            let s = Spectrum::from_matrix(h.view(), method).unwrap();
            let lam = Matrix::from_diag(&ndarray::Array1::from(s.values.clone()));
            let back = s.vectors.dot(&lam).dot(&s.vectors.t());
            prop_assert!(max_abs_diff(&back, &h) <= 1e-8 * s.lambda_max().max(f64::MIN_POSITIVE));
            let vtv = s.vectors.t().dot(&s.vectors);
            prop_assert!(max_abs_diff(&vtv, &Matrix::eye(n)) <= 1e-8);
            prop_assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn profile_is_a_distribution(seed in any::<u64>(), n in 1usize..40) {
        let h = psd(seed, n);
        let s = Spectrum::from_matrix(h.view(), EigenMethod::Auto).unwrap();
        let y: Vec<f64> = (0..n).map(|i| if (seed >> (i % 64)) & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let p = projection_profile(&s, &y).unwrap();
        prop_assert!(p.projections.iter().all(|&v| v >= 0.0));
        prop_assert!(p.cumulative.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((p.cumulative[n - 1] - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn measure_matches_linear_solve(seed in any::<u64>(), n in 1usize..25) {
        // Shifted to keep the system well conditioned.
        let h = psd(seed, n) + Matrix::eye(n) * 0.5;
        let y: Vec<f64> = (0..n).map(|i| if (seed >> (i % 64)) & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let s = Spectrum::from_matrix(h.view(), EigenMethod::Auto).unwrap();
        let m = generalization_measure(&s, &y, 1e-10).unwrap();
        let x = solve(&h, &y);
        let direct: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert!((m.value - direct).abs() <= 1e-6 * direct.abs());
        prop_assert_eq!(m.dropped, 0);
    }

    #[test]
    fn predictor_non_increasing_below_step_limit(seed in any::<u64>(), n in 1usize..30, frac in 0.01f64..0.99) {
        let h = psd(seed, n);
        let s = Spectrum::from_matrix(h.view(), EigenMethod::Auto).unwrap();
        let eta = frac / s.lambda_max();
        let y = vec![1.0; n];
        let c = convergence_curve(&s, &y, eta, 200).unwrap();
        prop_assert!(c.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
        prop_assert!((c[0] - (n as f64).sqrt()).abs() <= 1e-12 * (n as f64).sqrt());
    }

    /// With equal spectra, a label profile whose cumulative projections dominate another's
    /// never converges slower.
    #[test]
    fn majorized_profile_converges_faster(
        seed in any::<u64>(),
        n in 2usize..12,
        raw in prop::collection::vec(0.0f64..1.0, 12),
        frac in 0.05f64..0.95,
        k in 0u64..500,
    ) {
        let h = psd(seed, n) + Matrix::eye(n) * 1e-3;
        let s = Spectrum::from_matrix(h.view(), EigenMethod::Auto).unwrap();
        // B: arbitrary weights; A: the same weights sorted so mass sits on the top eigenvectors.
        let mut wb: Vec<f64> = raw[..n].iter().map(|v| v + 1e-3).collect();
        let total: f64 = wb.iter().sum();
        wb.iter_mut().for_each(|w| *w /= total);
        let mut wa = wb.clone();
        wa.sort_by(|a, b| b.total_cmp(a));
        let label = |w: &[f64]| -> Vec<f64> {
            let coeff: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
            (0..n).map(|i| (0..n).map(|j| s.vectors[[i, j]] * coeff[j]).sum()).collect()
        };
        let (ya, yb) = (label(&wa), label(&wb));
        let fa = projection_profile(&s, &ya).unwrap().cumulative;
        let fb = projection_profile(&s, &yb).unwrap().cumulative;
        prop_assert!(fa.iter().zip(&fb).all(|(a, b)| *a >= *b - 1e-12));
        let eta = frac / s.lambda_max();
        let pa = convergence_predictor(&s, &ya, eta, k).unwrap();
        let pb = convergence_predictor(&s, &yb, eta, k).unwrap();
        prop_assert!(pa <= pb + 1e-10);
    }
}

/// Gaussian elimination with partial pivoting, used as an independent oracle.
fn solve(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs())).unwrap();
        if p != c {
            for j in 0..n {
                m.swap([c, j], [p, j]);
            }
            x.swap(c, p);
        }
        for r in c + 1..n {
            let f = m[[r, c]] / m[[c, c]];
            for j in c..n {
                m[[r, j]] -= f * m[[c, j]];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|j| m[[c, j]] * x[j]).sum();
        x[c] = (x[c] - s) / m[[c, c]];
    }
    x
}

#[test]
fn spectrum_fixtures() {
    let s = Spectrum::from_matrix(Matrix::from_diag(&ndarray::arr1(&[3.0, 1.0])).view(), EigenMethod::Auto).unwrap();
    assert_eq!(s.values, vec![3.0, 1.0]);
    assert_eq!(s.vectors.column(0).to_vec(), vec![1.0, 0.0]);

    let half = Matrix::eye(6) * 0.5;
    let s = Spectrum::from_matrix(half.view(), EigenMethod::Auto).unwrap();
    assert!(s.values.iter().all(|&l| (l - 0.5).abs() < 1e-15));
    let m = generalization_measure(&s, &[1.0, -1.0, 1.0, 1.0, -1.0, 1.0], 1e-10).unwrap();
    assert!((m.value - 12.0).abs() < 1e-12);
}

#[test]
fn predictor_single_eigenpair() {
    let y = [1.0, -1.0, 1.0, 1.0];
    let norm = 2.0;
    let v = Matrix::from_shape_fn((4, 4), |(i, j)| if j == 0 { y[i] / norm } else { 0.0 });
    // One eigenpair λ = 1 along y; the other eigenvalues are 0.
    let h = v.dot(&v.t());
    let s = Spectrum::from_matrix(h.view(), EigenMethod::Auto).unwrap();
    let p = convergence_predictor(&s, &y, 0.5, 1).unwrap();
    assert!((p - 0.5 * norm).abs() < 1e-12);
}

#[test]
fn thread_count_does_not_change_results() {
    let rows = unit_rows(9, 150, 20);
    let a = gram::gram_from_embedded_with(rows.view(), Exec::Sequential).unwrap();
    let b = with_threads(Some(4), || gram::gram_from_embedded_with(rows.view(), Exec::Parallel).unwrap());
    assert_eq!(a, b);
    let a = gram::gram_monte_carlo_with(rows.view(), 10_000, 1, Exec::Sequential).unwrap();
    let b = with_threads(Some(4), || gram::gram_monte_carlo_with(rows.view(), 10_000, 1, Exec::Parallel).unwrap());
    assert_eq!(a, b);
}
