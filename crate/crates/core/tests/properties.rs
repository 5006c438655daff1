use std::sync::OnceLock;

use funcanova::basis::{BSplineBasis, Smoother};
use funcanova::fpca::{covariance_eigen, kl_truncate};
use funcanova::funcdata::{heatmap_stats, resample, CurveSample};
use funcanova::inference::{
    empirical_quantile, merge_zones, permutation_test, pointwise_f, ContrastSpec, PermutationConfig, Zone,
};
use funcanova::kernelclass::{
    combine_scores, normalize_scores, score, CombinationWeights, IntervalWeight, KernelSet, ZoneScope,
};
use funcanova::pipeline::{self, Analysis};
use funcanova::simulate::{gen_dataset, zone_match_rate, SimulationConfig};
use funcanova::{FunctionalDataset, TimeGrid};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn dataset(values: &[Vec<Vec<Vec<f64>>>], n_t: usize) -> FunctionalDataset {
    let grid = TimeGrid::uniform(n_t, 1.0).unwrap();
    let groups: Vec<String> = (0..values.len()).map(|g| format!("g{g}")).collect();
    let variates: Vec<String> = (0..values[0].len()).map(|d| format!("v{d}")).collect();
    let mut samples = Vec::new();
    for (g, per_g) in values.iter().enumerate() {
        for (d, per_d) in per_g.iter().enumerate() {
            for (k, curve) in per_d.iter().enumerate() {
                samples.push(CurveSample {
                    unit_id: format!("u{k}"),
                    group_id: groups[g].clone(),
                    variate_id: variates[d].clone(),
                    values: curve.clone(),
                });
            }
        }
    }
    FunctionalDataset::from_samples(grid, groups, variates, samples).unwrap()
}

/// `[g][d][k][i]` values for `g` groups, `d` variates, `k` units, `n_t` points.
fn values(g: usize, d: usize, k: usize, n_t: usize) -> impl Strategy<Value = Vec<Vec<Vec<Vec<f64>>>>> {
    prop::collection::vec(
        prop::collection::vec(prop::collection::vec(prop::collection::vec(-10.0..10.0f64, n_t), k), d),
        g,
    )
}

fn analysis() -> &'static (FunctionalDataset, Analysis) {
    static CELL: OnceLock<(FunctionalDataset, Analysis)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = SimulationConfig {
            units: 8,
            sd: 0.2,
            ..Default::default()
        };
        let (ds, _) = gen_dataset(&cfg).unwrap();
        let a = pipeline::analyze(&ds, &cfg.analysis).unwrap();
        (ds, a)
    })
}

fn zones() -> impl Strategy<Value = Vec<Zone>> {
    prop::collection::vec((0.0..1.0f64, 0.0..0.3f64), 0..4)
        .prop_map(|v| v.into_iter().map(|(s, w)| Zone { start: s, end: (s + w).min(1.0) }).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity(order in 2usize..6, extra in 0usize..15, t_end in 0.5..5.0f64, u in 0.0..=1.0f64) {
        let b = BSplineBasis::uniform(order, order + extra, t_end).unwrap();
        let s: f64 = b.eval(u * t_end).unwrap().iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gram_is_symmetric_psd(order in 2usize..6, extra in 0usize..15, t_end in 0.5..5.0f64) {
        let g = BSplineBasis::uniform(order, order + extra, t_end).unwrap().gram();
        let m = g.matrix();
        prop_assert!((m - m.transpose()).amax() <= 1e-12);
        let eig = SymmetricEigen::new(m.clone());
        prop_assert!(eig.eigenvalues.min() >= -1e-12 * eig.eigenvalues.max());
    }

    #[test]
    fn f_is_nonnegative_and_affine_invariant(
        v in values(3, 2, 3, 12),
        s in prop_oneof![-5.0..-0.2f64, 0.2..5.0f64],
        c in -20.0..20.0f64,
    ) {
        let ds = dataset(&v, 12);
        let moved = ds.map_curves(|y| Ok(y.iter().map(|x| s * x + c).collect())).unwrap();
        for contrast in ContrastSpec::all(&ds) {
            let a = pointwise_f(&ds, &contrast).unwrap();
            let b = pointwise_f(&moved, &contrast).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!(*x >= 0.0);
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn permutation_null_ignores_which_group_is_which(v in values(2, 1, 4, 8), seed in any::<u64>()) {
        let ds = dataset(&v, 8);
        let swapped = dataset(&[v[1].clone(), v[0].clone()], 8);
        let c = ContrastSpec::for_dataset(&ds, 0, 1).unwrap();
        let cfg = PermutationConfig { n_perm: 100, seed, ..Default::default() };
        let mut a = permutation_test(&ds, &c, &cfg).unwrap().null_distribution.unwrap();
        let mut b = permutation_test(&swapped, &c, &cfg).unwrap().null_distribution.unwrap();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn empirical_cdf_is_valid(v in values(2, 1, 5, 6), seed in any::<u64>()) {
        let ds = dataset(&v, 6);
        let c = ContrastSpec::for_dataset(&ds, 0, 1).unwrap();
        let cfg = PermutationConfig { n_perm: 150, seed, ..Default::default() };
        let null = permutation_test(&ds, &c, &cfg).unwrap().null_distribution.unwrap();
        let cdf = |x: f64| null.iter().filter(|&&v| v <= x).count() as f64 / null.len() as f64;
        let mut sorted = null.clone();
        sorted.sort_by(f64::total_cmp);
        let mut last = 0.0;
        for &x in &sorted {
            let p = cdf(x);
            prop_assert!(p >= last);
            last = p;
        }
        prop_assert_eq!(cdf(sorted[sorted.len() - 1]), 1.0);
        let qs: Vec<f64> = (1..=20).map(|i| empirical_quantile(&null, i as f64 / 20.0)).collect();
        prop_assert!(qs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zones_cover_exactly_the_rejected_points(mask in prop::collection::vec(any::<bool>(), 4..60)) {
        let grid = TimeGrid::uniform(mask.len(), 2.0).unwrap();
        let z = merge_zones(&mask, &grid, 1);
        for w in z.windows(2) {
            prop_assert!(w[0].end < w[1].start);
        }
        for (i, &t) in grid.points().iter().enumerate() {
            prop_assert_eq!(mask[i], z.iter().any(|zone| zone.contains(t)));
        }
        prop_assert!(z.iter().all(|zone| 0.0 <= zone.start && zone.end <= 2.0));
    }

    #[test]
    fn normalized_scores_are_a_scale_free_probability_vector(
        raw in prop::collection::vec(-100.0..100.0f64, 2..10),
        c in 0.01..100.0f64,
    ) {
        let (p, _) = normalize_scores(&raw);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));

        let pos: Vec<f64> = raw.iter().map(|x| x.abs()).collect();
        let (a, _) = normalize_scores(&pos);
        let (b, _) = normalize_scores(&pos.iter().map(|x| c * x).collect::<Vec<_>>());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn combined_score_is_monotone(
        raw in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 3), 1..4),
        w in prop::collection::vec(0.01..1.0f64, 4),
        l in 0usize..4,
        g in 0usize..3,
        bump in 0.0..1.0f64,
    ) {
        let n_l = raw.len();
        let l = l % n_l;
        let normalized: Vec<Vec<f64>> = raw.iter().map(|r| normalize_scores(r).0).collect();
        let total: f64 = w[..n_l].iter().sum();
        let r: Vec<f64> = w[..n_l].iter().map(|x| x / total).collect();
        let weights = CombinationWeights { r: vec![r; 3] };
        let before = combine_scores(&normalized, &weights, g).unwrap();
        let mut raised = normalized.clone();
        raised[l][g] += bump * (1.0 - raised[l][g]);
        let after = combine_scores(&raised, &weights, g).unwrap();
        prop_assert!(after >= before);
        prop_assert!((0.0..=1.0).contains(&after));
    }

    #[test]
    fn score_is_linear(a in -5.0..5.0f64, b in -5.0..5.0f64, seed in any::<u64>()) {
        let (ds, an) = analysis();
        let ks = KernelSet::new(&an.kernels, &an.reports, ZoneScope::PerContrast, IntervalWeight::InverseLength).unwrap();
        let n_t = ds.grid().len();
        let x: Vec<f64> = (0..n_t).map(|i| ((seed.wrapping_add(i as u64) % 97) as f64 / 13.0).sin()).collect();
        let y: Vec<f64> = (0..n_t).map(|i| ((seed.wrapping_mul(31).wrapping_add(i as u64) % 89) as f64 / 7.0).cos()).collect();
        let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        for d in 0..ks.n_variates() {
            for g in 0..ks.n_groups() {
                let lhs = score(&z, &ks, g, d);
                let rhs = a * score(&x, &ks, g, d) + b * score(&y, &ks, g, d);
                prop_assert!((lhs - rhs).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn zone_match_is_symmetric_and_bounded(a in zones(), b in zones()) {
        let x = zone_match_rate(&a, &b);
        let y = zone_match_rate(&b, &a);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((x - y).abs() <= 1e-12);
        prop_assert_eq!(zone_match_rate(&a, &a), 1.0);
    }

    #[test]
    fn resampling_is_exact_for_affine_functions(
        n_src in 2usize..40,
        n_dst in 4usize..120,
        slope in -10.0..10.0f64,
        icpt in -10.0..10.0f64,
        t0 in -5.0..5.0f64,
        span in 0.1..50.0f64,
    ) {
        let src: Vec<f64> = (0..n_src).map(|i| t0 + span * i as f64 / (n_src - 1) as f64).collect();
        let vals: Vec<f64> = src.iter().map(|t| slope * (t - t0) / span + icpt).collect();
        let grid = TimeGrid::uniform(n_dst, 1.0).unwrap();
        let out = resample(&src, &vals, &grid).unwrap();
        for (t, v) in grid.points().iter().zip(&out) {
            prop_assert!((v - (slope * t + icpt)).abs() <= 1e-12 * (1.0 + slope.abs() + icpt.abs()));
        }
    }

    #[test]
    fn heatmap_ignores_sample_order(v in values(3, 2, 4, 6), rot in 0usize..100) {
        let ds = dataset(&v, 6);
        let mut samples = ds.samples().to_vec();
        samples.reverse();
        let n = samples.len();
        samples.rotate_left(rot % n);
        let shuffled = FunctionalDataset::from_samples(
            ds.grid().clone(),
            ds.group_labels().to_vec(),
            ds.variate_labels().to_vec(),
            samples,
        ).unwrap();
        let a = heatmap_stats(&ds, "g0").unwrap();
        let b = heatmap_stats(&shuffled, "g0").unwrap();
        for r in &a.rows {
            let s = b.row(&r.group, &r.variate).unwrap();
            prop_assert!((r.mean - s.mean).abs() <= 1e-12 * r.mean.abs().max(1.0));
            prop_assert!((r.cv - s.cv).abs() <= 1e-9 * r.cv.abs().max(1.0));
            prop_assert!((r.normalized - s.normalized).abs() <= 1e-9 * r.normalized.abs().max(1.0));
            prop_assert!(r.cv >= 0.0 && r.normalized.is_finite());
        }
    }

    #[test]
    fn fpca_trace_and_truncation(
        rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 7), 3..12),
    ) {
        let basis = BSplineBasis::uniform(4, 7, 1.0).unwrap();
        let gram = basis.gram();
        let x = DMatrix::from_fn(rows.len(), 7, |r, c| rows[r][c]);
        let eig = covariance_eigen(&x, &gram, true).unwrap();

        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..7).map(|c| x.column(c).sum() / n).collect();
        let mut cov = DMatrix::zeros(7, 7);
        for r in &rows {
            let dv = nalgebra::DVector::from_iterator(7, r.iter().zip(&mean).map(|(a, m)| a - m));
            cov += &dv * dv.transpose();
        }
        cov /= n - 1.0;
        let half = gram.sqrt();
        let trace = (&half * cov * &half).trace();
        prop_assert!((eig.total_variance() - trace).abs() <= 1e-8 * trace.max(1.0));
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]) && eig.eigenvalues.iter().all(|&v| v >= 0.0));

        for j in 0..7 {
            for i in 0..7 {
                let ip = gram.inner(&eig.eigenfunctions[i], &eig.eigenfunctions[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - want).abs() <= 1e-8);
            }
        }

        let mut score_sum = vec![0.0; 7];
        for r in &rows {
            let mut last = f64::INFINITY;
            for j in 1..=7 {
                let t = kl_truncate(r, &mean, &eig, j).unwrap();
                let diff: Vec<f64> = r.iter().zip(&t.reconstruction).map(|(a, b)| a - b).collect();
                let err = gram.inner(&diff, &diff);
                prop_assert!(err <= last + 1e-10);
                last = err;
                if j == 7 {
                    prop_assert!(err.sqrt() <= 1e-8);
                    for (s, v) in score_sum.iter_mut().zip(&t.scores) {
                        *s += v;
                    }
                }
            }
        }
        prop_assert!(score_sum.iter().all(|s| (s / n).abs() <= 1e-10));
    }

    #[test]
    fn smoothing_reproduces_basis_functions(q in 5usize..15, j in 0usize..15, c in -5.0..5.0f64) {
        let j = j % q;
        let basis = BSplineBasis::uniform(4, q, 1.0).unwrap();
        let grid = TimeGrid::uniform(60, 1.0).unwrap();
        let mut coefs = vec![0.0; q];
        coefs[j] = 1.0;
        coefs.iter_mut().for_each(|x| *x += c);
        let vals = basis.evaluate(&coefs, grid.points()).unwrap();
        let got = Smoother::new(&basis, &grid, 0.0).unwrap().smooth(&vals).unwrap();
        for (a, b) in got.iter().zip(&coefs) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }
}

#[test]
fn fitted_effects_sum_to_zero() {
    let (_, a) = analysis();
    assert!(a.kernels.max_constraint_violation() <= 1e-8);
}
