use proptest::prelude::*;
use sap_unlearn::data::LabeledDataset;
use sap_unlearn::linalg::{Matrix, TensorShape};
use sap_unlearn::noise::{
    asymmetric, corrupt, hierarchical, symmetric, HierarchyGroups, TransitionMatrix,
};

/// `n` one-feature samples with labels cycling through `0..k`.
fn cyclic(n: usize, k: usize) -> LabeledDataset {
    let x = Matrix::from_fn(n, 1, |i, _| i as f64);
    LabeledDataset::new(
        x,
        TensorShape::flat(1),
        (0..n).map(|i| i % k).collect(),
        None,
        k,
    )
    .unwrap()
}

fn assert_stochastic(t: &TransitionMatrix) {
    for i in 0..t.k() {
        let row = t.row(i);
        assert!(
            row.iter().all(|&p| (0.0..=1.0).contains(&p)),
            "row {i}: {row:?}"
        );
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() <= 1e-12, "row {i} sums to {s}");
    }
}

proptest! {
    #[test]
    fn constructors_are_row_stochastic(k in 2usize..=12, eta in 0.0f64..0.5, seed in any::<u64>()) {
        assert_stochastic(&symmetric(k, eta).unwrap());
        match asymmetric(k, eta, seed) {
            Ok(t) => assert_stochastic(&t),
            Err(e) => prop_assert!(e.to_string().contains("row"), "{e}"),
        }
        let classes: Vec<usize> = (0..k).collect();
        let clusters: Vec<Vec<usize>> = classes.chunks(2).map(<[usize]>::to_vec).collect();
        let g = HierarchyGroups::from_clusters(k, &clusters).unwrap();
        assert_stochastic(&hierarchical(k, eta, &g).unwrap());
    }

    #[test]
    fn zero_noise_is_a_no_op(k in 2usize..=6, seed in any::<u64>()) {
        let d = cyclic(60, k);
        let groups = HierarchyGroups::from_clusters(k, &[vec![0, 1]]).unwrap();
        for t in [symmetric(k, 0.0).unwrap(), asymmetric(k, 0.0, seed).unwrap(), hierarchical(k, 0.0, &groups).unwrap()] {
            prop_assert!(t.is_identity());
            let c = corrupt(&d, &t, seed).unwrap();
            prop_assert_eq!(c.labels(), d.labels());
        }
    }

    #[test]
    fn corruption_keeps_samples_and_prefixes(seed in any::<u64>(), eta in 0.0f64..0.9) {
        let d = cyclic(200, 5);
        let t = symmetric(5, eta).unwrap();
        let full = corrupt(&d, &t, seed).unwrap();
        prop_assert_eq!(full.samples().data(), d.samples().data());
        prop_assert_eq!(full.true_labels().unwrap(), d.labels());
        let prefix: Vec<usize> = (0..50).collect();
        let part = corrupt(&d.subset(&prefix), &t, seed).unwrap();
        prop_assert_eq!(part.labels(), &full.labels()[..50]);
        let again = corrupt(&d, &t, seed).unwrap();
        prop_assert_eq!(again.labels(), full.labels());
    }
}

#[test]
fn symmetric_flip_rate_concentrates() {
    let n = 50_000;
    let eta = 0.25;
    let c = corrupt(&cyclic(n, 10), &symmetric(10, eta).unwrap(), 2024).unwrap();
    let rate = c.noise_rate().unwrap();
    let band = 3.0 * (eta * (1.0 - eta) / n as f64).sqrt();
    assert!((rate - eta).abs() <= band, "flip rate {rate}, band ±{band}");
}

#[test]
fn asymmetric_mass_matches_eta() {
    let (k, eta, seeds) = (10usize, 0.2, 100_000u64);
    let upper = 2.0 * eta / (k - 1) as f64;
    let mut total = 0.0;
    let mut rows = 0usize;
    for seed in 0..seeds {
        let t = asymmetric(k, eta, seed).unwrap();
        for i in 0..k {
            total += 1.0 - t.get(i, i);
            rows += 1;
        }
    }
    let mean = total / rows as f64;
    let sd_row = ((k - 1) as f64 * upper * upper / 12.0).sqrt();
    let band = 3.0 * sd_row / (rows as f64).sqrt();
    assert!(
        (mean - eta).abs() <= band,
        "mean off-diagonal mass {mean}, band ±{band}"
    );
}

#[test]
fn asymmetric_rejects_infeasible_rows() {
    let err = (0..64)
        .find_map(|s| asymmetric(2, 0.9, s).err())
        .expect("some seed overflows a row");
    assert!(err.to_string().contains("row"), "{err}");
}

/// Pearson statistic of observed counts against `n · p` over cells with `p > 0`.
fn chi_square(counts: &[usize], probs: &[f64]) -> (f64, usize) {
    let n: usize = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&c, &p) in counts.iter().zip(probs) {
        if p > 0.0 {
            let e = n as f64 * p;
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            assert_eq!(c, 0, "impossible flip observed");
        }
    }
    (stat, cells - 1)
}

fn per_class_counts(t: &TransitionMatrix, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let k = t.k();
    let d = cyclic(n, k);
    let c = corrupt(&d, t, seed).unwrap();
    let mut counts = vec![vec![0usize; k]; k];
    for (&truth, &obs) in d.labels().iter().zip(c.labels()) {
        counts[truth][obs] += 1;
    }
    counts
}

#[test]
fn empirical_rows_match_transition_matrix() {
    // Upper 0.001 quantiles of chi-square with 9 and 1 degrees of freedom.
    let critical = |df: usize| match df {
        9 => 27.877,
        1 => 10.828,
        _ => unreachable!(),
    };
    let t = asymmetric(10, 0.3, 5).unwrap();
    for (i, row) in per_class_counts(&t, 100_000, 11).iter().enumerate() {
        let (stat, df) = chi_square(row, t.row(i));
        assert!(stat < critical(df), "class {i}: chi2 {stat} with {df} df");
    }
    let t = hierarchical(10, 0.25, &HierarchyGroups::cifar10_pairs()).unwrap();
    for (i, row) in per_class_counts(&t, 100_000, 12).iter().enumerate() {
        if t.row(i)[i] == 1.0 {
            assert_eq!(row[i], row.iter().sum::<usize>());
            continue;
        }
        let (stat, df) = chi_square(row, t.row(i));
        assert!(stat < critical(df), "class {i}: chi2 {stat} with {df} df");
    }
}

#[test]
fn documented_examples() {
    let t = symmetric(10, 0.25).unwrap();
    assert_eq!(t.get(0, 0), 0.75);
    assert!((t.get(0, 1) - 0.25 / 9.0).abs() < 1e-15);
    let h = hierarchical(10, 0.25, &HierarchyGroups::cifar10_pairs()).unwrap();
    assert_eq!(h.get(3, 5), 0.25);
    assert_eq!(h.get(3, 3), 0.75);
    assert!((0..10)
        .filter(|&j| j != 3 && j != 5)
        .all(|j| h.get(3, j) == 0.0));
    assert_eq!(
        asymmetric(10, 0.2, 9).unwrap(),
        asymmetric(10, 0.2, 9).unwrap()
    );
}
