use proptest::prelude::*;
use tailfield_core::{
    compute_ranks, empirical_stdf, empirical_tail_copula, pairwise_tdc_matrix, FunctionalSample,
    Grid, RankMatrix, TailCopulaQuery,
};

fn sample_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..6, 4usize..60).prop_flat_map(|(m, n)| {
        (
            Just(m),
            prop::collection::vec(-50i32..50, n * m)
                .prop_map(|v| v.into_iter().map(|x| x as f64 / 4.0).collect()),
        )
    })
}

fn sample(m: usize, values: Vec<f64>) -> FunctionalSample {
    FunctionalSample::new(values, Grid::uniform(m - 1).unwrap()).unwrap()
}

fn query_strategy(m: usize, n: usize) -> impl Strategy<Value = TailCopulaQuery> {
    let d_max = m.min(4);
    (
        Just((0..m).collect::<Vec<usize>>()).prop_shuffle(),
        1..=d_max,
        prop::collection::vec(0.0f64..3.0, d_max),
        1..=n,
    )
        .prop_map(|(perm, d, x, k)| {
            TailCopulaQuery::new(perm[..d].to_vec(), x[..d].to_vec(), k as f64).unwrap()
        })
}

fn with_query() -> impl Strategy<Value = (RankMatrix, TailCopulaQuery)> {
    sample_strategy().prop_flat_map(|(m, values)| {
        let n = values.len() / m;
        let ranks = compute_ranks(&sample(m, values)).unwrap();
        (Just(ranks), query_strategy(m, n))
    })
}

fn univariate(r: &RankMatrix, t: usize, x: f64, k: f64) -> f64 {
    empirical_tail_copula(r, &TailCopulaQuery::new(vec![t], vec![x], k).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn rank_invariance((m, values) in sample_strategy(), k_frac in 0.05f64..1.0) {
        let s = sample(m, values.clone());
        let warped: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| match i % m {
                0 => v.exp(),
                1 => 3.0 * v - 7.0,
                _ => v * v * v + v,
            })
            .collect();
        let a = compute_ranks(&s).unwrap();
        let b = compute_ranks(&sample(m, warped)).unwrap();
        for j in 0..m {
            prop_assert_eq!(a.column(j), b.column(j));
        }
        let k = (k_frac * s.n() as f64).max(1.0);
        prop_assert_eq!(pairwise_tdc_matrix(&a, k).unwrap(), pairwise_tdc_matrix(&b, k).unwrap());
    }

    #[test]
    fn permutation_equivariance((r, q) in with_query()) {
        let mut idx: Vec<usize> = (0..q.dim()).collect();
        idx.reverse();
        idx.rotate_left(1 % q.dim());
        let p = TailCopulaQuery::new(
            idx.iter().map(|&i| q.t_indices[i]).collect(),
            idx.iter().map(|&i| q.x[i]).collect(),
            q.k,
        ).unwrap();
        prop_assert_eq!(empirical_tail_copula(&r, &q).unwrap(), empirical_tail_copula(&r, &p).unwrap());
        prop_assert_eq!(empirical_stdf(&r, &q).unwrap(), empirical_stdf(&r, &p).unwrap());
    }

    #[test]
    fn monotone_in_each_level((r, q) in with_query(), j in 0usize..4, bump in 0.0f64..1.0) {
        let j = j % q.dim();
        let mut x = q.x.clone();
        x[j] += bump;
        let up = TailCopulaQuery::new(q.t_indices.clone(), x, q.k).unwrap();
        prop_assert!(empirical_tail_copula(&r, &up).unwrap() >= empirical_tail_copula(&r, &q).unwrap());
        prop_assert!(empirical_stdf(&r, &up).unwrap() >= empirical_stdf(&r, &q).unwrap());
    }

    #[test]
    fn bounds((r, q) in with_query()) {
        let tc = empirical_tail_copula(&r, &q).unwrap();
        let l = empirical_stdf(&r, &q).unwrap();
        let margins: Vec<f64> = q.t_indices.iter().zip(&q.x)
            .map(|(&t, &x)| univariate(&r, t, x, q.k))
            .collect();
        let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(tc >= 0.0 && tc <= min);
        prop_assert!(tc <= l);
        prop_assert!(l <= margins.iter().sum::<f64>() + 1e-12);
    }

    #[test]
    fn inclusion_exclusion((r, q) in with_query()) {
        let d = q.dim();
        let mut alternating = 0i64;
        for mask in 1u32..(1 << d) {
            let members: Vec<usize> = (0..d).filter(|&j| mask & (1 << j) != 0).collect();
            let sub = TailCopulaQuery::new(
                members.iter().map(|&j| q.t_indices[j]).collect(),
                members.iter().map(|&j| q.x[j]).collect(),
                q.k,
            ).unwrap();
            let count = (empirical_tail_copula(&r, &sub).unwrap() * q.k).round() as i64;
            alternating += if members.len() % 2 == 1 { count } else { -count };
        }
        let union = empirical_stdf(&r, &q).unwrap() * q.k;
        prop_assert_eq!(union.round() as i64, alternating);
        prop_assert!((union - union.round()).abs() < 1e-9);
    }

    #[test]
    fn univariate_granularity(n in 1usize..300, k_frac in 0.01f64..1.0, x_frac in 0.0f64..1.0) {
        let k = (k_frac * n as f64).max(0.5);
        let x = x_frac * n as f64 / k;
        let col: Vec<u32> = (1..=n as u32).rev().collect();
        let r = RankMatrix::from_columns(vec![col], Grid::new(vec![0.5]).unwrap()).unwrap();
        prop_assert!((univariate(&r, 0, x, k) - x).abs() <= 2.0 / k);
    }
}

#[test]
fn comonotone_pair_matches_margin() {
    let col: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
    let values: Vec<f64> = col.iter().flat_map(|&v| [v, v.exp()]).collect();
    let r = compute_ranks(&sample(2, values)).unwrap();
    for x in [0.3, 1.0, 1.7] {
        let q = TailCopulaQuery::new(vec![0, 1], vec![x, x], 10.0).unwrap();
        assert_eq!(
            empirical_tail_copula(&r, &q).unwrap(),
            univariate(&r, 0, x, 10.0)
        );
    }
}
