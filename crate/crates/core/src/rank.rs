use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::sample::FunctionalSample;

/// Per-location ranks of a sample; each column is a permutation of `1..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankMatrix {
    // column-major: ranks[j * n + i] is the rank of ξ_i(t_j)
    ranks: Vec<u32>,
    n: usize,
    grid: Grid,
    ties: usize,
}

/// `rank_i(t) = #{α : ξ_α(t) ≤ ξ_i(t)}`, with exact ties broken by observation
/// index (the earlier observation gets the smaller rank).
pub fn compute_ranks(sample: &FunctionalSample) -> Result<RankMatrix> {
    let n = sample.n();
    let m = sample.grid().len();
    if n == 0 {
        return Err(invalid("cannot rank an empty sample"));
    }
    if n > u32::MAX as usize {
        return Err(invalid("sample too large to rank"));
    }
    let mut ranks = vec![0u32; n * m];
    let mut ties = 0;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for j in 0..m {
        let col = sample.column(j);
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at row {i}, column {j}")));
        }
        order.clear();
        order.extend(0..n);
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        ties += order.windows(2).filter(|w| col[w[0]] == col[w[1]]).count();
        for (pos, &i) in order.iter().enumerate() {
            ranks[j * n + i] = pos as u32 + 1;
        }
    }
    Ok(RankMatrix {
        ranks,
        n,
        grid: sample.grid().clone(),
        ties,
    })
}

impl RankMatrix {
    /// Builds a rank matrix from columns that are already permutations of `1..=n`.
    pub fn from_columns(columns: Vec<Vec<u32>>, grid: Grid) -> Result<Self> {
        if columns.len() != grid.len() {
            return Err(invalid("one rank column per grid location is required"));
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(invalid("rank columns must be nonempty"));
        }
        let mut seen = vec![false; n];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(invalid(format!("rank column {j} has the wrong length")));
            }
            seen.iter_mut().for_each(|s| *s = false);
            for &r in col {
                let r = r as usize;
                if r == 0 || r > n || std::mem::replace(&mut seen[r - 1], true) {
                    return Err(invalid(format!(
                        "rank column {j} is not a permutation of 1..={n}"
                    )));
                }
            }
        }
        Ok(Self {
            ranks: columns.into_iter().flatten().collect(),
            n,
            grid,
            ties: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn locations(&self) -> usize {
        self.grid.len()
    }

    /// Number of exact ties broken by observation index.
    pub fn tie_count(&self) -> usize {
        self.ties
    }

    pub fn column(&self, j: usize) -> &[u32] {
        &self.ranks[j * self.n..(j + 1) * self.n]
    }

    pub fn rank(&self, i: usize, j: usize) -> u32 {
        self.ranks[j * self.n + i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_column(values: &[f64]) -> RankMatrix {
        let s = FunctionalSample::new(values.to_vec(), Grid::new(vec![0.5]).unwrap()).unwrap();
        compute_ranks(&s).unwrap()
    }

    // The defining count, evaluated literally.
    fn count_rank(col: &[f64], i: usize) -> u32 {
        col.iter().filter(|&&v| v <= col[i]).count() as u32
    }

    #[test]
    fn matches_defining_count() {
        let col = [2.5, 0.1, 7.3];
        let r = single_column(&col);
        assert_eq!(r.column(0), &[2, 1, 3]);
        for i in 0..3 {
            assert_eq!(r.rank(i, 0), count_rank(&col, i));
        }
    }

    #[test]
    fn single_observation() {
        let s = FunctionalSample::new(
            vec![3.0, -1.0, 8.0],
            Grid::new(vec![0.0, 0.5, 1.0]).unwrap(),
        )
        .unwrap();
        let r = compute_ranks(&s).unwrap();
        assert!((0..3).all(|j| r.rank(0, j) == 1));
    }

    #[test]
    fn sorted_column() {
        assert_eq!(
            single_column(&[1.0, 2.0, 3.0, 4.0]).column(0),
            &[1, 2, 3, 4]
        );
    }

    #[test]
    fn ties_break_by_index_and_are_counted() {
        let r = single_column(&[1.0, 5.0, 1.0, 5.0, 1.0]);
        assert_eq!(r.column(0), &[1, 4, 2, 5, 3]);
        assert_eq!(r.tie_count(), 3);
    }

    #[test]
    fn from_columns_checks_permutations() {
        let g = Grid::new(vec![0.0, 1.0]).unwrap();
        assert!(RankMatrix::from_columns(vec![vec![1, 2], vec![2, 1]], g.clone()).is_ok());
        assert!(RankMatrix::from_columns(vec![vec![1, 1], vec![2, 1]], g.clone()).is_err());
        assert!(RankMatrix::from_columns(vec![vec![1, 3], vec![2, 1]], g.clone()).is_err());
        assert!(RankMatrix::from_columns(vec![vec![1, 2]], g).is_err());
    }
}
