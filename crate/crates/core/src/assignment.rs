//! Bottleneck assignment: match every row to a distinct column so that the
//! largest selected cost is as small as possible.
//!
//! The optimum is found by binary search over the sorted distinct costs with a
//! bipartite matching feasibility check (Kuhn's augmenting paths). Among all
//! optimal assignments the lexicographically smallest row-to-column sequence
//! is returned.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckAssignment {
    /// The minimax cost.
    pub value: f64,
    /// `columns[i]` is the column assigned to row `i`.
    pub columns: Vec<usize>,
}

/// Solves the bottleneck assignment for `cost` with `nrows <= ncols`.
///
/// Panics if `cost` has more rows than columns.
pub fn bottleneck_assignment(cost: &DMatrix<f64>) -> BottleneckAssignment {
    let (rows, cols) = cost.shape();
    assert!(rows <= cols, "bottleneck assignment needs rows <= cols");
    if rows == 0 {
        return BottleneckAssignment {
            value: 0.0,
            columns: Vec::new(),
        };
    }

    let mut levels: Vec<f64> = cost.iter().copied().collect();
    levels.sort_by(|a, b| a.total_cmp(b));
    levels.dedup();

    let mut lo = 0;
    let mut hi = levels.len() - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if Matcher::new(cost, levels[mid]).perfect_from(0, &vec![false; cols]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let threshold = levels[lo];

    // Fix rows one at a time to the smallest column that keeps the rest feasible.
    let matcher = Matcher::new(cost, threshold);
    let mut columns = Vec::with_capacity(rows);
    let mut used = vec![false; cols];
    for i in 0..rows {
        let mut chosen = None;
        for c in 0..cols {
            if used[c] || cost[(i, c)] > threshold {
                continue;
            }
            used[c] = true;
            let ok = matcher.perfect_from(i + 1, &used);
            used[c] = false;
            if ok {
                chosen = Some(c);
                break;
            }
        }
        let chosen = chosen.expect("threshold admits a perfect matching");
        used[chosen] = true;
        columns.push(chosen);
    }

    BottleneckAssignment {
        value: threshold,
        columns,
    }
}

struct Matcher<'a> {
    cost: &'a DMatrix<f64>,
    threshold: f64,
}

impl<'a> Matcher<'a> {
    fn new(cost: &'a DMatrix<f64>, threshold: f64) -> Self {
        Self { cost, threshold }
    }

    /// Whether rows `first..` can all be matched into unblocked columns.
    fn perfect_from(&self, first: usize, blocked: &[bool]) -> bool {
        let (rows, cols) = self.cost.shape();
        let mut owner: Vec<Option<usize>> = vec![None; cols];
        for row in first..rows {
            let mut visited = blocked.to_vec();
            if !self.augment(row, &mut visited, &mut owner) {
                return false;
            }
        }
        true
    }

    fn augment(&self, row: usize, visited: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for c in 0..self.cost.ncols() {
            if visited[c] || self.cost[(row, c)] > self.threshold {
                continue;
            }
            visited[c] = true;
            let free = match owner[c] {
                None => true,
                Some(other) => self.augment(other, visited, owner),
            };
            if free {
                owner[c] = Some(row);
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimax_differs_from_minsum() {
        // Min-sum picks the diagonal (1 + 10 = 11); minimax picks the anti-diagonal (max 6).
        let cost = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 6.0, 10.0]);
        let a = bottleneck_assignment(&cost);
        assert_eq!(a.value, 6.0);
        assert_eq!(a.columns, vec![1, 0]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let cost = DMatrix::from_element(3, 3, 1.0);
        let a = bottleneck_assignment(&cost);
        assert_eq!(a.columns, vec![0, 1, 2]);
    }

    #[test]
    fn rectangular_selects_best_columns() {
        let cost = DMatrix::from_row_slice(2, 4, &[9.0, 0.1, 9.0, 9.0, 9.0, 9.0, 9.0, 0.2]);
        let a = bottleneck_assignment(&cost);
        assert_eq!(a.value, 0.2);
        assert_eq!(a.columns, vec![1, 3]);
    }

    #[test]
    fn matches_brute_force_on_small_grids() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=4);
            // Coarse integer costs force many ties.
            let cost = DMatrix::from_fn(n, n, |_, _| rng.random_range(0..4) as f64);
            let fast = bottleneck_assignment(&cost);
            let mut best: Option<(f64, Vec<usize>)> = None;
            permutations(n, &mut |p| {
                let v = (0..n).map(|i| cost[(i, p[i])]).fold(f64::MIN, f64::max);
                let better = match &best {
                    None => true,
                    Some((bv, bp)) => v < *bv || (v == *bv && p < bp.as_slice()),
                };
                if better {
                    best = Some((v, p.to_vec()));
                }
            });
            let (bv, bp) = best.unwrap();
            assert_eq!(fast.value, bv);
            assert_eq!(fast.columns, bp);
        }
    }

    fn permutations(n: usize, f: &mut impl FnMut(&[usize])) {
        fn rec(prefix: &mut Vec<usize>, n: usize, f: &mut impl FnMut(&[usize])) {
            if prefix.len() == n {
                f(prefix);
                return;
            }
            for c in 0..n {
                if !prefix.contains(&c) {
                    prefix.push(c);
                    rec(prefix, n, f);
                    prefix.pop();
                }
            }
        }
        rec(&mut Vec::new(), n, f);
    }
}
