//! Minimum-cost assignment for rectangular cost matrices (Hungarian method
//! with row/column potentials, O(n²m)).

/// Optimal assignment of `min(rows, cols)` pairs.
///
/// Returns the total cost and the matched `(row, col)` pairs sorted by row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (f64, Vec<(usize, usize)>) {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (0.0, Vec::new());
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols));

    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| cost[r][c]).collect())
            .collect();
        let (total, pairs) = min_cost_assignment(&transposed);
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return (total, pairs);
    }

    // 1-based arrays; column 0 is the virtual source.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
    (total, pairs)
}
