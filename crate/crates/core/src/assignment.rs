//! Minimum-cost rectangular assignment (Hungarian method with potentials).

/// Assigns each row to a distinct column (or each column to a distinct row,
/// whichever side is smaller) minimising the total cost.
///
/// Returns, per row, the assigned column. Exactly `min(rows, cols)` rows are
/// assigned. Costs must be finite.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        solve(rows, cols, |i, j| cost[i][j])
    } else {
        let by_col = solve(cols, rows, |i, j| cost[j][i]);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        out
    }
}

// n <= m; 1-based potentials over rows (u) and columns (v), p[j] = row matched to column j.
fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[Vec<f64>], a: &[Option<usize>]) -> f64 {
        a.iter().enumerate().filter_map(|(i, j)| j.map(|j| cost[i][j])).sum()
    }

    #[test]
    fn square() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        assert_eq!(total(&cost, &a), 5.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = vec![vec![10.0, 1.0, 7.0], vec![1.0, 10.0, 7.0]];
        let a = min_cost_assignment(&wide);
        assert_eq!(a, vec![Some(1), Some(0)]);

        let tall = vec![vec![10.0, 1.0], vec![1.0, 10.0], vec![0.5, 0.5]];
        let a = min_cost_assignment(&tall);
        assert_eq!(a.iter().filter(|x| x.is_some()).count(), 2);
        assert_eq!(total(&tall, &a), 1.5);
    }

    #[test]
    fn empty() {
        assert!(min_cost_assignment(&[]).is_empty());
        assert_eq!(min_cost_assignment(&[vec![], vec![]]), vec![None, None]);
    }
}
