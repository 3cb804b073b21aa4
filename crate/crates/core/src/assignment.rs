//! Rectangular linear sum assignment (Hungarian method with potentials,
//! O(n²m)).

use nalgebra::DMatrix;

/// Minimum-cost assignment. With `n` rows and `m` columns every row is
/// assigned when `n <= m`, otherwise every column is. Returns `row → col`
/// and the total cost.
pub fn solve(cost: &DMatrix<f64>) -> (Vec<Option<usize>>, f64) {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return (vec![None; n], 0.0);
    }
    if n > m {
        let (cols, total) = solve(&cost.transpose());
        let mut rows = vec![None; n];
        for (c, r) in cols.into_iter().enumerate() {
            if let Some(r) = r {
                rows[r] = Some(c);
            }
        }
        return (rows, total);
    }

    // 1-based potentials; column 0 is a virtual start column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
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
    let mut rows = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            rows[owner[j] - 1] = Some(j - 1);
        }
    }
    let total = rows
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| cost[(i, c)]))
        .sum();
    (rows, total)
}
