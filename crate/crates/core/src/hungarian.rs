//! Rectangular assignment by the Hungarian method with potentials.

use crate::error::{Error, Result};

fn check(matrix: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if matrix.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("ragged assignment matrix".into()));
    }
    if rows > cols {
        return Err(Error::Shape(format!("{rows} rows cannot be matched into {cols} columns")));
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("assignment matrix has non-finite entries".into()));
    }
    Ok((rows, cols))
}

/// Column for every row at minimum total cost; needs `rows <= cols`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let (n, m) = check(cost)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based potentials; column 0 is the virtual start.
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
    let mut out = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    Ok(out)
}

/// Column for every row at maximum total weight; needs `rows <= cols`.
pub fn max_weight_assignment(weight: &[Vec<f64>]) -> Result<Vec<usize>> {
    let neg: Vec<Vec<f64>> = weight.iter().map(|r| r.iter().map(|w| -w).collect()).collect();
    min_cost_assignment(&neg)
}

pub fn assignment_value(matrix: &[Vec<f64>], cols: &[usize]) -> f64 {
    cols.iter().enumerate().map(|(i, &j)| matrix[i][j]).sum()
}

/// Exhaustive search over injective row-to-column maps. Test oracle.
pub fn brute_force_max(weight: &[Vec<f64>]) -> Result<(f64, Vec<usize>)> {
    let (n, m) = check(weight)?;
    fn go(w: &[Vec<f64>], i: usize, used: &mut [bool], cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if i == w.len() {
            let v = assignment_value(w, cur);
            if v > best.0 {
                *best = (v, cur.clone());
            }
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                go(w, i + 1, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    go(weight, 0, &mut vec![false; m], &mut Vec::new(), &mut best);
    Ok(best)
}
