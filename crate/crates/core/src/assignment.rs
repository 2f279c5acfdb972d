//! Linear assignment: minimize Σᵢ C[i, σ(i)] over permutations σ.
//!
//! The primary solver is a shortest-augmenting-path method with dual
//! potentials (Jonker–Volkenant style, O(n³)). An independent Munkres
//! star/prime implementation and an exhaustive search are kept as
//! cross-checks for testing.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A permutation with its assignment cost: row `i` is matched to column
/// `perm[i]`, and `value` is the sum of the matched entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub perm: Vec<usize>,
    pub value: f64,
}

fn check_costs(costs: &DMatrix<f64>) -> Result<usize> {
    let n = costs.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("empty cost matrix".into()));
    }
    if costs.ncols() != n {
        return Err(Error::Dimension(format!(
            "cost matrix is {}x{}, expected square",
            n,
            costs.ncols()
        )));
    }
    if costs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite cost entry".into()));
    }
    Ok(n)
}

/// Sum of matched entries, recomputed from the original matrix so the value
/// is exact whenever the entries and their sum are exactly representable.
fn assignment_value(costs: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| costs[(i, j)]).sum()
}

/// Minimize Σᵢ C[i, σ(i)] by shortest augmenting paths with potentials.
pub fn solve_lap(costs: &DMatrix<f64>) -> Result<Assignment> {
    let n = check_costs(costs)?;
    // The Dijkstra scan reads one row at a time, but DMatrix is
    // column-major; stream the costs into a row-major buffer once so the
    // hot loop reads sequential memory.
    let mut flat = vec![0.0f64; n * n];
    // Arrays are 1-based over columns with column 0 as a sentinel; p[j] is
    // the row currently assigned to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    // Row-reduction duals: u[i] = min of row i, folded into the copy pass.
    for j in 0..n {
        let col = costs.column(j);
        for i in 0..n {
            let c = col[i];
            flat[i * n + j] = c;
            if j == 0 || c < u[i + 1] {
                u[i + 1] = c;
            }
        }
    }
    // Column-reduction duals on the reduced costs: v[j] = minᵢ (C[i,j] - u[i]).
    v[1..=n].fill(f64::INFINITY);
    for i in 1..=n {
        let row = &flat[(i - 1) * n..i * n];
        let u_i = u[i];
        for j in 1..=n {
            let r = row[j - 1] - u_i;
            if r < v[j] {
                v[j] = r;
            }
        }
    }
    // Greedy pass: assign each row to the first free column whose reduced
    // cost is exactly zero. Both reductions leave a zero in every row and
    // column, so this resolves most rows; dual feasibility is untouched,
    // and the augmenting search below handles the remainder.
    let mut row_done = vec![false; n + 1];
    for i in 1..=n {
        let row = &flat[(i - 1) * n..i * n];
        let u_i = u[i];
        for j in 1..=n {
            if p[j] == 0 && (row[j - 1] - u_i) - v[j] == 0.0 {
                p[j] = i;
                row_done[i] = true;
                break;
            }
        }
    }
    for (i, &done) in row_done.iter().enumerate().skip(1) {
        if done {
            continue;
        }
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &flat[(i0 - 1) * n..i0 * n];
            let u_i0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            // Among tied minima prefer a free column: reaching one ends the
            // augmentation, which matters on plateaus of equal costs.
            let mut j1_free = false;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u_i0 - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    let mj = minv[j];
                    if mj < delta || (mj == delta && !j1_free && p[j] == 0) {
                        delta = mj;
                        j1 = j;
                        j1_free = p[j] == 0;
                    }
                }
            }
            for j in 0..=n {
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
        // Unwind the augmenting path.
        while j0 != 0 {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    Ok(Assignment {
        value: assignment_value(costs, &perm),
        perm,
    })
}

/// Minimize Σᵢ C[i, σ(i)] by the classic Munkres star/prime procedure.
///
/// Kept as an independently-coded cross-check for [`solve_lap`]; prefer
/// `solve_lap` in production paths.
pub fn solve_lap_munkres(costs: &DMatrix<f64>) -> Result<Assignment> {
    let n = check_costs(costs)?;
    let mut c = costs.clone();
    // Row then column reduction so every row and column holds an exact zero
    // (x - x is exact in floating point).
    for i in 0..n {
        let min = (0..n).map(|j| c[(i, j)]).fold(f64::INFINITY, f64::min);
        for j in 0..n {
            c[(i, j)] -= min;
        }
    }
    for j in 0..n {
        let min = (0..n).map(|i| c[(i, j)]).fold(f64::INFINITY, f64::min);
        for i in 0..n {
            c[(i, j)] -= min;
        }
    }

    const NONE: usize = usize::MAX;
    let mut starred_in_row = vec![NONE; n]; // column of the star in each row
    let mut starred_in_col = vec![NONE; n]; // row of the star in each column
    let mut primed_in_row = vec![NONE; n];
    let mut row_covered = vec![false; n];
    let mut col_covered = vec![false; n];

    for i in 0..n {
        for j in 0..n {
            if c[(i, j)] == 0.0 && starred_in_row[i] == NONE && starred_in_col[j] == NONE {
                starred_in_row[i] = j;
                starred_in_col[j] = i;
            }
        }
    }

    // Each outer pass either augments (one more star) or strictly lowers the
    // minimum uncovered value, so n³·range/ulp is a generous safety cap.
    let mut guard = 0usize;
    let guard_cap = 10_000 * n * n + 10_000;
    loop {
        guard += 1;
        if guard > guard_cap {
            return Err(Error::InvalidInput(
                "assignment cross-check failed to converge".into(),
            ));
        }
        for j in 0..n {
            col_covered[j] = starred_in_col[j] != NONE;
        }
        if col_covered.iter().filter(|&&x| x).count() == n {
            break;
        }
        row_covered.fill(false);
        primed_in_row.fill(NONE);
        'augment: loop {
            // Find an uncovered zero.
            let mut found = None;
            'search: for i in 0..n {
                if row_covered[i] {
                    continue;
                }
                for j in 0..n {
                    if !col_covered[j] && c[(i, j)] == 0.0 {
                        found = Some((i, j));
                        break 'search;
                    }
                }
            }
            match found {
                Some((i, j)) => {
                    primed_in_row[i] = j;
                    if starred_in_row[i] == NONE {
                        // Alternating star/prime path starting at the prime.
                        let (mut pi, mut pj) = (i, j);
                        loop {
                            let star_row = starred_in_col[pj];
                            starred_in_row[pi] = pj;
                            starred_in_col[pj] = pi;
                            if star_row == NONE {
                                break;
                            }
                            pi = star_row;
                            pj = primed_in_row[pi];
                        }
                        break 'augment;
                    } else {
                        row_covered[i] = true;
                        col_covered[starred_in_row[i]] = false;
                    }
                }
                None => {
                    // Shift the minimum uncovered value out of the matrix.
                    let mut delta = f64::INFINITY;
                    for i in 0..n {
                        if row_covered[i] {
                            continue;
                        }
                        for j in 0..n {
                            if !col_covered[j] {
                                delta = delta.min(c[(i, j)]);
                            }
                        }
                    }
                    for i in 0..n {
                        for j in 0..n {
                            if row_covered[i] && col_covered[j] {
                                c[(i, j)] += delta;
                            } else if !row_covered[i] && !col_covered[j] {
                                c[(i, j)] -= delta;
                            }
                        }
                    }
                }
            }
        }
    }
    let perm = starred_in_row;
    Ok(Assignment {
        value: assignment_value(costs, &perm),
        perm,
    })
}

/// Exhaustive minimum over all permutations; sizes above 9 are refused.
pub fn brute_force_lap(costs: &DMatrix<f64>) -> Result<Assignment> {
    let n = check_costs(costs)?;
    if n > 9 {
        return Err(Error::TooLarge(format!(
            "exhaustive assignment over {n}! permutations refused"
        )));
    }
    let mut best: Option<Assignment> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    // Heap's algorithm enumerates every permutation with single swaps.
    let mut stack = vec![0usize; n];
    let consider = |perm: &[usize], best: &mut Option<Assignment>| {
        let value = assignment_value(costs, perm);
        if best.as_ref().is_none_or(|b| value < b.value) {
            *best = Some(Assignment {
                perm: perm.to_vec(),
                value,
            });
        }
    };
    consider(&perm, &mut best);
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            consider(&perm, &mut best);
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    Ok(best.expect("n >= 1 guarantees at least one permutation"))
}
