//! Brute-force reference computations for validating the fast paths.
//!
//! These are deliberately independent implementations: the assignment-based
//! 1-D transport cost below shares no code with the merged-quantile-grid
//! walk in [`crate::sliced_ot`], so the two can check each other.

use ndarray::Array2;

use crate::error::{MddrError, Result};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Exact minimum-cost assignment on a square cost matrix (Hungarian
/// algorithm with potentials, O(n³)). Returns the total cost.
pub fn min_cost_assignment(cost: &Array2<f64>) -> f64 {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square matrix");
    // 1-indexed potentials and matching; p[j] is the row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
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
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[[p[j] - 1, j - 1]]).sum()
}

/// W_p^p between two uniform empirical measures on the line, solved as an
/// exact assignment problem: both sides are expanded to lcm(m, n) equal-mass
/// unit atoms and matched by the Hungarian algorithm. Intended for small
/// instances; the expansion is capped to keep the cubic solve cheap.
pub fn assignment_wasserstein_1d_pp(xs: &[f64], ys: &[f64], p: f64) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(MddrError::invalid("assignment reference needs nonempty inputs"));
    }
    let q = lcm(xs.len(), ys.len());
    if q > 240 {
        return Err(MddrError::invalid(format!(
            "assignment reference expansion {q} too large; use small instances"
        )));
    }
    let mut units_x = Vec::with_capacity(q);
    for &x in xs {
        units_x.extend(std::iter::repeat(x).take(q / xs.len()));
    }
    let mut units_y = Vec::with_capacity(q);
    for &y in ys {
        units_y.extend(std::iter::repeat(y).take(q / ys.len()));
    }
    let mut cost = Array2::<f64>::zeros((q, q));
    for (i, &x) in units_x.iter().enumerate() {
        for (j, &y) in units_y.iter().enumerate() {
            cost[[i, j]] = (x - y).abs().powf(p);
        }
    }
    Ok(min_cost_assignment(&cost) / q as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn assignment_matches_permutation_enumeration() {
        let cost = array![
            [4.0, 1.0, 3.0],
            [2.0, 0.0, 5.0],
            [3.0, 2.0, 2.0]
        ];
        // Enumerate all 6 permutations.
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let best = perms
            .iter()
            .map(|perm| (0..3).map(|i| cost[[i, perm[i]]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min_cost_assignment(&cost), best);
    }

    #[test]
    fn assignment_handles_negative_reduced_costs() {
        let cost = array![[-1.0, 2.0], [3.0, -4.0]];
        assert_eq!(min_cost_assignment(&cost), -5.0);
    }

    #[test]
    fn reference_handles_unequal_counts() {
        // masses (1) vs (1/2, 1/2): ship half the unit mass to each target.
        let w = assignment_wasserstein_1d_pp(&[0.0], &[0.0, 2.0], 1.0).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
    }
}
