//! Exact optimal transport between equal-size sample sets.
//!
//! With uniform weights and equal cardinality the optimal coupling is a
//! permutation, so the transport cost is a linear-sum assignment over the
//! `N×N` matrix of ground costs `‖x_i − y_j‖^p`, solved here with the
//! shortest-augmenting-path Hungarian method in `O(N³)`.

use super::{check_same_shape, Assignment, Exponent};
use crate::error::{Error, Result};
use crate::linalg::{exact_sum, Matrix};

/// Squared Euclidean distance between two rows.
#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `cost[i][j] = ‖x_i − y_j‖^p`.
pub fn pairwise_cost(x: &Matrix, y: &Matrix, p: Exponent) -> Result<Matrix> {
    super::check_same_width(x, y)?;
    Ok(Matrix::from_fn(x.rows(), y.rows(), |i, j| {
        p.apply(dist_sq(x.row(i), y.row(j)))
    }))
}

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns the assignment `perm[i] = j` of rows to columns.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    let n = cost.rows();
    if !cost.is_square() {
        return Err(Error::Shape(format!(
            "assignment needs a square cost matrix, got {:?}",
            cost.dims()
        )));
    }
    if n == 0 {
        return Err(Error::Empty);
    }
    if !cost.all_finite() {
        return Err(Error::Domain("cost matrix has non-finite entries".into()));
    }

    // Potentials and matching are 1-indexed; index 0 is a virtual column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let cost_row = cost.row(i0 - 1);
            let ui0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost_row[j - 1] - ui0 - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        // Flip the augmenting path.
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    Assignment::new(perm)
}

/// Total cost `Σ_i cost[i][perm[i]]`, correctly rounded so the value is
/// independent of which side is indexed.
pub fn assignment_cost(cost: &Matrix, assignment: &Assignment) -> f64 {
    exact_sum(
        assignment
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[(i, j)]),
    )
}

/// Exact OT cost `min_π Σ_i ‖x_i − y_π(i)‖^p` and one optimal matching.
/// In 1D with `p = 1`, where optima are rarely unique, the total is taken
/// from the sample values so that it is the same for every optimum.
pub fn ot_cost(x: &Matrix, y: &Matrix, p: Exponent) -> Result<(f64, Assignment)> {
    check_same_shape(x, y)?;
    let cost = pairwise_cost(x, y, p)?;
    let assignment = hungarian(&cost)?;
    let total = if x.cols() == 1 && p == Exponent::One {
        let perm = assignment.as_slice();
        super::exact_abs_diff_sum((0..x.rows()).map(|i| (x[(i, 0)], y[(perm[i], 0)])))
    } else {
        assignment_cost(&cost, &assignment)
    };
    Ok((total, assignment))
}

/// Gradient of `Σ_i ‖x_i − y_π(i)‖^p` with respect to the rows of `y`,
/// holding the matching fixed.
pub fn ot_grad(x: &Matrix, y: &Matrix, assignment: &Assignment, p: Exponent) -> Result<Matrix> {
    check_same_shape(x, y)?;
    if assignment.len() != x.rows() {
        return Err(Error::Domain(format!(
            "assignment of length {} for {} samples",
            assignment.len(),
            x.rows()
        )));
    }
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    for (i, &j) in assignment.as_slice().iter().enumerate() {
        let xi = x.row(i);
        let yj = y.row(j);
        let g = grad.row_mut(j);
        match p {
            Exponent::Two => {
                for ((gk, a), b) in g.iter_mut().zip(yj).zip(xi) {
                    *gk = 2.0 * (a - b);
                }
            }
            Exponent::One => {
                let dist = dist_sq(xi, yj).sqrt();
                if dist > 0.0 {
                    for ((gk, a), b) in g.iter_mut().zip(yj).zip(xi) {
                        *gk = (a - b) / dist;
                    }
                }
            }
        }
    }
    Ok(grad)
}
