//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Solves `max cᵀy  s.t.  A y <= b, y >= 0` for desk-scale dense instances.
//! Rows with negative right-hand sides get artificial variables; phase one
//! maximizes minus their sum, phase two continues on the same tableau with
//! the artificial columns barred from entering. Bland's rule (smallest
//! eligible index enters, smallest basic index breaks ratio ties) guarantees
//! termination without cycling.

use crate::{Error, Result};

/// Pivot eligibility threshold for reduced costs and ratio-test entries.
pub(crate) const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RawStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Debug)]
pub(crate) struct RawSolution {
    pub values: Vec<f64>,
    pub status: RawStatus,
    pub iterations: usize,
}

pub(crate) fn solve_standard_form(
    rows: &[Vec<f64>],
    rhs: &[f64],
    objective: &[f64],
    max_pivots: usize,
) -> Result<RawSolution> {
    let k = rows.len();
    let nv = objective.len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != nv {
            return Err(Error::Dimension(format!(
                "lp row {i} has {} coefficients, expected {nv}",
                r.len()
            )));
        }
    }
    if rhs.len() != k {
        return Err(Error::Dimension(
            "lp rhs length disagrees with row count".into(),
        ));
    }

    let n_art = rhs.iter().filter(|&&b| b < 0.0).count();
    let ncols = nv + k + n_art;

    // tableau: k rows of [vars | slacks | artificials | rhs]
    let mut t = vec![vec![0.0; ncols + 1]; k];
    let mut basis = vec![0usize; k];
    let mut art_at = nv + k;
    for i in 0..k {
        let flip = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            t[i][j] = flip * rows[i][j];
        }
        t[i][nv + i] = flip;
        t[i][ncols] = flip * rhs[i];
        if rhs[i] < 0.0 {
            t[i][art_at] = 1.0;
            basis[i] = art_at;
            art_at += 1;
        } else {
            basis[i] = nv + i;
        }
    }

    // phase-two objective row (reduced costs of `maximize c y`)
    let mut obj = vec![0.0; ncols + 1];
    obj[..nv].copy_from_slice(objective);

    let mut iterations = 0usize;

    if n_art > 0 {
        // phase-one row: maximize minus the artificial sum, expressed in
        // terms of the current (artificial) basis
        let mut phase1 = vec![0.0; ncols + 1];
        for v in phase1[nv + k..ncols].iter_mut() {
            *v = -1.0;
        }
        for i in 0..k {
            if basis[i] >= nv + k {
                for (v, row_v) in phase1.iter_mut().zip(&t[i]) {
                    *v += row_v;
                }
            }
        }
        let status = run_simplex(
            &mut t,
            &mut basis,
            &mut phase1,
            Some(&mut obj),
            nv + k,
            max_pivots,
            &mut iterations,
            "phase one",
        )?;
        if status == RawStatus::Unbounded {
            // cannot happen: the phase-one objective is bounded above by 0
            return Err(Error::LpSolver("phase one reported unbounded".into()));
        }
        // the rhs cell of the phase-one row carries the remaining
        // artificial sum
        if phase1[ncols] > PIVOT_TOL {
            return Ok(RawSolution {
                values: vec![0.0; nv],
                status: RawStatus::Infeasible,
                iterations,
            });
        }
        // Drive leftover zero-level artificials out of the basis so later
        // pivots cannot reactivate them. Rows with no structural entry are
        // redundant and stay at zero untouched.
        for i in 0..k {
            if basis[i] >= nv + k {
                if let Some(j) = (0..nv + k).find(|&j| t[i][j].abs() > PIVOT_TOL) {
                    apply_pivot(&mut t, &mut basis, &mut obj, None, i, j);
                }
            }
        }
    }

    let status = run_simplex(
        &mut t,
        &mut basis,
        &mut obj,
        None,
        nv + k, // artificial columns are barred from entering in phase 2
        max_pivots,
        &mut iterations,
        "phase two",
    )?;

    let mut values = vec![0.0; nv];
    for i in 0..k {
        if basis[i] < nv {
            values[basis[i]] = t[i][ncols];
        }
    }
    Ok(RawSolution {
        values,
        status,
        iterations,
    })
}

/// One tableau pivot at `(pivot_row, entering)`, updating the objective row
/// and an optional second row by the same elimination.
fn apply_pivot(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    shadow: Option<&mut Vec<f64>>,
    pivot_row: usize,
    entering: usize,
) {
    let pivot = t[pivot_row][entering];
    for v in t[pivot_row].iter_mut() {
        *v /= pivot;
    }
    let pivot_vals = t[pivot_row].clone();
    let eliminate = |row: &mut [f64]| {
        let factor = row[entering];
        if factor != 0.0 {
            for (v, pv) in row.iter_mut().zip(&pivot_vals) {
                *v -= factor * pv;
            }
        }
    };
    for (i, row) in t.iter_mut().enumerate() {
        if i != pivot_row {
            eliminate(row);
        }
    }
    eliminate(obj);
    if let Some(shadow) = shadow {
        eliminate(shadow);
    }
    basis[pivot_row] = entering;
}

/// Runs Bland-rule pivoting until optimality or unboundedness. Columns with
/// index `>= enter_limit` never enter the basis. The optional `shadow` row is
/// kept consistent through the same eliminations (used to carry the phase-two
/// objective through phase one).
#[allow(clippy::too_many_arguments)]
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    mut shadow: Option<&mut Vec<f64>>,
    enter_limit: usize,
    max_pivots: usize,
    iterations: &mut usize,
    phase: &'static str,
) -> Result<RawStatus> {
    let k = t.len();
    let ncols = obj.len() - 1;
    loop {
        // Bland: smallest-index non-basic column with positive reduced cost
        let entering = (0..enter_limit).find(|&j| obj[j] > PIVOT_TOL && !basis.contains(&j));
        let Some(entering) = entering else {
            return Ok(RawStatus::Optimal);
        };

        // ratio test with Bland tie-break on the leaving basic index
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..k {
            let a = t[i][entering];
            if a > PIVOT_TOL {
                let ratio = t[i][ncols].max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - PIVOT_TOL || (ratio <= lr + PIVOT_TOL && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((pivot_row, _)) = leave else {
            return Ok(RawStatus::Unbounded);
        };

        *iterations += 1;
        if *iterations > max_pivots {
            return Err(Error::LpIterationLimit {
                limit: max_pivots,
                phase,
            });
        }

        apply_pivot(t, basis, obj, shadow.as_deref_mut(), pivot_row, entering);
    }
}
