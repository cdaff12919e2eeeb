//! Persistency-of-excitation certificates and the affine fundamental lemma.
//!
//! A sequence is persistently exciting of order `K` when its depth-`K` Hankel
//! matrix has full row rank `mK`. For data generated by a controllable affine
//! system, excitation of order `n + L + 1` guarantees that the stacked data
//! matrix (states, depth-`L` input Hankel, and a row of ones) reaches rank
//! `n + mL + 1`, so every length-`L` trajectory of the system is a linear
//! combination of the recorded data with coefficients summing to one. The row
//! of ones is what averages the affine term out; it costs exactly one extra
//! order of excitation compared to the linear case.
//!
//! All rank statements here are exact in exact arithmetic; floating point
//! enters only through the shared [`numerical_rank`] tolerance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::Dataset;
use crate::numerics::{hankel, min_norm_least_squares, numerical_rank};
use crate::{Error, Result};

/// Entries of the recorded noise larger than this disqualify a dataset from
/// the deterministic-data operations.
const DETERMINISTIC_NOISE_TOL: f64 = 1e-12;

/// Relative residual below which a target trajectory counts as representable.
pub const REPRESENTATION_TOL: f64 = 1e-6;

/// Trajectory coordinates constant to within this tolerance count as a
/// confining affine subspace direction.
pub const SUBSPACE_TOL: f64 = 1e-9;

/// Outcome of a persistency-of-excitation test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeReport {
    /// The order `K` that was tested.
    pub order_tested: usize,
    /// Observed rank of the depth-`K` Hankel matrix.
    pub hankel_rank: usize,
    /// Full row rank `mK` required for excitation.
    pub required_rank: usize,
    /// Whether the sequence is persistently exciting of the tested order.
    pub is_pe: bool,
    /// Whether the all-ones row lies in the row space of the Hankel matrix.
    /// Excitation of any higher order rules this out.
    pub ones_in_rowspace: bool,
    /// Whether the sequence length satisfies the necessary condition
    /// `d >= (m+1)K - 1`. A failing length cannot be excitng of order `K`,
    /// so this doubles as the short-data warning.
    pub length_sufficient: bool,
}

/// Tests persistency of excitation of order `order` for the columns of `s`.
pub fn is_persistently_exciting(s: &DMatrix<f64>, order: usize, rank_tol: f64) -> Result<PeReport> {
    let (m, d) = (s.nrows(), s.ncols());
    let h = hankel(s, order)?;
    let hankel_rank = numerical_rank(&h, rank_tol)?;
    let required_rank = m * order;
    let ones_in_rowspace = {
        let stacked = stack_rows(&[h.clone(), DMatrix::from_element(1, h.ncols(), 1.0)]);
        numerical_rank(&stacked, rank_tol)? == hankel_rank
    };
    Ok(PeReport {
        order_tested: order,
        hankel_rank,
        required_rank,
        is_pe: hankel_rank == required_rank,
        ones_in_rowspace,
        length_sufficient: d + 1 >= (m + 1) * order,
    })
}

/// For a sequence exciting of order `order`, verifies the two downward
/// consequences for every `K' < order`: excitation of order `K'` and the
/// ones row staying outside the Hankel row space.
///
/// Returns `None` when the precondition (excitation of order `order`) fails.
pub fn pe_monotonicity_check(
    s: &DMatrix<f64>,
    order: usize,
    rank_tol: f64,
) -> Result<Option<bool>> {
    let report = is_persistently_exciting(s, order, rank_tol)?;
    if !report.is_pe {
        return Ok(None);
    }
    for lower in 1..order {
        let r = is_persistently_exciting(s, lower, rank_tol)?;
        if !r.is_pe || r.ones_in_rowspace {
            return Ok(Some(false));
        }
    }
    Ok(Some(true))
}

/// Rank condition for constraint synthesis: the stacked matrix
/// `[X; U; 1ᵀ; W]` must reach rank `n + 2m + 1`.
pub fn check_rank_condition(ds: &Dataset, w_probes: &DMatrix<f64>, rank_tol: f64) -> Result<bool> {
    let (rank, required) = rank_condition_details(ds, w_probes, rank_tol)?;
    Ok(rank == required)
}

/// Rank condition with the observed and required ranks surfaced for
/// diagnostics.
pub fn rank_condition_details(
    ds: &Dataset,
    w_probes: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<(usize, usize)> {
    if w_probes.ncols() != ds.len() {
        return Err(Error::Dimension(format!(
            "probe matrix has width {}, dataset has length {}",
            w_probes.ncols(),
            ds.len()
        )));
    }
    if w_probes.nrows() != ds.m() {
        return Err(Error::Dimension(format!(
            "probe matrix has {} rows, dataset inputs have {}",
            w_probes.nrows(),
            ds.m()
        )));
    }
    let stacked = stack_rows(&[
        ds.x().clone(),
        ds.u().clone(),
        DMatrix::from_element(1, ds.len(), 1.0),
        w_probes.clone(),
    ]);
    let rank = numerical_rank(&stacked, rank_tol)?;
    Ok((rank, ds.n() + 2 * ds.m() + 1))
}

fn require_deterministic(ds: &Dataset, op: &'static str) -> Result<()> {
    if let Some(max) = ds.max_recorded_noise() {
        if max > DETERMINISTIC_NOISE_TOL {
            return Err(Error::StochasticData(op));
        }
    }
    Ok(())
}

/// Rank certificate of the fundamental lemma for a single deterministic
/// trajectory: `[X_{1:d-L+1}; H_L(U); 1ᵀ]` against rank `n + mL + 1`.
///
/// Reports the observed outcome regardless of whether the hypotheses
/// (controllability, excitation of order `n + L + 1`) hold, so it can be
/// used to exhibit counterexamples as well.
pub fn fundamental_lemma_rank(ds: &Dataset, horizon: usize, rank_tol: f64) -> Result<bool> {
    if !ds.is_single_trajectory() {
        return Err(Error::NotSingleTrajectory);
    }
    require_deterministic(ds, "fundamental_lemma_rank")?;
    if horizon == 0 || horizon > ds.len() {
        return Err(Error::Invalid(format!(
            "horizon must lie in 1..={}, got {horizon}",
            ds.len()
        )));
    }
    let cols = ds.len() - horizon + 1;
    let x_window = ds.x().view((0, 0), (ds.n(), cols)).into_owned();
    let h_u = hankel(ds.u(), horizon)?;
    let stacked = stack_rows(&[x_window, h_u, DMatrix::from_element(1, cols, 1.0)]);
    let rank = numerical_rank(&stacked, rank_tol)?;
    Ok(rank == ds.n() + ds.m() * horizon + 1)
}

/// Result of a trajectory-representation attempt.
#[derive(Debug, Clone)]
pub struct TrajectoryFit {
    /// Combination coefficients over the Hankel columns (least-norm).
    pub g: DVector<f64>,
    /// Absolute residual of the stacked linear system.
    pub residual: f64,
    /// Residual relative to `1 + |target|`.
    pub relative_residual: f64,
    /// Whether the residual clears [`REPRESENTATION_TOL`]. An infeasible
    /// outcome is informative: the target is not a trajectory of the data's
    /// system.
    pub feasible: bool,
}

/// Expresses a target input/output window as a combination of the recorded
/// data: solves `[H_L(U); H_L(Y); 1ᵀ] g = [vec(target_u); vec(target_y); 1]`
/// in the least-norm sense.
///
/// When the dataset has no explicit outputs, the full state is used
/// (`Y = X`).
pub fn represent_trajectory(
    ds: &Dataset,
    target_u: &DMatrix<f64>,
    target_y: &DMatrix<f64>,
) -> Result<TrajectoryFit> {
    if !ds.is_single_trajectory() {
        return Err(Error::NotSingleTrajectory);
    }
    require_deterministic(ds, "represent_trajectory")?;
    let horizon = target_u.ncols();
    if horizon == 0 || horizon > ds.len() {
        return Err(Error::Invalid(format!(
            "target horizon must lie in 1..={}, got {horizon}",
            ds.len()
        )));
    }
    if target_u.nrows() != ds.m() {
        return Err(Error::Dimension(
            "target inputs have the wrong height".into(),
        ));
    }
    if target_y.ncols() != horizon {
        return Err(Error::Dimension(
            "target outputs must share the input horizon".into(),
        ));
    }
    let y = match ds.y() {
        Some(y) => y.clone(),
        None => ds.x().clone(),
    };
    if target_y.nrows() != y.nrows() {
        return Err(Error::Dimension(
            "target outputs have the wrong height".into(),
        ));
    }
    let h_u = hankel(ds.u(), horizon)?;
    let h_y = hankel(&y, horizon)?;
    let stacked = stack_rows(&[
        h_u,
        h_y,
        DMatrix::from_element(1, ds.len() - horizon + 1, 1.0),
    ]);
    let mut rhs = Vec::with_capacity(stacked.nrows());
    for k in 0..horizon {
        rhs.extend_from_slice(target_u.column(k).as_slice());
    }
    for k in 0..horizon {
        rhs.extend_from_slice(target_y.column(k).as_slice());
    }
    rhs.push(1.0);
    let rhs = DVector::from_vec(rhs);
    let (g, residual) = min_norm_least_squares(&stacked, &rhs)?;
    let relative = residual / (1.0 + rhs.norm());
    Ok(TrajectoryFit {
        g,
        residual,
        relative_residual: relative,
        feasible: relative <= REPRESENTATION_TOL,
    })
}

/// Coordinate directions along which the state trajectory is constant:
/// indices `i` with `e_iᵀ x` fixed over the whole run (within
/// [`SUBSPACE_TOL`]).
///
/// A nonempty answer means the trajectory is confined to an affine subspace
/// parallel to a coordinate hyperplane, which rules out excitation of order
/// `n + 2` for the generating input.
pub fn affine_subspace_probe(ds: &Dataset) -> Result<Vec<usize>> {
    let states = ds.state_sequence()?;
    let mut confined = Vec::new();
    for i in 0..states.nrows() {
        let first = states[(i, 0)];
        let constant = (0..states.ncols()).all(|k| (states[(i, k)] - first).abs() <= SUBSPACE_TOL);
        if constant {
            confined.push(i);
        }
    }
    Ok(confined)
}

/// Vertically stacks row blocks that share a column count.
fn stack_rows(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, DMatrix::ncols);
    let rows = blocks.iter().map(DMatrix::nrows).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(b);
        at += b.nrows();
    }
    out
}
