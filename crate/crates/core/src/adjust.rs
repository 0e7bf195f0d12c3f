//! Regularized tour-count adjustment: the ridge solve over SLB classes,
//! integer rounding with feasibility repair, and cloning/removal of node
//! tours to produce the target tour set.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::demand::NodeTour;
use crate::error::{Error, Result};
use crate::linalg::spd_solve;
use crate::network::Route;
use crate::rng::{substream, Domain};
use crate::slb::{MappingMatrix, SlbClass};

/// Observed minus simulated count per screenline.
pub fn gap_vector(observed: &[f64], simulated: &[f64]) -> Result<Vec<f64>> {
    if observed.len() != simulated.len() {
        return Err(Error::DimensionMismatch { expected: observed.len(), actual: simulated.len() });
    }
    Ok(observed.iter().zip(simulated).map(|(o, s)| o - s).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub x: Vec<f64>,
    /// `‖(AAᵀ + λI)x − Ay‖∞`.
    pub residual: f64,
    /// `1e-8 · (1 + ‖Ay‖∞)`.
    pub tolerance: f64,
}

impl RidgeSolution {
    pub fn satisfies_first_order(&self) -> bool {
        self.residual <= self.tolerance
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Residual of the stationarity condition `(AAᵀ + λI)x = Ay`, evaluated
/// sparsely, together with `‖Ay‖∞`.
pub fn first_order_residual(a: &MappingMatrix, y: &[f64], lambda: f64, x: &[f64]) -> Result<(f64, f64)> {
    let atx = a.transpose_mul(x)?;
    let aatx = a.mul(&atx)?;
    let ay = a.mul(y)?;
    let r = aatx.iter().zip(x).zip(&ay).map(|((p, xi), q)| p + lambda * xi - q).collect::<Vec<_>>();
    Ok((inf_norm(&r), inf_norm(&ay)))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("ridge penalty must be positive, got {lambda}")))
    }
}

fn finish(a: &MappingMatrix, y: &[f64], lambda: f64, x: Vec<f64>) -> Result<RidgeSolution> {
    let (residual, ay) = first_order_residual(a, y, lambda, &x)?;
    Ok(RidgeSolution { x, residual, tolerance: 1e-8 * (1.0 + ay) })
}

/// Minimizer of `‖y − Aᵀx‖² + λ‖x‖²`.
///
/// Solved through the screenline-sized system: `x* = A(AᵀA + λI)⁻¹y`, which
/// equals `(AAᵀ + λI)⁻¹Ay` by the push-through identity but only needs a
/// `|K| × |K|` Cholesky factorization.
pub fn ridge_solve(a: &MappingMatrix, y: &[f64], lambda: f64) -> Result<RidgeSolution> {
    check_lambda(lambda)?;
    let k = a.n_cols();
    if y.len() != k {
        return Err(Error::DimensionMismatch { expected: k, actual: y.len() });
    }
    let mut g = a.gram();
    for i in 0..k {
        g[i * k + i] += lambda;
    }
    let z = spd_solve(DMatrix::from_row_slice(k, k, &g), &DVector::from_column_slice(y))
        .expect("AᵀA + λI is positive definite for λ > 0");
    let x = a.mul(z.as_slice())?;
    finish(a, y, lambda, x)
}

/// Same minimizer through the class-sized system `(AAᵀ + λI)x = Ay`. Only
/// practical for small |L|; kept for cross-checking the screenline-sized form.
pub fn ridge_solve_primal(a: &MappingMatrix, y: &[f64], lambda: f64) -> Result<RidgeSolution> {
    check_lambda(lambda)?;
    if y.len() != a.n_cols() {
        return Err(Error::DimensionMismatch { expected: a.n_cols(), actual: y.len() });
    }
    let l = a.n_rows();
    let m = DMatrix::from_fn(l, l, |i, j| {
        let shared = a.row(i).iter().filter(|c| a.row(j).binary_search(c).is_ok()).count() as f64;
        if i == j {
            shared + lambda
        } else {
            shared
        }
    });
    let rhs = DVector::from_vec(a.mul(y)?);
    let x = spd_solve(m, &rhs).expect("AAᵀ + λI is positive definite for λ > 0");
    finish(a, y, lambda, x.as_slice().to_vec())
}

/// `J = ‖Aᵀx − y‖² + λ‖x‖²`.
pub fn objective(a: &MappingMatrix, y: &[f64], lambda: f64, x: &[f64]) -> Result<f64> {
    if y.len() != a.n_cols() {
        return Err(Error::DimensionMismatch { expected: a.n_cols(), actual: y.len() });
    }
    let atx = a.transpose_mul(x)?;
    let fit: f64 = atx.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
    let penalty: f64 = x.iter().map(|v| v * v).sum();
    Ok(fit + lambda * penalty)
}

/// Integer adjustment per class after rounding and repair.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjustment {
    /// Continuous solution of the unconstrained problem.
    pub x_star: Vec<f64>,
    /// Continuous solution after the last repair pass (pinned entries fixed).
    pub x_repaired: Vec<f64>,
    pub rounded: Vec<i64>,
    pub pinned: Vec<bool>,
    /// Number of re-solves performed by the repair loop.
    pub repair_passes: usize,
}

impl Adjustment {
    pub fn zero(n: usize) -> Self {
        Self {
            x_star: vec![0.0; n],
            x_repaired: vec![0.0; n],
            rounded: vec![0; n],
            pinned: vec![false; n],
            repair_passes: 0,
        }
    }

    pub fn rounded_f64(&self) -> Vec<f64> {
        self.rounded.iter().map(|&v| v as f64).collect()
    }
}

/// Rounds half away from zero and, while some class would lose more tours
/// than it has, pins those classes to full removal, moves their contribution
/// into the gap and re-solves the remaining classes. The pinned set only
/// grows, so the loop ends after at most |L| passes.
pub fn round_and_repair(
    a: &MappingMatrix,
    y: &[f64],
    lambda: f64,
    x_star: &[f64],
    class_counts: &[f64],
) -> Result<Adjustment> {
    let n = a.n_rows();
    if x_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x_star.len() });
    }
    if class_counts.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: class_counts.len() });
    }
    let mut pinned = vec![false; n];
    let mut x = x_star.to_vec();
    let mut passes = 0;
    loop {
        let rounded: Vec<i64> =
            (0..n).map(|l| if pinned[l] { -(class_counts[l] as i64) } else { x[l].round() as i64 }).collect();
        let violators: Vec<usize> = (0..n).filter(|&l| !pinned[l] && (rounded[l] as f64) < -class_counts[l]).collect();
        if violators.is_empty() {
            return Ok(Adjustment { x_star: x_star.to_vec(), x_repaired: x, rounded, pinned, repair_passes: passes });
        }
        for l in violators {
            pinned[l] = true;
        }
        passes += 1;
        let fixed: Vec<f64> = (0..n).map(|l| if pinned[l] { -class_counts[l] } else { 0.0 }).collect();
        let shift = a.transpose_mul(&fixed)?;
        let y_free: Vec<f64> = y.iter().zip(&shift).map(|(v, s)| v - s).collect();
        let free: Vec<usize> = (0..n).filter(|&l| !pinned[l]).collect();
        let sub = ridge_solve(&a.select_rows(&free), &y_free, lambda)?;
        x = fixed;
        for (&l, v) in free.iter().zip(sub.x) {
            x[l] = v;
        }
    }
}

/// The adjusted tour set with its provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetTours {
    pub tours: Vec<NodeTour>,
    /// (source tour id, clone tour id), in creation order.
    pub clones: Vec<(u64, u64)>,
    /// Removed tour ids, ascending.
    pub removed: Vec<u64>,
}

impl TargetTours {
    /// Routes for the target set: clones reuse their source's route.
    pub fn routes(&self, original: &BTreeMap<u64, Route>) -> BTreeMap<u64, Route> {
        let mut out: BTreeMap<u64, Route> = original.clone();
        for id in &self.removed {
            out.remove(id);
        }
        for (src, new) in &self.clones {
            if let Some(r) = original.get(src) {
                out.insert(*new, r.clone());
            }
        }
        out
    }
}

/// Clones or removes member tours of each class. Clones are drawn uniformly
/// with replacement, removals uniformly without replacement, each class from
/// its own substream.
pub fn apply_adjustment(tours: &[NodeTour], classes: &[SlbClass], rounded: &[i64], seed: u64) -> Result<TargetTours> {
    if rounded.len() != classes.len() {
        return Err(Error::DimensionMismatch { expected: classes.len(), actual: rounded.len() });
    }
    let by_id: BTreeMap<u64, &NodeTour> = tours.iter().map(|t| (t.id, t)).collect();
    let mut next_id = tours.iter().map(|t| t.id).max().unwrap_or(0) + 1;
    let mut removed = BTreeSet::new();
    let mut clones = Vec::new();
    let mut new_tours = Vec::new();
    for (l, (class, &adj)) in classes.iter().zip(rounded).enumerate() {
        if adj == 0 {
            continue;
        }
        let size = class.count();
        if adj < 0 && (-adj) as usize > size {
            return Err(Error::InfeasibleAdjustment { class: l, requested: -adj, available: size });
        }
        if size == 0 {
            return Err(Error::InfeasibleAdjustment { class: l, requested: adj, available: 0 });
        }
        let mut rng = substream(seed, Domain::Adjustment, l as u64);
        if adj > 0 {
            for _ in 0..adj {
                let src = class.members[rng.random_range(0..size)];
                let source = by_id.get(&src).ok_or(Error::MissingRoute(src))?;
                let mut copy = (*source).clone();
                copy.id = next_id;
                clones.push((src, next_id));
                new_tours.push(copy);
                next_id += 1;
            }
        } else {
            for i in index::sample(&mut rng, size, (-adj) as usize) {
                removed.insert(class.members[i]);
            }
        }
    }
    let mut out: Vec<NodeTour> = tours.iter().filter(|t| !removed.contains(&t.id)).cloned().collect();
    out.extend(new_tours);
    Ok(TargetTours { tours: out, clones, removed: removed.into_iter().collect() })
}
