use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::features::FeatureVector;
use crate::dataset::BubbleGraph;
use crate::geometry::{extract_adjacency_with, out_of_boundary_ratio, AdjacencyThresholds, Boundary, Floorplan};
use crate::{Error, Result};

/// Default out-of-boundary area tolerance for [`boundary_compatibility`].
pub const DEFAULT_TAU: f64 = 0.01;

fn to_matrix(features: &[FeatureVector]) -> Result<DMatrix<f64>> {
    let dim = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::validation("feature vectors have different lengths"));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("feature vectors must be finite"));
    }
    Ok(DMatrix::from_fn(features.len(), dim, |r, c| features[r][c]))
}

/// Column means and the unbiased (n − 1) covariance.
fn moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mean, cov)
}

fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

fn clamp_eigenvalues(values: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if let Some(v) = values.iter().find(|&&v| v < -1e-8) {
        return Err(Error::NumericFailure(format!("{what} has eigenvalue {v}")));
    }
    Ok(values.map(|v| v.max(0.0)))
}

/// Fréchet distance between Gaussians fitted to two feature sets.
///
/// The cross term uses `Tr((Σa Σb)^½) = Tr((Σa^½ Σb Σa^½)^½)`, evaluated with symmetric
/// eigendecompositions.
pub fn fid(features_a: &[FeatureVector], features_b: &[FeatureVector]) -> Result<f64> {
    let a = to_matrix(features_a)?;
    let b = to_matrix(features_b)?;
    if a.ncols() != b.ncols() {
        return Err(Error::validation("feature sets have different dimensions"));
    }
    let dim = a.ncols();
    for (name, m) in [("first", &a), ("second", &b)] {
        if m.nrows() < dim + 1 {
            return Err(Error::validation(format!(
                "{name} feature set has {} vectors, FID needs at least {}",
                m.nrows(),
                dim + 1
            )));
        }
    }
    let (mu_a, cov_a) = moments(&a);
    let (mu_b, cov_b) = moments(&b);
    let ea = sym_eigen(&cov_a);
    let root_vals = clamp_eigenvalues(&ea.eigenvalues, "covariance")?.map(f64::sqrt);
    let root_a = &ea.eigenvectors * DMatrix::from_diagonal(&root_vals) * ea.eigenvectors.transpose();
    let inner = &root_a * &cov_b * &root_a;
    let cross: f64 = clamp_eigenvalues(&sym_eigen(&inner).eigenvalues, "covariance product")?
        .iter()
        .map(|v| v.sqrt())
        .sum();
    let d = (mu_a - mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Trace of the unbiased sample covariance.
pub fn diversity_score(features: &[FeatureVector]) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::validation("diversity needs at least 2 feature vectors"));
    }
    Ok(moments(&to_matrix(features)?).1.trace())
}

/// Room-type mismatches plus room pairs whose connectivity differs between `target` and
/// the adjacency realized by `plan`, rooms matched by index. Pairs absent from `target`
/// count as not connected.
pub fn graph_compatibility(target: &BubbleGraph, plan: &Floorplan) -> Result<usize> {
    graph_compatibility_with(target, plan, &AdjacencyThresholds::default())
}

/// [`graph_compatibility`] with explicit adjacency thresholds.
pub fn graph_compatibility_with(target: &BubbleGraph, plan: &Floorplan, th: &AdjacencyThresholds) -> Result<usize> {
    let n = target.num_rooms();
    if plan.rooms.len() != n {
        return Err(Error::validation(format!(
            "plan has {} rooms, target graph has {n}",
            plan.rooms.len()
        )));
    }
    let types = plan.rooms.iter().zip(target.room_types()).filter(|(r, t)| r.room_type != **t).count();
    let realized = extract_adjacency_with(plan, th).adjacency_matrix();
    let wanted = target.adjacency_matrix();
    let mut edges = 0;
    for i in 0..n {
        for j in i + 1..n {
            if realized[i][j] != wanted[i][j] {
                edges += 1;
            }
        }
    }
    Ok(types + edges)
}

/// Whether each plan violates `b`: more than `tau` of its room area lies outside.
/// Plans without measurable room area count as violations.
pub fn boundary_violations(plans: &[Floorplan], b: &Boundary, tau: f64) -> Vec<bool> {
    use rayon::prelude::*;
    plans
        .par_iter()
        .map(|p| match out_of_boundary_ratio(p, b) {
            Ok(r) => r > tau,
            Err(_) => true,
        })
        .collect()
}

/// Fraction of `plans` violating `b` at tolerance `tau`.
pub fn boundary_compatibility(plans: &[Floorplan], b: &Boundary, tau: f64) -> Result<f64> {
    if plans.is_empty() {
        return Err(Error::validation("boundary compatibility needs at least one plan"));
    }
    let v = boundary_violations(plans, b, tau);
    Ok(v.iter().filter(|&&x| x).count() as f64 / v.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
