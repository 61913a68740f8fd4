//! Surrogate feature extractors and the FID, diversity, graph- and boundary-compatibility
//! scores, plus the sampling protocol that ties them together.

mod features;
mod scores;

use serde::{Deserialize, Serialize};

use crate::dataset::FloorplanRecord;
use crate::denoiser::DenoiserModel;
use crate::diffusion::{sample, sample_one, NoiseSchedule, SampleRequest, SamplerOptions};
use crate::geometry::{AdjacencyThresholds, Floorplan};
use crate::{Error, Result};

pub use features::{
    geometric_features, raster_projection_features, ExtractorKind, FeatureExtractor, FeatureVector,
    GEOMETRIC_DIM, RASTER_SIZE,
};
pub use scores::{
    boundary_compatibility, boundary_violations, diversity_score, fid, graph_compatibility,
    graph_compatibility_with, mean_std,
    DEFAULT_TAU,
};

/// Sample counts, seeds and settings used by [`evaluate`]; echoed in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    /// Plans sampled (round-robin over the eval set) for FID, GC and BC.
    pub sample_count: usize,
    pub ds_conditions: usize,
    pub ds_samples: usize,
    pub seed: u64,
    pub ds_seed: u64,
    pub lambda: f64,
    pub tau: f64,
    /// Wall gap and facing length that make two rooms adjacent.
    pub adjacency: AdjacencyThresholds,
    pub stride: usize,
    pub extractor: FeatureExtractor,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            sample_count: 512,
            ds_conditions: 4,
            ds_samples: 100,
            seed: 0,
            ds_seed: 1,
            lambda: 1.0,
            tau: DEFAULT_TAU,
            adjacency: AdjacencyThresholds::default(),
            stride: 1,
            extractor: FeatureExtractor::geometric(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when either feature set is smaller than `dim + 1`.
    pub fid: Option<f64>,
    pub gc_mean: f64,
    pub gc_std: f64,
    pub bc_mean: f64,
    pub bc_std: f64,
    pub ds_mean: f64,
    pub ds_std: f64,
    pub ds_per_condition: Vec<f64>,
    pub protocol: Protocol,
}

impl MetricsReport {
    /// One header row and one value row: FID, GC, BC, DS with their directions.
    pub fn table(&self) -> String {
        let fid = self.fid.map_or("n/a".to_string(), |f| format!("{f:.2}"));
        let gc = format!("{:.2}±{:.2}", self.gc_mean, self.gc_std);
        let bc = format!("{:.2}±{:.3}", self.bc_mean, self.bc_std);
        let ds = format!("{:.2}±{:.2}", self.ds_mean, self.ds_std);
        format!(
            "{:>10} | {:>14} | {:>14} | {:>14}\n{fid:>10} | {gc:>14} | {bc:>14} | {ds:>14}\n",
            "FID (↓)", "GC (↓)", "BC (↓)", "DS (↑)"
        )
    }
}

fn request(rec: &FloorplanRecord, lambda: f64, num_samples: usize, seed: u64) -> SampleRequest {
    SampleRequest {
        graph: rec.graph.clone(),
        boundary: rec.plan.boundary.clone(),
        lambda,
        num_samples,
        seed,
        corner_counts: Some(rec.plan.corner_counts()),
    }
}

/// Samples per the protocol and scores the results. Sample `i` of the main batch is
/// conditioned on `eval_set[i % len]` with seed `seed + i`; DS condition `c` is
/// `conditions[c % len]` with seeds starting at `ds_seed + c·ds_samples`.
pub fn evaluate(
    model: &DenoiserModel,
    eval_set: &[FloorplanRecord],
    conditions: &[FloorplanRecord],
    sched: &NoiseSchedule,
    protocol: &Protocol,
) -> Result<MetricsReport> {
    use rayon::prelude::*;
    if eval_set.is_empty() || conditions.is_empty() {
        return Err(Error::validation("evaluation needs a non-empty eval set and condition set"));
    }
    if protocol.sample_count == 0 || protocol.ds_conditions == 0 || protocol.ds_samples < 2 {
        return Err(Error::validation("protocol needs samples, conditions and ≥2 DS samples"));
    }
    protocol.extractor.validate()?;
    let opts = SamplerOptions { stride: protocol.stride };
    let generated: Vec<(usize, Floorplan)> = (0..protocol.sample_count)
        .into_par_iter()
        .map(|i| {
            let rec = &eval_set[i % eval_set.len()];
            let req = request(rec, protocol.lambda, 1, protocol.seed.wrapping_add(i as u64));
            sample_one(model, &req, sched, None, opts, 0).map(|p| (i % eval_set.len(), p))
        })
        .collect::<Result<_>>()?;

    let mut gc = Vec::with_capacity(generated.len());
    let mut bc = Vec::new();
    for (r, plan) in &generated {
        let rec = &eval_set[*r];
        gc.push(graph_compatibility_with(&rec.graph, plan, &protocol.adjacency)? as f64);
        if let Some(b) = &rec.plan.boundary {
            let v = boundary_violations(std::slice::from_ref(plan), b, protocol.tau)[0];
            bc.push(if v { 1.0 } else { 0.0 });
        }
    }
    let plans: Vec<Floorplan> = generated.into_iter().map(|(_, p)| p).collect();
    let real: Vec<Floorplan> = eval_set.iter().map(|r| r.plan.clone()).collect();
    let fake_f = protocol.extractor.extract_all(&plans)?;
    let real_f = protocol.extractor.extract_all(&real)?;
    let dim = protocol.extractor.dim;
    let fid = if fake_f.len() > dim && real_f.len() > dim { Some(fid(&real_f, &fake_f)?) } else { None };

    let mut ds = Vec::with_capacity(protocol.ds_conditions);
    for c in 0..protocol.ds_conditions {
        let rec = &conditions[c % conditions.len()];
        let seed = protocol.ds_seed.wrapping_add((c * protocol.ds_samples) as u64);
        let req = request(rec, protocol.lambda, protocol.ds_samples, seed);
        let plans = sample(model, &req, sched, None, opts)?;
        ds.push(diversity_score(&protocol.extractor.extract_all(&plans)?)?);
    }
    let (gc_mean, gc_std) = mean_std(&gc);
    let (bc_mean, bc_std) = mean_std(&bc);
    let (ds_mean, ds_std) = mean_std(&ds);
    Ok(MetricsReport {
        fid,
        gc_mean,
        gc_std,
        bc_mean,
        bc_std,
        ds_mean,
        ds_std,
        ds_per_condition: ds,
        protocol: protocol.clone(),
    })
}
