//! Floorplan datasets: records, JSON-lines I/O, out-of-distribution constructions,
//! corner-count histograms and coordinate quantization.

mod graph;
mod histogram;
mod io;
mod ood;
mod quantize;

use rand::seq::index;

use crate::geometry::Floorplan;
use crate::{rng, Error, Result};

pub use graph::{BubbleGraph, Edge, GraphWire};
pub use histogram::{build_corner_histogram, sample_corner_counts, CornerHistogram};
pub use io::{
    load_dataset, normalize_plan, parse_record, record_to_json, record_to_wire, save_dataset, Dataset,
    DatasetManifest, RecordWire, RoomWire, Strictness, COORDINATE_CONVENTION,
};
pub use ood::{apply_drift, gen_pentagon_set, PENTAGON_OUTER_TYPES};
pub use quantize::{bin_center, dequantize, quantize, quantize_coord, QuantizedFloorplan};

/// A plan with its conditioning graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorplanRecord {
    pub id: String,
    pub plan: Floorplan,
    pub graph: BubbleGraph,
}

impl FloorplanRecord {
    pub fn new(id: impl Into<String>, plan: Floorplan, graph: BubbleGraph) -> Result<Self> {
        let rec = Self { id: id.into(), plan, graph };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.graph.num_rooms() != self.plan.rooms.len() {
            return Err(Error::validation(format!(
                "record `{}`: graph has {} rooms but plan has {}",
                self.id,
                self.graph.num_rooms(),
                self.plan.rooms.len()
            )));
        }
        if self.graph.room_types() != self.plan.room_types().as_slice() {
            return Err(Error::validation(format!(
                "record `{}`: graph room types disagree with plan labels",
                self.id
            )));
        }
        self.plan
            .validate()
            .map_err(|e| Error::validation(format!("record `{}`: {e}", self.id)))
    }
}

/// Uniform sample of `k` records without replacement, in sampled order.
pub fn few_shot_subset(records: &[FloorplanRecord], k: usize, seed: u64) -> Result<Vec<FloorplanRecord>> {
    if k > records.len() {
        return Err(Error::validation(format!(
            "requested {k} shots from {} records",
            records.len()
        )));
    }
    let mut rng = rng::stream(seed, rng::STREAM_SUBSET);
    Ok(index::sample(&mut rng, records.len(), k)
        .into_iter()
        .map(|i| records[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_edges() {
        let recs = gen_pentagon_set(3, 6);
        assert!(few_shot_subset(&recs, 0, 1).unwrap().is_empty());
        let all = few_shot_subset(&recs, 6, 1).unwrap();
        let mut ids: Vec<_> = all.iter().map(|r| r.id.clone()).collect();
        ids.sort();
        let mut want: Vec<_> = recs.iter().map(|r| r.id.clone()).collect();
        want.sort();
        assert_eq!(ids, want);
        assert_eq!(few_shot_subset(&recs, 4, 9).unwrap(), few_shot_subset(&recs, 4, 9).unwrap());
        assert!(matches!(few_shot_subset(&recs, 7, 1), Err(Error::Validation(_))));
    }
}
