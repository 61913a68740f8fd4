use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BubbleGraph, FloorplanRecord};
use crate::geometry::RoomType;
use crate::{rng, Error, Result};

/// Occurrence counts of `(room type, corner count)` in a training set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HistogramEntry>", into = "Vec<HistogramEntry>")]
pub struct CornerHistogram {
    counts: BTreeMap<(RoomType, usize), u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramEntry {
    #[serde(rename = "type")]
    pub room_type: RoomType,
    pub corners: usize,
    pub count: u64,
}

impl TryFrom<Vec<HistogramEntry>> for CornerHistogram {
    type Error = Error;

    fn try_from(entries: Vec<HistogramEntry>) -> Result<Self> {
        let mut h = CornerHistogram::default();
        for e in entries {
            h.insert(e.room_type, e.corners, e.count)?;
        }
        Ok(h)
    }
}

impl From<CornerHistogram> for Vec<HistogramEntry> {
    fn from(h: CornerHistogram) -> Self {
        h.counts
            .into_iter()
            .map(|((room_type, corners), count)| HistogramEntry { room_type, corners, count })
            .collect()
    }
}

impl CornerHistogram {
    pub fn insert(&mut self, t: RoomType, corners: usize, count: u64) -> Result<()> {
        if corners < 3 {
            return Err(Error::validation(format!("corner count {corners} below 3")));
        }
        if count == 0 {
            return Err(Error::validation("histogram counts must be positive"));
        }
        *self.counts.entry((t, corners)).or_insert(0) += count;
        Ok(())
    }

    pub fn get(&self, t: RoomType, corners: usize) -> u64 {
        self.counts.get(&(t, corners)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (RoomType, usize, u64)> + '_ {
        self.counts.iter().map(|(&(t, k), &c)| (t, k, c))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Distribution over corner counts for `t`, or the marginal when `t` is unseen.
    fn distribution(&self, t: RoomType) -> Vec<(usize, u64)> {
        let typed: Vec<_> = self.iter().filter(|&(rt, _, _)| rt == t).map(|(_, k, c)| (k, c)).collect();
        if !typed.is_empty() {
            return typed;
        }
        let mut marginal: BTreeMap<usize, u64> = BTreeMap::new();
        for (_, k, c) in self.iter() {
            *marginal.entry(k).or_insert(0) += c;
        }
        marginal.into_iter().collect()
    }
}

pub fn build_corner_histogram(records: &[FloorplanRecord]) -> Result<CornerHistogram> {
    if records.is_empty() {
        return Err(Error::validation("cannot build a histogram from zero records"));
    }
    let mut h = CornerHistogram::default();
    for r in records {
        for room in &r.plan.rooms {
            h.insert(room.room_type, room.polygon.len(), 1)?;
        }
    }
    Ok(h)
}

/// Draws one corner count per graph room from the type-conditional empirical distribution.
pub fn sample_corner_counts(graph: &BubbleGraph, hist: &CornerHistogram, seed: u64) -> Result<Vec<usize>> {
    if hist.is_empty() {
        return Err(Error::validation("corner histogram is empty"));
    }
    let mut rng = rng::stream(seed, rng::STREAM_CORNERS);
    Ok(graph
        .room_types()
        .iter()
        .map(|&t| {
            let dist = hist.distribution(t);
            let total: u64 = dist.iter().map(|&(_, c)| c).sum();
            let mut u = rng.random_range(0..total);
            for &(k, c) in &dist {
                if u < c {
                    return k;
                }
                u -= c;
            }
            unreachable!("draw below total mass")
        })
        .collect())
}
