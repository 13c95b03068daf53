//! Training rays assembled from scan frames.
//!
//! Every `(beam, azimuth)` sample of a scan is an emitted ray. Samples whose
//! world-frame origin and direction agree bit for bit, as happens for
//! repeated scans from a static pose, are merged into one [`Ray`] carrying
//! all of their ranges.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::Result;
use crate::field::{RangeSample, Ray};
use crate::sensor::{ray_directions, ScanFrame};
use crate::streams::stream;
use rand::Rng;

type RayKey = [u64; 6];

fn key(origin: &Vector3<f64>, direction: &Vector3<f64>) -> RayKey {
    [
        origin.x.to_bits(),
        origin.y.to_bits(),
        origin.z.to_bits(),
        direction.x.to_bits(),
        direction.y.to_bits(),
        direction.z.to_bits(),
    ]
}

/// A grouped ray with tallies of how often it returned and dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RayRecord {
    pub ray: Ray,
    pub returns: usize,
    pub drops: usize,
}

/// Groups all samples of `frames` by exact ray identity, in order of first
/// appearance.
pub fn group_scans(frames: &[ScanFrame]) -> Result<Vec<RayRecord>> {
    let mut index: HashMap<RayKey, usize> = HashMap::new();
    let mut out: Vec<RayRecord> = Vec::new();
    for frame in frames {
        let geometry = ray_directions(&frame.intrinsics, &frame.start, &frame.end)?;
        for (g, sample) in geometry.iter().zip(&frame.ranges) {
            let slot = *index.entry(key(&g.origin, &g.direction)).or_insert_with(|| {
                out.push(RayRecord {
                    ray: Ray {
                        origin: g.origin,
                        direction: g.direction,
                        s_max: frame.intrinsics.s_max,
                        measurements: Vec::new(),
                    },
                    returns: 0,
                    drops: 0,
                });
                out.len() - 1
            });
            let record = &mut out[slot];
            match sample {
                RangeSample::Range(r) => {
                    record.ray.measurements.push(*r);
                    record.returns += 1;
                }
                RangeSample::Drop => record.drops += 1,
            }
        }
    }
    for r in &out {
        r.ray.validate()?;
    }
    Ok(out)
}

/// Plain rays of every record.
pub fn rays(records: &[RayRecord]) -> Vec<Ray> {
    records.iter().map(|r| r.ray.clone()).collect()
}

/// Deterministic split into `(train, held_out)` with roughly `fraction` of
/// the records held out.
pub fn holdout_split(records: &[RayRecord], fraction: f64, seed: u64) -> (Vec<RayRecord>, Vec<RayRecord>) {
    let mut rng = stream(&[seed, 0x401d]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in records {
        if rng.gen::<f64>() < fraction {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    (train, test)
}
