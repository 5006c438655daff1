use serde::{Deserialize, Serialize};

use crate::funcdata::TimeGrid;

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub start: f64,
    pub end: f64,
}

impl Zone {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Maximal runs of `true` of at least `min_points` grid points, as intervals
/// from the first to the last grid time of each run.
pub fn merge_zones(mask: &[bool], grid: &TimeGrid, min_points: usize) -> Vec<Zone> {
    debug_assert_eq!(mask.len(), grid.len());
    let pts = grid.points();
    let min_points = min_points.max(1);
    let mut zones = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if !mask[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < mask.len() && mask[i] {
            i += 1;
        }
        if i - start >= min_points {
            zones.push(Zone {
                start: pts[start],
                end: pts[i - 1],
            });
        }
    }
    zones
}

/// Sorted, pairwise disjoint intervals covering the same set.
pub fn disjoint_union(zones: &[Zone]) -> Vec<Zone> {
    let mut z: Vec<Zone> = zones.to_vec();
    z.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out: Vec<Zone> = Vec::with_capacity(z.len());
    for s in z {
        match out.last_mut() {
            Some(c) if s.start <= c.end => c.end = c.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Total length of a union of intervals.
pub fn union_length(zones: &[Zone]) -> f64 {
    disjoint_union(zones).iter().map(Zone::length).sum()
}

/// Length of the intersection of two interval unions.
pub fn intersection_length(a: &[Zone], b: &[Zone]) -> f64 {
    let mut parts = Vec::new();
    for x in a {
        for y in b {
            let (s, e) = (x.start.max(y.start), x.end.min(y.end));
            if e > s {
                parts.push(Zone { start: s, end: e });
            }
        }
    }
    union_length(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_length_cases() {
        let grid = TimeGrid::uniform(11, 1.0).unwrap();
        assert!(merge_zones(&[false; 11], &grid, 1).is_empty());
        assert_eq!(merge_zones(&[true; 11], &grid, 1), vec![Zone { start: 0.0, end: 1.0 }]);
        let mut mask = [false; 11];
        for i in [3, 4, 5, 9] {
            mask[i] = true;
        }
        let z = merge_zones(&mask, &grid, 2);
        assert_eq!(z.len(), 1);
        assert!((z[0].start - 0.3).abs() < 1e-15 && (z[0].end - 0.5).abs() < 1e-15);
        assert_eq!(merge_zones(&mask, &grid, 1).len(), 2);
    }

    #[test]
    fn interval_lengths() {
        let a = [Zone { start: 0.0, end: 0.5 }];
        let b = [Zone { start: 0.25, end: 0.75 }];
        assert!((intersection_length(&a, &b) - 0.25).abs() < 1e-15);
        assert!((union_length(&[a[0], b[0]]) - 0.75).abs() < 1e-15);
    }
}
