//! Lifting chart solutions back to the manifold, and the region-shortcutting
//! post-processor.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::ggcs::program::dist;
use crate::ggcs::{GgcsError, GgcsGraph, PathSolution};
use crate::manifold::{FlatManifold, MPoint, Offset};
use crate::regions::Region;

/// Largest accepted gap between trajectory length and solution objective.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

/// Consecutive waypoints closer than this are merged.
const DEDUP_TOL: f64 = 1e-12;

/// Slack on polytope membership when clipping segments against regions.
const CLIP_TOL: f64 = 1e-9;

/// Parameter gap below which two visits to a region count as one.
const VISIT_GAP: f64 = 1e-9;

const MAX_SHORTCUT_PASSES: usize = 50;

/// Piecewise geodesic on the manifold.
///
/// Segment `j` runs in a straight line from `waypoints[j]` to
/// `waypoints[j + 1] + segment_offsets[j]∘c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<MPoint>,
    pub segment_offsets: Vec<Offset>,
    pub length: f64,
    /// Region each segment was planned in, when known.
    pub segment_regions: Vec<Option<usize>>,
}

impl Trajectory {
    /// Builds a trajectory from a continuous polyline in covering-space coordinates.
    pub fn from_polyline(
        points: &[Vec<f64>],
        regions: Vec<Option<usize>>,
        m: &FlatManifold,
    ) -> Result<Trajectory, GgcsError> {
        assert_eq!(regions.len() + 1, points.len().max(1), "one region tag per segment");
        let mut raw: Vec<&Vec<f64>> = Vec::with_capacity(points.len());
        let mut tags = Vec::with_capacity(regions.len());
        for (i, p) in points.iter().enumerate() {
            match raw.last() {
                Some(last) if dist(last, p) <= DEDUP_TOL => {}
                Some(_) => {
                    raw.push(p);
                    tags.push(regions[i - 1]);
                }
                None => raw.push(p),
            }
        }
        let mut waypoints = Vec::with_capacity(raw.len());
        for p in &raw {
            waypoints.push(m.canonicalize(p)?);
        }
        let mut segment_offsets = Vec::with_capacity(tags.len());
        let mut length = 0.0;
        for j in 0..tags.len() {
            let step: Vec<f64> = raw[j + 1].iter().zip(raw[j]).map(|(a, b)| a - b).collect();
            let chart_step: Vec<f64> = waypoints[j + 1]
                .coords
                .iter()
                .zip(&waypoints[j].coords)
                .map(|(a, b)| a - b)
                .collect();
            let k = (0..m.dim())
                .map(|d| match m.factor(d).period() {
                    Some(c) => ((step[d] - chart_step[d]) / c).round() as i64,
                    None => 0,
                })
                .collect();
            segment_offsets.push(Offset(k));
            length += step.iter().map(|s| s * s).sum::<f64>().sqrt();
        }
        Ok(Trajectory {
            waypoints,
            segment_offsets,
            length,
            segment_regions: tags,
        })
    }

    pub fn num_segments(&self) -> usize {
        self.segment_offsets.len()
    }

    /// Continuous polyline in covering-space coordinates, starting at the first waypoint.
    pub fn unwrapped(&self, m: &FlatManifold) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.waypoints.len());
        if let Some(first) = self.waypoints.first() {
            out.push(first.coords.clone());
        }
        for j in 0..self.num_segments() {
            let end = m.lift(&self.waypoints[j + 1], &self.segment_offsets[j]);
            let prev = &out[j];
            let next = end
                .iter()
                .zip(&self.waypoints[j].coords)
                .zip(prev)
                .map(|((e, s), p)| p + e - s)
                .collect();
            out.push(next);
        }
        out
    }

    /// Writes `t_index,coord_*,offset_*` rows; the offset on row `i` is the
    /// offset of the segment ending at waypoint `i` (zero on the first row).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self.waypoints.first().map_or(0, MPoint::dim);
        let mut header = vec!["t_index".to_string()];
        header.extend((0..dim).map(|d| format!("coord_{d}")));
        header.extend((0..dim).map(|d| format!("offset_{d}")));
        writeln!(w, "{}", header.join(","))?;
        for (i, p) in self.waypoints.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(p.coords.iter().map(|x| format!("{x:.17e}")));
            match i.checked_sub(1) {
                Some(j) => row.extend(self.segment_offsets[j].0.iter().map(i64::to_string)),
                None => row.extend((0..dim).map(|_| "0".to_string())),
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Maps a chart-space solution back to the manifold.
///
/// Each region's chart points are shifted by the translations accumulated
/// along the path, giving one continuous polyline that starts at the start
/// point; waypoints are its canonical representatives.
pub fn lift_trajectory(
    sol: &PathSolution,
    graph: &GgcsGraph,
    m: &FlatManifold,
) -> Result<Trajectory, GgcsError> {
    let n = m.dim();
    let mut acc = vec![0.0; n];
    let mut points = vec![graph.start.coords.clone()];
    let mut tags = Vec::new();
    for (k, &e) in sol.edges.iter().enumerate() {
        let v = sol.vertices[k + 1];
        if v == graph.target() {
            break;
        }
        for (a, t) in acc.iter_mut().zip(&graph.edges[e].translation) {
            *a += t;
        }
        let end = &sol.points[k + 1].1;
        points.push(end.iter().zip(&acc).map(|(x, a)| x - a).collect());
        tags.push(Some(v));
    }
    Trajectory::from_polyline(&points, tags, m)
}

/// `|Σ geodesic_distance(y_i, y_{i+1}) − objective|`.
pub fn verify_equivalence(traj: &Trajectory, sol: &PathSolution, m: &FlatManifold) -> Result<f64, GgcsError> {
    let mut total = 0.0;
    for w in traj.waypoints.windows(2) {
        total += m.geodesic_distance(&w[0], &w[1])?;
    }
    Ok((total - sol.objective).abs())
}

/// One maximal stretch `[s0, s1]` of polyline parameter inside a region lift.
#[derive(Debug, Clone)]
struct Hit {
    s0: f64,
    s1: f64,
    k: Offset,
}

fn segment_offsets_near(a: &[f64], b: &[f64], region: &Region, m: &FlatManifold) -> Vec<Offset> {
    let mut out = vec![Vec::new()];
    for d in 0..m.dim() {
        let ks: Vec<i64> = match m.factor(d).period() {
            Some(c) => {
                let (lo, hi) = (a[d].min(b[d]), a[d].max(b[d]));
                let k0 = ((region.box_lo[d] - hi - CLIP_TOL) / c).ceil() as i64;
                let k1 = ((region.box_hi[d] - lo + CLIP_TOL) / c).floor() as i64;
                (k0..=k1).collect()
            }
            None => vec![0],
        };
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                ks.iter().map(move |&k| {
                    let mut p = p.clone();
                    p.push(k);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(Offset).collect()
}

/// `{t ∈ [0, 1] : a + t (b − a) ∈ P}` with slack `CLIP_TOL` on every facet.
fn clip(region: &Region, a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let poly = &region.polytope;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for r in 0..poly.num_facets() {
        let row = poly.a().row(r);
        let ad: f64 = row.iter().zip(b.iter().zip(a)).map(|(w, (y, x))| w * (y - x)).sum();
        let slack = poly.b()[r] + CLIP_TOL - row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
        if ad.abs() < 1e-300 {
            if slack < 0.0 {
                return None;
            }
        } else if ad > 0.0 {
            t1 = t1.min(slack / ad);
        } else {
            t0 = t0.max(slack / ad);
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Merged parameter intervals where the polyline lies in some lift of `region`.
fn region_hits(z: &[Vec<f64>], region: &Region, m: &FlatManifold) -> Vec<Hit> {
    let mut raw = Vec::new();
    for j in 0..z.len().saturating_sub(1) {
        for k in segment_offsets_near(&z[j], &z[j + 1], region, m) {
            let t = m.translation(&k);
            let a: Vec<f64> = z[j].iter().zip(&t).map(|(x, s)| x + s).collect();
            let b: Vec<f64> = z[j + 1].iter().zip(&t).map(|(x, s)| x + s).collect();
            if let Some((t0, t1)) = clip(region, &a, &b) {
                raw.push(Hit {
                    s0: j as f64 + t0,
                    s1: j as f64 + t1,
                    k,
                });
            }
        }
    }
    if z.len() == 1 {
        for k in segment_offsets_near(&z[0], &z[0], region, m) {
            let t = m.translation(&k);
            let a: Vec<f64> = z[0].iter().zip(&t).map(|(x, s)| x + s).collect();
            if clip(region, &a, &a).is_some() {
                raw.push(Hit { s0: 0.0, s1: 0.0, k });
            }
        }
    }
    raw.sort_by(|a, b| a.s0.total_cmp(&b.s0).then(a.s1.total_cmp(&b.s1)));
    let mut merged: Vec<Hit> = Vec::new();
    for h in raw {
        match merged.last_mut() {
            Some(last) if h.s0 <= last.s1 + VISIT_GAP => {
                if h.s1 > last.s1 {
                    last.s1 = h.s1;
                    last.k = h.k;
                }
            }
            _ => merged.push(h),
        }
    }
    merged
}

fn point_at(z: &[Vec<f64>], s: f64) -> Vec<f64> {
    let j = (s.floor() as usize).min(z.len() - 1);
    if j + 1 >= z.len() {
        return z[j].clone();
    }
    let t = s - j as f64;
    z[j].iter().zip(&z[j + 1]).map(|(a, b)| a + t * (b - a)).collect()
}

/// Lift offset under which `point_at(z, s)` lies in `region`, if any.
fn offset_at(z: &[Vec<f64>], s: f64, region: &Region, m: &FlatManifold) -> Option<Offset> {
    let x = point_at(z, s);
    segment_offsets_near(&x, &x, region, m).into_iter().find(|k| {
        let y: Vec<f64> = x.iter().zip(m.translation(k)).map(|(a, t)| a + t).collect();
        region.polytope.max_violation(&y) <= CLIP_TOL
    })
}

/// Number of separate stretches along which the trajectory lies in `region`.
pub fn region_visits(traj: &Trajectory, region: &Region, m: &FlatManifold) -> usize {
    region_hits(&traj.unwrapped(m), region, m).len()
}

fn is_straight(z: &[Vec<f64>], s0: f64, s1: f64) -> bool {
    let a = point_at(z, s0);
    let b = point_at(z, s1);
    let chord = dist(&a, &b);
    let mut along = 0.0;
    let mut prev = a;
    let first = s0.floor() as usize + 1;
    let mut j = first;
    while (j as f64) < s1 {
        along += dist(&prev, &z[j]);
        prev = z[j].clone();
        j += 1;
    }
    along += dist(&prev, &b);
    along - chord <= CLIP_TOL * (1.0 + chord)
}

/// Replaces the stretch of `z` between the first and last visit to `region`
/// by the straight chart segment between them. Returns `None` when the
/// stretch is already that segment.
fn shortcut_once(
    z: &[Vec<f64>],
    region: &Region,
    m: &FlatManifold,
) -> Result<Option<Vec<Vec<f64>>>, GgcsError> {
    let hits = region_hits(z, region, m);
    let (Some(first), Some(last)) = (hits.first(), hits.last()) else {
        return Ok(None);
    };
    let (sa, sb) = (first.s0, last.s1);
    if sb - sa <= 0.0 {
        return Ok(None);
    }
    let ka = offset_at(z, sa, region, m).unwrap_or_else(|| first.k.clone());
    let kb = offset_at(z, sb, region, m).unwrap_or_else(|| last.k.clone());
    if ka == kb && is_straight(z, sa, sb) {
        return Ok(None);
    }

    let ta = m.translation(&ka);
    let tb = m.translation(&kb);
    let za = point_at(z, sa);
    let zb = point_at(z, sb);
    let wa: Vec<f64> = za.iter().zip(&ta).map(|(x, t)| x + t).collect();
    let wb: Vec<f64> = zb.iter().zip(&tb).map(|(x, t)| x + t).collect();
    for d in 0..m.dim() {
        if let Some(c) = m.factor(d).period() {
            if (wb[d] - wa[d]).abs() >= 0.5 * c {
                return Err(GgcsError::SegmentEscapesRegion {
                    region: region.id.clone(),
                });
            }
        }
    }
    // the tail moves by (k_b − k_a)∘c so it stays attached to the new segment
    let shift: Vec<f64> = tb.iter().zip(&ta).map(|(b, a)| b - a).collect();

    let ja = sa.floor() as usize;
    let jb = (sb.ceil() as usize).min(z.len() - 1);
    let mut out: Vec<Vec<f64>> = z[..=ja].to_vec();
    out.push(za);
    out.push(zb.iter().zip(&shift).map(|(x, s)| x + s).collect());
    for p in &z[jb..] {
        out.push(p.iter().zip(&shift).map(|(x, s)| x + s).collect());
    }
    let mut clean: Vec<Vec<f64>> = Vec::with_capacity(out.len());
    for p in out {
        if clean.last().is_none_or(|q| dist(q, &p) > DEDUP_TOL) {
            clean.push(p);
        }
    }
    Ok(Some(clean))
}

/// Shortens a trajectory so that it passes through each region at most once.
///
/// Regions are visited in order; for each one the stretch between the first
/// entry and the last exit is replaced by the chart segment joining them,
/// which is the minimizing geodesic and stays inside the region. Passes repeat
/// until nothing changes.
pub fn shortcut_path(traj: &Trajectory, regions: &[Region], m: &FlatManifold) -> Result<Trajectory, GgcsError> {
    let mut z = traj.unwrapped(m);
    let mut changed_any = false;
    for _ in 0..MAX_SHORTCUT_PASSES {
        let mut changed = false;
        for region in regions {
            if let Some(next) = shortcut_once(&z, region, m)? {
                z = next;
                changed = true;
            }
        }
        changed_any |= changed;
        if !changed {
            break;
        }
    }
    if !changed_any {
        return Ok(traj.clone());
    }
    let tags = (0..z.len().saturating_sub(1))
        .map(|j| {
            regions.iter().position(|r| {
                segment_offsets_near(&z[j], &z[j + 1], r, m).into_iter().any(|k| {
                    let t = m.translation(&k);
                    let a: Vec<f64> = z[j].iter().zip(&t).map(|(x, s)| x + s).collect();
                    let b: Vec<f64> = z[j + 1].iter().zip(&t).map(|(x, s)| x + s).collect();
                    clip(r, &a, &b).is_some_and(|(t0, t1)| t0 <= 1e-9 && t1 >= 1.0 - 1e-9)
                })
            })
        })
        .collect();
    Trajectory::from_polyline(&z, tags, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ggcs::{build_graph, solve_exact, solve_fixed_path, SearchParams};
    use crate::manifold::Factor;

    fn pt(m: &FlatManifold, c: &[f64]) -> MPoint {
        m.canonicalize(c).unwrap()
    }

    #[test]
    fn zero_length_segment_is_deduplicated() {
        let m = FlatManifold::unit_torus(2);
        let pts = vec![vec![0.1, 0.1], vec![0.3, 0.1], vec![0.3, 0.1], vec![0.3, 0.4]];
        let t = Trajectory::from_polyline(&pts, vec![Some(0), Some(1), Some(2)], &m).unwrap();
        assert_eq!(t.waypoints.len(), 3);
        assert_eq!(t.segment_regions, vec![Some(0), Some(2)]);
        assert!((t.length - 0.5).abs() < 1e-15);
    }

    #[test]
    fn seam_crossing_gets_negative_offset() {
        let m = FlatManifold::unit_torus(2);
        let a = Region::from_box("a", pt(&m, &[0.1, 0.5]), vec![-0.05, 0.3], vec![0.2, 0.7]);
        let b = Region::from_box("b", pt(&m, &[0.85, 0.5]), vec![0.75, 0.3], vec![0.95, 0.7]);
        let (p, q) = (pt(&m, &[0.1, 0.5]), pt(&m, &[0.85, 0.5]));
        let g = build_graph(vec![a, b], &p, &q, &m).unwrap();
        let sol = solve_exact(&g, &SearchParams::default()).unwrap().solution;
        let traj = lift_trajectory(&sol, &g, &m).unwrap();
        assert!(verify_equivalence(&traj, &sol, &m).unwrap() <= EQUIVALENCE_TOL);
        assert!((traj.length - 0.25).abs() < 1e-7);
        let wrap = traj
            .segment_offsets
            .iter()
            .find(|k| !k.is_zero())
            .expect("one segment crosses the seam");
        assert_eq!(wrap.0, vec![-1, 0]);
        let first = &traj.waypoints[0];
        assert!(first.coords[0] < 0.2);
        assert!(traj.waypoints.last().unwrap().coords[0] > 0.8);
    }

    #[test]
    fn tampered_waypoint_breaks_equivalence() {
        let m = FlatManifold::new(vec![Factor::line(0.0, 1.0), Factor::line(0.0, 1.0)]).unwrap();
        let a = Region::from_box("a", pt(&m, &[0.25, 0.5]), vec![0.0, 0.0], vec![0.55, 1.0]);
        let b = Region::from_box("b", pt(&m, &[0.75, 0.5]), vec![0.45, 0.0], vec![1.0, 1.0]);
        let (p, q) = (pt(&m, &[0.1, 0.8]), pt(&m, &[0.9, 0.1]));
        let g = build_graph(vec![a, b], &p, &q, &m).unwrap();
        let sol = solve_fixed_path(&g, &[2, 0, 1, 3], &m).unwrap();
        let mut traj = lift_trajectory(&sol, &g, &m).unwrap();
        assert!(verify_equivalence(&traj, &sol, &m).unwrap() <= EQUIVALENCE_TOL);
        traj.waypoints[0].coords[0] += 1e-3;
        assert!(verify_equivalence(&traj, &sol, &m).unwrap() > 1e-4);
    }

    #[test]
    fn single_waypoint_has_zero_residual() {
        let m = FlatManifold::unit_torus(2);
        let r = Region::from_box("r", pt(&m, &[0.5, 0.5]), vec![0.3, 0.3], vec![0.7, 0.7]);
        let p = pt(&m, &[0.5, 0.5]);
        let g = build_graph(vec![r], &p, &p, &m).unwrap();
        let sol = solve_exact(&g, &SearchParams::default()).unwrap().solution;
        let traj = lift_trajectory(&sol, &g, &m).unwrap();
        assert_eq!(traj.waypoints.len(), 1);
        assert_eq!(verify_equivalence(&traj, &sol, &m).unwrap(), 0.0);
    }

    #[test]
    fn zigzag_inside_one_region_straightens() {
        let m = FlatManifold::unit_torus(2);
        let r = Region::from_box("r", pt(&m, &[0.5, 0.5]), vec![0.3, 0.3], vec![0.7, 0.7]);
        let pts = vec![vec![0.35, 0.35], vec![0.5, 0.65], vec![0.55, 0.4], vec![0.65, 0.6]];
        let t = Trajectory::from_polyline(&pts, vec![None; 3], &m).unwrap();
        let s = shortcut_path(&t, std::slice::from_ref(&r), &m).unwrap();
        assert_eq!(s.waypoints.len(), 2);
        let d = dist(&[0.35, 0.35], &[0.65, 0.6]);
        assert!((s.length - d).abs() < 1e-12);
        assert!(s.length < t.length);
    }

    #[test]
    fn corner_hugging_path_is_a_fixed_point() {
        let m = FlatManifold::new(vec![Factor::line(0.0, 1.0), Factor::line(0.0, 1.0)]).unwrap();
        let a = Region::from_box("a", pt(&m, &[0.5, 0.1]), vec![0.0, 0.0], vec![1.0, 0.2]);
        let b = Region::from_box("b", pt(&m, &[0.9, 0.5]), vec![0.8, 0.0], vec![1.0, 1.0]);
        let pts = vec![vec![0.1, 0.1], vec![0.8, 0.2], vec![0.9, 0.9]];
        let t = Trajectory::from_polyline(&pts, vec![Some(0), Some(1)], &m).unwrap();
        let s = shortcut_path(&t, &[a, b], &m).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn reentry_is_removed() {
        // leaves region a through b, then comes back into a via c
        let m = FlatManifold::new(vec![Factor::line(0.0, 2.0), Factor::line(0.0, 2.0)]).unwrap();
        let a = Region::from_box("a", pt(&m, &[0.5, 0.5]), vec![0.0, 0.0], vec![1.0, 1.0]);
        let b = Region::from_box("b", pt(&m, &[0.5, 1.5]), vec![0.0, 0.9], vec![0.6, 2.0]);
        let c = Region::from_box("c", pt(&m, &[0.8, 1.5]), vec![0.5, 0.9], vec![1.0, 2.0]);
        let regions = [a, b, c];
        let pts = vec![vec![0.2, 0.2], vec![0.3, 1.5], vec![0.8, 1.5], vec![0.8, 0.3]];
        let t = Trajectory::from_polyline(&pts, vec![None; 3], &m).unwrap();
        assert_eq!(region_visits(&t, &regions[0], &m), 2);
        let s = shortcut_path(&t, &regions, &m).unwrap();
        for r in &regions {
            assert!(region_visits(&s, r, &m) <= 1);
        }
        assert!(s.length < t.length);
        let again = shortcut_path(&s, &regions, &m).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn shortcut_across_the_seam() {
        let m = FlatManifold::unit_torus(2);
        let r = Region::from_box("r", pt(&m, &[0.0, 0.5]), vec![-0.15, 0.3], vec![0.15, 0.7]);
        // wanders out of the region to the right and comes back from the left
        let pts = vec![vec![0.9, 0.5], vec![1.0, 0.85], vec![1.1, 0.4]];
        let t = Trajectory::from_polyline(&pts, vec![None; 2], &m).unwrap();
        let s = shortcut_path(&t, std::slice::from_ref(&r), &m).unwrap();
        assert_eq!(s.waypoints.len(), 2);
        assert!((s.length - dist(&[0.9, 0.5], &[1.1, 0.4])).abs() < 1e-12);
    }
}
