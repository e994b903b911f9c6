use geoplan_core::ggcs::{region_visits, shortcut_path, Trajectory};
use geoplan_core::regions::Region;
use geoplan_core::{Factor, FlatManifold, MPoint};
use proptest::prelude::*;

fn cylinder() -> FlatManifold {
    FlatManifold::new(vec![Factor::circle(2.0), Factor::line(-1.0, 1.0)]).unwrap()
}

/// Distance by brute force over lattice shifts of `q`.
fn brute_distance(m: &FlatManifold, p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, f) in m.factors().iter().enumerate() {
        let d = q[i] - p[i];
        let best = match f.period() {
            Some(c) => (-12..=12).map(|k| (d + k as f64 * c).abs()).fold(f64::INFINITY, f64::min),
            None => d.abs(),
        };
        total += best * best;
    }
    total.sqrt()
}

fn point(m: &FlatManifold, raw: &[f64]) -> MPoint {
    m.canonicalize(raw).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn canonical_coordinates_are_in_range_and_stable(x in -10.0..10.0f64, y in -1.0..1.0f64) {
        let m = cylinder();
        let p = point(&m, &[x, y]);
        prop_assert!((0.0..2.0).contains(&p.coords[0]));
        prop_assert_eq!(p.coords[1], y);
        let again = point(&m, &p.coords);
        prop_assert_eq!(again, p);
    }

    #[test]
    fn distance_matches_lattice_search(
        a in prop::array::uniform3(-3.0..3.0f64),
        b in prop::array::uniform3(-3.0..3.0f64),
    ) {
        let m = FlatManifold::new(vec![Factor::circle(1.0), Factor::circle(0.7), Factor::unbounded_line()]).unwrap();
        let (p, q) = (point(&m, &a), point(&m, &b));
        let d = m.geodesic_distance(&p, &q).unwrap();
        prop_assert!((d - brute_distance(&m, &a, &b)).abs() < 1e-12);
        prop_assert!((d - m.geodesic_distance(&q, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn triangle_inequality(
        a in prop::array::uniform2(0.0..1.0f64),
        b in prop::array::uniform2(0.0..1.0f64),
        c in prop::array::uniform2(0.0..1.0f64),
    ) {
        let m = FlatManifold::unit_torus(2);
        let (p, q, r) = (point(&m, &a), point(&m, &b), point(&m, &c));
        let pq = m.geodesic_distance(&p, &q).unwrap();
        let qr = m.geodesic_distance(&q, &r).unwrap();
        let pr = m.geodesic_distance(&p, &r).unwrap();
        prop_assert!(pr <= pq + qr + 1e-12);
        prop_assert!(pq <= 0.5f64.hypot(0.5) + 1e-12);
    }

    #[test]
    fn interpolation_splits_the_distance(
        a in prop::array::uniform2(0.0..1.0f64),
        b in prop::array::uniform2(0.0..1.0f64),
        t in 0.0..1.0f64,
    ) {
        let m = FlatManifold::unit_torus(2);
        let (p, q) = (point(&m, &a), point(&m, &b));
        // skip pairs too close to the cut locus
        let dx = (a[0] - b[0]).abs();
        let dy = (a[1] - b[1]).abs();
        prop_assume!((dx - 0.5).abs() > 1e-6 && (dy - 0.5).abs() > 1e-6);
        let mid = m.geodesic_interpolate(&p, &q, t).unwrap();
        let d = m.geodesic_distance(&p, &q).unwrap();
        prop_assert!((m.geodesic_distance(&p, &mid).unwrap() - t * d).abs() < 1e-9);
        prop_assert!((m.geodesic_distance(&mid, &q).unwrap() - (1.0 - t) * d).abs() < 1e-9);
    }

    #[test]
    fn unrolled_distance_is_never_shorter(
        a in prop::array::uniform2(0.0..1.0f64),
        b in prop::array::uniform2(0.0..1.0f64),
    ) {
        let m = FlatManifold::unit_torus(2);
        let cut = m.unroll_factor(0, 0.0).unwrap();
        let d = m.geodesic_distance(&point(&m, &a), &point(&m, &b)).unwrap();
        let du = cut.geodesic_distance(&point(&cut, &a), &point(&cut, &b)).unwrap();
        prop_assert!(du >= d - 1e-12);
    }

    #[test]
    fn polyline_length_is_the_sum_of_its_steps(
        steps in prop::collection::vec(prop::array::uniform2(-0.2..0.2f64), 1..20),
    ) {
        let m = FlatManifold::unit_torus(2);
        let mut pts = vec![vec![0.5, 0.5]];
        let mut expected = 0.0;
        for s in &steps {
            let last = pts.last().unwrap().clone();
            expected += s[0].hypot(s[1]);
            pts.push(vec![last[0] + s[0], last[1] + s[1]]);
        }
        let traj = Trajectory::from_polyline(&pts, vec![None; steps.len()], &m).unwrap();
        prop_assert!((traj.length - expected).abs() < 1e-9);
        let back = traj.unwrapped(&m);
        prop_assert!((back.last().unwrap()[0] - pts.last().unwrap()[0]).abs() < 1e-9);
    }

    #[test]
    fn shortcut_never_lengthens(
        start in prop::array::uniform2(0.0..1.0f64),
        steps in prop::collection::vec(prop::array::uniform2(-0.05..0.05f64), 1..25),
    ) {
        let m = FlatManifold::unit_torus(2);
        let regions: Vec<Region> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| {
                let c = [0.125 + 0.25 * i as f64, 0.125 + 0.25 * j as f64];
                Region::from_box(
                    format!("b{i}{j}"),
                    point(&m, &c),
                    vec![c[0] - 0.18, c[1] - 0.18],
                    vec![c[0] + 0.18, c[1] + 0.18],
                )
            })
            .collect();
        let mut pts = vec![start.to_vec()];
        for s in &steps {
            let last = pts.last().unwrap().clone();
            pts.push(vec![last[0] + s[0], last[1] + s[1]]);
        }
        let traj = Trajectory::from_polyline(&pts, vec![None; steps.len()], &m).unwrap();
        let short = shortcut_path(&traj, &regions, &m).unwrap();
        prop_assert!(short.length <= traj.length + 1e-12);
        for r in &regions {
            prop_assert!(region_visits(&short, r, &m) <= 1);
        }
    }
}
