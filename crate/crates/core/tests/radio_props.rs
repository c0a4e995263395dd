use std::collections::BTreeSet;

use cosim_core::radio::{
    beacon_schedule, free_space_path_loss, link_budget, obstacle_loss, PacketEvent, RadioConfig,
    RadioKernel, RadioParams, VehicleState,
};
use cosim_core::scenario::Rsu;
use cosim_core::{Polygon, Vec2};
use proptest::prelude::*;

/// Axis-aligned box `[x0, y0, x1, y1]`.
type Rect = [f64; 4];

fn to_polygon(i: usize, r: &Rect) -> Polygon {
    Polygon {
        id: format!("p{i}"),
        vertices: vec![
            Vec2::new(r[0], r[1]),
            Vec2::new(r[2], r[1]),
            Vec2::new(r[2], r[3]),
            Vec2::new(r[0], r[3]),
        ],
    }
}

/// Liang-Barsky clip of segment a-b against a box: returns the parameter
/// interval inside, if it has positive length.
fn clip(a: Vec2, b: Vec2, r: &Rect) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [
        (-dx, a.x - r[0]),
        (dx, r[2] - a.x),
        (-dy, a.y - r[1]),
        (dy, r[3] - a.y),
    ] {
        if p == 0.0 {
            if q <= 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    (t1 > t0).then_some((t0, t1))
}

/// Independent wall count and interior length for boxes.
fn oracle_obstacles(a: Vec2, b: Vec2, rects: &[Rect]) -> (u32, f64) {
    let len = a.distance(b);
    let mut walls = 0;
    let mut inside = 0.0;
    for r in rects {
        if let Some((t0, t1)) = clip(a, b, r) {
            inside += (t1 - t0) * len;
            walls += u32::from(t0 > 0.0) + u32::from(t1 < 1.0);
        }
    }
    (walls, inside)
}

fn oracle_rx(a: Vec2, b: Vec2, rects: &[Rect], p: &RadioParams) -> f64 {
    let d = a.distance(b).max(1.0);
    let pl = 20.0 * (d * p.frequency_hz).log10() - 147.55;
    let (n, dm) = oracle_obstacles(a, b, rects);
    p.tx_power_dbm - pl - (p.wall_loss_db * f64::from(n) + p.interior_loss_db_per_m * dm)
}

/// Fraction of `samples` midpoints of a-b that fall inside the box.
fn sampled_inside(a: Vec2, b: Vec2, r: &Rect, samples: usize) -> f64 {
    let hits = (0..samples)
        .filter(|i| {
            let p = a.lerp(b, (*i as f64 + 0.5) / samples as f64);
            p.x > r[0] && p.x < r[2] && p.y > r[1] && p.y < r[3]
        })
        .count();
    hits as f64 / samples as f64 * a.distance(b)
}

fn point() -> impl Strategy<Value = Vec2> {
    (-300.0..300.0f64, -300.0..300.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn rect() -> impl Strategy<Value = Rect> {
    (
        -250.0..250.0f64,
        -250.0..250.0f64,
        2.0..80.0f64,
        2.0..80.0f64,
    )
        .prop_map(|(x, y, w, h)| [x, y, x + w, y + h])
}

#[test]
fn rectangle_loss_matches_point_sampling() {
    let r = [45.0, -5.0, 55.0, 5.0];
    let (a, b) = (Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0));
    let sampled = sampled_inside(a, b, &r, 100_000);
    assert!((sampled - 10.0).abs() < 1e-2);
    let loss = obstacle_loss(a, b, &[to_polygon(0, &r)], &RadioParams::default());
    assert_eq!(loss.walls, 2);
    assert!((9.0 * 2.0 + 0.4 * sampled - 22.0).abs() < 1e-2);
    assert!((loss.loss_db - 22.0).abs() < 1e-9);
}

#[test]
fn fspl_constant_terms() {
    // 20 log10(d) + 20 log10(f) - 147.55, evaluated piecewise
    let f_term = 20.0 * (5.9f64).log10() + 20.0 * 9.0;
    assert!((free_space_path_loss(100.0, 5.9e9) - (40.0 + f_term - 147.55)).abs() < 1e-9);
    assert!((free_space_path_loss(100.0, 5.9e9) - 87.87).abs() < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn obstacle_geometry_matches_clipping_oracle(a in point(), b in point(), rects in prop::collection::vec(rect(), 0..=3)) {
        let polys: Vec<Polygon> = rects.iter().enumerate().map(|(i, r)| to_polygon(i, r)).collect();
        let got = obstacle_loss(a, b, &polys, &RadioParams::default());
        let (walls, inside) = oracle_obstacles(a, b, &rects);
        prop_assert_eq!(got.walls, walls);
        prop_assert!((got.interior_m - inside).abs() < 1e-6, "{} vs {}", got.interior_m, inside);
    }

    #[test]
    fn loss_is_reciprocal(a in point(), b in point(), rects in prop::collection::vec(rect(), 0..=3)) {
        let polys: Vec<Polygon> = rects.iter().enumerate().map(|(i, r)| to_polygon(i, r)).collect();
        let p = RadioParams::default();
        let ab = link_budget(a, b, 23.0, &polys, &p);
        let ba = link_budget(b, a, 23.0, &polys, &p);
        prop_assert_eq!(ab.walls, ba.walls);
        prop_assert!((ab.rx_power_dbm - ba.rx_power_dbm).abs() < 1e-9);
    }

    #[test]
    fn adding_a_building_never_helps(a in point(), b in point(), rects in prop::collection::vec(rect(), 0..=2), extra in rect()) {
        let mut polys: Vec<Polygon> = rects.iter().enumerate().map(|(i, r)| to_polygon(i, r)).collect();
        let p = RadioParams::default();
        let before = link_budget(a, b, 23.0, &polys, &p).rx_power_dbm;
        polys.push(to_polygon(9, &extra));
        let after = link_budget(a, b, 23.0, &polys, &p).rx_power_dbm;
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn budget_identity_holds(a in point(), b in point(), rects in prop::collection::vec(rect(), 0..=3), tx in 0.0..30.0f64) {
        let polys: Vec<Polygon> = rects.iter().enumerate().map(|(i, r)| to_polygon(i, r)).collect();
        let p = RadioParams::default();
        let l = link_budget(a, b, tx, &polys, &p);
        prop_assert!(l.obstacle_loss_db >= 0.0);
        prop_assert!((l.obstacle_loss_db - (9.0 * f64::from(l.walls) + 0.4 * l.interior_m)).abs() < 1e-9);
        prop_assert_eq!(l.rx_power_dbm, tx - l.path_loss_db - l.obstacle_loss_db);
    }

    /// Small worlds: every reception decision of the kernel agrees with an
    /// independent recomputation.
    #[test]
    fn reception_sets_match_brute_force(
        nodes in prop::collection::vec(point(), 1..=5),
        rects in prop::collection::vec(rect(), 0..=3),
        gamma in prop_oneof![Just(0.4), 0.0..3.0f64],
    ) {
        let params = RadioParams { interior_loss_db_per_m: gamma, ..RadioParams::default() };
        let polys: Vec<Polygon> = rects.iter().enumerate().map(|(i, r)| to_polygon(i, r)).collect();
        let ids: Vec<String> = (0..nodes.len()).map(|i| format!("n{i}")).collect();
        // margin keeps floating point ties away from the threshold
        for (i, a) in nodes.iter().enumerate() {
            for (j, b) in nodes.iter().enumerate() {
                if i != j {
                    prop_assume!((oracle_rx(*a, *b, &rects, &params) - params.sensitivity_dbm).abs() > 1e-6);
                }
            }
        }
        let vehicles: Vec<VehicleState> = ids
            .iter()
            .zip(&nodes)
            .map(|(id, p)| VehicleState { id: id.clone(), position: *p, speed: 0.0, heading: 0.0 })
            .collect();
        let mut kernel = RadioKernel::new(
            RadioConfig { params, enabled: true },
            polys,
            &[],
            &[],
            1,
            100_000,
        );
        let inbox = kernel.step(0, &vehicles).unwrap();

        let mut expected = BTreeSet::new();
        for (i, a) in nodes.iter().enumerate() {
            for (j, b) in nodes.iter().enumerate() {
                if i != j && oracle_rx(*a, *b, &rects, &params) >= params.sensitivity_dbm {
                    expected.insert((ids[i].clone(), ids[j].clone()));
                }
            }
        }
        let got: BTreeSet<(String, String)> = kernel
            .packets()
            .iter()
            .filter(|p| p.event == PacketEvent::Received)
            .map(|p| (p.sender.clone(), p.receiver.clone().unwrap()))
            .collect();
        prop_assert_eq!(&got, &expected);
        let delivered: usize = inbox.values().map(Vec::len).sum();
        prop_assert_eq!(delivered, expected.len());
        let attempted = kernel.packets().iter().filter(|p| p.event != PacketEvent::Sent).count();
        prop_assert_eq!(attempted, nodes.len() * (nodes.len() - 1));
    }

    #[test]
    fn ten_beacons_per_second(id in "[a-z0-9]{1,10}", step_us in prop::sample::select(vec![10_000u64, 20_000, 25_000, 50_000, 100_000])) {
        let (period, offset) = beacon_schedule(&id, step_us);
        prop_assert!(offset < period);
        let steps = 1_000_000 / step_us;
        let mut kernel = RadioKernel::new(RadioConfig::default(), vec![], &[], &[], 0, step_us);
        let v = VehicleState { id: id.clone(), position: Vec2::new(0.0, 0.0), speed: 0.0, heading: 0.0 };
        for s in 0..steps {
            kernel.step(s, std::slice::from_ref(&v)).unwrap();
        }
        prop_assert_eq!(kernel.packets().len(), 10);
    }
}

#[test]
fn rsus_beacon_and_receive() {
    let rsus = [Rsu {
        id: "rsu".into(),
        position: Vec2::new(50.0, 0.0),
    }];
    let mut kernel = RadioKernel::new(RadioConfig::default(), vec![], &rsus, &[], 0, 100_000);
    let v = VehicleState {
        id: "v".into(),
        position: Vec2::new(0.0, 0.0),
        speed: 1.0,
        heading: 90.0,
    };
    let inbox = kernel.step(0, &[v]).unwrap();
    // only vehicles have inboxes
    assert_eq!(inbox.len(), 1);
    assert_eq!(inbox["v"].len(), 1);
    let received: Vec<_> = kernel
        .packets()
        .iter()
        .filter(|p| p.event == PacketEvent::Received)
        .map(|p| p.receiver.clone().unwrap())
        .collect();
    assert_eq!(received, ["v", "rsu"]);
}
