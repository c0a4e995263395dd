//! Fixtures shared by the kernel benchmarks.

use std::sync::Arc;

use cosim_core::radio::VehicleState;
use cosim_core::traffic::{CarFollowModel, Connection, Edge, Junction, VehicleDemand, VehicleType};
use cosim_core::wire::{var, Command, TypedValue};
use cosim_core::{Owner, Polygon, RoadNetwork, Vec2, World};

pub const STEP_US: u32 = 100_000;

/// Two 20 km edges in a line, long enough that nobody arrives.
pub fn highway() -> Arc<RoadNetwork> {
    let j = |id: &str, x: f64| Junction {
        id: id.into(),
        position: Vec2::new(x, 0.0),
    };
    let e = |id: &str, from: &str, to: &str| Edge {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        length: 20_000.0,
        speed_limit: 30.0,
        shape: vec![],
        explicit_shape: false,
    };
    Arc::new(
        RoadNetwork::new(
            vec![j("a", 0.0), j("b", 20_000.0), j("c", 40_000.0)],
            vec![e("e1", "a", "b"), e("e2", "b", "c")],
            vec![Connection {
                from: "e1".into(),
                to: "e2".into(),
                signal: None,
            }],
        )
        .expect("valid network"),
    )
}

/// World with `n` vehicles 40 m apart at 20 m/s, alternating Krauss and IDM.
pub fn busy_world(n: usize) -> World {
    let mut w = World::new(highway(), vec![], vec![], STEP_US).expect("valid world");
    for i in 0..n {
        let model = if i % 2 == 0 {
            CarFollowModel::Krauss
        } else {
            CarFollowModel::Idm
        };
        let demand = VehicleDemand {
            id: format!("v{i:04}"),
            vtype: VehicleType::defaults("t", model),
            depart: 0.0,
            route: vec!["e1".into(), "e2".into()],
        };
        w.spawn(
            demand,
            0,
            10.0 + 40.0 * (n - i) as f64,
            20.0,
            Owner::Traffic,
        )
        .expect("spawn");
    }
    w
}

/// `n` radio nodes on a grid with 20 m spacing.
pub fn grid_nodes(n: usize) -> Vec<VehicleState> {
    let side = (n as f64).sqrt().ceil() as usize;
    (0..n)
        .map(|i| VehicleState {
            id: format!("n{i:04}"),
            position: Vec2::new((i % side) as f64 * 20.0, (i / side) as f64 * 20.0),
            speed: 10.0,
            heading: 90.0,
        })
        .collect()
}

/// `n` square buildings scattered over the grid.
pub fn blocks(n: usize) -> Vec<Polygon> {
    (0..n)
        .map(|i| {
            let (x, y) = ((i * 37 % 200) as f64, (i * 53 % 200) as f64);
            Polygon {
                id: format!("b{i}"),
                vertices: vec![
                    Vec2::new(x, y),
                    Vec2::new(x + 8.0, y),
                    Vec2::new(x + 8.0, y + 8.0),
                    Vec2::new(x, y + 8.0),
                ],
            }
        })
        .collect()
}

/// A typical per-step client batch: reads for `n` vehicles, an inbox write
/// and the vote.
pub fn step_batch(n: usize) -> Vec<Command> {
    let mut batch = Vec::with_capacity(3 * n + 2);
    for i in 0..n {
        let id = format!("v{i:04}");
        batch.push(Command::get_vehicle(var::POSITION, &id));
        batch.push(Command::get_vehicle(var::SPEED, &id));
        batch.push(Command::get_vehicle(var::ANGLE, &id));
    }
    batch.push(Command::set_vehicle(
        var::V2X_INBOX,
        "v0000",
        TypedValue::StringList(vec!["BSM|v0001|100000|12.5|0|13.9|90".into(); 8]),
    ));
    batch.push(Command::SimStep(0.0));
    batch
}
