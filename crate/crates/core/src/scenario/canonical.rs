//! Canonical XML output for the supported subset. Parsing the output yields
//! values equal to the ones written.

use std::fmt::Write as _;

use super::poly::Rsu;
use super::routes::Demand;
use super::xml::escape;
use super::RunConfig;
use crate::geometry::{Polygon, Vec2};
use crate::traffic::{CarFollowModel, RoadNetwork, TrafficLightProgram};

fn shape(points: &[Vec2]) -> String {
    points
        .iter()
        .map(|p| format!("{},{}", p.x, p.y))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_network_xml(network: &RoadNetwork, programs: &[TrafficLightProgram]) -> String {
    let mut out = String::from("<net>\n");
    for j in network.junctions() {
        let _ = writeln!(
            out,
            r#"  <junction id="{}" x="{}" y="{}"/>"#,
            escape(&j.id),
            j.position.x,
            j.position.y
        );
    }
    for e in network.edges() {
        let shape_attr = if e.explicit_shape {
            format!(r#" shape="{}""#, shape(&e.shape))
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            r#"  <edge id="{}" from="{}" to="{}"><lane speed="{}" length="{}"{shape_attr}/></edge>"#,
            escape(&e.id),
            escape(&e.from),
            escape(&e.to),
            e.speed_limit,
            e.length
        );
    }
    for p in programs {
        let _ = writeln!(
            out,
            r#"  <tlLogic id="{}" offset="{}">"#,
            escape(&p.id),
            p.offset
        );
        for ph in &p.phases {
            let _ = writeln!(
                out,
                r#"    <phase duration="{}" state="{}"/>"#,
                ph.duration,
                escape(&ph.state)
            );
        }
        out.push_str("  </tlLogic>\n");
    }
    for c in network.connections() {
        let signal = match &c.signal {
            Some((tl, idx)) => format!(r#" tl="{}" linkIndex="{idx}""#, escape(tl)),
            None => String::new(),
        };
        let _ = writeln!(
            out,
            r#"  <connection from="{}" to="{}"{signal}/>"#,
            escape(&c.from),
            escape(&c.to)
        );
    }
    out.push_str("</net>\n");
    out
}

pub fn write_routes_xml(demand: &Demand) -> String {
    let mut out = String::from("<routes>\n");
    for vt in demand.vtypes.values() {
        let model = match vt.model {
            CarFollowModel::Krauss => "Krauss",
            CarFollowModel::Idm => "IDM",
        };
        let desired = vt
            .desired_speed
            .map(|v| format!(r#" desiredSpeed="{v}""#))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            r#"  <vType id="{}" carFollowModel="{model}" accel="{}" decel="{}" tau="{}" length="{}" minGap="{}" maxSpeed="{}" delta="{}"{desired}/>"#,
            escape(&vt.id),
            vt.accel,
            vt.decel,
            vt.tau,
            vt.length,
            vt.min_gap,
            vt.max_speed,
            vt.delta
        );
    }
    for v in &demand.vehicles {
        let _ = writeln!(
            out,
            r#"  <vehicle id="{}" type="{}" depart="{}"><route edges="{}"/></vehicle>"#,
            escape(&v.id),
            escape(&v.vtype.id),
            v.depart,
            escape(&v.route.join(" "))
        );
    }
    out.push_str("</routes>\n");
    out
}

pub fn write_polygons_xml(buildings: &[Polygon], rsus: &[Rsu]) -> String {
    let mut out = String::from("<additional>\n");
    for p in buildings {
        let _ = writeln!(
            out,
            r#"  <poly id="{}" type="building" shape="{}"/>"#,
            escape(&p.id),
            shape(&p.vertices)
        );
    }
    for r in rsus {
        let _ = writeln!(
            out,
            r#"  <poi id="{}" type="rsu" x="{}" y="{}"/>"#,
            escape(&r.id),
            r.position.x,
            r.position.y
        );
    }
    out.push_str("</additional>\n");
    out
}

/// Config naming the given files (relative to the config's directory).
pub fn write_sumocfg(
    config: &RunConfig,
    net: &str,
    routes: &str,
    polygons: Option<&str>,
) -> String {
    let mut out = String::from("<configuration>\n  <input>\n");
    let _ = writeln!(out, r#"    <net-file value="{}"/>"#, escape(net));
    let _ = writeln!(out, r#"    <route-files value="{}"/>"#, escape(routes));
    if let Some(p) = polygons {
        let _ = writeln!(out, r#"    <additional-files value="{}"/>"#, escape(p));
    }
    out.push_str("  </input>\n  <time>\n");
    let _ = writeln!(out, r#"    <step-length value="{}"/>"#, config.step_length);
    if let Some(end) = config.end {
        let _ = writeln!(out, r#"    <end value="{end}"/>"#);
    }
    out.push_str("  </time>\n");
    let _ = writeln!(
        out,
        "  <random_number>\n    <seed value=\"{}\"/>\n  </random_number>",
        config.seed
    );
    out.push_str("</configuration>\n");
    out
}
