use std::collections::BTreeMap;

use super::xml::{self, Attrs};
use super::{Locus, ScenarioError};
use crate::traffic::{CarFollowModel, RoadNetwork, VehicleDemand, VehicleType};

pub const DEFAULT_VTYPE: &str = "DEFAULT_VEHTYPE";

/// Vehicle types and departures from one or more route files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Demand {
    pub vtypes: BTreeMap<String, VehicleType>,
    /// Sorted by departure time; ties keep file order.
    pub vehicles: Vec<VehicleDemand>,
    pub warnings: Vec<String>,
}

impl Demand {
    /// Appends another file's demand. Vehicle and vType ids must stay unique.
    pub fn merge(&mut self, other: Demand) -> Result<(), ScenarioError> {
        for (id, vt) in other.vtypes {
            if self.vtypes.contains_key(&id) && id != DEFAULT_VTYPE {
                return Err(ScenarioError::schema(format!("duplicate vType '{id}'")));
            }
            self.vtypes.entry(id).or_insert(vt);
        }
        for v in other.vehicles {
            if self.vehicles.iter().any(|w| w.id == v.id) {
                return Err(ScenarioError::schema(format!(
                    "duplicate vehicle '{}'",
                    v.id
                )));
            }
            self.vehicles.push(v);
        }
        self.vehicles.sort_by(|a, b| a.depart.total_cmp(&b.depart));
        self.warnings.extend(other.warnings);
        Ok(())
    }
}

fn parse_model(a: &Attrs<'_, '_>) -> Result<CarFollowModel, ScenarioError> {
    match a.opt("carFollowModel") {
        None | Some("Krauss") => Ok(CarFollowModel::Krauss),
        Some("IDM") => Ok(CarFollowModel::Idm),
        Some(other) => Err(a.schema(format!("unsupported carFollowModel '{other}'"))),
    }
}

fn parse_vtype(a: &Attrs<'_, '_>) -> Result<VehicleType, ScenarioError> {
    let mut vt = VehicleType::defaults(a.req("id")?, parse_model(a)?);
    let fields: [(&str, &mut f64); 7] = [
        ("accel", &mut vt.accel),
        ("decel", &mut vt.decel),
        ("tau", &mut vt.tau),
        ("length", &mut vt.length),
        ("minGap", &mut vt.min_gap),
        ("maxSpeed", &mut vt.max_speed),
        ("delta", &mut vt.delta),
    ];
    for (name, slot) in fields {
        if let Some(v) = a.num_opt(name)? {
            *slot = v;
        }
    }
    vt.desired_speed = a.num_opt("desiredSpeed")?;
    for (name, v) in [
        ("accel", vt.accel),
        ("decel", vt.decel),
        ("tau", vt.tau),
        ("length", vt.length),
        ("maxSpeed", vt.max_speed),
        ("delta", vt.delta),
    ] {
        if v <= 0.0 {
            return Err(a.schema(format!("vType '{}' {name} must be > 0", vt.id)));
        }
    }
    if vt.min_gap < 0.0 {
        return Err(a.schema(format!("vType '{}' minGap must be >= 0", vt.id)));
    }
    Ok(vt)
}

fn route_edges(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Supported subset: `<vType>` (accel, decel, tau, length, minGap, maxSpeed,
/// delta, desiredSpeed, carFollowModel Krauss|IDM), `<route id edges>` and
/// `<vehicle id type route depart>` with either a `route` reference or a
/// nested `<route edges>`. Routes are checked against `network`.
pub fn parse_routes(text: &str, network: &RoadNetwork) -> Result<Demand, ScenarioError> {
    let doc = xml::parse(text)?;
    let root = doc.root_element();
    if root.tag_name().name() != "routes" {
        return Err(ScenarioError::schema(format!(
            "expected <routes>, found <{}>",
            root.tag_name().name()
        ))
        .at_line(xml::line_of(&doc, root)));
    }

    let mut demand = Demand::default();
    demand.vtypes.insert(
        DEFAULT_VTYPE.to_string(),
        VehicleType::defaults(DEFAULT_VTYPE, CarFollowModel::Krauss),
    );
    let mut routes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut vehicles: Vec<(u32, VehicleDemand)> = Vec::new();

    for node in root.children().filter(|n| n.is_element()) {
        let a = Attrs::new(&doc, node);
        match node.tag_name().name() {
            "vType" => {
                let vt = parse_vtype(&a)?;
                if vt.id != DEFAULT_VTYPE && demand.vtypes.contains_key(&vt.id) {
                    return Err(a.schema(format!("duplicate vType '{}'", vt.id)));
                }
                demand.vtypes.insert(vt.id.clone(), vt);
            }
            "route" => {
                let id = a.req("id")?;
                if routes
                    .insert(id.to_string(), route_edges(a.req("edges")?))
                    .is_some()
                {
                    return Err(a.schema(format!("duplicate route '{id}'")));
                }
            }
            "vehicle" => {
                let id = a.req("id")?.to_string();
                let vtype_id = a.opt("type").unwrap_or(DEFAULT_VTYPE);
                let vtype = demand.vtypes.get(vtype_id).cloned().ok_or_else(|| {
                    ScenarioError::UnknownVType {
                        at: Locus::line(a.line),
                        vehicle: id.clone(),
                        vtype: vtype_id.to_string(),
                    }
                })?;
                let nested = node.children().find(|n| n.has_tag_name("route"));
                let route = match (a.opt("route"), nested) {
                    (Some(r), None) => routes.get(r).cloned().ok_or_else(|| {
                        ScenarioError::dangling(format!("vehicle '{id}' references route '{r}'"))
                            .at_line(a.line)
                    })?,
                    (None, Some(n)) => route_edges(Attrs::new(&doc, n).req("edges")?),
                    (Some(_), Some(_)) => {
                        return Err(a.schema(format!("vehicle '{id}' has two routes")))
                    }
                    (None, None) => return Err(a.schema(format!("vehicle '{id}' has no route"))),
                };
                check_route(network, &id, &route, a.line)?;
                let depart = a.num("depart")?;
                if depart < 0.0 {
                    return Err(a.schema(format!("vehicle '{id}' departs before 0")));
                }
                if vehicles.iter().any(|(_, v)| v.id == id) {
                    return Err(a.schema(format!("duplicate vehicle '{id}'")));
                }
                vehicles.push((
                    a.line,
                    VehicleDemand {
                        id,
                        vtype,
                        depart,
                        route,
                    },
                ));
            }
            other => demand
                .warnings
                .push(format!("line {}: skipped unsupported <{other}>", a.line)),
        }
    }

    vehicles.sort_by(|a, b| a.1.depart.total_cmp(&b.1.depart));
    demand.vehicles = vehicles.into_iter().map(|(_, v)| v).collect();
    Ok(demand)
}

fn check_route(
    network: &RoadNetwork,
    vehicle: &str,
    route: &[String],
    line: u32,
) -> Result<(), ScenarioError> {
    if route.is_empty() {
        return Err(
            ScenarioError::schema(format!("vehicle '{vehicle}' has an empty route")).at_line(line),
        );
    }
    for e in route {
        if network.edge(e).is_none() {
            return Err(ScenarioError::UnknownEdge {
                at: Locus::line(line),
                vehicle: vehicle.to_string(),
                edge: e.clone(),
            });
        }
    }
    for w in route.windows(2) {
        if !network.is_connected(&w[0], &w[1]) {
            return Err(ScenarioError::NonContiguousRoute {
                at: Locus::line(line),
                vehicle: vehicle.to_string(),
                from: w[0].clone(),
                to: w[1].clone(),
            });
        }
    }
    Ok(())
}
