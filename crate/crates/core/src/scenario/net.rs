use std::collections::BTreeMap;

use super::xml::{self, Attrs};
use super::ScenarioError;
use crate::geometry::Vec2;
use crate::traffic::{
    valid_state, Connection, Edge, Junction, Owner, RoadNetwork, TlsPhase, TrafficLightProgram,
};

/// Contents of a network file: the road graph plus its signal programs.
#[derive(Debug, Clone, PartialEq)]
pub struct NetFile {
    pub network: RoadNetwork,
    pub programs: Vec<TrafficLightProgram>,
    pub warnings: Vec<String>,
}

/// Parses the road graph only.
pub fn parse_network(text: &str) -> Result<RoadNetwork, ScenarioError> {
    parse_network_file(text).map(|f| f.network)
}

/// Supported subset: `<junction id x y>`, `<edge id from to>` with an optional
/// `<lane speed length shape>` child (or `speed`/`length` on the edge),
/// `<connection from to [tl linkIndex]>` and `<tlLogic id [offset]>` with
/// `<phase duration state>` children. Internal edges (`function="internal"`
/// or ids starting with `:`) are ignored; other elements produce a warning.
pub fn parse_network_file(text: &str) -> Result<NetFile, ScenarioError> {
    let doc = xml::parse(text)?;
    let root = doc.root_element();
    if root.tag_name().name() != "net" {
        return Err(ScenarioError::schema(format!(
            "expected <net>, found <{}>",
            root.tag_name().name()
        ))
        .at_line(xml::line_of(&doc, root)));
    }

    let mut junctions = Vec::new();
    let mut edges = Vec::new();
    let mut connections = Vec::new();
    let mut programs = Vec::new();
    let mut warnings = Vec::new();
    let mut connection_lines = Vec::new();

    for node in root.children().filter(|n| n.is_element()) {
        let a = Attrs::new(&doc, node);
        match node.tag_name().name() {
            "junction" => {
                let id = a.req("id")?;
                if id.starts_with(':') || a.opt("type") == Some("internal") {
                    continue;
                }
                junctions.push(Junction {
                    id: id.to_string(),
                    position: Vec2::new(a.num("x")?, a.num("y")?),
                });
            }
            "edge" => {
                let id = a.req("id")?;
                if id.starts_with(':') || a.opt("function") == Some("internal") {
                    continue;
                }
                let lane = node.children().find(|n| n.has_tag_name("lane"));
                let lane_attrs = lane.map(|l| Attrs::new(&doc, l));
                let pick = |name: &str| -> Result<Option<f64>, ScenarioError> {
                    if let Some(la) = &lane_attrs {
                        if let Some(v) = la.num_opt(name)? {
                            return Ok(Some(v));
                        }
                    }
                    a.num_opt(name)
                };
                let speed =
                    pick("speed")?.ok_or_else(|| a.schema(format!("edge '{id}' has no speed")))?;
                let length = pick("length")?.unwrap_or(f64::NAN);
                let shape_attr = lane_attrs
                    .as_ref()
                    .and_then(|la| la.opt("shape"))
                    .or_else(|| a.opt("shape"));
                let shape = match shape_attr {
                    Some(s) => xml::parse_shape(&a, s)?,
                    None => Vec::new(),
                };
                if !shape.is_empty() && shape.len() < 2 {
                    return Err(a.schema(format!("edge '{id}' shape needs two points")));
                }
                if length <= 0.0 {
                    return Err(a.schema(format!("edge '{id}' has non-positive length")));
                }
                if speed <= 0.0 {
                    return Err(a.schema(format!("edge '{id}' has non-positive speed")));
                }
                edges.push(Edge {
                    id: id.to_string(),
                    from: a.req("from")?.to_string(),
                    to: a.req("to")?.to_string(),
                    length,
                    speed_limit: speed,
                    explicit_shape: !shape.is_empty(),
                    shape,
                });
            }
            "connection" => {
                let from = a.req("from")?;
                let to = a.req("to")?;
                if from.starts_with(':') || to.starts_with(':') {
                    continue;
                }
                let signal = match a.opt("tl") {
                    Some(tl) => {
                        let idx = a.num("linkIndex")?;
                        if idx < 0.0 || idx.fract() != 0.0 {
                            return Err(a.schema(format!("bad linkIndex {idx}")));
                        }
                        Some((tl.to_string(), idx as usize))
                    }
                    None => None,
                };
                connection_lines.push(a.line);
                connections.push(Connection {
                    from: from.to_string(),
                    to: to.to_string(),
                    signal,
                });
            }
            "tlLogic" => {
                let id = a.req("id")?;
                let mut phases = Vec::new();
                for p in node.children().filter(|n| n.has_tag_name("phase")) {
                    let pa = Attrs::new(&doc, p);
                    let duration = pa.num("duration")?;
                    let state = pa.req("state")?;
                    if duration <= 0.0 {
                        return Err(pa.schema(format!("phase duration {duration} must be > 0")));
                    }
                    if !valid_state(state) {
                        return Err(pa.schema(format!("unsupported signal state '{state}'")));
                    }
                    phases.push(TlsPhase {
                        duration,
                        state: state.to_string(),
                    });
                }
                if phases.is_empty() {
                    return Err(a.schema(format!("tlLogic '{id}' has no phases")));
                }
                programs.push((
                    a.line,
                    TrafficLightProgram {
                        id: id.to_string(),
                        phases,
                        offset: a.num_opt("offset")?.unwrap_or(0.0),
                        owner: Owner::Traffic,
                    },
                ));
            }
            "location" => {}
            other => warnings.push(format!("line {}: skipped unsupported <{other}>", a.line)),
        }
    }

    let network = RoadNetwork::new(junctions, edges, connections)?;

    let mut by_id: BTreeMap<&str, u32> = BTreeMap::new();
    for (line, p) in &programs {
        if by_id.insert(&p.id, *line).is_some() {
            return Err(
                ScenarioError::schema(format!("duplicate tlLogic '{}'", p.id)).at_line(*line),
            );
        }
    }
    for (c, line) in network.connections().iter().zip(connection_lines) {
        if let Some((tl, _)) = &c.signal {
            if !by_id.contains_key(tl.as_str()) {
                return Err(ScenarioError::dangling(format!(
                    "connection {} -> {} references tlLogic '{tl}'",
                    c.from, c.to
                ))
                .at_line(line));
            }
        }
    }
    let links = network.controlled_links();
    for (line, p) in &programs {
        let mut idxs = links.get(p.id.as_str()).cloned().unwrap_or_default();
        let count = idxs.len();
        for phase in &p.phases {
            if phase.state.chars().count() != count {
                return Err(ScenarioError::schema(format!(
                    "tlLogic '{}' state '{}' has {} signals for {} controlled connections",
                    p.id,
                    phase.state,
                    phase.state.chars().count(),
                    count
                ))
                .at_line(*line));
            }
        }
        idxs.sort_unstable();
        if idxs.iter().enumerate().any(|(i, &x)| i != x) {
            return Err(ScenarioError::schema(format!(
                "tlLogic '{}' link indices are not 0..{}",
                p.id, count
            ))
            .at_line(*line));
        }
    }

    Ok(NetFile {
        network,
        programs: programs.into_iter().map(|(_, p)| p).collect(),
        warnings,
    })
}
