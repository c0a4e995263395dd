use super::xml::{self, Attrs};
use super::{Locus, ScenarioError};
use crate::geometry::{Polygon, Vec2};

/// Fixed roadside unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Rsu {
    pub id: String,
    pub position: Vec2,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolyFile {
    pub buildings: Vec<Polygon>,
    pub rsus: Vec<Rsu>,
    pub warnings: Vec<String>,
}

fn is_building(kind: &str) -> bool {
    kind == "building" || kind.starts_with("building.")
}

/// Supported subset: `<poly id type shape>` where `type` is `building` or
/// `building.*` (other types are skipped with a warning) and `<poi id type="rsu"
/// x y>`. A closing vertex equal to the first is dropped.
pub fn parse_polygons(text: &str) -> Result<PolyFile, ScenarioError> {
    let doc = xml::parse(text)?;
    let root = doc.root_element();
    let mut out = PolyFile::default();

    for node in root.children().filter(|n| n.is_element()) {
        let a = Attrs::new(&doc, node);
        match node.tag_name().name() {
            "poly" => {
                let id = a.req("id")?;
                let kind = a.opt("type").unwrap_or("");
                let shape = xml::parse_shape(&a, a.req("shape")?)?;
                if !is_building(kind) {
                    out.warnings.push(format!(
                        "line {}: skipped poly '{id}' of type '{kind}'",
                        a.line
                    ));
                    continue;
                }
                let mut vertices: Vec<Vec2> = Vec::with_capacity(shape.len());
                for p in shape {
                    if vertices.last() != Some(&p) {
                        vertices.push(p);
                    }
                }
                while vertices.len() > 1 && vertices.first() == vertices.last() {
                    vertices.pop();
                }
                let mut distinct = vertices.clone();
                distinct.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
                distinct.dedup();
                let area2: f64 = (0..vertices.len())
                    .map(|i| vertices[i].cross(vertices[(i + 1) % vertices.len()]))
                    .sum();
                if distinct.len() < 3 || area2 == 0.0 {
                    return Err(ScenarioError::DegeneratePolygon {
                        at: Locus::line(a.line),
                        id: id.to_string(),
                    });
                }
                out.buildings.push(Polygon {
                    id: id.to_string(),
                    vertices,
                });
            }
            "poi" => {
                let id = a.req("id")?;
                if a.opt("type") == Some("rsu") {
                    out.rsus.push(Rsu {
                        id: id.to_string(),
                        position: Vec2::new(a.num("x")?, a.num("y")?),
                    });
                } else {
                    out.warnings
                        .push(format!("line {}: skipped poi '{id}'", a.line));
                }
            }
            other => out
                .warnings
                .push(format!("line {}: skipped unsupported <{other}>", a.line)),
        }
    }
    let mut ids: Vec<&str> = out.buildings.iter().map(|p| p.id.as_str()).collect();
    ids.extend(out.rsus.iter().map(|r| r.id.as_str()));
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(ScenarioError::schema(format!("duplicate id '{}'", w[0])));
    }
    Ok(out)
}
