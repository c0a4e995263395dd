use roxmltree::{Document, Node};

use super::{Locus, ScenarioError};

pub(crate) fn parse(text: &str) -> Result<Document<'_>, ScenarioError> {
    Document::parse(text).map_err(|e| {
        let pos = e.pos();
        ScenarioError::Xml {
            at: Locus::line(pos.row),
            message: e.to_string(),
        }
    })
}

pub(crate) fn line_of(doc: &Document<'_>, node: Node<'_, '_>) -> u32 {
    doc.text_pos_at(node.range().start).row
}

/// Attribute accessors that report the element's line on failure.
pub(crate) struct Attrs<'a, 'input> {
    pub node: Node<'a, 'input>,
    pub line: u32,
}

impl<'a, 'input> Attrs<'a, 'input> {
    pub fn new(doc: &Document<'_>, node: Node<'a, 'input>) -> Self {
        Self {
            line: line_of(doc, node),
            node,
        }
    }

    pub fn opt(&self, name: &str) -> Option<&'a str> {
        self.node.attribute(name)
    }

    pub fn req(&self, name: &str) -> Result<&'a str, ScenarioError> {
        self.node.attribute(name).ok_or_else(|| {
            ScenarioError::schema(format!(
                "<{}> is missing required attribute '{name}'",
                self.node.tag_name().name()
            ))
            .at_line(self.line)
        })
    }

    pub fn num_opt(&self, name: &str) -> Result<Option<f64>, ScenarioError> {
        match self.node.attribute(name) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| {
                    ScenarioError::schema(format!(
                        "<{}> attribute '{name}'='{v}' is not a number",
                        self.node.tag_name().name()
                    ))
                    .at_line(self.line)
                }),
        }
    }

    pub fn num(&self, name: &str) -> Result<f64, ScenarioError> {
        self.req(name)?;
        Ok(self.num_opt(name)?.expect("attribute present"))
    }

    pub fn schema(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError::schema(message).at_line(self.line)
    }
}

/// Parses a SUMO shape string `"x1,y1 x2,y2 ..."`.
pub(crate) fn parse_shape(
    attrs: &Attrs<'_, '_>,
    shape: &str,
) -> Result<Vec<crate::geometry::Vec2>, ScenarioError> {
    shape
        .split_whitespace()
        .map(|pair| {
            let mut it = pair.split(',');
            let x = it.next().and_then(|s| s.parse::<f64>().ok());
            let y = it.next().and_then(|s| s.parse::<f64>().ok());
            match (x, y, it.next()) {
                (Some(x), Some(y), None) if x.is_finite() && y.is_finite() => {
                    Ok(crate::geometry::Vec2::new(x, y))
                }
                _ => Err(attrs.schema(format!("bad shape point '{pair}'"))),
            }
        })
        .collect()
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}
