//! Static graphic import: polyline JSON and a straight-segment SVG subset.

use serde::{Deserialize, Serialize};

use crate::content::StaticElement;
use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphicFormat {
    Svg,
    Polyline,
}

#[derive(Debug, Deserialize)]
struct PolylineEntry {
    points: Vec<[f64; 2]>,
    #[serde(default)]
    closed: bool,
}

/// Accepts `[{"points": [[x, y], ...], "closed": bool}, ...]`.
pub fn import_polyline_json(text: &str) -> Result<Vec<StaticElement>, ServiceError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let entries: Vec<PolylineEntry> =
        serde_json::from_str(text).map_err(|e| ServiceError::Validation(format!("polyline JSON: {e}")))?;
    entries.into_iter().map(|e| element(e.points, e.closed)).collect()
}

fn element(points: Vec<[f64; 2]>, closed: bool) -> Result<StaticElement, ServiceError> {
    if points.len() < 2 {
        return Err(ServiceError::Validation("a polyline needs at least two points".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ServiceError::Validation("polyline coordinates must be finite".into()));
    }
    Ok(if closed { StaticElement::Polygon { points } } else { StaticElement::Polyline { points } })
}

/// Imports `<line>`, `<polyline>`, `<polygon>`, `<rect>` and `<path>` with
/// M/L/H/V/Z commands. Anything curved or transformed is reported back.
/// User units are taken as millimetres.
pub fn import_svg(text: &str) -> Result<Vec<StaticElement>, ServiceError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let doc = roxmltree::Document::parse(text).map_err(|e| ServiceError::Validation(format!("SVG: {e}")))?;
    let mut out = Vec::new();
    let mut offending = Vec::new();
    let mut counts: std::collections::HashMap<&str, usize> = Default::default();
    for node in doc.descendants().filter(|n| n.is_element()) {
        let tag = node.tag_name().name();
        let n = counts.entry(tag).or_default();
        *n += 1;
        let label = match node.attribute("id") {
            Some(id) => format!("{tag}#{id}"),
            None => format!("{tag}[{}]", *n),
        };
        if node.attribute("transform").is_some() {
            offending.push(format!("{label}: transform"));
            continue;
        }
        let num = |name: &str| -> Result<f64, ServiceError> {
            node.attribute(name)
                .unwrap_or("0")
                .trim()
                .parse::<f64>()
                .map_err(|_| ServiceError::Validation(format!("{label}: bad {name}")))
        };
        match tag {
            "svg" | "g" | "title" | "desc" | "metadata" | "defs" => {}
            "line" => out.push(element(vec![[num("x1")?, num("y1")?], [num("x2")?, num("y2")?]], false)?),
            "polyline" | "polygon" => {
                let points = parse_points(node.attribute("points").unwrap_or(""))
                    .ok_or_else(|| ServiceError::Validation(format!("{label}: bad points")))?;
                out.push(element(points, tag == "polygon")?);
            }
            "rect" => {
                let (x, y, w, h) = (num("x")?, num("y")?, num("width")?, num("height")?);
                out.push(element(vec![[x, y], [x + w, y], [x + w, y + h], [x, y + h]], true)?);
            }
            "path" => match parse_path(node.attribute("d").unwrap_or("")) {
                Ok(subpaths) => {
                    for (points, closed) in subpaths {
                        out.push(element(points, closed)?);
                    }
                }
                Err(PathIssue::Curve(c)) => offending.push(format!("{label}: curve command '{c}'")),
                Err(PathIssue::Syntax(msg)) => return Err(ServiceError::Validation(format!("{label}: {msg}"))),
            },
            other => offending.push(format!("{label}: unsupported element <{other}>")),
        }
    }
    if offending.is_empty() {
        Ok(out)
    } else {
        Err(ServiceError::UnsupportedGraphic(offending))
    }
}

fn numbers(s: &str) -> Option<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect()
}

fn parse_points(s: &str) -> Option<Vec<[f64; 2]>> {
    let v = numbers(s)?;
    if v.len() % 2 != 0 {
        return None;
    }
    Some(v.chunks(2).map(|c| [c[0], c[1]]).collect())
}

enum PathIssue {
    Curve(char),
    Syntax(String),
}

fn tokenize(d: &str) -> Result<Vec<Result<char, f64>>, PathIssue> {
    let mut out = Vec::new();
    let bytes: Vec<char> = d.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_whitespace() || c == ',' {
            i += 1;
        } else if c.is_ascii_alphabetic() && c != 'e' && c != 'E' {
            out.push(Ok(c));
            i += 1;
        } else {
            let start = i;
            i += 1;
            while i < bytes.len() {
                let ch = bytes[i];
                let prev = bytes[i - 1];
                let ok = ch.is_ascii_digit()
                    || ch == '.'
                    || ch == 'e'
                    || ch == 'E'
                    || ((ch == '-' || ch == '+') && (prev == 'e' || prev == 'E'));
                if !ok {
                    break;
                }
                i += 1;
            }
            let tok: String = bytes[start..i].iter().collect();
            out.push(Err(tok.parse().map_err(|_| PathIssue::Syntax(format!("bad number '{tok}'")))?));
        }
    }
    Ok(out)
}

/// Points of one subpath and whether it was closed.
type Subpath = (Vec<[f64; 2]>, bool);

fn parse_path(d: &str) -> Result<Vec<Subpath>, PathIssue> {
    let tokens = tokenize(d)?;
    let mut subpaths = Vec::new();
    let mut current: Vec<[f64; 2]> = Vec::new();
    let mut pos = [0.0, 0.0];
    let mut cmd: Option<char> = None;
    let mut i = 0;
    let flush = |current: &mut Vec<[f64; 2]>, subpaths: &mut Vec<(Vec<[f64; 2]>, bool)>, closed: bool| {
        if current.len() >= 2 {
            subpaths.push((std::mem::take(current), closed));
        } else {
            current.clear();
        }
    };
    while i < tokens.len() {
        if let Ok(c) = tokens[i] {
            i += 1;
            match c {
                'M' | 'm' | 'L' | 'l' | 'H' | 'h' | 'V' | 'v' => cmd = Some(c),
                'Z' | 'z' => {
                    let start = current.first().copied();
                    flush(&mut current, &mut subpaths, true);
                    if let Some(s) = start {
                        pos = s;
                    }
                    cmd = None;
                    continue;
                }
                other if "CcSsQqTtAa".contains(other) => return Err(PathIssue::Curve(other)),
                other => return Err(PathIssue::Syntax(format!("unknown command '{other}'"))),
            }
        }
        let Some(c) = cmd else {
            return Err(PathIssue::Syntax("coordinates before a command".into()));
        };
        let mut take = || -> Result<f64, PathIssue> {
            match tokens.get(i) {
                Some(Err(v)) => {
                    i += 1;
                    Ok(*v)
                }
                _ => Err(PathIssue::Syntax(format!("missing coordinate for '{c}'"))),
            }
        };
        let rel = c.is_ascii_lowercase();
        match c.to_ascii_uppercase() {
            'M' => {
                let (x, y) = (take()?, take()?);
                flush(&mut current, &mut subpaths, false);
                pos = if rel { [pos[0] + x, pos[1] + y] } else { [x, y] };
                current.push(pos);
                // further pairs after a moveto are linetos
                cmd = Some(if rel { 'l' } else { 'L' });
            }
            'L' => {
                let (x, y) = (take()?, take()?);
                pos = if rel { [pos[0] + x, pos[1] + y] } else { [x, y] };
                current.push(pos);
            }
            'H' => {
                let x = take()?;
                pos[0] = if rel { pos[0] + x } else { x };
                current.push(pos);
            }
            'V' => {
                let y = take()?;
                pos[1] = if rel { pos[1] + y } else { y };
                current.push(pos);
            }
            _ => unreachable!(),
        }
    }
    flush(&mut current, &mut subpaths, false);
    Ok(subpaths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_segments() {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg">
            <line x1="0" y1="0" x2="10" y2="5"/>
            <polyline points="1,1 2,2 3,1"/>
            <g><polygon points="0 0 4 0 4 4"/></g>
            <path d="M 10 10 L 20 10 l 0 10 H 5 v -5 Z M1,2 3,4"/>
        </svg>"#;
        let els = import_svg(svg).unwrap();
        assert_eq!(els.len(), 5);
        assert_eq!(els[0], StaticElement::Polyline { points: vec![[0.0, 0.0], [10.0, 5.0]] });
        assert!(matches!(&els[2], StaticElement::Polygon { points } if points.len() == 3));
        assert_eq!(
            els[3],
            StaticElement::Polygon { points: vec![[10.0, 10.0], [20.0, 10.0], [20.0, 20.0], [5.0, 20.0], [5.0, 15.0]] }
        );
        assert_eq!(els[4], StaticElement::Polyline { points: vec![[1.0, 2.0], [3.0, 4.0]] });
    }

    #[test]
    fn curves_are_listed() {
        let svg = r#"<svg><path id="coast" d="M0 0 C 1 1 2 2 3 3"/><circle r="4"/><line x1="0" y1="0" x2="1" y2="1"/></svg>"#;
        match import_svg(svg) {
            Err(ServiceError::UnsupportedGraphic(items)) => {
                assert_eq!(items, vec!["path#coast: curve command 'C'".to_string(), "circle[1]: unsupported element <circle>".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_inputs() {
        assert!(import_svg("").unwrap().is_empty());
        assert!(import_svg("<svg/>").unwrap().is_empty());
        assert!(import_polyline_json("[]").unwrap().is_empty());
    }

    #[test]
    fn polyline_json() {
        let els = import_polyline_json(r#"[{"points": [[0,0],[1,2]]}, {"points": [[0,0],[1,0],[1,1]], "closed": true}]"#).unwrap();
        assert_eq!(els.len(), 2);
        assert!(matches!(els[1], StaticElement::Polygon { .. }));
        assert!(import_polyline_json(r#"[{"points": [[0,0]]}]"#).is_err());
    }

    #[test]
    fn exponent_numbers() {
        let els = import_svg(r#"<svg><path d="M1e1,0L-2.5e-1-3"/></svg>"#).unwrap();
        assert_eq!(els[0], StaticElement::Polyline { points: vec![[10.0, 0.0], [-0.25, -3.0]] });
    }
}
