//! GeoJSON windows and CSV point patterns.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::{Point, PointPattern, Window};
use crate::error::{Error, Result};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &str, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), message: message.into() }
}

pub fn read_window_geojson(path: &Path) -> Result<Window> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_window_geojson(&text, &path.display().to_string())
}

/// Accepts a bare Polygon geometry, a Feature, or the first feature of a
/// FeatureCollection.
pub fn parse_window_geojson(text: &str, origin: &str) -> Result<Window> {
    let value: Value = serde_json::from_str(text).map_err(|e| parse_err(origin, e.to_string()))?;
    let geometry = match value.get("type").and_then(Value::as_str) {
        Some("Polygon") => &value,
        Some("Feature") => value.get("geometry").ok_or_else(|| parse_err(origin, "feature without geometry"))?,
        Some("FeatureCollection") => value
            .get("features")
            .and_then(|f| f.get(0))
            .and_then(|f| f.get("geometry"))
            .ok_or_else(|| parse_err(origin, "feature collection without features"))?,
        other => return Err(parse_err(origin, format!("unsupported GeoJSON type {other:?}"))),
    };
    if geometry.get("type").and_then(Value::as_str) != Some("Polygon") {
        return Err(parse_err(origin, "window geometry must be a Polygon"));
    }
    let rings = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(origin, "polygon without coordinates"))?;
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let coords = ring.as_array().ok_or_else(|| parse_err(origin, "ring is not an array"))?;
        let mut pts = Vec::with_capacity(coords.len());
        for c in coords {
            let x = c.get(0).and_then(Value::as_f64);
            let y = c.get(1).and_then(Value::as_f64);
            match (x, y) {
                (Some(x), Some(y)) => pts.push(Point::new(x, y)),
                _ => return Err(parse_err(origin, "coordinate is not a number pair")),
            }
        }
        parsed.push(pts);
    }
    if parsed.is_empty() {
        return Err(parse_err(origin, "polygon has no rings"));
    }
    let exterior = parsed.remove(0);
    Window::new(exterior, parsed)
}

pub fn window_to_geojson(window: &Window) -> String {
    let ring = |r: &[Point]| {
        let mut v: Vec<Value> = r.iter().map(|p| json!([p.x, p.y])).collect();
        v.push(json!([r[0].x, r[0].y]));
        Value::Array(v)
    };
    let rings: Vec<Value> = window.rings().map(ring).collect();
    let doc = json!({
        "type": "Feature",
        "properties": {},
        "geometry": { "type": "Polygon", "coordinates": rings }
    });
    serde_json::to_string_pretty(&doc).expect("geojson serialization")
}

pub fn write_window_geojson(path: &Path, window: &Window) -> Result<()> {
    fs::write(path, window_to_geojson(window)).map_err(|e| io_err(path, e))
}

pub fn read_pattern_csv(path: &Path) -> Result<PointPattern> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_pattern_csv(&text, &path.display().to_string())
}

/// Columns `x,y,mark[,cov1,...]` with a mandatory header row.
pub fn parse_pattern_csv(text: &str, origin: &str) -> Result<PointPattern> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(origin, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 3 || names[0] != "x" || names[1] != "y" || names[2] != "mark" {
        return Err(parse_err(origin, "header must start with x,y,mark"));
    }
    let cov_names: Vec<String> = names[3..].iter().map(|s| s.to_string()).collect();
    let mut points = Vec::new();
    let mut marks = Vec::new();
    let mut covs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(origin, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            record
                .get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| parse_err(origin, format!("row {}: column {} is not a number", line + 1, k + 1)))
        };
        let mark: usize = record
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(origin, format!("row {}: mark is not a non-negative integer", line + 1)))?;
        points.push(Point::new(num(0)?, num(1)?));
        marks.push(mark);
        let row: Vec<f64> = (3..names.len()).map(num).collect::<Result<_>>()?;
        covs.push(row);
    }
    let pattern = PointPattern::new(points, marks)?;
    if cov_names.is_empty() {
        Ok(pattern)
    } else {
        pattern.with_covariates(cov_names, covs)
    }
}

pub fn pattern_to_csv(pattern: &PointPattern) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string(), "y".to_string(), "mark".to_string()];
    header.extend(pattern.covariate_names.iter().cloned());
    w.write_record(&header).expect("in-memory csv");
    for i in 0..pattern.len() {
        let p = pattern.points[i];
        let mut rec = vec![format!("{}", p.x), format!("{}", p.y), pattern.marks[i].to_string()];
        if !pattern.covariates.is_empty() {
            rec.extend(pattern.covariates[i].iter().map(|v| format!("{v}")));
        }
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn write_pattern_csv(path: &Path, pattern: &PointPattern) -> Result<()> {
    fs::write(path, pattern_to_csv(pattern)).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geojson_round_trip() {
        let w = Window::new(
            vec![Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(3.0, 2.0), Point::new(0.0, 2.0)],
            vec![vec![Point::new(1.0, 0.5), Point::new(1.5, 0.5), Point::new(1.5, 1.0)]],
        )
        .unwrap();
        let back = parse_window_geojson(&window_to_geojson(&w), "mem").unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn bare_polygon() {
        let text = r#"{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}"#;
        assert!((parse_window_geojson(text, "mem").unwrap().area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_with_covariates() {
        let text = "x,y,mark,income\n0.1,0.2,0,3.5\n0.4,0.5,1,2.0\n";
        let p = parse_pattern_csv(text, "mem").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.covariate_names, vec!["income"]);
        assert_eq!(p.covariates[1], vec![2.0]);
        assert_eq!(parse_pattern_csv(&pattern_to_csv(&p), "mem").unwrap(), p);
    }

    #[test]
    fn csv_requires_header() {
        assert!(parse_pattern_csv("0.1,0.2,0\n", "mem").is_err());
        assert!(parse_pattern_csv("x,y,mark\n0.1,abc,0\n", "mem").is_err());
    }
}
