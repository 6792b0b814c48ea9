//! TSPLIB (`.tsp`) and VRPLIB (`.vrp`) text formats.
//!
//! Supported subset: `NODE_COORD_SECTION` with `EUC_2D` or `CEIL_2D` weights,
//! plus `DEMAND_SECTION` / `DEPOT_SECTION` for CVRP. Instances generated by
//! this crate for the UAV task use `TYPE : UAV` with `EDGE_WEIGHT_TYPE :
//! EXACT_2D` (unrounded distances).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Payload, ProblemError, ProblemInstance, ProblemKind, Rounding};

struct Header {
    fields: BTreeMap<String, (usize, String)>,
}

impl Header {
    fn get(&self, key: &str) -> Option<&(usize, String)> {
        self.fields.get(key)
    }

    fn require(&self, key: &str, eof_line: usize) -> Result<&(usize, String), ProblemError> {
        self.get(key).ok_or_else(|| ProblemError::parse(eof_line, format!("missing {key}")))
    }

    fn usize(&self, key: &str, eof_line: usize) -> Result<usize, ProblemError> {
        let (line, v) = self.require(key, eof_line)?;
        v.parse().map_err(|_| ProblemError::parse(*line, format!("{key} is not an integer: {v:?}")))
    }
}

enum Section {
    Coords,
    Demands,
    Depots,
}

struct Document<'a> {
    header: Header,
    sections: Vec<(Section, usize, Vec<(usize, &'a str)>)>,
    last_line: usize,
}

fn tokenize(text: &str) -> Result<Document<'_>, ProblemError> {
    let mut header = Header { fields: BTreeMap::new() };
    let mut sections: Vec<(Section, usize, Vec<(usize, &str)>)> = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let upper = line.to_ascii_uppercase();
        let section = match upper.as_str() {
            "NODE_COORD_SECTION" => Some(Section::Coords),
            "DEMAND_SECTION" => Some(Section::Demands),
            "DEPOT_SECTION" => Some(Section::Depots),
            "EOF" => break,
            _ => None,
        };
        if let Some(s) = section {
            sections.push((s, line_no, Vec::new()));
            continue;
        }
        if let Some((key, value)) = line.split_once(':') {
            let key = key.trim().to_ascii_uppercase();
            if !key.is_empty() && key.chars().all(|c| c.is_ascii_uppercase() || c == '_') {
                header.fields.insert(key, (line_no, value.trim().to_string()));
                continue;
            }
        }
        match sections.last_mut() {
            Some((_, _, rows)) => rows.push((line_no, line)),
            None => return Err(ProblemError::parse(line_no, format!("unexpected line {line:?}"))),
        }
    }
    Ok(Document { header, sections, last_line })
}

fn rounding(header: &Header, eof_line: usize) -> Result<Rounding, ProblemError> {
    let (line, kind) = header.require("EDGE_WEIGHT_TYPE", eof_line)?;
    match kind.as_str() {
        "EUC_2D" => Ok(Rounding::Nearest),
        "CEIL_2D" => Ok(Rounding::Ceil),
        "EXACT_2D" => Ok(Rounding::Exact),
        other => Err(ProblemError::parse(*line, format!("unsupported EDGE_WEIGHT_TYPE {other}"))),
    }
}

fn section<'d, 'a>(doc: &'d Document<'a>, want: fn(&Section) -> bool, name: &str) -> Result<(usize, &'d [(usize, &'a str)]), ProblemError> {
    doc.sections
        .iter()
        .find(|(s, _, _)| want(s))
        .map(|(_, line, rows)| (*line, rows.as_slice()))
        .ok_or_else(|| ProblemError::parse(doc.last_line, format!("missing {name}")))
}

fn parse_coords(doc: &Document<'_>, dimension: usize) -> Result<Vec<(f64, f64)>, ProblemError> {
    let (start, rows) = section(doc, |s| matches!(s, Section::Coords), "NODE_COORD_SECTION")?;
    let mut coords = Vec::with_capacity(dimension);
    for &(line, row) in rows {
        let parts: Vec<&str> = row.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(ProblemError::parse(line, format!("expected `index x y`, got {row:?}")));
        }
        let index: usize = parts[0].parse().map_err(|_| ProblemError::parse(line, format!("bad node index {:?}", parts[0])))?;
        if index != coords.len() + 1 {
            return Err(ProblemError::parse(line, format!("node {index} out of sequence")));
        }
        let num = |s: &str| -> Result<f64, ProblemError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ProblemError::parse(line, format!("non-numeric coordinate {s:?}")))
        };
        coords.push((num(parts[1])?, num(parts[2])?));
    }
    if coords.len() != dimension {
        let line = rows.last().map_or(start, |r| r.0);
        return Err(ProblemError::parse(line, format!("DIMENSION is {dimension} but {} coordinates were read", coords.len())));
    }
    Ok(coords)
}

fn name(header: &Header) -> String {
    header.get("NAME").map(|(_, v)| v.clone()).unwrap_or_else(|| "unnamed".to_string())
}

/// Parses a TSPLIB `.tsp` file (or a generated UAV file).
pub fn parse_tsplib(text: &str) -> Result<ProblemInstance, ProblemError> {
    let doc = tokenize(text)?;
    let eof = doc.last_line;
    let kind = match doc.header.get("TYPE").map(|(l, v)| (*l, v.as_str())) {
        None | Some((_, "TSP")) => ProblemKind::Tsp,
        Some((_, "UAV")) => ProblemKind::Uav,
        Some((line, other)) => return Err(ProblemError::parse(line, format!("unsupported TYPE {other}"))),
    };
    let dimension = doc.header.usize("DIMENSION", eof)?;
    let rounding = rounding(&doc.header, eof)?;
    let coords = parse_coords(&doc, dimension)?;
    ProblemInstance::new(kind, name(&doc.header), Payload::Tour { coords, rounding })
}

/// Parses a VRPLIB `.vrp` CVRP file.
pub fn parse_vrplib(text: &str) -> Result<ProblemInstance, ProblemError> {
    let doc = tokenize(text)?;
    let eof = doc.last_line;
    if let Some((line, t)) = doc.header.get("TYPE") {
        if t != "CVRP" {
            return Err(ProblemError::parse(*line, format!("unsupported TYPE {t}")));
        }
    }
    let dimension = doc.header.usize("DIMENSION", eof)?;
    let capacity = doc.header.usize("CAPACITY", eof)? as u64;
    let rounding = rounding(&doc.header, eof)?;
    let coords = parse_coords(&doc, dimension)?;

    let (start, rows) = section(&doc, |s| matches!(s, Section::Demands), "DEMAND_SECTION")?;
    let mut demands = Vec::with_capacity(dimension);
    for &(line, row) in rows {
        let parts: Vec<&str> = row.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [i, d] => i.parse::<usize>().ok().zip(d.parse::<u64>().ok()),
            _ => None,
        };
        let (index, demand) = parsed.ok_or_else(|| ProblemError::parse(line, format!("expected `index demand`, got {row:?}")))?;
        if index != demands.len() + 1 {
            return Err(ProblemError::parse(line, format!("node {index} out of sequence")));
        }
        if demand > capacity {
            return Err(ProblemError::parse(line, format!("demand {demand} exceeds capacity {capacity}")));
        }
        demands.push(demand);
    }
    if demands.len() != dimension {
        let line = rows.last().map_or(start, |r| r.0);
        return Err(ProblemError::parse(line, format!("DIMENSION is {dimension} but {} demands were read", demands.len())));
    }

    let (start, rows) = section(&doc, |s| matches!(s, Section::Depots), "DEPOT_SECTION")?;
    let mut depot = None;
    for &(line, row) in rows {
        let v: i64 = row.parse().map_err(|_| ProblemError::parse(line, format!("bad depot entry {row:?}")))?;
        if v == -1 {
            break;
        }
        if depot.is_some() {
            return Err(ProblemError::parse(line, "only a single depot is supported"));
        }
        if v < 1 || v as usize > dimension {
            return Err(ProblemError::parse(line, format!("depot {v} out of range")));
        }
        depot = Some(v as usize - 1);
    }
    let depot = depot.ok_or_else(|| ProblemError::parse(start, "DEPOT_SECTION lists no depot"))?;
    if demands[depot] != 0 {
        return Err(ProblemError::parse(start, "depot demand must be 0"));
    }
    ProblemInstance::new(
        ProblemKind::Cvrp,
        name(&doc.header),
        Payload::Cvrp { coords, demands, capacity, depot, rounding },
    )
}

fn weight_type(r: Rounding) -> &'static str {
    match r {
        Rounding::Nearest => "EUC_2D",
        Rounding::Ceil => "CEIL_2D",
        Rounding::Exact => "EXACT_2D",
    }
}

fn write_coords(out: &mut String, coords: &[(f64, f64)]) {
    out.push_str("NODE_COORD_SECTION\n");
    for (i, (x, y)) in coords.iter().enumerate() {
        let _ = writeln!(out, "{} {} {}", i + 1, x, y);
    }
}

/// Writes a TSP or UAV instance in TSPLIB syntax.
pub fn serialize_tsplib(instance: &ProblemInstance) -> Option<String> {
    let Payload::Tour { coords, rounding } = instance.payload() else {
        return None;
    };
    let kind = if instance.kind() == ProblemKind::Uav { "UAV" } else { "TSP" };
    let mut out = String::new();
    let _ = writeln!(out, "NAME : {}", instance.name());
    let _ = writeln!(out, "TYPE : {kind}");
    let _ = writeln!(out, "DIMENSION : {}", coords.len());
    let _ = writeln!(out, "EDGE_WEIGHT_TYPE : {}", weight_type(*rounding));
    write_coords(&mut out, coords);
    out.push_str("EOF\n");
    Some(out)
}

/// Writes a CVRP instance in VRPLIB syntax.
pub fn serialize_vrplib(instance: &ProblemInstance) -> Option<String> {
    let Payload::Cvrp { coords, demands, capacity, depot, rounding } = instance.payload() else {
        return None;
    };
    let mut out = String::new();
    let _ = writeln!(out, "NAME : {}", instance.name());
    out.push_str("TYPE : CVRP\n");
    let _ = writeln!(out, "DIMENSION : {}", coords.len());
    let _ = writeln!(out, "EDGE_WEIGHT_TYPE : {}", weight_type(*rounding));
    let _ = writeln!(out, "CAPACITY : {capacity}");
    write_coords(&mut out, coords);
    out.push_str("DEMAND_SECTION\n");
    for (i, d) in demands.iter().enumerate() {
        let _ = writeln!(out, "{} {}", i + 1, d);
    }
    let _ = write!(out, "DEPOT_SECTION\n{}\n-1\nEOF\n", depot + 1);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "NAME : tiny\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 3 0\n3 3 4\nEOF\n";

    #[test]
    fn minimal_file() {
        let inst = parse_tsplib(TINY).unwrap();
        assert_eq!(inst.dimension(), 3);
        assert_eq!(inst.name(), "tiny");
        assert_eq!(inst.evaluate(&[0, 1, 2]).unwrap(), 12.0);
    }

    #[test]
    fn nearest_integer_rounding() {
        let text = "NAME : r\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 1 1\n";
        // sqrt(2) rounds to 1 each way
        assert_eq!(parse_tsplib(text).unwrap().evaluate(&[0, 1]).unwrap(), 2.0);
        let ceil = text.replace("EUC_2D", "CEIL_2D");
        assert_eq!(parse_tsplib(&ceil).unwrap().evaluate(&[0, 1]).unwrap(), 4.0);
    }

    #[test]
    fn truncated_coordinates_cite_line() {
        let text = "NAME : t\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 3";
        assert_eq!(
            parse_tsplib(text).unwrap_err(),
            ProblemError::Parse { line: 6, message: "expected `index x y`, got \"2 3\"".into() }
        );
    }

    #[test]
    fn errors_name_the_line() {
        let missing = "NAME : t\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\n";
        assert!(matches!(parse_tsplib(missing), Err(ProblemError::Parse { line: 3, .. })));
        let bad = TINY.replace("2 3 0", "2 x 0");
        assert!(matches!(parse_tsplib(&bad), Err(ProblemError::Parse { line: 7, .. })));
        let short = TINY.replace("DIMENSION : 3", "DIMENSION : 4");
        assert!(matches!(parse_tsplib(&short), Err(ProblemError::Parse { line: 8, .. })));
        let weights = TINY.replace("EUC_2D", "GEO");
        assert!(matches!(parse_tsplib(&weights), Err(ProblemError::Parse { line: 4, .. })));
    }

    #[test]
    fn vrplib_parses_and_round_trips() {
        let text = "NAME : v\nTYPE : CVRP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\nNODE_COORD_SECTION\n1 0 0\n2 3 4\n3 6 8\nDEMAND_SECTION\n1 0\n2 5\n3 6\nDEPOT_SECTION\n1\n-1\nEOF\n";
        let inst = parse_vrplib(text).unwrap();
        assert_eq!(inst.dimension(), 2);
        // demands 5 + 6 > 10: two out-and-back routes of 10 and 20
        assert_eq!(inst.evaluate(&[0, 1]).unwrap(), 30.0);
        let again = parse_vrplib(&serialize_vrplib(&inst).unwrap()).unwrap();
        assert_eq!(inst, again);
        let over = text.replace("3 6\nDEPOT", "3 11\nDEPOT");
        assert!(matches!(parse_vrplib(&over), Err(ProblemError::Parse { line: 13, .. })));
    }
}
