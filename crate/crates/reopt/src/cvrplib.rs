//! CVRPLIB / TSPLIB instance files.
//!
//! Node ids in the file are arbitrary positive integers. The node listed in
//! `DEPOT_SECTION` becomes node 0 and the remaining ids, in ascending order,
//! become clients `1..=n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use reopt_core::instance::{Client, InstanceError};
use reopt_core::{Instance, Point, Rounding};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: malformed {section} entry {text:?}")]
    Malformed {
        line: usize,
        section: &'static str,
        text: String,
    },
    #[error("missing CAPACITY")]
    MissingCapacity,
    #[error("line {line}: invalid CAPACITY {text:?}")]
    BadCapacity { line: usize, text: String },
    #[error("line {line}: demand {demand} of node {node} exceeds capacity {capacity}")]
    DemandExceedsCapacity {
        line: usize,
        node: u64,
        demand: u32,
        capacity: u32,
    },
    #[error("line {line}: node {node} has zero demand")]
    ZeroDemand { line: usize, node: u64 },
    #[error("line {line}: duplicate node id {node}")]
    DuplicateNode { line: usize, node: u64 },
    #[error("line {line}: unsupported EDGE_WEIGHT_TYPE {kind:?}")]
    UnsupportedWeightType { line: usize, kind: String },
    #[error("missing {0}")]
    MissingSection(&'static str),
    #[error("line {line}: node {node} has no coordinates")]
    MissingCoordinates { line: usize, node: u64 },
    #[error("node {node} has no demand")]
    MissingDemand { node: u64 },
    #[error("line {line}: depot {node} is not a listed node")]
    UnknownDepot { line: usize, node: u64 },
    #[error("line {line}: DIMENSION {declared} but {found} nodes listed")]
    Dimension {
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Coords,
    Demands,
    Depot,
    Other,
}

/// Parses a CVRPLIB document. Rounding follows `EDGE_WEIGHT_TYPE`
/// (`EUC_2D` by default, `EXACT_2D` for unrounded distances).
pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    let mut name = String::new();
    let mut capacity: Option<u32> = None;
    let mut dimension: Option<(usize, usize)> = None;
    let mut rounding = Rounding::RoundedEuclidean;
    let mut coords: BTreeMap<u64, (Point, usize)> = BTreeMap::new();
    let mut demands: BTreeMap<u64, (u32, usize)> = BTreeMap::new();
    let mut depot: Option<(u64, usize)> = None;
    let mut seen = [false; 3];
    let mut section = Section::Header;

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let upper = t.to_ascii_uppercase();
        match upper.as_str() {
            "EOF" => break,
            "NODE_COORD_SECTION" => {
                section = Section::Coords;
                seen[0] = true;
                continue;
            }
            "DEMAND_SECTION" => {
                section = Section::Demands;
                seen[1] = true;
                continue;
            }
            "DEPOT_SECTION" => {
                section = Section::Depot;
                seen[2] = true;
                continue;
            }
            _ if upper.ends_with("_SECTION") => {
                section = Section::Other;
                continue;
            }
            _ => {}
        }
        if let Some((key, value)) = t.split_once(':') {
            let key = key.trim().to_ascii_uppercase();
            let value = value.trim();
            section = Section::Header;
            match key.as_str() {
                "NAME" => name = value.to_string(),
                "CAPACITY" => {
                    capacity = Some(value.parse().map_err(|_| ParseError::BadCapacity {
                        line,
                        text: value.to_string(),
                    })?)
                }
                "DIMENSION" => {
                    let d = value.parse().map_err(|_| ParseError::Malformed {
                        line,
                        section: "DIMENSION",
                        text: t.to_string(),
                    })?;
                    dimension = Some((d, line));
                }
                "EDGE_WEIGHT_TYPE" => {
                    rounding = match value.to_ascii_uppercase().as_str() {
                        "EUC_2D" => Rounding::RoundedEuclidean,
                        "EXACT_2D" => Rounding::ExactEuclidean,
                        _ => {
                            return Err(ParseError::UnsupportedWeightType {
                                line,
                                kind: value.to_string(),
                            })
                        }
                    }
                }
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match section {
            Section::Coords => {
                let bad = || ParseError::Malformed {
                    line,
                    section: "NODE_COORD_SECTION",
                    text: t.to_string(),
                };
                let [id, x, y] = fields[..] else {
                    return Err(bad());
                };
                let id: u64 = id.parse().map_err(|_| bad())?;
                let x: f64 = x.parse().map_err(|_| bad())?;
                let y: f64 = y.parse().map_err(|_| bad())?;
                if coords.insert(id, (Point::new(x, y), line)).is_some() {
                    return Err(ParseError::DuplicateNode { line, node: id });
                }
            }
            Section::Demands => {
                let bad = || ParseError::Malformed {
                    line,
                    section: "DEMAND_SECTION",
                    text: t.to_string(),
                };
                let [id, d] = fields[..] else {
                    return Err(bad());
                };
                let id: u64 = id.parse().map_err(|_| bad())?;
                let d: u32 = d.parse().map_err(|_| bad())?;
                if demands.insert(id, (d, line)).is_some() {
                    return Err(ParseError::DuplicateNode { line, node: id });
                }
            }
            Section::Depot => {
                let bad = || ParseError::Malformed {
                    line,
                    section: "DEPOT_SECTION",
                    text: t.to_string(),
                };
                for f in fields {
                    let v: i64 = f.parse().map_err(|_| bad())?;
                    if v < 0 {
                        section = Section::Other;
                        break;
                    }
                    if depot.is_none() {
                        depot = Some((v as u64, line));
                    }
                }
            }
            Section::Other => {}
            Section::Header => {
                return Err(ParseError::Malformed {
                    line,
                    section: "header",
                    text: t.to_string(),
                })
            }
        }
    }

    let capacity = capacity.ok_or(ParseError::MissingCapacity)?;
    if !seen[0] {
        return Err(ParseError::MissingSection("NODE_COORD_SECTION"));
    }
    if !seen[1] {
        return Err(ParseError::MissingSection("DEMAND_SECTION"));
    }
    let (depot_id, depot_line) = depot.ok_or(ParseError::MissingSection("DEPOT_SECTION"))?;
    if let Some((declared, line)) = dimension {
        if declared != coords.len() {
            return Err(ParseError::Dimension {
                line,
                declared,
                found: coords.len(),
            });
        }
    }
    for (&node, &(_, line)) in &demands {
        if !coords.contains_key(&node) {
            return Err(ParseError::MissingCoordinates { line, node });
        }
    }
    let depot_pos = coords
        .get(&depot_id)
        .ok_or(ParseError::UnknownDepot {
            line: depot_line,
            node: depot_id,
        })?
        .0;

    let mut clients = Vec::with_capacity(coords.len().saturating_sub(1));
    for (&node, &(pos, _)) in coords.iter().filter(|(&id, _)| id != depot_id) {
        let &(demand, line) = demands.get(&node).ok_or(ParseError::MissingDemand { node })?;
        if demand > capacity {
            return Err(ParseError::DemandExceedsCapacity {
                line,
                node,
                demand,
                capacity,
            });
        }
        if demand == 0 {
            return Err(ParseError::ZeroDemand { line, node });
        }
        clients.push(Client { pos, demand });
    }
    Ok(Instance::new(name, capacity, depot_pos, clients, rounding)?)
}

/// Writes `inst` with the depot as node 1 and client `c` as node `c + 1`.
pub fn write_instance(inst: &Instance) -> String {
    let mut s = String::new();
    let kind = match inst.rounding() {
        Rounding::RoundedEuclidean => "EUC_2D",
        Rounding::ExactEuclidean => "EXACT_2D",
    };
    writeln!(s, "NAME : {}", inst.name()).unwrap();
    writeln!(s, "TYPE : CVRP").unwrap();
    writeln!(s, "DIMENSION : {}", inst.node_count()).unwrap();
    writeln!(s, "EDGE_WEIGHT_TYPE : {kind}").unwrap();
    writeln!(s, "CAPACITY : {}", inst.capacity()).unwrap();
    writeln!(s, "NODE_COORD_SECTION").unwrap();
    for v in 0..inst.node_count() {
        let p = inst.point(v);
        writeln!(s, "{} {} {}", v + 1, p.x, p.y).unwrap();
    }
    writeln!(s, "DEMAND_SECTION").unwrap();
    for v in 0..inst.node_count() {
        writeln!(s, "{} {}", v + 1, inst.demand(v)).unwrap();
    }
    writeln!(s, "DEPOT_SECTION\n1\n-1\nEOF").unwrap();
    s
}
