//! Embedded example corpus.

use crate::dsl::{parse_graph, parse_map, GraphDoc, MapDoc};
use crate::error::{Error, Result};
use crate::straight_maps::StraightMap;

pub const FILES: &[(&str, &str)] = &[
    ("rose2.g", include_str!("../fixtures/rose2.g")),
    ("phifib.map", include_str!("../fixtures/phifib.map")),
    ("theta314.g", include_str!("../fixtures/theta314.g")),
    ("theta314.map", include_str!("../fixtures/theta314.map")),
    ("fig322.g", include_str!("../fixtures/fig322.g")),
    ("fig322.map", include_str!("../fixtures/fig322.map")),
    ("rose4.g", include_str!("../fixtures/rose4.g")),
    ("exjumpseg.map", include_str!("../fixtures/exjumpseg.map")),
];

/// (map file, graph file) pairs.
pub const PAIRS: &[(&str, &str)] = &[
    ("phifib.map", "rose2.g"),
    ("theta314.map", "theta314.g"),
    ("fig322.map", "fig322.g"),
    ("exjumpseg.map", "rose4.g"),
];

pub fn text(name: &str) -> Result<&'static str> {
    FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Invalid(format!("no fixture named {name}")))
}

pub fn graph_doc(name: &str) -> Result<GraphDoc> {
    parse_graph(text(name)?, &[])
}

pub fn map_doc(map: &str, overrides: &[(String, String)]) -> Result<MapDoc> {
    let (_, g) = PAIRS
        .iter()
        .find(|(m, _)| *m == map)
        .ok_or_else(|| Error::Invalid(format!("no fixture map named {map}")))?;
    let gd = parse_graph(text(g)?, overrides)?;
    parse_map(text(map)?, &gd, overrides)
}

fn load(map: &str) -> StraightMap {
    map_doc(map, &[]).expect("embedded fixture parses").map
}

pub fn phifib() -> StraightMap {
    load("phifib.map")
}

/// Member `t` of the theta family, `t` given as an expression such as `1/4`.
pub fn theta314(t: &str) -> StraightMap {
    map_doc("theta314.map", &[("t".to_string(), t.to_string())]).expect("theta fixture").map
}

pub fn fig322() -> StraightMap {
    load("fig322.map")
}

pub fn exjumpseg() -> StraightMap {
    load("exjumpseg.map")
}
