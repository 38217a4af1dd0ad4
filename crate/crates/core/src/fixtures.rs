//! Grid cases bundled with the crate.

use crate::grid::{parse_case, CaseFormat, GridCase};

pub const TOY3_JSON: &str = include_str!("../fixtures/toy3.json");
pub const CASE14_M: &str = include_str!("../fixtures/case14.m");
pub const CASE118_M: &str = include_str!("../fixtures/case118.m");

pub fn toy3() -> GridCase {
    parse_case(TOY3_JSON, CaseFormat::NativeJson).expect("bundled toy case parses")
}

pub fn case14() -> GridCase {
    parse_case(CASE14_M, CaseFormat::MatpowerSubset).expect("bundled 14-bus case parses")
}

pub fn case118() -> GridCase {
    parse_case(CASE118_M, CaseFormat::MatpowerSubset).expect("bundled 118-bus case parses")
}

/// Looks up a bundled case by name (`toy3`, `case14`, `case118`).
pub fn by_name(name: &str) -> Option<GridCase> {
    match name {
        "toy3" => Some(toy3()),
        "case14" => Some(case14()),
        "case118" => Some(case118()),
        _ => None,
    }
}
