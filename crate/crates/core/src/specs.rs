//! Example spacetimes shipped with the toolkit.

use crate::geometry::SpacetimeSpec;
use crate::parser::parse_spec;

pub const BUNDLED: [(&str, &str); 4] = [
    ("minkowski", include_str!("../specs/minkowski.spacetime")),
    ("example-ex", include_str!("../specs/example-ex.spacetime")),
    ("sin-lapse", include_str!("../specs/sin-lapse.spacetime")),
    ("fig1", include_str!("../specs/fig1.spacetime")),
];

pub fn source(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".spacetime").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parsed bundled spec. Panics only if a shipped file is malformed.
pub fn bundled(name: &str) -> Option<SpacetimeSpec> {
    source(name).map(|s| parse_spec(s).unwrap_or_else(|e| panic!("bundled spec {name}: {e}")))
}
