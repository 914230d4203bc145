//! Shipped example files, embedded at compile time.

/// Name and source of every shipped fixture.
pub const FIXTURES: &[(&str, &str)] = &[
    ("fine_space", include_str!("../fixtures/fine_space.pbl")),
    (
        "trivial_dual_space",
        include_str!("../fixtures/trivial_dual_space.pbl"),
    ),
    ("example_5_1", include_str!("../fixtures/example_5_1.pbl")),
    (
        "example_5_2_nometric",
        include_str!("../fixtures/example_5_2_nometric.pbl"),
    ),
    (
        "circle_two_charts",
        include_str!("../fixtures/circle_two_charts.pbl"),
    ),
    ("annulus", include_str!("../fixtures/annulus.pbl")),
    ("moebius", include_str!("../fixtures/moebius.pbl")),
    (
        "tensor_commute",
        include_str!("../fixtures/tensor_commute.pbl"),
    ),
    (
        "dual_necessary_fail",
        include_str!("../fixtures/dual_necessary_fail.pbl"),
    ),
];

pub fn names() -> Vec<&'static str> {
    FIXTURES.iter().map(|(n, _)| *n).collect()
}

pub fn fixture(name: &str) -> Option<&'static str> {
    FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// First comment line of a fixture, as its one-line description.
pub fn description(name: &str) -> Option<String> {
    let text = fixture(name)?;
    text.lines()
        .find(|l| l.trim_start().starts_with('#'))
        .map(|l| l.trim_start_matches(['#', ' ']).to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_parses() {
        for (name, text) in FIXTURES {
            crate::dsl::parse(text).unwrap_or_else(|e| panic!("fixture {name}: {e}"));
        }
    }

    #[test]
    fn descriptions_exist() {
        for name in names() {
            assert!(description(name).is_some(), "{name} lacks a comment line");
        }
    }
}
