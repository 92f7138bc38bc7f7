use super::{parse_scenario, Scenario};
use crate::error::Result;

/// Built-in scenarios run by `verify-all`, as `(name, document)`.
pub const BUILTIN: &[(&str, &str)] = &[
    ("flat-free", include_str!("../../scenarios/flat-free.toml")),
    ("flat-wall", include_str!("../../scenarios/flat-wall.toml")),
    ("flat-strip-2", include_str!("../../scenarios/flat-strip-2.toml")),
    ("flat-strip-4", include_str!("../../scenarios/flat-strip-4.toml")),
    ("flat-strip-solve", include_str!("../../scenarios/flat-strip-solve.toml")),
    ("sphere-oracle", include_str!("../../scenarios/sphere-oracle.toml")),
    ("sphere-antipode", include_str!("../../scenarios/sphere-antipode.toml")),
    ("harmonic", include_str!("../../scenarios/harmonic.toml")),
    ("mirror-disk-30", include_str!("../../scenarios/mirror-disk-30.toml")),
    ("harmonic-disk", include_str!("../../scenarios/harmonic-disk.toml")),
    ("transmit-kink", include_str!("../../scenarios/transmit-kink.toml")),
    ("conformal-bounce", include_str!("../../scenarios/conformal-bounce.toml")),
    ("disk-diameter", include_str!("../../scenarios/disk-diameter.toml")),
    ("conformal-diameter", include_str!("../../scenarios/conformal-diameter.toml")),
    ("conformal-sweep", include_str!("../../scenarios/conformal-sweep.toml")),
];

pub fn builtin_suite() -> Result<Vec<Scenario>> {
    BUILTIN.iter().map(|(_, text)| parse_scenario(text)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_files_load_and_names_match() {
        let suite = builtin_suite().unwrap();
        for ((name, _), s) in BUILTIN.iter().zip(&suite) {
            assert_eq!(*name, s.name);
        }
    }
}
