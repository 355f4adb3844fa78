//! Built-in phantom specifications.

use crate::error::{Error, Result};
use crate::geometry::PhantomSpec;

const BUILTIN: [(&str, &str); 6] = [
    ("al_disc", include_str!("../data/phantoms/al_disc.json")),
    ("al_steel", include_str!("../data/phantoms/al_steel.json")),
    ("cement_steel_a", include_str!("../data/phantoms/cement_steel_a.json")),
    ("cement_steel_b", include_str!("../data/phantoms/cement_steel_b.json")),
    ("concrete_analog", include_str!("../data/phantoms/concrete_analog.json")),
    ("three_al", include_str!("../data/phantoms/three_al.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

pub fn builtin_phantom(name: &str) -> Result<PhantomSpec> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::invalid(format!("no built-in phantom `{name}`")))?;
    PhantomSpec::from_json(text)
}

pub fn builtin_phantoms() -> Vec<PhantomSpec> {
    builtin_names().map(|n| builtin_phantom(n).expect("built-in phantoms parse")).collect()
}
