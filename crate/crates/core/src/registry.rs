//! Name-keyed registries for interchangeable pipeline strategies.
//!
//! Scalers and feature selectors are trait objects; the pipeline looks them up
//! by the name carried in its configuration. The built-in registries are
//! pre-populated, and callers may register further strategies under new
//! names.

use std::collections::BTreeMap;
use std::fmt;

use crate::preprocess::{MinMaxScaling, NoScaling, ScalingStrategy, StandardScaling};
use crate::select::{BoostRfa, BoostRfe, FeatureSelector, LrCoefficientRanking};

/// Something that can be stored in a [`Registry`].
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized + Named> {
    entries: BTreeMap<String, Box<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} {name:?}; known: {known}")]
pub struct UnknownStrategy {
    pub kind: &'static str,
    pub name: String,
    pub known: String,
}

impl<T: ?Sized + Named> Default for Registry<T> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a strategy under its own name, replacing any previous entry.
    pub fn register(&mut self, strategy: Box<T>) -> &mut Self {
        self.entries.insert(strategy.name().to_string(), strategy);
        self
    }

    pub fn get(&self, name: &str) -> Option<&T> {
        self.entries.get(name).map(|b| b.as_ref())
    }

    pub fn resolve(&self, kind: &'static str, name: &str) -> Result<&T, UnknownStrategy> {
        self.get(name).ok_or_else(|| UnknownStrategy {
            kind,
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    /// Registered names, sorted.
    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl<T: ?Sized + Named> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("names", &self.names()).finish()
    }
}

pub type ScalerRegistry = Registry<dyn ScalingStrategy>;
pub type SelectorRegistry = Registry<dyn FeatureSelector>;

/// `minmax`, `standard`, `none`.
pub fn builtin_scalers() -> ScalerRegistry {
    let mut r = ScalerRegistry::new();
    r.register(Box::new(MinMaxScaling))
        .register(Box::new(StandardScaling))
        .register(Box::new(NoScaling));
    r
}

/// `lr_coef`, `boost_rfe`, `boost_rfa`.
pub fn builtin_selectors() -> SelectorRegistry {
    let mut r = SelectorRegistry::new();
    r.register(Box::new(LrCoefficientRanking))
        .register(Box::new(BoostRfe))
        .register(Box::new(BoostRfa));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_registered() {
        assert_eq!(builtin_scalers().names(), vec!["minmax", "none", "standard"]);
        assert_eq!(
            builtin_selectors().names(),
            vec!["boost_rfa", "boost_rfe", "lr_coef"]
        );
    }

    #[test]
    fn unknown_name_lists_alternatives() {
        let Err(err) = builtin_scalers().resolve("scaler", "robust") else {
            panic!("robust is not registered");
        };
        assert_eq!(err.name, "robust");
        assert!(err.known.contains("minmax"));
    }
}
