//! Name-keyed registries for interchangeable strategies (potentials, state
//! families, propagators, verification cases, pipelines).

use std::collections::BTreeMap;

use crate::error::{BohmError, Result};

#[derive(Clone)]
struct Entry<T> {
    description: String,
    item: T,
}

/// Ordered map from strategy name to strategy. Iteration order is the name
/// order, so listings are stable.
#[derive(Clone)]
pub struct Registry<T: Clone> {
    kind: &'static str,
    entries: BTreeMap<String, Entry<T>>,
}

impl<T: Clone> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &str, description: &str, item: T) -> &mut Self {
        self.entries.insert(
            name.to_string(),
            Entry {
                description: description.to_string(),
                item,
            },
        );
        self
    }

    pub fn get(&self, name: &str) -> Result<T> {
        self.entries
            .get(name)
            .map(|e| e.item.clone())
            .ok_or_else(|| {
                BohmError::Config(format!(
                    "unknown {} `{name}` (known: {})",
                    self.kind,
                    self.names().join(", ")
                ))
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn describe(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(|e| e.description.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_names_list_the_alternatives() {
        let mut r: Registry<fn() -> u8> = Registry::new("widget");
        r.register("b", "second", || 2).register("a", "first", || 1);
        assert_eq!(r.names(), vec!["a", "b"]);
        assert_eq!((r.get("b").unwrap())(), 2);
        let err = r.get("c").err().unwrap().to_string();
        assert!(err.contains("widget") && err.contains("a, b"), "{err}");
    }
}
