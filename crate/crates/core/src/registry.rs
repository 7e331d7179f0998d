//! Name-keyed registry used for tasks, planners and root samplers.

use std::collections::BTreeMap;

pub struct Registry<T> {
    entries: BTreeMap<&'static str, T>,
}

impl<T> Default for Registry<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Registry<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Registers `entry` under `name`, replacing any previous one.
    pub fn register(&mut self, name: &'static str, entry: T) {
        self.entries.insert(name, entry);
    }

    pub fn get(&self, name: &str) -> Option<&T> {
        self.entries.get(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_name() {
        let mut r = Registry::new();
        r.register("a", 1);
        r.register("b", 2);
        r.register("a", 3);
        assert_eq!(r.get("a"), Some(&3));
        assert_eq!(r.get("c"), None);
        assert_eq!(r.names(), vec!["a", "b"]);
    }
}
