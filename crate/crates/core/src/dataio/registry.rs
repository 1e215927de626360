use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LmptError, Result};

/// Landmark classes of one species, with its conditioning id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesSchema {
    pub classes: Vec<String>,
    pub condition: usize,
}

/// Union class list (index = logit channel), per-species subsets and
/// mirror pairs used by flip augmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRegistry {
    classes: Vec<String>,
    species: BTreeMap<String, SpeciesSchema>,
    mirror_pairs: Vec<(String, String)>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Builds a registry from `(species, classes)` declarations. The union keeps
/// first-appearance order and condition ids follow declaration order.
pub fn build_registry(species_schemas: &[(String, Vec<String>)], mirror_pairs: &[(String, String)]) -> Result<LabelRegistry> {
    if species_schemas.is_empty() {
        return Err(LmptError::Schema("registry needs at least one species".into()));
    }
    let mut classes: Vec<String> = Vec::new();
    let mut species = BTreeMap::new();
    for (condition, (name, schema)) in species_schemas.iter().enumerate() {
        for c in schema {
            if !classes.contains(c) {
                classes.push(c.clone());
            }
        }
        let prev = species.insert(name.clone(), SpeciesSchema { classes: schema.clone(), condition });
        if prev.is_some() {
            return Err(LmptError::Schema(format!("species {name} declared twice")));
        }
    }
    LabelRegistry::from_parts(classes, species, mirror_pairs.to_vec())
}

impl LabelRegistry {
    pub fn from_parts(
        classes: Vec<String>,
        species: BTreeMap<String, SpeciesSchema>,
        mirror_pairs: Vec<(String, String)>,
    ) -> Result<Self> {
        let mut reg = Self { classes, species, mirror_pairs, index: HashMap::new() };
        reg.validate()?;
        Ok(reg)
    }

    fn validate(&mut self) -> Result<()> {
        self.index.clear();
        for (i, c) in self.classes.iter().enumerate() {
            if self.index.insert(c.clone(), i).is_some() {
                return Err(LmptError::Schema(format!("class {c} listed twice")));
            }
        }
        if self.classes.is_empty() {
            return Err(LmptError::Schema("registry has no classes".into()));
        }
        if self.species.is_empty() {
            return Err(LmptError::Schema("registry has no species".into()));
        }
        let mut conditions: Vec<usize> = self.species.values().map(|s| s.condition).collect();
        conditions.sort_unstable();
        if conditions != (0..conditions.len()).collect::<Vec<_>>() {
            return Err(LmptError::Schema(format!("condition ids must be dense from 0, got {conditions:?}")));
        }
        for (name, s) in &self.species {
            if s.classes.is_empty() {
                return Err(LmptError::Schema(format!("species {name} has an empty schema")));
            }
            if let Some(c) = s.classes.iter().find(|c| !self.index.contains_key(*c)) {
                return Err(LmptError::Schema(format!("species {name}: class {c} is not registered")));
            }
        }
        let mut partner: HashMap<&str, &str> = HashMap::new();
        for (a, b) in &self.mirror_pairs {
            for n in [a, b] {
                if !self.index.contains_key(n) {
                    return Err(LmptError::Schema(format!("mirror pair ({a}, {b}): unknown class {n}")));
                }
            }
            if a == b {
                return Err(LmptError::Schema(format!("mirror pair ({a}, {b}) pairs a class with itself")));
            }
            for (x, y) in [(a.as_str(), b.as_str()), (b.as_str(), a.as_str())] {
                match partner.get(x) {
                    Some(&existing) if existing != y => {
                        return Err(LmptError::Schema(format!(
                            "asymmetric mirror pairs: {x} maps to both {existing} and {y}"
                        )))
                    }
                    _ => {
                        partner.insert(x, y);
                    }
                }
            }
        }
        for (name, s) in &self.species {
            for c in &s.classes {
                if let Some(&m) = partner.get(c.as_str()) {
                    if !s.classes.iter().any(|x| x == m) {
                        return Err(LmptError::Schema(format!(
                            "species {name}: mirror partner {m} of {c} is not in its schema"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_conditions(&self) -> usize {
        self.species.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn species_names(&self) -> impl Iterator<Item = &str> {
        self.species.keys().map(String::as_str)
    }

    pub fn species(&self, name: &str) -> Result<&SpeciesSchema> {
        self.species.get(name).ok_or_else(|| LmptError::Schema(format!("unknown species {name}")))
    }

    pub fn condition_of(&self, species: &str) -> Result<usize> {
        self.species(species).map(|s| s.condition)
    }

    /// Channel indices of a species' classes, ascending.
    pub fn schema_indices(&self, species: &str) -> Result<Vec<usize>> {
        let mut idx: Vec<usize> = self.species(species)?.classes.iter().map(|c| self.index[c]).collect();
        idx.sort_unstable();
        Ok(idx)
    }

    pub fn mirror_pairs(&self) -> &[(String, String)] {
        &self.mirror_pairs
    }

    pub fn has_mirror_metadata(&self) -> bool {
        !self.mirror_pairs.is_empty()
    }

    /// Mirror partner of a class; midline classes map to themselves.
    pub fn mirror_of<'a>(&'a self, name: &'a str) -> &'a str {
        for (a, b) in &self.mirror_pairs {
            if a == name {
                return b;
            }
            if b == name {
                return a;
            }
        }
        name
    }

    /// Channel permutation induced by the mirror pairs.
    pub fn mirror_permutation(&self) -> Vec<usize> {
        self.classes.iter().map(|c| self.index[self.mirror_of(c)]).collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut reg: Self = serde_json::from_str(text).map_err(|e| LmptError::Format(format!("registry: {e}")))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }
}
