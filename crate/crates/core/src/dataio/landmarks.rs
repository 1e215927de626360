use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{LmptError, Result};
use crate::geometry::Point3;
use crate::scalar::Scalar;

/// Named landmark positions (mm), iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandmarkSet<S> {
    entries: BTreeMap<String, Point3<S>>,
}

impl<S: Scalar> LandmarkSet<S> {
    pub fn new() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, position: Point3<S>) -> Result<()> {
        let name = name.into();
        if position.iter().any(|c| !c.is_finite()) {
            return Err(LmptError::InvalidInput(format!("landmark {name} has a non-finite coordinate")));
        }
        self.entries.insert(name, position);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Point3<S>> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Point3<S>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Applies `f` to every position, keeping names.
    pub fn map_positions(&self, f: impl Fn(&Point3<S>) -> Point3<S>) -> Self {
        Self { entries: self.entries.iter().map(|(k, v)| (k.clone(), f(v))).collect() }
    }

    /// Renames every landmark through `rename`, keeping positions.
    pub fn rename(&self, rename: impl Fn(&str) -> String) -> Self {
        Self { entries: self.entries.iter().map(|(k, v)| (rename(k), *v)).collect() }
    }

    pub fn cast<T: Scalar>(&self) -> LandmarkSet<T> {
        LandmarkSet {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| (k.clone(), p.map(|c| T::lit(c.to_f64_lossless()))))
                .collect(),
        }
    }

    pub fn to_json(&self) -> Value {
        let map: Map<String, Value> = self
            .entries
            .iter()
            .map(|(k, p)| (k.clone(), Value::from(p.iter().map(|c| c.to_f64_lossless()).collect::<Vec<f64>>())))
            .collect();
        Value::Object(map)
    }

    /// Parses `{"NAME": [x, y, z], ...}`, or an object carrying such a map
    /// under a `"landmarks"` key.
    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value.as_object().ok_or_else(|| LmptError::Format("landmarks must be a JSON object".into()))?;
        let obj = match obj.get("landmarks") {
            Some(Value::Object(inner)) => inner,
            _ => obj,
        };
        let mut set = Self::new();
        for (name, pos) in obj {
            let arr = pos
                .as_array()
                .filter(|a| a.len() == 3)
                .ok_or_else(|| LmptError::Format(format!("landmark {name}: expected [x, y, z]")))?;
            let mut p = [S::zero(); 3];
            for (k, c) in arr.iter().enumerate() {
                let v = c.as_f64().ok_or_else(|| LmptError::Format(format!("landmark {name}: non-numeric coordinate")))?;
                p[k] = S::lit(v);
            }
            set.insert(name.clone(), p).map_err(|e| LmptError::Format(e.to_string()))?;
        }
        Ok(set)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| LmptError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&value)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())? + "\n")?;
        Ok(())
    }
}

impl<S: Scalar> FromIterator<(String, Point3<S>)> for LandmarkSet<S> {
    fn from_iter<I: IntoIterator<Item = (String, Point3<S>)>>(iter: I) -> Self {
        Self { entries: iter.into_iter().collect() }
    }
}
