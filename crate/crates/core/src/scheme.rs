//! Ordered quality categories and their numeric interval bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a [`CategoryScheme`]. Ordering follows the scheme order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Category(pub usize);

/// Ordered categories with contiguous numeric bounds on [0, 1].
///
/// Category `c` covers the half-open interval `(lower[c], upper[c]]`, and
/// `upper[c] == lower[c + 1]` so the intervals tile the quality range with
/// no gaps or overlaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScheme {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl CategoryScheme {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidScheme("no categories".into()));
        }
        if names.len() != lower.len() || names.len() != upper.len() {
            return Err(Error::InvalidScheme(
                "names and bounds must have equal length".into(),
            ));
        }
        for c in 0..names.len() {
            if !(lower[c] < upper[c]) {
                return Err(Error::InvalidScheme(format!(
                    "bounds of '{}' are not increasing: ({}, {}]",
                    names[c], lower[c], upper[c]
                )));
            }
            if !(0.0..=1.0).contains(&lower[c]) || !(0.0..=1.0).contains(&upper[c]) {
                return Err(Error::InvalidScheme(format!(
                    "bounds of '{}' fall outside [0, 1]",
                    names[c]
                )));
            }
            if c + 1 < names.len() && upper[c] != lower[c + 1] {
                return Err(Error::InvalidScheme(format!(
                    "categories '{}' and '{}' are not contiguous",
                    names[c],
                    names[c + 1]
                )));
            }
        }
        Ok(CategoryScheme {
            names,
            lower,
            upper,
        })
    }

    /// The default four-level quality scheme: Poor, Fair, Good, Excellent
    /// with bounds {0, 0.25, 0.5, 0.75, 1}.
    pub fn quality_default() -> Self {
        CategoryScheme::new(
            ["Poor", "Fair", "Good", "Excellent"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vec![0.0, 0.25, 0.5, 0.75],
            vec![0.25, 0.5, 0.75, 1.0],
        )
        .expect("default scheme is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn categories(&self) -> impl Iterator<Item = Category> {
        (0..self.names.len()).map(Category)
    }

    pub fn name(&self, c: Category) -> &str {
        &self.names[c.0]
    }

    pub fn lower(&self, c: Category) -> f64 {
        self.lower[c.0]
    }

    pub fn upper(&self, c: Category) -> f64 {
        self.upper[c.0]
    }

    pub fn bounds(&self, c: Category) -> (f64, f64) {
        (self.lower[c.0], self.upper[c.0])
    }

    /// Interval midpoint, the regression stand-in value for a category.
    pub fn center(&self, c: Category) -> f64 {
        0.5 * (self.lower[c.0] + self.upper[c.0])
    }

    /// Category whose `(lower, upper]` interval contains `value`. Values at
    /// or below the global lower bound map to the first category, values
    /// above the global upper bound to the last.
    pub fn category_of(&self, value: f64) -> Category {
        for c in 0..self.names.len() {
            if value <= self.upper[c] {
                return Category(c);
            }
        }
        Category(self.names.len() - 1)
    }

    pub fn parse(&self, name: &str) -> Result<Category> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(Category)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown category '{name}'")))
    }

    pub fn contains(&self, c: Category) -> bool {
        c.0 < self.names.len()
    }
}
