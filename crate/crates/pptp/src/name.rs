//! URI-style hierarchical content names, e.g. `/video/movie1`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NameError {
    #[error("name must start with '/'")]
    MissingSlash,
    #[error("name must have at least one non-empty component")]
    Empty,
    #[error("name component must be non-empty")]
    EmptyComponent,
}

/// An ordered, non-empty list of non-empty byte-string components.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name {
    components: Vec<Vec<u8>>,
}

impl Name {
    pub fn new(components: Vec<Vec<u8>>) -> Result<Self, NameError> {
        if components.is_empty() {
            return Err(NameError::Empty);
        }
        if components.iter().any(|c| c.is_empty()) {
            return Err(NameError::EmptyComponent);
        }
        Ok(Name { components })
    }

    /// Parses the `/a/b/c` textual form.
    pub fn parse(text: &str) -> Result<Self, NameError> {
        let rest = text.strip_prefix('/').ok_or(NameError::MissingSlash)?;
        if rest.is_empty() {
            return Err(NameError::Empty);
        }
        let components: Vec<Vec<u8>> = rest.split('/').map(|c| c.as_bytes().to_vec()).collect();
        Name::new(components)
    }

    pub fn components(&self) -> &[Vec<u8>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least one component
    }

    /// `self` is a prefix of `other` iff `self`'s components are an initial
    /// segment of `other`'s.
    pub fn is_prefix_of(&self, other: &Name) -> bool {
        self.components.len() <= other.components.len()
            && self
                .components
                .iter()
                .zip(other.components.iter())
                .all(|(a, b)| a == b)
    }

    /// Extends the name by one component.
    pub fn child(&self, component: impl Into<Vec<u8>>) -> Name {
        let component = component.into();
        assert!(!component.is_empty(), "name component must be non-empty");
        let mut components = self.components.clone();
        components.push(component);
        Name { components }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.components {
            write!(f, "/{}", String::from_utf8_lossy(c))?;
        }
        Ok(())
    }
}
