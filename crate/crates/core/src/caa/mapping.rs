//! CAA string to CA identity mapping.
//!
//! Keys are the domain strings operators put into issue/issuewild values;
//! values are the subject organization names of the CA certificates that
//! honor them. Several strings map to many organizations (resellers, managed
//! PKIs), which is exactly what the consistency checks need to know.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::Deserializer;
use thiserror::Error;

/// Default mapping shipped with the tool: the Common CA Database identifier
/// list trimmed to widely seen strings, plus documented reseller aliases.
const BUILTIN_MAPPING: &str = include_str!("../../data/ca-mapping.json");

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("CA mapping is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CA mapping entry {0:?} has an empty identity set")]
    EmptyIdentitySet(String),
    #[error("reading CA mapping: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaMapping {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl CaMapping {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The mapping embedded in the binary.
    pub fn builtin() -> Self {
        load_ca_mapping(BUILTIN_MAPPING).expect("builtin CA mapping must parse")
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, MappingError> {
        load_ca_mapping(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Organizations known to honor this CAA string.
    pub fn identities_for(&self, caa_domain: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(&caa_domain.to_ascii_lowercase())
    }

    pub fn contains_identity(&self, caa_domain: &str, organization: &str) -> bool {
        self.identities_for(caa_domain)
            .map(|set| set.iter().any(|o| o.eq_ignore_ascii_case(organization)))
            .unwrap_or(false)
    }

    fn insert(&mut self, key: String, identities: Vec<String>) {
        self.entries
            .entry(key.to_ascii_lowercase())
            .or_default()
            .extend(identities);
    }
}

/// Loads a mapping document: a JSON object from CAA string to an array of
/// organization names. Duplicate keys merge by set union.
pub fn load_ca_mapping(document: &str) -> Result<CaMapping, MappingError> {
    struct MappingVisitor;

    impl<'de> Visitor<'de> for MappingVisitor {
        type Value = CaMapping;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map from CAA string to a list of CA organization names")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
            let mut mapping = CaMapping::empty();
            while let Some((key, identities)) = access.next_entry::<String, Vec<String>>()? {
                mapping.insert(key, identities);
            }
            Ok(mapping)
        }
    }

    let mut deserializer = serde_json::Deserializer::from_str(document);
    let mapping = deserializer.deserialize_map(MappingVisitor)?;
    deserializer.end()?;
    for (key, set) in &mapping.entries {
        if set.is_empty() {
            return Err(MappingError::EmptyIdentitySet(key.clone()));
        }
    }
    Ok(mapping)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_case_insensitive() {
        let mapping = load_ca_mapping(r#"{"Web.Com": ["Network Solutions L.L.C."]}"#).unwrap();
        assert!(mapping.contains_identity("web.com", "Network Solutions L.L.C."));
        assert!(mapping.contains_identity("WEB.COM", "network solutions l.l.c."));
        assert!(!mapping.contains_identity("web.com", "Let's Encrypt"));
    }

    #[test]
    fn duplicate_keys_merge_by_union() {
        let mapping =
            load_ca_mapping(r#"{"sectigo.com": ["Sectigo Limited"], "sectigo.com": ["ZeroSSL"]}"#)
                .unwrap();
        let identities = mapping.identities_for("sectigo.com").unwrap();
        assert_eq!(identities.len(), 2);
    }

    #[test]
    fn empty_document_misses_everything() {
        let mapping = load_ca_mapping("{}").unwrap();
        assert!(mapping.is_empty());
        assert!(mapping.identities_for("letsencrypt.org").is_none());
    }

    #[test]
    fn invalid_documents_are_configuration_errors() {
        assert!(load_ca_mapping("[]").is_err());
        assert!(load_ca_mapping(r#"{"x.com": "not-a-list"}"#).is_err());
        assert!(load_ca_mapping(r#"{"x.com": []}"#).is_err());
        assert!(load_ca_mapping("{").is_err());
    }

    #[test]
    fn builtin_mapping_covers_the_big_names() {
        let mapping = CaMapping::builtin();
        assert!(mapping.contains_identity("letsencrypt.org", "Let's Encrypt"));
        assert!(mapping.contains_identity("web.com", "Network Solutions L.L.C."));
        assert!(mapping.identities_for("sectigo.com").unwrap().len() > 1);
    }
}
