//! Catalog of a dataset laid out as one subdirectory per variety.
//!
//! The variety comes from the first path component under the root. A
//! completeness label is read from filename tokens (split on anything that is
//! not alphanumeric), e.g. `gd_tiny_0042.png`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ricegrade_core::model::{CompletenessClass, VarietyCode};
use serde::{Deserialize, Serialize};

use crate::config::CompletenessTokens;

pub const IMAGE_EXTENSIONS: [&str; 6] = ["png", "pgm", "jpg", "jpeg", "bmp", "tif"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    /// Relative to the catalog root, `/`-separated.
    pub path: String,
    /// Directory the variety label was read from; empty for files at the root.
    pub label_dir: String,
    pub variety: Option<VarietyCode>,
    pub completeness: Option<CompletenessClass>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
    pub warnings: Vec<String>,
}

impl Catalog {
    pub fn labels(&self) -> std::collections::BTreeSet<VarietyCode> {
        self.entries.iter().filter_map(|e| e.variety).collect()
    }
}

pub fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Completeness label from a file name, if exactly one class matches.
pub fn completeness_from_name(name: &str, tokens: &CompletenessTokens) -> Option<CompletenessClass> {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s).to_ascii_lowercase();
    let words: Vec<&str> = stem.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).collect();
    let hit = |list: &[String]| list.iter().any(|t| words.iter().any(|w| w.eq_ignore_ascii_case(t)));
    let found: Vec<CompletenessClass> = [
        (CompletenessClass::Whole, hit(&tokens.whole)),
        (CompletenessClass::SizeableBroken, hit(&tokens.sizeable_broken)),
        (CompletenessClass::TinyBroken, hit(&tokens.tiny_broken)),
    ]
    .into_iter()
    .filter_map(|(c, h)| h.then_some(c))
    .collect();
    match found.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else if is_image(&p) {
            out.push(p);
        }
    }
    Ok(())
}

pub fn ingest_dataset(root: &Path, tokens: &CompletenessTokens) -> Result<Catalog> {
    if !root.is_dir() {
        bail!("dataset root {} does not exist or is not a directory", root.display());
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let mut catalog = Catalog::default();
    let mut unknown_dirs = std::collections::BTreeSet::new();
    for f in files {
        let rel = f.strip_prefix(root).expect("walked under root");
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        let label_dir = if parts.len() > 1 { parts[0].clone() } else { String::new() };
        let variety = label_dir.parse::<VarietyCode>().ok();
        if variety.is_none() {
            unknown_dirs.insert(label_dir.clone());
        }
        let name = parts.last().cloned().unwrap_or_default();
        catalog.entries.push(CatalogEntry {
            path: parts.join("/"),
            label_dir,
            variety,
            completeness: completeness_from_name(&name, tokens),
        });
    }
    if catalog.entries.is_empty() {
        catalog.warnings.push(format!("no images found under {}", root.display()));
    }
    for d in unknown_dirs {
        let shown = if d.is_empty() { "<root>".to_string() } else { d };
        catalog.warnings.push(format!("entries under {shown} have no known variety label"));
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens() {
        let t = CompletenessTokens::default();
        assert_eq!(completeness_from_name("gd_tiny_01.png", &t), Some(CompletenessClass::TinyBroken));
        assert_eq!(completeness_from_name("Whole-3.PNG", &t), Some(CompletenessClass::Whole));
        assert_eq!(completeness_from_name("img_0001.png", &t), None);
        assert_eq!(completeness_from_name("whole_tiny.png", &t), None);
        // substrings do not count
        assert_eq!(completeness_from_name("smaller.png", &t), None);
    }
}
