//! Per-class, per-band-group textual prompts.
//!
//! Every prompt instantiates the template
//! `a photo of a {description} with {group} bands`, where `{description}` is
//! an extended class description and `{group}` is the band group phrase.

use crate::bands::BandGroupSpec;
use crate::data::CLASS_COUNT;
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// 0-based label names for the 17 classes (10 built types, 7 land cover).
pub const CLASS_NAMES: [&str; CLASS_COUNT] = [
    "compact high-rise",
    "compact midrise",
    "compact low-rise",
    "open high-rise",
    "open midrise",
    "open low-rise",
    "lightweight low-rise",
    "large low-rise",
    "sparsely built",
    "heavy industry",
    "dense trees",
    "scattered trees",
    "bush, scrub",
    "low plants",
    "bare rock or paved",
    "bare soil or sand",
    "water",
];

/// The three extended descriptions that ship with the method (classes 1, 9
/// and G in published numbering; 0, 8 and 16 here). These always win over
/// file-supplied text.
pub const FIXED_DESCRIPTIONS: [(u8, &str); 3] = [
    (0, "dense clusters of vertical edifices with limited spatial gaps, representing urban centers"),
    (8, "areas with minimal building density, characterized by isolated structures and significant open spaces"),
    (16, "bodies of water such as rivers, lakes, or seas, appearing as uniform blue areas on images"),
];

const BUNDLED_DESCRIPTIONS: &str = include_str!("assets/class_descriptions.tsv");

/// A class and the description text used in its prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDescription {
    pub class_id: u8,
    pub class_name: String,
    pub extended_description: String,
}

impl ClassDescription {
    pub fn new(class_id: u8, extended_description: &str) -> Result<ClassDescription> {
        if usize::from(class_id) >= CLASS_COUNT {
            return Err(Error::argument(format!("class_id {class_id} outside 0..=16")));
        }
        if extended_description.is_empty() {
            return Err(Error::argument(format!(
                "class {class_id}: extended description must be non-empty"
            )));
        }
        Ok(ClassDescription {
            class_id,
            class_name: CLASS_NAMES[usize::from(class_id)].to_string(),
            extended_description: extended_description.to_string(),
        })
    }
}

/// Instantiates the prompt template for one class/group pair. The description
/// is used verbatim; only the group phrase is substituted.
pub fn build_prompt(desc: &ClassDescription, spec: &BandGroupSpec) -> Result<String> {
    if desc.extended_description.is_empty() {
        return Err(Error::argument("empty class description".to_string()));
    }
    Ok(format!(
        "a photo of a {} with {} bands",
        desc.extended_description, spec.prompt_name
    ))
}

/// All prompts for a (class, group) grid; 17 x 7 = 119 entries when complete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptCatalog {
    entries: BTreeMap<(u8, String), String>,
}

impl PromptCatalog {
    pub fn get(&self, class_id: u8, group_name: &str) -> Option<&str> {
        self.entries.get(&(class_id, group_name.to_string())).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u8, String), &String)> {
        self.entries.iter()
    }

    /// One line per entry: `paper_id<TAB>group<TAB>prompt`, for inspection.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for ((class_id, group), prompt) in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                crate::data::paper_class_id(*class_id),
                group,
                prompt
            ));
        }
        out
    }

    /// sha256 of the dump, hex-encoded; pins the catalog in run manifests.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.dump().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Result of catalog construction: the catalog plus the classes that fell
/// back to their bare class name because no description was supplied.
#[derive(Debug, Clone)]
pub struct CatalogBuild {
    pub catalog: PromptCatalog,
    pub fallback_classes: Vec<u8>,
}

/// Parses a description file: `class_id<TAB>extended description` per line.
/// Blank lines and `#` comments are skipped.
pub fn parse_descriptions(text: &str) -> Result<BTreeMap<u8, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (id_str, desc) = line.split_once('\t').ok_or(Error::Parse {
            line: i + 1,
            msg: "expected class_id<TAB>description".to_string(),
        })?;
        let class_id: u8 = id_str.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("bad class id {id_str:?}"),
        })?;
        if usize::from(class_id) >= CLASS_COUNT {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("class id {class_id} outside 0..=16"),
            });
        }
        if desc.is_empty() {
            return Err(Error::Parse { line: i + 1, msg: "empty description".to_string() });
        }
        map.insert(class_id, desc.to_string());
    }
    Ok(map)
}

/// Builds the catalog from the fixed descriptions plus `supplied` ones,
/// falling back to the bare class name for classes with neither.
pub fn build_catalog(specs: &[BandGroupSpec], supplied: &BTreeMap<u8, String>) -> Result<CatalogBuild> {
    let fixed: BTreeMap<u8, &str> = FIXED_DESCRIPTIONS.iter().copied().collect();
    let mut entries = BTreeMap::new();
    let mut fallback_classes = Vec::new();
    for class_id in 0..CLASS_COUNT as u8 {
        let description = if let Some(text) = fixed.get(&class_id) {
            text.to_string()
        } else if let Some(text) = supplied.get(&class_id) {
            text.clone()
        } else {
            fallback_classes.push(class_id);
            CLASS_NAMES[usize::from(class_id)].to_string()
        };
        let desc = ClassDescription::new(class_id, &description)?;
        for spec in specs {
            entries.insert((class_id, spec.name.clone()), build_prompt(&desc, spec)?);
        }
    }
    Ok(CatalogBuild { catalog: PromptCatalog { entries }, fallback_classes })
}

/// The catalog built from the bundled description file.
pub fn default_catalog(specs: &[BandGroupSpec]) -> CatalogBuild {
    let supplied = parse_descriptions(BUNDLED_DESCRIPTIONS)
        .expect("bundled description file is well-formed");
    build_catalog(specs, &supplied).expect("bundled descriptions are valid")
}

/// Catalog from a user description file; classes missing there (other than
/// the three fixed ones) fall back to their bare class name.
pub fn catalog_from_file(specs: &[BandGroupSpec], path: &Path) -> Result<CatalogBuild> {
    let text = std::fs::read_to_string(path)?;
    let supplied = parse_descriptions(&text)?;
    build_catalog(specs, &supplied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::default_band_groups;

    #[test]
    fn water_rgb_prompt_is_byte_exact() {
        let specs = default_band_groups();
        let water = ClassDescription::new(
            16,
            "bodies of water such as rivers, lakes, or seas, appearing as uniform blue areas on images",
        )
        .unwrap();
        let rgb = &specs[3];
        let prompt = build_prompt(&water, rgb).unwrap();
        assert_eq!(
            prompt,
            "a photo of a bodies of water such as rivers, lakes, or seas, appearing as uniform blue areas on images with red green blue bands"
        );
    }

    #[test]
    fn class_name_fallback_uses_the_bare_name() {
        let specs = default_band_groups();
        let desc = ClassDescription::new(0, "compact high-rise").unwrap();
        let prompt = build_prompt(&desc, &specs[0]).unwrap();
        assert_eq!(prompt, "a photo of a compact high-rise with vh bands");
    }

    #[test]
    fn build_prompt_is_pure() {
        let specs = default_band_groups();
        let desc = ClassDescription::new(4, "mid-height buildings").unwrap();
        let a = build_prompt(&desc, &specs[6]).unwrap();
        let b = build_prompt(&desc, &specs[6]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_description_is_rejected() {
        assert!(ClassDescription::new(2, "").is_err());
    }

    #[test]
    fn default_catalog_is_complete_and_uses_fixed_text() {
        let specs = default_band_groups();
        let build = default_catalog(&specs);
        assert_eq!(build.catalog.len(), 119);
        assert!(build.fallback_classes.is_empty());
        let c1 = build.catalog.get(0, "VH").unwrap();
        assert!(c1.contains(
            "dense clusters of vertical edifices with limited spatial gaps, representing urban centers"
        ));
        let water = build.catalog.get(16, "RGB").unwrap();
        assert!(water.contains("bodies of water such as rivers, lakes, or seas"));
        assert_eq!(
            water,
            "a photo of a bodies of water such as rivers, lakes, or seas, appearing as uniform blue areas on images with red green blue bands"
        );
    }

    #[test]
    fn every_entry_matches_the_template_pattern() {
        let specs = default_band_groups();
        let build = default_catalog(&specs);
        let group_phrases: Vec<&str> = specs.iter().map(|s| s.prompt_name.as_str()).collect();
        for ((_, group), prompt) in build.catalog.iter() {
            assert!(prompt.starts_with("a photo of a "), "{prompt}");
            assert!(prompt.ends_with(" bands"), "{prompt}");
            let spec = specs.iter().find(|s| &s.name == group).unwrap();
            assert!(prompt.ends_with(&format!(" with {} bands", spec.prompt_name)));
            assert!(group_phrases.contains(&spec.prompt_name.as_str()));
        }
    }

    #[test]
    fn entries_are_injective_over_class_and_group() {
        let specs = default_band_groups();
        let build = default_catalog(&specs);
        let mut seen = std::collections::BTreeSet::new();
        for (_, prompt) in build.catalog.iter() {
            assert!(seen.insert(prompt.clone()), "duplicate prompt {prompt}");
        }
        assert_eq!(seen.len(), 119);
    }

    #[test]
    fn missing_rows_fall_back_with_warning_list() {
        let specs = default_band_groups();
        // Supply descriptions for two classes only.
        let mut supplied = BTreeMap::new();
        supplied.insert(1, "dense mid-height blocks".to_string());
        supplied.insert(10, "continuous tree canopy".to_string());
        let build = build_catalog(&specs, &supplied).unwrap();
        assert_eq!(build.catalog.len(), 119);
        // 17 - 3 fixed - 2 supplied = 12 fallbacks.
        assert_eq!(build.fallback_classes.len(), 12);
        assert!(!build.fallback_classes.contains(&0));
        assert!(!build.fallback_classes.contains(&1));
        assert!(build.fallback_classes.contains(&2));
        let fallback_prompt = build.catalog.get(2, "VH").unwrap();
        assert_eq!(fallback_prompt, "a photo of a compact low-rise with vh bands");
    }

    #[test]
    fn description_file_errors_carry_line_numbers() {
        let err = parse_descriptions("0\tok\nno tab here\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_descriptions("42\toops\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dump_lists_all_prompts_with_paper_ids() {
        let specs = default_band_groups();
        let build = default_catalog(&specs);
        let dump = build.catalog.dump();
        assert_eq!(dump.lines().count(), 119);
        assert!(dump.lines().any(|l| l.starts_with("G\tRGB\t")));
        // Hash is stable across calls.
        assert_eq!(build.catalog.hash_hex(), default_catalog(&specs).catalog.hash_hex());
    }
}
