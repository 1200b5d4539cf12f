//! `README.md` rendering: YAML front matter followed by a markdown body.

use std::fmt::Write;

use super::CardFields;

pub const CARD_FILE_NAME: &str = "README.md";

/// YAML double-quoted scalar.
fn yaml_quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Plain scalars YAML would read as something other than a string.
const YAML_RESERVED: &[&str] = &["y", "n", "yes", "no", "true", "false", "on", "off", "null"];

/// SPDX-shaped ids are written bare, anything else quoted.
fn yaml_license(license: &str) -> String {
    let lower = license.to_lowercase();
    let plain = !lower.is_empty()
        && lower.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'-' | b'+'))
        && lower.as_bytes()[0].is_ascii_alphabetic()
        && !YAML_RESERVED.contains(&lower.as_str());
    if plain {
        lower
    } else {
        yaml_quoted(&lower)
    }
}

/// Backtick fence longer than any backtick run inside `text`.
fn fence_for(text: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in text.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat((longest + 1).max(3))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn render_card(fields: &CardFields) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("---\n");
    let _ = writeln!(out, "license: {}", yaml_license(&fields.license));
    let _ = writeln!(out, "pretty_name: {}", yaml_quoted(&one_line(&fields.pretty_name)));
    if fields.tags.is_empty() {
        out.push_str("tags: []\n");
    } else {
        out.push_str("tags:\n");
        for tag in &fields.tags {
            let _ = writeln!(out, "- {}", yaml_quoted(tag));
        }
    }
    let _ = writeln!(out, "size_categories:\n- {}", fields.size_category.label());
    out.push_str("---\n\n");

    let _ = writeln!(out, "# {}\n", one_line(&fields.pretty_name));
    out.push_str(fields.description.trim_end());
    out.push_str("\n\n");

    if !fields.source_links.is_empty() {
        out.push_str("## Source\n\n");
        for link in &fields.source_links {
            let _ = writeln!(out, "- <{link}>");
        }
        out.push('\n');
    }

    out.push_str("## Authors\n\n");
    for author in &fields.authors {
        let _ = writeln!(out, "- {}", one_line(author));
    }
    out.push('\n');

    let fence = fence_for(&fields.citation);
    let _ = write!(out, "## Citation\n\n{fence}\n{}", fields.citation);
    if !fields.citation.ends_with('\n') {
        out.push('\n');
    }
    let _ = writeln!(out, "{fence}");

    if !fields.source_attributes.is_empty() {
        out.push_str("\n## Source attributes\n\n");
        for (name, value) in &fields.source_attributes {
            let _ = writeln!(out, "- **{}**: {}", one_line(name), one_line(value));
        }
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::card::SizeCategory;
    use proptest::prelude::*;

    fn minimal() -> CardFields {
        CardFields {
            license: "CC-BY-4.0".into(),
            pretty_name: "RNAi screen".into(),
            tags: vec![],
            authors: vec!["A. Person".into()],
            citation: "A. Person (2020). RNAi screen.".into(),
            description: "Knockdown phenotypes.".into(),
            source_links: vec!["https://idr.openmicroscopy.org/study/idr0012/".into()],
            source_attributes: vec![],
            size_category: SizeCategory::Under1K,
        }
    }

    /// Split into (front matter, body) the way hub tooling does: the
    /// document starts with `---` and the first later `---` line closes it.
    fn split_card(card: &str) -> (&str, &str) {
        let rest = card.strip_prefix("---\n").expect("opening delimiter");
        let end = rest.find("\n---\n").expect("closing delimiter");
        (&rest[..end + 1], &rest[end + 5..])
    }

    #[test]
    fn golden_minimal_card() {
        let card = String::from_utf8(render_card(&minimal())).unwrap();
        let expected = "---
license: cc-by-4.0
pretty_name: \"RNAi screen\"
tags: []
size_categories:
- n<1K
---

# RNAi screen

Knockdown phenotypes.

## Source

- <https://idr.openmicroscopy.org/study/idr0012/>

## Authors

- A. Person

## Citation

```
A. Person (2020). RNAi screen.
```
";
        assert_eq!(card, expected);
        assert_eq!(render_card(&minimal()), render_card(&minimal()));
    }

    #[test]
    fn citation_with_delimiters_stays_in_body() {
        let mut f = minimal();
        f.citation = "---\n@article{x,\n  note = {```}\n}\n---".into();
        let card = String::from_utf8(render_card(&f)).unwrap();
        let (front, body) = split_card(&card);
        assert!(!front.contains("@article"));
        assert!(body.contains("````\n---\n@article{x,"));
        assert!(body.contains(&f.citation));
        let yaml: serde_yaml::Value = serde_yaml::from_str(front).unwrap();
        assert_eq!(yaml["license"], "cc-by-4.0");
        let before_body = card.len() - body.len();
        assert_eq!(card[..before_body].lines().filter(|l| *l == "---").count(), 2);
    }

    #[test]
    fn source_attributes_appendix() {
        let mut f = minimal();
        f.source_attributes = vec![("Organism".into(), "Homo sapiens".into())];
        let card = String::from_utf8(render_card(&f)).unwrap();
        assert!(card.ends_with("## Source attributes\n\n- **Organism**: Homo sapiens\n"));
    }

    #[test]
    fn unusual_license_is_quoted() {
        assert_eq!(yaml_license("LicenseRef-My License"), "\"licenseref-my license\"");
        assert_eq!(yaml_license("GPL-3.0+"), "gpl-3.0+");
        assert_eq!(yaml_license("0"), "\"0\"");
        assert_eq!(yaml_license("No"), "\"no\"");
    }

    proptest! {
        #[test]
        fn front_matter_parses_as_yaml(
            name in "\\PC{1,40}",
            tags in proptest::collection::vec("\\PC{1,12}", 0..4),
            license in "\\PC{1,16}",
            citation in "(\\PC|\n|---|`){0,60}",
            rows in any::<u64>(),
        ) {
            prop_assume!(!name.trim().is_empty() && !license.trim().is_empty());
            let mut f = minimal();
            f.pretty_name = name.clone();
            f.tags = tags.clone();
            f.license = license.clone();
            f.citation = citation.clone();
            f.size_category = SizeCategory::from_rows(rows);
            let card = String::from_utf8(render_card(&f)).unwrap();
            let (front, body) = split_card(&card);
            let yaml: serde_yaml::Value = serde_yaml::from_str(front).unwrap();
            prop_assert_eq!(yaml["license"].as_str().unwrap(), license.to_lowercase());
            prop_assert_eq!(yaml["pretty_name"].as_str().unwrap(), one_line(&name));
            let parsed_tags: Vec<String> = yaml["tags"].as_sequence().unwrap().iter().map(|t| t.as_str().unwrap().to_string()).collect();
            prop_assert_eq!(parsed_tags, tags);
            prop_assert_eq!(yaml["size_categories"][0].as_str().unwrap(), f.size_category.label());
            prop_assert!(body.contains(&citation));
        }
    }
}
