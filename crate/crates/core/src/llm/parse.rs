//! Extracting descriptor sets from free-form LLM replies.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::types::{ClassLabel, Descriptor, DescriptorSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub set: DescriptorSet,
    pub warnings: Vec<String>,
}

/// Returns the first `{` that starts a complete JSON object. Any later object
/// inside it starts after it, so this is the outermost one.
fn first_object(raw: &str) -> Option<Map<String, Value>> {
    for (pos, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[pos..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

/// Parses a reply into descriptors for `expected` classes.
///
/// Surrounding prose and code fences are ignored. Descriptor whitespace is
/// collapsed to single spaces, blanks dropped, duplicates removed keeping the
/// first occurrence. With `expected_count`, longer lists are truncated and
/// shorter ones accepted with a warning. A key that matches a class only up to
/// ASCII case is accepted with a warning.
pub fn parse_descriptor_response(
    raw: &str,
    expected: &[ClassLabel],
    expected_count: Option<usize>,
) -> Result<ParsedResponse> {
    let map = first_object(raw).ok_or_else(|| Error::Parse("no JSON object found".into()))?;
    let mut set = DescriptorSet::new();
    let mut warnings = Vec::new();
    for class in expected {
        let value = match map.get(class.as_str()) {
            Some(v) => v,
            None => {
                let loose: Vec<(&String, &Value)> = map
                    .iter()
                    .filter(|(k, _)| k.trim().eq_ignore_ascii_case(class.as_str()))
                    .collect();
                if loose.len() != 1 {
                    return Err(Error::Parse(format!("missing {class}")));
                }
                let (key, v) = loose[0];
                warnings.push(format!("class {class} matched reply key {key:?}"));
                v
            }
        };
        let items = value
            .as_array()
            .ok_or_else(|| Error::Parse(format!("value for {class} is not an array")))?;
        let mut list: Vec<Descriptor> = Vec::with_capacity(items.len());
        for item in items {
            let Some(text) = item.as_str() else {
                warnings.push(format!("{class}: skipped non-string entry {item}"));
                continue;
            };
            let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
            if text.is_empty() {
                continue;
            }
            let d = Descriptor::new(text).expect("collapsed text is non-empty and single-line");
            if !list.contains(&d) {
                list.push(d);
            }
        }
        if list.is_empty() {
            return Err(Error::Parse(format!("no descriptors for {class}")));
        }
        if let Some(n) = expected_count {
            if list.len() > n {
                list.truncate(n);
            } else if list.len() < n {
                warnings.push(format!("{class}: expected {n} descriptors, got {}", list.len()));
            }
        }
        set.insert(class.clone(), list);
    }
    Ok(ParsedResponse { set, warnings })
}
