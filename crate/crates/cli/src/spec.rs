//! JSON substitution specs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use subst_spectra::{RandomSubstitution, Realisation};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstitutionSpec {
    pub alphabet: Vec<String>,
    pub rules: BTreeMap<String, Vec<RuleSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub word: String,
    pub prob: f64,
}

pub fn parse_spec(path: &Path) -> Result<(RandomSubstitution, Option<String>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    parse_spec_str(&text).map_err(|e| e.context(&path.display().to_string()))
}

pub fn parse_spec_str(text: &str) -> Result<(RandomSubstitution, Option<String>), CliError> {
    let spec: SubstitutionSpec =
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let subst = spec.to_substitution()?;
    Ok((subst, spec.label))
}

impl SubstitutionSpec {
    pub fn to_substitution(&self) -> Result<RandomSubstitution, CliError> {
        let mut names = Vec::with_capacity(self.alphabet.len());
        for (i, name) in self.alphabet.iter().enumerate() {
            let mut chars = name.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => names.push(c),
                _ => {
                    return Err(CliError::Validation(format!(
                        "alphabet[{i}]: letter names are single characters, got {name:?}"
                    )))
                }
            }
        }
        for key in self.rules.keys() {
            if !self.alphabet.contains(key) {
                return Err(CliError::Validation(format!(
                    "rules.{key}: letter is not in the alphabet"
                )));
            }
        }
        let mut rules = Vec::with_capacity(names.len());
        for name in &self.alphabet {
            let list = self
                .rules
                .get(name)
                .ok_or_else(|| CliError::Validation(format!("rules.{name}: missing")))?;
            let mut realisations = Vec::with_capacity(list.len());
            for (j, rule) in list.iter().enumerate() {
                let word = rule
                    .word
                    .chars()
                    .map(|c| {
                        names
                            .iter()
                            .position(|&n| n == c)
                            .map(|i| i as u8)
                            .ok_or_else(|| {
                                CliError::Validation(format!(
                                    "rules.{name}[{j}].word: letter {c:?} is not in the alphabet"
                                ))
                            })
                    })
                    .collect::<Result<Vec<u8>, _>>()?;
                realisations.push(Realisation {
                    word,
                    prob: rule.prob,
                });
            }
            rules.push(realisations);
        }
        RandomSubstitution::new(names, rules).map_err(CliError::from)
    }

    pub fn from_substitution(subst: &RandomSubstitution, label: Option<String>) -> Self {
        let alphabet: Vec<String> = subst.names().iter().map(|c| c.to_string()).collect();
        let rules = subst
            .letters()
            .map(|a| {
                let list = subst
                    .realisations(a)
                    .iter()
                    .map(|r| RuleSpec {
                        word: subst.render(&r.word),
                        prob: r.prob,
                    })
                    .collect();
                (alphabet[a as usize].clone(), list)
            })
            .collect();
        SubstitutionSpec {
            alphabet,
            rules,
            label,
        }
    }
}

/// Pretty-printed JSON that parses back to the same substitution.
pub fn emit(subst: &RandomSubstitution, label: Option<String>) -> String {
    let spec = SubstitutionSpec::from_substitution(subst, label);
    serde_json::to_string_pretty(&spec).expect("specs serialise")
}
