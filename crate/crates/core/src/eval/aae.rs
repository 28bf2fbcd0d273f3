//! Loader for the argument-annotated essay corpus (brat standoff format).
//!
//! Each essay is a `.txt` file with a sibling `.ann` file holding lines like
//!
//! ```text
//! T1	MajorClaim 503 575	we should attach more importance to cooperation
//! R1	supports Arg1:T4 Arg2:T3
//! A1	Stance T3 For
//! ```
//!
//! Offsets count characters of the text file.
#![allow(clippy::tabs_in_doc_comments)]

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    MajorClaim,
    Claim,
    Premise,
}

impl FromStr for ComponentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MajorClaim" => Ok(ComponentKind::MajorClaim),
            "Claim" => Ok(ComponentKind::Claim),
            "Premise" => Ok(ComponentKind::Premise),
            other => Err(format!("unknown component type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Supports,
    Attacks,
}

impl FromStr for RelationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "supports" => Ok(RelationKind::Supports),
            "attacks" => Ok(RelationKind::Attacks),
            other => Err(format!("unknown relation type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldComponent {
    pub id: String,
    pub kind: ComponentKind,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub id: String,
    pub source: String,
    pub relation: RelationKind,
    pub target: String,
}

/// `A` line. Kept for completeness; no metric reads it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAttribute {
    pub id: String,
    pub name: String,
    pub target: String,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEssay {
    pub essay_id: String,
    pub text: String,
    pub components: Vec<GoldComponent>,
    pub relations: Vec<GoldRelation>,
    pub attributes: Vec<GoldAttribute>,
}

impl GoldEssay {
    pub fn component(&self, id: &str) -> Option<&GoldComponent> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn supports(&self) -> impl Iterator<Item = &GoldRelation> {
        self.relations
            .iter()
            .filter(|r| r.relation == RelationKind::Supports)
    }
}

#[derive(Debug, Error)]
pub enum AaeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: span of {component} disagrees with the text: {detail}")]
    SpanMismatch {
        file: String,
        line: usize,
        component: String,
        detail: String,
    },
    #[error("{0} has no matching .txt file")]
    MissingText(PathBuf),
    #[error("no .ann files in {0}")]
    EmptyCorpus(PathBuf),
}

struct LineCtx<'a> {
    file: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, message: impl fmt::Display) -> AaeError {
        AaeError::Parse {
            file: self.file.to_string(),
            line: self.line,
            message: message.to_string(),
        }
    }
}

fn offset(ctx: &LineCtx<'_>, raw: &str) -> Result<usize, AaeError> {
    raw.parse()
        .map_err(|_| ctx.err(format_args!("bad offset {raw:?}")))
}

fn arg_ref<'a>(ctx: &LineCtx<'_>, raw: &'a str, name: &str) -> Result<&'a str, AaeError> {
    raw.strip_prefix(name)
        .and_then(|r| r.strip_prefix(':'))
        .filter(|r| !r.is_empty())
        .ok_or_else(|| ctx.err(format_args!("expected {name}:<id>, found {raw:?}")))
}

/// Parses one annotation file against its essay text.
pub fn parse_annotations(
    essay_id: &str,
    text: &str,
    ann: &str,
    file: &str,
) -> Result<GoldEssay, AaeError> {
    let chars: Vec<char> = text.chars().collect();
    let mut essay = GoldEssay {
        essay_id: essay_id.to_string(),
        text: text.to_string(),
        components: Vec::new(),
        relations: Vec::new(),
        attributes: Vec::new(),
    };
    let mut seen = BTreeSet::new();
    let mut pending_refs = Vec::new();

    for (index, line) in ann.lines().enumerate() {
        let ctx = LineCtx { file, line: index + 1 };
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let id = fields.next().unwrap_or_default();
        let body = fields
            .next()
            .ok_or_else(|| ctx.err("missing tab after annotation id"))?;
        if !seen.insert(id.to_string()) {
            return Err(ctx.err(format_args!("duplicate id {id}")));
        }
        let parts: Vec<&str> = body.split_whitespace().collect();
        match id.chars().next() {
            Some('T') => {
                let [kind, start, end] = parts[..] else {
                    return Err(ctx.err("expected `<type> <start> <end>`"));
                };
                let kind: ComponentKind = kind.parse().map_err(|e| ctx.err(e))?;
                let start = offset(&ctx, start)?;
                let end = offset(&ctx, end)?;
                let quoted = fields.next().unwrap_or_default();
                let mismatch = |detail: String| AaeError::SpanMismatch {
                    file: file.to_string(),
                    line: index + 1,
                    component: id.to_string(),
                    detail,
                };
                if start > end || end > chars.len() {
                    return Err(mismatch(format!(
                        "offsets {start}..{end} outside text of {} characters",
                        chars.len()
                    )));
                }
                let actual: String = chars[start..end].iter().collect();
                if actual != quoted {
                    return Err(mismatch(format!("text has {actual:?}, annotation has {quoted:?}")));
                }
                essay.components.push(GoldComponent {
                    id: id.to_string(),
                    kind,
                    start,
                    end,
                    text: actual,
                });
            }
            Some('R') => {
                let [kind, arg1, arg2] = parts[..] else {
                    return Err(ctx.err("expected `<type> Arg1:<id> Arg2:<id>`"));
                };
                let relation: RelationKind = kind.parse().map_err(|e| ctx.err(e))?;
                let source = arg_ref(&ctx, arg1, "Arg1")?.to_string();
                let target = arg_ref(&ctx, arg2, "Arg2")?.to_string();
                pending_refs.push((index + 1, source.clone()));
                pending_refs.push((index + 1, target.clone()));
                essay.relations.push(GoldRelation {
                    id: id.to_string(),
                    source,
                    relation,
                    target,
                });
            }
            Some('A') => {
                let (name, target, value) = match parts[..] {
                    [name, target] => (name, target, None),
                    [name, target, value] => (name, target, Some(value.to_string())),
                    _ => return Err(ctx.err("expected `<name> <id> [<value>]`")),
                };
                pending_refs.push((index + 1, target.to_string()));
                essay.attributes.push(GoldAttribute {
                    id: id.to_string(),
                    name: name.to_string(),
                    target: target.to_string(),
                    value,
                });
            }
            _ => return Err(ctx.err(format_args!("unsupported annotation {id:?}"))),
        }
    }

    for (line, id) in pending_refs {
        if essay.component(&id).is_none() {
            return Err(LineCtx { file, line }.err(format_args!("reference to unknown component {id}")));
        }
    }
    Ok(essay)
}

fn read(path: &Path) -> Result<String, AaeError> {
    std::fs::read_to_string(path).map_err(|source| AaeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads every `.ann`/`.txt` pair in `dir`, sorted by essay id.
pub fn load_aae_corpus(dir: &Path) -> Result<Vec<GoldEssay>, AaeError> {
    let entries = std::fs::read_dir(dir).map_err(|source| AaeError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut ann_files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ann"))
        .collect();
    ann_files.sort();
    if ann_files.is_empty() {
        return Err(AaeError::EmptyCorpus(dir.to_path_buf()));
    }
    ann_files
        .iter()
        .map(|ann_path| {
            let txt_path = ann_path.with_extension("txt");
            if !txt_path.exists() {
                return Err(AaeError::MissingText(ann_path.clone()));
            }
            let essay_id = ann_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let file = ann_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            parse_annotations(&essay_id, &read(&txt_path)?, &read(ann_path)?, &file)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "Cats rule. They are clean. Dogs bark.";

    #[test]
    fn major_claim_only() {
        let essay = parse_annotations("e", TEXT, "T1\tMajorClaim 0 10\tCats rule.\n", "e.ann").unwrap();
        assert_eq!(essay.components.len(), 1);
        assert_eq!(essay.components[0].kind, ComponentKind::MajorClaim);
        assert!(essay.relations.is_empty());
    }

    #[test]
    fn relations_and_attributes() {
        let ann = "T1\tClaim 0 10\tCats rule.\nT2\tPremise 11 26\tThey are clean.\n\
                   R1\tsupports Arg1:T2 Arg2:T1\nA1\tStance T1 For\n#1\tAnnotatorNotes T1\tnote\n";
        let essay = parse_annotations("e", TEXT, ann, "e.ann").unwrap();
        assert_eq!(essay.relations[0].source, "T2");
        assert_eq!(essay.relations[0].target, "T1");
        assert_eq!(essay.attributes[0].value.as_deref(), Some("For"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let ann = "T1\tClaim 0 10\tCats rule.\nR1\tsupports Arg1:T9 Arg2:T1\n";
        match parse_annotations("e", TEXT, ann, "e.ann") {
            Err(AaeError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_annotations("e", TEXT, "T1\tClaim 0 99\tx\n", "e.ann") {
            Err(AaeError::SpanMismatch { component, .. }) => assert_eq!(component, "T1"),
            other => panic!("{other:?}"),
        }
    }
}
