//! Multilingual knowledge base: entities and relations carrying one surface
//! form per language, plus language-free `(head, relation, tail)` triples.
//!
//! Files are line-delimited JSON:
//!
//! ```text
//! entities.jsonl   {"id":"Q1","forms":{"en":"Kevin Durant","zh":"凯文杜兰特"}}
//! relations.jsonl  {"id":"P1","forms":{"en":"is a","zh":"是"}}
//! triples.jsonl    {"h":"Q1","r":"P1","t":"Q2"}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A short lowercase language identifier such as `en`, `zh` or `syn1`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        let valid = !code.is_empty()
            && code.len() <= 16
            && code
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-');
        if valid {
            Ok(LanguageTag(code))
        } else {
            Err(Error::InvalidLanguageTag(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for LanguageTag {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageTag {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        LanguageTag::new(value)
    }
}

impl From<LanguageTag> for String {
    fn from(tag: LanguageTag) -> String {
        tag.0
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for LanguageTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LanguageTag::new(s)
    }
}

/// Whether an id names an entity or a relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    Entity,
    Relation,
}

impl ElementKind {
    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Entity => "entity",
            ElementKind::Relation => "relation",
        }
    }
}

/// An entity or relation record: an id and its per-language surface forms.
///
/// Entities and relations share this schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Element {
    pub id: String,
    pub forms: BTreeMap<LanguageTag, String>,
}

pub type Entity = Element;
pub type Relation = Element;

impl Element {
    pub fn new<I, L, S>(id: impl Into<String>, forms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (L, S)>,
        L: AsRef<str>,
        S: Into<String>,
    {
        let forms = forms
            .into_iter()
            .map(|(l, s)| Ok((LanguageTag::new(l.as_ref())?, s.into())))
            .collect::<Result<_>>()?;
        Ok(Element { id: id.into(), forms })
    }

    pub fn form(&self, lang: &LanguageTag) -> Option<&str> {
        self.forms.get(lang).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triple {
    #[serde(rename = "h")]
    pub head: String,
    #[serde(rename = "r")]
    pub rel: String,
    #[serde(rename = "t")]
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, rel: impl Into<String>, tail: impl Into<String>) -> Self {
        Triple {
            head: head.into(),
            rel: rel.into(),
            tail: tail.into(),
        }
    }
}

/// Paths of the three files that make up a knowledge base on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbPaths {
    pub entities: PathBuf,
    pub relations: PathBuf,
    pub triples: PathBuf,
}

impl KbPaths {
    /// `entities.jsonl`, `relations.jsonl` and `triples.jsonl` under `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        KbPaths {
            entities: dir.join("entities.jsonl"),
            relations: dir.join("relations.jsonl"),
            triples: dir.join("triples.jsonl"),
        }
    }
}

/// A validated, immutable knowledge base.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    entities: BTreeMap<String, Entity>,
    relations: BTreeMap<String, Relation>,
    triples: Vec<Triple>,
    languages: BTreeSet<LanguageTag>,
}

const MEMORY: &str = "<memory>";

impl KnowledgeBase {
    /// Validates in-memory records. Errors report 1-based record indices as
    /// line numbers.
    pub fn from_records(entities: Vec<Entity>, relations: Vec<Relation>, triples: Vec<Triple>) -> Result<Self> {
        let numbered = |n: usize| n + 1;
        Self::build(
            (
                Path::new(MEMORY),
                entities
                    .into_iter()
                    .enumerate()
                    .map(|(i, e)| (numbered(i), e))
                    .collect(),
            ),
            (
                Path::new(MEMORY),
                relations
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| (numbered(i), r))
                    .collect(),
            ),
            (
                Path::new(MEMORY),
                triples.into_iter().enumerate().map(|(i, t)| (numbered(i), t)).collect(),
            ),
        )
    }

    fn build(
        entities: (&Path, Vec<(usize, Entity)>),
        relations: (&Path, Vec<(usize, Relation)>),
        triples: (&Path, Vec<(usize, Triple)>),
    ) -> Result<Self> {
        let mut languages = BTreeSet::new();
        let entities = index_elements(ElementKind::Entity, entities.0, entities.1, &mut languages)?;
        let relations = index_elements(ElementKind::Relation, relations.0, relations.1, &mut languages)?;

        let (triples_path, numbered) = triples;
        let mut seen = HashSet::with_capacity(numbered.len());
        let mut out = Vec::with_capacity(numbered.len());
        for (line, triple) in numbered {
            for (kind, id, table) in [
                ("entity", &triple.head, &entities),
                ("relation", &triple.rel, &relations),
                ("entity", &triple.tail, &entities),
            ] {
                if !table.contains_key(id) {
                    return Err(Error::DanglingId {
                        path: triples_path.to_path_buf(),
                        line,
                        kind,
                        id: id.clone(),
                    });
                }
            }
            if !seen.insert(triple.clone()) {
                return Err(Error::DuplicateTriple {
                    path: triples_path.to_path_buf(),
                    line,
                    head: triple.head,
                    rel: triple.rel,
                    tail: triple.tail,
                });
            }
            out.push(triple);
        }

        Ok(KnowledgeBase {
            entities,
            relations,
            triples: out,
            languages,
        })
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn relation(&self, id: &str) -> Option<&Relation> {
        self.relations.get(id)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn languages(&self) -> &BTreeSet<LanguageTag> {
        &self.languages
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Surface text of an entity or relation in `lang`.
    pub fn surface(&self, kind: ElementKind, id: &str, lang: &LanguageTag) -> Result<&str> {
        let table = match kind {
            ElementKind::Entity => &self.entities,
            ElementKind::Relation => &self.relations,
        };
        let element = table.get(id).ok_or_else(|| Error::UnknownId {
            kind: kind.name(),
            id: id.to_string(),
        })?;
        element.form(lang).ok_or_else(|| Error::MissingForm {
            kind: kind.name(),
            id: id.to_string(),
            lang: lang.to_string(),
        })
    }

    /// Triples whose three elements all have a form in every language of
    /// `langs`, in file order.
    pub fn triples_renderable(&self, langs: &BTreeSet<LanguageTag>) -> Vec<&Triple> {
        self.triples
            .iter()
            .filter(|t| self.triple_renderable(t, langs))
            .collect()
    }

    pub fn triple_renderable(&self, t: &Triple, langs: &BTreeSet<LanguageTag>) -> bool {
        let head = &self.entities[&t.head];
        let rel = &self.relations[&t.rel];
        let tail = &self.entities[&t.tail];
        langs
            .iter()
            .all(|l| head.forms.contains_key(l) && rel.forms.contains_key(l) && tail.forms.contains_key(l))
    }

    pub fn save(&self, paths: &KbPaths) -> Result<()> {
        write_lines(&paths.entities, self.entities.values())?;
        write_lines(&paths.relations, self.relations.values())?;
        write_lines(&paths.triples, self.triples.iter())
    }
}

fn index_elements(
    kind: ElementKind,
    path: &Path,
    records: Vec<(usize, Element)>,
    languages: &mut BTreeSet<LanguageTag>,
) -> Result<BTreeMap<String, Element>> {
    let mut table = BTreeMap::new();
    for (line, element) in records {
        for (lang, text) in &element.forms {
            if text.trim().is_empty() {
                return Err(Error::EmptySurface {
                    kind: kind.name(),
                    id: element.id.clone(),
                    lang: lang.to_string(),
                });
            }
            languages.insert(lang.clone());
        }
        if table.contains_key(&element.id) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line,
                kind: kind.name(),
                id: element.id,
            });
        }
        table.insert(element.id.clone(), element);
    }
    Ok(table)
}

/// Loads and validates a knowledge base from its three files.
pub fn load_kb(paths: &KbPaths) -> Result<KnowledgeBase> {
    let entities = read_jsonl(&paths.entities)?;
    let relations = read_jsonl(&paths.relations)?;
    let triples = read_jsonl(&paths.triples)?;
    KnowledgeBase::build(
        (&paths.entities, entities),
        (&paths.relations, relations),
        (&paths.triples, triples),
    )
}

/// Reads line-delimited JSON records, skipping blank lines. Each record is
/// paired with its 1-based line number.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

pub fn write_lines<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, record).expect("records serialize");
        buf.push(b'\n');
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(s: &str) -> LanguageTag {
        LanguageTag::new(s).unwrap()
    }

    fn durant_kb() -> KnowledgeBase {
        KnowledgeBase::from_records(
            vec![
                Element::new("Q1", [("en", "Kevin Durant"), ("zh", "凯文杜兰特")]).unwrap(),
                Element::new("Q2", [("en", "Basketball Player"), ("zh", "篮球运动员")]).unwrap(),
            ],
            vec![Element::new("P1", [("en", "is a"), ("zh", "是")]).unwrap()],
            vec![Triple::new("Q1", "P1", "Q2")],
        )
        .unwrap()
    }

    #[test]
    fn language_tags() {
        assert!(LanguageTag::new("en").is_ok());
        assert!(LanguageTag::new("syn0").is_ok());
        assert!(LanguageTag::new("zh-hans_x").is_ok());
        assert!(LanguageTag::new("").is_err());
        assert!(LanguageTag::new("EN").is_err());
        assert!(LanguageTag::new("a".repeat(17)).is_err());
        assert!(serde_json::from_str::<LanguageTag>("\"Zh\"").is_err());
    }

    #[test]
    fn surface_lookup() {
        let kb = durant_kb();
        assert_eq!(
            kb.surface(ElementKind::Entity, "Q2", &tag("en")).unwrap(),
            "Basketball Player"
        );
        assert_eq!(kb.surface(ElementKind::Entity, "Q2", &tag("zh")).unwrap(), "篮球运动员");
        assert!(matches!(
            kb.surface(ElementKind::Entity, "Q2", &tag("de")),
            Err(Error::MissingForm { .. })
        ));
        assert!(matches!(
            kb.surface(ElementKind::Relation, "Q2", &tag("en")),
            Err(Error::UnknownId { .. })
        ));
    }

    #[test]
    fn languages_are_union_of_forms() {
        let kb = durant_kb();
        let langs: Vec<_> = kb.languages().iter().map(|l| l.as_str()).collect();
        assert_eq!(langs, ["en", "zh"]);
    }

    #[test]
    fn renderable_filter() {
        let kb = KnowledgeBase::from_records(
            vec![
                Element::new("Q1", [("en", "a"), ("zh", "甲")]).unwrap(),
                Element::new("Q2", [("zh", "乙")]).unwrap(),
                Element::new("Q3", [("en", "c"), ("zh", "丙")]).unwrap(),
            ],
            vec![Element::new("P1", [("en", "r"), ("zh", "关")]).unwrap()],
            vec![Triple::new("Q1", "P1", "Q2"), Triple::new("Q1", "P1", "Q3")],
        )
        .unwrap();
        let en: BTreeSet<_> = [tag("en")].into();
        let kept = kb.triples_renderable(&en);
        assert_eq!(kept, vec![&Triple::new("Q1", "P1", "Q3")]);
        assert_eq!(kb.triples_renderable(&BTreeSet::new()).len(), 2);
    }

    #[test]
    fn validation_errors() {
        let e = || Element::new("Q1", [("en", "x")]).unwrap();
        let r = || Element::new("P1", [("en", "y")]).unwrap();
        let dangling = KnowledgeBase::from_records(vec![e()], vec![r()], vec![Triple::new("Q1", "P1", "Q99")]);
        match dangling {
            Err(Error::DanglingId { id, line, .. }) => {
                assert_eq!(id, "Q99");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let dup = KnowledgeBase::from_records(
            vec![e()],
            vec![r()],
            vec![Triple::new("Q1", "P1", "Q1"), Triple::new("Q1", "P1", "Q1")],
        );
        assert!(matches!(dup, Err(Error::DuplicateTriple { line: 2, .. })));
        let dup_id = KnowledgeBase::from_records(vec![e(), e()], vec![r()], vec![]);
        assert!(matches!(dup_id, Err(Error::DuplicateId { .. })));
        let blank = Element::new("Q1", [("en", "  ")]).unwrap();
        assert!(matches!(
            KnowledgeBase::from_records(vec![blank], vec![], vec![]),
            Err(Error::EmptySurface { .. })
        ));
    }
}
