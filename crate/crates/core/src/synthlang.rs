//! Seeded synthetic parallel languages, knowledge bases and QA sets.
//!
//! Every language is a letter-level cipher of one shared base lexicon of
//! pronounceable pseudo-words. The first language of a spec is the pivot and
//! spells base words unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{save_dataset, Answer, QAExample};
use crate::kb::{Element, KbPaths, KnowledgeBase, LanguageTag, Triple};
use crate::rng::derive_seed;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const MAX_SALT: u64 = 64;

/// Base token to surface token, one language.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub lang: LanguageTag,
    pub mapping: BTreeMap<String, String>,
}

impl Lexicon {
    pub fn surface(&self, base: &str) -> Option<&str> {
        self.mapping.get(base).map(String::as_str)
    }

    /// Maps each whitespace-separated base word.
    pub fn render(&self, base_phrase: &str) -> Result<String> {
        base_phrase
            .split_whitespace()
            .map(|w| {
                self.surface(w).ok_or_else(|| Error::UnknownId {
                    kind: "base word",
                    id: w.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|words| words.join(" "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    /// The first language is the pivot.
    pub languages: Vec<LanguageTag>,
    /// Pivot-language training questions.
    pub n_qa_train: usize,
    /// Test questions per ordered (context, question) language pair.
    pub n_qa_per_lang_pair: usize,
    #[serde(default = "default_distractors")]
    pub n_distractors: usize,
    pub seed: u64,
}

fn default_distractors() -> usize {
    4
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_entities: 200,
            n_relations: 20,
            n_triples: 1000,
            languages: vec![LanguageTag::new("syn0").unwrap(), LanguageTag::new("syn1").unwrap()],
            n_qa_train: 400,
            n_qa_per_lang_pair: 200,
            n_distractors: default_distractors(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_entities", self.n_entities),
            ("n_relations", self.n_relations),
            ("n_triples", self.n_triples),
            ("n_qa_train", self.n_qa_train),
            ("n_qa_per_lang_pair", self.n_qa_per_lang_pair),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, n)| *n == 0) {
            return Err(Error::Config(format!("synth.{name} must be positive")));
        }
        if self.n_entities < 2 {
            return Err(Error::Config("synth.n_entities must be at least 2".into()));
        }
        let distinct: BTreeSet<_> = self.languages.iter().collect();
        if distinct.len() < 2 || distinct.len() != self.languages.len() {
            return Err(Error::Config("synth.languages needs at least 2 distinct tags".into()));
        }
        Ok(())
    }

    pub fn pivot(&self) -> &LanguageTag {
        &self.languages[0]
    }

    /// All ordered (context, question) pairs, pivot/pivot first.
    pub fn lang_pairs(&self) -> Vec<(LanguageTag, LanguageTag)> {
        let mut pairs = Vec::new();
        for c in &self.languages {
            for q in &self.languages {
                pairs.push((c.clone(), q.clone()));
            }
        }
        pairs
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut w = String::with_capacity(2 * syllables);
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    w
}

/// Base words for entities' first names, entities' optional second names and
/// relations, all distinct.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseLexicon {
    pub entity_words: Vec<String>,
    pub second_words: Vec<String>,
    pub relation_words: Vec<String>,
}

impl BaseLexicon {
    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.entity_words
            .iter()
            .chain(&self.second_words)
            .chain(&self.relation_words)
    }
}

pub fn gen_base_lexicon(spec: &SynthSpec) -> BaseLexicon {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synth/base", 0));
    let mut seen = BTreeSet::new();
    let mut draw = |n: usize, rng: &mut ChaCha8Rng| {
        let mut words = Vec::with_capacity(n);
        while words.len() < n {
            let w = pseudo_word(rng, 3);
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        words
    };
    let entity_words = draw(spec.n_entities, &mut rng);
    let second_words = draw(spec.n_entities.div_ceil(10), &mut rng);
    let relation_words = draw(spec.n_relations, &mut rng);
    BaseLexicon {
        entity_words,
        second_words,
        relation_words,
    }
}

fn cipher(seed: u64, lang: &LanguageTag, salt: u64) -> BTreeMap<u8, u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("synth/lang/{lang}"), salt));
    let mut table = BTreeMap::new();
    for alphabet in [CONSONANTS, VOWELS] {
        let mut shuffled = alphabet.to_vec();
        shuffled.shuffle(&mut rng);
        table.extend(alphabet.iter().copied().zip(shuffled));
    }
    table
}

/// Re-spells every base token through a seeded letter permutation. The
/// pivot keeps the identity. A surface token equal to some base token is a
/// collision and triggers a retry with the next salt.
pub fn gen_language(seed: u64, lang: &LanguageTag, base: &[String], pivot: bool) -> Result<Lexicon> {
    let unique: BTreeSet<&String> = base.iter().collect();
    if unique.len() != base.len() {
        return Err(Error::Config("base lexicon has duplicate tokens".into()));
    }
    if pivot {
        return Ok(Lexicon {
            lang: lang.clone(),
            mapping: base.iter().map(|b| (b.clone(), b.clone())).collect(),
        });
    }
    for salt in 0..MAX_SALT {
        let table = cipher(seed, lang, salt);
        let mapping: BTreeMap<String, String> = base
            .iter()
            .map(|b| {
                let s = b.bytes().map(|c| *table.get(&c).unwrap_or(&c) as char).collect();
                (b.clone(), s)
            })
            .collect();
        if mapping.values().all(|s| !unique.contains(s)) {
            return Ok(Lexicon {
                lang: lang.clone(),
                mapping,
            });
        }
    }
    Err(Error::Collision {
        lang: lang.to_string(),
        attempts: MAX_SALT as usize,
    })
}

/// Base lexicon plus one lexicon per spec language.
pub fn gen_lexicons(spec: &SynthSpec) -> Result<(BaseLexicon, Vec<Lexicon>)> {
    spec.validate()?;
    let base = gen_base_lexicon(spec);
    let words: Vec<String> = base.all().cloned().collect();
    let lexicons = spec
        .languages
        .iter()
        .enumerate()
        .map(|(i, lang)| gen_language(spec.seed, lang, &words, i == 0))
        .collect::<Result<_>>()?;
    Ok((base, lexicons))
}

pub fn entity_id(i: usize) -> String {
    format!("E{i:04}")
}

pub fn relation_id(i: usize) -> String {
    format!("R{i:03}")
}

/// Knowledge base whose elements have forms in every spec language.
pub fn gen_kb(spec: &SynthSpec) -> Result<KnowledgeBase> {
    let (base, lexicons) = gen_lexicons(spec)?;
    let capacity = spec
        .n_entities
        .checked_mul(spec.n_entities - 1)
        .and_then(|n| n.checked_mul(spec.n_relations))
        .unwrap_or(usize::MAX);
    if spec.n_triples > capacity {
        return Err(Error::Infeasible {
            requested: spec.n_triples,
            capacity,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synth/kb", 0));
    let forms = |base_name: &str| -> Result<Vec<(LanguageTag, String)>> {
        lexicons
            .iter()
            .map(|lex| Ok((lex.lang.clone(), lex.render(base_name)?)))
            .collect()
    };
    let mut entities = Vec::with_capacity(spec.n_entities);
    for (i, first) in base.entity_words.iter().enumerate() {
        let name = if rng.random_bool(0.3) {
            format!(
                "{first} {}",
                base.second_words[rng.random_range(0..base.second_words.len())]
            )
        } else {
            first.clone()
        };
        entities.push(Element::new(entity_id(i), forms(&name)?)?);
    }
    let relations = base
        .relation_words
        .iter()
        .enumerate()
        .map(|(i, w)| Element::new(relation_id(i), forms(w)?))
        .collect::<Result<Vec<_>>>()?;

    // index -> (head, rel, tail) with tail != head
    let n = spec.n_entities;
    let mut picks = index::sample(&mut rng, capacity, spec.n_triples).into_vec();
    picks.sort_unstable();
    let triples = picks
        .into_iter()
        .map(|k| {
            let tail_slot = k % (n - 1);
            let rel = (k / (n - 1)) % spec.n_relations;
            let head = k / ((n - 1) * spec.n_relations);
            let tail = if tail_slot >= head { tail_slot + 1 } else { tail_slot };
            Triple::new(entity_id(head), relation_id(rel), entity_id(tail))
        })
        .collect();
    KnowledgeBase::from_records(entities, relations, triples)
}

/// A context: the target fact plus distractors, in sentence order.
#[derive(Clone, Debug)]
struct ContextPlan {
    facts: Vec<Triple>,
    target: usize,
}

fn plan_contexts(
    kb: &KnowledgeBase,
    targets: &[&Triple],
    n_distractors: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ContextPlan>> {
    targets
        .iter()
        .map(|&target| {
            let candidates: Vec<&Triple> = kb
                .triples()
                .iter()
                .filter(|t| t.head != target.head && t.rel != target.rel)
                .collect();
            if candidates.len() < n_distractors {
                return Err(Error::Infeasible {
                    requested: n_distractors,
                    capacity: candidates.len(),
                });
            }
            let mut facts: Vec<Triple> = index::sample(rng, candidates.len(), n_distractors)
                .into_iter()
                .map(|i| candidates[i].clone())
                .collect();
            let target_pos = rng.random_range(0..=facts.len());
            facts.insert(target_pos, target.clone());
            Ok(ContextPlan {
                facts,
                target: target_pos,
            })
        })
        .collect()
}

fn render_example(
    kb: &KnowledgeBase,
    plan: &ContextPlan,
    id: String,
    context_lang: &LanguageTag,
    question_lang: &LanguageTag,
) -> Result<QAExample> {
    use crate::kb::ElementKind::{Entity, Relation};
    let mut context = String::new();
    let mut chars = 0;
    let mut answer = None;
    for (i, fact) in plan.facts.iter().enumerate() {
        if i > 0 {
            context.push_str(". ");
            chars += 2;
        }
        let head = kb.surface(Entity, &fact.head, context_lang)?;
        let rel = kb.surface(Relation, &fact.rel, context_lang)?;
        let tail = kb.surface(Entity, &fact.tail, context_lang)?;
        let prefix = format!("{head} {rel} ");
        if i == plan.target {
            answer = Some(Answer {
                text: tail.to_string(),
                answer_start: chars + prefix.chars().count(),
            });
        }
        let sentence = format!("{prefix}{tail}");
        chars += sentence.chars().count();
        context.push_str(&sentence);
    }
    context.push('.');
    let target = &plan.facts[plan.target];
    let question = format!(
        "{} {} ?",
        kb.surface(Entity, &target.head, question_lang)?,
        kb.surface(Relation, &target.rel, question_lang)?
    );
    Ok(QAExample {
        id,
        question,
        question_lang: question_lang.clone(),
        context,
        context_lang: context_lang.clone(),
        answers: vec![answer.expect("target is one of the facts")],
    })
}

/// Pivot-only training questions and test questions for every ordered
/// language pair. Test questions ask about triples never used as training
/// targets, and share their facts across pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QaSplits {
    pub train: Vec<QAExample>,
    pub test: BTreeMap<(LanguageTag, LanguageTag), Vec<QAExample>>,
}

pub fn gen_qa(spec: &SynthSpec, kb: &KnowledgeBase) -> Result<QaSplits> {
    spec.validate()?;
    let triples = kb.triples();
    let needed = spec.n_qa_train + spec.n_qa_per_lang_pair;
    if needed > triples.len() {
        return Err(Error::Infeasible {
            requested: needed,
            capacity: triples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synth/qa", 0));
    let order = index::sample(&mut rng, triples.len(), needed).into_vec();
    let (train_idx, test_idx) = order.split_at(spec.n_qa_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| &triples[i]).collect::<Vec<_>>();
    let train_plans = plan_contexts(kb, &pick(train_idx), spec.n_distractors, &mut rng)?;
    let test_plans = plan_contexts(kb, &pick(test_idx), spec.n_distractors, &mut rng)?;

    let pivot = spec.pivot();
    let train = train_plans
        .iter()
        .enumerate()
        .map(|(i, p)| render_example(kb, p, format!("train-{i:05}"), pivot, pivot))
        .collect::<Result<_>>()?;
    let mut test = BTreeMap::new();
    for (c, q) in spec.lang_pairs() {
        let examples = test_plans
            .iter()
            .enumerate()
            .map(|(i, p)| render_example(kb, p, format!("test-{c}-{q}-{i:05}"), &c, &q))
            .collect::<Result<_>>()?;
        test.insert((c, q), examples);
    }
    Ok(QaSplits { train, test })
}

/// Where [`write_synth`] puts things under its output directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthFiles {
    pub kb_dir: PathBuf,
    pub train: PathBuf,
    pub test: BTreeMap<String, PathBuf>,
    pub manifest: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path, spec: &SynthSpec) -> Self {
        SynthFiles {
            kb_dir: dir.join("kb"),
            train: dir.join("qa").join("train.json"),
            test: spec
                .lang_pairs()
                .into_iter()
                .map(|(c, q)| {
                    let key = format!("{c}-{q}");
                    let path = dir.join("qa").join(format!("test.{key}.json"));
                    (key, path)
                })
                .collect(),
            manifest: dir.join("manifest.json"),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec: &'a SynthSpec,
    seed: u64,
    lexicons: &'a [Lexicon],
}

/// Generates the KB and QA splits and writes them with a manifest.
pub fn write_synth(dir: &Path, spec: &SynthSpec) -> Result<SynthFiles> {
    let kb = gen_kb(spec)?;
    let (_, lexicons) = gen_lexicons(spec)?;
    let splits = gen_qa(spec, &kb)?;
    let files = SynthFiles::in_dir(dir, spec);
    kb.save(&KbPaths::in_dir(&files.kb_dir))?;
    let qa_dir = files.train.parent().expect("train file has a parent");
    std::fs::create_dir_all(qa_dir).map_err(|e| Error::io(qa_dir, e))?;
    save_dataset(&files.train, &splits.train)?;
    for ((c, q), examples) in &splits.test {
        save_dataset(&files.test[&format!("{c}-{q}")], examples)?;
    }
    let manifest = Manifest {
        spec,
        seed: spec.seed,
        lexicons: &lexicons,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&files.manifest, text).map_err(|e| Error::io(&files.manifest, e))?;
    Ok(files)
}
