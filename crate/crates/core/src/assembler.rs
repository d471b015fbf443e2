//! Knowledge-injection corpus assembly.
//!
//! Each selected triple is rendered into one of three kinds of masked
//! samples and always emitted twice, once with the head entity masked and
//! once with the tail entity masked:
//!
//! | kind | visible pieces            | masked target(s)         |
//! |------|---------------------------|--------------------------|
//! | K1   | `(h_i, r_i, t_i)`         | the masked slot in `i`   |
//! | K2   | `(h_i, r_i, t_i)`         | the masked slot in `j`   |
//! | K3   | `(h_i, r_i, t_i, h_j, r_j, t_j)` | both slots, `i` and `j` |

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{ElementKind, KnowledgeBase, LanguageTag, Triple};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleKind {
    K1,
    #[serde(rename = "K2_HEAD_SWAP")]
    K2HeadSwap,
    #[serde(rename = "K2_TAIL_SWAP")]
    K2TailSwap,
    K3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MaskSide {
    Head,
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Head,
    Rel,
    Tail,
    Head2,
    Rel2,
    Tail2,
}

impl Role {
    fn is_head(self) -> bool {
        matches!(self, Role::Head | Role::Head2)
    }

    fn is_tail(self) -> bool {
        matches!(self, Role::Tail | Role::Tail2)
    }
}

/// One rendered element of a sample. A masked piece carries the text it
/// hides, in the language of its `lang` field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub role: Role,
    pub lang: LanguageTag,
    pub text: String,
    pub masked: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub piece: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangPair {
    pub i: LanguageTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<LanguageTag>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskedSample {
    pub kind: SampleKind,
    pub mask_side: MaskSide,
    pub pieces: Vec<Piece>,
    pub targets: Vec<Target>,
    #[serde(rename = "triple")]
    pub source_triple: Triple,
    pub langs: LangPair,
}

impl MaskedSample {
    fn from_pieces(
        kind: SampleKind,
        mask_side: MaskSide,
        pieces: Vec<Piece>,
        source_triple: &Triple,
        langs: LangPair,
    ) -> Self {
        let targets = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.masked)
            .map(|(piece, p)| Target {
                piece,
                text: p.text.clone(),
            })
            .collect();
        MaskedSample {
            kind,
            mask_side,
            pieces,
            targets,
            source_triple: source_triple.clone(),
            langs,
        }
    }

    /// Checks the structural invariants of a sample, returning a description
    /// of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (idx, piece) in self.pieces.iter().enumerate() {
            let should_mask = match self.mask_side {
                MaskSide::Head => piece.role.is_head(),
                MaskSide::Tail => piece.role.is_tail(),
            };
            if piece.masked != should_mask {
                return Err(format!("piece {idx} ({:?}) masked={}", piece.role, piece.masked));
            }
        }
        let masked: Vec<usize> = (0..self.pieces.len()).filter(|&i| self.pieces[i].masked).collect();
        let target_pieces: Vec<usize> = self.targets.iter().map(|t| t.piece).collect();
        if masked != target_pieces {
            return Err(format!(
                "targets {target_pieces:?} do not match masked pieces {masked:?}"
            ));
        }
        if self.targets.iter().any(|t| t.text != self.pieces[t.piece].text) {
            return Err("target text differs from masked piece text".into());
        }
        let i = &self.langs.i;
        let count_in = |lang: &LanguageTag| self.pieces.iter().filter(|p| &p.lang == lang).count();
        let roles: Vec<Role> = self.pieces.iter().map(|p| p.role).collect();
        match self.kind {
            SampleKind::K1 => {
                if roles != [Role::Head, Role::Rel, Role::Tail] || count_in(i) != 3 {
                    return Err("K1 must be three pieces in lang i".into());
                }
                if self.langs.j.is_some() {
                    return Err("K1 has a second language".into());
                }
            }
            SampleKind::K2HeadSwap | SampleKind::K2TailSwap => {
                let j = self.langs.j.as_ref().ok_or("K2 without lang j")?;
                if roles != [Role::Head, Role::Rel, Role::Tail] || count_in(j) != 1 || count_in(i) != 2 {
                    return Err("K2 must be three pieces with exactly one in lang j".into());
                }
                let expected_side = if self.kind == SampleKind::K2HeadSwap {
                    MaskSide::Head
                } else {
                    MaskSide::Tail
                };
                if self.mask_side != expected_side {
                    return Err("K2 kind disagrees with mask side".into());
                }
                if self.pieces.iter().any(|p| p.masked != (&p.lang == j)) {
                    return Err("K2 swapped piece must be the masked one".into());
                }
            }
            SampleKind::K3 => {
                let j = self.langs.j.as_ref().ok_or("K3 without lang j")?;
                let expected = [Role::Head, Role::Rel, Role::Tail, Role::Head2, Role::Rel2, Role::Tail2];
                if roles != expected {
                    return Err("K3 must be six pieces".into());
                }
                if self.pieces[..3].iter().any(|p| &p.lang != i) || self.pieces[3..].iter().any(|p| &p.lang != j) {
                    return Err("K3 blocks must be lang i then lang j".into());
                }
            }
        }
        if self.langs.j.as_ref() == Some(i) {
            return Err("lang i equals lang j".into());
        }
        Ok(())
    }

    /// Pieces with every masked slot replaced by its target text.
    pub fn unmasked_texts(&self) -> Vec<&str> {
        self.pieces.iter().map(|p| p.text.as_str()).collect()
    }
}

struct Surfaces<'a> {
    head: &'a str,
    rel: &'a str,
    tail: &'a str,
}

fn surfaces<'a>(kb: &'a KnowledgeBase, t: &Triple, lang: &LanguageTag) -> Result<Surfaces<'a>> {
    Ok(Surfaces {
        head: kb.surface(ElementKind::Entity, &t.head, lang)?,
        rel: kb.surface(ElementKind::Relation, &t.rel, lang)?,
        tail: kb.surface(ElementKind::Entity, &t.tail, lang)?,
    })
}

fn piece(role: Role, lang: &LanguageTag, text: &str, masked: bool) -> Piece {
    Piece {
        role,
        lang: lang.clone(),
        text: text.to_string(),
        masked,
    }
}

/// Monolingual samples: `[(h_i, r_i, ?), (?, r_i, t_i)]`.
pub fn assemble_k1(kb: &KnowledgeBase, t: &Triple, lang_i: &LanguageTag) -> Result<[MaskedSample; 2]> {
    let s = surfaces(kb, t, lang_i)?;
    let langs = || LangPair {
        i: lang_i.clone(),
        j: None,
    };
    let render = |side: MaskSide| {
        vec![
            piece(Role::Head, lang_i, s.head, side == MaskSide::Head),
            piece(Role::Rel, lang_i, s.rel, false),
            piece(Role::Tail, lang_i, s.tail, side == MaskSide::Tail),
        ]
    };
    Ok([
        MaskedSample::from_pieces(SampleKind::K1, MaskSide::Tail, render(MaskSide::Tail), t, langs()),
        MaskedSample::from_pieces(SampleKind::K1, MaskSide::Head, render(MaskSide::Head), t, langs()),
    ])
}

/// Entity-swap samples: visible pieces in `lang_i`, the masked entity's
/// target in `lang_j`. Returns `[head-masked, tail-masked]`.
pub fn assemble_k2(
    kb: &KnowledgeBase,
    t: &Triple,
    lang_i: &LanguageTag,
    lang_j: &LanguageTag,
) -> Result<[MaskedSample; 2]> {
    if lang_i == lang_j {
        return Err(Error::SameLanguage(lang_i.to_string()));
    }
    let head_i = kb.surface(ElementKind::Entity, &t.head, lang_i)?;
    let rel_i = kb.surface(ElementKind::Relation, &t.rel, lang_i)?;
    let tail_i = kb.surface(ElementKind::Entity, &t.tail, lang_i)?;
    let head_j = kb.surface(ElementKind::Entity, &t.head, lang_j)?;
    let tail_j = kb.surface(ElementKind::Entity, &t.tail, lang_j)?;
    let langs = || LangPair {
        i: lang_i.clone(),
        j: Some(lang_j.clone()),
    };
    let head_masked = vec![
        piece(Role::Head, lang_j, head_j, true),
        piece(Role::Rel, lang_i, rel_i, false),
        piece(Role::Tail, lang_i, tail_i, false),
    ];
    let tail_masked = vec![
        piece(Role::Head, lang_i, head_i, false),
        piece(Role::Rel, lang_i, rel_i, false),
        piece(Role::Tail, lang_j, tail_j, true),
    ];
    Ok([
        MaskedSample::from_pieces(SampleKind::K2HeadSwap, MaskSide::Head, head_masked, t, langs()),
        MaskedSample::from_pieces(SampleKind::K2TailSwap, MaskSide::Tail, tail_masked, t, langs()),
    ])
}

/// Parallel renderings concatenated: `(h_i, r_i, t_i, h_j, r_j, t_j)` with
/// both heads or both tails masked. Returns `[head-masked, tail-masked]`.
pub fn assemble_k3(
    kb: &KnowledgeBase,
    t: &Triple,
    lang_i: &LanguageTag,
    lang_j: &LanguageTag,
) -> Result<[MaskedSample; 2]> {
    if lang_i == lang_j {
        return Err(Error::SameLanguage(lang_i.to_string()));
    }
    let si = surfaces(kb, t, lang_i)?;
    let sj = surfaces(kb, t, lang_j)?;
    let langs = || LangPair {
        i: lang_i.clone(),
        j: Some(lang_j.clone()),
    };
    let render = |side: MaskSide| {
        let h = side == MaskSide::Head;
        vec![
            piece(Role::Head, lang_i, si.head, h),
            piece(Role::Rel, lang_i, si.rel, false),
            piece(Role::Tail, lang_i, si.tail, !h),
            piece(Role::Head2, lang_j, sj.head, h),
            piece(Role::Rel2, lang_j, sj.rel, false),
            piece(Role::Tail2, lang_j, sj.tail, !h),
        ]
    };
    Ok([
        MaskedSample::from_pieces(SampleKind::K3, MaskSide::Head, render(MaskSide::Head), t, langs()),
        MaskedSample::from_pieces(SampleKind::K3, MaskSide::Tail, render(MaskSide::Tail), t, langs()),
    ])
}

/// Relative mixing weights of K1, K2 and K3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindWeights(pub [f64; 3]);

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights([1.0, 1.0, 1.0])
    }
}

enum Family {
    K1,
    K2,
    K3,
}

/// Samples `n_triples` renderable triples without replacement and emits both
/// masked variants of a randomly chosen kind for each. Output order is a
/// seeded shuffle.
pub fn build_corpus(
    kb: &KnowledgeBase,
    langs: &BTreeSet<LanguageTag>,
    n_triples: usize,
    kind_weights: KindWeights,
    seed: u64,
) -> Result<Vec<MaskedSample>> {
    let weights = kind_weights.0;
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidWeights);
    }
    let langs: Vec<LanguageTag> = langs.iter().cloned().collect();
    if langs.is_empty() {
        return Err(Error::Config("corpus needs at least one language".into()));
    }
    if langs.len() < 2 && (weights[1] > 0.0 || weights[2] > 0.0) {
        return Err(Error::Config("K2/K3 samples need at least two languages".into()));
    }
    let lang_set: BTreeSet<LanguageTag> = langs.iter().cloned().collect();
    let candidates = kb.triples_renderable(&lang_set);
    if n_triples > candidates.len() {
        return Err(Error::InsufficientTriples {
            requested: n_triples,
            available: candidates.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "corpus/select", 0));
    let mut chosen = rand::seq::index::sample(&mut rng, candidates.len(), n_triples).into_vec();
    // keep file order so per-triple streams do not depend on the sampler's output order
    chosen.sort_unstable();

    let families = WeightedIndex::new(weights).map_err(|_| Error::InvalidWeights)?;
    let mut corpus = Vec::with_capacity(2 * n_triples);
    for &idx in &chosen {
        let triple = candidates[idx];
        let mut local = ChaCha8Rng::seed_from_u64(derive_seed(seed, "corpus/triple", idx as u64));
        let family = match families.sample(&mut local) {
            0 => Family::K1,
            1 => Family::K2,
            _ => Family::K3,
        };
        let pair = match family {
            Family::K1 => assemble_k1(kb, triple, &langs[local.random_range(0..langs.len())])?,
            Family::K2 | Family::K3 => {
                let i = local.random_range(0..langs.len());
                let mut j = local.random_range(0..langs.len() - 1);
                if j >= i {
                    j += 1;
                }
                if matches!(family, Family::K2) {
                    assemble_k2(kb, triple, &langs[i], &langs[j])?
                } else {
                    assemble_k3(kb, triple, &langs[i], &langs[j])?
                }
            }
        };
        corpus.extend(pair);
    }
    let mut shuffler = ChaCha8Rng::seed_from_u64(derive_seed(seed, "corpus/shuffle", 0));
    corpus.shuffle(&mut shuffler);
    Ok(corpus)
}

/// Writes a corpus as line-delimited JSON.
pub fn save_corpus(path: &std::path::Path, corpus: &[MaskedSample]) -> Result<()> {
    crate::kb::write_lines(path, corpus.iter())
}

pub fn load_corpus(path: &std::path::Path) -> Result<Vec<MaskedSample>> {
    let records: Vec<(usize, MaskedSample)> = crate::kb::read_jsonl(path)?;
    records
        .into_iter()
        .map(|(line, sample)| {
            sample.check_invariants().map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            })?;
            Ok(sample)
        })
        .collect()
}
