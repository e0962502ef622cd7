//! Local recognisability: window tables certifying a recognisability radius, and the
//! recognisable core of a legal word.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::language::{Language, MAX_SOURCE_LEN};
use crate::spectral::is_primitive;
use crate::substitution::RandomSubstitution;
use crate::word::{Letter, Word};

use super::require_compatible;

/// What a window says about its centre position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CentreAnswer {
    NoCut,
    /// The centre starts the image of this letter.
    Cut(Letter),
}

/// Single-valued map from every legal `(2κ+1)`-window to its centre answer.
#[derive(Debug, Clone)]
pub struct RecognitionTable {
    pub radius: usize,
    windows: HashMap<Word, CentreAnswer>,
    names: Vec<char>,
    tile_len: Vec<usize>,
    images: Vec<Vec<Word>>,
}

impl RecognitionTable {
    pub fn answer(&self, window: &[Letter]) -> Option<CentreAnswer> {
        self.windows.get(window).copied()
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Entries sorted by window.
    pub fn entries(&self) -> Vec<(&Word, CentreAnswer)> {
        let mut out: Vec<_> = self.windows.iter().map(|(w, a)| (w, *a)).collect();
        out.sort();
        out
    }

    fn render(&self, u: &[Letter]) -> String {
        u.iter().map(|&a| self.names[a as usize]).collect()
    }
}

impl PartialOrd for CentreAnswer {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CentreAnswer {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |a: &CentreAnswer| match a {
            CentreAnswer::NoCut => 0u16,
            CentreAnswer::Cut(x) => 1 + u16::from(*x),
        };
        key(self).cmp(&key(other))
    }
}

/// Why a radius could not be certified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RadiusFailure {
    /// Two legal placements of the same window disagree about its centre.
    Ambiguous {
        window: Word,
        first: CentreAnswer,
        second: CentreAnswer,
    },
    /// A legal window never occurred inside a placement.
    Uncovered(Word),
}

/// Outcome of the radius search. A failed search never refutes recognisability.
#[derive(Debug, Clone)]
pub enum Recognisability {
    Radius(RecognitionTable),
    /// No radius up to the bound certified; carries the failure at the largest radius tried.
    UnverifiedUpTo(usize, Option<RadiusFailure>),
    /// Not recognisable: the disjoint set condition fails.
    Excluded,
}

impl Recognisability {
    pub fn table(&self) -> Option<&RecognitionTable> {
        match self {
            Recognisability::Radius(t) => Some(t),
            Recognisability::UnverifiedUpTo(..) | Recognisability::Excluded => None,
        }
    }
}

/// Number of letters of a source word `v` such that every legal window of length `len` sits
/// inside the images of `v_2 ⋯ v_{m−1}`.
fn placement_len(len: usize, lmin: usize) -> usize {
    (len.div_ceil(lmin) + 2).max((len - 1).div_ceil(lmin) + 3)
}

/// Most legal words the radius search may generate.
pub const LANGUAGE_BUDGET: usize = 200_000;
/// Most realisations of placement words the radius search may enumerate for one radius.
pub const ENUMERATION_BUDGET: u128 = 50_000_000;

/// Smallest radius `r ≤ max_radius` whose window table is single-valued and total on the legal
/// windows of length `2r + 1`.
///
/// The search stops early, reporting `UnverifiedUpTo` with the last radius tried, once a radius
/// would need placements longer than [`MAX_SOURCE_LEN`] or would exceed [`LANGUAGE_BUDGET`] or
/// [`ENUMERATION_BUDGET`].
pub fn find_recognisability_radius(
    subst: &RandomSubstitution,
    max_radius: usize,
) -> Result<Recognisability> {
    require_compatible(subst)?;
    if !is_primitive(&subst.substitution_matrix()) {
        return Err(Error::NotPrimitive);
    }
    let lmin = subst.min_image_len();
    let mut failure = None;
    let mut language: Option<Language> = None;
    for r in 1..=max_radius {
        let len = 2 * r + 1;
        let m = placement_len(len, lmin);
        if m > MAX_SOURCE_LEN {
            return Ok(Recognisability::UnverifiedUpTo(r - 1, failure));
        }
        let need = m.max(len);
        if language.as_ref().is_none_or(|l| l.max_len() < need) {
            match Language::generate_capped(subst, need, LANGUAGE_BUDGET) {
                Ok(l) => language = Some(l),
                Err(Error::CapExceeded { .. }) => {
                    return Ok(Recognisability::UnverifiedUpTo(r - 1, failure))
                }
                Err(e) => return Err(e),
            }
        }
        let language = language.as_ref().expect("generated above");
        if enumeration_size(subst, language.words(m)) > ENUMERATION_BUDGET {
            return Ok(Recognisability::UnverifiedUpTo(r - 1, failure));
        }
        match table_for_radius(subst, language, r) {
            Ok(table) => return Ok(Recognisability::Radius(table)),
            Err(f) => failure = Some(f),
        }
    }
    Ok(Recognisability::UnverifiedUpTo(max_radius, failure))
}

/// Realisations of the inner tiles summed over all placement words.
fn enumeration_size(subst: &RandomSubstitution, placements: &[Word]) -> u128 {
    placements
        .iter()
        .map(|v| {
            v[1..v.len() - 1].iter().fold(1u128, |acc, &a| {
                acc.saturating_mul(subst.realisations(a).len() as u128)
            })
        })
        .fold(0u128, u128::saturating_add)
}

fn table_for_radius(
    subst: &RandomSubstitution,
    language: &Language,
    r: usize,
) -> std::result::Result<RecognitionTable, RadiusFailure> {
    let len = 2 * r + 1;
    let m = placement_len(len, subst.min_image_len());
    let tile_len: Vec<usize> = subst
        .letters()
        .map(|a| subst.image_len(a).expect("compatible"))
        .collect();
    let mut windows: HashMap<Word, CentreAnswer> = HashMap::new();
    for v in language.words(m) {
        let mut starts = Vec::with_capacity(m + 1);
        let mut pos = 0;
        for &a in v {
            starts.push(pos);
            pos += tile_len[a as usize];
        }
        starts.push(pos);
        let lo = starts[1];
        let hi = starts[m - 1];
        if hi < lo + len {
            continue;
        }
        let mut answers = vec![CentreAnswer::NoCut; pos];
        for i in 0..m {
            answers[starts[i]] = CentreAnswer::Cut(v[i]);
        }
        // Only tiles 1..m−1 are read; the outer tiles keep their first realisation.
        let mut w: Word = v
            .iter()
            .flat_map(|&a| subst.realisations(a)[0].word.iter().copied())
            .collect();
        let mut conflict = None;
        let ok = for_each_realisation(subst, v, &starts, 1, m - 1, &mut w, &mut |w| {
            for p in lo..=hi - len {
                let answer = answers[p + r];
                match windows.get(&w[p..p + len]) {
                    Some(&existing) if existing != answer => {
                        conflict = Some(RadiusFailure::Ambiguous {
                            window: w[p..p + len].to_vec(),
                            first: existing,
                            second: answer,
                        });
                        return false;
                    }
                    Some(_) => {}
                    None => {
                        windows.insert(w[p..p + len].to_vec(), answer);
                    }
                }
            }
            true
        });
        if !ok {
            return Err(conflict.expect("conflict recorded"));
        }
    }
    if let Some(u) = language
        .words(len)
        .iter()
        .find(|u| !windows.contains_key(*u))
    {
        return Err(RadiusFailure::Uncovered(u.clone()));
    }
    Ok(RecognitionTable {
        radius: r,
        windows,
        names: subst.names().to_vec(),
        tile_len,
        images: subst
            .rules()
            .iter()
            .map(|row| row.iter().map(|x| x.word.clone()).collect())
            .collect(),
    })
}

/// Calls `f` on every choice of realisations for tiles `from..to`; stops early when `f` is false.
fn for_each_realisation(
    subst: &RandomSubstitution,
    v: &[Letter],
    starts: &[usize],
    from: usize,
    to: usize,
    w: &mut Word,
    f: &mut dyn FnMut(&Word) -> bool,
) -> bool {
    if from == to {
        return f(w);
    }
    for r in subst.realisations(v[from]) {
        w[starts[from]..starts[from + 1]].copy_from_slice(&r.word);
        if !for_each_realisation(subst, v, starts, from + 1, to, w, f) {
            return false;
        }
    }
    true
}

/// Recognisable core `w′` of a word, with its unique preimage `v′` and its position in the word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Core {
    pub source: Word,
    pub image: Word,
    pub offset: usize,
}

/// Slides the table over `u` and returns the longest run of complete, identified tiles.
pub fn recognisable_core(u: &[Letter], table: &RecognitionTable) -> Result<Core> {
    let r = table.radius;
    if u.len() <= 2 * r {
        return Err(Error::Domain(
            "word must be longer than twice the recognisability radius",
        ));
    }
    let mut answers = Vec::with_capacity(u.len() - 2 * r);
    for c in r..u.len() - r {
        let window = &u[c - r..=c + r];
        answers.push(
            table
                .answer(window)
                .ok_or_else(|| Error::WindowMissing(table.render(window)))?,
        );
    }
    let answer_at =
        |c: usize| -> Option<CentreAnswer> { (c >= r && c < u.len() - r).then(|| answers[c - r]) };
    let first = (r..u.len() - r).find(|&c| answer_at(c) != Some(CentreAnswer::NoCut));
    let Some(mut pos) = first else {
        return Err(Error::EmptyCore(table.render(u)));
    };
    let offset = pos;
    let mut source = Vec::new();
    let mut letter = match answer_at(pos) {
        Some(CentreAnswer::Cut(a)) => a,
        _ => unreachable!("first cut found above"),
    };
    loop {
        let end = pos + table.tile_len[letter as usize];
        if end > u.len() {
            break;
        }
        if (pos + 1..end).any(|c| matches!(answer_at(c), Some(CentreAnswer::Cut(_)))) {
            return Err(Error::WindowMissing(table.render(&u[pos..end])));
        }
        if !table.images[letter as usize]
            .iter()
            .any(|w| w[..] == u[pos..end])
        {
            return Err(Error::WindowMissing(table.render(&u[pos..end])));
        }
        source.push(letter);
        pos = end;
        match answer_at(pos) {
            Some(CentreAnswer::Cut(a)) => letter = a,
            Some(CentreAnswer::NoCut) => return Err(Error::WindowMissing(table.render(u))),
            None => break,
        }
    }
    if source.is_empty() {
        return Err(Error::EmptyCore(table.render(u)));
    }
    Ok(Core {
        source,
        image: u[offset..pos].to_vec(),
        offset,
    })
}
