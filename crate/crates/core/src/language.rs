//! Legal words of the subshift generated by a random substitution.

use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::substitution::RandomSubstitution;
use crate::word::{Letter, Word};

/// Longest source word whose images are enumerated by the generating operator.
pub const MAX_SOURCE_LEN: usize = 24;

/// Image windows [`Language::generate_capped`] may examine per word allowed by its cap.
const WORK_PER_WORD: usize = 64;

/// The set `L^n` of legal words of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegalLanguage {
    pub n: usize,
    /// Sorted lexicographically by letter index.
    pub words: Vec<Word>,
    /// Rounds of the worklist until no new words appeared.
    pub iterations: usize,
}

impl LegalLanguage {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, u: &[Letter]) -> bool {
        self.words.binary_search_by(|w| w.as_slice().cmp(u)).is_ok()
    }

    pub fn index_of(&self, u: &[Letter]) -> Option<usize> {
        self.words.binary_search_by(|w| w.as_slice().cmp(u)).ok()
    }
}

/// Legal words of every length `1..=max_len`.
#[derive(Debug, Clone)]
pub struct Language {
    by_len: Vec<Vec<Word>>,
    iterations: usize,
}

impl Language {
    /// Legal words of length `≤ max_len` of a primitive substitution.
    ///
    /// Only the top layer `L^N`, `N = max_len`, is closed: it is the least set containing the
    /// length-`N` windows of a seed realisation of `ϑ^k(a)` for each letter `a` that is closed
    /// under taking length-`N` subwords of realisations of `ϑ(v)` for its length-`s` subwords
    /// `v`, `s = min(N, ⌈(N − 1)/ℓ_min⌉ + 1)`. Every legal word of length `N` sits inside `ϑ(v)`
    /// for a legal `v` of length `s`, and tracing a word back to a letter through such covers
    /// shows the closure is all of `L^N`. Shorter layers are the subwords of `L^N`.
    pub fn generate(subst: &RandomSubstitution, max_len: usize) -> Result<Self> {
        Self::generate_capped(subst, max_len, usize::MAX)
    }

    /// As [`Language::generate`], failing with `CapExceeded` once more than `cap` words are found
    /// or the work exceeds a fixed multiple of `cap`.
    pub fn generate_capped(subst: &RandomSubstitution, max_len: usize, cap: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::Domain("word length must be at least 1"));
        }
        let lmin = subst.min_image_len().max(1);
        let source_len = ((max_len - 1).div_ceil(lmin) + 1).min(max_len);
        if source_len > MAX_SOURCE_LEN {
            return Err(Error::WindowTooLong(source_len, MAX_SOURCE_LEN));
        }
        let too_many = |n: usize| Error::CapExceeded {
            needed: n as u128,
            cap,
        };
        let mut seen: HashSet<Word> = HashSet::new();
        let mut frontier: Vec<Word> = Vec::new();
        for w in seed_words(subst, max_len)? {
            for win in w.windows(max_len) {
                if seen.insert(win.to_vec()) {
                    frontier.push(win.to_vec());
                }
            }
        }
        let mut sources: HashSet<Word> = HashSet::new();
        let work_limit = cap.saturating_mul(WORK_PER_WORD);
        let mut work = 0usize;
        let mut iterations = 0;
        while !frontier.is_empty() {
            iterations += 1;
            let mut next = Vec::new();
            for w in &frontier {
                for v in w.windows(source_len) {
                    if !sources.insert(v.to_vec()) {
                        continue;
                    }
                    let images = image_windows(subst, v, max_len, cap)?;
                    work = work.saturating_add(images.len());
                    if work > work_limit {
                        return Err(too_many(seen.len()));
                    }
                    for u in images {
                        if seen.insert(u.clone()) {
                            next.push(u);
                            if seen.len() > cap {
                                return Err(too_many(seen.len()));
                            }
                        }
                    }
                }
            }
            frontier = next;
        }
        let mut by_len: Vec<BTreeSet<Word>> = vec![BTreeSet::new(); max_len];
        for w in &seen {
            for n in 1..max_len {
                for win in w.windows(n) {
                    by_len[n - 1].insert(win.to_vec());
                }
            }
        }
        by_len[max_len - 1] = seen.into_iter().collect();
        Ok(Language {
            by_len: by_len
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
            iterations,
        })
    }

    pub fn max_len(&self) -> usize {
        self.by_len.len()
    }

    /// `L^n` for `1 ≤ n ≤ max_len`.
    pub fn words(&self, n: usize) -> &[Word] {
        &self.by_len[n - 1]
    }

    pub fn contains(&self, u: &[Letter]) -> bool {
        !u.is_empty()
            && u.len() <= self.max_len()
            && self.by_len[u.len() - 1]
                .binary_search_by(|w| w.as_slice().cmp(u))
                .is_ok()
    }

    pub fn legal(&self, n: usize) -> LegalLanguage {
        LegalLanguage {
            n,
            words: self.words(n).to_vec(),
            iterations: self.iterations,
        }
    }
}

/// First realisations of `ϑ^k(a)`, one per letter, for the least `k` at which every word has
/// length at least `n` and together they contain every letter.
fn seed_words(subst: &RandomSubstitution, n: usize) -> Result<Vec<Word>> {
    let mut words: Vec<Word> = subst.letters().map(|a| vec![a]).collect();
    for _ in 0..MAX_SEED_LEVEL {
        let mut present = vec![false; subst.alphabet_size()];
        for w in &words {
            for &a in w {
                present[a as usize] = true;
            }
        }
        if present.iter().all(|&p| p) && words.iter().all(|w| w.len() >= n) {
            return Ok(words);
        }
        words = words
            .iter()
            .map(|w| {
                w.iter()
                    .flat_map(|&a| subst.realisations(a)[0].word.iter().copied())
                    .collect()
            })
            .collect();
    }
    Err(Error::Domain(
        "seed words do not grow to the requested length",
    ))
}

const MAX_SEED_LEVEL: usize = 64;

/// All distinct length-`n` subwords of all realisations of `ϑ(v)`.
///
/// Realisations are explored letter by letter, keeping only the last `n − 1` letters of each
/// partial image, which is all that later subwords can depend on.
fn image_windows(
    subst: &RandomSubstitution,
    v: &[Letter],
    n: usize,
    cap: usize,
) -> Result<HashSet<Word>> {
    let keep = n - 1;
    let mut out: HashSet<Word> = HashSet::new();
    let mut states: HashSet<Word> = HashSet::from([Vec::new()]);
    for &a in v {
        let mut next: HashSet<Word> = HashSet::new();
        for tail in &states {
            for r in subst.realisations(a) {
                let mut s = tail.clone();
                s.extend_from_slice(&r.word);
                for end in (tail.len() + 1).max(n)..=s.len() {
                    out.insert(s[end - n..end].to_vec());
                }
                let cut = s.len().saturating_sub(keep);
                next.insert(s[cut..].to_vec());
            }
            if out.len().max(next.len()) > cap {
                return Err(Error::CapExceeded {
                    needed: out.len().max(next.len()) as u128,
                    cap,
                });
            }
        }
        states = next;
    }
    Ok(out)
}

/// `L^n`.
pub fn legal_words(subst: &RandomSubstitution, n: usize) -> Result<LegalLanguage> {
    Ok(Language::generate(subst, n)?.legal(n))
}

/// Whether `u` is legal.
pub fn is_legal(subst: &RandomSubstitution, u: &[Letter]) -> Result<bool> {
    if u.is_empty() {
        return Ok(false);
    }
    Ok(legal_words(subst, u.len())?.contains(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogue;
    use crate::distribution::{iterate_distribution, DEFAULT_CAP};
    use proptest::prelude::*;

    /// Subwords of length `n` of every realisation of `ϑ^k(a)`, `k ≤ depth`.
    fn brute_force(subst: &RandomSubstitution, n: usize, depth: usize) -> BTreeSet<Word> {
        let mut out = BTreeSet::new();
        for a in subst.letters() {
            for k in 1..=depth {
                let d = iterate_distribution(subst, a, k, DEFAULT_CAP).unwrap();
                for w in d.words() {
                    for win in w.windows(n) {
                        out.insert(win.to_vec());
                    }
                }
            }
        }
        out
    }

    #[test]
    fn fibonacci_pairs() {
        // The random version reaches bb through ϑ(aa) ∋ ab·ba; the deterministic one never does.
        let random = legal_words(&catalogue::random_fibonacci(0.5), 2).unwrap();
        assert_eq!(
            random.words,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        let det = legal_words(&catalogue::deterministic_fibonacci(), 2).unwrap();
        assert_eq!(det.words, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        let fib = catalogue::deterministic_fibonacci();
        assert!(!is_legal(&fib, &[1, 1]).unwrap());
        assert!(is_legal(&fib, &[0, 1]).unwrap());
        assert!(is_legal(&fib, &[1]).unwrap());
    }

    #[test]
    fn full_shift_pairs() {
        let l = legal_words(&catalogue::full_shift(0.1, 0.3), 2).unwrap();
        assert_eq!(l.len(), 4);
        let l8 = legal_words(&catalogue::full_shift(0.1, 0.3), 8).unwrap();
        assert_eq!(l8.len(), 256);
    }

    #[test]
    fn letters_are_legal() {
        for name in catalogue::NAMES {
            let s = catalogue::by_name(name).unwrap();
            assert_eq!(
                legal_words(&s, 1).unwrap().len(),
                s.alphabet_size(),
                "{name}"
            );
        }
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let cases = [
            (catalogue::random_fibonacci(0.5), 6, 7),
            (catalogue::deterministic_fibonacci(), 7, 9),
            (catalogue::period_doubling(0.5), 6, 5),
            (catalogue::recognisable(0.3), 6, 4),
        ];
        for (subst, n, depth) in cases {
            let generated: BTreeSet<Word> =
                legal_words(&subst, n).unwrap().words.into_iter().collect();
            let brute = brute_force(&subst, n, depth);
            assert_eq!(generated, brute);
        }
    }

    #[test]
    fn language_properties() {
        let subst = catalogue::period_doubling(0.5);
        let lang = Language::generate(&subst, 10).unwrap();
        let mut prev = 0;
        for n in 1..=10 {
            let words = lang.words(n);
            assert!(words.len() >= prev);
            prev = words.len();
            for w in words {
                if n > 1 {
                    assert!(lang.contains(&w[1..]) && lang.contains(&w[..n - 1]));
                }
            }
            if n < 10 {
                let longer = lang.words(n + 1);
                for w in words {
                    assert!(longer.iter().any(|x| &x[1..] == w.as_slice()));
                    assert!(longer.iter().any(|x| &x[..n] == w.as_slice()));
                }
            }
        }
    }

    #[test]
    fn growth_rate_decreases_towards_entropy() {
        // Word complexity converges slowly: at n = 14 the rate is still about 26% above htop.
        let lang = Language::generate(&catalogue::period_doubling(0.5), 16).unwrap();
        let htop = 2.0 / 3.0 * 2f64.ln();
        let rates: Vec<f64> = (4..=16)
            .map(|n| (lang.words(n).len() as f64).ln() / n as f64)
            .collect();
        assert!(rates.windows(2).all(|w| w[1] < w[0]));
        assert!(rates.iter().all(|&r| r > htop));
        assert!((rates[10] - htop) / htop < 0.3, "rate {}", rates[10]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn factorial_and_extendable(n in 2usize..8, which in 0usize..4) {
            let subst = [
                catalogue::random_fibonacci(0.5),
                catalogue::recognisable(0.5),
                catalogue::three_letter(0.5, 0.5, 0.5),
                catalogue::identical_images(0.5),
            ][which].clone();
            let lang = Language::generate(&subst, n + 1).unwrap();
            for w in lang.words(n) {
                prop_assert!(lang.contains(&w[1..]));
                prop_assert!(lang.contains(&w[..n - 1]));
                prop_assert!(lang.words(n + 1).iter().any(|x| &x[1..] == w.as_slice()));
                prop_assert!(lang.words(n + 1).iter().any(|x| &x[..n] == w.as_slice()));
            }
        }
    }
}
