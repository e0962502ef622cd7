//! The random substitution `ϑ_P`: per-letter realisations with production probabilities.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::word::{abelianise, Letter, Word, MAX_ALPHABET};

/// Tolerance on `Σ_j p_{i,j} = 1`.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// One possible image of a letter together with its production probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Realisation {
    pub word: Word,
    pub prob: f64,
}

/// A single broken invariant of a [`RandomSubstitution`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyAlphabet,
    AlphabetTooLarge(usize),
    DuplicateLetterName(char),
    RuleCountMismatch {
        letters: usize,
        rules: usize,
    },
    NoRealisations {
        letter: char,
    },
    ProbabilitySum {
        letter: char,
        sum: f64,
    },
    ProbabilityOutOfRange {
        letter: char,
        word: String,
        prob: f64,
    },
    EmptyImage {
        letter: char,
    },
    DuplicateRealisation {
        letter: char,
        word: String,
    },
    LetterOutOfRange {
        letter: char,
        index: Letter,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyAlphabet => write!(f, "empty alphabet"),
            Violation::AlphabetTooLarge(d) => {
                write!(f, "alphabet of {d} letters exceeds {MAX_ALPHABET}")
            }
            Violation::DuplicateLetterName(c) => write!(f, "letter name {c:?} declared twice"),
            Violation::RuleCountMismatch { letters, rules } => {
                write!(f, "{letters} letters but {rules} rule lists")
            }
            Violation::NoRealisations { letter } => {
                write!(f, "letter {letter:?} has no realisations")
            }
            Violation::ProbabilitySum { letter, sum } => {
                write!(f, "letter {letter:?}: probabilities sum to {sum}")
            }
            Violation::ProbabilityOutOfRange { letter, word, prob } => {
                write!(
                    f,
                    "letter {letter:?}: probability {prob} of {word:?} is outside (0, 1]"
                )
            }
            Violation::EmptyImage { letter } => write!(f, "letter {letter:?}: empty image word"),
            Violation::DuplicateRealisation { letter, word } => {
                write!(f, "letter {letter:?}: realisation {word:?} listed twice")
            }
            Violation::LetterOutOfRange { letter, index } => {
                write!(
                    f,
                    "letter {letter:?}: image uses undeclared letter index {index}"
                )
            }
        }
    }
}

/// Result of [`RandomSubstitution::validate`]; empty iff all invariants hold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A random substitution over the alphabet `names[0..d]`.
///
/// `rules[a]` lists the realisations of letter `a`. Values built with [`RandomSubstitution::new`]
/// always satisfy the invariants checked by [`RandomSubstitution::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSubstitution {
    names: Vec<char>,
    rules: Vec<Vec<Realisation>>,
}

impl RandomSubstitution {
    /// Builds and validates.
    pub fn new(names: Vec<char>, rules: Vec<Vec<Realisation>>) -> Result<Self> {
        let s = Self::new_unchecked(names, rules);
        let report = s.validate();
        if report.is_valid() {
            Ok(s)
        } else {
            Err(Error::Invalid(report))
        }
    }

    /// Builds without validation, for inspecting malformed input with [`Self::validate`].
    pub fn new_unchecked(names: Vec<char>, rules: Vec<Vec<Realisation>>) -> Self {
        RandomSubstitution { names, rules }
    }

    /// Convenience constructor from letter names and `(word, prob)` lists.
    ///
    /// ```
    /// use subst_spectra::RandomSubstitution;
    /// let fib = RandomSubstitution::from_rules(&[
    ///     ('a', &[("ab", 0.5), ("ba", 0.5)]),
    ///     ('b', &[("a", 1.0)]),
    /// ]).unwrap();
    /// assert_eq!(fib.alphabet_size(), 2);
    /// ```
    pub fn from_rules(rules: &[(char, &[(&str, f64)])]) -> Result<Self> {
        let s = Self::from_rules_unchecked(rules)?;
        Self::new(s.names, s.rules)
    }

    /// As [`Self::from_rules`] but only fails on undeclared letters.
    pub fn from_rules_unchecked(rules: &[(char, &[(&str, f64)])]) -> Result<Self> {
        let names: Vec<char> = rules.iter().map(|(c, _)| *c).collect();
        let mut out = Vec::with_capacity(rules.len());
        for (_, list) in rules {
            let mut row = Vec::with_capacity(list.len());
            for (word, prob) in list.iter() {
                row.push(Realisation {
                    word: parse_with(&names, word)?,
                    prob: *prob,
                });
            }
            out.push(row);
        }
        Ok(Self::new_unchecked(names, out))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let d = self.names.len();
        if d == 0 {
            violations.push(Violation::EmptyAlphabet);
        }
        if d > MAX_ALPHABET {
            violations.push(Violation::AlphabetTooLarge(d));
        }
        for (i, c) in self.names.iter().enumerate() {
            if self.names[..i].contains(c) {
                violations.push(Violation::DuplicateLetterName(*c));
            }
        }
        if self.rules.len() != d {
            violations.push(Violation::RuleCountMismatch {
                letters: d,
                rules: self.rules.len(),
            });
        }
        for (i, row) in self.rules.iter().enumerate() {
            let letter = self.names.get(i).copied().unwrap_or('?');
            if row.is_empty() {
                violations.push(Violation::NoRealisations { letter });
                continue;
            }
            let sum: f64 = row.iter().map(|r| r.prob).sum();
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                violations.push(Violation::ProbabilitySum { letter, sum });
            }
            for (j, r) in row.iter().enumerate() {
                if !(r.prob > 0.0 && r.prob <= 1.0) {
                    violations.push(Violation::ProbabilityOutOfRange {
                        letter,
                        word: self.render_lossy(&r.word),
                        prob: r.prob,
                    });
                }
                if r.word.is_empty() {
                    violations.push(Violation::EmptyImage { letter });
                }
                if let Some(&bad) = r.word.iter().find(|&&x| x as usize >= d) {
                    violations.push(Violation::LetterOutOfRange { letter, index: bad });
                }
                if row[..j].iter().any(|o| o.word == r.word) {
                    violations.push(Violation::DuplicateRealisation {
                        letter,
                        word: self.render_lossy(&r.word),
                    });
                }
            }
        }
        ValidationReport { violations }
    }

    pub fn alphabet_size(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[char] {
        &self.names
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> {
        (0..self.names.len()).map(|a| a as Letter)
    }

    pub fn realisations(&self, a: Letter) -> &[Realisation] {
        &self.rules[a as usize]
    }

    pub fn rules(&self) -> &[Vec<Realisation>] {
        &self.rules
    }

    pub fn is_deterministic(&self) -> bool {
        self.rules.iter().all(|r| r.len() == 1)
    }

    /// Number of realisations `r_a = #ϑ(a)`.
    pub fn realisation_count(&self, a: Letter) -> usize {
        self.rules[a as usize].len()
    }

    /// Shortest realisation over all letters.
    pub fn min_image_len(&self) -> usize {
        self.rules
            .iter()
            .flatten()
            .map(|r| r.word.len())
            .min()
            .unwrap_or(0)
    }

    pub fn max_image_len(&self) -> usize {
        self.rules
            .iter()
            .flatten()
            .map(|r| r.word.len())
            .max()
            .unwrap_or(0)
    }

    /// Common image length of `a`, if all its realisations share a length.
    pub fn image_len(&self, a: Letter) -> Option<usize> {
        let row = &self.rules[a as usize];
        let len = row.first()?.word.len();
        row.iter().all(|r| r.word.len() == len).then_some(len)
    }

    /// Whether every letter's realisations share a length (cutting points are well defined).
    pub fn is_length_compatible(&self) -> bool {
        self.letters().all(|a| self.image_len(a).is_some())
    }

    pub fn parse_word(&self, s: &str) -> Result<Word> {
        parse_with(&self.names, s)
    }

    pub fn render(&self, u: &[Letter]) -> String {
        u.iter().map(|&a| self.names[a as usize]).collect()
    }

    fn render_lossy(&self, u: &[Letter]) -> String {
        u.iter()
            .map(|&a| self.names.get(a as usize).copied().unwrap_or('?'))
            .collect()
    }

    /// `M_{i,j} = Σ_k p_{j,k} |s^(j,k)|_{a_i}`.
    pub fn substitution_matrix(&self) -> Matrix {
        let d = self.alphabet_size();
        let mut m = Matrix::zeros(d);
        for (j, row) in self.rules.iter().enumerate() {
            for r in row {
                let counts = abelianise(&r.word, d);
                for i in 0..d {
                    m[(i, j)] += r.prob * counts.0[i] as f64;
                }
            }
        }
        m
    }

    /// Same set-valued substitution with new probabilities, `probs[a][j]` for realisation `j` of `a`.
    pub fn with_probabilities(&self, probs: &[Vec<f64>]) -> Result<Self> {
        if probs.len() != self.rules.len()
            || probs
                .iter()
                .zip(&self.rules)
                .any(|(p, r)| p.len() != r.len())
        {
            return Err(Error::Domain("probability table does not match the rules"));
        }
        let rules = self
            .rules
            .iter()
            .zip(probs)
            .map(|(row, p)| {
                row.iter()
                    .zip(p)
                    .map(|(r, &prob)| Realisation {
                        word: r.word.clone(),
                        prob,
                    })
                    .collect()
            })
            .collect();
        Self::new(self.names.clone(), rules)
    }

    /// One realisation of `ϑ_P(u)`, deterministic for a fixed seed.
    pub fn sample_realisation(&self, u: &[Letter], seed: u64) -> Word {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        self.sample_into(u, &mut rng, &mut out);
        out
    }

    /// Appends one realisation of `ϑ_P(u)` to `out`, choosing each letter's image independently.
    pub fn sample_into<R: Rng + ?Sized>(&self, u: &[Letter], rng: &mut R, out: &mut Word) {
        for &a in u {
            out.extend_from_slice(&self.choose(a, rng).word);
        }
    }

    /// Draws a realisation of a single letter.
    pub fn choose<R: Rng + ?Sized>(&self, a: Letter, rng: &mut R) -> &Realisation {
        let row = &self.rules[a as usize];
        if row.len() == 1 {
            return &row[0];
        }
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        for r in row {
            acc += r.prob;
            if x < acc {
                return r;
            }
        }
        row.last().expect("validated rules are nonempty")
    }

    /// Probability of the specific realisation `w` of `ϑ_P(a)`, zero if absent.
    pub fn production_probability(&self, a: Letter, w: &[Letter]) -> f64 {
        self.rules[a as usize]
            .iter()
            .find(|r| r.word == w)
            .map_or(0.0, |r| r.prob)
    }
}

fn parse_with(names: &[char], s: &str) -> Result<Word> {
    s.chars()
        .map(|c| {
            names
                .iter()
                .position(|&n| n == c)
                .map(|i| i as Letter)
                .ok_or(Error::UnknownLetter(c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogue;

    #[test]
    fn random_fibonacci_is_valid() {
        assert!(catalogue::random_fibonacci(0.5).validate().is_valid());
    }

    #[test]
    fn probability_sum_violation() {
        let s = RandomSubstitution::from_rules_unchecked(&[
            ('a', &[("ab", 0.6), ("ba", 0.5)]),
            ('b', &[("a", 1.0)]),
        ])
        .unwrap();
        let report = s.validate();
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::ProbabilitySum { letter: 'a', sum } => assert!((sum - 1.1).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(report.to_string().contains("probabilities sum to 1.1"));
    }

    #[test]
    fn empty_image_violation() {
        let s =
            RandomSubstitution::from_rules_unchecked(&[('a', &[("ab", 1.0)]), ('b', &[("", 1.0)])])
                .unwrap();
        let report = s.validate();
        assert_eq!(
            report.violations,
            vec![Violation::EmptyImage { letter: 'b' }]
        );
        assert!(report.to_string().contains("empty image word"));
    }

    #[test]
    fn duplicate_realisation_violation() {
        let s = RandomSubstitution::from_rules_unchecked(&[
            ('a', &[("ab", 0.5), ("ab", 0.5)]),
            ('b', &[("a", 1.0)]),
        ])
        .unwrap();
        assert!(matches!(
            s.validate().violations.as_slice(),
            [Violation::DuplicateRealisation { letter: 'a', .. }]
        ));
    }

    #[test]
    fn unknown_letter_rejected() {
        let err = RandomSubstitution::from_rules(&[('a', &[("ac", 1.0)])]).unwrap_err();
        assert_eq!(err, Error::UnknownLetter('c'));
    }

    #[test]
    fn substitution_matrices() {
        let fib = catalogue::random_fibonacci(0.5);
        assert_eq!(
            fib.substitution_matrix().rows(),
            vec![vec![1.0, 1.0], vec![1.0, 0.0]]
        );

        let doubling = RandomSubstitution::from_rules(&[('a', &[("aa", 1.0)])]).unwrap();
        assert_eq!(doubling.substitution_matrix().rows(), vec![vec![2.0]]);

        let recog = catalogue::recognisable(0.3);
        let m = recog.substitution_matrix();
        assert!(m.max_abs_diff(&Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 0.0]])) < 1e-15);
    }

    #[test]
    fn sampling_deterministic_cases() {
        let det = catalogue::deterministic_fibonacci();
        for seed in 0..5 {
            assert_eq!(
                det.sample_realisation(&[0, 1, 0], seed),
                vec![0, 1, 0, 0, 1]
            );
        }
        let fib = catalogue::random_fibonacci(0.5);
        assert_eq!(fib.sample_realisation(&[1], 7), vec![0]);
        assert_eq!(
            fib.sample_realisation(&[0, 0, 1], 11),
            fib.sample_realisation(&[0, 0, 1], 11)
        );
    }

    #[test]
    fn sampling_frequency_concentrates() {
        // Binomial(10^5, 1/2): standard deviation of the fraction is ~0.0016.
        let fib = catalogue::random_fibonacci(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| fib.choose(0, &mut rng).word == [0, 1])
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "fraction {frac}");
    }
}
