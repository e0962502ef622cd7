//! Letters, words and abelianisation.

use std::ops::Add;

/// Index into the alphabet, `0..d`.
pub type Letter = u8;

/// A finite word over letter indices.
pub type Word = Vec<Letter>;

/// Largest supported alphabet.
pub const MAX_ALPHABET: usize = 255;

/// Letter-count vector `Φ(u)`: entry `a` is the number of occurrences of `a` in `u`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountVector(pub Vec<u64>);

impl CountVector {
    pub fn zeros(d: usize) -> Self {
        CountVector(vec![0; d])
    }

    /// Sum of the entries, equal to `|u|` for `Φ(u)`.
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn get(&self, a: Letter) -> u64 {
        self.0[a as usize]
    }
}

impl Add for &CountVector {
    type Output = CountVector;

    fn add(self, rhs: &CountVector) -> CountVector {
        assert_eq!(self.0.len(), rhs.0.len(), "alphabet size mismatch");
        CountVector(self.0.iter().zip(&rhs.0).map(|(x, y)| x + y).collect())
    }
}

/// Abelianisation of `u` over an alphabet of size `d`.
pub fn abelianise(u: &[Letter], d: usize) -> CountVector {
    let mut counts = CountVector::zeros(d);
    for &a in u {
        counts.0[a as usize] += 1;
    }
    counts
}

/// Occurrences of `pattern` in `text`, overlaps included.
pub fn count_occurrences(text: &[Letter], pattern: &[Letter]) -> usize {
    if pattern.is_empty() || pattern.len() > text.len() {
        return 0;
    }
    text.windows(pattern.len())
        .filter(|w| *w == pattern)
        .count()
}

/// Index of `u` in the lexicographic enumeration of `A^{|u|}` (base-`d` digits).
pub fn word_index(u: &[Letter], d: usize) -> usize {
    u.iter().fold(0usize, |acc, &a| acc * d + a as usize)
}

/// Inverse of [`word_index`].
pub fn word_from_index(mut index: usize, d: usize, n: usize) -> Word {
    let mut u = vec![0; n];
    for slot in u.iter_mut().rev() {
        *slot = (index % d) as Letter;
        index /= d;
    }
    u
}
