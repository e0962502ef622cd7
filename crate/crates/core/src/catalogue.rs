//! Named random substitutions used throughout the tests and the CLI.

use crate::substitution::RandomSubstitution;

fn build(rules: &[(char, &[(&str, f64)])]) -> RandomSubstitution {
    RandomSubstitution::from_rules(rules).expect("catalogue entries are valid")
}

/// `a → ab (p) | ba (1−p)`, `b → a`.
pub fn random_fibonacci(p: f64) -> RandomSubstitution {
    build(&[('a', &[("ab", p), ("ba", 1.0 - p)]), ('b', &[("a", 1.0)])])
}

/// `a → ab`, `b → a`.
pub fn deterministic_fibonacci() -> RandomSubstitution {
    build(&[('a', &[("ab", 1.0)]), ('b', &[("a", 1.0)])])
}

/// `a → ab (p) | ba (1−p)`, `b → aa`.
pub fn period_doubling(p: f64) -> RandomSubstitution {
    build(&[('a', &[("ab", p), ("ba", 1.0 - p)]), ('b', &[("aa", 1.0)])])
}

/// `a → abb (p) | bab (1−p)`, `b → aa`; recognisable, `λ = (1+√17)/2`.
pub fn recognisable(p: f64) -> RandomSubstitution {
    build(&[
        ('a', &[("abb", p), ("bab", 1.0 - p)]),
        ('b', &[("aa", 1.0)]),
    ])
}

/// `a → abb (p) | bab (p) | bba (1−2p)`, `b → aaa`; recognisable, `λ = 3`.
pub fn three_realisations(p: f64) -> RandomSubstitution {
    build(&[
        ('a', &[("abb", p), ("bab", p), ("bba", 1.0 - 2.0 * p)]),
        ('b', &[("aaa", 1.0)]),
    ])
}

/// `a, b → ab (p) | ba (1−p)`; identical set condition with identical production probabilities.
pub fn identical_images(p: f64) -> RandomSubstitution {
    let row: &[(&str, f64)] = &[("ab", p), ("ba", 1.0 - p)];
    build(&[('a', row), ('b', row)])
}

/// Constant-length recognisable substitution on `{a, b, c}` with `λ = 3`.
pub fn three_letter(p1: f64, p2: f64, p3: f64) -> RandomSubstitution {
    build(&[
        ('a', &[("bbc", p1), ("cbb", 1.0 - p1)]),
        ('b', &[("cca", p2), ("acc", 1.0 - p2)]),
        ('c', &[("aab", p3), ("baa", 1.0 - p3)]),
    ])
}

/// `a, b → ab (p1) | ba (p2) | aa (p2) | bb (p2)` with `p1 + 3 p2 = 1`; generates the full shift.
pub fn full_shift(p1: f64, p2: f64) -> RandomSubstitution {
    let row: &[(&str, f64)] = &[("ab", p1), ("ba", p2), ("aa", p2), ("bb", p2)];
    build(&[('a', row), ('b', row)])
}

/// `a, b → abba (p1) | baab (p2) | abab (p2) | baba (p2)` with `p1 + 3 p2 = 1`.
pub fn block_full_shift(p1: f64, p2: f64) -> RandomSubstitution {
    let row: &[(&str, f64)] = &[("abba", p1), ("baab", p2), ("abab", p2), ("baba", p2)];
    build(&[('a', row), ('b', row)])
}

/// Looks up a catalogue entry by name with its default parameters.
pub fn by_name(name: &str) -> Option<RandomSubstitution> {
    Some(match name {
        "random-fibonacci" => random_fibonacci(0.5),
        "fibonacci" => deterministic_fibonacci(),
        "period-doubling" => period_doubling(0.5),
        "recognisable" => recognisable(0.2),
        "three-realisations" => three_realisations(0.2),
        "identical-images" => identical_images(0.5),
        "three-letter" => three_letter(0.5, 0.5, 0.5),
        "full-shift" => full_shift(0.1, 0.3),
        "block-full-shift" => block_full_shift(0.1, 0.3),
        _ => return None,
    })
}

/// Names accepted by [`by_name`].
pub const NAMES: &[&str] = &[
    "random-fibonacci",
    "fibonacci",
    "period-doubling",
    "recognisable",
    "three-realisations",
    "identical-images",
    "three-letter",
    "full-shift",
    "block-full-shift",
];
