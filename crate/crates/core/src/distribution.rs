//! Exact distributions of `ϑ_P^k(u)` with path aggregation, stored in log space.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::substitution::{RandomSubstitution, Realisation};
use crate::word::{Letter, Word};

/// Default bound on the number of distinct words in a single distribution.
pub const DEFAULT_CAP: usize = 4_000_000;

/// `log Σ exp(x_i)`, `-∞` for an empty iterator.
pub fn logsumexp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Finite distribution over words; weights are natural-log probabilities, entries sorted by word.
#[derive(Debug, Clone, PartialEq)]
pub struct WordDistribution {
    entries: Vec<(Word, f64)>,
}

impl WordDistribution {
    /// Point mass at `w`.
    pub fn point(w: Word) -> Self {
        WordDistribution {
            entries: vec![(w, 0.0)],
        }
    }

    /// Builds from `(word, log p)` pairs, aggregating repeated words.
    pub fn from_log_entries<I: IntoIterator<Item = (Word, f64)>>(items: I) -> Self {
        let mut acc: HashMap<Word, f64> = HashMap::new();
        for (w, lp) in items {
            acc.entry(w)
                .and_modify(|x| *x = log_add_exp(*x, lp))
                .or_insert(lp);
        }
        Self::from_map(acc)
    }

    fn from_map(map: HashMap<Word, f64>) -> Self {
        let mut entries: Vec<(Word, f64)> = map.into_iter().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        WordDistribution { entries }
    }

    /// Rule distribution of a single letter.
    pub fn of_rules(rules: &[Realisation]) -> Self {
        Self::from_log_entries(rules.iter().map(|r| (r.word.clone(), r.prob.ln())))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Word, f64)> + '_ {
        self.entries.iter().map(|(w, lp)| (w, *lp))
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> + '_ {
        self.entries.iter().map(|(w, _)| w)
    }

    pub fn log_probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, lp)| *lp)
    }

    pub fn log_prob(&self, w: &[Letter]) -> Option<f64> {
        self.entries
            .binary_search_by(|(x, _)| x.as_slice().cmp(w))
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Probability of `w`, zero outside the support.
    pub fn prob(&self, w: &[Letter]) -> f64 {
        self.log_prob(w).map_or(0.0, f64::exp)
    }

    pub fn contains(&self, w: &[Letter]) -> bool {
        self.log_prob(w).is_some()
    }

    /// `log Σ P`, zero for a normalised distribution.
    pub fn log_total(&self) -> f64 {
        logsumexp(self.log_probs())
    }

    /// `log Σ_s P(s)^q`.
    pub fn log_sum_pow(&self, q: f64) -> f64 {
        if q == 0.0 {
            return (self.len() as f64).ln();
        }
        logsumexp(self.log_probs().map(|lp| q * lp))
    }

    /// Shannon entropy `−Σ P log P`.
    pub fn entropy(&self) -> f64 {
        self.log_probs().map(|lp| -lp.exp() * lp).sum()
    }

    /// `Σ_v −Q(v) log P(v)` with `self = P`; `+∞` if `Q` charges a word outside the support of `P`.
    pub fn cross_entropy(&self, q: &WordDistribution) -> f64 {
        let mut total = 0.0;
        for (w, lq) in q.iter() {
            match self.log_prob(w) {
                Some(lp) => total -= lq.exp() * lp,
                None => return f64::INFINITY,
            }
        }
        total
    }

    /// Maximum and minimum log-probabilities.
    pub fn log_prob_range(&self) -> (f64, f64) {
        self.log_probs()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), x| {
                (hi.max(x), lo.min(x))
            })
    }

    /// Whether both distributions have the same support.
    pub fn same_support(&self, other: &WordDistribution) -> bool {
        self.len() == other.len() && self.words().eq(other.words())
    }

    /// A word in both supports, if any.
    pub fn common_word<'a>(&'a self, other: &'a WordDistribution) -> Option<&'a Word> {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.words().find(|w| large.contains(w))
    }

    /// Largest per-word absolute probability difference, over the union of supports.
    pub fn max_prob_diff(&self, other: &WordDistribution) -> f64 {
        let a = self.words().map(|w| (self.prob(w) - other.prob(w)).abs());
        let b = other.words().map(|w| (self.prob(w) - other.prob(w)).abs());
        a.chain(b).fold(0.0, f64::max)
    }

    /// Distribution of the concatenation of independent draws from `self` and `other`.
    pub fn concat(&self, other: &WordDistribution, cap: usize) -> Result<WordDistribution> {
        let mut acc: HashMap<Word, f64> =
            HashMap::with_capacity(self.len().saturating_mul(other.len()).min(cap));
        for (u, lu) in self.iter() {
            for (v, lv) in other.iter() {
                let mut w = Vec::with_capacity(u.len() + v.len());
                w.extend_from_slice(u);
                w.extend_from_slice(v);
                insert_capped(&mut acc, w, lu + lv, cap)?;
            }
        }
        Ok(Self::from_map(acc))
    }

    /// Mixture `Σ_i weight_i · dist_i` with log weights.
    fn mixture(parts: Vec<(f64, WordDistribution)>, cap: usize) -> Result<WordDistribution> {
        if parts.len() == 1 && parts[0].0 == 0.0 {
            return Ok(parts.into_iter().next().expect("one part").1);
        }
        let mut acc: HashMap<Word, f64> = HashMap::new();
        for (lw, d) in parts {
            for (w, lp) in d.entries {
                insert_capped(&mut acc, w, lw + lp, cap)?;
            }
        }
        Ok(Self::from_map(acc))
    }
}

fn insert_capped(acc: &mut HashMap<Word, f64>, w: Word, lp: f64, cap: usize) -> Result<()> {
    if let Some(x) = acc.get_mut(&w) {
        *x = log_add_exp(*x, lp);
        return Ok(());
    }
    if acc.len() >= cap {
        return Err(Error::CapExceeded {
            needed: acc.len() as u128 + 1,
            cap,
        });
    }
    acc.insert(w, lp);
    Ok(())
}

/// Distribution of the concatenation of independent draws `dists[u_0] ⋯ dists[u_{n−1}]`.
pub fn product_over(
    dists: &[WordDistribution],
    u: &[Letter],
    cap: usize,
) -> Result<WordDistribution> {
    let mut iter = u.iter();
    let first = iter.next().ok_or(Error::Domain("empty source word"))?;
    let mut out = dists[*first as usize].clone();
    for &a in iter {
        out = out.concat(&dists[a as usize], cap)?;
    }
    Ok(out)
}

/// Distribution of `ϑ_P(u)`.
pub fn apply_distribution(
    subst: &RandomSubstitution,
    u: &[Letter],
    cap: usize,
) -> Result<WordDistribution> {
    let level1: Vec<WordDistribution> = subst
        .rules()
        .iter()
        .map(|r| WordDistribution::of_rules(r))
        .collect();
    product_over(&level1, u, cap)
}

/// Distribution of `ϑ_P^k(a)`, aggregated over derivation paths.
pub fn iterate_distribution(
    subst: &RandomSubstitution,
    a: Letter,
    k: usize,
    cap: usize,
) -> Result<WordDistribution> {
    if k == 0 {
        return Err(Error::Domain("iteration depth must be at least 1"));
    }
    let levels = InflationLevels::build(subst, k, cap)?;
    Ok(levels.level(k, a).clone())
}

/// `ϑ_P^j(a)` for every letter `a` and `j = 1..=k_max`.
///
/// Level `j` is assembled as `Σ_s P[ϑ(a)=s] · ϑ^{j−1}(s_1) ⋯ ϑ^{j−1}(s_n)`, reusing level `j−1`.
#[derive(Debug, Clone)]
pub struct InflationLevels {
    levels: Vec<Vec<WordDistribution>>,
}

impl InflationLevels {
    pub fn build(subst: &RandomSubstitution, k_max: usize, cap: usize) -> Result<Self> {
        let mut levels: Vec<Vec<WordDistribution>> = Vec::with_capacity(k_max);
        if k_max == 0 {
            return Ok(InflationLevels { levels });
        }
        levels.push(
            subst
                .rules()
                .iter()
                .map(|r| WordDistribution::of_rules(r))
                .collect(),
        );
        for _ in 1..k_max {
            let prev = levels.last().expect("level 1 present");
            let mut next = Vec::with_capacity(subst.alphabet_size());
            for a in subst.letters() {
                let parts = subst
                    .realisations(a)
                    .iter()
                    .map(|r| Ok((r.prob.ln(), product_over(prev, &r.word, cap)?)))
                    .collect::<Result<Vec<_>>>()?;
                next.push(WordDistribution::mixture(parts, cap)?);
            }
            levels.push(next);
        }
        Ok(InflationLevels { levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `ϑ_P^k(a)` for `1 ≤ k ≤ depth`.
    pub fn level(&self, k: usize, a: Letter) -> &WordDistribution {
        &self.levels[k - 1][a as usize]
    }

    pub fn letters_at(&self, k: usize) -> &[WordDistribution] {
        &self.levels[k - 1]
    }

    /// `ϑ_P^k(u)` for a word `u`.
    pub fn of_word(&self, k: usize, u: &[Letter], cap: usize) -> Result<WordDistribution> {
        product_over(&self.levels[k - 1], u, cap)
    }
}

/// `ϑ_P^k` as a random substitution in its own right.
pub fn power_substitution(
    subst: &RandomSubstitution,
    k: usize,
    cap: usize,
) -> Result<RandomSubstitution> {
    if k == 0 {
        return Err(Error::Domain("power must be at least 1"));
    }
    let levels = InflationLevels::build(subst, k, cap)?;
    let rules = subst
        .letters()
        .map(|a| {
            let d = levels.level(k, a);
            let mut row: Vec<Realisation> = d
                .iter()
                .map(|(w, lp)| Realisation {
                    word: w.clone(),
                    prob: lp.exp(),
                })
                .collect();
            // Absorb rounding so the row passes the sum check.
            let sum: f64 = row.iter().map(|r| r.prob).sum();
            for r in &mut row {
                r.prob /= sum;
            }
            row
        })
        .collect();
    RandomSubstitution::new(subst.names().to_vec(), rules)
}
