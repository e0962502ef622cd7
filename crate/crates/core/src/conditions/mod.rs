//! Structural conditions: compatibility, disjoint and identical set conditions, identical
//! production probabilities and recognisability.

mod recognise;

pub use recognise::{
    find_recognisability_radius, recognisable_core, CentreAnswer, Core, RadiusFailure,
    Recognisability, RecognitionTable,
};

use crate::distribution::InflationLevels;
use crate::error::{Error, Result};
use crate::substitution::RandomSubstitution;
use crate::word::{abelianise, CountVector, Letter, Word};

/// Tolerance for per-word equality of production probabilities.
pub const IPP_TOLERANCE: f64 = 1e-12;

/// Outcome of [`check_compatibility`].
#[derive(Debug, Clone, PartialEq)]
pub struct Compatibility {
    pub compatible: bool,
    /// `(a, u, v)` with `u, v ∈ ϑ(a)` and `Φ(u) ≠ Φ(v)`.
    pub witness: Option<(Letter, Word, Word)>,
}

pub fn check_compatibility(subst: &RandomSubstitution) -> Compatibility {
    let d = subst.alphabet_size();
    for a in subst.letters() {
        let rs = subst.realisations(a);
        let first = abelianise(&rs[0].word, d);
        if let Some(r) = rs.iter().find(|r| abelianise(&r.word, d) != first) {
            return Compatibility {
                compatible: false,
                witness: Some((a, rs[0].word.clone(), r.word.clone())),
            };
        }
    }
    Compatibility {
        compatible: true,
        witness: None,
    }
}

/// Fails with [`Error::NotCompatible`] carrying the witness.
pub fn require_compatible(subst: &RandomSubstitution) -> Result<()> {
    match check_compatibility(subst).witness {
        None => Ok(()),
        Some((a, u, v)) => Err(Error::NotCompatible {
            letter: subst.names()[a as usize],
            first: subst.render(&u),
            second: subst.render(&v),
        }),
    }
}

/// Common length `|ϑ(u)|` and letter counts `|ϑ(u)|_a` of every realisation of `ϑ(u)`.
pub fn expected_image_length(
    subst: &RandomSubstitution,
    u: &[Letter],
) -> Result<(usize, CountVector)> {
    require_compatible(subst)?;
    let d = subst.alphabet_size();
    let counts = u.iter().fold(CountVector::zeros(d), |acc, &a| {
        &acc + &abelianise(&subst.realisations(a)[0].word, d)
    });
    Ok((counts.total() as usize, counts))
}

/// Concrete evidence that a condition fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub letter: Letter,
    /// Two realisations of `letter`.
    pub first: Word,
    pub second: Word,
    /// A word in both supports (disjointness), in only one (identity), or with different
    /// probabilities (identical production probabilities).
    pub word: Word,
}

/// Result of checking a condition quantified over all `k ∈ ℕ` up to a finite depth.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    VerifiedToDepth(usize),
    RefutedAtDepth(usize, Witness),
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::VerifiedToDepth(_))
    }
}

fn realisation_pairs(subst: &RandomSubstitution) -> Vec<(Letter, Word, Word)> {
    let mut out = Vec::new();
    for a in subst.letters() {
        let rs = subst.realisations(a);
        for i in 0..rs.len() {
            for j in i + 1..rs.len() {
                out.push((a, rs[i].word.clone(), rs[j].word.clone()));
            }
        }
    }
    out
}

/// Disjoint set condition: `ϑ^k(u) ∩ ϑ^k(v) = ∅` for distinct `u, v ∈ ϑ(a)`, `k = 1..=depth`.
pub fn check_dsc(subst: &RandomSubstitution, depth: usize, cap: usize) -> Result<Verdict> {
    let levels = InflationLevels::build(subst, depth, cap)?;
    let pairs = realisation_pairs(subst);
    for k in 1..=depth {
        for (a, u, v) in &pairs {
            let du = levels.of_word(k, u, cap)?;
            let dv = levels.of_word(k, v, cap)?;
            if let Some(w) = du.common_word(&dv) {
                return Ok(Verdict::RefutedAtDepth(
                    k,
                    Witness {
                        letter: *a,
                        first: u.clone(),
                        second: v.clone(),
                        word: w.clone(),
                    },
                ));
            }
        }
    }
    Ok(Verdict::VerifiedToDepth(depth))
}

/// Verdicts for the identical set condition and identical production probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct IdenticalSets {
    pub isc: Verdict,
    pub ipp: Verdict,
}

/// Identical set condition (`ϑ^k(u) = ϑ^k(v)`) and identical production probabilities for
/// `u, v ∈ ϑ(a)` and `k = 1..=depth`.
///
/// Production probabilities are compared between `ϑ_P^j(u)` and `ϑ_P^j(v)` for `j = 1..=depth`;
/// at `j = 0` two distinct realisations are different point masses, so that level is skipped.
pub fn check_isc_ipp(
    subst: &RandomSubstitution,
    depth: usize,
    cap: usize,
) -> Result<IdenticalSets> {
    let levels = InflationLevels::build(subst, depth, cap)?;
    let pairs = realisation_pairs(subst);
    let mut isc = Verdict::VerifiedToDepth(depth);
    let mut ipp = Verdict::VerifiedToDepth(depth);
    'depth: for k in 1..=depth {
        for (a, u, v) in &pairs {
            let du = levels.of_word(k, u, cap)?;
            let dv = levels.of_word(k, v, cap)?;
            let witness = |word: &Word| Witness {
                letter: *a,
                first: u.clone(),
                second: v.clone(),
                word: word.clone(),
            };
            if !du.same_support(&dv) {
                let w = du
                    .words()
                    .find(|w| !dv.contains(w))
                    .or_else(|| dv.words().find(|w| !du.contains(w)))
                    .expect("supports differ");
                let refuted = Verdict::RefutedAtDepth(k, witness(w));
                if ipp.is_verified() {
                    ipp = refuted.clone();
                }
                isc = refuted;
                break 'depth;
            }
            if ipp.is_verified() {
                if let Some(w) = du
                    .iter()
                    .find(|(w, lp)| (lp.exp() - dv.prob(w)).abs() > IPP_TOLERANCE)
                    .map(|(w, _)| w)
                {
                    ipp = Verdict::RefutedAtDepth(k, witness(w));
                }
            }
        }
    }
    Ok(IdenticalSets { isc, ipp })
}

/// Which closed form for the Lq-spectrum a set of verdicts supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Recognisable: `τ = φ₁/(λ−1)` for all `q`.
    Recognisable,
    /// Disjoint set condition: `τ = φ₁/(λ−1)` for `q ≥ 0`.
    Disjoint,
    /// Identical set condition with identical production probabilities: `τ = φ₁/λ` for `q ≥ 0`.
    Identical,
    /// Only the bounds in terms of `φ_k` apply.
    BoundsOnly,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Recognisable => "recognisable",
            Regime::Disjoint => "disjoint-set",
            Regime::Identical => "identical-set",
            Regime::BoundsOnly => "bounds-only",
        }
    }
}

/// All structural verdicts for one substitution.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub compatibility: Compatibility,
    pub dsc: Option<Verdict>,
    pub identical: Option<IdenticalSets>,
    pub recognisability: Option<Recognisability>,
    pub depth: usize,
    pub max_radius: usize,
}

impl ConditionReport {
    /// Runs every check; condition checks that require compatibility are skipped without it.
    pub fn analyse(
        subst: &RandomSubstitution,
        depth: usize,
        max_radius: usize,
        cap: usize,
    ) -> Result<Self> {
        let compatibility = check_compatibility(subst);
        let (dsc, recognisability) = if compatibility.compatible {
            let dsc = check_dsc(subst, depth, cap)?;
            let recognisability = if dsc.is_verified() {
                find_recognisability_radius(subst, max_radius)?
            } else {
                Recognisability::Excluded
            };
            (Some(dsc), Some(recognisability))
        } else {
            (None, None)
        };
        let identical = Some(check_isc_ipp(subst, depth, cap)?);
        Ok(ConditionReport {
            compatibility,
            dsc,
            identical,
            recognisability,
            depth,
            max_radius,
        })
    }

    pub fn is_recognisable(&self) -> bool {
        matches!(self.recognisability, Some(Recognisability::Radius(_)))
    }

    pub fn dsc_verified(&self) -> bool {
        self.dsc.as_ref().is_some_and(Verdict::is_verified)
    }

    pub fn identical_verified(&self) -> bool {
        self.identical
            .as_ref()
            .is_some_and(|i| i.isc.is_verified() && i.ipp.is_verified())
    }

    /// Strongest applicable regime; closed forms also need compatibility.
    pub fn regime(&self) -> Regime {
        if !self.compatibility.compatible {
            return Regime::BoundsOnly;
        }
        if self.is_recognisable() {
            Regime::Recognisable
        } else if self.dsc_verified() {
            Regime::Disjoint
        } else if self.identical_verified() {
            Regime::Identical
        } else {
            Regime::BoundsOnly
        }
    }
}
