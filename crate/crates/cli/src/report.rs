//! The analysis pipeline shared by the commands, and its JSON report.

use serde_json::{json, Value};
use subst_spectra::conditions::{
    ConditionReport, Recognisability, Regime, Verdict, Witness, IPP_TOLERANCE,
};
use subst_spectra::lq::{
    measure_entropy, topological_entropy, AlphaRange, ClosedFormTau, EntropySequence,
};
use subst_spectra::spectral::{is_primitive, POWER_ITERATION_TOL};
use subst_spectra::substitution::PROBABILITY_SUM_TOLERANCE;
use subst_spectra::{Error, PerronData, RandomSubstitution};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Settings of the structural analysis.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions {
    pub depth: usize,
    pub recog_max: usize,
    pub assume_recognisable: bool,
    pub cap: usize,
}

/// Everything the commands need to know about a substitution.
#[derive(Debug)]
pub struct Analysis {
    pub subst: RandomSubstitution,
    pub label: Option<String>,
    pub options: AnalysisOptions,
    pub perron: PerronData,
    pub conditions: ConditionReport,
    pub regime: Regime,
    pub closed: Option<ClosedFormTau>,
    pub notes: Vec<String>,
}

/// Runs `f` at `depth`, then at smaller depths while supports exceed the cap.
pub fn deepest<T>(
    depth: usize,
    mut f: impl FnMut(usize) -> Result<T, Error>,
) -> Result<(usize, T), CliError> {
    let mut k = depth.max(1);
    loop {
        match f(k) {
            Ok(t) => return Ok((k, t)),
            Err(Error::CapExceeded { .. }) if k > 1 => k -= 1,
            Err(e) => return Err(e.into()),
        }
    }
}

impl Analysis {
    pub fn run(
        subst: RandomSubstitution,
        label: Option<String>,
        options: AnalysisOptions,
    ) -> Result<Self, CliError> {
        if !is_primitive(&subst.substitution_matrix()) {
            return Err(Error::NotPrimitive.into());
        }
        let perron = PerronData::of(&subst)?;
        let mut notes = Vec::new();
        let (depth, conditions) = deepest(options.depth, |k| {
            ConditionReport::analyse(&subst, k, options.recog_max, options.cap)
        })?;
        if depth < options.depth {
            notes.push(format!(
                "condition checks ran to depth {depth}: depth {} exceeds the support cap {}",
                options.depth, options.cap
            ));
        }
        let mut regime = conditions.regime();
        if options.assume_recognisable && regime != Regime::Recognisable {
            if !conditions.compatibility.compatible {
                return Err(CliError::Validation(
                    "cannot assume recognisability: not compatible".into(),
                ));
            }
            if !conditions.dsc_verified() {
                return Err(CliError::Validation(
                    "cannot assume recognisability: the disjoint set condition fails".into(),
                ));
            }
            regime = Regime::Recognisable;
            notes.push("recognisability assumed, not certified".into());
        }
        let closed = match regime {
            Regime::BoundsOnly => None,
            r => Some(ClosedFormTau::new(&subst, &perron, r)?),
        };
        if subst.is_deterministic() {
            notes.push(
                "deterministic substitution: zero entropy and τ ≡ 0 (degenerate linear spectrum)"
                    .into(),
            );
        }
        Ok(Analysis {
            subst,
            label,
            options,
            perron,
            conditions,
            regime,
            closed,
            notes,
        })
    }

    pub fn alpha_range(&self) -> Option<AlphaRange> {
        self.closed.as_ref().and_then(|c| c.alpha_range().ok())
    }

    pub fn report(&self) -> Result<Value, CliError> {
        let s = &self.subst;
        let c = &self.conditions;
        let witness = |w: &Witness| {
            json!({
                "letter": s.names()[w.letter as usize].to_string(),
                "first": s.render(&w.first),
                "second": s.render(&w.second),
                "word": s.render(&w.word),
            })
        };
        let verdict = |v: &Verdict| match v {
            Verdict::VerifiedToDepth(k) => json!({ "status": "verified", "depth": k }),
            Verdict::RefutedAtDepth(k, w) => {
                json!({ "status": "refuted", "depth": k, "witness": witness(w) })
            }
        };
        let recognisability = match &c.recognisability {
            None => json!({ "status": "not-applicable", "max_radius": c.max_radius }),
            Some(Recognisability::Radius(t)) => {
                json!({ "status": "certified", "radius": t.radius, "max_radius": c.max_radius })
            }
            Some(Recognisability::UnverifiedUpTo(r, _)) => {
                json!({ "status": "unverified", "checked_up_to": r, "max_radius": c.max_radius })
            }
            Some(Recognisability::Excluded) => {
                json!({ "status": "excluded", "max_radius": c.max_radius })
            }
        };
        let compat_witness = c.compatibility.witness.as_ref().map(|(a, u, v)| {
            json!({ "letter": s.names()[*a as usize].to_string(), "first": s.render(u), "second": s.render(v) })
        });
        let (entropy_depth, (top, meas)) = deepest(self.options.depth, |k| {
            Ok((
                topological_entropy(s, &self.perron, k, self.options.cap)?,
                measure_entropy(s, &self.perron, k, self.options.cap)?,
            ))
        })?;
        let closed_entropy = match &self.closed {
            Some(cf) => Some((-cf.tau(0.0)?, cf.alpha(1.0)?)),
            None => None,
        };
        let regime = json!({
            "name": self.regime.name(),
            "closed_form": match self.regime {
                Regime::Recognisable => Value::from("tau(q) = phi_1(q)/(lambda-1), all q"),
                Regime::Disjoint => Value::from("tau(q) = phi_1(q)/(lambda-1), q >= 0"),
                Regime::Identical => Value::from("tau(q) = phi_1(q)/lambda, q >= 0"),
                Regime::BoundsOnly => Value::Null,
            },
            "coefficient": self.closed.as_ref().map(ClosedFormTau::coefficient),
            "assumed_recognisable": self.options.assume_recognisable,
        });
        let alpha = self.alpha_range().map(|r| {
            json!({
                "min": r.min, "max": r.max,
                "min_without_factor": r.min_without_factor, "max_without_factor": r.max_without_factor,
                "f_at_min": r.f_at_min, "f_at_max": r.f_at_max,
            })
        });
        Ok(json!({
            "schema_version": SCHEMA_VERSION,
            "label": self.label,
            "alphabet": s.names().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "validation": { "valid": true, "probability_sum_tolerance": PROBABILITY_SUM_TOLERANCE },
            "primitivity": { "primitive": true, "method": "boolean power M^((d-1)^2+1)" },
            "perron": {
                "lambda": self.perron.lambda,
                "right_eigenvector": self.perron.right,
                "residual": self.perron.residual(),
                "tolerance": POWER_ITERATION_TOL,
                "iterations": self.perron.iterations,
            },
            "compatibility": { "compatible": c.compatibility.compatible, "witness": compat_witness },
            "conditions": {
                "requested_depth": self.options.depth,
                "depth": c.depth,
                "support_cap": self.options.cap,
                "disjoint_set": c.dsc.as_ref().map(verdict),
                "identical_set": c.identical.as_ref().map(|i| verdict(&i.isc)),
                "identical_probabilities": c.identical.as_ref().map(|i| {
                    let mut v = verdict(&i.ipp);
                    v["tolerance"] = json!(IPP_TOLERANCE);
                    v
                }),
                "recognisability": recognisability,
            },
            "regime": regime,
            "entropy": {
                "topological": entropy_json(&top, closed_entropy.map(|e| e.0), entropy_depth),
                "measure": entropy_json(&meas, closed_entropy.map(|e| e.1), entropy_depth),
            },
            "alpha_range": alpha,
            "notes": self.notes,
        }))
    }
}

pub fn entropy_json(seq: &EntropySequence, closed: Option<f64>, depth: usize) -> Value {
    json!({
        "value": closed.unwrap_or(seq.limit_estimate),
        "source": if closed.is_some() { "closed-form" } else { "extrapolated" },
        "depth": depth,
        "approximants": seq.approximants,
        "limit_estimate": seq.limit_estimate,
        "bracket": seq.bracket.map(|(a, b)| vec![a, b]),
        "monotonicity_gap": seq.monotonicity_gap,
        "nondecreasing": seq.monotonicity_gap <= 1e-15,
    })
}
