//! The subcommands: each returns the text it writes.

use serde_json::json;
use subst_spectra::lq::{
    alpha_grid, measure_entropy, multifractal_spectrum, topological_entropy, Grid,
    InflationSpectrum,
};
use subst_spectra::oracle::{
    empirical_tau, frequency_tables, min_cylinder_check, monte_carlo_frequencies,
    FixedPointOptions, MonteCarloOptions,
};
use subst_spectra::{Error, PerronData, RandomSubstitution};

use crate::error::CliError;
use crate::output::{fmt_num, Csv};
use crate::report::{deepest, entropy_json, Analysis, SCHEMA_VERSION};

/// Pretty JSON with a trailing newline.
pub fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialise");
    s.push('\n');
    s
}

pub fn analyze(analysis: &Analysis) -> Result<String, CliError> {
    Ok(json_text(&analysis.report()?))
}

/// Bound curves for every requested level; levels past the cap become blank columns.
pub fn spectrum(analysis: &Analysis, grid: &Grid, ks: &[usize]) -> Result<String, CliError> {
    let s = &analysis.subst;
    let k_max = ks.iter().copied().max().unwrap_or(1);
    if ks.contains(&0) {
        return Err(CliError::Validation("inflation levels start at 1".into()));
    }
    let (reached, spectrum) = deepest(k_max, |k| {
        InflationSpectrum::new(s, &analysis.perron, k, analysis.options.cap)
    })?;
    let qs = grid.points();
    let mut csv = Csv {
        header: vec!["q".into()],
        ..Csv::default()
    };
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for &k in ks {
        csv.header.push(format!("lower_k{k}"));
        csv.header.push(format!("upper_k{k}"));
        if k > reached {
            csv.footer.push(format!(
                "lower_k{k},upper_k{k}: supports at level {k} exceed the cap {}",
                analysis.options.cap
            ));
            columns.push(vec![None; qs.len()]);
            columns.push(vec![None; qs.len()]);
            continue;
        }
        let bounds: Vec<_> = qs.iter().map(|&q| spectrum.bounds(k, q)).collect();
        columns.push(bounds.iter().map(|b| Some(b.lower)).collect());
        columns.push(bounds.iter().map(|b| b.upper).collect());
    }
    if let Some(closed) = &analysis.closed {
        csv.header.push("closed_form".into());
        columns.push(qs.iter().map(|&q| closed.tau(q).ok()).collect());
        csv.footer.push(format!(
            "closed form under the {} regime",
            analysis.regime.name()
        ));
    }
    for (i, &q) in qs.iter().enumerate() {
        let mut row = vec![Some(q)];
        row.extend(columns.iter().map(|c| c[i]));
        csv.rows.push(row);
    }
    Ok(csv.render())
}

/// `(α, f(α))` on the requested grid clipped to `[α_min, α_max]`, or on `points` equally spaced
/// points of that interval.
pub fn conjugate(
    analysis: &Analysis,
    grid: Option<&Grid>,
    points: usize,
) -> Result<String, CliError> {
    let closed = analysis
        .closed
        .as_ref()
        .filter(|_| analysis.alpha_range().is_some())
        .ok_or(Error::ConditionNotEstablished("recognisability"))?;
    let range = closed.alpha_range()?;
    let alphas = match grid {
        Some(g) => g.points(),
        None => alpha_grid(&range, points),
    };
    let curve = multifractal_spectrum(closed, &alphas)?;
    let mut csv = Csv {
        header: vec!["alpha".into(), "f".into()],
        ..Csv::default()
    };
    let mut omitted = alphas.len() - curve.samples.len();
    for &(a, f) in &curve.samples {
        if f == f64::NEG_INFINITY {
            omitted += 1;
        } else {
            csv.rows.push(vec![Some(a), Some(f)]);
        }
    }
    if omitted > 0 {
        csv.footer
            .push(format!("omitted {omitted} rows with f = -inf"));
    }
    Ok(csv.render())
}

pub struct OracleOutput {
    pub curve: String,
    pub table: String,
    /// Broken table invariants, if any.
    pub violations: Vec<String>,
}

/// Empirical `τ` from the exact length-`n` table against the bounds and closed form, plus a dump
/// of the table, with Monte Carlo estimates when `samples > 0`.
pub fn oracle(
    analysis: &Analysis,
    n: usize,
    qs: &[f64],
    samples: usize,
    seed: u64,
    min_bound: Option<f64>,
) -> Result<OracleOutput, CliError> {
    let s = &analysis.subst;
    let pd = &analysis.perron;
    let tables = frequency_tables(
        s,
        pd,
        n,
        &FixedPointOptions {
            seed,
            ..FixedPointOptions::default()
        },
    )?;
    let tol = 1e-8;
    let mut violations = Vec::new();
    for m in 1..=n {
        let shorter = (m > 1).then(|| tables.table(m - 1));
        for v in tables.table(m).check_invariants(pd, shorter, tol) {
            violations.push(format!("n = {m}: {v}"));
        }
    }
    let depth = analysis.options.depth;
    let spectrum = if analysis.conditions.compatibility.compatible {
        deepest(depth, |k| {
            InflationSpectrum::new(s, pd, k, analysis.options.cap)
        })
        .ok()
    } else {
        None
    };
    let table = tables.table(n);
    let mut csv = Csv {
        header: vec!["q".into(), format!("empirical_n{n}")],
        ..Csv::default()
    };
    if let Some((k, _)) = &spectrum {
        csv.header.push(format!("lower_k{k}"));
        csv.header.push(format!("upper_k{k}"));
    }
    if analysis.closed.is_some() {
        csv.header.push("closed_form".into());
    }
    for &q in qs {
        let mut row = vec![Some(q), Some(empirical_tau(table, q))];
        if let Some((k, sp)) = &spectrum {
            let b = sp.bounds(*k, q);
            row.push(Some(b.lower));
            row.push(b.upper);
        }
        if let Some(c) = &analysis.closed {
            row.push(c.tau(q).ok());
        }
        csv.rows.push(row);
    }
    let min = min_cylinder_check(table, min_bound.unwrap_or(0.0));
    if !min.holds {
        violations.push(format!(
            "min mu = {} at {} is below {}",
            fmt_num(min.value),
            s.render(&min.word),
            fmt_num(min_bound.unwrap_or(0.0))
        ));
    }
    csv.footer.push(format!(
        "{} legal words of length {n}; min mu = {} at {}; fixed point on length {} after {} iterations, residual {:e}",
        table.len(),
        fmt_num(min.value),
        s.render(&min.word),
        tables.report.base_len,
        tables.report.iterations,
        table.residual
    ));
    if let Some(b) = min_bound {
        csv.footer.push(format!(
            "min mu >= {}: {}",
            fmt_num(b),
            if min.holds { "holds" } else { "fails" }
        ));
    }
    csv.footer.push(format!(
        "invariants checked at tolerance {tol:e}: {} violations",
        violations.len()
    ));

    let mc = if samples > 0 {
        Some(monte_carlo_frequencies(
            s,
            0,
            12,
            n,
            &MonteCarloOptions::new(samples, seed),
        )?)
    } else {
        None
    };
    let mut dump = String::from(if mc.is_some() {
        "word,mu,mc_freq,mc_std_err\n"
    } else {
        "word,mu\n"
    });
    for (w, mu) in table.iter() {
        dump.push_str(&s.render(w));
        dump.push(',');
        dump.push_str(&fmt_num(mu));
        if let Some(est) = &mc {
            let e = est.get(w);
            dump.push_str(&format!(",{},{}", fmt_num(e.freq), fmt_num(e.std_err)));
        }
        dump.push('\n');
    }
    if let Some(est) = &mc {
        dump.push_str(&format!(
            "# monte carlo: {} samples of {} windows from level {} inflation words of {}, seed {seed}\n",
            est.samples,
            est.windows / est.samples as u128,
            est.level,
            s.names()[0]
        ));
    }
    Ok(OracleOutput {
        curve: csv.render(),
        table: dump,
        violations,
    })
}

pub fn entropy(
    subst: &RandomSubstitution,
    perron: &PerronData,
    k_max: usize,
    cap: usize,
) -> Result<String, CliError> {
    let top = topological_entropy(subst, perron, k_max, cap)?;
    let meas = measure_entropy(subst, perron, k_max, cap)?;
    Ok(json_text(&json!({
        "schema_version": SCHEMA_VERSION,
        "lambda": perron.lambda,
        "k_max": k_max,
        "support_cap": cap,
        "topological": entropy_json(&top, None, k_max),
        "measure": entropy_json(&meas, None, k_max),
    })))
}
