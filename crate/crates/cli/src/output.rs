//! CSV formatting and atomic file output.

use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// `x` with at most 12 significant digits; empty for NaN.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.')
        } else {
            &s
        };
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    } else {
        let s = format!("{x:.11e}");
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{e}")
    }
}

/// Rows of optional numbers, written with a header and `#` footer lines.
#[derive(Debug, Default)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub footer: Vec<String>,
}

impl Csv {
    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map(fmt_num).unwrap_or_default())
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        for line in &self.footer {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Writes `text` to `path` through a temporary file in the same directory, or to stdout.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let Some(path) = path else {
        print!("{text}");
        return Ok(());
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Failure(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-0.5), "-0.5");
        assert_eq!(fmt_num(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_num(1234.5678901234), "1234.56789012");
        assert_eq!(fmt_num(-2.0f64.ln() * 2.0 / 3.0), "-0.462098120373");
        assert_eq!(fmt_num(1.5e-9), "1.5e-9");
        assert_eq!(fmt_num(6.02214076e23), "6.02214076e23");
        assert_eq!(fmt_num(-1e-300 * 1e-300), "0");
        assert_eq!(fmt_num(f64::NAN), "");
    }

    #[test]
    fn parses_back_within_twelve_digits() {
        for x in [
            0.1234567890123456,
            -98765.4321,
            3.3e-7,
            42.0,
            0.000123456789012345,
        ] {
            let y: f64 = fmt_num(x).parse().unwrap();
            assert!((x - y).abs() <= 1e-11 * x.abs(), "{x} {y}");
        }
    }

    #[test]
    fn renders_blank_cells_and_footer() {
        let csv = Csv {
            header: vec!["q".into(), "upper_k3".into()],
            rows: vec![vec![Some(-1.0), None], vec![Some(1.0), Some(0.0)]],
            footer: vec!["note".into()],
        };
        assert_eq!(csv.render(), "q,upper_k3\n-1,\n1,0\n# note\n");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_output(Some(&path), "a\n").unwrap();
        write_output(Some(&path), "b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "b\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
