//! Shared helpers for the plain-text artifact formats.
//!
//! Delimited files are comma separated. Lines starting with `#` are
//! metadata (`# key=value`) or free comments; the first non-comment line is
//! the column header.

use crate::error::{Error, Result};

/// Format a float with nine significant digits, `%.9g` style.
///
/// Fixed notation is used for decimal exponents in `[-4, 9)`, scientific
/// otherwise; trailing zeros are trimmed. Non-finite values print as `nan`,
/// `inf` and `-inf`.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    // `{:e}` performs the rounding, so the exponent reflects carries.
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let mantissa = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", mantissa, sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// A delimited table split into metadata, header and data rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    /// Data rows with their 1-based source line numbers.
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn parse(input: &str) -> Result<Table> {
        let mut table = Table::default();
        let mut have_header = false;
        for (idx, raw) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if let Some(comment) = line.strip_prefix('#') {
                // Only `# key=value` with a bare key counts; echoed TOML
                // (`key = value`) stays a plain comment.
                if let Some((k, v)) = comment.trim_start().split_once('=') {
                    let bare = !k.is_empty()
                        && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                    if bare {
                        table.meta.push((k.to_string(), v.trim().to_string()));
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if !have_header {
                table.header = cells;
                have_header = true;
            } else {
                if cells.len() != table.header.len() {
                    return Err(Error::parse(
                        line_no,
                        format!(
                            "expected {} columns, found {}",
                            table.header.len(),
                            cells.len()
                        ),
                    ));
                }
                table.rows.push((line_no, cells));
            }
        }
        if !have_header {
            return Err(Error::parse(0, "missing column header"));
        }
        Ok(table)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        let v = self
            .meta(key)
            .ok_or_else(|| Error::parse(0, format!("missing metadata `{key}`")))?;
        parse_f64(v, 0)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(1, format!("missing column `{name}`")))
    }

    pub fn expect_header(&self, names: &[&str]) -> Result<()> {
        if self.header.len() != names.len() || self.header.iter().zip(names).any(|(a, b)| a != b) {
            return Err(Error::parse(
                1,
                format!("expected header `{}`", names.join(",")),
            ));
        }
        Ok(())
    }
}

pub fn parse_f64(cell: &str, line: usize) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| Error::parse(line, format!("`{cell}` is not a number")))
}

pub fn parse_usize(cell: &str, line: usize) -> Result<usize> {
    cell.parse::<usize>()
        .map_err(|_| Error::parse(line, format!("`{cell}` is not a non-negative integer")))
}

pub fn parse_i8_sign(cell: &str, line: usize) -> Result<i8> {
    match cell {
        "1" | "+1" => Ok(1),
        "-1" => Ok(-1),
        _ => Err(Error::parse(line, format!("`{cell}` is not +1/-1"))),
    }
}

/// Prefix every line of `block` with `# `, for echoing documents into
/// delimited files.
pub fn comment_block(block: &str) -> String {
    let mut out = String::new();
    for line in block.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}
