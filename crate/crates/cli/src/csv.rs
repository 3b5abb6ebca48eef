//! Trace persistence: comma-separated, `.` decimal point, 12 significant
//! digits in the shortest of fixed or exponent notation (like C's `%.12g`).

use std::io::{BufRead, BufReader, Read, Write};

use anyhow::{bail, Context, Result};
use bfppc::TraceRow;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `%.12g`-style rendering.
pub fn format_g(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if x == 0.0 {
        return format!("{sign}0");
    }
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let frac = digits[1..].trim_end_matches('0');
        let m = if frac.is_empty() {
            digits[..1].to_string()
        } else {
            format!("{}.{frac}", &digits[..1])
        };
        return format!("{sign}{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let (int, frac) = if exp >= 0 {
        let k = exp as usize + 1;
        (digits[..k].to_string(), digits[k..].to_string())
    } else {
        ("0".to_string(), format!("{}{digits}", "0".repeat((-exp - 1) as usize)))
    };
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// The value a CSV reader recovers for `x`.
pub fn round_g(x: f64) -> f64 {
    format_g(x).parse().expect("format_g output parses")
}

/// Row as it reads back from the CSV file.
pub fn round_row(r: &TraceRow) -> TraceRow {
    let v = |xs: &[f64]| xs.iter().map(|&x| round_g(x)).collect::<Vec<_>>();
    TraceRow {
        t: round_g(r.t),
        x: v(&r.x),
        qx: v(&r.qx),
        e: v(&r.e),
        eq: v(&r.eq),
        alpha: v(&r.alpha),
        u: round_g(r.u),
        sigma: r.sigma,
        rho: round_g(r.rho),
        env_lo: round_g(r.env_lo),
        env_hi: round_g(r.env_hi),
    }
}

pub fn header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for prefix in ["x", "qx", "e", "eq"] {
        h.extend((1..=n).map(|i| format!("{prefix}{i}")));
    }
    h.extend((1..n).map(|i| format!("alpha{i}")));
    h.extend(["u", "sigma", "rho", "env_lo", "env_hi"].map(String::from));
    h
}

pub fn write_trace<W: Write>(mut w: W, n: usize, rows: &[TraceRow]) -> Result<()> {
    writeln!(w, "{}", header(n).join(","))?;
    let mut line = String::new();
    for r in rows {
        line.clear();
        line.push_str(&format_g(r.t));
        let values = r.x.iter().chain(&r.qx).chain(&r.e).chain(&r.eq).chain(&r.alpha);
        for x in values.chain(std::iter::once(&r.u)) {
            line.push(',');
            line.push_str(&format_g(*x));
        }
        line.push(',');
        line.push_str(&r.sigma.to_string());
        for x in [r.rho, r.env_lo, r.env_hi] {
            line.push(',');
            line.push_str(&format_g(x));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace`]; the order comes from the header.
pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut lines = BufReader::new(r).lines();
    let head = lines.next().context("empty trace file")??;
    let cols: Vec<&str> = head.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    if n == 0 || cols != header(n) {
        bail!("unexpected trace header {head:?}");
    }
    let width = cols.len();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != width {
            bail!("line {}: {} fields, expected {width}", k + 2, f.len());
        }
        let num = |j: usize| -> Result<f64> {
            f[j].parse::<f64>().with_context(|| format!("line {}, column {}", k + 2, cols[j]))
        };
        let span = |start: usize, len: usize| (start..start + len).map(num).collect::<Result<Vec<_>>>();
        let alpha_at = 1 + 4 * n;
        let u_at = alpha_at + n - 1;
        rows.push(TraceRow {
            t: num(0)?,
            x: span(1, n)?,
            qx: span(1 + n, n)?,
            e: span(1 + 2 * n, n)?,
            eq: span(1 + 3 * n, n)?,
            alpha: span(alpha_at, n - 1)?,
            u: num(u_at)?,
            sigma: f[u_at + 1]
                .parse()
                .with_context(|| format!("line {}, column sigma", k + 2))?,
            rho: num(u_at + 2)?,
            env_lo: num(u_at + 3)?,
            env_hi: num(u_at + 4)?,
        });
    }
    Ok(rows)
}
