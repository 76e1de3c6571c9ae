//! SDPA sparse format (`.dat-s`) import and export.
//!
//! SDPA states the dual form `min cᵀy s.t. Σ y_i F_i − F_0 ⪰ 0`, which is the
//! dual of our primal with `C = F_0`, `A_i = F_i`, `b_i = c_i` and the sign of
//! the objective flipped. Free variables are written as a diagonal LP block
//! holding both `x_f⁺` and `x_f⁻`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{Constraint, Entry, SdpProblem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpaError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Render `p` as SDPA sparse text with free variables split into a
/// nonnegative pair.
pub fn export_sdpa(p: &SdpProblem) -> String {
    let m = p.constraints.len();
    let mut blocks: Vec<i64> = p.block_sizes.iter().map(|&n| n as i64).collect();
    let lp_block = (p.num_free > 0).then(|| {
        blocks.push(-2 * p.num_free as i64);
        blocks.len()
    });
    let mut out = String::new();
    let _ = writeln!(out, "{m}");
    let _ = writeln!(out, "{}", blocks.len());
    let _ = writeln!(
        out,
        "{}",
        blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(
        out,
        "{}",
        p.constraints.iter().map(|c| fmt(c.rhs)).collect::<Vec<_>>().join(" ")
    );
    for (b, c) in p.objective.iter().enumerate() {
        for i in 0..c.nrows() {
            for j in i..c.ncols() {
                if c[(i, j)] != 0.0 {
                    let _ = writeln!(out, "0 {} {} {} {}", b + 1, i + 1, j + 1, fmt(c[(i, j)]));
                }
            }
        }
    }
    if let Some(lb) = lp_block {
        for (f, &v) in p.free_objective.iter().enumerate() {
            if v != 0.0 {
                let _ = writeln!(out, "0 {lb} {} {} {}", 2 * f + 1, 2 * f + 1, fmt(v));
                let _ = writeln!(out, "0 {lb} {} {} {}", 2 * f + 2, 2 * f + 2, fmt(-v));
            }
        }
    }
    for (k, c) in p.constraints.iter().enumerate() {
        for e in &c.entries {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                k + 1,
                e.block + 1,
                e.i + 1,
                e.j + 1,
                fmt(e.value)
            );
        }
        if let Some(lb) = lp_block {
            for &(f, v) in &c.free {
                let _ = writeln!(out, "{} {lb} {} {} {}", k + 1, 2 * f + 1, 2 * f + 1, fmt(v));
                let _ = writeln!(out, "{} {lb} {} {} {}", k + 1, 2 * f + 2, 2 * f + 2, fmt(-v));
            }
        }
    }
    out
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Parse SDPA sparse text. Diagonal (negative-size) blocks become ordinary
/// diagonal PSD blocks; free variables are not reconstructed.
pub fn parse_sdpa(text: &str) -> Result<SdpProblem, SdpaError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split(['"', '*']).next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut header = |what: &str| {
        lines.next().ok_or(SdpaError::Syntax { line: 0, msg: format!("missing {what}") })
    };
    let (ln, l) = header("constraint count")?;
    let m: usize = first_number(l).ok_or(syntax(ln, "constraint count"))?;
    let (ln, l) = header("block count")?;
    let nb: usize = first_number(l).ok_or(syntax(ln, "block count"))?;
    let (ln, l) = header("block sizes")?;
    let sizes: Vec<i64> = numbers(l);
    if sizes.len() < nb {
        return Err(syntax(ln, "block sizes"));
    }
    let (ln, l) = header("objective vector")?;
    let rhs: Vec<f64> = numbers(l);
    if rhs.len() < m {
        return Err(syntax(ln, "objective vector"));
    }
    let sizes: Vec<usize> = sizes[..nb].iter().map(|s| s.unsigned_abs() as usize).collect();
    let mut p = SdpProblem::new(sizes.clone(), 0);
    p.constraints = rhs[..m]
        .iter()
        .map(|&r| Constraint { entries: vec![], free: vec![], rhs: r })
        .collect();
    for (ln, l) in lines {
        let f: Vec<f64> = numbers(l);
        if f.len() != 5 {
            return Err(syntax(ln, "expected 5 fields"));
        }
        let (k, b, i, j, v) = (f[0] as usize, f[1] as usize, f[2] as usize, f[3] as usize, f[4]);
        if b == 0 || b > nb || i == 0 || j == 0 || i.max(j) > sizes[b - 1] || k > m {
            return Err(syntax(ln, "index out of range"));
        }
        let (i, j) = (i.min(j) - 1, i.max(j) - 1);
        if k == 0 {
            let c: &mut DMatrix<f64> = &mut p.objective[b - 1];
            c[(i, j)] = v;
            c[(j, i)] = v;
        } else {
            p.constraints[k - 1].entries.push(Entry { block: b - 1, i, j, value: v });
        }
    }
    Ok(p)
}

fn syntax(line: usize, msg: &str) -> SdpaError {
    SdpaError::Syntax { line, msg: msg.to_string() }
}

fn numbers<T: std::str::FromStr>(l: &str) -> Vec<T> {
    l.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')'))
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect()
}

fn first_number<T: std::str::FromStr>(l: &str) -> Option<T> {
    numbers(l).into_iter().next()
}
