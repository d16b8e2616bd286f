//! `HLTF-MODEL1` text format.
//!
//! ```text
//! HLTF-MODEL1
//! vars	3
//! 0	latent	1	-	3.0000000000000000e-1	-
//! 1	observed:0	0	0	9.0000000000000002e-1	2.0000000000000001e-1	-
//! ```
//! One record per variable: id, kind, level, parent, table entries, label.

use super::{ConditionalTable, LatentTreeModel, VarKind, Variable};
use crate::{Error, Result};
use std::io::{BufRead, Write};

const MAGIC: &str = "HLTF-MODEL1";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    if out == "-" {
        "\\-".into()
    } else {
        out
    }
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(ch) = it.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('-') => out.push('-'),
            other => {
                return Err(Error::format(
                    "model",
                    format!("bad escape in label: \\{other:?}"),
                ))
            }
        }
    }
    Ok(out)
}

pub fn write_model<W: Write>(model: &LatentTreeModel, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "vars\t{}", model.n_vars())?;
    for v in 0..model.n_vars() {
        let var = model.variable(v);
        let kind = match var.kind {
            VarKind::Latent => "latent".to_string(),
            VarKind::Observed { column } => format!("observed:{column}"),
        };
        let parent = model.parent(v).map_or("-".to_string(), |p| p.to_string());
        write!(w, "{v}\t{kind}\t{}\t{parent}", var.level)?;
        match model.table(v) {
            ConditionalTable::Root { p1 } => write!(w, "\t{p1:.16e}")?,
            ConditionalTable::Edge { p1 } => write!(w, "\t{:.16e}\t{:.16e}", p1[0], p1[1])?,
        }
        let label = var.label.as_deref().map_or("-".to_string(), escape);
        writeln!(w, "\t{label}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: BufRead>(r: R) -> Result<LatentTreeModel> {
    let bad = |line: usize, d: &str| Error::format("model", format!("line {line}: {d}"));
    let mut lines = r.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim_end() != MAGIC {
        return Err(Error::format("model", format!("missing {MAGIC} header")));
    }
    let header = lines.next().transpose()?.unwrap_or_default();
    let n: usize = header
        .strip_prefix("vars\t")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad(2, "expected `vars\\t<n>`"))?;
    let (mut vars, mut parent, mut tables) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for v in 0..n {
        let ln = v + 3;
        let line = lines
            .next()
            .transpose()?
            .ok_or_else(|| bad(ln, "truncated"))?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 6 {
            return Err(bad(ln, "too few fields"));
        }
        if f[0].parse::<usize>().ok() != Some(v) {
            return Err(bad(ln, "ids must be consecutive from 0"));
        }
        let level: u32 = f[2].parse().map_err(|_| bad(ln, "bad level"))?;
        let mut var = match f[1] {
            "latent" => Variable::latent(level),
            k => {
                let col = k
                    .strip_prefix("observed:")
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad(ln, "bad kind"))?;
                Variable::observed(col, level)
            }
        };
        let p = match f[3] {
            "-" => None,
            s => Some(s.parse::<usize>().map_err(|_| bad(ln, "bad parent"))?),
        };
        let nums: Vec<f64> = f[4..f.len() - 1]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(ln, "bad probability"))?;
        let table = match (p, nums.as_slice()) {
            (None, [a]) => ConditionalTable::Root { p1: *a },
            (Some(_), [a, b]) => ConditionalTable::Edge { p1: [*a, *b] },
            _ => return Err(bad(ln, "table size does not match parent")),
        };
        let label = f[f.len() - 1];
        if label != "-" {
            var.label = Some(unescape(label)?);
        }
        vars.push(var);
        parent.push(p);
        tables.push(table);
    }
    for (k, extra) in lines.enumerate() {
        if !extra?.trim().is_empty() {
            return Err(bad(n + 3 + k, "trailing content"));
        }
    }
    LatentTreeModel::new(vars, parent, tables).map_err(|e| Error::format("model", e.to_string()))
}
