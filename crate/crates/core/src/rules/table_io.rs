//! Plain-text rule tables.
//!
//! ```text
//! # comment
//! dim 3
//! degree 7 5
//! probe <inner> <outer> <ratio>
//! <g_1> ... <g_d> <weight> <embedded_weight> [<lower_weight>]
//! ...
//! ```
//!
//! One orbit per line. Generators live on the reference cube `[-1,1]^d` and
//! are canonicalised (absolute values, any order). Weights are scaled so that
//! `sum(weight * orbit_size) == 2^d`. The lower-degree weight column is either
//! present on every orbit line or on none. `degree` is optional; `dim` and
//! `probe` are required and must precede the orbit lines.

use std::fmt::Write as _;

use super::{NodeLayout, Orbit, RuleKind, RuleTable};
use crate::error::{QuadError, Result};

pub fn parse_table(text: &str) -> Result<RuleTable> {
    let mut dim = None;
    let mut degree = (0, 0);
    let mut probe = None;
    let mut orbits = Vec::new();
    let err = |line: usize, msg: String| QuadError::TableParse { line, msg };

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        let head = words.next().unwrap();
        let rest: Vec<&str> = words.collect();
        match head {
            "dim" => {
                let [v] = rest[..] else {
                    return Err(err(line, "expected `dim <d>`".into()));
                };
                let d: usize = v.parse().map_err(|e| err(line, format!("dim: {e}")))?;
                if d == 0 {
                    return Err(err(line, "dim must be at least 1".into()));
                }
                dim = Some(d);
            }
            "degree" => {
                let [a, b] = rest[..] else {
                    return Err(err(line, "expected `degree <main> <embedded>`".into()));
                };
                degree = (
                    a.parse().map_err(|e| err(line, format!("degree: {e}")))?,
                    b.parse().map_err(|e| err(line, format!("degree: {e}")))?,
                );
            }
            "probe" => {
                let vals = parse_floats(&rest).map_err(|m| err(line, m))?;
                let [inner, outer, ratio] = vals[..] else {
                    return Err(err(line, "expected `probe <inner> <outer> <ratio>`".into()));
                };
                probe = Some((inner, outer, ratio));
            }
            _ => {
                let Some(d) = dim else {
                    return Err(err(line, "orbit line before `dim`".into()));
                };
                let mut words = vec![head];
                words.extend(rest);
                let vals = parse_floats(&words).map_err(|m| err(line, m))?;
                let lower = match vals.len() {
                    n if n == d + 2 => None,
                    n if n == d + 3 => Some(vals[d + 2]),
                    n => {
                        return Err(err(
                            line,
                            format!("expected {} or {} numbers, found {n}", d + 2, d + 3),
                        ))
                    }
                };
                orbits.push(Orbit {
                    generator: vals[..d].to_vec(),
                    weight: vals[d],
                    embedded_weight: vals[d + 1],
                    lower_weight: lower,
                });
            }
        }
    }

    let dim = dim.ok_or_else(|| QuadError::InvalidTable("missing `dim` line".into()))?;
    if orbits.is_empty() {
        return Err(QuadError::InvalidTable("no orbit lines".into()));
    }
    let with_lower = orbits.iter().filter(|o| o.lower_weight.is_some()).count();
    if with_lower != 0 && with_lower != orbits.len() {
        return Err(QuadError::InvalidTable(
            "lower-degree weight column must be given on every orbit line or none".into(),
        ));
    }
    let probe = probe.ok_or_else(|| {
        QuadError::InvalidTable("missing `probe` line (needed to choose split axes)".into())
    })?;
    RuleTable::from_orbits(dim, RuleKind::Custom, degree.0, degree.1, orbits, Some(probe))
}

fn parse_floats(words: &[&str]) -> std::result::Result<Vec<f64>, String> {
    words
        .iter()
        .map(|w| w.parse::<f64>().map_err(|e| format!("`{w}`: {e}")))
        .collect()
}

/// Writes a table in the format read by [`parse_table`]. Tensor-product
/// tables have no on-axis probe and cannot be written.
pub fn format_table(table: &RuleTable) -> Result<String> {
    let probe = match (&table.layout, table.probe()) {
        (NodeLayout::Orbits { .. }, Some(p)) => p,
        _ => {
            return Err(QuadError::InvalidTable(format!(
                "{} table has no axis probe and cannot be written",
                table.kind()
            )))
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "# {} rule, {} nodes", table.kind(), table.node_count());
    let _ = writeln!(out, "dim {}", table.dim());
    let _ = writeln!(out, "degree {} {}", table.degree(), table.embedded_degree());
    let _ = writeln!(out, "probe {:e} {:e} {:e}", probe.inner, probe.outer, probe.ratio);
    for o in table.orbits() {
        for g in &o.generator {
            let _ = write!(out, "{g:e} ");
        }
        let _ = write!(out, "{:e} {:e}", o.weight, o.embedded_weight);
        if let Some(w) = o.lower_weight {
            let _ = write!(out, " {w:e}");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::HyperRect;
    use crate::rules::{apply_rule, build_gk_tensor_rule, build_gm_rule};

    #[test]
    fn written_tables_reload_identically() {
        for d in [2, 3, 7] {
            let t = build_gm_rule(d).unwrap();
            let text = format_table(&t).unwrap();
            let back = parse_table(&text).unwrap();
            assert_eq!(back.kind(), RuleKind::Custom);
            assert_eq!(back.orbits(), t.orbits());
            assert_eq!(back.node_count(), t.node_count());
            assert_eq!(back.probe(), t.probe());
            let f = |x: &[f64]| (x.iter().sum::<f64>()).exp();
            let r = HyperRect::unit(d);
            assert_eq!(apply_rule(&t, &r, &f).unwrap(), apply_rule(&back, &r, &f).unwrap());
        }
    }

    #[test]
    fn hand_written_two_level_table() {
        // degree-3 rule on the centre and (l, 0) axis points, embedded degree 1
        let text = "\
            # tiny table\n\
            dim 2\n\
            degree 3 1\n\
            probe 0.5 0.8164965809277260 0.375\n\
            0 0   0.0 4.0\n\
            0.8164965809277260 0 1.0 0.0   # axis points\n\
            0.5 0 0.0 0.0\n";
        let t = parse_table(text).unwrap();
        assert_eq!(t.node_count(), 9);
        assert!(!t.has_lower_rule());
        let ev = apply_rule(&t, &HyperRect::unit(2), &|x: &[f64]| x[0] * x[0]).unwrap();
        assert!((ev.integral - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_table("0 0 1 1\n"),
            Err(QuadError::TableParse { line: 1, .. })
        ));
        assert!(matches!(
            parse_table("dim 2\nprobe 1 2 3\n0 0 x 1\n"),
            Err(QuadError::TableParse { line: 3, .. })
        ));
        assert!(matches!(
            parse_table("dim 2\n0 0 4 4\n"),
            Err(QuadError::InvalidTable(_))
        ));
        // weights that do not integrate constants
        assert!(matches!(
            parse_table("dim 2\nprobe 0.5 0.5 1\n0 0 1 4\n0.5 0 0 0\n"),
            Err(QuadError::InvalidTable(_))
        ));
        // probe nodes absent
        assert!(matches!(
            parse_table("dim 2\nprobe 0.5 0.9 1\n0 0 4 4\n"),
            Err(QuadError::InvalidTable(_))
        ));
    }

    #[test]
    fn tensor_tables_cannot_be_written() {
        assert!(format_table(&build_gk_tensor_rule(2).unwrap()).is_err());
    }
}
