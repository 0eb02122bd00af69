//! DIMACS CNF ingestion for uniform-width formulas. Each clause becomes the rank-1
//! diagonal projector onto its unique falsifying assignment; variable `v` is qubit `v − 1`.

use std::fmt::Write as _;

use super::{InstanceError, LocalProjector, QsatInstance};

fn dimacs_err(line: usize, message: impl Into<String>) -> InstanceError {
    InstanceError::Dimacs {
        line,
        message: message.into(),
    }
}

pub fn from_dimacs(text: &str) -> Result<QsatInstance, InstanceError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<(usize, Vec<i64>)> = Vec::new();
    let mut current: Vec<i64> = Vec::new();
    let mut current_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(dimacs_err(lineno, "duplicate problem line"));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 || fields[1] != "cnf" {
                return Err(dimacs_err(lineno, "expected `p cnf <vars> <clauses>`"));
            }
            let vars = fields[2]
                .parse()
                .map_err(|_| dimacs_err(lineno, "bad variable count"))?;
            let count = fields[3]
                .parse()
                .map_err(|_| dimacs_err(lineno, "bad clause count"))?;
            header = Some((vars, count));
            continue;
        }
        let (vars, _) = header.ok_or_else(|| dimacs_err(lineno, "clause before problem line"))?;
        for token in line.split_whitespace() {
            let lit: i64 = token
                .parse()
                .map_err(|_| dimacs_err(lineno, format!("bad literal `{token}`")))?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(dimacs_err(lineno, "empty clause"));
                }
                clauses.push((current_line, std::mem::take(&mut current)));
                continue;
            }
            if lit.unsigned_abs() as usize > vars {
                return Err(dimacs_err(
                    lineno,
                    format!("literal {lit} exceeds declared {vars} variables"),
                ));
            }
            if current.is_empty() {
                current_line = lineno;
            }
            current.push(lit);
        }
    }
    if !current.is_empty() {
        clauses.push((current_line, current));
    }

    let (n, declared) = header.ok_or_else(|| dimacs_err(0, "missing problem line"))?;
    if clauses.is_empty() {
        return Err(dimacs_err(0, "formula has no clauses"));
    }
    if clauses.len() != declared {
        return Err(dimacs_err(
            0,
            format!(
                "header declares {declared} clauses, found {}",
                clauses.len()
            ),
        ));
    }

    let width = clauses[0].1.len();
    let mut projectors = Vec::with_capacity(clauses.len());
    for (lineno, clause) in clauses {
        if clause.len() != width {
            return Err(dimacs_err(
                lineno,
                format!(
                    "clause has {} literals but the formula is {width}-uniform",
                    clause.len()
                ),
            ));
        }
        let mut lits = clause.clone();
        lits.sort_by_key(|l| l.unsigned_abs());
        if lits
            .windows(2)
            .any(|w| w[0].unsigned_abs() == w[1].unsigned_abs())
        {
            return Err(dimacs_err(lineno, "variable repeated within a clause"));
        }
        let support: Vec<usize> = lits.iter().map(|l| l.unsigned_abs() as usize - 1).collect();
        // a positive literal is falsified by 0, a negative one by 1
        let falsifying: usize = lits
            .iter()
            .enumerate()
            .map(|(j, &l)| usize::from(l < 0) << j)
            .sum();
        projectors.push(LocalProjector::diagonal(support, &[falsifying])?);
    }
    QsatInstance::new(n, projectors)
}

/// Inverse of [`from_dimacs`] for instances made of rank-1 classical clauses.
pub fn to_dimacs(inst: &QsatInstance) -> Result<String, InstanceError> {
    let mut out = format!("p cnf {} {}\n", inst.n(), inst.m());
    for (i, p) in inst.projectors().iter().enumerate() {
        if !p.is_classical() || p.rank() != 1 {
            return Err(InstanceError::Unsupported(format!(
                "projector {i} is not a rank-1 classical clause"
            )));
        }
        let dim = p.matrix().nrows();
        let falsifying = (0..dim)
            .find(|&s| p.matrix()[(s, s)].re == 1.0)
            .expect("rank-1 diagonal projector has a unit entry");
        for (j, &q) in p.support().iter().enumerate() {
            let var = (q + 1) as i64;
            let lit = if (falsifying >> j) & 1 == 1 {
                -var
            } else {
                var
            };
            write!(out, "{lit} ").expect("write to string");
        }
        out.push_str("0\n");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    #[test]
    fn two_literal_clause() {
        // x1 ∨ ¬x2 is falsified by x1 = 0, x2 = 1, i.e. local index 0b10
        let inst = from_dimacs("p cnf 2 1\n1 -2 0\n").unwrap();
        let p = inst.projector(0);
        assert_eq!(p.support(), &[0, 1]);
        assert_eq!(p.rank(), 1);
        assert_eq!(p.matrix()[(2, 2)], ONE);
        assert_eq!(p.matrix().iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn unit_negative_clause() {
        let inst = from_dimacs("c unit\np cnf 1 1\n-1 0\n").unwrap();
        assert_eq!(inst.k(), 1);
        assert_eq!(inst.projector(0).matrix()[(1, 1)], ONE);
    }

    #[test]
    fn three_clause_formula() {
        let text = "c test\np cnf 5 3\n1 2 3 0\n-2 4 5 0\n1 -3\n -5 0\n";
        let inst = from_dimacs(text).unwrap();
        assert_eq!((inst.m(), inst.k()), (3, 3));
        assert!(inst.projectors().iter().all(|p| p.rank() == 1));
        assert_eq!(inst.projector(2).support(), &[0, 2, 4]);
        assert_eq!(
            from_dimacs(&to_dimacs(&inst).unwrap())
                .unwrap()
                .projectors(),
            inst.projectors()
        );
    }

    #[test]
    fn literal_order_does_not_matter() {
        let a = from_dimacs("p cnf 3 1\n3 -1 2 0\n").unwrap();
        let b = from_dimacs("p cnf 3 1\n-1 2 3 0\n").unwrap();
        assert_eq!(a.projectors(), b.projectors());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(from_dimacs("p cnf 3 2\n1 2 0\n1 2 3 0\n").is_err()); // mixed widths
        assert!(from_dimacs("p cnf 3 1\n1 1 2 0\n").is_err()); // repeated literal
        assert!(from_dimacs("p cnf 3 1\n1 -1 2 0\n").is_err()); // repeated variable
        assert!(from_dimacs("p cnf 3 0\n").is_err()); // empty formula
        assert!(from_dimacs("1 2 0\n").is_err()); // no header
        assert!(from_dimacs("p cnf 2 1\n1 3 0\n").is_err()); // unknown variable
        assert!(from_dimacs("p cnf 2 2\n1 2 0\n").is_err()); // clause count mismatch
    }

    #[test]
    fn satlib_terminator_is_honoured() {
        let inst = from_dimacs("p cnf 2 1\n1 2 0\n%\n0\n").unwrap();
        assert_eq!(inst.m(), 1);
    }
}
