use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `min 1/2 z'Pz + c'z  s.t.  lower <= A z <= upper`.
///
/// One-sided rows use `f64::INFINITY` / `f64::NEG_INFINITY`; equality rows
/// have `lower == upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        p: DMatrix<f64>,
        c: DVector<f64>,
        a: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let qp = QpProblem {
            p,
            c,
            a,
            lower,
            upper,
        };
        qp.validate()?;
        Ok(qp)
    }

    /// Problem without constraints.
    pub fn unconstrained(p: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = c.len();
        Self::new(
            p,
            c,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DVector::zeros(0),
        )
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        let r = self.lower.len();
        if self.p.shape() != (n, n) {
            return Err(Error::Config(format!(
                "P is {:?}, expected {n}x{n}",
                self.p.shape()
            )));
        }
        if self.a.shape() != (r, n) || self.upper.len() != r {
            return Err(Error::Config(format!(
                "constraint shapes disagree: A {:?}, lower {r}, upper {}",
                self.a.shape(),
                self.upper.len()
            )));
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !finite(self.p.as_slice()) || !finite(self.c.as_slice()) || !finite(self.a.as_slice()) {
            return Err(Error::NonFinite("QP data"));
        }
        for i in 0..n {
            for j in 0..i {
                if (self.p[(i, j)] - self.p[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Config(format!("P is not symmetric at ({i}, {j})")));
                }
            }
        }
        for i in 0..r {
            let (l, u) = (self.lower[i], self.upper[i]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Config(format!("row {i}: invalid bounds [{l}, {u}]")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + self.c.dot(z)
    }

    /// Plain-text dump for reproducing solver failures; see [`QpProblem::parse_dump`].
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let (n, r) = (self.num_vars(), self.num_rows());
        let _ = writeln!(out, "qp {n} {r}");
        let row = |out: &mut String, vals: &mut dyn Iterator<Item = f64>| {
            let line: Vec<String> = vals.map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        };
        let _ = writeln!(out, "P");
        for i in 0..n {
            row(&mut out, &mut self.p.row(i).iter().copied());
        }
        let _ = writeln!(out, "c");
        row(&mut out, &mut self.c.iter().copied());
        let _ = writeln!(out, "A");
        for i in 0..r {
            row(&mut out, &mut self.a.row(i).iter().copied());
        }
        let _ = writeln!(out, "lower");
        row(&mut out, &mut self.lower.iter().copied());
        let _ = writeln!(out, "upper");
        row(&mut out, &mut self.upper.iter().copied());
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("bad QP dump: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .split_whitespace()
            .collect();
        if header.len() != 3 || header[0] != "qp" {
            return Err(bad("header"));
        }
        let n: usize = header[1].parse().map_err(|_| bad("n"))?;
        let r: usize = header[2].parse().map_err(|_| bad("r"))?;
        let tag = |t: &str, lines: &mut std::str::Lines| {
            if lines.next().map(str::trim) == Some(t) {
                Ok(())
            } else {
                Err(bad(t))
            }
        };
        let row = |lines: &mut std::str::Lines, len: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(t)))
                .collect::<Result<_>>()?;
            if v.len() != len {
                return Err(bad("row length"));
            }
            Ok(v)
        };
        tag("P", &mut lines)?;
        let mut p = Vec::with_capacity(n * n);
        for _ in 0..n {
            p.extend(row(&mut lines, n)?);
        }
        tag("c", &mut lines)?;
        let c = row(&mut lines, n)?;
        tag("A", &mut lines)?;
        let mut a = Vec::with_capacity(r * n);
        for _ in 0..r {
            a.extend(row(&mut lines, n)?);
        }
        tag("lower", &mut lines)?;
        let lower = row(&mut lines, r)?;
        tag("upper", &mut lines)?;
        let upper = row(&mut lines, r)?;
        QpProblem::new(
            DMatrix::from_row_slice(n, n, &p),
            DVector::from_vec(c),
            DMatrix::from_row_slice(r, n, &a),
            DVector::from_vec(lower),
            DVector::from_vec(upper),
        )
    }
}
