//! JSON problem documents.
//!
//! ```json
//! {"n": 2, "m": 1, "Q": [[1,0],[0,1]], "q": [0,-3], "A": [[1,1]], "b": [1],
//!  "lower": [0, 0], "upper": [null, null]}
//! ```
//!
//! `null` in `lower`/`upper` means unbounded on that side. Entries may also be
//! given as strings (`"inf"`, `"-inf"`, `"nan"`) so that non-finite values can
//! be written at all; NaN is always rejected with the offending field named.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QpError, Result};
use crate::problem::{BoxBounds, QpProblem};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Num(f64),
    Text(String),
}

impl Entry {
    fn value(&self, field: &str) -> Result<f64> {
        let v = match self {
            Entry::Num(x) => *x,
            Entry::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" | "+infinity" => f64::INFINITY,
                "-inf" | "-infinity" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                other => other.parse::<f64>().map_err(|_| QpError::InvalidEntry {
                    field: field.to_string(),
                    reason: format!("not a number: {s:?}"),
                })?,
            },
        };
        if v.is_nan() {
            return Err(QpError::InvalidEntry {
                field: field.to_string(),
                reason: "NaN is not allowed".into(),
            });
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    n: usize,
    m: usize,
    #[serde(rename = "Q")]
    hessian: Vec<Vec<Entry>>,
    q: Vec<Entry>,
    #[serde(rename = "A")]
    a: Vec<Vec<Entry>>,
    b: Vec<Entry>,
    lower: Vec<Option<Entry>>,
    upper: Vec<Option<Entry>>,
}

fn vector(name: &str, entries: &[Entry], len: usize) -> Result<Vec<f64>> {
    if entries.len() != len {
        return Err(QpError::Dimension {
            field: name.to_string(),
            expected: len.to_string(),
            found: entries.len().to_string(),
        });
    }
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| e.value(&format!("{name}[{i}]")))
        .collect()
}

fn matrix(name: &str, rows: &[Vec<Entry>], nrows: usize, ncols: usize) -> Result<Vec<f64>> {
    if rows.len() != nrows {
        return Err(QpError::Dimension {
            field: name.to_string(),
            expected: format!("{nrows} rows"),
            found: rows.len().to_string(),
        });
    }
    let mut out = Vec::with_capacity(nrows * ncols);
    for (i, row) in rows.iter().enumerate() {
        out.extend(vector(&format!("{name}[{i}]"), row, ncols)?);
    }
    Ok(out)
}

fn bound(name: &str, entries: &[Option<Entry>], len: usize, missing: f64) -> Result<Vec<f64>> {
    if entries.len() != len {
        return Err(QpError::Dimension {
            field: name.to_string(),
            expected: len.to_string(),
            found: entries.len().to_string(),
        });
    }
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| match e {
            None => Ok(missing),
            Some(e) => e.value(&format!("{name}[{i}]")),
        })
        .collect()
}

fn finite_or_null(x: f64) -> Option<Entry> {
    x.is_finite().then_some(Entry::Num(x))
}

impl ProblemDocument {
    pub fn to_problem<T: Real>(&self) -> Result<QpProblem<T>> {
        let (n, m) = (self.n, self.m);
        let conv = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        let hessian = DMatrix::from_row_slice(n, n, &conv(matrix("Q", &self.hessian, n, n)?));
        let linear = DVector::from_vec(conv(vector("q", &self.q, n)?));
        let a = DMatrix::from_row_slice(m, n, &conv(matrix("A", &self.a, m, n)?));
        let b = DVector::from_vec(conv(vector("b", &self.b, m)?));
        let lower = DVector::from_vec(conv(bound("lower", &self.lower, n, f64::NEG_INFINITY)?));
        let upper = DVector::from_vec(conv(bound("upper", &self.upper, n, f64::INFINITY)?));
        QpProblem::new(hessian, linear, a, b, BoxBounds::new(lower, upper)?)
    }

    pub fn from_problem<T: Real>(p: &QpProblem<T>) -> Self {
        let (n, m) = (p.n(), p.m());
        let row = |mat: &DMatrix<T>, i: usize| {
            (0..mat.ncols())
                .map(|j| Entry::Num(mat[(i, j)].as_f64()))
                .collect::<Vec<_>>()
        };
        Self {
            n,
            m,
            hessian: (0..n).map(|i| row(p.hessian(), i)).collect(),
            q: p.linear().iter().map(|x| Entry::Num(x.as_f64())).collect(),
            a: (0..m).map(|i| row(p.a(), i)).collect(),
            b: p.b().iter().map(|x| Entry::Num(x.as_f64())).collect(),
            lower: p.bounds().lower().iter().map(|x| finite_or_null(x.as_f64())).collect(),
            upper: p.bounds().upper().iter().map(|x| finite_or_null(x.as_f64())).collect(),
        }
    }
}

/// Parses a problem document.
pub fn load_problem<T: Real>(text: &str) -> Result<QpProblem<T>> {
    let doc: ProblemDocument =
        serde_json::from_str(text).map_err(|e| QpError::Parse(e.to_string()))?;
    doc.to_problem()
}

pub fn save_problem<T: Real>(problem: &QpProblem<T>) -> String {
    serde_json::to_string_pretty(&ProblemDocument::from_problem(problem))
        .expect("problem document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use proptest::prelude::*;

    const QPEX1: &str = r#"{"n": 2, "m": 1,
        "Q": [[1, 0], [0, 1]], "q": [0, -3],
        "A": [[1, 1]], "b": [1],
        "lower": [0, 0], "upper": [null, null]}"#;

    #[test]
    fn loads_qpex1() {
        let p: QpProblem<f64> = load_problem(QPEX1).unwrap();
        assert_eq!((p.n(), p.m()), (2, 1));
        assert_eq!(p, builtin::qpex1());
    }

    #[test]
    fn null_upper_is_plus_infinity() {
        let doc = r#"{"n": 2, "m": 0, "Q": [[1,0],[0,1]], "q": [0,0], "A": [], "b": [],
            "lower": [null, 0], "upper": [null, 10]}"#;
        let p: QpProblem<f64> = load_problem(doc).unwrap();
        assert_eq!(p.bounds().upper()[0], f64::INFINITY);
        assert_eq!(p.bounds().upper()[1], 10.0);
        assert_eq!(p.bounds().lower()[0], f64::NEG_INFINITY);
    }

    #[test]
    fn nan_in_hessian_names_field() {
        let doc = r#"{"n": 2, "m": 0, "Q": [[1,"NaN"],[0,1]], "q": [0,0], "A": [], "b": [],
            "lower": [null, null], "upper": [null, null]}"#;
        let err = load_problem::<f64>(doc).unwrap_err();
        assert!(err.to_string().contains("Q[0][1]"), "{err}");
    }

    #[test]
    fn wrong_row_length_is_dimension_error() {
        let doc = r#"{"n": 2, "m": 1, "Q": [[1,0],[0,1]], "q": [0,0], "A": [[1]], "b": [1],
            "lower": [null, null], "upper": [null, null]}"#;
        let err = load_problem::<f64>(doc).unwrap_err();
        assert!(matches!(err, QpError::Dimension { ref field, .. } if field == "A[0]"), "{err}");
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            load_problem::<f64>("{\"n\": 2,"),
            Err(QpError::Parse(_))
        ));
    }

    #[test]
    fn loads_into_f32() {
        let p: QpProblem<f32> = load_problem(QPEX1).unwrap();
        assert_eq!(p.linear()[1], -3.0f32);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            entries in prop::collection::vec(-1e6f64..1e6, 9),
            lo in prop::collection::vec(prop::option::of(-10.0f64..0.0), 3),
            hi in prop::collection::vec(prop::option::of(1.0f64..10.0), 3),
        ) {
            let hessian = DMatrix::from_row_slice(3, 3, &entries);
            let sym = (&hessian + hessian.transpose()) * 0.5;
            let lower = DVector::from_iterator(3, lo.iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)));
            let upper = DVector::from_iterator(3, hi.iter().map(|x| x.unwrap_or(f64::INFINITY)));
            let p = QpProblem::new(
                sym,
                DVector::from_row_slice(&entries[..3]),
                DMatrix::from_row_slice(1, 3, &entries[3..6]),
                DVector::from_row_slice(&entries[6..7]),
                BoxBounds::new(lower, upper).unwrap(),
            ).unwrap();
            let back: QpProblem<f64> = load_problem(&save_problem(&p)).unwrap();
            for (x, y) in p.hessian().iter().zip(back.hessian().iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in p.a().iter().zip(back.a().iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            prop_assert_eq!(p.linear(), back.linear());
            prop_assert_eq!(p.b(), back.b());
            prop_assert_eq!(p.bounds(), back.bounds());
        }
    }
}
