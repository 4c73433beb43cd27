use std::path::Path;

use crate::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbRow {
    pub id: String,
    pub label: Option<usize>,
    pub probs: Vec<f64>,
}

/// Per-image class posteriors produced by an external classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable {
    rows: Vec<ProbRow>,
    classes: usize,
}

impl ProbTable {
    pub fn new(rows: Vec<ProbRow>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Empty("probability table has no rows".into()))?;
        let classes = first.probs.len();
        if classes < 2 {
            return Err(Error::param(
                "probability table",
                format!("need at least 2 classes, found {classes}"),
            ));
        }
        for r in &rows {
            let ctx = || format!("probability row `{}`", r.id);
            if r.probs.len() != classes {
                return Err(Error::Parse {
                    context: ctx(),
                    message: format!("expected {classes} classes, found {}", r.probs.len()),
                });
            }
            if r.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Parse {
                    context: ctx(),
                    message: "probabilities must be finite and non-negative".into(),
                });
            }
            let s: f64 = r.probs.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Parse {
                    context: ctx(),
                    message: format!("row sums to {s}"),
                });
            }
            if let Some(l) = r.label {
                if l >= classes {
                    return Err(Error::Parse {
                        context: ctx(),
                        message: format!("label {l} out of range for {classes} classes"),
                    });
                }
            }
        }
        Ok(Self { rows, classes })
    }

    pub fn rows(&self) -> &[ProbRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn has_labels(&self) -> bool {
        self.rows.iter().all(|r| r.label.is_some())
    }

    /// Header `id[,label],p0,...,p{C-1}`.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |message: String| Error::Parse {
            context: source.to_string(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| err(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.first().map(String::as_str) != Some("id") {
            return Err(err("first column must be `id`".into()));
        }
        let has_label = header.get(1).map(String::as_str) == Some("label");
        let first_prob = if has_label { 2 } else { 1 };
        for (k, name) in header[first_prob..].iter().enumerate() {
            if *name != format!("p{k}") {
                return Err(err(format!("expected column `p{k}`, found `{name}`")));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let field_err = |m: String| err(format!("line {line}: {m}"));
            let label = if has_label {
                let raw = &rec[1];
                Some(
                    raw.parse::<usize>()
                        .map_err(|e| field_err(format!("label `{raw}`: {e}")))?,
                )
            } else {
                None
            };
            let probs = rec
                .iter()
                .skip(first_prob)
                .map(|v| v.parse::<f64>().map_err(|e| field_err(format!("`{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(ProbRow {
                id: rec[0].to_string(),
                label,
                probs,
            });
        }
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}
