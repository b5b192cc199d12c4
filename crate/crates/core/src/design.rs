//! Covariate encoding for fitted propensity models.
//!
//! Numeric columns enter as-is. A categorical term is keyed by the tuple of
//! its source columns; its levels are learned from the fitting rows and the
//! first (smallest) level present is dropped as reference. A categorical term
//! over several columns is the saturated cell model for those columns.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Numeric(usize),
    Categorical(Vec<usize>),
}

impl Term {
    fn uses(&self, col: usize) -> bool {
        match self {
            Term::Numeric(c) => *c == col,
            Term::Categorical(cols) => cols.contains(&col),
        }
    }
}

/// Drops every term that touches column `col`.
pub fn without_column(terms: &[Term], col: usize) -> Vec<Term> {
    terms.iter().filter(|t| !t.uses(col)).cloned().collect()
}

#[derive(Debug, Clone)]
enum Encoded {
    Numeric(usize),
    Dummies { cols: Vec<usize>, levels: Vec<Vec<i64>> },
}

/// Encoding learned from a set of fitting rows; reusable for prediction.
#[derive(Debug, Clone)]
pub struct DesignEncoder {
    encoded: Vec<Encoded>,
    names: Vec<String>,
}

fn level_key(x: &DMatrix<f64>, row: usize, cols: &[usize]) -> Vec<i64> {
    cols.iter().map(|&c| x[(row, c)].round() as i64).collect()
}

impl DesignEncoder {
    pub fn fit(terms: &[Term], x: &DMatrix<f64>, rows: &[usize]) -> Self {
        let mut encoded = Vec::new();
        let mut names = Vec::new();
        for term in terms {
            match term {
                Term::Numeric(c) => {
                    encoded.push(Encoded::Numeric(*c));
                    names.push(format!("x{}", c + 1));
                }
                Term::Categorical(cols) => {
                    let mut levels: Vec<Vec<i64>> =
                        rows.iter().map(|&r| level_key(x, r, cols)).collect();
                    levels.sort();
                    levels.dedup();
                    let kept: Vec<Vec<i64>> = levels.into_iter().skip(1).collect();
                    for level in &kept {
                        let label: Vec<String> = cols
                            .iter()
                            .zip(level)
                            .map(|(c, v)| format!("x{}={v}", c + 1))
                            .collect();
                        names.push(label.join(":"));
                    }
                    encoded.push(Encoded::Dummies {
                        cols: cols.clone(),
                        levels: kept,
                    });
                }
            }
        }
        Self { encoded, names }
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// Column names, excluding the intercept.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn encode(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows.len(), self.width());
        for (i, &r) in rows.iter().enumerate() {
            let mut j = 0;
            for e in &self.encoded {
                match e {
                    Encoded::Numeric(c) => {
                        out[(i, j)] = x[(r, *c)];
                        j += 1;
                    }
                    Encoded::Dummies { cols, levels } => {
                        let key = level_key(x, r, cols);
                        for level in levels {
                            if *level == key {
                                out[(i, j)] = 1.0;
                            }
                            j += 1;
                        }
                    }
                }
            }
        }
        out
    }
}
