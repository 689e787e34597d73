//! Dataset representation, synthetic sample generation, MCAR corruption and
//! CSV I/O.
//!
//! Features live on `[0,1]^p`. Missing entries are tracked by a boolean mask
//! and never stored as sentinel values: a masked slot is zeroed on
//! construction and is unreachable through the public accessors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// CSV token for a missing feature entry.
pub const MISSING_TOKEN: &str = "NA";

/// Regression sample: an n-by-p feature matrix with a missingness mask, a
/// fully observed response vector and an optional noiseless target column
/// (kept for test sets so error can be measured against the clean signal).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S: Scalar> {
    n: usize,
    p: usize,
    features: Vec<S>,
    mask: Vec<bool>,
    response: Vec<S>,
    truth: Option<Vec<S>>,
}

impl<S: Scalar> Dataset<S> {
    /// Builds a dataset from flat row-major storage, validating that
    /// dimensions agree and every unmasked entry lies in `[0,1]`.
    pub fn new(
        p: usize,
        features: Vec<S>,
        mask: Vec<bool>,
        response: Vec<S>,
        truth: Option<Vec<S>>,
    ) -> Result<Self> {
        let n = response.len();
        if features.len() != n * p || mask.len() != n * p {
            return Err(Error::InvalidInput(format!(
                "feature/mask storage must hold {} entries for n={n}, p={p}",
                n * p
            )));
        }
        if let Some(t) = &truth {
            if t.len() != n {
                return Err(Error::InvalidInput(format!(
                    "truth vector has {} entries, expected {n}",
                    t.len()
                )));
            }
        }
        let mut features = features;
        for (idx, (&masked, value)) in mask.iter().zip(features.iter_mut()).enumerate() {
            if masked {
                // Masked slots hold no readable value.
                *value = S::zero();
            } else if !(*value >= S::zero() && *value <= S::one()) {
                return Err(Error::InvalidInput(format!(
                    "feature entry at row {}, column {} is outside [0,1]: {}",
                    idx / p,
                    idx % p,
                    value
                )));
            }
        }
        for (i, y) in response.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "response at row {i} is not finite"
                )));
            }
        }
        Ok(Self {
            n,
            p,
            features,
            mask,
            response,
            truth,
        })
    }

    /// Builds a dataset from per-row optional values (`None` marks missing).
    pub fn from_rows(p: usize, rows: Vec<Vec<Option<S>>>, response: Vec<S>) -> Result<Self> {
        if rows.len() != response.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows but {} responses",
                rows.len(),
                response.len()
            )));
        }
        let mut features = Vec::with_capacity(rows.len() * p);
        let mut mask = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            for cell in row {
                match cell {
                    Some(v) => {
                        features.push(*v);
                        mask.push(false);
                    }
                    None => {
                        features.push(S::zero());
                        mask.push(true);
                    }
                }
            }
        }
        Self::new(p, features, mask, response, None)
    }

    /// Attaches a noiseless target column.
    pub fn with_truth(mut self, truth: Vec<S>) -> Result<Self> {
        if truth.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "truth vector has {} entries, expected {}",
                truth.len(),
                self.n
            )));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    /// Same rows and response, but with the given complete feature storage
    /// and an all-clear mask. Used by the imputation strategies.
    pub fn with_complete_features(&self, features: Vec<S>) -> Result<Self> {
        Self::new(
            self.p,
            features,
            vec![false; self.n * self.p],
            self.response.clone(),
            self.truth.clone(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `true` when entry `(row, column)` is missing.
    pub fn is_missing(&self, row: usize, column: usize) -> bool {
        self.mask[row * self.p + column]
    }

    /// Observed value at `(row, column)`, or `None` when masked.
    pub fn value(&self, row: usize, column: usize) -> Option<S> {
        if self.mask[row * self.p + column] {
            None
        } else {
            Some(self.features[row * self.p + column])
        }
    }

    pub fn response(&self, row: usize) -> S {
        self.response[row]
    }

    pub fn responses(&self) -> &[S] {
        &self.response
    }

    pub fn truth(&self) -> Option<&[S]> {
        self.truth.as_deref()
    }

    /// Feature row as a query point: `None` marks missing coordinates.
    pub fn row_query(&self, row: usize) -> Vec<Option<S>> {
        (0..self.p).map(|h| self.value(row, h)).collect()
    }

    /// Rows where `column` is observed, with their values.
    pub fn observed_in_column(&self, column: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        (0..self.n).filter_map(move |i| self.value(i, column).map(|v| (i, v)))
    }

    /// Rows where `column` is missing.
    pub fn missing_in_column(&self, column: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.is_missing(i, column))
    }

    /// Number of missing entries in `column`.
    pub fn missing_count(&self, column: usize) -> usize {
        self.missing_in_column(column).count()
    }

    /// Flat copy of the feature storage (masked slots are zero).
    pub fn raw_features(&self) -> Vec<S> {
        self.features.clone()
    }
}

/// Per-column missingness probabilities; each must lie in `[0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MissRates {
    rates: Vec<f64>,
}

impl MissRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        for (h, &r) in rates.iter().enumerate() {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidInput(format!(
                    "missing rate for column {h} must lie in [0,1), got {r}"
                )));
            }
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// The benchmark regression target on `[0,1]^5`:
/// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5`.
pub fn friedman1<S: Scalar>(x: &[S]) -> Result<S> {
    if x.len() != 5 {
        return Err(Error::InvalidInput(format!(
            "friedman1 expects 5 coordinates, got {}",
            x.len()
        )));
    }
    let pi = S::from_f64_lossy(std::f64::consts::PI);
    let c10 = S::from_f64_lossy(10.0);
    let c20 = S::from_f64_lossy(20.0);
    let c5 = S::from_f64_lossy(5.0);
    let half = S::from_f64_lossy(0.5);
    Ok(c10 * (pi * x[0] * x[1]).sin() + c20 * (x[2] - half).powi(2) + c10 * x[3] + c5 * x[4])
}

/// Draws `n` i.i.d. rows uniform on `[0,1]^5`, with
/// `y = friedman1(x) + sigma * eps`, `eps ~ N(0,1)`, and the noiseless value
/// stored as the truth column. Identical seeds yield bit-identical datasets.
pub fn generate_sample<S: Scalar>(n: usize, sigma: f64, seed: u64) -> Result<Dataset<S>> {
    if sigma < 0.0 {
        return Err(Error::InvalidInput(format!(
            "noise standard deviation must be nonnegative, got {sigma}"
        )));
    }
    let p = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * p);
    let mut response = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut row = [S::zero(); 5];
    for _ in 0..n {
        for slot in row.iter_mut() {
            *slot = S::from_f64_lossy(rng.gen::<f64>());
        }
        let clean = friedman1(&row)?;
        let eps: f64 = StandardNormal.sample(&mut rng);
        let noise = S::from_f64_lossy(sigma * eps);
        features.extend_from_slice(&row);
        truth.push(clean);
        response.push(clean + noise);
    }
    Dataset::new(p, features, vec![false; n * p], response, Some(truth))
}

/// Masks each entry `(i,h)` independently with probability `rates[h]`,
/// regardless of feature values and responses. Already-masked entries stay
/// masked; observed values and the response are never altered.
pub fn inject_mcar<S: Scalar>(
    data: &Dataset<S>,
    rates: &MissRates,
    seed: u64,
) -> Result<Dataset<S>> {
    if rates.len() != data.p() {
        return Err(Error::InvalidInput(format!(
            "{} rates supplied for {} columns",
            rates.len(),
            data.p()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = data.p();
    let mut features = data.features.clone();
    let mut mask = data.mask.clone();
    for i in 0..data.n() {
        for h in 0..p {
            let hit = rng.gen::<f64>() < rates.rates()[h];
            if hit {
                mask[i * p + h] = true;
                features[i * p + h] = S::zero();
            }
        }
    }
    Dataset::new(p, features, mask, data.response.clone(), data.truth.clone())
}

/// Writes `x1,...,xp,y[,m]` with `NA` for masked entries. The optional `m`
/// column carries the noiseless target when present.
pub fn write_csv<S: Scalar>(data: &Dataset<S>, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.push("y".to_string());
    if data.truth().is_some() {
        header.push("m".to_string());
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut fields: Vec<String> = (0..data.p())
            .map(|h| match data.value(i, h) {
                Some(v) => format!("{v}"),
                None => MISSING_TOKEN.to_string(),
            })
            .collect();
        fields.push(format!("{}", data.response(i)));
        if let Some(truth) = data.truth() {
            fields.push(format!("{}", truth[i]));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field<S: Scalar>(token: &str, line: usize, column: usize) -> Result<S> {
    token
        .trim()
        .parse::<f64>()
        .map(S::from_f64_lossy)
        .map_err(|_| Error::Parse {
            line,
            column,
            message: format!("expected a decimal number, got {token:?}"),
        })
}

/// Reads a dataset written by [`write_csv`]. Header must be
/// `x1,...,xp,y` optionally followed by `m`.
pub fn read_csv<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header_line = lines.next().transpose()?.ok_or(Error::Parse {
        line: 1,
        column: 1,
        message: "empty file, expected a header row".to_string(),
    })?;
    let header: Vec<&str> = header_line.trim_end().split(',').collect();
    let has_truth = header.last() == Some(&"m");
    let p = header.len() - 1 - usize::from(has_truth);
    if p == 0 {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "header must list at least one feature column".to_string(),
        });
    }
    for (j, name) in header.iter().take(p).enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(Error::Parse {
                line: 1,
                column: j + 1,
                message: format!("expected header column x{}, got {name:?}", j + 1),
            });
        }
    }
    if header[p] != "y" {
        return Err(Error::Parse {
            line: 1,
            column: p + 1,
            message: format!("expected header column y, got {:?}", header[p]),
        });
    }

    let mut features = Vec::new();
    let mut mask = Vec::new();
    let mut response = Vec::new();
    let mut truth = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Parse {
                line: line_no,
                column: fields.len().min(header.len()),
                message: format!(
                    "row has {} fields, expected {}",
                    fields.len(),
                    header.len()
                ),
            });
        }
        for (h, token) in fields.iter().take(p).enumerate() {
            if token.trim() == MISSING_TOKEN {
                features.push(S::zero());
                mask.push(true);
            } else {
                features.push(parse_field(token, line_no, h + 1)?);
                mask.push(false);
            }
        }
        response.push(parse_field(fields[p], line_no, p + 1)?);
        if has_truth {
            truth.push(parse_field(fields[p + 1], line_no, p + 2)?);
        }
    }
    Dataset::new(
        p,
        features,
        mask,
        response,
        if has_truth { Some(truth) } else { None },
    )
}
