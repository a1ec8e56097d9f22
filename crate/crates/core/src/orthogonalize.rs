//! Newton-Schulz orthogonalization with fixed or shape-specific quintic coefficients.
//!
//! Each iteration applies `X <- a X + b X (X^T X) + c X (X^T X)^2` to the
//! Frobenius-normalized input. In terms of singular values this is the odd
//! polynomial `g(x) = a x + b x^3 + c x^5`, so `T` iterations map every
//! normalized singular value through the `T`-fold composition of `g` while
//! leaving the singular vectors untouched.
//!
//! The iterate is always kept in tall orientation (`rows >= cols`) so the Gram
//! matrix is the small one; coefficient tables are keyed the same way.

use crate::matrix::{frobenius_norm, DenseMatrix};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Inputs with Frobenius norm at or below this are rejected as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

pub const DEFAULT_ITERATIONS: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OrthError {
    #[error("input is numerically zero (frobenius norm {norm:e})")]
    DegenerateInput { norm: f64 },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("reference matrix has zero norm")]
    ZeroReference,
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("coefficient table has no default entry (a `0 0 ...` line)")]
    MissingDefault,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Quintic Newton-Schulz coefficients plus the iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub iterations: usize,
}

impl NsCoefficients {
    /// Muon's 5-step coefficients, tuned to inflate small singular values fast.
    pub const MUON: NsCoefficients = NsCoefficients {
        a: 3.4445,
        b: -4.7750,
        c: 2.0315,
        iterations: DEFAULT_ITERATIONS,
    };

    /// Order-5 Newton-Schulz; `g(1) = 1` exactly.
    pub const CLASSIC: NsCoefficients = NsCoefficients {
        a: 1.875,
        b: -1.25,
        c: 0.375,
        iterations: DEFAULT_ITERATIONS,
    };

    pub fn new(a: f64, b: f64, c: f64, iterations: usize) -> Result<Self, OrthError> {
        let coeffs = Self { a, b, c, iterations };
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn with_iterations(self, iterations: usize) -> Self {
        Self { iterations, ..self }
    }

    pub fn validate(&self) -> Result<(), OrthError> {
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return Err(OrthError::InvalidCoefficients(format!("{self:?} has a non-finite entry")));
        }
        if self.iterations == 0 {
            return Err(OrthError::InvalidCoefficients("iterations must be >= 1".into()));
        }
        Ok(())
    }

    /// One application of `g(x) = a x + b x^3 + c x^5`.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a + x2 * (self.b + self.c * x2))
    }

    /// `g` composed `iterations` times.
    pub fn compose(&self, mut x: f64) -> f64 {
        for _ in 0..self.iterations {
            x = self.apply(x);
        }
        x
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// Shape key in tall orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShapeKey {
    pub rows: usize,
    pub cols: usize,
}

impl ShapeKey {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows: rows.max(cols),
            cols: rows.min(cols),
        }
    }

    pub fn of(m: &DenseMatrix) -> Self {
        Self::new(m.rows(), m.cols())
    }

    pub fn rank(&self) -> usize {
        self.cols
    }
}

impl std::fmt::Display for ShapeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Per-shape coefficients with a default for unseen shapes.
///
/// Text format, one record per line: `rows cols T a b c`. `rows = cols = 0`
/// is the default entry; lines starting with `#` are comments, and comments
/// of the form `# key = value` are kept as metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    entries: BTreeMap<ShapeKey, NsCoefficients>,
    default: NsCoefficients,
    metadata: Vec<(String, String)>,
}

impl CoefficientTable {
    pub fn new(default: NsCoefficients) -> Self {
        Self {
            entries: BTreeMap::new(),
            default,
            metadata: Vec::new(),
        }
    }

    /// Table that resolves every shape to Muon's coefficients.
    pub fn muon_default() -> Self {
        Self::new(NsCoefficients::MUON)
    }

    pub fn insert(&mut self, rows: usize, cols: usize, coeffs: NsCoefficients) {
        self.entries.insert(ShapeKey::new(rows, cols), coeffs);
    }

    pub fn default_coefficients(&self) -> &NsCoefficients {
        &self.default
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ShapeKey, &NsCoefficients)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact entry for the shape, if any.
    pub fn get(&self, rows: usize, cols: usize) -> Option<&NsCoefficients> {
        self.entries.get(&ShapeKey::new(rows, cols))
    }

    /// Entry for the shape, falling back to the default.
    pub fn lookup(&self, rows: usize, cols: usize) -> &NsCoefficients {
        self.get(rows, cols).unwrap_or(&self.default)
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key, value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# rootopt coefficient table: rows cols T a b c\n");
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        write_record(&mut out, 0, 0, &self.default);
        for (key, coeffs) in &self.entries {
            write_record(&mut out, key.rows, key.cols, coeffs);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut entries = BTreeMap::new();
        let mut default = None;
        let mut metadata = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: String| TableError::Parse { line: idx + 1, msg };
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    metadata.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", fields.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s:?}: {e}")));
            let real = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
            let (rows, cols, iterations) = (int(fields[0])?, int(fields[1])?, int(fields[2])?);
            let coeffs = NsCoefficients::new(real(fields[3])?, real(fields[4])?, real(fields[5])?, iterations)
                .map_err(|e| err(e.to_string()))?;
            match (rows, cols) {
                (0, 0) => default = Some(coeffs),
                (0, _) | (_, 0) => return Err(err("only the default entry may have a zero dimension".into())),
                (r, c) if r < c => {
                    return Err(err(format!("shape {r}x{c} must be stored in tall orientation")))
                }
                (r, c) => {
                    entries.insert(ShapeKey { rows: r, cols: c }, coeffs);
                }
            }
        }
        Ok(Self {
            entries,
            default: default.ok_or(TableError::MissingDefault)?,
            metadata,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TableError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

impl Default for CoefficientTable {
    fn default() -> Self {
        Self::muon_default()
    }
}

fn write_record(out: &mut String, rows: usize, cols: usize, c: &NsCoefficients) {
    // `{}` on f64 prints the shortest string that parses back to the same bits
    let _ = writeln!(out, "{rows} {cols} {} {} {} {}", c.iterations, c.a, c.b, c.c);
}

/// Runs the Newton-Schulz iteration on `m / ||m||_F`. Output shape equals input shape.
pub fn ns_orthogonalize(m: &DenseMatrix, coeffs: &NsCoefficients) -> Result<DenseMatrix, OrthError> {
    coeffs.validate()?;
    let norm = frobenius_norm(m);
    if norm <= DEGENERATE_NORM {
        return Err(OrthError::DegenerateInput { norm });
    }
    let wide = m.cols() > m.rows();
    let mut x = if wide { m.transpose() } else { m.clone() };
    x.scale_in_place(1.0 / norm);

    let k = x.cols();
    for _ in 0..coeffs.iterations {
        let gram = x.gram();
        let gram2 = gram.matmul(&gram);
        // poly = a I + b G + c G^2, so that X poly = a X + b X G + c X G^2
        let mut poly = gram.scale(coeffs.b);
        poly.axpy(coeffs.c, &gram2);
        for i in 0..k {
            poly.as_mut_slice()[i * k + i] += coeffs.a;
        }
        x = x.matmul(&poly);
    }
    Ok(if wide { x.transpose() } else { x })
}

/// Newton-Schulz with the coefficients the table holds for this shape.
pub fn ns_orthogonalize_adaptive(m: &DenseMatrix, table: &CoefficientTable) -> Result<DenseMatrix, OrthError> {
    ns_orthogonalize(m, table.lookup(m.rows(), m.cols()))
}

fn check_shapes(a: &DenseMatrix, b: &DenseMatrix) -> Result<(), OrthError> {
    if a.shape() != b.shape() {
        return Err(OrthError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn squared_distance(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// `||approx - exact||_F / ||exact||_F`
pub fn relative_error(approx: &DenseMatrix, exact: &DenseMatrix) -> Result<f64, OrthError> {
    check_shapes(approx, exact)?;
    let denom = frobenius_norm(exact);
    if denom == 0.0 {
        return Err(OrthError::ZeroReference);
    }
    Ok(squared_distance(approx, exact).sqrt() / denom)
}

/// Elementwise mean squared error, `||approx - exact||_F^2 / (rows * cols)`.
pub fn orthogonalization_mse(approx: &DenseMatrix, exact: &DenseMatrix) -> Result<f64, OrthError> {
    check_shapes(approx, exact)?;
    Ok(squared_distance(approx, exact) / approx.len() as f64)
}

/// Squared error per singular value, `||approx - exact||_F^2 / min(rows, cols)`.
///
/// When `approx` shares singular vectors with `exact` this is the mean of
/// `(g(sigma_i) - 1)^2` over the spectrum.
pub fn spectral_mse(approx: &DenseMatrix, exact: &DenseMatrix) -> Result<f64, OrthError> {
    check_shapes(approx, exact)?;
    Ok(squared_distance(approx, exact) / approx.rows().min(approx.cols()) as f64)
}

/// `||m^T m - I||_F`, computed in tall orientation.
pub fn orthogonality_residual(m: &DenseMatrix) -> f64 {
    let gram = if m.rows() >= m.cols() {
        m.gram()
    } else {
        m.matmul_t(m)
    };
    gram.sub(&DenseMatrix::identity(gram.rows())).frobenius_norm()
}
