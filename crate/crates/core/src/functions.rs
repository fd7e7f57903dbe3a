//! Convex scalar fields with exact gradients and Hessians.
//!
//! The catalog is closed on purpose: every member is a polynomial of degree
//! at most two, so convexity is certifiable at construction time and all
//! derivatives are exact. The four forms cover every objective and
//! constraint the scenario schema admits:
//!
//! - `quadratic`: `(x - c)^T Q (x - c) + b^T x + r` with `Q` symmetric PSD;
//! - `affine`:    `a^T x + b`;
//! - `ball`:      `||x - c||^2 - r^2` (sublevel set 0 is the closed ball);
//! - `sum`:       sum of same-dimension members.
//!
//! JSON encoding is tagged by `kind`, e.g.
//! `{"kind":"quadratic","Q":[[...]],"c":[...],"b":[...],"r":0}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the smallest eigenvalue when certifying `Q` as PSD: rejects
/// indefinite matrices while tolerating round-off from serialized input.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("dimension mismatch: field has dimension {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "quadratic matrix must be square ({rows}x{cols}) and match c ({c_len}) and b ({b_len})"
    )]
    MalformedQuadratic {
        rows: usize,
        cols: usize,
        c_len: usize,
        b_len: usize,
    },
    #[error("quadratic matrix is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),
    #[error("quadratic matrix is not positive semidefinite (min eigenvalue {0})")]
    NotPsd(f64),
    #[error("ball radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("sum needs at least one member")]
    EmptySum,
    #[error("sum members disagree on dimension: {0} vs {1}")]
    MixedSumDimensions(usize, usize),
    #[error("zero-dimensional fields are not supported")]
    ZeroDimension,
}

/// A convex function of `x` in R^m from the closed catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub enum ScalarField {
    Quadratic {
        q: DMatrix<f64>,
        center: DVector<f64>,
        linear: DVector<f64>,
        offset: f64,
    },
    Affine {
        slope: DVector<f64>,
        offset: f64,
    },
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
    Sum(Vec<ScalarField>),
}

impl ScalarField {
    /// `(x - c)^T Q (x - c) + b^T x + r`. `q` must be symmetric PSD; it is
    /// symmetrized internally after the asymmetry check so the gradient
    /// formula `2 Q (x - c) + b` is exact.
    pub fn quadratic(
        q: DMatrix<f64>,
        center: DVector<f64>,
        linear: DVector<f64>,
        offset: f64,
    ) -> Result<Self, FieldError> {
        let m = center.len();
        if m == 0 {
            return Err(FieldError::ZeroDimension);
        }
        if q.nrows() != m || q.ncols() != m || linear.len() != m {
            return Err(FieldError::MalformedQuadratic {
                rows: q.nrows(),
                cols: q.ncols(),
                c_len: m,
                b_len: linear.len(),
            });
        }
        let scale = q.amax().max(1.0);
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(FieldError::NotSymmetric(asym));
        }
        let q = (&q + q.transpose()) * 0.5;
        let mut eigs: Vec<f64> = q
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        if eigs[0] < -PSD_TOLERANCE {
            return Err(FieldError::NotPsd(eigs[0]));
        }
        Ok(Self::Quadratic {
            q,
            center,
            linear,
            offset,
        })
    }

    /// `a^T x + b`.
    pub fn affine(slope: DVector<f64>, offset: f64) -> Result<Self, FieldError> {
        if slope.is_empty() {
            return Err(FieldError::ZeroDimension);
        }
        Ok(Self::Affine { slope, offset })
    }

    /// `||x - c||^2 - r^2`.
    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self, FieldError> {
        if center.is_empty() {
            return Err(FieldError::ZeroDimension);
        }
        if radius <= 0.0 || radius.is_nan() {
            return Err(FieldError::NonPositiveRadius(radius));
        }
        Ok(Self::Ball { center, radius })
    }

    /// Sum of same-dimension members.
    pub fn sum(terms: Vec<ScalarField>) -> Result<Self, FieldError> {
        let first = terms.first().ok_or(FieldError::EmptySum)?.dim();
        for t in &terms {
            if t.dim() != first {
                return Err(FieldError::MixedSumDimensions(first, t.dim()));
            }
        }
        Ok(Self::Sum(terms))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { center, .. } | Self::Ball { center, .. } => center.len(),
            Self::Affine { slope, .. } => slope.len(),
            Self::Sum(terms) => terms[0].dim(),
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), FieldError> {
        if x.len() != self.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64, FieldError> {
        self.check_dim(x)?;
        Ok(match self {
            Self::Quadratic {
                q,
                center,
                linear,
                offset,
            } => {
                let d = x - center;
                d.dot(&(q * &d)) + linear.dot(x) + offset
            }
            Self::Affine { slope, offset } => slope.dot(x) + offset,
            Self::Ball { center, radius } => {
                let d = x - center;
                d.dot(&d) - radius * radius
            }
            Self::Sum(terms) => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval(x)?;
                }
                acc
            }
        })
    }

    pub fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>, FieldError> {
        self.check_dim(x)?;
        Ok(match self {
            Self::Quadratic {
                q, center, linear, ..
            } => (q * (x - center)) * 2.0 + linear,
            Self::Affine { slope, .. } => slope.clone(),
            Self::Ball { center, .. } => (x - center) * 2.0,
            Self::Sum(terms) => {
                let mut acc = DVector::zeros(x.len());
                for t in terms {
                    acc += t.grad(x)?;
                }
                acc
            }
        })
    }

    pub fn hess(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, FieldError> {
        self.check_dim(x)?;
        Ok(match self {
            Self::Quadratic { q, .. } => q * 2.0,
            Self::Affine { slope, .. } => DMatrix::zeros(slope.len(), slope.len()),
            Self::Ball { center, .. } => DMatrix::identity(center.len(), center.len()) * 2.0,
            Self::Sum(terms) => {
                let mut acc = DMatrix::zeros(x.len(), x.len());
                for t in terms {
                    acc += t.hess(x)?;
                }
                acc
            }
        })
    }

    /// Compares the analytic gradient and Hessian against central differences
    /// and returns the worst relative discrepancy (relative to
    /// `max(1, |analytic entry|)`). The gradient uses step `h`; the Hessian
    /// uses `sqrt(h)`, since the double difference divides by `4h^2` and
    /// would otherwise amplify round-off past the truncation error it is
    /// meant to measure.
    pub fn finite_diff_check(&self, x: &DVector<f64>, h: f64) -> Result<f64, FieldError> {
        assert!(h > 0.0, "finite-difference step must be positive");
        self.check_dim(x)?;
        let m = x.len();
        let grad = self.grad(x)?;
        let hess = self.hess(x)?;
        let mut worst: f64 = 0.0;

        let shift = |base: &DVector<f64>, i: usize, s: f64| {
            let mut y = base.clone();
            y[i] += s;
            y
        };
        for i in 0..m {
            let fp = self.eval(&shift(x, i, h))?;
            let fm = self.eval(&shift(x, i, -h))?;
            let numeric = (fp - fm) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(1.0);
            worst = worst.max(rel);
        }
        let h2 = h.sqrt();
        for i in 0..m {
            for j in 0..m {
                let fpp = self.eval(&shift(&shift(x, i, h2), j, h2))?;
                let fpm = self.eval(&shift(&shift(x, i, h2), j, -h2))?;
                let fmp = self.eval(&shift(&shift(x, i, -h2), j, h2))?;
                let fmm = self.eval(&shift(&shift(x, i, -h2), j, -h2))?;
                let numeric = (fpp - fpm - fmp + fmm) / (4.0 * h2 * h2);
                let rel = (hess[(i, j)] - numeric).abs() / hess[(i, j)].abs().max(1.0);
                worst = worst.max(rel);
            }
        }
        Ok(worst)
    }
}

/// Serialized form: row-major matrices, plain vectors, tag field `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum FieldRepr {
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
        b: Vec<f64>,
        #[serde(default)]
        r: f64,
    },
    Affine {
        a: Vec<f64>,
        b: f64,
    },
    Ball {
        c: Vec<f64>,
        r: f64,
    },
    Sum {
        terms: Vec<FieldRepr>,
    },
}

impl TryFrom<FieldRepr> for ScalarField {
    type Error = FieldError;

    fn try_from(repr: FieldRepr) -> Result<Self, FieldError> {
        match repr {
            FieldRepr::Quadratic { q, c, b, r } => {
                let m = c.len();
                let rows = q.len();
                let cols = q.first().map_or(0, Vec::len);
                if rows != m || q.iter().any(|row| row.len() != cols) || cols != m {
                    return Err(FieldError::MalformedQuadratic {
                        rows,
                        cols,
                        c_len: m,
                        b_len: b.len(),
                    });
                }
                let flat: Vec<f64> = q.into_iter().flatten().collect();
                ScalarField::quadratic(
                    DMatrix::from_row_slice(m, m, &flat),
                    DVector::from_vec(c),
                    DVector::from_vec(b),
                    r,
                )
            }
            FieldRepr::Affine { a, b } => ScalarField::affine(DVector::from_vec(a), b),
            FieldRepr::Ball { c, r } => ScalarField::ball(DVector::from_vec(c), r),
            FieldRepr::Sum { terms } => {
                let members = terms
                    .into_iter()
                    .map(ScalarField::try_from)
                    .collect::<Result<Vec<_>, _>>()?;
                ScalarField::sum(members)
            }
        }
    }
}

impl From<ScalarField> for FieldRepr {
    fn from(f: ScalarField) -> Self {
        match f {
            ScalarField::Quadratic {
                q,
                center,
                linear,
                offset,
            } => FieldRepr::Quadratic {
                q: (0..q.nrows())
                    .map(|i| q.row(i).iter().copied().collect())
                    .collect(),
                c: center.iter().copied().collect(),
                b: linear.iter().copied().collect(),
                r: offset,
            },
            ScalarField::Affine { slope, offset } => FieldRepr::Affine {
                a: slope.iter().copied().collect(),
                b: offset,
            },
            ScalarField::Ball { center, radius } => FieldRepr::Ball {
                c: center.iter().copied().collect(),
                r: radius,
            },
            ScalarField::Sum(terms) => FieldRepr::Sum {
                terms: terms.into_iter().map(FieldRepr::from).collect(),
            },
        }
    }
}
