//! Dense small-matrix primitives.
//!
//! Everything here works on `nalgebra` dynamic matrices. Dimensions in the
//! target problems are tiny (state n <= 7, measurement m <= 3, up to 99
//! sigma points), so the routines favour clarity and predictable roundoff
//! behaviour over blocking or BLAS calls.
//!
//! The central routine is [`hyperbolic_block_triangularize`], which computes
//! the lower Cholesky factor of `A Aᵀ - B Bᵀ` directly from the array
//! `[A | B]` by a J-orthogonal transformation, without ever forming the
//! indefinite Gram matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`cholesky_lower`] before it refuses input.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// A square, lower-triangular matrix (strict upper part identically zero).
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(DMatrix<f64>);

impl LowerTriangular {
    /// Wraps `m` after checking that it is square and lower triangular.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "triangular factor must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != 0.0 {
                    return Err(Error::DimensionMismatch(format!(
                        "entry ({i},{j}) above the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    /// Keeps the lower triangle of a square matrix and zeroes the rest.
    pub fn from_lower_part(mut m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "from_lower_part needs a square matrix");
        m.fill_upper_triangle(0.0, 1);
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Diagonal matrix with the given (square-rooted) entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn has_positive_diagonal(&self) -> bool {
        self.0.diagonal().iter().all(|&d| d > 0.0)
    }

    /// `L Lᵀ`, symmetric by construction.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = &self.0 * self.0.transpose();
        symmetrize_in_place(&mut g);
        g
    }
}

/// Sign of one diagonal entry of a signature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// `sgn(x)` with `sgn(0) = +1`.
    pub fn of(x: f64) -> Self {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Diagonal ±1 signature matrix `J`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    signs: Vec<Sign>,
}

impl Signature {
    pub fn new(signs: Vec<Sign>) -> Self {
        Self { signs }
    }

    pub fn all_positive(len: usize) -> Self {
        Self {
            signs: vec![Sign::Plus; len],
        }
    }

    /// Signs of a weight vector, with zero weights mapped to `+1`.
    pub fn from_weights(w: &[f64]) -> Self {
        Self {
            signs: w.iter().map(|&x| Sign::of(x)).collect(),
        }
    }

    /// `diag(self, other)`.
    pub fn concat(&self, other: &Signature) -> Self {
        let mut signs = self.signs.clone();
        signs.extend_from_slice(&other.signs);
        Self { signs }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn pos_count(&self) -> usize {
        self.signs.iter().filter(|&&s| s == Sign::Plus).count()
    }

    pub fn neg_count(&self) -> usize {
        self.len() - self.pos_count()
    }

    /// True when every `-1` sits after every `+1`.
    pub fn is_trailing_negative(&self) -> bool {
        let first_neg = self.signs.iter().position(|&s| s == Sign::Minus);
        match first_neg {
            None => true,
            Some(k) => self.signs[k..].iter().all(|&s| s == Sign::Minus),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.len(),
            self.signs.iter().map(|s| s.value()),
        ))
    }
}

/// `(M + Mᵀ)/2` written back into `m`.
pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    symmetrize_in_place(&mut out);
    out
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Inputs whose asymmetry exceeds [`SYMMETRY_TOL`]`·‖M‖_F` are rejected;
/// smaller asymmetry is removed by symmetrizing first.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<LowerTriangular> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteState);
    }
    let n = m.nrows();
    let norm = m.norm();
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * norm {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let a = symmetrize(m);

    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { row: j, pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(LowerTriangular(l))
}

/// Which side of the unknown the triangular factor multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Solve `op(L) X = B`.
    Left,
    /// Solve `X op(L) = B`.
    Right,
}

/// Triangular solve with `op(L) = L` or `Lᵀ`.
pub fn trisolve(
    l: &LowerTriangular,
    b: &DMatrix<f64>,
    side: Side,
    transpose: bool,
) -> Result<DMatrix<f64>> {
    let n = l.dim();
    let lm = l.as_matrix();
    if let Some(index) = (0..n).find(|&i| lm[(i, i)] == 0.0) {
        return Err(Error::SingularTriangular { index });
    }
    let conformable = match side {
        Side::Left => b.nrows() == n,
        Side::Right => b.ncols() == n,
    };
    if !conformable {
        return Err(Error::DimensionMismatch(format!(
            "trisolve: factor is {n}x{n}, rhs is {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }

    let mut x = b.clone();
    match side {
        Side::Left => {
            for c in 0..x.ncols() {
                let mut col = x.column_mut(c);
                if transpose {
                    backward_transposed(lm, col.as_mut_slice());
                } else {
                    forward(lm, col.as_mut_slice());
                }
            }
        }
        Side::Right => {
            // X L = B  <=>  Lᵀ Xᵀ = Bᵀ ;  X Lᵀ = B  <=>  L Xᵀ = Bᵀ
            let mut row = vec![0.0; n];
            for r in 0..x.nrows() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = x[(r, k)];
                }
                if transpose {
                    forward(lm, &mut row);
                } else {
                    backward_transposed(lm, &mut row);
                }
                for (k, v) in row.iter().enumerate() {
                    x[(r, k)] = *v;
                }
            }
        }
    }
    Ok(x)
}

// L x = b, in place.
fn forward(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

// Lᵀ x = b, in place.
fn backward_transposed(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `X M = B` for symmetric positive-definite `M` through its Cholesky
/// factor, never forming an inverse.
pub fn spd_solve_right(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = cholesky_lower(m)?;
    let y = trisolve(&l, b, Side::Right, true)?;
    trisolve(&l, &y, Side::Right, false)
}

/// `Φ(M) = strict_lower(M) + diag(M)/2`.
pub fn phi_map(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(m.is_square(), "phi_map needs a square matrix");
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        out[(j, j)] = 0.5 * m[(j, j)];
        for i in (j + 1)..n {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

/// Result of a hyperbolic block triangularization `pre · Q = [R | 0]`.
#[derive(Debug, Clone)]
pub struct HyperbolicQr {
    post: DMatrix<f64>,
}

impl HyperbolicQr {
    /// The full `s × t` post-array.
    pub fn post_array(&self) -> &DMatrix<f64> {
        &self.post
    }

    /// The leading `s × s` lower-triangular block `R`.
    pub fn factor(&self) -> LowerTriangular {
        let s = self.post.nrows();
        LowerTriangular(self.post.view((0, 0), (s, s)).into_owned())
    }
}

/// Applies a J-orthogonal transformation from the right so that
/// `pre · Q = [R | 0]` with `R` lower triangular and positive on the
/// diagonal, hence `R Rᵀ = pre · J · preᵀ`.
///
/// Columns of `pre` with signature `+1` are first reduced to lower
/// triangular form by Householder reflectors. Then, row by row, the
/// `-1` columns are collapsed onto one column by a reflector acting inside
/// the negative block and that entry is annihilated against the diagonal
/// with a single hyperbolic rotation in mixed form. Only this last step can
/// fail: it needs `|diagonal| > |entry|`, which holds exactly when the
/// leading minors of `pre · J · preᵀ` stay positive.
pub fn hyperbolic_block_triangularize(pre: &DMatrix<f64>, j: &Signature) -> Result<HyperbolicQr> {
    let s = pre.nrows();
    let t = pre.ncols();
    if j.len() != t {
        return Err(Error::DimensionMismatch(format!(
            "signature has {} entries, pre-array has {t} columns",
            j.len()
        )));
    }
    if j.pos_count() < s {
        return Err(Error::DimensionMismatch(format!(
            "need at least {s} positive columns, signature has {}",
            j.pos_count()
        )));
    }
    if pre.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteState);
    }

    let pos: Vec<usize> = (0..t).filter(|&c| j.signs()[c] == Sign::Plus).collect();
    let neg: Vec<usize> = (0..t).filter(|&c| j.signs()[c] == Sign::Minus).collect();
    let mut a = pre.select_columns(pos.iter());
    let mut b = pre.select_columns(neg.iter());
    let p = a.ncols();
    let q = b.ncols();

    // Phase 1: A Q₁ = [L 0] with orthogonal Q₁.
    for i in 0..s {
        let alpha = householder_row(&mut a, i, i, p);
        a[(i, i)] = alpha;
    }

    // Phase 2: eliminate the negative block row by row.
    for i in 0..s {
        if q == 0 {
            break;
        }
        let beta = householder_row(&mut b, i, 0, q);
        b[(i, 0)] = beta;
        if beta == 0.0 {
            continue;
        }
        let pivot = a[(i, i)];
        if !(pivot.abs() > beta.abs()) {
            return Err(Error::HyperbolicBreakdown {
                row: i,
                pivot,
                entry: beta,
            });
        }
        let rho = beta / pivot;
        let c = ((1.0 - rho) * (1.0 + rho)).sqrt();
        for r in i..s {
            let x = a[(r, i)];
            let y = b[(r, 0)];
            let x_new = (x - rho * y) / c;
            a[(r, i)] = x_new;
            b[(r, 0)] = c * y - rho * x_new;
        }
        b[(i, 0)] = 0.0;
    }

    // Column sign flips keep J-orthogonality and make the diagonal positive.
    for i in 0..s {
        let d = a[(i, i)];
        if !(d != 0.0) || !d.is_finite() {
            return Err(Error::HyperbolicBreakdown {
                row: i,
                pivot: d,
                entry: 0.0,
            });
        }
        if d < 0.0 {
            for r in i..s {
                a[(r, i)] = -a[(r, i)];
            }
        }
    }

    let mut post = DMatrix::zeros(s, t);
    for c in 0..s {
        for r in c..s {
            post[(r, c)] = a[(r, c)];
        }
    }
    Ok(HyperbolicQr { post })
}

/// Reflects columns `c0..c1` of `m` (rows `row..`) so that row `row` becomes
/// `(alpha, 0, …, 0)` inside that column range. Returns `alpha`; entries of
/// row `row` past `c0` are set to exact zero.
fn householder_row(m: &mut DMatrix<f64>, row: usize, c0: usize, c1: usize) -> f64 {
    let len = c1 - c0;
    if len == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (c0..c1).map(|c| m[(row, c)]).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    if len == 1 {
        return v[0];
    }
    let tail_zero = v[1..].iter().all(|&x| x == 0.0);
    if tail_zero {
        return v[0];
    }
    let alpha = if v[0] >= 0.0 { -norm } else { norm };
    v[0] -= alpha;
    let vtv: f64 = v.iter().map(|x| x * x).sum();
    let scale = 2.0 / vtv;
    let nrows = m.nrows();
    for r in row..nrows {
        let dot: f64 = (0..len).map(|k| m[(r, c0 + k)] * v[k]).sum();
        let f = scale * dot;
        for k in 0..len {
            m[(r, c0 + k)] -= f * v[k];
        }
    }
    for c in (c0 + 1)..c1 {
        m[(row, c)] = 0.0;
    }
    alpha
}
