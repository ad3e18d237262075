//! Dense complex linear algebra and quantum-state primitives on multipartite
//! Hilbert spaces.
//!
//! Everything here is an immutable value; operations are pure functions.
//! Matrices are stored dense. Structure exploitation (diagonal Hamiltonians,
//! symmetric subspaces) lives in the modules that need it.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::{Error, Result};

/// Complex double-precision scalar.
pub type C64 = Complex<f64>;

/// Tolerance used for Hermiticity checks.
pub const HERM_TOL: f64 = 1e-10;
/// Eigenvalue tolerance for positive-semidefiniteness checks.
pub const PSD_TOL: f64 = -1e-10;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub(crate) fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Ordered list of subsystem dimensions with unique labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemShape {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl SystemShape {
    pub fn new(dims: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        if dims.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} dims but {} labels",
                dims.len(),
                labels.len()
            )));
        }
        if dims.is_empty() {
            return Err(Error::Shape("empty shape".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape("zero subsystem dimension".into()));
        }
        let mut total: usize = 1;
        for &d in &dims {
            total = total
                .checked_mul(d)
                .filter(|&t| t <= 1 << 26)
                .ok_or(Error::DimensionOverflow(dims.len()))?;
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Shape(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { dims, labels })
    }

    /// `n` qubits labelled `q0..q{n-1}`.
    pub fn qubits(n: usize) -> Self {
        Self::qudits(n, 2)
    }

    /// `n` qudits of local dimension `d`.
    pub fn qudits(n: usize, d: usize) -> Self {
        Self::new(vec![d; n], (0..n).map(|i| format!("q{i}")).collect())
            .expect("valid qudit shape")
    }

    /// One subsystem of dimension `d`.
    pub fn single(d: usize, label: &str) -> Self {
        Self::new(vec![d], vec![label.to_string()]).expect("valid single shape")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Concatenation for tensor products; colliding labels from `other` get a
    /// `'` suffix until unique.
    pub fn concat(&self, other: &SystemShape) -> Result<Self> {
        let mut dims = self.dims.clone();
        let mut labels = self.labels.clone();
        for (d, l) in other.dims.iter().zip(&other.labels) {
            let mut name = l.clone();
            while labels.contains(&name) {
                name.push('\'');
            }
            dims.push(*d);
            labels.push(name);
        }
        Self::new(dims, labels)
    }

    /// Row-major strides of the subsystem index decomposition.
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }
}

/// Dense complex matrix with subsystem metadata on both index legs.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
    row_shape: SystemShape,
    col_shape: SystemShape,
}

impl Operator {
    pub fn new(mat: DMatrix<C64>, row_shape: SystemShape, col_shape: SystemShape) -> Result<Self> {
        if mat.nrows() != row_shape.total_dim() || mat.ncols() != col_shape.total_dim() {
            return Err(Error::Shape(format!(
                "matrix is {}x{} but shapes give {}x{}",
                mat.nrows(),
                mat.ncols(),
                row_shape.total_dim(),
                col_shape.total_dim()
            )));
        }
        Ok(Self {
            mat,
            row_shape,
            col_shape,
        })
    }

    /// Square operator on a single space.
    pub fn square(mat: DMatrix<C64>, shape: SystemShape) -> Result<Self> {
        Self::new(mat, shape.clone(), shape)
    }

    pub fn identity(shape: SystemShape) -> Self {
        let d = shape.total_dim();
        Self {
            mat: DMatrix::identity(d, d),
            row_shape: shape.clone(),
            col_shape: shape,
        }
    }

    pub fn zeros(row_shape: SystemShape, col_shape: SystemShape) -> Self {
        let mat = DMatrix::zeros(row_shape.total_dim(), col_shape.total_dim());
        Self {
            mat,
            row_shape,
            col_shape,
        }
    }

    pub fn from_real_diag(diag: &[f64], shape: SystemShape) -> Result<Self> {
        if diag.len() != shape.total_dim() {
            return Err(Error::Shape("diagonal length mismatch".into()));
        }
        let mut mat = DMatrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            mat[(i, i)] = cr(v);
        }
        Self::square(mat, shape)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn row_shape(&self) -> &SystemShape {
        &self.row_shape
    }

    pub fn col_shape(&self) -> &SystemShape {
        &self.col_shape
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.mat.nrows() == self.mat.ncols()
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            mat: self.mat.adjoint(),
            row_shape: self.col_shape.clone(),
            col_shape: self.row_shape.clone(),
        }
    }

    /// Operator product; total dimensions must chain (labels need not match).
    pub fn mul(&self, rhs: &Operator) -> Result<Operator> {
        if self.ncols() != rhs.nrows() {
            return Err(Error::Shape(format!(
                "cannot chain {}x{} with {}x{}",
                self.nrows(),
                self.ncols(),
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        Ok(Operator {
            mat: &self.mat * &rhs.mat,
            row_shape: self.row_shape.clone(),
            col_shape: rhs.col_shape.clone(),
        })
    }

    pub fn add(&self, rhs: &Operator) -> Result<Operator> {
        if self.nrows() != rhs.nrows() || self.ncols() != rhs.ncols() {
            return Err(Error::Shape("addition shape mismatch".into()));
        }
        Ok(Operator {
            mat: &self.mat + &rhs.mat,
            row_shape: self.row_shape.clone(),
            col_shape: self.col_shape.clone(),
        })
    }

    pub fn sub(&self, rhs: &Operator) -> Result<Operator> {
        if self.nrows() != rhs.nrows() || self.ncols() != rhs.ncols() {
            return Err(Error::Shape("subtraction shape mismatch".into()));
        }
        Ok(Operator {
            mat: &self.mat - &rhs.mat,
            row_shape: self.row_shape.clone(),
            col_shape: self.col_shape.clone(),
        })
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Operator {
            mat: self.mat.map(|x| x * factor),
            row_shape: self.row_shape.clone(),
            col_shape: self.col_shape.clone(),
        }
    }

    pub fn trace(&self) -> C64 {
        let n = self.mat.nrows().min(self.mat.ncols());
        (0..n).map(|i| self.mat[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.mat - self.mat.adjoint()).norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol * (1.0 + self.mat.norm())
    }

    /// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
    /// Columns of the returned matrix are the matching orthonormal eigenvectors.
    pub fn hermitian_eig(&self) -> Result<(Vec<f64>, DMatrix<C64>)> {
        let dev = self.hermiticity_deviation();
        if dev > 1e-8 * (1.0 + self.mat.norm()) {
            return Err(Error::NotHermitian(dev));
        }
        // Symmetrize so the eigensolver sees an exactly Hermitian matrix.
        let sym = (&self.mat + self.mat.adjoint()).map(|x| x * cr(0.5));
        Ok(hermitian_eig_matrix(&sym))
    }

    /// Difference between the largest and smallest eigenvalues.
    pub fn spectral_range(&self) -> Result<f64> {
        let (vals, _) = self.hermitian_eig()?;
        Ok(vals.last().unwrap() - vals.first().unwrap())
    }

    /// Largest eigenvalue of a Hermitian operator.
    pub fn lambda_max(&self) -> Result<f64> {
        let (vals, _) = self.hermitian_eig()?;
        Ok(*vals.last().unwrap())
    }

    /// PSD square root; eigenvalues within `PSD_TOL` of zero are clamped.
    pub fn sqrt_psd(&self) -> Result<Operator> {
        let (vals, vecs) = self.hermitian_eig()?;
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(&min) = vals.first() {
            if min < PSD_TOL * (1.0 + scale) {
                return Err(Error::NotPsd(min));
            }
        }
        let roots: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
        let mut mat = DMatrix::zeros(self.nrows(), self.ncols());
        for (k, &r) in roots.iter().enumerate() {
            let col = vecs.column(k);
            for i in 0..self.nrows() {
                for j in 0..self.ncols() {
                    mat[(i, j)] += col[i] * col[j].conj() * cr(r);
                }
            }
        }
        Ok(Operator {
            mat,
            row_shape: self.row_shape.clone(),
            col_shape: self.col_shape.clone(),
        })
    }

    /// Tensor product with concatenated shapes.
    pub fn kron(&self, rhs: &Operator) -> Result<Operator> {
        let row_shape = self.row_shape.concat(&rhs.row_shape)?;
        let col_shape = self.col_shape.concat(&rhs.col_shape)?;
        Ok(Operator {
            mat: self.mat.kronecker(&rhs.mat),
            row_shape,
            col_shape,
        })
    }

    /// Trace over every subsystem whose label is not in `keep`.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Operator> {
        if !self.is_square() || self.row_shape != self.col_shape {
            return Err(Error::Shape("partial trace needs matching square shapes".into()));
        }
        let shape = &self.row_shape;
        for l in keep {
            if shape.index_of(l).is_none() {
                return Err(Error::UnknownLabel((*l).to_string()));
            }
        }
        let kept: Vec<usize> = (0..shape.num_subsystems())
            .filter(|&i| keep.contains(&shape.labels[i].as_str()))
            .collect();
        let traced: Vec<usize> = (0..shape.num_subsystems())
            .filter(|i| !kept.contains(i))
            .collect();
        let strides = shape.strides();
        let kd: usize = kept.iter().map(|&i| shape.dims[i]).product();
        let td: usize = traced.iter().map(|&i| shape.dims[i]).product();
        let kept_dims: Vec<usize> = kept.iter().map(|&i| shape.dims[i]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&i| shape.dims[i]).collect();

        let unrank = |mut r: usize, dims: &[usize], subs: &[usize], strides: &[usize]| {
            let mut idx = 0usize;
            for (pos, &sub) in subs.iter().enumerate().rev() {
                let d = dims[pos];
                idx += (r % d) * strides[sub];
                r /= d;
            }
            idx
        };

        let mut mat = DMatrix::zeros(kd, kd);
        for a in 0..kd {
            let base_a = unrank(a, &kept_dims, &kept, &strides);
            for b in 0..kd {
                let base_b = unrank(b, &kept_dims, &kept, &strides);
                let mut acc = c(0.0, 0.0);
                for t in 0..td {
                    let off = unrank(t, &traced_dims, &traced, &strides);
                    acc += self.mat[(base_a + off, base_b + off)];
                }
                mat[(a, b)] = acc;
            }
        }
        let new_shape = SystemShape::new(
            kept_dims,
            kept.iter().map(|&i| shape.labels[i].clone()).collect(),
        )?;
        Operator::square(mat, new_shape)
    }
}

/// Eigendecomposition of an exactly Hermitian matrix, ascending eigenvalues.
///
/// The QL iteration underneath can fail (NaN eigenvalues) on matrices with
/// many exactly-zero rows; in that case the matrix is conjugated by a fixed
/// random unitary — which leaves the spectrum untouched but makes the
/// iteration generic — and the eigenvectors are rotated back.
pub fn hermitian_eig_matrix(mat: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let d = mat.nrows();
    let mut work = mat.clone();
    let mut basis: Option<DMatrix<C64>> = None;
    for attempt in 0..4 {
        let eig = work.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|v| v.is_finite()) {
            let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let mut vecs = DMatrix::zeros(d, d);
            for (k, &i) in order.iter().enumerate() {
                vecs.set_column(k, &eig.eigenvectors.column(i));
            }
            if let Some(q) = basis {
                vecs = q * vecs;
            }
            return (vals, vecs);
        }
        let q = deterministic_unitary(d, attempt as u64);
        work = q.adjoint() * mat * &q;
        work = (&work + work.adjoint()) * cr(0.5);
        basis = Some(q);
    }
    panic!("Hermitian eigendecomposition failed to converge ({d} x {d})");
}

/// Deterministic Haar-ish unitary from the QR decomposition of a seeded
/// Gaussian matrix.
fn deterministic_unitary(d: usize, seed: u64) -> DMatrix<C64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ seed);
    let mut g = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            // Box-Muller from uniform draws; exact distribution is irrelevant
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (-2.0 * u1.ln()).sqrt();
            g[(i, j)] = C64::new(r * u2.cos(), r * u2.sin());
        }
    }
    g.qr().q()
}

/// `e^{-i t H}` for Hermitian `H`.
pub fn hermitian_evolution(h: &Operator, t: f64) -> Result<Operator> {
    let (vals, vecs) = h.hermitian_eig()?;
    let d = h.nrows();
    let mut mat = DMatrix::zeros(d, d);
    for (k, &v) in vals.iter().enumerate() {
        let phase = c(0.0, -v * t).exp();
        let col = vecs.column(k);
        for i in 0..d {
            for j in 0..d {
                mat[(i, j)] += col[i] * col[j].conj() * phase;
            }
        }
    }
    Operator::square(mat, h.row_shape().clone())
}

/// Density matrix: PSD, unit trace.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        if !op.is_square() {
            return Err(Error::Shape("density matrix must be square".into()));
        }
        let dev = op.hermiticity_deviation();
        if dev > 1e-8 * (1.0 + op.frobenius_norm()) {
            return Err(Error::NotHermitian(dev));
        }
        let (vals, _) = op.hermitian_eig()?;
        if vals[0] < PSD_TOL * (1.0 + vals.last().unwrap().abs()) {
            return Err(Error::NotPsd(vals[0]));
        }
        let tr = op.trace().re;
        if (tr - 1.0).abs() > HERM_TOL.max(1e-10) {
            return Err(Error::NotTraceOne(tr));
        }
        Ok(Self { op })
    }

    /// Pure state `|psi><psi|` from an unnormalized state vector.
    pub fn pure(state: &[C64], shape: SystemShape) -> Result<Self> {
        let norm: f64 = state.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let d = state.len();
        let mut mat = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                mat[(i, j)] = state[i] * state[j].conj() / cr(norm * norm);
            }
        }
        Self::new(Operator::square(mat, shape)?)
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }
}

/// Uhlmann fidelity `Tr sqrt(rho^{1/2} sigma rho^{1/2})`, clamped to [0, 1].
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.op().nrows() != sigma.op().nrows() {
        return Err(Error::Shape("fidelity dimension mismatch".into()));
    }
    let root = rho.op().sqrt_psd()?;
    let inner = root.mul(sigma.op())?.mul(&root)?;
    // Eigenvalues of the PSD product; tiny negatives are truncation noise.
    let (vals, _) = inner.hermitian_eig()?;
    let f: f64 = vals.iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Purified distance `sqrt(1 - f^2)`.
pub fn purified_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let f = fidelity(rho, sigma)?;
    Ok((1.0 - f * f).max(0.0).sqrt())
}

/// Contract `<k|` at subsystem `site` of a tall matrix whose rows carry the
/// product index of `dims`. Returns the reduced matrix on the remaining sites.
pub fn site_bra_apply(v: &DMatrix<C64>, dims: &[usize], site: usize, k: usize) -> DMatrix<C64> {
    assert!(site < dims.len() && k < dims[site]);
    let right: usize = dims[site + 1..].iter().product();
    let left: usize = dims[..site].iter().product();
    let d = dims[site];
    let mut out = DMatrix::zeros(left * right, v.ncols());
    for l in 0..left {
        for r in 0..right {
            let src = (l * d + k) * right + r;
            let dst = l * right + r;
            for col in 0..v.ncols() {
                out[(dst, col)] = v[(src, col)];
            }
        }
    }
    out
}

/// Unitary permuting subsystems: basis state with subsystem indices
/// `(i_0, ..)` maps to the state where new slot `p` carries old slot
/// `perm[p]`.
pub fn permutation_operator(shape: &SystemShape, perm: &[usize]) -> Result<Operator> {
    let n = shape.num_subsystems();
    if perm.len() != n || {
        let mut seen = vec![false; n];
        perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
    } {
        return Err(Error::InvalidParameter("invalid permutation".into()));
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| shape.dims()[p]).collect();
    let new_labels: Vec<String> = perm.iter().map(|&p| shape.labels()[p].clone()).collect();
    let new_shape = SystemShape::new(new_dims, new_labels)?;
    let strides_old = shape.strides();
    let strides_new = new_shape.strides();
    let d = shape.total_dim();
    let mut mat = DMatrix::zeros(d, d);
    for idx in 0..d {
        // Decompose idx in the old ordering, re-rank in the new one.
        let mut rem = idx;
        let mut sub = vec![0usize; n];
        for s in 0..n {
            sub[s] = rem / strides_old[s];
            rem %= strides_old[s];
        }
        let mut new_idx = 0;
        for p in 0..n {
            new_idx += sub[perm[p]] * strides_new[p];
        }
        mat[(new_idx, idx)] = cr(1.0);
    }
    Operator::new(mat, new_shape, shape.clone())
}
