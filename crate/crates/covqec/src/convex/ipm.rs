//! Dense primal-dual interior-point solver for small semidefinite programs.
//!
//! Problem form:
//!
//! ```text
//!   minimize    <c, x> + <q, u>
//!   subject to  A x + B u = b,     x in K,   u free
//! ```
//!
//! where `K` is a product of nonnegative-orthant and real-symmetric PSD
//! blocks. PSD blocks use the scaled `svec` coordinates (off-diagonals times
//! sqrt(2)) so Euclidean inner products match trace inner products.
//!
//! The algorithm is a Nesterov-Todd scaled predictor-corrector method on the
//! homogeneous self-dual embedding, with a dense Schur-complement solve on
//! the constraint multipliers. Infeasible and unbounded problems are
//! reported through the embedding certificates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Nonneg(usize),
    /// Real symmetric PSD block of the given side length.
    Psd(usize),
}

impl Cone {
    fn svec_len(&self) -> usize {
        match *self {
            Cone::Nonneg(n) => n,
            Cone::Psd(d) => d * (d + 1) / 2,
        }
    }

    fn degree(&self) -> usize {
        match *self {
            Cone::Nonneg(n) => n,
            Cone::Psd(d) => d,
        }
    }
}

/// Sparse constraint row: `sum coeffs * x + sum coeffs * u = rhs`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Row {
    pub cone: Vec<(usize, f64)>,
    pub free: Vec<(usize, f64)>,
}

/// Handle to a cone block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRef(pub usize);

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub cones: Vec<Cone>,
    pub num_free: usize,
    pub cone_cost: Vec<f64>,
    pub free_cost: Vec<f64>,
    pub rows: Vec<Row>,
    pub rhs: Vec<f64>,
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_nonneg(&mut self, n: usize) -> BlockRef {
        self.cones.push(Cone::Nonneg(n));
        self.cone_cost.resize(self.cone_dim(), 0.0);
        BlockRef(self.cones.len() - 1)
    }

    pub fn add_psd(&mut self, d: usize) -> BlockRef {
        self.cones.push(Cone::Psd(d));
        self.cone_cost.resize(self.cone_dim(), 0.0);
        BlockRef(self.cones.len() - 1)
    }

    pub fn add_free(&mut self, n: usize) -> usize {
        let start = self.num_free;
        self.num_free += n;
        self.free_cost.resize(self.num_free, 0.0);
        start
    }

    pub fn cone_dim(&self) -> usize {
        self.cones.iter().map(|c| c.svec_len()).sum()
    }

    pub fn block_offset(&self, b: BlockRef) -> usize {
        self.cones[..b.0].iter().map(|c| c.svec_len()).sum()
    }

    /// svec coordinate and coefficient for matrix entry `(i, j)` of a PSD
    /// block, such that `coeff * x[coord]` contributes `v * X_ij` (+ the
    /// symmetric term when off-diagonal) to `Tr(A X)`.
    pub fn psd_coord(&self, b: BlockRef, i: usize, j: usize, v: f64) -> (usize, f64) {
        let d = match self.cones[b.0] {
            Cone::Psd(d) => d,
            _ => panic!("psd_coord on non-PSD block"),
        };
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        assert!(hi < d);
        let idx = self.block_offset(b) + hi * (hi + 1) / 2 + lo;
        // Tr(A X) with A_ij = A_ji = v gives 2 v X_ij = (sqrt2 v)(sqrt2 X_ij).
        let coeff = if lo == hi { v } else { SQRT2 * v };
        (idx, coeff)
    }

    pub fn nonneg_coord(&self, b: BlockRef, i: usize) -> usize {
        match self.cones[b.0] {
            Cone::Nonneg(n) => assert!(i < n),
            _ => panic!("nonneg_coord on non-nonneg block"),
        }
        self.block_offset(b) + i
    }

    /// Accumulate `v * X_ij` (Hermitian pair) into the objective.
    pub fn add_psd_cost(&mut self, b: BlockRef, i: usize, j: usize, v: f64) {
        let (idx, coeff) = self.psd_coord(b, i, j, v);
        self.cone_cost[idx] += coeff;
    }

    pub fn add_nonneg_cost(&mut self, b: BlockRef, i: usize, v: f64) {
        let idx = self.nonneg_coord(b, i);
        self.cone_cost[idx] += v;
    }

    pub fn add_free_cost(&mut self, idx: usize, v: f64) {
        self.free_cost[idx] += v;
    }

    pub fn add_row(&mut self, row: Row, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    fn validate(&self) -> Result<()> {
        if self.cones.is_empty() {
            return Err(Error::IllPosed("no cone blocks".into()));
        }
        let n = self.cone_dim();
        let all_finite = self
            .cone_cost
            .iter()
            .chain(&self.free_cost)
            .chain(&self.rhs)
            .all(|v| v.is_finite())
            && self.rows.iter().all(|r| {
                r.cone.iter().all(|&(i, v)| i < n && v.is_finite())
                    && r.free.iter().all(|&(i, v)| i < self.num_free && v.is_finite())
            });
        if !all_finite {
            return Err(Error::IllPosed("non-finite or out-of-range problem data".into()));
        }
        Ok(())
    }
}

/// Helper for building a sparse constraint row.
#[derive(Debug, Default, Clone)]
pub struct RowBuilder {
    row: Row,
}

impl RowBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn psd(mut self, p: &SdpProblem, b: BlockRef, i: usize, j: usize, v: f64) -> Self {
        let (idx, coeff) = p.psd_coord(b, i, j, v);
        self.row.cone.push((idx, coeff));
        self
    }

    pub fn nonneg(mut self, p: &SdpProblem, b: BlockRef, i: usize, v: f64) -> Self {
        self.row.cone.push((p.nonneg_coord(b, i), v));
        self
    }

    pub fn free(mut self, idx: usize, v: f64) -> Self {
        self.row.free.push((idx, v));
        self
    }

    pub fn finish(mut self) -> Row {
        // Merge duplicate coordinates so Schur assembly sees each once.
        self.row.cone.sort_by_key(|&(i, _)| i);
        self.row.cone.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        self.row.free.sort_by_key(|&(i, _)| i);
        self.row.free.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        self.row
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    /// Cone part of the primal solution in svec coordinates.
    pub x: Vec<f64>,
    pub free: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

impl SdpSolution {
    /// Extract a PSD block of the primal solution as a dense matrix.
    pub fn psd_block(&self, p: &SdpProblem, b: BlockRef) -> DMatrix<f64> {
        let d = match p.cones[b.0] {
            Cone::Psd(d) => d,
            _ => panic!("not a PSD block"),
        };
        let off = p.block_offset(b);
        svec_to_mat(&self.x[off..off + d * (d + 1) / 2], d)
    }

    pub fn nonneg_block(&self, p: &SdpProblem, b: BlockRef) -> Vec<f64> {
        let n = match p.cones[b.0] {
            Cone::Nonneg(n) => n,
            _ => panic!("not a nonneg block"),
        };
        let off = p.block_offset(b);
        self.x[off..off + n].to_vec()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            max_iter: 120,
        }
    }
}

pub fn solve(p: &SdpProblem) -> Result<SdpSolution> {
    solve_with(p, &SolveOptions::default())
}

// ---------------------------------------------------------------------------
// svec helpers

pub(crate) fn svec_to_mat(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                m[(i, j)] = v[k];
            } else {
                m[(i, j)] = v[k] / SQRT2;
                m[(j, i)] = v[k] / SQRT2;
            }
            k += 1;
        }
    }
    m
}

pub(crate) fn mat_to_svec(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                v.push(m[(i, j)]);
            } else {
                v.push(SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
    }
    v
}

// ---------------------------------------------------------------------------
// NT scaling

enum Scaling {
    Nonneg {
        g: Vec<f64>,      // x/s
        lambda: Vec<f64>, // sqrt(x s)
        w: Vec<f64>,      // sqrt(x/s)
    },
    Psd {
        g: DMatrix<f64>,    // R R^T
        r: DMatrix<f64>,    // W^T(V) = R V R^T
        rinv: DMatrix<f64>, // W^{-T}(X) = Rinv X Rinv^T
        sigma: Vec<f64>,    // scaled-point eigenvalues
    },
}

fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    // Cholesky when comfortably PD, eigenvalue clamping otherwise.
    if let Some(chol) = m.clone().cholesky() {
        return chol.l();
    }
    let eig = m.clone().symmetric_eigen();
    let floor = eig.eigenvalues.amax() * 1e-14 + 1e-300;
    let mut l = eig.eigenvectors;
    for j in 0..l.ncols() {
        let s = eig.eigenvalues[j].max(floor).sqrt();
        for i in 0..l.nrows() {
            l[(i, j)] *= s;
        }
    }
    l
}

fn compute_scaling(cone: &Cone, x: &[f64], s: &[f64]) -> Result<Scaling> {
    match *cone {
        Cone::Nonneg(_) => {
            let mut g = Vec::with_capacity(x.len());
            let mut lambda = Vec::with_capacity(x.len());
            let mut w = Vec::with_capacity(x.len());
            for (&xi, &si) in x.iter().zip(s) {
                if xi <= 0.0 || si <= 0.0 {
                    return Err(Error::Solver("iterate left the cone interior".into()));
                }
                g.push(xi / si);
                lambda.push((xi * si).sqrt());
                w.push((xi / si).sqrt());
            }
            Ok(Scaling::Nonneg { g, lambda, w })
        }
        Cone::Psd(d) => {
            let xm = svec_to_mat(x, d);
            let sm = svec_to_mat(s, d);
            let lx = psd_factor(&xm);
            let ls = psd_factor(&sm);
            let m = ls.transpose() * &lx;
            let svd = m.svd(true, true);
            let u = svd.u.as_ref().unwrap();
            let vt = svd.v_t.as_ref().unwrap();
            let mut sig_inv_sqrt = Vec::with_capacity(d);
            let mut sigma = Vec::with_capacity(d);
            for k in 0..d {
                let sv = svd.singular_values[k].max(1e-300);
                sigma.push(sv);
                sig_inv_sqrt.push(1.0 / sv.sqrt());
            }
            // R = Lx V Sigma^{-1/2}; Rinv = Sigma^{-1/2} U^T Ls^T.
            let mut v = vt.transpose();
            for j in 0..d {
                for i in 0..d {
                    v[(i, j)] *= sig_inv_sqrt[j];
                }
            }
            let r = &lx * v;
            let mut ut = u.transpose();
            for i in 0..d {
                for j in 0..d {
                    ut[(i, j)] *= sig_inv_sqrt[i];
                }
            }
            let rinv = ut * ls.transpose();
            let g = &r * r.transpose();
            Ok(Scaling::Psd { g, r, rinv, sigma })
        }
    }
}

// Layout of cone blocks inside the long vectors.
struct Layout {
    offsets: Vec<usize>,
    total: usize,
}

fn layout(p: &SdpProblem) -> Layout {
    let mut offsets = Vec::with_capacity(p.cones.len());
    let mut total = 0;
    for c in &p.cones {
        offsets.push(total);
        total += c.svec_len();
    }
    Layout { offsets, total }
}

// ---------------------------------------------------------------------------
// Solver state and main loop

struct Work<'a> {
    p: &'a SdpProblem,
    lay: Layout,
}

impl Work<'_> {
    /// y <- A x (cone part) + B u (free part)
    fn a_apply(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        for (k, row) in self.p.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, v) in &row.cone {
                acc += v * x[i];
            }
            for &(i, v) in &row.free {
                acc += v * u[i];
            }
            out[k] = acc;
        }
    }

    /// (xc, xf) <- (A^T y, B^T y)
    fn at_apply(&self, y: &[f64], out_cone: &mut [f64], out_free: &mut [f64]) {
        out_cone.iter_mut().for_each(|v| *v = 0.0);
        out_free.iter_mut().for_each(|v| *v = 0.0);
        for (k, row) in self.p.rows.iter().enumerate() {
            let yk = y[k];
            if yk == 0.0 {
                continue;
            }
            for &(i, v) in &row.cone {
                out_cone[i] += v * yk;
            }
            for &(i, v) in &row.free {
                out_free[i] += v * yk;
            }
        }
    }

    /// out <- G x  where G = W^T W blockwise (dense input).
    fn g_apply(&self, scalings: &[Scaling], x: &[f64], out: &mut [f64]) {
        for (bi, cone) in self.p.cones.iter().enumerate() {
            let off = self.lay.offsets[bi];
            let len = cone.svec_len();
            match &scalings[bi] {
                Scaling::Nonneg { g, .. } => {
                    for i in 0..len {
                        out[off + i] = g[i] * x[off + i];
                    }
                }
                Scaling::Psd { g, .. } => {
                    let d = cone.degree();
                    let xm = svec_to_mat(&x[off..off + len], d);
                    let res = g * xm * g;
                    let sv = mat_to_svec(&res);
                    out[off..off + len].copy_from_slice(&sv);
                }
            }
        }
    }

    /// G applied to a sparse row, written into a dense buffer.
    fn g_apply_row(&self, scalings: &[Scaling], row: &Row, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        // Group the row's entries by block.
        for (bi, cone) in self.p.cones.iter().enumerate() {
            let off = self.lay.offsets[bi];
            let len = cone.svec_len();
            let entries: Vec<(usize, f64)> = row
                .cone
                .iter()
                .filter(|&&(i, _)| i >= off && i < off + len)
                .map(|&(i, v)| (i - off, v))
                .collect();
            if entries.is_empty() {
                continue;
            }
            match &scalings[bi] {
                Scaling::Nonneg { g, .. } => {
                    for &(i, v) in &entries {
                        out[off + i] = g[i] * v;
                    }
                }
                Scaling::Psd { g, .. } => {
                    let d = cone.degree();
                    // Sparse A from svec entries.
                    let mut touched: Vec<usize> = Vec::new();
                    let mut t = DMatrix::<f64>::zeros(d, d); // rows of A*G
                    for &(k, v) in &entries {
                        // invert svec index within block
                        let (i, j) = svec_unindex(k);
                        let a = if i == j { v } else { v / SQRT2 };
                        // A has entries (i,j) and (j,i) with value a
                        for col in 0..d {
                            t[(i, col)] += a * g[(j, col)];
                        }
                        if i != j {
                            for col in 0..d {
                                t[(j, col)] += a * g[(i, col)];
                            }
                        }
                        if !touched.contains(&i) {
                            touched.push(i);
                        }
                        if !touched.contains(&j) {
                            touched.push(j);
                        }
                    }
                    // out_mat = G * T, using only the touched rows of T.
                    let mut om = DMatrix::<f64>::zeros(d, d);
                    for &rrow in &touched {
                        for i in 0..d {
                            let gi = g[(i, rrow)];
                            if gi == 0.0 {
                                continue;
                            }
                            for jcol in 0..d {
                                om[(i, jcol)] += gi * t[(rrow, jcol)];
                            }
                        }
                    }
                    let sv = mat_to_svec(&om);
                    out[off..off + len].copy_from_slice(&sv);
                }
            }
        }
    }

    fn wt_apply(&self, scalings: &[Scaling], v: &[f64], out: &mut [f64]) {
        self.scale_apply(scalings, v, out, false, false)
    }

    fn winv_t_apply(&self, scalings: &[Scaling], v: &[f64], out: &mut [f64]) {
        self.scale_apply(scalings, v, out, true, false)
    }

    fn w_apply(&self, scalings: &[Scaling], v: &[f64], out: &mut [f64]) {
        self.scale_apply(scalings, v, out, false, true)
    }

    /// Apply one of the NT scaling maps. `inv` selects W^{-T}; `transp`
    /// selects W instead of W^T.
    fn scale_apply(&self, scalings: &[Scaling], v: &[f64], out: &mut [f64], inv: bool, transp: bool) {
        for (bi, cone) in self.p.cones.iter().enumerate() {
            let off = self.lay.offsets[bi];
            let len = cone.svec_len();
            match &scalings[bi] {
                Scaling::Nonneg { w, .. } => {
                    for i in 0..len {
                        let f = if inv { 1.0 / w[i] } else { w[i] };
                        out[off + i] = f * v[off + i];
                    }
                }
                Scaling::Psd { r, rinv, .. } => {
                    let d = cone.degree();
                    let vm = svec_to_mat(&v[off..off + len], d);
                    let res = if inv {
                        rinv * vm * rinv.transpose()
                    } else if transp {
                        // W(V) = R^T V R
                        r.transpose() * vm * r
                    } else {
                        // W^T(V) = R V R^T
                        r * vm * r.transpose()
                    };
                    let sv = mat_to_svec(&res);
                    out[off..off + len].copy_from_slice(&sv);
                }
            }
        }
    }

    /// Solve lambda o v = d in the scaled space.
    fn lambda_solve(&self, scalings: &[Scaling], d_in: &[f64], out: &mut [f64]) {
        for (bi, cone) in self.p.cones.iter().enumerate() {
            let off = self.lay.offsets[bi];
            let len = cone.svec_len();
            match &scalings[bi] {
                Scaling::Nonneg { lambda, .. } => {
                    for i in 0..len {
                        out[off + i] = d_in[off + i] / lambda[i];
                    }
                }
                Scaling::Psd { sigma, .. } => {
                    let d = cone.degree();
                    let dm = svec_to_mat(&d_in[off..off + len], d);
                    let mut vm = DMatrix::zeros(d, d);
                    for i in 0..d {
                        for j in 0..d {
                            vm[(i, j)] = 2.0 * dm[(i, j)] / (sigma[i] + sigma[j]);
                        }
                    }
                    let sv = mat_to_svec(&vm);
                    out[off..off + len].copy_from_slice(&sv);
                }
            }
        }
    }

    /// Max step alpha so that lambda + alpha * dir stays in the cone, with
    /// dir given in the scaled space.
    fn max_step(&self, scalings: &[Scaling], dir: &[f64]) -> f64 {
        let mut alpha: f64 = f64::INFINITY;
        for (bi, cone) in self.p.cones.iter().enumerate() {
            let off = self.lay.offsets[bi];
            let len = cone.svec_len();
            match &scalings[bi] {
                Scaling::Nonneg { lambda, .. } => {
                    for i in 0..len {
                        if dir[off + i] < 0.0 {
                            alpha = alpha.min(-lambda[i] / dir[off + i]);
                        }
                    }
                }
                Scaling::Psd { sigma, .. } => {
                    let d = cone.degree();
                    let dm = svec_to_mat(&dir[off..off + len], d);
                    // lambda^{-1/2} D lambda^{-1/2}
                    let mut m = dm;
                    for i in 0..d {
                        for j in 0..d {
                            m[(i, j)] /= (sigma[i] * sigma[j]).sqrt();
                        }
                    }
                    let eig = m.symmetric_eigen();
                    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                    if min < 0.0 {
                        alpha = alpha.min(-1.0 / min);
                    }
                }
            }
        }
        alpha
    }
}

fn svec_unindex(k: usize) -> (usize, usize) {
    // column-major upper triangle: index = j(j+1)/2 + i, i <= j
    let mut j = 0usize;
    while (j + 1) * (j + 2) / 2 <= k {
        j += 1;
    }
    let i = k - j * (j + 1) / 2;
    (i, j)
}

struct Kkt {
    h: DMatrix<f64>,
    bmat: DMatrix<f64>,
    h_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    hinv_b: DMatrix<f64>,
    s_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl Kkt {
    fn solve_once(&self, r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let hinv_r1 = self.h_chol.solve(r1);
        let u = if let Some(s_chol) = &self.s_chol {
            let rhs = self.hinv_b.transpose() * r1 - r2;
            s_chol.solve(&rhs)
        } else {
            DMatrix::zeros(0, 1)
        };
        let y = if u.nrows() > 0 {
            hinv_r1 - &self.hinv_b * &u
        } else {
            hinv_r1
        };
        (y, u)
    }

    /// Solve [H B; B^T 0] [y; u] = [r1; r2] with iterative refinement to
    /// wash out the static regularization added during factorization.
    fn solve(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r1v = DMatrix::from_column_slice(r1.len(), 1, r1);
        let r2v = DMatrix::from_column_slice(r2.len(), 1, r2);
        let (mut y, mut u) = self.solve_once(&r1v, &r2v);
        for _ in 0..2 {
            let res1 = &r1v - &self.h * &y - &self.bmat * &u;
            let res2 = &r2v - self.bmat.transpose() * &y;
            if res1.amax().max(res2.amax()) < 1e-13 * (1.0 + r1v.amax().max(r2v.amax())) {
                break;
            }
            let (dy, du) = self.solve_once(&res1, &res2);
            y += dy;
            u += du;
        }
        (y.as_slice().to_vec(), u.as_slice().to_vec())
    }
}

fn factor_kkt(w: &Work, scalings: &[Scaling]) -> Result<Kkt> {
    let p = w.p;
    let m = p.rows.len();
    let nf = p.num_free;
    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut buf = vec![0.0; w.lay.total];
    for i in 0..m {
        w.g_apply_row(scalings, &p.rows[i], &mut buf);
        for j in i..m {
            let mut acc = 0.0;
            for &(k, v) in &p.rows[j].cone {
                acc += v * buf[k];
            }
            h[(i, j)] = acc;
            h[(j, i)] = acc;
        }
    }
    // Static regularization keeps nearly dependent rows factorable; its
    // effect is removed afterwards by iterative refinement against the
    // unregularized system.
    let mut h_reg = h.clone();
    let scale = h.diagonal().amax().max(1.0);
    for i in 0..m {
        h_reg[(i, i)] += 1e-12 * scale;
    }
    let h_chol = h_reg
        .cholesky()
        .ok_or_else(|| Error::Solver("Schur complement not positive definite".into()))?;

    let mut bmat = DMatrix::<f64>::zeros(m, nf);
    for (k, row) in p.rows.iter().enumerate() {
        for &(i, v) in &row.free {
            bmat[(k, i)] = v;
        }
    }
    let (hinv_b, s_chol) = if nf > 0 {
        let hinv_b = h_chol.solve(&bmat);
        let mut s = bmat.transpose() * &hinv_b;
        let sscale = s.diagonal().amax().max(1.0);
        for i in 0..nf {
            s[(i, i)] += 1e-12 * sscale;
        }
        let s_chol = s
            .cholesky()
            .ok_or_else(|| Error::Solver("free-variable Schur block singular".into()))?;
        (hinv_b, Some(s_chol))
    } else {
        (DMatrix::zeros(m, 0), None)
    };

    Ok(Kkt {
        h,
        bmat,
        h_chol,
        hinv_b,
        s_chol,
    })
}

#[allow(clippy::too_many_arguments)]
struct Direction {
    dx: Vec<f64>,
    du: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
    dx_scaled: Vec<f64>,
    ds_scaled: Vec<f64>,
}

struct State {
    x: Vec<f64>,
    u: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

pub fn solve_with(p: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
    p.validate()?;
    let lay = layout(p);
    let n = lay.total;
    let m = p.rows.len();
    let nf = p.num_free;
    let nu: f64 = p.cones.iter().map(|c| c.degree() as f64).sum::<f64>() + 1.0;
    let w = Work { p, lay };

    // Identity initialization.
    let mut st = State {
        x: init_point(p),
        u: vec![0.0; nf],
        y: vec![0.0; m],
        s: init_point(p),
        tau: 1.0,
        kappa: 1.0,
    };

    let bnorm = norm(&p.rhs);
    let cnorm = norm(&p.cone_cost).hypot(norm(&p.free_cost));

    let mut best: Option<SdpSolution> = None;

    for iter in 0..opts.max_iter {
        // Residuals.
        let mut ax = vec![0.0; m];
        w.a_apply(&st.x, &st.u, &mut ax);
        let mut rp = vec![0.0; m];
        for k in 0..m {
            rp[k] = ax[k] - p.rhs[k] * st.tau;
        }
        let mut aty = vec![0.0; n];
        let mut bty = vec![0.0; nf];
        w.at_apply(&st.y, &mut aty, &mut bty);
        let mut rd = vec![0.0; n];
        for i in 0..n {
            rd[i] = -aty[i] - st.s[i] + p.cone_cost[i] * st.tau;
        }
        let mut rf = vec![0.0; nf];
        for i in 0..nf {
            rf[i] = -bty[i] + p.free_cost[i] * st.tau;
        }
        let by = dot(&p.rhs, &st.y);
        let cx = dot(&p.cone_cost, &st.x) + dot(&p.free_cost, &st.u);
        let rg = by - cx - st.kappa;

        let mu = (dot(&st.x, &st.s) + st.tau * st.kappa) / nu;

        // Convergence checks on the de-homogenized iterate.
        let pobj = cx / st.tau;
        let dobj = by / st.tau;
        let pres = norm(&rp) / st.tau / (1.0 + bnorm);
        let dres = (norm(&rd).hypot(norm(&rf))) / st.tau / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));

        let sol = SdpSolution {
            status: SdpStatus::MaxIterations,
            primal_value: pobj,
            dual_value: dobj,
            x: st.x.iter().map(|v| v / st.tau).collect(),
            free: st.u.iter().map(|v| v / st.tau).collect(),
            y: st.y.iter().map(|v| v / st.tau).collect(),
            iterations: iter,
            primal_residual: pres,
            dual_residual: dres,
            gap,
        };
        if pres <= opts.feas_tol && dres <= opts.feas_tol && gap <= opts.gap_tol {
            return Ok(SdpSolution {
                status: SdpStatus::Optimal,
                ..sol
            });
        }
        // Infeasibility / unboundedness certificates.
        if st.tau <= 1e-10 * st.kappa.max(1.0) || (mu < 1e-14 && st.tau < 1e-6 * st.kappa) {
            let infeas_res = {
                let mut v = vec![0.0; n];
                let mut vf = vec![0.0; nf];
                w.at_apply(&st.y, &mut v, &mut vf);
                for i in 0..n {
                    v[i] += st.s[i];
                }
                norm(&v).hypot(norm(&vf))
            };
            if by > 0.0 && infeas_res <= 1e-7 * by {
                return Ok(SdpSolution {
                    status: SdpStatus::Infeasible,
                    ..sol
                });
            }
            let unb_res = norm(&ax);
            if cx < 0.0 && unb_res <= 1e-7 * (-cx) {
                return Ok(SdpSolution {
                    status: SdpStatus::Unbounded,
                    ..sol
                });
            }
            return Ok(sol);
        }
        best = Some(sol);

        // NT scaling and KKT factorization.
        let scalings: Vec<Scaling> = p
            .cones
            .iter()
            .enumerate()
            .map(|(bi, cone)| {
                let off = w.lay.offsets[bi];
                let len = cone.svec_len();
                compute_scaling(cone, &st.x[off..off + len], &st.s[off..off + len])
            })
            .collect::<Result<_>>()?;
        let kkt = factor_kkt(&w, &scalings)?;

        // Static pieces for the tau elimination.
        let mut gc = vec![0.0; n];
        w.g_apply(&scalings, &p.cone_cost, &mut gc);
        let mut agc = vec![0.0; m];
        w.a_apply(&gc, &vec![0.0; nf], &mut agc);
        let h1: Vec<f64> = (0..m).map(|k| p.rhs[k] + agc[k]).collect();
        let (y1, u1) = kkt.solve(&h1, &p.free_cost);
        let ctgc = dot(&p.cone_cost, &gc);

        let solve_direction = |d_lambda: &[f64],
                                   d_taukappa: f64,
                                   rp_s: &[f64],
                                   rd_s: &[f64],
                                   rf_s: &[f64],
                                   rg_s: f64|
         -> Direction {
            // d1 = lambda \ d_lambda
            let mut d1 = vec![0.0; n];
            w.lambda_solve(&scalings, d_lambda, &mut d1);
            let mut wtd1 = vec![0.0; n];
            w.wt_apply(&scalings, &d1, &mut wtd1);
            let mut grd = vec![0.0; n];
            w.g_apply(&scalings, rd_s, &mut grd);

            // R1 = -rp - A wtd1 + A grd
            let mut tmp = vec![0.0; n];
            for i in 0..n {
                tmp[i] = grd[i] - wtd1[i];
            }
            let mut atmp = vec![0.0; m];
            w.a_apply(&tmp, &vec![0.0; nf], &mut atmp);
            let r1: Vec<f64> = (0..m).map(|k| -rp_s[k] + atmp[k]).collect();
            let r2: Vec<f64> = rf_s.to_vec();
            let (y0, u0) = kkt.solve(&r1, &r2);

            // const0 = c^T (wtd1 - grd)
            let const0 = dot(&p.cone_cost, &wtd1) - dot(&p.cone_cost, &grd);
            let g_vec = &agc; // A G c
            let coef = dot(&p.rhs, &y1) - dot(g_vec, &y1) + ctgc - dot(&p.free_cost, &u1)
                + st.kappa / st.tau;
            let cnst = dot(&p.rhs, &y0) - const0 - dot(g_vec, &y0) - dot(&p.free_cost, &u0)
                - d_taukappa / st.tau - rg_s;
            let dtau = -cnst / coef;

            let dy: Vec<f64> = (0..m).map(|k| y0[k] + dtau * y1[k]).collect();
            let du: Vec<f64> = (0..nf).map(|k| u0[k] + dtau * u1[k]).collect();

            // ds = -A^T dy + c dtau + rd
            let mut atdy = vec![0.0; n];
            let mut btdy = vec![0.0; nf];
            w.at_apply(&dy, &mut atdy, &mut btdy);
            let mut ds = vec![0.0; n];
            for i in 0..n {
                ds[i] = -atdy[i] + p.cone_cost[i] * dtau + rd_s[i];
            }
            // dx = wtd1 - G ds
            let mut gds = vec![0.0; n];
            w.g_apply(&scalings, &ds, &mut gds);
            let mut dx = vec![0.0; n];
            for i in 0..n {
                dx[i] = wtd1[i] - gds[i];
            }
            let dkappa = (d_taukappa - st.kappa * dtau) / st.tau;

            let mut dx_scaled = vec![0.0; n];
            w.winv_t_apply(&scalings, &dx, &mut dx_scaled);
            let mut ds_scaled = vec![0.0; n];
            w.w_apply(&scalings, &ds, &mut ds_scaled);

            Direction {
                dx,
                du,
                dy,
                ds,
                dtau,
                dkappa,
                dx_scaled,
                ds_scaled,
            }
        };

        // λ o λ in scaled space.
        let mut lam_sq = vec![0.0; n];
        let mut lam = vec![0.0; n];
        for (bi, cone) in p.cones.iter().enumerate() {
            let off = w.lay.offsets[bi];
            match &scalings[bi] {
                Scaling::Nonneg { lambda, .. } => {
                    for (i, &l) in lambda.iter().enumerate() {
                        lam_sq[off + i] = l * l;
                        lam[off + i] = l;
                    }
                }
                Scaling::Psd { sigma, .. } => {
                    let d = cone.degree();
                    let mut msq = DMatrix::zeros(d, d);
                    let mut ml = DMatrix::zeros(d, d);
                    for i in 0..d {
                        msq[(i, i)] = sigma[i] * sigma[i];
                        ml[(i, i)] = sigma[i];
                    }
                    let len = cone.svec_len();
                    lam_sq[off..off + len].copy_from_slice(&mat_to_svec(&msq));
                    lam[off..off + len].copy_from_slice(&mat_to_svec(&ml));
                }
            }
        }

        // Affine (predictor) direction.
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
        let d_lambda_aff = neg(&lam_sq);
        let aff = solve_direction(
            &d_lambda_aff,
            -st.tau * st.kappa,
            &rp,
            &rd,
            &rf,
            -rg,
        );

        let mut alpha_aff = w.max_step(&scalings, &aff.dx_scaled);
        alpha_aff = alpha_aff.min(w.max_step(&scalings, &aff.ds_scaled));
        if aff.dtau < 0.0 {
            alpha_aff = alpha_aff.min(-st.tau / aff.dtau);
        }
        if aff.dkappa < 0.0 {
            alpha_aff = alpha_aff.min(-st.kappa / aff.dkappa);
        }
        let alpha_aff = alpha_aff.min(1.0);

        let mu_aff = {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (st.x[i] + alpha_aff * aff.dx[i]) * (st.s[i] + alpha_aff * aff.ds[i]);
            }
            acc += (st.tau + alpha_aff * aff.dtau) * (st.kappa + alpha_aff * aff.dkappa);
            acc / nu
        };
        let sigma = ((mu_aff / mu).max(0.0)).powi(3).min(1.0);

        // Corrector term in the scaled space.
        let mut corr = vec![0.0; n];
        for (bi, cone) in p.cones.iter().enumerate() {
            let off = w.lay.offsets[bi];
            let len = cone.svec_len();
            match &scalings[bi] {
                Scaling::Nonneg { .. } => {
                    for i in 0..len {
                        corr[off + i] = aff.dx_scaled[off + i] * aff.ds_scaled[off + i];
                    }
                }
                Scaling::Psd { .. } => {
                    let d = cone.degree();
                    let a = svec_to_mat(&aff.dx_scaled[off..off + len], d);
                    let b = svec_to_mat(&aff.ds_scaled[off..off + len], d);
                    let sym = (&a * &b + &b * &a) * 0.5;
                    corr[off..off + len].copy_from_slice(&mat_to_svec(&sym));
                }
            }
        }
        let mut d_lambda = vec![0.0; n];
        for i in 0..n {
            d_lambda[i] = -lam_sq[i] - corr[i];
        }
        // + sigma mu e (identity in each block: diagonal entries of svec)
        for (bi, cone) in p.cones.iter().enumerate() {
            let off = w.lay.offsets[bi];
            match cone {
                Cone::Nonneg(nn) => {
                    for i in 0..*nn {
                        d_lambda[off + i] += sigma * mu;
                    }
                }
                Cone::Psd(d) => {
                    for j in 0..*d {
                        d_lambda[off + j * (j + 1) / 2 + j] += sigma * mu;
                    }
                }
            }
        }
        let d_taukappa = -st.tau * st.kappa - aff.dtau * aff.dkappa + sigma * mu;

        let dir = solve_direction(&d_lambda, d_taukappa, &rp, &rd, &rf, -rg);

        let mut alpha = w.max_step(&scalings, &dir.dx_scaled);
        alpha = alpha.min(w.max_step(&scalings, &dir.ds_scaled));
        if dir.dtau < 0.0 {
            alpha = alpha.min(-st.tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            alpha = alpha.min(-st.kappa / dir.dkappa);
        }
        let alpha = (0.99 * alpha).min(1.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Solver("step size collapsed".into()));
        }

        for i in 0..n {
            st.x[i] += alpha * dir.dx[i];
            st.s[i] += alpha * dir.ds[i];
        }
        for i in 0..nf {
            st.u[i] += alpha * dir.du[i];
        }
        for k in 0..m {
            st.y[k] += alpha * dir.dy[k];
        }
        st.tau += alpha * dir.dtau;
        st.kappa += alpha * dir.dkappa;
    }

    best.ok_or_else(|| Error::Solver("no iterations performed".into()))
}

fn init_point(p: &SdpProblem) -> Vec<f64> {
    let mut v = Vec::new();
    for cone in &p.cones {
        match *cone {
            Cone::Nonneg(n) => v.extend(std::iter::repeat(1.0).take(n)),
            Cone::Psd(d) => {
                for j in 0..d {
                    for i in 0..=j {
                        v.push(if i == j { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
