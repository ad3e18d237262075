//! Code constructors: encoding isometries together with the logical/physical
//! symmetry generator pairs they are measured against.
//!
//! Families: quantum Reed-Muller codes `[[2^t - 1, 1, 3]]`, a continuously
//! tunable thermodynamic family in the permutation-symmetric subspace,
//! trivial encodings, and user-supplied isometries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::tensor::{cr, hermitian_eig_matrix, site_bra_apply, C64, Operator, SystemShape};
use crate::{Error, Result};

/// Largest physical dimension for which dense square operators (projectors,
/// dense Hamiltonians) are materialized.
pub const DENSE_DIM_CAP: usize = 4096;

/// Encoding isometry with metadata.
#[derive(Debug, Clone)]
pub struct CodeInstance {
    encoder: Operator,
    logical_dim: usize,
    physical_shape: SystemShape,
    name: String,
    /// `Some(n)` when the physical space is the symmetric subspace of `n`
    /// qubits, represented by its `n + 1` Dicke coordinates.
    symmetric_sites: Option<usize>,
}

impl CodeInstance {
    pub fn new(
        encoder: Operator,
        physical_shape: SystemShape,
        name: impl Into<String>,
    ) -> Result<Self> {
        let logical_dim = encoder.ncols();
        if encoder.nrows() != physical_shape.total_dim() {
            return Err(Error::Shape(format!(
                "encoder has {} rows but the physical space has dimension {}",
                encoder.nrows(),
                physical_shape.total_dim()
            )));
        }
        let dev = (encoder.matrix().adjoint() * encoder.matrix()
            - DMatrix::<C64>::identity(logical_dim, logical_dim))
        .norm();
        if dev > 1e-10 {
            return Err(Error::NotIsometry(dev));
        }
        Ok(Self {
            encoder,
            logical_dim,
            physical_shape,
            name: name.into(),
            symmetric_sites: None,
        })
    }

    fn with_symmetric_sites(mut self, n: usize) -> Self {
        self.symmetric_sites = Some(n);
        self
    }

    pub fn encoder(&self) -> &Operator {
        &self.encoder
    }

    pub fn logical_dim(&self) -> usize {
        self.logical_dim
    }

    pub fn physical_shape(&self) -> &SystemShape {
        &self.physical_shape
    }

    pub fn physical_dim(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn symmetric_sites(&self) -> Option<usize> {
        self.symmetric_sites
    }

    pub fn logical_shape(&self) -> SystemShape {
        SystemShape::single(self.logical_dim, "L")
    }

    /// Code-space projector `Pi = V V^dag`, materialized on demand (dense,
    /// so guarded against large physical spaces).
    pub fn projector(&self) -> Result<Operator> {
        let d = self.physical_dim();
        if d > DENSE_DIM_CAP {
            return Err(Error::DimensionOverflow(d));
        }
        let v = self.encoder.matrix();
        Operator::square(v * v.adjoint(), self.physical_shape.clone())
    }
}

/// Physical-side symmetry generator; diagonal storage keeps large 1-local
/// Hamiltonians (e.g. total excitation number on 15 qubits) tractable.
#[derive(Debug, Clone)]
pub enum PhysicalHamiltonian {
    Dense(Operator),
    Diagonal { diag: Vec<f64>, shape: SystemShape },
}

impl PhysicalHamiltonian {
    pub fn dim(&self) -> usize {
        match self {
            PhysicalHamiltonian::Dense(op) => op.nrows(),
            PhysicalHamiltonian::Diagonal { diag, .. } => diag.len(),
        }
    }

    pub fn shape(&self) -> &SystemShape {
        match self {
            PhysicalHamiltonian::Dense(op) => op.row_shape(),
            PhysicalHamiltonian::Diagonal { shape, .. } => shape,
        }
    }

    /// `H * M` for a tall matrix `M`.
    pub fn mul_tall(&self, m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        if m.nrows() != self.dim() {
            return Err(Error::Shape("Hamiltonian/operand dimension mismatch".into()));
        }
        Ok(match self {
            PhysicalHamiltonian::Dense(op) => op.matrix() * m,
            PhysicalHamiltonian::Diagonal { diag, .. } => {
                let mut out = m.clone();
                for (i, &d) in diag.iter().enumerate() {
                    for j in 0..m.ncols() {
                        out[(i, j)] *= cr(d);
                    }
                }
                out
            }
        })
    }

    /// `e^{-i theta H} * M` for a tall matrix `M`.
    pub fn evolution_mul(&self, theta: f64, m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        if m.nrows() != self.dim() {
            return Err(Error::Shape("Hamiltonian/operand dimension mismatch".into()));
        }
        Ok(match self {
            PhysicalHamiltonian::Dense(op) => {
                let (vals, vecs) = op.hermitian_eig()?;
                let rot = vecs.adjoint() * m;
                let mut out = rot;
                for (i, &v) in vals.iter().enumerate() {
                    let phase = C64::new(0.0, -v * theta).exp();
                    for j in 0..out.ncols() {
                        out[(i, j)] *= phase;
                    }
                }
                &vecs * out
            }
            PhysicalHamiltonian::Diagonal { diag, .. } => {
                let mut out = m.clone();
                for (i, &d) in diag.iter().enumerate() {
                    let phase = C64::new(0.0, -d * theta).exp();
                    for j in 0..m.ncols() {
                        out[(i, j)] *= phase;
                    }
                }
                out
            }
        })
    }

    /// Spectral range (largest minus smallest eigenvalue).
    pub fn spectral_range(&self) -> Result<f64> {
        match self {
            PhysicalHamiltonian::Dense(op) => op.spectral_range(),
            PhysicalHamiltonian::Diagonal { diag, .. } => {
                let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Ok(max - min)
            }
        }
    }

    /// Dense square form, guarded against large spaces.
    pub fn dense(&self) -> Result<Operator> {
        match self {
            PhysicalHamiltonian::Dense(op) => Ok(op.clone()),
            PhysicalHamiltonian::Diagonal { diag, shape } => {
                if diag.len() > DENSE_DIM_CAP {
                    return Err(Error::DimensionOverflow(diag.len()));
                }
                Operator::from_real_diag(diag, shape.clone())
            }
        }
    }
}

/// Logical/physical generator pair for the symmetry `U_theta = e^{-i H theta}`.
#[derive(Debug, Clone)]
pub struct SymmetryPair {
    pub h_logical: Operator,
    pub h_physical: PhysicalHamiltonian,
    /// `Some(T)` when both evolutions are `T`-periodic up to phase.
    pub period: Option<f64>,
}

impl SymmetryPair {
    pub fn new(
        h_logical: Operator,
        h_physical: PhysicalHamiltonian,
        period: Option<f64>,
    ) -> Result<Self> {
        let dev = h_logical.hermiticity_deviation();
        if dev > 1e-10 * (1.0 + h_logical.frobenius_norm()) {
            return Err(Error::NotHermitian(dev));
        }
        if let PhysicalHamiltonian::Dense(op) = &h_physical {
            let dev = op.hermiticity_deviation();
            if dev > 1e-10 * (1.0 + op.frobenius_norm()) {
                return Err(Error::NotHermitian(dev));
            }
        }
        Ok(Self {
            h_logical,
            h_physical,
            period,
        })
    }
}

// ---------------------------------------------------------------------------
// Reed-Muller family

/// Quantum Reed-Muller code `[[n = 2^t - 1, 1, 3]]`.
///
/// The logical basis states superpose the two cosets of the even-weight
/// subcode of the punctured first-order Reed-Muller code: `|0_L>` over the
/// span of the coordinate-bit vectors `v_i(x) = x_i` (weights 0 and
/// `2^{t-1}`), `|1_L>` over its complement coset. The symmetry pair is the
/// total excitation number `H_S = sum_l (I - Z_l)/2` against
/// `H_L = (Z_L - I)/2`; this sign matches the bulk logical charge of the
/// cosets (weights `2^{t-1}` vs `2^{t-1} - 1`), making the generator
/// consistent with the transversal identity
/// `V^dag (prod_l e^{i pi Z_l / 2^{t-1}}) V = e^{-i pi Z_L / 2^{t-1}}`.
pub fn reed_muller_code(t: usize) -> Result<(CodeInstance, SymmetryPair)> {
    if !(3..=4).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "Reed-Muller parameter t = {t} outside the supported dense range {{3, 4}}"
        )));
    }
    let n = (1usize << t) - 1;
    let words = reed_muller_even_subcode(t);
    debug_assert_eq!(words.len(), 1 << t);
    let all_ones = (1usize << n) - 1;
    let dim = 1usize << n;
    let amp = cr(1.0 / ((1 << t) as f64).sqrt());
    let mut v = DMatrix::<C64>::zeros(dim, 2);
    for &c in &words {
        v[(c, 0)] = amp;
        v[(c ^ all_ones, 1)] = amp;
    }
    let shape = SystemShape::qubits(n);
    let code = CodeInstance::new(
        Operator::new(v, shape.clone(), SystemShape::single(2, "L"))?,
        shape.clone(),
        format!("reed-muller[[{n},1,3]]"),
    )?;
    let diag: Vec<f64> = (0..dim).map(|i| (i as u32).count_ones() as f64).collect();
    let h_s = PhysicalHamiltonian::Diagonal { diag, shape };
    let h_l = Operator::from_real_diag(&[0.0, -1.0], SystemShape::single(2, "L"))?;
    let pair = SymmetryPair::new(h_l, h_s, Some(std::f64::consts::TAU))?;
    Ok((code, pair))
}

/// Codewords (as bitmask integers over `n = 2^t - 1` sites) of the
/// even-weight subcode: the span of the coordinate-bit vectors.
fn reed_muller_even_subcode(t: usize) -> Vec<usize> {
    let n = (1usize << t) - 1;
    // Site l corresponds to the nonzero point x = l + 1 of F_2^t; generator
    // i has a one at site l iff bit i of x is set. Site 0 is the most
    // significant bit of the codeword index.
    let mut gens = vec![0usize; t];
    for l in 0..n {
        let x = l + 1;
        for (i, g) in gens.iter_mut().enumerate() {
            if (x >> i) & 1 == 1 {
                *g |= 1 << (n - 1 - l);
            }
        }
    }
    let mut words = Vec::with_capacity(1 << t);
    for mask in 0..(1usize << t) {
        let mut w = 0usize;
        for (i, g) in gens.iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                w ^= g;
            }
        }
        words.push(w);
    }
    words
}

// ---------------------------------------------------------------------------
// Thermodynamic family

/// Tunable thermodynamic code on the permutation-symmetric subspace of `n`
/// qubits, represented by its `n + 1` Dicke coordinates (`|D^n_w>` is the
/// `w`-th basis vector).
///
/// At `q = 0` the logical states are the Dicke states `|D_{(n-m)/2}>`,
/// `|D_{(n+m)/2}>` (exactly covariant under `H_S = sum_l Z_l / 2`,
/// `H_L = (m/2) Z_L`). At `q = 1` the logical states are Dicke
/// superpositions `(|D_{n/2-1}> + |D_{n/2+1}>)/sqrt2` and
/// `(|D_{n/2-3}> + |D_{n/2+3}>)/sqrt2`, which satisfy the Knill-Laflamme
/// conditions for single erasure exactly. In between, the encoder is the
/// orthonormalized linear interpolation of the two endpoint isometries.
pub fn thermodynamic_code(n: usize, m: usize, q: f64) -> Result<(CodeInstance, SymmetryPair)> {
    if n % 2 != 0 || n < 4 {
        return Err(Error::InvalidParameter(format!(
            "thermodynamic code needs even n >= 4, got {n}"
        )));
    }
    if m % 2 != 0 || m < 2 || m > n / 2 {
        return Err(Error::InvalidParameter(format!(
            "thermodynamic code needs even m with 2 <= m <= n/2, got {m}"
        )));
    }
    if !(0.0..=1.0).contains(&q) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("q = {q} outside [0, 1]")));
    }
    if q > 0.0 && n < 8 {
        return Err(Error::InvalidParameter(format!(
            "the q > 0 interpolation needs n >= 8, got {n}"
        )));
    }
    let dim = n + 1;
    let wbar = n / 2;
    let shape = SystemShape::single(dim, "sym");

    let mut v_cov = DMatrix::<C64>::zeros(dim, 2);
    v_cov[(wbar - m / 2, 0)] = cr(1.0);
    v_cov[(wbar + m / 2, 1)] = cr(1.0);

    let v = if q == 0.0 {
        v_cov
    } else {
        let s = q;
        let mut v_exact = DMatrix::<C64>::zeros(dim, 2);
        let r = cr(std::f64::consts::FRAC_1_SQRT_2);
        v_exact[(wbar - 1, 0)] = r;
        v_exact[(wbar + 1, 0)] = r;
        v_exact[(wbar - 3, 1)] = r;
        v_exact[(wbar + 3, 1)] = r;
        let mixed = v_cov * cr(1.0 - s) + v_exact * cr(s);
        lowdin_orthonormalize(&mixed)?
    };
    let v = fix_global_phase(v);

    let code = CodeInstance::new(
        Operator::new(v, shape.clone(), SystemShape::single(2, "L"))?,
        shape.clone(),
        format!("thermodynamic[n={n},m={m},q={q}]"),
    )?
    .with_symmetric_sites(n);

    let diag: Vec<f64> = (0..dim).map(|w| (n as f64 - 2.0 * w as f64) / 2.0).collect();
    let h_s = PhysicalHamiltonian::Diagonal { diag, shape };
    let h_l = Operator::from_real_diag(
        &[m as f64 / 2.0, -(m as f64) / 2.0],
        SystemShape::single(2, "L"),
    )?;
    let pair = SymmetryPair::new(h_l, h_s, Some(std::f64::consts::TAU))?;
    Ok((code, pair))
}

/// Symmetric orthonormalization `M (M^dag M)^{-1/2}` — the isometry closest
/// to `M` in Frobenius norm.
fn lowdin_orthonormalize(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let gram = m.adjoint() * m;
    let (vals, vecs) = hermitian_eig_matrix(&gram);
    if vals[0] <= 1e-12 {
        return Err(Error::IllPosed(
            "interpolated encoder columns became linearly dependent".into(),
        ));
    }
    let k = gram.nrows();
    let mut inv_sqrt = DMatrix::<C64>::zeros(k, k);
    for (idx, &v) in vals.iter().enumerate() {
        let f = cr(1.0 / v.sqrt());
        let col = vecs.column(idx);
        for i in 0..k {
            for j in 0..k {
                inv_sqrt[(i, j)] += col[i] * f * col[j].conj();
            }
        }
    }
    Ok(m * inv_sqrt)
}

/// Fix the global phase per column: largest-magnitude entry real positive.
fn fix_global_phase(mut v: DMatrix<C64>) -> DMatrix<C64> {
    for j in 0..v.ncols() {
        let mut best = 0usize;
        for i in 0..v.nrows() {
            if v[(i, j)].norm() > v[(best, j)].norm() {
                best = i;
            }
        }
        let z = v[(best, j)];
        if z.norm() > 0.0 {
            let phase = z.conj() / cr(z.norm());
            for i in 0..v.nrows() {
                v[(i, j)] *= phase;
            }
        }
    }
    v
}

/// Dense Dicke state `|D^n_w>` on `2^n` amplitudes (test/oracle scale only).
pub fn dicke_dense(n: usize, w: usize) -> Result<Vec<C64>> {
    if w > n || n > 20 {
        return Err(Error::InvalidParameter(format!(
            "dicke_dense out of range: n = {n}, w = {w}"
        )));
    }
    let count = binomial(n, w);
    let amp = cr(1.0 / count.sqrt());
    let mut out = vec![C64::new(0.0, 0.0); 1 << n];
    for (idx, slot) in out.iter_mut().enumerate() {
        if (idx as u32).count_ones() as usize == w {
            *slot = amp;
        }
    }
    Ok(out)
}

/// Isometric embedding of the symmetric subspace into the full `2^n` space;
/// columns are the dense Dicke states.
pub fn symmetric_embed(n: usize) -> Result<Operator> {
    if n > 14 {
        return Err(Error::DimensionOverflow(n));
    }
    let mut m = DMatrix::<C64>::zeros(1 << n, n + 1);
    for w in 0..=n {
        let col = dicke_dense(n, w)?;
        for (i, &a) in col.iter().enumerate() {
            m[(i, w)] = a;
        }
    }
    Operator::new(
        m,
        SystemShape::qubits(n),
        SystemShape::single(n + 1, "sym"),
    )
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Effective single-erasure channel for permutation-symmetric states in the
/// Dicke representation: tracing out one site of `|D^n_w>` branches to
/// `|D^{n-1}_w>` and `|D^{n-1}_{w-1}>` with amplitudes `sqrt((n-w)/n)`,
/// `sqrt(w/n)`. Because symmetric states look identical at every erasure
/// location, the two-Kraus channel below reproduces the full located-erasure
/// statistics on such states.
pub fn symmetric_erasure_channel(n: usize) -> Result<crate::channels::KrausChannel> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "symmetric erasure needs at least two sites".into(),
        ));
    }
    let din = n + 1;
    let dout = n;
    let in_shape = SystemShape::single(din, "sym");
    let out_shape = SystemShape::single(dout, "sym");
    let mut a0 = DMatrix::<C64>::zeros(dout, din);
    let mut a1 = DMatrix::<C64>::zeros(dout, din);
    for w in 0..=n {
        let p0 = ((n - w) as f64 / n as f64).sqrt();
        let p1 = (w as f64 / n as f64).sqrt();
        if w < n {
            a0[(w, w)] = cr(p0); // survivors keep w excitations
        }
        if w > 0 {
            a1[(w - 1, w)] = cr(p1); // the excited site was erased
        }
    }
    crate::channels::KrausChannel::new(
        vec![
            Operator::new(a0, out_shape.clone(), in_shape.clone())?,
            Operator::new(a1, out_shape, in_shape)?,
        ],
        format!("symmetric-erasure[{n}]"),
    )
}

// ---------------------------------------------------------------------------
// Trivial and custom codes

/// Trivial encoding `V = I` with defaults `H_S = sum_l Z_l / 2`,
/// `H_L = Z_first / 2`.
pub fn trivial_code(shape: &SystemShape) -> Result<(CodeInstance, SymmetryPair)> {
    let d = shape.total_dim();
    if d > DENSE_DIM_CAP {
        return Err(Error::DimensionOverflow(d));
    }
    if shape.dims().iter().any(|&x| x != 2) {
        return Err(Error::Shape("trivial-code defaults assume qubits".into()));
    }
    let n = shape.num_subsystems();
    let code = CodeInstance::new(Operator::identity(shape.clone()), shape.clone(), "trivial")?;
    let diag: Vec<f64> = (0..d)
        .map(|i| (n as f64 - 2.0 * (i as u32).count_ones() as f64) / 2.0)
        .collect();
    let h_s = PhysicalHamiltonian::Diagonal {
        diag,
        shape: shape.clone(),
    };
    // Z on the first qubit (most significant bit of the index).
    let l_diag: Vec<f64> = (0..d)
        .map(|i| if i < d / 2 { 0.5 } else { -0.5 })
        .collect();
    let h_l = Operator::from_real_diag(&l_diag, shape.clone())?;
    let pair = SymmetryPair::new(h_l, h_s, Some(std::f64::consts::TAU))?;
    Ok((code, pair))
}

/// JSON descriptor for custom codes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodeDescriptor {
    pub name: String,
    pub logical_dim: usize,
    pub physical_dims: Vec<usize>,
    /// Isometry as `[row][col] = [re, im]`, `prod(physical_dims) x logical_dim`.
    pub isometry: Vec<Vec<[f64; 2]>>,
    pub h_logical: Vec<Vec<[f64; 2]>>,
    pub h_physical: Vec<Vec<[f64; 2]>>,
}

pub fn custom_code(desc: &CodeDescriptor) -> Result<(CodeInstance, SymmetryPair)> {
    let labels = (0..desc.physical_dims.len())
        .map(|i| format!("q{i}"))
        .collect();
    let shape = SystemShape::new(desc.physical_dims.clone(), labels)?;
    let ds = shape.total_dim();
    let dl = desc.logical_dim;
    if dl == 0 || dl > ds {
        return Err(Error::Descriptor(format!(
            "logical dimension {dl} invalid for physical dimension {ds}"
        )));
    }
    let v = parse_matrix(&desc.isometry, ds, dl, "isometry")?;
    let code = CodeInstance::new(
        Operator::new(v, shape.clone(), SystemShape::single(dl, "L"))?,
        shape.clone(),
        desc.name.clone(),
    )?;
    let hl = parse_matrix(&desc.h_logical, dl, dl, "h_logical")?;
    let hs = parse_matrix(&desc.h_physical, ds, ds, "h_physical")?;
    let pair = SymmetryPair::new(
        Operator::square(hl, SystemShape::single(dl, "L"))?,
        PhysicalHamiltonian::Dense(Operator::square(hs, shape)?),
        None,
    )?;
    Ok((code, pair))
}

fn parse_matrix(
    rows: &[Vec<[f64; 2]>],
    nrows: usize,
    ncols: usize,
    what: &str,
) -> Result<DMatrix<C64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Descriptor(format!(
            "{what} must be a {nrows} x {ncols} nested array"
        )));
    }
    let mut m = DMatrix::<C64>::zeros(nrows, ncols);
    for (i, r) in rows.iter().enumerate() {
        for (j, &[re, im]) in r.iter().enumerate() {
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Descriptor(format!("{what} has non-finite entries")));
            }
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Knill-Laflamme checks

/// Maximum deviation of `V^dag B_i^dag B_j V` from a multiple of the
/// identity, over all pairs of code-restricted error operators
/// `B_i = K_i V`. Zero means the error set is exactly correctable.
pub fn kl_deviation_from_restricted(code_kraus: &[DMatrix<C64>]) -> f64 {
    let mut worst = 0.0f64;
    let dl = code_kraus.first().map_or(0, |b| b.ncols());
    for bi in code_kraus {
        for bj in code_kraus {
            let g = bi.adjoint() * bj;
            let c = g.trace() / cr(dl as f64);
            let mut dev = 0.0f64;
            for a in 0..dl {
                for b in 0..dl {
                    let target = if a == b { c } else { C64::new(0.0, 0.0) };
                    dev = dev.max((g[(a, b)] - target).norm());
                }
            }
            worst = worst.max(dev);
        }
    }
    worst
}

/// Code-restricted Kraus operators `K_{l,k} V` for single erasure on a
/// multi-qubit code, grouped by erasure location `l`, with the constant
/// output factors (`|e>_l`, `|l>_loc`) dropped. Cross-location Gram terms
/// vanish identically in the full channel (the location register makes the
/// outputs orthogonal), so the Knill-Laflamme conditions decouple into one
/// block per location.
pub fn erasure_restricted_kraus(code: &CodeInstance) -> Result<Vec<Vec<DMatrix<C64>>>> {
    let dims = code.physical_shape().dims().to_vec();
    let n = dims.len();
    if n < 2 {
        return Err(Error::Shape("erasure KL check needs >= 2 subsystems".into()));
    }
    let v = code.encoder().matrix();
    let amp = cr(1.0 / (n as f64).sqrt());
    let mut out = Vec::new();
    for l in 0..n {
        let mut group = Vec::new();
        for k in 0..dims[l] {
            group.push(site_bra_apply(v, &dims, l, k) * amp);
        }
        out.push(group);
    }
    Ok(out)
}

/// Knill-Laflamme deviation of a code against single-erasure noise (single
/// located erasure, any subsystem).
pub fn kl_deviation_erasure(code: &CodeInstance) -> Result<f64> {
    if let Some(n) = code.symmetric_sites() {
        let ch = symmetric_erasure_channel(n)?;
        let v = code.encoder().matrix();
        let restricted: Vec<DMatrix<C64>> =
            ch.kraus().iter().map(|k| k.matrix() * v).collect();
        return Ok(kl_deviation_from_restricted(&restricted));
    }
    let mut worst = 0.0f64;
    for group in erasure_restricted_kraus(code)? {
        worst = worst.max(kl_deviation_from_restricted(&group));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::erasure_channel;
    use crate::tensor::DensityMatrix;
    use std::f64::consts::PI;

    fn weight_histogram(col: nalgebra::DVectorView<C64>) -> Vec<(usize, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for (idx, a) in col.iter().enumerate() {
            if a.norm() > 1e-12 {
                *counts.entry((idx as u32).count_ones() as usize).or_insert(0usize) += 1;
            }
        }
        counts.into_iter().collect()
    }

    #[test]
    fn reed_muller_weight_distributions() {
        for (t, zero_hist, one_hist) in [
            (3usize, vec![(0, 1), (4, 7)], vec![(3, 7), (7, 1)]),
            (4, vec![(0, 1), (8, 15)], vec![(7, 15), (15, 1)]),
        ] {
            let (code, _) = reed_muller_code(t).unwrap();
            let v = code.encoder().matrix();
            assert_eq!(weight_histogram(v.column(0).into()), zero_hist);
            assert_eq!(weight_histogram(v.column(1).into()), one_hist);
            for a in v.iter() {
                assert!(a.im == 0.0 && a.re >= 0.0);
            }
        }
    }

    #[test]
    fn reed_muller_transversal_gate_acts_as_logical_rotation() {
        for t in [3usize, 4] {
            let n = (1 << t) - 1;
            let (code, _) = reed_muller_code(t).unwrap();
            let v = code.encoder().matrix();
            let angle = PI / (1 << (t - 1)) as f64;
            let mut m = DMatrix::<C64>::zeros(2, 2);
            for idx in 0..v.nrows() {
                let w = (idx as u32).count_ones() as f64;
                let phase = C64::new(0.0, angle * (n as f64 - 2.0 * w)).exp();
                for a in 0..2 {
                    for b in 0..2 {
                        m[(a, b)] += v[(idx, a)].conj() * phase * v[(idx, b)];
                    }
                }
            }
            let mut target = DMatrix::<C64>::zeros(2, 2);
            target[(0, 0)] = C64::new(0.0, -angle).exp();
            target[(1, 1)] = C64::new(0.0, angle).exp();
            assert!((m - target).norm() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn reed_muller_corrects_single_site_errors() {
        let (code, _) = reed_muller_code(3).unwrap();
        assert!(kl_deviation_erasure(&code).unwrap() < 1e-10);

        // distance 3: the error-correction conditions hold for every pair of
        // weight-at-most-one Pauli errors, including cross-site pairs
        let n = 7;
        let v = code.encoder().matrix();
        let mut errors = vec![v.clone()];
        for l in 0..n {
            let bit = 1usize << (n - 1 - l);
            let mut x = DMatrix::<C64>::zeros(1 << n, 2);
            let mut y = DMatrix::<C64>::zeros(1 << n, 2);
            let mut z = DMatrix::<C64>::zeros(1 << n, 2);
            for idx in 0..(1usize << n) {
                for c in 0..2 {
                    let flipped = v[(idx ^ bit, c)];
                    x[(idx, c)] = flipped;
                    y[(idx, c)] = if idx & bit == 0 {
                        C64::new(0.0, -1.0) * flipped
                    } else {
                        C64::new(0.0, 1.0) * flipped
                    };
                    z[(idx, c)] = if idx & bit == 0 {
                        v[(idx, c)]
                    } else {
                        -v[(idx, c)]
                    };
                }
            }
            errors.push(x);
            errors.push(y);
            errors.push(z);
        }
        let dev = kl_deviation_from_restricted(&errors);
        assert!(dev < 1e-10, "weight-one Pauli deviation {dev}");
    }

    #[test]
    fn reed_muller_generator_matches_excitation_number() {
        let (_, pair) = reed_muller_code(3).unwrap();
        match &pair.h_physical {
            PhysicalHamiltonian::Diagonal { diag, .. } => {
                assert_eq!(diag[0], 0.0);
                assert_eq!(diag[0b1010000], 2.0);
                assert_eq!(diag[(1 << 7) - 1], 7.0);
            }
            _ => panic!("expected diagonal physical Hamiltonian"),
        }
        assert_eq!(pair.h_logical.matrix()[(0, 0)].re, 0.0);
        assert_eq!(pair.h_logical.matrix()[(1, 1)].re, -1.0);
    }

    #[test]
    fn reed_muller_rejects_unsupported_order() {
        assert!(reed_muller_code(2).is_err());
        assert!(reed_muller_code(5).is_err());
    }

    #[test]
    fn thermodynamic_q0_is_exactly_covariant() {
        for (n, m) in [(8usize, 2usize), (10, 4), (12, 2)] {
            let (code, pair) = thermodynamic_code(n, m, 0.0).unwrap();
            let v = code.encoder().matrix();
            let lhs = pair.h_physical.mul_tall(v).unwrap();
            let rhs = v * pair.h_logical.matrix();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn thermodynamic_q1_satisfies_erasure_conditions() {
        for n in [8usize, 10, 14] {
            let (code, _) = thermodynamic_code(n, 2, 1.0).unwrap();
            assert!(kl_deviation_erasure(&code).unwrap() < 1e-10, "n = {n}");
            // closed-form endpoint states
            let v = code.encoder().matrix();
            let w = n / 2;
            let r = std::f64::consts::FRAC_1_SQRT_2;
            assert!((v[(w - 1, 0)].re - r).abs() < 1e-10);
            assert!((v[(w + 1, 0)].re - r).abs() < 1e-10);
            assert!((v[(w - 3, 1)].re - r).abs() < 1e-10);
            assert!((v[(w + 3, 1)].re - r).abs() < 1e-10);
        }
    }

    #[test]
    fn thermodynamic_q0_violates_erasure_conditions() {
        let (code, _) = thermodynamic_code(10, 2, 0.0).unwrap();
        assert!(kl_deviation_erasure(&code).unwrap() > 1e-3);
    }

    #[test]
    fn thermodynamic_interpolation_is_isometric_and_lipschitz() {
        let n = 12;
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let encoders: Vec<DMatrix<C64>> = grid
            .iter()
            .map(|&q| {
                thermodynamic_code(n, 2, q)
                    .unwrap()
                    .0
                    .encoder()
                    .matrix()
                    .clone()
            })
            .collect();
        for pair in encoders.windows(2) {
            let diff = (&pair[1] - &pair[0]).norm();
            assert!(diff <= 4.0 * (1.0 / 20.0), "step jump {diff}");
        }
    }

    #[test]
    fn thermodynamic_rejects_bad_parameters() {
        assert!(thermodynamic_code(9, 2, 0.0).is_err()); // odd n
        assert!(thermodynamic_code(8, 3, 0.0).is_err()); // odd m
        assert!(thermodynamic_code(8, 6, 0.0).is_err()); // m > n/2
        assert!(thermodynamic_code(8, 2, 1.5).is_err()); // q out of range
        assert!(thermodynamic_code(6, 2, 0.5).is_err()); // interpolation needs n >= 8
        assert!(thermodynamic_code(4, 2, 0.0).is_ok());
    }

    #[test]
    fn dicke_embedding_is_isometric_and_diagonalizes_collective_z() {
        let n = 6;
        let e = symmetric_embed(n).unwrap();
        let gram = e.matrix().adjoint() * e.matrix();
        assert!((gram - DMatrix::<C64>::identity(n + 1, n + 1)).norm() < 1e-12);
        // pull back sum_l Z_l / 2
        let dim = 1 << n;
        let mut hs = DMatrix::<C64>::zeros(dim, dim);
        for i in 0..dim {
            let w = (i as u32).count_ones() as f64;
            hs[(i, i)] = cr((n as f64 - 2.0 * w) / 2.0);
        }
        let pulled = e.matrix().adjoint() * hs * e.matrix();
        for w in 0..=n {
            for w2 in 0..=n {
                let expect = if w == w2 {
                    cr((n as f64 - 2.0 * w as f64) / 2.0)
                } else {
                    C64::new(0.0, 0.0)
                };
                assert!((pulled[(w, w2)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_erasure_matches_partial_trace_of_embedded_state() {
        let n = 4;
        let e_n = symmetric_embed(n).unwrap();
        let e_m = symmetric_embed(n - 1).unwrap();
        // a haphazard normalized symmetric state
        let raw = [0.3, -0.5, 0.1, 0.7, 0.4];
        let norm: f64 = raw.iter().map(|x| x * x).sum::<f64>();
        let psi: Vec<C64> = raw.iter().map(|&x| cr(x / norm.sqrt())).collect();
        let psi_vec = DMatrix::<C64>::from_fn(n + 1, 1, |i, _| psi[i]);

        let dense = e_n.matrix() * &psi_vec;
        let state: Vec<C64> = dense.iter().cloned().collect();
        let rho = DensityMatrix::pure(&state, SystemShape::qubits(n)).unwrap();
        let keep: Vec<String> = (1..n).map(|i| format!("q{i}")).collect();
        let keep_refs: Vec<&str> = keep.iter().map(|s| s.as_str()).collect();
        let traced = rho.op().partial_trace(&keep_refs).unwrap();

        let ch = symmetric_erasure_channel(n).unwrap();
        let mut eff = DMatrix::<C64>::zeros(n, n);
        for k in ch.kraus() {
            let b = k.matrix() * &psi_vec;
            eff += &b * b.adjoint();
        }
        let lifted = e_m.matrix() * eff * e_m.matrix().adjoint();
        assert!((traced.matrix() - lifted).norm() < 1e-12);

        // the dedicated erasure channel is trace preserving on this state too
        let full = erasure_channel(&SystemShape::qubits(n)).unwrap();
        let out = full.apply(&rho).unwrap();
        assert!((out.op().trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trivial_code_defaults() {
        let shape = SystemShape::qubits(3);
        let (code, pair) = trivial_code(&shape).unwrap();
        assert_eq!(code.logical_dim(), 8);
        let ident = DMatrix::<C64>::identity(8, 8);
        assert!((code.encoder().matrix() - ident).norm() < 1e-14);
        assert!((pair.h_physical.spectral_range().unwrap() - 3.0).abs() < 1e-12);
        // Z on the first qubit: +1/2 on the first half of indices
        assert_eq!(pair.h_logical.matrix()[(0, 0)].re, 0.5);
        assert_eq!(pair.h_logical.matrix()[(7, 7)].re, -0.5);
    }

    #[test]
    fn four_qubit_code_corrects_single_erasure() {
        // [[4,1]] code: span{(|0000>+|1111>)/sqrt2, (|0011>+|1100>)/sqrt2}
        let mut v = DMatrix::<C64>::zeros(16, 2);
        let r = cr(std::f64::consts::FRAC_1_SQRT_2);
        v[(0b0000, 0)] = r;
        v[(0b1111, 0)] = r;
        v[(0b0011, 1)] = r;
        v[(0b1100, 1)] = r;
        let shape = SystemShape::qubits(4);
        let code = CodeInstance::new(
            Operator::new(v, shape.clone(), SystemShape::single(2, "L")).unwrap(),
            shape,
            "four-qubit",
        )
        .unwrap();
        // independent oracle: explicit Gram matrices of the restricted errors
        let restricted = erasure_restricted_kraus(&code).unwrap();
        assert_eq!(restricted.len(), 4);
        assert!(restricted.iter().all(|g| g.len() == 2));
        let dev = restricted
            .iter()
            .map(|g| kl_deviation_from_restricted(g))
            .fold(0.0f64, f64::max);
        assert!(dev < 1e-12, "deviation {dev}");
        // breaking a codeword component must break the conditions
        let mut v_bad = DMatrix::<C64>::zeros(16, 2);
        v_bad[(0b0000, 0)] = cr(1.0);
        v_bad[(0b0011, 1)] = r;
        v_bad[(0b1100, 1)] = r;
        let shape = SystemShape::qubits(4);
        let bad = CodeInstance::new(
            Operator::new(v_bad, shape.clone(), SystemShape::single(2, "L")).unwrap(),
            shape,
            "bad",
        )
        .unwrap();
        assert!(kl_deviation_erasure(&bad).unwrap() > 0.01);
    }

    #[test]
    fn custom_code_descriptor_round_trip() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut isometry = vec![vec![[0.0, 0.0]; 2]; 4];
        isometry[0][0] = [r, 0.0];
        isometry[3][0] = [r, 0.0];
        isometry[1][1] = [r, 0.0];
        isometry[2][1] = [0.0, r];
        let eye = |d: usize, scale: f64| -> Vec<Vec<[f64; 2]>> {
            (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| if i == j { [scale, 0.0] } else { [0.0, 0.0] })
                        .collect()
                })
                .collect()
        };
        let desc = CodeDescriptor {
            name: "bell-ish".into(),
            logical_dim: 2,
            physical_dims: vec![2, 2],
            isometry,
            h_logical: eye(2, 0.5),
            h_physical: eye(4, 1.0),
        };
        let text = serde_json::to_string(&desc).unwrap();
        let parsed: CodeDescriptor = serde_json::from_str(&text).unwrap();
        let (code, pair) = custom_code(&parsed).unwrap();
        assert_eq!(code.name(), "bell-ish");
        assert_eq!(code.logical_dim(), 2);
        assert_eq!(code.physical_dim(), 4);
        assert!((pair.h_logical.matrix()[(0, 0)].re - 0.5).abs() < 1e-14);

        let mut broken = parsed.clone();
        broken.isometry[0][0] = [1.0, 0.0];
        assert!(matches!(custom_code(&broken), Err(Error::NotIsometry(_))));
    }

    #[test]
    fn projector_is_idempotent_and_guarded() {
        let (code, _) = thermodynamic_code(8, 2, 0.7).unwrap();
        let p = code.projector().unwrap();
        let pp = p.mul(&p).unwrap();
        assert!((pp.matrix() - p.matrix()).norm() < 1e-10);
        assert!(p.hermiticity_deviation() < 1e-12);
        assert!((p.trace().re - 2.0).abs() < 1e-10);

        let (big, _) = reed_muller_code(4).unwrap();
        assert!(matches!(
            big.projector(),
            Err(Error::DimensionOverflow(_))
        ));
    }

    #[test]
    fn lowdin_orthonormalization_properties() {
        let m = DMatrix::<C64>::from_fn(5, 2, |i, j| C64::new((i + j) as f64 * 0.3 + 1.0, i as f64 * 0.1));
        let q = lowdin_orthonormalize(&m).unwrap();
        let gram = q.adjoint() * &q;
        assert!((gram - DMatrix::<C64>::identity(2, 2)).norm() < 1e-12);
        // an isometry is a fixed point
        let q2 = lowdin_orthonormalize(&q).unwrap();
        assert!((q2 - q).norm() < 1e-12);
    }

    #[test]
    fn binomial_table() {
        assert_eq!(binomial(6, 3), 20.0);
        assert_eq!(binomial(10, 0), 1.0);
        assert_eq!(binomial(4, 5), 0.0);
        let d = dicke_dense(5, 2).unwrap();
        let norm: f64 = d.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
