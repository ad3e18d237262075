//! Kraus-form quantum channels, their duals and complements, standard noise
//! constructors (single erasure, independent dephasing) and the
//! Hamiltonian-in-Kraus-span check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::tensor::{cr, C64, DensityMatrix, Operator, SystemShape};
use crate::{Error, Result};

/// Completely positive trace-preserving map in Kraus form. All Kraus
/// operators share one input and one output space.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    kraus: Vec<Operator>,
    name: String,
}

impl KrausChannel {
    /// Validates common shapes and trace preservation `sum K_i^dag K_i = I`
    /// within `1e-8`.
    pub fn new(kraus: Vec<Operator>, name: impl Into<String>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty Kraus list".into()))?;
        let (rows, cols) = (first.nrows(), first.ncols());
        if kraus.iter().any(|k| k.nrows() != rows || k.ncols() != cols) {
            return Err(Error::Shape("Kraus operators must share one shape".into()));
        }
        let din = cols;
        let mut acc = DMatrix::<C64>::zeros(din, din);
        for k in kraus.iter() {
            acc += k.matrix().adjoint() * k.matrix();
        }
        let dev = (&acc - DMatrix::<C64>::identity(din, din)).norm();
        if dev > 1e-8 {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(Self {
            kraus,
            name: name.into(),
        })
    }

    pub fn identity(shape: SystemShape) -> Self {
        Self {
            kraus: vec![Operator::identity(shape)],
            name: "identity".into(),
        }
    }

    /// Channel conjugating by a single unitary (or isometry) `V`.
    pub fn from_isometry(v: Operator, name: impl Into<String>) -> Result<Self> {
        let dev = (v.matrix().adjoint() * v.matrix()
            - DMatrix::<C64>::identity(v.ncols(), v.ncols()))
        .norm();
        if dev > 1e-8 {
            return Err(Error::NotIsometry(dev));
        }
        Ok(Self {
            kraus: vec![v],
            name: name.into(),
        })
    }

    pub fn kraus(&self) -> &[Operator] {
        &self.kraus
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &SystemShape {
        self.kraus[0].col_shape()
    }

    pub fn output_shape(&self) -> &SystemShape {
        self.kraus[0].row_shape()
    }

    pub fn input_dim(&self) -> usize {
        self.kraus[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.kraus[0].nrows()
    }

    /// `rho -> sum K_i rho K_i^dag`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.op().nrows() != self.input_dim() {
            return Err(Error::Shape(format!(
                "channel expects input dimension {}, state has {}",
                self.input_dim(),
                rho.op().nrows()
            )));
        }
        let dout = self.output_dim();
        let mut out = DMatrix::<C64>::zeros(dout, dout);
        for k in &self.kraus {
            out += k.matrix() * rho.op().matrix() * k.matrix().adjoint();
        }
        DensityMatrix::new(Operator::square(out, self.output_shape().clone())?)
    }

    /// Sequential composition `after o before` with Kraus list `{A_i B_j}`.
    pub fn compose(after: &KrausChannel, before: &KrausChannel) -> Result<KrausChannel> {
        if after.input_dim() != before.output_dim() {
            return Err(Error::Shape(format!(
                "cannot chain output dimension {} into input dimension {}",
                before.output_dim(),
                after.input_dim()
            )));
        }
        let mut kraus = Vec::with_capacity(after.kraus.len() * before.kraus.len());
        for a in &after.kraus {
            for b in &before.kraus {
                kraus.push(a.mul(b)?);
            }
        }
        KrausChannel::new(kraus, format!("{} . {}", after.name, before.name))
    }

    /// Heisenberg-picture dual on observables: `X -> sum K_i^dag X K_i`.
    pub fn dual_apply(&self, x: &Operator) -> Result<Operator> {
        if x.nrows() != self.output_dim() || !x.is_square() {
            return Err(Error::Shape("dual expects an output-space observable".into()));
        }
        let din = self.input_dim();
        let mut out = DMatrix::<C64>::zeros(din, din);
        for k in &self.kraus {
            out += k.matrix().adjoint() * x.matrix() * k.matrix();
        }
        Operator::square(out, self.input_shape().clone())
    }

    /// Complementary channel to the environment of the Stinespring dilation:
    /// `rho -> sum_ij Tr(K_i rho K_j^dag) |i><j|` on an environment of
    /// dimension = number of Kraus operators.
    pub fn complementary(&self) -> Result<KrausChannel> {
        let k = self.kraus.len();
        let din = self.input_dim();
        let env = SystemShape::single(k, "env");
        // F_m[i, c] = K_i[m, c]; then sum_m F_m rho F_m^dag has the required
        // matrix elements.
        let mut kraus = Vec::with_capacity(self.output_dim());
        for m in 0..self.output_dim() {
            let mut f = DMatrix::<C64>::zeros(k, din);
            for (i, ki) in self.kraus.iter().enumerate() {
                for c in 0..din {
                    f[(i, c)] = ki.matrix()[(m, c)];
                }
            }
            kraus.push(Operator::new(f, env.clone(), self.input_shape().clone())?);
        }
        KrausChannel::new(kraus, format!("complement of {}", self.name))
    }

    /// Choi matrix on `input (x) output`, `C = sum_i vec(K_i) vec(K_i)^dag`
    /// with `vec(K) = sum_a |a>_in (x) K|a>`. Trace preservation reads
    /// `Tr_out C = I_in`.
    pub fn choi(&self) -> Result<Operator> {
        let din = self.input_dim();
        let dout = self.output_dim();
        let shape = SystemShape::single(din, "in").concat(&SystemShape::single(dout, "out"))?;
        let mut c = DMatrix::<C64>::zeros(din * dout, din * dout);
        for k in &self.kraus {
            let mut v = DMatrix::<C64>::zeros(din * dout, 1);
            for a in 0..din {
                for m in 0..dout {
                    v[(a * dout + m, 0)] = k.matrix()[(m, a)];
                }
            }
            c += &v * v.adjoint();
        }
        Operator::square(c, shape)
    }
}

/// Distance between two channels as Frobenius distance of Choi matrices.
pub fn choi_distance(a: &KrausChannel, b: &KrausChannel) -> Result<f64> {
    let ca = a.choi()?;
    let cb = b.choi()?;
    if ca.nrows() != cb.nrows() {
        return Err(Error::Shape("channels act on different spaces".into()));
    }
    Ok(ca.sub(&cb)?.frobenius_norm())
}

/// Single-erasure noise: one subsystem, chosen uniformly at random, has its
/// content moved to the environment and replaced by a flag state `|e>` in an
/// enlarged local space, with the location recorded in a classical register.
///
/// Output space: each subsystem enlarged from `d` to `d+1` levels (the flag
/// is the added top level), tensored with a location register of dimension
/// `n`. Kraus operators `K_{l,k} = (1/sqrt n) |e><k|_l (x) |l>_loc`.
pub fn erasure_channel(shape: &SystemShape) -> Result<KrausChannel> {
    let n = shape.num_subsystems();
    if n == 0 {
        return Err(Error::Shape("erasure needs at least one subsystem".into()));
    }
    let out_dims: Vec<usize> = shape.dims().iter().map(|&d| d + 1).collect();
    let out_sub = SystemShape::new(out_dims.clone(), shape.labels().to_vec())?;
    let out_shape = out_sub.concat(&SystemShape::single(n, "loc"))?;
    let din = shape.total_dim();
    let amp = cr(1.0 / (n as f64).sqrt());

    let mut kraus = Vec::new();
    for l in 0..n {
        for k in 0..shape.dims()[l] {
            let mut m = DMatrix::<C64>::zeros(out_shape.total_dim(), din);
            for idx in 0..din {
                // Decode the input index, keep only terms with slot l = k.
                let mut rem = idx;
                let mut sub = vec![0usize; n];
                for s in (0..n).rev() {
                    sub[s] = rem % shape.dims()[s];
                    rem /= shape.dims()[s];
                }
                if sub[l] != k {
                    continue;
                }
                // Output: slot l -> flag level d_l, others unchanged in the
                // enlarged local spaces, then the location register.
                sub[l] = shape.dims()[l]; // flag level
                let mut out_idx = 0usize;
                for s in 0..n {
                    out_idx = out_idx * out_dims[s] + sub[s];
                }
                out_idx = out_idx * n + l;
                m[(out_idx, idx)] = amp;
            }
            kraus.push(Operator::new(m, out_shape.clone(), shape.clone())?);
        }
    }
    KrausChannel::new(kraus, format!("erasure[{n}]"))
}

/// Independent dephasing: every qubit is dephased with probability `p`
/// (site Kraus `sqrt(1-p) I`, `sqrt(p) Z`, tensored over sites).
pub fn dephasing_channel(p: f64, shape: &SystemShape) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dephasing probability {p} outside [0, 1]"
        )));
    }
    let n = shape.num_subsystems();
    if shape.dims().iter().any(|&d| d != 2) {
        return Err(Error::Shape("dephasing noise is defined on qubits".into()));
    }
    if n > 12 {
        return Err(Error::DimensionOverflow(n));
    }
    let din = shape.total_dim();
    let mut kraus = Vec::new();
    // Subset of sites carrying the Z factor; drop zero-amplitude terms so
    // p = 0 and p = 1 stay single-Kraus.
    for mask in 0..(1usize << n) {
        let z_sites = mask.count_ones() as f64;
        let amp = p.powf(z_sites / 2.0) * (1.0 - p).powf((n as f64 - z_sites) / 2.0);
        if amp == 0.0 {
            continue;
        }
        let mut m = DMatrix::<C64>::zeros(din, din);
        for idx in 0..din {
            // Sign = parity of bits where both the mask and the basis state
            // are 1 (Z acts on |1>).
            let mut bits = 0usize;
            let mut rem = idx;
            for s in (0..n).rev() {
                let b = rem % 2;
                rem /= 2;
                if (mask >> (n - 1 - s)) & 1 == 1 && b == 1 {
                    bits += 1;
                }
            }
            let sign = if bits % 2 == 0 { 1.0 } else { -1.0 };
            m[(idx, idx)] = cr(sign * amp);
        }
        kraus.push(Operator::square(m, shape.clone())?);
    }
    KrausChannel::new(kraus, format!("dephasing[p={p}]"))
}

/// Result of the Hamiltonian-in-Kraus-span condition check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HksReport {
    pub holds: bool,
    pub residual: f64,
    pub span_dimension: usize,
}

/// Least-squares projection of `H_S` onto `span{K_i^dag K_j}`; `holds` when
/// the Frobenius residual is at most `1e-8 * ||H_S||_F`.
pub fn check_hks(h_s: &Operator, noise: &KrausChannel) -> Result<HksReport> {
    if !h_s.is_square() || h_s.nrows() != noise.input_dim() {
        return Err(Error::Shape("Hamiltonian must act on the noise input space".into()));
    }
    let dev = h_s.hermiticity_deviation();
    if dev > 1e-8 * (1.0 + h_s.frobenius_norm()) {
        return Err(Error::NotHermitian(dev));
    }
    // Orthonormal basis of the span by modified Gram-Schmidt in the
    // Hilbert-Schmidt inner product.
    let mut basis: Vec<DMatrix<C64>> = Vec::new();
    for ki in noise.kraus() {
        for kj in noise.kraus() {
            let mut cand = ki.matrix().adjoint() * kj.matrix();
            for b in &basis {
                let inner: C64 = b
                    .iter()
                    .zip(cand.iter())
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                cand -= b * inner;
            }
            let nrm = cand.norm();
            if nrm > 1e-10 {
                basis.push(cand / cr(nrm));
            }
        }
    }
    let mut residual_mat = h_s.matrix().clone();
    for b in &basis {
        let inner: C64 = b
            .iter()
            .zip(residual_mat.iter())
            .map(|(x, y)| x.conj() * y)
            .sum();
        residual_mat -= b * inner;
    }
    let residual = residual_mat.norm();
    // Dimension count uses a second, orthogonality-stable pass already done
    // above; basis length is the span dimension.
    let span_dimension = basis.len();
    let hnorm = h_s.frobenius_norm();
    Ok(HksReport {
        holds: residual <= 1e-8 * hnorm,
        residual,
        span_dimension,
    })
}

// ---------------------------------------------------------------------------
// JSON descriptor

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ChannelDescriptor {
    Erasure {
        dims: Vec<usize>,
    },
    Dephasing {
        dims: Vec<usize>,
        p: f64,
    },
    Custom {
        dims: Vec<usize>,
        /// Kraus operators as `[op][row][col] = [re, im]`; all operators map
        /// the `dims` product space to itself unless `out_dim` is given.
        kraus: Vec<Vec<Vec<[f64; 2]>>>,
    },
}

impl ChannelDescriptor {
    pub fn build(&self) -> Result<KrausChannel> {
        match self {
            ChannelDescriptor::Erasure { dims } => {
                let shape = labeled_shape(dims)?;
                erasure_channel(&shape)
            }
            ChannelDescriptor::Dephasing { dims, p } => {
                let shape = labeled_shape(dims)?;
                dephasing_channel(*p, &shape)
            }
            ChannelDescriptor::Custom { dims, kraus } => {
                let shape = labeled_shape(dims)?;
                let din = shape.total_dim();
                let mut ops = Vec::new();
                for km in kraus {
                    let rows = km.len();
                    if km.iter().any(|r| r.len() != din) {
                        return Err(Error::Descriptor(format!(
                            "custom Kraus row length must equal input dimension {din}"
                        )));
                    }
                    let mut m = DMatrix::<C64>::zeros(rows, din);
                    for (i, r) in km.iter().enumerate() {
                        for (j, &[re, im]) in r.iter().enumerate() {
                            m[(i, j)] = C64::new(re, im);
                        }
                    }
                    let out_shape = if rows == din {
                        shape.clone()
                    } else {
                        SystemShape::single(rows, "out")
                    };
                    ops.push(Operator::new(m, out_shape, shape.clone())?);
                }
                KrausChannel::new(ops, "custom")
            }
        }
    }

    pub fn describe(ch: &KrausChannel) -> ChannelDescriptor {
        let dims = ch.input_shape().dims().to_vec();
        let kraus = ch
            .kraus()
            .iter()
            .map(|k| {
                (0..k.nrows())
                    .map(|i| {
                        (0..k.ncols())
                            .map(|j| {
                                let z = k.matrix()[(i, j)];
                                [z.re, z.im]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ChannelDescriptor::Custom { dims, kraus }
    }
}

fn labeled_shape(dims: &[usize]) -> Result<SystemShape> {
    let labels = (0..dims.len()).map(|i| format!("q{i}")).collect();
    SystemShape::new(dims.to_vec(), labels)
}
