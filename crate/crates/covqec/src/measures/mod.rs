//! Quantitative measures: QEC inaccuracy, the three covariance-violation
//! measures, charge fluctuation, gate-error bounds, and the two SDP-computable
//! channel quantities (minimal Hamiltonian spread in the Kraus span, and the
//! regularized channel QFI).

pub mod epsilon;
pub mod qfi;

pub use epsilon::{gate_error_bounds, qec_inaccuracy, EpsilonOutcome};
pub use qfi::{f_reg, f_reg_collective_erasure, j_min, j_min_collective_erasure};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channels::KrausChannel;
use crate::codes::{symmetric_erasure_channel, CodeInstance, SymmetryPair};
use crate::convex::{golden_section_max, golden_section_min, numerical_range_distance};
use crate::tensor::{cr, hermitian_evolution, site_bra_apply, C64};
use crate::{Error, Result};

/// Noise acting on the physical space of a code.
///
/// Single erasure is kept symbolic rather than as a `KrausChannel`: its dense
/// Kraus family is enormous on many qubits, while every measure only needs
/// the code-restricted operators `K_i V`, which have a closed form.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Noiseless dynamics.
    None,
    /// Single located erasure of one subsystem (uniformly random location).
    Erasure,
    /// Arbitrary channel given by dense Kraus operators.
    Channel(KrausChannel),
}

impl NoiseModel {
    pub fn label(&self) -> String {
        match self {
            NoiseModel::None => "none".into(),
            NoiseModel::Erasure => "erasure".into(),
            NoiseModel::Channel(ch) => ch.name().to_string(),
        }
    }
}

/// Code-restricted noise: effective Kraus operators `Q^dag K_i V` after
/// compressing onto the column span `Q` of the `K_i V`, grouped into sectors
/// whose outputs are exactly orthogonal (e.g. erasure locations, which carry
/// an orthogonal location register). Fidelities depend only on the
/// sector-diagonal blocks of a recovery's Choi matrix, so the sector
/// structure keeps the recovery SDP small.
#[derive(Debug, Clone)]
pub struct RestrictedNoise {
    /// `sectors[s][i]` has shape `rank(s) x logical_dim`.
    pub sectors: Vec<Vec<DMatrix<C64>>>,
    pub logical_dim: usize,
}

impl RestrictedNoise {
    pub fn total_rank(&self) -> usize {
        self.sectors
            .iter()
            .map(|s| s.first().map_or(0, |k| k.nrows()))
            .sum()
    }

    fn validate_trace_preserving(&self) -> Result<()> {
        let dl = self.logical_dim;
        let mut acc = DMatrix::<C64>::zeros(dl, dl);
        for sector in &self.sectors {
            for k in sector {
                acc += k.adjoint() * k;
            }
        }
        let dev = (acc - DMatrix::<C64>::identity(dl, dl)).norm();
        if dev > 1e-8 {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(())
    }
}

/// Orthonormal basis of the column span of the stacked blocks, by modified
/// Gram-Schmidt with a relative drop tolerance.
fn column_span_basis(blocks: &[DMatrix<C64>]) -> DMatrix<C64> {
    let nrows = blocks[0].nrows();
    let mut basis: Vec<nalgebra::DVector<C64>> = Vec::new();
    let scale: f64 = blocks.iter().map(|b| b.norm()).fold(0.0, f64::max).max(1.0);
    for b in blocks {
        for j in 0..b.ncols() {
            let mut v: nalgebra::DVector<C64> = b.column(j).into_owned();
            for q in &basis {
                let c = q.dotc(&v);
                v -= q * c;
            }
            // re-orthogonalize once for numerical safety
            for q in &basis {
                let c = q.dotc(&v);
                v -= q * c;
            }
            let norm = v.norm();
            if norm > 1e-10 * scale {
                basis.push(v / cr(norm));
            }
        }
    }
    let mut q = DMatrix::<C64>::zeros(nrows, basis.len());
    for (j, col) in basis.iter().enumerate() {
        q.set_column(j, col);
    }
    q
}

fn compress_sector(raw: &[DMatrix<C64>]) -> Vec<DMatrix<C64>> {
    let q = column_span_basis(raw);
    raw.iter().map(|b| q.adjoint() * b).collect()
}

/// Restrict noise to the code subspace spanned by the columns of `v`
/// (normally the encoder, or its image under a symmetry rotation).
pub fn restrict_noise_to(
    v: &DMatrix<C64>,
    code: &CodeInstance,
    noise: &NoiseModel,
) -> Result<RestrictedNoise> {
    let dl = v.ncols();
    let sectors = match noise {
        NoiseModel::None => vec![compress_sector(&[v.clone()])],
        NoiseModel::Channel(ch) => {
            if ch.input_dim() != v.nrows() {
                return Err(Error::Shape(format!(
                    "channel input dimension {} does not match the physical dimension {}",
                    ch.input_dim(),
                    v.nrows()
                )));
            }
            let raw: Vec<DMatrix<C64>> = ch.kraus().iter().map(|k| k.matrix() * v).collect();
            vec![compress_sector(&raw)]
        }
        NoiseModel::Erasure => {
            if let Some(n) = code.symmetric_sites() {
                let ch = symmetric_erasure_channel(n)?;
                let raw: Vec<DMatrix<C64>> =
                    ch.kraus().iter().map(|k| k.matrix() * v).collect();
                vec![compress_sector(&raw)]
            } else {
                let dims = code.physical_shape().dims().to_vec();
                let n = dims.len();
                if n < 2 {
                    return Err(Error::Shape("erasure needs >= 2 subsystems".into()));
                }
                let amp = cr(1.0 / (n as f64).sqrt());
                let mut sectors = Vec::with_capacity(n);
                for l in 0..n {
                    let raw: Vec<DMatrix<C64>> = (0..dims[l])
                        .map(|k| site_bra_apply(v, &dims, l, k) * amp)
                        .collect();
                    sectors.push(compress_sector(&raw));
                }
                sectors
            }
        }
    };
    let rn = RestrictedNoise {
        sectors,
        logical_dim: dl,
    };
    rn.validate_trace_preserving()?;
    Ok(rn)
}

pub fn restrict_noise(code: &CodeInstance, noise: &NoiseModel) -> Result<RestrictedNoise> {
    restrict_noise_to(code.encoder().matrix(), code, noise)
}

// ---------------------------------------------------------------------------
// Covariance-violation measures

/// Worst-case channel purified distance between the two isometric channels
/// `U_{S,theta} V` and `V U_{L,theta}` at a fixed angle, via the numerical
/// range of the logical-dimension matrix `W = U_{L,theta}^dag V^dag
/// U_{S,theta} V`.
fn covariance_distance_at(code: &CodeInstance, sym: &SymmetryPair, theta: f64) -> Result<f64> {
    let v = code.encoder().matrix();
    let rotated = sym.h_physical.evolution_mul(theta, v)?;
    let m = v.adjoint() * rotated;
    let ul_dag = hermitian_evolution(&sym.h_logical, -theta)?;
    let w = ul_dag.matrix() * m;
    let mut f = numerical_range_distance(&w).min(1.0);
    // P = sqrt(1 - f^2) amplifies roundoff in f near 1 to ~1e-8; distances
    // below that scale are numerical noise, so snap to an exact zero.
    if f > 1.0 - 1e-14 {
        f = 1.0;
    }
    Ok((1.0 - f * f).max(0.0).sqrt())
}

/// Group-global covariance violation: the worst-case purified distance
/// between rotate-then-encode and encode-then-rotate, maximized over one
/// period of the symmetry. Returns `(value, argmax theta)`.
pub fn global_violation(
    code: &CodeInstance,
    sym: &SymmetryPair,
    grid_size: usize,
) -> Result<(f64, f64)> {
    let period = sym.period.unwrap_or(std::f64::consts::TAU);
    let grid = grid_size.max(8);
    let mut best = (0.0f64, 0.0f64);
    for k in 0..grid {
        let theta = period * k as f64 / grid as f64;
        let p = covariance_distance_at(code, sym, theta)?;
        if p > best.0 {
            best = (p, theta);
        }
    }
    let step = period / grid as f64;
    let (theta_star, refined) = golden_section_max(
        |theta| covariance_distance_at(code, sym, theta).unwrap_or(0.0),
        best.1 - step,
        best.1 + step,
        1e-8,
    );
    Ok((refined.max(best.0).clamp(0.0, 1.0), theta_star))
}

/// Local covariance violation at theta = 0: the square root of the channel
/// QFI of `theta -> U_{S,theta} V U_{L,theta}^dag`. For a single-Kraus
/// family the QFI minimization is one-dimensional:
/// `F = 4 min_h lambda_max((A - hV)^dag (A - hV))` with
/// `A = H_S V - V H_L`.
pub fn point_violation(code: &CodeInstance, sym: &SymmetryPair) -> Result<f64> {
    let v = code.encoder().matrix();
    let hs_v = sym.h_physical.mul_tall(v)?;
    let a = &hs_v - v * sym.h_logical.matrix();
    let a2 = a.adjoint() * &a;
    let cross = a.adjoint() * v + v.adjoint() * &a;
    let dl = v.ncols();
    let objective = |h: f64| -> f64 {
        let mut m = a2.clone();
        for i in 0..dl {
            for j in 0..dl {
                m[(i, j)] -= cr(h) * cross[(i, j)];
            }
            m[(i, i)] += cr(h * h);
        }
        crate::tensor::hermitian_eig_matrix(&m).0[dl - 1]
    };
    let mut radius = a.norm() + 1.0;
    let mut res = golden_section_min(objective, -radius, radius, 1e-10 * radius);
    for _ in 0..40 {
        if res.0.abs() < 0.99 * radius {
            break;
        }
        radius *= 2.0;
        res = golden_section_min(objective, -radius, radius, 1e-10 * radius);
    }
    Ok(2.0 * res.1.max(0.0).sqrt())
}

/// Charge conservation violation: the spectral range of
/// `H_L - V^dag H_S V`.
pub fn charge_violation(code: &CodeInstance, sym: &SymmetryPair) -> Result<f64> {
    let diff = logical_charge_gap_operator(code, sym)?;
    let (vals, _) = crate::tensor::hermitian_eig_matrix(&diff);
    Ok(vals[vals.len() - 1] - vals[0])
}

fn logical_charge_gap_operator(
    code: &CodeInstance,
    sym: &SymmetryPair,
) -> Result<DMatrix<C64>> {
    let v = code.encoder().matrix();
    let pulled = v.adjoint() * sym.h_physical.mul_tall(v)?;
    let diff = sym.h_logical.matrix() - pulled;
    // hermitize against roundoff before taking spectra
    Ok((diff.adjoint() + &diff) * cr(0.5))
}

/// Charge fluctuation between the extremal eigenstates of `H_L`. The flag
/// reports degeneracy of an extremal eigenvalue (the lexicographically first
/// eigenvector is used in that case).
pub fn charge_fluctuation(code: &CodeInstance, sym: &SymmetryPair) -> Result<(f64, bool)> {
    let v = code.encoder().matrix();
    let pulled = v.adjoint() * sym.h_physical.mul_tall(v)?;
    let (vals, vecs) = sym.h_logical.hermitian_eig()?;
    let d = vals.len();
    if d < 2 {
        return Err(Error::Shape("charge fluctuation needs logical_dim >= 2".into()));
    }
    let degenerate =
        (vals[d - 1] - vals[d - 2]).abs() < 1e-9 || (vals[1] - vals[0]).abs() < 1e-9;
    let top = vecs.column(d - 1);
    let bottom = vecs.column(0);
    let expect = |state: nalgebra::DVectorView<C64>| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += state[i].conj() * pulled[(i, j)] * state[j];
            }
        }
        acc.re
    };
    Ok((expect(top) - expect(bottom), degenerate))
}

// ---------------------------------------------------------------------------
// Orchestration

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureOptions {
    /// theta-grid size for the global violation scan.
    pub grid_size: usize,
    /// theta-grid size for the gate-error lower bound (each point is an SDP).
    pub gate_grid: usize,
    pub compute_epsilon: bool,
    pub compute_gate_error: bool,
    pub compute_qfi: bool,
    pub seed: u64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            grid_size: 1024,
            gate_grid: 8,
            compute_epsilon: true,
            compute_gate_error: true,
            compute_qfi: true,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub grid_size: usize,
    pub theta_star: f64,
    pub epsilon_iterations: usize,
    pub epsilon_cuts: usize,
    pub epsilon_status: String,
    pub chi_degenerate: bool,
    pub j_min_status: String,
    pub f_reg_status: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureReport {
    pub code: String,
    pub noise: String,
    pub epsilon: f64,
    pub delta_group: f64,
    pub delta_point: f64,
    pub delta_charge: f64,
    pub chi: f64,
    /// `None` when the Hamiltonian lies outside the Kraus span (infeasible).
    pub j_min: Option<f64>,
    /// `None` when the regularized QFI diverges (noiseless direction).
    pub f_reg: Option<f64>,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
    pub diagnostics: Diagnostics,
}

/// Fit the diagonal of `H_S` as an affine function of excitation weight
/// (`diag[idx] = c0 + c1 * w(idx)`), returning the equivalent 1-local site
/// operator `diag(c0/n, c0/n + c1)`. Works both for qubit-register codes
/// (weight = popcount) and symmetric-subspace codes (weight = index).
fn fit_one_local_site(code: &CodeInstance, sym: &SymmetryPair) -> Option<(usize, f64, f64)> {
    let diag = match &sym.h_physical {
        crate::codes::PhysicalHamiltonian::Diagonal { diag, .. } => diag,
        _ => return None,
    };
    let (n, weight): (usize, Box<dyn Fn(usize) -> f64>) = match code.symmetric_sites() {
        Some(n) => (n, Box::new(|idx: usize| idx as f64)),
        None => {
            let dims = code.physical_shape().dims();
            if dims.iter().any(|&d| d != 2) {
                return None;
            }
            (
                dims.len(),
                Box::new(|idx: usize| (idx as u32).count_ones() as f64),
            )
        }
    };
    // fit c0, c1 from two anchor weights, then verify everywhere
    let mut anchor: Vec<(f64, f64)> = Vec::new();
    for (idx, &v) in diag.iter().enumerate() {
        let w = weight(idx);
        if !anchor.iter().any(|&(aw, _)| (aw - w).abs() < 0.5) {
            anchor.push((w, v));
        }
        if anchor.len() == 2 {
            break;
        }
    }
    if anchor.len() < 2 {
        return None;
    }
    let c1 = (anchor[1].1 - anchor[0].1) / (anchor[1].0 - anchor[0].0);
    let c0 = anchor[0].1 - c1 * anchor[0].0;
    for (idx, &v) in diag.iter().enumerate() {
        if (v - c0 - c1 * weight(idx)).abs() > 1e-9 {
            return None;
        }
    }
    Some((n, c0 / n as f64, c0 / n as f64 + c1))
}

/// Compute the full measure suite for one (code, symmetry, noise) instance.
pub fn measure(
    code: &CodeInstance,
    sym: &SymmetryPair,
    noise: &NoiseModel,
    opts: &MeasureOptions,
) -> Result<MeasureReport> {
    let mut notes = Vec::new();
    let (delta_group, theta_star) = global_violation(code, sym, opts.grid_size)?;
    let delta_point = point_violation(code, sym)?;
    let delta_charge = charge_violation(code, sym)?;
    let (chi, chi_degenerate) = charge_fluctuation(code, sym)?;

    let (epsilon, eps_diag) = if opts.compute_epsilon {
        let rn = restrict_noise(code, noise)?;
        let out = epsilon::epsilon_solver(&rn, opts.seed)?;
        (out.epsilon, Some(out))
    } else {
        notes.push("epsilon skipped by options".into());
        (f64::NAN, None)
    };

    let (j_value, j_status, f_value, f_status) = if opts.compute_qfi {
        qfi_for_instance(code, sym, noise, &mut notes)?
    } else {
        notes.push("QFI quantities skipped by options".into());
        (None, "skipped".into(), None, "skipped".into())
    };

    let (gamma_lower, gamma_upper) = if opts.compute_gate_error && opts.compute_epsilon {
        gate_error_bounds(code, noise, sym, opts.gate_grid, opts.seed, delta_group, epsilon)?
    } else {
        notes.push("gate-error bounds skipped by options".into());
        (f64::NAN, f64::NAN)
    };

    Ok(MeasureReport {
        code: code.name().to_string(),
        noise: noise.label(),
        epsilon,
        delta_group,
        delta_point,
        delta_charge,
        chi,
        j_min: j_value,
        f_reg: f_value,
        gamma_lower,
        gamma_upper,
        diagnostics: Diagnostics {
            grid_size: opts.grid_size,
            theta_star,
            epsilon_iterations: eps_diag.as_ref().map_or(0, |d| d.iterations),
            epsilon_cuts: eps_diag.as_ref().map_or(0, |d| d.cuts),
            epsilon_status: eps_diag
                .map_or_else(|| "skipped".into(), |d| d.status),
            chi_degenerate,
            j_min_status: j_status,
            f_reg_status: f_status,
            notes,
        },
    })
}

type QfiFields = (Option<f64>, String, Option<f64>, String);

fn qfi_for_instance(
    code: &CodeInstance,
    sym: &SymmetryPair,
    noise: &NoiseModel,
    notes: &mut Vec<String>,
) -> Result<QfiFields> {
    match noise {
        NoiseModel::Erasure => {
            if let Some((n, s0, s1)) = fit_one_local_site(code, sym) {
                let j = j_min_collective_erasure(n, s0, s1)?;
                let f = f_reg_collective_erasure(n, s0, s1)?;
                Ok((Some(j), "optimal".into(), Some(f), "optimal".into()))
            } else {
                notes.push(
                    "H_S is not 1-local diagonal; erasure QFI quantities unavailable".into(),
                );
                Ok((None, "unavailable".into(), None, "unavailable".into()))
            }
        }
        NoiseModel::Channel(ch) => {
            if ch.input_dim() <= 64 && ch.kraus().len() <= 16 {
                let hs = sym.h_physical.dense()?;
                let j = j_min(&hs, ch)?;
                let f = f_reg(&hs, ch)?;
                let js = if j.is_some() { "optimal" } else { "infeasible" };
                let fs = if f.is_some() { "optimal" } else { "divergent" };
                Ok((j, js.into(), f, fs.into()))
            } else {
                notes.push("channel too large for the dense QFI SDPs".into());
                Ok((None, "unavailable".into(), None, "unavailable".into()))
            }
        }
        NoiseModel::None => {
            // Kraus {I}: the span is C*I, so H_S fits iff it is a multiple of I.
            if sym.h_physical.spectral_range()? < 1e-8 {
                Ok((Some(0.0), "optimal".into(), None, "divergent".into()))
            } else {
                Ok((None, "infeasible".into(), None, "divergent".into()))
            }
        }
    }
}
