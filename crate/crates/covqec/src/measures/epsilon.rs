//! QEC inaccuracy by constraint generation: worst-case (not average) channel
//! fidelity is a minimax over recoveries and pure inputs, solved by
//! alternating a recovery SDP over a growing cut set of logical inputs with
//! a nonconvex inner search for a new worst-case input.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codes::CodeInstance;
use crate::convex::{
    add_hermitian_psd, herm_row, recover_hermitian, solve, HermitianBlock, RowBuilder,
    SdpProblem, SdpStatus,
};
use crate::measures::{restrict_noise, restrict_noise_to, NoiseModel, RestrictedNoise};
use crate::tensor::{cr, C64};
use crate::{Error, Result};

const FID_TOL: f64 = 1e-6;
const MAX_OUTER: usize = 40;

#[derive(Debug, Clone)]
pub struct EpsilonOutcome {
    /// `sqrt(1 - F_worst)` for the recovery found (pessimistic: the reported
    /// value is achieved by a concrete recovery).
    pub epsilon: f64,
    /// Worst-case entanglement-input fidelity of the final recovery.
    pub fidelity: f64,
    pub iterations: usize,
    pub cuts: usize,
    pub status: String,
}

/// QEC inaccuracy `min_R max_psi P(R o N o E, id)`.
pub fn qec_inaccuracy(code: &CodeInstance, noise: &NoiseModel) -> Result<f64> {
    let rn = restrict_noise(code, noise)?;
    Ok(epsilon_solver(&rn, 7)?.epsilon)
}

/// Gate implementation error bounds: `upper = delta_G + epsilon`; `lower` is
/// the largest fixed-angle optimal-recovery distance over a theta grid.
/// (At fixed theta the logical rotation is absorbed into the recovery, so
/// each grid point is the inaccuracy of the rotated code.)
#[allow(clippy::too_many_arguments)]
pub fn gate_error_bounds(
    code: &CodeInstance,
    noise: &NoiseModel,
    sym: &crate::codes::SymmetryPair,
    grid: usize,
    seed: u64,
    delta_group: f64,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let upper = (delta_group + epsilon).min(1.0);
    let period = sym.period.unwrap_or(std::f64::consts::TAU);
    let v = code.encoder().matrix();
    let mut lower = 0.0f64;
    for k in 0..grid.max(1) {
        let theta = period * k as f64 / grid.max(1) as f64;
        let v_theta = sym.h_physical.evolution_mul(theta, v)?;
        let rn = restrict_noise_to(&v_theta, code, noise)?;
        let out = epsilon_solver(&rn, seed ^ (k as u64))?;
        lower = lower.max(out.epsilon);
    }
    Ok((lower.min(upper + 1e-9), upper))
}

/// Solve `max_R min_psi F` for the restricted noise by cutting planes.
pub fn epsilon_solver(rn: &RestrictedNoise, seed: u64) -> Result<EpsilonOutcome> {
    let dl = rn.logical_dim;
    // Exact-correctability pre-check: if every within-sector Kraus product is
    // proportional to the identity (sectors are orthogonal, so cross-sector
    // products vanish in the full channel), a perfect recovery exists and the
    // inaccuracy is exactly zero. This avoids reporting solver-tolerance
    // noise amplified by the square root.
    if kl_deviation(rn) < 1e-9 {
        return Ok(EpsilonOutcome {
            epsilon: 0.0,
            fidelity: 1.0,
            iterations: 0,
            cuts: 0,
            status: "kl-exact".to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cuts: Vec<DVector<C64>> = initial_cuts(dl);
    let mut status = "max-iterations".to_string();
    let mut iterations = 0;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for outer in 0..MAX_OUTER {
        iterations = outer + 1;
        let (t_star, choi_blocks) = solve_recovery_sdp(rn, &cuts)?;
        let j = composite_choi(rn, &choi_blocks);
        let (f_worst, psi_worst) = worst_input(&j, dl, &mut rng, &cuts);
        if f_worst > best.0 {
            best = (f_worst, choi_blocks);
        }
        if f_worst >= t_star - FID_TOL {
            status = "converged".to_string();
            break;
        }
        cuts.push(psi_worst);
    }
    // final thorough audit of the best recovery found
    let j = composite_choi(rn, &best.1);
    let mut audit_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00ff_00ff);
    let (f_final, _) = worst_input_with_restarts(&j, dl, &mut audit_rng, &cuts, 96);
    let fidelity = f_final.min(best.0).clamp(0.0, 1.0);
    Ok(EpsilonOutcome {
        epsilon: (1.0 - fidelity).max(0.0).sqrt(),
        fidelity,
        iterations,
        cuts: cuts.len(),
        status,
    })
}

/// Largest deviation of a within-sector product `A_i^dag A_j` from
/// `(tr/d_L) I`.
fn kl_deviation(rn: &RestrictedNoise) -> f64 {
    let dl = rn.logical_dim;
    let mut dev = 0.0f64;
    for sector in &rn.sectors {
        for a in sector {
            for b in sector {
                let mut prod = a.adjoint() * b;
                let c = prod.trace() / cr(dl as f64);
                for i in 0..dl {
                    prod[(i, i)] -= c;
                }
                dev = dev.max(prod.norm());
            }
        }
    }
    dev
}

/// Canonical starting cuts: the maximally entangled input plus conjugated
/// product inputs along the mutually unbiased single-logical-qubit axes
/// (generalized to basis pairs for larger logical dimension).
fn initial_cuts(dl: usize) -> Vec<DVector<C64>> {
    let mut cuts = Vec::new();
    let d2 = dl * dl;
    let mut phi = DVector::<C64>::zeros(d2);
    for c in 0..dl {
        phi[c * dl + c] = cr(1.0 / (dl as f64).sqrt());
    }
    cuts.push(phi);
    let product = |s: &DVector<C64>| -> DVector<C64> {
        let mut out = DVector::<C64>::zeros(d2);
        for c in 0..dl {
            for m in 0..dl {
                out[c * dl + m] = s[c].conj() * s[m];
            }
        }
        out
    };
    for a in 0..dl {
        let mut s = DVector::<C64>::zeros(dl);
        s[a] = cr(1.0);
        cuts.push(product(&s));
        for b in (a + 1)..dl {
            for phase in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut s = DVector::<C64>::zeros(dl);
                s[a] = cr(std::f64::consts::FRAC_1_SQRT_2);
                s[b] = phase * cr(std::f64::consts::FRAC_1_SQRT_2);
                cuts.push(product(&s));
            }
        }
    }
    cuts
}

/// The recovery SDP over the canonical starting cut set, as raw problem
/// data (for inspection and export).
pub fn recovery_problem(rn: &RestrictedNoise) -> SdpProblem {
    build_recovery_sdp(rn, &initial_cuts(rn.logical_dim)).0
}

/// Build the recovery SDP for a cut set: maximize `t` such that each cut's
/// fidelity is at least `t`, over sector-diagonal Choi blocks.
fn build_recovery_sdp(
    rn: &RestrictedNoise,
    cuts: &[DVector<C64>],
) -> (SdpProblem, Vec<HermitianBlock>, usize) {
    let dl = rn.logical_dim;
    let mut p = SdpProblem::new();
    let t_idx = p.add_free(1);
    p.add_free_cost(t_idx, -1.0); // maximize t
    let blocks: Vec<HermitianBlock> = rn
        .sectors
        .iter()
        .map(|s| add_hermitian_psd(&mut p, s[0].nrows() * dl))
        .collect();

    // trace preservation: Tr_out X_s = I_{r_s} for each sector
    for (s, sector) in rn.sectors.iter().enumerate() {
        let r = sector[0].nrows();
        let blk = &blocks[s];
        for a in 0..r {
            for b in a..r {
                if a == b {
                    let mut row = RowBuilder::new();
                    for m in 0..dl {
                        row = herm_row(&p, row, blk, a * dl + m, a * dl + m, cr(1.0));
                    }
                    p.add_row(row.finish(), 1.0);
                } else {
                    for part in 0..2 {
                        let v = if part == 0 {
                            C64::new(1.0, 0.0)
                        } else {
                            C64::new(0.0, 1.0)
                        };
                        let mut row = RowBuilder::new();
                        for m in 0..dl {
                            row = herm_row(&p, row, blk, a * dl + m, b * dl + m, v);
                        }
                        p.add_row(row.finish(), 0.0);
                    }
                }
            }
        }
    }

    // fidelity cuts: sum_s Tr(C_psi^s X_s) - t - slack = 0
    let slack = p.add_nonneg(cuts.len());
    for (c_idx, psi) in cuts.iter().enumerate() {
        let mut row = RowBuilder::new();
        for (s, sector) in rn.sectors.iter().enumerate() {
            let c = cut_matrix(sector, psi, dl);
            let n = c.nrows();
            for i in 0..n {
                for j in i..n {
                    // Tr(C X) needs v = C_ji for the (i, j) pair
                    let v = c[(j, i)];
                    if v.norm() > 1e-14 {
                        row = herm_row(&p, row, &blocks[s], i, j, v);
                    }
                }
            }
        }
        row = row.free(t_idx, -1.0).nonneg(&p, slack, c_idx, -1.0);
        p.add_row(row.finish(), 0.0);
    }

    (p, blocks, t_idx)
}

/// Solve one recovery SDP and return the optimum and the Choi blocks.
fn solve_recovery_sdp(
    rn: &RestrictedNoise,
    cuts: &[DVector<C64>],
) -> Result<(f64, Vec<DMatrix<C64>>)> {
    let (p, blocks, t_idx) = build_recovery_sdp(rn, cuts);
    let sol = solve(&p)?;
    if !matches!(sol.status, SdpStatus::Optimal | SdpStatus::MaxIterations) {
        return Err(Error::Solver(format!(
            "recovery SDP ended with status {:?}",
            sol.status
        )));
    }
    let t_star = sol.free[t_idx].clamp(0.0, 1.0);
    let choi = blocks
        .iter()
        .map(|b| recover_hermitian(&sol, &p, b))
        .collect();
    Ok((t_star, choi))
}

/// `C_psi^s = sum_{i in s} y_i y_i^dag` with
/// `y_i[(a,m)] = sum_c conj(w_i[(c,a)]) psi[(c,m)]`, `w_i = (I ox A_i) psi`.
fn cut_matrix(sector: &[DMatrix<C64>], psi: &DVector<C64>, dl: usize) -> DMatrix<C64> {
    let r = sector[0].nrows();
    let n = r * dl;
    let mut c = DMatrix::<C64>::zeros(n, n);
    for k in sector {
        let mut y = DVector::<C64>::zeros(n);
        for a in 0..r {
            for m in 0..dl {
                let mut acc = C64::new(0.0, 0.0);
                for cc in 0..dl {
                    // w[(cc, a)] = sum_{a'} k[a, a'] psi[(cc, a')]
                    let mut w = C64::new(0.0, 0.0);
                    for ap in 0..dl {
                        w += k[(a, ap)] * psi[cc * dl + ap];
                    }
                    acc += w.conj() * psi[cc * dl + m];
                }
                y[a * dl + m] = acc;
            }
        }
        c += &y * y.adjoint();
    }
    c
}

/// Choi matrix (index `(a, m)` = logical-in, logical-out) of the composite
/// channel recovery-after-noise, from the sector Choi blocks.
pub fn composite_choi(rn: &RestrictedNoise, choi_blocks: &[DMatrix<C64>]) -> DMatrix<C64> {
    let dl = rn.logical_dim;
    let d2 = dl * dl;
    let mut j = DMatrix::<C64>::zeros(d2, d2);
    for (s, sector) in rn.sectors.iter().enumerate() {
        let x = &choi_blocks[s];
        let r = sector[0].nrows();
        for k in sector {
            for a in 0..dl {
                for b in 0..dl {
                    for m in 0..dl {
                        for n in 0..dl {
                            let mut acc = C64::new(0.0, 0.0);
                            for ap in 0..r {
                                for bp in 0..r {
                                    acc += k[(ap, a)]
                                        * k[(bp, b)].conj()
                                        * x[(ap * dl + m, bp * dl + n)];
                                }
                            }
                            j[(a * dl + m, b * dl + n)] += acc;
                        }
                    }
                }
            }
        }
    }
    j
}

/// Entanglement fidelity of the composite channel on the pure input `psi`
/// living on reference ox logical.
pub fn input_fidelity(j: &DMatrix<C64>, dl: usize, psi: &DVector<C64>) -> f64 {
    let mut f = C64::new(0.0, 0.0);
    for c in 0..dl {
        for cp in 0..dl {
            for a in 0..dl {
                for b in 0..dl {
                    for m in 0..dl {
                        for n in 0..dl {
                            f += psi[c * dl + m].conj()
                                * psi[cp * dl + n]
                                * psi[c * dl + a]
                                * psi[cp * dl + b].conj()
                                * j[(a * dl + m, b * dl + n)];
                        }
                    }
                }
            }
        }
    }
    f.re
}

fn fidelity_gradient(j: &DMatrix<C64>, dl: usize, psi: &DVector<C64>) -> DVector<C64> {
    let mut grad = DVector::<C64>::zeros(dl * dl);
    for e in 0..dl {
        for f_out in 0..dl {
            let mut acc = C64::new(0.0, 0.0);
            // derivative through conj(psi[(e, m=f_out)])
            for cp in 0..dl {
                for a in 0..dl {
                    for b in 0..dl {
                        for n in 0..dl {
                            acc += psi[cp * dl + n]
                                * psi[e * dl + a]
                                * psi[cp * dl + b].conj()
                                * j[(a * dl + f_out, b * dl + n)];
                        }
                    }
                }
            }
            // derivative through conj(psi[(e, b=f_out)])
            for c in 0..dl {
                for a in 0..dl {
                    for m in 0..dl {
                        for n in 0..dl {
                            acc += psi[c * dl + m].conj()
                                * psi[e * dl + n]
                                * psi[c * dl + a]
                                * j[(a * dl + m, f_out * dl + n)];
                        }
                    }
                }
            }
            grad[e * dl + f_out] = acc;
        }
    }
    grad
}

fn normalize(v: &mut DVector<C64>) {
    let n = v.norm();
    if n > 0.0 {
        *v /= cr(n);
    }
}

fn descend(j: &DMatrix<C64>, dl: usize, start: &DVector<C64>) -> (f64, DVector<C64>) {
    let mut psi = start.clone();
    normalize(&mut psi);
    let mut f = input_fidelity(j, dl, &psi);
    let mut step = 0.5;
    for _ in 0..200 {
        let grad = fidelity_gradient(j, dl, &psi);
        let mut trial = &psi - grad * cr(step);
        normalize(&mut trial);
        let ft = input_fidelity(j, dl, &trial);
        if ft < f - 1e-14 {
            psi = trial;
            f = ft;
            step = (step * 1.3).min(2.0);
        } else {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    (f, psi)
}

fn worst_input(
    j: &DMatrix<C64>,
    dl: usize,
    rng: &mut ChaCha8Rng,
    warm: &[DVector<C64>],
) -> (f64, DVector<C64>) {
    worst_input_with_restarts(j, dl, rng, warm, 32)
}

fn worst_input_with_restarts(
    j: &DMatrix<C64>,
    dl: usize,
    rng: &mut ChaCha8Rng,
    warm: &[DVector<C64>],
    restarts: usize,
) -> (f64, DVector<C64>) {
    let d2 = dl * dl;
    let mut best: Option<(f64, DVector<C64>)> = None;
    let consider = |start: &DVector<C64>, best: &mut Option<(f64, DVector<C64>)>| {
        let (f, psi) = descend(j, dl, start);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            *best = Some((f, psi));
        }
    };
    for w in warm {
        consider(w, &mut best);
    }
    for _ in 0..restarts {
        let mut v = DVector::<C64>::zeros(d2);
        for i in 0..d2 {
            v[i] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        consider(&v, &mut best);
    }
    best.expect("at least one start")
}
