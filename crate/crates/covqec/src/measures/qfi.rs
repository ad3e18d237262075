//! SDP-computable channel quantities: the minimal spread of a Hamiltonian
//! expansion in the Kraus span, and the regularized channel QFI of the noisy
//! gate. Generic dense formulations plus collective (permutation-reduced)
//! formulations for single erasure with 1-local Hamiltonians.

use nalgebra::DMatrix;

use crate::channels::{check_hks, KrausChannel};
use crate::convex::{
    add_hermitian_psd, herm_row, solve, HermitianBlock, RowBuilder, SdpProblem, SdpStatus,
};
use crate::tensor::{cr, C64, Operator};
use crate::{Error, Result};

/// Hermitian parameter layout for a `k x k` Hermitian matrix as real free
/// variables: diagonal entries first, then (re, im) per off-diagonal pair.
struct HermParams {
    k: usize,
    base: usize,
}

impl HermParams {
    fn count(k: usize) -> usize {
        k * k
    }

    fn diag(&self, i: usize) -> usize {
        self.base + i
    }

    fn off(&self, i: usize, j: usize) -> (usize, usize) {
        debug_assert!(i < j);
        let mut idx = self.k;
        for a in 0..self.k {
            for b in (a + 1)..self.k {
                if (a, b) == (i, j) {
                    return (self.base + idx, self.base + idx + 1);
                }
                idx += 2;
            }
        }
        unreachable!()
    }

    /// Entry `(i, j)` of the parametrized matrix as a list of
    /// `(free index, complex coefficient)`.
    fn entry(&self, i: usize, j: usize) -> Vec<(usize, C64)> {
        if i == j {
            vec![(self.diag(i), cr(1.0))]
        } else if i < j {
            let (re, im) = self.off(i, j);
            vec![(re, cr(1.0)), (im, C64::new(0.0, 1.0))]
        } else {
            let (re, im) = self.off(j, i);
            vec![(re, cr(1.0)), (im, C64::new(0.0, -1.0))]
        }
    }

}

/// Coefficient matrices `G_t` such that `Gamma(h) = sum_t x_t G_t` over the
/// real parameters of Hermitian `h`, given the products `P_ij = K_i^dag K_j`.
fn gamma_coefficients(products: &[Vec<DMatrix<C64>>], k: usize) -> Vec<DMatrix<C64>> {
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        out.push(products[i][i].clone());
    }
    for i in 0..k {
        for j in (i + 1)..k {
            out.push(&products[i][j] + &products[j][i]);
            out.push((&products[i][j] - &products[j][i]) * C64::new(0.0, 1.0));
        }
    }
    out
}

/// Orthonormal basis (Hilbert-Schmidt, real coefficients) of the real span
/// of the given Hermitian matrices.
fn hermitian_span_basis(mats: &[DMatrix<C64>]) -> Vec<DMatrix<C64>> {
    let mut basis: Vec<DMatrix<C64>> = Vec::new();
    let scale = mats.iter().map(|m| m.norm()).fold(0.0f64, f64::max).max(1.0);
    for m in mats {
        let mut v = m.clone();
        for _ in 0..2 {
            for b in basis.iter() {
                let c: C64 = (b.adjoint() * &v).trace();
                v -= b * cr(c.re); // real span: project with the real part
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * scale {
            v /= cr(norm);
            basis.push(v);
        }
    }
    basis
}

fn real_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a.adjoint() * b).trace().re
}

/// Minimal spectral spread `Delta h` over Hermitian `h` with
/// `sum_ij h_ij K_i^dag K_j = H_S`; `None` when `H_S` lies outside the Kraus
/// span (noiseless directions survive, no Hamiltonian expansion exists).
pub fn j_min(h_s: &Operator, noise: &KrausChannel) -> Result<Option<f64>> {
    let Some(p) = j_min_problem(h_s, noise)? else {
        return Ok(None);
    };
    let sol = solve(&p)?;
    match sol.status {
        SdpStatus::Optimal | SdpStatus::MaxIterations => Ok(Some(sol.primal_value.max(0.0))),
        other => Err(Error::Solver(format!("j_min SDP status {other:?}"))),
    }
}

/// The minimal-spread SDP as raw problem data (for inspection and export);
/// `None` when the Hamiltonian has no expansion in the Kraus span.
pub fn j_min_problem(h_s: &Operator, noise: &KrausChannel) -> Result<Option<SdpProblem>> {
    let report = check_hks(h_s, noise)?;
    if !report.holds {
        return Ok(None);
    }
    let k = noise.kraus().len();
    let products: Vec<Vec<DMatrix<C64>>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| noise.kraus()[i].matrix().adjoint() * noise.kraus()[j].matrix())
                .collect()
        })
        .collect();
    let gammas = gamma_coefficients(&products, k);
    let span = hermitian_span_basis(&gammas);

    let mut p = SdpProblem::new();
    let h = HermParams {
        k,
        base: p.add_free(HermParams::count(k)),
    };
    let a_idx = p.add_free(1);
    let b_idx = p.add_free(1);
    p.add_free_cost(a_idx, 1.0);
    p.add_free_cost(b_idx, -1.0);
    let upper = add_hermitian_psd(&mut p, k); // a I - h
    let lower = add_hermitian_psd(&mut p, k); // h - b I
    tie_bound_blocks(&mut p, &h, &upper, &lower, a_idx, b_idx);

    // expansion constraint in the span basis
    for basis_el in &span {
        let mut row = RowBuilder::new();
        for (t, g) in gammas.iter().enumerate() {
            let c = real_inner(basis_el, g);
            if c.abs() > 1e-13 {
                row = row.free(h.base + t, c);
            }
        }
        p.add_row(row.finish(), real_inner(basis_el, h_s.matrix()));
    }

    Ok(Some(p))
}

/// Equality rows pinning `upper = a I - h` and `lower = h - b I`.
fn tie_bound_blocks(
    p: &mut SdpProblem,
    h: &HermParams,
    upper: &HermitianBlock,
    lower: &HermitianBlock,
    a_idx: usize,
    b_idx: usize,
) {
    let k = h.k;
    for i in 0..k {
        for j in i..k {
            for part in 0..2 {
                if i == j && part == 1 {
                    continue;
                }
                let v = if part == 0 {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 1.0)
                };
                // scale: v-pass contributes 2 Re / -2 Im of the entry for i<j,
                // exactly the entry for i == j
                let s = if i == j { 1.0 } else { 2.0 };
                let pick = |coef: C64| -> f64 {
                    if part == 0 {
                        s * coef.re
                    } else {
                        -s * coef.im
                    }
                };
                // upper_ij + h_ij - a delta_ij = 0
                let mut row = herm_row(p, RowBuilder::new(), upper, i, j, v);
                for (idx, coef) in h.entry(i, j) {
                    row = row.free(idx, pick(coef));
                }
                if i == j && part == 0 {
                    row = row.free(a_idx, -1.0);
                }
                p.add_row(row.finish(), 0.0);
                // lower_ij - h_ij + b delta_ij = 0
                let mut row = herm_row(p, RowBuilder::new(), lower, i, j, v);
                for (idx, coef) in h.entry(i, j) {
                    row = row.free(idx, -pick(coef));
                }
                if i == j && part == 0 {
                    row = row.free(b_idx, 1.0);
                }
                p.add_row(row.finish(), 0.0);
            }
        }
    }
}

/// Regularized channel QFI of the noisy gate `N o e^{-i H_S theta}`:
/// `min 4 lambda_max(Gamma(h^2) - H_S^2)` over Hermitian `h` with
/// `Gamma(h) = -H_S`; `None` (divergent) when the Hamiltonian is not in the
/// Kraus span.
pub fn f_reg(h_s: &Operator, noise: &KrausChannel) -> Result<Option<f64>> {
    let Some(p) = f_reg_problem(h_s, noise)? else {
        return Ok(None);
    };
    let sol = solve(&p)?;
    match sol.status {
        SdpStatus::Optimal | SdpStatus::MaxIterations => Ok(Some(sol.primal_value.max(0.0))),
        other => Err(Error::Solver(format!("f_reg SDP status {other:?}"))),
    }
}

/// The regularized-QFI SDP as raw problem data; `None` when divergent.
pub fn f_reg_problem(h_s: &Operator, noise: &KrausChannel) -> Result<Option<SdpProblem>> {
    let report = check_hks(h_s, noise)?;
    if !report.holds {
        return Ok(None);
    }
    let k = noise.kraus().len();
    let d = h_s.nrows();
    let products: Vec<Vec<DMatrix<C64>>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| noise.kraus()[i].matrix().adjoint() * noise.kraus()[j].matrix())
                .collect()
        })
        .collect();
    let gammas = gamma_coefficients(&products, k);
    let span = hermitian_span_basis(&gammas);
    let hs2 = h_s.matrix() * h_s.matrix();

    let mut p = SdpProblem::new();
    let h = HermParams {
        k,
        base: p.add_free(HermParams::count(k)),
    };
    let y = HermParams {
        k,
        base: p.add_free(HermParams::count(k)),
    };
    let t_idx = p.add_free(1);
    p.add_free_cost(t_idx, 4.0);

    // Schur block [[Y, h], [h, I]] >= 0 enforces Y >= h^2
    let schur = add_hermitian_psd(&mut p, 2 * k);
    tie_schur_block(&mut p, &schur, &h, &y, k);

    // slack block t I - Gamma(Y) + H_S^2 >= 0
    let slack = add_hermitian_psd(&mut p, d);
    for i in 0..d {
        for j in i..d {
            for part in 0..2 {
                if i == j && part == 1 {
                    continue;
                }
                let v = if part == 0 {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 1.0)
                };
                let s = if i == j { 1.0 } else { 2.0 };
                let pick = |coef: C64| -> f64 {
                    if part == 0 {
                        s * coef.re
                    } else {
                        -s * coef.im
                    }
                };
                // slack_ij + Gamma(Y)_ij - t delta_ij = (H_S^2)_ij
                let mut row = herm_row(&p, RowBuilder::new(), &slack, i, j, v);
                let mut coeffs = vec![0.0f64; HermParams::count(k)];
                for (t_param, g) in gammas.iter().enumerate() {
                    let gij = g[(i, j)];
                    coeffs[t_param] += pick(gij);
                }
                for (t_param, &c) in coeffs.iter().enumerate() {
                    if c.abs() > 1e-13 {
                        row = row.free(y.base + t_param, c);
                    }
                }
                if i == j && part == 0 {
                    row = row.free(t_idx, -1.0);
                }
                let rhs = pick(hs2[(i, j)]);
                p.add_row(row.finish(), rhs);
            }
        }
    }

    // expansion constraint Gamma(h) = -H_S
    for basis_el in &span {
        let mut row = RowBuilder::new();
        for (t_param, g) in gammas.iter().enumerate() {
            let c = real_inner(basis_el, g);
            if c.abs() > 1e-13 {
                row = row.free(h.base + t_param, c);
            }
        }
        p.add_row(row.finish(), -real_inner(basis_el, h_s.matrix()));
    }

    Ok(Some(p))
}

/// Rows pinning the `2k x 2k` Hermitian block to `[[Y, h], [h, I]]`.
fn tie_schur_block(
    p: &mut SdpProblem,
    blk: &HermitianBlock,
    h: &HermParams,
    y: &HermParams,
    k: usize,
) {
    let pin = |p: &mut SdpProblem,
                   i: usize,
                   j: usize,
                   terms: Option<(&HermParams, usize, usize)>,
                   rhs_entry: C64| {
        for part in 0..2 {
            if i == j && part == 1 {
                continue;
            }
            let v = if part == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 1.0)
            };
            let s = if i == j { 1.0 } else { 2.0 };
            let pick = |coef: C64| -> f64 {
                if part == 0 {
                    s * coef.re
                } else {
                    -s * coef.im
                }
            };
            let mut row = herm_row(p, RowBuilder::new(), blk, i, j, v);
            if let Some((params, a, b)) = terms {
                for (idx, coef) in params.entry(a, b) {
                    row = row.free(idx, -pick(coef));
                }
            }
            p.add_row(row.finish(), pick(rhs_entry));
        }
    };
    for i in 0..k {
        for j in i..k {
            pin(p, i, j, Some((y, i, j)), C64::new(0.0, 0.0));
            pin(
                p,
                k + i,
                k + j,
                None,
                if i == j {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                },
            );
        }
    }
    for i in 0..k {
        for j in 0..k {
            // upper-right block entry (i, k + j) = h_ij
            pin(p, i, k + j, Some((h, i, j)), C64::new(0.0, 0.0));
        }
    }
}

// ---------------------------------------------------------------------------
// Collective reductions for single erasure with 1-local diagonal Hamiltonians
//
// Erasure Kraus products satisfy K_{l,a}^dag K_{l',a'} =
// (1/n) delta_{ll'} |a><a'|_l, so Gamma(h) depends only on the
// location-diagonal 2x2 blocks of h. Permutation covariance plus convexity
// lets the optimal h be taken symmetric: h = I_n ox (p - r) + J_n ox r with
// 2x2 Hermitian blocks p, r, whose spectrum is
// eigs(p - r) [multiplicity n-1] union eigs(p + (n-1) r). The constraint
// pins p = +- n * site. The QFI slack operator lives in the algebra
// generated by collective spin operators and splits into spin sectors.

/// 2x2 Hermitian parameters as four reals: diag0, diag1, re01, im01.
fn two_by_two(free: usize) -> HermParams {
    HermParams { k: 2, base: free }
}

/// Collective `j_min` for single erasure on `n` subsystems with
/// `H_S = sum_l diag(s0, s1)_l`. Always feasible; the value is exactly the
/// minimal spread of the symmetric expansion.
pub fn j_min_collective_erasure(n: usize, s0: f64, s1: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter("erasure needs n >= 2".into()));
    }
    let nf = n as f64;
    let p_block = [nf * s0, nf * s1]; // diagonal of the pinned block p
    let mut p = SdpProblem::new();
    let r = two_by_two(p.add_free(4));
    let a_idx = p.add_free(1);
    let b_idx = p.add_free(1);
    p.add_free_cost(a_idx, 1.0);
    p.add_free_cost(b_idx, -1.0);

    // blocks: a I - (p - r), (p - r) - b I, a I - (p + (n-1) r), ... - b I
    for (scale, sign_upper) in [(-1.0, true), (-1.0, false), (nf - 1.0, true), (nf - 1.0, false)]
    {
        let blk = add_hermitian_psd(&mut p, 2);
        for i in 0..2 {
            for j in i..2 {
                for part in 0..2 {
                    if i == j && part == 1 {
                        continue;
                    }
                    let v = if part == 0 {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 1.0)
                    };
                    let s = if i == j { 1.0 } else { 2.0 };
                    let pick = |coef: C64| -> f64 {
                        if part == 0 {
                            s * coef.re
                        } else {
                            -s * coef.im
                        }
                    };
                    let mut row = herm_row(&p, RowBuilder::new(), &blk, i, j, v);
                    // blk = sign * (a or b) I - sign * (p + scale * r)
                    // upper: blk + (p + scale r) - a I = 0 -> rhs = -p_ij
                    // lower: blk - (p + scale r) + b I = 0 -> rhs = +p_ij
                    let orient = if sign_upper { 1.0 } else { -1.0 };
                    for (idx, coef) in r.entry(i, j) {
                        row = row.free(idx, orient * scale * pick(coef));
                    }
                    if i == j && part == 0 {
                        if sign_upper {
                            row = row.free(a_idx, -1.0);
                        } else {
                            row = row.free(b_idx, 1.0);
                        }
                        let rhs = -orient * p_block[i];
                        p.add_row(row.finish(), rhs);
                    } else {
                        p.add_row(row.finish(), 0.0);
                    }
                }
            }
        }
    }

    let sol = solve(&p)?;
    match sol.status {
        SdpStatus::Optimal | SdpStatus::MaxIterations => Ok(sol.primal_value.max(0.0)),
        other => Err(Error::Solver(format!(
            "collective j_min SDP status {other:?}"
        ))),
    }
}

/// Angular momentum raising-operator matrix elements in a spin-`j` sector,
/// basis ordered by descending magnetic number `m = j, j-1, ..., -j`.
fn spin_matrices(j2: usize) -> (Vec<f64>, DMatrix<C64>, DMatrix<C64>) {
    let dim = j2 + 1;
    let j = j2 as f64 / 2.0;
    let ms: Vec<f64> = (0..dim).map(|i| j - i as f64).collect();
    let mut jp = DMatrix::<C64>::zeros(dim, dim);
    for (idx, &m) in ms.iter().enumerate().skip(1) {
        jp[(idx - 1, idx)] = cr((j * (j + 1.0) - m * (m + 1.0)).sqrt());
    }
    let jx = (&jp + jp.adjoint()) * cr(0.5);
    let jy = (&jp - jp.adjoint()) * C64::new(0.0, -0.5);
    (ms, jx, jy)
}

/// Collective regularized channel QFI for single erasure on `n` subsystems
/// with `H_S = sum_l diag(s0, s1)_l`.
pub fn f_reg_collective_erasure(n: usize, s0: f64, s1: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter("erasure needs n >= 2".into()));
    }
    let nf = n as f64;
    // constraint Gamma(h) = -H_S pins the diagonal block p = -n * site
    let p_block = [-nf * s0, -nf * s1];
    let mut prob = SdpProblem::new();
    let r = two_by_two(prob.add_free(4));
    let py = two_by_two(prob.add_free(4)); // diagonal block of Y
    let ry = two_by_two(prob.add_free(4)); // off-location block of Y
    let t_idx = prob.add_free(1);
    prob.add_free_cost(t_idx, 4.0);

    // Schur LMIs in the two permutation-irreducible sectors:
    // [[P_Y + c R_Y, p + c r], [., I]] >= 0 for c in {-1, n-1}
    for c in [-1.0, nf - 1.0] {
        let blk = add_hermitian_psd(&mut prob, 4);
        let pin = |prob: &mut SdpProblem,
                       i: usize,
                       j: usize,
                       terms: &[(&HermParams, f64)],
                       a: usize,
                       b: usize,
                       rhs_entry: C64| {
            for part in 0..2 {
                if i == j && part == 1 {
                    continue;
                }
                let v = if part == 0 {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 1.0)
                };
                let s = if i == j { 1.0 } else { 2.0 };
                let pick = |coef: C64| -> f64 {
                    if part == 0 {
                        s * coef.re
                    } else {
                        -s * coef.im
                    }
                };
                let mut row = herm_row(prob, RowBuilder::new(), &blk, i, j, v);
                for &(params, weight) in terms {
                    for (idx, coef) in params.entry(a, b) {
                        row = row.free(idx, -weight * pick(coef));
                    }
                }
                prob.add_row(row.finish(), pick(rhs_entry));
            }
        };
        for i in 0..2 {
            for j in i..2 {
                // upper-left: P_Y + c R_Y
                pin(&mut prob, i, j, &[(&py, 1.0), (&ry, c)], i, j, C64::new(0.0, 0.0));
                // lower-right: I
                pin(
                    &mut prob,
                    2 + i,
                    2 + j,
                    &[],
                    i,
                    j,
                    if i == j {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    },
                );
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                // upper-right: p + c r (p is a real diagonal constant)
                let rhs = if i == j { cr(p_block[i]) } else { C64::new(0.0, 0.0) };
                pin(&mut prob, i, 2 + j, &[(&r, c)], i, j, rhs);
            }
        }
    }

    // spin-sector slack blocks: t I + H_S^2 - Gamma(Y) >= 0 with
    // Gamma(Y) = a I + (2/n)(b_x J_x + b_y J_y + b_z J_z),
    // a = (py00 + py11)/2, b_z = (py00 - py11)/2, b_x = Re py01,
    // b_y = -Im py01; H_S eigenvalue at magnetic number m is
    // s0 (n/2 + m) + s1 (n/2 - m).
    let mut j2 = n; // twice the spin, starting at n
    loop {
        let (ms, jx, jy) = spin_matrices(j2);
        let dim = j2 + 1;
        let blk = add_hermitian_psd(&mut prob, dim);
        for i in 0..dim {
            for j in i..dim {
                for part in 0..2 {
                    if i == j && part == 1 {
                        continue;
                    }
                    let v = if part == 0 {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 1.0)
                    };
                    let s = if i == j { 1.0 } else { 2.0 };
                    let pick = |coef: C64| -> f64 {
                        if part == 0 {
                            s * coef.re
                        } else {
                            -s * coef.im
                        }
                    };
                    let mut row = herm_row(&prob, RowBuilder::new(), &blk, i, j, v);
                    // + a I + (2/n) b . J  moved to the left-hand side
                    let mut coef_py00 = C64::new(0.0, 0.0);
                    let mut coef_py11 = C64::new(0.0, 0.0);
                    if i == j {
                        coef_py00 += cr(0.5 + ms[i] / nf);
                        coef_py11 += cr(0.5 - ms[i] / nf);
                    }
                    let coef_re01 = jx[(i, j)] * cr(2.0 / nf);
                    let coef_im01 = jy[(i, j)] * cr(-2.0 / nf);
                    for (idx, coefs) in [
                        (py.diag(0), coef_py00),
                        (py.diag(1), coef_py11),
                        (py.off(0, 1).0, coef_re01),
                        (py.off(0, 1).1, coef_im01),
                    ] {
                        let c = pick(coefs);
                        if c.abs() > 1e-13 {
                            row = row.free(idx, c);
                        }
                    }
                    if i == j && part == 0 {
                        row = row.free(t_idx, -1.0);
                    }
                    let rhs = if i == j {
                        let val = s0 * (nf / 2.0 + ms[i]) + s1 * (nf / 2.0 - ms[i]);
                        val * val
                    } else {
                        0.0
                    };
                    prob.add_row(row.finish(), rhs);
                }
            }
        }
        if j2 < 2 {
            break;
        }
        j2 -= 2;
    }

    let sol = solve(&prob)?;
    match sol.status {
        SdpStatus::Optimal | SdpStatus::MaxIterations => Ok(sol.primal_value.max(0.0)),
        other => Err(Error::Solver(format!(
            "collective f_reg SDP status {other:?}"
        ))),
    }
}
