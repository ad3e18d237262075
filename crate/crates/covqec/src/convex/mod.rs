//! Convex optimization layer: a dense interior-point SDP solver plus small
//! geometric utilities (numerical-range distance, scalar line search) and
//! helpers for posing complex Hermitian SDPs through a real embedding.

pub mod ipm;

pub use ipm::{
    solve, solve_with, BlockRef, Cone, Row, RowBuilder, SdpProblem, SdpSolution, SdpStatus,
    SolveOptions,
};

use nalgebra::DMatrix;

use crate::tensor::{hermitian_eig_matrix, C64};

/// Maximize a unimodal scalar function on `[a, b]` by golden-section search.
/// Returns `(argmax, max)`.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let xm = 0.5 * (lo + hi);
    let fm = f(xm);
    if fm >= f1 && fm >= f2 {
        (xm, fm)
    } else if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimize a unimodal scalar function on `[a, b]`. Returns `(argmin, min)`.
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (x, neg) = golden_section_max(|t| -f(t), a, b, tol);
    (x, -neg)
}

/// Distance from the origin to the numerical range (field of values) of a
/// square complex matrix.
///
/// The numerical range is convex, so the distance equals the largest value of
/// the support function `phi -> lambda_min(Re(e^{-i phi} W))` over directions,
/// clamped at zero. A coarse scan locates the best direction and a
/// golden-section refinement sharpens it.
pub fn numerical_range_distance(w: &DMatrix<C64>) -> f64 {
    assert_eq!(w.nrows(), w.ncols(), "numerical range needs a square matrix");
    let d = w.nrows();
    if d == 0 {
        return 0.0;
    }
    let support = |phi: f64| -> f64 {
        let z = C64::new(0.0, -phi).exp();
        let mut h = DMatrix::<C64>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] = 0.5 * (z * w[(i, j)] + (z * w[(j, i)]).conj());
            }
        }
        // Safe: h is Hermitian by construction.
        let eig = hermitian_eig_matrix(&h);
        eig.0[0]
    };

    const GRID: usize = 720;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    let step = std::f64::consts::TAU / GRID as f64;
    for k in 0..GRID {
        let v = support(k as f64 * step);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    if best <= 0.0 {
        // The origin lies inside (or on the boundary of) the range only if the
        // support function is nonpositive in every direction, which the scan
        // certifies up to grid resolution; refine anyway around the best angle.
        let lo = (best_k as f64 - 1.0) * step;
        let hi = (best_k as f64 + 1.0) * step;
        let (_, refined) = golden_section_max(support, lo, hi, 1e-10);
        return refined.max(0.0);
    }
    let lo = (best_k as f64 - 1.0) * step;
    let hi = (best_k as f64 + 1.0) * step;
    let (_, refined) = golden_section_max(support, lo, hi, 1e-10);
    refined.max(best).max(0.0)
}

// ---------------------------------------------------------------------------
// Complex Hermitian PSD blocks via the real embedding
//
// A Hermitian matrix X = Xr + i Xi is represented by the real symmetric
// variable Y of twice the side length; X is read back as
// Xr = (Y11 + Y22)/2, Xi = (Y12^T - Y12)/2. Constraint and cost coefficients
// below carry the factor 1/2 so that the affine forms equal Tr(A X) exactly.
// The embedded feasible set is invariant under the symplectic symmetry that
// averages Y into embedded form, so optimizing over unstructured Y loses
// nothing.

/// Handle to a complex Hermitian PSD variable.
#[derive(Debug, Clone, Copy)]
pub struct HermitianBlock {
    pub block: BlockRef,
    pub dim: usize,
}

/// Add a `d x d` complex Hermitian PSD variable (stored as a `2d x 2d` real
/// block).
pub fn add_hermitian_psd(p: &mut SdpProblem, d: usize) -> HermitianBlock {
    let block = p.add_psd(2 * d);
    HermitianBlock { block, dim: d }
}

/// Append to `row` the coefficients realizing the contribution `v * X_ij`
/// (plus the conjugate term `conj(v) * X_ji`) of a Hermitian coefficient
/// matrix `A` to `Tr(A X)`. Pass each unordered pair `{i, j}` once; for
/// `i == j` the value must be real.
pub fn herm_row(
    p: &SdpProblem,
    row: RowBuilder,
    blk: &HermitianBlock,
    i: usize,
    j: usize,
    v: C64,
) -> RowBuilder {
    let d = blk.dim;
    let b = blk.block;
    if i == j {
        debug_assert!(v.im.abs() < 1e-12 * (1.0 + v.re.abs()));
        row.psd(p, b, i, i, 0.5 * v.re).psd(p, b, i + d, i + d, 0.5 * v.re)
    } else {
        row.psd(p, b, i, j, 0.5 * v.re)
            .psd(p, b, i + d, j + d, 0.5 * v.re)
            .psd(p, b, i, j + d, -0.5 * v.im)
            .psd(p, b, j, i + d, 0.5 * v.im)
    }
}

/// Objective contribution `v * X_ij + conj(v) * X_ji` for a Hermitian
/// variable.
pub fn herm_cost(p: &mut SdpProblem, blk: &HermitianBlock, i: usize, j: usize, v: C64) {
    let d = blk.dim;
    let b = blk.block;
    if i == j {
        debug_assert!(v.im.abs() < 1e-12 * (1.0 + v.re.abs()));
        p.add_psd_cost(b, i, i, 0.5 * v.re);
        p.add_psd_cost(b, i + d, i + d, 0.5 * v.re);
    } else {
        p.add_psd_cost(b, i, j, 0.5 * v.re);
        p.add_psd_cost(b, i + d, j + d, 0.5 * v.re);
        p.add_psd_cost(b, i, j + d, -0.5 * v.im);
        p.add_psd_cost(b, j, i + d, 0.5 * v.im);
    }
}

/// Read back a complex Hermitian variable from a solution.
pub fn recover_hermitian(sol: &SdpSolution, p: &SdpProblem, blk: &HermitianBlock) -> DMatrix<C64> {
    let d = blk.dim;
    let y = sol.psd_block(p, blk.block);
    let mut x = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let re = 0.5 * (y[(i, j)] + y[(i + d, j + d)]);
            let im = 0.5 * (y[(j, i + d)] - y[(i, j + d)]);
            x[(i, j)] = C64::new(re, im);
        }
    }
    // Hermitize against roundoff.
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (x[(i, j)] + x[(j, i)].conj());
            x[(i, j)] = avg;
            x[(j, i)] = avg.conj();
        }
        x[(i, i)] = C64::new(x[(i, i)].re, 0.0);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lp_simplex_vertex() {
        // min x1 + 2 x2  s.t.  x1 + x2 = 1, x >= 0  ->  1 at (1, 0)
        let mut p = SdpProblem::new();
        let b = p.add_nonneg(2);
        p.add_nonneg_cost(b, 0, 1.0);
        p.add_nonneg_cost(b, 1, 2.0);
        let row = RowBuilder::new().nonneg(&p, b, 0, 1.0).nonneg(&p, b, 1, 1.0).finish();
        p.add_row(row, 1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_abs_diff_eq!(sol.primal_value, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.dual_value, 1.0, epsilon = 1e-7);
        let x = sol.nonneg_block(&p, b);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn sdp_trace_min_with_pinned_entry() {
        // min Tr X  s.t.  X11 = 1, X psd  ->  1
        let mut p = SdpProblem::new();
        let b = p.add_psd(3);
        for i in 0..3 {
            p.add_psd_cost(b, i, i, 1.0);
        }
        let row = RowBuilder::new().psd(&p, b, 0, 0, 1.0).finish();
        p.add_row(row, 1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_abs_diff_eq!(sol.primal_value, 1.0, epsilon = 1e-7);
        let x = sol.psd_block(&p, b);
        assert_abs_diff_eq!(x[(0, 0)], 1.0, epsilon = 1e-6);
        assert!(x[(1, 1)].abs() < 1e-6 && x[(2, 2)].abs() < 1e-6);
    }

    fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn sdp_lambda_max_matches_eig() {
        // max Tr(A X)  s.t.  Tr X = 1, X psd  ->  lambda_max(A)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2usize, 4, 6] {
            let a = random_sym(&mut rng, d);
            let mut p = SdpProblem::new();
            let b = p.add_psd(d);
            for i in 0..d {
                for j in i..d {
                    p.add_psd_cost(b, i, j, -a[(i, j)]);
                }
            }
            let mut row = RowBuilder::new();
            for i in 0..d {
                row = row.psd(&p, b, i, i, 1.0);
            }
            p.add_row(row.finish(), 1.0);
            let sol = solve(&p).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal);
            let lmax = a.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
            assert_abs_diff_eq!(-sol.primal_value, lmax, epsilon = 1e-6);
        }
    }

    #[test]
    fn sdp_lambda_min_via_free_variable() {
        // max t  s.t.  A - t I psd  (free t, PSD slack)  ->  lambda_min(A)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 5;
        let a = random_sym(&mut rng, d);
        let mut p = SdpProblem::new();
        let b = p.add_psd(d);
        let t = p.add_free(1);
        p.add_free_cost(t, -1.0);
        for i in 0..d {
            for j in i..d {
                let mut row = RowBuilder::new().psd(&p, b, i, j, if i == j { 1.0 } else { 0.5 });
                if i == j {
                    row = row.free(t, 1.0);
                }
                p.add_row(row.finish(), a[(i, j)]);
            }
        }
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let lmin = a.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        assert_abs_diff_eq!(sol.free[0], lmin, epsilon = 1e-6);
    }

    #[test]
    fn hermitian_embedding_lambda_max() {
        // max Tr(H X), Tr X = 1, X psd complex Hermitian  ->  lambda_max(H)
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let d = 4;
        let mut h = DMatrix::<C64>::zeros(d, d);
        for i in 0..d {
            h[(i, i)] = C64::new(rng.random_range(-1.0..1.0), 0.0);
            for j in (i + 1)..d {
                let v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        let mut p = SdpProblem::new();
        let blk = add_hermitian_psd(&mut p, d);
        for i in 0..d {
            for j in i..d {
                herm_cost(&mut p, &blk, i, j, -h[(i, j)]);
            }
        }
        let mut row = RowBuilder::new();
        for i in 0..d {
            row = herm_row(&p, row, &blk, i, i, C64::new(1.0, 0.0));
        }
        p.add_row(row.finish(), 1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let (vals, _) = hermitian_eig_matrix(&h);
        assert_abs_diff_eq!(-sol.primal_value, vals[d - 1], epsilon = 1e-6);
        // Recovered matrix is Hermitian PSD with unit trace and achieves it.
        let x = recover_hermitian(&sol, &p, &blk);
        let tr: C64 = (0..d).map(|i| x[(i, i)]).sum();
        assert_abs_diff_eq!(tr.re, 1.0, epsilon = 1e-6);
        let (xvals, _) = hermitian_eig_matrix(&x);
        assert!(xvals[0] > -1e-8);
    }

    #[test]
    fn detects_primal_infeasible() {
        // x = 1 and x = 2 with x >= 0 is inconsistent.
        let mut p = SdpProblem::new();
        let b = p.add_nonneg(1);
        p.add_row(RowBuilder::new().nonneg(&p, b, 0, 1.0).finish(), 1.0);
        p.add_row(RowBuilder::new().nonneg(&p, b, 0, 1.0).finish(), 2.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min -x1  s.t.  x1 - x2 = 0, x >= 0: ray (t, t) drives cost to -inf.
        let mut p = SdpProblem::new();
        let b = p.add_nonneg(2);
        p.add_nonneg_cost(b, 0, -1.0);
        let row = RowBuilder::new().nonneg(&p, b, 0, 1.0).nonneg(&p, b, 1, -1.0).finish();
        p.add_row(row, 0.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Unbounded);
    }

    /// Random strictly feasible SDPs: primal interior X0 defines b, dual
    /// interior (y0, S0) defines c, so strong duality holds. Checks the
    /// optimality certificates the solver reports.
    fn random_feasible_instance(seed: u64, with_free: bool) -> (SdpProblem, BlockRef) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..=5);
        let m = rng.random_range(2..=(d * (d + 1) / 2));
        let mut p = SdpProblem::new();
        let b = p.add_psd(d);
        let nf = if with_free { rng.random_range(1..=2) } else { 0 };
        let f0 = if nf > 0 { p.add_free(nf) } else { 0 };

        // Interior primal point.
        let r = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let x0 = &r * r.transpose() + DMatrix::identity(d, d) * 0.3;
        let u0: Vec<f64> = (0..nf).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut amats = Vec::new();
        let mut bvecs = Vec::new();
        for _ in 0..m {
            let a = random_sym(&mut rng, d);
            let bv: Vec<f64> = (0..nf).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rhs = (a.component_mul(&x0)).sum()
                + bv.iter().zip(&u0).map(|(x, y)| x * y).sum::<f64>();
            let mut row = RowBuilder::new();
            for i in 0..d {
                for j in i..d {
                    row = row.psd(&p, b, i, j, a[(i, j)]);
                }
            }
            for (k, &v) in bv.iter().enumerate() {
                row = row.free(f0 + k, v);
            }
            p.add_row(row.finish(), rhs);
            amats.push(a);
            bvecs.push(bv);
        }

        // Interior dual point -> cost.
        let y0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rs = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let s0 = &rs * rs.transpose() + DMatrix::identity(d, d) * 0.3;
        let mut c = s0.clone();
        for (k, a) in amats.iter().enumerate() {
            c += a * y0[k];
        }
        for i in 0..d {
            for j in i..d {
                p.add_psd_cost(b, i, j, c[(i, j)]);
            }
        }
        for k in 0..nf {
            let q: f64 = (0..m).map(|r| bvecs[r][k] * y0[r]).sum();
            p.add_free_cost(f0 + k, q);
        }
        (p, b)
    }

    #[test]
    fn random_feasible_battery() {
        for seed in 0..10u64 {
            let (p, b) = random_feasible_instance(100 + seed, seed % 2 == 0);
            let sol = solve(&p).unwrap();
            assert_eq!(
                sol.status,
                SdpStatus::Optimal,
                "seed {seed} iters {} gap {:.3e} pres {:.3e} dres {:.3e}",
                sol.iterations,
                sol.gap,
                sol.primal_residual,
                sol.dual_residual
            );
            assert!(sol.gap <= 1e-6, "seed {seed} gap {}", sol.gap);
            assert!(sol.primal_residual <= 1e-8, "seed {seed} pres {}", sol.primal_residual);
            assert!(sol.dual_residual <= 1e-8, "seed {seed} dres {}", sol.dual_residual);
            let x = sol.psd_block(&p, b);
            let lmin = x.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
            assert!(lmin >= -1e-8, "seed {seed} lmin {lmin}");
        }
    }

    #[test]
    fn golden_section_finds_quadratic_peak() {
        let (x, v) = golden_section_max(|t| 3.0 - (t - 0.7) * (t - 0.7), 0.0, 2.0, 1e-12);
        assert_abs_diff_eq!(x, 0.7, epsilon = 1e-6);
        assert_abs_diff_eq!(v, 3.0, epsilon = 1e-10);
        let (x, v) = golden_section_min(|t| (t + 0.25) * (t + 0.25), -1.0, 1.0, 1e-12);
        assert_abs_diff_eq!(x, -0.25, epsilon = 1e-6);
        assert!(v < 1e-10);
    }

    #[test]
    fn numerical_range_identity_and_pauli_z() {
        let id = DMatrix::<C64>::identity(3, 3);
        assert_abs_diff_eq!(numerical_range_distance(&id), 1.0, epsilon = 1e-9);
        // diag(1, -1): range is [-1, 1], contains the origin.
        let z = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
        ]));
        assert_abs_diff_eq!(numerical_range_distance(&z), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn numerical_range_normal_matrix_is_hull_of_spectrum() {
        // diag(1, i): the range is the segment from 1 to i, at distance
        // sqrt(2)/2 from the origin.
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 1.0),
        ]));
        assert_abs_diff_eq!(
            numerical_range_distance(&w),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-9
        );
    }

    #[test]
    fn numerical_range_distance_lower_bounds_sampled_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 3;
        let w = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let dist = numerical_range_distance(&w);
        let mut min_abs = f64::MAX;
        for _ in 0..20000 {
            let mut psi: Vec<C64> = (0..d)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let nrm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            psi.iter_mut().for_each(|z| *z /= nrm);
            let mut val = C64::new(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    val += psi[i].conj() * w[(i, j)] * psi[j];
                }
            }
            min_abs = min_abs.min(val.norm());
        }
        // Every state value lies in the range, so its modulus bounds the
        // distance from above; dense sampling should come close.
        assert!(dist <= min_abs + 1e-9, "dist {dist} min sample {min_abs}");
        assert!(min_abs - dist <= 0.05, "dist {dist} min sample {min_abs}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn numerical_range_distance_unitarily_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 3;
            let w = DMatrix::from_fn(d, d, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            // Random unitary from the eigenvectors of a random Hermitian.
            let mut h = DMatrix::<C64>::zeros(d, d);
            for i in 0..d {
                h[(i, i)] = C64::new(rng.random_range(-1.0..1.0), 0.0);
                for j in (i + 1)..d {
                    let v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    h[(i, j)] = v;
                    h[(j, i)] = v.conj();
                }
            }
            let (_, u) = hermitian_eig_matrix(&h);
            let wu = u.adjoint() * &w * &u;
            let d1 = numerical_range_distance(&w);
            let d2 = numerical_range_distance(&wu);
            proptest::prop_assert!((d1 - d2).abs() < 1e-7, "{d1} vs {d2}");
        }

        #[test]
        fn numerical_range_distance_scales(seed in 0u64..1000, scale in 0.1f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 3;
            let w = DMatrix::from_fn(d, d, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let d1 = numerical_range_distance(&w);
            let d2 = numerical_range_distance(&(&w * C64::new(scale, 0.0)));
            proptest::prop_assert!((scale * d1 - d2).abs() < 1e-7 * (1.0 + scale), "{d1} {d2}");
        }
    }
}
