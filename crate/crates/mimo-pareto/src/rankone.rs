//! Matrix rank-one decomposition and the tight beamformer extractions.
//!
//! Given a PSD matrix `X` and three (or four, one of them the identity)
//! Hermitian matrices, [`rd3`]/[`rd4`] produce a vector `y` matching every
//! trace: `yᴴA_i y = Tr(A_i X)`. The construction walks the PSD cone:
//! starting from `X` restricted to its range, it repeatedly moves along a
//! trace-neutral Hermitian direction until the boundary, which drops the
//! rank by at least one while preserving all traces, and terminates at a
//! rank-one matrix. Four targets are first reduced to three by
//! homogenizing against the identity member. The intermediate matrices stay
//! PSD and their ranks are strictly decreasing; both facts are exposed in
//! the step diagnostics.

use nalgebra::DMatrix;

use crate::channel::{Beamformer, ChannelSet, Link};
use crate::linalg::{eigh_unchecked, hermitize, quad_form, trace_inner, CMat, CVec};
use crate::sdp::{p2_constraint_matrix, p5_denominator_matrix, p5_interference_matrix, psd_rank};
use crate::{Error, Result};

/// Relative eigenvalue cutoff for the numerical rank of relaxed solutions;
/// interior-point output carries noise of roughly the square root of the
/// solver tolerance in its small eigenvalues.
pub const RANK_CUT: f64 = 1e-7;

/// Tight cutoff used when re-restricting the walk iterate to its support.
const RESTRICT_CUT: f64 = 1e-12;

/// One rank-reduction step of the decomposition walk.
#[derive(Debug, Clone)]
pub struct WalkStep {
    pub rank_before: usize,
    pub rank_after: usize,
    /// Smallest eigenvalue of the stepped matrix before re-restriction
    /// (PSD up to roundoff: bounded below by a tiny negative number).
    pub min_eig: f64,
}

/// Finds `y` with `yᴴA_i y = Tr(A_i X)` for three Hermitian matrices.
pub fn rd3(x: &CMat, a1: &CMat, a2: &CMat, a3: &CMat) -> Result<CVec> {
    Ok(rd3_with_steps(x, a1, a2, a3)?.0)
}

/// [`rd3`] plus the per-step diagnostics of the reduction walk.
pub fn rd3_with_steps(x: &CMat, a1: &CMat, a2: &CMat, a3: &CMat) -> Result<(CVec, Vec<WalkStep>)> {
    let mats = [a1, a2, a3];
    check_inputs(x, &mats)?;
    let targets: Vec<f64> = mats.iter().map(|a| trace_inner(a, x)).collect();
    walk(x, &mats, &targets)
}

/// Finds `y` matching four traces; the four matrices must contain a
/// positive multiple of the identity (the last problem constraint always
/// does), which guarantees applicability.
pub fn rd4(x: &CMat, mats: [&CMat; 4]) -> Result<CVec> {
    Ok(rd4_with_steps(x, mats)?.0)
}

/// [`rd4`] plus step diagnostics.
pub fn rd4_with_steps(x: &CMat, mats: [&CMat; 4]) -> Result<(CVec, Vec<WalkStep>)> {
    check_inputs(x, &mats)?;
    let n = x.nrows();
    // Locate a positive multiple of the identity among the targets.
    let id_idx = mats
        .iter()
        .position(|a| {
            let alpha = a.diagonal().map(|z| z.re).sum() / n as f64;
            alpha > 0.0
                && crate::linalg::frob(&(*a - CMat::identity(n, n).scale(alpha)))
                    <= 1e-9 * alpha * (n as f64).sqrt()
        })
        .ok_or_else(|| {
            Error::InvalidArgument(
                "four-trace decomposition requires a positive identity multiple \
                 among the constraint matrices"
                    .into(),
            )
        })?;
    let a_id = mats[id_idx];
    let delta_id = trace_inner(a_id, x);
    if delta_id <= 0.0 {
        return Err(Error::DegenerateInput(
            "decomposition input has nonpositive trace".into(),
        ));
    }
    // Homogenize the remaining three against the identity member; all
    // their targets become zero and the scale is pinned afterwards.
    let rest: Vec<&CMat> = (0..4).filter(|&i| i != id_idx).map(|i| mats[i]).collect();
    let g: Vec<CMat> = rest
        .iter()
        .map(|a| {
            let tau = trace_inner(a, x) / delta_id;
            hermitize(&(*a - a_id.scale(tau)))
        })
        .collect();
    let g_refs = [&g[0], &g[1], &g[2]];
    let (y_raw, steps) = walk(x, &g_refs, &[0.0, 0.0, 0.0])?;
    // Rescale so the identity-member trace matches.
    let cur = quad_form(a_id, &y_raw);
    if cur <= 0.0 {
        return Err(Error::NumericalFailure(
            "degenerate scale in four-trace decomposition".into(),
        ));
    }
    Ok((y_raw.scale((delta_id / cur).sqrt()), steps))
}

fn check_inputs(x: &CMat, mats: &[&CMat]) -> Result<()> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::UnsupportedDimension(format!(
            "rank-one decomposition requires dimension >= 3, got {n}"
        )));
    }
    if !x.is_square() {
        return Err(Error::InvalidArgument("X must be square".into()));
    }
    for a in mats {
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::InvalidArgument(
                "trace-target matrix dimension mismatch".into(),
            ));
        }
    }
    let e = eigh_unchecked(x);
    if e.value(0) <= 0.0 {
        return Err(Error::DegenerateInput("X must be a nonzero PSD matrix".into()));
    }
    if e.min_value() < -1e-8 * e.value(0) {
        return Err(Error::InvalidArgument(
            "X has a significantly negative eigenvalue".into(),
        ));
    }
    Ok(())
}

/// State of the reduction walk: `X = basis · Y · basisᴴ` with `Y ≻ 0`.
struct WalkState {
    basis: CMat,
    y: CMat,
    reduced: Vec<CMat>,
}

impl WalkState {
    fn rank(&self) -> usize {
        self.y.nrows()
    }
}

fn walk(x: &CMat, mats: &[&CMat; 3], targets: &[f64]) -> Result<(CVec, Vec<WalkStep>)> {
    let n = x.nrows();
    let e = eigh_unchecked(x);
    let top = e.value(0);
    // Fast path: (numerically) rank-one input decomposes exactly.
    let kept: Vec<usize> = (0..n).filter(|&i| e.values[i] > RANK_CUT * top).collect();
    if kept.len() <= 1 {
        let y = e.vector(0).scale(e.value(0).max(0.0).sqrt());
        return Ok((y, vec![]));
    }

    let mut basis = CMat::zeros(n, kept.len());
    let mut y = CMat::zeros(kept.len(), kept.len());
    for (col, &i) in kept.iter().enumerate() {
        basis.set_column(col, &e.vector(i));
        y[(col, col)] = crate::linalg::cr(e.values[i]);
    }
    let reduced = mats
        .iter()
        .map(|a| hermitize(&(basis.adjoint() * *a * &basis)))
        .collect();
    let mut state = WalkState { basis, y, reduced };

    let mut steps = Vec::new();
    let mut guard = 0;
    while state.rank() > 1 {
        guard += 1;
        if guard > 8 * n + 16 {
            return Err(Error::NumericalFailure(
                "rank-one decomposition walk failed to terminate".into(),
            ));
        }
        match trace_null_direction(&state)? {
            Some(dir) => {
                let rank_before = state.rank();
                let min_eig = boundary_step(&mut state, &dir)?;
                restrict(&mut state);
                steps.push(WalkStep {
                    rank_before,
                    rank_after: state.rank(),
                    min_eig,
                });
                if state.rank() >= rank_before {
                    return Err(Error::NumericalFailure(
                        "rank-one decomposition step did not reduce rank".into(),
                    ));
                }
            }
            None => {
                // Every trace-neutral direction is proportional to Y
                // itself. This happens (generically!) at rank 2 when all
                // targets are zero: Y is then itself in the constraint
                // null space and the two-dimensional support admits no
                // common zero of the three forms. One outside direction
                // makes the problem solvable, and the three-dimensional
                // endgame finds the common isotropic vector directly.
                let scale = mats
                    .iter()
                    .map(|a| crate::linalg::frob(a))
                    .fold(1.0, f64::max);
                if state.rank() != 2 || targets.iter().any(|t| t.abs() > 1e-9 * scale) {
                    return Err(Error::NumericalFailure(
                        "rank-one decomposition stalled unexpectedly".into(),
                    ));
                }
                // Range directions of the input come first (they keep the
                // output inside its range); only a rank-2 input falls
                // through to its null space, largest index first.
                let k = kept.len();
                let z = (0..k)
                    .rev()
                    .chain((k..n).rev())
                    .map(|i| e.vector(i))
                    .find(|v| {
                        let coeffs = state.basis.adjoint() * v;
                        (v.norm_squared() - coeffs.norm_squared()).max(0.0).sqrt() > 1e-8
                    });
                let z = z.ok_or_else(|| {
                    Error::NumericalFailure(
                        "rank-one decomposition stalled with no lift direction left".into(),
                    )
                })?;
                // Orthonormal extension of the support by z.
                let mut z_orth = z.clone();
                for colidx in 0..2 {
                    let b = state.basis.column(colidx);
                    let coeff = (b.adjoint() * &z_orth)[(0, 0)];
                    z_orth -= b.into_owned() * coeff;
                }
                let b3 = z_orth.unscale(z_orth.norm());
                let mut basis3 = CMat::zeros(n, 3);
                basis3.set_column(0, &state.basis.column(0).into_owned());
                basis3.set_column(1, &state.basis.column(1).into_owned());
                basis3.set_column(2, &b3);
                let g: Vec<CMat> = mats
                    .iter()
                    .map(|a| hermitize(&(basis3.adjoint() * *a * &basis3)))
                    .collect();
                let u = common_isotropic_3(&g[0], &g[1], &g[2])?;
                steps.push(WalkStep {
                    rank_before: 2,
                    rank_after: 1,
                    min_eig: 0.0,
                });
                let y_vec = &basis3 * u;
                for (a, &t) in mats.iter().zip(targets) {
                    let got = quad_form(a, &y_vec);
                    if (got - t).abs() > 1e-6 * (1.0 + t.abs()) {
                        return Err(Error::NumericalFailure(format!(
                            "endgame trace residual {} exceeds tolerance",
                            (got - t).abs()
                        )));
                    }
                }
                return Ok((y_vec, steps));
            }
        }
    }

    let scale = state.y[(0, 0)].re.max(0.0).sqrt();
    let y_vec = state.basis.column(0).into_owned().scale(scale);

    // Final verification against the requested traces.
    for (a, &t) in mats.iter().zip(targets) {
        let got = quad_form(a, &y_vec);
        if (got - t).abs() > 1e-6 * (1.0 + t.abs()) {
            return Err(Error::NumericalFailure(format!(
                "decomposition trace residual {} exceeds tolerance",
                (got - t).abs()
            )));
        }
    }
    Ok((y_vec, steps))
}

/// Common isotropic vector of three Hermitian forms on a three-dimensional
/// space: a unit `u` with `uᴴG_i u = 0` for `i = 1, 2, 3`.
///
/// Existence is guaranteed whenever `(0,0,0)` lies in the joint numerical
/// range, which is convex in dimension three; the caller reaches this
/// routine holding a PSD matrix certifying exactly that. Found by seeded
/// sampling for the basin followed by a Gauss-Newton polish (minimum-norm
/// steps of the 3x6 real Jacobian, renormalizing as it goes).
fn common_isotropic_3(g1: &CMat, g2: &CMat, g3: &CMat) -> Result<CVec> {
    use rand::{Rng, SeedableRng};
    let scales: Vec<f64> = [g1, g2, g3]
        .iter()
        .map(|g| crate::linalg::frob(g).max(1e-300))
        .collect();
    let g: Vec<CMat> = [g1, g2, g3]
        .iter()
        .zip(&scales)
        .map(|(m, &s)| m.unscale(s))
        .collect();
    let h = |u: &CVec| -> f64 { g.iter().map(|m| quad_form(m, u).powi(2)).sum() };

    let refine = |start: &CVec| -> (CVec, f64) {
        let mut u = start.clone();
        let mut best = h(&u);
        for _ in 0..60 {
            // Real Jacobian of the three forms: d g_i = 2 Re(δuᴴ G_i u).
            let mut jac = DMatrix::<f64>::zeros(3, 6);
            let mut f = nalgebra::DVector::<f64>::zeros(3);
            for (row, m) in g.iter().enumerate() {
                let grad = m * &u;
                for k in 0..3 {
                    jac[(row, k)] = 2.0 * grad[k].re;
                    jac[(row, 3 + k)] = 2.0 * grad[k].im;
                }
                f[row] = quad_form(m, &u);
            }
            let pinv_c = crate::linalg::pseudo_inverse(&jac.map(crate::linalg::cr));
            let delta_c = pinv_c * (-&f).map(crate::linalg::cr);
            let delta = delta_c.map(|z| z.re);
            let mut step = 1.0f64;
            let mut improved = false;
            for _ in 0..10 {
                let cand = CVec::from_fn(3, |k, _| {
                    u[k] + crate::linalg::c(step * delta[k], step * delta[3 + k])
                });
                let nrm = cand.norm();
                if nrm > 1e-9 {
                    let cand = cand.unscale(nrm);
                    let val = h(&cand);
                    if val < best {
                        u = cand;
                        best = val;
                        improved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !improved || best <= 1e-28 {
                break;
            }
        }
        (u, best)
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xE16E);
    for round in 0..4 {
        let draws = 4000 << round;
        let mut pool: Vec<(f64, CVec)> = Vec::new();
        for _ in 0..draws {
            let v = CVec::from_fn(3, |_, _| {
                crate::linalg::c(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
            });
            let nrm = v.norm();
            if nrm < 1e-9 {
                continue;
            }
            let u = v.unscale(nrm);
            pool.push((h(&u), u));
        }
        pool.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (_, start) in pool.iter().take(8) {
            let (u, val) = refine(start);
            if val <= 1e-20 {
                return Ok(u);
            }
        }
    }
    Err(Error::NumericalFailure(
        "no common isotropic vector found in the three-dimensional endgame".into(),
    ))
}

/// Number of real coordinates of a Hermitian `r x r` matrix.
fn herm_dof(r: usize) -> usize {
    r * r
}

/// Packs the trace functionals `D ↦ Tr(A_i D)` into a real matrix acting on
/// the coordinate vector of a Hermitian `D` (diagonal first, then re/im per
/// off-diagonal pair).
fn trace_constraint_matrix(reduced: &[CMat], r: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(reduced.len(), herm_dof(r));
    for (row, a) in reduced.iter().enumerate() {
        let mut col = 0;
        for i in 0..r {
            m[(row, col)] = a[(i, i)].re;
            col += 1;
        }
        for i in 0..r {
            for j in (i + 1)..r {
                // Tr(A D) contributes 2·Re(A_ij · conj(D_ij)) per pair.
                m[(row, col)] = 2.0 * a[(i, j)].re;
                m[(row, col + 1)] = 2.0 * a[(i, j)].im;
                col += 2;
            }
        }
    }
    m
}

fn coords_to_hermitian(coords: &nalgebra::DVector<f64>, r: usize) -> CMat {
    let mut d = CMat::zeros(r, r);
    let mut col = 0;
    for i in 0..r {
        d[(i, i)] = crate::linalg::cr(coords[col]);
        col += 1;
    }
    for i in 0..r {
        for j in (i + 1)..r {
            d[(i, j)] = crate::linalg::c(coords[col], coords[col + 1]);
            d[(j, i)] = d[(i, j)].conj();
            col += 2;
        }
    }
    d
}

/// A Hermitian direction `D` with `Tr(A_i D) = 0` for all reduced targets,
/// excluding directions parallel to the iterate itself (those would shrink
/// the whole matrix to zero). `None` when only parallel directions remain.
fn trace_null_direction(state: &WalkState) -> Result<Option<CMat>> {
    let r = state.rank();
    let dof = herm_dof(r);
    let m = trace_constraint_matrix(&state.reduced, r);
    // Null space of M via the spectral decomposition of MᵀM; the structural
    // null dimension is at least dof - #constraints >= 1.
    let gram = m.transpose() * &m;
    let se = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..dof).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let scale = se.eigenvalues[order[dof - 1]].max(1e-300);
    // Exact re-projection onto the constraint null space.
    let mt = m.transpose();
    let mmt_pinv_c = crate::linalg::pseudo_inverse(&(&m * &mt).map(crate::linalg::cr));
    let mmt_pinv = mmt_pinv_c.map(|z| z.re);
    let y_gram = trace_inner(&state.y, &state.y).max(1e-300);
    for &idx in &order {
        if se.eigenvalues[idx] > 1e-10 * scale {
            break;
        }
        let mut coords = se.eigenvectors.column(idx).into_owned();
        coords -= &mt * (&mmt_pinv * (&m * &coords));
        let d = coords_to_hermitian(&coords, r);
        let d_norm = crate::linalg::frob(&d);
        if d_norm < 1e-12 {
            continue;
        }
        let alpha = trace_inner(&d, &state.y) / y_gram;
        let residual = crate::linalg::frob(&(&d - state.y.scale(alpha)));
        if residual > 1e-9 * d_norm {
            return Ok(Some(d));
        }
    }
    Ok(None)
}

/// Moves `Y ← Y + t·D` to the nearest PSD boundary (smaller |t| side).
/// Returns the smallest eigenvalue of the stepped matrix.
fn boundary_step(state: &mut WalkState, d: &CMat) -> Result<f64> {
    let ey = eigh_unchecked(&state.y);
    if ey.min_value() <= 0.0 {
        return Err(Error::NumericalFailure("walk iterate lost positivity".into()));
    }
    let mut inv_half = CMat::zeros(state.rank(), state.rank());
    for k in 0..state.rank() {
        let v = ey.vector(k);
        inv_half += (&v * v.adjoint()).unscale(ey.values[k].sqrt());
    }
    let g = hermitize(&(&inv_half * d * &inv_half));
    let eg = eigh_unchecked(&g);
    let lam_max = eg.value(0);
    let lam_min = eg.min_value();
    let t_pos = if lam_min < -1e-300 { -1.0 / lam_min } else { f64::INFINITY };
    let t_neg = if lam_max > 1e-300 { -1.0 / lam_max } else { f64::NEG_INFINITY };
    let t = if t_pos.is_finite() && (!t_neg.is_finite() || t_pos <= -t_neg) {
        t_pos
    } else if t_neg.is_finite() {
        t_neg
    } else {
        return Err(Error::NumericalFailure("zero walk direction".into()));
    };
    state.y = hermitize(&(&state.y + d.scale(t)));
    Ok(eigh_unchecked(&state.y).min_value())
}

/// Restricts the iterate to its strictly positive eigenspace.
fn restrict(state: &mut WalkState) {
    let e = eigh_unchecked(&state.y);
    let top = e.value(0).max(0.0);
    let kept: Vec<usize> = (0..state.rank())
        .filter(|&i| e.values[i] > RESTRICT_CUT * top)
        .collect();
    let mut v = CMat::zeros(state.rank(), kept.len());
    let mut y = CMat::zeros(kept.len(), kept.len());
    for (col, &i) in kept.iter().enumerate() {
        v.set_column(col, &e.vector(i));
        y[(col, col)] = crate::linalg::cr(e.values[i]);
    }
    state.basis = &state.basis * &v;
    state.reduced = state
        .reduced
        .iter()
        .map(|a| hermitize(&(v.adjoint() * a * &v)))
        .collect();
    state.y = y;
}

/// Tight rank-one extraction of the link-1 beamformer from a relaxed
/// solution: the top eigenvector when the solution is (numerically) rank
/// one, otherwise the three-trace decomposition against the subproblem's
/// constraint set.
pub fn extract_w1(
    w1_mat: &CMat,
    ch: &ChannelSet,
    w2: &CVec,
    sinr2_star: f64,
) -> Result<Beamformer> {
    let nt = ch.num_tx_antennas();
    let rank = psd_rank(w1_mat, RANK_CUT);
    if rank <= 1 {
        let e = eigh_unchecked(w1_mat);
        return Beamformer::unit(&e.vector(0));
    }
    if nt < 3 {
        return Err(Error::UnsupportedDimension(format!(
            "rank-{rank} relaxed solution with N_T = {nt}: the decomposition \
             requires at least 3 transmit antennas"
        )));
    }
    let cmat = p2_constraint_matrix(ch, w2, sinr2_star);
    let a1 = crate::channel::effective_channel(ch, Link::Tx1, w2)?;
    let identity = CMat::identity(nt, nt);
    let y = rd3(w1_mat, &cmat, &a1, &identity)?;
    let w = Beamformer::unit(&y)?;
    let c_val = quad_form(&cmat, w.vector()).abs();
    if c_val > 1e-6 * (1.0 + crate::linalg::frob(&cmat)) {
        return Err(Error::NumericalFailure(format!(
            "extracted beamformer violates the SINR-coupling constraint: {c_val}"
        )));
    }
    Ok(w)
}

/// Tight rank-one extraction of the link-2 beamformer from the unlifted
/// relaxed solution, via the four-trace decomposition when needed. The
/// extracted vector must reproduce the SINR target through the quadratic
/// form in `A₂(w₁)`.
pub fn extract_w2(
    w2_mat: &CMat,
    ch: &ChannelSet,
    w1: &CVec,
    sinr2_star: f64,
) -> Result<Beamformer> {
    let nt = ch.num_tx_antennas();
    let rank = psd_rank(w2_mat, RANK_CUT);
    let a2 = crate::channel::effective_channel(ch, Link::Tx2, w1)?;
    let w = if rank <= 1 {
        let e = eigh_unchecked(w2_mat);
        Beamformer::unit(&e.vector(0))?
    } else {
        if nt < 3 {
            return Err(Error::UnsupportedDimension(format!(
                "rank-{rank} relaxed solution with N_T = {nt}: the decomposition \
                 requires at least 3 transmit antennas"
            )));
        }
        let c1 = p5_interference_matrix(ch, w1);
        let c2 = p5_denominator_matrix(ch);
        let identity = CMat::identity(nt, nt);
        let y = rd4(w2_mat, [&c1, &a2, &c2, &identity])?;
        Beamformer::unit(&y)?
    };
    let achieved = quad_form(&a2, w.vector());
    if (achieved - sinr2_star).abs() > 1e-4 * (1.0 + sinr2_star) {
        return Err(Error::NumericalFailure(format!(
            "extracted link-2 beamformer misses the SINR target: {achieved} vs {sinr2_star}"
        )));
    }
    Ok(w)
}
