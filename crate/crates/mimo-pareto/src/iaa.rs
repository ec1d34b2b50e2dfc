//! The iterative alternating algorithm and its supporting machinery:
//! feasibility membership for link-2 beamformers, the null-quadratic unit
//! vector construction, the two single-beamformer optimization half-steps,
//! convergence control, boundary sweeps, and the full-power perturbation
//! oracle.
//!
//! One iteration fixes `w2` and maximizes link 1's SINR subject to the
//! link-2 SINR equality (a relaxed trace program followed by a rank-one
//! extraction), then fixes `w1` and minimizes the interference quotient
//! seen by link 1 under the same equality (a fractional program lifted to
//! a trace program with one scalar). Link 1's rate is non-decreasing
//! across iterations and bounded, so the loop converges.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{
    rate_from_sinr, sinr, sinr_from_rate, Beamformer, ChannelSet, Link, RatePoint,
};
use crate::keypoints::{initial_w2, InitProvenance, KeyPointSet};
use crate::linalg::{eigh, hermitize, orth_projectors, pseudo_inverse, quad_form, CMat, CVec, C64};
use crate::rankone::{extract_w1, extract_w2};
use crate::sdp::{
    build_p2, build_p5, link2_signal_energy, p2_constraint_matrix, p5_denominator_matrix,
    p5_interference_matrix, psd_rank, solve, trace_value, w2_matrix_from_p5, SdpStatus,
};
use crate::{Error, Result};

/// Convergence and initialization parameters of a run.
#[derive(Debug, Clone)]
pub struct IaaConfig {
    /// Convergence threshold on the change of link 1's rate (bits/s/Hz).
    pub epsilon: f64,
    pub max_iters: usize,
    /// Mixing-weight fallback grid size for the initialization.
    pub nu_steps: usize,
    pub rng_seed: u64,
}

impl Default for IaaConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iters: 100,
            nu_steps: 10,
            rng_seed: 7,
        }
    }
}

impl IaaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one relaxed subproblem solve.
#[derive(Debug, Clone)]
pub struct SubSolveDiag {
    /// Optimal value of the relaxed program.
    pub relaxed_objective: f64,
    /// Objective value recomputed at the extracted unit vector.
    pub extracted_objective: f64,
    /// Numerical rank of the relaxed solution matrix.
    pub rank: usize,
    pub iterations: usize,
    /// For the link-1 step: quadratic form of the coupling constraint at
    /// the extracted vector. For the link-2 step: deviation of the
    /// fractional objective of the unlifted matrix from the lifted optimum.
    pub constraint_residual: f64,
}

/// Per-iteration record of a run.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub index: usize,
    pub w1: Beamformer,
    pub w2: Beamformer,
    pub r1: f64,
    pub r2_achieved: f64,
    pub tx1: SubSolveDiag,
    pub tx2: SubSolveDiag,
    /// True when the link-2 half-step was re-run to pull the achieved SINR
    /// back onto the target after extraction drift.
    pub restored: bool,
}

/// Full trace of one run.
#[derive(Debug, Clone)]
pub struct IaaTrace {
    pub target_r2: f64,
    pub sinr2_star: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub final_point: RatePoint,
    pub init_w2: Beamformer,
    pub init_provenance: InitProvenance,
}

/// Relative drift of the achieved link-2 SINR that triggers a restoration
/// step. Tighter than strictly needed so the equality also holds at the
/// reported final point.
pub const RESTORATION_DRIFT: f64 = 1e-6;

/// Rotates `w2` inside the plane spanned with an extreme eigenvector of
/// `A₂(w₁)` so the quadratic form hits the SINR target exactly; the unit
/// norm is preserved. The movement is of the order of the drift being
/// corrected.
fn rebalance_sinr2(
    ch: &ChannelSet,
    w1: &CVec,
    w2: &Beamformer,
    sinr2_star: f64,
) -> Result<Beamformer> {
    let a2 = crate::channel::effective_channel(ch, Link::Tx2, w1)?;
    let current = quad_form(&a2, w2.vector());
    let e = eigh(&a2)?;
    // Mix toward whichever extreme lies on the other side of the target.
    let v = if current < sinr2_star {
        e.vector(0)
    } else {
        e.vector(e.values.len() - 1)
    };
    let a_v = quad_form(&a2, &v);
    let denom = a_v - sinr2_star;
    let b0 = current - sinr2_star;
    if denom.abs() <= 1e-14 * (1.0 + sinr2_star) {
        return Err(Error::NumericalFailure(
            "rebalancing direction does not straddle the target".into(),
        ));
    }
    // Phase chosen to make the A-cross term real and positive; the unit
    // norm enters the quadratic exactly, so the normalized result hits the
    // target with no further error.
    let cross = (w2.vector().adjoint() * &a2 * &v)[(0, 0)];
    let cross_n = (w2.vector().adjoint() * &v)[(0, 0)];
    let phase = if cross.norm() > 1e-14 {
        cross.conj() / cross.norm()
    } else if cross_n.norm() > 1e-14 {
        cross_n.conj() / cross_n.norm()
    } else {
        crate::linalg::cr(1.0)
    };
    let u = (cross * phase).re;
    let nc = (cross_n * phase).re;
    // (current + 2ρu + ρ²a_v) = target·(1 + 2ρ·nc + ρ²); the straddle
    // choice makes qa·qc < 0, so a real root always exists.
    let qa = a_v - sinr2_star;
    let qb = 2.0 * (u - sinr2_star * nc);
    let qc = b0;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(Error::NumericalFailure(
            "rebalancing quadratic has no real root".into(),
        ));
    }
    let sd = disc.sqrt();
    let roots = [(-qb + sd) / (2.0 * qa), (-qb - sd) / (2.0 * qa)];
    let rho = if roots[0].abs() <= roots[1].abs() {
        roots[0]
    } else {
        roots[1]
    };
    let moved = w2.vector() + v.map(|z| z * phase * crate::linalg::cr(rho));
    Beamformer::unit(&moved)
}

/// Feasibility report for a candidate link-2 beamformer.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// `|‖w‖² − 1|`, tested against 1e-9.
    pub norm_margin: f64,
    /// `w₂ᴴH₂₂ᴴH₂₂w₂ − σ₂²·SINR₂⋆`, tested against −1e-9.
    pub energy_margin: f64,
    /// `λ₁(C)·λ_N(C)`, tested against `1e-12·λ₁²`.
    pub eig_product: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

/// Membership test for the feasible set of link-2 beamformers at a given
/// SINR target: full power, enough direct-link energy, and an indefinite
/// (or singular) coupling matrix so the link-1 equality admits a solution.
pub fn feasibility_check_w2(
    ch: &ChannelSet,
    w2: &Beamformer,
    sinr2_star: f64,
) -> Result<FeasibilityReport> {
    if w2.len() != ch.num_tx_antennas() {
        return Err(Error::InvalidArgument("w2 has wrong length".into()));
    }
    let norm_margin = (w2.power() - 1.0).abs();
    let energy_margin = link2_signal_energy(ch, w2.vector()) - ch.noise(Link::Tx2) * sinr2_star;
    let cmat = p2_constraint_matrix(ch, w2.vector(), sinr2_star);
    let e = eigh(&cmat)?;
    let lambda_max = e.value(0);
    let lambda_min = e.min_value();
    let eig_product = lambda_max * lambda_min;
    let feasible = norm_margin <= 1e-9
        && energy_margin >= -1e-9
        && eig_product <= 1e-12 * lambda_max * lambda_max;
    Ok(FeasibilityReport {
        feasible,
        norm_margin,
        energy_margin,
        eig_product,
        lambda_max,
        lambda_min,
    })
}

/// Unit vector `w` with `wᴴCw = 0` for a Hermitian `C` that is indefinite
/// or singular.
///
/// A (numerically) singular `C` yields the null-space eigenvector closest
/// to zero; the indefinite full-rank case mixes the extreme eigenvectors
/// with weights `√(−λ_N/(λ₁−λ_N))` and `√(λ₁/(λ₁−λ_N))`.
pub fn null_quadratic_unit_vector(c_mat: &CMat) -> Result<CVec> {
    let e = eigh(c_mat)?;
    let lam_max = e.value(0);
    let lam_min = e.min_value();
    let scale = lam_max.abs().max(lam_min.abs());
    if scale <= 1e-300 {
        // C = 0: every unit vector qualifies.
        let mut v = CVec::zeros(c_mat.nrows());
        v[0] = crate::linalg::cr(1.0);
        return Ok(v);
    }
    if lam_max * lam_min > 1e-12 * scale * scale {
        return Err(Error::InvalidArgument(
            "no null vector: the quadratic form is definite".into(),
        ));
    }
    // Rank-deficient branch: an eigenvalue within the rank cutoff of zero.
    let (idx, &lam_near) = e
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .expect("nonempty spectrum");
    if lam_near.abs() <= crate::linalg::RANK_REL_TOL * scale {
        return Ok(e.vector(idx));
    }
    let denom = lam_max - lam_min;
    let w = e.vector(0).scale((-lam_min / denom).sqrt())
        + e.vector(e.values.len() - 1).scale((lam_max / denom).sqrt());
    Ok(w)
}

/// Link-1 half-step: for fixed `w2`, maximizes link 1's SINR over unit
/// `w1` subject to the link-2 SINR equality. Returns the extracted
/// beamformer and solve diagnostics.
pub fn optimize_tx1(
    ch: &ChannelSet,
    w2: &Beamformer,
    sinr2_star: f64,
) -> Result<(Beamformer, SubSolveDiag)> {
    let problem = build_p2(ch, w2.vector(), sinr2_star)?;
    let sol = solve(&problem)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(format!(
            "link-1 subproblem ended with status {:?} after {} iterations \
             (primal residual {:.3e})",
            sol.status, sol.iterations, sol.primal_residual
        )));
    }
    let rank = psd_rank(&sol.x, crate::rankone::RANK_CUT);
    let w1 = extract_w1(&sol.x, ch, w2.vector(), sinr2_star)?;
    let a1 = &problem.objective;
    let extracted = quad_form(a1, w1.vector());
    let cmat = &problem.constraints[0].matrix;
    let diag = SubSolveDiag {
        relaxed_objective: sol.objective_value,
        extracted_objective: extracted,
        rank,
        iterations: sol.iterations,
        constraint_residual: quad_form(cmat, w1.vector()).abs(),
    };
    Ok((w1, diag))
}

/// Link-2 half-step: for fixed unit `w1`, minimizes the interference
/// quotient at receiver 1 subject to the link-2 SINR equality.
pub fn optimize_tx2(
    ch: &ChannelSet,
    w1: &Beamformer,
    sinr2_star: f64,
) -> Result<(Beamformer, SubSolveDiag)> {
    let problem = build_p5(ch, w1.vector(), sinr2_star)?;
    let sol = solve(&problem)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(format!(
            "link-2 subproblem ended with status {:?} after {} iterations \
             (primal residual {:.3e})",
            sol.status, sol.iterations, sol.primal_residual
        )));
    }
    let w2_mat = w2_matrix_from_p5(&sol)?;
    let rank = psd_rank(&w2_mat, crate::rankone::RANK_CUT);
    let w2 = extract_w2(&w2_mat, ch, w1.vector(), sinr2_star)?;
    // Fractional objective of the unlifted matrix vs the lifted optimum.
    let c1 = p5_interference_matrix(ch, w1.vector());
    let c2 = p5_denominator_matrix(ch);
    let fractional = trace_value(&c1, &w2_mat) / trace_value(&c2, &w2_mat);
    let extracted = quad_form(&c1, w2.vector()) / quad_form(&c2, w2.vector());
    let diag = SubSolveDiag {
        relaxed_objective: sol.objective_value,
        extracted_objective: extracted,
        rank,
        iterations: sol.iterations,
        constraint_residual: (fractional - sol.objective_value).abs(),
    };
    Ok((w2, diag))
}

/// Runs the alternating algorithm for one rate target `R₂⋆ ∈ (R̲₂, R̄₂)`.
pub fn run(ch: &ChannelSet, r2_star: f64, cfg: &IaaConfig) -> Result<IaaTrace> {
    let kps = KeyPointSet::compute(ch)?;
    run_with_keypoints(ch, &kps, r2_star, cfg)
}

/// [`run`] with a precomputed key-point set (used by sweeps).
pub fn run_with_keypoints(
    ch: &ChannelSet,
    kps: &KeyPointSet,
    r2_star: f64,
    cfg: &IaaConfig,
) -> Result<IaaTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let init = initial_w2(ch, kps, r2_star, cfg.nu_steps, &mut rng)?;
    run_from(ch, r2_star, init.w2.clone(), init.provenance, cfg)
}

/// Runs the alternating loop from an explicit feasible initialization.
pub fn run_from(
    ch: &ChannelSet,
    r2_star: f64,
    init_w2: Beamformer,
    init_provenance: InitProvenance,
    cfg: &IaaConfig,
) -> Result<IaaTrace> {
    cfg.validate()?;
    let sinr2_star = sinr_from_rate(r2_star);
    let mut w2 = init_w2.clone();
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut prev_r1: Option<f64> = None;

    for index in 1..=cfg.max_iters {
        let (w1, tx1_diag) = optimize_tx1(ch, &w2, sinr2_star)
            .map_err(|e| Error::Solver(format!("iteration {index}, link-1 step: {e}")))?;
        let (mut w2_new, mut tx2_diag) = optimize_tx2(ch, &w1, sinr2_star)
            .map_err(|e| Error::Solver(format!("iteration {index}, link-2 step: {e}")))?;

        // Extraction noise occasionally pulls the achieved link-2 SINR off
        // the target; an exact rebalancing rotation restores the equality.
        let mut restored = false;
        let achieved = sinr(ch, Link::Tx2, w1.vector(), w2_new.vector())?;
        if (achieved - sinr2_star).abs() > RESTORATION_DRIFT * sinr2_star {
            let w2_fix = rebalance_sinr2(ch, w1.vector(), &w2_new, sinr2_star)
                .map_err(|e| Error::Solver(format!("iteration {index}, restoration: {e}")))?;
            tx2_diag.extracted_objective = {
                let c1 = p5_interference_matrix(ch, w1.vector());
                let c2 = p5_denominator_matrix(ch);
                quad_form(&c1, w2_fix.vector()) / quad_form(&c2, w2_fix.vector())
            };
            w2_new = w2_fix;
            restored = true;
        }

        let s1 = sinr(ch, Link::Tx1, w1.vector(), w2_new.vector())?;
        let s2 = sinr(ch, Link::Tx2, w1.vector(), w2_new.vector())?;
        let r1 = rate_from_sinr(s1);
        iterations.push(IterationRecord {
            index,
            w1: w1.clone(),
            w2: w2_new.clone(),
            r1,
            r2_achieved: rate_from_sinr(s2),
            tx1: tx1_diag,
            tx2: tx2_diag,
            restored,
        });
        w2 = w2_new;

        if let Some(prev) = prev_r1 {
            if (r1 - prev).abs() <= cfg.epsilon {
                converged = true;
                break;
            }
        }
        prev_r1 = Some(r1);
    }

    let last = iterations
        .last()
        .ok_or_else(|| Error::NumericalFailure("no iterations executed".into()))?;
    let final_point = RatePoint {
        r1: last.r1,
        r2: last.r2_achieved,
        w1: last.w1.clone(),
        w2: last.w2.clone(),
    };
    Ok(IaaTrace {
        target_r2: r2_star,
        sinr2_star,
        iterations,
        converged,
        final_point,
        init_w2,
        init_provenance,
    })
}

/// Uniform grid of rate targets strictly inside `(R̲₂, R̄₂)`:
/// `R̲₂ + n/(n_targets+1)·(R̄₂−R̲₂)` for `n = 1..=n_targets`.
pub fn sweep_targets(kps: &KeyPointSet, n_targets: usize) -> Vec<f64> {
    (1..=n_targets)
        .map(|n| {
            kps.r2_under
                + (kps.r2_bar - kps.r2_under) * n as f64 / (n_targets + 1) as f64
        })
        .collect()
}

/// Runs one trace per target on the uniform grid; targets run
/// independently (and in parallel), each with a per-target seed derived
/// from the base seed.
pub fn sweep(ch: &ChannelSet, n_targets: usize, cfg: &IaaConfig) -> Result<Vec<Result<IaaTrace>>> {
    if n_targets == 0 {
        return Err(Error::InvalidArgument("sweep needs at least one target".into()));
    }
    let kps = KeyPointSet::compute(ch)?;
    let targets = sweep_targets(&kps, n_targets);
    Ok(targets
        .par_iter()
        .enumerate()
        .map(|(idx, &target)| {
            let mut per_target = cfg.clone();
            per_target.rng_seed = cfg.rng_seed.wrapping_add(idx as u64);
            run_with_keypoints(ch, &kps, target, &per_target)
        })
        .collect())
}

/// Power perturbation for an interior beamformer: given `‖w1‖ < 1`,
/// constructs a nonzero `δ` such that link 1's SINR strictly increases,
/// link 2's SINR is unchanged, and the transmit power grows while staying
/// within budget.
///
/// When the cross channel out of transmitter 1 is column-rank deficient the
/// direction lives in its null space (phase chosen from the intersection
/// of the two admissible arcs); with full column rank the image-plane
/// construction solves a scalar equation for the mixing weight by
/// bisection, sweeping a deterministic phase grid until all conditions
/// verify numerically.
pub fn perturbation(ch: &ChannelSet, w1: &Beamformer, w2: &Beamformer) -> Result<CVec> {
    let norm1 = w1.vector().norm();
    if norm1 >= 1.0 - 1e-9 {
        return Err(Error::InvalidArgument(
            "perturbation requires strictly interior transmit power".into(),
        ));
    }
    if norm1 <= 1e-12 {
        return Err(Error::InvalidArgument("perturbation requires nonzero w1".into()));
    }
    let h12 = ch.gain(Link::Tx1, Link::Tx2);
    let nt = ch.num_tx_antennas();
    let a1 = crate::channel::effective_channel(ch, Link::Tx1, w2.vector())?;

    let rank12 = crate::linalg::rank(h12);
    let budget = 1.0 - norm1;
    let base_sinr1 = sinr(ch, Link::Tx1, w1.vector(), w2.vector())?;
    let base_sinr2 = sinr(ch, Link::Tx2, w1.vector(), w2.vector())?;

    let verify = |delta: &CVec| -> bool {
        let w1_new = w1.vector() + delta;
        let p_new = w1_new.norm_squared();
        if p_new > 1.0 + 1e-12 || p_new <= w1.vector().norm_squared() {
            return false;
        }
        let s1 = match sinr(ch, Link::Tx1, &w1_new, w2.vector()) {
            Ok(v) => v,
            Err(_) => return false,
        };
        let s2 = match sinr(ch, Link::Tx2, &w1_new, w2.vector()) {
            Ok(v) => v,
            Err(_) => return false,
        };
        s1 > base_sinr1 && (s2 - base_sinr2).abs() <= 1e-8 * (1.0 + base_sinr2)
    };

    if rank12 < nt {
        // Null-space branch: any direction there leaves link 2 untouched,
        // so pick the one with the largest SINR-gain quadratic form and
        // choose the phase from the admissible arcs.
        let (_, p_null) = orth_projectors(&h12.adjoint().into_owned());
        let restricted = hermitize(&(&p_null * &a1 * &p_null));
        let g = crate::linalg::generalized_eigh(&restricted, &p_null)?;
        let mut dir = if !g.finite.values.is_empty() && g.finite.values[0] > 0.0 {
            &p_null * g.finite.vector(0)
        } else {
            // Fall back to any null direction.
            let e = eigh(&p_null)?;
            e.vector(0)
        };
        let nrm = dir.norm();
        if nrm < 1e-12 {
            return Err(Error::DegenerateInput(
                "cross channel has no usable null space".into(),
            ));
        }
        dir = dir.unscale(nrm);
        let q = quad_form(&a1, &dir);
        let m = (w1.vector().adjoint() * &a1 * &dir)[(0, 0)];
        if q <= 1e-14 && m.norm() <= 1e-14 {
            return Err(Error::DegenerateInput(
                "no strict SINR gain available in the null space".into(),
            ));
        }
        let mut magnitude = budget.min(0.1);
        for _ in 0..80 {
            if let Some(phi) = admissible_phase(&a1, w1.vector(), &dir, magnitude) {
                let delta = dir.map(|z| z * C64::from_polar(magnitude, phi));
                if verify(&delta) {
                    return Ok(delta);
                }
            }
            magnitude *= 0.5;
        }
        return Err(Error::NumericalFailure(
            "null-space perturbation failed to verify".into(),
        ));
    }

    // Full-column-rank branch: work with the images v1 = H12 w1 and the
    // projection of v2 = H22 w2 onto the column space of H12.
    let v1 = h12 * w1.vector();
    let v2 = ch.direct(Link::Tx2) * w2.vector();
    let (p_col, _) = orth_projectors(h12);
    let v2_in = &p_col * &v2;
    let h12_pinv = pseudo_inverse(h12);
    let sigma2 = ch.noise(Link::Tx2);

    // Orthonormal pair spanning the working plane inside the column space.
    let (d_par, d_perp) = image_plane(&v1, &v2_in, &p_col)?;

    let r_side = {
        let ip = (v1.adjoint() * &v2)[(0, 0)].norm_sqr();
        ip / (sigma2 + v1.norm_squared())
    };
    // The link-2 equality pins one combination of the free parameters: the
    // mixing weight η is bisected for each global phase ψ and relative
    // phase χ of the perpendicular component (the equality is insensitive
    // to χ through the numerator, so both phases remain free for the gain
    // and power conditions).
    let combo_dir = |eta: f64, psi: f64, chi: f64| -> CVec {
        let perp = d_perp.map(|z| z * C64::from_polar(eta.sqrt(), chi));
        let par = d_par.map(|z| z * crate::linalg::cr((1.0 - eta).sqrt()));
        (perp + par).map(|z| z * C64::from_polar(1.0, psi))
    };
    let l_side = |t: f64, psi: f64, chi: f64, eta: f64| -> f64 {
        let moved = &v1 + combo_dir(eta, psi, chi).map(|z| z * crate::linalg::cr(t));
        let ip = (moved.adjoint() * &v2)[(0, 0)].norm_sqr();
        ip / (sigma2 + moved.norm_squared())
    };

    // Deterministic phase grids: ψ over the full circle starting from 0
    // (brackets are guaranteed for cos ψ ≥ 0 and checked elsewhere), χ in
    // quarter turns.
    let mut psis = vec![0.0f64];
    for k in 1..12 {
        let p = k as f64 * std::f64::consts::PI / 12.0;
        psis.push(p);
        psis.push(-p);
    }
    psis.push(std::f64::consts::PI);
    let chis = [
        0.0,
        std::f64::consts::FRAC_PI_2,
        std::f64::consts::PI,
        -std::f64::consts::FRAC_PI_2,
    ];

    let mut t = budget.min(0.1) / crate::linalg::frob(&h12_pinv).max(1.0);
    for _ in 0..60 {
        for &chi in &chis {
            for &psi in &psis {
                let g0 = l_side(t, psi, chi, 0.0) - r_side;
                let g1 = l_side(t, psi, chi, 1.0) - r_side;
                if g0 * g1 > 0.0 {
                    continue;
                }
                // Bisection on the mixing weight.
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let mut glo = g0;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let gm = l_side(t, psi, chi, mid) - r_side;
                    if glo * gm <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        glo = gm;
                    }
                    if hi - lo < 1e-13 {
                        break;
                    }
                }
                let eta0 = 0.5 * (lo + hi);
                let v_delta = combo_dir(eta0, psi, chi).map(|z| z * crate::linalg::cr(t));
                let delta = &h12_pinv * &v_delta;
                if delta.norm() > budget || delta.norm() < 1e-15 {
                    continue;
                }
                if verify(&delta) {
                    return Ok(delta);
                }
            }
        }
        t *= 0.5;
    }
    Err(Error::NumericalFailure(
        "full-rank perturbation failed to verify".into(),
    ))
}

/// Midpoint of the intersection of the two admissible phase arcs for the
/// SINR-increase and power-increase conditions. `None` when the arcs fail
/// to intersect at this magnitude.
fn admissible_phase(a1: &CMat, w1: &CVec, dir: &CVec, magnitude: f64) -> Option<f64> {
    // Condition (gain): cos(phi + arg(m)) > -magnitude·q / (2|m|).
    let q = quad_form(a1, dir);
    let m = (w1.adjoint() * a1 * dir)[(0, 0)];
    // Condition (power): cos(phi + arg(p)) > -magnitude / (2|p|).
    let p = (w1.adjoint() * dir)[(0, 0)];

    let arc = |center: f64, cos_bound: f64| -> Option<(f64, f64)> {
        if cos_bound >= 1.0 {
            return None; // empty arc
        }
        let half = cos_bound.max(-1.0).acos();
        Some((center - half, center + half))
    };
    // Each condition contributes either the full circle (when its linear
    // coefficient vanishes but the quadratic one is positive) or an arc
    // wider than a half circle.
    let mut arcs: Vec<(f64, f64)> = Vec::new();
    if m.norm() > 1e-16 {
        let bound = -(magnitude * q) / (2.0 * m.norm());
        match arc(-m.arg(), bound) {
            Some(a) => arcs.push(a),
            None => return None,
        }
    } else if q <= 0.0 {
        return None;
    }
    if p.norm() > 1e-16 {
        let bound = -magnitude / (2.0 * p.norm());
        match arc(-p.arg(), bound) {
            Some(a) => arcs.push(a),
            None => return None,
        }
    }
    match arcs.len() {
        0 => Some(0.0),
        1 => Some(0.5 * (arcs[0].0 + arcs[0].1)),
        _ => intersect_arcs(arcs[0], arcs[1]),
    }
}

/// Midpoint of the longest component of the intersection of two circular
/// arcs given as `(start, end)` with `end > start`.
fn intersect_arcs(a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let mut best: Option<(f64, f64)> = None;
    // Slide b by full turns so every potential overlap is examined.
    for shift in [-tau, 0.0, tau] {
        let (bs, be) = (b.0 + shift, b.1 + shift);
        let lo = a.0.max(bs);
        let hi = a.1.min(be);
        if hi > lo {
            let len = hi - lo;
            if best.map_or(true, |(blen, _)| len > blen) {
                best = Some((len, 0.5 * (lo + hi)));
            }
        }
    }
    best.map(|(_, mid)| mid)
}

/// Orthonormal plane basis inside the cross-channel column space: the
/// component of `v1` parallel to `v2_in` (phase-aligned) and the
/// complementary component.
fn image_plane(v1: &CVec, v2_in: &CVec, p_col: &CMat) -> Result<(CVec, CVec)> {
    let n2 = v2_in.norm();
    let nr = v1.len();
    if n2 <= 1e-12 {
        // v2 orthogonal to the whole column space: interference at receiver
        // 2 is invariant, any in-plane pair works.
        let e = eigh(p_col)?;
        let d1 = e.vector(0);
        let mut d2 = CVec::zeros(nr);
        for k in 1..nr {
            if e.values[k] > 0.5 {
                d2 = e.vector(k);
                break;
            }
        }
        if d2.norm() < 0.5 {
            return Err(Error::DegenerateInput(
                "column space too small for the image-plane construction".into(),
            ));
        }
        return Ok((d1, d2));
    }
    let u2 = v2_in.unscale(n2);
    let ip = (v1.adjoint() * &u2)[(0, 0)];
    // Parallel direction carries the conjugate phase so its coefficient in
    // v1 is real and nonnegative.
    let phase = if ip.norm() > 1e-14 {
        ip / ip.norm()
    } else {
        crate::linalg::cr(1.0)
    };
    let d_par = u2.map(|z| z * phase.conj());
    let perp = v1 - u2.map(|z| z * ip);
    let d_perp = if perp.norm() > 1e-12 * v1.norm().max(1.0) {
        perp.unscale(perp.norm())
    } else {
        // v1 parallel to v2: take any unit vector in the column space
        // orthogonal to u2.
        let mut cand = None;
        for k in 0..nr {
            let mut e = CVec::zeros(nr);
            e[k] = crate::linalg::cr(1.0);
            let proj = p_col * e;
            let orth = &proj - u2.map(|z| z * (u2.adjoint() * &proj)[(0, 0)]);
            if orth.norm() > 1e-8 {
                cand = Some(orth.unscale(orth.norm()));
                break;
            }
        }
        cand.ok_or_else(|| {
            Error::DegenerateInput("no orthogonal direction inside the column space".into())
        })?
    };
    Ok((d_par, d_perp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cr};
    use crate::testdata;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> CVec {
        loop {
            let v = CVec::from_fn(n, |_, _| {
                c(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
            });
            if v.norm() > 1e-6 {
                return v.unscale(v.norm());
            }
        }
    }

    #[test]
    fn feasibility_egoistic_near_capacity() {
        let ch = testdata::paper_channels();
        let kps = KeyPointSet::compute(&ch).unwrap();
        let w2_ego = kps.egoistic(Link::Tx2).clone();
        let just_below = sinr_from_rate(kps.r2_bar) * (1.0 - 1e-6);
        let rep = feasibility_check_w2(&ch, &w2_ego, just_below).unwrap();
        assert!(rep.feasible, "energy condition should be tight but met: {rep:?}");
        // Above the single-user capacity no unit vector passes.
        let above = sinr_from_rate(kps.r2_bar) * 1.01;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let w = Beamformer::unit(&random_unit(&mut rng, 3)).unwrap();
            let rep = feasibility_check_w2(&ch, &w, above).unwrap();
            assert!(!rep.feasible);
        }
    }

    #[test]
    fn feasibility_rejects_partial_power() {
        let ch = testdata::paper_channels();
        let kps = KeyPointSet::compute(&ch).unwrap();
        let half = kps.egoistic(Link::Tx2).scaled(0.5).unwrap();
        let rep = feasibility_check_w2(&ch, &half, 1.0).unwrap();
        assert!(!rep.feasible);
        assert!(rep.norm_margin > 0.5);
    }

    #[test]
    fn null_quadratic_branches() {
        // Singular: a zero eigenvalue exists.
        let c1 = CMat::from_diagonal(&CVec::from_vec(vec![cr(1.0), cr(0.0), cr(-1.0)]));
        let w = null_quadratic_unit_vector(&c1).unwrap();
        assert!(quad_form(&c1, &w).abs() <= 1e-9 * crate::linalg::frob(&c1));
        assert!((w.norm() - 1.0).abs() < 1e-12);
        // Indefinite full rank: the weight formula mixes the extremes.
        let c2 = CMat::from_diagonal(&CVec::from_vec(vec![cr(3.0), cr(-1.0), cr(-1.0)]));
        let w = null_quadratic_unit_vector(&c2).unwrap();
        assert!(quad_form(&c2, &w).abs() <= 1e-9 * crate::linalg::frob(&c2));
        assert!((w[0].norm_sqr() - 0.25).abs() < 1e-9);
        // Definite: rejected.
        let c3 = CMat::identity(3, 3);
        assert!(null_quadratic_unit_vector(&c3).is_err());
    }

    #[test]
    fn null_quadratic_on_feasible_coupling_matrix() {
        let ch = testdata::paper_channels();
        let kps = KeyPointSet::compute(&ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = initial_w2(&ch, &kps, 6.2898, 10, &mut rng).unwrap();
        let cmat = p2_constraint_matrix(&ch, init.w2.vector(), sinr_from_rate(6.2898));
        let w = null_quadratic_unit_vector(&cmat).unwrap();
        assert!(quad_form(&cmat, &w).abs() <= 1e-9 * crate::linalg::frob(&cmat));
    }

    #[test]
    fn tx1_step_hits_target_and_improves() {
        let ch = testdata::paper_channels();
        let kps = KeyPointSet::compute(&ch).unwrap();
        let r2_star = 6.2898;
        let sinr2_star = sinr_from_rate(r2_star);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = initial_w2(&ch, &kps, r2_star, 10, &mut rng).unwrap();
        let (w1, diag) = optimize_tx1(&ch, &init.w2, sinr2_star).unwrap();
        assert!(w1.full_power());
        let achieved = sinr(&ch, Link::Tx2, w1.vector(), init.w2.vector()).unwrap();
        assert!(
            (achieved - sinr2_star).abs() <= 1e-6 * sinr2_star,
            "link-2 equality violated: {achieved} vs {sinr2_star}"
        );
        assert!(
            (diag.extracted_objective - diag.relaxed_objective).abs()
                <= 1e-6 * (1.0 + diag.relaxed_objective),
            "extraction must be tight: {diag:?}"
        );
    }

    #[test]
    fn tx2_step_preserves_rate_and_is_idempotent() {
        let ch = testdata::paper_channels();
        let kps = KeyPointSet::compute(&ch).unwrap();
        let r2_star = 6.2898;
        let sinr2_star = sinr_from_rate(r2_star);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = initial_w2(&ch, &kps, r2_star, 10, &mut rng).unwrap();
        let (w1, _) = optimize_tx1(&ch, &init.w2, sinr2_star).unwrap();
        let before = sinr(&ch, Link::Tx1, w1.vector(), init.w2.vector()).unwrap();
        let (w2, diag) = optimize_tx2(&ch, &w1, sinr2_star).unwrap();
        let after = sinr(&ch, Link::Tx1, w1.vector(), w2.vector()).unwrap();
        assert!(after >= before - 1e-8 * (1.0 + before), "half step must not hurt");
        let achieved = sinr(&ch, Link::Tx2, w1.vector(), w2.vector()).unwrap();
        assert!((achieved - sinr2_star).abs() <= 1e-6 * sinr2_star);
        assert!(diag.constraint_residual <= 1e-6 * (1.0 + diag.relaxed_objective.abs()));
        // Determinism doubles as a fixed-point check of the half-step.
        let (w2_again, _) = optimize_tx2(&ch, &w1, sinr2_star).unwrap();
        let again = sinr(&ch, Link::Tx1, w1.vector(), w2_again.vector()).unwrap();
        assert!((after - again).abs() <= 1e-8 * (1.0 + after));
    }

    #[test]
    fn run_converges_monotonically_at_paper_target() {
        let ch = testdata::paper_channels();
        let cfg = IaaConfig::default();
        let trace = run(&ch, 6.2898, &cfg).unwrap();
        assert!(trace.converged, "expected convergence within 100 iterations");
        assert!(trace.iterations.len() <= 50);
        let mut prev = f64::NEG_INFINITY;
        for rec in &trace.iterations {
            assert!(rec.r1 >= prev - 1e-9, "R1 must be non-decreasing");
            prev = rec.r1;
        }
        let kps = KeyPointSet::compute(&ch).unwrap();
        assert!(trace.final_point.r1 <= kps.r1_bar + 1e-9);
        assert!((trace.final_point.r2 - 6.2898).abs() <= 1e-5 * 6.2898);
        assert!(trace.final_point.w1.full_power());
        assert!(trace.final_point.w2.full_power());
        // First iteration already improves on the initialization pair.
        let first = &trace.iterations[0];
        assert!(first.r1 > 0.0);
    }

    #[test]
    fn run_near_turning_points() {
        let ch = testdata::paper_channels();
        let kps = KeyPointSet::compute(&ch).unwrap();
        let cfg = IaaConfig::default();
        let span = kps.r2_bar - kps.r2_under;
        let near_t1 = run(&ch, kps.r2_under + 0.02 * span, &cfg).unwrap();
        assert!(near_t1.final_point.r1 >= kps.r1_bar - 0.15);
        let near_t2 = run(&ch, kps.r2_bar - 0.02 * span, &cfg).unwrap();
        assert!(near_t2.final_point.r1 <= kps.r1_bar);
        assert!(near_t2.final_point.r2 > kps.r2_bar - 0.1);
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let ch = testdata::paper_channels();
        let cfg = IaaConfig::default();
        let a = sweep(&ch, 5, &cfg).unwrap();
        let b = sweep(&ch, 5, &cfg).unwrap();
        assert_eq!(a.len(), 5);
        for (ta, tb) in a.iter().zip(&b) {
            let (ta, tb) = (ta.as_ref().unwrap(), tb.as_ref().unwrap());
            assert_eq!(ta.final_point.r1.to_bits(), tb.final_point.r1.to_bits());
            assert_eq!(ta.iterations.len(), tb.iterations.len());
        }
        let kps = KeyPointSet::compute(&ch).unwrap();
        let targets = sweep_targets(&kps, 5);
        for (trace, target) in a.iter().zip(targets) {
            assert!((trace.as_ref().unwrap().target_r2 - target).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_null_space_branch() {
        // The 2x3 cross channel always leaves a null direction.
        let ch = testdata::paper_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let scale = 0.3 + 0.6 * rng.gen::<f64>();
            let w1 = Beamformer::new(random_unit(&mut rng, 3).scale(scale)).unwrap();
            let w2 = Beamformer::unit(&random_unit(&mut rng, 3)).unwrap();
            let base1 = sinr(&ch, Link::Tx1, w1.vector(), w2.vector()).unwrap();
            let base2 = sinr(&ch, Link::Tx2, w1.vector(), w2.vector()).unwrap();
            let delta = perturbation(&ch, &w1, &w2).unwrap();
            let w1_new = w1.vector() + &delta;
            assert!(w1_new.norm_squared() <= 1.0 + 1e-12);
            assert!(w1_new.norm() > w1.vector().norm());
            let s1 = sinr(&ch, Link::Tx1, &w1_new, w2.vector()).unwrap();
            let s2 = sinr(&ch, Link::Tx2, &w1_new, w2.vector()).unwrap();
            assert!(s1 > base1, "strict gain required: {s1} vs {base1}");
            assert!((s2 - base2).abs() <= 1e-8 * (1.0 + base2));
            // Null-space branch keeps link 2 exactly unchanged.
            let leak = (ch.gain(Link::Tx1, Link::Tx2) * &delta).norm();
            assert!(leak <= 1e-10, "expected a null-space direction, leak {leak}");
        }
    }

    #[test]
    fn perturbation_full_rank_branch() {
        let ch = testdata::full_rank_cross_channels();
        assert_eq!(crate::linalg::rank(ch.gain(Link::Tx1, Link::Tx2)), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let scale = 0.3 + 0.6 * rng.gen::<f64>();
            let w1 = Beamformer::new(random_unit(&mut rng, 3).scale(scale)).unwrap();
            let w2 = Beamformer::unit(&random_unit(&mut rng, 3)).unwrap();
            let base1 = sinr(&ch, Link::Tx1, w1.vector(), w2.vector()).unwrap();
            let base2 = sinr(&ch, Link::Tx2, w1.vector(), w2.vector()).unwrap();
            let delta = perturbation(&ch, &w1, &w2).unwrap();
            let w1_new = w1.vector() + &delta;
            assert!(w1_new.norm_squared() <= 1.0 + 1e-12);
            assert!(w1_new.norm() > w1.vector().norm());
            let s1 = sinr(&ch, Link::Tx1, &w1_new, w2.vector()).unwrap();
            let s2 = sinr(&ch, Link::Tx2, &w1_new, w2.vector()).unwrap();
            assert!(s1 > base1);
            assert!((s2 - base2).abs() <= 1e-8 * (1.0 + base2));
        }
    }

    #[test]
    fn perturbation_rejects_full_power_input() {
        let ch = testdata::paper_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w1 = Beamformer::unit(&random_unit(&mut rng, 3)).unwrap();
        let w2 = Beamformer::unit(&random_unit(&mut rng, 3)).unwrap();
        assert!(perturbation(&ch, &w1, &w2).is_err());
    }

    #[test]
    fn run_rejects_out_of_range_targets() {
        let ch = testdata::paper_channels();
        let kps = KeyPointSet::compute(&ch).unwrap();
        let cfg = IaaConfig::default();
        assert!(run(&ch, kps.r2_bar + 0.5, &cfg).is_err());
        assert!(run(&ch, kps.r2_under - 0.5, &cfg).is_err());
    }
}
