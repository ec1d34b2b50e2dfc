//! Small dense complex-Hermitian SDP solver and the two problem builders
//! used by the alternating algorithm.
//!
//! Problems are trace-equality constrained programs over a Hermitian PSD
//! matrix variable, optionally coupled to one bounded real scalar:
//! `Tr(F_j X) − c_j·s = b_j`. The solver works on the real symmetric
//! embedding of dimension `2n` (with the scalar expressed through two 1x1
//! PSD slack blocks) using a primal-dual interior-point method with
//! Nesterov-Todd scaling and a Mehrotra predictor-corrector; see
//! [`solver`].

mod solver;

use crate::channel::{identity_scaled, ChannelSet, Link};
use crate::linalg::{
    eigh, eigh_unchecked, hermitize, is_hermitian, quad_form, trace_inner, CMat, CVec,
};
use crate::{Error, Result};

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// One trace-equality constraint `Tr(matrix · X) − scalar_coeff · s = rhs`.
///
/// `scalar_coeff` is ignored unless the problem carries a scalar variable.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub matrix: CMat,
    pub rhs: f64,
    pub scalar_coeff: f64,
}

/// Bounds of the optional coupled scalar variable.
#[derive(Debug, Clone, Copy)]
pub struct ScalarVar {
    pub lower: f64,
    pub upper: f64,
}

/// A canonical small Hermitian SDP.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub sense: Sense,
    pub objective: CMat,
    pub constraints: Vec<Constraint>,
    pub scalar: Option<ScalarVar>,
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Solution of an [`SdpProblem`].
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Hermitian PSD primal solution.
    pub x: CMat,
    /// Value of the coupled scalar, when the problem has one.
    pub scalar: Option<f64>,
    /// Objective value in the problem's own sense.
    pub objective_value: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Largest equality-constraint violation `|Tr(F_j X) − c_j s − b_j|`.
    pub primal_residual: f64,
    /// Smallest eigenvalue of `x` (may be slightly negative).
    pub psd_margin: f64,
    /// Complex-scale duality gap `⟨X, Z⟩` at termination.
    pub duality_gap: f64,
    /// How far the raw embedded solution was from the real/imaginary block
    /// symmetry of a complex-Hermitian embedding (diagnostic).
    pub embedding_asymmetry: f64,
}

/// Largest complex dimension accepted by [`solve`].
pub const MAX_DIM: usize = 16;

/// Convergence tolerance on residuals and relative gap.
pub const SOLVER_TOL: f64 = 1e-8;

/// Interior-point iteration cap.
pub const MAX_ITERS: usize = 200;

impl SdpProblem {
    pub fn dim(&self) -> usize {
        self.objective.nrows()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || n > MAX_DIM {
            return Err(Error::UnsupportedDimension(format!(
                "SDP dimension {n} outside 1..={MAX_DIM}"
            )));
        }
        if !is_hermitian(&self.objective, 1e-10) {
            return Err(Error::InvalidArgument("objective must be Hermitian".into()));
        }
        for (j, con) in self.constraints.iter().enumerate() {
            if con.matrix.nrows() != n || con.matrix.ncols() != n {
                return Err(Error::InvalidArgument(format!(
                    "constraint {j} has mismatched dimension"
                )));
            }
            if !is_hermitian(&con.matrix, 1e-10) {
                return Err(Error::InvalidArgument(format!(
                    "constraint {j} must be Hermitian"
                )));
            }
        }
        if let Some(s) = &self.scalar {
            if s.lower > s.upper {
                return Err(Error::InvalidArgument(format!(
                    "scalar bounds reversed: [{}, {}]",
                    s.lower, s.upper
                )));
            }
        }
        Ok(())
    }

    /// Plain-text canonical dump (dimension, row-major re/im pairs) for
    /// external cross-checking.
    pub fn canonical_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "sdp dim={} sense={} constraints={}",
            self.dim(),
            match self.sense {
                Sense::Maximize => "max",
                Sense::Minimize => "min",
            },
            self.constraints.len()
        );
        let dump = |out: &mut String, label: &str, m: &CMat| {
            let _ = write!(out, "{label}:");
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let z = m[(i, j)];
                    let _ = write!(out, " {:.17e} {:.17e}", z.re, z.im);
                }
            }
            let _ = writeln!(out);
        };
        dump(&mut out, "objective", &self.objective);
        for (j, con) in self.constraints.iter().enumerate() {
            let _ = writeln!(
                out,
                "constraint {j}: rhs={:.17e} scalar_coeff={:.17e}",
                con.rhs, con.scalar_coeff
            );
            dump(&mut out, "  matrix", &con.matrix);
        }
        if let Some(s) = &self.scalar {
            let _ = writeln!(out, "scalar in [{:.17e}, {:.17e}]", s.lower, s.upper);
        }
        out
    }
}

/// Solves the problem with the embedded-real interior-point kernel.
///
/// Infeasibility is reported through the status (certified by an
/// approximate dual ray when one is found); hitting the iteration cap
/// without such a certificate yields `NumericalFailure`.
pub fn solve(problem: &SdpProblem) -> Result<SdpSolution> {
    problem.validate()?;
    solver::solve_embedded(problem)
}

/// The Hermitian constraint matrix of the link-1 subproblem:
/// `C(w₂) = (H₁₂ᴴH₂₂w₂)(H₁₂ᴴH₂₂w₂)ᴴ − (w₂ᴴH₂₂ᴴH₂₂w₂ − σ₂²·SINR₂⋆)(σ₂²I + H₁₂ᴴH₁₂)`.
///
/// A unit-norm `w₁` satisfies the link-2 SINR equality iff
/// `w₁ᴴ C(w₂) w₁ = 0` (together with the energy condition checked by the
/// feasibility test).
pub fn p2_constraint_matrix(ch: &ChannelSet, w2: &CVec, sinr2_star: f64) -> CMat {
    let h12 = ch.gain(Link::Tx1, Link::Tx2);
    let h22 = ch.direct(Link::Tx2);
    let sigma2 = ch.noise(Link::Tx2);
    let d = h12.adjoint() * (h22 * w2);
    let energy = (h22 * w2).norm_squared();
    let shift = energy - sigma2 * sinr2_star;
    let reg = identity_scaled(ch.num_tx_antennas(), sigma2) + h12.adjoint() * h12;
    hermitize(&(&d * d.adjoint() - reg.scale(shift)))
}

/// Received signal energy `w₂ᴴH₂₂ᴴH₂₂w₂` of link 2.
pub fn link2_signal_energy(ch: &ChannelSet, w2: &CVec) -> f64 {
    (ch.direct(Link::Tx2) * w2).norm_squared()
}

/// Builds the link-1 subproblem: maximize `Tr(A₁(w₂) W₁)` subject to
/// `Tr(C(w₂) W₁) = 0`, `Tr(W₁) = 1`, `W₁ ⪰ 0`.
///
/// Errors with `InfeasibleTarget` when the energy condition
/// `w₂ᴴH₂₂ᴴH₂₂w₂ ≥ σ₂²·SINR₂⋆` fails, since no `w₁` can then meet the
/// SINR equality.
pub fn build_p2(ch: &ChannelSet, w2: &CVec, sinr2_star: f64) -> Result<SdpProblem> {
    let nt = ch.num_tx_antennas();
    if w2.len() != nt {
        return Err(Error::InvalidArgument("w2 has wrong length".into()));
    }
    let energy = link2_signal_energy(ch, w2);
    let needed = ch.noise(Link::Tx2) * sinr2_star;
    if energy < needed - 1e-9 * (1.0 + needed) {
        return Err(Error::InfeasibleTarget(format!(
            "link-2 signal energy {energy} below required {needed}"
        )));
    }
    let objective = crate::channel::effective_channel(ch, Link::Tx1, w2)?;
    let c = p2_constraint_matrix(ch, w2, sinr2_star);
    Ok(SdpProblem {
        sense: Sense::Maximize,
        objective,
        constraints: vec![
            Constraint {
                matrix: c,
                rhs: 0.0,
                scalar_coeff: 0.0,
            },
            Constraint {
                matrix: CMat::identity(nt, nt),
                rhs: 1.0,
                scalar_coeff: 0.0,
            },
        ],
        scalar: None,
    })
}

/// The rank-one interference matrix `C₁(w₁) = (H₂₁ᴴH₁₁w₁)(H₂₁ᴴH₁₁w₁)ᴴ`.
pub fn p5_interference_matrix(ch: &ChannelSet, w1: &CVec) -> CMat {
    let g = ch.gain(Link::Tx2, Link::Tx1).adjoint() * (ch.direct(Link::Tx1) * w1);
    hermitize(&(&g * g.adjoint()))
}

/// The denominator matrix `C₂ = σ₁²I + H₂₁ᴴH₂₁` of the fractional
/// objective.
pub fn p5_denominator_matrix(ch: &ChannelSet) -> CMat {
    let h21 = ch.gain(Link::Tx2, Link::Tx1);
    hermitize(&(identity_scaled(ch.num_tx_antennas(), ch.noise(Link::Tx1)) + h21.adjoint() * h21))
}

/// Builds the link-2 subproblem after the fractional lifting: minimize
/// `Tr(C₁(w₁) Q)` subject to `Tr(A₂(w₁) Q) = s·SINR₂⋆`, `Tr(C₂ Q) = 1`,
/// `Tr(Q) = s`, `Q ⪰ 0`, with `s` bounded by the reciprocal extreme
/// eigenvalues of `C₂`.
pub fn build_p5(ch: &ChannelSet, w1: &CVec, sinr2_star: f64) -> Result<SdpProblem> {
    let nt = ch.num_tx_antennas();
    if w1.len() != nt {
        return Err(Error::InvalidArgument("w1 has wrong length".into()));
    }
    if (w1.norm_squared() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(
            "the link-2 subproblem expects a full-power w1".into(),
        ));
    }
    let c1 = p5_interference_matrix(ch, w1);
    let c2 = p5_denominator_matrix(ch);
    let a2 = crate::channel::effective_channel(ch, Link::Tx2, w1)?;
    let e2 = eigh(&c2)?;
    let scalar = ScalarVar {
        lower: 1.0 / e2.value(0),
        upper: 1.0 / e2.min_value(),
    };
    Ok(SdpProblem {
        sense: Sense::Minimize,
        objective: c1,
        constraints: vec![
            Constraint {
                matrix: a2,
                rhs: 0.0,
                scalar_coeff: sinr2_star,
            },
            Constraint {
                matrix: c2,
                rhs: 1.0,
                scalar_coeff: 0.0,
            },
            Constraint {
                matrix: CMat::identity(nt, nt),
                rhs: 0.0,
                scalar_coeff: 1.0,
            },
        ],
        scalar: Some(scalar),
    })
}

/// Undoes the fractional lifting: `W₂⋆ = Q⋆ / s⋆`.
pub fn w2_matrix_from_p5(sol: &SdpSolution) -> Result<CMat> {
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(
            "cannot extract W2 from a non-optimal solution".into(),
        ));
    }
    let s = sol
        .scalar
        .ok_or_else(|| Error::InvalidArgument("solution carries no scalar".into()))?;
    if s <= 1e-12 {
        return Err(Error::NumericalFailure(format!(
            "lifting scalar {s} not strictly positive"
        )));
    }
    Ok(sol.x.unscale(s))
}

/// Real part of `Tr(F X)` for Hermitian arguments.
pub fn trace_value(f: &CMat, x: &CMat) -> f64 {
    trace_inner(f, x)
}

/// Numerical rank of a PSD matrix with the given relative eigenvalue
/// cutoff.
pub fn psd_rank(x: &CMat, rel_tol: f64) -> usize {
    let e = eigh_unchecked(x);
    let top = e.value(0).max(0.0);
    e.values.iter().filter(|&&v| v > rel_tol * top).count()
}

#[allow(unused)]
pub(crate) fn rayleigh(f: &CMat, v: &CVec) -> f64 {
    quad_form(f, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{effective_channel, sinr, sinr_from_rate};
    use crate::linalg::{c, cr, frob};
    use crate::testdata;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let m = CMat::from_fn(n, n, |_, _| {
            c(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
        });
        hermitize(&m)
    }

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
    fn max_trace_on_simplex_is_top_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for n in 2..=4 {
            let a = random_hermitian(&mut rng, n);
            let p = SdpProblem {
                sense: Sense::Maximize,
                objective: a.clone(),
                constraints: vec![Constraint {
                    matrix: CMat::identity(n, n),
                    rhs: 1.0,
                    scalar_coeff: 0.0,
                }],
                scalar: None,
            };
            let sol = solve(&p).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal, "n={n}");
            let e = eigh(&a).unwrap();
            assert!(
                (sol.objective_value - e.value(0)).abs() <= 1e-7 * (1.0 + e.value(0).abs()),
                "n={n}: {} vs {}",
                sol.objective_value,
                e.value(0)
            );
            // Simple top eigenvalue: X is the rank-one projector.
            if e.value(0) - e.value(1) > 1e-6 {
                let u = e.vector(0);
                let diff = frob(&(&sol.x - &u * u.adjoint()));
                assert!(diff < 1e-5, "n={n} diff={diff}");
            }
        }
    }

    #[test]
    fn min_trace_on_simplex_is_bottom_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let a = random_hermitian(&mut rng, 3);
        let p = SdpProblem {
            sense: Sense::Minimize,
            objective: a.clone(),
            constraints: vec![Constraint {
                matrix: CMat::identity(3, 3),
                rhs: 1.0,
                scalar_coeff: 0.0,
            }],
            scalar: None,
        };
        let sol = solve(&p).unwrap();
        let e = eigh(&a).unwrap();
        assert!((sol.objective_value - e.min_value()).abs() <= 1e-7 * (1.0 + e.min_value().abs()));
    }

    #[test]
    fn inconsistent_traces_reported_infeasible() {
        let p = SdpProblem {
            sense: Sense::Maximize,
            objective: CMat::identity(3, 3),
            constraints: vec![
                Constraint {
                    matrix: CMat::identity(3, 3),
                    rhs: 1.0,
                    scalar_coeff: 0.0,
                },
                Constraint {
                    matrix: CMat::identity(3, 3),
                    rhs: 2.0,
                    scalar_coeff: 0.0,
                },
            ],
            scalar: None,
        };
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn negative_definite_trace_zero_is_infeasible() {
        // Tr(CX) = 0 with C strictly negative definite and Tr(X) = 1 has no
        // PSD solution.
        let p = SdpProblem {
            sense: Sense::Maximize,
            objective: CMat::identity(2, 2),
            constraints: vec![
                Constraint {
                    matrix: CMat::identity(2, 2).scale(-1.0),
                    rhs: 0.0,
                    scalar_coeff: 0.0,
                },
                Constraint {
                    matrix: CMat::identity(2, 2),
                    rhs: 1.0,
                    scalar_coeff: 0.0,
                },
            ],
            scalar: None,
        };
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn solver_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        let a = random_hermitian(&mut rng, 4);
        let p = SdpProblem {
            sense: Sense::Maximize,
            objective: a,
            constraints: vec![Constraint {
                matrix: CMat::identity(4, 4),
                rhs: 1.0,
                scalar_coeff: 0.0,
            }],
            scalar: None,
        };
        let s1 = solve(&p).unwrap();
        let s2 = solve(&p).unwrap();
        assert_eq!(s1.iterations, s2.iterations);
        assert_eq!(s1.objective_value.to_bits(), s2.objective_value.to_bits());
    }

    #[test]
    fn p2_constraint_feasible_pair_consistency() {
        // For any unit pair, setting the target to the achieved SINR2 makes
        // W1 = w1 w1^H feasible for the built problem.
        let ch = testdata::paper_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(400);
        for _ in 0..10 {
            let w1 = random_unit(&mut rng, 3);
            let w2 = random_unit(&mut rng, 3);
            let target = sinr(&ch, Link::Tx2, &w1, &w2).unwrap();
            let p = build_p2(&ch, &w2, target).unwrap();
            let w1_mat = &w1 * w1.adjoint();
            let c_res = trace_value(&p.constraints[0].matrix, &w1_mat);
            let t_res = trace_value(&p.constraints[1].matrix, &w1_mat) - 1.0;
            let scale = frob(&p.constraints[0].matrix);
            assert!(c_res.abs() <= 1e-9 * scale.max(1.0), "c residual {c_res}");
            assert!(t_res.abs() <= 1e-12);
        }
    }

    #[test]
    fn p2_rejects_unreachable_energy() {
        let ch = testdata::paper_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(401);
        let w2 = random_unit(&mut rng, 3);
        let energy = link2_signal_energy(&ch, &w2);
        let too_high = (energy / ch.noise(Link::Tx2)) * 1.5;
        assert!(matches!(
            build_p2(&ch, &w2, too_high),
            Err(Error::InfeasibleTarget(_))
        ));
    }

    #[test]
    fn p2_decoupled_cross_channel_gives_definite_constraint() {
        // With H12 = 0 and energy strictly above the target the constraint
        // matrix is negative definite and the problem is infeasible.
        let ch = testdata::interference_free_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(402);
        let w2 = random_unit(&mut rng, 3);
        let energy = link2_signal_energy(&ch, &w2);
        let target = 0.5 * energy / ch.noise(Link::Tx2);
        let cmat = p2_constraint_matrix(&ch, &w2, target);
        let e = eigh(&cmat).unwrap();
        assert!(e.value(0) < 0.0, "expected negative definite");
        let sol = solve(&build_p2(&ch, &w2, target).unwrap()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        // At the exactly achieved target the constraint matrix vanishes and
        // the problem becomes the plain eigenvalue SDP.
        let exact = energy / ch.noise(Link::Tx2);
        let czero = p2_constraint_matrix(&ch, &w2, exact);
        assert!(frob(&czero) <= 1e-9 * (1.0 + energy));
        let sol = solve(&build_p2(&ch, &w2, exact).unwrap()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let a1 = effective_channel(&ch, Link::Tx1, &w2).unwrap();
        let top = eigh(&a1).unwrap().value(0);
        assert!((sol.objective_value - top).abs() <= 1e-6 * (1.0 + top));
    }

    #[test]
    fn p2_solves_at_paper_operating_point() {
        let ch = testdata::paper_channels();
        let kps = crate::keypoints::KeyPointSet::compute(&ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = crate::keypoints::initial_w2(&ch, &kps, 6.2898, 10, &mut rng).unwrap();
        let target = sinr_from_rate(6.2898);
        let sol = solve(&build_p2(&ch, init.w2.vector(), target).unwrap()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.primal_residual <= 1e-7 * (1.0 + target));
        assert!(sol.psd_margin >= -1e-8);
        assert!(sol.embedding_asymmetry <= 1e-8);
    }

    #[test]
    fn p2_sphere_grid_oracle_small() {
        // Constrained brute force over the unit sphere: combine straddling
        // sample pairs into exact members of {w : w^H C w = 0} and maximize
        // the objective there.
        let ch = testdata::paper_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        for trial in 0..8 {
            let w2 = random_unit(&mut rng, 3);
            let margin = 0.1 + 0.1 * trial as f64;
            let target = margin * link2_signal_energy(&ch, &w2) / ch.noise(Link::Tx2);
            let p = build_p2(&ch, &w2, target).unwrap();
            let sol = solve(&p).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal);
            let best = constrained_sphere_maximum(
                &p.objective,
                &p.constraints[0].matrix,
                200_000,
                &mut rng,
            );
            assert!(
                (sol.objective_value - best).abs() <= 1e-4 * (1.0 + best),
                "trial {trial}: sdp {} vs oracle {best}",
                sol.objective_value
            );
        }
    }

    /// Brute-force maximum of `w^H A w` over unit `w` with `w^H C w = 0`.
    ///
    /// Every sample is exactly feasible: a random unit vector from the
    /// positive eigenspace of `C` and one from the nonpositive eigenspace
    /// are mixed with the (deterministic) amplitude that annihilates the
    /// quadratic form. Independent of the interior-point path.
    pub(crate) fn constrained_sphere_maximum(
        a: &CMat,
        cmat: &CMat,
        samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let n = a.nrows();
        let e = eigh(cmat).expect("constraint matrix must be Hermitian");
        // Near-zero eigenvalues are grouped with the nonpositive side so
        // null-space mixtures stay reachable.
        let tau = 1e-12 * e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pos_idx: Vec<usize> = (0..n).filter(|&i| e.values[i] > tau).collect();
        let non_pos: Vec<usize> = (0..n).filter(|&i| e.values[i] <= tau).collect();
        if pos_idx.is_empty() {
            // Form is negative semidefinite: the feasible set is its kernel.
            let null_idx: Vec<usize> =
                (0..n).filter(|&i| e.values[i].abs() <= tau).collect();
            assert!(!null_idx.is_empty(), "definite constraint: infeasible");
            let mut best = f64::NEG_INFINITY;
            let mut rng2 = ChaCha8Rng::seed_from_u64(rng.gen());
            for _ in 0..samples / 10 {
                let mut v = CVec::zeros(n);
                for &i in &null_idx {
                    let coeff =
                        c(rng2.gen::<f64>() * 2.0 - 1.0, rng2.gen::<f64>() * 2.0 - 1.0);
                    v += e.vector(i).map(|z| z * coeff);
                }
                if v.norm() > 1e-9 {
                    best = best.max(quad_form(a, &v.unscale(v.norm())));
                }
            }
            return best;
        }
        assert!(
            !non_pos.is_empty(),
            "positive definite constraint: infeasible"
        );
        let sub_unit = |idx: &[usize], rng: &mut ChaCha8Rng| -> (CVec, f64) {
            loop {
                let mut v = CVec::zeros(n);
                let mut val = 0.0;
                let mut norm_sq = 0.0;
                for &i in idx {
                    let coeff = c(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
                    v += e.vector(i).map(|z| z * coeff);
                    val += e.values[i] * coeff.norm_sqr();
                    norm_sq += coeff.norm_sqr();
                }
                if norm_sq > 1e-9 {
                    return (v.unscale(norm_sq.sqrt()), val / norm_sq);
                }
            }
        };
        let feasible_mix = |vp: &CVec, qp: f64, vn: &CVec, qn: f64| -> Option<CVec> {
            if qp <= 1e-300 {
                return None;
            }
            if qn >= 0.0 {
                return Some(vn.clone());
            }
            // cos²α·qp + sin²α·qn = 0 with qp > 0 > qn.
            let tan_sq = qp / (-qn);
            let sin_a = (tan_sq / (1.0 + tan_sq)).sqrt();
            let cos_a = (1.0 / (1.0 + tan_sq)).sqrt();
            Some(vp.scale(cos_a) + vn.scale(sin_a))
        };
        let mut best = f64::NEG_INFINITY;
        let mut best_pair: Option<(CVec, CVec)> = None;
        let global_draws = samples * 2 / 3;
        for _ in 0..global_draws {
            let (vp, qp) = sub_unit(&pos_idx, rng);
            let (vn, qn) = sub_unit(&non_pos, rng);
            if let Some(w) = feasible_mix(&vp, qp, &vn, qn) {
                let val = quad_form(a, &w);
                if val > best {
                    best = val;
                    best_pair = Some((vp, vn));
                }
            }
        }
        // Local polish: shrinking random perturbations of the best
        // subspace pair; keeps every candidate exactly feasible.
        if let Some((mut bp, mut bn)) = best_pair {
            let mut radius = 0.5f64;
            let rounds = 60usize;
            let per_round = (samples / 3 / rounds).max(20);
            let eval_c = |v: &CVec| -> f64 { quad_form(cmat, v) };
            for _ in 0..rounds {
                for _ in 0..per_round {
                    let jitter = |base: &CVec, rng: &mut ChaCha8Rng| -> CVec {
                        let mut v = base.clone();
                        for k in 0..n {
                            v[k] += c(
                                radius * (rng.gen::<f64>() * 2.0 - 1.0),
                                radius * (rng.gen::<f64>() * 2.0 - 1.0),
                            );
                        }
                        v
                    };
                    // Perturb, then project back inside each eigen-subspace.
                    let project = |v: &CVec, idx: &[usize]| -> Option<(CVec, f64)> {
                        let mut acc = CVec::zeros(n);
                        let mut val = 0.0;
                        let mut norm_sq = 0.0;
                        for &i in idx {
                            let coeff = (e.vector(i).adjoint() * v)[(0, 0)];
                            acc += e.vector(i).map(|z| z * coeff);
                            val += e.values[i] * coeff.norm_sqr();
                            norm_sq += coeff.norm_sqr();
                        }
                        if norm_sq < 1e-12 {
                            return None;
                        }
                        Some((acc.unscale(norm_sq.sqrt()), val / norm_sq))
                    };
                    let vp_raw = jitter(&bp, rng);
                    let vn_raw = jitter(&bn, rng);
                    let (Some((vp, qp)), Some((vn, qn))) =
                        (project(&vp_raw, &pos_idx), project(&vn_raw, &non_pos))
                    else {
                        continue;
                    };
                    if let Some(w) = feasible_mix(&vp, qp, &vn, qn) {
                        debug_assert!(eval_c(&w).abs() <= 1e-7 * frob(cmat));
                        let val = quad_form(a, &w);
                        if val > best {
                            best = val;
                            bp = vp;
                            bn = vn;
                        }
                    }
                }
                radius *= 0.75;
            }
        }
        best
    }

    #[test]
    fn p5_structure_and_bounds() {
        let ch = testdata::paper_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(600);
        let w1 = random_unit(&mut rng, 3);
        let p = build_p5(&ch, &w1, 10.0).unwrap();
        // Rank-one numerator by construction.
        assert_eq!(psd_rank(&p.objective, 1e-10), 1);
        let c2 = p5_denominator_matrix(&ch);
        let e = eigh(&c2).unwrap();
        let s = p.scalar.unwrap();
        assert!((s.lower - 1.0 / e.value(0)).abs() < 1e-12);
        assert!((s.upper - 1.0 / e.min_value()).abs() < 1e-12);
        assert!(build_p5(&ch, &w1.scale(0.5), 10.0).is_err());
    }

    #[test]
    fn p5_zero_cross_channel_opt_value_zero() {
        // H21 = 0 makes the interference numerator vanish identically.
        let ch = testdata::interference_free_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(601);
        let w1 = random_unit(&mut rng, 3);
        // Pick an achievable target for link 2 under w1.
        let w2 = random_unit(&mut rng, 3);
        let target = sinr(&ch, Link::Tx2, &w1, &w2).unwrap();
        let p = build_p5(&ch, &w1, target).unwrap();
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.objective_value.abs() <= 1e-7);
    }

    #[test]
    fn p5_matches_fractional_value_and_w2_extraction() {
        let ch = testdata::paper_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(602);
        for _ in 0..5 {
            let w1 = random_unit(&mut rng, 3);
            let w2_probe = random_unit(&mut rng, 3);
            let target = sinr(&ch, Link::Tx2, &w1, &w2_probe).unwrap();
            let p = build_p5(&ch, &w1, target).unwrap();
            let sol = solve(&p).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal);
            let w2_mat = w2_matrix_from_p5(&sol).unwrap();
            // Unit trace and SINR equality of the unlifted matrix.
            let tr = trace_value(&CMat::identity(3, 3), &w2_mat);
            assert!((tr - 1.0).abs() <= 1e-7, "trace {tr}");
            let a2 = effective_channel(&ch, Link::Tx2, &w1).unwrap();
            let achieved = trace_value(&a2, &w2_mat);
            assert!(
                (achieved - target).abs() <= 1e-6 * (1.0 + target),
                "sinr constraint {achieved} vs {target}"
            );
            // Fractional objective equals the lifted optimum.
            let c1 = p5_interference_matrix(&ch, &w1);
            let c2 = p5_denominator_matrix(&ch);
            let frac = trace_value(&c1, &w2_mat) / trace_value(&c2, &w2_mat);
            assert!(
                (frac - sol.objective_value).abs() <= 1e-6 * (1.0 + sol.objective_value.abs()),
                "fractional {frac} vs lifted {}",
                sol.objective_value
            );
        }
    }

    #[test]
    fn p5_denominator_rescaling_leaves_w2_invariant() {
        // The target sits strictly between the zero-interference ceiling
        // and the unconstrained maximum for this w1, so the problem is
        // feasible with a strictly positive (hence unique) optimum.
        let ch = testdata::paper_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w1 = random_unit(&mut rng, 3);
        let a2 = effective_channel(&ch, Link::Tx2, &w1).unwrap();
        let x = ch.gain(Link::Tx2, Link::Tx1).adjoint() * (ch.direct(Link::Tx1) * &w1);
        let x_mat = CMat::from_columns(&[x]);
        let (_, p_perp) = crate::linalg::orth_projectors(&x_mat);
        let restricted = hermitize(&(&p_perp * &a2 * &p_perp));
        let ceiling = crate::linalg::generalized_eigh(&restricted, &p_perp)
            .unwrap()
            .finite
            .values[0];
        let top = eigh(&a2).unwrap().value(0);
        assert!(top > ceiling * 1.05, "needs a wide feasible band");
        let target = 0.5 * (ceiling + top);
        let p = build_p5(&ch, &w1, target).unwrap();
        let sol = solve(&p).unwrap();
        let w2_base = w2_matrix_from_p5(&sol).unwrap();

        let t = 3.7;
        let mut scaled = p.clone();
        scaled.constraints[1].matrix = scaled.constraints[1].matrix.scale(t);
        let bounds = scaled.scalar.unwrap();
        scaled.scalar = Some(ScalarVar {
            lower: bounds.lower / t,
            upper: bounds.upper / t,
        });
        let sol_t = solve(&scaled).unwrap();
        assert_eq!(sol_t.status, SdpStatus::Optimal);
        assert!(
            (sol_t.scalar.unwrap() - sol.scalar.unwrap() / t).abs()
                <= 1e-6 * (1.0 + sol.scalar.unwrap().abs()),
            "scalar should rescale by 1/t"
        );
        let w2_t = w2_matrix_from_p5(&sol_t).unwrap();
        assert!(frob(&(&w2_t - &w2_base)) <= 1e-7 * (1.0 + frob(&w2_base)) * 10.0);
    }

    #[test]
    fn w2_matrix_guards() {
        let sol = SdpSolution {
            x: CMat::identity(2, 2),
            scalar: Some(1.0),
            objective_value: 0.0,
            status: SdpStatus::Optimal,
            iterations: 0,
            primal_residual: 0.0,
            psd_margin: 0.0,
            duality_gap: 0.0,
            embedding_asymmetry: 0.0,
        };
        assert!(w2_matrix_from_p5(&sol).is_ok());
        let mut tiny = sol.clone();
        tiny.scalar = Some(0.0);
        assert!(w2_matrix_from_p5(&tiny).is_err());
        let mut failed = sol;
        failed.status = SdpStatus::NumericalFailure;
        assert!(w2_matrix_from_p5(&failed).is_err());
    }


    #[test]
    fn canonical_dump_contains_dimensions() {
        let p = SdpProblem {
            sense: Sense::Maximize,
            objective: CMat::identity(2, 2),
            constraints: vec![Constraint {
                matrix: CMat::identity(2, 2),
                rhs: 1.0,
                scalar_coeff: 0.0,
            }],
            scalar: None,
        };
        let text = p.canonical_text();
        assert!(text.contains("dim=2"));
        assert!(text.contains("constraint 0"));
    }
}
