//! Closed-form key points of the rate region and the beamformer
//! parameterizations used to initialize the alternating algorithm.
//!
//! The single-user points and turning points are exact. The weak boundary
//! (one user pinned at its maximum rate) is swept by scaling the other
//! user's zero-interference beamformer. Zero-forcing points come from the
//! generalized pencil that aligns the two cross-talk image vectors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    effective_channel, rate_from_sinr, rate_pair, sinr_from_rate, Beamformer, ChannelSet, Link,
    RatePoint,
};
use crate::linalg::{
    self, eigh, generalized_eigh, hermitize, orth_projectors, pencil_eigenpairs,
    unit_phase_fixed, CMat, CVec, C64,
};
use crate::{Error, Result};

/// Closed-form key points: single-user points, turning points, the extreme
/// rates of both users, and the pure strategies behind them.
#[derive(Debug, Clone)]
pub struct KeyPointSet {
    /// Single-user point of link 1: `(R̄₁, 0)`.
    pub su1: RatePoint,
    /// Single-user point of link 2: `(0, R̄₂)`.
    pub su2: RatePoint,
    /// Turning point `T1 = (R̄₁, R̲₂)`.
    pub t1: RatePoint,
    /// Turning point `T2 = (R̲₁, R̄₂)`.
    pub t2: RatePoint,
    pub r1_bar: f64,
    pub r2_bar: f64,
    pub r1_under: f64,
    pub r2_under: f64,
    w_ego1: Beamformer,
    w_ego2: Beamformer,
    w_alt1: Beamformer,
    w_alt2: Beamformer,
}

impl KeyPointSet {
    pub fn compute(ch: &ChannelSet) -> Result<Self> {
        let (w_ego1, r1_bar) = egoistic(ch, Link::Tx1)?;
        let (w_ego2, r2_bar) = egoistic(ch, Link::Tx2)?;
        let w_alt1 = altruistic(ch, Link::Tx1)?;
        let w_alt2 = altruistic(ch, Link::Tx2)?;
        let nt = ch.num_tx_antennas();
        let su1 = rate_pair(ch, &w_ego1, &Beamformer::zero(nt))?;
        let su2 = rate_pair(ch, &Beamformer::zero(nt), &w_ego2)?;
        let t1 = rate_pair(ch, &w_ego1, &w_alt2)?;
        let t2 = rate_pair(ch, &w_alt1, &w_ego2)?;
        Ok(Self {
            r1_under: t2.r1,
            r2_under: t1.r2,
            su1,
            su2,
            t1,
            t2,
            r1_bar,
            r2_bar,
            w_ego1,
            w_ego2,
            w_alt1,
            w_alt2,
        })
    }

    /// Own-rate-maximizing strategy of a link.
    pub fn egoistic(&self, link: Link) -> &Beamformer {
        match link {
            Link::Tx1 => &self.w_ego1,
            Link::Tx2 => &self.w_ego2,
        }
    }

    /// Zero-interference rate-maximizing strategy of a link.
    pub fn altruistic(&self, link: Link) -> &Beamformer {
        match link {
            Link::Tx1 => &self.w_alt1,
            Link::Tx2 => &self.w_alt2,
        }
    }

    pub fn r_bar(&self, link: Link) -> f64 {
        match link {
            Link::Tx1 => self.r1_bar,
            Link::Tx2 => self.r2_bar,
        }
    }

    pub fn r_under(&self, link: Link) -> f64 {
        match link {
            Link::Tx1 => self.r1_under,
            Link::Tx2 => self.r2_under,
        }
    }
}

/// Egoistic strategy and the single-user maximum rate of a link:
/// the top eigenpair of `H_iiᴴH_ii` gives `w_i` and
/// `R̄_i = log₂(1 + λ₁/σ_i²)`.
pub fn egoistic(ch: &ChannelSet, link: Link) -> Result<(Beamformer, f64)> {
    let h = ch.direct(link);
    let gram = hermitize(&(h.adjoint() * h));
    let e = eigh(&gram)?;
    let lam = e.value(0);
    if lam <= 1e-300 {
        return Err(Error::InvalidArgument(format!(
            "link {} has a zero direct channel",
            link.index()
        )));
    }
    let w = Beamformer::unit(&e.vector(0))?;
    Ok((w, rate_from_sinr(lam / ch.noise(link))))
}

/// Cross-talk image vector whose null space the altruistic strategy of
/// `link` must live in: `H_kiᴴ H_ii w_i^Ego` for the other link `i`.
fn altruism_constraint_vector(ch: &ChannelSet, link: Link) -> Result<CVec> {
    let victim = link.other();
    let (w_ego_victim, _) = egoistic(ch, victim)?;
    // Channel from `link` into the victim receiver, composed with the
    // victim's own signal direction.
    let h_cross = ch.gain(link, victim);
    let h_direct = ch.direct(victim);
    Ok(h_cross.adjoint() * (h_direct * w_ego_victim.vector()))
}

/// Altruistic strategy of a link: creates zero interference at the other
/// receiver (whose transmitter is egoistic) while maximizing its own rate.
///
/// Computed as the direction of `Π^⊥ u₁(B, Π^⊥)` where `Π^⊥` projects on
/// the orthogonal complement of the cross-talk image vector and
/// `B = Π^⊥ A_i(w_k^Ego) Π^⊥`. If the cross-talk constraint is vacuous
/// (zero image vector) the egoistic strategy is already non-interfering and
/// is returned unchanged.
pub fn altruistic(ch: &ChannelSet, link: Link) -> Result<Beamformer> {
    let x = altruism_constraint_vector(ch, link)?;
    let scale =
        linalg::frob(ch.gain(link, link.other())) * linalg::frob(ch.direct(link.other()));
    if x.norm() <= 1e-12 * scale.max(1e-300) {
        return Ok(egoistic(ch, link)?.0);
    }
    let x_mat = CMat::from_columns(&[x]);
    let (_, p_perp) = orth_projectors(&x_mat);
    let (w_ego_other, _) = egoistic(ch, link.other())?;
    let a_own = effective_channel(ch, link, w_ego_other.vector())?;
    let b = hermitize(&(&p_perp * a_own * &p_perp));
    let g = generalized_eigh(&b, &p_perp)?;
    if g.finite.values.is_empty() {
        return Err(Error::DegenerateInput(
            "altruistic: empty orthogonal complement".into(),
        ));
    }
    let top = g.finite.vector(0);
    Beamformer::unit(&(&p_perp * top))
}

/// Turning point of the boundary: `which = 1` gives `T1 = (R̄₁, R̲₂)`
/// achieved by the egoistic strategy on link 1 and the altruistic strategy
/// on link 2; `which = 2` is the index-interchanged point.
pub fn turning_point(ch: &ChannelSet, which: Link) -> Result<RatePoint> {
    let (w_ego, _) = egoistic(ch, which)?;
    let w_alt = altruistic(ch, which.other())?;
    match which {
        Link::Tx1 => rate_pair(ch, &w_ego, &w_alt),
        Link::Tx2 => rate_pair(ch, &w_alt, &w_ego),
    }
}

/// Weak-boundary sweep for the segment on which link `which` scales power.
///
/// Samples `γ` uniformly on `[0, 1]`: link `which` transmits `√γ·w^Alt`
/// (still interference-free at any power), the other link stays egoistic.
/// `γ = 0` is the single-user point of the other link, `γ = 1` the turning
/// point. Rates are recomputed exactly from the beamformers.
pub fn weak_boundary(ch: &ChannelSet, which: Link, n_samples: usize) -> Result<Vec<RatePoint>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(
            "weak boundary needs at least 2 samples".into(),
        ));
    }
    let w_alt = altruistic(ch, which)?;
    let (w_ego_other, _) = egoistic(ch, which.other())?;
    let mut out = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let gamma = k as f64 / (n_samples - 1) as f64;
        let scaled = w_alt.scaled(gamma.sqrt())?;
        let point = match which {
            Link::Tx1 => rate_pair(ch, &scaled, &w_ego_other)?,
            Link::Tx2 => rate_pair(ch, &w_ego_other, &scaled)?,
        };
        out.push(point);
    }
    Ok(out)
}

/// One zero-forcing operating point plus its diagnostics.
#[derive(Debug, Clone)]
pub struct ZfPoint {
    pub point: RatePoint,
    /// Residual of the pencil parallelism condition for the `w1` used.
    pub pencil_residual: f64,
    /// Interference-free rate of link 2 for each complement basis vector,
    /// descending; the reported point uses the best.
    pub basis_rates: Vec<f64>,
}

/// Zero-forcing points: both cross-talk links carry zero interference.
///
/// `w1` ranges over the eigenvectors of the pencil
/// `H₂₂ᴴH₁₂ w = λ H₂₁ᴴH₁₁ w` (which makes the two cross-talk image vectors
/// parallel), and `w2` maximizes link 2's interference-free rate inside the
/// orthogonal complement of the image vector. With zero cross channels the
/// single point `(R̄₁, R̄₂)` is returned. A degenerate pencil yields an
/// error; eigenvectors whose parallelism residual exceeds `1e-8` are
/// dropped, possibly leaving an empty list.
pub fn zf_points(ch: &ChannelSet) -> Result<Vec<ZfPoint>> {
    let h11 = ch.direct(Link::Tx1);
    let h22 = ch.direct(Link::Tx2);
    let h12 = ch.gain(Link::Tx1, Link::Tx2);
    let h21 = ch.gain(Link::Tx2, Link::Tx1);
    let a = h22.adjoint() * h12;
    let b = h21.adjoint() * h11;
    let cross_scale = linalg::frob(&a).max(linalg::frob(&b));
    if cross_scale <= 1e-300 {
        // No cross-talk at all: both egoistic strategies are zero-forcing.
        let (w1, _) = egoistic(ch, Link::Tx1)?;
        let (w2, _) = egoistic(ch, Link::Tx2)?;
        return Ok(vec![ZfPoint {
            point: rate_pair(ch, &w1, &w2)?,
            pencil_residual: 0.0,
            basis_rates: vec![],
        }]);
    }
    let pairs = pencil_eigenpairs(&a, &b)?;
    let mut out = Vec::new();
    for (lam, w1_dir) in pairs {
        let w1 = Beamformer::unit(&w1_dir)?;
        let img_rx1 = &b * w1.vector();
        let img_rx2 = &a * w1.vector();
        let residual = (&img_rx2 - img_rx1.map(|z| z * lam)).norm();
        if residual > 1e-8 * cross_scale * (1.0 + lam.norm()) {
            continue;
        }
        // Collect the (parallel) nonzero constraint images for w2.
        let mut constraints: Vec<CVec> = Vec::new();
        for v in [&img_rx1, &img_rx2] {
            if v.norm() > 1e-10 * cross_scale {
                constraints.push(v.clone());
            }
        }
        let (w2, basis_rates) = best_zf_w2(ch, &constraints)?;
        let point = rate_pair(ch, &w1, &w2)?;
        out.push(ZfPoint {
            point,
            pencil_residual: residual,
            basis_rates,
        });
    }
    Ok(out)
}

/// Maximizes link 2's interference-free rate over the orthogonal complement
/// of the given constraint vectors. Returns the winning beamformer and the
/// rates of every complement basis direction (diagnostics).
fn best_zf_w2(ch: &ChannelSet, constraints: &[CVec]) -> Result<(Beamformer, Vec<f64>)> {
    let nt = ch.num_tx_antennas();
    let h22 = ch.direct(Link::Tx2);
    let gram22 = hermitize(&(h22.adjoint() * h22));
    let sigma2 = ch.noise(Link::Tx2);
    let p_perp = if constraints.is_empty() {
        CMat::identity(nt, nt)
    } else {
        let x = CMat::from_columns(constraints);
        orth_projectors(&x).1
    };
    let restricted = hermitize(&(&p_perp * &gram22 * &p_perp));
    let g = generalized_eigh(&restricted, &p_perp)?;
    if g.finite.values.is_empty() {
        return Err(Error::DegenerateInput(
            "zero-forcing: empty complement subspace".into(),
        ));
    }
    let w2 = Beamformer::unit(&(&p_perp * g.finite.vector(0)))?;
    let basis_rates = g
        .finite
        .values
        .iter()
        .map(|&lam| rate_from_sinr(lam.max(0.0) / sigma2))
        .collect();
    Ok((w2, basis_rates))
}

/// Unit-norm combination of the egoistic and altruistic strategies of a
/// link with complex weights satisfying `|ξ₁| + |ξ₂| = 1`.
pub fn balanced_beamformer(ch: &ChannelSet, link: Link, xi1: C64, xi2: C64) -> Result<Beamformer> {
    let kps = KeyPointSet::compute(ch)?;
    balanced_from_keypoints(&kps, link, xi1, xi2)
}

/// Same as [`balanced_beamformer`] but reusing a precomputed key-point set.
pub fn balanced_from_keypoints(
    kps: &KeyPointSet,
    link: Link,
    xi1: C64,
    xi2: C64,
) -> Result<Beamformer> {
    let budget = xi1.norm() + xi2.norm();
    if (budget - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "balanced combination requires |xi1| + |xi2| = 1, got {budget}"
        )));
    }
    let v = kps.egoistic(link).vector().map(|z| z * xi1)
        + kps.altruistic(link).vector().map(|z| z * xi2);
    if v.norm() <= 1e-12 {
        return Err(Error::DegenerateInput(
            "balanced combination cancels to zero".into(),
        ));
    }
    Beamformer::unit(&unit_phase_fixed(&v))
}

/// How the initializer found a feasible beamformer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitProvenance {
    /// The nominal convex combination was already feasible.
    Nominal,
    /// Found after perturbing the mixing weight (number of attempts tried).
    NuFallback(usize),
    /// Seeded random search (number of draws consumed).
    Random(usize),
}

/// Result of the link-2 initialization search.
#[derive(Debug, Clone)]
pub struct InitialW2 {
    pub w2: Beamformer,
    pub provenance: InitProvenance,
}

/// Cap on seeded random draws in the initialization fallback.
pub const INIT_RANDOM_CAP: usize = 10_000;

/// Feasible initialization of link 2's beamformer for a rate target
/// `R₂⋆ ∈ (R̲₂, R̄₂)`.
///
/// The nominal candidate mixes egoistic and altruistic strategies with the
/// real weight `ζ = (R₂⋆ − R̲₂)/(R̄₂ − R̲₂)`. If it fails the feasibility
/// test, `ζ ± ν` is tried over `nu_steps` evenly spaced `ν` values up to
/// `min(ζ, 1−ζ)`, then seeded random unit vectors (cap [`INIT_RANDOM_CAP`]).
pub fn initial_w2(
    ch: &ChannelSet,
    kps: &KeyPointSet,
    r2_star: f64,
    nu_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<InitialW2> {
    if !(r2_star > kps.r2_under && r2_star < kps.r2_bar) {
        return Err(Error::InvalidArgument(format!(
            "rate target {r2_star} outside the open interval ({}, {})",
            kps.r2_under, kps.r2_bar
        )));
    }
    let sinr2_star = sinr_from_rate(r2_star);
    let zeta = (r2_star - kps.r2_under) / (kps.r2_bar - kps.r2_under);
    let candidate = |z: f64| -> Option<Beamformer> {
        balanced_from_keypoints(kps, Link::Tx2, C64::new(z, 0.0), C64::new(1.0 - z, 0.0)).ok()
    };
    let feasible = |w: &Beamformer| -> bool {
        crate::iaa::feasibility_check_w2(ch, w, sinr2_star)
            .map(|rep| rep.feasible)
            .unwrap_or(false)
    };
    if let Some(w) = candidate(zeta) {
        if feasible(&w) {
            return Ok(InitialW2 {
                w2: w,
                provenance: InitProvenance::Nominal,
            });
        }
    }
    let nu_max = zeta.min(1.0 - zeta);
    let mut attempts = 0;
    for step in 1..=nu_steps {
        let nu = nu_max * step as f64 / nu_steps as f64;
        for z in [zeta + nu, zeta - nu] {
            attempts += 1;
            if let Some(w) = candidate(z.clamp(0.0, 1.0)) {
                if feasible(&w) {
                    return Ok(InitialW2 {
                        w2: w,
                        provenance: InitProvenance::NuFallback(attempts),
                    });
                }
            }
        }
    }
    for draw in 1..=INIT_RANDOM_CAP {
        let v = CVec::from_fn(ch.num_tx_antennas(), |_, _| {
            C64::new(
                rng.sample::<f64, _>(rand_distr::StandardNormal),
                rng.sample::<f64, _>(rand_distr::StandardNormal),
            )
        });
        if v.norm() < 1e-9 {
            continue;
        }
        let w = Beamformer::unit(&v)?;
        if feasible(&w) {
            return Ok(InitialW2 {
                w2: w,
                provenance: InitProvenance::Random(draw),
            });
        }
    }
    Err(Error::NumericalFailure(format!(
        "no feasible initialization found for rate target {r2_star} \
         after {INIT_RANDOM_CAP} random draws"
    )))
}

/// Interference magnitude `|(H_ii w_i)ᴴ H_ki w_k|` received at link `i`
/// from the other transmitter; zero at any zero-forcing configuration.
pub fn cross_interference(ch: &ChannelSet, rx: Link, w1: &Beamformer, w2: &Beamformer) -> f64 {
    let (w_own, w_other) = match rx {
        Link::Tx1 => (w1, w2),
        Link::Tx2 => (w2, w1),
    };
    let sig = ch.direct(rx) * w_own.vector();
    let intf = ch.cross_into(rx) * w_other.vector();
    (sig.adjoint() * intf)[(0, 0)].norm()
}
