//! Problem-instance data model and the rate/SINR formulas.
//!
//! A [`ChannelSet`] holds the four channel matrices of the two interfering
//! links plus the per-receiver noise powers. The canonical SINR path is the
//! quadratic form `wᵢᴴ Aᵢ(w_k) wᵢ` in the effective channel matrix; the
//! explicit-receiver form and the Hermitian-angle form are kept as
//! independent verification paths.

use crate::linalg::{self, cr, hermitize, quad_form, CMat, CVec};
use crate::{Error, Result};

/// One of the two transmitter/receiver pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Tx1,
    Tx2,
}

impl Link {
    pub fn other(self) -> Link {
        match self {
            Link::Tx1 => Link::Tx2,
            Link::Tx2 => Link::Tx1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Link::Tx1 => 1,
            Link::Tx2 => 2,
        }
    }
}

/// The four channel matrices (all `N_R x N_T`) and the noise powers.
///
/// `hki` is the channel from transmitter `k` to receiver `i`; `h11`/`h22`
/// are the direct links, `h12`/`h21` the cross-talk links.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    h11: CMat,
    h12: CMat,
    h21: CMat,
    h22: CMat,
    sigma1_sq: f64,
    sigma2_sq: f64,
}

impl ChannelSet {
    pub fn new(
        h11: CMat,
        h12: CMat,
        h21: CMat,
        h22: CMat,
        sigma1_sq: f64,
        sigma2_sq: f64,
    ) -> Result<Self> {
        let (nr, nt) = (h11.nrows(), h11.ncols());
        for (name, m) in [("h12", &h12), ("h21", &h21), ("h22", &h22)] {
            if m.nrows() != nr || m.ncols() != nt {
                return Err(Error::InvalidArgument(format!(
                    "channel matrix {name} is {}x{}, expected {nr}x{nt}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if nt < 2 || nr < 2 {
            return Err(Error::InvalidArgument(format!(
                "channel requires N_T >= 2 and N_R >= 2, got N_R={nr}, N_T={nt}"
            )));
        }
        if !(sigma1_sq > 0.0) || !(sigma2_sq > 0.0) {
            return Err(Error::InvalidArgument(
                "noise powers must be strictly positive".into(),
            ));
        }
        Ok(Self {
            h11,
            h12,
            h21,
            h22,
            sigma1_sq,
            sigma2_sq,
        })
    }

    pub fn num_tx_antennas(&self) -> usize {
        self.h11.ncols()
    }

    pub fn num_rx_antennas(&self) -> usize {
        self.h11.nrows()
    }

    /// Direct-link channel `H_ii`.
    pub fn direct(&self, link: Link) -> &CMat {
        match link {
            Link::Tx1 => &self.h11,
            Link::Tx2 => &self.h22,
        }
    }

    /// Cross-talk channel into receiver `i`, i.e. `H_ki` with `k != i`.
    pub fn cross_into(&self, rx: Link) -> &CMat {
        match rx {
            Link::Tx1 => &self.h21,
            Link::Tx2 => &self.h12,
        }
    }

    /// Channel from transmitter `tx` to receiver `rx`.
    pub fn gain(&self, tx: Link, rx: Link) -> &CMat {
        match (tx, rx) {
            (Link::Tx1, Link::Tx1) => &self.h11,
            (Link::Tx1, Link::Tx2) => &self.h12,
            (Link::Tx2, Link::Tx1) => &self.h21,
            (Link::Tx2, Link::Tx2) => &self.h22,
        }
    }

    pub fn noise(&self, rx: Link) -> f64 {
        match rx {
            Link::Tx1 => self.sigma1_sq,
            Link::Tx2 => self.sigma2_sq,
        }
    }
}

/// Transmit beamformer with the unit power budget `‖w‖² ≤ 1`.
#[derive(Debug, Clone)]
pub struct Beamformer {
    w: CVec,
}

impl Beamformer {
    /// Norm slack accepted above the unit power budget.
    pub const POWER_SLACK: f64 = 1e-12;
    /// Tolerance for the full-power membership test.
    pub const FULL_POWER_TOL: f64 = 1e-9;

    pub fn new(w: CVec) -> Result<Self> {
        let p = w.norm_squared();
        if p > 1.0 + Self::POWER_SLACK {
            return Err(Error::InvalidArgument(format!(
                "beamformer power {p} exceeds the unit budget"
            )));
        }
        Ok(Self { w })
    }

    /// Normalizes an arbitrary nonzero vector onto the full-power sphere.
    pub fn unit(v: &CVec) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::DegenerateInput(
                "cannot normalize the zero vector".into(),
            ));
        }
        Ok(Self {
            w: v.unscale(n),
        })
    }

    pub fn zero(len: usize) -> Self {
        Self {
            w: CVec::zeros(len),
        }
    }

    pub fn vector(&self) -> &CVec {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.len() == 0
    }

    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }

    /// True iff the beamformer spends the full power budget.
    pub fn full_power(&self) -> bool {
        (self.power() - 1.0).abs() <= Self::FULL_POWER_TOL
    }

    /// Scales the amplitude by `t ∈ [0, 1]` (power scales by `t²`).
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(self.w.scale(t))
    }
}

/// An achieved rate pair with the beamformers that achieve it.
#[derive(Debug, Clone)]
pub struct RatePoint {
    pub r1: f64,
    pub r2: f64,
    pub w1: Beamformer,
    pub w2: Beamformer,
}

fn check_len(ch: &ChannelSet, w: &CVec, who: &str) -> Result<()> {
    if w.len() != ch.num_tx_antennas() {
        return Err(Error::InvalidArgument(format!(
            "{who} has length {}, expected N_T={}",
            w.len(),
            ch.num_tx_antennas()
        )));
    }
    Ok(())
}

/// Effective channel matrix `A_i(w_k) = H_iiᴴ (σ_i² I + H_ki w_k w_kᴴ H_kiᴴ)⁻¹ H_ii`.
///
/// Hermitian PSD of dimension `N_T x N_T`; the inverse is taken explicitly
/// (the matrix is positive definite since `σ_i² > 0`).
pub fn effective_channel(ch: &ChannelSet, link: Link, w_other: &CVec) -> Result<CMat> {
    check_len(ch, w_other, "interfering beamformer")?;
    let h_direct = ch.direct(link);
    let h_cross = ch.cross_into(link);
    let sigma = ch.noise(link);
    let nr = ch.num_rx_antennas();
    let u = h_cross * w_other;
    let cov = CMat::identity(nr, nr).scale(sigma) + &u * u.adjoint();
    let inv = cov
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("interference covariance not invertible".into()))?;
    Ok(hermitize(&(h_direct.adjoint() * inv * h_direct)))
}

/// MMSE receive filter for link `i` given both transmit beamformers.
pub fn mmse_filter(ch: &ChannelSet, link: Link, w1: &CVec, w2: &CVec) -> Result<CVec> {
    check_len(ch, w1, "w1")?;
    check_len(ch, w2, "w2")?;
    let (w_own, w_other) = match link {
        Link::Tx1 => (w1, w2),
        Link::Tx2 => (w2, w1),
    };
    if w_own.norm() == 0.0 {
        return Err(Error::InvalidArgument(
            "MMSE filter undefined for a silent transmitter".into(),
        ));
    }
    let h_direct = ch.direct(link);
    let h_cross = ch.cross_into(link);
    let nr = ch.num_rx_antennas();
    let s = h_direct * w_own;
    let u = h_cross * w_other;
    let cov = CMat::identity(nr, nr).scale(ch.noise(link)) + &s * s.adjoint() + &u * u.adjoint();
    let inv = cov
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("receive covariance not invertible".into()))?;
    Ok(inv * s)
}

/// SINR of link `i` under MMSE reception: the quadratic form in the
/// effective channel matrix. This is the canonical SINR path.
pub fn sinr(ch: &ChannelSet, link: Link, w1: &CVec, w2: &CVec) -> Result<f64> {
    let (w_own, w_other) = match link {
        Link::Tx1 => (w1, w2),
        Link::Tx2 => (w2, w1),
    };
    check_len(ch, w_own, "own beamformer")?;
    let a = effective_channel(ch, link, w_other)?;
    Ok(quad_form(&a, w_own).max(0.0))
}

/// SINR of link `i` for an explicit receive vector `g`:
/// `|gᴴH_ii w_i|² / (σ_i²‖g‖² + |gᴴH_ki w_k|²)`. Verification path; the
/// filtered noise power carries `‖g‖²`, which makes the expression invariant
/// under complex scaling of `g`.
pub fn sinr_with_receiver(ch: &ChannelSet, link: Link, w1: &CVec, w2: &CVec, g: &CVec) -> f64 {
    let (w_own, w_other) = match link {
        Link::Tx1 => (w1, w2),
        Link::Tx2 => (w2, w1),
    };
    let s = (g.adjoint() * (ch.direct(link) * w_own))[(0, 0)].norm_sqr();
    let i = (g.adjoint() * (ch.cross_into(link) * w_other))[(0, 0)].norm_sqr();
    s / (ch.noise(link) * g.norm_squared() + i)
}

/// Hermitian-angle form of the MMSE SINR:
/// `sin²θ·‖H_ii w_i‖²/σ² + cos²θ·‖H_ii w_i‖²/(σ² + ‖H_ki w_k‖²)`
/// with `θ` the Hermitian angle between the received signal and interference
/// directions. Degenerate conventions: zero interference image uses the
/// `θ = π/2` limit, a zero signal image yields 0.
pub fn sinr_angle_form(ch: &ChannelSet, link: Link, w1: &CVec, w2: &CVec) -> Result<f64> {
    let (w_own, w_other) = match link {
        Link::Tx1 => (w1, w2),
        Link::Tx2 => (w2, w1),
    };
    check_len(ch, w_own, "own beamformer")?;
    check_len(ch, w_other, "interfering beamformer")?;
    let sig = ch.direct(link) * w_own;
    let intf = ch.cross_into(link) * w_other;
    let sig_sq = sig.norm_squared();
    let intf_sq = intf.norm_squared();
    let sigma = ch.noise(link);
    if sig_sq <= 1e-280 {
        return Ok(0.0);
    }
    if intf_sq <= 1e-280 {
        return Ok(sig_sq / sigma);
    }
    let theta = linalg::hermitian_angle(&sig, &intf)?;
    let (sin_t, cos_t) = (theta.sin(), theta.cos());
    Ok(sin_t * sin_t * sig_sq / sigma + cos_t * cos_t * sig_sq / (sigma + intf_sq))
}

/// Rates of both links in bits/s/Hz: `R_i = log₂(1 + SINR_i)`.
pub fn rate_pair(ch: &ChannelSet, w1: &Beamformer, w2: &Beamformer) -> Result<RatePoint> {
    let s1 = sinr(ch, Link::Tx1, w1.vector(), w2.vector())?;
    let s2 = sinr(ch, Link::Tx2, w1.vector(), w2.vector())?;
    Ok(RatePoint {
        r1: (1.0 + s1).log2(),
        r2: (1.0 + s2).log2(),
        w1: w1.clone(),
        w2: w2.clone(),
    })
}

/// Rate in bits/s/Hz for a single SINR value.
pub fn rate_from_sinr(s: f64) -> f64 {
    (1.0 + s).log2()
}

/// Inverse of [`rate_from_sinr`].
pub fn sinr_from_rate(r: f64) -> f64 {
    2f64.powf(r) - 1.0
}

pub(crate) fn identity_scaled(n: usize, s: f64) -> CMat {
    CMat::identity(n, n).scale(s)
}

#[allow(unused_imports)]
pub(crate) use linalg::c;

#[allow(unused)]
pub(crate) fn cvec(entries: &[(f64, f64)]) -> CVec {
    CVec::from_vec(entries.iter().map(|&(re, im)| c(re, im)).collect())
}

#[allow(unused)]
pub(crate) fn real_cvec(entries: &[f64]) -> CVec {
    CVec::from_vec(entries.iter().map(|&re| cr(re)).collect())
}
