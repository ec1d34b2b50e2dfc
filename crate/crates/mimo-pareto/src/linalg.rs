//! Dense complex linear algebra primitives.
//!
//! Everything operates on small matrices (at most ~16x16). Eigenvalues are
//! always returned sorted descending, eigenvector phases are normalized so
//! that the largest-magnitude component is real and nonnegative, and rank
//! decisions use a relative cutoff of [`RANK_REL_TOL`] against the largest
//! singular/eigen value. This keeps every routine deterministic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
/// Dense complex matrix, the workhorse of the crate.
pub type CMat = DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = DVector<C64>;

/// Relative threshold below which singular/eigen values count as zero.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Hermiticity acceptance threshold, relative to the Frobenius norm.
pub const HERMITIAN_REL_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Frobenius norm.
pub fn frob(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Checks `‖m − mᴴ‖_F ≤ tol·‖m‖_F` (zero matrices pass).
pub fn is_hermitian(m: &CMat, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let diff = m - m.adjoint();
    frob(&diff) <= rel_tol * frob(m).max(f64::MIN_POSITIVE)
}

/// Replaces a nearly Hermitian matrix by its exact Hermitian part.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Real part of `Tr(a b)` for Hermitian `a`, `b`; the trace inner product.
pub fn trace_inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            // Tr(AB) = sum_ij A_ij B_ji; for Hermitian inputs this is real.
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Hermitian quadratic form `vᴴ m v` (returns the real part).
pub fn quad_form(m: &CMat, v: &CVec) -> f64 {
    (v.adjoint() * m * v)[(0, 0)].re
}

/// Normalizes `v` to unit Euclidean norm and rotates the global phase so the
/// largest-magnitude entry is real and nonnegative.
pub fn unit_phase_fixed(v: &CVec) -> CVec {
    let n = v.norm();
    if n == 0.0 {
        return v.clone();
    }
    let mut best = 0usize;
    let mut best_mag = 0.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mag + 1e-300 {
            best_mag = m;
            best = i;
        }
    }
    let phase = if best_mag > 0.0 {
        v[best].conj() / best_mag
    } else {
        cr(1.0)
    };
    v.map(|z| z * phase / n)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors as columns, same order as `values`.
    pub vectors: CMat,
}

impl EigenPairs {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// i-th largest eigenvalue.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Eigenvector for the i-th largest eigenvalue.
    pub fn vector(&self, i: usize) -> CVec {
        self.vectors.column(i).into_owned()
    }

    /// Smallest eigenvalue.
    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("empty spectrum")
    }

    /// `V diag(values) Vᴴ`.
    pub fn reconstruct(&self) -> CMat {
        let n = self.vectors.nrows();
        let mut acc = CMat::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let v = self.vectors.column(k);
            acc += (v * v.adjoint()).scale(lam);
        }
        acc
    }
}

/// Hermitian eigendecomposition with descending eigenvalues.
///
/// Rejects non-square or non-Hermitian (relative tolerance
/// [`HERMITIAN_REL_TOL`]) input.
pub fn eigh(h: &CMat) -> Result<EigenPairs> {
    if !h.is_square() {
        return Err(Error::InvalidArgument(format!(
            "eigh expects a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if !is_hermitian(h, HERMITIAN_REL_TOL) {
        return Err(Error::InvalidArgument(
            "eigh expects a Hermitian matrix".into(),
        ));
    }
    Ok(eigh_unchecked(&hermitize(h)))
}

/// Hermitian eigendecomposition without the Hermiticity gate; the input is
/// symmetrized first. For internal use on matrices Hermitian by construction.
pub fn eigh_unchecked(h: &CMat) -> EigenPairs {
    let n = h.nrows();
    if n == 0 {
        return EigenPairs {
            values: vec![],
            vectors: CMat::zeros(0, 0),
        };
    }
    let se = hermitize(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("NaN eigenvalue")
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(se.eigenvalues[src]);
        let v = unit_phase_fixed(&se.eigenvectors.column(src).into_owned());
        vectors.set_column(dst, &v);
    }
    EigenPairs { values, vectors }
}

/// Generalized Hermitian eigendecomposition `A v = λ B v` with `B ⪰ 0`.
///
/// The null space of `B` is deflated first: the returned `finite` pairs solve
/// the reduced regular pencil on the range of `B`, and `null_basis` holds an
/// orthonormal basis of the null space of `B` (the infinite/indefinite part).
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub finite: EigenPairs,
    /// Orthonormal basis of the null space of `B`, one column per direction.
    pub null_basis: CMat,
}

pub fn generalized_eigh(a: &CMat, b: &CMat) -> Result<GeneralizedEigen> {
    if a.nrows() != b.nrows() || !a.is_square() || !b.is_square() {
        return Err(Error::InvalidArgument(
            "generalized_eigh expects square matrices of equal dimension".into(),
        ));
    }
    if !is_hermitian(a, HERMITIAN_REL_TOL) || !is_hermitian(b, HERMITIAN_REL_TOL) {
        return Err(Error::InvalidArgument(
            "generalized_eigh expects Hermitian matrices".into(),
        ));
    }
    let n = a.nrows();
    let eb = eigh_unchecked(b);
    let scale = eb.values.first().copied().unwrap_or(0.0).max(0.0);
    // Roundoff-level negativity is tolerated; anything larger is rejected.
    if eb.min_value() < -1e-12 * scale.max(1.0) {
        return Err(Error::InvalidArgument(
            "generalized_eigh: B has a negative-definite direction".into(),
        ));
    }
    let cutoff = RANK_REL_TOL * scale;
    let range_idx: Vec<usize> = (0..n).filter(|&i| eb.values[i] > cutoff).collect();
    let null_idx: Vec<usize> = (0..n).filter(|&i| eb.values[i] <= cutoff).collect();

    let mut null_basis = CMat::zeros(n, null_idx.len());
    for (k, &i) in null_idx.iter().enumerate() {
        null_basis.set_column(k, &eb.vectors.column(i).into_owned());
    }

    let r = range_idx.len();
    if r == 0 {
        return Ok(GeneralizedEigen {
            finite: EigenPairs {
                values: vec![],
                vectors: CMat::zeros(n, 0),
            },
            null_basis,
        });
    }

    // Whitened reduction: C = S^-1 Urᴴ A Ur S^-1 with S = diag(sqrt eig).
    let mut ur = CMat::zeros(n, r);
    let mut inv_s = Vec::with_capacity(r);
    for (k, &i) in range_idx.iter().enumerate() {
        ur.set_column(k, &eb.vectors.column(i).into_owned());
        inv_s.push(1.0 / eb.values[i].sqrt());
    }
    let mut reduced = ur.adjoint() * a * &ur;
    for i in 0..r {
        for j in 0..r {
            reduced[(i, j)] *= inv_s[i] * inv_s[j];
        }
    }
    let er = eigh_unchecked(&reduced);
    let mut vectors = CMat::zeros(n, r);
    for k in 0..r {
        let y = er.vectors.column(k);
        let mut v = CVec::zeros(n);
        for col in 0..r {
            v += ur.column(col) * (y[col] * inv_s[col]);
        }
        vectors.set_column(k, &unit_phase_fixed(&v));
    }
    Ok(GeneralizedEigen {
        finite: EigenPairs {
            values: er.values,
            vectors,
        },
        null_basis,
    })
}

/// Thin singular value decomposition `A = U diag(σ) Vᴴ`, singular values
/// descending.
///
/// Computed by one-sided (Hestenes) Jacobi rotations, which deliver high
/// relative accuracy on the small, possibly rank-deficient matrices this
/// crate works with. `U` is `m x k`, `V` is `n x k` with `k = min(m, n)`;
/// columns of `U` belonging to zero singular values are zero.
pub struct Svd {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

pub fn svd_jacobi(a: &CMat) -> Svd {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        // A = U Σ Vᴴ  ⟺  Aᴴ = V Σ Uᴴ.
        let t = svd_jacobi(&a.adjoint());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let mut w = a.clone();
    let mut v = CMat::identity(n, n);
    let scale = frob(a);
    if scale == 0.0 {
        return Svd {
            u: CMat::zeros(m, n),
            sigma: vec![0.0; n],
            v,
        };
    }
    let tol = 1e-15;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let wp = w.column(p).into_owned();
                let wq = w.column(q).into_owned();
                let app = wp.norm_squared();
                let aqq = wq.norm_squared();
                let apq = (wp.adjoint() * &wq)[(0, 0)];
                let g = apq.norm();
                if g <= tol * (app * aqq).sqrt() + 1e-300 {
                    continue;
                }
                off = off.max(g / (app * aqq).sqrt().max(1e-300));
                // Absorb the phase so the 2x2 Gram block becomes real,
                // then apply the classical symmetric Jacobi rotation.
                let phase = apq / g;
                let tau = (aqq - app) / (2.0 * g);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // Columns (p, q) <- (c·p − s·conj(phase)·q, s·p + c·conj(phase)·q),
                // which zeroes the phase-absorbed off-diagonal Gram entry.
                let pc = phase.conj();
                for i in 0..m {
                    let xp = w[(i, p)];
                    let xq = w[(i, q)];
                    w[(i, p)] = xp.scale(c) - xq * pc.scale(s);
                    w[(i, q)] = xp.scale(s) + xq * pc.scale(c);
                }
                for i in 0..n {
                    let xp = v[(i, p)];
                    let xq = v[(i, q)];
                    v[(i, p)] = xp.scale(c) - xq * pc.scale(s);
                    v[(i, q)] = xp.scale(s) + xq * pc.scale(c);
                }
            }
        }
        if off <= tol {
            break;
        }
    }
    // Column norms are the singular values; sort descending.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("NaN singular value"));
    let mut u = CMat::zeros(m, n);
    let mut v_sorted = CMat::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        if s > scale * 1e-290 {
            u.set_column(dst, &w.column(src).unscale(s));
        }
        v_sorted.set_column(dst, &v.column(src).into_owned());
    }
    Svd {
        u,
        sigma,
        v: v_sorted,
    }
}

/// Orthogonal projectors onto the column space of `x` and its complement.
///
/// Rank-deficient input is handled through the SVD (the pseudo-inverse form
/// of the textbook `X(XᴴX)⁻¹Xᴴ`); the zero matrix yields `(0, I)`.
pub fn orth_projectors(x: &CMat) -> (CMat, CMat) {
    let m = x.nrows();
    let svd = svd_jacobi(x);
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let cutoff = RANK_REL_TOL * smax;
    let mut p = CMat::zeros(m, m);
    for (i, &s) in svd.sigma.iter().enumerate() {
        if s > cutoff {
            let ui = svd.u.column(i);
            p += ui * ui.adjoint();
        }
    }
    p = hermitize(&p);
    let p_perp = CMat::identity(m, m) - &p;
    (p, p_perp)
}

/// Moore-Penrose pseudo-inverse with relative rank cutoff.
pub fn pseudo_inverse(x: &CMat) -> CMat {
    let svd = svd_jacobi(x);
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return CMat::zeros(x.ncols(), x.nrows());
    }
    let cutoff = RANK_REL_TOL * smax;
    let mut out = CMat::zeros(x.ncols(), x.nrows());
    for (i, &s) in svd.sigma.iter().enumerate() {
        if s > cutoff {
            out += (svd.v.column(i) * svd.u.column(i).adjoint()).unscale(s);
        }
    }
    out
}

/// Numerical rank with the crate-wide relative cutoff.
pub fn rank(x: &CMat) -> usize {
    let svd = svd_jacobi(x);
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let cutoff = RANK_REL_TOL * smax;
    svd.sigma.iter().filter(|&&s| s > cutoff).count()
}

/// Hermitian angle between two nonzero complex vectors, in `[0, π/2]`.
///
/// `cos θ_H = |aᴴb| / (‖a‖·‖b‖)`; invariant under complex scaling of either
/// argument.
pub fn hermitian_angle(a: &CVec, b: &CVec) -> Result<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument(
            "hermitian_angle requires nonzero vectors".into(),
        ));
    }
    let cosv = (a.adjoint() * b)[(0, 0)].norm() / (na * nb);
    Ok(cosv.clamp(0.0, 1.0).acos())
}

/// Finite eigenpairs `(λ, v)` of the general (non-Hermitian) pencil
/// `A v = λ B v`, used for the zero-forcing transmit directions.
///
/// The characteristic polynomial `det(A − λB)` is recovered by interpolation
/// on a scaled root-of-unity grid, its roots found by Durand-Kerner
/// iteration, and each eigenvector taken as the smallest right singular
/// direction of `A − λB`. Pairs whose residual exceeds `1e-8` times the data
/// scale are dropped. A pencil that is singular (identically zero
/// determinant) yields an error.
pub fn pencil_eigenpairs(a: &CMat, b: &CMat) -> Result<Vec<(C64, CVec)>> {
    if !a.is_square() || !b.is_square() || a.nrows() != b.nrows() {
        return Err(Error::InvalidArgument(
            "pencil_eigenpairs expects square matrices of equal dimension".into(),
        ));
    }
    let n = a.nrows();
    let scale_a = frob(a);
    let scale_b = frob(b);
    if scale_b == 0.0 {
        return Err(Error::DegenerateInput("pencil: B is zero".into()));
    }
    // Sampling radius comparable to the largest |λ| of interest.
    let radius = (scale_a / scale_b).max(1.0) * 2.0;
    let m = n + 1;
    let mut samples = Vec::with_capacity(m);
    for j in 0..m {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
        let lam = C64::from_polar(radius, theta);
        let det = (a - b.scale_complex(lam)).lu().determinant();
        samples.push((lam, det));
    }
    // Inverse DFT on the scaled circle gives the coefficients of
    // p(λ) = sum_k c_k λ^k.
    let mut coeffs = vec![C64::new(0.0, 0.0); m];
    for (k, ck) in coeffs.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (j, (_, det)) in samples.iter().enumerate() {
            let theta = -2.0 * std::f64::consts::PI * (j * k) as f64 / m as f64;
            acc += det * C64::from_polar(1.0, theta);
        }
        *ck = acc / cr(m as f64) / cr(radius.powi(k as i32));
    }
    let max_coeff = coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max_coeff == 0.0 {
        return Err(Error::DegenerateInput(
            "pencil is singular: det(A - lambda B) vanishes identically".into(),
        ));
    }
    // Trim (near-)zero leading coefficients: infinite eigenvalues.
    let mut degree = n;
    while degree > 0 && coeffs[degree].norm() <= 1e-10 * max_coeff {
        degree -= 1;
    }
    if degree == 0 {
        return Ok(vec![]);
    }
    let roots = durand_kerner(&coeffs[..=degree]);

    let res_scale = scale_a.max(scale_b);
    let mut out = Vec::new();
    for lam in roots {
        let m_lam = a - b.scale_complex(lam);
        let svd = svd_jacobi(&m_lam);
        let v = unit_phase_fixed(&svd.v.column(svd.sigma.len() - 1).into_owned());
        let resid = (&m_lam * &v).norm();
        if resid <= 1e-8 * res_scale * (1.0 + lam.norm()) {
            out.push((lam, v));
        }
    }
    out.sort_by(|x, y| {
        (x.0.re, x.0.im)
            .partial_cmp(&(y.0.re, y.0.im))
            .expect("NaN pencil eigenvalue")
    });
    Ok(out)
}

/// Durand-Kerner root finder for `p(z) = sum_k c_k z^k`, `c_deg != 0`.
fn durand_kerner(coeffs: &[C64]) -> Vec<C64> {
    let degree = coeffs.len() - 1;
    let lead = coeffs[degree];
    let monic: Vec<C64> = coeffs.iter().map(|z| z / lead).collect();
    let eval = |z: C64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &ck in monic.iter().rev() {
            acc = acc * z + ck;
        }
        acc
    };
    // Cauchy bound keeps the initial guesses around the root annulus.
    let bound = 1.0
        + monic[..degree]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
    let seed = C64::new(0.4, 0.9);
    let mut z: Vec<C64> = (0..degree)
        .map(|i| seed.powu(i as u32 + 1) * cr(bound.min(1e6)))
        .collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..degree {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() < 1e-280 {
                continue;
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
        }
        if max_step < 1e-15 {
            break;
        }
    }
    z
}

trait ScaleComplex {
    fn scale_complex(&self, s: C64) -> CMat;
}

impl ScaleComplex for CMat {
    fn scale_complex(&self, s: C64) -> CMat {
        self.map(|z| z * s)
    }
}
