//! Run configuration, boundary artifacts and their CSV/JSON emission.
//!
//! A boundary artifact is a self-certifying list of rate points: every
//! point stores the beamformers that achieve it, so rates can be recomputed
//! from the artifact alone. Output is deterministic for a fixed config and
//! seed (points are ordered, the metadata carries a config hash and no
//! timestamps, and floats are emitted in shortest round-trip form).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{rate_pair, Beamformer, ChannelSet, Link, RatePoint};
use crate::iaa::{sweep, IaaConfig, IaaTrace};
use crate::keypoints::{balanced_from_keypoints, weak_boundary, zf_points, KeyPointSet};
use crate::linalg::{c, CMat, CVec, C64};
use crate::{Error, Result};

/// Complex scalar in transit: `[re, im]`.
type JsonComplex = [f64; 2];

/// Channel matrices as row-major nested arrays of `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelsSpec {
    pub h11: Vec<Vec<JsonComplex>>,
    pub h12: Vec<Vec<JsonComplex>>,
    pub h21: Vec<Vec<JsonComplex>>,
    pub h22: Vec<Vec<JsonComplex>>,
}

/// Noise specification: either explicit powers or an SNR in dB that sets
/// both powers to `10^(-snr/10)`. Exactly one must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_sq: Option<f64>,
}

/// On-disk run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigFile {
    /// Inline matrices or a path to another JSON file holding them.
    pub channels: ChannelsSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelsSource {
    Inline(ChannelsSpec),
    Path(String),
}

/// Validated in-memory configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub channels: ChannelSet,
    pub rng_seed: u64,
    /// Hash of the canonical config bytes, for artifact provenance.
    pub config_hash: String,
}

fn parse_matrix(name: &str, rows: &[Vec<JsonComplex>]) -> Result<CMat> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Config(format!("channel matrix {name} is empty")));
    }
    let ncols = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Config(format!(
                "channel matrix {name} row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
    }
    Ok(CMat::from_fn(rows.len(), ncols, |i, j| {
        c(rows[i][j][0], rows[i][j][1])
    }))
}

/// Loads and validates a run configuration from a JSON file.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let bytes = std::fs::read(path)?;
    let file: RunConfigFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let spec = match &file.channels {
        ChannelsSource::Inline(spec) => spec.clone(),
        ChannelsSource::Path(rel) => {
            let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
            let nested = std::fs::read(base.join(rel))?;
            serde_json::from_slice::<ChannelsSpec>(&nested)
                .map_err(|e| Error::Config(format!("{rel}: {e}")))?
        }
    };
    let (sigma1_sq, sigma2_sq) = match (&file.noise, file.snr_db) {
        (Some(n), None) => {
            let s1 = n
                .sigma1_sq
                .ok_or_else(|| Error::Config("noise.sigma1_sq missing".into()))?;
            let s2 = n
                .sigma2_sq
                .ok_or_else(|| Error::Config("noise.sigma2_sq missing".into()))?;
            (s1, s2)
        }
        (None, Some(snr)) => {
            let s = 10f64.powf(-snr / 10.0);
            (s, s)
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "config must set exactly one of `noise` and `snr_db`, got both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "config must set exactly one of `noise` and `snr_db`, got neither".into(),
            ))
        }
    };
    let channels = ChannelSet::new(
        parse_matrix("h11", &spec.h11)?,
        parse_matrix("h12", &spec.h12)?,
        parse_matrix("h21", &spec.h21)?,
        parse_matrix("h22", &spec.h22)?,
        sigma1_sq,
        sigma2_sq,
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(RunConfig {
        channels,
        rng_seed: file.rng_seed.unwrap_or(7),
        config_hash,
    })
}

/// Provenance of a boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointTag {
    Keypoint,
    Weak,
    Zf,
    Iaa,
    Random,
    Balanced,
}

impl std::fmt::Display for PointTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PointTag::Keypoint => "keypoint",
            PointTag::Weak => "weak",
            PointTag::Zf => "zf",
            PointTag::Iaa => "iaa",
            PointTag::Random => "random",
            PointTag::Balanced => "balanced",
        };
        f.write_str(s)
    }
}

/// One rate point of an artifact, self-certifying through its beamformers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub tag: PointTag,
    pub r1: f64,
    pub r2: f64,
    /// Transmit beamformers as `[re, im]` pairs.
    pub w1: Vec<JsonComplex>,
    pub w2: Vec<JsonComplex>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// True when another point weakly dominates this one.
    pub dominated: bool,
}

impl BoundaryPoint {
    fn from_rate_point(tag: PointTag, p: &RatePoint) -> Self {
        let pack = |w: &Beamformer| w.vector().iter().map(|z| [z.re, z.im]).collect();
        Self {
            tag,
            r1: p.r1,
            r2: p.r2,
            w1: pack(&p.w1),
            w2: pack(&p.w2),
            converged: None,
            iterations: None,
            dominated: false,
        }
    }

    pub fn beamformers(&self) -> Result<(Beamformer, Beamformer)> {
        let unpack = |vals: &[JsonComplex]| -> Result<Beamformer> {
            Beamformer::new(CVec::from_vec(
                vals.iter().map(|&[re, im]| C64::new(re, im)).collect(),
            ))
        };
        Ok((unpack(&self.w1)?, unpack(&self.w2)?))
    }
}

/// Artifact metadata; no timestamps, so identical runs emit identical
/// bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

/// A set of boundary points plus provenance metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryArtifact {
    pub metadata: ArtifactMetadata,
    pub points: Vec<BoundaryPoint>,
}

impl BoundaryArtifact {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            metadata: ArtifactMetadata {
                config_hash: cfg.config_hash.clone(),
                seed: cfg.rng_seed,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
            points: Vec::new(),
        }
    }

    /// Marks every point that is weakly dominated by another point.
    /// Idempotent.
    pub fn apply_envelope_filter(&mut self) {
        let flags = dominated_flags(&self.points);
        for (p, dom) in self.points.iter_mut().zip(flags) {
            p.dominated = dom;
        }
    }

    /// Recomputes every point's rates from its stored beamformers and
    /// returns the worst absolute deviation.
    pub fn verify_against(&self, ch: &ChannelSet) -> Result<f64> {
        let mut worst = 0.0f64;
        for p in &self.points {
            let (w1, w2) = p.beamformers()?;
            let rp = rate_pair(ch, &w1, &w2)?;
            worst = worst.max((rp.r1 - p.r1).abs()).max((rp.r2 - p.r2).abs());
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// CSV emission: `tag, r1, r2, w1 (2·N_T reals), w2 (2·N_T reals),
    /// converged, iterations, dominated`.
    pub fn to_csv(&self) -> String {
        let nt = self.points.first().map_or(0, |p| p.w1.len());
        let mut out = String::new();
        out.push_str("tag,r1,r2");
        for k in 0..nt {
            out.push_str(&format!(",w1_{k}_re,w1_{k}_im"));
        }
        for k in 0..nt {
            out.push_str(&format!(",w2_{k}_re,w2_{k}_im"));
        }
        out.push_str(",converged,iterations,dominated\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}", p.tag, fmt_f64(p.r1), fmt_f64(p.r2)));
            for w in [&p.w1, &p.w2] {
                for &[re, im] in w.iter() {
                    out.push_str(&format!(",{},{}", fmt_f64(re), fmt_f64(im)));
                }
            }
            out.push_str(&format!(
                ",{},{},{}\n",
                p.converged.map_or(String::new(), |b| b.to_string()),
                p.iterations.map_or(String::new(), |n| n.to_string()),
                p.dominated
            ));
        }
        out
    }
}

/// Shortest representation that round-trips the exact f64 value.
fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_format(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // `{}` on f64 is the shortest round-trip form.
    format!("{v}")
}

/// Weak-dominance flags: point `i` is flagged iff some other point is at
/// least as good in both rates and strictly better in one.
pub fn dominated_flags(points: &[BoundaryPoint]) -> Vec<bool> {
    let n = points.len();
    let mut flags = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&points[i], &points[j]);
            if b.r1 >= a.r1 && b.r2 >= a.r2 && (b.r1 > a.r1 || b.r2 > a.r2) {
                flags[i] = true;
                break;
            }
        }
    }
    flags
}

/// Piecewise-linear upper envelope of `r1` as a function of `r2`, built
/// from the non-dominated points; used for dominance statistics.
pub struct Envelope {
    /// `(r2, r1)` knots sorted by `r2`.
    knots: Vec<(f64, f64)>,
}

impl Envelope {
    pub fn from_points(points: &[(f64, f64)]) -> Self {
        // Keep, for each r2, the best r1; then sweep to enforce the
        // monotone staircase structure of a rate-region boundary.
        let mut sorted: Vec<(f64, f64)> = points.iter().map(|&(r1, r2)| (r2, r1)).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN rate"));
        let mut knots: Vec<(f64, f64)> = Vec::new();
        for &(r2, r1) in sorted.iter() {
            if let Some(&mut (ref last_r2, ref mut last_r1)) = knots.last_mut() {
                if (r2 - last_r2).abs() < 1e-12 {
                    *last_r1 = last_r1.max(r1);
                    continue;
                }
            }
            knots.push((r2, r1));
        }
        // R1 achievable at a given R2 is non-increasing in R2 on the
        // boundary; make the envelope conservative (upper).
        for i in (1..knots.len()).rev() {
            let next = knots[i].1;
            if knots[i - 1].1 < next {
                knots[i - 1].1 = next;
            }
        }
        Self { knots }
    }

    /// Envelope value at `r2`; linear between knots, clamped at the ends.
    pub fn r1_at(&self, r2: f64) -> f64 {
        if self.knots.is_empty() {
            return 0.0;
        }
        if r2 <= self.knots[0].0 {
            return self.knots[0].1;
        }
        if r2 >= self.knots[self.knots.len() - 1].0 {
            return self.knots[self.knots.len() - 1].1;
        }
        let idx = self
            .knots
            .partition_point(|&(k_r2, _)| k_r2 <= r2)
            .saturating_sub(1);
        let (x0, y0) = self.knots[idx];
        let (x1, y1) = self.knots[idx + 1];
        if x1 - x0 < 1e-15 {
            return y0.max(y1);
        }
        y0 + (y1 - y0) * (r2 - x0) / (x1 - x0)
    }
}

/// Key points, zero-forcing points and weak-boundary samples.
pub fn cmd_keypoints(cfg: &RunConfig, weak_samples: usize) -> Result<BoundaryArtifact> {
    let ch = &cfg.channels;
    let kps = KeyPointSet::compute(ch)?;
    let mut art = BoundaryArtifact::new(cfg);
    for p in [&kps.su1, &kps.su2, &kps.t1, &kps.t2] {
        art.points
            .push(BoundaryPoint::from_rate_point(PointTag::Keypoint, p));
    }
    for zf in zf_points(ch)? {
        art.points
            .push(BoundaryPoint::from_rate_point(PointTag::Zf, &zf.point));
    }
    for link in [Link::Tx1, Link::Tx2] {
        for p in weak_boundary(ch, link, weak_samples.max(2))? {
            art.points
                .push(BoundaryPoint::from_rate_point(PointTag::Weak, &p));
        }
    }
    art.apply_envelope_filter();
    Ok(art)
}

/// Boundary sweep: one trace per rate target plus the key points.
/// Per-target failures are tolerated as long as at least one target
/// converges; failures are reported in the returned diagnostics.
pub struct BoundaryOutcome {
    pub artifact: BoundaryArtifact,
    pub traces: Vec<IaaTrace>,
    pub failures: Vec<(usize, String)>,
}

pub fn cmd_boundary(cfg: &RunConfig, n_targets: usize, iaa_cfg: &IaaConfig) -> Result<BoundaryOutcome> {
    let ch = &cfg.channels;
    let kps = KeyPointSet::compute(ch)?;
    let results = sweep(ch, n_targets, iaa_cfg)?;
    let mut art = BoundaryArtifact::new(cfg);
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (idx, res) in results.into_iter().enumerate() {
        match res {
            Ok(trace) => {
                let mut p = BoundaryPoint::from_rate_point(PointTag::Iaa, &trace.final_point);
                p.converged = Some(trace.converged);
                p.iterations = Some(trace.iterations.len());
                art.points.push(p);
                traces.push(trace);
            }
            Err(e) => failures.push((idx, e.to_string())),
        }
    }
    if traces.is_empty() {
        return Err(Error::Solver(
            "no sweep target converged; all traces failed".into(),
        ));
    }
    for p in [&kps.su1, &kps.su2, &kps.t1, &kps.t2] {
        art.points
            .push(BoundaryPoint::from_rate_point(PointTag::Keypoint, p));
    }
    art.apply_envelope_filter();
    Ok(BoundaryOutcome {
        artifact: art,
        traces,
        failures,
    })
}

/// Summary statistics of a random-baseline cloud.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineStats {
    pub samples: usize,
    pub max_r1: f64,
    pub max_r2: f64,
    pub envelope_points: usize,
}

/// Random full-power beamformer pairs (complex Gaussian direction,
/// normalized) with MMSE rates; emits the cloud's non-dominated envelope
/// plus summary statistics.
pub fn cmd_random_baseline(
    cfg: &RunConfig,
    samples: usize,
    seed: u64,
) -> Result<(BoundaryArtifact, BaselineStats)> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let ch = &cfg.channels;
    let nt = ch.num_tx_antennas();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss_unit = |rng: &mut ChaCha8Rng| -> Result<Beamformer> {
        loop {
            let v = CVec::from_fn(nt, |_, _| {
                C64::new(
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                )
            });
            if v.norm() > 1e-9 {
                return Beamformer::unit(&v);
            }
        }
    };
    let mut cloud: Vec<RatePoint> = Vec::with_capacity(samples);
    let mut max_r1 = 0.0f64;
    let mut max_r2 = 0.0f64;
    for _ in 0..samples {
        let w1 = gauss_unit(&mut rng)?;
        let w2 = gauss_unit(&mut rng)?;
        let rp = rate_pair(ch, &w1, &w2)?;
        max_r1 = max_r1.max(rp.r1);
        max_r2 = max_r2.max(rp.r2);
        cloud.push(rp);
    }
    // Keep only the cloud's Pareto envelope in the artifact: sort by r1
    // descending and keep points that raise the best-seen r2.
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| {
        (cloud[b].r1, cloud[b].r2)
            .partial_cmp(&(cloud[a].r1, cloud[a].r2))
            .expect("NaN rate")
    });
    let mut art = BoundaryArtifact::new(cfg);
    let mut best_r2 = f64::NEG_INFINITY;
    for idx in order {
        if cloud[idx].r2 > best_r2 {
            best_r2 = cloud[idx].r2;
            art.points
                .push(BoundaryPoint::from_rate_point(PointTag::Random, &cloud[idx]));
        }
    }
    art.apply_envelope_filter();
    let stats = BaselineStats {
        samples,
        max_r1,
        max_r2,
        envelope_points: art.points.len(),
    };
    Ok((art, stats))
}

/// Parameter grid for the balanced-strategy sweeps.
#[derive(Debug, Clone)]
pub enum BalancedGrid {
    /// Real mixing weight `ζ = (n−1)/N` for `n = 1..=N+1`, applied to both
    /// links independently (cross product).
    RealWeight { steps: usize },
    /// Complex weights: magnitude grid × relative-phase grid per link,
    /// cross product over the two links.
    Complex { magnitude_steps: usize, phase_steps: usize },
}

/// Rate points of the egoistic/altruistic combination sweep; degenerate
/// combinations are skipped and counted.
pub fn cmd_balanced(cfg: &RunConfig, grid: &BalancedGrid) -> Result<(BoundaryArtifact, usize)> {
    let ch = &cfg.channels;
    let kps = KeyPointSet::compute(ch)?;
    let mut w1s: Vec<Beamformer> = Vec::new();
    let mut w2s: Vec<Beamformer> = Vec::new();
    let mut skipped = 0usize;
    let mut push = |link: Link, xi1: C64, xi2: C64, out: &mut Vec<Beamformer>| {
        match balanced_from_keypoints(&kps, link, xi1, xi2) {
            Ok(w) => out.push(w),
            Err(_) => skipped += 1,
        }
    };
    match grid {
        BalancedGrid::RealWeight { steps } => {
            let n = (*steps).max(1);
            for k in 0..=n {
                let zeta = k as f64 / n as f64;
                push(
                    Link::Tx1,
                    C64::new(zeta, 0.0),
                    C64::new(1.0 - zeta, 0.0),
                    &mut w1s,
                );
                push(
                    Link::Tx2,
                    C64::new(zeta, 0.0),
                    C64::new(1.0 - zeta, 0.0),
                    &mut w2s,
                );
            }
        }
        BalancedGrid::Complex {
            magnitude_steps,
            phase_steps,
        } => {
            let nm = (*magnitude_steps).max(1);
            let np = (*phase_steps).max(1);
            for k in 0..=nm {
                let rho = k as f64 / nm as f64;
                for p in 0..np {
                    let beta = 2.0 * std::f64::consts::PI * p as f64 / np as f64;
                    // Global phase is irrelevant: the first weight is kept
                    // real and the relative phase swept.
                    let xi1 = C64::new(rho, 0.0);
                    let xi2 = C64::from_polar(1.0 - rho, beta);
                    push(Link::Tx1, xi1, xi2, &mut w1s);
                    push(Link::Tx2, xi1, xi2, &mut w2s);
                    if rho == 0.0 || rho == 1.0 {
                        break; // phase is vacuous at the endpoints
                    }
                }
            }
        }
    }
    let mut art = BoundaryArtifact::new(cfg);
    for w1 in &w1s {
        for w2 in &w2s {
            let rp = rate_pair(ch, w1, w2)?;
            art.points
                .push(BoundaryPoint::from_rate_point(PointTag::Balanced, &rp));
        }
    }
    art.apply_envelope_filter();
    // Keep the artifact at a plottable size: drop dominated points when the
    // full cross product is large, they carry no envelope information.
    if art.points.len() > 20_000 {
        art.points.retain(|p| !p.dominated);
    }
    Ok((art, skipped))
}

/// Single-target run wrapped as an artifact.
pub fn cmd_iaa(cfg: &RunConfig, r2_star: f64, iaa_cfg: &IaaConfig) -> Result<(BoundaryArtifact, IaaTrace)> {
    let ch = &cfg.channels;
    let trace = crate::iaa::run(ch, r2_star, iaa_cfg)?;
    let mut art = BoundaryArtifact::new(cfg);
    let mut p = BoundaryPoint::from_rate_point(PointTag::Iaa, &trace.final_point);
    p.converged = Some(trace.converged);
    p.iterations = Some(trace.iterations.len());
    art.points.push(p);
    Ok((art, trace))
}
