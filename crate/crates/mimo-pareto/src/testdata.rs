//! Shared channel fixtures for unit tests.

use crate::channel::ChannelSet;
use crate::linalg::{c, CMat};

/// The 3-transmit / 2-receive example instance used across the test suite,
/// at 10 dB SNR (noise power 0.1 on both links). The same instance ships as
/// `configs/two_user_3x2.json`.
pub fn paper_channels() -> ChannelSet {
    let h11 = CMat::from_row_slice(
        2,
        3,
        &[
            c(-0.3034, 1.9096),
            c(-0.3790, 0.4201),
            c(0.0357, 0.7337),
            c(-0.6358, -0.8030),
            c(-0.7881, -0.1273),
            c(0.7534, 0.8348),
        ],
    );
    let h12 = CMat::from_row_slice(
        2,
        3,
        &[
            c(-0.6758, 0.1040),
            c(-0.5949, -0.0344),
            c(0.4311, 0.9658),
            c(-2.1621, 0.5404),
            c(-0.0037, 0.6627),
            c(0.8611, 1.2318),
        ],
    );
    let h21 = CMat::from_row_slice(
        2,
        3,
        &[
            c(0.3999, 0.1567),
            c(0.3798, -0.5619),
            c(-0.1005, 0.2836),
            c(-0.5494, -0.4648),
            c(1.1971, -0.5297),
            c(-0.7271, 0.2114),
        ],
    );
    let h22 = CMat::from_row_slice(
        2,
        3,
        &[
            c(-0.0308, -0.1133),
            c(0.0433, -0.3313),
            c(0.3047, -1.2157),
            c(-1.4947, -1.8676),
            c(-0.9430, 0.5704),
            c(-1.3328, 1.4638),
        ],
    );
    ChannelSet::new(h11, h12, h21, h22, 0.1, 0.1).expect("valid fixture")
}

/// Same direct links as [`paper_channels`] but zero cross-talk.
pub fn interference_free_channels() -> ChannelSet {
    let base = paper_channels();
    ChannelSet::new(
        base.direct(crate::channel::Link::Tx1).clone(),
        CMat::zeros(2, 3),
        CMat::zeros(2, 3),
        base.direct(crate::channel::Link::Tx2).clone(),
        0.1,
        0.1,
    )
    .expect("valid fixture")
}

/// A square (3x3) instance whose cross channel into receiver 2 has full
/// column rank; exercises the full-rank branch of the power perturbation.
pub fn full_rank_cross_channels() -> ChannelSet {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut mat = |scale: f64| {
        CMat::from_fn(3, 3, |_, _| {
            c(
                scale * (rng.gen::<f64>() * 2.0 - 1.0),
                scale * (rng.gen::<f64>() * 2.0 - 1.0),
            )
        })
    };
    let h11 = mat(1.0);
    let h12 = mat(1.0);
    let h21 = mat(0.8);
    let h22 = mat(1.0);
    ChannelSet::new(h11, h12, h21, h22, 0.1, 0.1).expect("valid fixture")
}
