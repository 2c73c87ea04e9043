//! Counter-based random substreams.
//!
//! Every stochastic quantity is drawn from a ChaCha stream addressed by
//! `(seed, purpose, index)`. Two runs that differ only in, say, outcome
//! coefficients therefore reuse the exact same covariate and treatment noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. The discriminant is part of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    CovariateCoefficients = 1,
    TreatmentCoefficients = 2,
    OutcomeCoefficients = 3,
    MixtureMeans = 4,
    CovariateNoise = 10,
    TreatmentNoise = 11,
    Adjustment = 12,
    OutcomeNoise = 13,
    PatientParams = 20,
    PatientDynamics = 21,
    Split = 30,
    Shuffle = 31,
    Init = 40,
    Latent = 41,
    Probe = 50,
}

pub fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ (index & 0xFFFF_FFFF_FFFF));
    rng
}
