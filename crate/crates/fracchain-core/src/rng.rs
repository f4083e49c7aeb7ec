//! Deterministic random-number streams.
//!
//! All Monte Carlo code draws from ChaCha12, a counter-based generator with
//! 2^64 independent streams per seed. A replica (walk batch, MCMC chain,
//! bootstrap round) gets the stream `(seed, replica_index)`, so results do
//! not depend on how replicas are scheduled across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

/// Stream for a given replica index. Streams with the same seed share a key
/// and differ only in the ChaCha nonce.
pub fn stream(seed: u64, replica: u64) -> Stream {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Standard normal via Box-Muller. Two uniforms per call keeps the stream
/// layout independent of any cached spare value.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let v: f64 = rng.random::<f64>();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Runs `replicas` jobs on derived streams and collects results in replica
/// order. Parallel when the `parallel` feature is on, sequential otherwise
/// (wasm builds); the output is identical either way.
pub fn map_replicas<T, F>(seed: u64, replicas: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, Stream) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..replicas)
            .into_par_iter()
            .map(|i| f(i, stream(seed, i)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..replicas).map(|i| f(i, stream(seed, i))).collect()
    }
}
