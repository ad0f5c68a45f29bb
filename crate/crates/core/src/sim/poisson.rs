use rand_distr::{Distribution, Poisson};

use super::RngStream;

/// Above this mean the inversion loop is replaced by an exact rejection sampler.
pub const INVERSION_LIMIT: f64 = 30.0;

/// Draw from Poisson(r).
///
/// For `r <= 30` this is sequential-search inversion with one uniform:
/// accumulate the pmf until it exceeds `u`. Larger means go to `rand_distr`,
/// whose sampler is exact but does not underflow `exp(-r)`.
pub fn generate_poisson(r: f64, rng: &mut RngStream) -> u64 {
    assert!(r >= 0.0 && r.is_finite(), "Poisson mean must be finite and >= 0, got {r}");
    if r == 0.0 {
        return 0;
    }
    if r > INVERSION_LIMIT {
        let d = Poisson::new(r).expect("validated mean");
        return d.sample(rng) as u64;
    }
    let mut p = (-r).exp();
    let mut s = p;
    let mut n = 0u64;
    let u = rng.uniform();
    while u > s {
        n += 1;
        p *= r / n as f64;
        s += p;
        // Rounding can leave s a hair below a u close to 1.
        if p == 0.0 && n as f64 > r {
            break;
        }
    }
    n
}
