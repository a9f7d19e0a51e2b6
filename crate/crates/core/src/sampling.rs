//! Points on the boundary `phi = 0` of an implicit set.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sets::ImplicitSet;
use crate::DELTA_ROOT;

const POOL_LIMIT: usize = 10_000;

/// `n` points with `|phi(t, x)| <= 1e-9`, found by bisecting segments from
/// random interior samples to random exterior samples. Deterministic in `seed`.
pub fn sample_boundary(set: &ImplicitSet, t: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = set.window();
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    let mut drawn = 0;
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        while inside.is_empty() || outside.is_empty() {
            if drawn >= POOL_LIMIT {
                return Err(Error::NotFound(format!(
                    "no sign change of phi among {POOL_LIMIT} window samples at t = {t}"
                )));
            }
            let x = window.sample_state(&mut rng);
            drawn += 1;
            if set.phi(t, &x)? <= 0.0 {
                inside.push(x);
            } else {
                outside.push(x);
            }
        }
        // refresh both pools so successive segments point in different directions
        let x = window.sample_state(&mut rng);
        drawn += 1;
        if set.phi(t, &x)? <= 0.0 {
            inside.push(x);
        } else {
            outside.push(x);
        }
        let a = &inside[attempts % inside.len()];
        let b = &outside[(attempts * 7 + 3) % outside.len()];
        attempts += 1;
        if let Some(p) = bisect(set, t, a, b)? {
            out.push(p);
        } else if attempts > 100 * n + POOL_LIMIT {
            return Err(Error::NotFound("bisection did not reach the root tolerance".into()));
        }
    }
    Ok(out)
}

fn bisect(set: &ImplicitSet, t: f64, inside: &[f64], outside: &[f64]) -> Result<Option<Vec<f64>>> {
    let mut a = inside.to_vec();
    let mut b = outside.to_vec();
    for _ in 0..200 {
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
        let v = set.phi(t, &mid)?;
        if v.abs() <= DELTA_ROOT {
            return Ok(Some(mid));
        }
        if v <= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if a == b {
            break;
        }
    }
    let va = set.phi(t, &a)?;
    Ok((va.abs() <= DELTA_ROOT).then_some(a))
}
