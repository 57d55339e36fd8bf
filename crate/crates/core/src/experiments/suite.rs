//! Seeded random instance generator for the property suites: piecewise-
//! constant coefficients in `[0.5, 2]` with up to two jumps, low-mode
//! trigonometric data, and separable forcing sharing the coefficient
//! breakpoints.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coefficients::{
    ForcingField, ForcingTerm, PiecewiseCoefficient, TimeProfile, TrigPhase, TrigPoly,
};
use crate::galerkin::{FieldSource, InitialField, ProblemSpec};

/// Deterministic random instance `idx` of the suite with the given seed.
/// The jump count cycles through `m = idx mod 3`.
pub fn random_instance(seed: u64, idx: usize) -> ProblemSpec {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let m = idx % 3;

    let breakpoints: Vec<f64> = match m {
        0 => vec![],
        1 => vec![rng.gen_range(0.25..0.75)],
        _ => {
            let first = rng.gen_range(0.15..0.45);
            let second = rng.gen_range((first + 0.2)..0.85);
            vec![first, second]
        }
    };
    let random_pieces = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..=breakpoints.len()).map(|_| vec![rng.gen_range(0.5..2.0)]).collect()
    };
    let r = PiecewiseCoefficient::new(breakpoints.clone(), random_pieces(&mut rng)).unwrap();
    let nu = PiecewiseCoefficient::new(breakpoints.clone(), random_pieces(&mut rng)).unwrap();

    let random_trig = |rng: &mut ChaCha8Rng, amp: f64| -> InitialField {
        let terms = (1..=2u32)
            .map(|mode| {
                let phase = if rng.gen_bool(0.5) { TrigPhase::Cos } else { TrigPhase::Sin };
                (rng.gen_range(-amp..amp), mode, phase)
            })
            .collect();
        InitialField::Trig(TrigPoly { terms })
    };

    let random_forcing = |rng: &mut ChaCha8Rng, amp: f64| -> FieldSource {
        if rng.gen_bool(0.3) {
            return FieldSource::Zero;
        }
        let space_pieces: Vec<Vec<f64>> =
            (0..=breakpoints.len()).map(|_| vec![rng.gen_range(-amp..amp)]).collect();
        let time = if rng.gen_bool(0.5) {
            TimeProfile::Trig(vec![rng.gen_range(0.5..3.0), rng.gen_range(0.0..1.0)])
        } else {
            TimeProfile::Exp(vec![-rng.gen_range(0.2..1.5)])
        };
        FieldSource::Separable(ForcingField {
            terms: vec![ForcingTerm {
                time,
                space: PiecewiseCoefficient::new(breakpoints.clone(), space_pieces).unwrap(),
            }],
        })
    };

    ProblemSpec {
        p: rng.gen_range(0.5..1.5),
        allow_zero_p: false,
        r,
        nu,
        j1: random_forcing(&mut rng, 0.3),
        j2: random_forcing(&mut rng, 0.3),
        f: random_forcing(&mut rng, 0.3),
        h01: random_trig(&mut rng, 0.4),
        h02: random_trig(&mut rng, 0.4),
        u0: random_trig(&mut rng, 0.3),
        u1: random_trig(&mut rng, 0.3),
        horizon: 1.0,
    }
}
