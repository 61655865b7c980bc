use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use setpoll::bounds::{constrained_bounds, dempster_bounds, event_bounds, AllocationConstraint};
use setpoll::party::PartySet;
use setpoll::sim::{oracle_completion_bounds, oracle_constrained_bounds, random_small_survey, CorpusSpec};

fn random_events(seed: u64, k: usize, count: usize) -> Vec<PartySet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let full = (1u32 << k) - 1;
    (0..count).map(|_| PartySet::from_bits(rng.gen_range(1..=full)).unwrap()).collect()
}

fn random_constraint(seed: u64) -> AllocationConstraint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11c);
    let alpha: f64 = rng.gen_range(0.0..0.4);
    let beta = rng.gen_range(alpha.max(0.4)..=1.0);
    AllocationConstraint::new(alpha, beta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_equals_completion_enumeration(seed in any::<u64>()) {
        let s = random_small_survey(seed, &CorpusSpec::default());
        let k = s.registry().len();
        let per_option = dempster_bounds(&s).unwrap();
        for (j, (_, i)) in per_option.iter().enumerate() {
            let o = oracle_completion_bounds(&s, PartySet::singleton(j)).unwrap();
            prop_assert_eq!(i.lower.to_bits(), o.lower.to_bits());
            prop_assert_eq!(i.upper.to_bits(), o.upper.to_bits());
        }
        for e in random_events(seed, k, 5) {
            let i = event_bounds(&s, e, None).unwrap();
            let o = oracle_completion_bounds(&s, e).unwrap();
            prop_assert_eq!(i, o);
        }
    }

    #[test]
    fn constrained_within_one_grid_step(seed in any::<u64>()) {
        let spec = CorpusSpec { max_set_size: 4, ..CorpusSpec::default() };
        let s = random_small_survey(seed, &spec);
        let c = random_constraint(seed);
        let step = 0.01;
        let per_option = constrained_bounds(&s, c).unwrap();
        let events: Vec<PartySet> = (0..s.registry().len())
            .map(PartySet::singleton)
            .chain(random_events(seed, s.registry().len(), 3))
            .collect();
        for e in events {
            let i = event_bounds(&s, e, Some(c)).unwrap();
            let o = oracle_constrained_bounds(&s, e, c, step).unwrap();
            // the grid sits inside the box, so its extremes never escape the closed form
            prop_assert!(i.lower <= o.lower + 1e-9 && o.upper <= i.upper + 1e-9, "{:?} vs {:?}", i, o);
            prop_assert!(o.lower - i.lower <= step && i.upper - o.upper <= step, "{:?} vs {:?}", i, o);
            if let Some(j) = e.only() {
                prop_assert_eq!(per_option.intervals[j], i);
            }
        }
    }
}

#[test]
fn vacuous_constraint_matches_completion_oracle() {
    for seed in 0..20 {
        let spec = CorpusSpec { max_set_size: 3, max_undecided: 8, ..CorpusSpec::default() };
        let s = random_small_survey(seed, &spec);
        for j in 0..s.registry().len() {
            let e = PartySet::singleton(j);
            let a = oracle_completion_bounds(&s, e).unwrap();
            let b = oracle_constrained_bounds(&s, e, AllocationConstraint::VACUOUS, 0.01).unwrap();
            assert!((a.lower - b.lower).abs() <= 0.01 && (a.upper - b.upper).abs() <= 0.01);
        }
    }
}
