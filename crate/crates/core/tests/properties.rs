mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use qubo_bo::solver::{PoolEntry, SamplePool};
use qubo_bo::*;

fn space_strategy() -> impl Strategy<Value = DesignSpace> {
    prop::collection::vec(2usize..=40, 1..=4)
        .prop_map(|k| DesignSpace::from_cardinalities(&k).unwrap())
}

fn space_and_assignment() -> impl Strategy<Value = (DesignSpace, Vec<usize>)> {
    space_strategy().prop_flat_map(|space| {
        let idx: Vec<_> = space.sites().iter().map(|s| 0..s.cardinality).collect();
        (Just(space), idx)
    })
}

fn sample_strategy(max_bits: usize) -> impl Strategy<Value = CoefficientSample> {
    (2..=max_bits).prop_flat_map(|n| {
        let p = 1 + n + n * (n - 1) / 2;
        prop::collection::vec(-5.0f64..5.0, p)
            .prop_map(move |v| CoefficientSample::new(n, v).unwrap())
    })
}

fn distinct_rows(n: usize, max_rows: usize) -> impl Strategy<Value = Vec<(u64, f64)>> {
    prop::collection::btree_map(0u64..1 << n, -3.0f64..3.0, 2..=max_rows)
        .prop_map(|m| m.into_iter().collect())
}

fn dataset(n: usize, rows: &[(u64, f64)]) -> Dataset {
    let mut d = Dataset::new(n);
    for &(m, y) in rows {
        d.push(BitVector::from_mask(m, n), y, 0).unwrap();
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn encode_decode_round_trip((space, a) in space_and_assignment()) {
        let x = encode(&space, &a).unwrap();
        prop_assert_eq!(x.len(), space.total_bits());
        let d = decode(&space, &x).unwrap();
        prop_assert!(d.feasible);
        prop_assert_eq!(&d.indices, &a);
        prop_assert_eq!(decode_reference(&space, x.as_slice()), Some(a));
    }

    #[test]
    fn penalties_are_sound_and_complete(k in 2usize..=200) {
        let space = DesignSpace::from_cardinalities(&[k]).unwrap();
        let spec = build_penalty_spec(&space);
        let b = space.total_bits();
        for code in 0..1usize << b {
            let bits: Vec<u8> = (0..b).map(|p| ((code >> (b - 1 - p)) & 1) as u8).collect();
            let hit = spec.pair_terms.iter().any(|t| bits[t.i] == 1 && bits[t.j] == 1);
            if code < k {
                prop_assert!(!hit, "valid code {} penalized", code);
            } else {
                prop_assert_eq!(hit, !spec.residual_for(0).contains(&code));
            }
        }
    }

    #[test]
    fn predict_is_a_feature_dot_product(alpha in sample_strategy(9), mask in any::<u64>()) {
        let n = alpha.n_bits();
        let x = BitVector::from_mask(mask & ((1 << n) - 1), n);
        let want: f64 = features(x.as_slice()).iter().zip(alpha.values()).map(|(f, a)| f * a).sum();
        let got = predict(&alpha, &x).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
        let row = design_row(&alpha.feature_map(), &x).unwrap();
        let dense: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        prop_assert_eq!(dense, features(x.as_slice()));
    }

    #[test]
    fn acquisition_matches_surrogate_off_penalties(
        alpha in sample_strategy(8),
        k in 2usize..=7,
        mask in any::<u64>(),
    ) {
        let n = alpha.n_bits();
        let site = DesignSpace::from_cardinalities(&[k]).unwrap();
        prop_assume!(site.total_bits() <= n);
        // one constrained site in the leading bits, free binary sites after it
        let mut cards = vec![k];
        cards.extend(std::iter::repeat_n(2, n - site.total_bits()));
        let space = DesignSpace::from_cardinalities(&cards).unwrap();
        let spec = build_penalty_spec(&space);
        let q = build_acquisition(&alpha, &spec).unwrap();
        let x = BitVector::from_mask(mask & ((1 << n) - 1), n);
        let active = spec.pair_terms.iter().any(|t| x.get(t.i) && x.get(t.j));
        if !active {
            prop_assert_eq!(energy(&q, &x).unwrap(), predict(&alpha, &x).unwrap());
        } else {
            let c = q.quadratic_coef(spec.pair_terms[0].i, spec.pair_terms[0].j);
            prop_assert!(c >= 2.0 * alpha.max());
        }
        prop_assert!((energy(&q, &x).unwrap() - qubo_value(&q, x.as_slice())).abs() <= 1e-9);
    }

    #[test]
    fn posterior_mean_solves_the_normal_equations(
        n in 2usize..=6,
        rows in distinct_rows(6, 40),
        lambda in prop::sample::select(vec![1e-2, 1.0]),
    ) {
        let rows: Vec<(u64, f64)> = rows
            .into_iter()
            .map(|(m, y)| (m & ((1 << n) - 1), y))
            .collect::<std::collections::BTreeMap<_, _>>()
            .into_iter()
            .collect();
        let data = dataset(n, &rows);
        let post = fit_posterior(&data, lambda, 0.0).unwrap();
        let xs: Vec<Vec<u8>> = rows.iter().map(|(m, _)| bits_of(*m, n)).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let (a, b) = normal_equations(&xs, &ys, lambda);
        let mu = gauss_solve(a, b);
        for (u, v) in post.mean().iter().zip(&mu) {
            prop_assert!((u - v).abs() <= 1e-8, "{} vs {}", u, v);
        }
    }

    #[test]
    fn r_squared_ignores_row_order(rows in distinct_rows(5, 30), rot in 0usize..30) {
        let data = dataset(5, &rows);
        let mut shuffled = rows.clone();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        shuffled.reverse();
        let other = dataset(5, &shuffled);
        let a = r_squared(&fit_posterior(&data, 1e-2, 0.0).unwrap(), &data);
        let b = r_squared(&fit_posterior(&other, 1e-2, 0.0).unwrap(), &other);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-9),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn batch_selection_invariants(
        pool_masks in prop::collection::vec(0u64..1 << 8, 1..60),
        known in prop::collection::btree_set(0u64..1 << 8, 0..20),
        batch in 1usize..15,
    ) {
        let space = DesignSpace::from_cardinalities(&[6, 29]).unwrap();
        let n = space.total_bits();
        let pool = SamplePool {
            entries: pool_masks
                .iter()
                .enumerate()
                .map(|(k, &m)| PoolEntry { x: BitVector::from_mask(m, n), energy: k as f64, multiplicity: 1 })
                .collect(),
            backend: "test".into(),
            reads: 1,
            sweeps: None,
            beta: None,
            enumerated: false,
        };
        let mut data = Dataset::new(n);
        for &m in &known {
            let x = BitVector::from_mask(m, n);
            if is_feasible(&space, &x).unwrap() {
                data.push(x, 0.0, 0).unwrap();
            }
        }
        let out = select_batch(&pool, &space, &data, batch).unwrap();
        prop_assert!(out.points.len() <= batch);
        let mut seen = HashSet::new();
        let mut last = f64::NEG_INFINITY;
        for p in &out.points {
            prop_assert!(decode_reference(&space, p.x.as_slice()).is_some());
            prop_assert!(!data.contains(&p.x));
            prop_assert!(seen.insert(p.x.clone()));
            prop_assert!(p.energy > last);
            last = p.energy;
        }
        let eligible: HashSet<_> = pool.entries.iter()
            .filter(|e| decode_reference(&space, e.x.as_slice()).is_some() && !data.contains(&e.x))
            .map(|e| e.x.clone())
            .collect();
        prop_assert_eq!(out.points.len(), eligible.len().min(batch));
        prop_assert_eq!(out.shortfall, eligible.len() < batch);
    }

    #[test]
    fn random_batches_are_fresh_and_feasible(seed in any::<u64>(), size in 1usize..40) {
        let space = DesignSpace::from_cardinalities(&[3, 5, 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = random_batch(&space, &Dataset::new(space.total_bits()), size, &mut rng).unwrap();
        let mut data = Dataset::new(space.total_bits());
        for x in &first {
            data.push(x.clone(), 0.0, 0).unwrap();
        }
        prop_assert_eq!(first.len(), size);
        let second = random_batch(&space, &data, size, &mut rng).unwrap();
        for x in &second {
            prop_assert!(is_feasible(&space, x).unwrap());
            prop_assert!(!data.contains(x));
        }
        prop_assert_eq!(second.iter().collect::<HashSet<_>>().len(), second.len());
    }

    #[test]
    fn qubo_text_round_trips(alpha in sample_strategy(7)) {
        let q = build_acquisition(&alpha, &PenaltySpec::default()).unwrap();
        prop_assert_eq!(QuboProblem::from_text(&q.to_text()).unwrap(), q);
    }

    #[test]
    fn bit_strings_round_trip(bits in prop::collection::vec(0u8..2, 1..64)) {
        let x = BitVector::from_bits(&bits);
        let s = x.to_string();
        prop_assert_eq!(s.len(), bits.len());
        prop_assert_eq!(s.parse::<BitVector>().unwrap(), x);
    }

    #[test]
    fn orientation_round_trips(v in -1e6f64..1e6) {
        for o in [Orientation::Minimize, Orientation::Maximize] {
            prop_assert_eq!(o.reported(o.internal(v)), v);
        }
        prop_assert_eq!(Orientation::Maximize.internal(v), -v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), sigma2 in prop::sample::select(vec![0.0, 4e-3])) {
        let space = DesignSpace::from_cardinalities(&[3, 6]).unwrap();
        let cfg = RunConfig {
            objective: make_synthetic(seed, space.total_bits(), SyntheticKind::Qubo, &SyntheticParams::default()).unwrap(),
            space,
            lambda: 1e-2,
            sigma2_grid: vec![sigma2],
            loops: 3,
            batch_size: 2,
            solver: SolverConfig::exhaustive(),
            initial: InitialData::Random { size: 4 },
            master_seed: seed,
            threshold: 0.0,
        };
        let a = run_bo(&cfg, sigma2).unwrap();
        let b = run_bo(&cfg, sigma2).unwrap();
        prop_assert_eq!(&a.records, &b.records);
        prop_assert!(a.records.iter().all(|r| r.proposals.len() <= 2));
    }
}
