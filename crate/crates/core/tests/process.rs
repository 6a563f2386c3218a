use proptest::prelude::*;
use spinfk::process::*;

proptest! {
    #[test]
    fn spin_is_parity_of_jump_count(seed in any::<u64>(), rate in 0.1f64..5.0, t_max in 0.01f64..4.0, up in any::<bool>(), probes in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let sigma0 = if up { 1 } else { -1 };
        let spin = SpinPath::new(sigma0, sample_jumps(rate, t_max, seed).unwrap()).unwrap();
        let mut times: Vec<f64> = probes.iter().map(|u| u * t_max).collect();
        times.extend(spin.jumps.jump_times.iter().copied());
        for t in times {
            let n = spin.jumps.count(t) as u32;
            prop_assert_eq!(spin_at(&spin, t, Side::Right).unwrap(), sigma0 * (-1i8).pow(n));
        }
    }

    #[test]
    fn jump_times_are_increasing_and_inside(seed in any::<u64>(), rate in 0.1f64..10.0, t_max in 0.0f64..3.0) {
        let j = sample_jumps(rate, t_max, seed).unwrap();
        prop_assert!(j.jump_times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(j.jump_times.iter().all(|&s| s > 0.0 && s <= t_max));
        prop_assert_eq!(j.count(t_max), j.total());
    }

    #[test]
    fn sampling_is_deterministic(master in any::<u64>(), index in any::<u64>(), n in 1usize..40) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let a = sample_path_pair(master, index, &[0.0, 1.0], grid, 1, 1.0).unwrap();
        let b = sample_path_pair(master, index, &[0.0, 1.0], grid, 1, 1.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn path_positions_are_running_sums(seed in any::<u64>(), n in 1usize..30) {
        let grid = TimeGrid::new(0.7, n).unwrap();
        let p = sample_brownian(&[0.3], grid, seed);
        let mut x = 0.3;
        for i in 0..n {
            x += p.increment(i)[0];
            prop_assert!((p.position(i + 1)[0] - x).abs() <= 1e-12);
        }
    }
}

#[test]
fn different_indices_give_different_paths() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let (a, _) = sample_path_pair(5, 0, &[0.0], grid, 1, 1.0).unwrap();
    let (b, _) = sample_path_pair(5, 1, &[0.0], grid, 1, 1.0).unwrap();
    assert_ne!(a.end(), b.end());
}

#[test]
fn statistics_pass_at_moderate_size() {
    let r = process_statistics(20_000, 11).unwrap();
    for c in &r.checks {
        assert!(c.pass, "{c:?}");
    }
    assert!(r.chi_square.pass, "{:?}", r.chi_square);
    assert_eq!(r.parity_violations, 0);
}

#[test]
fn chi_square_rejects_the_wrong_mean() {
    let counts: Vec<usize> = (0..20_000u64).map(|i| sample_jumps(1.0, 1.0, 1000 + i).unwrap().total()).collect();
    assert!(poisson_chi_square(&counts, 1.0, 1e-3).pass);
    assert!(!poisson_chi_square(&counts, 1.2, 1e-3).pass);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(sample_jumps(0.0, 1.0, 1).is_err());
    assert!(JumpRecord::new(1.0, 1.0, vec![0.5, 0.4]).is_err());
    assert!(JumpRecord::new(1.0, 1.0, vec![1.5]).is_err());
    assert!(SpinPath::new(0, JumpRecord::new(1.0, 1.0, vec![]).unwrap()).is_err());
    assert!(TimeGrid::new(f64::NAN, 3).is_err());
}
