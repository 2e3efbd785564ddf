use cdit::bounds::*;
use cdit::Error;
use proptest::prelude::*;

// Reference values evaluated at 40 significant digits with mpmath.
fn close(got: f64, want: f64) {
    let tol = 1e-10 * want.abs().max(1.0);
    assert!((got - want).abs() <= tol, "got {got:e}, want {want:e}");
}

#[test]
fn epsilon_omega_pi_reference_values() {
    close(epsilon_omega_pi(0.1, 0.95, 5), 0.959_632_437_499_999_936_83);
    close(epsilon_omega_pi(0.3, 0.9, 3), 1.763_400_000_000_000_004_4);
    close(epsilon_omega_pi(0.1, 1.0, 5), 1.1);
    for d in 0..6 {
        close(epsilon_omega_pi(0.7, 0.0, d), 0.7);
    }
    assert_eq!(epsilon_omega_pi(0.0, 0.95, 5), 0.0);
}

#[test]
fn geometric_forms_reference_values() {
    close(delta_u(1.0, 0.95, 5), 4.524_381_249_999_999_598_7);
    close(v_max(2.0, 0.8, 7), 7.902_848_000_000_000_939_9);
    assert_eq!(delta_u(1.0, 1.0, 5), 5.0);
    assert_eq!(v_max(3.0, 0.0, 1), 3.0);
}

#[test]
fn k_constants_reference_values() {
    let k = k_constants(0.1, 100, 1.0, 1.0);
    close(k.k_max, -0.075);
    close(k.k_acute, -0.075);
    assert!(k.vacuous);
    let k = k_constants(2.0, 10_000, 1.5, 1.2);
    close(k.k_max, 0.267_777_777_777_777_788_06);
    close(k.k_acute, 0.235_702_260_395_515_841_47);
    assert!(!k.vacuous);
    assert!(k.k_acute <= k.k_max);
    // Large-C limit.
    let k = k_constants(1.0, usize::MAX, 2.0, 1.0);
    assert!((k.k_max - 0.125).abs() < 1e-9);
}

#[test]
fn escfr_epsilon_reference_values() {
    close(escfr_epsilon(0.5, &[1.0, 1.0], &[2, 2], 10, 1, 100).unwrap(), 12.0);
    let v = delta_u(1.0, 0.95, 5);
    close(
        escfr_epsilon(0.05, &[v, v], &[6, 6], 100, 5, 1000).unwrap(),
        5_280_459_489_440.013_549,
    );
    let e1 = escfr_epsilon(0.5, &[1.0, 2.0], &[2, 3], 10, 2, 100).unwrap();
    let e4 = escfr_epsilon(0.5, &[1.0, 2.0], &[2, 3], 10, 2, 400).unwrap();
    assert!((e1 / e4 - 2.0).abs() < 1e-12);
    assert!(matches!(escfr_epsilon(2.0, &[1.0], &[2], 10, 1, 100), Err(Error::InvalidArgument(_))));
    assert!(matches!(escfr_epsilon(0.5, &[1.0, 1.0], &[2, 1], 10, 1, 100), Err(Error::StipulationViolated(_))));
}

#[test]
fn sigma_and_probability_reference_values() {
    assert_eq!(sigma_size(4, 4, 2), 273.0);
    close(sigma_size(36, 16, 5), 63_513_647_714_881.0);

    let pr = theorem_probabilities(2000, 1, &[0.1, 0.12], sigma_size(4, 4, 1), 0.01);
    close(pr.theorem1.raw, 0.340_430_840_819_661_495_05);
    close(pr.theorem2.raw, -10.214_365_827_154_978_22);
    close(pr.final_bound.raw, -21.445_351_412_131_509_169);
    assert!(!pr.theorem1.was_clamped);
    assert!(pr.theorem2.was_clamped && pr.theorem2.clamped == 0.0);

    let pr = theorem_probabilities(100, 5, &[-0.075, 0.2], sigma_size(36, 16, 5), 0.05);
    close(pr.theorem1.raw, -20_479_999_999_999_999.0);
    close(pr.theorem2.raw, -1.324_583_746_579_108_602_8e30);
    close(pr.final_bound.raw, -2.601_519_010_401_525_76e30);
}

#[test]
fn zero_k_gives_vacuous_probability() {
    let pr = theorem_probabilities(10, 1, &[0.0, 0.0], 17.0, 0.1);
    assert!(pr.theorem1.raw <= 0.0);
    assert!(pr.theorem1.was_clamped);
    assert_eq!(pr.theorem1.clamped, 0.0);
}

#[test]
fn probability_eventually_increases_in_c() {
    let ks = [0.2, 0.25];
    let sigma = sigma_size(4, 4, 2);
    let probs: Vec<f64> = (1..=60)
        .map(|i| theorem_probabilities(i * 500, 2, &ks, sigma, 0.01).theorem1.raw)
        .collect();
    let start = probs.iter().position(|&p| p > 0.0).expect("bound becomes informative");
    for w in probs[start..].windows(2) {
        assert!(w[1] >= w[0]);
    }
    assert!(1.0 - probs.last().unwrap() < 1e-6);
}

#[test]
fn nashconv_bound_assembles_both_terms() {
    assert_eq!(nashconv_bound(0.25, 0.5), 3.0);
}

#[test]
fn m_sqrt_a_bound_on_exhaustive_grid() {
    for a in 2..=6 {
        for c in 2..=100 {
            for d in 0..=8 {
                let lhs = m_i(a, c, d) * info_set_action_count(a, d).sqrt();
                let rhs = m_sqrt_a_closed_form(a, c, d);
                assert!(lhs <= rhs * (1.0 + 1e-12), "a={a} c={c} d={d}: {lhs} > {rhs}");
            }
        }
    }
    close(m_i(6, 100, 5), 790_779_661.0);
    assert_eq!(info_set_action_count(6, 5), 9331.0);
    close(m_sqrt_a_closed_form(6, 100, 5), 10_077_696_000_000.0);
}

#[test]
fn geometric_sum_dominated_by_next_power() {
    for x in 2u64..=20 {
        for d in 0u32..=12 {
            let sum: u64 = (0..=d).map(|k| x.pow(k)).sum();
            assert!(sum <= x.pow(d + 1));
        }
    }
}

proptest! {
    #[test]
    fn epsilon_omega_pi_monotone(l in 0.01f64..2.0, g in 0.0f64..0.99, d in 0usize..8, dl in 0.01f64..1.0, dg in 0.001f64..0.01) {
        let base = epsilon_omega_pi(l, g, d);
        prop_assert!(epsilon_omega_pi(l + dl, g, d) > base);
        prop_assert!(epsilon_omega_pi(l, g, d + 1) >= base);
        prop_assert!(epsilon_omega_pi(l, g + dg, d) >= base);
    }

    #[test]
    fn escfr_epsilon_monotone(p in 0.01f64..0.99, a in 2usize..7, c in 1usize..200, d in 0usize..5, t in 1u64..10_000) {
        let e = |c: usize, d: usize, t: u64| escfr_epsilon(p, &[1.0, 1.0], &[a, 2], c, d, t).unwrap();
        let base = e(c, d, t);
        prop_assert!(e(c, d, t + 1) < base);
        prop_assert!(e(c + 1, d, t) > base);
        prop_assert!(e(c, d + 1, t) > base);
    }
}
