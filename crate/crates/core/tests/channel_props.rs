use proptest::prelude::*;
use rpluw::channel::*;

fn env_with(wind: f64, shipping: f64) -> Environment {
    Environment { wind_speed_mps: wind, shipping_factor: shipping, ..Environment::default() }
}

#[test]
fn chain_energy_matches_brute_force_sum() {
    let unit = 0.37;
    for n in 1..=100u32 {
        let got = linear_chain_energy(WaterGeometry::Shallow, RelayMode::MultiHop, n, 50.0, unit, 1).unwrap();
        let want: f64 = (1..=n).map(|i| i as f64 * unit).sum();
        assert!((got - want).abs() <= 1e-9 * want, "n={n}: {got} vs {want}");
    }
}

#[test]
fn deep_loss_is_pure_spreading_without_absorption() {
    assert_eq!(deep_loss(1000.0, 0.0, 0.0).unwrap(), 60.0);
    for r in [1.0, 10.0, 37.5, 150.0, 2500.0] {
        assert_eq!(deep_loss(r, 0.0, 0.0).unwrap(), 20.0 * f64::log10(r));
    }
}

proptest! {
    #[test]
    fn noise_total_bounded_by_components(
        f in 0.1..100.0f64,
        wind in 0.0..=10.0f64,
        ship in 0.0..=1.0f64,
    ) {
        let n = ambient_noise(&env_with(wind, ship), f).unwrap();
        let loudest = [n.turbulence_db, n.shipping_db, n.wind_db, n.thermal_db]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(n.total_db >= loudest - 1e-12);
        prop_assert!(n.total_db <= loudest + 10.0 * 4f64.log10() + 1e-12);
    }

    #[test]
    fn noise_nondecreasing_in_wind_and_shipping(
        f in 0.1..100.0f64,
        w1 in 0.0..=10.0f64,
        w2 in 0.0..=10.0f64,
        s1 in 0.0..=1.0f64,
        s2 in 0.0..=1.0f64,
    ) {
        let (wlo, whi) = (w1.min(w2), w1.max(w2));
        let (slo, shi) = (s1.min(s2), s1.max(s2));
        let base = ambient_noise(&env_with(wlo, slo), f).unwrap().total_db;
        let windier = ambient_noise(&env_with(whi, slo), f).unwrap().total_db;
        let busier = ambient_noise(&env_with(wlo, shi), f).unwrap().total_db;
        prop_assert!(windier >= base);
        prop_assert!(busier >= base);
    }

    #[test]
    fn capacity_decreases_with_noise(
        rx_db in 40.0..160.0f64,
        n1 in 0.0..120.0f64,
        n2 in 0.0..120.0f64,
        b in 100.0..100_000.0f64,
    ) {
        let (quiet, loud) = (n1.min(n2), n1.max(n2));
        let c_quiet = shannon_capacity(b, db_to_linear(rx_db - quiet)).unwrap();
        let c_loud = shannon_capacity(b, db_to_linear(rx_db - loud)).unwrap();
        prop_assert!(c_loud <= c_quiet);
    }

    #[test]
    fn attenuation_linear_and_decreasing(alpha in 0.01..50.0f64, d1 in 0.0..1000.0f64, d2 in 0.0..1000.0f64) {
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        let a_lo = attenuation_at_depth(alpha, lo);
        let a_hi = attenuation_at_depth(alpha, hi);
        prop_assert!(a_hi <= a_lo);
        let mid = attenuation_at_depth(alpha, (lo + hi) / 2.0);
        prop_assert!((mid - (a_lo + a_hi) / 2.0).abs() < 1e-9 * alpha.max(1.0));
    }

    #[test]
    fn shallow_loss_zero_at_reference(r in 0.001..1e5f64, k in 5.0..20.0f64) {
        prop_assert_eq!(shallow_loss(r, r, k).unwrap(), 0.0);
    }

    #[test]
    fn delay_total_is_exact_component_sum(
        hops in prop::collection::vec(0.0..500.0f64, 1..20),
        c in 1400.0..1600.0f64,
        bits in 8.0..4096.0f64,
        rate in 100.0..50_000.0f64,
        proc_s in 0.0..0.1f64,
        queue_s in 0.0..1.0f64,
    ) {
        let d = delay(&hops, c, bits, rate, proc_s, queue_s).unwrap();
        prop_assert_eq!(d.total_s, d.processing_s + d.queuing_s + d.propagation_s + d.transmission_s);
        prop_assert!(d.processing_s >= 0.0 && d.queuing_s >= 0.0);
        prop_assert!(d.propagation_s >= 0.0 && d.transmission_s >= 0.0);
    }

    #[test]
    fn sound_speed_rises_with_temperature(step in 0usize..40) {
        let at = |t: f64| sound_speed(
            &Environment { temperature_celsius: t, salinity_ppt: 35.0, ..Environment::default() },
            0.0,
            SoundSpeedMode::MackenzieCorrected,
        );
        let t = step as f64 * 0.5;
        prop_assert!(at(t + 0.5) > at(t));
    }
}
