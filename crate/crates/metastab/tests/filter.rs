//! Spectral filter kernel: frozen-value checks against an independent
//! quadrature oracle, normalization/band-gap certificates, and the
//! defining identities of the derived tables m(E) and g(ω).

use approx::assert_abs_diff_eq;
use metastab::swt::FilterTables;

const NMAX: usize = 10_000;

fn tables(delta: f64) -> FilterTables {
    FilterTables::new(delta, NMAX).expect("filter construction")
}

#[test]
fn coefficient_normalizer_matches_oracle() {
    let t = tables(1.0);
    assert_abs_diff_eq!(t.c1(), 0.160_784_970_716_719_6, epsilon = 1e-12);
    assert!(t.c1() >= 0.159 && t.c1() <= 0.163);
}

#[test]
fn amplitude_constant_matches_oracle() {
    let t = tables(1.0);
    assert_abs_diff_eq!(t.c_delta(), 0.080_196_499_122_140_29, epsilon = 1e-9);
}

#[test]
fn compact_frequency_support_edge() {
    let t = tables(1.0);
    assert_abs_diff_eq!(t.support_edge(), 0.482_542_993_611_188_24, epsilon = 1e-12);
    assert!(t.support_edge() < 0.5, "kernel must be bandlimited below Δ/2");
    // the shortfall Δ/4 − Σ a_n equals the c1 tail allowance a1/ln(n_max)
    let defect = 0.25 - t.support_edge() / 2.0;
    assert_abs_diff_eq!(defect, 8.728_503_194_405_879e-3, epsilon = 1e-12);
}

#[test]
fn time_domain_samples_match_oracle() {
    let t = tables(1.0);
    for (time, expect) in [
        (1.0, 0.039_909_534_745_951_2),
        (10.0, 0.024_757_360_535_072_7),
        (100.0, 4.315_570_292_617_317_5e-7),
        (700.0, 5.223_011_591_552_609_5e-22),
    ] {
        let got = t.w_of(time);
        assert!(
            (got - expect).abs() <= 1e-9 * expect.max(1e-18),
            "w({time}) = {got:e}, oracle {expect:e}"
        );
    }
}

#[test]
fn melt_function_samples_match_oracle() {
    let t = tables(1.0);
    for (e, expect) in [
        (0.05, 0.111_415_539_730_248_73),
        (0.10, 0.375_095_570_837_856_6),
        (0.20, 0.867_828_870_777_533),
        (0.25, 0.966_127_118_913_690_7),
        (0.40, 0.999_999_999_908_226_9),
    ] {
        assert_abs_diff_eq!(t.m_of(e), expect, epsilon = 1e-9);
        // interpolated table agrees with direct quadrature well inside the grid
        assert_abs_diff_eq!(t.m_of(e), t.m_quadrature(e), epsilon = 1e-9);
    }
}

#[test]
fn certificate_normalization_and_band_gap() {
    let t = tables(1.0);
    let cert = t.certify();
    assert!(
        cert.integral_defect.abs() <= 1e-6,
        "∫w − 1 = {:e}",
        cert.integral_defect
    );
    assert!(
        cert.band_leak_max <= 1e-8,
        "|ŵ| beyond the band edge reached {:e}",
        cert.band_leak_max
    );
    assert!(cert.c1 >= 0.159 && cert.c1 <= 0.163, "c1 = {}", cert.c1);
    assert!(
        cert.tail_bound_margin_min > 0.0,
        "late-time envelope bound violated: margin {:e}",
        cert.tail_bound_margin_min
    );
}

#[test]
fn melt_function_is_monotone_and_saturates() {
    let t = tables(1.0);
    let mut prev = t.m_of(0.0);
    assert!(prev.abs() <= 1e-12, "m(0) = {prev:e}");
    let mut e = 0.0;
    while e < 0.6 {
        e += 0.6 / 480.0;
        let cur = t.m_of(e);
        assert!(cur >= prev - 1e-12, "m not monotone at E = {e}: {cur} < {prev}");
        prev = cur;
    }
    assert_abs_diff_eq!(t.m_of(0.55), 1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(t.m_of(3.0), 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(t.w_hat(0.75), 0.0, epsilon = 1e-10);
}

#[test]
fn generator_weight_is_odd_bounded_and_vanishes_at_zero() {
    let t = tables(1.0);
    assert_eq!(t.g_of(0.0), 0.0);
    let mut max_g = 0.0f64;
    let mut e = 1e-4;
    while e < 3.0 {
        let g = t.g_of(e);
        assert_abs_diff_eq!(t.g_of(-e), -g, epsilon = 1e-14);
        max_g = max_g.max(g.abs());
        e *= 1.05;
    }
    // honest frozen bound for the product kernel (argmax near 0.167Δ)
    assert!(max_g <= 4.5, "max |g|·Δ = {max_g}");
    assert!(max_g >= 4.4, "max |g|·Δ = {max_g} fell below the frozen value 4.4666");
}

#[test]
fn scale_covariance_in_delta() {
    // w_Δ(t) = Δ · w_1(Δt)  and  m_Δ(E) = m_1(E/Δ)
    let t1 = tables(1.0);
    let t3 = tables(3.0);
    for time in [0.3, 1.0, 4.0] {
        assert_abs_diff_eq!(t3.w_of(time), 3.0 * t1.w_of(3.0 * time), epsilon = 1e-10);
    }
    for e in [0.1, 0.4, 0.9] {
        assert_abs_diff_eq!(t3.m_of(e), t1.m_of(e / 3.0), epsilon = 1e-9);
    }
}

#[test]
fn rejects_bad_parameters() {
    assert!(FilterTables::new(0.0, NMAX).is_err());
    assert!(FilterTables::new(-1.0, NMAX).is_err());
    assert!(FilterTables::new(f64::NAN, NMAX).is_err());
    assert!(FilterTables::new(1.0, 10).is_err());
}
