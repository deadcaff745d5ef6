use owpn::bounds::{lower_coherent_combining, lower_partially_coherent, upper_outer};
use owpn::gdof::{
    gdof_exact_if_known, gdof_inner_cc, gdof_inner_combined, gdof_inner_pc, gdof_outer,
};
use owpn::riccati::{riccati_fixed_point, riccati_step, FisherState};
use owpn::{ChannelParams, GdofPoint};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ChannelParams> {
    (-3.0f64..8.0, 0u32..12, -4.0f64..2.0).prop_map(|(lp, ll, ls)| {
        ChannelParams::new(10f64.powf(lp), 1 << ll, 10f64.powf(ls)).unwrap()
    })
}

proptest! {
    #[test]
    fn lower_bounds_stay_below_outer(p in params()) {
        let up = upper_outer(&p).total();
        let pc = lower_partially_coherent(&p).total();
        let cc = lower_coherent_combining(&p).total();
        prop_assert!(pc <= up + 1e-12, "pc {pc} > outer {up}");
        prop_assert!(cc <= up + 1e-12, "cc {cc} > outer {up}");
    }

    #[test]
    fn coherence_constants_in_unit_interval(p in params()) {
        let c = p.coherence();
        for v in [c.xi, c.kappa, c.phi] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(c.phi >= c.kappa * c.kappa - 1e-14);
    }

    #[test]
    fn gdof_sandwich(alpha in 0.0f64..4.0, beta in -3.0f64..3.0) {
        let pt = GdofPoint::new(alpha, beta).unwrap();
        let outer = gdof_outer(&pt).total;
        let pc = gdof_inner_pc(&pt).total;
        let cc = gdof_inner_cc(&pt).total;
        let comb = gdof_inner_combined(&pt).total;
        prop_assert!((comb - pc.max(cc)).abs() < 1e-12);
        prop_assert!(comb <= outer + 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&comb));
        if let Some((exact, _)) = gdof_exact_if_known(&pt) {
            prop_assert!((exact.total - comb).abs() < 1e-12);
        }
    }

    #[test]
    fn riccati_fixed_point_is_fixed(lx in -3.0f64..4.0, lr in -3.0f64..6.0) {
        let (x, r) = (10f64.powf(lx), 10f64.powf(lr));
        let j = riccati_fixed_point(x, r).unwrap();
        let next = riccati_step(&FisherState::new(j, x, r).unwrap()).j;
        prop_assert!((next - j).abs() <= 1e-10 * (1.0 + j));
        prop_assert!(j >= x);
    }
}
