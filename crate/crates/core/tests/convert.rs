use hybridse::autodiff::{CVar, Graph};
use hybridse::convert::{
    cart_c2r, cart_r2c, fold_freq_to_channel, g_cart_c2r, g_cart_r2c, g_fold, g_unfold, mag_convert,
    unfold_channel_to_freq,
};
use hybridse::{ComplexTensor, Shape, Tensor};
use proptest::prelude::*;

fn tensor(shape: Shape, data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data).unwrap()
}

/// A shape with even frequency extent and matching random data.
fn even_freq() -> impl Strategy<Value = Tensor> {
    (1usize..3, 1usize..4, 1usize..5, 1usize..4).prop_flat_map(|(b, c, h, t)| {
        let shape = Shape::new(b, c, 2 * h, t);
        prop::collection::vec(-1e3f64..1e3, shape.numel()).prop_map(move |d| tensor(shape, d))
    })
}

fn complex() -> impl Strategy<Value = ComplexTensor> {
    (1usize..3, 1usize..4, 1usize..5, 1usize..4).prop_flat_map(|(b, c, f, t)| {
        let shape = Shape::new(b, c, f, t);
        let n = shape.numel();
        (prop::collection::vec(-1e3f64..1e3, n), prop::collection::vec(-1e3f64..1e3, n))
            .prop_map(move |(re, im)| ComplexTensor::new(tensor(shape, re), tensor(shape, im)).unwrap())
    })
}

proptest! {
    #[test]
    fn cartesian_round_trips_are_exact(r in even_freq(), z in complex()) {
        prop_assert_eq!(cart_c2r(&cart_r2c(&r).unwrap()).unwrap(), r);
        prop_assert_eq!(cart_r2c(&cart_c2r(&z).unwrap()).unwrap(), z);
    }

    #[test]
    fn fold_round_trips_are_exact(r in even_freq()) {
        let folded = fold_freq_to_channel(&r).unwrap();
        let [b, c, f, t] = r.shape().0;
        prop_assert_eq!(folded.shape(), Shape::new(b, 2 * c, f / 2, t));
        prop_assert_eq!(unfold_channel_to_freq(&folded).unwrap(), r);
    }

    #[test]
    fn magnitude_is_phase_invariant(z in complex(), theta in -10.0f64..10.0) {
        let (c, s) = (theta.cos(), theta.sin());
        let re = z.re.zip_with(&z.im, |a, b| a * c - b * s).unwrap();
        let im = z.re.zip_with(&z.im, |a, b| a * s + b * c).unwrap();
        let rotated = ComplexTensor::new(re, im).unwrap();
        let (m0, m1) = (mag_convert(&z), mag_convert(&rotated));
        for (a, b) in m0.data().iter().zip(m1.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn graph_conversions_agree(r in even_freq()) {
        let mut g = Graph::new();
        let v = g.constant(r.clone());
        let z = g_cart_r2c(&mut g, v).unwrap();
        prop_assert_eq!(g.complex_value(z), cart_r2c(&r).unwrap());
        let back = g_cart_c2r(&mut g, CVar::new(z.re, z.im)).unwrap();
        prop_assert_eq!(g.value(back), &r);
        let f = g_fold(&mut g, v).unwrap();
        prop_assert_eq!(g.value(f), &fold_freq_to_channel(&r).unwrap());
        let u = g_unfold(&mut g, f).unwrap();
        prop_assert_eq!(g.value(u), &r);
    }
}

#[test]
fn odd_extents_are_rejected() {
    let r = Tensor::zeros(Shape::new(1, 1, 3, 1));
    assert!(cart_r2c(&r).is_err());
    assert!(fold_freq_to_channel(&r).is_err());
    assert!(unfold_channel_to_freq(&Tensor::zeros(Shape::new(1, 3, 2, 1))).is_err());
}
