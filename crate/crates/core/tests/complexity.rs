mod common;

use common::{shipped, SHIPPED};
use hybridse::arch::{Model, Plan};
use hybridse::autodiff::{ActivationCosts, Branch, CVar, Graph};
use hybridse::complexity::{
    calibrate_kernel, compare, count_macs, count_params, instrumented_macs, stored_scalars, with_kernel,
    DEFAULT_FRAMES,
};
use hybridse::layers::{ComplexLayer, Init, Linear, ParamStore};
use hybridse::{Error, Shape, Tensor};

/// Totals of the shipped configs (kernel 8, stride 2), in order of [`SHIPPED`].
const PARAMS: [usize; 6] = [172_641, 170_746, 171_329, 848_097, 811_402, 816_753];

/// Published totals the calibration targets.
const TARGETS: [f64; 6] = [173_300.0, 171_500.0, 172_200.0, 816_000.0, 815_000.0, 816_000.0];

#[test]
fn linear_layer_macs() {
    let mut store = ParamStore::new();
    let mut rng = common::rng(0);
    let mut init = Init {
        store: &mut store,
        rng: &mut rng,
    };
    let real = Linear::new(&mut init, "r", 10, 20).unwrap();
    let cplx = ComplexLayer::<Linear>::new(&mut init, "c", 10, 20).unwrap();
    let mut g = Graph::with_mac_counter(ActivationCosts::ZERO);
    let p = store.bind(&mut g, false);
    let x = g.constant(Tensor::ones(Shape::new(1, 1, 10, 1)));
    real.forward(&mut g, &p, x).unwrap();
    g.set_branch(Branch::Complex);
    cplx.forward(&mut g, &p, CVar::new(x, x)).unwrap();
    let m = g.macs().unwrap();
    assert_eq!((m.real, m.complex), (200, 800));
}

#[test]
fn shipped_parameter_totals() {
    for (name, want) in SHIPPED.iter().zip(PARAMS) {
        let spec = shipped(name);
        let model = Model::build(&spec, 0).unwrap();
        let report = count_params(&model.plan);
        assert_eq!(report.params, want, "{name}");
        assert_eq!(stored_scalars(&model), want, "{name}");
        assert_eq!(report.rows.iter().map(|r| r.params).sum::<usize>(), want);
    }
}

#[test]
fn totals_within_five_percent_of_targets() {
    for ((name, p), t) in SHIPPED.iter().zip(PARAMS).zip(TARGETS) {
        let dev = p as f64 / t - 1.0;
        assert!(dev.abs() < 0.05, "{name}: {:+.2}%", 100.0 * dev);
    }
}

#[test]
fn analytic_equals_instrumented() {
    for costs in [ActivationCosts::default(), ActivationCosts::ZERO] {
        for name in SHIPPED {
            let spec = shipped(name);
            let model = Model::build(&spec, 0).unwrap();
            for frames in [1, 7] {
                let analytic = count_macs(&spec, frames, &costs).unwrap();
                let counted = instrumented_macs(&model, frames, &costs).unwrap();
                assert_eq!(
                    (analytic.macs_real, analytic.macs_complex),
                    (counted.real, counted.complex),
                    "{name} at {frames} frames"
                );
            }
        }
    }
}

#[test]
fn macs_scale_linearly_with_frames() {
    for name in SHIPPED {
        let spec = shipped(name);
        let one = count_macs(&spec, 1, &ActivationCosts::default()).unwrap();
        let many = count_macs(&spec, DEFAULT_FRAMES, &ActivationCosts::default()).unwrap();
        assert_eq!(many.macs_total(), one.macs_total() * DEFAULT_FRAMES as u64);
    }
}

fn total(name: &str, frames: usize, costs: &ActivationCosts) -> u64 {
    count_macs(&shipped(name), frames, costs).unwrap().macs_total()
}

#[test]
fn mac_ordering_and_hybrid_minimality() {
    for costs in [ActivationCosts::default(), ActivationCosts::ZERO] {
        for frames in [1, 100, DEFAULT_FRAMES] {
            let m = |n: &str| total(n, frames, &costs);
            assert!(m("hcdae") < m("ccdae") && m("ccdae") < m("rcdae"), "CDAE at {frames}");
            assert!(m("hcrn") < m("rcrn") && m("rcrn") < m("ccrn"), "CRN at {frames}");
            for family in [["rcdae", "ccdae", "hcdae"], ["rcrn", "ccrn", "hcrn"]] {
                let reports = family
                    .iter()
                    .map(|n| count_macs(&shipped(n), frames, &costs).unwrap())
                    .collect();
                let c = compare(reports).unwrap();
                assert_eq!(c.lowest, 2);
                assert!(c.to_text().lines().nth(3).unwrap().ends_with("*lowest"));
            }
        }
    }
}

#[test]
fn hybrid_reports_split_by_branch() {
    let r = count_macs(&shipped("hcdae"), DEFAULT_FRAMES, &ActivationCosts::default()).unwrap();
    assert!(r.macs_real > 0 && r.macs_complex > 0);
    assert_eq!(r.rows[0].name, "real.input_mag");
    let real = count_macs(&shipped("rcdae"), 10, &ActivationCosts::default()).unwrap();
    assert_eq!(real.macs_complex, 0);
    let cplx = count_macs(&shipped("ccdae"), 10, &ActivationCosts::default()).unwrap();
    assert_eq!(cplx.macs_real, 0);
}

#[test]
fn invalid_requests() {
    assert!(matches!(count_macs(&shipped("rcdae"), 0, &ActivationCosts::default()), Err(Error::Spec(_))));
    let one = count_macs(&shipped("rcdae"), 10, &ActivationCosts::default()).unwrap();
    assert!(compare(vec![one]).is_err());
}

#[test]
fn kernel_calibration_selects_eight() {
    let pick = |names: [&str; 3], targets: &[f64]| {
        let specs: Vec<_> = names.iter().zip(targets).map(|(n, &t)| (shipped(n), t)).collect();
        calibrate_kernel(&specs, 3..=10)
    };
    let cdae = pick(["rcdae", "ccdae", "hcdae"], &TARGETS[..3]);
    assert_eq!(cdae[0].kernel, 8);
    let crn = pick(["rcrn", "ccrn", "hcrn"], &TARGETS[3..]);
    assert_eq!(crn[0].kernel, 8);
    for s in cdae.iter().chain(&crn) {
        assert!(s.deviation >= cdae[0].deviation.min(crn[0].deviation));
    }
}

#[test]
fn with_kernel_keeps_crn_linear_size() {
    let rcrn = shipped("rcrn");
    for k in 3..=10 {
        if let Some(s) = with_kernel(&rcrn, k) {
            assert_eq!(s.real, rcrn.real);
            Plan::new(&s).unwrap();
        }
    }
    let same = with_kernel(&rcrn, 8).unwrap();
    assert_eq!(same.pad_f, 1);
}
