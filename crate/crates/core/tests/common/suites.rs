//! Finite-difference gradient cases for every layer and complex activation.

use super::{grad_check, random_tensor, rng, GradReport};
use hybridse::autodiff::{CVar, ConvGeom, Graph, Var};
use hybridse::layers::{crelu, ctanh, ComplexLayer, ConvF, ConvTF, CReluVariant, Gru, Init, Linear, ParamStore};
use hybridse::{Shape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const CASES: u64 = 100;
pub const REL_TOL: f64 = 1e-4;

pub fn build<T>(seed: u64, f: impl FnOnce(&mut Init) -> T) -> (ParamStore, T) {
    let mut store = ParamStore::new();
    let mut r = rng(seed);
    let layer = f(&mut Init {
        store: &mut store,
        rng: &mut r,
    });
    (store, layer)
}

/// Runs `CASES` seeds; returns the worst relative error and the first
/// failing seed.
pub fn run_suite(case: fn(u64) -> GradReport) -> (f64, Option<u64>) {
    let mut worst: f64 = 0.0;
    let mut failed = None;
    for seed in 0..CASES {
        let rep = case(seed);
        worst = worst.max(rep.worst_rel);
        if !rep.passed && failed.is_none() {
            failed = Some(seed);
        }
    }
    (worst, failed)
}

pub const SUITES: [(&str, fn(u64) -> GradReport); 11] = [
    ("linear", linear),
    ("conv_f", conv),
    ("convT_f", conv_transpose),
    ("gru", gru),
    ("complex linear", complex_linear),
    ("complex conv_f", complex_conv),
    ("complex convT_f", complex_conv_transpose),
    ("complex gru", complex_gru),
    ("cReLU", crelu_printed),
    ("cReLU corrected", crelu_corrected),
    ("cTanh", ctanh_case),
];

fn sizes(seed: u64) -> ChaCha8Rng {
    rng(1000 + seed)
}

fn real_input(r: &mut ChaCha8Rng, c: usize, f: usize, t: usize) -> Tensor {
    random_tensor(r, Shape::new(1, c, f, t))
}

fn geom(r: &mut ChaCha8Rng) -> ConvGeom {
    let kernel = r.gen_range(1..=5);
    let stride = r.gen_range(1..=3);
    let pad = r.gen_range(0..kernel);
    ConvGeom { kernel, stride, pad }
}

/// Transposed geometry and input extent with a non-empty output.
fn transposed(r: &mut ChaCha8Rng, max_f: usize) -> (ConvGeom, usize, usize) {
    loop {
        let gm = geom(r);
        let op = r.gen_range(0..gm.stride);
        let f = r.gen_range(2..max_f);
        if gm.convt_out(f, op).is_some() {
            return (gm, op, f);
        }
    }
}

fn complex_out(z: CVar) -> Vec<Var> {
    vec![z.re, z.im]
}

pub fn linear(seed: u64) -> GradReport {
    let mut r = sizes(seed);
    let (i, o, t) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..4));
    let (store, l) = build(seed, |init| Linear::new(init, "fc", i, o).unwrap());
    let x = real_input(&mut r, 1, i, t);
    grad_check(&store, &[x], &|g, p, xs| Ok(vec![l.forward(g, p, xs[0])?]), seed, REL_TOL)
}

pub fn conv(seed: u64) -> GradReport {
    let mut r = sizes(seed);
    let gm = geom(&mut r);
    let (ci, co, t) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..3));
    let f = r.gen_range(gm.kernel.max(2)..gm.kernel + 6);
    let (store, l) = build(seed, |init| ConvF::new(init, "c", ci, co, gm).unwrap());
    let x = real_input(&mut r, ci, f, t);
    grad_check(&store, &[x], &|g, p, xs| Ok(vec![l.forward(g, p, xs[0])?]), seed, REL_TOL)
}

pub fn conv_transpose(seed: u64) -> GradReport {
    let mut r = sizes(seed);
    let (gm, op, f) = transposed(&mut r, 7);
    let (ci, co, t) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..3));
    let (store, l) = build(seed, |init| ConvTF::new(init, "t", ci, co, gm, op).unwrap());
    let x = real_input(&mut r, ci, f, t);
    grad_check(&store, &[x], &|g, p, xs| Ok(vec![l.forward(g, p, xs[0])?]), seed, REL_TOL)
}

pub fn gru(seed: u64) -> GradReport {
    let mut r = sizes(seed);
    let (i, h, t) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
    let (store, l) = build(seed, |init| Gru::new(init, "g", i, h).unwrap());
    let x = real_input(&mut r, 1, i, t);
    grad_check(&store, &[x], &|g, p, xs| Ok(vec![l.forward(g, p, xs[0])?]), seed, REL_TOL)
}

pub fn complex_linear(seed: u64) -> GradReport {
    let mut r = sizes(seed);
    let (i, o, t) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..3));
    let (store, l) = build(seed, |init| ComplexLayer::<Linear>::new(init, "fc", i, o).unwrap());
    let xs = [real_input(&mut r, 1, i, t), real_input(&mut r, 1, i, t)];
    grad_check(&store, &xs, &|g, p, xs| Ok(complex_out(l.forward(g, p, CVar::new(xs[0], xs[1]))?)), seed, REL_TOL)
}

pub fn complex_conv(seed: u64) -> GradReport {
    let mut r = sizes(seed);
    let gm = geom(&mut r);
    let (ci, co) = (r.gen_range(1..3), r.gen_range(1..3));
    let f = r.gen_range(gm.kernel.max(2)..gm.kernel + 4);
    let (store, l) = build(seed, |init| ComplexLayer::<ConvF>::new(init, "c", ci, co, gm).unwrap());
    let xs = [real_input(&mut r, ci, f, 1), real_input(&mut r, ci, f, 1)];
    grad_check(&store, &xs, &|g, p, xs| Ok(complex_out(l.forward(g, p, CVar::new(xs[0], xs[1]))?)), seed, REL_TOL)
}

pub fn complex_conv_transpose(seed: u64) -> GradReport {
    let mut r = sizes(seed);
    let (gm, op, f) = transposed(&mut r, 6);
    let (ci, co) = (r.gen_range(1..3), r.gen_range(1..3));
    let (store, l) = build(seed, |init| ComplexLayer::<ConvTF>::new(init, "t", ci, co, gm, op).unwrap());
    let xs = [real_input(&mut r, ci, f, 1), real_input(&mut r, ci, f, 1)];
    grad_check(&store, &xs, &|g, p, xs| Ok(complex_out(l.forward(g, p, CVar::new(xs[0], xs[1]))?)), seed, REL_TOL)
}

pub fn complex_gru(seed: u64) -> GradReport {
    let mut r = sizes(seed);
    let (i, h, t) = (r.gen_range(1..3), r.gen_range(1..3), r.gen_range(1..4));
    let (store, l) = build(seed, |init| ComplexLayer::<Gru>::new(init, "g", i, h).unwrap());
    let xs = [real_input(&mut r, 1, i, t), real_input(&mut r, 1, i, t)];
    grad_check(&store, &xs, &|g, p, xs| Ok(complex_out(l.forward(g, p, CVar::new(xs[0], xs[1]))?)), seed, REL_TOL)
}

fn activation(seed: u64, act: impl Fn(&mut Graph, CVar) -> hybridse::Result<CVar>) -> GradReport {
    let store = ParamStore::new();
    let mut r = sizes(seed);
    let shape = Shape::new(1, r.gen_range(1..3), r.gen_range(1..5), r.gen_range(1..3));
    let xs = [random_tensor(&mut r, shape).map(|v| 3.0 * v), random_tensor(&mut r, shape).map(|v| 3.0 * v)];
    grad_check(&store, &xs, &|g, _, xs| Ok(complex_out(act(g, CVar::new(xs[0], xs[1]))?)), seed, REL_TOL)
}

pub fn crelu_printed(seed: u64) -> GradReport {
    activation(seed, |g, z| crelu(g, z, CReluVariant::Printed))
}

pub fn crelu_corrected(seed: u64) -> GradReport {
    activation(seed, |g, z| crelu(g, z, CReluVariant::Corrected))
}

pub fn ctanh_case(seed: u64) -> GradReport {
    activation(seed, ctanh)
}
