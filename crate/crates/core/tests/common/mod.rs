//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod suites;

use std::path::PathBuf;

use hybridse::arch::ModelSpec;
use hybridse::autodiff::{compare_gradients, finite_difference_grad, Graph, Var};
use hybridse::layers::{Bound, ParamStore};
use hybridse::{Result, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform values in `[-0.5, 0.5)` from a 64-bit LCG. Matches the fixture
/// generator in `tools/gen_fixtures.py`.
pub fn lcg(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Harmonic tone with 3 Hz on/off bursts, 16 kHz.
pub fn voiced(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / 16000.0;
            let env = (2.0 * std::f64::consts::PI * 3.0 * t).sin().max(0.0).powi(2);
            let x: f64 = (1..=10)
                .map(|h| (2.0 * std::f64::consts::PI * h as f64 * 140.0 * t).sin() / h as f64)
                .sum();
            env * x
        })
        .collect()
}

pub fn fixture(name: &str) -> serde_json::Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

pub fn floats(v: &serde_json::Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

pub fn config(name: &str) -> ModelSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ModelSpec::load(path).unwrap()
}

pub const SHIPPED: [&str; 6] = ["rcdae", "ccdae", "hcdae", "rcrn", "ccrn", "hcrn"];

pub fn shipped(name: &str) -> ModelSpec {
    config(&format!("{name}.toml"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Random real toy spec: even seeds give a CDAE, odd seeds a CRN.
pub fn random_real_spec(seed: u64) -> ModelSpec {
    let mut r = rng(seed);
    let crn = seed % 2 == 1;
    let enc: Vec<usize> = (0..4).map(|_| r.gen_range(8..=48)).collect();
    let mut dec: Vec<usize> = (0..3).map(|_| r.gen_range(8..=48)).collect();
    dec.push(1);
    let fmt = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
    let (family, extra) = if crn {
        let g = r.gen_range(16..=64);
        // Real input stacks re and im: 258 rows, bottleneck extent 16.
        let f = hybridse::arch::bottleneck_freq(2 * hybridse::dsp::stft::BINS, hybridse::autodiff::ConvGeom { kernel: 8, stride: 2, pad: 3 }, 4).unwrap();
        ("crn", format!("gru = [{g}, {g}]\nlinear = {}\n", enc[3] * f))
    } else {
        ("cdae", String::new())
    };
    let text = format!(
        "version = 1\nname = \"rRand{seed}\"\nfamily = \"{family}\"\ndomain = \"real\"\nkernel_f = 8\nstride_f = 2\npad_f = 3\n\n[real]\nencoder = [{}]\n{extra}decoder = [{}]\n",
        fmt(&enc),
        fmt(&dec)
    );
    ModelSpec::from_toml(&text).unwrap_or_else(|e| panic!("{text}\n{e}"))
}

/// Forward function used by [`grad_check`]: builds outputs from bound
/// parameters and input variables.
pub type Forward<'a> = dyn Fn(&mut Graph, &Bound, &[Var]) -> Result<Vec<Var>> + 'a;

/// Largest relative error seen and whether every coordinate passed.
#[derive(Debug)]
pub struct GradReport {
    pub worst_rel: f64,
    pub worst_abs: f64,
    pub passed: bool,
}

/// Checks backpropagated gradients of `Σ_k ⟨w_k, out_k⟩` (random fixed
/// `w_k`) against central differences, for every parameter and every input.
pub fn grad_check(store: &ParamStore, inputs: &[Tensor], forward: &Forward, seed: u64, rel_tol: f64) -> GradReport {
    grad_check_eps(store, inputs, forward, seed, rel_tol, 1e-6)
}

/// [`grad_check`] with an explicit finite-difference step.
pub fn grad_check_eps(
    store: &ParamStore,
    inputs: &[Tensor],
    forward: &Forward,
    seed: u64,
    rel_tol: f64,
    eps: f64,
) -> GradReport {
    let mut r = rng(seed);
    let shapes: Vec<Shape> = {
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let xs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        forward(&mut g, &p, &xs).unwrap().into_iter().map(|v| g.shape(v)).collect()
    };
    let weights: Vec<Tensor> = shapes.iter().map(|&s| random_tensor(&mut r, s)).collect();

    let objective = |g: &mut Graph, outs: Vec<Var>| -> Result<Var> {
        let mut total = g.scalar(0.0);
        for (o, w) in outs.into_iter().zip(&weights) {
            let w = g.constant(w.clone());
            let d = g.mul(o, w)?;
            let s = g.sum(d)?;
            total = g.add(total, s)?;
        }
        Ok(total)
    };
    let eval = |store: &ParamStore, inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let xs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let outs = forward(&mut g, &p, &xs)?;
        let l = objective(&mut g, outs)?;
        Ok(g.value(l).item())
    };

    let mut g = Graph::new();
    let p = store.bind(&mut g, true);
    let xs: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let outs = forward(&mut g, &p, &xs).unwrap();
    let l = objective(&mut g, outs).unwrap();
    let grads = g.backward(l).unwrap();

    let mut report = GradReport {
        worst_rel: 0.0,
        worst_abs: 0.0,
        passed: true,
    };
    let mut judge = |analytic: Option<&Tensor>, numeric: Tensor| {
        let zero = Tensor::zeros(numeric.shape());
        let c = compare_gradients(analytic.unwrap_or(&zero), &numeric, rel_tol, 1e-8, 1e-6);
        report.worst_rel = report.worst_rel.max(c.worst_rel);
        report.worst_abs = report.worst_abs.max(c.worst_abs);
        report.passed &= c.passed;
    };
    for (id, _, t) in store.iter() {
        let numeric = finite_difference_grad(
            |probe| {
                let mut s = store.clone();
                s.set(id, probe.clone())?;
                eval(&s, inputs)
            },
            t,
            eps,
        )
        .unwrap();
        judge(grads.get(p.var(id)), numeric);
    }
    for (k, x) in inputs.iter().enumerate() {
        let numeric = finite_difference_grad(
            |probe| {
                let mut v = inputs.to_vec();
                v[k] = probe.clone();
                eval(store, &v)
            },
            x,
            eps,
        )
        .unwrap();
        judge(grads.get(xs[k]), numeric);
    }
    report
}

/// Toy hybrid CDAE used by the training tests (16563 parameters).
pub const TOY_HCDAE: &str = r#"
version = 1
name = "toy-hCDAE"
family = "cdae"
domain = "hybrid"
kernel_f = 8
stride_f = 2
pad_f = 3

[real]
encoder = [8, 16, 16, 16]
decoder = [16, 8, 8, 1]

[complex]
encoder = [4, 8, 8, 8]
decoder = [8, 4, 4, 1]
"#;

/// Smallest valid complex CDAE, for fast pipeline tests.
pub const TINY_CCDAE: &str = r#"
version = 1
name = "tiny-cCDAE"
family = "cdae"
domain = "complex"
kernel_f = 8
stride_f = 2
pad_f = 3

[complex]
encoder = [2, 2, 2, 2]
decoder = [2, 2, 2, 1]
"#;
