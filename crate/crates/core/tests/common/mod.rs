//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use unlearn_lab::dataset::{PairedExample, Prompt};
use unlearn_lab::metrics::{frechet_distance, kl_divergence, GaussianStats, KL_FLOOR};
use unlearn_lab::model::{loss_and_grads, mean_nll, ModelConfig, ModelParams};
use unlearn_lab::numerics::{psd_sqrt, NodeId};
use unlearn_lab::seed::{rng, sub_seed, Rng};
use unlearn_lab::unlearn::{ga_unlearn, random_relabel, Method, UnlearnConfig};
use unlearn_lab::{Graph, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn random_tensor(r: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| StandardNormal.sample(r)).collect()).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Reduces any matrix node to a scalar through fixed random weights, so
/// every output entry contributes to the checked gradient.
fn project(g: &mut Graph, x: NodeId, seed: u64) -> NodeId {
    let (rows, cols) = {
        let v = g.value(x);
        (v.rows(), v.len() / v.rows().max(1))
    };
    let mut r = rng(seed);
    let right = g.constant(random_tensor(&mut r, &[cols, 1]));
    let left = g.constant(random_tensor(&mut r, &[1, rows]));
    let col = g.matmul(x, right).unwrap();
    g.matmul(left, col).unwrap()
}

/// Central-difference check of `d loss / d inputs` for a graph builder.
/// Returns the max relative error over every input entry.
pub fn check_builder(inputs: &[Tensor], build: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId) -> f64 {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &ids);
    let mut grads = g.backward(loss).unwrap();
    let analytic: Vec<Tensor> = ids.iter().map(|&i| grads.take_or_zeros(i).unwrap()).collect();
    let eval = |xs: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let l = build(&mut g, &ids);
        g.value(l).item()
    };
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        for e in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[e] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[e] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[k].data()[e], numeric));
        }
    }
    worst
}

/// Finite-difference errors for every autodiff primitive, by name.
pub fn primitive_gradient_errors() -> Vec<(&'static str, f64)> {
    let mut r = rng(20);
    let mut out = Vec::new();
    let a = random_tensor(&mut r, &[3, 4]);
    let b = random_tensor(&mut r, &[4, 5]);
    out.push(("matmul", check_builder(&[a.clone(), b], &|g, x| {
        let y = g.matmul(x[0], x[1]).unwrap();
        project(g, y, 1)
    })));
    let c = random_tensor(&mut r, &[3, 4]);
    out.push(("add", check_builder(&[a.clone(), c], &|g, x| {
        let y = g.add(x[0], x[1]).unwrap();
        project(g, y, 2)
    })));
    let bias = random_tensor(&mut r, &[4]);
    out.push(("add_bias", check_builder(&[a.clone(), bias.clone()], &|g, x| {
        let y = g.add_bias(x[0], x[1]).unwrap();
        project(g, y, 3)
    })));
    out.push(("scale", check_builder(&[a.clone()], &|g, x| {
        let y = g.scale(x[0], -1.7).unwrap();
        project(g, y, 4)
    })));
    out.push(("transpose", check_builder(&[a.clone()], &|g, x| {
        let y = g.transpose(x[0]).unwrap();
        project(g, y, 5)
    })));
    let table = random_tensor(&mut r, &[6, 3]);
    out.push(("embedding", check_builder(&[table], &|g, x| {
        let y = g.embedding(x[0], &[4, 0, 4, 2, 5]).unwrap();
        project(g, y, 6)
    })));
    let gain = random_tensor(&mut r, &[4]);
    out.push(("layer_norm", check_builder(&[a.clone(), gain, bias], &|g, x| {
        let y = g.layer_norm(x[0], x[1], x[2]).unwrap();
        project(g, y, 7)
    })));
    out.push(("gelu", check_builder(&[a.scale(2.0)], &|g, x| {
        let y = g.gelu(x[0]).unwrap();
        project(g, y, 8)
    })));
    out.push(("softmax", check_builder(&[a.clone()], &|g, x| {
        let y = g.softmax(x[0]).unwrap();
        project(g, y, 9)
    })));
    // two blocks of length 3, two heads of width 2
    let q = random_tensor(&mut r, &[6, 4]);
    let k = random_tensor(&mut r, &[6, 4]);
    let v = random_tensor(&mut r, &[6, 4]);
    out.push(("causal_attention", check_builder(&[q, k, v], &|g, x| {
        let y = g.causal_attention(x[0], x[1], x[2], 3, 2).unwrap();
        project(g, y, 10)
    })));
    let logits = random_tensor(&mut r, &[4, 5]);
    out.push(("cross_entropy", check_builder(&[logits], &|g, x| {
        g.cross_entropy(x[0], &[1, 4, 0, 2], &[true, false, true, true]).unwrap()
    })));
    out.push(("normalize_rows", check_builder(&[a], &|g, x| {
        let y = g.normalize_rows(x[0]).unwrap();
        project(g, y, 11)
    })));
    out
}

/// Finite differences through the full 2-layer conditional transformer
/// (mean nll of a small batch) for every parameter entry.
pub fn network_gradient_error() -> f64 {
    let cfg = ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 2,
        d_ff: 12,
        vocab: 6,
        genres: 2,
        moods: 2,
        seq_len: 5,
        init_seed: 4,
    };
    let mut params = ModelParams::init(&cfg).unwrap();
    // the zero head would hide every upstream gradient
    let mut r = rng(5);
    for t in params.tensors_mut() {
        for x in t.data_mut() {
            let z: f64 = StandardNormal.sample(&mut r);
            *x += 0.3 * z;
        }
    }
    let batch: Vec<PairedExample> = (0..3)
        .map(|i| PairedExample::new(Prompt::new(i % 2, (i + 1) % 2), (0..5).map(|_| r.random_range(0..6)).collect()))
        .collect();
    let refs: Vec<&PairedExample> = batch.iter().collect();
    let (_, grads) = loss_and_grads(&params, &refs).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..params.tensors().len() {
        for e in 0..params.tensors()[k].len() {
            let mut p = params.clone();
            p.tensors_mut()[k].data_mut()[e] += FD_STEP;
            let up = mean_nll(&p, &batch).unwrap();
            p.tensors_mut()[k].data_mut()[e] -= 2.0 * FD_STEP;
            let down = mean_nll(&p, &batch).unwrap();
            worst = worst.max(rel_err(grads[k].data()[e], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Upper-tail chi-square critical value at significance 0.001 via the
/// Wilson–Hilferty approximation.
pub fn chi_square_critical_001(dof: f64) -> f64 {
    let z = 3.090_232_306_167_813;
    let t = 2.0 / (9.0 * dof);
    dof * (1.0 - t + z * t.sqrt()).powi(3)
}

pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

/// Worst errors of the metric kernels against closed forms.
#[derive(Debug)]
pub struct MetricOracleErrors {
    pub frechet_1d: f64,
    pub frechet_diagonal: f64,
    pub kl_vs_sum: f64,
    pub kl_min: f64,
    pub psd_sqrt: f64,
}

fn random_distribution(r: &mut Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn metric_oracle_errors() -> MetricOracleErrors {
    let mut r = rng(30);
    let gauss = |mean: Vec<f64>, var: &[f64]| GaussianStats {
        mean,
        cov: Tensor::diag(var),
        n: 2,
    };

    let mut frechet_1d: f64 = 0.0;
    for _ in 0..100 {
        let (m1, m2) = (r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
        let (s1, s2): (f64, f64) = (r.random_range(0.01..4.0), r.random_range(0.01..4.0));
        let fd = frechet_distance(&gauss(vec![m1], &[s1 * s1]), &gauss(vec![m2], &[s2 * s2])).unwrap();
        let want = (m1 - m2).powi(2) + (s1 - s2).powi(2);
        frechet_1d = frechet_1d.max((fd - want).abs());
    }

    let mut frechet_diagonal: f64 = 0.0;
    for d in [2, 5, 16, 32] {
        for _ in 0..10 {
            let m1: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let m2: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let s1: Vec<f64> = (0..d).map(|_| r.random_range(0.05..3.0)).collect();
            let s2: Vec<f64> = (0..d).map(|_| r.random_range(0.05..3.0)).collect();
            let v1: Vec<f64> = s1.iter().map(|s| s * s).collect();
            let v2: Vec<f64> = s2.iter().map(|s| s * s).collect();
            let want: f64 = m1.iter().zip(&m2).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                + s1.iter().zip(&s2).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let fd = frechet_distance(&gauss(m1, &v1), &gauss(m2, &v2)).unwrap();
            frechet_diagonal = frechet_diagonal.max((fd - want).abs());
        }
    }

    let mut kl_vs_sum: f64 = 0.0;
    let mut kl_min = f64::INFINITY;
    for i in 0..10_000 {
        let n = 2 + i % 15;
        let p = random_distribution(&mut r, n);
        let q = random_distribution(&mut r, n);
        let kl = kl_divergence(&p, &q).unwrap();
        let direct: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b.max(KL_FLOOR)).ln()).sum();
        kl_vs_sum = kl_vs_sum.max((kl - direct).abs());
        kl_min = kl_min.min(kl);
    }

    let mut psd: f64 = 0.0;
    for n in 1..=32 {
        let b = random_tensor(&mut r, &[n, n]);
        let a = b.matmul(&b.transpose().unwrap()).unwrap();
        let s = psd_sqrt(&a).unwrap();
        psd = psd.max(s.matmul(&s).unwrap().max_abs_diff(&a));
    }

    MetricOracleErrors {
        frechet_1d,
        frechet_diagonal,
        kl_vs_sum,
        kl_min,
        psd_sqrt: psd,
    }
}

/// Relabeling draws pooled over repeated passes of a forget set.
#[derive(Debug)]
pub struct RelabelStats {
    pub draws: usize,
    pub chi_square: f64,
    pub critical: f64,
    pub collision_rate: f64,
    /// Four-sigma binomial interval around `1 / vocab`.
    pub collision_bounds: (f64, f64),
}

pub fn relabel_statistics(forget: &[PairedExample], vocab: usize, min_draws: usize, seed: u64) -> RelabelStats {
    let mut r = rng(seed);
    let mut counts = vec![0u64; vocab];
    let (mut draws, mut collisions) = (0usize, 0usize);
    while draws < min_draws {
        for (orig, re) in forget.iter().zip(random_relabel(forget, vocab, &mut r).unwrap()) {
            assert_eq!(orig.prompt, re.prompt);
            for (&y, &t) in orig.tokens.iter().zip(&re.y_tilde) {
                counts[t] += 1;
                collisions += usize::from(y == t);
                draws += 1;
            }
        }
    }
    let p = 1.0 / vocab as f64;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    RelabelStats {
        draws,
        chi_square: chi_square_uniform(&counts),
        critical: chi_square_critical_001((vocab - 1) as f64),
        collision_rate: collisions as f64 / draws as f64,
        collision_bounds: (p - 4.0 * sigma, p + 4.0 * sigma),
    }
}

/// Runs `trials` one-step GA updates with different batch seeds and counts
/// those after which the full forget-set loss has not decreased.
pub fn ga_single_step_trials(theta: &ModelParams, forget: &[PairedExample], lr: f64, trials: u64) -> usize {
    let before = mean_nll(theta, forget).unwrap();
    (0..trials)
        .filter(|&t| {
            let mut cfg = UnlearnConfig::new(Method::Ga);
            cfg.max_steps = 1;
            cfg.lr = lr;
            cfg.seed = sub_seed(t, "ga-trial");
            let (after, trace) = ga_unlearn(theta, forget, &cfg).unwrap();
            assert_eq!(trace.steps(), 1);
            mean_nll(&after, forget).unwrap() >= before
        })
        .count()
}
