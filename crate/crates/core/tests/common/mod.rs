#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use voinet::control::riccati_backward;
use voinet::harness::{InitialState, InputMode, ScenarioConfig};
use voinet::model::PlantModel;
use voinet::scheduling::{NetworkTopology, Policy};
use voinet::unknown_input::WeightScales;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, scale: f64, floor: f64) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n, 1.0);
    (&g * g.transpose()) * scale + DMatrix::identity(n, n) * floor
}

/// Random model passing validation, with the given dimensions.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> PlantModel {
    loop {
        let model = PlantModel {
            a: gaussian_matrix(rng, n, n, 0.8 / (n as f64).sqrt()),
            b: gaussian_matrix(rng, n, p, 1.0),
            c: gaussian_matrix(rng, m, n, 1.0),
            w: random_pd(rng, n, 0.05, 0.01),
            v: random_pd(rng, m, 0.05, 0.02),
            omega0: random_pd(rng, n, 0.2, 0.05),
            q: random_pd(rng, n, 0.5, 0.5),
            r: random_pd(rng, p, 0.5, 0.5),
            terminal: random_pd(rng, n, 0.5, 0.5),
        };
        if model.validate().is_empty() {
            return model;
        }
    }
}

/// Two loops, three unit-delay hops, sampled initial states, dVoI at every hop
/// with multipliers scaled so that roughly half of the steps transmit.
pub fn random_multi_hop_scenario(seed: u64, horizon: usize) -> ScenarioConfig {
    let mut r = rng(seed);
    let plants = vec![random_model(&mut r, 3, 2, 1), random_model(&mut r, 2, 1, 2)];
    let scale: f64 = plants
        .iter()
        .map(|p| {
            let g = riccati_backward(p, horizon).unwrap();
            (&g.gamma[horizon / 2] * &p.w).trace()
        })
        .fold(f64::INFINITY, f64::min);
    let lambda = (0..3).map(|_| scale * r.random_range(0.2..2.0)).collect();
    ScenarioConfig {
        name: format!("random-{seed}"),
        notes: String::new(),
        plants,
        topology: NetworkTopology {
            loop_hops: vec![3, 3],
            delays: vec![0, 1, 1, 1],
            lambda,
            budgets: vec![2.0 * horizon as f64; 3],
            horizon,
        },
        policies: vec![Policy::Dvoi; 3],
        input_mode: InputMode::Oracle,
        initial_state: InitialState::Sampled,
        estimator_weights: WeightScales::default(),
        seed,
        runs: 10,
    }
}

/// Conditional mean of `x_k` given `y_0..y_k` for known inputs, by Gaussian
/// conditioning over the stacked unknowns `[x_0, w_0, .., w_{k-1}]`.
pub fn batch_estimate(model: &PlantModel, ys: &[DVector<f64>], us: &[DVector<f64>]) -> DVector<f64> {
    let (n, m) = (model.c.ncols(), model.c.nrows());
    let k = ys.len() - 1;
    let dim = n * (k + 1);
    let mut prior = DMatrix::zeros(dim, dim);
    prior.view_mut((0, 0), (n, n)).copy_from(&model.omega0);
    for i in 0..k {
        prior.view_mut((n * (i + 1), n * (i + 1)), (n, n)).copy_from(&model.w);
    }
    // x_t = H_t z + d_t
    let mut h = vec![DMatrix::zeros(n, dim)];
    h[0].view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    let mut d = vec![DVector::zeros(n)];
    for t in 0..k {
        let mut next = &model.a * &h[t];
        let mut block = next.view_mut((0, n * (t + 1)), (n, n));
        block += DMatrix::<f64>::identity(n, n);
        h.push(next);
        d.push(&model.a * &d[t] + &model.b * &us[t]);
    }
    let mut g = DMatrix::zeros(m * (k + 1), dim);
    let mut offset = DVector::zeros(m * (k + 1));
    let mut vblk = DMatrix::zeros(m * (k + 1), m * (k + 1));
    let mut yvec = DVector::zeros(m * (k + 1));
    for t in 0..=k {
        g.view_mut((m * t, 0), (m, dim)).copy_from(&(&model.c * &h[t]));
        offset.rows_mut(m * t, m).copy_from(&(&model.c * &d[t]));
        vblk.view_mut((m * t, m * t), (m, m)).copy_from(&model.v);
        yvec.rows_mut(m * t, m).copy_from(&ys[t]);
    }
    let cov_y = &g * &prior * g.transpose() + vblk;
    let gain = (&h[k] * &prior * g.transpose()) * cov_y.try_inverse().unwrap();
    &d[k] + gain * (yvec - offset)
}

/// Input-estimation objective evaluated by plain forward simulation of the filter.
pub fn estimator_objective(
    model: &PlantModel,
    x_start: &DVector<f64>,
    gains: &[DMatrix<f64>],
    ys: &[DVector<f64>],
    inputs: &[DVector<f64>],
    qe: &DMatrix<f64>,
    re: &DMatrix<f64>,
) -> f64 {
    let mut x = x_start.clone();
    let mut total = 0.0;
    for ((gain, y), u) in gains.iter().zip(ys).zip(inputs) {
        let pred = &model.a * &x + &model.b * u;
        let resid = y - &model.c * &pred;
        total += (resid.transpose() * qe * &resid)[(0, 0)] + (u.transpose() * re * u)[(0, 0)];
        x = &pred + gain * resid;
    }
    total
}

/// Entrywise second moments `E[a b^T]` normalized by `sqrt(E[a_r^2] E[b_c^2])`.
pub fn normalized_cross_moment(pairs: &[(DVector<f64>, DVector<f64>)], offset: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let count = pairs.len() as f64;
    let (ra, rb) = (pairs[0].0.len(), pairs[0].1.len());
    let mut cross = DMatrix::zeros(ra, rb);
    let mut va = DVector::zeros(ra);
    let mut vb = DVector::zeros(rb);
    for (a, b) in pairs {
        cross += a * b.transpose();
        va += a.component_mul(a);
        vb += b.component_mul(b);
    }
    cross /= count;
    va /= count;
    vb /= count;
    if let Some(o) = offset {
        cross -= o;
    }
    DMatrix::from_fn(ra, rb, |r, c| {
        let s = (va[r] * vb[c]).sqrt();
        if s > 0.0 {
            cross[(r, c)] / s
        } else {
            0.0
        }
    })
}

pub fn second_moment(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples[0].len();
    samples.iter().fold(DMatrix::zeros(n, n), |acc, s| acc + s * s.transpose()) / samples.len() as f64
}
