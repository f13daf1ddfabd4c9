//! Plant models, validation, seeded Gaussian noise and ZOH discretization.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{complex_rank, is_pd, is_psd, is_symmetric, psd_sqrt, to_complex};
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;
const DEFINITENESS_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-8;

/// Discrete LTI plant with its noise statistics and LQG cost weights.
///
/// Serialized with matrices as row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    #[serde(with = "rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b: DMatrix<f64>,
    #[serde(with = "rows")]
    pub c: DMatrix<f64>,
    /// Process noise covariance.
    #[serde(with = "rows")]
    pub w: DMatrix<f64>,
    /// Measurement noise covariance.
    #[serde(with = "rows")]
    pub v: DMatrix<f64>,
    /// Initial-state covariance.
    #[serde(with = "rows")]
    pub omega0: DMatrix<f64>,
    #[serde(with = "rows")]
    pub q: DMatrix<f64>,
    #[serde(with = "rows")]
    pub r: DMatrix<f64>,
    /// Terminal state weight.
    #[serde(with = "rows")]
    pub terminal: DMatrix<f64>,
}

/// List of violated model invariants; empty when the model is usable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.contains(needle))
    }

    pub fn into_result(self) -> Result<()> {
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(self.issues))
        }
    }
}

impl PlantModel {
    /// Scalar model with every matrix 1x1.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(a: f64, b: f64, c: f64, w: f64, v: f64, omega0: f64, q: f64, r: f64, terminal: f64) -> Self {
        let s = |x: f64| DMatrix::from_element(1, 1, x);
        PlantModel {
            a: s(a),
            b: s(b),
            c: s(c),
            w: s(w),
            v: s(v),
            omega0: s(omega0),
            q: s(q),
            r: s(r),
            terminal: s(terminal),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }
}

pub fn validate_model(model: &PlantModel) -> ValidationReport {
    let mut issues = Vec::new();
    let n = model.a.nrows();
    let p = model.b.ncols();
    let m = model.c.nrows();

    let mut shape = |name: &str, mat: &DMatrix<f64>, rows: usize, cols: usize| {
        if mat.shape() != (rows, cols) {
            issues.push(format!("{name} is {}x{}, expected {rows}x{cols}", mat.nrows(), mat.ncols()));
            false
        } else {
            true
        }
    };
    let dims_ok = [
        shape("A", &model.a, n, n),
        shape("B", &model.b, n, p),
        shape("C", &model.c, m, n),
        shape("W", &model.w, n, n),
        shape("V", &model.v, m, m),
        shape("Omega0", &model.omega0, n, n),
        shape("Q", &model.q, n, n),
        shape("R", &model.r, p, p),
        shape("Lambda", &model.terminal, n, n),
    ]
    .iter()
    .all(|&ok| ok);
    if n == 0 {
        issues.push("state dimension is zero".into());
    }
    if !dims_ok || n == 0 {
        return ValidationReport { issues };
    }

    let mut psd = |name: &str, mat: &DMatrix<f64>| {
        if !is_symmetric(mat, SYMMETRY_TOL) {
            issues.push(format!("{name} not symmetric"));
        } else if !is_psd(mat, DEFINITENESS_TOL) {
            issues.push(format!("{name} not positive semidefinite"));
        }
    };
    psd("W", &model.w);
    psd("Omega0", &model.omega0);
    psd("Q", &model.q);
    psd("Lambda", &model.terminal);

    let mut pd = |name: &str, mat: &DMatrix<f64>| {
        if !is_symmetric(mat, SYMMETRY_TOL) {
            issues.push(format!("{name} not symmetric"));
        } else if !is_pd(mat, DEFINITENESS_TOL) {
            issues.push(format!("{name} not positive definite"));
        }
    };
    pd("V", &model.v);
    pd("R", &model.r);

    if !is_stabilizable(&model.a, &model.b) {
        issues.push("(A, B) not stabilizable".into());
    }
    match psd_sqrt(&model.q) {
        Ok(q_half) if !is_detectable(&model.a, &q_half) => {
            issues.push("(A, Q^1/2) not detectable".into());
        }
        _ => {}
    }
    ValidationReport { issues }
}

/// PBH test: `[lambda I - A, B]` has full row rank at every eigenvalue with `|lambda| >= 1`.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let ac = to_complex(a);
    let bc = to_complex(b);
    unstable_modes(a).into_iter().all(|ev| {
        let mut pencil = DMatrix::zeros(n, n + b.ncols());
        pencil.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) * ev - &ac));
        pencil.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        complex_rank(&pencil, RANK_TOL) == n
    })
}

/// Dual PBH test on `[lambda I - A; H]`.
pub fn is_detectable(a: &DMatrix<f64>, h: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let ac = to_complex(a);
    let hc = to_complex(h);
    unstable_modes(a).into_iter().all(|ev| {
        let mut pencil = DMatrix::zeros(n + h.nrows(), n);
        pencil.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) * ev - &ac));
        pencil.view_mut((n, 0), (h.nrows(), n)).copy_from(&hc);
        complex_rank(&pencil, RANK_TOL) == n
    })
}

fn unstable_modes(a: &DMatrix<f64>) -> Vec<nalgebra::Complex<f64>> {
    a.complex_eigenvalues()
        .iter()
        .copied()
        .filter(|ev| ev.norm() >= 1.0 - 1e-12)
        .collect()
}

/// True plant state `x_k` at time index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub x: DVector<f64>,
    pub k: usize,
}

/// Seeded standard-normal stream. Identical `(seed, stream)` yields identical draws.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    pub seed: u64,
    pub stream: u64,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseSource { seed, stream, rng }
    }

    pub fn standard(&mut self, dim: usize) -> DVector<f64> {
        DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(&mut self.rng)))
    }
}

/// Zero-mean Gaussian with a fixed covariance; the square-root factor is computed once.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        Ok(GaussianSampler { factor: psd_sqrt(cov)? })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample(&self, noise: &mut NoiseSource) -> DVector<f64> {
        &self.factor * noise.standard(self.factor.ncols())
    }
}

pub fn sample_gaussian(cov: &DMatrix<f64>, noise: &mut NoiseSource) -> Result<DVector<f64>> {
    Ok(GaussianSampler::new(cov)?.sample(noise))
}

/// Noise kinds get separate streams so that changing one leaves the others intact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Process = 0,
    Measurement = 1,
    Initial = 2,
}

pub fn stream_id(loop_index: usize, kind: NoiseKind) -> u64 {
    loop_index as u64 * 3 + kind as u64
}

/// Process and measurement noise generators for one loop.
#[derive(Debug, Clone)]
pub struct PlantNoise {
    pub process: NoiseSource,
    pub measurement: NoiseSource,
    w: GaussianSampler,
    v: GaussianSampler,
}

impl PlantNoise {
    pub fn new(model: &PlantModel, seed: u64, loop_index: usize) -> Result<Self> {
        Ok(PlantNoise {
            process: NoiseSource::new(seed, stream_id(loop_index, NoiseKind::Process)),
            measurement: NoiseSource::new(seed, stream_id(loop_index, NoiseKind::Measurement)),
            w: GaussianSampler::new(&model.w)?,
            v: GaussianSampler::new(&model.v)?,
        })
    }

    pub fn draw_process(&mut self) -> DVector<f64> {
        self.w.sample(&mut self.process)
    }

    pub fn draw_measurement(&mut self) -> DVector<f64> {
        self.v.sample(&mut self.measurement)
    }
}

/// `x' = A x + B u + w`.
pub fn advance(model: &PlantModel, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    &model.a * x + &model.b * u + w
}

/// `y = C x + v`.
pub fn measure(model: &PlantModel, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    &model.c * x + v
}

/// Advances the plant one step; returns the next state and the measurement of the current one.
pub fn step_plant(
    model: &PlantModel,
    state: &PlantState,
    u: &DVector<f64>,
    noise: &mut PlantNoise,
) -> Result<(PlantState, DVector<f64>)> {
    if state.x.len() != model.state_dim() {
        return Err(Error::dim("step_plant state", model.state_dim(), state.x.len()));
    }
    if u.len() != model.input_dim() {
        return Err(Error::dim("step_plant input", model.input_dim(), u.len()));
    }
    let w = noise.draw_process();
    let v = noise.draw_measurement();
    let y = measure(model, &state.x, &v);
    let x = advance(model, &state.x, u, &w);
    Ok((PlantState { x, k: state.k + 1 }, y))
}

/// Zero-order-hold discretization via the augmented matrix exponential.
pub fn discretize_continuous(ac: &DMatrix<f64>, bc: &DMatrix<f64>, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = ac.nrows();
    let p = bc.ncols();
    if ac.ncols() != n || bc.nrows() != n {
        return Err(Error::dim("discretize_continuous", format!("{n}x{n} and {n}x{p}"), format!("{:?} and {:?}", ac.shape(), bc.shape())));
    }
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::Config(format!("sampling interval must be positive, got {dt}")));
    }
    let mut aug = DMatrix::zeros(n + p, n + p);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
    aug.view_mut((0, n), (n, p)).copy_from(&(bc * dt));
    let e = aug.exp();
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, p)).into_owned()))
}

pub(crate) mod rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

impl PlantModel {
    /// Load from a JSON document and reject models that fail validation.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: PlantModel = serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<inline>".into(),
            source: e,
        })?;
        model.validate().into_result()?;
        Ok(model)
    }
}
