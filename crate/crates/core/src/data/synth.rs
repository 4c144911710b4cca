use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Domain, DomainDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    TwoMoons,
    GaussianMixture,
}

/// Synthetic source/target pair description.
///
/// The target map is `x ↦ A·x + translation`, where `A` is `affine` when
/// given and otherwise the rotation by `rotation_deg` about the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub generator: GeneratorKind,
    pub n_per_domain: usize,
    pub classes: usize,
    pub rotation_deg: f64,
    pub affine: Option<[[f64; 2]; 2]>,
    pub translation: [f64; 2],
    pub noise_std: f64,
    /// Distance of Gaussian-mixture centers from the origin.
    pub radius: f64,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::TwoMoons,
            n_per_domain: 500,
            classes: 2,
            rotation_deg: 30.0,
            affine: None,
            translation: [0.0, 0.0],
            noise_std: 0.1,
            radius: 3.0,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..360.0).contains(&self.rotation_deg) {
            return Err(Error::Config(format!(
                "rotation_deg must lie in [0, 360), got {}",
                self.rotation_deg
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.n_per_domain == 0 {
            return Err(Error::Config("n_per_domain must be >= 1".into()));
        }
        match self.generator {
            GeneratorKind::TwoMoons if self.classes != 2 => {
                return Err(Error::Config(format!("two_moons has 2 classes, got classes = {}", self.classes)));
            }
            GeneratorKind::GaussianMixture if self.classes < 2 => {
                return Err(Error::Config(format!("gaussian_mixture needs classes >= 2, got {}", self.classes)));
            }
            _ => {}
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("translation must be finite".into()));
        }
        let a = self.target_matrix();
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if !(det.abs() > 1e-12) {
            return Err(Error::Config(format!("target affine map is singular (det = {det})")));
        }
        Ok(())
    }

    pub fn target_matrix(&self) -> [[f64; 2]; 2] {
        self.affine.unwrap_or_else(|| {
            let th = self.rotation_deg.to_radians();
            [[th.cos(), -th.sin()], [th.sin(), th.cos()]]
        })
    }

    fn map_target(&self, p: [f64; 2]) -> [f64; 2] {
        let a = self.target_matrix();
        [
            a[0][0] * p[0] + a[0][1] * p[1] + self.translation[0],
            a[1][0] * p[0] + a[1][1] * p[1] + self.translation[1],
        ]
    }
}

/// Dispatches on `spec.generator`.
pub fn generate(spec: &ShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    match spec.generator {
        GeneratorKind::TwoMoons => gen_two_moons(spec),
        GeneratorKind::GaussianMixture => gen_gaussian_mixture(spec),
    }
}

/// Shard `i` of a spec draws from its own stream seeded with `seed + i`.
fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(shard))
}

fn noise(spec: &ShiftSpec) -> Normal<f64> {
    Normal::new(0.0, spec.noise_std).expect("validated noise_std")
}

/// Interleaving moons: class 0 on the upper arc, class 1 on the lower arc.
pub fn gen_two_moons(spec: &ShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    let sample = |rng: &mut ChaCha8Rng| -> (Vec<f64>, Vec<usize>) {
        let nd = noise(spec);
        let mut xs = Vec::with_capacity(2 * spec.n_per_domain);
        let mut ys = Vec::with_capacity(spec.n_per_domain);
        for i in 0..spec.n_per_domain {
            let y = i % 2;
            let t = rng.random_range(0.0..=PI);
            let (px, py) = if y == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            xs.push(px + nd.sample(rng));
            xs.push(py + nd.sample(rng));
            ys.push(y);
        }
        (xs, ys)
    };
    build_pair(spec, sample)
}

/// `classes` isotropic Gaussian clusters with centers evenly spaced on a
/// circle of radius `spec.radius`.
pub fn gen_gaussian_mixture(spec: &ShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    let k = spec.classes;
    let sample = |rng: &mut ChaCha8Rng| -> (Vec<f64>, Vec<usize>) {
        let nd = noise(spec);
        let mut xs = Vec::with_capacity(2 * spec.n_per_domain);
        let mut ys = Vec::with_capacity(spec.n_per_domain);
        for i in 0..spec.n_per_domain {
            let y = i % k;
            let phi = 2.0 * PI * y as f64 / k as f64;
            xs.push(spec.radius * phi.cos() + nd.sample(rng));
            xs.push(spec.radius * phi.sin() + nd.sample(rng));
            ys.push(y);
        }
        (xs, ys)
    };
    build_pair(spec, sample)
}

fn build_pair<F>(spec: &ShiftSpec, sample: F) -> Result<(DomainDataset, DomainDataset)>
where
    F: Fn(&mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>),
{
    let n = spec.n_per_domain;
    let (xs, ys) = sample(&mut shard_rng(spec.seed, 0));
    let (xt_raw, yt) = sample(&mut shard_rng(spec.seed, 1));
    let xt: Vec<f64> = xt_raw
        .chunks_exact(2)
        .flat_map(|p| spec.map_target([p[0], p[1]]))
        .collect();
    let source = DomainDataset::new(Tensor::matrix(n, 2, xs)?, ys, Domain::Source, spec.classes)?;
    let target = DomainDataset::new(Tensor::matrix(n, 2, xt)?, yt, Domain::Target, spec.classes)?;
    Ok((source, target))
}
