use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{generate_instance, place_users, ChannelInstance, SystemConfig};
use crate::error::{Error, Result};

/// Identifier of the random stream recorded in dataset headers.
///
/// Sample `k` of a dataset with seed `s` is drawn from
/// `ChaCha8Rng::seed_from_u64(s)` switched to stream `k` (rand_chacha 0.9).
/// Any implementation using the same generator reproduces the gains exactly.
pub const GENERATOR_ID: &str = "rand_chacha-0.9/ChaCha8Rng/seed_from_u64+stream=sample_index";

/// Independent per-sample random stream derived from the master seed.
pub fn sample_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    config: SystemConfig,
    seed: u64,
    instances: Vec<ChannelInstance>,
}

impl Dataset {
    pub fn new(config: SystemConfig, seed: u64, instances: Vec<ChannelInstance>) -> Result<Self> {
        config.validate()?;
        if instances.is_empty() {
            return Err(Error::InvalidArgument("a dataset needs at least one instance".into()));
        }
        for inst in &instances {
            inst.check_shape(&config)?;
        }
        Ok(Self {
            config,
            seed,
            instances,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn instances(&self) -> &[ChannelInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// SHA-256 of the serialised dataset, hex encoded.
    pub fn digest(&self) -> String {
        let mut bytes = Vec::new();
        super::write_dataset(self, &mut bytes).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn draw_sample(config: &SystemConfig, seed: u64, index: u64) -> Result<ChannelInstance> {
    let mut rng = sample_stream(seed, index);
    let topology = place_users(config, &mut rng)?;
    generate_instance(&topology, config, &mut rng)
}

/// Draws `count` independent (topology, fading) samples.
pub fn generate_dataset(config: &SystemConfig, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidArgument("dataset count must be at least 1".into()));
    }
    config.validate()?;
    let instances = (0..count as u64)
        .map(|k| draw_sample(config, seed, k))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(config.clone(), seed, instances)
}

/// Same bytes as [`generate_dataset`], with samples spread over `threads`
/// workers.
pub fn generate_dataset_parallel(
    config: &SystemConfig,
    count: usize,
    seed: u64,
    threads: usize,
) -> Result<Dataset> {
    if threads <= 1 {
        return generate_dataset(config, count, seed);
    }
    if count == 0 {
        return Err(Error::InvalidArgument("dataset count must be at least 1".into()));
    }
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let instances = pool.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|k| draw_sample(config, seed, k))
            .collect::<Result<Vec<_>>>()
    })?;
    Dataset::new(config.clone(), seed, instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let cfg = SystemConfig::default();
        assert_eq!(generate_dataset(&cfg, 1, 0).unwrap().len(), 1);
        assert_eq!(generate_dataset(&cfg, 40_000, 7).unwrap().len(), 40_000);
        assert!(generate_dataset(&cfg, 0, 0).is_err());
    }

    #[test]
    fn deterministic_and_parallel_identical() {
        let cfg = SystemConfig::default();
        let a = generate_dataset(&cfg, 300, 99).unwrap();
        let b = generate_dataset(&cfg, 300, 99).unwrap();
        let c = generate_dataset_parallel(&cfg, 300, 99, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.digest(), c.digest());
        let other = generate_dataset(&cfg, 300, 100).unwrap();
        assert_ne!(a.digest(), other.digest());
    }

    #[test]
    fn samples_are_prefix_stable() {
        // Stream-per-sample derivation: a shorter dataset is a prefix of a longer one.
        let cfg = SystemConfig::default();
        let short = generate_dataset(&cfg, 10, 5).unwrap();
        let long = generate_dataset(&cfg, 50, 5).unwrap();
        assert_eq!(short.instances(), &long.instances()[..10]);
    }

    #[test]
    fn gains_positive_at_large_area() {
        let cfg = SystemConfig::default().with_area(1000.0);
        let ds = generate_dataset(&cfg, 2000, 1).unwrap();
        assert!(ds
            .instances()
            .iter()
            .flat_map(|i| i.gains())
            .all(|g| *g > 0.0 && g.is_finite()));
    }
}
