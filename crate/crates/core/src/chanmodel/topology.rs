use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SystemConfig;
use crate::error::{Error, Result};

/// Resample budget for a DUE receiver that falls outside the area.
pub const MAX_PLACEMENT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Node positions and the transmitter→receiver distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    due_tx: Vec<Point>,
    due_rx: Vec<Point>,
    cue: Point,
    bs: Point,
    /// `(N+1) × (N+1)`, row = transmitter, column = receiver.
    distances: Vec<f64>,
}

impl Topology {
    /// Builds a topology from explicit positions and fills the distance matrix.
    pub fn from_positions(due_tx: Vec<Point>, due_rx: Vec<Point>, cue: Point, bs: Point) -> Result<Self> {
        if due_tx.len() != due_rx.len() || due_tx.is_empty() {
            return Err(Error::Shape(format!(
                "{} DUE transmitters vs {} receivers",
                due_tx.len(),
                due_rx.len()
            )));
        }
        let n = due_tx.len() + 1;
        let mut topo = Self {
            due_tx,
            due_rx,
            cue,
            bs,
            distances: Vec::with_capacity(n * n),
        };
        for tx in 0..n {
            for rx in 0..n {
                let d = topo.tx(tx).distance(&topo.rx(rx));
                topo.distances.push(d);
            }
        }
        Ok(topo)
    }

    pub fn n_due(&self) -> usize {
        self.due_tx.len()
    }

    /// Transmitter `k`: 0 is the CUE, `i + 1` is DUE `i`.
    pub fn tx(&self, k: usize) -> Point {
        if k == 0 {
            self.cue
        } else {
            self.due_tx[k - 1]
        }
    }

    /// Receiver `k`: 0 is the base station, `i + 1` is DUE `i`.
    pub fn rx(&self, k: usize) -> Point {
        if k == 0 {
            self.bs
        } else {
            self.due_rx[k - 1]
        }
    }

    pub fn distance(&self, tx: usize, rx: usize) -> f64 {
        self.distances[tx * (self.n_due() + 1) + rx]
    }

    pub fn due_tx(&self) -> &[Point] {
        &self.due_tx
    }

    pub fn due_rx(&self) -> &[Point] {
        &self.due_rx
    }

    pub fn cue(&self) -> Point {
        self.cue
    }

    pub fn bs(&self) -> Point {
        self.bs
    }

    /// Coordinates in storage order: DUE transmitters, DUE receivers, CUE, BS,
    /// each as `(x, y)`.
    pub fn coordinates(&self) -> Vec<f64> {
        self.due_tx
            .iter()
            .chain(&self.due_rx)
            .chain([&self.cue, &self.bs])
            .flat_map(|p| [p.x, p.y])
            .collect()
    }

    pub fn from_coordinates(n_due: usize, coords: &[f64]) -> Result<Self> {
        if coords.len() != 2 * (2 * n_due + 2) {
            return Err(Error::Shape(format!(
                "expected {} coordinates for {n_due} DUEs, got {}",
                2 * (2 * n_due + 2),
                coords.len()
            )));
        }
        let pts: Vec<Point> = coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
        Self::from_positions(
            pts[..n_due].to_vec(),
            pts[n_due..2 * n_due].to_vec(),
            pts[2 * n_due],
            pts[2 * n_due + 1],
        )
    }
}

/// Drops users on the `D × D` square.
///
/// Draw order per call: for each DUE, its transmitter `(x, y)` then its
/// receiver (radius, angle) until it lands inside the square; finally the
/// CUE `(x, y)`. Receivers are uniform in area on the annulus
/// `[pair_dist_min_m, pair_dist_max_m]`. The BS sits at the centre.
pub fn place_users<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<Topology> {
    config.validate()?;
    let d = config.area_d;
    let inside = |p: &Point| (0.0..=d).contains(&p.x) && (0.0..=d).contains(&p.y);
    let (r2_min, r2_max) = (
        config.pair_dist_min_m * config.pair_dist_min_m,
        config.pair_dist_max_m * config.pair_dist_max_m,
    );

    let mut due_tx = Vec::with_capacity(config.n_due);
    let mut due_rx = Vec::with_capacity(config.n_due);
    for _ in 0..config.n_due {
        let tx = Point::new(rng.random_range(0.0..d), rng.random_range(0.0..d));
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_RESAMPLES {
            let r = rng.random_range(r2_min..r2_max).sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let rx = Point::new(tx.x + r * theta.cos(), tx.y + r * theta.sin());
            if inside(&rx) && rx.distance(&tx) > 0.0 {
                placed = Some(rx);
                break;
            }
        }
        let rx = placed.ok_or(Error::Placement {
            attempts: MAX_PLACEMENT_RESAMPLES,
            area_d: d,
        })?;
        due_tx.push(tx);
        due_rx.push(rx);
    }
    let cue = Point::new(rng.random_range(0.0..d), rng.random_range(0.0..d));
    let bs = Point::new(d / 2.0, d / 2.0);
    Topology::from_positions(due_tx, due_rx, cue, bs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nodes_inside_area_and_pairs_within_bounds() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let t = place_users(&cfg, &mut rng).unwrap();
            for k in 0..=cfg.n_due {
                for p in [t.tx(k), t.rx(k)] {
                    assert!((0.0..=500.0).contains(&p.x) && (0.0..=500.0).contains(&p.y));
                }
                for j in 0..=cfg.n_due {
                    assert!(t.distance(k, j) > 0.0);
                }
            }
            for i in 1..=cfg.n_due {
                let sep = t.distance(i, i);
                assert!((2.0..=30.0).contains(&sep), "{sep}");
            }
            assert_eq!(t.bs(), Point::new(250.0, 250.0));
        }
    }

    #[test]
    fn deterministic_for_equal_seeds() {
        let cfg = SystemConfig::default();
        let a = place_users(&cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = place_users(&cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transmitter_mean_is_area_centre() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for _ in 0..10_000 {
            let t = place_users(&cfg, &mut rng).unwrap();
            for p in t.due_tx() {
                sx += p.x;
                sy += p.y;
                n += 1.0;
            }
        }
        assert!((sx / n - 250.0).abs() < 5.0, "{}", sx / n);
        assert!((sy / n - 250.0).abs() < 5.0, "{}", sy / n);
    }

    #[test]
    fn coordinates_round_trip() {
        let cfg = SystemConfig::default();
        let t = place_users(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let back = Topology::from_coordinates(cfg.n_due, &t.coordinates()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn impossible_annulus_fails() {
        // Receivers must be at least 9.99 m away yet inside a 10 m square,
        // which only corner-to-corner draws satisfy.
        let cfg = SystemConfig {
            area_d: 10.0,
            pair_dist_min_m: 9.99,
            pair_dist_max_m: 10.0,
            ..SystemConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut failures = 0;
        for _ in 0..20 {
            if let Err(Error::Placement { attempts, .. }) = place_users(&cfg, &mut rng) {
                assert_eq!(attempts, MAX_PLACEMENT_RESAMPLES);
                failures += 1;
            }
        }
        assert!(failures > 0);
    }
}
