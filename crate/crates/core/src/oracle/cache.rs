//! Oracle results for a whole dataset, stored in the same container style
//! as datasets: `MAGIC`, a little-endian `u32` header length, a JSON header
//! and fixed-size little-endian records (one per instance and goal).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::search::{grid_search_all, OracleOptions, OracleSolution};
use crate::chanmodel::Dataset;
use crate::error::{Error, Result};
use crate::linkmetrics::{Goal, PowerAllocation};

pub const CACHE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"D2DRA-OC";
const FORMAT_NAME: &str = "d2dra-oracle-cache";

/// Oracle solutions for every instance of one dataset under one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCache {
    /// Digest of the dataset the solutions belong to.
    pub dataset_digest: String,
    pub grid: GridSpec,
    pub n_due: usize,
    pub n_channels: usize,
    /// Indexed `[instance][goal.index()]`.
    pub solutions: Vec<[OracleSolution; 3]>,
}

impl OracleCache {
    pub fn get(&self, index: usize, goal: Goal) -> Option<&OracleSolution> {
        self.solutions.get(index).map(|s| &s[goal.index()])
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dataset_digest: String,
    grid: GridSpec,
    n_due: usize,
    n_channels: usize,
    count: u64,
    record: String,
}

const RECORD_LAYOUT: &str =
    "per goal (max-se, max-ee, min-pw): u8 feasible, f64 objective, f64[N*M] best, f64 min_violation, f64[N*M] min_violation_alloc, u128 evaluations, f64 wall_ms";

fn record_bytes(nm: usize) -> usize {
    1 + 8 + 8 * nm + 8 + 8 * nm + 16 + 8
}

/// Solves every instance of `dataset` for all three goals. Instances are
/// distributed over `opts.threads` workers; the output order and values do
/// not depend on the worker count.
pub fn solve_dataset(dataset: &Dataset, grid: &GridSpec, opts: &OracleOptions) -> Result<OracleCache> {
    let config = dataset.config();
    let per_instance = OracleOptions { threads: 1, ..*opts };
    let solve = |inst| grid_search_all(inst, grid, config, &per_instance);
    let solutions = if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| dataset.instances().par_iter().map(solve).collect::<Result<Vec<_>>>())?
    } else {
        dataset.instances().iter().map(solve).collect::<Result<Vec<_>>>()?
    };
    Ok(OracleCache {
        dataset_digest: dataset.digest(),
        grid: *grid,
        n_due: config.n_due,
        n_channels: config.n_channels,
        solutions,
    })
}

pub fn write_cache<W: Write>(cache: &OracleCache, mut w: W) -> Result<()> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: CACHE_FORMAT_VERSION,
        dataset_digest: cache.dataset_digest.clone(),
        grid: cache.grid,
        n_due: cache.n_due,
        n_channels: cache.n_channels,
        count: cache.solutions.len() as u64,
        record: RECORD_LAYOUT.into(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let nm = cache.n_due * cache.n_channels;
    for sols in &cache.solutions {
        for s in sols {
            w.write_all(&[s.feasible as u8])?;
            w.write_all(&s.objective.to_le_bytes())?;
            match &s.best_alloc {
                Some(a) => a.as_slice().iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                None => (0..nm).try_for_each(|_| w.write_all(&0f64.to_le_bytes()))?,
            }
            w.write_all(&s.min_violation.to_le_bytes())?;
            for x in s.min_violation_alloc.as_slice() {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&s.evaluations.to_le_bytes())?;
            w.write_all(&s.wall_ms.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        a
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take(8).try_into().unwrap())
    }

    fn floats(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_cache<R: Read>(mut r: R) -> Result<OracleCache> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Corrupt("not an oracle cache (bad magic)".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(Error::Corrupt("oracle cache header is truncated".into()));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])?;
    if header.format != FORMAT_NAME {
        return Err(Error::Corrupt(format!("unexpected format `{}`", header.format)));
    }
    if header.version != CACHE_FORMAT_VERSION {
        return Err(Error::Version {
            what: "oracle cache",
            found: header.version,
            expected: CACHE_FORMAT_VERSION,
        });
    }
    header.grid.validate()?;
    let (n, m) = (header.n_due, header.n_channels);
    let rb = record_bytes(n * m);
    let payload = &body[hlen..];
    let count = header.count as usize;
    if payload.len() != count * 3 * rb {
        return Err(Error::Shape(format!(
            "oracle cache declares {count} instances but holds {} bytes",
            payload.len()
        )));
    }
    let mut cur = Cursor(payload);
    let mut solutions = Vec::with_capacity(count);
    for _ in 0..count {
        let mut sols = Vec::with_capacity(3);
        for goal in Goal::ALL {
            let feasible = match cur.take(1)[0] {
                0 => false,
                1 => true,
                x => return Err(Error::Corrupt(format!("feasibility flag {x}"))),
            };
            let objective = cur.f64();
            let best = cur.floats(n * m);
            let min_violation = cur.f64();
            let min_alloc = cur.floats(n * m);
            let evaluations = u128::from_le_bytes(cur.take(16).try_into().unwrap());
            let wall_ms = cur.f64();
            sols.push(OracleSolution {
                goal,
                best_alloc: if feasible {
                    Some(PowerAllocation::from_flat(n, m, best)?)
                } else {
                    None
                },
                objective,
                feasible,
                evaluations,
                min_violation_alloc: PowerAllocation::from_flat(n, m, min_alloc)?,
                min_violation,
                wall_ms,
            });
        }
        solutions.push(sols.try_into().expect("three goals"));
    }
    Ok(OracleCache {
        dataset_digest: header.dataset_digest,
        grid: header.grid,
        n_due: n,
        n_channels: m,
        solutions,
    })
}

/// Reads the cache at `path` when it matches `dataset` and `grid`;
/// otherwise solves and (re)writes it. Without a path this is
/// [`solve_dataset`].
pub fn load_or_solve(
    dataset: &Dataset,
    grid: &GridSpec,
    opts: &OracleOptions,
    path: Option<&Path>,
) -> Result<OracleCache> {
    let Some(path) = path else {
        return solve_dataset(dataset, grid, opts);
    };
    if path.exists() {
        if let Ok(cache) = read_cache(BufReader::new(File::open(path)?)) {
            if cache.grid == *grid && cache.len() == dataset.len() && cache.dataset_digest == dataset.digest() {
                return Ok(cache);
            }
        }
    }
    let cache = solve_dataset(dataset, grid, opts)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    write_cache(&cache, BufWriter::new(File::create(&tmp)?))?;
    fs::rename(&tmp, path)?;
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::{generate_dataset, SystemConfig};

    fn fixture() -> (Dataset, GridSpec) {
        let cfg = SystemConfig {
            r_thresh: 9.0,
            ..SystemConfig::default()
        };
        (generate_dataset(&cfg, 5, 3).unwrap(), GridSpec::new(6, 5).unwrap())
    }

    #[test]
    fn round_trip() {
        let (ds, grid) = fixture();
        let cache = solve_dataset(&ds, &grid, &OracleOptions::default()).unwrap();
        assert!(cache.solutions.iter().any(|s| !s[0].feasible), "fixture should contain an infeasible instance");
        let mut buf = Vec::new();
        write_cache(&cache, &mut buf).unwrap();
        assert_eq!(read_cache(&buf[..]).unwrap(), cache);
        assert!(matches!(read_cache(&buf[..buf.len() - 1]), Err(Error::Shape(_))));
        assert!(matches!(read_cache(&b"nope"[..]), Err(Error::Corrupt(_))));
    }

    #[test]
    fn parallel_dataset_solve_matches_serial() {
        let (ds, grid) = fixture();
        let a = solve_dataset(&ds, &grid, &OracleOptions::default()).unwrap();
        let b = solve_dataset(&ds, &grid, &OracleOptions { threads: 3, ..OracleOptions::default() }).unwrap();
        for (x, y) in a.solutions.iter().zip(&b.solutions) {
            for g in 0..3 {
                assert_eq!(x[g].best_alloc, y[g].best_alloc);
                assert_eq!(x[g].objective.to_bits(), y[g].objective.to_bits());
                assert_eq!(x[g].min_violation_alloc, y[g].min_violation_alloc);
            }
        }
    }

    #[test]
    fn cache_is_reused_only_when_keys_match() {
        let (ds, grid) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/oracle.bin");
        let first = load_or_solve(&ds, &grid, &OracleOptions::default(), Some(&path)).unwrap();
        assert!(path.exists());
        let again = load_or_solve(&ds, &grid, &OracleOptions::default(), Some(&path)).unwrap();
        // wall times come from the file, so a reload is bit-identical
        assert_eq!(first, again);
        let other = GridSpec::new(5, 5).unwrap();
        let re = load_or_solve(&ds, &other, &OracleOptions::default(), Some(&path)).unwrap();
        assert_eq!(re.grid, other);
        let reread = read_cache(File::open(&path).unwrap()).unwrap();
        assert_eq!(reread.grid, other);
    }
}
