//! Fine-step reference solutions, certified by a halved-step self-check and
//! cached on disk.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use super::Problem;
use crate::error::{Error, Result};
use crate::expkernels::ExpCache;
use crate::integrators::{integrate_fixed, max_diff, method_spec, MethodId, SemiLinearSystem};

pub const REFCACHE_ENV: &str = "XRK_REFCACHE";
const DEFAULT_DIR: &str = "refcache";
/// Reference stepsize relative to the smallest experiment stepsize.
const REFINEMENT: f64 = 16.0;
/// Extra refinement applied once when the first self-check fails.
const RETRY_REFINEMENT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub y: Vec<f64>,
    pub h_ref: f64,
    /// Max-norm gap between the `h_ref` and `h_ref / 2` runs.
    pub gap: f64,
    pub method: MethodId,
    pub from_disk: bool,
}

#[derive(Debug, Clone)]
pub struct ReferenceOracle {
    dir: Option<PathBuf>,
    method: MethodId,
    tolerance: f64,
}

impl Default for ReferenceOracle {
    fn default() -> Self {
        Self::from_env()
    }
}

impl ReferenceOracle {
    /// Disk cache under `$XRK_REFCACHE`, or `./refcache` when unset.
    pub fn from_env() -> Self {
        let dir = std::env::var_os(REFCACHE_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DIR));
        Self::with_dir(dir)
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        ReferenceOracle {
            dir: Some(dir.into()),
            method: MethodId::Mverk3_2,
            tolerance: 1e-10,
        }
    }

    /// No disk cache; every request recomputes.
    pub fn in_memory() -> Self {
        ReferenceOracle {
            dir: None,
            method: MethodId::Mverk3_2,
            tolerance: 1e-10,
        }
    }

    pub fn with_method(mut self, method: MethodId) -> Self {
        self.method = method;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn method(&self) -> MethodId {
        self.method
    }

    /// Reference state at the end of the horizon for experiments whose smallest
    /// stepsize is `h_min`. Computed at `h_min / 16`, checked against a run at half
    /// that step; on failure `h_ref` shrinks by a further factor 4 for one retry.
    pub fn reference(&self, problem: &Problem, h_min: f64) -> Result<Reference> {
        if !(h_min > 0.0) {
            return Err(Error::Config(format!(
                "h_min must be positive, got {h_min}"
            )));
        }
        let sys = problem.build()?;
        let mut h_ref = h_min / REFINEMENT;
        let mut last_gap = f64::NAN;
        for _attempt in 0..2 {
            if let Some(hit) = self.load(problem, h_ref, sys.dim()) {
                return Ok(hit);
            }
            let coarse = self.run(&sys, h_ref)?;
            let fine = self.run(&sys, h_ref / 2.0)?;
            let gap = max_diff(&coarse, &fine);
            if gap <= self.tolerance {
                let r = Reference {
                    y: fine,
                    h_ref,
                    gap,
                    method: self.method,
                    from_disk: false,
                };
                self.store(problem, &r)?;
                return Ok(r);
            }
            last_gap = gap;
            h_ref /= RETRY_REFINEMENT;
        }
        Err(Error::Oracle {
            gap: last_gap,
            tol: self.tolerance,
            h_ref: h_ref * RETRY_REFINEMENT,
        })
    }

    fn run(&self, sys: &SemiLinearSystem, h: f64) -> Result<Vec<f64>> {
        let spec = method_spec(self.method);
        let mut cache = ExpCache::new(sys.m.clone(), h)?;
        Ok(integrate_fixed(&spec, sys, h, &mut cache)?.y)
    }

    fn stem(&self, problem: &Problem, h_ref: f64) -> String {
        format!(
            "{}-{}-{}-href{:e}",
            problem.id(),
            &problem.digest()[..16],
            self.method,
            h_ref
        )
    }

    fn load(&self, problem: &Problem, h_ref: f64, dim: usize) -> Option<Reference> {
        let dir = self.dir.as_ref()?;
        let stem = self.stem(problem, h_ref);
        let bytes = fs::read(dir.join(format!("{stem}.bin"))).ok()?;
        let y = decode(&bytes)?;
        if y.len() != dim {
            return None;
        }
        let gap = fs::read_to_string(dir.join(format!("{stem}.txt")))
            .ok()
            .and_then(|s| {
                s.lines()
                    .find_map(|l| l.strip_prefix("gap=").and_then(|v| v.parse().ok()))
            })
            .unwrap_or(f64::NAN);
        Some(Reference {
            y,
            h_ref,
            gap,
            method: self.method,
            from_disk: true,
        })
    }

    fn store(&self, problem: &Problem, r: &Reference) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let stem = self.stem(problem, r.h_ref);
        let sidecar = format!(
            "problem={}\nconfig={}\ndigest={}\nmethod={}\nh_ref={:e}\ngap={:e}\n",
            problem.id(),
            serde_json::to_string(problem).expect("config serializes"),
            problem.digest(),
            r.method,
            r.h_ref,
            r.gap
        );
        write_atomic(&dir.join(format!("{stem}.txt")), sidecar.as_bytes())?;
        write_atomic(&dir.join(format!("{stem}.bin")), &encode(&r.y))?;
        Ok(())
    }
}

/// Convenience wrapper using the environment-configured cache.
pub fn reference_solution(problem: &Problem, h_min: f64) -> Result<Reference> {
    ReferenceOracle::from_env().reference(problem, h_min)
}

/// Little-endian `u64` length followed by the `f64` entries.
fn encode(y: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * y.len());
    out.extend_from_slice(&(y.len() as u64).to_le_bytes());
    for v in y {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Option<Vec<f64>> {
    let (head, body) = bytes.split_at_checked(8)?;
    let n = u64::from_le_bytes(head.try_into().ok()?) as usize;
    if body.len() != 8 * n {
        return None;
    }
    Some(
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    )
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write to a unique temporary sibling, then rename over the target (last writer wins).
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "tmp.{}.{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
