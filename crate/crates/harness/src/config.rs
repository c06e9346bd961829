//! Experiment specs: a flat TOML file, CLI overrides on top, then defaults
//! that depend on the experiment kind.
//!
//! ```toml
//! schema_version = 1
//! kind = "sigma_sweep"
//! l = 200
//! m = 200
//! h = 10
//! rho = 0.8                     # probability that a code entry is zero
//! sigma_grid = [0.01, 0.05, 0.1]
//! trials = 5
//! epsilon = 0.1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparsemf::{ErfConvention, Mode, SolverConfig};

use crate::error::{HarnessError, Result};
use crate::pgm::Normalization;

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_RHO_GRID: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];
pub const DEFAULT_H_GRID: [usize; 3] = [10, 20, 40];
pub const DEFAULT_SIGMA_GRID: [f64; 6] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    SingleRun,
    RhoHSweep,
    SigmaSweep,
    ImageRun,
    FixedKAblation,
}

impl Kind {
    pub fn is_image(self) -> bool {
        self == Kind::ImageRun
    }
}

/// The file as written; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub schema_version: Option<u32>,
    pub kind: Option<Kind>,
    pub l: Option<usize>,
    pub m: Option<usize>,
    pub h: Option<usize>,
    pub h_grid: Option<Vec<usize>>,
    pub rho: Option<f64>,
    pub rho_grid: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub sigma_grid: Option<Vec<f64>>,
    /// Observe the exact product; the solver still uses `sigma`.
    pub zero_noise: Option<bool>,
    pub trials: Option<u32>,
    pub base_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub stride: Option<u64>,
    pub traces: Option<bool>,
    pub sparsity_threshold: Option<f64>,

    pub epsilon: Option<f64>,
    pub k0: Option<f64>,
    pub zb_threshold: Option<f64>,
    pub max_iters: Option<u64>,
    pub c_a: Option<Vec<f64>>,
    pub erf: Option<ErfConvention>,
    pub ridge_uses_previous_a: Option<bool>,

    /// Fixed k as multiples of each trial's tuned k.
    pub k_factors: Option<Vec<f64>>,
    /// Fixed k values used as given; skips the tuned reference runs.
    pub k_grid: Option<Vec<f64>>,
    pub fixed_k_iters: Option<u64>,

    pub image: Option<PathBuf>,
    pub normalization: Option<Normalization>,
    /// Standard deviation of noise added to the normalized pixels.
    pub image_noise: Option<f64>,
    /// Also run a fixed-k baseline at this k.
    pub baseline_k: Option<f64>,
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub stride: Option<u64>,
    pub image: Option<PathBuf>,
}

/// A fully resolved experiment; this is what gets stored next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub kind: Kind,
    /// Synthetic dimensions; unused for images.
    pub l: usize,
    pub m: usize,
    pub h_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub zero_noise: bool,
    pub trials: u32,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub stride: u64,
    pub traces: bool,
    pub sparsity_threshold: f64,
    pub solver: SolverConfig,
    pub k_factors: Vec<f64>,
    pub k_grid: Option<Vec<f64>>,
    pub fixed_k_iters: u64,
    pub image: Option<PathBuf>,
    pub normalization: Normalization,
    pub image_noise: Option<f64>,
    pub baseline_k: Option<f64>,
}

pub fn parse_spec(text: &str, path: &Path) -> Result<SpecFile> {
    let file: SpecFile = toml::from_str(text).map_err(|source| HarnessError::Toml {
        path: path.to_path_buf(),
        source,
    })?;
    match file.schema_version {
        Some(SCHEMA_VERSION) => Ok(file),
        Some(v) => Err(HarnessError::Config(format!(
            "schema_version {v} not supported (expected {SCHEMA_VERSION})"
        ))),
        None => Err(HarnessError::Config("missing schema_version".into())),
    }
}

pub fn load_spec(path: &Path) -> Result<SpecFile> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_spec(&text, path)
}

fn one_or_grid<T: Clone>(name: &str, one: Option<T>, grid: Option<Vec<T>>, default: Vec<T>) -> Result<Vec<T>> {
    match (one, grid) {
        (Some(_), Some(_)) => Err(HarnessError::Config(format!("both {name} and {name}_grid given"))),
        (Some(x), None) => Ok(vec![x]),
        (None, Some(g)) if g.is_empty() => Err(HarnessError::Config(format!("{name}_grid is empty"))),
        (None, Some(g)) => Ok(g),
        (None, None) => Ok(default),
    }
}

impl SpecFile {
    /// Resolves defaults for `kind`, which must agree with the file's own kind if it names one.
    pub fn resolve(mut self, kind: Kind, ov: &Overrides) -> Result<ExperimentSpec> {
        if let Some(k) = self.kind {
            if k != kind {
                return Err(HarnessError::Config(format!(
                    "spec kind {k:?} does not match the requested {kind:?}"
                )));
            }
        }
        self.base_seed = ov.seed.or(self.base_seed);
        self.output_dir = ov.out.clone().or(self.output_dir);
        self.stride = ov.stride.or(self.stride);
        self.image = ov.image.clone().or(self.image);

        let image = kind.is_image();
        let h_grid = one_or_grid(
            "h",
            self.h,
            self.h_grid,
            match kind {
                Kind::RhoHSweep => DEFAULT_H_GRID.to_vec(),
                Kind::ImageRun => vec![40],
                _ => vec![20],
            },
        )?;
        let rho_grid = one_or_grid(
            "rho",
            self.rho,
            self.rho_grid,
            if kind == Kind::RhoHSweep {
                DEFAULT_RHO_GRID.to_vec()
            } else {
                vec![0.8]
            },
        )?;
        let sigma_grid = one_or_grid(
            "sigma",
            self.sigma,
            self.sigma_grid,
            match kind {
                Kind::SigmaSweep => DEFAULT_SIGMA_GRID.to_vec(),
                Kind::ImageRun => vec![0.03],
                _ => vec![0.05],
            },
        )?;
        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            sigma: sigma_grid[0],
            c_a_diag: self.c_a,
            epsilon: self.epsilon.unwrap_or(if image { 1e-3 } else { 0.1 }),
            k0: self.k0.unwrap_or(defaults.k0),
            zb_threshold: self.zb_threshold.unwrap_or(defaults.zb_threshold),
            max_iters: self.max_iters.unwrap_or(defaults.max_iters),
            mode: Mode::Tuned,
            init_seed: 0,
            stride: 1,
            erf: self.erf.unwrap_or_default(),
            ridge_uses_previous_a: self.ridge_uses_previous_a.unwrap_or(false),
        };
        let spec = ExperimentSpec {
            schema_version: SCHEMA_VERSION,
            kind,
            l: self.l.unwrap_or(500),
            m: self.m.unwrap_or(500),
            h_grid,
            rho_grid,
            sigma_grid,
            zero_noise: self.zero_noise.unwrap_or(false),
            trials: self.trials.unwrap_or(match kind {
                Kind::SingleRun => 1,
                Kind::ImageRun => 5,
                _ => 20,
            }),
            base_seed: self.base_seed.unwrap_or(0),
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            stride: self.stride.unwrap_or(100),
            traces: self
                .traces
                .unwrap_or(matches!(kind, Kind::SingleRun | Kind::ImageRun)),
            sparsity_threshold: self.sparsity_threshold.unwrap_or(sparsemf::SPARSITY_THRESHOLD),
            solver,
            k_factors: self.k_factors.unwrap_or_else(|| vec![0.5, 1.5]),
            k_grid: self.k_grid,
            fixed_k_iters: self.fixed_k_iters.unwrap_or(10_000),
            image: self.image,
            normalization: self.normalization.unwrap_or_default(),
            image_noise: self.image_noise,
            baseline_k: self.baseline_k,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ExperimentSpec {
    /// Defaults for `kind` with nothing overridden.
    pub fn defaults(kind: Kind) -> Result<Self> {
        SpecFile::default().resolve(kind, &Overrides::default())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.l == 0 || self.m == 0 {
            return bad(format!("dimensions must be positive, got {}x{}", self.l, self.m));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if let Some(r) = self.rho_grid.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return bad(format!("rho {r} outside [0, 1)"));
        }
        if let Some(s) = self.sigma_grid.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return bad(format!("sigma {s} must be positive"));
        }
        if !(self.sparsity_threshold > 0.0) {
            return bad("sparsity_threshold must be positive".into());
        }
        for &h in &self.h_grid {
            let cfg = SolverConfig {
                sigma: self.sigma_grid[0],
                ..self.solver.clone()
            };
            cfg.validate(h).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        let fixed: Vec<f64> = self.k_grid.iter().flatten().chain(&self.baseline_k).copied().collect();
        if let Some(k) = fixed.iter().chain(&self.k_factors).find(|k| !(**k > 0.0 && k.is_finite())) {
            return bad(format!("fixed k values and factors must be positive, got {k}"));
        }
        if self.kind == Kind::FixedKAblation && self.k_grid.is_none() && self.k_factors.is_empty() {
            return bad("fixed_k_ablation needs k_factors or k_grid".into());
        }
        if self.fixed_k_iters == 0 {
            return bad("fixed_k_iters must be at least 1".into());
        }
        if let Some(s) = self.image_noise {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("image_noise {s} must be non-negative"));
            }
        }
        match self.kind {
            Kind::ImageRun if self.image.is_none() => bad("image_run needs an image path".into()),
            Kind::SingleRun if self.rho_grid.len() * self.h_grid.len() * self.sigma_grid.len() != 1 => {
                bad("single_run takes one rho, one h and one sigma".into())
            }
            _ => Ok(()),
        }
    }
}
