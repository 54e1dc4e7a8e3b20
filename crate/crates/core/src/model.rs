//! Physical parameters, atom placements and configuration checks.
//!
//! Frequencies and rates are in units of the free-space decay rate `gamma_e`
//! and times in units of its inverse. The wave speed is set to one and
//! absorbed into the probe amplitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Threshold on `sqrt(gamma_1d / 2) * probe_amp / gamma_e` above which the
/// probe is reported as not weak.
pub const WEAK_PROBE_THRESHOLD: f64 = 1e-2;

/// All parameters of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "", deserialize = ""))]
pub struct SystemConfig<R: Real = f64> {
    /// Probe detuning from the g-e transition.
    pub delta: R,
    /// Control detuning from the s-e transition.
    pub delta_c: R,
    /// Control Rabi frequency.
    pub omega_c: R,
    /// Decay rate into the guided mode.
    pub gamma_1d: R,
    /// Free-space decay rate of |e>; one in the natural unit system.
    pub gamma_e: R,
    /// Population relaxation between |g> and |s>, both directions.
    #[serde(default = "zero")]
    pub gamma_p: R,
    /// Pure dephasing of the g-s coherence.
    #[serde(default = "zero")]
    pub gamma_d: R,
    pub probe_amp: R,
    /// Lattice phase `k_in * d`.
    pub kd: R,
    pub n_atoms: usize,
    pub n_sites: usize,
    /// Standard deviation of the Gaussian metastable-level shifts.
    #[serde(default = "zero")]
    pub sigma_ih: R,
}

fn zero<R: Real>() -> R {
    R::zero()
}

impl<R: Real> SystemConfig<R> {
    /// Reference parameters: ten atoms on 200 sites, `gamma_1d = omega_c = 2`,
    /// `kd = pi/2`, weak probe.
    pub fn reference() -> Self {
        let gamma_1d = R::lit(2.0);
        Self {
            delta: R::zero(),
            delta_c: R::zero(),
            omega_c: R::lit(2.0),
            gamma_1d,
            gamma_e: R::one(),
            gamma_p: R::zero(),
            gamma_d: R::zero(),
            probe_amp: Self::default_probe(gamma_1d),
            kd: R::FRAC_PI_2(),
            n_atoms: 10,
            n_sites: 200,
            sigma_ih: R::zero(),
        }
    }

    /// `1e-4 * sqrt(gamma_1d / 2)`.
    pub fn default_probe(gamma_1d: R) -> R {
        R::lit(1e-4) * (gamma_1d / R::lit(2.0)).sqrt()
    }

    /// Total ground-manifold decoherence `gamma_p + gamma_d`.
    pub fn gamma_t(&self) -> R {
        self.gamma_p + self.gamma_d
    }

    /// Amplitude `sqrt(gamma_1d / 2)` of the atom-waveguide coupling.
    pub fn coupling(&self) -> R {
        (self.gamma_1d / R::lit(2.0)).sqrt()
    }

    /// Input-field amplitude `sqrt(gamma_1d / 2) * probe_amp`.
    pub fn drive_amplitude(&self) -> R {
        self.coupling() * self.probe_amp
    }

    pub fn weak_probe_ratio(&self) -> R {
        self.drive_amplitude() / self.gamma_e
    }

    /// Parse the flat `key = value` file format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Check every invariant of a configuration. Returns an empty list when the
/// configuration is valid and the probe is weak.
pub fn validate<R: Real>(config: &SystemConfig<R>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut error = |message: String| {
        out.push(Diagnostic {
            severity: Severity::Error,
            message,
        })
    };
    let fields = [
        ("delta", config.delta),
        ("delta_c", config.delta_c),
        ("omega_c", config.omega_c),
        ("gamma_1d", config.gamma_1d),
        ("gamma_e", config.gamma_e),
        ("gamma_p", config.gamma_p),
        ("gamma_d", config.gamma_d),
        ("probe_amp", config.probe_amp),
        ("kd", config.kd),
        ("sigma_ih", config.sigma_ih),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            error(format!("{name} is not finite"));
        }
    }
    for (name, v) in [
        ("omega_c", config.omega_c),
        ("gamma_1d", config.gamma_1d),
        ("gamma_e", config.gamma_e),
        ("gamma_p", config.gamma_p),
        ("gamma_d", config.gamma_d),
        ("sigma_ih", config.sigma_ih),
    ] {
        if v < R::zero() {
            error(format!("{name} must be nonnegative (got {v})"));
        }
    }
    if !(config.probe_amp > R::zero()) {
        error(format!("probe_amp must be positive (got {})", config.probe_amp));
    }
    if !(config.kd >= R::zero() && config.kd < R::TAU()) {
        error(format!("kd must lie in [0, 2pi) (got {})", config.kd));
    }
    if config.n_atoms == 0 {
        error("n_atoms must be at least 1".into());
    }
    if config.n_sites == 0 {
        error("n_sites must be at least 1".into());
    }
    if config.n_atoms > config.n_sites {
        error(format!(
            "n exceeds N: {} atoms cannot occupy {} sites",
            config.n_atoms, config.n_sites
        ));
    }
    let ratio = config.weak_probe_ratio();
    if ratio.is_finite() && ratio > R::lit(WEAK_PROBE_THRESHOLD) {
        out.push(Diagnostic {
            severity: Severity::Warning,
            message: format!(
                "probe is not weak: sqrt(gamma_1d/2)*probe_amp/gamma_e = {ratio:.3e} > {WEAK_PROBE_THRESHOLD:e}"
            ),
        });
    }
    out
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

/// Occupied lattice sites, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtomPlacement {
    sites: Vec<usize>,
}

impl AtomPlacement {
    pub fn new(sites: Vec<usize>, n_sites: usize) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Config("placement needs at least one atom".into()));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("site indices must be strictly increasing".into()));
        }
        if let Some(&last) = sites.last() {
            if last >= n_sites {
                return Err(Error::Config(format!("site {last} outside lattice of {n_sites} sites")));
            }
        }
        Ok(Self { sites })
    }

    /// Atoms on sites `0..n`, i.e. an equally spaced chain.
    pub fn chain(n: usize) -> Self {
        Self {
            sites: (0..n).collect(),
        }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Propagation phase `kd * site_j` of atom `j`.
    pub fn phase<R: Real>(&self, j: usize, kd: R) -> R {
        kd * R::from_usize_lossy(self.sites[j])
    }

    /// Phase `kd * |site_j - site_k|` accumulated between two atoms.
    pub fn separation_phase<R: Real>(&self, j: usize, k: usize, kd: R) -> R {
        kd * R::from_usize_lossy(self.sites[j].abs_diff(self.sites[k]))
    }

    /// Same pattern translated by `offset` sites.
    pub fn translated(&self, offset: usize) -> Self {
        Self {
            sites: self.sites.iter().map(|s| s + offset).collect(),
        }
    }
}

/// Per-atom shifts of the metastable level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct InhomogeneousShifts<R: Real = f64> {
    shifts: Vec<R>,
}

impl<R: Real> InhomogeneousShifts<R> {
    pub fn new(shifts: Vec<R>) -> Self {
        Self { shifts }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            shifts: vec![R::zero(); n],
        }
    }

    pub fn as_slice(&self) -> &[R] {
        &self.shifts
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }
}
