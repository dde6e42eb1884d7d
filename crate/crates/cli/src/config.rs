//! Run configuration: one JSON file drives every subcommand, flags override
//! leaves. Unknown keys are rejected everywhere.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use oscnf::flow::Direction;
use oscnf::forcing::ForcingConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rtol: f64,
    pub atol: f64,
    /// `null` leaves the step cap to the engine.
    pub max_step: Option<f64>,
    /// "backward" (the default) or "forward".
    pub direction: String,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: None,
            direction: "backward".into(),
        }
    }
}

impl IntegratorSection {
    pub fn to_core(&self) -> anyhow::Result<oscnf::flow::IntegratorConfig<f64>> {
        let direction = match self.direction.as_str() {
            "backward" => Direction::Backward,
            "forward" => Direction::Forward,
            other => bail!("unknown integration direction {other:?}"),
        };
        Ok(oscnf::flow::IntegratorConfig {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step.unwrap_or(f64::INFINITY),
            direction,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenTrigSection {
    pub harmonics: usize,
    pub tolerance: f64,
}

impl Default for GenTrigSection {
    fn default() -> Self {
        Self {
            harmonics: 64,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalFormSection {
    /// `null` resolves to 3n.
    pub i_max: Option<usize>,
    /// `null` resolves to -2n.
    pub q_min: Option<i64>,
    pub harmonics: usize,
    pub stage1_include_row_n: bool,
}

impl Default for NormalFormSection {
    fn default() -> Self {
        Self {
            i_max: None,
            q_min: None,
            harmonics: 64,
            stage1_include_row_n: false,
        }
    }
}

impl NormalFormSection {
    pub fn to_core(&self, n: u32) -> oscnf::nf::NormalFormOptions {
        let mut o = oscnf::nf::NormalFormOptions::for_n(n);
        if let Some(i) = self.i_max {
            o.i_max = i;
        }
        if let Some(q) = self.q_min {
            o.q_min = q;
        }
        o.harmonics = self.harmonics;
        o.stage1_include_row_n = self.stage1_include_row_n;
        o
    }

    pub fn resolve(&mut self, n: u32) {
        let d = oscnf::nf::NormalFormOptions::for_n(n);
        self.i_max.get_or_insert(d.i_max);
        self.q_min.get_or_insert(d.q_min);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub seeds: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub iterations: usize,
    pub k_ceiling: f64,
    pub rng_seed: u64,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            seeds: 50,
            k_min: 5.0,
            k_max: 50.0,
            iterations: 10_000,
            k_ceiling: 1e4,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySection {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
    pub kappa_phases: usize,
    /// Correct the angle prediction with the normal-form twist series
    /// (otherwise measured against TΛ alone).
    pub use_twist_series: bool,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self {
            lambda_min: 10.0,
            lambda_max: 100.0,
            points: 8,
            kappa_phases: 16,
            use_twist_series: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwistSection {
    pub lambdas: Vec<f64>,
    pub kappa_phases: usize,
    pub fd_step: f64,
}

impl Default for TwistSection {
    fn default() -> Self {
        Self {
            lambdas: vec![10.0, 20.0, 40.0, 80.0],
            kappa_phases: 8,
            fd_step: 1e-3,
        }
    }
}

fn default_forcing() -> ForcingConfig {
    serde_json::from_str(r#"{"n":2,"T":1.0,"p":[]}"#).unwrap()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub forcing: ForcingConfig,
    pub integrator: IntegratorSection,
    pub gentrig: GenTrigSection,
    pub normal_form: NormalFormSection,
    pub scan: ScanSection,
    pub decay: DecaySection,
    pub twist: TwistSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            forcing: default_forcing(),
            integrator: IntegratorSection::default(),
            gentrig: GenTrigSection::default(),
            normal_form: NormalFormSection::default(),
            scan: ScanSection::default(),
            decay: DecaySection::default(),
            twist: TwistSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&std::path::Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: RunConfig = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                Ok(cfg)
            }
            None => Ok(Self::default()),
        }
    }

    /// Fill every derived `null` so the printed config is fully explicit.
    pub fn resolve(&mut self) {
        self.normal_form.resolve(self.forcing.n);
    }

    /// Canonical serialization and its hash; every artifact embeds the hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.canonical_json().as_bytes());
        hex::encode(h.finalize())
    }
}
