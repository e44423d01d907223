//! Scenario parameters, unit conversion and scenario-file ingestion.
//!
//! All fields are SI: watts, hertz, bit/s, meters. dBm inputs are converted
//! once when a scenario file is read.

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// How user positions are produced for a realization.
#[derive(Debug, Clone, PartialEq)]
pub enum UserPlacement {
    /// One position per user, AirFL users first.
    Fixed(Vec<Point3>),
    /// Uniform in a horizontal disk, redrawn for every seed.
    Disk { center: Point3, radius: f64 },
}

/// Iteration controls for every solver block.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub backend_tol: f64,
    pub backend_max_iters: usize,
    pub power_tol: f64,
    pub power_max_iters: usize,
    pub scalar_tol: f64,
    pub scalar_max_iters: usize,
    pub reflection_tol: f64,
    pub reflection_max_iters: usize,
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    pub randomization_count: usize,
    /// Exhaustive search replaces the relaxation when `phase_bits * M` is at most this.
    pub exhaustive_max_bits: u32,
    pub enumeration_cap: u128,
    pub init_retries: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            backend_tol: 1e-7,
            backend_max_iters: 200,
            power_tol: 1e-6,
            power_max_iters: 30,
            scalar_tol: 1e-6,
            scalar_max_iters: 30,
            reflection_tol: 1e-6,
            reflection_max_iters: 10,
            outer_tol: 1e-6,
            outer_max_iters: 50,
            randomization_count: 50,
            exhaustive_max_bits: 20,
            enumeration_cap: 1 << 20,
            init_retries: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub num_airfl: usize,
    pub num_noma: usize,
    pub num_elements: usize,
    pub phase_bits: u32,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    /// Per-user budget, AirFL users first.
    pub power_budget_w: Vec<f64>,
    pub min_rate_bps: f64,
    /// May be infinite (relaxed MSE).
    pub mse_tolerance: f64,
    pub weight_lambda: f64,
    pub path_loss_ref: f64,
    pub path_loss_exp: f64,
    /// May be infinite (pure line of sight).
    pub rician_factor: f64,
    pub bs_pos: Point3,
    pub ris_pos: Point3,
    pub placement: UserPlacement,
    pub trials: usize,
    pub rng_seed: u64,
    pub solver: SolverSettings,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let (k, n) = (4, 2);
        Self {
            num_airfl: k,
            num_noma: n,
            num_elements: 20,
            phase_bits: 2,
            bandwidth_hz: 1e6,
            noise_power_w: dbm_to_watts(-80.0),
            power_budget_w: vec![dbm_to_watts(23.0); k + n],
            min_rate_bps: 2e6,
            mse_tolerance: 0.01,
            weight_lambda: 0.5,
            path_loss_ref: db_to_linear(-30.0),
            path_loss_exp: 2.0,
            rician_factor: 2.0,
            bs_pos: [5.0, 0.0, 15.0],
            ris_pos: [0.0, 40.0, 15.0],
            placement: UserPlacement::Disk { center: [5.0, 50.0, 0.0], radius: 3.0 },
            trials: 200,
            rng_seed: 1,
            solver: SolverSettings::default(),
        }
    }
}

impl NetworkConfig {
    pub fn num_users(&self) -> usize {
        self.num_airfl + self.num_noma
    }

    pub fn phase_levels(&self) -> u32 {
        1 << self.phase_bits
    }

    pub fn phase_step(&self) -> f64 {
        2.0 * PI / self.phase_levels() as f64
    }

    /// ζ = 2^(R_min/B) − 1, the SINR a NOMA user needs.
    pub fn sinr_threshold(&self) -> f64 {
        (self.min_rate_bps / self.bandwidth_hz).exp2() - 1.0
    }

    pub fn with_users(mut self, num_airfl: usize, num_noma: usize) -> Self {
        let p = self.power_budget_w.first().copied().unwrap_or(dbm_to_watts(23.0));
        self.num_airfl = num_airfl;
        self.num_noma = num_noma;
        self.power_budget_w = vec![p; num_airfl + num_noma];
        self
    }

    pub fn set_power_budget_dbm(&mut self, dbm: f64) {
        self.power_budget_w = vec![dbm_to_watts(dbm); self.num_users()];
    }

    /// Geometry of the RIS placement sweep: BS at the origin, RIS on the
    /// BS–users line at `ris_y`, users in a 5 m disk centred 60 m away.
    pub fn with_placement_geometry(mut self, ris_y: f64) -> Self {
        self.bs_pos = [0.0, 0.0, 0.0];
        self.ris_pos = [0.0, ris_y, 0.0];
        self.placement = UserPlacement::Disk { center: [0.0, 60.0, 0.0], radius: 5.0 };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_users() == 0 {
            return bad("at least one user is required");
        }
        if self.num_elements == 0 {
            return bad("num_elements must be at least 1");
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return bad("phase_bits must be in 1..=16");
        }
        if self.power_budget_w.len() != self.num_users() {
            return bad("power_budget_w needs one entry per user");
        }
        if self.power_budget_w.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return bad("power budgets must be positive and finite");
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return bad("bandwidth_hz must be positive");
        }
        if !(self.noise_power_w > 0.0 && self.noise_power_w.is_finite()) {
            return bad("noise_power_w must be positive");
        }
        if !(self.min_rate_bps >= 0.0 && self.min_rate_bps.is_finite()) {
            return bad("min_rate_bps must be nonnegative");
        }
        if !(self.mse_tolerance > 0.0) {
            return bad("mse_tolerance must be positive");
        }
        if !(0.0..=1.0).contains(&self.weight_lambda) {
            return bad("weight_lambda must lie in [0, 1]");
        }
        if !(self.path_loss_ref > 0.0 && self.path_loss_ref.is_finite()) {
            return bad("path_loss_ref must be positive");
        }
        if !(self.path_loss_exp >= 2.0 && self.path_loss_exp.is_finite()) {
            return bad("path_loss_exp must be at least 2");
        }
        if !(self.rician_factor >= 0.0) {
            return bad("rician_factor must be nonnegative");
        }
        match &self.placement {
            UserPlacement::Fixed(pos) if pos.len() != self.num_users() => {
                return bad("user_positions needs one entry per user");
            }
            UserPlacement::Disk { radius, .. } if !(*radius >= 0.0) => {
                return bad("user disk radius must be nonnegative");
            }
            _ => {}
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        file.into_config()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Renders the configuration as a scenario file that `from_toml_str` accepts.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        let f = |x: f64| {
            if x.is_infinite() {
                "inf".to_string()
            } else {
                format!("{x:?}")
            }
        };
        let pt = |p: &Point3| format!("[{}, {}, {}]", f(p[0]), f(p[1]), f(p[2]));
        out += &format!("num_airfl = {}\n", self.num_airfl);
        out += &format!("num_noma = {}\n", self.num_noma);
        out += &format!("num_elements = {}\n", self.num_elements);
        out += &format!("phase_bits = {}\n", self.phase_bits);
        out += &format!("bandwidth_hz = {}\n", f(self.bandwidth_hz));
        out += &format!("noise_power_w = {}\n", f(self.noise_power_w));
        let budgets: Vec<String> = self.power_budget_w.iter().map(|&p| f(p)).collect();
        out += &format!("power_budget_w = [{}]\n", budgets.join(", "));
        out += &format!("min_rate_bps = {}\n", f(self.min_rate_bps));
        out += &format!("mse_tolerance = {}\n", f(self.mse_tolerance));
        out += &format!("weight_lambda = {}\n", f(self.weight_lambda));
        out += &format!("path_loss_ref = {}\n", f(self.path_loss_ref));
        out += &format!("path_loss_exp = {}\n", f(self.path_loss_exp));
        out += &format!("rician_factor = {}\n", f(self.rician_factor));
        out += &format!("bs_pos = {}\n", pt(&self.bs_pos));
        out += &format!("ris_pos = {}\n", pt(&self.ris_pos));
        match &self.placement {
            UserPlacement::Fixed(pos) => {
                let rows: Vec<String> = pos.iter().map(pt).collect();
                out += &format!("user_positions = [{}]\n", rows.join(", "));
            }
            UserPlacement::Disk { center, radius } => {
                out += &format!("user_disk_center = {}\n", pt(center));
                out += &format!("user_disk_radius = {}\n", f(*radius));
            }
        }
        out += &format!("trials = {}\n", self.trials);
        out += &format!("rng_seed = {}\n", self.rng_seed);
        let s = &self.solver;
        out += "\n[solver]\n";
        out += &format!("backend_tol = {}\n", f(s.backend_tol));
        out += &format!("backend_max_iters = {}\n", s.backend_max_iters);
        out += &format!("power_tol = {}\n", f(s.power_tol));
        out += &format!("power_max_iters = {}\n", s.power_max_iters);
        out += &format!("scalar_tol = {}\n", f(s.scalar_tol));
        out += &format!("scalar_max_iters = {}\n", s.scalar_max_iters);
        out += &format!("reflection_tol = {}\n", f(s.reflection_tol));
        out += &format!("reflection_max_iters = {}\n", s.reflection_max_iters);
        out += &format!("outer_tol = {}\n", f(s.outer_tol));
        out += &format!("outer_max_iters = {}\n", s.outer_max_iters);
        out += &format!("randomization_count = {}\n", s.randomization_count);
        out += &format!("exhaustive_max_bits = {}\n", s.exhaustive_max_bits);
        out += &format!("enumeration_cap = {}\n", s.enumeration_cap);
        out += &format!("init_retries = {}\n", s.init_retries);
        out
    }
}

/// On-disk scenario. Every key is optional and overrides the default;
/// quantities with a unit choice take exactly one of the two keys.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    num_airfl: Option<usize>,
    num_noma: Option<usize>,
    num_elements: Option<usize>,
    phase_bits: Option<u32>,
    bandwidth_hz: Option<f64>,
    noise_power_dbm: Option<f64>,
    noise_power_w: Option<f64>,
    power_budget_dbm: Option<ScalarOrList>,
    power_budget_w: Option<ScalarOrList>,
    min_rate_bps: Option<f64>,
    mse_tolerance: Option<f64>,
    weight_lambda: Option<f64>,
    path_loss_ref: Option<f64>,
    path_loss_ref_db: Option<f64>,
    path_loss_exp: Option<f64>,
    rician_factor: Option<f64>,
    bs_pos: Option<Point3>,
    ris_pos: Option<Point3>,
    user_positions: Option<Vec<Point3>>,
    user_disk_center: Option<Point3>,
    user_disk_radius: Option<f64>,
    trials: Option<usize>,
    rng_seed: Option<u64>,
    solver: Option<SolverFile>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverFile {
    backend_tol: Option<f64>,
    backend_max_iters: Option<usize>,
    power_tol: Option<f64>,
    power_max_iters: Option<usize>,
    scalar_tol: Option<f64>,
    scalar_max_iters: Option<usize>,
    reflection_tol: Option<f64>,
    reflection_max_iters: Option<usize>,
    outer_tol: Option<f64>,
    outer_max_iters: Option<usize>,
    randomization_count: Option<usize>,
    exhaustive_max_bits: Option<u32>,
    enumeration_cap: Option<u64>,
    init_retries: Option<usize>,
}

fn exclusive<T>(a: Option<T>, b: Option<T>, names: &str) -> Result<Option<(T, bool)>> {
    match (a, b) {
        (Some(_), Some(_)) => Err(Error::InvalidConfig(format!("give only one of {names}"))),
        (Some(x), None) => Ok(Some((x, true))),
        (None, Some(x)) => Ok(Some((x, false))),
        (None, None) => Ok(None),
    }
}

impl ScenarioFile {
    fn into_config(self) -> Result<NetworkConfig> {
        let mut c = NetworkConfig::default();
        let k = self.num_airfl.unwrap_or(c.num_airfl);
        let n = self.num_noma.unwrap_or(c.num_noma);
        c = c.with_users(k, n);
        if let Some(m) = self.num_elements {
            c.num_elements = m;
        }
        if let Some(b) = self.phase_bits {
            c.phase_bits = b;
        }
        if let Some(b) = self.bandwidth_hz {
            c.bandwidth_hz = b;
        }
        match exclusive(self.noise_power_dbm, self.noise_power_w, "noise_power_dbm / noise_power_w")? {
            Some((x, true)) => c.noise_power_w = dbm_to_watts(x),
            Some((x, false)) => c.noise_power_w = x,
            None => {}
        }
        match exclusive(self.power_budget_dbm, self.power_budget_w, "power_budget_dbm / power_budget_w")? {
            Some((v, is_dbm)) => {
                let conv = |x: f64| if is_dbm { dbm_to_watts(x) } else { x };
                c.power_budget_w = match v {
                    ScalarOrList::Scalar(x) => vec![conv(x); k + n],
                    ScalarOrList::List(xs) => xs.into_iter().map(conv).collect(),
                };
            }
            None => {}
        }
        if let Some(r) = self.min_rate_bps {
            c.min_rate_bps = r;
        }
        if let Some(e) = self.mse_tolerance {
            c.mse_tolerance = e;
        }
        if let Some(l) = self.weight_lambda {
            c.weight_lambda = l;
        }
        match exclusive(self.path_loss_ref_db, self.path_loss_ref, "path_loss_ref_db / path_loss_ref")? {
            Some((x, true)) => c.path_loss_ref = db_to_linear(x),
            Some((x, false)) => c.path_loss_ref = x,
            None => {}
        }
        if let Some(a) = self.path_loss_exp {
            c.path_loss_exp = a;
        }
        if let Some(r) = self.rician_factor {
            c.rician_factor = r;
        }
        if let Some(p) = self.bs_pos {
            c.bs_pos = p;
        }
        if let Some(p) = self.ris_pos {
            c.ris_pos = p;
        }
        let disk_given = self.user_disk_center.is_some() || self.user_disk_radius.is_some();
        match (self.user_positions, disk_given) {
            (Some(_), true) => {
                return Err(Error::InvalidConfig(
                    "give either user_positions or the user disk, not both".into(),
                ))
            }
            (Some(pos), false) => c.placement = UserPlacement::Fixed(pos),
            (None, true) => {
                let (dc, dr) = match &c.placement {
                    UserPlacement::Disk { center, radius } => (*center, *radius),
                    UserPlacement::Fixed(_) => unreachable!("default placement is a disk"),
                };
                c.placement = UserPlacement::Disk {
                    center: self.user_disk_center.unwrap_or(dc),
                    radius: self.user_disk_radius.unwrap_or(dr),
                };
            }
            (None, false) => {}
        }
        if let Some(t) = self.trials {
            c.trials = t;
        }
        if let Some(s) = self.rng_seed {
            c.rng_seed = s;
        }
        if let Some(s) = self.solver {
            let d = &mut c.solver;
            macro_rules! set {
                ($($f:ident),*) => { $( if let Some(x) = s.$f { d.$f = x; } )* };
            }
            set!(
                backend_tol,
                backend_max_iters,
                power_tol,
                power_max_iters,
                scalar_tol,
                scalar_max_iters,
                reflection_tol,
                reflection_max_iters,
                outer_tol,
                outer_max_iters,
                randomization_count,
                exhaustive_max_bits,
                init_retries
            );
            if let Some(cap) = s.enumeration_cap {
                d.enumeration_cap = cap as u128;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-25);
        assert!((watts_to_dbm(dbm_to_watts(23.0)) - 23.0).abs() < 1e-12);
    }

    #[test]
    fn defaults_are_valid() {
        let c = NetworkConfig::default();
        c.validate().unwrap();
        assert_eq!(c.phase_levels(), 4);
        assert!((c.phase_step() * c.phase_levels() as f64 - 2.0 * PI).abs() < 1e-15);
        assert!((c.sinr_threshold() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = NetworkConfig::default();
        c.weight_lambda = 1.5;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::default();
        c.noise_power_w = 0.0;
        assert!(c.validate().is_err());
        let c = NetworkConfig::default().with_users(0, 0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn scenario_units() {
        let c = NetworkConfig::from_toml_str(
            "num_airfl = 2\nnum_noma = 1\nnoise_power_dbm = -90\npower_budget_dbm = 30\nmse_tolerance = inf\n",
        )
        .unwrap();
        assert_eq!(c.num_users(), 3);
        assert!((c.noise_power_w - 1e-12).abs() < 1e-26);
        assert_eq!(c.power_budget_w, vec![1.0; 3]);
        assert!(c.mse_tolerance.is_infinite());
    }

    #[test]
    fn scenario_rejects_conflicting_units_and_typos() {
        assert!(NetworkConfig::from_toml_str("noise_power_dbm = -90\nnoise_power_w = 1e-12\n").is_err());
        assert!(NetworkConfig::from_toml_str("noise_power = -90\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = NetworkConfig::default();
        c.mse_tolerance = f64::INFINITY;
        c.placement = UserPlacement::Fixed(vec![[1.0, 2.0, 3.0]; 6]);
        let back = NetworkConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }
}
