//! Geometry, Rician fading and the reflected (cascaded) channel.

use std::f64::consts::PI;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{NetworkConfig, Point3, UserPlacement};
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Large-scale gain ς₀·d^(−α).
pub fn path_loss(distance: f64, config: &NetworkConfig) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {distance}")));
    }
    Ok(config.path_loss_ref * distance.powf(-config.path_loss_exp))
}

/// One draw of small-scale fading and geometry. Users are indexed AirFL first.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub seed: u64,
    pub user_pos: Vec<Point3>,
    /// BS–RIS fading.
    pub g: Vec<C64>,
    /// User–RIS fading, one vector per user.
    pub h: Vec<Vec<C64>>,
    pub d0: f64,
    pub d: Vec<f64>,
    /// conj(g) ∘ h_i.
    pub phi: Vec<Vec<C64>>,
    /// √(L₀·L_i)·phi_i.
    pub phi_scaled: Vec<Vec<C64>>,
}

impl ChannelRealization {
    pub fn num_elements(&self) -> usize {
        self.g.len()
    }

    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    /// FNV-1a over the bit patterns of every fading and geometry value.
    /// Equal hashes across schemes certify paired realizations.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for byte in x.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.d0);
        self.d.iter().for_each(|&x| eat(x));
        for z in self.g.iter().chain(self.h.iter().flatten()) {
            eat(z.re);
            eat(z.im);
        }
        hash
    }
}

fn draw_position(rng: &mut ChaCha8Rng, center: &Point3, radius: f64) -> Point3 {
    let r = radius * rng.random::<f64>().sqrt();
    let ang = 2.0 * PI * rng.random::<f64>();
    [center[0] + r * ang.cos(), center[1] + r * ang.sin(), center[2]]
}

fn draw_rician(rng: &mut ChaCha8Rng, m: usize, kappa: f64) -> Vec<C64> {
    let (los, nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..m)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(los, 0.0) + C64::new(re * s, im * s) * nlos
        })
        .collect()
}

pub fn sample_channels(config: &NetworkConfig, seed: u64) -> Result<ChannelRealization> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = config.num_users();
    let m = config.num_elements;
    let user_pos: Vec<Point3> = match &config.placement {
        UserPlacement::Fixed(pos) => pos.clone(),
        UserPlacement::Disk { center, radius } => {
            (0..users).map(|_| draw_position(&mut rng, center, *radius)).collect()
        }
    };
    let g = draw_rician(&mut rng, m, config.rician_factor);
    let h: Vec<Vec<C64>> = (0..users).map(|_| draw_rician(&mut rng, m, config.rician_factor)).collect();
    let d0 = distance(&config.bs_pos, &config.ris_pos);
    let d: Vec<f64> = user_pos.iter().map(|p| distance(p, &config.ris_pos)).collect();
    let l0 = path_loss(d0, config)?;
    let mut phi = Vec::with_capacity(users);
    let mut phi_scaled = Vec::with_capacity(users);
    for (hi, &di) in h.iter().zip(&d) {
        let amp = (l0 * path_loss(di, config)?).sqrt();
        let p: Vec<C64> = g.iter().zip(hi).map(|(gm, hm)| gm.conj() * hm).collect();
        phi_scaled.push(p.iter().map(|z| z * amp).collect());
        phi.push(p);
    }
    Ok(ChannelRealization { seed, user_pos, g, h, d0, d, phi, phi_scaled })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    Discrete { bits: u32 },
    Continuous,
}

/// Per-element phase shifts; `v()` gives the unit-modulus vector e^{jθ}.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionState {
    pub theta: Vec<f64>,
    pub mode: PhaseMode,
}

impl ReflectionState {
    pub fn continuous(theta: Vec<f64>) -> Self {
        Self { theta, mode: PhaseMode::Continuous }
    }

    /// Phases (2l+1)Δ/2 for the given level indices.
    pub fn from_levels(levels: &[u32], bits: u32) -> Self {
        let step = 2.0 * PI / (1u64 << bits) as f64;
        let theta = levels.iter().map(|&l| (2 * l + 1) as f64 * step / 2.0).collect();
        Self { theta, mode: PhaseMode::Discrete { bits } }
    }

    pub fn random_discrete<R: Rng>(m: usize, bits: u32, rng: &mut R) -> Self {
        let levels: Vec<u32> = (0..m).map(|_| rng.random_range(0..1u32 << bits)).collect();
        Self::from_levels(&levels, bits)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn v(&self) -> Vec<C64> {
        self.theta.iter().map(|&t| C64::from_polar(1.0, t)).collect()
    }
}

/// h̄_i = v^H·Φ̃_i for every user.
pub fn combined_channel(realization: &ChannelRealization, reflection: &ReflectionState) -> Result<Vec<C64>> {
    combined_channel_v(realization, &reflection.v())
}

pub fn combined_channel_v(realization: &ChannelRealization, v: &[C64]) -> Result<Vec<C64>> {
    let m = realization.num_elements();
    if v.len() != m {
        return Err(Error::Dimension { expected: m, got: v.len() });
    }
    Ok(realization
        .phi_scaled
        .iter()
        .map(|phi| phi.iter().zip(v).map(|(p, vm)| vm.conj() * p).sum())
        .collect())
}

pub fn gains(hbar: &[C64]) -> Vec<f64> {
    hbar.iter().map(|h| h.norm_sqr()).collect()
}

/// Literal decoding-order condition: every AirFL gain below the first NOMA
/// gain and NOMA gains ascending in index order.
pub fn ordering_satisfied(gains: &[f64], num_airfl: usize, num_noma: usize) -> bool {
    assert_eq!(gains.len(), num_airfl + num_noma, "gains length must be K+N");
    let noma = &gains[num_airfl..];
    let airfl_ok = match noma.first() {
        Some(&first) => gains[..num_airfl].iter().all(|&g| g <= first),
        None => true,
    };
    airfl_ok && noma.windows(2).all(|w| w[0] <= w[1])
}

/// Ordering up to NOMA relabeling: only the AirFL-below-NOMA split matters.
pub fn ordering_feasible(gains: &[f64], num_airfl: usize) -> bool {
    let max_a = gains[..num_airfl].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    gains[num_airfl..].iter().all(|&g| g >= max_a)
}

/// Global indices of the NOMA users in ascending gain order (ties by index).
pub fn noma_order(gains: &[f64], num_airfl: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (num_airfl..gains.len()).collect();
    idx.sort_by(|&a, &b| gains[a].total_cmp(&gains[b]).then(a.cmp(&b)));
    idx
}
