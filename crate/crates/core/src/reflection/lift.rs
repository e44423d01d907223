use nalgebra::{DMatrix, DVector};

use crate::channel::{combined_channel_v, ChannelRealization, C64};
use crate::error::{Error, Result};
use crate::metrics::TransceiverState;

/// Quadratic forms of the combined channel written as traces against the
/// lifted matrix V = v̄v̄^H, v̄ = [v; 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedProblemData {
    /// a·p_k·e^{jφ_k}·Φ̃_k per AirFL user, with φ_k aligning a·h̄_k at the reference.
    pub phi_hat: Vec<Vec<C64>>,
    /// diag(Φ̃_iΦ̃_i^H, 0) per user.
    pub lambda_ring: Vec<DMatrix<C64>>,
    /// diag(Φ̂_kΦ̂_k^H, 0) per AirFL user.
    pub lambda_ddot: Vec<DMatrix<C64>>,
    /// [[Φ̂_kΦ̂_k^H, −Φ̂_k], [−Φ̂_k^H, 0]] per AirFL user.
    pub lambda_hat: Vec<DMatrix<C64>>,
}

impl LiftedProblemData {
    pub fn dim(&self) -> usize {
        self.lambda_ring.first().map_or(1, |m| m.nrows())
    }
}

pub fn lifted_vector(v: &[C64]) -> DVector<C64> {
    DVector::from_iterator(v.len() + 1, v.iter().copied().chain(std::iter::once(C64::new(1.0, 0.0))))
}

pub fn lifted_matrix(v: &[C64]) -> DMatrix<C64> {
    let vb = lifted_vector(v);
    &vb * vb.adjoint()
}

fn outer_padded(x: &[C64]) -> DMatrix<C64> {
    let m = x.len();
    let mut out = DMatrix::zeros(m + 1, m + 1);
    for r in 0..m {
        for c in 0..m {
            out[(r, c)] = x[r] * x[c].conj();
        }
    }
    out
}

/// Lifts the fixed-transceiver problem. AirFL rotations are frozen at the
/// `reference` reflection.
pub fn lift(
    realization: &ChannelRealization,
    state: &TransceiverState,
    reference: &[C64],
    num_airfl: usize,
) -> Result<LiftedProblemData> {
    let users = realization.num_users();
    if state.p.len() != users {
        return Err(Error::Dimension { expected: users, got: state.p.len() });
    }
    if num_airfl > users {
        return Err(Error::Dimension { expected: users, got: num_airfl });
    }
    let hbar = combined_channel_v(realization, reference)?;
    let mut phi_hat = Vec::with_capacity(num_airfl);
    for k in 0..num_airfl {
        let z = state.a * hbar[k];
        let rot = if z.norm() > 0.0 { z.conj() / z.norm() } else { C64::new(1.0, 0.0) };
        let f = state.a * rot * state.p[k];
        phi_hat.push(realization.phi_scaled[k].iter().map(|x| x * f).collect::<Vec<_>>());
    }
    let lambda_ring = realization.phi_scaled.iter().map(|x| outer_padded(x)).collect();
    let lambda_ddot = phi_hat.iter().map(|x| outer_padded(x)).collect();
    let lambda_hat = phi_hat
        .iter()
        .map(|x| {
            let m = x.len();
            let mut out = outer_padded(x);
            for r in 0..m {
                out[(r, m)] = -x[r];
                out[(m, r)] = -x[r].conj();
            }
            out
        })
        .collect();
    Ok(LiftedProblemData { phi_hat, lambda_ring, lambda_ddot, lambda_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use crate::config::NetworkConfig;
    use crate::convex::trace_product;

    #[test]
    fn scalar_case_ignores_phase() {
        let c = C64::new(0.3, -0.4);
        let r = outer_padded(&[c]);
        for t in [0.0, 1.0, 2.5] {
            let v = lifted_matrix(&[C64::from_polar(1.0, t)]);
            assert!((trace_product(&r, &v) - c.norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn null_hat_gives_unit_distortion() {
        let mut cfg = NetworkConfig::default().with_users(1, 0);
        cfg.num_elements = 3;
        let real = sample_channels(&cfg, 0).unwrap();
        let state = TransceiverState { p: vec![0.0], a: C64::new(2.0, 0.0) };
        let v = vec![C64::new(1.0, 0.0); 3];
        let l = lift(&real, &state, &v, 1).unwrap();
        assert!((trace_product(&l.lambda_hat[0], &lifted_matrix(&v)) + 1.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identities_hold_on_random_instance() {
        let mut cfg = NetworkConfig::default().with_users(2, 1);
        cfg.num_elements = 4;
        let real = sample_channels(&cfg, 3).unwrap();
        let state = TransceiverState { p: vec![0.3, 0.2, 0.4], a: C64::new(1e4, 3e3) };
        let reference: Vec<C64> = (0..4).map(|m| C64::from_polar(1.0, 0.7 * m as f64)).collect();
        let l = lift(&real, &state, &reference, 2).unwrap();
        let v: Vec<C64> = (0..4).map(|m| C64::from_polar(1.0, 1.9 * m as f64 + 0.2)).collect();
        let vv = lifted_matrix(&v);
        // direct evaluation: h̄ = Σ conj(v_m)Φ̃[m], AirFL product rotated as at the reference
        let direct = |i: usize| -> C64 { real.phi_scaled[i].iter().zip(&v).map(|(p, x)| x.conj() * p).sum() };
        let href = |i: usize| -> C64 { real.phi_scaled[i].iter().zip(&reference).map(|(p, x)| x.conj() * p).sum() };
        for i in 0..3 {
            let g = direct(i).norm_sqr();
            assert!((trace_product(&l.lambda_ring[i], &vv) - g).abs() <= 1e-10 * g);
        }
        for k in 0..2 {
            let z = state.a * href(k);
            let prod = state.a * direct(k) * state.p[k] * z.conj() / z.norm();
            assert!((trace_product(&l.lambda_ddot[k], &vv) - prod.norm_sqr()).abs() <= 1e-10 * prod.norm_sqr());
            let want = (prod - 1.0).norm_sqr();
            assert!((trace_product(&l.lambda_hat[k], &vv) + 1.0 - want).abs() <= 1e-10 * want.max(1.0));
        }
    }
}
