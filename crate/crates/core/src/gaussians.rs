//! Diagonal Gaussian algebra on tape nodes.
//!
//! Network heads emit a raw vector per distribution parameter; the std
//! head always goes through softplus and a small additive floor so every
//! KL term stays finite. KL divergences are closed-form, never sampled.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, NodeId, Tape};

/// Additive lower bound applied to every standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// A diagonal Gaussian whose parameters live on a tape.
#[derive(Debug, Clone)]
pub struct DiagGaussian {
    mean: NodeId,
    std: NodeId,
    dim: usize,
}

impl DiagGaussian {
    /// Wraps existing mean/std nodes. The std node must already respect
    /// the floor; use [`DiagGaussian::from_raw_heads`] for network output.
    pub fn new(tape: &Tape, mean: NodeId, std: NodeId) -> Result<Self> {
        let m = tape.value(mean);
        let s = tape.value(std);
        if !m.is_column() || !s.is_column() || m.rows() != s.rows() {
            return Err(Error::shape("diag_gaussian", m.shape_str(), s.shape_str()));
        }
        if let Some(v) = s.as_slice().iter().find(|v| **v < SIGMA_FLOOR) {
            return Err(Error::Domain {
                op: "diag_gaussian",
                msg: format!("std entry {v} below floor {SIGMA_FLOOR}"),
            });
        }
        Ok(DiagGaussian {
            mean,
            std,
            dim: m.rows(),
        })
    }

    /// Builds the distribution from raw head outputs:
    /// `std = softplus(raw_std) + SIGMA_FLOOR`.
    pub fn from_raw_heads(tape: &mut Tape, mean: NodeId, raw_std: NodeId) -> Result<Self> {
        let sp = tape.softplus(raw_std)?;
        let std = tape.add_const(sp, SIGMA_FLOOR);
        DiagGaussian::new(tape, mean, std)
    }

    /// Constant-parameter distribution, mostly for tests and oracles.
    pub fn from_values(tape: &mut Tape, mean: &[f64], std: &[f64]) -> Result<Self> {
        let m = tape.leaf(Matrix::column(mean));
        let s = tape.leaf(Matrix::column(std));
        DiagGaussian::new(tape, m, s)
    }

    pub fn mean(&self) -> NodeId {
        self.mean
    }

    pub fn std(&self) -> NodeId {
        self.std
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean_values<'t>(&self, tape: &'t Tape) -> &'t [f64] {
        tape.value(self.mean).as_slice()
    }

    pub fn std_values<'t>(&self, tape: &'t Tape) -> &'t [f64] {
        tape.value(self.std).as_slice()
    }

    fn check_dims(&self, other: &DiagGaussian, op: &'static str) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::shape(op, self.dim, other.dim));
        }
        Ok(())
    }
}

/// Reparameterized sample `mean + std .* eps` with `eps ~ N(0, I)` drawn
/// from the tape generator. Gradients flow to mean and std only.
pub fn reparam_sample(tape: &mut Tape, d: &DiagGaussian) -> Result<NodeId> {
    let eps = tape.standard_normal(d.dim);
    let scaled = tape.mul(d.std, eps)?;
    tape.add(d.mean, scaled)
}

/// Closed-form `KL(p || q)` between diagonal Gaussians, as a 1x1 node:
/// `sum_i [ ln(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2 ]`.
pub fn kl(tape: &mut Tape, p: &DiagGaussian, q: &DiagGaussian) -> Result<NodeId> {
    p.check_dims(q, "kl")?;
    let log_q = tape.log(q.std)?;
    let log_p = tape.log(p.std)?;
    let log_ratio = tape.sub(log_q, log_p)?;
    let var_p = tape.mul(p.std, p.std)?;
    let dmu = tape.sub(p.mean, q.mean)?;
    let dmu_sq = tape.mul(dmu, dmu)?;
    let numer = tape.add(var_p, dmu_sq)?;
    let var_q = tape.mul(q.std, q.std)?;
    let denom = tape.mul_const(var_q, 2.0);
    let ratio = tape.div(numer, denom)?;
    let per_dim = tape.add(log_ratio, ratio)?;
    let total = tape.sum(per_dim);
    Ok(tape.add_const(total, -0.5 * p.dim as f64))
}

/// Symmetric divergence `(KL(p||q) + KL(q||p)) / 2`.
pub fn sym_kl(tape: &mut Tape, p: &DiagGaussian, q: &DiagGaussian) -> Result<NodeId> {
    p.check_dims(q, "sym_kl")?;
    let forward = kl(tape, p, q)?;
    let reverse = kl(tape, q, p)?;
    let sum = tape.add(forward, reverse)?;
    Ok(tape.mul_const(sum, 0.5))
}

/// Closed-form KL on plain values; the tape-free route used by oracles
/// and diagnostics.
pub fn kl_values(mean_p: &[f64], std_p: &[f64], mean_q: &[f64], std_q: &[f64]) -> f64 {
    debug_assert_eq!(mean_p.len(), mean_q.len());
    let mut total = 0.0;
    for i in 0..mean_p.len() {
        let (mp, sp, mq, sq) = (mean_p[i], std_p[i], mean_q[i], std_q[i]);
        total += (sq / sp).ln() + (sp * sp + (mp - mq) * (mp - mq)) / (2.0 * sq * sq) - 0.5;
    }
    total
}

/// Value-level counterpart of [`sym_kl`].
pub fn sym_kl_values(mean_p: &[f64], std_p: &[f64], mean_q: &[f64], std_q: &[f64]) -> f64 {
    0.5 * (kl_values(mean_p, std_p, mean_q, std_q) + kl_values(mean_q, std_q, mean_p, std_p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, ValueAndGrad, DEFAULT_FD_STEP};
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let mut tape = Tape::new(0);
        let p = DiagGaussian::from_values(&mut tape, &[0.0, 1.0, -2.0], &[1.0, 0.5, 2.0]).unwrap();
        let v = kl(&mut tape, &p, &p).unwrap();
        assert_eq!(tape.scalar_value(v), 0.0);
    }

    #[test]
    fn kl_unit_shift_is_half() {
        let mut tape = Tape::new(0);
        let p = DiagGaussian::from_values(&mut tape, &[1.0], &[1.0]).unwrap();
        let q = DiagGaussian::from_values(&mut tape, &[0.0], &[1.0]).unwrap();
        let v = kl(&mut tape, &p, &q).unwrap();
        assert!((tape.scalar_value(v) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_dimension_mismatch_errors() {
        let mut tape = Tape::new(0);
        let p = DiagGaussian::from_values(&mut tape, &[0.0], &[1.0]).unwrap();
        let q = DiagGaussian::from_values(&mut tape, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(kl(&mut tape, &p, &q).is_err());
    }

    #[test]
    fn kl_matches_monte_carlo_estimate() {
        let mut rng = rng_from_seed(77);
        let dim = 8;
        let mean_p: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let std_p: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
        let mean_q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let std_q: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();

        let closed = kl_values(&mean_p, &std_p, &mean_q, &std_q);

        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let mut diff = 0.0;
            for i in 0..dim {
                let eps: f64 = StandardNormal.sample(&mut rng);
                let x = mean_p[i] + std_p[i] * eps;
                let zp = (x - mean_p[i]) / std_p[i];
                let zq = (x - mean_q[i]) / std_q[i];
                diff += (std_q[i] / std_p[i]).ln() + 0.5 * (zq * zq - zp * zp);
            }
            acc += diff;
        }
        let mc = acc / n as f64;
        let rel = (closed - mc).abs() / mc.abs().max(1e-12);
        assert!(rel < 0.01, "closed {closed} vs mc {mc} (rel {rel})");
    }

    #[test]
    fn sym_kl_is_bit_symmetric_and_zero_on_equal() {
        let mut tape = Tape::new(0);
        let p = DiagGaussian::from_values(&mut tape, &[0.3, -0.7], &[1.1, 0.4]).unwrap();
        let q = DiagGaussian::from_values(&mut tape, &[-0.2, 0.5], &[0.8, 1.6]).unwrap();
        let pq = sym_kl(&mut tape, &p, &q).unwrap();
        let qp = sym_kl(&mut tape, &q, &p).unwrap();
        assert_eq!(tape.scalar_value(pq), tape.scalar_value(qp));

        let pp = sym_kl(&mut tape, &p, &p).unwrap();
        assert_eq!(tape.scalar_value(pp), 0.0);
    }

    #[test]
    fn sym_kl_unit_shift_is_half() {
        let mut tape = Tape::new(0);
        let p = DiagGaussian::from_values(&mut tape, &[0.0], &[1.0]).unwrap();
        let q = DiagGaussian::from_values(&mut tape, &[1.0], &[1.0]).unwrap();
        let v = sym_kl(&mut tape, &p, &q).unwrap();
        assert!((tape.scalar_value(v) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(13);
        let dim = 4;
        let params: Vec<Matrix> = vec![
            Matrix::column(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()),
            Matrix::column(&(0..dim).map(|_| rng.random_range(0.5..1.5)).collect::<Vec<_>>()),
            Matrix::column(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()),
            Matrix::column(&(0..dim).map(|_| rng.random_range(0.5..1.5)).collect::<Vec<_>>()),
        ];
        let mut f = |ps: &[Matrix]| {
            let mut tape = Tape::new(0);
            let mp = tape.leaf(ps[0].clone());
            let sp = tape.leaf(ps[1].clone());
            let mq = tape.leaf(ps[2].clone());
            let sq = tape.leaf(ps[3].clone());
            let p = DiagGaussian::new(&tape, mp, sp)?;
            let q = DiagGaussian::new(&tape, mq, sq)?;
            let v = kl(&mut tape, &p, &q)?;
            tape.backward(v)?;
            Ok(ValueAndGrad {
                value: tape.scalar_value(v),
                grads: vec![tape.grad(mp), tape.grad(sp), tape.grad(mq), tape.grad(sq)],
            })
        };
        let err = finite_diff_check(&mut f, &params, DEFAULT_FD_STEP).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn reparam_sample_is_deterministic_per_seed() {
        let run = || {
            let mut tape = Tape::new(99);
            let d = DiagGaussian::from_values(&mut tape, &[1.0, -1.0], &[0.5, 2.0]).unwrap();
            let s = reparam_sample(&mut tape, &d).unwrap();
            tape.value(s).as_slice().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn reparam_sample_with_floor_std_stays_near_mean() {
        let mut tape = Tape::new(4);
        let d = DiagGaussian::from_values(&mut tape, &[3.0, -2.0], &[SIGMA_FLOOR, SIGMA_FLOOR])
            .unwrap();
        let s = reparam_sample(&mut tape, &d).unwrap();
        let v = tape.value(s).as_slice().to_vec();
        assert!((v[0] - 3.0).abs() < SIGMA_FLOOR * 10.0);
        assert!((v[1] + 2.0).abs() < SIGMA_FLOOR * 10.0);
    }

    #[test]
    fn reparam_sample_moments_converge() {
        let mean = [0.0, 1.5];
        let std = [1.0, 0.5];
        let n = 100_000;
        let mut tape = Tape::new(7);
        let d = DiagGaussian::from_values(&mut tape, &mean, &std).unwrap();
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for _ in 0..n {
            let s = reparam_sample(&mut tape, &d).unwrap();
            let v = tape.value(s).as_slice();
            for i in 0..2 {
                sums[i] += v[i];
                sq[i] += v[i] * v[i];
            }
        }
        for i in 0..2 {
            let m = sums[i] / n as f64;
            let var = sq[i] / n as f64 - m * m;
            let sd = var.sqrt();
            assert!((m - mean[i]).abs() < 0.02 * std[i].max(1.0), "mean {m}");
            assert!(
                sd > 0.98 * std[i] && sd < 1.02 * std[i],
                "std {sd} expected {}",
                std[i]
            );
        }
    }

    #[test]
    fn reparam_gradients_flow_to_mean_and_std_only() {
        let mut tape = Tape::new(5);
        let d = DiagGaussian::from_values(&mut tape, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let s = reparam_sample(&mut tape, &d).unwrap();
        let total = tape.sum(s);
        tape.backward(total).unwrap();
        assert_eq!(tape.grad(d.mean()).as_slice(), &[1.0, 1.0]);
        // d sample / d std = eps, recover eps from the sample itself
        let sample = tape.value(s).as_slice().to_vec();
        assert_eq!(tape.grad(d.std()).as_slice(), &sample[..]);
    }

    #[test]
    fn rejects_std_below_floor() {
        let mut tape = Tape::new(0);
        assert!(DiagGaussian::from_values(&mut tape, &[0.0], &[0.0]).is_err());
    }
}
