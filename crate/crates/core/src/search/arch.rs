use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supernet::{argmax, Choice, SlotCatalog};
use crate::tensor::{Tape, Tensor, Var};

/// Architecture weights `α`, stored as logits `log α` (one vector per slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    pub logits: Vec<Tensor>,
}

impl ArchParams {
    /// `α = 1` for every candidate.
    pub fn uniform(slots: &[SlotCatalog]) -> Self {
        Self {
            logits: slots.iter().map(|s| Tensor::zeros(&[s.len()])).collect(),
        }
    }

    pub fn from_alpha(alpha: &[Vec<f64>]) -> Result<Self> {
        let logits = alpha
            .iter()
            .map(|a| {
                if a.is_empty() || a.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::Contract(format!("alpha {a:?} must be positive")));
                }
                Ok(Tensor::vector(a.iter().map(|x| x.ln()).collect()))
            })
            .collect::<Result<_>>()?;
        Ok(Self { logits })
    }

    pub fn alpha(&self) -> Vec<Vec<f64>> {
        self.logits
            .iter()
            .map(|l| l.data().iter().map(|x| x.exp()).collect())
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.logits.iter().map(|l| tape.param(l.clone())).collect()
    }

    /// Argmax candidate per slot, ties to the lowest index.
    pub fn derive(&self) -> Vec<usize> {
        self.logits.iter().map(|l| argmax(l.data())).collect()
    }
}

/// `U ~ Uniform(0, 1)` excluding the endpoints, where `log(-log U)` is singular.
pub fn draw_open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// Concrete-distribution weights for one slot given explicit uniforms:
/// `θ_o ∝ exp((log α_o − log(−log U_o)) / τ)`.
pub fn concrete_weights(log_alpha: &[f64], uniforms: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("temperature {tau} must be positive")));
    }
    if log_alpha.len() != uniforms.len() || log_alpha.is_empty() {
        return Err(Error::Dimension(format!(
            "{} logits with {} uniforms",
            log_alpha.len(),
            uniforms.len()
        )));
    }
    let z: Vec<f64> = log_alpha
        .iter()
        .zip(uniforms)
        .map(|(&a, &u)| (a - (-u.ln()).ln()) / tau)
        .collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Draws `θ` for every slot on `tape`, differentiable with respect to the
/// logits. Returns the choices plus their values for logging.
pub fn sample_architecture(
    tape: &mut Tape,
    logits: &[Var],
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Choice>, Vec<Vec<f64>>)> {
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("temperature {tau} must be positive")));
    }
    let mut choices = Vec::with_capacity(logits.len());
    let mut values = Vec::with_capacity(logits.len());
    for &l in logits {
        let n = tape.value(l).numel();
        let gumbel: Vec<f64> = (0..n)
            .map(|_| -(-draw_open_uniform(rng).ln()).ln())
            .collect();
        let g = tape.constant(Tensor::vector(gumbel));
        let z = tape.add(l, g)?;
        let z = tape.scale_const(z, 1.0 / tau)?;
        let theta = tape.softmax(z)?;
        values.push(tape.value(theta).data().to_vec());
        choices.push(Choice::Mixed(theta));
    }
    Ok((choices, values))
}

/// Deterministic relaxation `θ = softmax(log α)`.
pub fn mix_darts(tape: &mut Tape, logits: &[Var]) -> Result<(Vec<Choice>, Vec<Vec<f64>>)> {
    let mut choices = Vec::with_capacity(logits.len());
    let mut values = Vec::with_capacity(logits.len());
    for &l in logits {
        let theta = tape.softmax(l)?;
        values.push(tape.value(theta).data().to_vec());
        choices.push(Choice::Mixed(theta));
    }
    Ok((choices, values))
}

/// `τ_t = τ₀ · (τ_T / τ₀)^{t/T}` for epoch `t` of `T`.
pub fn temperature(epoch: usize, epochs: usize, tau0: f64, tau_final: f64) -> f64 {
    if epochs == 0 {
        return tau0;
    }
    tau0 * (tau_final / tau0).powf(epoch as f64 / epochs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn symmetric_alpha_gives_uniform_theta() {
        for tau in [0.1, 1.0, 5.0] {
            let t = concrete_weights(&[0.0; 3], &[0.5; 3], tau).unwrap();
            for v in t {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_to_one_at_unit_temperature() {
        let t = concrete_weights(&[2f64.ln(), 0.0], &[0.5, 0.5], 1.0).unwrap();
        assert!((t[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((t[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_candidate_is_certain() {
        assert_eq!(concrete_weights(&[0.7], &[0.123], 0.3).unwrap(), vec![1.0]);
    }

    #[test]
    fn bad_temperature() {
        assert!(concrete_weights(&[0.0], &[0.5], 0.0).is_err());
    }

    #[test]
    fn tape_sampling_matches_value_formula() {
        let logits = vec![Tensor::vector(vec![0.3, -0.2, 1.1])];
        let mut tape = Tape::new();
        let vars: Vec<Var> = logits.iter().map(|l| tape.param(l.clone())).collect();
        let mut rng = stream(9, Stream::Sampling);
        let (_, theta) = sample_architecture(&mut tape, &vars, 0.7, &mut rng).unwrap();
        let mut rng = stream(9, Stream::Sampling);
        let u: Vec<f64> = (0..3).map(|_| draw_open_uniform(&mut rng)).collect();
        let expect = concrete_weights(logits[0].data(), &u, 0.7).unwrap();
        for (a, b) in theta[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn darts_values() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::vector(vec![1.0, 0.0]));
        let (_, th) = mix_darts(&mut tape, &[a]).unwrap();
        let e = std::f64::consts::E;
        assert!((th[0][0] - e / (e + 1.0)).abs() < 1e-15);
        let b = tape.param(Tensor::vector(vec![0.0, 0.0]));
        let (_, th) = mix_darts(&mut tape, &[b]).unwrap();
        assert_eq!(th[0], vec![0.5, 0.5]);
    }

    #[test]
    fn derive_ties_and_scaling() {
        let a = ArchParams::from_alpha(&[vec![0.2, 0.5, 0.3], vec![0.5, 0.5]]).unwrap();
        assert_eq!(a.derive(), vec![1, 0]);
        let scaled = ArchParams::from_alpha(&[vec![2.0, 5.0, 3.0], vec![7.0, 7.0]]).unwrap();
        assert_eq!(scaled.derive(), a.derive());
    }

    #[test]
    fn temperature_schedule_endpoints() {
        assert_eq!(temperature(0, 10, 1.0, 0.1), 1.0);
        assert!((temperature(10, 10, 1.0, 0.1) - 0.1).abs() < 1e-15);
        let taus: Vec<f64> = (0..10).map(|t| temperature(t, 10, 1.0, 0.1)).collect();
        assert!(taus.windows(2).all(|w| w[1] < w[0]));
    }
}
