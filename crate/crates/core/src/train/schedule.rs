use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the adaptation ramp `ω` over training progress `p ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ramp {
    /// `2 / (1 + exp(−10·p)) − 1`
    #[default]
    Sigmoid,
    /// `p`
    Linear,
}

/// `ω` at `step` of `total_steps`: zero at the start, non-decreasing, below one.
pub fn omega(step: usize, total_steps: usize, ramp: Ramp) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::Contract(format!(
            "omega: step {step} outside [0, {total_steps}] (total must be >= 1)"
        )));
    }
    let p = step as f64 / total_steps as f64;
    Ok(match ramp {
        Ramp::Sigmoid => 2.0 / (1.0 + (-10.0 * p).exp()) - 1.0,
        Ramp::Linear => p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(omega(0, 100, Ramp::Sigmoid).unwrap(), 0.0);
        assert_eq!(omega(0, 100, Ramp::Linear).unwrap(), 0.0);
        assert_eq!(omega(50, 100, Ramp::Linear).unwrap(), 0.5);
        let end = omega(100, 100, Ramp::Sigmoid).unwrap();
        assert!((end - 0.999_909_204_262_595).abs() < 1e-12, "{end}");
    }

    #[test]
    fn monotone_and_bounded() {
        for ramp in [Ramp::Sigmoid, Ramp::Linear] {
            let w: Vec<f64> = (0..=1000).map(|s| omega(s, 1000, ramp).unwrap()).collect();
            assert!(w.windows(2).all(|p| p[0] <= p[1]));
            assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn out_of_range() {
        assert!(omega(5, 4, Ramp::Sigmoid).is_err());
        assert!(omega(0, 0, Ramp::Linear).is_err());
    }
}
