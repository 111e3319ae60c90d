//! Log-normal hyperparameter elicitation from quantile statements.

use super::normal::std_normal_quantile;
use crate::error::{Error, Result};

/// Quantile function of a log-normal: `exp(mu + sigma * Phi^-1(p))`.
pub fn lognormal_quantile(mu: f64, sigma: f64, p: f64) -> f64 {
    (mu + sigma * std_normal_quantile(p)).exp()
}

fn check_probability(p: f64, name: &str) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!(
            "{name} must lie in (0, 1), got {p}"
        )));
    }
    Ok(())
}

/// `(mu, sigma)` of the log-normal with `Q(p1) = x1` and `Q(p2) = x2`.
pub fn elicit_lognormal_from_quantiles(p1: f64, x1: f64, p2: f64, x2: f64) -> Result<(f64, f64)> {
    check_probability(p1, "p1")?;
    check_probability(p2, "p2")?;
    if !(p1 < p2) {
        return Err(Error::Argument(format!(
            "quantile levels must be ordered, got {p1} >= {p2}"
        )));
    }
    if !(x1 > 0.0 && x1 < x2) {
        return Err(Error::Argument(format!(
            "quantile values must satisfy 0 < x1 < x2, got {x1}, {x2}"
        )));
    }
    let (z1, z2) = (std_normal_quantile(p1), std_normal_quantile(p2));
    let sigma = (x2.ln() - x1.ln()) / (z2 - z1);
    let mu = x1.ln() - sigma * z1;
    Ok((mu, sigma))
}

/// `(mu, sigma)` of the log-normal whose mode is `mode` and whose `p`
/// quantile is `upper`, i.e. `exp(mu - sigma^2) = mode` and `Q(p) = upper`.
pub fn elicit_lognormal_from_mode(mode: f64, p: f64, upper: f64) -> Result<(f64, f64)> {
    check_probability(p, "p")?;
    if !(mode > 0.0) {
        return Err(Error::Argument(format!(
            "mode must be positive, got {mode}"
        )));
    }
    if !(upper > mode) {
        return Err(Error::Argument(format!(
            "upper ({upper}) must exceed the mode ({mode})"
        )));
    }
    // sigma^2 + z sigma - ln(upper / mode) = 0, positive root.
    let z = std_normal_quantile(p);
    let l = (upper / mode).ln();
    let sigma = 0.5 * (-z + (z * z + 4.0 * l).sqrt());
    if !(sigma > 0.0) {
        return Err(Error::Argument(format!(
            "no positive sigma puts the {p} quantile at {upper} with mode {mode}"
        )));
    }
    Ok((mode.ln() + sigma * sigma, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn scaling_parameter_hyperprior_nominals() {
        let (mu, sigma) = elicit_lognormal_from_quantiles(0.1, 0.1, 0.99, 0.5).unwrap();
        // Frozen from an independent scipy solve of the 2x2 system.
        assert!((mu - (-1.730_901_288_923_344_6)).abs() < 1e-10);
        assert!((sigma - 0.446_087_242_558_797_45).abs() < 1e-10);
        assert!(rel(lognormal_quantile(mu, sigma, 0.1), 0.1) < 1e-10);
        assert!(rel(lognormal_quantile(mu, sigma, 0.99), 0.5) < 1e-10);
    }

    #[test]
    fn median_pins_mu() {
        let (mu, _) = elicit_lognormal_from_quantiles(0.5, 2.5, 0.99, 7.0).unwrap();
        assert!((mu - 2.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn unordered_levels_are_rejected() {
        assert!(matches!(
            elicit_lognormal_from_quantiles(0.6, 1.0, 0.4, 2.0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            elicit_lognormal_from_quantiles(0.1, -1.0, 0.4, 2.0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            elicit_lognormal_from_quantiles(0.1, 3.0, 0.4, 2.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn mode_elicitation_unit_nominal() {
        let (mu, sigma) = elicit_lognormal_from_mode(1.0, 0.95, 1.2).unwrap();
        assert!((sigma - 0.104_237_861_753_555_1).abs() < 1e-10);
        assert!((mu - sigma * sigma).abs() < 1e-15);
        let z = std_normal_quantile(0.95);
        assert!((sigma * sigma + sigma * z - 1.2f64.ln()).abs() < 1e-14);
        assert!(rel((mu - sigma * sigma).exp(), 1.0) < 1e-12);
        assert!(rel(lognormal_quantile(mu, sigma, 0.95), 1.2) < 1e-10);
    }

    #[test]
    fn mode_elicitation_pore_diffusivity_nominal() {
        let (mu, sigma) = elicit_lognormal_from_mode(0.01, 0.95, 0.012).unwrap();
        assert!((mu - (-4.594_304_654_165_137)).abs() < 1e-10);
        assert!((sigma - 0.104_237_861_753_555_1).abs() < 1e-10);
        assert!(rel((mu - sigma * sigma).exp(), 0.01) < 1e-10);
        assert!(rel(lognormal_quantile(mu, sigma, 0.95), 0.012) < 1e-10);
    }

    #[test]
    fn degenerate_mode_is_rejected() {
        assert!(matches!(
            elicit_lognormal_from_mode(1.0, 0.95, 1.0),
            Err(Error::Argument(_))
        ));
    }
}
