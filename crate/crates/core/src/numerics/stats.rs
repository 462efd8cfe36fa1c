use super::NumericsError;

/// Population moments of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    /// Population standard deviation (divisor N).
    pub std: f64,
    /// Fourth central moment `E[(x - mean)^4]`.
    pub m4: f64,
}

impl Moments {
    /// `m4 / std^4`, or 0 for a constant sample.
    pub fn kurtosis(&self) -> f64 {
        if self.std > 0.0 {
            self.m4 / self.std.powi(4)
        } else {
            0.0
        }
    }
}

pub fn mean(values: &[f64]) -> Result<f64, NumericsError> {
    if values.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn moments(values: &[f64]) -> Result<Moments, NumericsError> {
    let mu = mean(values)?;
    let n = values.len() as f64;
    let (m2, m4) = values.iter().fold((0.0, 0.0), |(m2, m4), &v| {
        let d = v - mu;
        let d2 = d * d;
        (m2 + d2, m4 + d2 * d2)
    });
    Ok(Moments { mean: mu, std: (m2 / n).sqrt(), m4: m4 / n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn constant() {
        let m = moments(&[1.0; 4]).unwrap();
        assert_eq!((m.mean, m.std, m.m4), (1.0, 0.0, 0.0));
        assert_eq!(m.kurtosis(), 0.0);
    }

    #[test]
    fn two_point_symmetric() {
        let m = moments(&[-1.0, 1.0, -1.0, 1.0]).unwrap();
        assert_eq!((m.mean, m.std, m.m4), (0.0, 1.0, 1.0));
    }

    #[test]
    fn empty() {
        assert_eq!(moments(&[]), Err(NumericsError::EmptyInput));
    }

    #[test]
    fn gaussian_kurtosis_near_three() {
        let mut rng = Rng::new(2024);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.standard_normal()).collect();
        let k = moments(&xs).unwrap().kurtosis();
        assert!((k - 3.0).abs() <= 0.05, "kurtosis {k}");
    }
}
