use crate::error::{Error, Result};

/// A sorted sample of a real functional, e.g. `‖S_n‖/√n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    samples: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Usage("empirical law needs at least one sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidInput("empirical law samples contain NaN".into()));
        }
        samples.sort_unstable_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    /// `#{x_i ≤ t} / m`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.samples.partition_point(|&x| x <= t) as f64 / self.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (denominator `m - 1`; zero for one sample).
    pub fn std_dev(&self) -> f64 {
        let m = self.len();
        if m < 2 {
            return 0.0;
        }
        let mean = self.mean();
        (self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
    }

    /// Lower empirical quantile `x_(⌈pm⌉)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let m = self.len();
        let k = ((p.clamp(0.0, 1.0) * m as f64).ceil() as usize).clamp(1, m);
        self.samples[k - 1]
    }

    pub fn scaled(&self, s: f64) -> EmpiricalLaw {
        assert!(s >= 0.0, "scale must be nonnegative");
        EmpiricalLaw {
            samples: self.samples.iter().map(|x| x * s).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_is_right_continuous_step() {
        let law = EmpiricalLaw::new(vec![3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(law.samples(), &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(law.cdf(0.5), 0.0);
        assert_eq!(law.cdf(1.0), 0.25);
        assert_eq!(law.cdf(1.999), 0.25);
        assert_eq!(law.cdf(2.0), 0.75);
        assert_eq!(law.cdf(3.0), 1.0);
        assert_eq!(law.quantile(0.5), 2.0);
        assert_eq!(law.quantile(1.0), 3.0);
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(EmpiricalLaw::new(vec![]).is_err());
        assert!(EmpiricalLaw::new(vec![1.0, f64::NAN]).is_err());
    }
}
