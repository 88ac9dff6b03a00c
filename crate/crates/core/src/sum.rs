//! Compensated summation.

/// Neumaier's variant of Kahan summation.
///
/// Used for every global reduction so that convergence checks near tight
/// tolerances are not polluted by the order in which thousands of region
/// contributions are added.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

/// Compensated sum of an iterator of values.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(xs.iter().sum::<f64>(), 0.0);
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn single_value_is_exact() {
        let x = 0.1 + 0.2;
        assert_eq!(compensated_sum([x]).to_bits(), x.to_bits());
        let mut s = CompensatedSum::new();
        s.add(x);
        s.add(0.0);
        assert_eq!(s.value().to_bits(), x.to_bits());
    }

    #[test]
    fn many_small_terms() {
        let n = 1_000_000;
        let s = compensated_sum(std::iter::repeat(0.1).take(n));
        assert!((s - 100_000.0).abs() < 1e-9);
    }
}
