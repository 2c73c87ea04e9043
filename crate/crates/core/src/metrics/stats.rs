use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::MetricsError;

/// Mean and sample (n - 1) standard deviation; the deviation is 0 for a
/// single value and both are NaN for none.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Two-sided p-values of the paired t-test and the Wilcoxon signed-rank
/// test on `b - a`. When every difference is zero both are 1 by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTests {
    pub n: usize,
    pub p_t: f64,
    pub p_wilcoxon: f64,
}

pub fn paired_tests(a: &[f64], b: &[f64]) -> Result<PairedTests, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Shape(vec![a.len()], vec![b.len()]));
    }
    if a.len() < 2 {
        return Err(MetricsError::Input("paired tests need at least two pairs".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricsError::Input("non-finite sample".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if d.iter().all(|&v| v == 0.0) {
        return Ok(PairedTests { n: d.len(), p_t: 1.0, p_wilcoxon: 1.0 });
    }
    Ok(PairedTests { n: d.len(), p_t: paired_t(&d), p_wilcoxon: wilcoxon_signed_rank(&d) })
}

fn paired_t(d: &[f64]) -> f64 {
    let (mean, sd) = mean_std(d);
    let n = d.len() as f64;
    if sd == 0.0 {
        return if mean == 0.0 { 1.0 } else { 0.0 };
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Two-sided signed-rank p-value for differences `d`. Zeros are dropped and
/// tied magnitudes get average ranks. Fewer than 20 non-zero differences use
/// the exact null distribution; otherwise the normal approximation with tie
/// correction (no continuity correction).
pub fn wilcoxon_signed_rank(d: &[f64]) -> f64 {
    let mut nz: Vec<f64> = d.iter().copied().filter(|&v| v != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return 1.0;
    }
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    // Doubled ranks stay integral under averaging.
    let mut rank2 = vec![0usize; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        let r2 = i + 1 + j + 1;
        rank2[i..=j].iter_mut().for_each(|r| *r = r2);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w2: usize = nz.iter().zip(&rank2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    if n < 20 {
        let total: usize = rank2.iter().sum();
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &r in &rank2 {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
        (2.0 * lower.min(upper)).min(1.0)
    } else {
        let w = w2 as f64 / 2.0;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            return 1.0;
        }
        let z = (w - mean) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * normal.sf(z.abs())).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_one() {
        let a = [0.1, 0.2, 0.3, 0.4, 0.5];
        let r = paired_tests(&a, &a).unwrap();
        assert_eq!((r.p_t, r.p_wilcoxon), (1.0, 1.0));
    }

    #[test]
    fn exact_wilcoxon_small_cases() {
        // Five positive differences: W+ = 15 is the single most extreme
        // outcome out of 32 in each tail.
        assert!((wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0]) - 2.0 / 32.0).abs() < 1e-15);
        // Symmetric case: p = 1.
        assert_eq!(wilcoxon_signed_rank(&[1.0, -1.0]), 1.0);
        // n = 3, ranks {1,2,3}, W+ = 1 (only -2, -3 negative): P(W+ <= 1) = 2/8.
        assert!((wilcoxon_signed_rank(&[1.0, -2.0, -3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
