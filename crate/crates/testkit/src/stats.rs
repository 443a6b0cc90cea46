//! Goodness-of-fit helpers.

/// Upper 1% point of the chi-square distribution with 23 degrees of
/// freedom (24 permutations of four items). Computed with
/// `scipy.stats.chi2.ppf(0.99, 23)`.
pub const CHI2_23_DF_99: f64 = 41.638_398_118_858_476;

/// Pearson statistic of `observed` against a uniform expectation.
pub fn chi_square_uniform(observed: &[u64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let e = n as f64 / observed.len() as f64;
    observed
        .iter()
        .map(|&o| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

/// Index of a permutation of `0..n` in lexicographic order (Lehmer code).
pub fn permutation_rank(p: &[usize]) -> usize {
    let n = p.len();
    let mut rank = 0;
    for i in 0..n {
        let smaller = p[i + 1..].iter().filter(|&&x| x < p[i]).count();
        rank = rank * (n - i) + smaller;
    }
    rank
}

/// Median and interquartile range (linear interpolation between order statistics).
pub fn median_iqr(samples: &[f64]) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
    };
    (q(0.5), q(0.75) - q(0.25))
}
