//! Random entry masks over the upper triangle of a `p x p` matrix.
//!
//! Pairs are ranked lexicographically (`(1,2), (1,3), ..., (p-1,p)`) and the
//! sampled ranks are produced by accumulating geometric gaps, so the cost is
//! proportional to the number of sampled pairs rather than to `p^2`.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result, ScreenError};
use crate::rng::{stream, stream_rng};

/// A variable pair `(i, j)` with `i < j`, 0-based.
pub type Pair = (u32, u32);

/// Bijection between 1-based pairs `1 <= i < j <= p` and 1-based linear
/// indices `1..=p(p-1)/2` in lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndexMap {
    p: u64,
    total: u64,
}

impl PairIndexMap {
    pub fn new(p: usize) -> Result<Self> {
        if p < 2 {
            return param_err(format!("need at least two variables, got p={p}"));
        }
        let p = p as u64;
        Ok(Self {
            p,
            total: p * (p - 1) / 2,
        })
    }

    pub fn p(&self) -> usize {
        self.p as usize
    }

    /// Number of upper-triangle pairs, `p(p-1)/2`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of pairs whose first index is smaller than `i` (1-based `i`).
    #[inline]
    fn row_offset(&self, i: u64) -> u64 {
        (i - 1) * (2 * self.p - i) / 2
    }

    pub fn forward(&self, i: usize, j: usize) -> Result<u64> {
        let (i, j) = (i as u64, j as u64);
        if i < 1 || j > self.p || i >= j {
            return Err(ScreenError::Precondition(format!(
                "pair ({i},{j}) must satisfy 1 <= i < j <= {}",
                self.p
            )));
        }
        Ok(self.row_offset(i) + (j - i))
    }

    pub fn inverse(&self, t: u64) -> Result<(usize, usize)> {
        if t < 1 || t > self.total {
            return Err(ScreenError::Precondition(format!(
                "linear index {t} outside 1..={}",
                self.total
            )));
        }
        // Largest i with row_offset(i) < t; closed form, then integer fix-up.
        let b = (2 * self.p - 1) as f64;
        let disc = (b * b - 8.0 * (t - 1) as f64).max(0.0);
        let mut i = (((b - disc.sqrt()) / 2.0).floor() as u64 + 1).clamp(1, self.p - 1);
        while i > 1 && self.row_offset(i) >= t {
            i -= 1;
        }
        while i < self.p - 1 && self.row_offset(i + 1) < t {
            i += 1;
        }
        let j = t - self.row_offset(i) + i;
        Ok((i as usize, j as usize))
    }
}

/// Draws a gap `Z >= 1` with `P(Z = z) = (1 - prob)^(z-1) prob` by inversion.
#[inline]
fn geometric_gap<R: Rng>(rng: &mut R, log_q: f64) -> u64 {
    if log_q == f64::NEG_INFINITY {
        return 1;
    }
    // u in (0, 1]
    let u = 1.0 - rng.random::<f64>();
    let z = (u.ln() / log_q).floor();
    // `as` saturates for huge values.
    (z as u64).saturating_add(1)
}

fn check_prob(prob: f64) -> Result<()> {
    if !(prob > 0.0 && prob <= 1.0) {
        return param_err(format!("sampling probability must lie in (0, 1], got {prob}"));
    }
    Ok(())
}

/// Walks the sampled linear indices and converts them to 0-based pairs
/// without a per-index inverse: the indices arrive sorted, so the current
/// row only ever moves forward.
fn geometric_walk<R: Rng>(p: usize, prob: f64, rng: &mut R, mut emit: impl FnMut(Pair, &mut R)) {
    let map = PairIndexMap::new(p).expect("p >= 2 checked by caller");
    let total = map.total();
    let log_q = (1.0 - prob).ln();
    let p64 = p as u64;

    let mut row: u64 = 1;
    let mut row_start: u64 = 0; // pairs before `row`
    let mut t: u64 = 0;
    loop {
        t = t.saturating_add(geometric_gap(rng, log_q));
        if t > total {
            break;
        }
        while t > row_start + (p64 - row) {
            row_start += p64 - row;
            row += 1;
        }
        let j = t - row_start + row;
        emit(((row - 1) as u32, (j - 1) as u32), rng);
    }
}

/// Samples every upper-triangle pair independently with probability `prob`.
///
/// The result is sorted lexicographically and depends only on
/// `(p, prob, seed)`.
pub fn sample_pairs(p: usize, prob: f64, seed: u64) -> Result<Vec<Pair>> {
    check_prob(prob)?;
    if p < 2 {
        return param_err(format!("need at least two variables, got p={p}"));
    }
    if p > u32::MAX as usize {
        return param_err("p exceeds the 32-bit variable index range");
    }
    let total = (p as u64) * (p as u64 - 1) / 2;
    let expected = (total as f64 * prob * 1.05 + 16.0).min(total as f64) as usize;
    let mut out = Vec::with_capacity(expected);
    let mut rng = stream_rng(seed, stream::PAIR_SAMPLER);
    geometric_walk(p, prob, &mut rng, |pair, _| out.push(pair));
    Ok(out)
}

/// Realized sampling mask with a train/validation split.
///
/// Train pairs carry the mask used to build the rescaled differential
/// matrix; validation pairs are the held-out positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub p: usize,
    pub rho: f64,
    pub tau: f64,
    pub seed: u64,
    pub train_pairs: Vec<Pair>,
    pub validation_pairs: Vec<Pair>,
}

/// Samples a superset mask at rate `(1 + tau) rho` and routes each sampled
/// pair to training with probability `1 / (1 + tau)`, validation otherwise.
/// Marginally each pair is a training pair with probability `rho`.
pub fn split_train_validation(p: usize, rho: f64, tau: f64, seed: u64) -> Result<PairSample> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return param_err(format!("validation proportion tau must be >= 0, got {tau}"));
    }
    check_prob(rho)?;
    let outer = (1.0 + tau) * rho;
    if outer > 1.0 + 1e-12 {
        return param_err(format!(
            "(1 + tau) * rho = {outer} exceeds 1; lower rho or tau"
        ));
    }
    let outer = outer.min(1.0);
    if p < 2 {
        return param_err(format!("need at least two variables, got p={p}"));
    }
    let keep = 1.0 / (1.0 + tau);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut sampler_rng = stream_rng(seed, stream::PAIR_SAMPLER);
    let mut coin = stream_rng(seed, stream::VALIDATION_SPLIT);
    geometric_walk(p, outer, &mut sampler_rng, |pair, _| {
        if tau == 0.0 || coin.random::<f64>() < keep {
            train.push(pair);
        } else {
            validation.push(pair);
        }
    });
    Ok(PairSample {
        p,
        rho,
        tau,
        seed,
        train_pairs: train,
        validation_pairs: validation,
    })
}

/// Writes pairs as 1-based `i,j` lines under a `# p=.. rho=.. seed=..` header.
pub fn write_pairs_csv<W: Write>(mut w: W, pairs: &[Pair], p: usize, rho: f64, seed: u64) -> Result<()> {
    writeln!(w, "# p={p} rho={rho} seed={seed}")?;
    for &(i, j) in pairs {
        writeln!(w, "{},{}", i + 1, j + 1)?;
    }
    Ok(())
}

/// Reads the format produced by [`write_pairs_csv`]; returns `(p, pairs)`.
pub fn read_pairs_csv<R: BufRead>(r: R) -> Result<(usize, Vec<Pair>)> {
    let mut p = None;
    let mut pairs = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let perr = |message: String| ScreenError::Parse {
            path: "<pairs>".into(),
            line: lineno as u64 + 1,
            column: 1,
            message,
        };
        if let Some(header) = line.strip_prefix('#') {
            for tok in header.split_whitespace() {
                if let Some(v) = tok.strip_prefix("p=") {
                    p = Some(v.parse::<usize>().map_err(|e| perr(e.to_string()))?);
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| perr("expected `i,j`".into()))?;
        let i: u32 = a.trim().parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
        let j: u32 = b.trim().parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
        if i < 1 || i >= j {
            return Err(perr(format!("pair ({i},{j}) is not an upper-triangle pair")));
        }
        pairs.push((i - 1, j - 1));
    }
    let p = p.ok_or_else(|| ScreenError::Parse {
        path: "<pairs>".into(),
        line: 1,
        column: 1,
        message: "missing `# p=` header".into(),
    })?;
    Ok((p, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Lexicographic enumeration used as the rank oracle.
    fn enumerate(p: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for i in 1..=p {
            for j in i + 1..=p {
                v.push((i, j));
            }
        }
        v
    }

    #[test]
    fn forward_examples() {
        let m4 = PairIndexMap::new(4).unwrap();
        assert_eq!(m4.forward(1, 2).unwrap(), 1);
        assert_eq!(m4.forward(3, 4).unwrap(), 6);
        let m5 = PairIndexMap::new(5).unwrap();
        let rank = enumerate(5).iter().position(|&x| x == (2, 4)).unwrap() as u64 + 1;
        assert_eq!(rank, 6);
        assert_eq!(m5.forward(2, 4).unwrap(), rank);
    }

    #[test]
    fn forward_rejects_bad_pairs() {
        let m = PairIndexMap::new(4).unwrap();
        assert!(m.forward(2, 2).is_err());
        assert!(m.forward(3, 2).is_err());
        assert!(m.forward(0, 2).is_err());
        assert!(m.forward(1, 5).is_err());
        assert!(m.inverse(0).is_err());
        assert!(m.inverse(7).is_err());
    }

    #[test]
    fn forward_matches_enumeration() {
        for p in 2..40 {
            let m = PairIndexMap::new(p).unwrap();
            for (rank, &(i, j)) in enumerate(p).iter().enumerate() {
                assert_eq!(m.forward(i, j).unwrap(), rank as u64 + 1);
                assert_eq!(m.inverse(rank as u64 + 1).unwrap(), (i, j));
            }
        }
    }

    proptest! {
        #[test]
        fn inverse_round_trips(p in 2usize..200_000, a in 0.0f64..1.0) {
            let m = PairIndexMap::new(p).unwrap();
            let t = ((a * m.total() as f64) as u64).clamp(1, m.total());
            let (i, j) = m.inverse(t).unwrap();
            prop_assert!(1 <= i && i < j && j <= p);
            prop_assert_eq!(m.forward(i, j).unwrap(), t);
        }
    }

    #[test]
    fn full_probability_returns_every_pair() {
        for seed in [0, 1, 99] {
            let pairs = sample_pairs(4, 1.0, seed).unwrap();
            let expect: Vec<Pair> = enumerate(4)
                .into_iter()
                .map(|(i, j)| (i as u32 - 1, j as u32 - 1))
                .collect();
            assert_eq!(pairs, expect);
        }
    }

    #[test]
    fn sampler_rejects_bad_probability() {
        assert!(sample_pairs(10, 0.0, 1).is_err());
        assert!(sample_pairs(10, 1.5, 1).is_err());
        assert!(sample_pairs(10, f64::NAN, 1).is_err());
        assert!(sample_pairs(1, 0.5, 1).is_err());
    }

    #[test]
    fn sampler_is_sorted_unique_and_deterministic() {
        let a = sample_pairs(300, 0.07, 42).unwrap();
        let b = sample_pairs(300, 0.07, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|&(i, j)| i < j && (j as usize) < 300));
        assert_ne!(a, sample_pairs(300, 0.07, 43).unwrap());
    }

    #[test]
    fn mean_count_matches_binomial() {
        let (p, prob, seeds) = (2000usize, 0.1, 200u64);
        let total = (p * (p - 1) / 2) as f64;
        let mean: f64 = (0..seeds)
            .map(|s| sample_pairs(p, prob, s).unwrap().len() as f64)
            .sum::<f64>()
            / seeds as f64;
        let sd = (total * prob * (1.0 - prob)).sqrt();
        assert!((mean - total * prob).abs() < 3.0 * sd, "mean {mean}");
        // the mean of 200 draws is much tighter than a single draw
        assert!((mean - total * prob).abs() < 4.0 * sd / (seeds as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn fixed_pair_marginal_inclusion() {
        let (p, prob, seeds) = (100usize, 0.05, 10_000u64);
        let target = (6u32, 41u32); // (7, 42) 1-based
        let hits = (0..seeds)
            .filter(|&s| sample_pairs(p, prob, s).unwrap().binary_search(&target).is_ok())
            .count();
        let freq = hits as f64 / seeds as f64;
        let band = 3.0 * (prob * (1.0 - prob) / seeds as f64).sqrt();
        assert!((freq - prob).abs() < band, "freq {freq}");
    }

    #[test]
    fn split_with_zero_tau_has_no_validation() {
        let s = split_train_validation(200, 0.2, 0.0, 5).unwrap();
        assert!(s.validation_pairs.is_empty());
        assert_eq!(s.train_pairs, sample_pairs(200, 0.2, 5).unwrap());
    }

    #[test]
    fn split_rejects_oversized_rate() {
        let err = split_train_validation(50, 0.95, 0.1, 1).unwrap_err();
        assert!(err.to_string().contains("lower rho or tau"));
    }

    #[test]
    fn split_is_disjoint() {
        let s = split_train_validation(300, 0.3, 0.2, 9).unwrap();
        let mut all: Vec<Pair> = s.train_pairs.iter().chain(&s.validation_pairs).copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn split_validation_rate() {
        let (p, rho, tau, seeds) = (2000usize, 0.1, 0.1, 200u64);
        let total = (p * (p - 1) / 2) as f64;
        let mut val = 0.0;
        let mut both = 0.0;
        for s in 0..seeds {
            let sample = split_train_validation(p, rho, tau, s).unwrap();
            val += sample.validation_pairs.len() as f64;
            both += (sample.validation_pairs.len() + sample.train_pairs.len()) as f64;
        }
        val /= seeds as f64;
        both /= seeds as f64;
        let rate_v = rho * tau;
        assert!((val - total * rate_v).abs() < 3.0 * (total * rate_v * (1.0 - rate_v)).sqrt());
        let rate_o = (1.0 + tau) * rho;
        assert!((both - total * rate_o).abs() < 3.0 * (total * rate_o * (1.0 - rate_o)).sqrt());
    }

    #[test]
    fn split_union_mean_at_half() {
        let (p, rho, tau, seeds) = (400usize, 0.5, 0.1, 100u64);
        let total = (p * (p - 1) / 2) as f64;
        let mean: f64 = (0..seeds)
            .map(|s| {
                let x = split_train_validation(p, rho, tau, s).unwrap();
                (x.train_pairs.len() + x.validation_pairs.len()) as f64
            })
            .sum::<f64>()
            / seeds as f64;
        let q = (1.0 + tau) * rho;
        let sd_mean = (total * q * (1.0 - q) / seeds as f64).sqrt();
        assert!((mean - total * q).abs() < 4.0 * sd_mean, "mean {mean}");
    }

    #[test]
    fn csv_round_trip() {
        let pairs = sample_pairs(30, 0.3, 3).unwrap();
        let mut buf = Vec::new();
        write_pairs_csv(&mut buf, &pairs, 30, 0.3, 3).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# p=30 rho=0.3 seed=3\n"));
        let (p, back) = read_pairs_csv(&buf[..]).unwrap();
        assert_eq!(p, 30);
        assert_eq!(back, pairs);
    }
}
