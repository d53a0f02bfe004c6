//! Joint arrangements on the Skepxel grid and the scatter metric over sets of them.
//!
//! An [`Arrangement`] places every joint index exactly once on an `h x w`
//! grid. A set of `m` arrangements is scored by summing, for every member
//! and every joint, the Chebyshev distance between the joint's cell in that
//! member and its cell in each other member ([`set_metric`]). Symmetric
//! pairs are counted from both ends. Large values mean joints land in
//! well-separated cells across the set, which is what [`generate_set`]
//! selects for by rejection sampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Random sets drawn to calibrate an automatic threshold.
pub const AUTO_THRESHOLD_SAMPLES: usize = 1000;
/// Percentile of the calibration metrics used as the automatic threshold.
pub const AUTO_THRESHOLD_PERCENTILE: f64 = 0.90;
/// Upper bound on the candidate sets [`brute_force_best`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

/// Calibration draws use ChaCha streams with the top bit set so they never
/// coincide with the per-attempt streams.
const CALIBRATION_STREAM: u64 = 1 << 63;
/// Candidates scored per parallel batch in [`generate_set`].
const BATCH: u64 = 64;

/// Grid shape `(h, w)` for `joints` cells: `h <= w` and `w - h` as small as possible.
pub fn grid_shape(joints: usize) -> (usize, usize) {
    let mut h = (joints as f64).sqrt() as usize;
    while h > 1 && joints % h != 0 {
        h -= 1;
    }
    let h = h.max(1);
    (h, joints / h)
}

/// A permutation of joint indices laid out row-major on an `h x w` grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Arrangement {
    h: usize,
    w: usize,
    grid: Vec<usize>,
}

impl Arrangement {
    pub fn new(h: usize, w: usize, grid: Vec<usize>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::Dimension("arrangement grid needs positive h and w".into()));
        }
        if grid.len() != h * w {
            return Err(Error::Dimension(format!(
                "{} indices do not fill a {h}x{w} grid",
                grid.len()
            )));
        }
        let mut seen = vec![false; grid.len()];
        for &j in &grid {
            if j >= grid.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Validation(format!(
                    "grid is not a permutation of 0..{}",
                    grid.len()
                )));
            }
        }
        Ok(Arrangement { h, w, grid })
    }

    /// Joints `0..h*w` in row-major order.
    pub fn identity(h: usize, w: usize) -> Self {
        Arrangement {
            h,
            w,
            grid: (0..h * w).collect(),
        }
    }

    /// Uniform random permutation (Fisher-Yates).
    pub fn random<R: rand::Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> Self {
        let mut grid: Vec<usize> = (0..h * w).collect();
        grid.shuffle(rng);
        Arrangement { h, w, grid }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn joint_count(&self) -> usize {
        self.grid.len()
    }

    /// Joint index stored at `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> usize {
        self.grid[row * self.w + col]
    }

    /// Row-major joint indices.
    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    /// `(row, col)` of every joint, indexed by joint.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        let mut pos = vec![(0, 0); self.grid.len()];
        for (cell, &joint) in self.grid.iter().enumerate() {
            pos[joint] = (cell / self.w, cell % self.w);
        }
        pos
    }
}

fn chebyshev(a: (usize, usize), b: (usize, usize)) -> u64 {
    (a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))) as u64
}

fn check_members(members: &[Arrangement]) -> Result<(usize, usize)> {
    let first = members
        .first()
        .ok_or_else(|| Error::EmptyInput("arrangement set has no members".into()))?;
    let dims = (first.h, first.w);
    if let Some(bad) = members.iter().find(|a| (a.h, a.w) != dims) {
        return Err(Error::Dimension(format!(
            "member is {}x{}, set is {}x{}",
            bad.h, bad.w, dims.0, dims.1
        )));
    }
    Ok(dims)
}

/// Sum of Chebyshev distances from `joint`'s cell in member `j` to its cell in every other member.
pub fn radial_distance(joint: usize, j: usize, members: &[Arrangement]) -> u64 {
    let here = members[j].positions()[joint];
    members
        .iter()
        .enumerate()
        .filter(|&(q, _)| q != j)
        .map(|(_, a)| chebyshev(here, a.positions()[joint]))
        .sum()
}

/// Scatter metric of a set: the sum over members and joints of [`radial_distance`].
pub fn set_metric(members: &[Arrangement]) -> Result<f64> {
    check_members(members)?;
    let positions: Vec<Vec<(usize, usize)>> = members.iter().map(Arrangement::positions).collect();
    Ok(metric_from_positions(&positions) as f64)
}

/// Unordered pairs counted once, then doubled: the double sum is symmetric.
fn metric_from_positions(positions: &[Vec<(usize, usize)>]) -> u64 {
    let mut total = 0;
    for (a, pa) in positions.iter().enumerate() {
        for pb in &positions[a + 1..] {
            total += pa.iter().zip(pb).map(|(&x, &y)| chebyshev(x, y)).sum::<u64>();
        }
    }
    2 * total
}

/// Acceptance threshold for [`generate_set`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaThreshold {
    /// Calibrate from random sets (90th percentile of 1000 draws).
    Auto,
    Value(f64),
}

impl std::str::FromStr for GammaThreshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(GammaThreshold::Auto)
        } else {
            s.parse::<f64>()
                .map(GammaThreshold::Value)
                .map_err(|_| Error::Validation(format!("gamma_t must be a number or \"auto\", got {s:?}")))
        }
    }
}

impl std::fmt::Display for GammaThreshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaThreshold::Auto => f.write_str("auto"),
            GammaThreshold::Value(v) => write!(f, "{v}"),
        }
    }
}

/// `m` arrangements accepted with scatter metric `gamma > gamma_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrangementSet {
    members: Vec<Arrangement>,
    gamma: f64,
    gamma_t: f64,
    seed: u64,
    attempts: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrangementSetFile {
    h: usize,
    w: usize,
    m: usize,
    gamma: f64,
    gamma_t: f64,
    seed: u64,
    members: Vec<Vec<usize>>,
}

impl ArrangementSet {
    /// Validates and wraps a member list; `gamma` is recomputed.
    pub fn new(members: Vec<Arrangement>, gamma_t: f64, seed: u64) -> Result<Self> {
        let gamma = set_metric(&members)?;
        if gamma <= gamma_t {
            return Err(Error::Validation(format!(
                "set metric {gamma} does not exceed gamma_t {gamma_t}"
            )));
        }
        Ok(ArrangementSet {
            members,
            gamma,
            gamma_t,
            seed,
            attempts: 0,
        })
    }

    pub fn members(&self) -> &[Arrangement] {
        &self.members
    }

    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn h(&self) -> usize {
        self.members[0].h
    }

    pub fn w(&self) -> usize {
        self.members[0].w
    }

    pub fn joint_count(&self) -> usize {
        self.members[0].joint_count()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_t(&self) -> f64 {
        self.gamma_t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Candidate sets drawn before acceptance (0 when loaded from disk).
    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn to_json(&self) -> String {
        let file = ArrangementSetFile {
            h: self.h(),
            w: self.w(),
            m: self.m(),
            gamma: self.gamma,
            gamma_t: self.gamma_t,
            seed: self.seed,
            members: self.members.iter().map(|a| a.grid.clone()).collect(),
        };
        serde_json::to_string(&file).expect("arrangement sets always serialize")
    }

    /// Parses and re-validates a persisted set, including `gamma` self-consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ArrangementSetFile = serde_json::from_str(text)?;
        if file.members.len() != file.m {
            return Err(Error::Validation(format!(
                "m = {} but {} members listed",
                file.m,
                file.members.len()
            )));
        }
        let members = file
            .members
            .into_iter()
            .map(|g| Arrangement::new(file.h, file.w, g))
            .collect::<Result<Vec<_>>>()?;
        let set = ArrangementSet::new(members, file.gamma_t, file.seed)?;
        if set.gamma != file.gamma {
            return Err(Error::Validation(format!(
                "stored gamma {} disagrees with recomputed {}",
                file.gamma, set.gamma
            )));
        }
        Ok(set)
    }

    /// Short content hash used to tie images to the set that produced them.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn draw_positions(h: usize, w: usize, m: usize, seed: u64, stream: u64) -> Vec<Arrangement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..m).map(|_| Arrangement::random(h, w, &mut rng)).collect()
}

fn score(members: &[Arrangement]) -> u64 {
    let positions: Vec<_> = members.iter().map(Arrangement::positions).collect();
    metric_from_positions(&positions)
}

/// Threshold used by [`GammaThreshold::Auto`]: the 90th percentile (nearest
/// rank) of the metric over 1000 random `m`-sets.
pub fn auto_threshold(h: usize, w: usize, m: usize, seed: u64) -> f64 {
    let mut metrics: Vec<u64> = (0..AUTO_THRESHOLD_SAMPLES as u64)
        .into_par_iter()
        .map(|i| score(&draw_positions(h, w, m, seed, CALIBRATION_STREAM | i)))
        .collect();
    metrics.sort_unstable();
    let rank = (AUTO_THRESHOLD_PERCENTILE * AUTO_THRESHOLD_SAMPLES as f64).ceil() as usize;
    metrics[rank.clamp(1, metrics.len()) - 1] as f64
}

/// Rejection-samples a set of `m` uniformly random arrangements until its
/// metric exceeds the threshold.
///
/// Attempt `a` draws its `m` permutations from ChaCha stream `a` of `seed`,
/// and the lowest accepted attempt index wins, so the result does not depend
/// on how many threads score candidates.
pub fn generate_set(
    h: usize,
    w: usize,
    m: usize,
    threshold: GammaThreshold,
    seed: u64,
    max_attempts: u64,
) -> Result<ArrangementSet> {
    if h == 0 || w == 0 || m == 0 {
        return Err(Error::Validation("h, w and m must be positive".into()));
    }
    if max_attempts == 0 {
        return Err(Error::Validation("max_attempts must be at least 1".into()));
    }
    let gamma_t = match threshold {
        GammaThreshold::Auto => auto_threshold(h, w, m, seed),
        GammaThreshold::Value(v) if v.is_finite() => v,
        GammaThreshold::Value(v) => return Err(Error::Validation(format!("gamma_t {v} is not finite"))),
    };
    let mut best = 0u64;
    let mut start = 0u64;
    while start < max_attempts {
        let end = (start + BATCH).min(max_attempts);
        let scored: Vec<(u64, u64)> = (start..end)
            .into_par_iter()
            .map(|a| (a, score(&draw_positions(h, w, m, seed, a))))
            .collect();
        best = best.max(scored.iter().map(|&(_, g)| g).max().unwrap_or(0));
        if let Some(&(attempt, gamma)) = scored.iter().find(|&&(_, g)| g as f64 > gamma_t) {
            return Ok(ArrangementSet {
                members: draw_positions(h, w, m, seed, attempt),
                gamma: gamma as f64,
                gamma_t,
                seed,
                attempts: attempt + 1,
            });
        }
        start = end;
    }
    Err(Error::ArrangementExhausted {
        threshold: gamma_t,
        attempts: max_attempts,
        best_gamma: best as f64,
    })
}

/// Every permutation of `0..n` in lexicographic order.
fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![current.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).expect("pivot exists");
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

/// `C(n, k)`, or `None` past `u64`.
fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    Some(acc as u64)
}

/// Exact maximum of [`set_metric`] over all sets of `m` distinct arrangements.
///
/// Refuses when more than [`BRUTE_FORCE_LIMIT`] candidate sets would be scored.
pub fn brute_force_best(h: usize, w: usize, m: usize) -> Result<(f64, Vec<Arrangement>)> {
    if h == 0 || w == 0 || m == 0 {
        return Err(Error::Validation("h, w and m must be positive".into()));
    }
    let n = h * w;
    let count = (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k));
    let candidates = count.and_then(|c| if m as u64 > c { Some(0) } else { binomial(c, m as u64) });
    match candidates {
        Some(c) if c <= BRUTE_FORCE_LIMIT => {}
        Some(c) => {
            return Err(Error::SearchTooLarge {
                candidates: c.to_string(),
                limit: BRUTE_FORCE_LIMIT,
            })
        }
        None => {
            return Err(Error::SearchTooLarge {
                candidates: format!("C({n}!, {m})"),
                limit: BRUTE_FORCE_LIMIT,
            })
        }
    }
    let arrangements: Vec<Arrangement> = all_permutations(n)
        .into_iter()
        .map(|grid| Arrangement { h, w, grid })
        .collect();
    if m > arrangements.len() {
        return Err(Error::Validation(format!(
            "m = {m} exceeds the {} distinct arrangements",
            arrangements.len()
        )));
    }
    let positions: Vec<Vec<(usize, usize)>> = arrangements.iter().map(Arrangement::positions).collect();

    let mut idx: Vec<usize> = (0..m).collect();
    let mut best: Option<(u64, Vec<usize>)> = None;
    let mut chosen = Vec::with_capacity(m);
    loop {
        chosen.clear();
        chosen.extend(idx.iter().map(|&i| positions[i].clone()));
        let value = metric_from_positions(&chosen);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, idx.clone()));
        }
        // next combination
        let Some(pos) = (0..m).rev().find(|&p| idx[p] < arrangements.len() - m + p) else {
            break;
        };
        idx[pos] += 1;
        for p in pos + 1..m {
            idx[p] = idx[p - 1] + 1;
        }
    }
    let (value, witness) = best.expect("at least one candidate");
    Ok((value as f64, witness.into_iter().map(|i| arrangements[i].clone()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(h: usize, w: usize, grid: &[usize]) -> Arrangement {
        Arrangement::new(h, w, grid.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(Arrangement::new(2, 2, vec![0, 1, 1, 3]).is_err());
        assert!(Arrangement::new(2, 2, vec![0, 1, 2]).is_err());
        assert!(Arrangement::new(2, 2, vec![0, 1, 2, 4]).is_err());
    }

    #[test]
    fn single_member_radial_distance_is_zero() {
        let members = vec![arr(2, 2, &[2, 0, 3, 1])];
        for joint in 0..4 {
            assert_eq!(radial_distance(joint, 0, &members), 0);
        }
    }

    #[test]
    fn radial_distance_diagonal_swap() {
        let members = vec![arr(2, 2, &[0, 1, 2, 3]), arr(2, 2, &[3, 2, 1, 0])];
        assert_eq!(radial_distance(0, 0, &members), 1);
        assert_eq!(set_metric(&members).unwrap(), 8.0);
    }

    #[test]
    fn fixed_joint_contributes_nothing() {
        let members = vec![arr(2, 2, &[0, 1, 2, 3]), arr(2, 2, &[0, 2, 1, 3]), arr(2, 2, &[0, 3, 2, 1])];
        for j in 0..3 {
            assert_eq!(radial_distance(0, j, &members), 0);
        }
    }

    #[test]
    fn identical_members_score_zero() {
        let a = arr(2, 3, &[5, 4, 3, 2, 1, 0]);
        assert_eq!(set_metric(&[a.clone(), a.clone(), a]).unwrap(), 0.0);
    }

    #[test]
    fn metric_rejects_mixed_dims() {
        let err = set_metric(&[Arrangement::identity(2, 2), Arrangement::identity(1, 4)]);
        assert!(matches!(err, Err(Error::Dimension(_))));
        assert!(set_metric(&[]).is_err());
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(25), (5, 5));
        assert_eq!(grid_shape(20), (4, 5));
        assert_eq!(grid_shape(16), (4, 4));
        assert_eq!(grid_shape(14), (2, 7));
        assert_eq!(grid_shape(13), (1, 13));
    }

    #[test]
    fn permutations_enumerated_in_order() {
        let p = all_permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
    }

    #[test]
    fn brute_force_small_cases() {
        assert_eq!(brute_force_best(2, 2, 2).unwrap().0, 8.0);
        assert_eq!(brute_force_best(2, 1, 2).unwrap().0, 4.0);
        assert_eq!(brute_force_best(2, 2, 1).unwrap().0, 0.0);
        let (best, witness) = brute_force_best(2, 2, 2).unwrap();
        assert_eq!(set_metric(&witness).unwrap(), best);
    }

    #[test]
    fn brute_force_guard() {
        assert!(matches!(brute_force_best(5, 5, 2), Err(Error::SearchTooLarge { .. })));
        assert!(matches!(brute_force_best(2, 3, 3), Err(Error::SearchTooLarge { .. })));
    }

    #[test]
    fn single_member_cannot_beat_auto_threshold() {
        let err = generate_set(2, 2, 1, GammaThreshold::Auto, 3, 50).unwrap_err();
        match err {
            Error::ArrangementExhausted { threshold, best_gamma, attempts } => {
                assert_eq!(threshold, 0.0);
                assert_eq!(best_gamma, 0.0);
                assert_eq!(attempts, 50);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(generate_set(2, 2, 1, GammaThreshold::Value(-1.0), 3, 1).is_ok());
    }

    #[test]
    fn generation_reaches_the_maximum() {
        let set = generate_set(2, 2, 2, GammaThreshold::Value(7.0), 11, 1000).unwrap();
        assert_eq!(set.gamma(), 8.0);
        assert_eq!(set, generate_set(2, 2, 2, GammaThreshold::Value(7.0), 11, 1000).unwrap());
    }

    #[test]
    fn json_roundtrip_and_tamper_detection() {
        let set = generate_set(3, 3, 4, GammaThreshold::Auto, 5, 10_000).unwrap();
        let text = set.to_json();
        let back = ArrangementSet::from_json(&text).unwrap();
        assert_eq!(back.members(), set.members());
        assert_eq!(back.id(), set.id());
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["gamma"] = serde_json::json!(set.gamma() + 1.0);
        assert!(ArrangementSet::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("auto".parse::<GammaThreshold>().unwrap(), GammaThreshold::Auto);
        assert_eq!("7.5".parse::<GammaThreshold>().unwrap(), GammaThreshold::Value(7.5));
        assert!("high".parse::<GammaThreshold>().is_err());
    }
}
