//! Preferential voting over ranked ballots.
//!
//! Candidates are indices `0..n`. Every rule breaks ties in favour of the lowest
//! candidate index; STV eliminates the highest index among equally weak
//! candidates, which keeps the same preference for low indices.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

/// A strict ranking of distinct candidates, most preferred first.
///
/// Only STV accepts truncated ballots; the other rules require every candidate
/// to be ranked.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ballot(Vec<usize>);

impl Ballot {
    pub fn new(ranking: Vec<usize>, candidate_count: usize) -> Result<Self> {
        let mut seen = vec![false; candidate_count];
        for &c in &ranking {
            if c >= candidate_count {
                return Err(Error::InvalidBallot(format!("candidate {c} >= {candidate_count}")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidBallot(format!("candidate {c} ranked twice")));
            }
        }
        Ok(Self(ranking))
    }

    pub fn ranking(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn top(&self) -> Option<usize> {
        self.0.first().copied()
    }
}

/// A multiset of ballots over `candidate_count` candidates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferenceProfile {
    candidate_count: usize,
    ballots: Vec<(Ballot, u64)>,
}

impl PreferenceProfile {
    pub fn new(candidate_count: usize) -> Self {
        Self {
            candidate_count,
            ballots: Vec::new(),
        }
    }

    /// Builds a profile from `(ranking, multiplicity)` pairs.
    pub fn from_rankings<I>(candidate_count: usize, rankings: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, u64)>,
    {
        let mut profile = Self::new(candidate_count);
        for (ranking, count) in rankings {
            profile.push(Ballot::new(ranking, candidate_count)?, count)?;
        }
        Ok(profile)
    }

    pub fn push(&mut self, ballot: Ballot, multiplicity: u64) -> Result<()> {
        if multiplicity == 0 {
            return Err(Error::InvalidBallot("multiplicity must be >= 1".into()));
        }
        if let Some(&c) = ballot.ranking().iter().find(|&&c| c >= self.candidate_count) {
            return Err(Error::InvalidBallot(format!("candidate {c} >= {}", self.candidate_count)));
        }
        self.ballots.push((ballot, multiplicity));
        Ok(())
    }

    pub fn candidate_count(&self) -> usize {
        self.candidate_count
    }

    pub fn ballots(&self) -> &[(Ballot, u64)] {
        &self.ballots
    }

    pub fn voter_count(&self) -> u64 {
        self.ballots.iter().map(|(_, m)| m).sum()
    }

    fn require_complete(&self) -> Result<()> {
        for (b, _) in &self.ballots {
            if b.len() != self.candidate_count {
                return Err(Error::TruncatedBallot {
                    ranked: b.len(),
                    candidates: self.candidate_count,
                });
            }
        }
        Ok(())
    }

    /// Renames candidate `c` to `permutation[c]` on every ballot.
    pub fn relabel(&self, permutation: &[usize]) -> Result<Self> {
        Ballot::new(permutation.to_vec(), self.candidate_count)
            .ok()
            .filter(|p| p.len() == self.candidate_count)
            .ok_or_else(|| Error::InvalidArgument("relabeling is not a permutation".into()))?;
        let ballots = self
            .ballots
            .iter()
            .map(|(b, m)| (Ballot(b.ranking().iter().map(|&c| permutation[c]).collect()), *m))
            .collect();
        Ok(Self {
            candidate_count: self.candidate_count,
            ballots,
        })
    }
}

/// Points awarded per rank position; nonincreasing and nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!("weights must be finite and >= 0: {weights:?}")));
        }
        if weights.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(format!("weights must be nonincreasing: {weights:?}")));
        }
        Ok(Self(weights))
    }

    /// `[1, 0, …, 0]`
    pub fn plurality(n: usize) -> Self {
        Self((0..n).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect())
    }

    /// k-Borda `[n, n−1, …, 1]`.
    pub fn borda(n: usize) -> Self {
        Self((0..n).map(|k| (n - k) as f64).collect())
    }

    /// Classic Borda `[n−1, …, 0]`; argmax-identical to [`WeightVector::borda`].
    pub fn borda_classic(n: usize) -> Self {
        Self((0..n).map(|k| (n - 1 - k) as f64).collect())
    }

    /// Dowdall `[1, 1/2, 1/3, …]`.
    pub fn dowdall(n: usize) -> Self {
        Self((0..n).map(|k| 1.0 / (k + 1) as f64).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Score of each candidate: Σ multiplicity × weight of the position it holds.
pub fn positional_tally(profile: &PreferenceProfile, weights: &WeightVector) -> Result<Vec<f64>> {
    let n = profile.candidate_count;
    if weights.0.len() != n {
        return Err(Error::shape(format!("{n} weights"), format!("{}", weights.0.len())));
    }
    profile.require_complete()?;
    let mut scores = vec![0.0; n];
    for (ballot, mult) in &profile.ballots {
        for (pos, &c) in ballot.ranking().iter().enumerate() {
            scores[c] += *mult as f64 * weights.0[pos];
        }
    }
    Ok(scores)
}

/// Net pairwise margins: `A(i, j)` = voters preferring i to j minus voters
/// preferring j to i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferenceMatrix {
    n: usize,
    margins: Vec<i64>,
}

impl PreferenceMatrix {
    /// Validates antisymmetry and a zero diagonal.
    pub fn from_margins(n: usize, margins: Vec<i64>) -> Result<Self> {
        if margins.len() != n * n {
            return Err(Error::shape(format!("{} entries", n * n), margins.len()));
        }
        for i in 0..n {
            for j in 0..n {
                if margins[i * n + j] != -margins[j * n + i] {
                    return Err(Error::InvalidArgument(format!("margins not antisymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, margins })
    }

    pub fn candidate_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.margins[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.margins[i * self.n..(i + 1) * self.n]
    }
}

pub fn preference_matrix(profile: &PreferenceProfile) -> Result<PreferenceMatrix> {
    profile.require_complete()?;
    let n = profile.candidate_count;
    let mut margins = vec![0i64; n * n];
    let mut position = vec![0usize; n];
    for (ballot, mult) in &profile.ballots {
        for (pos, &c) in ballot.ranking().iter().enumerate() {
            position[c] = pos;
        }
        let m = *mult as i64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = if position[i] < position[j] { m } else { -m };
                margins[i * n + j] += d;
                margins[j * n + i] -= d;
            }
        }
    }
    Ok(PreferenceMatrix { n, margins })
}

/// The candidate beating every other candidate head to head, if any.
pub fn condorcet_winner(matrix: &PreferenceMatrix) -> Option<usize> {
    (0..matrix.n).find(|&i| (0..matrix.n).all(|j| j == i || matrix.get(i, j) > 0))
}

/// Pairwise victories minus pairwise defeats.
pub fn copeland(matrix: &PreferenceMatrix) -> Vec<i64> {
    (0..matrix.n)
        .map(|i| matrix.row(i).iter().map(|&a| a.signum()).sum())
        .collect()
}

/// Simpson–Kramer score: the worst margin of each candidate against any rival.
/// A lone candidate scores 0.
pub fn minimax(matrix: &PreferenceMatrix) -> Vec<i64> {
    (0..matrix.n)
        .map(|i| {
            (0..matrix.n)
                .filter(|&j| j != i)
                .map(|j| matrix.get(i, j))
                .min()
                .unwrap_or(0)
        })
        .collect()
}

/// Round-by-round record of a single-winner STV count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StvOutcome {
    pub winner: usize,
    pub eliminated: Vec<usize>,
    /// Whether any elimination had to break a tie for fewest votes.
    pub tie_broken: bool,
}

/// Single-winner STV with whole-vote transfers.
///
/// Quota is `floor(voters / 2) + 1` of the original electorate. Until a
/// candidate reaches it, the remaining candidate with the fewest current first
/// preferences (highest index on ties) is eliminated; exhausted ballots drop
/// out. The last remaining candidate wins if the quota is never met.
pub fn stv(profile: &PreferenceProfile) -> Result<usize> {
    stv_detailed(profile).map(|o| o.winner)
}

pub fn stv_detailed(profile: &PreferenceProfile) -> Result<StvOutcome> {
    let n = profile.candidate_count;
    let voters = profile.voter_count();
    if voters == 0 || n == 0 {
        return Err(Error::Empty("STV needs at least one ballot"));
    }
    let quota = voters / 2 + 1;
    let mut remaining = vec![true; n];
    let mut left = n;
    let mut eliminated = Vec::new();
    let mut tie_broken = false;
    loop {
        let mut tally = vec![0u64; n];
        for (ballot, mult) in &profile.ballots {
            if let Some(&c) = ballot.ranking().iter().find(|&&c| remaining[c]) {
                tally[c] += mult;
            }
        }
        let leader = (0..n)
            .filter(|&c| remaining[c])
            .fold(None, |best: Option<usize>, c| match best {
                Some(b) if tally[b] >= tally[c] => Some(b),
                _ => Some(c),
            })
            .expect("at least one candidate remains");
        if tally[leader] >= quota || left == 1 {
            return Ok(StvOutcome {
                winner: leader,
                eliminated,
                tie_broken,
            });
        }
        let fewest = (0..n).filter(|&c| remaining[c]).map(|c| tally[c]).min().unwrap();
        let weakest: Vec<usize> = (0..n).filter(|&c| remaining[c] && tally[c] == fewest).collect();
        tie_broken |= weakest.len() > 1;
        let out = *weakest.last().unwrap();
        remaining[out] = false;
        left -= 1;
        eliminated.push(out);
    }
}

/// Index of the maximum score; ties go to the lowest index.
pub fn argmax_first<T: PartialOrd + Copy>(scores: &[T]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}

/// Single-winner decision rules over ranked ballots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Plurality,
    /// k-Borda, weights `[n, …, 1]`.
    Borda,
    /// Weights `[n−1, …, 0]`.
    BordaClassic,
    Dowdall,
    Copeland,
    Minimax,
    Stv,
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::Plurality,
        Rule::Borda,
        Rule::BordaClassic,
        Rule::Dowdall,
        Rule::Copeland,
        Rule::Minimax,
        Rule::Stv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Plurality => "plurality",
            Rule::Borda => "borda",
            Rule::BordaClassic => "borda-classic",
            Rule::Dowdall => "dowdall",
            Rule::Copeland => "copeland",
            Rule::Minimax => "minimax",
            Rule::Stv => "stv",
        }
    }

    /// Winner of `profile` under this rule.
    pub fn winner(self, profile: &PreferenceProfile) -> Result<usize> {
        let n = profile.candidate_count;
        match self {
            Rule::Stv => stv(profile),
            _ if profile.voter_count() == 0 => Err(Error::Empty("election without ballots")),
            Rule::Plurality => Ok(argmax_first(&positional_tally(profile, &WeightVector::plurality(n))?)),
            Rule::Borda => Ok(argmax_first(&positional_tally(profile, &WeightVector::borda(n))?)),
            Rule::BordaClassic => Ok(argmax_first(&positional_tally(profile, &WeightVector::borda_classic(n))?)),
            Rule::Dowdall => Ok(argmax_first(&positional_tally(profile, &WeightVector::dowdall(n))?)),
            Rule::Copeland => Ok(argmax_first(&copeland(&preference_matrix(profile)?))),
            Rule::Minimax => Ok(argmax_first(&minimax(&preference_matrix(profile)?))),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plurality" | "majority" => Ok(Rule::Plurality),
            "borda" | "k-borda" => Ok(Rule::Borda),
            "borda-classic" | "borda_classic" => Ok(Rule::BordaClassic),
            "dowdall" => Ok(Rule::Dowdall),
            "copeland" => Ok(Rule::Copeland),
            "minimax" | "simpson-kramer" => Ok(Rule::Minimax),
            "stv" => Ok(Rule::Stv),
            other => Err(Error::UnknownRule(other.to_string())),
        }
    }
}

/// Candidates ranked by ascending Euclidean distance from `voter`.
pub fn distance_ranking(voter: [f64; 2], candidates: &[[f64; 2]]) -> Vec<usize> {
    let dist = |c: &[f64; 2]| (c[0] - voter[0]).powi(2) + (c[1] - voter[1]).powi(2);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| dist(&candidates[a]).total_cmp(&dist(&candidates[b])).then(a.cmp(&b)));
    order
}

/// Winner among fixed positions, each voter ranking candidates by distance.
pub fn spatial_winner(voters: &[[f64; 2]], candidates: &[[f64; 2]], rule: Rule) -> Result<usize> {
    let mut profile = PreferenceProfile::new(candidates.len());
    for &v in voters {
        profile.push(Ballot(distance_ranking(v, candidates)), 1)?;
    }
    rule.winner(&profile)
}

/// Monte Carlo spatial election in the unit square.
///
/// Trial `k` draws voters then candidates uniformly from stream `(seed, k)` and
/// records the winner's coordinates. Trials run in parallel; output is in trial
/// order and independent of thread count.
pub fn spatial_election(
    n_voters: usize,
    n_candidates: usize,
    rule: Rule,
    trials: usize,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if n_candidates < 2 {
        return Err(Error::InvalidArgument("spatial election needs at least 2 candidates".into()));
    }
    if trials == 0 || n_voters == 0 {
        return Err(Error::InvalidArgument("spatial election needs trials >= 1 and voters >= 1".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng::stream(seed, trial as u64);
            let mut point = || [rng.random::<f64>(), rng.random::<f64>()];
            let voters: Vec<[f64; 2]> = (0..n_voters).map(|_| point()).collect();
            let candidates: Vec<[f64; 2]> = (0..n_candidates).map(|_| point()).collect();
            spatial_winner(&voters, &candidates, rule).map(|w| candidates[w])
        })
        .collect()
}
