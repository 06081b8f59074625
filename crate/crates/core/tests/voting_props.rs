use efkd_core::rng;
use efkd_core::voting::{
    condorcet_winner, positional_tally, preference_matrix, spatial_election, stv_detailed, Ballot, PreferenceProfile,
    Rule, WeightVector,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_profile(r: &mut rng::Rng, n: usize, ballots: usize) -> PreferenceProfile {
    let mut p = PreferenceProfile::new(n);
    for _ in 0..ballots {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(r);
        p.push(Ballot::new(order, n).unwrap(), r.random_range(1..=3)).unwrap();
    }
    p
}

fn profile_strategy() -> impl Strategy<Value = (PreferenceProfile, Vec<usize>)> {
    (2usize..=6, 1usize..=25, any::<u64>()).prop_map(|(n, ballots, seed)| {
        let mut r = rng::stream(seed, 0);
        let profile = random_profile(&mut r, n, ballots);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        (profile, perm)
    })
}

/// Candidate beating every rival by strict pairwise majority, counted straight from the ballots.
fn brute_force_condorcet(p: &PreferenceProfile) -> Option<usize> {
    let n = p.candidate_count();
    let prefers = |a: usize, b: usize| -> u64 {
        p.ballots()
            .iter()
            .filter(|(ballot, _)| {
                let r = ballot.ranking();
                r.iter().position(|&c| c == a) < r.iter().position(|&c| c == b)
            })
            .map(|(_, m)| *m)
            .sum()
    };
    (0..n).find(|&c| (0..n).filter(|&d| d != c).all(|d| prefers(c, d) > prefers(d, c)))
}

fn unique_max(scores: &[f64]) -> bool {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().filter(|&&s| s == max).count() == 1
}

proptest! {
    #[test]
    fn positional_scores_and_winners_are_equivariant((profile, perm) in profile_strategy()) {
        let n = profile.candidate_count();
        let relabeled = profile.relabel(&perm).unwrap();
        for (rule, w) in [
            (Rule::Plurality, WeightVector::plurality(n)),
            (Rule::Borda, WeightVector::borda(n)),
            (Rule::BordaClassic, WeightVector::borda_classic(n)),
            (Rule::Dowdall, WeightVector::dowdall(n)),
        ] {
            let a = positional_tally(&profile, &w).unwrap();
            let b = positional_tally(&relabeled, &w).unwrap();
            for c in 0..n {
                prop_assert_eq!(a[c], b[perm[c]]);
            }
            if unique_max(&a) {
                prop_assert_eq!(rule.winner(&relabeled).unwrap(), perm[rule.winner(&profile).unwrap()]);
            }
        }
    }

    #[test]
    fn pairwise_rules_are_equivariant((profile, perm) in profile_strategy()) {
        let n = profile.candidate_count();
        let relabeled = profile.relabel(&perm).unwrap();
        let m = preference_matrix(&profile).unwrap();
        let mr = preference_matrix(&relabeled).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(m.get(i, j), mr.get(perm[i], perm[j]));
            }
        }
        let cop = efkd_core::voting::copeland(&m);
        if unique_max(&cop.iter().map(|&v| v as f64).collect::<Vec<_>>()) {
            prop_assert_eq!(Rule::Copeland.winner(&relabeled).unwrap(), perm[Rule::Copeland.winner(&profile).unwrap()]);
        }
        let mm = efkd_core::voting::minimax(&m);
        if unique_max(&mm.iter().map(|&v| v as f64).collect::<Vec<_>>()) {
            prop_assert_eq!(Rule::Minimax.winner(&relabeled).unwrap(), perm[Rule::Minimax.winner(&profile).unwrap()]);
        }
        let stv = stv_detailed(&profile).unwrap();
        if !stv.tie_broken {
            let stv_r = stv_detailed(&relabeled).unwrap();
            prop_assert_eq!(stv_r.winner, perm[stv.winner]);
            prop_assert_eq!(stv_r.eliminated, stv.eliminated.iter().map(|&c| perm[c]).collect::<Vec<_>>());
        }
    }

    #[test]
    fn preference_matrix_is_antisymmetric((profile, _) in profile_strategy()) {
        let m = preference_matrix(&profile).unwrap();
        let n = profile.candidate_count();
        for i in 0..n {
            prop_assert_eq!(m.get(i, i), 0);
            for j in 0..n {
                prop_assert_eq!(m.get(i, j), -m.get(j, i));
            }
        }
    }

    #[test]
    fn positional_argmax_survives_positive_affine_maps(
        (profile, _) in profile_strategy(),
        a in 1u32..6,
        b in 0u32..6,
    ) {
        let n = profile.candidate_count();
        let base = WeightVector::borda(n);
        let mapped = WeightVector::new(base.as_slice().iter().map(|w| a as f64 * w + b as f64).collect()).unwrap();
        let s1 = positional_tally(&profile, &base).unwrap();
        let s2 = positional_tally(&profile, &mapped).unwrap();
        prop_assert_eq!(efkd_core::voting::argmax_first(&s1), efkd_core::voting::argmax_first(&s2));
        prop_assert_eq!(Rule::Borda.winner(&profile).unwrap(), Rule::BordaClassic.winner(&profile).unwrap());
    }

    #[test]
    fn unanimous_profiles_elect_the_common_top(n in 2usize..=7, voters in 1u64..=20, seed in any::<u64>()) {
        let mut r = rng::stream(seed, 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let mut p = PreferenceProfile::new(n);
        p.push(Ballot::new(order.clone(), n).unwrap(), voters).unwrap();
        for rule in Rule::ALL {
            prop_assert_eq!(rule.winner(&p).unwrap(), order[0]);
        }
    }
}

#[test]
fn copeland_and_minimax_elect_condorcet_winners_on_1000_profiles() {
    let mut r = rng::stream(2024, 0);
    let mut found = 0;
    let mut hits = [0usize; 2];
    while found < 1000 {
        let n = r.random_range(3..=6);
        let ballots = r.random_range(3..=25);
        let p = random_profile(&mut r, n, ballots);
        let Some(cw) = brute_force_condorcet(&p) else { continue };
        found += 1;
        assert_eq!(condorcet_winner(&preference_matrix(&p).unwrap()), Some(cw));
        hits[0] += usize::from(Rule::Copeland.winner(&p).unwrap() == cw);
        hits[1] += usize::from(Rule::Minimax.winner(&p).unwrap() == cw);
    }
    assert_eq!(hits, [1000, 1000]);
}

#[test]
fn spatial_borda_winners_are_centred() {
    let winners = spatial_election(100, 5, Rule::Borda, 10_000, 5).unwrap();
    let n = winners.len() as f64;
    let mean = winners.iter().fold([0.0, 0.0], |acc, w| [acc[0] + w[0] / n, acc[1] + w[1] / n]);
    assert!((mean[0] - 0.5).abs() < 0.05 && (mean[1] - 0.5).abs() < 0.05, "{mean:?}");
    // mean distance of a uniform point from the centre is (√2 + ln(1 + √2)) / 6 ≈ 0.3826
    let uniform = (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln()) / 6.0;
    let dist = winners.iter().map(|w| ((w[0] - 0.5).powi(2) + (w[1] - 0.5).powi(2)).sqrt()).sum::<f64>() / n;
    assert!(dist < uniform - 0.05, "mean distance {dist} vs uniform {uniform}");
}
