//! Plurality voting across providers, subset enumeration and deltas against a baseline.
//!
//! Votes are cast per frame and per attribute in scoring space (staged
//! attributes already binarized). Ties go to the tied value cast by the
//! highest-priority provider.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

use crate::metrics::{Prf, RunSummary};
use crate::predictions::{PredictionRecord, PredictionSet};
use crate::schema::{attribute_registry, EvalLabel};

pub const MIN_ENSEMBLE_SIZE: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("no votes cast")]
    NoVotes,
    #[error("voter \"{0}\" is not in the priority list")]
    UnrankedVoter(String),
    #[error("priority list names \"{0}\" more than once")]
    DuplicatePriority(String),
    #[error("ensembles need at least {MIN_ENSEMBLE_SIZE} members, got {0}")]
    TooFewMembers(usize),
    #[error("min_size {min_size} exceeds the {available} available providers")]
    MinSizeTooLarge { min_size: usize, available: usize },
    #[error("no prediction set for ensemble member \"{0}\"")]
    MissingMember(String),
    #[error("member \"{member}\" covers different frames than \"{reference}\" (e.g. \"{frame_id}\")")]
    FrameCoverage {
        member: String,
        reference: String,
        frame_id: String,
    },
    #[error("attribute sets differ between summaries (\"{0}\")")]
    AttributeMismatch(String),
}

/// Tie-break order over providers, highest priority first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotePolicy {
    pub priority: Vec<String>,
}

impl VotePolicy {
    pub fn new<I, S>(priority: I) -> Result<Self, EnsembleError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let priority: Vec<String> = priority.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        if let Some(dup) = priority.iter().find(|p| !seen.insert(p.as_str())) {
            return Err(EnsembleError::DuplicatePriority(dup.clone()));
        }
        Ok(Self { priority })
    }

    fn rank(&self, provider: &str) -> Option<usize> {
        self.priority.iter().position(|p| p == provider)
    }
}

/// Plurality vote; ties go to the highest-priority provider among those that voted for a tied value.
pub fn vote<'a, I>(votes: I, policy: &VotePolicy) -> Result<u8, EnsembleError>
where
    I: IntoIterator<Item = (&'a str, u8)>,
{
    let mut ranked: Vec<(usize, u8)> = votes
        .into_iter()
        .map(|(provider, v)| {
            policy
                .rank(provider)
                .map(|r| (r, v))
                .ok_or_else(|| EnsembleError::UnrankedVoter(provider.to_string()))
        })
        .collect::<Result<_, _>>()?;
    if ranked.is_empty() {
        return Err(EnsembleError::NoVotes);
    }
    ranked.sort_unstable();
    let mut counts = [0usize; 256];
    for &(_, v) in &ranked {
        counts[usize::from(v)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let winner = ranked
        .iter()
        .find(|&&(_, v)| counts[usize::from(v)] == top)
        .map(|&(_, v)| v)
        .expect("some vote reaches the top count");
    Ok(winner)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    /// Member provider ids, in priority order.
    pub members: Vec<String>,
    pub policy: VotePolicy,
}

impl EnsembleSpec {
    /// Members are reordered to follow `priority`, which must rank each of them.
    pub fn new(members: &[String], priority: &VotePolicy) -> Result<Self, EnsembleError> {
        if members.len() < MIN_ENSEMBLE_SIZE {
            return Err(EnsembleError::TooFewMembers(members.len()));
        }
        let mut ranked = members
            .iter()
            .map(|m| priority.rank(m).map(|r| (r, m.clone())).ok_or_else(|| EnsembleError::UnrankedVoter(m.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        ranked.sort();
        let members: Vec<String> = ranked.into_iter().map(|(_, m)| m).collect();
        let policy = VotePolicy::new(members.iter().cloned())?;
        Ok(Self { members, policy })
    }

    /// Synthetic provider id, e.g. `vote(gpt+gemini+pixtral)`.
    pub fn name(&self) -> String {
        format!("vote({})", self.members.join("+"))
    }
}

/// Every subset of `providers` with at least `min_size` members: by size, then lexicographically by position.
pub fn enumerate_ensembles(providers: &[String], min_size: usize) -> Result<Vec<EnsembleSpec>, EnsembleError> {
    if min_size < MIN_ENSEMBLE_SIZE {
        return Err(EnsembleError::TooFewMembers(min_size));
    }
    if min_size > providers.len() {
        return Err(EnsembleError::MinSizeTooLarge {
            min_size,
            available: providers.len(),
        });
    }
    let priority = VotePolicy::new(providers.iter().cloned())?;
    let n = providers.len();
    let mut out = Vec::new();
    for size in min_size..=n {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let members: Vec<String> = combo.iter().map(|&i| providers[i].clone()).collect();
            out.push(EnsembleSpec::new(&members, &priority)?);
            // advance to the next combination in lexicographic order
            let Some(i) = (0..size).rev().find(|&i| combo[i] != i + n - size) else {
                break;
            };
            combo[i] += 1;
            for j in i + 1..size {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// Votes every attribute of every frame across the member sets.
pub fn ensemble_predictions(sets: &[&PredictionSet], spec: &EnsembleSpec) -> Result<PredictionSet, EnsembleError> {
    let members: Vec<&PredictionSet> = spec
        .members
        .iter()
        .map(|m| {
            sets.iter()
                .copied()
                .find(|s| &s.provider_id == m)
                .ok_or_else(|| EnsembleError::MissingMember(m.clone()))
        })
        .collect::<Result<_, _>>()?;
    let reference = members[0];
    for member in &members[1..] {
        let missing = reference
            .records
            .keys()
            .find(|f| !member.records.contains_key(*f))
            .or_else(|| member.records.keys().find(|f| !reference.records.contains_key(*f)));
        if let Some(frame_id) = missing {
            return Err(EnsembleError::FrameCoverage {
                member: member.provider_id.clone(),
                reference: reference.provider_id.clone(),
                frame_id: frame_id.clone(),
            });
        }
    }

    let schema = attribute_registry();
    let name = spec.name();
    let mut out = PredictionSet::new(name.clone());
    for frame_id in reference.records.keys() {
        let labels: Vec<(&str, &EvalLabel)> = members
            .iter()
            .map(|m| (m.provider_id.as_str(), &m.records[frame_id].label))
            .collect();
        let values = (0..schema.len())
            .map(|i| vote(labels.iter().map(|(p, l)| (*p, l.at(i))), &spec.policy))
            .collect::<Result<Vec<u8>, _>>()?;
        let label = EvalLabel::from_values(&schema, values).expect("votes stay within member domains");
        out.insert(PredictionRecord {
            frame_id: frame_id.clone(),
            provider_id: name.clone(),
            raw_text: None,
            label,
            diagnostics: Vec::new(),
            fatal: false,
            latency_ms: 0,
            attempt_count: 0,
            from_cache: false,
            error: None,
        });
    }
    Ok(out)
}

/// Per-attribute `summary − baseline`; positive values mark improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub ensemble_id: String,
    pub baseline_id: String,
    pub per_attribute: IndexMap<String, Prf>,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub support_weighted_macro: Prf,
}

pub fn delta_vs_baseline(summary: &RunSummary, baseline: &RunSummary) -> Result<DeltaReport, EnsembleError> {
    if let Some(key) = summary
        .per_attribute
        .keys()
        .find(|k| !baseline.per_attribute.contains_key(*k))
        .or_else(|| baseline.per_attribute.keys().find(|k| !summary.per_attribute.contains_key(*k)))
    {
        return Err(EnsembleError::AttributeMismatch(key.clone()));
    }
    let per_attribute = summary
        .per_attribute
        .iter()
        .map(|(k, a)| (k.clone(), a.weighted.minus(&baseline.per_attribute[k].weighted)))
        .collect();
    Ok(DeltaReport {
        ensemble_id: summary.provider_id.clone(),
        baseline_id: baseline.provider_id.clone(),
        per_attribute,
        macro_avg: summary.macro_avg.minus(&baseline.macro_avg),
        support_weighted_macro: summary.support_weighted_macro.minus(&baseline.support_weighted_macro),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{per_attribute_metrics, Prf};
    use proptest::prelude::*;

    fn policy(p: &[&str]) -> VotePolicy {
        VotePolicy::new(p.iter().copied()).unwrap()
    }

    fn ids(p: &[&str]) -> Vec<String> {
        p.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn vote_examples() {
        let abcd = policy(&["A", "B", "C", "D"]);
        assert_eq!(vote([("A", 1), ("B", 1), ("C", 1), ("D", 0)], &abcd), Ok(1));
        assert_eq!(vote([("A", 1), ("B", 0), ("C", 1), ("D", 0)], &abcd), Ok(1));
        assert_eq!(vote([("A", 0), ("B", 1), ("C", 0), ("D", 1)], &abcd), Ok(0));
        assert_eq!(vote([("A", 2), ("B", 3), ("C", 0)], &policy(&["C", "A", "B"])), Ok(0));
        assert_eq!(vote(std::iter::empty(), &abcd), Err(EnsembleError::NoVotes));
        assert_eq!(
            vote([("Z", 1)], &abcd),
            Err(EnsembleError::UnrankedVoter("Z".into()))
        );
    }

    #[test]
    fn plurality_over_multiclass() {
        // 2 votes for 4 beat single votes for 1 and 2 regardless of priority
        let p = policy(&["A", "B", "C", "D"]);
        assert_eq!(vote([("A", 1), ("B", 2), ("C", 4), ("D", 4)], &p), Ok(4));
    }

    #[test]
    fn duplicate_priority_rejected() {
        assert_eq!(
            VotePolicy::new(["a", "b", "a"]),
            Err(EnsembleError::DuplicatePriority("a".into()))
        );
    }

    #[test]
    fn enumerate_examples() {
        let four = enumerate_ensembles(&ids(&["gpt", "gemini", "llama", "pixtral"]), 3).unwrap();
        let names: Vec<String> = four.iter().map(EnsembleSpec::name).collect();
        assert_eq!(
            names,
            vec![
                "vote(gpt+gemini+llama)",
                "vote(gpt+gemini+pixtral)",
                "vote(gpt+llama+pixtral)",
                "vote(gemini+llama+pixtral)",
                "vote(gpt+gemini+llama+pixtral)",
            ]
        );
        assert_eq!(enumerate_ensembles(&ids(&["a", "b", "c"]), 3).unwrap().len(), 1);
        assert!(matches!(
            enumerate_ensembles(&ids(&["a", "b"]), 3),
            Err(EnsembleError::MinSizeTooLarge { .. })
        ));
        assert_eq!(enumerate_ensembles(&ids(&["a", "b", "c"]), 2), Err(EnsembleError::TooFewMembers(2)));
        // 5 providers: C(5,3)+C(5,4)+C(5,5)
        assert_eq!(enumerate_ensembles(&ids(&["a", "b", "c", "d", "e"]), 3).unwrap().len(), 10 + 5 + 1);
    }

    fn set(provider: &str, rows: &[(&str, Vec<u8>)]) -> PredictionSet {
        let schema = attribute_registry();
        let mut s = PredictionSet::new(provider);
        for (frame, values) in rows {
            s.insert(PredictionRecord {
                frame_id: frame.to_string(),
                provider_id: provider.into(),
                raw_text: None,
                label: EvalLabel::from_values(&schema, values.clone()).unwrap(),
                diagnostics: vec![],
                fatal: false,
                latency_ms: 0,
                attempt_count: 1,
                from_cache: false,
                error: None,
            });
        }
        s
    }

    fn row(pairs: &[(usize, u8)]) -> Vec<u8> {
        let mut v = vec![0u8; 21];
        for &(i, x) in pairs {
            v[i] = x;
        }
        v
    }

    #[test]
    fn unanimous_members() {
        let rows = vec![("f1", row(&[(0, 1), (5, 1)])), ("f2", row(&[(13, 3)]))];
        let a = set("a", &rows);
        let b = set("b", &rows);
        let c = set("c", &rows);
        let spec = EnsembleSpec::new(&ids(&["a", "b", "c"]), &policy(&["a", "b", "c"])).unwrap();
        let out = ensemble_predictions(&[&a, &b, &c], &spec).unwrap();
        assert_eq!(out.provider_id, "vote(a+b+c)");
        for (f, r) in &out.records {
            assert_eq!(r.label, a.records[f].label);
        }
    }

    #[test]
    fn majority_repairs_dissenter() {
        let a = set("a", &[("f1", row(&[(4, 1)]))]);
        let b = set("b", &[("f1", row(&[(4, 1)]))]);
        let c = set("c", &[("f1", row(&[]))]);
        let spec = EnsembleSpec::new(&ids(&["c", "a", "b"]), &policy(&["c", "a", "b"])).unwrap();
        let out = ensemble_predictions(&[&a, &b, &c], &spec).unwrap();
        assert_eq!(out.records["f1"].label.at(4), 1);
    }

    #[test]
    fn four_member_ties_follow_priority() {
        // attribute 2 (staged): 2-2 ties. attribute 13 (Weather): all distinct.
        let a = set("a", &[("f1", row(&[(2, 1), (13, 1)])), ("f2", row(&[(13, 2)]))]);
        let b = set("b", &[("f1", row(&[(13, 2)])), ("f2", row(&[(2, 1), (13, 2)]))]);
        let c = set("c", &[("f1", row(&[(2, 1), (13, 3)])), ("f2", row(&[(2, 1), (13, 5)]))]);
        let d = set("d", &[("f1", row(&[(13, 4)])), ("f2", row(&[(13, 5)]))]);
        let spec = EnsembleSpec::new(&ids(&["a", "b", "c", "d"]), &policy(&["d", "c", "b", "a"])).unwrap();
        let out = ensemble_predictions(&[&a, &b, &c, &d], &spec).unwrap();
        // f1: attr2 votes a=1,b=0,c=1,d=0 → tie, d first → 0; weather 1,2,3,4 → d's 4
        assert_eq!(out.records["f1"].label.at(2), 0);
        assert_eq!(out.records["f1"].label.at(13), 4);
        // f2: attr2 a=0,b=1,c=1,d=0 → tie, d → 0; weather 2,2,5,5 → tie between 2 and 5, d voted 5
        assert_eq!(out.records["f2"].label.at(2), 0);
        assert_eq!(out.records["f2"].label.at(13), 5);
    }

    #[test]
    fn coverage_mismatch() {
        let a = set("a", &[("f1", row(&[]))]);
        let b = set("b", &[("f2", row(&[]))]);
        let c = set("c", &[("f1", row(&[]))]);
        let spec = EnsembleSpec::new(&ids(&["a", "b", "c"]), &policy(&["a", "b", "c"])).unwrap();
        assert!(matches!(
            ensemble_predictions(&[&a, &b, &c], &spec),
            Err(EnsembleError::FrameCoverage { .. })
        ));
        assert!(matches!(
            ensemble_predictions(&[&a, &c], &spec),
            Err(EnsembleError::MissingMember(_))
        ));
    }

    fn labelled(s: &PredictionSet) -> Vec<(String, EvalLabel)> {
        s.records.iter().map(|(k, r)| (k.clone(), r.label.clone())).collect()
    }

    #[test]
    fn deltas() {
        let schema = attribute_registry();
        let truth = set("truth", &[("f1", row(&[(13, 1)])), ("f2", row(&[(13, 2)]))]);
        let s = per_attribute_metrics(&labelled(&truth), &labelled(&truth), &schema).unwrap();
        let zero = delta_vs_baseline(&s, &s).unwrap();
        assert!(zero.per_attribute.values().all(|p| *p == Prf::default()));

        let mut ens = s.clone();
        let mut base = s.clone();
        ens.per_attribute["Weather"].weighted.f1 = 0.9;
        base.per_attribute["Weather"].weighted.f1 = 0.8;
        let d = delta_vs_baseline(&ens, &base).unwrap();
        assert!((d.per_attribute["Weather"].f1 - 0.1).abs() < 1e-12);

        base.per_attribute.shift_remove("Weather");
        assert!(matches!(delta_vs_baseline(&ens, &base), Err(EnsembleError::AttributeMismatch(_))));
    }

    proptest! {
        #[test]
        fn relabelling_with_priority_is_invariant(
            votes in proptest::collection::vec(0u8..4, 3..6),
            shift in 0usize..5,
        ) {
            let names: Vec<String> = (0..votes.len()).map(|i| format!("p{i}")).collect();
            let policy = VotePolicy::new(names.iter().cloned()).unwrap();
            let base = vote(names.iter().map(String::as_str).zip(votes.iter().copied()), &policy).unwrap();
            // rename every provider and carry the renaming through the priority list
            let renamed: Vec<String> = (0..votes.len()).map(|i| format!("q{}", (i + shift) % votes.len())).collect();
            let policy2 = VotePolicy::new(renamed.iter().cloned()).unwrap();
            let mut shuffled: Vec<(&str, u8)> = renamed.iter().map(String::as_str).zip(votes.iter().copied()).collect();
            shuffled.rotate_left(shift % votes.len());
            prop_assert_eq!(vote(shuffled, &policy2).unwrap(), base);
        }

        #[test]
        fn strict_majority_wins(votes in proptest::collection::vec(0u8..3, 3..8)) {
            let names: Vec<String> = (0..votes.len()).map(|i| format!("p{i}")).collect();
            let policy = VotePolicy::new(names.iter().cloned()).unwrap();
            let got = vote(names.iter().map(String::as_str).zip(votes.iter().copied()), &policy).unwrap();
            for v in 0u8..3 {
                if votes.iter().filter(|&&x| x == v).count() * 2 > votes.len() {
                    prop_assert_eq!(got, v);
                }
            }
        }

        #[test]
        fn voting_commutes_with_frame_subsets(
            labels in proptest::collection::vec(proptest::collection::vec(0u8..2, 21), 3 * 6),
            keep in proptest::collection::vec(any::<bool>(), 6),
        ) {
            let frames: Vec<String> = (0..6).map(|i| format!("f{i}")).collect();
            let build = |p: usize, subset: bool| {
                let rows: Vec<(&str, Vec<u8>)> = frames
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !subset || keep[*i])
                    .map(|(i, f)| (f.as_str(), labels[p * 6 + i].clone()))
                    .collect();
                set(["a", "b", "c"][p], &rows)
            };
            let spec = EnsembleSpec::new(&ids(&["a", "b", "c"]), &policy(&["a", "b", "c"])).unwrap();
            let full: Vec<PredictionSet> = (0..3).map(|p| build(p, false)).collect();
            let sub: Vec<PredictionSet> = (0..3).map(|p| build(p, true)).collect();
            let voted_full = ensemble_predictions(&full.iter().collect::<Vec<_>>(), &spec).unwrap();
            let voted_sub = ensemble_predictions(&sub.iter().collect::<Vec<_>>(), &spec).unwrap();
            let restricted: Vec<_> = voted_full.records.iter().filter(|(k, _)| voted_sub.records.contains_key(*k)).map(|(_, r)| r.label.clone()).collect();
            let direct: Vec<_> = voted_sub.records.values().map(|r| r.label.clone()).collect();
            prop_assert_eq!(restricted, direct);
        }
    }
}
