use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::grammar::{parse_records, render};
use crate::protocol::{ask_parsed, AskError, EVIDENCE_BEGIN, EVIDENCE_END, TASK_JUDGE};
use crate::providers::ProviderHandle;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingOutcome {
    pub instance_id: String,
    pub dimension: String,
    /// 1-based position of the human baseline among `n + 1` candidates.
    pub human_rank: usize,
    /// Number of model candidates.
    pub n: usize,
}

/// Mean of `(r - 1) / n` over the outcomes.
pub fn novelty_insight_score(outcomes: &[RankingOutcome]) -> Result<f64, MetricsError> {
    let first = outcomes.first().ok_or(MetricsError::NoOutcomes)?;
    let mut sum = 0.0;
    for o in outcomes {
        if o.dimension != first.dimension {
            return Err(MetricsError::MixedDimensions(
                first.dimension.clone(),
                o.dimension.clone(),
            ));
        }
        if o.n != first.n {
            return Err(MetricsError::MixedN(first.n, o.n));
        }
        if o.n == 0 || o.human_rank == 0 || o.human_rank > o.n + 1 {
            return Err(MetricsError::InvalidArgument(format!(
                "rank {} outside [1, {}] in {}",
                o.human_rank,
                o.n + 1,
                o.instance_id
            )));
        }
        sum += (o.human_rank - 1) as f64 / o.n as f64;
    }
    Ok(sum / outcomes.len() as f64)
}

const SYSTEM: &str = "You are a strict judge. Rank the candidates from best to worst.";

fn judge_prompt(dimension: &str, shown: &[&str]) -> String {
    let mut lines = vec![
        render(&[("TASK", TASK_JUDGE), ("DIMENSION", dimension)]),
        format!(
            "Rank every candidate below by {dimension}, best first. Each candidate must appear \
             exactly once and ties are not allowed."
        ),
        EVIDENCE_BEGIN.to_owned(),
    ];
    for (i, text) in shown.iter().enumerate() {
        lines.push(render(&[("CANDIDATE", &(i + 1).to_string()), ("TEXT", text)]));
    }
    lines.push(EVIDENCE_END.to_owned());
    lines.push("Reply with a single line: ORDER=<comma-separated candidate numbers>".to_owned());
    lines.join("\n")
}

/// Candidate numbers from an `ORDER=` record, best first.
pub fn parse_order(reply: &str) -> Result<Vec<usize>, String> {
    let records = parse_records(reply).map_err(|e| e.to_string())?;
    let order = records
        .iter()
        .find_map(|r| r.get("ORDER"))
        .ok_or("no ORDER record")?;
    order
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{}` is not a candidate number", t.trim()))
        })
        .collect()
}

/// Have `judge` rank the shuffled candidates and report where the human
/// baseline landed. The judge never sees which candidate is the human one.
pub fn blind_rank(
    instance_id: &str,
    candidates: &[String],
    human_idx: usize,
    dimension: &str,
    judge: &ProviderHandle,
    shuffle_seed: u64,
) -> Result<RankingOutcome, MetricsError> {
    let total = candidates.len();
    if total < 2 {
        return Err(MetricsError::TooFewSamples {
            needed: 2,
            got: total,
        });
    }
    if human_idx >= total {
        return Err(MetricsError::InvalidArgument(format!(
            "human index {human_idx} out of {total} candidates"
        )));
    }
    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(&mut rng_from_seed(shuffle_seed));
    let shown: Vec<&str> = perm.iter().map(|&i| candidates[i].as_str()).collect();
    let order = ask_parsed(judge, SYSTEM, &judge_prompt(dimension, &shown), 0.0, parse_order).map_err(
        |e| match e {
            AskError::Provider(p) => MetricsError::Provider(p),
            AskError::Parse(d) => MetricsError::JudgeParseError(d),
        },
    )?;

    let mut seen = vec![false; total];
    for &c in &order {
        if c == 0 || c > total || std::mem::replace(&mut seen[c - 1], true) {
            return Err(MetricsError::IncompleteRanking(format!(
                "invalid or repeated candidate {c} in {order:?}"
            )));
        }
    }
    if order.len() != total {
        return Err(MetricsError::IncompleteRanking(format!(
            "{} of {total} candidates ranked",
            order.len()
        )));
    }
    let human_shown = perm.iter().position(|&i| i == human_idx).expect("human is shown") + 1;
    let human_rank = order
        .iter()
        .position(|&c| c == human_shown)
        .expect("order is total")
        + 1;
    Ok(RankingOutcome {
        instance_id: instance_id.to_owned(),
        dimension: dimension.to_owned(),
        human_rank,
        n: total - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{make_mock_suite, MockFixture};

    fn o(r: usize, n: usize) -> RankingOutcome {
        RankingOutcome {
            instance_id: "i".into(),
            dimension: "novelty".into(),
            human_rank: r,
            n,
        }
    }

    #[test]
    fn insight_score_examples() {
        assert_eq!(novelty_insight_score(&[o(1, 3)]).unwrap(), 0.0);
        assert_eq!(novelty_insight_score(&[o(4, 3)]).unwrap(), 1.0);
        assert!((novelty_insight_score(&[o(2, 3), o(3, 3)]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            novelty_insight_score(&[o(1, 3), o(1, 4)]),
            Err(MetricsError::MixedN(3, 4))
        ));
        let mut other = o(1, 3);
        other.dimension = "utility".into();
        assert!(matches!(
            novelty_insight_score(&[o(1, 3), other]),
            Err(MetricsError::MixedDimensions(..))
        ));
        assert!(matches!(
            novelty_insight_score(&[]),
            Err(MetricsError::NoOutcomes)
        ));
        assert!(novelty_insight_score(&[o(5, 3)]).is_err());
    }

    #[test]
    fn human_last_lexicographically() {
        let s = make_mock_suite(0, &MockFixture::default());
        let c: Vec<String> = ["b model", "a model", "c model", "z human"]
            .iter()
            .map(|t| t.to_string())
            .collect();
        for seed in 0..5 {
            let r = blind_rank("i", &c, 3, "novelty", &s.chat, seed).unwrap();
            assert_eq!((r.human_rank, r.n), (4, 3));
        }
    }

    #[test]
    fn two_candidates() {
        let s = make_mock_suite(0, &MockFixture::default());
        let c = vec!["b human".to_string(), "a model".to_string()];
        assert_eq!(
            blind_rank("i", &c, 0, "novelty", &s.chat, 1).unwrap().human_rank,
            2
        );
    }

    #[test]
    fn partial_order_rejected() {
        let judge = ProviderHandle::chat_fn("j", |_| Ok("ORDER=1,2,3".into()));
        let c: Vec<String> = (0..4).map(|i| format!("t{i}")).collect();
        assert!(matches!(
            blind_rank("i", &c, 0, "novelty", &judge, 0),
            Err(MetricsError::IncompleteRanking(_))
        ));
        let tie = ProviderHandle::chat_fn("j", |_| Ok("ORDER=1,1,2,3".into()));
        assert!(matches!(
            blind_rank("i", &c, 0, "novelty", &tie, 0),
            Err(MetricsError::IncompleteRanking(_))
        ));
        let junk = ProviderHandle::chat_fn("j", |_| Ok("I like the second one".into()));
        assert!(matches!(
            blind_rank("i", &c, 0, "novelty", &junk, 0),
            Err(MetricsError::JudgeParseError(_))
        ));
    }

    #[test]
    fn prompt_hides_sources() {
        let (judge, log) = make_mock_suite(0, &MockFixture::default()).chat.capturing();
        let c = vec!["alpha".to_string(), "beta".to_string()];
        blind_rank("i", &c, 0, "novelty", &judge, 0).unwrap();
        let p = &log.requests()[0].user_prompt;
        assert!(!p.to_lowercase().contains("human"));
    }
}
