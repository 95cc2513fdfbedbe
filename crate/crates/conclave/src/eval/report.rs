//! Run reports, token-efficiency arithmetic, and grouped summaries with
//! rank-sum comparisons between two sets of runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::UsageTotals;
use crate::memory::MemoryUpdateEvent;
use crate::orchestrator::{Mode, RunOutcome};

use super::judge::{JudgeScorecard, JUDGE_METRICS};
use super::stats::{rank_sum_test, StatsError};

/// Everything recorded about one finished run. `total_tokens` is the sum of
/// backend-reported usage over every exchange of the run, memory updates
/// included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub scenario_name: String,
    pub mode: Mode,
    pub seed: u64,
    pub outcome: RunOutcome,
    #[serde(default)]
    pub error: Option<String>,
    pub total_turns: u64,
    /// First global turn at which every worker's latest turn carried ACCEPT.
    #[serde(default)]
    pub consensus_turn: Option<u64>,
    pub total_tokens: u64,
    pub usage: UsageTotals,
    pub per_agent_tokens: BTreeMap<String, UsageTotals>,
    pub memory_update_events: Vec<MemoryUpdateEvent>,
    pub final_document: String,
    #[serde(default)]
    pub scorecard: Option<JudgeScorecard>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("average tokens must be positive")]
    NonPositiveTokens,
    #[error("at least one run report is required")]
    EmptyGroup,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Average reward per token.
pub fn token_efficiency(avg_reward: f64, avg_tokens: f64) -> Result<f64, EvalError> {
    if !(avg_tokens > 0.0) {
        return Err(EvalError::NonPositiveTokens);
    }
    Ok(avg_reward / avg_tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub median: f64,
}

/// Per-group aggregate over run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub runs: usize,
    pub tokens: MetricStats,
    pub turns: MetricStats,
    /// Rubric metric stats over the runs that carry scorecards; absent when
    /// none do.
    pub judge: Option<BTreeMap<String, MetricStats>>,
    pub scored_runs: usize,
    /// Externally supplied average reward, when given.
    #[serde(default)]
    pub avg_reward: Option<f64>,
    /// `avg_reward / mean tokens`, when a reward was given.
    #[serde(default)]
    pub token_efficiency: Option<f64>,
}

fn stats_of(values: &[f64]) -> MetricStats {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    MetricStats { mean, median }
}

fn metric_samples(reports: &[&RunReport], metric: &str) -> Vec<f64> {
    reports
        .iter()
        .filter_map(|r| r.scorecard.as_ref())
        .filter_map(|card| card.score(metric))
        .map(f64::from)
        .collect()
}

/// Aggregates one group of runs. `avg_reward` is an external input (reward
/// computation is out of scope here); when present the summary also carries
/// reward-per-token efficiency.
pub fn summarize_runs(
    reports: &[RunReport],
    avg_reward: Option<f64>,
) -> Result<GroupSummary, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyGroup);
    }
    let refs: Vec<&RunReport> = reports.iter().collect();
    let tokens: Vec<f64> = refs.iter().map(|r| r.total_tokens as f64).collect();
    let turns: Vec<f64> = refs.iter().map(|r| r.total_turns as f64).collect();

    let scored_runs = refs.iter().filter(|r| r.scorecard.is_some()).count();
    let judge = if scored_runs > 0 {
        let mut map = BTreeMap::new();
        for metric in JUDGE_METRICS {
            let samples = metric_samples(&refs, metric);
            map.insert(metric.to_string(), stats_of(&samples));
        }
        Some(map)
    } else {
        None
    };

    let tokens_stats = stats_of(&tokens);
    let efficiency = match avg_reward {
        Some(reward) => Some(token_efficiency(reward, tokens_stats.mean)?),
        None => None,
    };

    Ok(GroupSummary {
        runs: reports.len(),
        tokens: tokens_stats,
        turns: stats_of(&turns),
        judge,
        scored_runs,
        avg_reward,
        token_efficiency: efficiency,
    })
}

/// Two-group comparison: per-group summaries, the relative token change of
/// group B over group A, and two-sided rank-sum p-values per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub group_a: GroupSummary,
    pub group_b: GroupSummary,
    /// (mean_b - mean_a) / mean_a, as a fraction.
    pub tokens_relative_change: f64,
    /// The same change formatted at one decimal, e.g. "+32.6%".
    pub tokens_change_display: String,
    /// p-values keyed "tokens", "turns", and the rubric metrics (the latter
    /// only when both groups have scored runs).
    pub p_values: BTreeMap<String, f64>,
}

pub fn compare_groups(
    group_a: &[RunReport],
    group_b: &[RunReport],
    reward_a: Option<f64>,
    reward_b: Option<f64>,
) -> Result<SummaryTable, EvalError> {
    let summary_a = summarize_runs(group_a, reward_a)?;
    let summary_b = summarize_runs(group_b, reward_b)?;

    let tokens_a: Vec<f64> = group_a.iter().map(|r| r.total_tokens as f64).collect();
    let tokens_b: Vec<f64> = group_b.iter().map(|r| r.total_tokens as f64).collect();
    let turns_a: Vec<f64> = group_a.iter().map(|r| r.total_turns as f64).collect();
    let turns_b: Vec<f64> = group_b.iter().map(|r| r.total_turns as f64).collect();

    let mut p_values = BTreeMap::new();
    p_values.insert(
        "tokens".to_string(),
        rank_sum_test(&tokens_a, &tokens_b)?.p_value,
    );
    p_values.insert(
        "turns".to_string(),
        rank_sum_test(&turns_a, &turns_b)?.p_value,
    );

    let refs_a: Vec<&RunReport> = group_a.iter().collect();
    let refs_b: Vec<&RunReport> = group_b.iter().collect();
    for metric in JUDGE_METRICS {
        let a = metric_samples(&refs_a, metric);
        let b = metric_samples(&refs_b, metric);
        if !a.is_empty() && !b.is_empty() {
            p_values.insert(metric.to_string(), rank_sum_test(&a, &b)?.p_value);
        }
    }

    let relative = (summary_b.tokens.mean - summary_a.tokens.mean) / summary_a.tokens.mean;
    Ok(SummaryTable {
        tokens_change_display: format!("{:+.1}%", relative * 100.0),
        tokens_relative_change: relative,
        group_a: summary_a,
        group_b: summary_b,
        p_values,
    })
}

/// Fixed-width text rendering of a comparison, one metric per row.
pub fn render_comparison_text(table: &SummaryTable) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20} {:>12} {:>12} {:>10}\n",
        "metric", "group A", "group B", "p-value"
    ));
    let mut row = |name: &str, a: f64, b: f64, p: Option<&f64>| {
        let p_text = p.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!("{name:<20} {a:>12.2} {b:>12.2} {p_text:>10}\n"));
    };
    row(
        "tokens",
        table.group_a.tokens.mean,
        table.group_b.tokens.mean,
        table.p_values.get("tokens"),
    );
    row(
        "turns",
        table.group_a.turns.mean,
        table.group_b.turns.mean,
        table.p_values.get("turns"),
    );
    if let (Some(ja), Some(jb)) = (&table.group_a.judge, &table.group_b.judge) {
        for metric in JUDGE_METRICS {
            if let (Some(a), Some(b)) = (ja.get(metric), jb.get(metric)) {
                row(metric, a.mean, b.mean, table.p_values.get(metric));
            }
        }
    }
    out.push_str(&format!(
        "tokens change (B vs A): {}\n",
        table.tokens_change_display
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::judge::MetricScore;

    fn report(tokens: u64, turns: u64, scores: Option<[u8; 5]>) -> RunReport {
        RunReport {
            run_id: format!("r{tokens}"),
            scenario_name: "s".into(),
            mode: Mode::Intrinsic,
            seed: 0,
            outcome: RunOutcome::Finalized,
            error: None,
            total_turns: turns,
            consensus_turn: None,
            total_tokens: tokens,
            usage: UsageTotals {
                prompt_tokens: tokens,
                completion_tokens: 0,
            },
            per_agent_tokens: BTreeMap::new(),
            memory_update_events: vec![],
            final_document: "doc".into(),
            scorecard: scores.map(|s| JudgeScorecard {
                scalability: MetricScore { score: s[0], justification: String::new() },
                reliability: MetricScore { score: s[1], justification: String::new() },
                usability: MetricScore { score: s[2], justification: String::new() },
                cost_effectiveness: MetricScore { score: s[3], justification: String::new() },
                documentation: MetricScore { score: s[4], justification: String::new() },
            }),
        }
    }

    #[test]
    fn efficiency_matches_reported_values() {
        // Reward/token inputs with known quotients.
        let e = token_efficiency(0.0833, 140418.0).unwrap();
        assert!((e - 5.933e-7).abs() < 1e-10);
        // Recomputing the second row gives 5.446e-7; that is the quotient the
        // inputs actually produce.
        let e = token_efficiency(0.0583, 107043.0).unwrap();
        assert!((e - 5.446e-7).abs() < 1e-9);
        assert_eq!(token_efficiency(0.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_or_negative_tokens_is_a_domain_error() {
        assert_eq!(
            token_efficiency(1.0, 0.0).unwrap_err(),
            EvalError::NonPositiveTokens
        );
        assert_eq!(
            token_efficiency(1.0, -5.0).unwrap_err(),
            EvalError::NonPositiveTokens
        );
    }

    #[test]
    fn single_report_summary_echoes_its_values() {
        let summary = summarize_runs(&[report(1000, 16, None)], None).unwrap();
        assert_eq!(summary.runs, 1);
        assert_eq!(summary.tokens.mean, 1000.0);
        assert_eq!(summary.tokens.median, 1000.0);
        assert_eq!(summary.turns.mean, 16.0);
        assert!(summary.judge.is_none());
    }

    #[test]
    fn empty_group_is_an_error() {
        assert_eq!(summarize_runs(&[], None).unwrap_err(), EvalError::EmptyGroup);
    }

    #[test]
    fn mean_and_median_differ_on_skewed_data() {
        let reports = vec![report(10, 1, None), report(20, 2, None), report(90, 3, None)];
        let summary = summarize_runs(&reports, None).unwrap();
        assert_eq!(summary.tokens.mean, 40.0);
        assert_eq!(summary.tokens.median, 20.0);
    }

    #[test]
    fn comparison_reports_token_change_at_one_decimal() {
        let a = vec![report(36077, 14, None)];
        let b = vec![report(47830, 16, None)];
        let table = compare_groups(&a, &b, None, None).unwrap();
        assert_eq!(table.tokens_change_display, "+32.6%");
        assert!((table.tokens_relative_change - 0.3257754).abs() < 1e-6);
    }

    #[test]
    fn constant_equal_groups_have_p_one() {
        let a = vec![report(100, 5, Some([4; 5])), report(100, 5, Some([4; 5]))];
        let b = a.clone();
        let table = compare_groups(&a, &b, None, None).unwrap();
        assert_eq!(table.p_values["tokens"], 1.0);
        assert_eq!(table.p_values["scalability"], 1.0);
    }

    #[test]
    fn judge_stats_cover_only_scored_runs() {
        let reports = vec![
            report(100, 5, Some([8, 5, 4, 6, 4])),
            report(120, 6, None),
            report(140, 7, Some([6, 5, 4, 6, 4])),
        ];
        let summary = summarize_runs(&reports, None).unwrap();
        assert_eq!(summary.scored_runs, 2);
        let judge = summary.judge.unwrap();
        assert_eq!(judge["scalability"].mean, 7.0);
    }

    #[test]
    fn reward_input_yields_efficiency_from_mean_tokens() {
        let reports = vec![report(140418, 16, None)];
        let summary = summarize_runs(&reports, Some(0.0833)).unwrap();
        let eff = summary.token_efficiency.unwrap();
        assert!((eff - 5.933e-7).abs() < 1e-10);
    }

    #[test]
    fn comparison_text_renders_all_rows() {
        let a = vec![report(100, 5, Some([4; 5]))];
        let b = vec![report(150, 6, Some([6; 5]))];
        let table = compare_groups(&a, &b, None, None).unwrap();
        let text = render_comparison_text(&table);
        assert!(text.contains("tokens"));
        assert!(text.contains("scalability"));
        assert!(text.contains("+50.0%"));
    }
}
