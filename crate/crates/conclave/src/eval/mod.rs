//! Evaluation harness: judge prompts and scorecards, rank-sum statistics, and
//! grouped run summaries.

mod judge;
mod report;
mod stats;

pub use judge::{
    parse_scorecard, render_judge_prompt, JudgeError, JudgeScorecard, MetricScore,
    ScorecardParseError, JUDGE_METRICS, JUDGE_PROMPT,
};
pub use report::{
    compare_groups, render_comparison_text, summarize_runs, token_efficiency, EvalError,
    GroupSummary, MetricStats, RunReport, SummaryTable,
};
pub use stats::{
    exact_extreme_count_seq, rank_sum_test, RankSumMethod, RankSumResult, StatsError,
    EXACT_ENUMERATION_LIMIT,
};

#[cfg(feature = "parallel")]
pub use stats::exact_extreme_count_par;
