//! Multi-Hop and Single-Wise accuracy, per chain and aggregated.
//!
//! Multi-Hop is the fraction of chain positions holding the ground-truth
//! sentence. Single-Wise is the fraction of adjacent ground-truth pairs that
//! the prediction reproduces at the same positions in either orientation;
//! it is undefined for single-sentence chains. Both compare sentence
//! identities, so they do not depend on how the pool was displayed.

use std::collections::BTreeMap;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Tier;
use crate::protocol::{EpisodeTranscript, Mode};
use crate::taskgen::{MazeTask, SentenceId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("prediction length {pred} does not match chain length {gt}")]
    LengthMismatch { gt: usize, pred: usize },
    #[error("empty ground-truth chain")]
    EmptyChain,
    #[error("transcript {transcript:?} does not belong to task {task:?}")]
    TaskMismatch { task: String, transcript: String },
}

fn check_lengths<T>(gt: &[T], pred: &[Option<T>]) -> Result<usize, MetricError> {
    if gt.is_empty() {
        return Err(MetricError::EmptyChain);
    }
    if gt.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    Ok(gt.len())
}

pub fn multi_hop_accuracy<T: PartialEq>(gt: &[T], pred: &[Option<T>]) -> Result<f64, MetricError> {
    let n = check_lengths(gt, pred)?;
    let hits = gt
        .iter()
        .zip(pred)
        .filter(|(g, p)| p.as_ref() == Some(*g))
        .count();
    Ok(hits as f64 / n as f64)
}

/// `None` when the chain has a single sentence.
pub fn single_wise_accuracy<T: PartialEq>(gt: &[T], pred: &[Option<T>]) -> Result<Option<f64>, MetricError> {
    let n = check_lengths(gt, pred)?;
    if n == 1 {
        return Ok(None);
    }
    let hits = gt
        .windows(2)
        .zip(pred.windows(2))
        .filter(|(g, p)| match (&p[0], &p[1]) {
            (Some(a), Some(b)) => (*a == g[0] && *b == g[1]) || (*a == g[1] && *b == g[0]),
            _ => false,
        })
        .count();
    Ok(Some(hits as f64 / (n - 1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainScore {
    pub task_id: String,
    pub model: String,
    pub tier: Tier,
    pub mode: Mode,
    pub noise_level: usize,
    pub chain_length: usize,
    pub multi_hop: f64,
    pub single_wise: Option<f64>,
}

pub fn score_episode(task: &MazeTask, transcript: &EpisodeTranscript, model: &str) -> Result<ChainScore, MetricError> {
    if task.task_id != transcript.task_id {
        return Err(MetricError::TaskMismatch {
            task: task.task_id.clone(),
            transcript: transcript.task_id.clone(),
        });
    }
    let gt: Vec<SentenceId> = task.gt_chain.iter().map(|s| s.id()).collect();
    let pred = &transcript.prediction.sentences;
    Ok(ChainScore {
        task_id: task.task_id.clone(),
        model: model.to_string(),
        tier: task.tier,
        mode: transcript.mode,
        noise_level: task.noise_level,
        chain_length: gt.len(),
        multi_hop: multi_hop_accuracy(&gt, pred)?,
        single_wise: single_wise_accuracy(&gt, pred)?,
    })
}

/// Which score fields form a report group. Ungrouped columns read `all`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupBy {
    pub model: bool,
    pub tier: bool,
    pub mode: bool,
    pub noise: bool,
}

impl Default for GroupBy {
    fn default() -> Self {
        GroupBy {
            model: true,
            tier: true,
            mode: true,
            noise: true,
        }
    }
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut g = GroupBy {
            model: false,
            tier: false,
            mode: false,
            noise: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "model" => g.model = true,
                "tier" => g.tier = true,
                "mode" => g.mode = true,
                "noise" | "noise_level" => g.noise = true,
                other => return Err(format!("unknown group key {other:?}")),
            }
        }
        Ok(g)
    }
}

pub const ALL: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub tier: String,
    pub mode: String,
    pub noise_level: String,
    pub multi_hop_mean: f64,
    pub single_wise_mean: Option<f64>,
    pub n_tasks: usize,
    /// Tasks left out of the single-wise mean (single-sentence chains).
    pub n_excluded: usize,
}

impl ReportRow {
    pub fn cell(&self) -> (String, String, String) {
        (self.tier.clone(), self.mode.clone(), self.noise_level.clone())
    }
}

/// Unweighted per-task means per group, in sorted group order.
pub fn aggregate_scores(scores: &[ChainScore], keys: GroupBy) -> Vec<ReportRow> {
    let key_of = |s: &ChainScore| {
        let pick = |on: bool, v: String| if on { v } else { ALL.to_string() };
        (
            pick(keys.model, s.model.clone()),
            pick(keys.tier, s.tier.to_string()),
            pick(keys.mode, s.mode.to_string()),
            keys.noise.then_some(s.noise_level),
        )
    };
    let mut groups: BTreeMap<(String, String, String, Option<usize>), Vec<&ChainScore>> = BTreeMap::new();
    for s in scores {
        groups.entry(key_of(s)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|((model, tier, mode, noise), members)| {
            let n = members.len();
            let multi_hop_mean = members.iter().map(|s| s.multi_hop).sum::<f64>() / n as f64;
            let defined: Vec<f64> = members.iter().filter_map(|s| s.single_wise).collect();
            let single_wise_mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            ReportRow {
                model,
                tier,
                mode,
                noise_level: noise.map_or_else(|| ALL.to_string(), |n| n.to_string()),
                multi_hop_mean,
                single_wise_mean,
                n_tasks: n,
                n_excluded: n - defined.len(),
            }
        })
        .collect()
}

pub const REPORT_HEADER: [&str; 8] = [
    "model",
    "tier",
    "mode",
    "noise_level",
    "multi_hop_mean",
    "single_wise_mean",
    "n_tasks",
    "n_excluded",
];

pub const UNDEFINED: &str = "UNDEFINED";

pub fn write_report<W: io::Write>(out: W, rows: &[ReportRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.tier.clone(),
            r.mode.clone(),
            r.noise_level.clone(),
            r.multi_hop_mean.to_string(),
            r.single_wise_mean.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string()),
            r.n_tasks.to_string(),
            r.n_excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report<R: io::Read>(input: R) -> Result<Vec<ReportRow>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != REPORT_HEADER.len() {
            return Err(format!("expected {} columns, found {}", REPORT_HEADER.len(), rec.len()));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| format!("{}: {e}", REPORT_HEADER[i]));
        let int = |i: usize| rec[i].parse::<usize>().map_err(|e| format!("{}: {e}", REPORT_HEADER[i]));
        rows.push(ReportRow {
            model: rec[0].to_string(),
            tier: rec[1].to_string(),
            mode: rec[2].to_string(),
            noise_level: rec[3].to_string(),
            multi_hop_mean: num(4)?,
            single_wise_mean: if &rec[5] == UNDEFINED { None } else { Some(num(5)?) },
            n_tasks: int(6)?,
            n_excluded: int(7)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: char = 'A';
    const B: char = 'B';
    const C: char = 'C';

    #[test]
    fn multi_hop_examples() {
        assert_eq!(multi_hop_accuracy(&[A, B, C], &[Some(A), Some(B), Some(C)]), Ok(1.0));
        assert_eq!(multi_hop_accuracy(&[A, B, C], &[Some(B), Some(A), Some(C)]), Ok(1.0 / 3.0));
        assert_eq!(multi_hop_accuracy(&[A, B], &[None, None]), Ok(0.0));
        assert_eq!(
            multi_hop_accuracy(&[A, B], &[Some(A)]),
            Err(MetricError::LengthMismatch { gt: 2, pred: 1 })
        );
        assert_eq!(multi_hop_accuracy::<char>(&[], &[]), Err(MetricError::EmptyChain));
    }

    #[test]
    fn single_wise_examples() {
        assert_eq!(single_wise_accuracy(&[A, B, C], &[Some(B), Some(A), Some(C)]), Ok(Some(0.5)));
        assert_eq!(single_wise_accuracy(&[A, B, C], &[Some(A), Some(B), Some(C)]), Ok(Some(1.0)));
        assert_eq!(single_wise_accuracy(&[A], &[Some(B)]), Ok(None));
        assert_eq!(single_wise_accuracy(&[A], &[None]), Ok(None));
        assert_eq!(single_wise_accuracy(&[A, B], &[Some(B), Some(A)]), Ok(Some(1.0)));
        assert_eq!(single_wise_accuracy(&[A, B], &[Some(A), None]), Ok(Some(0.0)));
    }

    fn score(model: &str, noise: usize, mh: f64, sw: Option<f64>) -> ChainScore {
        ChainScore {
            task_id: format!("t{mh}{noise}"),
            model: model.into(),
            tier: Tier::Basic,
            mode: Mode::OneRound,
            noise_level: noise,
            chain_length: if sw.is_some() { 2 } else { 1 },
            multi_hop: mh,
            single_wise: sw,
        }
    }

    #[test]
    fn aggregation() {
        let rows = aggregate_scores(&[score("m", 0, 1.0, Some(1.0)), score("m", 0, 0.0, Some(0.0))], GroupBy::default());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].multi_hop_mean, 0.5);
        assert_eq!(rows[0].single_wise_mean, Some(0.5));
        assert_eq!(rows[0].noise_level, "0");

        let rows = aggregate_scores(&[score("m", 3, 1.0, None), score("m", 3, 0.0, None)], GroupBy::default());
        assert_eq!(rows[0].single_wise_mean, None);
        assert_eq!(rows[0].n_excluded, 2);
        assert_eq!(rows[0].noise_level, "3");

        let rows = aggregate_scores(
            &[score("m", 10, 1.0, None), score("m", 5, 0.0, None), score("m", 0, 0.0, None)],
            GroupBy::default(),
        );
        let levels: Vec<&str> = rows.iter().map(|r| r.noise_level.as_str()).collect();
        assert_eq!(levels, vec!["0", "5", "10"]);

        let rows = aggregate_scores(&[score("a", 0, 1.0, None), score("b", 5, 0.0, None)], "tier".parse().unwrap());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].model, ALL);
        assert_eq!(rows[0].noise_level, ALL);
    }

    #[test]
    fn report_csv_round_trip() {
        let rows = aggregate_scores(
            &[score("m", 0, 1.0 / 3.0, Some(0.5)), score("m", 1, 0.1, None)],
            GroupBy::default(),
        );
        let mut buf = Vec::new();
        write_report(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,tier,mode,noise_level,multi_hop_mean,single_wise_mean,n_tasks,n_excluded\n"));
        assert!(text.contains(UNDEFINED));
        assert_eq!(read_report(&buf[..]).unwrap(), rows);
    }
}
