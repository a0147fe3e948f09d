//! Turn and dialog accuracy, ΔP, learning curves and the RL success-rate
//! protocol.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{predict_teacher_forced, DomainPack, LabeledDialog, SelectionMode};
use crate::error::{Error, Result};
use crate::features::Featurizer;
use crate::metrics::NullSink;
use crate::neural::LstmParameters;
use crate::training::{rollout, train_supervised, SlConfig, Simulator, GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnResult {
    pub predicted: usize,
    pub label: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnReport {
    pub dialogs: Vec<Vec<TurnResult>>,
    pub turn_accuracy: f64,
    pub dialog_accuracy: f64,
}

impl TurnReport {
    pub fn from_dialogs(dialogs: Vec<Vec<TurnResult>>) -> Self {
        let turns: usize = dialogs.iter().map(Vec::len).sum();
        let correct: usize = dialogs
            .iter()
            .map(|d| d.iter().filter(|t| t.correct).count())
            .sum();
        let perfect = dialogs.iter().filter(|d| d.iter().all(|t| t.correct)).count();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        TurnReport {
            turn_accuracy: ratio(correct, turns),
            dialog_accuracy: ratio(perfect, dialogs.len()),
            dialogs,
        }
    }

    /// Index of the first wrong turn per dialog; `None` when all are right.
    pub fn first_errors(&self) -> Vec<Option<usize>> {
        self.dialogs
            .iter()
            .map(|d| d.iter().position(|t| !t.correct))
            .collect()
    }

    /// `metric,value` lines.
    pub fn to_csv(&self) -> String {
        let turns: usize = self.dialogs.iter().map(Vec::len).sum();
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "turn_accuracy,{:.6}", self.turn_accuracy);
        let _ = writeln!(out, "dialog_accuracy,{:.6}", self.dialog_accuracy);
        let _ = writeln!(out, "dialogs,{}", self.dialogs.len());
        let _ = writeln!(out, "turns,{turns}");
        out
    }
}

/// Teacher-forced evaluation: a turn is correct when the rendered
/// prediction equals the reference string exactly.
pub fn turn_and_dialog_accuracy<P>(
    params: &LstmParameters,
    pack: &P,
    featurizer: &Featurizer,
    dialogs: &[LabeledDialog<P::ApiResult>],
) -> Result<TurnReport>
where
    P: DomainPack + Sync,
    P::ApiResult: Sync,
{
    let per_dialog: Result<Vec<Vec<TurnResult>>> = dialogs
        .par_iter()
        .map(|d| {
            let predictions = predict_teacher_forced(pack, params, featurizer, d)?;
            Ok(predictions
                .into_iter()
                .zip(&d.turns)
                .map(|((predicted, rendered), turn)| TurnResult {
                    predicted,
                    label: turn.label,
                    correct: rendered.as_deref() == Some(turn.reference.as_str()),
                })
                .collect())
        })
        .collect();
    Ok(TurnReport::from_dialogs(per_dialog?))
}

/// `(C(HCN wins) − C(rule wins)) / C(all)`, where a system wins a dialog
/// when its first error comes later. `None` means no error.
pub fn delta_p(hcn_first_errors: &[Option<usize>], rule_first_errors: &[Option<usize>]) -> Result<f64> {
    if hcn_first_errors.len() != rule_first_errors.len() {
        return Err(Error::Dimension {
            what: "first-error lists",
            expected: hcn_first_errors.len(),
            actual: rule_first_errors.len(),
        });
    }
    if hcn_first_errors.is_empty() {
        return Ok(0.0);
    }
    let key = |e: Option<usize>| e.unwrap_or(usize::MAX);
    let mut score = 0i64;
    for (&h, &r) in hcn_first_errors.iter().zip(rule_first_errors) {
        match key(h).cmp(&key(r)) {
            std::cmp::Ordering::Greater => score += 1,
            std::cmp::Ordering::Less => score -= 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    Ok(score as f64 / hcn_first_errors.len() as f64)
}

/// Default training-set sizes; the full set is appended by callers.
pub const DEFAULT_SIZES: [usize; 9] = [1, 2, 5, 10, 20, 50, 100, 200, 500];

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub size: usize,
    pub runs: Vec<f64>,
}

impl CurvePoint {
    pub fn mean(&self) -> f64 {
        self.runs.iter().sum::<f64>() / self.runs.len().max(1) as f64
    }
}

/// For each size and run, trains on a prefix of a run-seeded permutation
/// of `train` and measures test turn accuracy. `eval_pack` scores the test
/// set; it may differ from `pack` in test-only masking.
#[allow(clippy::too_many_arguments)]
pub fn learning_curve<P>(
    train: &[LabeledDialog<P::ApiResult>],
    test: &[LabeledDialog<P::ApiResult>],
    pack: &P,
    eval_pack: &P,
    featurizer: &Featurizer,
    sizes: &[usize],
    runs: usize,
    config: &SlConfig,
) -> Result<Vec<CurvePoint>>
where
    P: DomainPack + Sync,
    P::ApiResult: Sync + Send,
{
    if let Some(&too_big) = sizes.iter().find(|&&s| s > train.len() || s == 0) {
        return Err(Error::Config(format!(
            "curve size {too_big} outside 1..={}",
            train.len()
        )));
    }
    let cells: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..runs).map(move |r| (s, r)))
        .collect();
    let results: Result<Vec<f64>> = cells
        .par_iter()
        .map(|&(size, run)| {
            let run_seed = config.seed.wrapping_add(run as u64);
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(run_seed));
            let subset: Vec<LabeledDialog<P::ApiResult>> =
                order[..size].iter().map(|&i| train[i].clone()).collect();
            let cfg = SlConfig {
                seed: run_seed,
                ..config.clone()
            };
            let params = train_supervised(&subset, pack, featurizer, &cfg, &mut NullSink)?;
            Ok(turn_and_dialog_accuracy(&params, eval_pack, featurizer, test)?.turn_accuracy)
        })
        .collect();
    let results = results?;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| CurvePoint {
            size,
            runs: results[k * runs..(k + 1) * runs].to_vec(),
        })
        .collect())
}

/// `size,run,accuracy` lines.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("size,run,accuracy\n");
    for p in points {
        for (r, a) in p.runs.iter().enumerate() {
            let _ = writeln!(out, "{},{r},{a:.6}", p.size);
        }
    }
    out
}

/// `dialogs,run,success_rate` lines.
pub fn rl_curve_csv(runs: &[Vec<(usize, f64)>]) -> String {
    let mut out = String::from("dialogs,run,success_rate\n");
    for (r, curve) in runs.iter().enumerate() {
        for (d, s) in curve {
            let _ = writeln!(out, "{d},{r},{s:.6}");
        }
    }
    out
}

/// Seed of episode `i` in an evaluation batch seeded with `seed`.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Fraction of `episodes` greedy episodes that succeed against fresh
/// simulators.
pub fn rl_success_rate<P, S, F>(
    params: &LstmParameters,
    pack: &P,
    featurizer: &Featurizer,
    make_sim: &F,
    episodes: usize,
    seed: u64,
) -> Result<f64>
where
    P: DomainPack + Sync,
    S: Simulator<P>,
    F: Fn(u64) -> S + Sync,
{
    if episodes == 0 {
        return Ok(0.0);
    }
    let successes: Result<Vec<bool>> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let s = episode_seed(seed, i);
            let mut sim = make_sim(s);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let (traj, _) = rollout(
                pack,
                params,
                featurizer,
                &mut sim,
                SelectionMode::Greedy,
                GAMMA,
                &mut rng,
            )?;
            Ok(traj.outcome.success)
        })
        .collect();
    let n = successes?.into_iter().filter(|&s| s).count();
    Ok(n as f64 / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(flags: &[&[bool]]) -> TurnReport {
        TurnReport::from_dialogs(
            flags
                .iter()
                .map(|d| {
                    d.iter()
                        .map(|&c| TurnResult {
                            predicted: 0,
                            label: if c { 0 } else { 1 },
                            correct: c,
                        })
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn three_of_four_turns() {
        let r = report(&[&[true, true, false, true]]);
        assert_eq!(r.turn_accuracy, 0.75);
        assert_eq!(r.dialog_accuracy, 0.0);
        assert_eq!(r.first_errors(), vec![Some(2)]);
    }

    #[test]
    fn delta_p_arithmetic() {
        let mut hcn = Vec::new();
        let mut rule = Vec::new();
        for _ in 0..10 {
            hcn.push(None);
            rule.push(Some(1));
        }
        for _ in 0..4 {
            hcn.push(Some(0));
            rule.push(Some(3));
        }
        for _ in 0..6 {
            hcn.push(Some(2));
            rule.push(Some(2));
        }
        assert!((delta_p(&hcn, &rule).unwrap() - 0.3).abs() < 1e-12);
        assert!((delta_p(&rule, &hcn).unwrap() + 0.3).abs() < 1e-12);
        assert!(delta_p(&hcn, &rule[..3]).is_err());
    }
}
