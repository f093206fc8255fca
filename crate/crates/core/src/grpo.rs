//! Group-relative policy optimization on a toy grid policy.
//!
//! The policy stands in for a vision-language model: for each task it emits
//! two anchors, each drawn from an independent categorical distribution over
//! `(start_bin, end_bin)` pairs of a `B`-bin grid over the video, and answers
//! with the second anchor. Rollouts are rendered to text, parsed back and
//! scored with the same reward stack used on real model outputs.
//!
//! For a group of `G` rollouts `o_i` the optimized objective is
//!
//! ```text
//! J(theta) = sum_i  pi_theta(o_i) / pi_old(o_i) * A_i  -  alpha * KL(pi_theta || pi_ref)
//! A_i      = (r_i - mean(r)) / std(r)      (population std; all zero if std < 1e-9)
//! ```
//!
//! with `pi(o) = p1(anchor1) * p2(anchor2)` at sequence level and the KL
//! taken in closed form over both categorical tables. Gradients are analytic.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GrpoError;
use crate::interval::TimeInterval;
use crate::rewards::{total_reward, RewardBreakdown, RewardConfig};
use crate::trace::{parse_trace, ParsedTrace, TraceBuilder};

/// Advantages are zeroed when the group's standard deviation is below this.
pub const MIN_GROUP_STD: f64 = 1e-9;

/// A grounding query reduced to what the reward needs: duration and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingTask {
    pub task_id: String,
    pub duration: f64,
    pub gt: TimeInterval,
}

impl GroundingTask {
    pub fn new(
        task_id: impl Into<String>,
        duration: f64,
        gt: TimeInterval,
    ) -> Result<Self, GrpoError> {
        let task_id = task_id.into();
        if !(duration.is_finite() && duration > 0.0) {
            return Err(GrpoError::InvalidConfig(format!(
                "task {task_id}: duration {duration} must be positive"
            )));
        }
        if !gt.within(duration) || gt.length() <= 0.0 {
            return Err(GrpoError::InvalidConfig(format!(
                "task {task_id}: ground truth {gt} must be a non-empty span inside [0, {duration}]"
            )));
        }
        Ok(Self {
            task_id,
            duration,
            gt,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorSlot {
    First,
    Second,
}

/// Number of valid `(start_bin, end_bin)` cells on a `bins`-wide grid.
pub fn cell_count(bins: usize) -> usize {
    bins * (bins + 1) / 2
}

/// Maps a cell index to its `(start_bin, end_bin)` pair, row-major over
/// `start_bin` with `end_bin >= start_bin`.
pub fn cell_bins(bins: usize, mut cell: usize) -> (usize, usize) {
    for start in 0..bins {
        let row = bins - start;
        if cell < row {
            return (start, start + cell);
        }
        cell -= row;
    }
    panic!("cell index out of range for {bins} bins");
}

pub fn cell_index(bins: usize, start_bin: usize, end_bin: usize) -> usize {
    assert!(start_bin <= end_bin && end_bin < bins);
    // Rows before `start_bin` hold bins, bins - 1, ... cells.
    start_bin * bins - start_bin * start_bin.saturating_sub(1) / 2 + (end_bin - start_bin)
}

/// Time interval of a grid cell; bin `b` maps to its center `(b + 0.5) * duration / bins`.
pub fn cell_interval(bins: usize, cell: usize, duration: f64) -> TimeInterval {
    let (s, e) = cell_bins(bins, cell);
    let width = duration / bins as f64;
    TimeInterval::new((s as f64 + 0.5) * width, (e as f64 + 0.5) * width)
        .expect("grid cells are ordered and non-negative")
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Two independent categorical tables over grid cells, one per anchor.
///
/// Logits may be `-inf` to remove a cell from the support.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy {
    bins: usize,
    anchor1: Vec<f64>,
    anchor2: Vec<f64>,
}

impl GridPolicy {
    pub fn uniform(bins: usize) -> Self {
        let n = cell_count(bins);
        Self {
            bins,
            anchor1: vec![0.0; n],
            anchor2: vec![0.0; n],
        }
    }

    pub fn from_logits(
        bins: usize,
        anchor1: Vec<f64>,
        anchor2: Vec<f64>,
    ) -> Result<Self, GrpoError> {
        let n = cell_count(bins);
        if bins == 0 {
            return Err(GrpoError::InvalidConfig("bins must be positive".into()));
        }
        for table in [&anchor1, &anchor2] {
            if table.len() != n {
                return Err(GrpoError::ShapeMismatch {
                    left: n,
                    right: table.len(),
                });
            }
            if table.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
                return Err(GrpoError::InvalidConfig(
                    "logits must be finite or -inf".into(),
                ));
            }
            if table.iter().all(|l| *l == f64::NEG_INFINITY) {
                return Err(GrpoError::InvalidConfig(
                    "a logit table has empty support".into(),
                ));
            }
        }
        Ok(Self {
            bins,
            anchor1,
            anchor2,
        })
    }

    /// All mass on a single cell for both anchors.
    pub fn point_mass(bins: usize, cell1: usize, cell2: usize) -> Self {
        let n = cell_count(bins);
        let mut a1 = vec![f64::NEG_INFINITY; n];
        let mut a2 = vec![f64::NEG_INFINITY; n];
        a1[cell1] = 0.0;
        a2[cell2] = 0.0;
        Self {
            bins,
            anchor1: a1,
            anchor2: a2,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn cells(&self) -> usize {
        self.anchor1.len()
    }

    pub fn logits(&self, slot: AnchorSlot) -> &[f64] {
        match slot {
            AnchorSlot::First => &self.anchor1,
            AnchorSlot::Second => &self.anchor2,
        }
    }

    pub fn logits_mut(&mut self, slot: AnchorSlot) -> &mut [f64] {
        match slot {
            AnchorSlot::First => &mut self.anchor1,
            AnchorSlot::Second => &mut self.anchor2,
        }
    }

    pub fn probs(&self, slot: AnchorSlot) -> Vec<f64> {
        softmax(self.logits(slot))
    }

    /// Sequence log-probability of emitting `cells[0]` then `cells[1]`.
    pub fn log_prob(&self, cells: [usize; 2]) -> f64 {
        let p1 = self.probs(AnchorSlot::First)[cells[0]];
        let p2 = self.probs(AnchorSlot::Second)[cells[1]];
        p1.ln() + p2.ln()
    }

    fn check_shape(&self, other: &GridPolicy) -> Result<(), GrpoError> {
        if self.bins != other.bins {
            return Err(GrpoError::ShapeMismatch {
                left: self.cells(),
                right: other.cells(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    /// KL penalty weight.
    pub kl_coefficient: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    pub bins: usize,
    /// Refresh the sampling policy every this many updates of a task.
    pub old_refresh_interval: usize,
    pub reward: RewardConfig,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            kl_coefficient: 0.01,
            learning_rate: 0.5,
            steps: 2000,
            seed: 0,
            bins: 12,
            old_refresh_interval: 1,
            reward: RewardConfig::default(),
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |msg: &str| Err(GrpoError::InvalidConfig(msg.to_string()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.kl_coefficient.is_finite() && self.kl_coefficient >= 0.0) {
            return bad("kl_coefficient must be finite and non-negative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be finite and positive");
        }
        if self.bins == 0 {
            return bad("bins must be positive");
        }
        if self.old_refresh_interval == 0 {
            return bad("old_refresh_interval must be positive");
        }
        self.reward.validate()?;
        Ok(())
    }
}

/// One sampled response with its probabilities and reward.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trace: ParsedTrace,
    pub cells: [usize; 2],
    pub logprob_current: f64,
    pub logprob_old: f64,
    pub logprob_ref: f64,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
}

/// Deterministic generator for rollout `index` of update `step`.
///
/// Every rollout reads its own ChaCha stream, so a group can be sampled in
/// any order or in parallel without changing results.
pub fn rollout_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((step << 20) | (index & 0xF_FFFF));
    rng
}

/// Renders the two-anchor trace for a pair of cells.
pub fn render_cells(bins: usize, cells: [usize; 2], duration: f64) -> String {
    let first = cell_interval(bins, cells[0], duration);
    let second = cell_interval(bins, cells[1], duration);
    TraceBuilder::new()
        .reason("coarse pass over the video")
        .anchor(first)
        .reason("refine around the candidate")
        .anchor(second)
        .answer(second)
        .render()
}

fn score_cells(
    bins: usize,
    cells: [usize; 2],
    task: &GroundingTask,
    reward: &RewardConfig,
) -> Result<(ParsedTrace, RewardBreakdown), GrpoError> {
    let trace = parse_trace(&render_cells(bins, cells, task.duration));
    let breakdown = total_reward(&trace, task.gt, reward)?;
    Ok((trace, breakdown))
}

/// Draws `G` rollouts from `behaviour` for one task.
///
/// `logprob_current` and `logprob_old` both hold the behaviour policy's
/// log-probability; [`grpo_objective`] re-evaluates the current policy.
pub fn sample_group(
    behaviour: &GridPolicy,
    reference: &GridPolicy,
    task: &GroundingTask,
    cfg: &GrpoConfig,
    step: u64,
) -> Result<Vec<Rollout>, GrpoError> {
    behaviour.check_shape(reference)?;
    let p1 = behaviour.probs(AnchorSlot::First);
    let p2 = behaviour.probs(AnchorSlot::Second);
    let d1 = WeightedIndex::new(&p1).map_err(|e| GrpoError::InvalidConfig(e.to_string()))?;
    let d2 = WeightedIndex::new(&p2).map_err(|e| GrpoError::InvalidConfig(e.to_string()))?;
    let r1 = reference.probs(AnchorSlot::First);
    let r2 = reference.probs(AnchorSlot::Second);

    (0..cfg.group_size)
        .map(|i| {
            let mut rng = rollout_rng(cfg.seed, step, i as u64);
            let cells = [d1.sample(&mut rng), d2.sample(&mut rng)];
            let (trace, breakdown) = score_cells(behaviour.bins, cells, task, &cfg.reward)?;
            let logprob = p1[cells[0]].ln() + p2[cells[1]].ln();
            Ok(Rollout {
                trace,
                cells,
                logprob_current: logprob,
                logprob_old: logprob,
                logprob_ref: r1[cells[0]].ln() + r2[cells[1]].ln(),
                reward: breakdown.total,
                breakdown,
            })
        })
        .collect()
}

/// Group-normalized advantages `(r - mean) / std` with population std.
///
/// ```
/// use tvg_anchor::group_advantages;
///
/// let adv = group_advantages(&[2.0, 4.0, 6.0]).unwrap();
/// assert!((adv[2] - 1.5f64.sqrt()).abs() < 1e-12);
/// assert_eq!(group_advantages(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0; 3]);
/// ```
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < MIN_GROUP_STD {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `sum_x p(x) ln(p(x) / q(x))` over two distributions on the same support.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> Result<f64, GrpoError> {
    if p.len() != q.len() {
        return Err(GrpoError::ShapeMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut kl = 0.0;
    for (cell, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(GrpoError::SupportMismatch { cell, mass: pi });
        }
        kl += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative value for near-identical inputs.
    Ok(kl.max(0.0))
}

/// Closed-form KL summed over both anchor tables.
pub fn kl_divergence(policy: &GridPolicy, reference: &GridPolicy) -> Result<f64, GrpoError> {
    policy.check_shape(reference)?;
    let mut total = 0.0;
    for slot in [AnchorSlot::First, AnchorSlot::Second] {
        total += categorical_kl(&policy.probs(slot), &reference.probs(slot))?;
    }
    Ok(total)
}

/// Surrogate objective for one group; see the module docs.
pub fn grpo_objective(
    rollouts: &[Rollout],
    policy: &GridPolicy,
    reference: &GridPolicy,
    cfg: &GrpoConfig,
) -> Result<f64, GrpoError> {
    let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
    let advantages = group_advantages(&rewards)?;
    let surrogate: f64 = rollouts
        .iter()
        .zip(&advantages)
        .map(|(r, a)| (policy.log_prob(r.cells) - r.logprob_old).exp() * a)
        .sum();
    Ok(surrogate - cfg.kl_coefficient * kl_divergence(policy, reference)?)
}

/// Gradient of [`grpo_objective`] with respect to both logit tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub anchor1: Vec<f64>,
    pub anchor2: Vec<f64>,
}

impl PolicyGradient {
    pub fn table(&self, slot: AnchorSlot) -> &[f64] {
        match slot {
            AnchorSlot::First => &self.anchor1,
            AnchorSlot::Second => &self.anchor2,
        }
    }
}

/// Analytic gradient of the objective.
///
/// For the ratio term, `d ratio_i / d z_c = ratio_i * (1[c = x_i] - p_c)`.
/// For the KL term of one table, `d KL / d z_c = p_c * (ln(p_c / q_c) - KL)`.
pub fn grpo_gradient(
    rollouts: &[Rollout],
    policy: &GridPolicy,
    reference: &GridPolicy,
    cfg: &GrpoConfig,
) -> Result<PolicyGradient, GrpoError> {
    policy.check_shape(reference)?;
    let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
    let advantages = group_advantages(&rewards)?;
    let mut tables = [vec![0.0; policy.cells()], vec![0.0; policy.cells()]];

    for (k, slot) in [AnchorSlot::First, AnchorSlot::Second]
        .into_iter()
        .enumerate()
    {
        let p = policy.probs(slot);
        let q = reference.probs(slot);
        let grad = &mut tables[k];
        for (rollout, adv) in rollouts.iter().zip(&advantages) {
            let weight = (policy.log_prob(rollout.cells) - rollout.logprob_old).exp() * adv;
            if weight == 0.0 {
                continue;
            }
            for (c, g) in grad.iter_mut().enumerate() {
                *g -= weight * p[c];
            }
            grad[rollout.cells[k]] += weight;
        }
        if cfg.kl_coefficient > 0.0 {
            let kl = categorical_kl(&p, &q)?;
            for (c, g) in grad.iter_mut().enumerate() {
                if p[c] > 0.0 {
                    *g -= cfg.kl_coefficient * p[c] * ((p[c] / q[c]).ln() - kl);
                }
            }
        }
    }
    let [anchor1, anchor2] = tables;
    Ok(PolicyGradient { anchor1, anchor2 })
}

/// Summary of one update, one line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub task_id: String,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub reward_max: f64,
    pub siou_anchor1_mean: f64,
    pub siou_anchor2_mean: f64,
    /// Fraction of rollouts whose refinement score is positive.
    pub tar3_positive_rate: f64,
    pub format_rate: f64,
    /// KL from the updated policy to the reference.
    pub kl: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn anchor_mean(rollouts: &[Rollout], position: usize) -> f64 {
    mean(rollouts.iter().map(|r| {
        r.breakdown
            .per_anchor_siou
            .get(position)
            .copied()
            .unwrap_or(0.0)
    }))
}

/// One gradient-ascent update on a freshly sampled group.
///
/// The group is drawn from `old_policy`; the gradient is taken at `policy`.
pub fn train_step(
    policy: &GridPolicy,
    old_policy: &GridPolicy,
    reference: &GridPolicy,
    task: &GroundingTask,
    cfg: &GrpoConfig,
    step: usize,
) -> Result<(GridPolicy, StepReport), GrpoError> {
    cfg.validate()?;
    policy.check_shape(old_policy)?;
    let mut rollouts = sample_group(old_policy, reference, task, cfg, step as u64)?;
    for r in &mut rollouts {
        r.logprob_current = policy.log_prob(r.cells);
    }
    let grad = grpo_gradient(&rollouts, policy, reference, cfg)?;
    let mut updated = policy.clone();
    for slot in [AnchorSlot::First, AnchorSlot::Second] {
        for (z, g) in updated.logits_mut(slot).iter_mut().zip(grad.table(slot)) {
            *z += cfg.learning_rate * g;
        }
    }

    let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
    let reward_mean = mean(rewards.iter().copied());
    let reward_std = mean(rewards.iter().map(|r| (r - reward_mean).powi(2))).sqrt();
    let report = StepReport {
        step,
        task_id: task.task_id.clone(),
        reward_mean,
        reward_std,
        reward_max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        siou_anchor1_mean: anchor_mean(&rollouts, 0),
        siou_anchor2_mean: anchor_mean(&rollouts, 1),
        tar3_positive_rate: mean(rollouts.iter().map(|r| {
            if r.breakdown.tar3 > 0.0 {
                1.0
            } else {
                0.0
            }
        })),
        format_rate: mean(
            rollouts
                .iter()
                .map(|r| if r.trace.matches() { 1.0 } else { 0.0 }),
        ),
        kl: kl_divergence(&updated, reference)?,
    };
    Ok((updated, report))
}

/// Expected total reward of a policy on a task, by enumerating every pair of cells.
pub fn expected_reward(
    policy: &GridPolicy,
    task: &GroundingTask,
    reward: &RewardConfig,
) -> Result<f64, GrpoError> {
    let p1 = policy.probs(AnchorSlot::First);
    let p2 = policy.probs(AnchorSlot::Second);
    let mut total = 0.0;
    for (c1, &a) in p1.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (c2, &b) in p2.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let (_, breakdown) = score_cells(policy.bins, [c1, c2], task, reward)?;
            total += a * b * breakdown.total;
        }
    }
    Ok(total)
}

/// Per-step reports of a training run, serialized one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<StepReport>,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("reports serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    /// Tab-separated reward-curve columns with a header row.
    pub fn plot_columns(&self) -> String {
        let mut out = String::from(
            "step\treward_mean\treward_max\tsiou_anchor1_mean\tsiou_anchor2_mean\ttar3_positive_rate\tkl\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.step,
                r.reward_mean,
                r.reward_max,
                r.siou_anchor1_mean,
                r.siou_anchor2_mean,
                r.tar3_positive_rate,
                r.kl
            ));
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn write_plot(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, self.plot_columns().as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub log: TrainingLog,
    /// Trained policy per task id.
    pub policies: BTreeMap<String, GridPolicy>,
}

/// Trains one tabular policy per task, cycling through tasks in order.
///
/// Each task's policy starts as a copy of `reference`. Step `t` updates
/// task `t mod n`.
pub fn train_loop(
    tasks: &[GroundingTask],
    cfg: &GrpoConfig,
    reference: &GridPolicy,
) -> Result<TrainingOutcome, GrpoError> {
    if tasks.is_empty() {
        return Err(GrpoError::EmptyTasks);
    }
    cfg.validate()?;
    if reference.bins() != cfg.bins {
        return Err(GrpoError::ShapeMismatch {
            left: cell_count(cfg.bins),
            right: reference.cells(),
        });
    }
    struct TaskState {
        policy: GridPolicy,
        old: GridPolicy,
        updates: usize,
    }
    let mut states: Vec<TaskState> = tasks
        .iter()
        .map(|_| TaskState {
            policy: reference.clone(),
            old: reference.clone(),
            updates: 0,
        })
        .collect();
    let mut log = TrainingLog::default();
    for step in 0..cfg.steps {
        let index = step % tasks.len();
        let state = &mut states[index];
        if state.updates.is_multiple_of(cfg.old_refresh_interval) {
            state.old = state.policy.clone();
        }
        let (updated, report) = train_step(
            &state.policy,
            &state.old,
            reference,
            &tasks[index],
            cfg,
            step,
        )?;
        state.policy = updated;
        state.updates += 1;
        log.records.push(report);
    }
    let policies = tasks
        .iter()
        .zip(states)
        .map(|(t, s)| (t.task_id.clone(), s.policy))
        .collect();
    Ok(TrainingOutcome { log, policies })
}

/// Upper bound on the total reward of any trace with `anchor_count` anchors.
///
/// Every soft IoU is at most 1 and every refinement step at most +1, so the
/// total is bounded by `format + 1 + s(s+1)/2 - beta (s - target)^2 + gamma (s - 1)`.
pub fn max_total_bound(anchor_count: usize, reward: &RewardConfig) -> f64 {
    let s = anchor_count as f64;
    let tar1_max = s * (s + 1.0) / 2.0;
    let tar3_max = if anchor_count == 0 { 0.0 } else { s - 1.0 };
    reward.format_score + 1.0 + tar1_max - reward.beta * crate::rewards::tar2(anchor_count, reward)
        + reward.gamma.max(0.0) * tar3_max
}
