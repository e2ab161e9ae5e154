//! Experiment drivers that persist artifacts: reputation traces, training
//! runs (log, checkpoint, summary), greedy evaluation, and plot-ready CSV
//! bundles assembled from previously written logs.
//!
//! Every CSV has a header row; floats print in Rust's shortest-round-trip
//! form, so identical runs produce byte-identical files. Artifact file names
//! are part of the interface: downstream tooling and the bundle assembler
//! look them up by name in the run's output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{self, Agent, Checkpoint, EpisodeRecord, Mode};
use crate::config::{AttackProfile, ExperimentConfig};
use crate::error::{Result, SimError};
use crate::reputation::{synth_feedback, ReputationTable};
use crate::rng::stream;

/// Training log header. The column order is a stable interface; the bundle
/// assembler and the acceptance checks parse it back.
pub const TRAINING_HEADER: &str =
    "episode,mean_latency_norm,dos_rate,dual,critic_loss_r,critic_loss_c,actor_obj";

/// `{mode}` or `{mode}_attacks`: the artifact name component that keys one
/// training scenario.
pub fn run_tag(mode: Mode, attacks: bool) -> String {
    if attacks {
        format!("{}_attacks", mode.as_str())
    } else {
        mode.as_str().to_string()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| SimError::io(path.display().to_string(), e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir.display().to_string(), e))
}

/// Reads a previously produced artifact, converting absence into an error
/// that names the command which produces it.
fn read_artifact(path: &Path, produced_by: &str) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(SimError::MissingArtifact(
            format!("{} (produce it with `{produced_by}` into the same --out)", path.display()),
        )),
        Err(e) => Err(SimError::io(path.display().to_string(), e)),
    }
}

/// Simulates one station's reputation under its denial schedule while every
/// other station idles. Returns (slot, reputation) after each slot's update.
pub fn trace_profile(
    cfg: &ExperimentConfig,
    profile: &AttackProfile,
    root_seed: u64,
) -> Vec<(u64, f64)> {
    let mut table = ReputationTable::new(&cfg.reputation);
    let mut rng = stream(root_seed, &format!("reputation/{}", profile.bs_id));
    let slots = cfg.reputation_experiment.slots;
    let mut rows = Vec::with_capacity(slots as usize);
    for slot in 0..slots {
        let fb = synth_feedback(
            profile.bs_id,
            profile.prob_at(slot),
            cfg.reputation.feedback_users,
            cfg.reputation.complaint_report_prob,
            &mut rng,
        );
        table.update_all(&fb);
        rows.push((slot, table.current(profile.bs_id)));
    }
    rows
}

/// Writes one `reputation_bs{id}.csv` per configured profile. Each file has
/// header `slot,bs_id,reputation` and one row per slot.
pub fn run_reputation_experiment(
    cfg: &ExperimentConfig,
    root_seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    let mut paths = Vec::new();
    for profile in cfg.reputation_experiment.effective_profiles() {
        let mut csv = String::from("slot,bs_id,reputation\n");
        for (slot, reputation) in trace_profile(cfg, &profile, root_seed) {
            writeln!(csv, "{slot},{},{reputation}", profile.bs_id).expect("string write");
        }
        let path = out_dir.join(format!("reputation_bs{}.csv", profile.bs_id));
        write_text(&path, &csv)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Windowed aggregates over the last (up to) 10 episodes, plus the final
/// dual price; the machine-readable counterpart of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub mode: String,
    pub attacks: bool,
    pub seed: u64,
    pub episodes: u32,
    /// Episodes actually aggregated (min(10, episodes)).
    pub summary_window: u32,
    pub mean_latency_norm: f64,
    pub dos_rate: f64,
    pub final_dual: f64,
    pub mean_reward: f64,
    pub mean_cost: f64,
}

/// Number of trailing episodes the summary aggregates.
pub const SUMMARY_WINDOW: usize = 10;

impl TrainingSummary {
    pub fn from_records(
        records: &[EpisodeRecord],
        mode: Mode,
        attacks: bool,
        seed: u64,
    ) -> Self {
        let tail_start = records.len().saturating_sub(SUMMARY_WINDOW);
        let tail = &records[tail_start..];
        let n = tail.len().max(1) as f64;
        TrainingSummary {
            mode: mode.as_str().to_string(),
            attacks,
            seed,
            episodes: records.len() as u32,
            summary_window: tail.len() as u32,
            mean_latency_norm: tail.iter().map(|r| r.mean_latency_norm).sum::<f64>() / n,
            dos_rate: tail.iter().map(|r| r.dos_rate).sum::<f64>() / n,
            final_dual: records.last().map_or(0.0, |r| r.dual),
            mean_reward: tail.iter().map(|r| r.mean_reward()).sum::<f64>() / n,
            mean_cost: tail.iter().map(|r| r.mean_cost()).sum::<f64>() / n,
        }
    }
}

/// Files one training run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingArtifacts {
    pub log: PathBuf,
    pub checkpoint: PathBuf,
    pub summary: PathBuf,
}

fn training_log_csv(records: &[EpisodeRecord]) -> String {
    let mut csv = String::from(TRAINING_HEADER);
    csv.push('\n');
    for r in records {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.episode, r.mean_latency_norm, r.dos_rate, r.dual, r.critic_loss_r, r.critic_loss_c,
            r.actor_obj
        )
        .expect("string write");
    }
    csv
}

fn to_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| SimError::Checkpoint(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Trains one scenario and persists `training_{tag}.csv`,
/// `checkpoint_{tag}.json` and `summary_{tag}.json`.
pub fn run_training(
    cfg: &ExperimentConfig,
    mode: Mode,
    attacks: bool,
    root_seed: u64,
    out_dir: &Path,
) -> Result<TrainingArtifacts> {
    ensure_dir(out_dir)?;
    let run = agent::train(cfg, mode, attacks, root_seed)?;
    let tag = run_tag(mode, attacks);

    let log = out_dir.join(format!("training_{tag}.csv"));
    write_text(&log, &training_log_csv(&run.records))?;

    let checkpoint = out_dir.join(format!("checkpoint_{tag}.json"));
    to_json_file(&checkpoint, &run.agent.to_checkpoint(run.records.len() as u32))?;

    let summary_path = out_dir.join(format!("summary_{tag}.json"));
    to_json_file(
        &summary_path,
        &TrainingSummary::from_records(&run.records, mode, attacks, root_seed),
    )?;

    Ok(TrainingArtifacts { log, checkpoint, summary: summary_path })
}

/// Files one evaluation run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalArtifacts {
    pub summary: PathBuf,
    pub trajectory: Option<PathBuf>,
}

/// Loads the scenario's checkpoint, rolls the greedy policy and persists
/// `eval_{tag}.json` plus, when configured, `trajectory_{tag}.jsonl` with one
/// JSON object per slot.
pub fn run_evaluation(
    cfg: &ExperimentConfig,
    mode: Mode,
    attacks: bool,
    root_seed: u64,
    out_dir: &Path,
) -> Result<EvalArtifacts> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    let tag = run_tag(mode, attacks);
    let ck_path = out_dir.join(format!("checkpoint_{tag}.json"));
    let produced_by = if attacks {
        format!("sim train --mode {} --attacks", cli_mode(mode))
    } else {
        format!("sim train --mode {}", cli_mode(mode))
    };
    let ck_text = read_artifact(&ck_path, &produced_by)?;
    let ck: Checkpoint =
        serde_json::from_str(&ck_text).map_err(|e| SimError::Checkpoint(e.to_string()))?;
    let agent = Agent::from_checkpoint(cfg, &ck)?;

    let dump = cfg.run.dump_trajectory;
    let (summary, slots) =
        agent::evaluate(cfg, &agent, attacks, root_seed, cfg.agent.eval_episodes, dump)?;

    let summary_path = out_dir.join(format!("eval_{tag}.json"));
    to_json_file(&summary_path, &summary)?;

    let trajectory = if dump {
        let mut text = String::new();
        for record in &slots {
            let line = serde_json::to_string(record)
                .map_err(|e| SimError::Checkpoint(e.to_string()))?;
            text.push_str(&line);
            text.push('\n');
        }
        let path = out_dir.join(format!("trajectory_{tag}.jsonl"));
        write_text(&path, &text)?;
        Some(path)
    } else {
        None
    };

    Ok(EvalArtifacts { summary: summary_path, trajectory })
}

/// The hyphenated spelling the CLI accepts for a mode.
fn cli_mode(mode: Mode) -> String {
    mode.as_str().replace('_', "-")
}

/// Parses a training log written by `run_training` back into records.
pub fn parse_training_log(path: &Path, produced_by: &str) -> Result<Vec<EpisodeRecord>> {
    let text = read_artifact(path, produced_by)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != TRAINING_HEADER {
        return Err(SimError::Contract(format!(
            "{} does not look like a training log (unexpected header)",
            path.display()
        )));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(SimError::Contract(format!(
                "{} row {} has {} fields, expected 7",
                path.display(),
                idx + 1,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| {
                SimError::Contract(format!(
                    "{} row {} field {} is not a number",
                    path.display(),
                    idx + 1,
                    i
                ))
            })
        };
        records.push(EpisodeRecord {
            episode: num(0)? as u32,
            mean_latency_norm: num(1)?,
            dos_rate: num(2)?,
            dual: num(3)?,
            critic_loss_r: num(4)?,
            critic_loss_c: num(5)?,
            actor_obj: num(6)?,
        });
    }
    Ok(records)
}

/// Assembles the plot-ready bundles from artifacts already present in
/// `out_dir`:
///
/// - `plot_reputation_bs{id}.csv` (`slot,reputation`), one per configured profile;
/// - `plot_latency_by_mode.csv` (`episode,latency_constrained,latency_min_latency,latency_min_dos`);
/// - `plot_dos_by_mode.csv` (`episode,dos_constrained,dos_min_latency,dos_min_dos`);
/// - `plot_reward_cost_attack.csv` (`episode,reward_no_attack,cost_no_attack,reward_attack,cost_attack`);
/// - `plot_dual_attack.csv` (`episode,dual_no_attack,dual_attack`).
///
/// Any missing input fails with an error naming the command that produces it.
pub fn emit_figure_data(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    let mut written = Vec::new();

    // Reputation bundle: exactly one series per configured profile.
    for profile in cfg.reputation_experiment.effective_profiles() {
        let src = out_dir.join(format!("reputation_bs{}.csv", profile.bs_id));
        let text = read_artifact(&src, "sim reputation")?;
        let mut csv = String::from("slot,reputation\n");
        for line in text.lines().skip(1) {
            let mut fields = line.split(',');
            let slot = fields.next().unwrap_or_default();
            let _bs = fields.next();
            let reputation = fields.next().unwrap_or_default();
            writeln!(csv, "{slot},{reputation}").expect("string write");
        }
        let dst = out_dir.join(format!("plot_reputation_bs{}.csv", profile.bs_id));
        write_text(&dst, &csv)?;
        written.push(dst);
    }

    // Mode comparison: per-episode latency and denial rate across the three
    // objectives, truncated to the shortest log.
    let log_for = |mode: Mode, attacks: bool| -> Result<Vec<EpisodeRecord>> {
        let tag = run_tag(mode, attacks);
        let flag = if attacks { " --attacks" } else { "" };
        parse_training_log(
            &out_dir.join(format!("training_{tag}.csv")),
            &format!("sim train --mode {}{flag}", cli_mode(mode)),
        )
    };
    let constrained = log_for(Mode::Constrained, false)?;
    let min_latency = log_for(Mode::MinLatency, false)?;
    let min_dos = log_for(Mode::MinDos, false)?;

    let mut latency_csv = String::from("episode,latency_constrained,latency_min_latency,latency_min_dos\n");
    let mut dos_csv = String::from("episode,dos_constrained,dos_min_latency,dos_min_dos\n");
    for ((c, ml), md) in constrained.iter().zip(&min_latency).zip(&min_dos) {
        writeln!(
            latency_csv,
            "{},{},{},{}",
            c.episode, c.mean_latency_norm, ml.mean_latency_norm, md.mean_latency_norm
        )
        .expect("string write");
        writeln!(dos_csv, "{},{},{},{}", c.episode, c.dos_rate, ml.dos_rate, md.dos_rate)
            .expect("string write");
    }
    for (name, text) in
        [("plot_latency_by_mode.csv", latency_csv), ("plot_dos_by_mode.csv", dos_csv)]
    {
        let path = out_dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
    }

    // Convergence with and without the denial attack (constrained mode).
    let attacked = log_for(Mode::Constrained, true)?;
    let mut reward_cost_csv =
        String::from("episode,reward_no_attack,cost_no_attack,reward_attack,cost_attack\n");
    let mut dual_csv = String::from("episode,dual_no_attack,dual_attack\n");
    for (clean, atk) in constrained.iter().zip(&attacked) {
        writeln!(
            reward_cost_csv,
            "{},{},{},{},{}",
            clean.episode,
            clean.mean_reward(),
            clean.mean_cost(),
            atk.mean_reward(),
            atk.mean_cost()
        )
        .expect("string write");
        writeln!(dual_csv, "{},{},{}", clean.episode, clean.dual, atk.dual).expect("string write");
    }
    for (name, text) in
        [("plot_reward_cost_attack.csv", reward_cost_csv), ("plot_dual_attack.csv", dual_csv)]
    {
        let path = out_dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
    }

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.agent.episodes = 2;
        cfg.agent.slots_per_episode = 30;
        cfg.agent.batch_size = 8;
        cfg.agent.warmup_transitions = Some(16);
        cfg.agent.replay_capacity = 1000;
        cfg.agent.eval_episodes = 1;
        cfg.reputation_experiment.slots = 50;
        cfg
    }

    #[test]
    fn reputation_experiment_writes_one_csv_per_profile() {
        let dir = TempDir::new().unwrap();
        let cfg = tiny_cfg();
        let paths = run_reputation_experiment(&cfg, 7, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        for path in &paths {
            let text = fs::read_to_string(path).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some("slot,bs_id,reputation"));
            assert_eq!(lines.count(), 50);
        }
    }

    #[test]
    fn clean_profile_trace_stays_high() {
        let cfg = tiny_cfg();
        let rows = trace_profile(&cfg, &AttackProfile::constant(0, 0.0), 11);
        assert!(rows.iter().all(|&(_, rep)| rep >= 0.95), "clean station dipped");
    }

    #[test]
    fn dynamic_profile_reverses_direction_after_each_breakpoint() {
        let mut cfg = tiny_cfg();
        cfg.reputation_experiment.slots = 1000;
        let profile = cfg.reputation_experiment.effective_profiles().pop().unwrap();
        assert_eq!(profile.schedule.len(), 4);
        let rows = trace_profile(&cfg, &profile, 3);
        // Compare the trace change over the 100 slots after each breakpoint
        // with the 50 slots before it: raising the denial rate must push
        // reputation down and lowering it must pull reputation up.
        for window in profile.schedule.windows(2) {
            let (prev, step) = (&window[0], &window[1]);
            let at = step.from_slot as usize;
            let before = rows[at - 1].1;
            let after = rows[(at + 100).min(rows.len() - 1)].1;
            if step.prob > prev.prob {
                assert!(after < before, "denial rise at {at}: {before} -> {after}");
            } else {
                assert!(after > before, "denial drop at {at}: {before} -> {after}");
            }
        }
    }

    #[test]
    fn training_artifacts_have_the_documented_shape() {
        let dir = TempDir::new().unwrap();
        let cfg = tiny_cfg();
        let arts = run_training(&cfg, Mode::Constrained, false, 5, dir.path()).unwrap();

        let log = fs::read_to_string(&arts.log).unwrap();
        let mut lines = log.lines();
        assert_eq!(lines.next(), Some(TRAINING_HEADER));
        assert_eq!(lines.count(), 2);

        let ck: Checkpoint =
            serde_json::from_str(&fs::read_to_string(&arts.checkpoint).unwrap()).unwrap();
        assert_eq!(ck.episode, 2);
        assert!(Agent::from_checkpoint(&cfg, &ck).is_ok());

        let summary: TrainingSummary =
            serde_json::from_str(&fs::read_to_string(&arts.summary).unwrap()).unwrap();
        assert_eq!(summary.mode, "constrained");
        assert_eq!(summary.episodes, 2);
        assert_eq!(summary.summary_window, 2);
        assert!(summary.dos_rate >= 0.0 && summary.dos_rate <= 1.0);
    }

    #[test]
    fn training_log_round_trips_through_the_parser() {
        let dir = TempDir::new().unwrap();
        let cfg = tiny_cfg();
        let arts = run_training(&cfg, Mode::MinDos, false, 6, dir.path()).unwrap();
        let records = parse_training_log(&arts.log, "sim train").unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].episode, 0);
        assert_eq!(records[1].episode, 1);
    }

    #[test]
    fn summary_windows_the_last_ten_episodes() {
        let rec = |episode: u32, dos: f64| EpisodeRecord {
            episode,
            mean_latency_norm: 0.5,
            dos_rate: dos,
            dual: 0.25,
            critic_loss_r: 0.0,
            critic_loss_c: 0.0,
            actor_obj: 0.0,
        };
        let records: Vec<EpisodeRecord> =
            (0..30).map(|e| rec(e, if e < 20 { 1.0 } else { 0.0 })).collect();
        let s = TrainingSummary::from_records(&records, Mode::Constrained, false, 1);
        assert_eq!(s.summary_window, 10);
        assert_eq!(s.dos_rate, 0.0);
        assert_eq!(s.final_dual, 0.25);
        assert_eq!(s.mean_cost, 0.0);
        assert!((s.mean_reward - -0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluation_requires_a_checkpoint() {
        let dir = TempDir::new().unwrap();
        let cfg = tiny_cfg();
        let err = run_evaluation(&cfg, Mode::Constrained, false, 5, dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("checkpoint_constrained.json"), "got: {msg}");
        assert!(msg.contains("sim train --mode constrained"), "got: {msg}");
    }

    #[test]
    fn evaluation_writes_summary_and_optional_trajectory() {
        let dir = TempDir::new().unwrap();
        let mut cfg = tiny_cfg();
        run_training(&cfg, Mode::Constrained, false, 5, dir.path()).unwrap();

        let arts = run_evaluation(&cfg, Mode::Constrained, false, 9, dir.path()).unwrap();
        assert!(arts.trajectory.is_none());
        let summary: agent::EvalSummary =
            serde_json::from_str(&fs::read_to_string(&arts.summary).unwrap()).unwrap();
        assert_eq!(summary.episodes, 1);

        cfg.run.dump_trajectory = true;
        let arts = run_evaluation(&cfg, Mode::Constrained, false, 9, dir.path()).unwrap();
        let traj_path = arts.trajectory.expect("trajectory requested");
        let text = fs::read_to_string(&traj_path).unwrap();
        assert_eq!(text.lines().count(), 30);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["slot", "action", "reward", "cost", "latency", "avail_frac", "backlog_frac"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn emit_names_the_missing_run() {
        let dir = TempDir::new().unwrap();
        let cfg = tiny_cfg();
        let err = emit_figure_data(&cfg, dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sim reputation"), "got: {msg}");

        run_reputation_experiment(&cfg, 7, dir.path()).unwrap();
        let err = emit_figure_data(&cfg, dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("training_constrained.csv"), "got: {msg}");
        assert!(msg.contains("sim train --mode constrained"), "got: {msg}");
    }

    #[test]
    fn emit_assembles_every_bundle() {
        let dir = TempDir::new().unwrap();
        let cfg = tiny_cfg();
        run_reputation_experiment(&cfg, 7, dir.path()).unwrap();
        for (mode, attacks) in [
            (Mode::Constrained, false),
            (Mode::MinLatency, false),
            (Mode::MinDos, false),
            (Mode::Constrained, true),
        ] {
            run_training(&cfg, mode, attacks, 5, dir.path()).unwrap();
        }
        let written = emit_figure_data(&cfg, dir.path()).unwrap();
        assert_eq!(written.len(), 8);

        let dos = fs::read_to_string(dir.path().join("plot_dos_by_mode.csv")).unwrap();
        let mut lines = dos.lines();
        assert_eq!(lines.next(), Some("episode,dos_constrained,dos_min_latency,dos_min_dos"));
        assert_eq!(lines.count(), 2);

        let rep = fs::read_to_string(dir.path().join("plot_reputation_bs3.csv")).unwrap();
        assert_eq!(rep.lines().next(), Some("slot,reputation"));

        let dual = fs::read_to_string(dir.path().join("plot_dual_attack.csv")).unwrap();
        assert_eq!(dual.lines().next(), Some("episode,dual_no_attack,dual_attack"));
    }

    #[test]
    fn identical_seed_and_config_reproduce_files_byte_for_byte() {
        let cfg = tiny_cfg();
        let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        for dir in [&a, &b] {
            run_reputation_experiment(&cfg, 7, dir.path()).unwrap();
            run_training(&cfg, Mode::Constrained, true, 5, dir.path()).unwrap();
        }
        for name in ["reputation_bs0.csv", "training_constrained_attacks.csv"] {
            let left = fs::read(a.path().join(name)).unwrap();
            let right = fs::read(b.path().join(name)).unwrap();
            assert_eq!(left, right, "{name} differs between identical runs");
        }
    }
}
