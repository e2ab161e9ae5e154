//! Constrained actor-critic allocator: dead-zone action mapping, exploration
//! noise, replay, twin temporal-difference critics, the priced policy
//! gradient, projected dual ascent, target tracking, and the full training
//! and greedy-evaluation loops.
//!
//! Three modes share one pipeline. `Constrained` maximizes reward subject to
//! the discounted denial budget via the dual variable; `MinLatency` pins the
//! dual at zero (pure reward); `MinDos` replaces the stored reward with the
//! negated denial indicator (pure cost avoidance). The denial budget is
//! expressed against long-term discounted cost: eps_max/(1 - gamma_cost).

use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::env::{Env, ReducedState};
use crate::error::{Result, SimError};
use crate::nn::{soft_update, Activation, DenseNet, OptState};
use crate::reputation::{assign_miner, malicious_denies, synth_feedback, ReputationTable};
use crate::rng::{labels, stream};

/// Training objective variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Constrained,
    MinLatency,
    MinDos,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Constrained => "constrained",
            Mode::MinLatency => "min_latency",
            Mode::MinDos => "min_dos",
        }
    }

    /// Parses both snake_case and kebab-case spellings.
    pub fn parse(text: &str) -> Result<Mode> {
        match text.replace('-', "_").as_str() {
            "constrained" => Ok(Mode::Constrained),
            "min_latency" => Ok(Mode::MinLatency),
            "min_dos" => Ok(Mode::MinDos),
            other => Err(SimError::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Projects a raw policy output onto the mixed action space {0} U
/// [min_alloc, min(capacity, avail)]. Anything below the granularity, or any
/// slot without a granule of free capacity, becomes a denial.
pub fn map_action(u_noisy: f64, avail: f64, min_alloc: f64, capacity: f64) -> f64 {
    let u = u_noisy.clamp(0.0, 1.0);
    let candidate = u * capacity;
    if candidate < min_alloc || avail < min_alloc {
        return 0.0;
    }
    candidate.min(avail)
}

/// One replay record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; 2],
    /// Behavior-policy raw action in [0, 1], before dead-zone mapping.
    pub action_raw: f64,
    pub reward: f64,
    pub cost: f64,
    pub next_state: [f64; 2],
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { data: Vec::with_capacity(capacity.min(1 << 20)), capacity, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform-with-replacement minibatch, packed into matrices.
    pub fn sample(&self, m: usize, rng: &mut ChaCha12Rng) -> Result<BatchArrays> {
        if self.data.len() < m {
            return Err(SimError::Contract(format!(
                "sampling {m} from a buffer of {}",
                self.data.len()
            )));
        }
        let mut states = Array2::zeros((m, 2));
        let mut actions = Array2::zeros((m, 1));
        let mut rewards = Array2::zeros((m, 1));
        let mut costs = Array2::zeros((m, 1));
        let mut next_states = Array2::zeros((m, 2));
        for row in 0..m {
            let t = &self.data[rng.gen_range(0..self.data.len())];
            states[[row, 0]] = t.state[0];
            states[[row, 1]] = t.state[1];
            actions[[row, 0]] = t.action_raw;
            rewards[[row, 0]] = t.reward;
            costs[[row, 0]] = t.cost;
            next_states[[row, 0]] = t.next_state[0];
            next_states[[row, 1]] = t.next_state[1];
        }
        Ok(BatchArrays { states, actions, rewards, costs, next_states })
    }
}

/// A minibatch in matrix form: one row per transition.
#[derive(Debug, Clone)]
pub struct BatchArrays {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub costs: Array2<f64>,
    pub next_states: Array2<f64>,
}

/// Mean-reverting exploration noise with a linearly annealed scale.
#[derive(Debug, Clone)]
pub struct OuNoise {
    value: f64,
    theta: f64,
    sigma_start: f64,
    sigma_final: f64,
}

impl OuNoise {
    pub fn new(theta: f64, sigma_start: f64, sigma_final: f64) -> Self {
        OuNoise { value: 0.0, theta, sigma_start, sigma_final }
    }

    /// Clears accumulated drift at an episode boundary.
    pub fn reset(&mut self) {
        self.value = 0.0;
    }

    pub fn sigma_at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.sigma_start + (self.sigma_final - self.sigma_start) * p
    }

    /// Advances the process one slot; `progress` in [0, 1] positions the
    /// scale on its linear decay schedule.
    pub fn sample(&mut self, progress: f64, rng: &mut ChaCha12Rng) -> f64 {
        let gauss: f64 = rng.sample(StandardNormal);
        self.value += self.theta * (0.0 - self.value) + self.sigma_at(progress) * gauss;
        self.value
    }
}

/// Nonnegative constraint price under projected gradient ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub lr: f64,
    /// Long-term discounted denial budget.
    pub budget: f64,
}

impl DualState {
    pub fn new(lr: f64, budget: f64) -> Self {
        DualState { lambda: 0.0, lr, budget }
    }

    /// Raises the price when predicted long-term cost exceeds the budget,
    /// never dropping below zero.
    pub fn update(&mut self, mean_predicted_cost: f64) {
        self.lambda = (self.lambda + self.lr * (mean_predicted_cost - self.budget)).max(0.0);
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub critic_loss_r: f64,
    pub critic_loss_c: f64,
    pub actor_obj: f64,
    pub predicted_cost: f64,
}

/// Networks, optimizers and the dual variable for one training run.
#[derive(Debug, Clone)]
pub struct Agent {
    pub mode: Mode,
    actor: DenseNet,
    actor_target: DenseNet,
    critic_r: DenseNet,
    critic_r_target: DenseNet,
    critic_c: DenseNet,
    critic_c_target: DenseNet,
    opt_actor: OptState,
    opt_critic_r: OptState,
    opt_critic_c: OptState,
    pub dual: DualState,
    gamma_r: f64,
    gamma_c: f64,
    lr_actor: f64,
    lr_critic_r: f64,
    lr_critic_c: f64,
    grad_clip: f64,
    polyak: f64,
}

const HIDDEN: usize = 64;

impl Agent {
    pub fn new(cfg: &ExperimentConfig, mode: Mode, rng: &mut ChaCha12Rng) -> Self {
        let a = &cfg.agent;
        let critic_dims = [3, HIDDEN, HIDDEN, 1];
        let critic_acts = [Activation::Rectifier, Activation::Rectifier, Activation::Identity];
        let actor_dims = [2, HIDDEN, HIDDEN, 1];
        let actor_acts = [Activation::Rectifier, Activation::Rectifier, Activation::Sigmoid];

        let mut actor = DenseNet::init(&actor_dims, &actor_acts, rng);
        actor.reinit_final(3e-3, rng);
        let critic_r = DenseNet::init(&critic_dims, &critic_acts, rng);
        let critic_c = DenseNet::init(&critic_dims, &critic_acts, rng);

        let use_adam = a.optimizer == crate::config::Optimizer::Adam;
        Agent {
            mode,
            actor_target: actor.clone(),
            critic_r_target: critic_r.clone(),
            critic_c_target: critic_c.clone(),
            opt_actor: OptState::new(&actor, use_adam),
            opt_critic_r: OptState::new(&critic_r, use_adam),
            opt_critic_c: OptState::new(&critic_c, use_adam),
            actor,
            critic_r,
            critic_c,
            dual: DualState::new(a.lr_dual, a.dual_budget()),
            gamma_r: a.gamma_reward,
            gamma_c: a.gamma_cost,
            lr_actor: a.lr_actor,
            lr_critic_r: a.lr_critic_reward,
            lr_critic_c: a.lr_critic_cost,
            grad_clip: a.grad_clip,
            polyak: a.polyak,
        }
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut DenseNet {
        &mut self.actor
    }

    pub fn critic_r(&self) -> &DenseNet {
        &self.critic_r
    }

    pub fn critic_c(&self) -> &DenseNet {
        &self.critic_c
    }

    /// Greedy raw action for one state.
    pub fn act_raw(&self, state: ReducedState) -> f64 {
        self.actor.forward_one(&state.as_array())[0]
    }

    /// Bootstrapped targets from the target networks: one-step return plus
    /// the discounted target-critic value at the target policy's action.
    pub fn td_targets(&self, batch: &BatchArrays) -> (Array2<f64>, Array2<f64>) {
        let next_actions = self.actor_target.forward(batch.next_states.view());
        let next_sa =
            concatenate(Axis(1), &[batch.next_states.view(), next_actions.view()]).expect("shapes");
        let qr = self.critic_r_target.forward(next_sa.view());
        let qc = self.critic_c_target.forward(next_sa.view());
        let y_r = &batch.rewards + &(qr * self.gamma_r);
        let y_c = &batch.costs + &(qc * self.gamma_c);
        (y_r, y_c)
    }

    fn fit_critic(
        net: &mut DenseNet,
        opt: &mut OptState,
        sa: &Array2<f64>,
        targets: &Array2<f64>,
        lr: f64,
        clip: f64,
    ) -> Result<f64> {
        let m = sa.nrows() as f64;
        let trace = net.forward_trace(sa.clone());
        let residual = trace.output() - targets;
        let loss = residual.mapv(|r| r * r).mean().expect("nonempty batch");
        // Check before stepping so a blown-up loss cannot corrupt the net.
        if !loss.is_finite() {
            return Err(SimError::NonFinite("critic loss".into()));
        }
        let seed = residual.mapv(|r| 2.0 * r / m);
        let (mut tape, _) = net.backward(&trace, &seed)?;
        tape.clip_global_norm(clip);
        opt.step(net, &tape, lr);
        Ok(loss)
    }

    /// One squared-error step on each critic against the given targets.
    /// Returns the pre-step losses.
    pub fn critic_update(
        &mut self,
        batch: &BatchArrays,
        y_r: &Array2<f64>,
        y_c: &Array2<f64>,
    ) -> Result<(f64, f64)> {
        let sa = concatenate(Axis(1), &[batch.states.view(), batch.actions.view()]).expect("shapes");
        let loss_r = Self::fit_critic(
            &mut self.critic_r,
            &mut self.opt_critic_r,
            &sa,
            y_r,
            self.lr_critic_r,
            self.grad_clip,
        )?;
        let loss_c = Self::fit_critic(
            &mut self.critic_c,
            &mut self.opt_critic_c,
            &sa,
            y_c,
            self.lr_critic_c,
            self.grad_clip,
        )?;
        Ok((loss_r, loss_c))
    }

    /// Ascends the priced objective mean(Q_R - lambda * Q_C) through the
    /// critics' action inputs. Returns (pre-step objective, pre-step mean
    /// predicted long-term cost) evaluated at the current policy.
    pub fn actor_update(&mut self, states: &Array2<f64>) -> Result<(f64, f64)> {
        let m = states.nrows() as f64;
        let actor_trace = self.actor.forward_trace(states.clone());
        let actions = actor_trace.output().clone();
        let sa = concatenate(Axis(1), &[states.view(), actions.view()]).expect("shapes");

        let mean_seed = Array2::from_elem((states.nrows(), 1), 1.0 / m);
        let trace_r = self.critic_r.forward_trace(sa.clone());
        let (_, input_grad_r) = self.critic_r.backward(&trace_r, &mean_seed)?;
        let trace_c = self.critic_c.forward_trace(sa);
        let (_, input_grad_c) = self.critic_c.backward(&trace_c, &mean_seed)?;

        let q_r_mean = trace_r.output().mean().expect("nonempty");
        let q_c_mean = trace_c.output().mean().expect("nonempty");
        let objective = q_r_mean - self.dual.lambda * q_c_mean;
        if !objective.is_finite() {
            return Err(SimError::NonFinite("actor objective".into()));
        }

        // d(objective)/d(action), one row per sample; the optimizer descends,
        // so the seed is negated to ascend.
        let action_col_r = input_grad_r.column(2).insert_axis(Axis(1)).to_owned();
        let action_col_c = input_grad_c.column(2).insert_axis(Axis(1)).to_owned();
        let ascent_seed = action_col_c * self.dual.lambda - action_col_r;
        let (mut tape, _) = self.actor.backward(&actor_trace, &ascent_seed)?;
        tape.clip_global_norm(self.grad_clip);
        self.opt_actor.step(&mut self.actor, &tape, self.lr_actor);

        Ok((objective, q_c_mean))
    }

    /// One full update: critics, actor, dual price (constrained mode only),
    /// then target blends.
    pub fn train_step(&mut self, batch: &BatchArrays) -> Result<StepStats> {
        let (y_r, y_c) = self.td_targets(batch);
        let (critic_loss_r, critic_loss_c) = self.critic_update(batch, &y_r, &y_c)?;
        let (actor_obj, predicted_cost) = self.actor_update(&batch.states)?;
        if self.mode == Mode::Constrained {
            // The dual ascends on the cost critic's prediction at the policy
            // evaluated just before this step's actor change.
            self.dual.update(predicted_cost);
        }
        soft_update(&mut self.actor_target, &self.actor, self.polyak)?;
        soft_update(&mut self.critic_r_target, &self.critic_r, self.polyak)?;
        soft_update(&mut self.critic_c_target, &self.critic_c, self.polyak)?;
        Ok(StepStats { critic_loss_r, critic_loss_c, actor_obj, predicted_cost })
    }

    pub fn to_checkpoint(&self, episode: u32) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            mode: self.mode,
            episode,
            dual: self.dual,
            actor: self.actor.clone(),
            actor_target: self.actor_target.clone(),
            critic_reward: self.critic_r.clone(),
            critic_reward_target: self.critic_r_target.clone(),
            critic_cost: self.critic_c.clone(),
            critic_cost_target: self.critic_c_target.clone(),
            opt_actor: self.opt_actor.clone(),
            opt_critic_reward: self.opt_critic_r.clone(),
            opt_critic_cost: self.opt_critic_c.clone(),
        }
    }

    /// Rebuilds an agent from a checkpoint, adopting the stored nets,
    /// optimizer moments and dual price.
    pub fn from_checkpoint(cfg: &ExperimentConfig, ck: &Checkpoint) -> Result<Agent> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(SimError::Checkpoint(format!(
                "version {} not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let mut rng = stream(0, labels::WEIGHTS);
        let mut agent = Agent::new(cfg, ck.mode, &mut rng);
        agent.actor = ck.actor.clone();
        agent.actor_target = ck.actor_target.clone();
        agent.critic_r = ck.critic_reward.clone();
        agent.critic_r_target = ck.critic_reward_target.clone();
        agent.critic_c = ck.critic_cost.clone();
        agent.critic_c_target = ck.critic_cost_target.clone();
        agent.opt_actor = ck.opt_actor.clone();
        agent.opt_critic_r = ck.opt_critic_reward.clone();
        agent.opt_critic_c = ck.opt_critic_cost.clone();
        agent.dual = ck.dual;
        Ok(agent)
    }

    fn assert_finite(&self) -> Result<()> {
        self.actor.assert_finite("actor")?;
        self.critic_r.assert_finite("reward critic")?;
        self.critic_c.assert_finite("cost critic")?;
        Ok(())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Lossless container for everything a run needs to resume or evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub mode: Mode,
    pub episode: u32,
    pub dual: DualState,
    pub actor: DenseNet,
    pub actor_target: DenseNet,
    pub critic_reward: DenseNet,
    pub critic_reward_target: DenseNet,
    pub critic_cost: DenseNet,
    pub critic_cost_target: DenseNet,
    pub opt_actor: OptState,
    pub opt_critic_reward: OptState,
    pub opt_critic_cost: OptState,
}

/// One training episode's aggregates; the training CSV rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u32,
    /// Mean latency/tau_max over served slots (0 when every slot denied).
    pub mean_latency_norm: f64,
    /// Fraction of slots with zero allocation.
    pub dos_rate: f64,
    pub dual: f64,
    pub critic_loss_r: f64,
    pub critic_loss_c: f64,
    pub actor_obj: f64,
}

impl EpisodeRecord {
    /// Episode-mean reward recovered from the logged aggregates.
    pub fn mean_reward(&self) -> f64 {
        -self.mean_latency_norm * (1.0 - self.dos_rate)
    }

    pub fn mean_cost(&self) -> f64 {
        self.dos_rate
    }
}

/// A finished training run.
pub struct TrainRun {
    pub records: Vec<EpisodeRecord>,
    pub agent: Agent,
}

/// Shared per-slot mechanics: committee, miner draw, forced denial, action
/// mapping, environment step and reputation feedback.
struct SlotEngine {
    reputation: ReputationTable,
    malicious: Vec<usize>,
    deny_prob: f64,
    attacks: bool,
    feedback_users: usize,
    complaint_report_prob: f64,
}

struct SlotResult {
    chosen_raw: f64,
    outcome: crate::env::StepOutcome,
}

impl SlotEngine {
    fn new(cfg: &ExperimentConfig, attacks: bool) -> Self {
        SlotEngine {
            reputation: ReputationTable::new(&cfg.reputation),
            malicious: cfg.attack.malicious_ids.clone(),
            deny_prob: cfg.attack.deny_prob,
            attacks,
            feedback_users: cfg.reputation.feedback_users,
            complaint_report_prob: cfg.reputation.complaint_report_prob,
        }
    }

    fn reset(&mut self, cfg: &ExperimentConfig) {
        self.reputation = ReputationTable::new(&cfg.reputation);
    }

    /// Runs one slot given the policy's raw action. Returns the clamped raw
    /// action the policy chose and the step outcome. A forced malicious
    /// denial executes rate 0 regardless of that action; the replay keeps
    /// the chosen action so the critics see the denial as environment
    /// stochasticity rather than a low allocation.
    fn run_slot(
        &mut self,
        env: &mut Env,
        u_policy: f64,
        miner_rng: &mut ChaCha12Rng,
        attack_rng: &mut ChaCha12Rng,
        feedback_rng: &mut ChaCha12Rng,
    ) -> Result<SlotResult> {
        // Committee election can legitimately come up empty once every
        // station has tripped the threshold; the cell still needs a miner,
        // so fall back to the best-reputation station.
        let committee = match self.reputation.select_committee() {
            Ok(c) => c,
            Err(SimError::EmptyCommittee) => vec![self.reputation.best_effort_leader()],
            Err(e) => return Err(e),
        };
        let miner = assign_miner(&committee, miner_rng)?;

        let forced_denial = self.attacks
            && self.malicious.contains(&miner)
            && malicious_denies(self.deny_prob, attack_rng);
        let chosen_raw = u_policy.clamp(0.0, 1.0);
        let executed_raw = if forced_denial { 0.0 } else { chosen_raw };

        let cfg = env.config();
        let rate = map_action(executed_raw, env.available(), cfg.min_alloc, cfg.capacity);
        let batch = env.sample_arrivals();
        let outcome = env.step(&batch, rate)?;

        // Users experience the slot as served or denied; denial complaints
        // reach the ledger with the configured probability.
        let denied = if outcome.cost > 0.5 { 1.0 } else { 0.0 };
        let fb = synth_feedback(
            miner,
            denied,
            self.feedback_users,
            self.complaint_report_prob,
            feedback_rng,
        );
        self.reputation.update_all(&fb);

        Ok(SlotResult { chosen_raw, outcome })
    }
}

/// Runs the full training loop. All randomness derives from `root_seed`
/// through labeled streams, so a (config, seed, mode, attacks) tuple pins
/// the entire trajectory.
pub fn train(cfg: &ExperimentConfig, mode: Mode, attacks: bool, root_seed: u64) -> Result<TrainRun> {
    cfg.validate()?;
    let mut weights_rng = stream(root_seed, labels::WEIGHTS);
    let mut noise_rng = stream(root_seed, labels::NOISE);
    let mut replay_rng = stream(root_seed, labels::REPLAY);
    let mut miner_rng = stream(root_seed, labels::MINER);
    let mut attack_rng = stream(root_seed, labels::ATTACK);
    let mut feedback_rng = stream(root_seed, labels::FEEDBACK);

    let mut env = Env::new(cfg.env.clone(), stream(root_seed, labels::ARRIVALS));
    let mut agent = Agent::new(cfg, mode, &mut weights_rng);
    let mut buffer = ReplayBuffer::new(cfg.agent.replay_capacity);
    let mut noise = OuNoise::new(cfg.agent.ou_theta, cfg.agent.ou_sigma, cfg.agent.ou_sigma_final);
    let mut engine = SlotEngine::new(cfg, attacks);

    let episodes = cfg.agent.episodes;
    let slots = cfg.agent.slots_per_episode as u64;
    let total_steps = (episodes as u64 * slots).max(1);
    let warmup = cfg.agent.warmup();
    let mut global_step = 0u64;

    let mut records = Vec::with_capacity(episodes as usize);
    for episode in 0..episodes {
        env.reset();
        engine.reset(cfg);
        noise.reset();

        let mut latency_sum = 0.0;
        let mut served = 0u64;
        let mut denials = 0u64;
        let mut loss_r_sum = 0.0;
        let mut loss_c_sum = 0.0;
        let mut obj_sum = 0.0;
        let mut trained_steps = 0u64;

        for _ in 0..slots {
            let state = env.observe();
            let progress = global_step as f64 / total_steps as f64;
            let u_policy = agent.act_raw(state) + noise.sample(progress, &mut noise_rng);
            let slot = engine.run_slot(
                &mut env,
                u_policy,
                &mut miner_rng,
                &mut attack_rng,
                &mut feedback_rng,
            )?;
            let out = &slot.outcome;

            let stored_reward = match mode {
                Mode::MinDos => -out.cost,
                _ => out.reward,
            };
            buffer.push(Transition {
                state: state.as_array(),
                action_raw: slot.chosen_raw,
                reward: stored_reward,
                cost: out.cost,
                next_state: out.next_state.as_array(),
            });

            if out.cost > 0.5 {
                denials += 1;
            } else {
                latency_sum += out.latency_slots / env.tau_max();
                served += 1;
            }

            if buffer.len() >= warmup {
                let batch = buffer.sample(cfg.agent.batch_size, &mut replay_rng)?;
                let stats = agent.train_step(&batch)?;
                loss_r_sum += stats.critic_loss_r;
                loss_c_sum += stats.critic_loss_c;
                obj_sum += stats.actor_obj;
                trained_steps += 1;
            }
            global_step += 1;
        }

        agent.assert_finite()?;
        let denom = trained_steps.max(1) as f64;
        records.push(EpisodeRecord {
            episode,
            mean_latency_norm: if served > 0 { latency_sum / served as f64 } else { 0.0 },
            dos_rate: denials as f64 / slots as f64,
            dual: agent.dual.lambda,
            critic_loss_r: loss_r_sum / denom,
            critic_loss_c: loss_c_sum / denom,
            actor_obj: obj_sum / denom,
        });
    }

    Ok(TrainRun { records, agent })
}

/// One evaluation slot, as dumped to the optional trajectory log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub action: f64,
    pub reward: f64,
    pub cost: f64,
    pub latency: f64,
    pub avail_frac: f64,
    pub backlog_frac: f64,
}

/// Aggregates over greedy evaluation rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: u32,
    pub slots_per_episode: u32,
    pub mean_latency_norm: f64,
    pub dos_rate: f64,
    pub mean_reward: f64,
    pub mean_cost: f64,
}

/// Greedy rollouts (no exploration, no learning) of a trained policy under
/// the same slot mechanics as training. Returns the summary and, when
/// `dump_slots` is set, every slot record.
pub fn evaluate(
    cfg: &ExperimentConfig,
    agent: &Agent,
    attacks: bool,
    root_seed: u64,
    episodes: u32,
    dump_slots: bool,
) -> Result<(EvalSummary, Vec<SlotRecord>)> {
    cfg.validate()?;
    let eval_label = |base: &str| format!("{}/{base}", labels::EVAL);
    let mut miner_rng = stream(root_seed, &eval_label(labels::MINER));
    let mut attack_rng = stream(root_seed, &eval_label(labels::ATTACK));
    let mut feedback_rng = stream(root_seed, &eval_label(labels::FEEDBACK));
    let mut env = Env::new(cfg.env.clone(), stream(root_seed, &eval_label(labels::ARRIVALS)));
    let mut engine = SlotEngine::new(cfg, attacks);

    let slots = cfg.agent.slots_per_episode as u64;
    let mut latency_sum = 0.0;
    let mut served = 0u64;
    let mut denials = 0u64;
    let mut reward_sum = 0.0;
    let mut trajectory = Vec::new();

    for _ in 0..episodes {
        env.reset();
        engine.reset(cfg);
        for slot in 0..slots {
            let state = env.observe();
            let u_policy = agent.act_raw(state);
            let result = engine.run_slot(
                &mut env,
                u_policy,
                &mut miner_rng,
                &mut attack_rng,
                &mut feedback_rng,
            )?;
            let out = &result.outcome;
            if out.cost > 0.5 {
                denials += 1;
            } else {
                latency_sum += out.latency_slots / env.tau_max();
                served += 1;
            }
            reward_sum += out.reward;
            if dump_slots {
                trajectory.push(SlotRecord {
                    slot,
                    action: out.rate,
                    reward: out.reward,
                    cost: out.cost,
                    latency: out.latency_slots,
                    avail_frac: state.avail_frac,
                    backlog_frac: state.backlog_frac,
                });
            }
        }
    }

    let total = (episodes as u64 * slots).max(1) as f64;
    let summary = EvalSummary {
        episodes,
        slots_per_episode: cfg.agent.slots_per_episode,
        mean_latency_norm: if served > 0 { latency_sum / served as f64 } else { 0.0 },
        dos_rate: denials as f64 / total,
        mean_reward: reward_sum / total,
        mean_cost: denials as f64 / total,
    };
    Ok((summary, trajectory))
}

/// Discounted suffix sums: out[t] = sum_k gamma^k * values[t+k]. The tail of
/// the output is truncation-biased; estimators should drop it.
pub fn discounted_suffix_sums(values: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let mut acc = 0.0;
    for (slot, &v) in values.iter().enumerate().rev() {
        acc = v + gamma * acc;
        out[slot] = acc;
    }
    out
}
