//! Domain types shared by every other module: trial records, the IOHMM
//! probability tables, environment stochastics, and their file formats.
//!
//! Probability tables are stored densely over the binary enums but are
//! serialized as explicit entry lists keyed by enum names, so parameter
//! files stay self-describing.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Hidden supervisor trust state.
///
/// `High > Low` under the derived ordering (used only for reporting).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustState {
    Low,
    High,
}

/// Per-trial environment difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    Low,
    High,
}

/// The robot either attempts the trial autonomously or hands it to the
/// supervisor for teleoperation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RobotAction {
    #[serde(rename = "auto")]
    Autonomous,
    #[serde(rename = "assist")]
    SeekAssistance,
}

/// The supervisor either lets an autonomous attempt run or interrupts it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanAction {
    Rely,
    Interrupt,
}

/// Outcome of a trial from the supervisor's viewpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experience {
    Reliable,
    Faulty,
}

macro_rules! binary_enum_impl {
    ($ty:ident, $a:ident, $b:ident) => {
        impl $ty {
            pub const ALL: [$ty; 2] = [$ty::$a, $ty::$b];

            pub fn index(self) -> usize {
                match self {
                    $ty::$a => 0,
                    $ty::$b => 1,
                }
            }

            pub fn other(self) -> Self {
                match self {
                    $ty::$a => $ty::$b,
                    $ty::$b => $ty::$a,
                }
            }
        }
    };
}

binary_enum_impl!(TrustState, Low, High);
binary_enum_impl!(Complexity, Low, High);
binary_enum_impl!(RobotAction, Autonomous, SeekAssistance);
binary_enum_impl!(HumanAction, Rely, Interrupt);
binary_enum_impl!(Experience, Reliable, Faulty);

impl fmt::Display for TrustState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrustState::Low => "low",
            TrustState::High => "high",
        })
    }
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Complexity::Low => "low",
            Complexity::High => "high",
        })
    }
}

impl fmt::Display for RobotAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RobotAction::Autonomous => "auto",
            RobotAction::SeekAssistance => "assist",
        })
    }
}

impl fmt::Display for HumanAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HumanAction::Rely => "rely",
            HumanAction::Interrupt => "interrupt",
        })
    }
}

impl fmt::Display for Experience {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experience::Reliable => "reliable",
            Experience::Faulty => "faulty",
        })
    }
}

/// One interaction step of a supervision episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub episode_id: u64,
    pub t: u32,
    pub complexity: Complexity,
    pub robot_action: RobotAction,
    pub human_action: HumanAction,
    pub experience: Experience,
    pub reward: i32,
}

/// Environment stochastics and reward constants.
///
/// Reward constants live here rather than being hard-coded so that the
/// policy's invariance to positive reward rescaling can be exercised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub p_complex_high: f64,
    pub p_success_low: f64,
    pub p_success_high: f64,
    pub reward_success: i32,
    pub reward_assist: i32,
    pub reward_interrupt: i32,
    pub reward_failure: i32,
    pub discount: f64,
}

impl EnvConfig {
    /// The experiment-design constants: success rates 0.97 / 0.75, rewards
    /// +3/+1/0/-4, discount 0.99, and the 41:30 low:high trial mix.
    pub fn reference() -> Self {
        EnvConfig {
            p_complex_high: 30.0 / 71.0,
            p_success_low: 0.97,
            p_success_high: 0.75,
            reward_success: 3,
            reward_assist: 1,
            reward_interrupt: 0,
            reward_failure: -4,
            discount: 0.99,
        }
    }

    pub fn success_prob(&self, complexity: Complexity) -> f64 {
        match complexity {
            Complexity::Low => self.p_success_low,
            Complexity::High => self.p_success_high,
        }
    }
}

/// Assistance probabilities of the data-collection policy: 0.10 in low and
/// 0.33 in high complexity.
pub const DATA_COLLECTION_ASSIST_LOW: f64 = 0.10;
pub const DATA_COLLECTION_ASSIST_HIGH: f64 = 0.33;

/// All IOHMM probability tables.
///
/// Only `P(T' = High | ...)` and `P(o = Rely | ...)` are stored; the
/// complements are implied, so rows normalize by construction. Immutable
/// after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    initial_trust_high: f64,
    /// `[T][E'][C][a] -> P(T' = High | T, E', C, a)`
    trust_transition: [[[[f64; 2]; 2]; 2]; 2],
    /// `[T][C][a] -> P(o = Rely | T, C, a)`
    observation: [[[f64; 2]; 2]; 2],
}

/// Total number of stored probabilities: 1 initial + 16 transition + 8 observation.
pub const N_PARAMS: usize = 25;

impl ModelParams {
    pub fn new(
        initial_trust_high: f64,
        transition: impl Fn(TrustState, Experience, Complexity, RobotAction) -> f64,
        observation: impl Fn(TrustState, Complexity, RobotAction) -> f64,
    ) -> Self {
        let mut tt = [[[[0.0; 2]; 2]; 2]; 2];
        let mut obs = [[[0.0; 2]; 2]; 2];
        for t in TrustState::ALL {
            for c in Complexity::ALL {
                for a in RobotAction::ALL {
                    for e in Experience::ALL {
                        tt[t.index()][e.index()][c.index()][a.index()] = transition(t, e, c, a);
                    }
                    obs[t.index()][c.index()][a.index()] = observation(t, c, a);
                }
            }
        }
        ModelParams {
            initial_trust_high,
            trust_transition: tt,
            observation: obs,
        }
    }

    /// The fitted model reported by the source study: initial trust 0.82,
    /// the reliance probabilities of the observation figure and the trust
    /// transition probabilities of the low/high-complexity figures.
    ///
    /// The two transition contexts that can never occur (a reliable
    /// experience from assistance in low complexity, a faulty one from
    /// assistance in high complexity) are filled with the identity
    /// transition.
    pub fn reference() -> Self {
        use Complexity as C;
        use Experience as E;
        use RobotAction as A;
        use TrustState as T;
        ModelParams::new(
            0.82,
            |t, e, c, a| match (t, e, c, a) {
                // low complexity, autonomous
                (T::High, E::Reliable, C::Low, A::Autonomous) => 1.00,
                (T::Low, E::Reliable, C::Low, A::Autonomous) => 0.00,
                (T::High, E::Faulty, C::Low, A::Autonomous) => 0.71,
                (T::Low, E::Faulty, C::Low, A::Autonomous) => 0.00,
                // low complexity, assistance (always a faulty experience)
                (T::High, E::Faulty, C::Low, A::SeekAssistance) => 1.00,
                (T::Low, E::Faulty, C::Low, A::SeekAssistance) => 0.00,
                (T::High, E::Reliable, C::Low, A::SeekAssistance) => 1.00, // unreachable
                (T::Low, E::Reliable, C::Low, A::SeekAssistance) => 0.00,  // unreachable
                // high complexity, autonomous
                (T::High, E::Reliable, C::High, A::Autonomous) => 1.00,
                (T::Low, E::Reliable, C::High, A::Autonomous) => 0.64,
                (T::High, E::Faulty, C::High, A::Autonomous) => 0.67,
                (T::Low, E::Faulty, C::High, A::Autonomous) => 0.12,
                // high complexity, assistance (always a reliable experience)
                (T::High, E::Reliable, C::High, A::SeekAssistance) => 1.00,
                (T::Low, E::Reliable, C::High, A::SeekAssistance) => 0.13,
                (T::High, E::Faulty, C::High, A::SeekAssistance) => 1.00, // unreachable
                (T::Low, E::Faulty, C::High, A::SeekAssistance) => 0.00,  // unreachable
            },
            |t, c, a| match (t, c, a) {
                (_, _, A::SeekAssistance) => 0.00,
                (T::High, C::Low, A::Autonomous) => 1.00,
                (T::Low, C::Low, A::Autonomous) => 0.97,
                (T::High, C::High, A::Autonomous) => 0.94,
                (T::Low, C::High, A::Autonomous) => 0.43,
            },
        )
    }

    pub fn initial_trust_high(&self) -> f64 {
        self.initial_trust_high
    }

    /// `P(T' = High | T, E', C, a)`
    pub fn trust_transition(
        &self,
        trust: TrustState,
        experience_next: Experience,
        complexity: Complexity,
        action: RobotAction,
    ) -> f64 {
        self.trust_transition[trust.index()][experience_next.index()][complexity.index()]
            [action.index()]
    }

    /// `P(o = Rely | T, C, a)`
    pub fn observation(
        &self,
        trust: TrustState,
        complexity: Complexity,
        action: RobotAction,
    ) -> f64 {
        self.observation[trust.index()][complexity.index()][action.index()]
    }

    /// Copy with the forced-teleoperation constraint applied:
    /// `P(o = Rely | T, C, SeekAssistance) = 0`.
    pub fn with_assist_observation_clamped(&self) -> Self {
        let mut p = self.clone();
        for t in TrustState::ALL {
            for c in Complexity::ALL {
                p.observation[t.index()][c.index()][RobotAction::SeekAssistance.index()] = 0.0;
            }
        }
        p
    }

    /// Copy with the trust labels exchanged. The likelihood of any dataset
    /// is invariant under this relabeling.
    pub fn relabeled_swapped(&self) -> Self {
        ModelParams::new(
            1.0 - self.initial_trust_high,
            |t, e, c, a| 1.0 - self.trust_transition(t.other(), e, c, a),
            |t, c, a| self.observation(t.other(), c, a),
        )
    }

    /// Flatten into the canonical parameter vector (see [`param_names`]).
    pub fn to_param_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(N_PARAMS);
        v.push(self.initial_trust_high);
        for t in TrustState::ALL {
            for e in Experience::ALL {
                for c in Complexity::ALL {
                    for a in RobotAction::ALL {
                        v.push(self.trust_transition(t, e, c, a));
                    }
                }
            }
        }
        for t in TrustState::ALL {
            for c in Complexity::ALL {
                for a in RobotAction::ALL {
                    v.push(self.observation(t, c, a));
                }
            }
        }
        v
    }

    pub fn from_param_vec(v: &[f64]) -> Result<Self, ModelError> {
        if v.len() != N_PARAMS {
            return Err(ModelError::Schema(format!(
                "parameter vector has {} entries, expected {N_PARAMS}",
                v.len()
            )));
        }
        let mut it = v.iter().copied();
        let initial = it.next().unwrap();
        let mut tt = [[[[0.0; 2]; 2]; 2]; 2];
        for t in TrustState::ALL {
            for e in Experience::ALL {
                for c in Complexity::ALL {
                    for a in RobotAction::ALL {
                        tt[t.index()][e.index()][c.index()][a.index()] = it.next().unwrap();
                    }
                }
            }
        }
        let mut obs = [[[0.0; 2]; 2]; 2];
        for t in TrustState::ALL {
            for c in Complexity::ALL {
                for a in RobotAction::ALL {
                    obs[t.index()][c.index()][a.index()] = it.next().unwrap();
                }
            }
        }
        Ok(ModelParams {
            initial_trust_high: initial,
            trust_transition: tt,
            observation: obs,
        })
    }
}

pub fn transition_param_name(
    trust: TrustState,
    experience_next: Experience,
    complexity: Complexity,
    action: RobotAction,
) -> String {
    format!("trans.{trust}.{experience_next}.{complexity}.{action}")
}

pub fn observation_param_name(
    trust: TrustState,
    complexity: Complexity,
    action: RobotAction,
) -> String {
    format!("obs.{trust}.{complexity}.{action}")
}

/// Names of the canonical parameter vector entries, aligned with
/// [`ModelParams::to_param_vec`].
pub fn param_names() -> Vec<String> {
    let mut names = Vec::with_capacity(N_PARAMS);
    names.push("initial_trust_high".to_string());
    for t in TrustState::ALL {
        for e in Experience::ALL {
            for c in Complexity::ALL {
                for a in RobotAction::ALL {
                    names.push(transition_param_name(t, e, c, a));
                }
            }
        }
    }
    for t in TrustState::ALL {
        for c in Complexity::ALL {
            for a in RobotAction::ALL {
                names.push(observation_param_name(t, c, a));
            }
        }
    }
    names
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    /// Entry outside `[0, 1]` (or a discount outside `[0, 1)`).
    Range,
    /// Forced-teleoperation constraint broken.
    Structural,
}

/// One failed parameter invariant, naming the offending table entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub index: String,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::Range => {
                write!(f, "{} = {} outside the valid range", self.index, self.value)
            }
            ViolationKind::Structural => write!(
                f,
                "{} = {} but assistance forces an interruption (must be 0)",
                self.index, self.value
            ),
        }
    }
}

fn check_prob(violations: &mut Vec<Violation>, index: String, value: f64) {
    if !(0.0..=1.0).contains(&value) {
        violations.push(Violation {
            kind: ViolationKind::Range,
            index,
            value,
        });
    }
}

/// Collect every invariant violation; empty means valid. Never aborts.
pub fn validate_params(params: &ModelParams) -> Vec<Violation> {
    let mut violations = Vec::new();
    check_prob(
        &mut violations,
        "initial_trust_high".to_string(),
        params.initial_trust_high(),
    );
    for t in TrustState::ALL {
        for e in Experience::ALL {
            for c in Complexity::ALL {
                for a in RobotAction::ALL {
                    check_prob(
                        &mut violations,
                        transition_param_name(t, e, c, a),
                        params.trust_transition(t, e, c, a),
                    );
                }
            }
        }
    }
    for t in TrustState::ALL {
        for c in Complexity::ALL {
            for a in RobotAction::ALL {
                let value = params.observation(t, c, a);
                check_prob(
                    &mut violations,
                    observation_param_name(t, c, a),
                    value,
                );
                if a == RobotAction::SeekAssistance && value != 0.0 {
                    violations.push(Violation {
                        kind: ViolationKind::Structural,
                        index: observation_param_name(t, c, a),
                        value,
                    });
                }
            }
        }
    }
    violations
}

pub fn validate_env(env: &EnvConfig) -> Vec<Violation> {
    let mut violations = Vec::new();
    check_prob(
        &mut violations,
        "env.p_complex_high".to_string(),
        env.p_complex_high,
    );
    check_prob(
        &mut violations,
        "env.p_success_low".to_string(),
        env.p_success_low,
    );
    check_prob(
        &mut violations,
        "env.p_success_high".to_string(),
        env.p_success_high,
    );
    if !(0.0..1.0).contains(&env.discount) {
        violations.push(Violation {
            kind: ViolationKind::Range,
            index: "env.discount".to_string(),
            value: env.discount,
        });
    }
    violations
}

/// Reward rule for one trial; `None` for impossible triples.
pub fn reward_for(
    action: RobotAction,
    human_action: HumanAction,
    experience: Experience,
    env: &EnvConfig,
) -> Option<i32> {
    match (action, human_action, experience) {
        (RobotAction::SeekAssistance, HumanAction::Interrupt, _) => Some(env.reward_assist),
        (RobotAction::SeekAssistance, HumanAction::Rely, _) => None,
        (RobotAction::Autonomous, HumanAction::Rely, Experience::Reliable) => {
            Some(env.reward_success)
        }
        (RobotAction::Autonomous, HumanAction::Rely, Experience::Faulty) => {
            Some(env.reward_failure)
        }
        (RobotAction::Autonomous, HumanAction::Interrupt, Experience::Faulty) => {
            Some(env.reward_interrupt)
        }
        (RobotAction::Autonomous, HumanAction::Interrupt, Experience::Reliable) => None,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordViolation {
    #[error("episode {episode_id} trial {t}: assistance trial must record an interruption")]
    AssistWithoutInterrupt { episode_id: u64, t: u32 },
    #[error("episode {episode_id} trial {t}: experience {found} inconsistent with the labeling rules (expected {expected})")]
    ExperienceMismatch {
        episode_id: u64,
        t: u32,
        expected: Experience,
        found: Experience,
    },
    #[error("episode {episode_id} trial {t}: reward {found} inconsistent with the reward rule (expected {expected})")]
    RewardMismatch {
        episode_id: u64,
        t: u32,
        expected: i32,
        found: i32,
    },
}

/// Check one record against the trial invariants: forced teleoperation,
/// deterministic experience labels, and the reward rule.
pub fn validate_record(rec: &TrialRecord, env: &EnvConfig) -> Result<(), RecordViolation> {
    if rec.robot_action == RobotAction::SeekAssistance && rec.human_action == HumanAction::Rely {
        return Err(RecordViolation::AssistWithoutInterrupt {
            episode_id: rec.episode_id,
            t: rec.t,
        });
    }
    let forced = match (rec.robot_action, rec.human_action, rec.complexity) {
        (RobotAction::Autonomous, HumanAction::Interrupt, _) => Some(Experience::Faulty),
        (RobotAction::SeekAssistance, _, Complexity::Low) => Some(Experience::Faulty),
        (RobotAction::SeekAssistance, _, Complexity::High) => Some(Experience::Reliable),
        (RobotAction::Autonomous, HumanAction::Rely, _) => None,
    };
    if let Some(expected) = forced {
        if rec.experience != expected {
            return Err(RecordViolation::ExperienceMismatch {
                episode_id: rec.episode_id,
                t: rec.t,
                expected,
                found: rec.experience,
            });
        }
    }
    let expected = reward_for(rec.robot_action, rec.human_action, rec.experience, env)
        .expect("triple consistency established above");
    if rec.reward != expected {
        return Err(RecordViolation::RewardMismatch {
            episode_id: rec.episode_id,
            t: rec.t,
            expected,
            found: rec.reward,
        });
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Schema(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub trust: TrustState,
    pub experience: Experience,
    pub complexity: Complexity,
    pub action: RobotAction,
    pub p_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub trust: TrustState,
    pub complexity: Complexity,
    pub action: RobotAction,
    pub p_rely: f64,
}

/// On-disk parameter file: entry lists plus the environment sub-object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub initial_trust_high: f64,
    pub trust_transition: Vec<TransitionEntry>,
    pub observation: Vec<ObservationEntry>,
    pub env: EnvConfig,
}

impl ParamsFile {
    pub fn new(params: &ModelParams, env: &EnvConfig) -> Self {
        let mut trust_transition = Vec::with_capacity(16);
        for t in TrustState::ALL {
            for e in Experience::ALL {
                for c in Complexity::ALL {
                    for a in RobotAction::ALL {
                        trust_transition.push(TransitionEntry {
                            trust: t,
                            experience: e,
                            complexity: c,
                            action: a,
                            p_high: params.trust_transition(t, e, c, a),
                        });
                    }
                }
            }
        }
        let mut observation = Vec::with_capacity(8);
        for t in TrustState::ALL {
            for c in Complexity::ALL {
                for a in RobotAction::ALL {
                    observation.push(ObservationEntry {
                        trust: t,
                        complexity: c,
                        action: a,
                        p_rely: params.observation(t, c, a),
                    });
                }
            }
        }
        ParamsFile {
            initial_trust_high: params.initial_trust_high(),
            trust_transition,
            observation,
            env: *env,
        }
    }

    /// Rebuild the in-memory tables, requiring every context exactly once.
    pub fn into_parts(self) -> Result<(ModelParams, EnvConfig), ModelError> {
        let mut tt = [[[[None::<f64>; 2]; 2]; 2]; 2];
        for e in &self.trust_transition {
            let slot = &mut tt[e.trust.index()][e.experience.index()][e.complexity.index()]
                [e.action.index()];
            if slot.is_some() {
                return Err(ModelError::Schema(format!(
                    "duplicate trust_transition entry for {}",
                    transition_param_name(e.trust, e.experience, e.complexity, e.action)
                )));
            }
            *slot = Some(e.p_high);
        }
        let mut obs = [[[None::<f64>; 2]; 2]; 2];
        for e in &self.observation {
            let slot = &mut obs[e.trust.index()][e.complexity.index()][e.action.index()];
            if slot.is_some() {
                return Err(ModelError::Schema(format!(
                    "duplicate observation entry for {}",
                    observation_param_name(e.trust, e.complexity, e.action)
                )));
            }
            *slot = Some(e.p_rely);
        }
        let mut missing = Vec::new();
        for t in TrustState::ALL {
            for e in Experience::ALL {
                for c in Complexity::ALL {
                    for a in RobotAction::ALL {
                        if tt[t.index()][e.index()][c.index()][a.index()].is_none() {
                            missing.push(transition_param_name(t, e, c, a));
                        }
                    }
                }
            }
        }
        for t in TrustState::ALL {
            for c in Complexity::ALL {
                for a in RobotAction::ALL {
                    if obs[t.index()][c.index()][a.index()].is_none() {
                        missing.push(observation_param_name(t, c, a));
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(ModelError::Schema(format!(
                "parameter file is missing entries: {}",
                missing.join(", ")
            )));
        }
        let params = ModelParams::new(
            self.initial_trust_high,
            |t, e, c, a| tt[t.index()][e.index()][c.index()][a.index()].unwrap(),
            |t, c, a| obs[t.index()][c.index()][a.index()].unwrap(),
        );
        Ok((params, self.env))
    }
}

pub fn write_params_file(
    path: impl AsRef<Path>,
    params: &ModelParams,
    env: &EnvConfig,
) -> Result<(), ModelError> {
    let path = path.as_ref();
    let file = ParamsFile::new(params, env);
    let mut body = serde_json::to_string_pretty(&file).map_err(|source| ModelError::Json {
        path: path.display().to_string(),
        source,
    })?;
    body.push('\n');
    fs::write(path, body).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_params_file(path: impl AsRef<Path>) -> Result<(ModelParams, EnvConfig), ModelError> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ParamsFile = serde_json::from_str(&body).map_err(|source| ModelError::Json {
        path: path.display().to_string(),
        source,
    })?;
    file.into_parts()
}

/// Serialize episodes as JSON lines, one record per line.
pub fn trial_log_to_string(episodes: &[Vec<TrialRecord>]) -> String {
    let mut out = String::new();
    for episode in episodes {
        for rec in episode {
            out.push_str(&serde_json::to_string(rec).expect("record serialization is infallible"));
            out.push('\n');
        }
    }
    out
}

/// Parse a JSON-lines trial log, grouping records into episodes by
/// `episode_id` (order of first appearance) and sorting each episode by `t`.
pub fn trial_log_from_str(body: &str) -> Result<Vec<Vec<TrialRecord>>, ModelError> {
    let mut episodes: Vec<(u64, Vec<TrialRecord>)> = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord = serde_json::from_str(line).map_err(|e| {
            ModelError::Schema(format!("trial log line {}: {e}", lineno + 1))
        })?;
        match episodes.iter_mut().find(|(id, _)| *id == rec.episode_id) {
            Some((_, records)) => records.push(rec),
            None => episodes.push((rec.episode_id, vec![rec])),
        }
    }
    Ok(episodes
        .into_iter()
        .map(|(_, mut records)| {
            records.sort_by_key(|r| r.t);
            records
        })
        .collect())
}

pub fn write_trial_log(
    path: impl AsRef<Path>,
    episodes: &[Vec<TrialRecord>],
) -> Result<(), ModelError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(trial_log_to_string(episodes).as_bytes())
        .map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
}

pub fn read_trial_log(path: impl AsRef<Path>) -> Result<Vec<Vec<TrialRecord>>, ModelError> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    trial_log_from_str(&body)
}
