//! Threshold safety filter and a paired-arm harness for measuring it.

use std::fmt::Write as _;

use crate::env::{env_step, ActionVector, Environment, StateVector};
use crate::error::{Error, Result};
use crate::learn::EigenModel;
use crate::rng::SimRng;

/// Where reference actions come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferencePolicy {
    /// Uniform over the action box.
    Random,
    /// The same action at every step.
    Constant(Vec<f64>),
}

impl ReferencePolicy {
    /// Accepts `random` or `constant:a0,a1,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "random" {
            return Ok(Self::Random);
        }
        if let Some(rest) = s.strip_prefix("constant:") {
            let coords = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| Error::parse(format!("bad constant action component {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            return Ok(Self::Constant(coords));
        }
        Err(Error::parse(format!("unknown reference policy {s:?}; expected random or constant:<a0,...>")))
    }

    fn draw(&self, env: &dyn Environment, rng: &mut SimRng) -> ActionVector {
        match self {
            Self::Random => env.sample_action(rng),
            Self::Constant(a) => ActionVector::new(a.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    /// Backup fires when `φ(s) <= epsilon`. Infinity means backup only.
    pub epsilon: f64,
    pub reference: ReferencePolicy,
}

impl FilterConfig {
    pub fn new(epsilon: f64, reference: ReferencePolicy) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::validation(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, reference })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterDecision {
    pub action: ActionVector,
    pub intervened: bool,
    pub phi: f64,
}

/// Passes `reference` through when `φ(state) > ε`, otherwise returns the
/// backup action `π(state)`.
pub fn filtered_action(
    model: &EigenModel,
    config: &FilterConfig,
    state: &StateVector,
    reference: &ActionVector,
) -> Result<FilterDecision> {
    if state.terminal {
        return Err(Error::contract("cannot filter an action in the terminal state"));
    }
    let phi = model.phi(&state.coords)?;
    if phi > config.epsilon {
        Ok(FilterDecision { action: reference.clone(), intervened: false, phi })
    } else {
        let action = ActionVector::new(model.act(&state.coords)?);
        Ok(FilterDecision { action, intervened: true, phi })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterReport {
    pub n_episodes: usize,
    pub horizon: usize,
    pub violations_filtered: usize,
    pub violations_unfiltered: usize,
    /// Backup activations over all steps taken by the filtered arm.
    pub intervention_rate: f64,
    /// Steps survived before reaching `K`, capped at `horizon`.
    pub mean_survival_filtered: f64,
    pub mean_survival_unfiltered: f64,
}

impl FilterReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "n_episodes,horizon,violations_filtered,violations_unfiltered,intervention_rate,mean_survival_filtered,mean_survival_unfiltered\n",
        );
        writeln!(
            s,
            "{},{},{},{},{:.16e},{:.16e},{:.16e}",
            self.n_episodes,
            self.horizon,
            self.violations_filtered,
            self.violations_unfiltered,
            self.intervention_rate,
            self.mean_survival_filtered,
            self.mean_survival_unfiltered
        )
        .unwrap();
        s
    }
}

/// One filtered-arm step, for safety-value plots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiTraceRow {
    pub episode: usize,
    pub t: usize,
    pub phi: f64,
    pub intervened: bool,
}

pub fn phi_trace_csv(rows: &[PhiTraceRow]) -> String {
    let mut s = String::from("episode,t,phi,intervened\n");
    for r in rows {
        writeln!(s, "{},{},{:.16e},{}", r.episode, r.t, r.phi, u8::from(r.intervened)).unwrap();
    }
    s
}

struct ArmOutcome {
    survived: usize,
    violated: bool,
    interventions: usize,
    steps: usize,
}

fn run_arm(
    env: &dyn Environment,
    model: Option<&EigenModel>,
    config: &FilterConfig,
    x0: &StateVector,
    horizon: usize,
    streams: (u64, u64, u64),
    episode: usize,
    trace: Option<&mut Vec<PhiTraceRow>>,
) -> Result<ArmOutcome> {
    let (seed, ref_idx, dyn_idx) = streams;
    let mut ref_rng = SimRng::stream(seed, ref_idx);
    let mut dyn_rng = SimRng::stream(seed, dyn_idx);
    let mut state = x0.clone();
    let mut out = ArmOutcome { survived: 0, violated: false, interventions: 0, steps: 0 };
    let mut trace = trace;
    for t in 0..horizon {
        // The reference is drawn every step so both arms see the same sequence.
        let reference = config.reference.draw(env, &mut ref_rng);
        let action = match model {
            Some(m) => {
                let d = filtered_action(m, config, &state, &reference)?;
                if d.intervened {
                    out.interventions += 1;
                }
                if let Some(rows) = trace.as_deref_mut() {
                    rows.push(PhiTraceRow { episode, t, phi: d.phi, intervened: d.intervened });
                }
                d.action
            }
            None => reference,
        };
        out.steps += 1;
        state = env_step(env, &state, &action, &mut dyn_rng)?;
        if state.terminal {
            out.violated = true;
            return Ok(out);
        }
        out.survived += 1;
    }
    Ok(out)
}

/// Paired evaluation of the filtered and unfiltered closed loops.
///
/// Episode `i` draws its initial state from stream `3i` of `seed`, its
/// reference actions from stream `3i + 1` and its dynamics noise from
/// stream `3i + 2`. Both arms replay the same three streams, so they differ
/// only where the filter intervenes. Returns the report and the filtered
/// arm's φ trace.
pub fn evaluate_filter(
    env: &dyn Environment,
    model: &EigenModel,
    config: &FilterConfig,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<(FilterReport, Vec<PhiTraceRow>)> {
    if n_episodes == 0 {
        return Err(Error::contract("n_episodes must be at least 1"));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::validation(format!("epsilon must be positive, got {}", config.epsilon)));
    }
    if model.state_dim() != env.spec().state_dim || model.action_dim() != env.spec().action_dim {
        return Err(Error::contract("model dimensions do not match the environment"));
    }
    if let ReferencePolicy::Constant(a) = &config.reference {
        env.check_action(a)?;
    }
    let mut trace = Vec::new();
    let (mut vf, mut vu, mut interventions, mut steps) = (0, 0, 0, 0);
    let (mut sf, mut su) = (0usize, 0usize);
    for ep in 0..n_episodes {
        let base = 3 * ep as u64;
        let x0 = env.sample_safe_state(&mut SimRng::stream(seed, base));
        let streams = (seed, base + 1, base + 2);
        let f = run_arm(env, Some(model), config, &x0, horizon, streams, ep, Some(&mut trace))?;
        let u = run_arm(env, None, config, &x0, horizon, streams, ep, None)?;
        vf += usize::from(f.violated);
        vu += usize::from(u.violated);
        sf += f.survived;
        su += u.survived;
        interventions += f.interventions;
        steps += f.steps;
    }
    let n = n_episodes as f64;
    let report = FilterReport {
        n_episodes,
        horizon,
        violations_filtered: vf,
        violations_unfiltered: vu,
        intervention_rate: if steps == 0 { 0.0 } else { interventions as f64 / steps as f64 },
        mean_survival_filtered: sf as f64 / n,
        mean_survival_unfiltered: su as f64 / n,
    };
    Ok((report, trace))
}

/// Fraction of recorded states at which the filter would fire.
pub fn intervention_rate_on_states(model: &EigenModel, epsilon: f64, states: &[StateVector]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::contract("no states to evaluate"));
    }
    let mut fired = 0usize;
    for s in states {
        if s.terminal {
            return Err(Error::contract("recorded states must be non-terminal"));
        }
        if model.phi(&s.coords)? <= epsilon {
            fired += 1;
        }
    }
    Ok(fired as f64 / states.len() as f64)
}

/// Centered moving average. Sample `i` averages indices
/// `[i - w/2, i - w/2 + w)` clipped to the series.
pub fn smooth_series(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::contract("window must be at least 1"));
    }
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(window / 2);
            let hi = (i + window - window / 2).min(n);
            if window == 1 {
                values[i]
            } else {
                values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            }
        })
        .collect())
}
