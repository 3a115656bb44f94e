//! Time-domain simulation of the attacked closed loop.
//!
//! The integrator works on the per-agent equations: each agent's plant runs
//! the local control, each observer injects relative output information from
//! its incoming links, and once an agent's attack starts every incoming link
//! delivers the adversary's generator output instead of neighbor data.
//! Fixed-step classical Runge-Kutta keeps trajectories reproducible;
//! [`aggregate_equivalence_check`] replays the same scenario through the
//! stacked closed-loop matrices as a cross-check of the network assembly.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{aggregate_attack_input, AgentDynamics, NetworkMatrices};
use crate::numerics::RVec;
use crate::topology::{DirectedGraph, LaplacianPartition};

/// Attack signal generator for one link signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalKind {
    Zero,
    Constant { value: Vec<f64> },
    /// `amplitude * sin(frequency * t + phase)`, elementwise.
    Sinusoid { amplitude: Vec<f64>, frequency: f64, phase: f64 },
    Step { value: Vec<f64> },
}

impl SignalKind {
    /// Signal dimension, if the kind pins one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            SignalKind::Zero => None,
            SignalKind::Constant { value } | SignalKind::Step { value } => Some(value.len()),
            SignalKind::Sinusoid { amplitude, .. } => Some(amplitude.len()),
        }
    }

    /// Evaluate at absolute time `t` (only called while the attack is
    /// active; `Step` switches with the attack itself).
    pub fn eval(&self, t: f64, dim: usize) -> RVec {
        match self {
            SignalKind::Zero => RVec::zeros(dim),
            SignalKind::Constant { value } | SignalKind::Step { value } => {
                RVec::from_column_slice(value)
            }
            SignalKind::Sinusoid { amplitude, frequency, phase } => {
                let factor = (frequency * t + phase).sin();
                RVec::from_iterator(amplitude.len(), amplitude.iter().map(|a| a * factor))
            }
        }
    }
}

/// Attack on all incoming links of one agent: the same replacement pair of
/// signals is injected on every link, starting at `start_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSignalSpec {
    pub target_agent: usize,
    pub start_time: f64,
    /// Replacement for the transmitted observer state (dimension n).
    pub xhat_signal: SignalKind,
    /// Replacement for the transmitted output (dimension p).
    pub y_signal: SignalKind,
}

/// Simulated trajectory in original agent order: per time step one stacked
/// vector of `[plant; observer]` blocks per agent.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<RVec>,
    /// Max over agent pairs of the plant-state distance, per time step.
    pub consensus_error: Vec<f64>,
    pub n_agents: usize,
    pub n: usize,
}

/// Abort threshold of the divergence guard.
const DIVERGENCE_LIMIT: f64 = 1e9;

fn validate_attacks(
    d: &AgentDynamics,
    g: &DirectedGraph,
    attacks: &[AttackSignalSpec],
    t_end: f64,
) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for spec in attacks {
        if spec.target_agent == 0 || spec.target_agent > g.n_agents() {
            return Err(Error::Validation(format!(
                "attack targets unknown agent {}",
                spec.target_agent
            )));
        }
        if !seen.insert(spec.target_agent) {
            return Err(Error::Validation(format!(
                "agent {} has more than one attack spec",
                spec.target_agent
            )));
        }
        if !spec.start_time.is_finite() || spec.start_time < 0.0 {
            return Err(Error::Validation("attack start_time must be nonnegative".into()));
        }
        if spec.start_time > t_end {
            return Err(Error::Validation(format!(
                "attack on agent {} starts at {} s, after the simulation end {} s",
                spec.target_agent, spec.start_time, t_end
            )));
        }
        if let Some(dim) = spec.xhat_signal.dim() {
            if dim != d.n {
                return Err(Error::Validation(format!(
                    "xhat_signal for agent {} has dimension {dim}, expected n = {}",
                    spec.target_agent, d.n
                )));
            }
        }
        if let Some(dim) = spec.y_signal.dim() {
            if dim != d.p {
                return Err(Error::Validation(format!(
                    "y_signal for agent {} has dimension {dim}, expected p = {}",
                    spec.target_agent, d.p
                )));
            }
        }
    }
    Ok(())
}

struct PerAgent {
    neighbors: Vec<usize>,
    attack: Option<AttackSignalSpec>,
    /// When set, the agent is treated as attacked from t = 0 even without a
    /// signal spec (used by the stacked-equivalence replay).
    forced_active: bool,
}

fn rk4<F: Fn(f64, &RVec) -> RVec>(f: &F, t: f64, x: &RVec, dt: f64) -> RVec {
    let k1 = f(t, x);
    let k2 = f(t + dt / 2.0, &(x + &k1 * (dt / 2.0)));
    let k3 = f(t + dt / 2.0, &(x + &k2 * (dt / 2.0)));
    let k4 = f(t + dt, &(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn n_steps(t_end: f64, dt: f64) -> usize {
    ((t_end / dt) - 1e-9).ceil().max(0.0) as usize
}

fn consensus_error_of(state: &RVec, n_agents: usize, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n_agents {
        for j in (i + 1)..n_agents {
            let diff = state.rows(2 * n * i, n) - state.rows(2 * n * j, n);
            worst = worst.max(diff.norm());
        }
    }
    worst
}

fn simulate_inner(
    d: &AgentDynamics,
    g: &DirectedGraph,
    agents: &[PerAgent],
    t_end: f64,
    dt: f64,
    x0: &RVec,
) -> Result<Trajectory> {
    let n = d.n;
    let n_agents = g.n_agents();
    let bk = &d.b * &d.k;
    let a_cl = &d.a + &bk;

    let active = |agent_idx: usize, t: f64| -> bool {
        agents[agent_idx].forced_active
            || agents[agent_idx]
                .attack
                .as_ref()
                .map(|s| t >= s.start_time - 1e-12)
                .unwrap_or(false)
    };

    let rhs = |t: f64, x: &RVec| -> RVec {
        let mut dx = RVec::zeros(2 * n * n_agents);
        for i in 0..n_agents {
            let xi = x.rows(2 * n * i, n);
            let xhi = x.rows(2 * n * i + n, n);
            let yi = &d.c * xi;
            let yhi_own = &d.c * xhi;

            // plant: local control from the own observer
            dx.rows_mut(2 * n * i, n).copy_from(&(&d.a * xi + &bk * xhi));

            // observer: local loop plus injected link information
            let mut acc = RVec::zeros(d.p);
            if active(i, t) {
                let spec = agents[i].attack.as_ref();
                let degree = agents[i].neighbors.len() as f64;
                let a_y = spec
                    .map(|s| s.y_signal.eval(t, d.p))
                    .unwrap_or_else(|| RVec::zeros(d.p));
                let a_xhat = spec
                    .map(|s| s.xhat_signal.eval(t, d.n))
                    .unwrap_or_else(|| RVec::zeros(d.n));
                // every incoming link carries the same replacement pair
                acc += (a_y - &d.c * a_xhat + &yhi_own - &yi) * degree;
            } else {
                for &j in &agents[i].neighbors {
                    let xj = x.rows(2 * n * (j - 1), n);
                    let xhj = x.rows(2 * n * (j - 1) + n, n);
                    acc += &d.c * xj - &yi + &yhi_own - &d.c * xhj;
                }
            }
            dx.rows_mut(2 * n * i + n, n).copy_from(&(&a_cl * xhi + &d.h * acc));
        }
        dx
    };

    let steps = n_steps(t_end, dt);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut consensus = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    for step in 0..=steps {
        let t = step as f64 * dt;
        if x.amax() > DIVERGENCE_LIMIT {
            return Err(Error::Numerical(format!(
                "state magnitude exceeded {DIVERGENCE_LIMIT:.0e} at t = {t}; aborting"
            )));
        }
        times.push(t);
        consensus.push(consensus_error_of(&x, n_agents, n));
        states.push(x.clone());
        if step < steps {
            x = rk4(&rhs, t, &x, dt);
        }
    }
    Ok(Trajectory { times, states, consensus_error: consensus, n_agents, n })
}

/// Integrate the per-agent attacked closed loop with classical fixed-step
/// fourth-order Runge-Kutta. `x0` stacks `[plant; observer]` blocks in
/// original agent order. An agent behaves normally until its attack's
/// `start_time`, after which all of its incoming links carry the attack
/// generators.
pub fn simulate(
    d: &AgentDynamics,
    g: &DirectedGraph,
    attacks: &[AttackSignalSpec],
    t_end: f64,
    dt: f64,
    x0: &RVec,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Validation("dt must be positive".into()));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Validation("t_end must be nonnegative".into()));
    }
    if x0.len() != 2 * d.n * g.n_agents() {
        return Err(Error::Validation(format!(
            "x0 has length {}, expected 2nN = {}",
            x0.len(),
            2 * d.n * g.n_agents()
        )));
    }
    validate_attacks(d, g, attacks, t_end)?;
    let agents: Vec<PerAgent> = (1..=g.n_agents())
        .map(|id| PerAgent {
            neighbors: g.in_neighbors(id),
            attack: attacks.iter().find(|s| s.target_agent == id).cloned(),
            forced_active: false,
        })
        .collect();
    simulate_inner(d, g, &agents, t_end, dt, x0)
}

/// Replay a scenario twice — through the per-agent equations and through the
/// stacked closed-loop matrices — and return the largest state deviation.
///
/// The stacked form models the attacked regime, so both replays run with
/// every attacked agent active from t = 0 (start times are ignored here).
pub fn aggregate_equivalence_check(
    d: &AgentDynamics,
    g: &DirectedGraph,
    nm: &NetworkMatrices,
    part: &LaplacianPartition,
    attacks: &[AttackSignalSpec],
    t_end: f64,
    dt: f64,
    x0: &RVec,
) -> Result<f64> {
    if x0.len() != 2 * d.n * g.n_agents() {
        return Err(Error::Validation(format!(
            "x0 has length {}, expected 2nN = {}",
            x0.len(),
            2 * d.n * g.n_agents()
        )));
    }
    validate_attacks(d, g, attacks, f64::INFINITY)?;
    for spec in attacks {
        if !part.attacked_ids.contains(&spec.target_agent) {
            return Err(Error::Validation(format!(
                "attack targets agent {} which is not in the attacked set",
                spec.target_agent
            )));
        }
    }

    // per-agent replay, attack active everywhere from t = 0
    let agents: Vec<PerAgent> = (1..=g.n_agents())
        .map(|id| PerAgent {
            neighbors: g.in_neighbors(id),
            attack: attacks.iter().find(|s| s.target_agent == id).cloned(),
            forced_active: part.attacked_ids.contains(&id),
        })
        .collect();
    let per_link = simulate_inner(d, g, &agents, t_end, dt, x0)?;

    // stacked replay over [attacked; followers]
    let sd = 2 * d.n;
    let stacked_order: Vec<usize> =
        part.attacked_ids.iter().chain(part.follower_ids.iter()).copied().collect();
    let mut x_perm = RVec::zeros(x0.len());
    for (slot, &id) in stacked_order.iter().enumerate() {
        x_perm.rows_mut(slot * sd, sd).copy_from(&x0.rows((id - 1) * sd, sd));
    }
    let input_dim = d.p * part.n_attacked();
    let attack_input = |t: f64| -> RVec {
        let mut u = RVec::zeros(input_dim);
        for (k, &id) in part.attacked_ids.iter().enumerate() {
            if let Some(spec) = attacks.iter().find(|s| s.target_agent == id) {
                let a_y = spec.y_signal.eval(t, d.p);
                let a_xhat = spec.xhat_signal.eval(t, d.n);
                let agg = aggregate_attack_input(&d.c, g.in_degree(id), &a_y, &a_xhat);
                u.rows_mut(k * d.p, d.p).copy_from(&agg);
            }
        }
        u
    };
    let rhs = |t: f64, x: &RVec| -> RVec { &nm.closed_state * x + &nm.closed_input * attack_input(t) };

    let steps = n_steps(t_end, dt);
    let mut worst: f64 = 0.0;
    let mut x = x_perm;
    for step in 0..=steps {
        let t = step as f64 * dt;
        if x.amax() > DIVERGENCE_LIMIT {
            return Err(Error::Numerical(format!(
                "state magnitude exceeded {DIVERGENCE_LIMIT:.0e} at t = {t}; aborting"
            )));
        }
        let reference = &per_link.states[step];
        for (slot, &id) in stacked_order.iter().enumerate() {
            let diff = x.rows(slot * sd, sd) - reference.rows((id - 1) * sd, sd);
            worst = worst.max(diff.amax());
        }
        if step < steps {
            x = rk4(&rhs, t, &x, dt);
        }
    }
    Ok(worst)
}

/// Decimal representation with exactly 17 significant digits, enough for an
/// exact `f64` round-trip without scientific notation.
pub fn fmt_sig17(v: f64) -> String {
    if v == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let sign = if v.is_sign_negative() { "-" } else { "" };
    let sci = format!("{:.16e}", v.abs());
    let (mantissa, exponent) = sci.split_once('e').expect("scientific float format");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 17);
    let exp: i32 = exponent.parse().expect("float exponent");
    if exp < 0 {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("{sign}0.{zeros}{digits}")
    } else if (exp as usize) < digits.len() - 1 {
        let split = exp as usize + 1;
        format!("{sign}{}.{}", &digits[..split], &digits[split..])
    } else {
        let zeros = "0".repeat(exp as usize + 1 - digits.len());
        format!("{sign}{digits}{zeros}")
    }
}

/// Write a trajectory as CSV: header `t,agent,x1..xn,xhat1..xhatn`, one row
/// per (time, agent), 17-significant-digit decimal values, UNIX line
/// endings. Byte-stable for identical inputs.
pub fn export_trajectory<W: Write>(traj: &Trajectory, out: &mut W) -> Result<()> {
    if traj.times.is_empty() {
        return Err(Error::Validation("cannot export an empty trajectory".into()));
    }
    let n = traj.n;
    let mut header = String::from("t,agent");
    for i in 1..=n {
        header.push_str(&format!(",x{i}"));
    }
    for i in 1..=n {
        header.push_str(&format!(",xhat{i}"));
    }
    header.push('\n');
    out.write_all(header.as_bytes())?;
    for (step, &t) in traj.times.iter().enumerate() {
        let state = &traj.states[step];
        for agent in 0..traj.n_agents {
            let mut row = format!("{},{}", fmt_sig17(t), agent + 1);
            for i in 0..2 * n {
                row.push(',');
                row.push_str(&fmt_sig17(state[agent * 2 * n + i]));
            }
            row.push('\n');
            out.write_all(row.as_bytes())?;
        }
    }
    Ok(())
}
