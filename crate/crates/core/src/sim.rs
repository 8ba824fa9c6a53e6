//! Nonlinear discrete-time simulation of the mixed traffic chain under a
//! head-vehicle velocity perturbation.
//!
//! The chain holds the head vehicle at index 0 and `n` follower vehicles at
//! indices 1..=n. HDVs run the nonlinear car-following model, independent
//! CAVs run the CACC law, and platoon CAVs apply the LQR feedback on their
//! platoon's stacked deviation state. Integration is explicit forward Euler:
//! both position and velocity advance from the previous sample, so the
//! position update uses the pre-step velocity.

use nalgebra::{DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::composition::{
    partition, sample_composition, SegmentKind, Strategy, TrafficComposition, VehicleClass,
};
use crate::error::{Error, Result};
use crate::lqr::{synthesize, LqrWeights};
use crate::models::{
    cacc_accel, equilibrium_from_velocity, linearize, ovm_accel, CaccParams, OvmParams,
};
use crate::statespace::build_platoon_model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Follower vehicles behind the head.
    pub n: usize,
    pub p: f64,
    pub m_max: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub v_star: f64,
    pub accel_limit: f64,
    pub vehicle_length: f64,
    /// When false the head holds `v_star` for the whole horizon.
    pub perturbation: bool,
    pub ovm: OvmParams,
    pub cacc: CaccParams,
    pub q: f64,
    pub r: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.ovm.validate()?;
        self.cacc.validate()?;
        if self.n < 2 {
            return Err(Error::InvalidInput("vehicle count n must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidInput(format!(
                "penetration rate {} outside [0, 1]",
                self.p
            )));
        }
        if self.m_max < 2 {
            return Err(Error::InvalidInput("m_max must be >= 2".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        if self.perturbation && self.t_end <= 16.0 {
            return Err(Error::InvalidInput(
                "t_end must exceed the 16 s perturbation window".into(),
            ));
        }
        if self.t_end <= 0.0 {
            return Err(Error::InvalidInput("t_end must be positive".into()));
        }
        if self.accel_limit <= 0.0 || self.vehicle_length <= 0.0 {
            return Err(Error::InvalidInput(
                "accel_limit and vehicle_length must be positive".into(),
            ));
        }
        if self.q <= 0.0 || self.r <= 0.0 {
            return Err(Error::InvalidInput("LQR weights must be positive".into()));
        }
        Ok(())
    }
}

/// Head-vehicle velocity profile: hold `v_star`, ramp down 1 m/s^2 for 3 s
/// starting at t = 10 s, ramp back up over the next 3 s, hold again.
pub fn head_velocity(t: f64, v_star: f64) -> f64 {
    if t <= 10.0 {
        v_star
    } else if t < 13.0 {
        v_star - (t - 10.0)
    } else if t < 16.0 {
        v_star + (t - 16.0)
    } else {
        v_star
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    /// Follower index (1..=n) whose gap to its predecessor closed.
    pub vehicle: usize,
}

/// Time-indexed record of a run. Index 0 in every per-vehicle vector is the
/// head vehicle; followers occupy 1..=n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: SimConfig,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Acceleration applied over the step starting at each sample; the final
    /// sample records the acceleration the controllers would command there.
    pub accelerations: Vec<Vec<f64>>,
    /// Classes of followers 1..=n.
    pub classes: Vec<VehicleClass>,
    pub collision: Option<CollisionEvent>,
}

impl Trajectory {
    pub fn n_vehicles(&self) -> usize {
        self.classes.len()
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }
}

enum Controller {
    Hdv,
    Cacc,
    /// Index into the platoon table.
    Platoon(usize),
}

struct PlatoonController {
    /// Member vehicle indices (1..=n), front of traffic first.
    members: Vec<usize>,
    /// Controlled CAV index.
    cav: usize,
    gain: RowDVector<f64>,
}

/// Incremental simulation; lets callers flush partial results on collision.
pub struct Simulation {
    config: SimConfig,
    composition: TrafficComposition,
    controllers: Vec<Controller>,
    platoons: Vec<PlatoonController>,
    s_star: f64,
    step_index: usize,
    n_steps: usize,
    /// Head-deviation scaling for small-signal studies; 1 in normal runs.
    head_scale: f64,
    pos: Vec<f64>,
    vel: Vec<f64>,
    trajectory: Trajectory,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let eq = equilibrium_from_velocity(&config.ovm, config.v_star)?;
        let coeffs = linearize(&config.ovm, &eq);
        let composition = sample_composition(config.n, config.p, config.seed)?;

        let mut controllers: Vec<Controller> = (1..=config.n)
            .map(|i| match composition.class(i) {
                VehicleClass::Hdv => Controller::Hdv,
                VehicleClass::Cav => Controller::Cacc,
            })
            .collect();
        let mut platoons = Vec::new();
        if let Some(topology) = config.strategy.topology() {
            let part = partition(&composition, topology, config.m_max);
            let mut gains: Vec<Option<RowDVector<f64>>> = vec![None; config.m_max + 1];
            for seg in &part.segments {
                if seg.kind != SegmentKind::MixedPlatoon {
                    continue;
                }
                let m = seg.size();
                if gains[m].is_none() {
                    let model = build_platoon_model(&coeffs, m, topology)?;
                    let weights = LqrWeights::uniform(config.q, config.r, 2 * m);
                    let (gain, _) = synthesize(&model, &weights)?;
                    gains[m] = Some(gain.k_vec);
                }
                let cav = *seg
                    .members
                    .iter()
                    .find(|&&i| composition.class(i) == VehicleClass::Cav)
                    .expect("platoon has a CAV");
                controllers[cav - 1] = Controller::Platoon(platoons.len());
                platoons.push(PlatoonController {
                    members: seg.members.clone(),
                    cav,
                    gain: gains[m].clone().unwrap(),
                });
            }
        }

        let n_steps = (config.t_end / config.dt).round() as usize;
        let mut pos = vec![0.0; config.n + 1];
        for i in 1..=config.n {
            pos[i] = pos[i - 1] - (eq.s_star + config.vehicle_length);
        }
        let vel = vec![config.v_star; config.n + 1];
        let trajectory = Trajectory {
            config: config.clone(),
            times: vec![0.0],
            positions: vec![pos.clone()],
            velocities: vec![vel.clone()],
            accelerations: Vec::new(),
            classes: composition.classes().to_vec(),
            collision: None,
        };
        Ok(Self {
            config,
            composition,
            controllers,
            platoons,
            s_star: eq.s_star,
            step_index: 0,
            n_steps,
            head_scale: 1.0,
            pos,
            vel,
            trajectory,
        })
    }

    pub fn composition(&self) -> &TrafficComposition {
        &self.composition
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }

    pub fn finished(&self) -> bool {
        self.step_index >= self.n_steps || self.trajectory.collision.is_some()
    }

    fn gaps(&self) -> Vec<f64> {
        (1..=self.config.n)
            .map(|i| self.pos[i - 1] - self.pos[i] - self.config.vehicle_length)
            .collect()
    }

    fn accelerations(&self, gaps: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let mut acc = vec![0.0; cfg.n + 1];
        for i in 1..=cfg.n {
            let s = gaps[i - 1];
            let v = self.vel[i];
            let v_prev = self.vel[i - 1];
            acc[i] = match &self.controllers[i - 1] {
                Controller::Hdv => ovm_accel(&cfg.ovm, s, v_prev - v, v)?,
                Controller::Cacc => cacc_accel(&cfg.cacc, s, v, v_prev),
                Controller::Platoon(idx) => {
                    let pc = &self.platoons[*idx];
                    let x = DVector::from_iterator(
                        2 * pc.members.len(),
                        pc.members.iter().flat_map(|&j| {
                            [gaps[j - 1] - self.s_star, self.vel[j] - cfg.v_star]
                        }),
                    );
                    let mut u = -(&pc.gain * &x)[0];
                    // MSL CAVs keep their car-following base behavior and
                    // add the feedback on top; MPF CAVs are pure feedback
                    if cfg.strategy == Strategy::Msl {
                        u += ovm_accel(&cfg.ovm, s, v_prev - v, v)?;
                    }
                    debug_assert_eq!(pc.cav, i);
                    u
                }
            };
            acc[i] = acc[i].clamp(-cfg.accel_limit, cfg.accel_limit);
        }
        Ok(acc)
    }

    /// Advance one step. Returns `Ok(false)` once the horizon or a collision
    /// has been reached; the collision itself is recorded on the trajectory
    /// and also returned as an error by `run`.
    pub fn step(&mut self) -> Result<bool> {
        if self.finished() {
            return Ok(false);
        }
        let cfg = self.config.clone();
        let t = self.step_index as f64 * cfg.dt;
        let gaps = self.gaps();
        if let Some(i) = (0..cfg.n).find(|&i| gaps[i] <= 0.0) {
            self.trajectory.collision = Some(CollisionEvent {
                time: t,
                vehicle: i + 1,
            });
            return Ok(false);
        }
        let acc = self.accelerations(&gaps)?;
        self.trajectory.accelerations.push(acc.clone());
        for i in 0..=cfg.n {
            self.pos[i] += cfg.dt * self.vel[i];
        }
        for (v, &a) in self.vel.iter_mut().zip(acc.iter()).skip(1) {
            *v = (*v + cfg.dt * a).max(0.0);
        }
        self.vel[0] = if cfg.perturbation {
            cfg.v_star + self.head_scale * (head_velocity(t + cfg.dt, cfg.v_star) - cfg.v_star)
        } else {
            cfg.v_star
        };
        self.step_index += 1;
        self.trajectory.times.push(self.step_index as f64 * cfg.dt);
        self.trajectory.positions.push(self.pos.clone());
        self.trajectory.velocities.push(self.vel.clone());
        if self.step_index >= self.n_steps {
            // trailing acceleration record so every sample has one
            let gaps = self.gaps();
            if gaps.iter().all(|&g| g > 0.0) {
                let acc = self.accelerations(&gaps)?;
                self.trajectory.accelerations.push(acc);
            } else {
                self.trajectory.accelerations.push(vec![0.0; cfg.n + 1]);
            }
        }
        Ok(true)
    }

    /// Run to completion; a collision aborts with an error after recording
    /// the partial trajectory.
    pub fn run_to_end(&mut self) -> Result<()> {
        while self.step()? {}
        if let Some(c) = self.trajectory.collision {
            return Err(Error::Collision {
                time: c.time,
                vehicle: c.vehicle,
            });
        }
        Ok(())
    }
}

/// Convenience wrapper: simulate the full horizon and return the trajectory.
pub fn run(config: &SimConfig) -> Result<Trajectory> {
    let mut sim = Simulation::new(config.clone())?;
    sim.run_to_end()?;
    Ok(sim.into_trajectory())
}
