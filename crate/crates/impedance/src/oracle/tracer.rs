//! Event-driven ray tracer used to cross-check the oracle: a ray is stepped
//! segment by segment through the rectangle, testing every wall explicitly.

use crate::oracle::{Direction, Interface, WeightedDirac};
use crate::solver::Sign;
use crate::{Error, Result};

/// Mass factors used by the tracer, written from the wave symbols directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracerWalls {
    /// Power of |(2√r − α)/(2√r + α)|², α = 2, per Γ_r reflection.
    pub right_power: i32,
    /// Mass factor per Γ_l reflection.
    pub left: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracerSetup {
    pub h: f64,
    pub d_l: f64,
    pub d_r: f64,
    pub iota: Sign,
    pub walls: TracerWalls,
    pub max_bounces: usize,
    pub mass_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Interface,
    Wall,
    Exit,
}

/// Deposits on Γ_i of one ray leaving (0, y) rightward with frequency ξ′.
pub fn trace_ray(setup: &TracerSetup, y: f64, xi: f64, mass: f64) -> Result<Vec<WeightedDirac>> {
    let r = 1.0 - xi * xi;
    if !(r > 0.0) {
        return Err(Error::GlancingRay { xi });
    }
    let sr = r.sqrt();
    let alpha = 2.0;
    let refl = ((2.0 * sr - alpha) / (2.0 * sr + alpha)).powi(2);
    let t_in = ((setup.iota.value() + sr) / (1.0 + sr)).powi(2);
    let t_out = ((setup.iota.value() - sr) / (1.0 - sr)).powi(2);
    let width = setup.d_l + setup.d_r;

    let (mut x1, mut x2) = (0.0f64, y);
    let mut dir = 1.0f64;
    let mut weight = 1.0;
    let mut bounces = 0usize;
    let mut out = Vec::new();
    loop {
        // next event along the current direction
        let target_wall = if dir > 0.0 { width } else { 0.0 };
        let on_interface = x1 == setup.d_l;
        let interface_ahead = !on_interface && (setup.d_l - x1) * dir > 0.0;
        let (event, dist) = if interface_ahead {
            (Event::Interface, (setup.d_l - x1).abs())
        } else {
            (Event::Wall, (target_wall - x1).abs())
        };
        let t = dist / sr;
        let t_exit = if xi > 0.0 {
            (setup.h - x2) / xi
        } else if xi < 0.0 {
            -x2 / xi
        } else {
            f64::INFINITY
        };
        let event = if t_exit <= t { Event::Exit } else { event };
        match event {
            Event::Exit => return Ok(out),
            Event::Interface => {
                x1 = setup.d_l;
                x2 += dist * xi / sr;
                let (factor, direction) = if dir > 0.0 { (t_in, Direction::In) } else { (t_out, Direction::Out) };
                out.push(WeightedDirac {
                    point: crate::oracle::PhasePoint { x: x2, xi },
                    mass: mass * weight * factor,
                    interface: Interface::I,
                    direction,
                    bounces,
                });
            }
            Event::Wall => {
                if bounces + 1 > setup.max_bounces {
                    return Ok(out);
                }
                x1 = target_wall;
                x2 += dist * xi / sr;
                bounces += 1;
                weight *= if dir > 0.0 { refl.powi(setup.walls.right_power) } else { setup.walls.left };
                if mass * weight < setup.mass_floor {
                    return Ok(out);
                }
                dir = -dir;
            }
        }
    }
}
