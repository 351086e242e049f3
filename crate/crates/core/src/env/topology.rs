use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Result, SimError};
use crate::phy::SimParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Circle a user must stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomeRegion {
    pub center: Point,
    pub radius: f64,
}

impl HomeRegion {
    pub fn contains(&self, p: Point) -> bool {
        // Reflection arithmetic can land a few ulps outside the boundary.
        p.distance(self.center) <= self.radius * (1.0 + 1e-9) + 1e-9
    }
}

/// Base stations, users, and the frozen user-to-BS association.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub bs_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// Heading of every user in radians.
    pub headings: Vec<f64>,
    pub association: Vec<usize>,
    pub home: Vec<HomeRegion>,
    served: Vec<Vec<usize>>,
}

/// BS sites on a square grid with `spacing` meters between neighbours.
pub fn grid_sites(n_bs: usize, spacing: f64) -> Vec<Point> {
    let cols = (n_bs as f64).sqrt().ceil().max(1.0) as usize;
    (0..n_bs)
        .map(|i| Point::new((i % cols) as f64 * spacing, (i / cols) as f64 * spacing))
        .collect()
}

impl NetworkTopology {
    /// Drops users uniformly in the disc of radius ISD/2 around their anchor
    /// BS (user k is anchored at BS k mod N), associates each one to its
    /// nearest BS, and centres its home region on the initial position.
    pub fn place<R: Rng>(params: &SimParams, region_radius: f64, rng: &mut R) -> Result<Self> {
        let bs_positions = grid_sites(params.n_bs, params.inter_site_distance);
        let cell_radius = params.inter_site_distance / 2.0;
        let mut user_positions = Vec::with_capacity(params.n_users);
        let mut headings = Vec::with_capacity(params.n_users);
        for k in 0..params.n_users {
            let anchor = bs_positions[k % params.n_bs];
            let r = cell_radius * rng.random::<f64>().sqrt();
            let theta = rng.random::<f64>() * TAU;
            user_positions.push(Point::new(
                anchor.x + r * theta.cos(),
                anchor.y + r * theta.sin(),
            ));
            headings.push(rng.random::<f64>() * TAU);
        }
        let association = user_positions
            .iter()
            .map(|&u| nearest(&bs_positions, u))
            .collect();
        let home = user_positions
            .iter()
            .map(|&center| HomeRegion {
                center,
                radius: region_radius,
            })
            .collect();
        Self::from_parts(bs_positions, user_positions, headings, association, home)
    }

    pub fn from_parts(
        bs_positions: Vec<Point>,
        user_positions: Vec<Point>,
        headings: Vec<f64>,
        association: Vec<usize>,
        home: Vec<HomeRegion>,
    ) -> Result<Self> {
        let k = user_positions.len();
        if headings.len() != k || association.len() != k || home.len() != k {
            return Err(SimError::contract("per-user vectors differ in length"));
        }
        let mut served = vec![Vec::new(); bs_positions.len()];
        for (user, &bs) in association.iter().enumerate() {
            served
                .get_mut(bs)
                .ok_or_else(|| {
                    SimError::contract(format!("user {user} associated to missing BS {bs}"))
                })?
                .push(user);
        }
        if let Some(empty) = served.iter().position(Vec::is_empty) {
            return Err(SimError::config(
                "sim.n_users",
                format!("BS {empty} has no associated users"),
            ));
        }
        Ok(NetworkTopology {
            bs_positions,
            user_positions,
            headings,
            association,
            home,
            served,
        })
    }

    pub fn n_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }

    /// Users associated to `bs`, in increasing index order.
    pub fn served_users(&self, bs: usize) -> &[usize] {
        &self.served[bs]
    }

    pub fn all_served(&self) -> &[Vec<usize>] {
        &self.served
    }

    pub fn distance(&self, bs: usize, user: usize) -> f64 {
        self.bs_positions[bs].distance(self.user_positions[user])
    }
}

fn nearest(sites: &[Point], p: Point) -> usize {
    let mut best = 0;
    for (i, s) in sites.iter().enumerate() {
        if s.distance(p) < sites[best].distance(p) {
            best = i;
        }
    }
    best
}
