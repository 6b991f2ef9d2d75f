//! Stair nodes for a roadmap: candidates are clustered on the ground plane
//! and a node is published once a cluster is both large and tight.
//!
//! Poses are taken as given; transforming them into a common world frame
//! is the caller's job.

use nalgebra::{Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angles::{
    circular_mean_full_turn, circular_mean_half_turn, fold_half_turn, wrap_full_turn,
};
use crate::localizer::{
    angle_to_quaternion, ground_project, Direction, ExtrinsicsConfig, StairPose,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("invalid registry config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    /// Candidates needed before a cluster is considered.
    pub window: usize,
    /// Gate on `sqrt(trace(cov))` of the positions, meters.
    pub sigma_pos: f64,
    /// Gate on the spread of the undirected angles, radians.
    pub sigma_theta: f64,
    /// Clustering and duplicate-rejection radius on the ground, meters.
    pub radius: f64,
    /// Candidates older than this, seconds, are forgotten.
    pub staleness_s: f64,
    /// Gravity in the frame of the submitted poses.
    pub gravity: [f64; 3],
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            window: 10,
            sigma_pos: 0.2,
            sigma_theta: 0.0873,
            radius: 1.5,
            staleness_s: 30.0,
            gravity: [0.0, 1.0, 0.0],
        }
    }
}

impl RegistryConfig {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let bad = |m: &str| Err(RegistryError::InvalidConfig(m.to_owned()));
        if self.window < 2 {
            return bad("window must be at least 2");
        }
        let positive = [
            self.sigma_pos,
            self.sigma_theta,
            self.radius,
            self.staleness_s,
        ];
        if !positive.iter().all(|v| *v > 0.0) {
            return bad("sigma_pos, sigma_theta, radius and staleness_s must be positive");
        }
        let g = Vector3::from(self.gravity);
        if !(g.norm() > 1e-9) || !g.iter().all(|c| c.is_finite()) {
            return bad("gravity must be a finite non-zero vector");
        }
        Ok(())
    }

    fn frame(&self) -> ExtrinsicsConfig {
        ExtrinsicsConfig {
            gravity: self.gravity,
            ..ExtrinsicsConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StairCandidate {
    pub pose: StairPose,
    /// Seconds on a monotonic clock.
    pub timestamp: f64,
    pub frame: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StairNode {
    pub id: u64,
    pub pose: StairPose,
    pub n_candidates: usize,
    pub sigma_pos: f64,
    pub sigma_theta: f64,
    /// The candidate window the node was published from.
    pub window: Vec<StairCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubmitEvent {
    None,
    Published(StairNode),
    /// The candidate lies within the radius of this node.
    Suppressed(u64),
}

/// Spread statistics of a candidate window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub mean_position: Point3<f64>,
    pub sigma_pos: f64,
    /// Undirected mean angle in `[-π/2, π/2)`.
    pub mean_line_angle: f64,
    pub sigma_theta: f64,
}

/// Sample statistics (`n - 1`) of poses; `None` for fewer than two.
pub fn cluster_stats(poses: &[&StairPose]) -> Option<ClusterStats> {
    let n = poses.len();
    if n < 2 {
        return None;
    }
    let mean = poses
        .iter()
        .map(|p| p.position.coords)
        .sum::<Vector3<f64>>()
        / n as f64;
    let sq: f64 = poses
        .iter()
        .map(|p| (p.position.coords - mean).norm_squared())
        .sum();
    let sigma_pos = (sq / (n - 1) as f64).sqrt();
    let line = circular_mean_half_turn(poses.iter().map(|p| p.theta))
        .unwrap_or_else(|| fold_half_turn(poses[0].theta));
    let sq_theta: f64 = poses
        .iter()
        .map(|p| fold_half_turn(p.theta - line).powi(2))
        .sum();
    Some(ClusterStats {
        mean_position: Point3::from(mean),
        sigma_pos,
        mean_line_angle: line,
        sigma_theta: (sq_theta / (n - 1) as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Default)]
struct Cluster {
    candidates: Vec<StairCandidate>,
}

impl Cluster {
    fn ground_centroid(&self, frame: &ExtrinsicsConfig) -> Vector2<f64> {
        self.candidates
            .iter()
            .map(|c| ground_project(&c.pose.position, frame))
            .sum::<Vector2<f64>>()
            / self.candidates.len() as f64
    }
}

/// Accumulates candidates and publishes nodes. Mutation goes through
/// `&mut self`, so a single writer is enforced by the borrow checker.
#[derive(Debug, Clone)]
pub struct Registry {
    cfg: RegistryConfig,
    frame: ExtrinsicsConfig,
    clusters: Vec<Cluster>,
    nodes: Vec<StairNode>,
    next_id: u64,
}

impl Registry {
    pub fn new(cfg: RegistryConfig) -> Result<Self, RegistryError> {
        cfg.validate()?;
        Ok(Self {
            frame: cfg.frame(),
            cfg,
            clusters: Vec::new(),
            nodes: Vec::new(),
            next_id: 0,
        })
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.cfg
    }

    /// Published nodes, in publication order.
    pub fn nodes(&self) -> &[StairNode] {
        &self.nodes
    }

    /// Candidates currently waiting in clusters.
    pub fn pending(&self) -> usize {
        self.clusters.iter().map(|c| c.candidates.len()).sum()
    }

    fn ground(&self, p: &Point3<f64>) -> Vector2<f64> {
        ground_project(p, &self.frame)
    }

    fn nearest_node(&self, g: &Vector2<f64>) -> Option<(u64, f64)> {
        self.nodes
            .iter()
            .map(|n| (n.id, (self.ground(&n.pose.position) - g).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    fn evict_stale(&mut self, now: f64) {
        let horizon = now - self.cfg.staleness_s;
        for c in &mut self.clusters {
            c.candidates.retain(|k| k.timestamp >= horizon);
        }
        self.clusters.retain(|c| !c.candidates.is_empty());
    }

    pub fn submit(&mut self, candidate: StairCandidate) -> SubmitEvent {
        self.evict_stale(candidate.timestamp);
        let g = self.ground(&candidate.pose.position);
        if let Some((id, dist)) = self.nearest_node(&g) {
            if dist <= self.cfg.radius {
                return SubmitEvent::Suppressed(id);
            }
        }

        let nearest = self
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c.ground_centroid(&self.frame) - g).norm()))
            .filter(|(_, d)| *d <= self.cfg.radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i);
        let idx = match nearest {
            Some(i) => {
                self.clusters[i].candidates.push(candidate);
                i
            }
            None => {
                self.clusters.push(Cluster {
                    candidates: vec![candidate],
                });
                self.clusters.len() - 1
            }
        };

        let k = self.cfg.window;
        let cluster = &mut self.clusters[idx];
        if cluster.candidates.len() < k {
            return SubmitEvent::None;
        }
        let excess = cluster.candidates.len() - k;
        cluster.candidates.drain(..excess);
        let window: Vec<&StairPose> = cluster.candidates.iter().map(|c| &c.pose).collect();
        let stats = cluster_stats(&window).expect("window holds at least two candidates");
        if stats.sigma_pos > self.cfg.sigma_pos || stats.sigma_theta > self.cfg.sigma_theta {
            return SubmitEvent::None;
        }
        let node_ground = self.ground(&stats.mean_position);
        if let Some((id, dist)) = self.nearest_node(&node_ground) {
            if dist <= self.cfg.radius {
                self.clusters.remove(idx);
                return SubmitEvent::Suppressed(id);
            }
        }
        let node = self.make_node(idx, &stats);
        self.clusters.remove(idx);
        self.nodes.push(node.clone());
        SubmitEvent::Published(node)
    }

    fn make_node(&mut self, idx: usize, stats: &ClusterStats) -> StairNode {
        let members = &self.clusters[idx].candidates;
        let n = members.len();
        // undirected mean, turned toward the mean heading
        let line = stats.mean_line_angle;
        let theta = match circular_mean_full_turn(members.iter().map(|c| c.pose.theta)) {
            Some(full) if wrap_full_turn(full - line).abs() > std::f64::consts::FRAC_PI_2 => {
                wrap_full_turn(line + std::f64::consts::PI)
            }
            _ => line,
        };
        let count = |d: Direction| members.iter().filter(|c| c.pose.direction == d).count();
        let (up, down, amb) = (
            count(Direction::Up),
            count(Direction::Down),
            count(Direction::Ambiguous),
        );
        let direction = if up > down && up > amb {
            Direction::Up
        } else if down > up && down > amb {
            Direction::Down
        } else {
            Direction::Ambiguous
        };
        let pose = StairPose {
            position: stats.mean_position,
            theta,
            orientation: angle_to_quaternion(theta, &self.frame),
            height: members.iter().map(|c| c.pose.height).sum::<f64>() / n as f64,
            direction,
            n_points: members.iter().map(|c| c.pose.n_points).sum(),
            n_lines: members.iter().map(|c| c.pose.n_lines).sum(),
            residual_mse: members.iter().map(|c| c.pose.residual_mse).sum::<f64>() / n as f64,
        };
        let id = self.next_id;
        self.next_id += 1;
        StairNode {
            id,
            pose,
            n_candidates: n,
            sigma_pos: stats.sigma_pos,
            sigma_theta: stats.sigma_theta,
            window: members.clone(),
        }
    }
}

/// One line of the node stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub position: [f64; 3],
    pub theta_rad: f64,
    pub direction: Direction,
    pub n_candidates: usize,
    pub sigma_pos_m: f64,
    pub sigma_theta_rad: f64,
    /// Frames of the publishing window, oldest first.
    pub frames: Vec<String>,
}

impl From<&StairNode> for NodeRecord {
    fn from(n: &StairNode) -> Self {
        Self {
            id: n.id,
            position: [n.pose.position.x, n.pose.position.y, n.pose.position.z],
            theta_rad: n.pose.theta,
            direction: n.pose.direction,
            n_candidates: n.n_candidates,
            sigma_pos_m: n.sigma_pos,
            sigma_theta_rad: n.sigma_theta,
            frames: n.window.iter().map(|c| c.frame.clone()).collect(),
        }
    }
}
