//! Levenberg-Marquardt over all free poses and map points.
//!
//! Each outer iteration linearizes every active factor into block normal
//! equations (pose–pose, pose–point, point–point) and solves the damped system
//! `(JᵀJ + λ·D)·δ = −Jᵀr` with `D = diag(JᵀJ)`. The default solver eliminates
//! the 3×3 point blocks first (Schur complement) and factors the reduced pose
//! system densely; a fully dense solver is kept for small graphs and tests.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};
use thiserror::Error;

use crate::graph::{FactorGraph, FactorRef, GraphError, RangeLoss, VariableId};

/// Lower clamp on the Marquardt scaling so parameters without information
/// (zero Jacobian columns) still receive damping.
pub const MIN_DAMPING_DIAGONAL: f64 = 1e-6;
const MAX_DAMPING_DIAGONAL: f64 = 1e32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    #[default]
    Schur,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub cost_rel_tolerance: f64,
    pub step_norm_tolerance: f64,
    pub max_lambda: f64,
    pub solver: LinearSolver,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.5,
            cost_rel_tolerance: 1e-8,
            step_norm_tolerance: 1e-10,
            max_lambda: 1e10,
            solver: LinearSolver::Schur,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let positive = [
            self.initial_lambda,
            self.cost_rel_tolerance,
            self.step_norm_tolerance,
            self.max_lambda,
        ];
        if self.max_iterations == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(OptimizeError::InvalidConfig("iteration cap, lambda and tolerances must be positive"));
        }
        if !(self.lambda_up > 1.0 && self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return Err(OptimizeError::InvalidConfig("require lambda_up > 1 > lambda_down > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ConvergedCost,
    ConvergedStep,
    MaxIterations,
    LambdaOverflow,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ConvergedCost => "converged-cost",
            Termination::ConvergedStep => "converged-step",
            Termination::MaxIterations => "max-iterations",
            Termination::LambdaOverflow => "lambda-overflow",
        }
    }
}

/// One trial step. Rejected trials are recorded too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    /// Outer iterations (linearizations) performed.
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub range_loss: RangeLoss,
}

impl LmReport {
    pub fn accepted_steps(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }

    /// True when every accepted trial lowered the cost below the previous one.
    pub fn accepted_costs_strictly_decrease(&self) -> bool {
        let mut prev = self.initial_cost;
        for r in self.records.iter().filter(|r| r.accepted) {
            if !(r.cost < prev) {
                return false;
            }
            prev = r.cost;
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite residual in {factor}")]
    NonFiniteCost { factor: FactorRef },
    #[error("normal equations are rank deficient; under-constrained variables: {variables:?}")]
    RankDeficient { variables: Vec<VariableId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    /// Slots (indices into the free-variable ordering) that lost rank.
    #[error("rank-deficient normal equations (pose slots {poses:?}, point slots {points:?})")]
    RankDeficient { poses: Vec<usize>, points: Vec<usize> },
}

/// Maps free graph variables to contiguous slots.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pose_slot: Vec<Option<usize>>,
    point_slot: Vec<Option<usize>>,
    free_poses: Vec<usize>,
    free_points: Vec<usize>,
}

impl VariableLayout {
    pub fn new(graph: &FactorGraph) -> Self {
        let mut free_poses = Vec::new();
        let pose_slot = (0..graph.poses().len())
            .map(|i| {
                (!graph.is_fixed(VariableId::Pose(i))).then(|| {
                    free_poses.push(i);
                    free_poses.len() - 1
                })
            })
            .collect();
        let mut free_points = Vec::new();
        let point_slot = (0..graph.points().len())
            .map(|i| {
                (!graph.is_fixed(VariableId::Point(i))).then(|| {
                    free_points.push(i);
                    free_points.len() - 1
                })
            })
            .collect();
        Self { pose_slot, point_slot, free_poses, free_points }
    }

    pub fn num_free_poses(&self) -> usize {
        self.free_poses.len()
    }

    pub fn num_free_points(&self) -> usize {
        self.free_points.len()
    }

    /// Total number of scalar parameters.
    pub fn dimension(&self) -> usize {
        6 * self.free_poses.len() + 3 * self.free_points.len()
    }

    pub fn pose_slot(&self, pose: usize) -> Option<usize> {
        self.pose_slot[pose]
    }

    pub fn point_slot(&self, point: usize) -> Option<usize> {
        self.point_slot[point]
    }

    pub fn free_poses(&self) -> &[usize] {
        &self.free_poses
    }

    pub fn free_points(&self) -> &[usize] {
        &self.free_points
    }
}

/// Block-structured `JᵀJ` and gradient `Jᵀr` over free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub pose_blocks: Vec<Matrix6<f64>>,
    pub point_blocks: Vec<Matrix3<f64>>,
    /// Per free point: `(pose slot, JₚᵀJₗ)` for every pose observing it.
    pub cross: Vec<Vec<(usize, Matrix6x3<f64>)>>,
    pub pose_gradient: Vec<Vector6<f64>>,
    pub point_gradient: Vec<Vector3<f64>>,
}

impl NormalEquations {
    pub fn zeros(n_poses: usize, n_points: usize) -> Self {
        Self {
            pose_blocks: vec![Matrix6::zeros(); n_poses],
            point_blocks: vec![Matrix3::zeros(); n_points],
            cross: vec![Vec::new(); n_points],
            pose_gradient: vec![Vector6::zeros(); n_poses],
            point_gradient: vec![Vector3::zeros(); n_points],
        }
    }

    pub fn num_poses(&self) -> usize {
        self.pose_blocks.len()
    }

    pub fn num_points(&self) -> usize {
        self.point_blocks.len()
    }

    pub fn dimension(&self) -> usize {
        6 * self.num_poses() + 3 * self.num_points()
    }

    /// Adds `block` to the pose–point coupling of (`pose`, `point`).
    pub fn add_cross(&mut self, pose: usize, point: usize, block: &Matrix6x3<f64>) {
        let entries = &mut self.cross[point];
        match entries.iter_mut().find(|(p, _)| *p == pose) {
            Some((_, b)) => *b += block,
            None => entries.push((pose, *block)),
        }
    }

    /// Dense `(JᵀJ, Jᵀr)` with poses ordered before points.
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dimension();
        let off = 6 * self.num_poses();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for (i, b) in self.pose_blocks.iter().enumerate() {
            h.fixed_view_mut::<6, 6>(6 * i, 6 * i).copy_from(b);
            g.fixed_rows_mut::<6>(6 * i).copy_from(&self.pose_gradient[i]);
        }
        for (j, b) in self.point_blocks.iter().enumerate() {
            h.fixed_view_mut::<3, 3>(off + 3 * j, off + 3 * j).copy_from(b);
            g.fixed_rows_mut::<3>(off + 3 * j).copy_from(&self.point_gradient[j]);
            for (i, w) in &self.cross[j] {
                h.fixed_view_mut::<6, 3>(6 * i, off + 3 * j).copy_from(w);
                h.fixed_view_mut::<3, 6>(off + 3 * j, 6 * i).copy_from(&w.transpose());
            }
        }
        (h, g)
    }
}

/// Parameter update for every free variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub poses: Vec<Vector6<f64>>,
    pub points: Vec<Vector3<f64>>,
}

impl Step {
    pub fn norm(&self) -> f64 {
        let sq: f64 = self.poses.iter().map(|v| v.norm_squared()).sum::<f64>()
            + self.points.iter().map(|v| v.norm_squared()).sum::<f64>();
        sq.sqrt()
    }

    pub fn to_dense(&self) -> DVector<f64> {
        let mut out = DVector::zeros(6 * self.poses.len() + 3 * self.points.len());
        for (i, p) in self.poses.iter().enumerate() {
            out.fixed_rows_mut::<6>(6 * i).copy_from(p);
        }
        let off = 6 * self.poses.len();
        for (j, p) in self.points.iter().enumerate() {
            out.fixed_rows_mut::<3>(off + 3 * j).copy_from(p);
        }
        out
    }

    fn from_dense(x: &DVector<f64>, n_poses: usize, n_points: usize) -> Self {
        let off = 6 * n_poses;
        Self {
            poses: (0..n_poses).map(|i| x.fixed_rows::<6>(6 * i).into_owned()).collect(),
            points: (0..n_points).map(|j| x.fixed_rows::<3>(off + 3 * j).into_owned()).collect(),
        }
    }
}

fn damping(d: f64) -> f64 {
    d.clamp(MIN_DAMPING_DIAGONAL, MAX_DAMPING_DIAGONAL)
}

fn damp6(m: &Matrix6<f64>, lambda: f64) -> Matrix6<f64> {
    let mut out = *m;
    if lambda != 0.0 {
        for k in 0..6 {
            out[(k, k)] += lambda * damping(m[(k, k)]);
        }
    }
    out
}

fn damp3(m: &Matrix3<f64>, lambda: f64) -> Matrix3<f64> {
    let mut out = *m;
    if lambda != 0.0 {
        for k in 0..3 {
            out[(k, k)] += lambda * damping(m[(k, k)]);
        }
    }
    out
}

/// Solves the damped system by eliminating the point blocks (Schur complement).
pub fn solve_normal_equations(eq: &NormalEquations, lambda: f64) -> Result<Step, SolveError> {
    let np = eq.num_poses();
    let nl = eq.num_points();

    let mut v_inv = Vec::with_capacity(nl);
    let mut bad_points = Vec::new();
    for (j, b) in eq.point_blocks.iter().enumerate() {
        match damp3(b, lambda).cholesky() {
            Some(c) => v_inv.push(c.inverse()),
            None => {
                bad_points.push(j);
                v_inv.push(Matrix3::zeros());
            }
        }
    }
    if !bad_points.is_empty() {
        return Err(SolveError::RankDeficient { poses: Vec::new(), points: bad_points });
    }

    let n = 6 * np;
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, b) in eq.pose_blocks.iter().enumerate() {
        s.fixed_view_mut::<6, 6>(6 * i, 6 * i).copy_from(&damp6(b, lambda));
        rhs.fixed_rows_mut::<6>(6 * i).copy_from(&(-eq.pose_gradient[i]));
    }
    for (j, (entries, vj)) in eq.cross.iter().zip(&v_inv).enumerate().take(nl) {
        let wv: Vec<Matrix6x3<f64>> = entries.iter().map(|(_, w)| w * vj).collect();
        for (k, (a, _)) in entries.iter().enumerate() {
            let mut r = rhs.fixed_rows_mut::<6>(6 * a);
            r += wv[k] * eq.point_gradient[j];
            for (c, w_c) in entries {
                let mut blk = s.fixed_view_mut::<6, 6>(6 * a, 6 * c);
                blk -= wv[k] * w_c.transpose();
            }
        }
    }

    let dp = if n == 0 {
        DVector::zeros(0)
    } else {
        let chol = s.clone().cholesky().ok_or_else(|| SolveError::RankDeficient {
            poses: weak_pose_slots(&s),
            points: Vec::new(),
        })?;
        chol.solve(&rhs)
    };

    let poses: Vec<Vector6<f64>> = (0..np).map(|i| dp.fixed_rows::<6>(6 * i).into_owned()).collect();
    let points = (0..nl)
        .map(|j| {
            let mut b = -eq.point_gradient[j];
            for (a, w) in &eq.cross[j] {
                b -= w.transpose() * poses[*a];
            }
            v_inv[j] * b
        })
        .collect();
    Ok(Step { poses, points })
}

/// Solves the full damped system with a dense Cholesky factorization.
pub fn solve_dense(eq: &NormalEquations, lambda: f64) -> Result<Step, SolveError> {
    let (mut h, g) = eq.to_dense();
    if lambda != 0.0 {
        for k in 0..h.nrows() {
            let d = h[(k, k)];
            h[(k, k)] += lambda * damping(d);
        }
    }
    let chol = h.clone().cholesky().ok_or_else(|| {
        let np = eq.num_poses();
        let weak = weak_slots(&h);
        let poses = weak.iter().filter(|&&k| k < 6 * np).map(|k| k / 6).collect::<Vec<_>>();
        let points = weak.iter().filter(|&&k| k >= 6 * np).map(|k| (k - 6 * np) / 3).collect::<Vec<_>>();
        SolveError::RankDeficient { poses: dedup(poses), points: dedup(points) }
    })?;
    let x = chol.solve(&(-g));
    Ok(Step::from_dense(&x, eq.num_poses(), eq.num_points()))
}

fn dedup(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Scalar rows whose diagonal is negligible relative to the largest one.
fn weak_slots(h: &DMatrix<f64>) -> Vec<usize> {
    let max = (0..h.nrows()).map(|k| h[(k, k)].abs()).fold(0.0, f64::max);
    (0..h.nrows()).filter(|&k| !(h[(k, k)] > 1e-12 * max)).collect()
}

fn weak_pose_slots(s: &DMatrix<f64>) -> Vec<usize> {
    let weak = dedup(weak_slots(s).into_iter().map(|k| k / 6).collect());
    if weak.is_empty() {
        (0..s.nrows() / 6).collect()
    } else {
        weak
    }
}

/// Normal equations and cost at the current iterate, with the set of
/// factors that were active during linearization.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub layout: VariableLayout,
    pub equations: NormalEquations,
    pub cost: f64,
    pub active_reprojection: Vec<bool>,
    pub active_range: Vec<bool>,
}

impl Linearization {
    /// Gradient of the cost (`2·Jᵀr`) as a dense vector, poses first.
    pub fn cost_gradient(&self) -> DVector<f64> {
        self.equations.to_dense().1 * 2.0
    }
}

/// Evaluates all factors and accumulates the block normal equations.
pub fn linearize(graph: &FactorGraph) -> Result<Linearization, OptimizeError> {
    let layout = VariableLayout::new(graph);
    let mut eq = NormalEquations::zeros(layout.num_free_poses(), layout.num_free_points());
    let mut cost = 0.0;

    let n_reproj = graph.reprojection_factors().len();
    let mut active_reprojection = vec![false; n_reproj];
    for (i, f) in graph.reprojection_factors().iter().enumerate() {
        let Some(lin) = graph.reprojection_residual(i) else {
            continue;
        };
        if !lin.residual.iter().all(|v| v.is_finite()) {
            return Err(OptimizeError::NonFiniteCost { factor: FactorRef::Reprojection(i) });
        }
        active_reprojection[i] = true;
        cost += lin.residual.norm_squared();
        let ps = layout.pose_slot(f.pose);
        let ls = layout.point_slot(f.point);
        if let Some(a) = ps {
            eq.pose_blocks[a] += lin.d_pose.transpose() * lin.d_pose;
            eq.pose_gradient[a] += lin.d_pose.transpose() * lin.residual;
        }
        if let Some(b) = ls {
            eq.point_blocks[b] += lin.d_point.transpose() * lin.d_point;
            eq.point_gradient[b] += lin.d_point.transpose() * lin.residual;
        }
        if let (Some(a), Some(b)) = (ps, ls) {
            eq.add_cross(a, b, &(lin.d_pose.transpose() * lin.d_point));
        }
    }

    let loss = graph.range_loss();
    let n_range = graph.range_factors().len();
    let mut active_range = vec![false; n_range];
    for (i, f) in graph.range_factors().iter().enumerate() {
        let Some(lin) = graph.range_residual(i) else {
            continue;
        };
        if !lin.residual.is_finite() {
            return Err(OptimizeError::NonFiniteCost { factor: FactorRef::Range(i) });
        }
        active_range[i] = true;
        cost += loss.cost(lin.residual);
        if let Some(a) = layout.pose_slot(f.pose) {
            let w = loss.sqrt_weight(lin.residual);
            let j = lin.d_pose * w;
            eq.pose_blocks[a] += j.transpose() * j;
            eq.pose_gradient[a] += j.transpose() * (lin.residual * w);
        }
    }

    Ok(Linearization {
        layout,
        equations: eq,
        cost,
        active_reprojection,
        active_range,
    })
}

/// Cost restricted to the factors active at linearization time. A factor
/// that became singular at the trial point makes the trial infinitely bad.
fn masked_cost(graph: &FactorGraph, lin: &Linearization) -> f64 {
    let mut cost = 0.0;
    for (i, _) in lin.active_reprojection.iter().enumerate().filter(|(_, a)| **a) {
        match graph.reprojection_error(i) {
            Some(r) => cost += r.norm_squared(),
            None => return f64::INFINITY,
        }
    }
    let loss = graph.range_loss();
    for (i, _) in lin.active_range.iter().enumerate().filter(|(_, a)| **a) {
        match graph.range_error(i) {
            Some(r) => cost += loss.cost(r),
            None => return f64::INFINITY,
        }
    }
    cost
}

fn retract(graph: &FactorGraph, layout: &VariableLayout, step: &Step) -> FactorGraph {
    let mut out = graph.clone();
    for (slot, &i) in layout.free_poses().iter().enumerate() {
        out.set_pose(i, graph.pose(i).retract(&step.poses[slot]));
    }
    for (slot, &j) in layout.free_points().iter().enumerate() {
        out.set_point(j, graph.point(j) + step.points[slot]);
    }
    out
}

fn slots_to_ids(layout: &VariableLayout, err: SolveError) -> OptimizeError {
    let SolveError::RankDeficient { poses, points } = err;
    let variables = poses
        .into_iter()
        .map(|s| VariableId::Pose(layout.free_poses()[s]))
        .chain(points.into_iter().map(|s| VariableId::Point(layout.free_points()[s])))
        .collect();
    OptimizeError::RankDeficient { variables }
}

/// Minimizes the total graph cost. Fixed variables are never modified.
pub fn optimize(graph: &FactorGraph, config: &LmConfig) -> Result<(FactorGraph, LmReport), OptimizeError> {
    config.validate()?;
    graph.validate()?;

    let mut current = graph.clone();
    let mut lin = linearize(&current)?;
    let initial_cost = lin.cost;
    let mut cost = lin.cost;
    let mut lambda = config.initial_lambda;
    let mut records = Vec::new();
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    if cost == 0.0 {
        termination = Termination::ConvergedCost;
    } else {
        'outer: while iterations < config.max_iterations {
            iterations += 1;
            loop {
                let step = match config.solver {
                    LinearSolver::Schur => solve_normal_equations(&lin.equations, lambda),
                    LinearSolver::Dense => solve_dense(&lin.equations, lambda),
                }
                .map_err(|e| slots_to_ids(&lin.layout, e))?;
                let step_norm = step.norm();
                if step_norm < config.step_norm_tolerance {
                    records.push(IterationRecord { iteration: iterations, cost, lambda, step_norm, accepted: false });
                    termination = Termination::ConvergedStep;
                    break 'outer;
                }

                let trial = retract(&current, &lin.layout, &step);
                let trial_cost = masked_cost(&trial, &lin);
                let accepted = trial_cost.is_finite() && trial_cost < cost;
                records.push(IterationRecord { iteration: iterations, cost: trial_cost, lambda, step_norm, accepted });

                if accepted {
                    let relative = (cost - trial_cost) / cost;
                    current = trial;
                    lambda *= config.lambda_down;
                    if trial_cost == 0.0 || relative < config.cost_rel_tolerance {
                        termination = Termination::ConvergedCost;
                        break 'outer;
                    }
                    lin = linearize(&current)?;
                    cost = lin.cost;
                    break;
                }

                lambda *= config.lambda_up;
                if lambda > config.max_lambda {
                    termination = Termination::LambdaOverflow;
                    break 'outer;
                }
            }
        }
    }

    let final_cost = current.total_cost();
    let report = LmReport {
        iterations,
        initial_cost,
        final_cost,
        records,
        termination,
        range_loss: graph.range_loss(),
    };
    Ok((current, report))
}
