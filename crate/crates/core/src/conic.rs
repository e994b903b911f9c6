//! Thin builder over Clarabel for the small LP/SOCP/exp-cone programs used
//! throughout the crate. All programs minimize a linear objective.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT,
};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("program is infeasible")]
    Infeasible,
    #[error("program is unbounded")]
    Unbounded,
    #[error("solver failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Tight,
    Unscaled,
    Regularized,
    Loose,
}

/// Affine expression `Σ coef·x[var] + constant`.
#[derive(Debug, Clone, Default)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: usize) -> Self {
        Affine {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, v: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add(mut self, other: &Affine, scale: f64) -> Self {
        self.terms
            .extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
        self.constant += other.constant * scale;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

enum Block {
    Zero(usize),
    NonNeg(usize),
    Soc(usize),
    Exp,
}

/// A conic program `min cᵀx` with constraints given as affine expressions
/// that must lie in a cone.
pub struct ConicProgram {
    n: usize,
    objective: Vec<f64>,
    rows: Vec<Affine>,
    blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Absolute duality gap reported by the interior point method.
    pub gap: f64,
    /// Max of the primal and dual residuals.
    pub residual: f64,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn certificate(&self) -> f64 {
        self.gap.abs().max(self.residual)
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        ConicProgram {
            n: 0,
            objective: Vec::new(),
            rows: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Allocates `count` new variables and returns the index of the first.
    pub fn add_vars(&mut self, count: usize) -> usize {
        let first = self.n;
        self.n += count;
        self.objective.resize(self.n, 0.0);
        first
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn set_cost(&mut self, v: usize, c: f64) {
        self.objective[v] = c;
    }

    /// `e == 0`
    pub fn eq(&mut self, e: Affine) {
        self.rows.push(e);
        self.blocks.push(Block::Zero(1));
    }

    /// `e >= 0`
    pub fn nonneg(&mut self, e: Affine) {
        self.rows.push(e);
        self.blocks.push(Block::NonNeg(1));
    }

    /// `‖(e[1], …, e[n])‖₂ <= e[0]`
    pub fn soc(&mut self, es: Vec<Affine>) {
        let d = es.len();
        self.rows.extend(es);
        self.blocks.push(Block::Soc(d));
    }

    /// `e[1]·exp(e[0]/e[1]) <= e[2]`, `e[1] > 0`
    pub fn exp_cone(&mut self, e0: Affine, e1: Affine, e2: Affine) {
        self.rows.extend([e0, e1, e2]);
        self.blocks.push(Block::Exp);
    }

    fn cones(&self) -> Vec<SupportedConeT<f64>> {
        // merge runs of scalar blocks so Clarabel sees few cones
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        for b in &self.blocks {
            match (b, cones.last_mut()) {
                (Block::Zero(k), Some(SupportedConeT::ZeroConeT(n))) => *n += k,
                (Block::NonNeg(k), Some(SupportedConeT::NonnegativeConeT(n))) => *n += k,
                (Block::Zero(k), _) => cones.push(SupportedConeT::ZeroConeT(*k)),
                (Block::NonNeg(k), _) => cones.push(SupportedConeT::NonnegativeConeT(*k)),
                (Block::Soc(k), _) => cones.push(SupportedConeT::SecondOrderConeT(*k)),
                (Block::Exp, _) => cones.push(SupportedConeT::ExponentialConeT()),
            }
        }
        cones
    }

    fn settings(variant: Variant) -> DefaultSettings<f64> {
        let tol = if variant == Variant::Loose { 1e-8 } else { 1e-10 };
        DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(200)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(tol)
            // AlmostSolved must still meet the certificate threshold
            .reduced_tol_gap_abs(1e-8)
            .reduced_tol_gap_rel(1e-8)
            .reduced_tol_feas(1e-8)
            .equilibrate_enable(variant != Variant::Unscaled)
            .static_regularization_constant(if variant == Variant::Regularized { 1e-7 } else { 1e-8 })
            .build()
            .expect("static settings are valid")
    }

    /// Solves with tight tolerances. Programs with many degenerate cones
    /// (zero-length segments sitting at a cone apex) occasionally stall, so
    /// a stalled solve is retried without equilibration, then with heavier
    /// regularization, then at default tolerances.
    pub fn solve(&self) -> Result<ConicSolution, ConicError> {
        let mut last = None;
        for v in [Variant::Tight, Variant::Unscaled, Variant::Regularized, Variant::Loose] {
            match self.solve_with(v) {
                Err(e @ ConicError::Failed(_)) => last = Some(e),
                other => return other,
            }
        }
        Err(last.expect("at least one attempt"))
    }

        fn solve_with(&self, variant: Variant) -> Result<ConicSolution, ConicError> {
        let m = self.rows.len();
        let n = self.n.max(1);
        // Clarabel form: A x + s = b, s in K. With s = e(x) = const + coeffs·x,
        // A = -coeffs and b = const.
        let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::with_capacity(m);
        for (r, e) in self.rows.iter().enumerate() {
            for &(v, c) in &e.terms {
                ri.push(r);
                ci.push(v);
                vals.push(-c);
            }
            b.push(e.constant);
        }
        let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);
        let p = CscMatrix::zeros((n, n));
        let mut q = self.objective.clone();
        q.resize(n, 0.0);
        let cones = self.cones();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, Self::settings(variant))
            .map_err(|e| ConicError::Failed(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let info = &solver.info;
                Ok(ConicSolution {
                    x: sol.x[..self.n].to_vec(),
                    objective: sol.obj_val,
                    gap: info.gap_abs,
                    residual: info.res_primal.max(info.res_dual),
                    iterations: sol.iterations,
                })
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Err(ConicError::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                Err(ConicError::Unbounded)
            }
            other => Err(ConicError::Failed(format!("{other:?}"))),
        }
    }
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_box() {
        // min x + y s.t. x >= 1, y >= 2
        let mut p = ConicProgram::new();
        let x = p.add_vars(2);
        p.set_cost(x, 1.0);
        p.set_cost(x + 1, 1.0);
        p.nonneg(Affine::var(x).plus(-1.0));
        p.nonneg(Affine::var(x + 1).plus(-2.0));
        let s = p.solve().unwrap();
        assert!((s.objective - 3.0).abs() < 1e-8);
        assert!(s.certificate() < 1e-8);
    }

    #[test]
    fn socp_distance() {
        // min ‖(x - 3, x - 1)‖ over x: optimum at x = 2, value √2
        let mut p = ConicProgram::new();
        let x = p.add_vars(1);
        let t = p.add_vars(1);
        p.set_cost(t, 1.0);
        p.soc(vec![
            Affine::var(t),
            Affine::var(x).plus(-3.0),
            Affine::var(x).plus(-1.0),
        ]);
        let s = p.solve().unwrap();
        assert!((s.x[x] - 2.0).abs() < 1e-7);
        assert!((s.objective - 2f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn exp_cone_log() {
        // max t s.t. t <= ln(y), y <= e  =>  t = 1
        let mut p = ConicProgram::new();
        let t = p.add_vars(1);
        let y = p.add_vars(1);
        p.set_cost(t, -1.0);
        p.exp_cone(Affine::var(t), Affine::constant(1.0), Affine::var(y));
        p.nonneg(Affine::var(y).term(y, -2.0).plus(std::f64::consts::E));
        let s = p.solve().unwrap();
        assert!((s.x[t] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_detected() {
        let mut p = ConicProgram::new();
        let x = p.add_vars(1);
        p.nonneg(Affine::var(x).plus(-1.0));
        p.nonneg(Affine::var(x).term(x, -2.0)); // -x >= 0
        assert_eq!(p.solve().unwrap_err(), ConicError::Infeasible);
    }
}
