use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{top_n, Popularity, RankedList, Recommender};
use crate::data::BinaryMatrix;
use crate::{stream_rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WrmfConfig {
    pub factors: usize,
    pub reg: f64,
    /// Confidence of an observed cell is `1 + confidence`.
    pub confidence: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for WrmfConfig {
    fn default() -> Self {
        WrmfConfig {
            factors: 32,
            reg: 0.01,
            confidence: 40.0,
            iters: 15,
            seed: 0,
        }
    }
}

impl WrmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factors == 0 {
            return Err(Error::invalid("WRMF needs at least one factor"));
        }
        if !(self.reg > 0.0 && self.reg.is_finite()) {
            return Err(Error::invalid(format!(
                "WRMF regularisation must be positive, got {}",
                self.reg
            )));
        }
        if !(self.confidence >= 0.0 && self.confidence.is_finite()) {
            return Err(Error::invalid(format!(
                "WRMF confidence must be non-negative, got {}",
                self.confidence
            )));
        }
        if self.iters == 0 {
            return Err(Error::invalid("WRMF needs at least one iteration"));
        }
        Ok(())
    }
}

/// Weighted matrix factorisation for implicit feedback, fitted by
/// alternating least squares.
#[derive(Debug, Clone)]
pub struct Wrmf {
    train: BinaryMatrix,
    /// Users × f.
    pub user_factors: DMatrix<f64>,
    /// Items × f.
    pub item_factors: DMatrix<f64>,
    pop: Popularity,
}

/// Solves every row of `target` against the fixed factors `fixed`:
/// `(FᵀF + c·Σ_{j∈row} f_j f_jᵀ + reg·I) x = (1 + c) Σ_{j∈row} f_j`.
fn half_sweep(
    rows: impl Fn(usize) -> Vec<u32> + Sync,
    n_rows: usize,
    fixed: &DMatrix<f64>,
    cfg: &WrmfConfig,
) -> Result<DMatrix<f64>> {
    let f = cfg.factors;
    let gram = fixed.transpose() * fixed;
    let solved: Vec<Result<Vec<f64>>> = (0..n_rows)
        .into_par_iter()
        .map(|r| {
            let row = rows(r);
            if row.is_empty() {
                return Ok(vec![0.0; f]);
            }
            let mut a = gram.clone();
            let mut b = DVector::<f64>::zeros(f);
            for &j in &row {
                let y = fixed.row(j as usize).transpose();
                a.ger(cfg.confidence, &y, &y, 1.0);
                b.axpy(1.0 + cfg.confidence, &y, 1.0);
            }
            for d in 0..f {
                a[(d, d)] += cfg.reg;
            }
            let chol = a.cholesky().ok_or_else(|| {
                Error::Numerical(format!(
                    "WRMF normal equations for row {r} are not positive definite"
                ))
            })?;
            Ok(chol.solve(&b).iter().copied().collect())
        })
        .collect();
    let mut out = DMatrix::<f64>::zeros(n_rows, f);
    for (r, x) in solved.into_iter().enumerate() {
        let x = x?;
        for d in 0..f {
            out[(r, d)] = x[d];
        }
    }
    Ok(out)
}

impl Wrmf {
    pub fn train(train: &BinaryMatrix, cfg: &WrmfConfig) -> Result<Self> {
        Ok(Self::train_traced(train, cfg)?.0)
    }

    /// Also returns the objective after initialisation and after every
    /// half-sweep.
    pub fn train_traced(train: &BinaryMatrix, cfg: &WrmfConfig) -> Result<(Self, Vec<f64>)> {
        cfg.validate()?;
        if train.n_users() == 0 || train.n_items() == 0 {
            return Err(Error::Empty("WRMF needs a non-empty matrix".into()));
        }
        let init = |n: usize, key: u64| {
            let mut rng = stream_rng(cfg.seed, "wrmf-init", &[key]);
            DMatrix::<f64>::from_fn(n, cfg.factors, |_, _| {
                0.01 * rng.sample::<f64, _>(StandardNormal)
            })
        };
        let mut m = Wrmf {
            train: train.clone(),
            user_factors: init(train.n_users(), 0),
            item_factors: init(train.n_items(), 1),
            pop: Popularity::train(train)?,
        };
        let mut trace = vec![m.objective(cfg)];
        for _ in 0..cfg.iters {
            m.user_factors = half_sweep(
                |u| train.row(u).to_vec(),
                train.n_users(),
                &m.item_factors,
                cfg,
            )?;
            trace.push(m.objective(cfg));
            m.item_factors = half_sweep(
                |i| train.col(i).to_vec(),
                train.n_items(),
                &m.user_factors,
                cfg,
            )?;
            trace.push(m.objective(cfg));
        }
        Ok((m, trace))
    }

    /// `Σ_{u,i} c_ui (p_ui − x_u·y_i)² + reg (‖X‖² + ‖Y‖²)`.
    pub fn objective(&self, cfg: &WrmfConfig) -> f64 {
        let x = &self.user_factors;
        let y = &self.item_factors;
        // every cell as if unobserved: Σ (x·y)² = tr(XᵀX YᵀY)
        let base = ((x.transpose() * x).component_mul(&(y.transpose() * y))).sum();
        let observed: f64 = (0..self.train.n_users())
            .into_par_iter()
            .map(|u| {
                self.train
                    .row(u)
                    .iter()
                    .map(|&i| {
                        let s = x.row(u).dot(&y.row(i as usize));
                        (1.0 + cfg.confidence) * (1.0 - s) * (1.0 - s) - s * s
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        base + observed + cfg.reg * (x.norm_squared() + y.norm_squared())
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        self.user_factors
            .row(user)
            .dot(&self.item_factors.row(item))
    }
}

impl Recommender for Wrmf {
    fn recommend(&self, user: usize, n: usize) -> RankedList {
        let consumed = self.train.row(user);
        if consumed.is_empty() {
            return self.pop.recommend(user, n);
        }
        let scores = &self.item_factors * self.user_factors.row(user).transpose();
        let scored: Vec<(usize, f64)> = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| consumed.binary_search(&(*i as u32)).is_err())
            .map(|(i, &s)| (i, s))
            .collect();
        RankedList::new(user, top_n(scored, n))
    }

    fn n_users(&self) -> usize {
        self.train.n_users()
    }
}
