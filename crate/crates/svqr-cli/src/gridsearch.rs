//! Exhaustive hyperparameter search over power-of-two grids.
//!
//! `q` and `C` sweep `2^i` for the configured exponent set, crossed with a
//! `nu` or `eps` grid depending on the model family. Every cell is fitted
//! on the training split and scored by pinball loss at the target quantile
//! on the validation split; ties break lexicographically by
//! (q, C, nu/eps), so the result is independent of evaluation order.
//! For the nu model the C axis is additionally scaled by the training
//! size, matching the per-point weighting of its objective.

use std::time::Instant;

use rayon::prelude::*;
use svqr::data::Dataset;
use svqr::error::{Error, Result};
use svqr::kernel::KernelSpec;
use svqr::loss::{pinball_loss, Tau};
use svqr::model::{fit, FitConfig, ModelKind};

use crate::experiments::split_dataset;
use crate::report::CellRecord;

pub struct GridSearchSpec {
    pub model: ModelKind,
    pub tau: Tau,
    pub exponents: Vec<i32>,
    pub nu_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub val_frac: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

pub const DEFAULT_EXPONENTS: [i32; 11] = [-15, -12, -9, -6, -3, 0, 3, 6, 9, 12, 15];

impl GridSearchSpec {
    pub fn third_axis(&self) -> Vec<Option<f64>> {
        match self.model {
            ModelKind::Nu => self.nu_grid.iter().copied().map(Some).collect(),
            ModelKind::Eps => self.eps_grid.iter().copied().map(Some).collect(),
            ModelKind::Standard => vec![None],
        }
    }
}

pub struct GridSearchOutcome {
    pub best: FitConfig,
    pub best_loss: f64,
    pub records: Vec<CellRecord>,
}

pub fn search(data: &Dataset, spec: &GridSearchSpec) -> Result<GridSearchOutcome> {
    if !(spec.val_frac > 0.0 && spec.val_frac < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction must lie in (0,1), got {}",
            spec.val_frac
        )));
    }
    let (train, val) = split_dataset(data, 1.0 - spec.val_frac, spec.seed)?;
    let l_train = train.len();

    struct CellSpec {
        q: f64,
        c: f64,
        third: Option<f64>,
    }
    let mut cells = Vec::new();
    for &qi in &spec.exponents {
        for &ci in &spec.exponents {
            for &third in &spec.third_axis() {
                let c_base = (ci as f64).exp2();
                let c = match spec.model {
                    ModelKind::Nu => c_base * l_train as f64,
                    _ => c_base,
                };
                cells.push(CellSpec {
                    q: (qi as f64).exp2(),
                    c,
                    third,
                });
            }
        }
    }

    let scored: Vec<(CellRecord, Option<FitConfig>)> = cells
        .par_iter()
        .map(|cs| -> Result<(CellRecord, Option<FitConfig>)> {
            let start = Instant::now();
            let cfg = match spec.model {
                ModelKind::Nu => FitConfig::nu_svqr(spec.tau, cs.c, cs.third.unwrap(), KernelSpec::rbf(cs.q)),
                ModelKind::Eps => FitConfig::eps_svqr(spec.tau, cs.c, cs.third.unwrap(), KernelSpec::rbf(cs.q)),
                ModelKind::Standard => FitConfig::standard_svqr(spec.tau, cs.c, KernelSpec::rbf(cs.q)),
            }
            .with_solver(spec.tol, spec.max_iter);

            let mut rec = CellRecord::blank(spec.tau.value(), cs.c, cs.q, l_train, spec.seed, 0);
            match spec.model {
                ModelKind::Nu => rec.nu = cs.third,
                ModelKind::Eps => rec.eps_param = cs.third,
                ModelKind::Standard => {}
            }
            match fit(&train, &cfg) {
                Ok(model) => {
                    let preds = model.predict(&val.x)?;
                    let loss: f64 = val
                        .y
                        .iter()
                        .zip(&preds)
                        .map(|(y, p)| pinball_loss(spec.tau, y - p))
                        .sum::<f64>()
                        / val.len() as f64;
                    rec.validation_loss = Some(loss);
                    rec.eps_recovered = Some(model.eps_width);
                    rec.degenerate = model.diagnostics.recovery_degenerate;
                    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                    Ok((rec, Some(cfg)))
                }
                // a cell that fails to converge is recorded but never wins
                Err(Error::NonConvergence { .. }) => {
                    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                    Ok((rec, None))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    // Lexicographic tie-break on (q, C, third): cells are generated in that
    // order, so the first strict improvement wins.
    let mut best: Option<(f64, FitConfig)> = None;
    for (rec, cfg) in &scored {
        if let (Some(loss), Some(cfg)) = (rec.validation_loss, cfg) {
            if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, *cfg));
            }
        }
    }
    let (best_loss, best) =
        best.ok_or_else(|| Error::invalid("no grid cell produced a usable fit"))?;

    Ok(GridSearchOutcome {
        best,
        best_loss,
        records: scored.into_iter().map(|(r, _)| r).collect(),
    })
}
