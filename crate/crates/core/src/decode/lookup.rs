use crate::decoder::{DecoderModel, PredictionState};
use crate::error::{Error, Result};
use crate::math::Matrix;

/// Default cap on the number of contexts a lookup table may hold.
pub const DEFAULT_LOOKUP_BUDGET: usize = 1_000_000;

/// Precomputed prediction outputs for every length-N context.
///
/// Context ids include the pad, so the table has `(|V| + 1)^N` rows. Row
/// index is `Σ_n id_n · (|V| + 1)^n` with `n = 0` the most recent label.
#[derive(Clone, Debug, PartialEq)]
pub struct LookupTable {
    history: usize,
    num_ids: usize,
    table: Matrix,
}

impl LookupTable {
    pub fn from_parts(history: usize, num_ids: usize, table: Matrix) -> Result<Self> {
        let rows = num_ids
            .checked_pow(history as u32)
            .ok_or_else(|| Error::Capacity("lookup table size overflows".into()))?;
        if table.rows() != rows {
            return Err(Error::Validation(format!(
                "lookup table has {} rows, expected {num_ids}^{history} = {rows}",
                table.rows()
            )));
        }
        Ok(Self { history, num_ids, table })
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn num_ids(&self) -> usize {
        self.num_ids
    }

    pub fn len(&self) -> usize {
        self.table.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.table.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    /// Row index of a context given most recent first.
    pub fn index_of(&self, context: &[usize]) -> Result<usize> {
        if context.len() != self.history {
            return Err(Error::Shape(format!("context of {} ids, table expects {}", context.len(), self.history)));
        }
        let mut idx = 0;
        for &id in context.iter().rev() {
            if id >= self.num_ids {
                return Err(Error::Domain(format!("id {id} outside table alphabet of {}", self.num_ids)));
            }
            idx = idx * self.num_ids + id;
        }
        Ok(idx)
    }

    /// Context (most recent first) stored at row `index`.
    pub fn context_of(&self, mut index: usize) -> Vec<usize> {
        (0..self.history)
            .map(|_| {
                let id = index % self.num_ids;
                index /= self.num_ids;
                id
            })
            .collect()
    }

    pub fn lookup(&self, state: &PredictionState) -> Result<&[f64]> {
        Ok(self.table.row(self.index_of(&state.context())?))
    }
}

/// Tabulates the prediction network over all contexts.
pub fn convert_to_lookup(model: &DecoderModel, budget: usize) -> Result<LookupTable> {
    let cfg = &model.config;
    if !cfg.variant.has_finite_context() {
        return Err(Error::Config(format!("{} prediction network has unbounded context", cfg.variant.name())));
    }
    let num_ids = cfg.vocab_size + 1;
    let rows = num_ids
        .checked_pow(cfg.history as u32)
        .filter(|&r| r <= budget)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "{num_ids}^{} contexts exceed the budget of {budget} entries",
                cfg.history
            ))
        })?;
    let mut table = LookupTable { history: cfg.history, num_ids, table: Matrix::zeros(rows, cfg.prediction_dim()) };
    for idx in 0..rows {
        let ctx = table.context_of(idx);
        let g = model.prediction_forward(&PredictionState::from_context(&ctx))?;
        table.table.row_mut(idx).copy_from_slice(&g);
    }
    Ok(table)
}
