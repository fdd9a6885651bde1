use std::collections::VecDeque;

/// Recurrent state of one projected LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellState {
    /// Projected output `r`.
    pub output: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmCellState {
    pub fn zeros(units: usize, proj: usize) -> Self {
        Self { output: vec![0.0; proj], cell: vec![0.0; units] }
    }
}

/// Label history conditioning the prediction network.
///
/// Holds exactly `N` label ids, oldest first, starting as `N` copies of the
/// pad id. The LSTM variant additionally carries its recurrent state.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionState {
    history: VecDeque<usize>,
    pub(crate) lstm: Option<Vec<LstmCellState>>,
}

impl PredictionState {
    pub fn new(history_len: usize, pad_id: usize) -> Self {
        assert!(history_len >= 1, "history length must be positive");
        Self { history: std::iter::repeat_n(pad_id, history_len).collect(), lstm: None }
    }

    /// State holding `context` (most recent first), without recurrence.
    pub fn from_context(context: &[usize]) -> Self {
        assert!(!context.is_empty(), "history length must be positive");
        Self { history: context.iter().rev().copied().collect(), lstm: None }
    }

    /// Appends `label` as the most recent entry, dropping the oldest.
    pub fn push(&mut self, label: usize) {
        self.history.pop_front();
        self.history.push_back(label);
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// History ids, most recent first (the order rows are embedded in).
    pub fn context(&self) -> Vec<usize> {
        self.history.iter().rev().copied().collect()
    }

    pub fn most_recent(&self) -> usize {
        *self.history.back().expect("history is never empty")
    }

    pub fn lstm_state(&self) -> Option<&[LstmCellState]> {
        self.lstm.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_keeps_last_n() {
        let mut s = PredictionState::new(2, 9);
        assert_eq!(s.context(), vec![9, 9]);
        s.push(1);
        assert_eq!(s.context(), vec![1, 9]);
        s.push(2);
        s.push(3);
        assert_eq!(s.context(), vec![3, 2]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.most_recent(), 3);
    }
}
