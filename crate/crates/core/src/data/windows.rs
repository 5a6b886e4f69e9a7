use crate::error::{Error, Result};

/// Split of a `T_h + T_f` step trajectory into `M` windows of `tau` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowPlan {
    pub history: usize,
    pub future: usize,
    pub tau: usize,
    pub windows: usize,
    pub residual: usize,
}

pub fn plan_windows(history: usize, future: usize, tau: usize) -> Result<WindowPlan> {
    if tau == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    if tau > history {
        return Err(Error::Config(format!(
            "window size {tau} exceeds {history} history steps; the encoder needs one full historical window"
        )));
    }
    let total = history + future;
    Ok(WindowPlan {
        history,
        future,
        tau,
        windows: total / tau,
        residual: total % tau,
    })
}

impl WindowPlan {
    pub fn total(&self) -> usize {
        self.history + self.future
    }

    /// Window containing 0-based step `t`; residual steps belong to no window.
    pub fn window_of(&self, t: usize) -> Option<usize> {
        let w = t / self.tau;
        (w < self.windows).then_some(w)
    }

    /// Steps `[start, end)` covered by window `m`.
    pub fn span(&self, m: usize) -> (usize, usize) {
        (m * self.tau, (m + 1) * self.tau)
    }

    /// Index of the inferred graph that drives prediction of step `t`.
    ///
    /// Steps in window `w` use the graph of window `w - 1` (the first window
    /// uses its own graph, it is pure history). Residual steps past the last
    /// full window reuse the last full window's graph.
    pub fn graph_for_step(&self, t: usize) -> usize {
        let w = t / self.tau;
        w.max(1).saturating_sub(1).min(self.windows - 1)
    }

    /// Graphs needed to predict the future steps, ascending.
    pub fn graphs_for_future(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (self.history..self.total()).map(|t| self.graph_for_step(t)).collect();
        out.dedup();
        out
    }

    /// True when the decoder input at step `k` closes a window and `k` is in the future part.
    pub fn is_future_boundary(&self, k: usize) -> bool {
        k >= self.history && (k + 1) % self.tau == 0
    }
}
