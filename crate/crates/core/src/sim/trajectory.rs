use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Which closed loop produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Dithered extremum-seeking loop.
    Esc,
    /// Model-based reference controller with exact `L_g h`.
    Target,
    /// Dither-averaged closed loop.
    Averaged,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Esc => "esc",
            Mode::Target => "target",
            Mode::Averaged => "averaged",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "esc" => Ok(Mode::Esc),
            "target" => Ok(Mode::Target),
            "averaged" => Ok(Mode::Averaged),
            other => Err(format!("unknown mode `{other}` (expected esc, target or averaged)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged { t: f64, reason: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

/// Closed-loop signals sampled on the output grid.
///
/// Columns that a mode does not have are filled as follows: the target
/// controller records the exact `L_g h` it uses in `xi`; target and averaged
/// runs record zero `eta` and `nu_bar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub mode: Mode,
    pub t: Vec<S>,
    pub tau: Vec<S>,
    pub x: Vec<Vec<S>>,
    pub u: Vec<S>,
    pub y: Vec<S>,
    pub xi: Vec<S>,
    pub u_hat: Vec<S>,
    pub eta: Vec<S>,
    pub nu_bar: Vec<S>,
    pub status: RunStatus,
}

/// One recorded row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a, S> {
    pub t: S,
    pub tau: S,
    pub x: &'a [S],
    pub u: S,
    pub y: S,
    pub xi: S,
    pub u_hat: S,
    pub eta: S,
    pub nu_bar: S,
}

impl<S: Real> Trajectory<S> {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            t: Vec::new(),
            tau: Vec::new(),
            x: Vec::new(),
            u: Vec::new(),
            y: Vec::new(),
            xi: Vec::new(),
            u_hat: Vec::new(),
            eta: Vec::new(),
            nu_bar: Vec::new(),
            status: RunStatus::Completed,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn push(&mut self, s: Sample<'_, S>) {
        self.t.push(s.t);
        self.tau.push(s.tau);
        self.x.push(s.x.to_vec());
        self.u.push(s.u);
        self.y.push(s.y);
        self.xi.push(s.xi);
        self.u_hat.push(s.u_hat);
        self.eta.push(s.eta);
        self.nu_bar.push(s.nu_bar);
    }

    /// Row `i` as a flat record in CSV column order
    /// `t, tau, x1..xn, u, y, xi, u_hat, eta, nu_bar`.
    pub fn row(&self, i: usize) -> Vec<S> {
        let mut r = Vec::with_capacity(self.state_dim() + 8);
        r.push(self.t[i]);
        r.push(self.tau[i]);
        r.extend_from_slice(&self.x[i]);
        r.extend_from_slice(&[
            self.u[i],
            self.y[i],
            self.xi[i],
            self.u_hat[i],
            self.eta[i],
            self.nu_bar[i],
        ]);
        r
    }

    /// Column names matching [`row`](Self::row).
    pub fn column_names(&self) -> Vec<String> {
        column_names(self.state_dim())
    }

    pub fn last_state(&self) -> Option<&[S]> {
        self.x.last().map(Vec::as_slice)
    }

    /// Keeps every `stride`-th row plus the final row.
    pub fn decimate(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let n = self.len();
        let keep: Vec<usize> = (0..n).filter(|i| i % stride == 0 || *i + 1 == n).collect();
        let pick = |v: &Vec<S>| keep.iter().map(|&i| v[i]).collect::<Vec<S>>();
        Self {
            mode: self.mode,
            t: pick(&self.t),
            tau: pick(&self.tau),
            x: keep.iter().map(|&i| self.x[i].clone()).collect(),
            u: pick(&self.u),
            y: pick(&self.y),
            xi: pick(&self.xi),
            u_hat: pick(&self.u_hat),
            eta: pick(&self.eta),
            nu_bar: pick(&self.nu_bar),
            status: self.status.clone(),
        }
    }
}

/// Trajectory table header for an `n`-state plant.
pub fn column_names(n: usize) -> Vec<String> {
    let mut c = vec!["t".to_string(), "tau".to_string()];
    c.extend((1..=n).map(|i| format!("x{i}")));
    c.extend(["u", "y", "xi", "u_hat", "eta", "nu_bar"].map(String::from));
    c
}
