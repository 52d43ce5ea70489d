//! One-dimensional interpolation: monotone cubic Hermite (Fritsch–Carlson)
//! and piecewise-linear lookups on sorted grids.

/// Monotonicity-preserving piecewise cubic Hermite interpolant.
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// Builds the interpolant; `x` must be strictly increasing with at least two nodes.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len(), "pchip needs matching node arrays");
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Pchip { x, y, d };
        }
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Pchip { x, y, d }
    }

    /// Overrides the end-point slopes, keeping them inside the monotone range.
    pub fn with_end_slopes(mut self, left: Option<f64>, right: Option<f64>) -> Self {
        let n = self.x.len();
        if let Some(s) = left {
            self.d[0] = clamp_slope(s, (self.y[1] - self.y[0]) / (self.x[1] - self.x[0]));
        }
        if let Some(s) = right {
            self.d[n - 1] = clamp_slope(s, (self.y[n - 1] - self.y[n - 2]) / (self.x[n - 1] - self.x[n - 2]));
        }
        self
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Value and first derivative at `t`, extrapolating linearly outside the nodes.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.x.len();
        if t <= self.x[0] {
            return (self.y[0] + self.d[0] * (t - self.x[0]), self.d[0]);
        }
        if t >= self.x[n - 1] {
            return (self.y[n - 1] + self.d[n - 1] * (t - self.x[n - 1]), self.d[n - 1]);
        }
        let i = locate(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.d[i] * h, self.d[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1;
        let deriv = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * d1)
            / h;
        (value, deriv)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

fn clamp_slope(s: f64, secant: f64) -> f64 {
    if secant == 0.0 {
        0.0
    } else if s * secant < 0.0 {
        0.0
    } else if s.abs() > 3.0 * secant.abs() {
        3.0 * secant
    } else {
        s
    }
}

/// Index `i` with `x[i] <= t < x[i+1]`, clamped to `[0, n-2]`.
pub fn locate(x: &[f64], t: f64) -> usize {
    let n = x.len();
    if n < 2 || t <= x[0] {
        return 0;
    }
    if t >= x[n - 1] {
        return n - 2;
    }
    match x.binary_search_by(|v| v.total_cmp(&t)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    }
}

/// Cell index and weight `w` such that `t = (1-w) x[i] + w x[i+1]`, clamped to the grid.
pub fn bracket(x: &[f64], t: f64) -> (usize, f64) {
    if x.len() == 1 {
        return (0, 0.0);
    }
    let i = locate(x, t);
    let w = ((t - x[i]) / (x[i + 1] - x[i])).clamp(0.0, 1.0);
    (i, w)
}

/// Piecewise-linear interpolation on a sorted grid, clamped at the ends.
pub fn linear(x: &[f64], y: &[f64], t: f64) -> f64 {
    if x.len() == 1 {
        return y[0];
    }
    let (i, w) = bracket(x, t);
    (1.0 - w) * y[i] + w * y[i + 1]
}
