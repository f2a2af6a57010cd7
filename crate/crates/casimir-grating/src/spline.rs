/// Cubic spline through (x_i, y_i) with strictly increasing x. End curvatures
/// come from the cubic through the four end nodes (natural ends below 4 nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the nodes
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Option<Self> {
        let n = x.len();
        if n < 3 || y.len() != n || x.windows(2).any(|w| !(w[1] > w[0])) {
            return None;
        }
        // tridiagonal system for interior second derivatives, Thomas algorithm
        let mut m = vec![0.0; n];
        if n >= 4 {
            m[0] = end_curvature([x[0], x[1], x[2], x[3]], [y[0], y[1], y[2], y[3]]);
            m[n - 1] = end_curvature(
                [x[n - 1], x[n - 2], x[n - 3], x[n - 4]],
                [y[n - 1], y[n - 2], y[n - 3], y[n - 4]],
            );
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        d[0] = m[0];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let mut rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            if i == n - 2 {
                rhs -= h1 * m[n - 1];
            }
            let denom = b - a * c[i - 1];
            c[i] = if i == n - 2 { 0.0 } else { h1 / denom };
            d[i] = (rhs - a * d[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Some(CubicSpline { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|v| *v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Second derivative at x[0] of the cubic through four points.
fn end_curvature(x: [f64; 4], y: [f64; 4]) -> f64 {
    let d1 = |i: usize| (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    let d2 = |i: usize| (d1(i + 1) - d1(i)) / (x[i + 2] - x[i]);
    let d3 = (d2(1) - d2(0)) / (x[3] - x[0]);
    2.0 * d2(0) + 2.0 * d3 * (2.0 * x[0] - x[1] - x[2])
}
