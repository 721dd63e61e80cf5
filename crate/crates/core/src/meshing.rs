//! Fixed-domain grids on `[0, 1]` and their finite-difference stencils.
//!
//! The interface sits at `y = 1`, so every strategy here concentrates points
//! near the right end. Stencil weights are computed once per mesh; the
//! right-hand side evaluation only forms dot products with them.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("no geometric ratio q in (0, 1] exists for N = {n} intervals and first length 1/{m} (need N >= M)")]
    NoGeometricRatio { n: usize, m: usize },
    #[error("invalid mesh spec: {0}")]
    InvalidSpec(String),
}

/// Grid construction strategy.
///
/// `Subdivided` is the D1/D2/D3 family: `M` uniform intervals with the
/// trailing `d - 2` intervals split further, finest at `y = 1`.
/// `Geometric` is D4: `N` intervals whose lengths shrink by a constant ratio,
/// starting from `1/M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshSpec {
    Subdivided { power: u32, m: usize, d: usize },
    Geometric { n: usize, m: usize },
}

impl MeshSpec {
    pub fn uniform(n: usize) -> Self {
        MeshSpec::Geometric { n, m: n }
    }

    /// Short label such as `D4` used in tables.
    pub fn label(&self) -> String {
        match self {
            MeshSpec::Subdivided { power, .. } => format!("D{power}"),
            MeshSpec::Geometric { .. } => "D4".to_string(),
        }
    }

    /// Number of intervals the mesh will have.
    pub fn interval_count(&self) -> usize {
        match *self {
            MeshSpec::Geometric { n, .. } => n,
            MeshSpec::Subdivided { power, m, d } => {
                let refined = d.saturating_sub(2);
                let extra: usize = (1..=refined).map(|j| (d - j).pow(power)).sum();
                m - refined + extra
            }
        }
    }

    pub fn coarse_count(&self) -> usize {
        match *self {
            MeshSpec::Geometric { m, .. } | MeshSpec::Subdivided { m, .. } => m,
        }
    }

    pub fn refined_count(&self) -> Option<usize> {
        match *self {
            MeshSpec::Subdivided { d, .. } => Some(d),
            MeshSpec::Geometric { .. } => None,
        }
    }
}

/// Derivative weights at one node, applied to `(w[i-1], w[i], w[i+1])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStencil {
    pub first: [f64; 3],
    pub second: [f64; 3],
}

impl NodeStencil {
    #[inline]
    pub fn apply(&self, left: f64, center: f64, right: f64) -> (f64, f64) {
        let d1 = self.first[0] * left + self.first[1] * center + self.first[2] * right;
        let d2 = self.second[0] * left + self.second[1] * center + self.second[2] * right;
        (d1, d2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    /// Points `y_0 = 0 < ... < y_N = 1`.
    pub y: Vec<f64>,
    /// `alpha[i] = y[i] - y[i-1]` for `i >= 1`; `alpha[0] = 0`.
    pub alpha: Vec<f64>,
    /// One stencil per node `0..N`. Node 0 uses a mirrored ghost at `-alpha[1]`.
    pub stencils: Vec<NodeStencil>,
    /// Weights on `(w[N-2], w[N-1])` giving `dw/dy` at `y = 1` (value there is 0).
    pub boundary_slope: [f64; 2],
    /// Weights on `(w[N-3], w[N-2], w[N-1])` giving `d2w/dy2` at `y = 1`.
    pub boundary_curvature: [f64; 3],
}

impl Mesh {
    /// Builds the mesh described by `spec`.
    pub fn build(spec: &MeshSpec) -> Result<Mesh, MeshError> {
        let lengths = match *spec {
            MeshSpec::Geometric { n, m } => geometric_lengths(n, m)?,
            MeshSpec::Subdivided { power, m, d } => subdivided_lengths(power, m, d)?,
        };
        Mesh::from_lengths(&lengths)
    }

    /// Builds a mesh from interval lengths; they are rescaled to sum to one.
    pub fn from_lengths(lengths: &[f64]) -> Result<Mesh, MeshError> {
        if lengths.len() < 4 {
            return Err(MeshError::InvalidSpec(format!("need at least 4 intervals, got {}", lengths.len())));
        }
        if lengths.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(MeshError::InvalidSpec("interval lengths must be positive".into()));
        }
        let total: f64 = lengths.iter().sum();
        let n = lengths.len();
        let mut y = Vec::with_capacity(n + 1);
        y.push(0.0);
        let mut acc = 0.0;
        for h in &lengths[..n - 1] {
            acc += h / total;
            y.push(acc);
        }
        y.push(1.0);
        Mesh::from_points(y)
    }

    /// Builds a mesh from explicit points; they must start at 0, end at 1 and increase.
    pub fn from_points(y: Vec<f64>) -> Result<Mesh, MeshError> {
        let n = y.len().saturating_sub(1);
        if n < 4 {
            return Err(MeshError::InvalidSpec(format!("need at least 4 intervals, got {n}")));
        }
        if y[0] != 0.0 || y[n] != 1.0 {
            return Err(MeshError::InvalidSpec("points must span [0, 1] exactly".into()));
        }
        if y.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(MeshError::InvalidSpec("points must be strictly increasing".into()));
        }
        let mut alpha = vec![0.0; n + 1];
        for i in 1..=n {
            alpha[i] = y[i] - y[i - 1];
        }
        let mut stencils = Vec::with_capacity(n);
        stencils.push(interior_stencil(alpha[1], alpha[1]));
        for i in 1..n {
            stencils.push(interior_stencil(alpha[i], alpha[i + 1]));
        }
        let (boundary_slope, boundary_curvature) = boundary_weights(&y);
        Ok(Mesh { y, alpha, stencils, boundary_slope, boundary_curvature })
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.y.len() - 1
    }

    /// `dw/dy` at `y = 1` from the last two stored values.
    #[inline]
    pub fn slope_at_interface(&self, w_nm2: f64, w_nm1: f64) -> f64 {
        self.boundary_slope[0] * w_nm2 + self.boundary_slope[1] * w_nm1
    }

    /// `d2w/dy2` at `y = 1` from the last three stored values.
    #[inline]
    pub fn curvature_at_interface(&self, w_nm3: f64, w_nm2: f64, w_nm1: f64) -> f64 {
        let c = &self.boundary_curvature;
        c[0] * w_nm3 + c[1] * w_nm2 + c[2] * w_nm1
    }

    /// Plain-text dump of the points, spacings and weights.
    pub fn dump_table(&self) -> String {
        let mut out = String::from("i,y,alpha,d1_left,d1_center,d1_right,d2_left,d2_center,d2_right\n");
        for (i, st) in self.stencils.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                i,
                self.y[i],
                self.alpha[i],
                st.first[0],
                st.first[1],
                st.first[2],
                st.second[0],
                st.second[1],
                st.second[2]
            ));
        }
        let n = self.intervals();
        out.push_str(&format!("{},{:.17e},{:.17e},,,,,,\n", n, self.y[n], self.alpha[n]));
        out.push_str(&format!(
            "# boundary_slope,{:.17e},{:.17e}\n# boundary_curvature,{:.17e},{:.17e},{:.17e}\n",
            self.boundary_slope[0],
            self.boundary_slope[1],
            self.boundary_curvature[0],
            self.boundary_curvature[1],
            self.boundary_curvature[2]
        ));
        out
    }
}

/// First and second derivative weights at the center of three nodes with
/// left spacing `h1` and right spacing `h2` (exact on quadratics).
pub fn interior_stencil(h1: f64, h2: f64) -> NodeStencil {
    let s = h1 + h2;
    NodeStencil {
        first: [-h2 / (h1 * s), (h2 - h1) / (h1 * h2), h1 / (h2 * s)],
        second: [2.0 / (h1 * s), -2.0 / (h1 * h2), 2.0 / (h2 * s)],
    }
}

/// One-sided weights at `y = 1` with the interface value (zero) folded in.
///
/// Slope: derivative of the quadratic through `y[N-2], y[N-1], 1`.
/// Curvature: second derivative of the cubic through `y[N-3], ..., 1`.
pub fn boundary_weights(y: &[f64]) -> ([f64; 2], [f64; 3]) {
    let n = y.len() - 1;
    let slope = fornberg_weights(1.0, &[y[n - 2], y[n - 1], 1.0], 1);
    let curv = fornberg_weights(1.0, &[y[n - 3], y[n - 2], y[n - 1], 1.0], 2);
    ([slope[0], slope[1]], [curv[0], curv[1], curv[2]])
}

/// Weights for the `order`-th derivative at `x0` of the interpolating
/// polynomial through `nodes` (Fornberg's recursion).
pub fn fornberg_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Ratio `q` with `sum_{i<n} q^i / m = 1`, found by bisection on `(0, 1]`.
pub fn geometric_ratio(n: usize, m: usize) -> Result<f64, MeshError> {
    if m < 1 || n < m {
        return Err(MeshError::NoGeometricRatio { n, m });
    }
    if n == m {
        return Ok(1.0);
    }
    let target = m as f64;
    let sum = |q: f64| -> f64 {
        let mut total = 0.0;
        let mut term = 1.0;
        for _ in 0..n {
            total += term;
            term *= q;
        }
        total
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn geometric_lengths(n: usize, m: usize) -> Result<Vec<f64>, MeshError> {
    if m < 2 {
        return Err(MeshError::InvalidSpec(format!("M must be at least 2, got {m}")));
    }
    let q = geometric_ratio(n, m)?;
    let first = 1.0 / m as f64;
    Ok((0..n).map(|i| first * q.powi(i as i32)).collect())
}

fn subdivided_lengths(power: u32, m: usize, d: usize) -> Result<Vec<f64>, MeshError> {
    if !(1..=3).contains(&power) {
        return Err(MeshError::InvalidSpec(format!("subdivision power must be 1, 2 or 3, got {power}")));
    }
    if m < 2 || d < 3 || d > m {
        return Err(MeshError::InvalidSpec(format!("need 2 <= M and 3 <= d <= M, got M = {m}, d = {d}")));
    }
    let h = 1.0 / m as f64;
    let refined = d - 2;
    let mut lengths = vec![h; m - refined];
    // j counts backward from y = 1; the last interval gets the most parts
    for j in (1..=refined).rev() {
        let parts = (d - j).pow(power);
        lengths.extend(std::iter::repeat_n(h / parts as f64, parts));
    }
    Ok(lengths)
}
