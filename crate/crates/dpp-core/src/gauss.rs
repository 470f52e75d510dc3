//! Gauss-Legendre nodes and weights on (0, 1), cached per order.

use std::sync::OnceLock;

/// Node/weight table for one quadrature order, mapped to the unit interval.
pub(crate) struct GlTable {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Orders used by the superiority-integral doubling scheme. Refinement
/// stops at the last entry.
pub(crate) const GL_ORDERS: [usize; 4] = [128, 256, 512, 1024];

/// Longer ladder for the density-similarity integrals. Their ratio-power
/// integrands carry fractional-power endpoint behavior that the smoothstep
/// substitution softens but cannot make spectral, so convergence is
/// algebraic and some shape pairs need another doubling or two.
pub(crate) const EXTENDED_ORDERS: [usize; 6] = [128, 256, 512, 1024, 2048, 4096];

/// Returns the cached table for one of the supported orders.
///
/// Panics on an unsupported order; callers iterate over `GL_ORDERS` or
/// `EXTENDED_ORDERS`.
pub(crate) fn gl_table(n: usize) -> &'static GlTable {
    static TABLES: [OnceLock<GlTable>; 6] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    let idx = EXTENDED_ORDERS
        .iter()
        .position(|&m| m == n)
        .expect("unsupported Gauss-Legendre order");
    TABLES[idx].get_or_init(|| compute_table(n))
}

/// Quintic smoothstep u = v^3 (10 - 15v + 6v^2), a C^2 bijection of [0,1]
/// whose derivative vanishes quadratically at both endpoints.
///
/// Evaluated from the nearer endpoint via the symmetry u(1-e) = 1 - u(e), so
/// nodes next to 1 keep their full distance from it instead of rounding onto
/// the endpoint.
fn smoothstep(v: f64) -> f64 {
    if v > 0.5 {
        let e = 1.0 - v;
        1.0 - e * e * e * (10.0 + e * (6.0 * e - 15.0))
    } else {
        v * v * v * (10.0 + v * (6.0 * v - 15.0))
    }
}

/// Derivative 30 v^2 (1-v)^2 of the quintic smoothstep.
fn smoothstep_deriv(v: f64) -> f64 {
    let s = v * (1.0 - v);
    30.0 * s * s
}

/// Gauss-Legendre table with the quintic smoothstep substitution baked in:
/// node u_i = smoothstep(x_i), weight w_i * smoothstep'(x_i).
///
/// Quantile-transformed integrands have unbounded derivatives at the
/// endpoints whenever a shape parameter sits below one; the vanishing
/// Jacobian restores spectral convergence for them. Only integrands that
/// are bounded near 0 and 1 may use this table.
pub(crate) fn regularized_table(n: usize) -> &'static GlTable {
    static TABLES: [OnceLock<GlTable>; 6] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    let idx = EXTENDED_ORDERS
        .iter()
        .position(|&m| m == n)
        .expect("unsupported Gauss-Legendre order");
    TABLES[idx].get_or_init(|| {
        // The outermost high-order nodes land within half an ulp of 1; their
        // transformed weights are below 1e-16, so pinning them to the last
        // interior f64 keeps consumers on the open interval at no accuracy
        // cost.
        let interior_max = f64::from_bits(0x3FEF_FFFF_FFFF_FFFF);
        let raw = gl_table(n);
        let nodes = raw
            .nodes
            .iter()
            .map(|&v| smoothstep(v).clamp(f64::MIN_POSITIVE, interior_max))
            .collect();
        let weights = raw
            .nodes
            .iter()
            .zip(&raw.weights)
            .map(|(&v, &w)| w * smoothstep_deriv(v))
            .collect();
        GlTable { nodes, weights }
    })
}

/// Classic Newton-on-Legendre construction of the n-point rule on [-1, 1],
/// then the affine map to [0, 1]. Symmetric pairs are filled together.
fn compute_table(n: usize) -> GlTable {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and its derivative by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        // Map [-1,1] -> [0,1]: node (1-x)/2 pairs with (1+x)/2, weight halves.
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    GlTable { nodes, weights }
}
