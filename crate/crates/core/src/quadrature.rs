//! Gauss–Legendre and Gauss–Lobatto rules on [-1, 1] and mapped intervals.

/// Quadrature rule: nodes and weights on a reference interval.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Maps the rule from [-1, 1] to [0, len].
    pub fn mapped(&self, len: f64) -> Rule {
        let half = 0.5 * len;
        Rule {
            nodes: self.nodes.iter().map(|x| half * (x + 1.0)).collect(),
            weights: self.weights.iter().map(|w| half * w).collect(),
        }
    }
}

/// Legendre polynomial P_n and its derivative at x, by three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for m in 1..n {
        let m_f = m as f64;
        let p_next = ((2.0 * m_f + 1.0) * x * p - m_f * p_prev) / (m_f + 1.0);
        p_prev = p;
        p = p_next;
    }
    // (1 - x^2) P_n'(x) = n (P_{n-1}(x) - x P_n(x))
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        // endpoint limit, only used defensively
        0.5 * (n * (n + 1)) as f64 * if x > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 + 1) }
    } else {
        (n as f64) * (p_prev - x * p) / (1.0 - x * x)
    };
    (p, dp)
}

/// n-point Gauss–Legendre rule on [-1, 1]; exact for polynomials of degree 2n-1.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "quadrature needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Rule { nodes, weights }
}

/// n-point Gauss–Lobatto rule on [-1, 1] (n >= 2); exact for degree 2n-3.
/// Includes both endpoints, which makes endpoint traces trivial for nodal bases.
pub fn gauss_lobatto(n: usize) -> Rule {
    assert!(n >= 2, "Lobatto rule needs at least two points");
    let m = n - 1; // interior nodes are roots of P_m'
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    for i in 1..n - 1 {
        // initial guess: Chebyshev-Lobatto point
        let mut x = (std::f64::consts::PI * (n - 1 - i) as f64 / m as f64).cos();
        for _ in 0..100 {
            // Newton on f(x) = P_m'(x); f'(x) from Legendre ODE:
            // (1-x^2) P_m'' = 2x P_m' - m(m+1) P_m
            let (p, dp) = legendre_with_derivative(m, x);
            let ddp = (2.0 * x * dp - (m * (m + 1)) as f64 * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
    }
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let (p, _) = legendre_with_derivative(m, nodes[i]);
        weights[i] = 2.0 / ((m * (m + 1)) as f64 * p * p);
    }
    Rule { nodes, weights }
}
