//! Gauss–Hermite quadrature nodes and weights (physicists' convention):
//! integral of exp(-x^2) f(x) dx ~ sum w_i f(x_i).
//!
//! Nodes are found by Newton iteration on the orthonormal Hermite recurrence,
//! which is stable to a few hundred points — far beyond what adaptive
//! quadrature of a one-dimensional random intercept ever needs.

use crate::num::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhNode<F> {
    pub node: F,
    pub weight: F,
}

/// Computes the `n`-point rule. Panics if `n == 0`.
pub fn gauss_hermite<F: Float>(n: usize) -> Vec<GhNode<F>> {
    assert!(n > 0, "quadrature rule needs at least one node");
    let sqrt_pi = F::cast(1.772_453_850_905_516);
    if n == 1 {
        return vec![GhNode {
            node: F::zero(),
            weight: sqrt_pi,
        }];
    }

    let nf = n as f64;
    let mut nodes = vec![F::zero(); n];
    let mut weights = vec![F::zero(); n];
    let m = (n + 1) / 2;
    // Roots found so far, largest first.
    let mut roots: Vec<F> = Vec::with_capacity(m);

    for i in 0..m {
        // Initial guesses from the classical asymptotics for the largest
        // root, then stepping inward from the roots already found.
        let mut z = match i {
            0 => F::cast((2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0)),
            1 => roots[0] - F::cast(1.14 * nf.powf(0.426)) / roots[0],
            2 => F::cast(1.86) * roots[1] - F::cast(0.86) * roots[0],
            3 => F::cast(1.91) * roots[2] - F::cast(0.91) * roots[1],
            _ => F::cast(2.0) * roots[i - 1] - roots[i - 2],
        };

        let tol = F::epsilon() * F::cast(128.0);
        let mut pp = F::one();
        for _ in 0..100 {
            // Orthonormal Hermite recurrence evaluated at z.
            let mut p1 = F::cast(0.751_125_544_464_943); // pi^{-1/4}
            let mut p2 = F::zero();
            for j in 1..=n {
                let jf = F::cast(j as f64);
                let p3 = p2;
                p2 = p1;
                p1 = z * (F::cast(2.0) / jf).sqrt() * p2
                    - ((jf - F::one()) / jf).sqrt() * p3;
            }
            pp = (F::cast(2.0) * F::cast(nf)).sqrt() * p2;
            let delta = p1 / pp;
            z -= delta;
            if delta.abs() <= tol * z.abs().max(F::one()) {
                break;
            }
        }

        roots.push(z);
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        let w = F::cast(2.0) / (pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }

    if n % 2 == 1 {
        nodes[n / 2] = F::zero();
    }

    // Return in ascending node order.
    let mut out: Vec<GhNode<F>> = nodes
        .into_iter()
        .zip(weights)
        .map(|(node, weight)| GhNode { node, weight })
        .collect();
    out.sort_by(|a, b| a.node.partial_cmp(&b.node).expect("finite nodes"));
    out
}
