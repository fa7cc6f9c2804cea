//! Minimal phasor-domain nodal analysis used by the forward simulators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::phasor::Complex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Ground,
    /// Node held at a known voltage by an ideal source.
    Fixed(Complex),
    /// Unknown node voltage, indexed from 0.
    Free(usize),
}

/// Admittance branches between nodes.
#[derive(Debug, Clone, Default)]
pub struct Network {
    free_nodes: usize,
    branches: Vec<(Node, Node, Complex)>,
}

impl Network {
    pub fn new(free_nodes: usize) -> Self {
        Network {
            free_nodes,
            branches: Vec::new(),
        }
    }

    /// Adds a branch of admittance `y` (siemens) between `a` and `b`.
    pub fn admittance(&mut self, a: Node, b: Node, y: Complex) -> &mut Self {
        self.branches.push((a, b, y));
        self
    }

    pub fn impedance(&mut self, a: Node, b: Node, z: Complex) -> &mut Self {
        self.admittance(a, b, Complex::new(1.0, 0.0) / z)
    }

    /// Solves `Y·v = i` for the free node voltages.
    pub fn solve(&self) -> Result<Vec<Complex>> {
        let n = self.free_nodes;
        let zero = Complex::new(0.0, 0.0);
        let mut y = DMatrix::from_element(n, n, zero);
        let mut rhs = DVector::from_element(n, zero);
        for &(a, b, adm) in &self.branches {
            for (this, other) in [(a, b), (b, a)] {
                if let Node::Free(i) = this {
                    y[(i, i)] += adm;
                    match other {
                        Node::Free(j) => y[(i, j)] -= adm,
                        Node::Fixed(v) => rhs[i] += adm * v,
                        Node::Ground => {}
                    }
                }
            }
        }
        let v = y
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateScenario("singular nodal matrix".into()))?;
        if v.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::DegenerateScenario("non-finite node voltage".into()));
        }
        Ok(v.iter().copied().collect())
    }
}
