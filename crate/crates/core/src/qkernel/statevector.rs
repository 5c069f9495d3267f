use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_BLOCK_QUBITS: usize = 10;

/// Amplitudes of a small register. Qubit `k` is bit `k` of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStatevector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl BlockStatevector {
    /// The all-zeros basis state.
    pub fn zero(qubits: usize) -> Result<Self> {
        if qubits == 0 || qubits > MAX_BLOCK_QUBITS {
            return Err(Error::InvalidArgument(format!(
                "block size {qubits} outside 1..={MAX_BLOCK_QUBITS}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { qubits, amps })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &BlockStatevector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let bit = 1usize << qubit;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = a0 * c - a1 * s;
                self.amps[i | bit] = a0 * s + a1 * c;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amps.swap(i, i | tbit);
            }
        }
    }

    /// CNOTs `k -> (k + 1) mod q` for every qubit, in increasing `k`.
    pub fn apply_cnot_ring(&mut self) {
        if self.qubits < 2 {
            return;
        }
        for k in 0..self.qubits {
            self.apply_cnot(k, (k + 1) % self.qubits);
        }
    }

    fn apply_cnot_ring_inverse(&mut self) {
        if self.qubits < 2 {
            return;
        }
        for k in (0..self.qubits).rev() {
            self.apply_cnot(k, (k + 1) % self.qubits);
        }
    }

    /// Applies the encoding circuit: an RY layer, then for each further
    /// layer a CNOT ring followed by another RY layer.
    pub fn apply_circuit(&mut self, angles: &[Vec<f64>]) {
        for (l, layer) in angles.iter().enumerate() {
            if l > 0 {
                self.apply_cnot_ring();
            }
            for (k, &theta) in layer.iter().enumerate() {
                self.apply_ry(k, theta);
            }
        }
    }

    /// Applies the adjoint of [`apply_circuit`](Self::apply_circuit).
    pub fn apply_circuit_adjoint(&mut self, angles: &[Vec<f64>]) {
        for (l, layer) in angles.iter().enumerate().rev() {
            for (k, &theta) in layer.iter().enumerate().rev() {
                self.apply_ry(k, -theta);
            }
            if l > 0 {
                self.apply_cnot_ring_inverse();
            }
        }
    }
}

/// Angle table for one block: `depth + 1` layers of `w_k * x_k`.
pub fn block_angles(x_block: &[f64], w_block: &[f64], depth: usize) -> Vec<Vec<f64>> {
    let layer: Vec<f64> = x_block.iter().zip(w_block).map(|(x, w)| w * x).collect();
    vec![layer; depth + 1]
}

/// Prepares `U(x, w)|0...0>` for one block.
pub fn encode_block(x_block: &[f64], w_block: &[f64], depth: usize) -> Result<BlockStatevector> {
    if x_block.len() != w_block.len() {
        return Err(Error::Shape(format!(
            "block features {} vs scalings {}",
            x_block.len(),
            w_block.len()
        )));
    }
    let mut psi = BlockStatevector::zero(x_block.len())?;
    psi.apply_circuit(&block_angles(x_block, w_block, depth));
    Ok(psi)
}

/// `|<0| U(b)^dagger U(a) |0>|^2` for explicit angle tables, evaluated as the
/// overlap of the two prepared states so that swapping the arguments gives a
/// bit-identical result.
pub fn block_fidelity(angles_a: &[Vec<f64>], angles_b: &[Vec<f64>], qubits: usize) -> Result<f64> {
    let mut psi_a = BlockStatevector::zero(qubits)?;
    psi_a.apply_circuit(angles_a);
    let mut psi_b = BlockStatevector::zero(qubits)?;
    psi_b.apply_circuit(angles_b);
    Ok(psi_b.inner(&psi_a).norm_sqr())
}
