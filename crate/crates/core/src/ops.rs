//! Single-site operators in the basis |0⟩ = (1,0)ᵀ (spin down), |1⟩ = (0,1)ᵀ (spin up).

use crate::tensor::DenseTensor;

fn real2(values: [f64; 4]) -> DenseTensor {
    DenseTensor::from_real(2, 2, &values).expect("2x2")
}

pub fn identity() -> DenseTensor {
    real2([1.0, 0.0, 0.0, 1.0])
}

pub fn pauli_x() -> DenseTensor {
    real2([0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> DenseTensor {
    use crate::tensor::C64;
    DenseTensor::new(
        vec![2, 2],
        vec![
            C64::new(0.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, 0.0),
        ],
    )
    .expect("2x2")
}

pub fn pauli_z() -> DenseTensor {
    real2([1.0, 0.0, 0.0, -1.0])
}

/// Raising operator |1⟩⟨0|.
pub fn sigma_plus() -> DenseTensor {
    real2([0.0, 0.0, 1.0, 0.0])
}

/// Lowering operator |0⟩⟨1|.
pub fn sigma_minus() -> DenseTensor {
    real2([0.0, 1.0, 0.0, 0.0])
}
