//! Fixtures shared by the criterion benchmarks.

use tjm_core::tdvp::dynamic_step;
use tjm_core::{ChannelKind, DenseTensor, MpOperator, MpsState, NoiseModel, RateSchedule, Result, SimulationContext, C64};

/// Deterministic, well-conditioned filler for factorization benchmarks.
pub fn filled_tensor(shape: Vec<usize>) -> DenseTensor {
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|k| {
            let x = k as f64;
            C64::new((0.37 * x + 0.1).sin(), (0.61 * x * x + 0.3).cos())
        })
        .collect();
    DenseTensor::new(shape, data).expect("shape matches data")
}

/// Transverse-field Ising chain (J = 1, g = 0.5) under benchmark dephasing.
pub fn benchmark_context(n: usize, chi_max: usize, dt: f64, n_steps: usize) -> Result<SimulationContext> {
    let noise = NoiseModel::uniform(n, &[(ChannelKind::Dephasing, RateSchedule::benchmark())])?;
    let mut ctx = SimulationContext::new(MpOperator::build_tfi(n, 1.0, 0.5)?, noise, dt, n_steps)?;
    ctx.chi_max = chi_max;
    Ok(ctx)
}

/// `|0…0⟩` evolved coherently until every bond has reached `chi_max`.
pub fn saturated_state(ctx: &SimulationContext) -> Result<MpsState> {
    let mut state = MpsState::from_product_state(&vec![0; ctx.n_sites()])?;
    for _ in 0..200 {
        if state.max_bond_dim() >= ctx.chi_max.min(1 << (ctx.n_sites() / 2)) {
            break;
        }
        dynamic_step(&mut state, &ctx.hamiltonian, 0.05, ctx.chi_max, ctx.svd_threshold)?;
    }
    Ok(state)
}
