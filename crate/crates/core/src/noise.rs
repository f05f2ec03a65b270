//! Jump channels, decay-rate schedules and the site-local dissipative factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{expm_dense, DenseTensor, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Dephasing,
    Excitation,
    Relaxation,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::Dephasing, ChannelKind::Excitation, ChannelKind::Relaxation];

    /// Unnormalized jump operator: `Z`, `σ⁺` or `σ⁻`.
    pub fn operator(self) -> DenseTensor {
        match self {
            ChannelKind::Dephasing => ops::pauli_z(),
            ChannelKind::Excitation => ops::sigma_plus(),
            ChannelKind::Relaxation => ops::sigma_minus(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Dephasing => "dephasing",
            ChannelKind::Excitation => "excitation",
            ChannelKind::Relaxation => "relaxation",
        }
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    DampedOscillatory,
}

/// `γ(t) = γ_∞ − B·exp(−c·t³)·sin(ω t)`; the constant kind ignores everything
/// but `γ_∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSchedule {
    pub kind: ScheduleKind,
    pub gamma_inf: f64,
    #[serde(default, alias = "B")]
    pub amplitude: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default, alias = "f_cubic_coeff")]
    pub cubic_coeff: f64,
}

impl RateSchedule {
    pub fn constant(gamma: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            gamma_inf: gamma,
            amplitude: 0.0,
            omega: 0.0,
            cubic_coeff: 0.0,
        }
    }

    pub fn damped_oscillatory(gamma_inf: f64, amplitude: f64, omega: f64, cubic_coeff: f64) -> Self {
        Self {
            kind: ScheduleKind::DampedOscillatory,
            gamma_inf,
            amplitude,
            omega,
            cubic_coeff,
        }
    }

    /// The damped oscillatory benchmark rate: `γ_∞ = 8.24`, `B = 12`,
    /// `ω = 7.5`, `f(t) = 0.25 t³`.
    pub fn benchmark() -> Self {
        Self::damped_oscillatory(8.24, 12.0, 7.5, 0.25)
    }

    pub fn gamma_at(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.gamma_inf,
            ScheduleKind::DampedOscillatory => {
                self.gamma_inf - self.amplitude * (-self.cubic_coeff * t * t * t).exp() * (self.omega * t).sin()
            }
        }
    }

    /// Whether the rate can turn negative at some `t ≥ 0`.
    pub fn may_be_negative(&self) -> bool {
        match self.kind {
            ScheduleKind::Constant => self.gamma_inf < 0.0,
            ScheduleKind::DampedOscillatory => self.gamma_inf < self.amplitude.abs(),
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let fields = [self.gamma_inf, self.amplitude, self.omega, self.cubic_coeff];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(path, "schedule parameters must be finite"));
        }
        match self.kind {
            ScheduleKind::Constant if self.gamma_inf < 0.0 => {
                Err(Error::config(format!("{path}.gamma_inf"), "constant rate must be >= 0"))
            }
            ScheduleKind::DampedOscillatory if self.cubic_coeff < 0.0 => Err(Error::config(
                format!("{path}.cubic_coeff"),
                "damping coefficient must be >= 0",
            )),
            _ => Ok(()),
        }
    }
}

pub fn gamma_at(schedule: &RateSchedule, t: f64) -> f64 {
    schedule.gamma_at(t)
}

/// Positivity shift `C = −2·min(0, γ_1, γ_2, …)`.
pub fn shift_at(rates: &[f64]) -> f64 {
    let lowest = rates.iter().copied().fold(0.0, f64::min);
    -2.0 * lowest
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseChannel {
    pub kind: ChannelKind,
    pub site: usize,
    /// Jump operator before normalization.
    pub operator: DenseTensor,
    pub norm_factor: f64,
    /// Index into the owning model's schedule list.
    pub schedule: usize,
}

impl NoiseChannel {
    pub fn new(kind: ChannelKind, site: usize, schedule: usize) -> Self {
        Self {
            kind,
            site,
            operator: kind.operator(),
            norm_factor: 1.0,
            schedule,
        }
    }

    /// `c·L`.
    pub fn scaled_operator(&self) -> DenseTensor {
        self.operator.scaled(C64::new(self.norm_factor, 0.0))
    }

    /// `L†L` without the normalization factor.
    pub fn raw_weight_operator(&self) -> DenseTensor {
        self.operator
            .dagger()
            .and_then(|d| d.matmul(&self.operator))
            .expect("2x2 operator")
    }

    /// `c²·L†L`.
    pub fn weight_operator(&self) -> DenseTensor {
        self.raw_weight_operator()
            .scaled(C64::new(self.norm_factor * self.norm_factor, 0.0))
    }
}

const PROPORTIONALITY_TOL: f64 = 1e-12;

/// Sets a common normalization factor `c` so that `Σ_{sites, channels} c²·L†L = I`.
///
/// Requires the per-site sum of `L†L` to be the same multiple of the identity
/// on every site.
pub fn normalize_channels(mut channels: Vec<NoiseChannel>, n_sites: usize) -> Result<Vec<NoiseChannel>> {
    if channels.is_empty() {
        return Ok(channels);
    }
    let mut per_site = vec![DenseTensor::zeros(vec![2, 2]); n_sites];
    for ch in &channels {
        if ch.site >= n_sites {
            return Err(Error::config(
                "noise",
                format!("channel on site {} outside a chain of {n_sites}", ch.site),
            ));
        }
        let w = ch.raw_weight_operator();
        for (acc, x) in per_site[ch.site].data_mut().iter_mut().zip(w.data()) {
            *acc += x;
        }
    }
    let mut lambda = None;
    for (site, sum) in per_site.iter().enumerate() {
        let d = sum.data();
        let diag = d[0].re;
        let proportional = d[1].norm() <= PROPORTIONALITY_TOL
            && d[2].norm() <= PROPORTIONALITY_TOL
            && (d[0] - d[3]).norm() <= PROPORTIONALITY_TOL
            && d[0].im.abs() <= PROPORTIONALITY_TOL
            && diag > 0.0;
        if !proportional {
            let kinds: Vec<&str> = channels
                .iter()
                .filter(|c| c.site == site)
                .map(|c| c.kind.name())
                .collect();
            return Err(Error::config(
                "noise",
                format!(
                    "sum of L†L at site {site} is [[{:.3}, {:.3}], [{:.3}, {:.3}]], not proportional to the identity \
                     (channels: {kinds:?}); excitation and relaxation must be paired",
                    d[0].re, d[1].re, d[2].re, d[3].re
                ),
            ));
        }
        match lambda {
            None => lambda = Some(diag),
            Some(l) if (l - diag).abs() > PROPORTIONALITY_TOL => {
                return Err(Error::config(
                    "noise",
                    format!("site {site} carries a different channel set than site 0"),
                ))
            }
            _ => {}
        }
    }
    let total = lambda.unwrap_or(1.0) * n_sites as f64;
    let factor = total.sqrt().recip();
    for ch in &mut channels {
        ch.norm_factor = factor;
    }
    Ok(channels)
}

/// `D_ℓ(dt) = exp(−(dt/2)·Σ_k r_k·c_k²·L_k†L_k)` for the channels acting on one site.
pub fn dissipator_site_factor(channels_at_site: &[&NoiseChannel], rates: &[f64], dt: f64) -> Result<DenseTensor> {
    if channels_at_site.len() != rates.len() {
        return Err(Error::InvalidArgument(format!(
            "{} channels but {} rates",
            channels_at_site.len(),
            rates.len()
        )));
    }
    let mut generator = DenseTensor::zeros(vec![2, 2]);
    for (ch, &r) in channels_at_site.iter().zip(rates) {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::ContractViolation(format!(
                "effective rate {r} for {} on site {} must be non-negative; apply the shift first",
                ch.kind, ch.site
            )));
        }
        let w = ch.weight_operator();
        for (g, x) in generator.data_mut().iter_mut().zip(w.data()) {
            *g += x * r;
        }
    }
    let m = expm_dense(&generator.as_square()?, C64::new(-dt / 2.0, 0.0));
    Ok(DenseTensor::from_matrix(&m))
}

/// Rates of every schedule at one instant together with the positivity shift.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSnapshot {
    pub time: f64,
    pub gamma: Vec<f64>,
    pub shift: f64,
    pub shifted: Vec<f64>,
}

/// Full channel list of a run, ordered site-major: for each site, one channel
/// per configured kind in configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub n_sites: usize,
    pub kinds: Vec<ChannelKind>,
    pub schedules: Vec<RateSchedule>,
    pub channels: Vec<NoiseChannel>,
}

impl NoiseModel {
    pub fn none(n_sites: usize) -> Self {
        Self {
            n_sites,
            kinds: Vec::new(),
            schedules: Vec::new(),
            channels: Vec::new(),
        }
    }

    /// One schedule per kind, shared by all sites.
    pub fn uniform(n_sites: usize, specs: &[(ChannelKind, RateSchedule)]) -> Result<Self> {
        let mut kinds = Vec::with_capacity(specs.len());
        for (idx, (kind, schedule)) in specs.iter().enumerate() {
            if kinds.contains(kind) {
                return Err(Error::config(format!("noise[{idx}].kind"), format!("{kind} listed twice")));
            }
            schedule.validate(&format!("noise[{idx}].schedule"))?;
            kinds.push(*kind);
        }
        let mut channels = Vec::with_capacity(n_sites * specs.len());
        for site in 0..n_sites {
            for (idx, kind) in kinds.iter().enumerate() {
                channels.push(NoiseChannel::new(*kind, site, idx));
            }
        }
        let channels = normalize_channels(channels, n_sites)?;
        Ok(Self {
            n_sites,
            kinds,
            schedules: specs.iter().map(|s| s.1.clone()).collect(),
            channels,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn kinds_per_site(&self) -> usize {
        self.kinds.len()
    }

    pub fn channels_at_site(&self, site: usize) -> &[NoiseChannel] {
        let k = self.kinds.len();
        &self.channels[site * k..(site + 1) * k]
    }

    pub fn rates_at(&self, t: f64) -> RateSnapshot {
        let gamma: Vec<f64> = self.schedules.iter().map(|s| s.gamma_at(t)).collect();
        let shift = shift_at(&gamma);
        let shifted = gamma.iter().map(|g| g + shift).collect();
        RateSnapshot {
            time: t,
            gamma,
            shift,
            shifted,
        }
    }

    /// One `D_ℓ(span)` per site at the shifted rates of `snapshot`.
    pub fn site_dissipators(&self, snapshot: &RateSnapshot, span: f64) -> Result<Vec<DenseTensor>> {
        (0..self.n_sites)
            .map(|site| {
                let chans: Vec<&NoiseChannel> = self.channels_at_site(site).iter().collect();
                let rates: Vec<f64> = chans.iter().map(|c| snapshot.shifted[c.schedule]).collect();
                dissipator_site_factor(&chans, &rates, span)
            })
            .collect()
    }

    /// `max |Σ c²·L†L − I|` with the sum taken as a scalar multiple of the
    /// identity on the full chain (each site-local term is `S_ℓ ⊗ I`).
    pub fn completeness_error(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut total = DenseTensor::zeros(vec![2, 2]);
        for ch in &self.channels {
            for (acc, x) in total.data_mut().iter_mut().zip(ch.weight_operator().data()) {
                *acc += x;
            }
        }
        total.max_abs_diff(&DenseTensor::identity(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_rate_at_origin() {
        let s = RateSchedule::benchmark();
        assert_eq!(s.gamma_at(0.0), 8.24);
        assert_eq!(gamma_at(&RateSchedule::constant(8.24), 17.0), 8.24);
    }

    #[test]
    fn benchmark_rate_turns_negative_near_first_peak() {
        let s = RateSchedule::benchmark();
        let (mut t_min, mut g_min) = (0.0, f64::INFINITY);
        for k in 0..=30_000 {
            let t = k as f64 * 1e-4;
            let g = s.gamma_at(t);
            if g < g_min {
                g_min = g;
                t_min = t;
            }
        }
        assert!(g_min < 0.0);
        assert!((t_min - 0.2).abs() < 0.05, "minimum at {t_min}");
        assert!(s.may_be_negative());
        assert!(!RateSchedule::constant(8.24).may_be_negative());
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift_at(&[8.24, 8.24]), 0.0);
        assert_eq!(shift_at(&[-3.0, 5.0]), 6.0);
        assert_eq!(shift_at(&[0.0]), 0.0);
        assert_eq!(shift_at(&[]), 0.0);
    }

    fn factor_for(kinds: &[ChannelKind], n: usize) -> f64 {
        let specs: Vec<_> = kinds.iter().map(|k| (*k, RateSchedule::constant(1.0))).collect();
        let model = NoiseModel::uniform(n, &specs).unwrap();
        assert!(model.completeness_error() <= 1e-12);
        let f = model.channels[0].norm_factor;
        assert!(model.channels.iter().all(|c| c.norm_factor == f));
        f
    }

    #[test]
    fn normalization_factors() {
        let five = 5.0f64;
        assert!((factor_for(&[ChannelKind::Dephasing], 5) - five.sqrt().recip()).abs() < 1e-15);
        assert!(
            (factor_for(&[ChannelKind::Excitation, ChannelKind::Relaxation], 5) - five.sqrt().recip()).abs() < 1e-15
        );
        assert!((factor_for(&ChannelKind::ALL, 5) - 10.0f64.sqrt().recip()).abs() < 1e-15);
    }

    #[test]
    fn excitation_alone_is_rejected() {
        let err = NoiseModel::uniform(3, &[(ChannelKind::Excitation, RateSchedule::constant(1.0))]).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert!(err.to_string().contains("not proportional"));
    }

    #[test]
    fn duplicate_kind_is_rejected() {
        let specs = [
            (ChannelKind::Dephasing, RateSchedule::constant(1.0)),
            (ChannelKind::Dephasing, RateSchedule::constant(2.0)),
        ];
        assert!(NoiseModel::uniform(2, &specs).is_err());
    }

    #[test]
    fn scalar_dephasing_dissipator() {
        let model = NoiseModel::uniform(1, &[(ChannelKind::Dephasing, RateSchedule::constant(8.24))]).unwrap();
        let ch = &model.channels[0];
        let d = dissipator_site_factor(&[ch], &[8.24], 0.01).unwrap();
        let expected = (-0.0412f64).exp();
        assert!((expected - 0.95964).abs() < 1e-5);
        assert!(d.max_abs_diff(&DenseTensor::identity(2).scaled(C64::new(expected, 0.0))) < 1e-15);

        let id = dissipator_site_factor(&[ch], &[8.24], 0.0).unwrap();
        assert!(id.max_abs_diff(&DenseTensor::identity(2)) < 1e-15);
    }

    #[test]
    fn relaxation_only_touches_up_component() {
        let ch = NoiseChannel::new(ChannelKind::Relaxation, 0, 0);
        let d = dissipator_site_factor(&[&ch], &[2.0], 0.1).unwrap();
        assert!((d.get(&[0, 0]) - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((d.get(&[1, 1]) - C64::new((-0.1f64).exp(), 0.0)).norm() < 1e-15);
        assert!(d.get(&[0, 1]).norm() < 1e-15 && d.get(&[1, 0]).norm() < 1e-15);
    }

    #[test]
    fn negative_effective_rate_is_a_contract_violation() {
        let ch = NoiseChannel::new(ChannelKind::Dephasing, 0, 0);
        assert!(matches!(
            dissipator_site_factor(&[&ch], &[-0.5], 0.1),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn dissipator_is_positive_contraction() {
        let kinds = ChannelKind::ALL;
        let chans: Vec<NoiseChannel> = kinds.iter().map(|k| NoiseChannel::new(*k, 0, 0)).collect();
        let refs: Vec<&NoiseChannel> = chans.iter().collect();
        for rates in [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [20.0, 0.1, 7.0]] {
            let d = dissipator_site_factor(&refs, &rates, 0.05).unwrap();
            assert!(d.is_hermitian(1e-15));
            let eig = nalgebra::SymmetricEigen::new(d.as_square().unwrap());
            assert!(eig.eigenvalues.iter().all(|&e| e > 0.0 && e <= 1.0 + 1e-15));
        }
    }

    #[test]
    fn snapshot_shift_makes_rates_positive() {
        let model = NoiseModel::uniform(
            2,
            &[
                (ChannelKind::Excitation, RateSchedule::benchmark()),
                (ChannelKind::Relaxation, RateSchedule::constant(8.24)),
            ],
        )
        .unwrap();
        for k in 0..3000 {
            let snap = model.rates_at(k as f64 * 1e-3);
            let any_negative = snap.gamma.iter().any(|&g| g < 0.0);
            if any_negative {
                assert!(snap.shifted.iter().all(|&r| r > 0.0));
            } else {
                assert_eq!(snap.shift, 0.0);
                assert_eq!(snap.shifted, snap.gamma);
            }
        }
    }
}
