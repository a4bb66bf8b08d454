//! Photon statistics through the two full-CSI EDFA relays and the detector.
//!
//! Every stage is a Laguerre (noncentral negative-binomial) count described by
//! `(a, b, D)`: `a` is the mean signal count, `b` the per-mode noise count
//! (background plus ASE with noise factor `n_sp G`) and `D` the optical
//! degrees of freedom. Each relay's gain is set from its incoming channel so
//! that its mean output photon count stays at its transmit budget.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::FadingRealization;
use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaguerreParams {
    pub a: f64,
    pub b: f64,
    pub dof: u32,
}

impl LaguerreParams {
    pub fn mean(&self) -> f64 {
        self.a + self.dof as f64 * self.b
    }

    pub fn variance(&self) -> f64 {
        let d = self.dof as f64;
        self.a + d * (self.b + self.b * self.b) + 2.0 * self.a * self.b
    }
}

/// `(mean, variance)` of a Laguerre count: `a + D b` and
/// `a + D(b + b²) + 2ab`.
pub fn laguerre_moments(p: &LaguerreParams) -> (f64, f64) {
    (p.mean(), p.variance())
}

/// Gain that holds a relay's mean output count at `m_target`.
pub fn full_csi_gain(m_target: f64, m_signal_in: f64, m_bg: f64, n_sp: f64, dof: u32) -> Result<f64> {
    let denom = m_signal_in + dof as f64 * (m_bg + n_sp);
    if !(denom.is_finite() && denom > 0.0) {
        return Err(Error::Degenerate(format!(
            "relay gain denominator is {denom} (signal {m_signal_in}, background {m_bg}, n_sp {n_sp})"
        )));
    }
    Ok(m_target / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayGains {
    pub g1: f64,
    pub g2: f64,
}

/// Full-CSI gains of both relays for one fading realization.
pub fn relay_gains(fading: &FadingRealization, params: &SystemParams) -> Result<RelayGains> {
    let g1 = full_csi_gain(params.m_r1, params.m_s * fading.h_sr, params.m_br1, params.n_sp, params.dof)?;
    let g2 = full_csi_gain(params.m_r2, params.m_r1 * fading.h_rr, params.m_br2, params.n_sp, params.dof)?;
    Ok(RelayGains { g1, g2 })
}

/// Count at the output of relay 1.
pub fn relay1_output(fading: &FadingRealization, params: &SystemParams) -> Result<LaguerreParams> {
    let g = relay_gains(fading, params)?;
    Ok(LaguerreParams {
        a: g.g1 * params.m_s * fading.h_sr,
        b: g.g1 * (params.m_br1 + params.n_sp),
        dof: params.dof,
    })
}

/// Count at the output of relay 2.
pub fn relay2_output(fading: &FadingRealization, params: &SystemParams) -> Result<LaguerreParams> {
    let g = relay_gains(fading, params)?;
    let (n1, n2) = (params.m_br1 + params.n_sp, params.m_br2 + params.n_sp);
    Ok(LaguerreParams {
        a: g.g1 * g.g2 * params.m_s * fading.h_sr * fading.h_rr,
        b: g.g1 * g.g2 * n1 * fading.h_rr + g.g2 * n2,
        dof: params.dof,
    })
}

/// Count of the light reaching the photodetector, destination background included.
pub fn detector_input_params(fading: &FadingRealization, params: &SystemParams) -> Result<LaguerreParams> {
    let g = relay_gains(fading, params)?;
    Ok(detector_input_with_gains(fading, params, &g))
}

fn detector_input_with_gains(f: &FadingRealization, p: &SystemParams, g: &RelayGains) -> LaguerreParams {
    let (n1, n2) = (p.m_br1 + p.n_sp, p.m_br2 + p.n_sp);
    LaguerreParams {
        a: g.g1 * g.g2 * p.m_s * f.h_sr * f.h_rr * f.h_rd,
        b: g.g1 * g.g2 * n1 * f.h_rr * f.h_rd + g.g2 * n2 * f.h_rd + p.m_bd,
        dof: p.dof,
    }
}

/// Photodetection with quantum efficiency `eta` thins both parameters.
pub fn apply_detector(p: &LaguerreParams, eta: f64) -> LaguerreParams {
    LaguerreParams {
        a: eta * p.a,
        b: eta * p.b,
        dof: p.dof,
    }
}

/// Thermal noise variance `2 K_B T_R T_s / (R_L e²)` in photoelectron counts².
pub fn thermal_noise_variance(params: &SystemParams) -> f64 {
    let e = params.electron_charge;
    2.0 * params.boltzmann * params.receiver_temp * params.symbol_duration / (params.receiver_load * e * e)
}

/// How the signal-dependent part of the destination variance is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// Zero signal-dependent variance; thermal noise only.
    ThermalLimited,
    /// Only the signal×ASE cross terms of both relays.
    LowBackground,
    /// Laguerre variance of the detected count.
    MomentComposition,
    /// The nine-term published expansion, term by term.
    AsPrinted,
}

impl VarianceMode {
    pub const ALL: [VarianceMode; 4] = [
        VarianceMode::ThermalLimited,
        VarianceMode::LowBackground,
        VarianceMode::MomentComposition,
        VarianceMode::AsPrinted,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VarianceMode::ThermalLimited => "thermal",
            VarianceMode::LowBackground => "low-bg",
            VarianceMode::MomentComposition => "composed",
            VarianceMode::AsPrinted => "printed",
        }
    }
}

impl Default for VarianceMode {
    fn default() -> Self {
        VarianceMode::MomentComposition
    }
}

impl fmt::Display for VarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarianceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "thermal" => Ok(VarianceMode::ThermalLimited),
            "low-bg" => Ok(VarianceMode::LowBackground),
            "composed" => Ok(VarianceMode::MomentComposition),
            "printed" => Ok(VarianceMode::AsPrinted),
            other => Err(format!("unknown variance mode `{other}` (expected composed, printed, low-bg or thermal)")),
        }
    }
}

/// The nine additive terms of the published destination variance, in order:
///
/// 0. signal shot noise, `ηa(1 + 2η m_bd)`
/// 1. relay-1 noise shot noise, `ηD B₁(1 + 2η m_bd)`
/// 2. relay-2 noise shot noise, `ηD B₂(1 + 2η m_bd)`
/// 3. relay-1 noise × noise, `D η² B₁²`
/// 4. relay-2 noise × noise, `D η² B₂²`
/// 5. relay-1 × relay-2 noise, `2η² B₁ B₂`
/// 6. signal × relay-1 noise, `2η² a B₁`
/// 7. signal × relay-2 noise, `2η² a B₂`
/// 8. destination background, `ηD(m_bd + m_bd²)`
///
/// where `a` is the undetected signal count and `B₁`, `B₂` the relay noise
/// contributions to the detector-input `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBreakdown(pub [f64; 9]);

impl VarianceBreakdown {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Unevaluated sum `hi + lo` carrying about 106 significand bits.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn fast(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let v = s - self.hi;
        let e = (self.hi - (s - v)) + (o.hi - v);
        Dd::fast(s, e + self.lo + o.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::fast(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn scale(self, x: f64) -> Dd {
        self.mul(Dd::new(x))
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

fn printed_total_dd(eta: f64, d: f64, a: f64, b1: f64, b2: f64, m_bd: f64) -> f64 {
    let (a, b1, b2, bd_dd) = (Dd::new(a), Dd::new(b1), Dd::new(b2), Dd::new(m_bd));
    let e = Dd::new(eta);
    let e2 = e.mul(e);
    let bd = Dd::new(1.0).add(e.mul(bd_dd).scale(2.0));
    let shot = a.add(b1.scale(d)).add(b2.scale(d)).mul(e).mul(bd);
    let beat = b1.mul(b1).add(b2.mul(b2)).scale(d).add(b1.mul(b2).scale(2.0)).add(a.mul(b1.add(b2)).scale(2.0)).mul(e2);
    let background = bd_dd.add(bd_dd.mul(bd_dd)).mul(e).scale(d);
    shot.add(beat).add(background).value()
}

fn composed_dd(eta: f64, d: f64, a: f64, b1: f64, b2: f64, m_bd: f64) -> f64 {
    let e = Dd::new(eta);
    let a = Dd::new(a).mul(e);
    let b = Dd::new(b1).add(Dd::new(b2)).add(Dd::new(m_bd)).mul(e);
    a.add(b.add(b.mul(b)).scale(d)).add(a.mul(b).scale(2.0)).value()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DestinationStats {
    /// Mean photoelectron count.
    pub mean: f64,
    /// Signal-dependent variance under the selected mode.
    pub var_signal: f64,
    pub var_thermal: f64,
    pub var_total: f64,
    /// Electrical SNR, squared mean signal over total variance.
    pub snr: f64,
    pub breakdown: VarianceBreakdown,
    pub gains: RelayGains,
}

/// Mean, variance and SNR of the detected count for one fading realization.
pub fn destination_stats(fading: &FadingRealization, params: &SystemParams, mode: VarianceMode) -> Result<DestinationStats> {
    let gains = relay_gains(fading, params)?;
    let input = detector_input_with_gains(fading, params, &gains);
    let detected = apply_detector(&input, params.eta);

    let eta = params.eta;
    let d = params.dof as f64;
    let m_bd = params.m_bd;
    let a = input.a;
    let b1 = gains.g1 * gains.g2 * (params.m_br1 + params.n_sp) * fading.h_rr * fading.h_rd;
    let b2 = gains.g2 * (params.m_br2 + params.n_sp) * fading.h_rd;
    let bd = 1.0 + 2.0 * eta * m_bd;
    let e2 = eta * eta;
    let breakdown = VarianceBreakdown([
        eta * a * bd,
        eta * d * b1 * bd,
        eta * d * b2 * bd,
        d * e2 * b1 * b1,
        d * e2 * b2 * b2,
        2.0 * e2 * b1 * b2,
        2.0 * e2 * a * b1,
        2.0 * e2 * a * b2,
        eta * d * (m_bd + m_bd * m_bd),
    ]);

    // Both full models are evaluated in double-double from the same f64
    // primitives so that they differ only by the final rounding; their
    // difference is often seven orders below the variance itself.
    let var_signal = match mode {
        VarianceMode::AsPrinted => printed_total_dd(eta, d, a, b1, b2, m_bd),
        VarianceMode::MomentComposition => composed_dd(eta, d, a, b1, b2, m_bd),
        VarianceMode::LowBackground => breakdown.0[6] + breakdown.0[7],
        VarianceMode::ThermalLimited => 0.0,
    };
    let var_thermal = thermal_noise_variance(params);
    let var_total = var_signal + var_thermal;
    let signal = detected.a;
    let snr = if signal == 0.0 { 0.0 } else { signal * signal / var_total };
    if !snr.is_finite() {
        return Err(Error::Degenerate(format!("SNR is {snr} (variance {var_total})")));
    }
    Ok(DestinationStats {
        mean: detected.mean(),
        var_signal,
        var_thermal,
        var_total,
        snr,
        breakdown,
        gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::TripleHop;
    use crate::params::LinkConfig;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    fn reference_fading() -> (SystemParams, FadingRealization) {
        let p = SystemParams::default();
        let f = TripleHop::new(1850.0, 1800.0, 1350.0, &p).unwrap().mean_fading();
        (p, f)
    }

    #[test]
    fn moments() {
        for dof in [1, 7, 100] {
            assert_eq!(laguerre_moments(&LaguerreParams { a: 0.0, b: 0.0, dof }), (0.0, 0.0));
        }
        assert_eq!(laguerre_moments(&LaguerreParams { a: 5.0, b: 0.0, dof: 100 }), (5.0, 5.0));
        assert_eq!(laguerre_moments(&LaguerreParams { a: 10.0, b: 2.0, dof: 3 }), (16.0, 68.0));
    }

    #[test]
    fn gain_cases() {
        assert_eq!(full_csi_gain(120.0, 20.0, 0.5, 0.5, 100).unwrap(), 1.0);
        assert_eq!(full_csi_gain(1000.0, 0.0, 4.0, 1.0, 100).unwrap(), 2.0);
        // 40-digit evaluation with m_s from 5 dBm and the rounded channel/background inputs
        let m_s = SystemParams::default().m_s;
        let g1 = full_csi_gain(m_s, m_s * 3.30e-3, 19.571, 1.0, 100).unwrap();
        assert!(rel(g1, 288.500_761_333_450_45) < 1e-12, "{g1}");
        assert!(matches!(full_csi_gain(1.0, 0.0, 0.0, 0.0, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reference_chain_fixture() {
        // 40-digit composition of the chain at mean fading, 1850/1800/1350 m
        let (p, f) = reference_fading();
        let g = relay_gains(&f, &p).unwrap();
        assert!(rel(g.g1, 288.559_272_631_046_94) < 1e-11);
        assert!(rel(g.g2, 257.344_188_948_629_01) < 1e-11);
        let input = detector_input_params(&f, &p).unwrap();
        assert!(rel(input.a, 134_038.846_749_056_28) < 1e-11);
        assert!(rel(input.b, 149.993_880_002_205_39) < 1e-11);
        let s = destination_stats(&f, &p, VarianceMode::MomentComposition).unwrap();
        assert!(rel(s.mean, 119_230.587_799_421_45) < 1e-11);
        assert!(rel(s.var_signal, 27_293_521.655_726_135) < 1e-11);
        assert!(rel(s.snr, 397.785_145_994_172_16) < 1e-11);
    }

    #[test]
    fn dead_final_hop() {
        let (p, mut f) = reference_fading();
        f.h_rd = 0.0;
        let l = detector_input_params(&f, &p).unwrap();
        assert_eq!(l.a, 0.0);
        assert_eq!(l.b, p.m_bd);
        assert_eq!(destination_stats(&f, &p, VarianceMode::MomentComposition).unwrap().snr, 0.0);
    }

    #[test]
    fn noiseless_amplifiers() {
        let c = LinkConfig {
            n_sp: 0.0,
            p_bg_relay1_w: 0.0,
            p_bg_relay2_w: 0.0,
            p_bg_dest_w: 0.0,
            ..LinkConfig::default()
        };
        let p = SystemParams::from_config(&c).unwrap();
        let f = TripleHop::new(1850.0, 1800.0, 1350.0, &p).unwrap().mean_fading();
        let l = detector_input_params(&f, &p).unwrap();
        let g = relay_gains(&f, &p).unwrap();
        assert_eq!(l.b, 0.0);
        assert_eq!(l.a, g.g1 * g.g2 * p.m_s * f.h_sr * f.h_rr * f.h_rd);
    }

    #[test]
    fn detector_scaling() {
        let l = LaguerreParams { a: 10.0, b: 2.0, dof: 4 };
        assert_eq!(apply_detector(&l, 1.0), l);
        assert_eq!(apply_detector(&l, 0.5), LaguerreParams { a: 5.0, b: 1.0, dof: 4 });
    }

    #[test]
    fn thermal_noise() {
        let p = SystemParams::default();
        // 2 * 1.38e-23 * 300 * 5e-10 / (100 * e²), 40-digit evaluation
        assert!(rel(thermal_noise_variance(&p), 1_612_796.430_800_248_3) < 1e-12);
        let cold = SystemParams::from_config(&LinkConfig { receiver_temp_k: 0.0, ..LinkConfig::default() }).unwrap();
        assert_eq!(thermal_noise_variance(&cold), 0.0);
        let half = SystemParams::from_config(&LinkConfig { receiver_load_ohm: 50.0, ..LinkConfig::default() }).unwrap();
        assert!(rel(thermal_noise_variance(&half), 2.0 * thermal_noise_variance(&p)) < 1e-15);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in VarianceMode::ALL {
            assert_eq!(m.as_str().parse::<VarianceMode>().unwrap(), m);
        }
        assert!("exact".parse::<VarianceMode>().is_err());
        assert_eq!(VarianceMode::default(), VarianceMode::MomentComposition);
    }

    #[test]
    fn printed_matches_composition_without_destination_background_and_single_mode() {
        let c = LinkConfig { p_bg_dest_w: 0.0, dof: 1, ..LinkConfig::default() };
        let p = SystemParams::from_config(&c).unwrap();
        let f = TripleHop::new(1700.0, 1900.0, 1400.0, &p).unwrap().mean_fading();
        let a = destination_stats(&f, &p, VarianceMode::AsPrinted).unwrap();
        let b = destination_stats(&f, &p, VarianceMode::MomentComposition).unwrap();
        assert!(rel(a.var_signal, b.var_signal) < 1e-14);
    }

    #[test]
    fn snr_increases_with_source_power() {
        let (_, f) = reference_fading();
        let mut last = 0.0;
        for k in 0..40 {
            let dbm = -30.0 + k as f64;
            let p = SystemParams::from_config(&LinkConfig { p_source_dbm: dbm, ..LinkConfig::default() }).unwrap();
            let s = destination_stats(&f, &p, VarianceMode::MomentComposition).unwrap().snr;
            assert!(s > last, "{dbm} dBm: {s} <= {last}");
            last = s;
        }
    }

    #[test]
    fn snr_vanishes_as_any_hop_fades() {
        let (p, f) = reference_fading();
        for scale in [1e-6, 1e-9, 1e-12] {
            for hop in 0..3 {
                let mut g = f;
                match hop {
                    0 => g.h_sr *= scale,
                    1 => g.h_rr *= scale,
                    _ => g.h_rd *= scale,
                }
                let s = destination_stats(&g, &p, VarianceMode::MomentComposition).unwrap().snr;
                assert!(s < 1e3 * scale, "hop {hop} scale {scale}: {s}");
            }
        }
    }

    fn arb_case() -> impl Strategy<Value = (SystemParams, FadingRealization)> {
        (
            (0.0..1e-7f64, 0.0..1e-7f64, 0.0..1e-7f64, 0.0..3.0f64, 1i64..300, 0.05..=1.0f64),
            (-10.0..20.0f64, -10.0..20.0f64, -10.0..20.0f64),
            (1e-6..1.0f64, 1e-6..1.0f64, 1e-6..1.0f64),
        )
            .prop_filter_map("degenerate gain", |((b1, b2, bd, nsp, dof, eta), (ps, p1, p2), (h1, h2, h3))| {
                let c = LinkConfig {
                    p_bg_relay1_w: b1,
                    p_bg_relay2_w: b2,
                    p_bg_dest_w: bd,
                    n_sp: nsp,
                    dof,
                    eta,
                    p_source_dbm: ps,
                    p_relay1_dbm: p1,
                    p_relay2_dbm: p2,
                    ..LinkConfig::default()
                };
                let p = SystemParams::from_config(&c).ok()?;
                Some((p, FadingRealization { h_sr: h1, h_rr: h2, h_rd: h3 }))
            })
    }

    proptest! {
        #[test]
        fn relay_outputs_hold_transmit_budget((p, f) in arb_case()) {
            prop_assert!(rel(relay1_output(&f, &p).unwrap().mean(), p.m_r1) < 1e-9);
            prop_assert!(rel(relay2_output(&f, &p).unwrap().mean(), p.m_r2) < 1e-9);
        }

        #[test]
        fn mean_is_detected_laguerre_mean((p, f) in arb_case()) {
            let det = apply_detector(&detector_input_params(&f, &p).unwrap(), p.eta);
            let means: Vec<f64> = VarianceMode::ALL
                .iter()
                .map(|&m| destination_stats(&f, &p, m).unwrap().mean)
                .collect();
            for m in &means {
                prop_assert_eq!(*m, det.a + p.dof as f64 * det.b);
            }
        }

        #[test]
        fn printed_minus_composed_closed_form((p, f) in arb_case()) {
            let printed = destination_stats(&f, &p, VarianceMode::AsPrinted).unwrap();
            let composed = destination_stats(&f, &p, VarianceMode::MomentComposition).unwrap();
            let g = printed.gains;
            let (eta, d, mbd) = (p.eta, p.dof as f64, p.m_bd);
            let expected = eta * d * mbd * mbd * (1.0 - eta)
                + 2.0 * eta * eta * g.g1 * g.g2 * g.g2
                    * (p.m_br1 + p.n_sp) * (p.m_br2 + p.n_sp) * f.h_rr * f.h_rd * f.h_rd * (1.0 - d);
            let diff = printed.var_signal - composed.var_signal;
            // cancellation floor relative to the variances themselves
            let tol = 1e-9 * expected.abs().max(1e-6 * composed.var_signal);
            prop_assert!((diff - expected).abs() <= tol, "diff {} expected {}", diff, expected);
        }

        #[test]
        fn breakdown_terms_non_negative_and_sum((p, f) in arb_case()) {
            let s = destination_stats(&f, &p, VarianceMode::AsPrinted).unwrap();
            for t in s.breakdown.0 {
                prop_assert!(t >= 0.0);
            }
            prop_assert!(rel(s.breakdown.total(), s.var_signal) < 1e-12);
            prop_assert_eq!(s.var_total, s.var_signal + s.var_thermal);
        }

        #[test]
        fn mode_ordering((p, f) in arb_case()) {
            let s = |m| destination_stats(&f, &p, m).unwrap();
            let (th, lo, co) = (s(VarianceMode::ThermalLimited), s(VarianceMode::LowBackground), s(VarianceMode::MomentComposition));
            prop_assert!(th.var_total <= lo.var_total && lo.var_total <= co.var_total);
            prop_assert!(th.snr >= lo.snr && lo.snr >= co.snr);
        }

        #[test]
        fn detector_thins_mean(a in 0.0..1e6f64, b in 0.0..1e3f64, dof in 1u32..500, eta in 0.01..=1.0f64) {
            let l = LaguerreParams { a, b, dof };
            let d = apply_detector(&l, eta);
            prop_assert_eq!(d.dof, dof);
            prop_assert!(rel(d.mean(), eta * l.mean()) < 1e-14);
        }
    }
}
