//! Per-hop loss and log-normal turbulence model.
//!
//! Each hop's total gain is `h = h_l * h_a`, where `h_l` is the deterministic
//! geometric spread times Beers-Lambert attenuation and `h_a` is unit-mean
//! log-normal scintillation with log-variance `σ_R²/4`.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::params::SystemParams;

/// Scattering coefficient (km⁻¹) from visibility (km) and wavelength (nm),
/// using the Kim model for the size-distribution exponent `q`.
///
/// Regimes: `V > 50` gives `q = 1.6`, `6 < V <= 50` gives `q = 1.3`,
/// `V <= 6` gives `q = 0.585 V^(1/3)`.
pub fn scattering_coefficient(visibility_km: f64, lambda_nm: f64) -> Result<f64> {
    if !(visibility_km.is_finite() && visibility_km > 0.0) {
        return Err(invalid("visibility", format!("must be positive, got {visibility_km}")));
    }
    if !(lambda_nm.is_finite() && lambda_nm > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda_nm}")));
    }
    Ok(3.91 / visibility_km * (lambda_nm / 550.0).powf(-size_exponent(visibility_km)))
}

fn size_exponent(visibility_km: f64) -> f64 {
    if visibility_km > 50.0 {
        1.6
    } else if visibility_km > 6.0 {
        1.3
    } else {
        0.585 * visibility_km.cbrt()
    }
}

/// Deterministic path loss of one hop: divergence-cone geometric gain times
/// `exp(-d ξ)`. `xi` is in m⁻¹. The geometric factor saturates at 1.
pub fn path_loss(d: f64, theta_div: f64, aperture_area: f64, xi: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(invalid("d", format!("hop length must be positive, got {d}")));
    }
    if !(theta_div.is_finite() && theta_div > 0.0) {
        return Err(invalid("theta_div", format!("must be positive, got {theta_div}")));
    }
    if !(aperture_area.is_finite() && aperture_area > 0.0) {
        return Err(invalid("aperture_area", format!("must be positive, got {aperture_area}")));
    }
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(invalid("xi", format!("must be non-negative, got {xi}")));
    }
    let spot = theta_div * d / 2.0;
    let geometric = (aperture_area / (spot * spot)).min(1.0);
    Ok(geometric * (-d * xi).exp())
}

/// Rytov variance `1.23 C_n² κ^(7/6) d^(11/6)` with `κ = 2π/λ`.
pub fn rytov_variance(cn2: f64, lambda: f64, d: f64) -> Result<f64> {
    if !(cn2.is_finite() && cn2 >= 0.0) {
        return Err(invalid("cn2", format!("must be non-negative, got {cn2}")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if !(d.is_finite() && d >= 0.0) {
        return Err(invalid("d", format!("must be non-negative, got {d}")));
    }
    let kappa = 2.0 * PI / lambda;
    let s = 1.23 * cn2 * kappa.powf(7.0 / 6.0) * d.powf(11.0 / 6.0);
    if s > 1.0 {
        log::warn!("Rytov variance {s:.3} > 1 at d = {d} m: outside the weak-turbulence regime");
    }
    Ok(s)
}

/// Log-normal density of the normalized fading coefficient.
/// Zero outside the support `h_a > 0`.
pub fn fading_pdf(h_a: f64, mu: f64, sigma2: f64) -> f64 {
    if h_a <= 0.0 {
        return 0.0;
    }
    let z = h_a.ln() - mu;
    (-(z * z) / (2.0 * sigma2)).exp() / (h_a * (2.0 * PI * sigma2).sqrt())
}

/// Channel state of one hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopChannel {
    /// Hop length (m).
    pub distance: f64,
    /// Scattering coefficient (m⁻¹).
    pub xi: f64,
    pub path_loss: f64,
    pub rytov_var: f64,
    /// Mean of `ln h`.
    pub mu_l: f64,
    /// Variance of `ln h`.
    pub sigma2_l: f64,
}

impl HopChannel {
    pub fn new(d: f64, params: &SystemParams) -> Result<Self> {
        let xi = scattering_coefficient(params.visibility, params.config().lambda_nm)? * 1e-3;
        let path_loss = path_loss(d, params.divergence, params.aperture_area, xi)?;
        let rytov_var = rytov_variance(params.cn2, params.lambda, d)?;
        Ok(Self {
            distance: d,
            xi,
            path_loss,
            rytov_var,
            mu_l: -rytov_var / 8.0 + path_loss.ln(),
            sigma2_l: rytov_var / 4.0,
        })
    }

    /// Gain for a standard-normal variate `z`: `h_l exp(σ z - σ²/2)`.
    ///
    /// Equal to `exp(mu_l + σ z)`; factored so a turbulence-free hop returns
    /// `path_loss` bit for bit.
    #[inline]
    pub fn gain(&self, z: f64) -> f64 {
        self.path_loss * (self.sigma2_l.sqrt() * z - self.sigma2_l / 2.0).exp()
    }

    pub fn pdf(&self, h: f64) -> f64 {
        fading_pdf(h, self.mu_l, self.sigma2_l)
    }
}

/// Builds the hop channel for a hop of length `d`.
pub fn build_hop(d: f64, params: &SystemParams) -> Result<HopChannel> {
    HopChannel::new(d, params)
}

/// The three hops source→relay 1, relay 1→relay 2, relay 2→destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleHop {
    pub sr: HopChannel,
    pub rr: HopChannel,
    pub rd: HopChannel,
}

impl TripleHop {
    pub fn new(d_sr: f64, d_rr: f64, d_rd: f64, params: &SystemParams) -> Result<Self> {
        Ok(Self {
            sr: HopChannel::new(d_sr, params)?,
            rr: HopChannel::new(d_rr, params)?,
            rd: HopChannel::new(d_rd, params)?,
        })
    }

    pub fn hops(&self) -> [&HopChannel; 3] {
        [&self.sr, &self.rr, &self.rd]
    }

    /// Realization with every `h_a` at its mean of 1.
    pub fn mean_fading(&self) -> FadingRealization {
        FadingRealization {
            h_sr: self.sr.path_loss,
            h_rr: self.rr.path_loss,
            h_rd: self.rd.path_loss,
        }
    }

    /// Realization from three standard-normal variates (SR, RR, RD order).
    #[inline]
    pub fn realize(&self, z: [f64; 3]) -> FadingRealization {
        FadingRealization {
            h_sr: self.sr.gain(z[0]),
            h_rr: self.rr.gain(z[1]),
            h_rd: self.rd.gain(z[2]),
        }
    }
}

/// One joint draw of the three hop gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingRealization {
    pub h_sr: f64,
    pub h_rr: f64,
    pub h_rd: f64,
}

/// Draws three standard normals in SR, RR, RD order.
#[inline]
pub fn standard_normal_triple<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ]
}

/// Draws an independent log-normal gain for each hop.
pub fn sample_fading<R: Rng + ?Sized>(hops: &TripleHop, rng: &mut R) -> FadingRealization {
    hops.realize(standard_normal_triple(rng))
}

/// Deterministic random stream `stream` under `seed`.
pub fn fading_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::LinkConfig;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Test-only oracle: composite Simpson on t = ln h over mu ± 12σ.
    fn integrate_pdf(mu: f64, sigma2: f64) -> f64 {
        let s = sigma2.sqrt();
        let (lo, hi) = (mu - 12.0 * s, mu + 12.0 * s);
        let n = 20_000;
        let step = (hi - lo) / n as f64;
        let f = |t: f64| {
            let h = t.exp();
            fading_pdf(h, mu, sigma2) * h
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + k as f64 * step);
        }
        acc * step / 3.0
    }

    #[test]
    fn scattering_reference_values() {
        for v in [0.5, 1.5, 20.0, 80.0] {
            assert!(rel(scattering_coefficient(v, 550.0).unwrap(), 3.91 / v) < 1e-15);
        }
        // (3.91/60)(1550/550)^-1.6, 40-digit evaluation
        assert!(rel(scattering_coefficient(60.0, 1550.0).unwrap(), 0.012_418_670_181_727_34) < 1e-12);
        // q = 0.585 * 1.5^(1/3) = 0.66965783...
        assert!(rel(size_exponent(1.5), 0.669_657_831_893_699_1) < 1e-14);
        assert!(rel(scattering_coefficient(1.5, 1550.0).unwrap(), 1.302_447_503_310_671_4) < 1e-12);
        assert!(rel(scattering_coefficient(10.0, 1550.0).unwrap(), 0.101_675_670_752_113_16) < 1e-12);
        assert!(scattering_coefficient(0.0, 1550.0).is_err());
        assert!(scattering_coefficient(1.0, -1.0).is_err());
    }

    #[test]
    fn scattering_regime_boundaries() {
        assert_eq!(size_exponent(50.0), 1.3);
        assert_eq!(size_exponent(50.000001), 1.6);
        assert_eq!(size_exponent(6.000001), 1.3);
        assert!(rel(size_exponent(6.0), 0.585 * 6f64.cbrt()) < 1e-15);
    }

    #[test]
    fn path_loss_values() {
        let theta = 1e-3;
        let d = 1850.0;
        let area = (theta * d / 2.0) * (theta * d / 2.0);
        assert!(rel(path_loss(d, theta, area, 0.0).unwrap(), 1.0) < 1e-15);
        let h = path_loss(1850.0, 1e-3, 0.031416, 1.3024e-3).unwrap();
        assert!(rel(h, 3.299_597_199_335_99e-3) < 1e-12, "{h}");
        assert!((h - 3.30e-3).abs() < 5e-6);
        // beam narrower than the aperture: clamp
        assert_eq!(path_loss(1.0, 1e-3, 0.0314, 0.0).unwrap(), 1.0);
        assert!(path_loss(0.0, 1e-3, 0.03, 0.0).is_err());
    }

    #[test]
    fn rytov_values() {
        assert_eq!(rytov_variance(1e-15, 1550e-9, 0.0).unwrap(), 0.0);
        let r = rytov_variance(1e-15, 1550e-9, 1850.0).unwrap();
        assert!(rel(r, 0.061_500_145_803_892_73) < 1e-12, "{r}");
        let ratio = rytov_variance(1e-15, 1550e-9, 2000.0).unwrap() / rytov_variance(1e-15, 1550e-9, 1000.0).unwrap();
        assert!(rel(ratio, 2f64.powf(11.0 / 6.0)) < 1e-13);
        assert!((ratio - 3.5636).abs() < 1e-4);
    }

    #[test]
    fn default_hop_fixture() {
        let hop = build_hop(1850.0, &SystemParams::default()).unwrap();
        assert!(rel(hop.path_loss, 3.299_299_524_566_616_6e-3) < 1e-12);
        assert!(rel(hop.rytov_var, 0.061_500_145_803_892_73) < 1e-12);
        assert!(rel(hop.mu_l, -5.721_732_616_549_496) < 1e-13);
        assert!(rel(hop.sigma2_l, 0.015_375_036_450_973_18) < 1e-12);
        assert!(rel(hop.xi, 1.302_447_503_310_671_4e-3) < 1e-12);
    }

    #[test]
    fn zero_turbulence_hop_is_deterministic() {
        let p = SystemParams::from_config(&LinkConfig { cn2: 0.0, ..LinkConfig::default() }).unwrap();
        let hops = TripleHop::new(1850.0, 1800.0, 1350.0, &p).unwrap();
        assert_eq!(hops.sr.sigma2_l, 0.0);
        assert_eq!(hops.sr.mu_l, hops.sr.path_loss.ln());
        let mut rng = fading_stream(7, 0);
        for _ in 0..100 {
            assert_eq!(sample_fading(&hops, &mut rng), hops.mean_fading());
        }
    }

    #[test]
    fn pdf_point_values() {
        assert!(rel(fading_pdf(1.0, 0.0, 1.0), 0.398_942_280_401_432_7) < 1e-14);
        let (mu, s2) = (-0.3f64, 0.2f64);
        let h = mu.exp();
        assert!(rel(fading_pdf(h, mu, s2), 1.0 / (h * s2.sqrt() * (2.0 * PI).sqrt())) < 1e-14);
        assert_eq!(fading_pdf(0.0, 0.0, 1.0), 0.0);
        assert_eq!(fading_pdf(-1.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn pdf_integrates_to_one() {
        for (mu, s2) in [(0.0, 1.0), (-0.3, 0.2), (-5.72, 0.0154), (-0.0077, 0.0154)] {
            let total = integrate_pdf(mu, s2);
            assert!((total - 1.0).abs() < 1e-6, "mu={mu} s2={s2}: {total}");
        }
    }

    #[test]
    fn sampler_is_reproducible() {
        let hops = TripleHop::new(1850.0, 1800.0, 1350.0, &SystemParams::default()).unwrap();
        let a: Vec<_> = {
            let mut r = fading_stream(42, 3);
            (0..50).map(|_| sample_fading(&hops, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = fading_stream(42, 3);
            (0..50).map(|_| sample_fading(&hops, &mut r)).collect()
        };
        assert_eq!(a, b);
        let mut other = fading_stream(42, 4);
        assert_ne!(a[0], sample_fading(&hops, &mut other));
    }

    #[test]
    fn sampler_moments() {
        let hops = TripleHop::new(1850.0, 1800.0, 1350.0, &SystemParams::default()).unwrap();
        let n = 1_000_000;
        let mut rng = fading_stream(2024, 0);
        let (mut s, mut s2, mut l, mut l2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let h = sample_fading(&hops, &mut rng).h_sr;
            s += h;
            s2 += h * h;
            l += h.ln();
            l2 += h.ln() * h.ln();
        }
        let nf = n as f64;
        let mean = s / nf;
        let sd = (s2 / nf - mean * mean).sqrt();
        assert!((mean - hops.sr.path_loss).abs() < 3.0 * sd / nf.sqrt());
        let lmean = l / nf;
        let lvar = l2 / nf - lmean * lmean;
        // Var of the sample variance for a normal: 2σ⁴/(n-1)
        let se = (2.0 * hops.sr.sigma2_l.powi(2) / (nf - 1.0)).sqrt();
        assert!((lvar - hops.sr.sigma2_l).abs() < 3.0 * se, "{lvar} vs {}", hops.sr.sigma2_l);
    }

    proptest! {
        #[test]
        fn normalization_identity(d in 10.0..20_000.0f64, cn2 in 0.0..1e-13f64, v in 0.2..100.0f64) {
            let p = SystemParams::from_config(&LinkConfig { cn2, visibility_km: v, ..LinkConfig::default() }).unwrap();
            let hop = build_hop(d, &p).unwrap();
            prop_assert!(rel((hop.mu_l + hop.sigma2_l / 2.0).exp(), hop.path_loss) < 1e-12);
            prop_assert!(hop.path_loss > 0.0 && hop.path_loss <= 1.0);
        }

        #[test]
        fn path_loss_monotone(d in 400.0..10_000.0f64, xi in 0.0..5e-3f64, dxi in 1e-6..1e-3f64) {
            // beyond the clamp distance (~354 m for these optics)
            let a = path_loss(d, 1e-3, 0.0314, xi).unwrap();
            prop_assert!(path_loss(2.0 * d, 1e-3, 0.0314, xi).unwrap() < a);
            prop_assert!(path_loss(d, 1e-3, 0.0314, xi + dxi).unwrap() < a);
        }

        #[test]
        fn scattering_piecewise_continuous(v in 0.2..100.0f64) {
            // away from the 6 km and 50 km boundaries the map is continuous
            prop_assume!((v - 6.0).abs() > 1e-3 && (v - 50.0).abs() > 1e-3);
            let eps = 1e-7;
            let a = scattering_coefficient(v, 1550.0).unwrap();
            let b = scattering_coefficient(v + eps, 1550.0).unwrap();
            prop_assert!(rel(b, a) < 1e-5);
        }
    }
}
