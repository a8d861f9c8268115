//! OFDMA allocation, maximum-ratio precoding, per-device SNR and sum rate.

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::channel::{device_channel, OfdmaGridSpec};
use crate::geometry::{Point2, RoleAssignment, StripeLayout};
use crate::{invalid, CVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationMode {
    /// Device `j` (1-based) gets subcarrier `⌈(j−1)·K/D⌉ + 1`.
    #[default]
    EvenSpread,
    /// Distinct subcarriers drawn uniformly.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolMode {
    /// d_k = 1.
    #[default]
    Unit,
    /// d_k drawn from the unit-energy QPSK alphabet.
    Qpsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrConvention {
    /// `Σ_c p_{c,k}·‖a‖²/(M σ²)`.
    #[default]
    AsPrinted,
    /// `Σ_c |a^H u_{c,k}|²/σ²`.
    MatchedFilter,
}

/// One served device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub position: Point2,
    /// 1-based subcarrier.
    pub subcarrier: usize,
    /// Transmit power of each communication APU on this subcarrier, W.
    pub power_per_apu: f64,
    pub symbol: Complex64,
}

/// Device → subcarrier map; links are kept in ascending subcarrier order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub subcarrier_count: usize,
    pub comm_count: usize,
    pub links: Vec<Link>,
}

impl Allocation {
    pub fn device_count(&self) -> usize {
        self.links.len()
    }

    pub fn total_power(&self) -> f64 {
        self.links.iter().map(|l| l.power_per_apu).sum::<f64>() * self.comm_count as f64
    }

    pub fn active_subcarriers(&self) -> Vec<usize> {
        self.links.iter().map(|l| l.subcarrier).collect()
    }
}

pub fn even_spread_subcarriers(devices: usize, subcarriers: usize) -> Vec<usize> {
    (0..devices)
        .map(|j| (j * subcarriers).div_ceil(devices) + 1)
        .collect()
}

/// Assigns one subcarrier per device and splits `budget` equally over every
/// active (APU, subcarrier) pair.
pub fn allocate<R: Rng + ?Sized>(
    devices: &[Point2],
    subcarrier_count: usize,
    budget: f64,
    comm_count: usize,
    mode: AllocationMode,
    symbols: SymbolMode,
    rng: &mut R,
) -> Result<Allocation> {
    let d = devices.len();
    if d > subcarrier_count {
        return Err(invalid(format!(
            "{d} devices exceed {subcarrier_count} subcarriers"
        )));
    }
    if comm_count == 0 {
        return Err(invalid("at least one communication APU is required"));
    }
    if !(budget >= 0.0) {
        return Err(invalid("power budget must be >= 0"));
    }
    let carriers = match mode {
        AllocationMode::EvenSpread => even_spread_subcarriers(d, subcarrier_count),
        AllocationMode::Random => sample(rng, subcarrier_count, d).into_iter().map(|k| k + 1).collect(),
    };
    let power = if d == 0 { 0.0 } else { budget / (comm_count * d) as f64 };
    let mut links: Vec<Link> = devices
        .iter()
        .zip(carriers)
        .map(|(&position, subcarrier)| Link {
            position,
            subcarrier,
            power_per_apu: power,
            symbol: Complex64::new(1.0, 0.0),
        })
        .collect();
    links.sort_by_key(|l| l.subcarrier);
    if symbols == SymbolMode::Qpsk {
        for l in &mut links {
            let (re, im) = (rng.random::<bool>(), rng.random::<bool>());
            l.symbol = Complex64::new(
                if re { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
                if im { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
            );
        }
    }
    Ok(Allocation {
        subcarrier_count,
        comm_count,
        links,
    })
}

/// `precoders[link][block]` is the length-M precoder of the `block`-th
/// communication APU on that link's subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub precoders: Vec<Vec<CVector>>,
}

impl PrecoderSet {
    pub fn get(&self, link: usize, block: usize) -> &CVector {
        &self.precoders[link][block]
    }

    /// Stacked transmit vector `x_k = vec([u_1 … u_C])·d_k` for one link.
    pub fn transmit_vector(&self, link: usize, symbol: Complex64) -> CVector {
        let blocks = &self.precoders[link];
        let m = blocks.first().map_or(0, |u| u.len());
        let mut x = CVector::zeros(blocks.len() * m);
        for (b, u) in blocks.iter().enumerate() {
            x.rows_mut(b * m, m).copy_from(&(u * symbol));
        }
        x
    }
}

/// `u_{c,k} = √p·a_k(φ_{c,u})/‖a_k(φ_{c,u})‖`.
pub fn mrt_precoders(
    layout: &StripeLayout,
    roles: &RoleAssignment,
    alloc: &Allocation,
    ofdma: &OfdmaGridSpec,
) -> Result<PrecoderSet> {
    if alloc.comm_count != roles.comm_count() {
        return Err(invalid("allocation and role assignment disagree on C"));
    }
    let precoders = alloc
        .links
        .iter()
        .map(|link| {
            let f = ofdma.frequency(link.subcarrier);
            roles
                .comm_set
                .iter()
                .map(|&c| {
                    let a = layout.steering(f, layout.apu(c).sin_angle_to(link.position)?);
                    let scale = link.power_per_apu.sqrt() / a.norm();
                    Ok(a * Complex64::new(scale, 0.0))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecoderSet { precoders })
}

/// SNR per active subcarrier, as `(subcarrier, Γ)` in ascending order.
pub fn snr_per_device(
    layout: &StripeLayout,
    roles: &RoleAssignment,
    alloc: &Allocation,
    precoders: &PrecoderSet,
    ofdma: &OfdmaGridSpec,
    noise_variance: f64,
    convention: SnrConvention,
) -> Result<Vec<(usize, f64)>> {
    if !(noise_variance > 0.0) {
        return Err(invalid("SNR requires noise variance > 0"));
    }
    let m = layout.antennas_per_apu as f64;
    let mut out = Vec::with_capacity(alloc.device_count());
    for (j, link) in alloc.links.iter().enumerate() {
        let h = device_channel(layout, roles, link.position, ofdma.frequency(link.subcarrier))?;
        let mut gamma = 0.0;
        for b in 0..roles.comm_count() {
            let a = h.rows(b * layout.antennas_per_apu, layout.antennas_per_apu);
            let u = precoders.get(j, b);
            gamma += match convention {
                SnrConvention::AsPrinted => u.norm_squared() * a.norm_squared() / m,
                SnrConvention::MatchedFilter => a.dotc(u).norm_sqr(),
            };
        }
        out.push((link.subcarrier, gamma / noise_variance));
    }
    Ok(out)
}

/// Shannon sum rate `Δf·Σ_k log₂(1 + Γ_k)` in bit/s.
pub fn sum_rate(snrs: &[(usize, f64)], subcarrier_spacing: f64) -> f64 {
    subcarrier_spacing * snrs.iter().map(|&(_, g)| (1.0 + g).log2()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_perimeter_layout, enumerate_configurations, ServiceArea};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    fn pts(n: usize) -> Vec<Point2> {
        (0..n).map(|i| Point2::new(5.0 + i as f64, 7.0 + 0.5 * i as f64)).collect()
    }

    #[test]
    fn even_spread_examples() {
        let a = allocate(&pts(2), 64, 1.0, 4, AllocationMode::EvenSpread, SymbolMode::Unit, &mut rng()).unwrap();
        assert_eq!(a.active_subcarriers(), vec![1, 33]);
        assert!(a.links.iter().all(|l| l.power_per_apu == 0.125));
        assert_abs_diff_eq!(a.total_power(), 1.0);

        let full = allocate(&pts(16), 16, 1.0, 2, AllocationMode::EvenSpread, SymbolMode::Unit, &mut rng()).unwrap();
        assert_eq!(full.active_subcarriers(), (1..=16).collect::<Vec<_>>());

        assert!(allocate(&pts(17), 16, 1.0, 2, AllocationMode::EvenSpread, SymbolMode::Unit, &mut rng()).is_err());
    }

    #[test]
    fn even_spread_is_injective() {
        for k in 1..40 {
            for d in 1..=k {
                let v = even_spread_subcarriers(d, k);
                assert!(v.windows(2).all(|w| w[0] < w[1]));
                assert!(*v.last().unwrap() <= k);
            }
        }
    }

    #[test]
    fn random_allocation_and_qpsk() {
        let a = allocate(&pts(8), 16, 2.0, 3, AllocationMode::Random, SymbolMode::Qpsk, &mut rng()).unwrap();
        let ks = a.active_subcarriers();
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        assert!(ks.iter().all(|&k| (1..=16).contains(&k)));
        assert_abs_diff_eq!(a.total_power(), 2.0, epsilon = 1e-15);
        for l in &a.links {
            assert_abs_diff_eq!(l.symbol.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn mrt_power_and_snr() {
        let layout = build_perimeter_layout(ServiceArea::from_perimeter(240.0).unwrap(), 1, 4, 0.5, 5.955e9).unwrap();
        let ofdma = OfdmaGridSpec::new(16, 312.5e3, 5.955e9).unwrap();
        let roles = RoleAssignment::from_sense_set(4, vec![2, 3]).unwrap();
        let devices = vec![Point2::new(30.0, 20.0), Point2::new(12.0, 44.0)];
        let alloc = allocate(&devices, 16, 1.0, 2, AllocationMode::EvenSpread, SymbolMode::Unit, &mut rng()).unwrap();
        let pre = mrt_precoders(&layout, &roles, &alloc, &ofdma).unwrap();
        for (j, link) in alloc.links.iter().enumerate() {
            for b in 0..2 {
                assert_relative_eq!(pre.get(j, b).norm_squared(), link.power_per_apu, max_relative = 1e-12);
            }
        }
        // device 0 is broadside to APU 0 → u = √(p/M)·1
        let u = pre.get(0, 0);
        for x in u.iter() {
            assert_abs_diff_eq!((x - Complex64::new((0.25f64 / 4.0).sqrt(), 0.0)).norm(), 0.0, epsilon = 1e-15);
        }

        let printed = snr_per_device(&layout, &roles, &alloc, &pre, &ofdma, 1e-6, SnrConvention::AsPrinted).unwrap();
        let matched = snr_per_device(&layout, &roles, &alloc, &pre, &ofdma, 1e-6, SnrConvention::MatchedFilter).unwrap();
        for ((_, g), (_, gm)) in printed.iter().zip(&matched) {
            assert_relative_eq!(*g, 0.5 / 1e-6, max_relative = 1e-12);
            assert_relative_eq!(*gm, 4.0 * g, max_relative = 1e-12);
        }
    }

    #[test]
    fn snr_two_apus_example_and_zero_power() {
        let layout = build_perimeter_layout(ServiceArea::from_perimeter(240.0).unwrap(), 1, 3, 0.5, 5.955e9).unwrap();
        let ofdma = OfdmaGridSpec::new(4, 312.5e3, 5.955e9).unwrap();
        let roles = RoleAssignment::from_sense_set(4, vec![0, 1]).unwrap();
        // one device, budget 0.2 over C = 2 → 0.1 W per APU
        let alloc = allocate(&[Point2::new(21.0, 33.0)], 4, 0.2, 2, AllocationMode::EvenSpread, SymbolMode::Unit, &mut rng()).unwrap();
        let pre = mrt_precoders(&layout, &roles, &alloc, &ofdma).unwrap();
        let snr = snr_per_device(&layout, &roles, &alloc, &pre, &ofdma, 1e-6, SnrConvention::AsPrinted).unwrap();
        assert_relative_eq!(snr[0].1, 2e5, max_relative = 1e-12);
        assert_relative_eq!(sum_rate(&snr, 312.5e3), 312_500.0 * 200_001f64.log2(), max_relative = 1e-12);
        assert!((sum_rate(&snr, 312.5e3) / 1e6 - 5.50).abs() < 0.01);

        let zero = allocate(&[Point2::new(21.0, 33.0)], 4, 0.0, 2, AllocationMode::EvenSpread, SymbolMode::Unit, &mut rng()).unwrap();
        let pre = mrt_precoders(&layout, &roles, &zero, &ofdma).unwrap();
        let snr = snr_per_device(&layout, &roles, &zero, &pre, &ofdma, 1e-6, SnrConvention::AsPrinted).unwrap();
        assert_eq!(snr[0].1, 0.0);
        assert_eq!(sum_rate(&[], 312.5e3), 0.0);
    }

    #[test]
    fn snr_is_independent_of_role_positions_and_comm_count() {
        let layout = build_perimeter_layout(ServiceArea::from_perimeter(240.0).unwrap(), 2, 4, 0.5, 5.955e9).unwrap();
        let ofdma = OfdmaGridSpec::new(64, 312.5e3, 5.955e9).unwrap();
        let devices = pts(6);
        let mut reference = None;
        for s in 1..8 {
            for roles in enumerate_configurations(8, s).unwrap().into_iter().take(5) {
                let alloc = allocate(&devices, 64, 1.0, roles.comm_count(), AllocationMode::EvenSpread, SymbolMode::Unit, &mut rng()).unwrap();
                let pre = mrt_precoders(&layout, &roles, &alloc, &ofdma).unwrap();
                let snr = snr_per_device(&layout, &roles, &alloc, &pre, &ofdma, 1e-6, SnrConvention::AsPrinted).unwrap();
                for (_, g) in &snr {
                    assert_relative_eq!(*g, 1.0 / (6.0 * 1e-6), max_relative = 1e-12);
                }
                let r = sum_rate(&snr, 312.5e3);
                let r0 = *reference.get_or_insert(r);
                assert_relative_eq!(r, r0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn doubling_devices_rate_regression() {
        // Γ = budget/(D σ²); R = Δf·D·log₂(1 + 1/(D σ²))
        let rate = |d: usize| 312.5e3 * d as f64 * (1.0 + 1.0 / (d as f64 * 1e-6)).log2();
        let layout = build_perimeter_layout(ServiceArea::from_perimeter(240.0).unwrap(), 1, 4, 0.5, 5.955e9).unwrap();
        let ofdma = OfdmaGridSpec::new(16, 312.5e3, 5.955e9).unwrap();
        let roles = RoleAssignment::from_sense_set(4, vec![0, 2]).unwrap();
        for d in [2usize, 4, 8] {
            let alloc = allocate(&pts(d), 16, 1.0, 2, AllocationMode::EvenSpread, SymbolMode::Unit, &mut rng()).unwrap();
            let pre = mrt_precoders(&layout, &roles, &alloc, &ofdma).unwrap();
            let snr = snr_per_device(&layout, &roles, &alloc, &pre, &ofdma, 1e-6, SnrConvention::AsPrinted).unwrap();
            assert_relative_eq!(sum_rate(&snr, 312.5e3), rate(d), max_relative = 1e-12);
        }
        assert_relative_eq!(rate(2), 11_832_232.159_194_607, max_relative = 1e-12);
    }
}
