//! Standard-normal primitives: density, distribution function, quantile,
//! and Gauss-Hermite quadrature for expectations against the normal law.

use nalgebra::DMatrix;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_PI: f64 = 1.772_453_850_905_516;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, computed through the
/// complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / SQRT_2)
}

/// Standard normal quantile (inverse distribution function).
///
/// Wichura's PPND16 rational approximation, accurate to ~1e-16 relative.
/// Deliberately not polished against [`normal_cdf`]: the erfc behind the
/// cdf carries ~5e-12 absolute error, so a Newton step would make the
/// quantile worse, not better.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must lie in (0,1)");
    ppnd16(p)
}

/// PPND16 from AS 241: ~16 significant digits on (0,1).
fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = horner(
            r,
            &[
                3.387_132_872_796_366_608e0,
                1.331_416_678_917_843_774_5e2,
                1.971_590_950_306_551_442_7e3,
                1.373_169_376_550_946_112_5e4,
                4.592_195_393_154_987_145_7e4,
                6.726_577_092_700_870_085_3e4,
                3.343_057_558_358_812_810_5e4,
                2.509_080_928_730_122_672_7e3,
            ],
        );
        let den = horner(
            r,
            &[
                1.0,
                4.231_333_070_160_091_125_2e1,
                6.871_870_074_920_579_083e2,
                5.394_196_021_424_751_107_7e3,
                2.121_379_430_158_659_586_7e4,
                3.930_789_580_009_271_061e4,
                2.872_908_573_572_194_267_4e4,
                5.226_495_278_852_854_561e3,
            ],
        );
        return q * num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = horner(
            r,
            &[
                1.423_437_110_749_683_577_3e0,
                4.630_337_846_156_545_295_9e0,
                5.769_497_221_460_691_405_5e0,
                3.647_848_324_763_204_605e0,
                1.270_458_252_452_368_382_6e0,
                2.417_807_251_774_506_117_7e-1,
                2.272_384_498_926_918_458_3e-2,
                7.745_450_142_783_414_076_4e-4,
            ],
        );
        let den = horner(
            r,
            &[
                1.0,
                2.053_191_626_637_758_821_9e0,
                1.676_384_830_183_803_849_4e0,
                6.897_673_349_851_000_045_5e-1,
                1.481_039_764_274_800_745_9e-1,
                1.519_866_656_361_645_719_7e-2,
                5.475_938_084_995_344_946e-4,
                1.050_750_071_644_416_843_2e-9,
            ],
        );
        num / den
    } else {
        r -= 5.0;
        let num = horner(
            r,
            &[
                6.657_904_643_501_103_777_2e0,
                5.463_784_911_164_114_369_9e0,
                1.784_826_539_917_291_335_8e0,
                2.965_605_718_285_048_912_3e-1,
                2.653_218_952_657_612_309_3e-2,
                1.242_660_947_388_078_438_6e-3,
                2.711_555_568_743_487_578_15e-5,
                2.010_334_399_292_288_132_65e-7,
            ],
        );
        let den = horner(
            r,
            &[
                1.0,
                5.998_322_065_558_879_376_9e-1,
                1.369_298_809_227_358_053_1e-1,
                1.487_536_129_085_061_485_25e-2,
                7.868_691_311_456_132_591e-4,
                1.846_318_317_510_054_681_8e-6,
                1.421_511_758_316_445_888_7e-15,
            ],
        );
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn horner(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Gauss-Hermite rule: nodes and weights for integrals of exp(-t^2) f(t).
///
/// Nodes and weights come from the Golub-Welsch eigenproblem on the
/// symmetric tridiagonal companion matrix (off-diagonal sqrt(k/2)).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    /// Node/weight pairs sorted by node.
    pairs: Vec<(f64, f64)>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut companion = DMatrix::<f64>::zeros(order, order);
        for k in 0..order - 1 {
            let off = ((k as f64 + 1.0) * 0.5).sqrt();
            companion[(k, k + 1)] = off;
            companion[(k + 1, k)] = off;
        }
        let eigen = companion.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eigen
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &node)| {
                let v0 = eigen.eigenvectors.column(i)[0];
                (node, v0 * v0 * SQRT_PI)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Self { pairs }
    }

    /// Integral of exp(-t^2) f(t) dt over the real line.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.pairs.iter().map(|&(t, w)| w * f(t)).sum()
    }

    /// Expectation E[f(Z)] for Z standard normal.
    pub fn normal_expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.pairs
            .iter()
            .map(|&(t, w)| w * f(SQRT_2 * t))
            .sum::<f64>()
            / SQRT_PI
    }

    /// Quadrature points mapped to standard-normal samples: (z_q, p_q) with
    /// sum of p_q = 1 and E[f(Z)] = sum p_q f(z_q).
    pub fn normal_points(&self) -> Vec<(f64, f64)> {
        self.pairs
            .iter()
            .map(|&(t, w)| (SQRT_2 * t, w / SQRT_PI))
            .collect()
    }
}
