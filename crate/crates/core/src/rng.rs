//! Counter-based random streams.
//!
//! A stream is addressed by `(master_seed, stream_id)`. Its output at position
//! `counter` is the ChaCha20 keystream block for key `master_seed` (expanded by
//! `seed_from_u64`), nonce `stream_id` and word position `2 * counter`, so any
//! position of any stream can be reached without touching other streams.
//!
//! Every variate consumes exactly one 64-bit word:
//!
//! * uniforms use the top 53 bits, shifted to the open interval (0, 1);
//! * standard normals are the inverse normal CDF of one uniform (Wichura AS241);
//! * exponentials are `-ln(U) / rate` of one uniform.
//!
//! `counter` therefore advances by one per drawn value, whatever its law.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Result};

/// Address of a position inside a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedContext {
    pub master_seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

/// Returns the start of the stream identified by `(master_seed, stream_id)`.
pub fn derive_stream(master_seed: u64, stream_id: u64) -> SeedContext {
    SeedContext {
        master_seed,
        stream_id,
        counter: 0,
    }
}

impl SeedContext {
    /// Opens a generator positioned at this context's counter.
    pub fn stream(&self) -> Stream {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(u128::from(self.counter) * 2);
        Stream { rng, ctx: *self }
    }
}

/// A positioned generator. Cheap to create; owned by one trial.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha20Rng,
    ctx: SeedContext,
}

impl Stream {
    /// Context pointing at the next unread position.
    pub fn context(&self) -> SeedContext {
        self.ctx
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        self.ctx.counter += 1;
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_word() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.fill_normal(&mut out);
        out
    }

    /// Exponential with the given rate. The caller validates `rate > 0`.
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform().ln() / rate
    }
}

/// Draws `n` standard normals and advances `ctx.counter` by `n`.
pub fn draw_normal(ctx: &mut SeedContext, n: usize) -> Vec<f64> {
    let mut stream = ctx.stream();
    let out = stream.normals(n);
    *ctx = stream.context();
    out
}

/// Draws `n` Exponential(`rate`) variates and advances `ctx.counter` by `n`.
pub fn draw_exponential(ctx: &mut SeedContext, rate: f64, n: usize) -> Result<Vec<f64>> {
    require_positive("rate", rate)?;
    let mut stream = ctx.stream();
    let out = (0..n).map(|_| stream.exponential(rate)).collect();
    *ctx = stream.context();
    Ok(out)
}

/// Inverse of the standard normal CDF for `p` in (0, 1), accurate to about
/// 1e-16 relative (Wichura, algorithm AS241 `PPND16`).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r + 6.726_577_092_700_87e4) * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_854_5e3 * r + 2.872_908_573_572_194_3e4) * r + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den =
            ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 1.519_866_656_361_645_7e-2) * r
                + 1.481_039_764_274_800_8e-1)
                * r
                + 6.897_673_349_851e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num =
            ((((((2.010_334_399_292_288e-7 * r + 2.711_555_568_743_487_6e-5) * r + 1.242_660_947_388_078_4e-3) * r
                + 2.653_218_952_657_612_4e-2)
                * r
                + 2.965_605_718_285_048_7e-1)
                * r
                + 1.784_826_539_917_291_3)
                * r
                + 5.463_784_911_164_114)
                * r
                + 6.657_904_643_501_103;
        let den =
            ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5) * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358e-1)
                * r
                + 5.998_322_065_558_88e-1)
                * r
                + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `P(Z >= x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}
