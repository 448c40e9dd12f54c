//! Uniform sources, the Gaussian transform and batched estimators.
//!
//! Every point is addressable by its sample index, so results do not depend on
//! how the index range is split across threads.

use std::ops::Range;
use std::sync::OnceLock;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};

const JOE_KUO: &str = include_str!("../data/new-joe-kuo-6.1024");

/// Number of coordinates covered by the embedded direction numbers.
pub const SOBOL_MAX_DIM: usize = 1024;

const BITS: usize = 32;

fn direction_table() -> &'static [[u32; BITS]] {
    static TABLE: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(SOBOL_MAX_DIM);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        table.push(first);
        for line in JOE_KUO.lines().skip(1) {
            let fields: Vec<u32> = line.split_whitespace().map(|f| f.parse().expect("direction file is numeric")).collect();
            let (s, a) = (fields[1] as usize, fields[2]);
            let m = &fields[3..3 + s];
            let mut v = [0u32; BITS];
            for k in 0..BITS {
                v[k] = if k < s {
                    m[k] << (BITS - 1 - k)
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for l in 1..s {
                        if (a >> (s - 1 - l)) & 1 == 1 {
                            x ^= v[k - l];
                        }
                    }
                    x
                };
            }
            table.push(v);
        }
        table
    })
}

/// Point `index` of the `dim`-dimensional Sobol sequence in gray-code order,
/// with index 0 the origin.
pub fn sobol_point(dim: usize, index: u64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    SobolCursor::new(dim, index)?.write(&mut out);
    Ok(out)
}

/// Sequential Sobol generator: random access to the start, then one XOR per coordinate per step.
#[derive(Clone, Debug)]
pub struct SobolCursor {
    index: u64,
    state: Vec<u32>,
}

impl SobolCursor {
    pub fn new(dim: usize, index: u64) -> Result<Self> {
        if dim > SOBOL_MAX_DIM {
            return Err(Error::Config(format!("Sobol dimension {dim} exceeds the table size {SOBOL_MAX_DIM}")));
        }
        if index >= 1 << BITS {
            return Err(Error::Config(format!("Sobol index {index} exceeds 2^{BITS}")));
        }
        let table = direction_table();
        let gray = index ^ (index >> 1);
        let state = (0..dim)
            .map(|j| {
                (0..BITS).filter(|&k| (gray >> k) & 1 == 1).fold(0u32, |x, k| x ^ table[j][k])
            })
            .collect();
        Ok(Self { index, state })
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn write(&self, out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(&self.state) {
            *o = x as f64 * (1.0 / (1u64 << BITS) as f64);
        }
    }

    pub fn advance(&mut self) {
        self.index += 1;
        let k = self.index.trailing_zeros() as usize;
        let table = direction_table();
        for (j, x) in self.state.iter_mut().enumerate() {
            *x ^= table[j][k];
        }
    }
}

/// A source of points in the open unit cube `(0, 1)^dim`.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UniformSource {
    /// ChaCha8 seeded from `seed`; sample `i` reads stream `i` from word 0.
    Pseudo { seed: u64, dim: usize },
    /// Sobol points starting after the origin: sample `i` is sequence index `i + 1 + skip`.
    Sobol { dim: usize, skip: u64 },
}

impl UniformSource {
    pub fn dim(&self) -> usize {
        match *self {
            UniformSource::Pseudo { dim, .. } | UniformSource::Sobol { dim, .. } => dim,
        }
    }

    pub fn validate(&self, samples: u64) -> Result<()> {
        if let UniformSource::Sobol { dim, skip } = *self {
            SobolCursor::new(dim, 0)?;
            if samples + skip >= 1 << BITS {
                return Err(Error::Config("Sobol index range exceeds 2^32".into()));
            }
        }
        Ok(())
    }

    /// Writes sample `index` into `out` (length `dim`).
    pub fn point(&self, index: u64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: out.len() });
        }
        match *self {
            UniformSource::Pseudo { seed, .. } => pseudo_block(seed, index, out),
            UniformSource::Sobol { dim, skip } => SobolCursor::new(dim, index + 1 + skip)?.write(out),
        }
        Ok(())
    }

    /// Calls `visit(index, point)` for every sample in `range`, in order.
    pub fn for_each<E>(
        &self,
        range: Range<u64>,
        mut visit: impl FnMut(u64, &[f64]) -> std::result::Result<(), E>,
    ) -> std::result::Result<(), E>
    where
        E: From<Error>,
    {
        let mut buf = vec![0.0; self.dim()];
        match *self {
            UniformSource::Pseudo { seed, .. } => {
                for i in range {
                    pseudo_block(seed, i, &mut buf);
                    visit(i, &buf)?;
                }
            }
            UniformSource::Sobol { dim, skip } => {
                if range.is_empty() {
                    return Ok(());
                }
                let mut cursor = SobolCursor::new(dim, range.start + 1 + skip)?;
                for i in range {
                    cursor.write(&mut buf);
                    visit(i, &buf)?;
                    cursor.advance();
                }
            }
        }
        Ok(())
    }
}

fn pseudo_block(seed: u64, index: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    for o in out.iter_mut() {
        *o = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    }
}

/// `Φ⁻¹(u)` by Wichura's AS241 (PPND16), relative accuracy about 1e-16.
pub fn inv_normal_cdf(u: f64) -> Result<f64> {
    if u > 0.0 && u < 1.0 {
        Ok(normal_quantile(u))
    } else {
        Err(Error::Domain(format!("inverse normal CDF needs 0 < u < 1, got {u}")))
    }
}

/// Unchecked variant of [`inv_normal_cdf`] for the simulation loop.
#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[inline]
fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.046_297_676_220_628_4e-15,
];

/// Lower-triangular square root of a 2×2 covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairCholesky {
    l11: f64,
    l21: f64,
    l22: f64,
}

impl PairCholesky {
    pub fn new(r11: f64, r12: f64, r22: f64) -> Result<Self> {
        let det = r11 * r22 - r12 * r12;
        let tol = 1e-14 * (r11.abs() + r22.abs()).max(1.0);
        if r11 < 0.0 || r22 < 0.0 || det < -tol {
            return Err(Error::Domain(format!("[[{r11}, {r12}], [{r12}, {r22}]] is not positive semidefinite")));
        }
        if r11 == 0.0 {
            if r12.abs() > tol {
                return Err(Error::Domain("zero variance with nonzero covariance".into()));
            }
            return Ok(Self { l11: 0.0, l21: 0.0, l22: r22.sqrt() });
        }
        let l11 = r11.sqrt();
        let l21 = r12 / l11;
        let l22 = (r22 - l21 * l21).max(0.0).sqrt();
        Ok(Self { l11, l21, l22 })
    }

    #[inline]
    pub fn apply(&self, z1: f64, z2: f64) -> (f64, f64) {
        (self.l11 * z1, self.l21 * z1 + self.l22 * z2)
    }
}

/// `(S1, S2)` with covariance `[[r11, r12], [r12, r22]]` from independent standard normals.
pub fn correlate_pair(z: (f64, f64), r11: f64, r12: f64, r22: f64) -> Result<(f64, f64)> {
    Ok(PairCholesky::new(r11, r12, r22)?.apply(z.0, z.1))
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mc,
    Qmc,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Mc => "mc",
            Mode::Qmc => "qmc",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Mode::Mc),
            "qmc" => Ok(Mode::Qmc),
            other => Err(Error::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

pub const BATCHES: usize = 10;
const CHUNK: u64 = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorReport {
    pub estimate: f64,
    /// `2 × sd(batch means)` for MC, `|estimate − reference|` for QMC.
    pub error: Option<f64>,
    pub samples: u64,
    pub batch_means: Vec<f64>,
    pub seconds: f64,
}

/// Mean of `payoff` over samples `0..samples` of `source`.
///
/// The range is cut into [`BATCHES`] contiguous batches and each batch into
/// fixed-size chunks; chunk and batch sums are combined pairwise in index
/// order, so the result is bit-identical for any thread count.
pub fn estimate<P>(
    payoff: P,
    source: &UniformSource,
    samples: u64,
    mode: Mode,
    reference: Option<f64>,
) -> Result<EstimatorReport>
where
    P: Fn(&[f64]) -> Result<f64> + Sync,
{
    if samples < BATCHES as u64 {
        return Err(Error::Config(format!("need at least {BATCHES} samples, got {samples}")));
    }
    source.validate(samples)?;
    let start = Instant::now();
    let bounds: Vec<u64> = (0..=BATCHES as u64).map(|b| b * samples / BATCHES as u64).collect();
    let chunks: Vec<(usize, Range<u64>)> = (0..BATCHES)
        .flat_map(|b| {
            let (lo, hi) = (bounds[b], bounds[b + 1]);
            (lo..hi).step_by(CHUNK as usize).map(move |c| (b, c..(c + CHUNK).min(hi)))
        })
        .collect();
    let sums: Vec<Result<(usize, f64)>> = chunks
        .par_iter()
        .map(|(b, range)| {
            let mut values = Vec::with_capacity((range.end - range.start) as usize);
            source.for_each(range.clone(), |_, u| {
                values.push(payoff(u)?);
                Ok::<(), Error>(())
            })?;
            Ok((*b, pairwise_sum(&values)))
        })
        .collect();
    let mut per_batch: Vec<Vec<f64>> = vec![Vec::new(); BATCHES];
    for s in sums {
        let (b, sum) = s?;
        per_batch[b].push(sum);
    }
    let batch_sums: Vec<f64> = per_batch.iter().map(|v| pairwise_sum(v)).collect();
    let batch_means: Vec<f64> = batch_sums
        .iter()
        .enumerate()
        .map(|(b, s)| s / (bounds[b + 1] - bounds[b]) as f64)
        .collect();
    let estimate = pairwise_sum(&batch_sums) / samples as f64;
    let error = match mode {
        Mode::Mc => Some(2.0 * sample_std(&batch_means)),
        Mode::Qmc => reference.map(|r| (estimate - r).abs()),
    };
    Ok(EstimatorReport { estimate, error, samples, batch_means, seconds: start.elapsed().as_secs_f64() })
}

/// Sample standard deviation with the `n − 1` denominator.
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
