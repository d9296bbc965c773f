use std::str::FromStr;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use elkc::baselines::{CodecKind, TensorCodec};
use elkc::DenseTensor;

use crate::usage;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Codec spec, e.g. `3lc`, `3lc:1.75`, `3lc-nozre`, `int8`, `topk:0.05`.
    #[arg(long, default_value = "3lc")]
    codec: String,
    /// Tensor shape, e.g. `1000000` or `1000x1000`.
    #[arg(long, default_value = "1000000")]
    shape: String,
    /// `gaussian`, `sparse-gaussian:P` (P = fraction of non-zeros), or `zeros`.
    #[arg(long, default_value = "gaussian")]
    dist: String,
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, env = "ELKC_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Gaussian,
    SparseGaussian(f64),
    Zeros,
}

impl FromStr for Dist {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "gaussian" => Ok(Dist::Gaussian),
            None if s == "zeros" => Ok(Dist::Zeros),
            Some(("sparse-gaussian", p)) => {
                let p: f64 = p.parse().map_err(|_| usage(format!("bad density in {s:?}")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(usage(format!("density must be in [0, 1], got {p}")));
                }
                Ok(Dist::SparseGaussian(p))
            }
            _ => Err(usage(format!("unknown distribution {s:?}"))),
        }
    }
}

pub fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let dims = s
        .split(['x', ','])
        .map(|d| d.trim().parse::<usize>().ok().filter(|&d| d > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| usage(format!("bad shape {s:?}")))?;
    if dims.is_empty() {
        return Err(usage("empty shape"));
    }
    Ok(dims)
}

pub fn generate(dims: Vec<usize>, dist: Dist, seed: u64) -> Result<DenseTensor> {
    let n: usize = dims.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match dist {
        Dist::Zeros => vec![0.0; n],
        Dist::Gaussian => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        Dist::SparseGaussian(p) => (0..n)
            .map(|_| {
                let x: f32 = StandardNormal.sample(&mut rng);
                if rng.random_bool(p) {
                    x
                } else {
                    0.0
                }
            })
            .collect(),
    };
    Ok(DenseTensor::new(dims, data)?)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn run(args: BenchArgs) -> Result<()> {
    let codec: CodecKind = args.codec.parse().map_err(|e| usage(format!("{e}")))?;
    let dist: Dist = args.dist.parse()?;
    let dims = parse_shape(&args.shape)?;
    if args.iters == 0 {
        return Err(usage("--iters must be at least 1"));
    }
    let t = generate(dims.clone(), dist, args.seed)?;
    let n = t.len() as f64;

    let mut enc_rates = Vec::with_capacity(args.iters);
    let mut dec_rates = Vec::with_capacity(args.iters);
    let mut blob = None;
    for _ in 0..args.iters {
        let mut state = TensorCodec::new(codec, dims.clone(), args.seed)?;
        let start = Instant::now();
        // local-step codecs emit on their final period step; a one-step period always emits
        let b = state.encode(&t)?.ok_or_else(|| usage("codec emitted nothing for a single step"))?;
        enc_rates.push(n / start.elapsed().as_secs_f64());
        let start = Instant::now();
        elkc::decompress(&b)?;
        dec_rates.push(n / start.elapsed().as_secs_f64());
        blob = Some(b);
    }
    let blob = blob.expect("iters >= 1");
    let summary = elkc::summarize([&blob])?;

    println!("{:<22} {}", "codec", codec);
    println!("{:<22} {:?}", "shape", dims);
    println!("{:<22} {}", "dist", args.dist);
    println!("{:<22} {}", "values", summary.total_values);
    println!("{:<22} {}", "payload_bytes", blob.payload_len());
    println!("{:<22} {:.4}", "bits_per_value", summary.bits_per_value);
    println!("{:<22} {:.2}", "ratio", summary.ratio);
    println!("{:<22} {:.4e}", "compress_values_per_s", median(enc_rates));
    println!("{:<22} {:.4e}", "decompress_values_per_s", median(dec_rates));
    Ok(())
}
