//! Deterministic bulk-synchronous parameter-server training simulator.
//!
//! Each step runs forward and backward passes on every worker's shard of
//! the global minibatch, pushes per-tensor compressed gradients, averages
//! them on the server, applies momentum SGD, and compresses each model
//! delta once into a blob that every worker pulls and applies. Traffic is
//! counted, not delayed.
//!
//! Worker gradients may be computed on the rayon pool, but aggregation
//! always runs in worker-index order, so parallel and sequential runs
//! produce identical results.

mod config;
mod data;
mod model;

use rayon::prelude::*;

pub use config::{LrDecay, SimConfig};
pub use data::{make_dataset, Dataset, Stream, CENTER_RADIUS};
pub use model::MlpShape;

use crate::baselines::{CodecKind, TensorCodec};
use crate::blob::{decompress, CompressedBlob};
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, StepRecord};
use crate::tensor::DenseTensor;

/// Running sums behind the push-side conservation check.
#[derive(Debug, Clone)]
struct PushAudit {
    truth: Vec<f64>,
    sent: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WorkerState {
    replica: Vec<DenseTensor>,
    push_codecs: Vec<TensorCodec>,
    audit: Vec<PushAudit>,
}

impl WorkerState {
    pub fn replica(&self) -> &[DenseTensor] {
        &self.replica
    }

    pub fn push_codecs(&self) -> &[TensorCodec] {
        &self.push_codecs
    }
}

/// Traffic produced by one push/aggregate/update/pull exchange.
#[derive(Debug, Clone, Default)]
pub struct ExchangeStats {
    pub push_bytes_per_worker: Vec<u64>,
    pub pull_bytes: u64,
    pub push_values: u64,
    pub push_bits: u64,
    pub pull_values: u64,
    pub pull_bits: u64,
    pub push_zero_values: u64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    cfg: SimConfig,
    shape: Option<MlpShape>,
    train: Dataset,
    test: Dataset,
    global: Vec<DenseTensor>,
    velocity: Vec<Vec<f32>>,
    workers: Vec<WorkerState>,
    pull_codecs: Vec<TensorCodec>,
    /// Whether each tensor goes through the configured codecs or bypasses
    /// them as a small tensor.
    compressed: Vec<bool>,
    last_pull: Vec<Option<CompressedBlob>>,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    step: usize,
    metrics: MetricsLog,
}

impl SimState {
    /// Builds the MLP, dataset, replicas, and all compression contexts.
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let shape = MlpShape {
            input: cfg.input_dim,
            hidden: cfg.hidden_dim,
            classes: cfg.classes,
        };
        let params = shape.init(&mut Stream::Init.rng(cfg.seed))?;
        let mut state = Self::with_params(cfg, params)?;
        state.shape = Some(shape);
        Ok(state)
    }

    /// Server and worker state around arbitrary parameter tensors. Such a
    /// state can [`exchange`](Self::exchange) externally supplied gradients
    /// but cannot [`train_step`](Self::train_step) unless the tensors have
    /// the MLP layout.
    pub fn with_params(cfg: SimConfig, params: Vec<DenseTensor>) -> Result<Self> {
        cfg.validate()?;
        let (train, test) = make_dataset(&cfg);
        let compressed: Vec<bool> = params
            .iter()
            .map(|p| p.len() >= cfg.small_tensor_threshold)
            .collect();
        let codec_for = |kind: CodecKind, t: usize| if compressed[t] { kind } else { CodecKind::Float32 };
        let workers = (0..cfg.workers)
            .map(|w| {
                let push_codecs = params
                    .iter()
                    .enumerate()
                    .map(|(t, p)| {
                        let seed = Stream::Codec { worker: w, tensor: t }.seed(cfg.seed);
                        TensorCodec::new(codec_for(cfg.push_codec, t), p.dims().to_vec(), seed)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let audit = params
                    .iter()
                    .map(|p| PushAudit {
                        truth: vec![0.0; p.len()],
                        sent: vec![0.0; p.len()],
                    })
                    .collect();
                Ok(WorkerState {
                    replica: params.clone(),
                    push_codecs,
                    audit,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pull_codecs = params
            .iter()
            .enumerate()
            .map(|(t, p)| {
                // the server takes worker slot 0xFFFF in stream space
                let seed = Stream::Codec { worker: 0xFFFF, tensor: t }.seed(cfg.seed);
                TensorCodec::new(codec_for(cfg.pull_codec, t), p.dims().to_vec(), seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let shape = MlpShape {
            input: cfg.input_dim,
            hidden: cfg.hidden_dim,
            classes: cfg.classes,
        };
        let shape = shape.matches(&params).then_some(shape);
        let mut order: Vec<usize> = (0..cfg.n_train).collect();
        shuffle(&mut order, cfg.seed, 0);
        Ok(Self {
            velocity: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            last_pull: vec![None; params.len()],
            global: params,
            shape,
            train,
            test,
            workers,
            pull_codecs,
            compressed,
            order,
            cursor: 0,
            epoch: 0,
            step: 0,
            metrics: MetricsLog::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn global_model(&self) -> &[DenseTensor] {
        &self.global
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn metrics(&self) -> &MetricsLog {
        &self.metrics
    }

    pub fn into_metrics(self) -> MetricsLog {
        self.metrics
    }

    pub fn datasets(&self) -> (&Dataset, &Dataset) {
        (&self.train, &self.test)
    }

    pub fn is_compressed(&self, tensor: usize) -> bool {
        self.compressed[tensor]
    }

    /// Blobs served to workers on the latest pull, one per tensor.
    pub fn last_pull(&self) -> &[Option<CompressedBlob>] {
        &self.last_pull
    }

    /// Pull compressions per tensor since the start of the run.
    pub fn pull_compressions(&self) -> Vec<u64> {
        self.pull_codecs.iter().map(TensorCodec::compressions).collect()
    }

    /// Largest relative violation of `sum(decoded pushes) + buffer ==
    /// sum(gradients)` over every worker and tensor, measured against the
    /// largest accumulated gradient magnitude of that tensor.
    pub fn push_conservation_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for w in &self.workers {
            for (codec, audit) in w.push_codecs.iter().zip(&w.audit) {
                let scale = audit.truth.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
                for ((t, s), b) in audit.truth.iter().zip(&audit.sent).zip(codec.context().buffer().data()) {
                    worst = worst.max((s + f64::from(*b) - t).abs() / scale);
                }
            }
        }
        worst
    }

    pub fn test_accuracy(&self) -> Result<f64> {
        let shape = self
            .shape
            .ok_or_else(|| Error::Config("parameters do not have the MLP layout".into()))?;
        Ok(shape.accuracy(&self.global, &self.test))
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let global = self.cfg.workers * self.cfg.batch_per_worker;
        if self.cursor + global > self.order.len() {
            self.epoch += 1;
            self.order = (0..self.cfg.n_train).collect();
            shuffle(&mut self.order, self.cfg.seed, self.epoch);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + global].to_vec();
        self.cursor += global;
        batch
    }

    /// One full training step; returns the logged record.
    pub fn train_step(&mut self) -> Result<&StepRecord> {
        let shape = self
            .shape
            .ok_or_else(|| Error::Config("parameters do not have the MLP layout".into()))?;
        let step = self.step;
        let batch = self.next_batch();
        let per = self.cfg.batch_per_worker;
        let train = &self.train;
        let compute = |(w, worker): (usize, &WorkerState)| {
            shape.loss_and_grads(&worker.replica, train, &batch[w * per..(w + 1) * per])
        };
        let results: Vec<(f64, Vec<Vec<f32>>)> = if self.cfg.parallel {
            self.workers.par_iter().enumerate().map(compute).collect()
        } else {
            self.workers.iter().enumerate().map(compute).collect()
        };

        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(results.len());
        for (w, (l, g)) in results.into_iter().enumerate() {
            if !l.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("worker {w} loss is {l}"),
                });
            }
            loss += l;
            let tensors = g
                .into_iter()
                .zip(&self.global)
                .map(|(data, p)| DenseTensor::new(p.dims().to_vec(), data))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Divergence {
                    step,
                    detail: format!("worker {w} gradient: {e}"),
                })?;
            grads.push(tensors);
        }
        loss /= self.cfg.workers as f64;

        let stats = self.exchange(grads)?;
        let last = step + 1 == self.cfg.steps;
        let test_acc = if (step + 1).is_multiple_of(self.cfg.eval_interval) || last {
            Some(shape.accuracy(&self.global, &self.test))
        } else {
            None
        };
        let ratio = |bits: u64, values: u64| if values == 0 { 0.0 } else { bits as f64 / values as f64 };
        self.metrics.push(StepRecord {
            step,
            push_bytes_total: stats.push_bytes_per_worker.iter().sum(),
            pull_bytes_total: stats.pull_bytes,
            bits_per_value_push: ratio(stats.push_bits, stats.push_values),
            bits_per_value_pull: ratio(stats.pull_bits, stats.pull_values),
            loss,
            test_acc,
            zero_frac: ratio(stats.push_zero_values, stats.push_values),
            push_bytes_per_worker: stats.push_bytes_per_worker,
            push_values: stats.push_values,
            push_bits: stats.push_bits,
            pull_values: stats.pull_values,
            pull_bits: stats.pull_bits,
        });
        Ok(self.metrics.last().expect("just pushed"))
    }

    /// Push, aggregate, update, and pull for externally computed per-worker
    /// gradients (`grads[worker][tensor]`). Advances the step counter.
    pub fn exchange(&mut self, grads: Vec<Vec<DenseTensor>>) -> Result<ExchangeStats> {
        if grads.len() != self.workers.len() {
            return Err(Error::Config(format!(
                "expected gradients from {} workers, got {}",
                self.workers.len(),
                grads.len()
            )));
        }
        let n_tensors = self.global.len();
        let mut stats = ExchangeStats {
            push_bytes_per_worker: vec![0; self.workers.len()],
            ..ExchangeStats::default()
        };

        // push
        let encode = |(worker, g): (&mut WorkerState, Vec<DenseTensor>)| -> Result<Vec<Option<CompressedBlob>>> {
            if g.len() != worker.push_codecs.len() {
                return Err(Error::Config(format!(
                    "expected {} gradient tensors, got {}",
                    worker.push_codecs.len(),
                    g.len()
                )));
            }
            for (audit, t) in worker.audit.iter_mut().zip(&g) {
                for (acc, &v) in audit.truth.iter_mut().zip(t.data()) {
                    *acc += f64::from(v);
                }
            }
            worker
                .push_codecs
                .iter_mut()
                .zip(&g)
                .map(|(codec, t)| codec.encode(t))
                .collect::<Result<Vec<_>>>()
        };
        let pushed: Vec<Vec<Option<CompressedBlob>>> = if self.cfg.parallel {
            self.workers.par_iter_mut().zip(grads).map(encode).collect::<Result<_>>()?
        } else {
            self.workers.iter_mut().zip(grads).map(encode).collect::<Result<_>>()?
        };

        // aggregate in worker order, then update
        let lr = self.cfg.lr_at(self.step);
        let momentum = self.cfg.momentum;
        let mut deltas: Vec<Option<DenseTensor>> = Vec::with_capacity(n_tensors);
        for t in 0..n_tensors {
            let mut sum = vec![0.0f32; self.global[t].len()];
            let mut received = 0usize;
            for (w, blobs) in pushed.iter().enumerate() {
                let Some(blob) = &blobs[t] else { continue };
                let decoded = decompress(blob)?;
                stats.push_bytes_per_worker[w] += blob.payload_len() as u64;
                if self.compressed[t] {
                    stats.push_values += blob.numel() as u64;
                    stats.push_bits += 8 * blob.payload_len() as u64;
                    stats.push_zero_values += decoded.data().iter().filter(|&&v| v == 0.0).count() as u64;
                }
                for ((acc, &v), sent) in sum.iter_mut().zip(decoded.data()).zip(&mut self.workers[w].audit[t].sent) {
                    *acc += v;
                    *sent += f64::from(v);
                }
                received += 1;
            }
            if received == 0 {
                deltas.push(None);
                continue;
            }
            let inv = 1.0 / received as f32;
            let velocity = &mut self.velocity[t];
            let delta: Vec<f32> = velocity
                .iter_mut()
                .zip(&sum)
                .map(|(v, &g)| {
                    *v = momentum * *v + g * inv;
                    -lr * *v
                })
                .collect();
            let dims = self.global[t].dims().to_vec();
            let updated: Vec<f32> = self.global[t].data().iter().zip(&delta).map(|(p, d)| p + d).collect();
            self.global[t] = DenseTensor::new(dims.clone(), updated).map_err(|e| Error::Divergence {
                step: self.step,
                detail: format!("tensor {t} update: {e}"),
            })?;
            deltas.push(Some(DenseTensor::new(dims, delta).map_err(|e| Error::Divergence {
                step: self.step,
                detail: format!("tensor {t} delta: {e}"),
            })?));
        }

        // shared pull: one compression per tensor, the same blob for everyone
        for (t, delta) in deltas.iter().enumerate() {
            self.last_pull[t] = None;
            let Some(delta) = delta else { continue };
            let Some(blob) = shared_pull_compress(&mut self.pull_codecs[t], delta)? else {
                continue;
            };
            let apply = |worker: &mut WorkerState| -> Result<()> {
                let decoded = decompress(&blob)?;
                let updated = worker.replica[t].data().iter().zip(decoded.data()).map(|(p, d)| p + d).collect();
                worker.replica[t] = DenseTensor::new(worker.replica[t].dims().to_vec(), updated)?;
                Ok(())
            };
            if self.cfg.parallel {
                self.workers.par_iter_mut().try_for_each(apply)?;
            } else {
                self.workers.iter_mut().try_for_each(apply)?;
            }
            stats.pull_bytes += (blob.payload_len() * self.workers.len()) as u64;
            if self.compressed[t] {
                stats.pull_values += blob.numel() as u64;
                stats.pull_bits += 8 * blob.payload_len() as u64;
            }
            self.last_pull[t] = Some(blob);
        }

        self.step += 1;
        Ok(stats)
    }
}

/// Compresses one model delta on the server. Every worker receives this
/// exact blob, so the work is done once per tensor per step regardless of
/// the worker count.
pub fn shared_pull_compress(server_ctx: &mut TensorCodec, delta: &DenseTensor) -> Result<Option<CompressedBlob>> {
    server_ctx.encode(delta)
}

fn shuffle(order: &mut [usize], seed: u64, epoch: u64) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(Stream::Shuffle.seed(seed) ^ epoch);
    order.shuffle(&mut rng);
}

/// Runs `cfg.steps` training steps and returns the metrics log.
pub fn run(cfg: SimConfig) -> Result<MetricsLog> {
    let mut state = SimState::new(cfg)?;
    for _ in 0..state.cfg.steps {
        state.train_step()?;
    }
    Ok(state.into_metrics())
}
