//! Shuffled minibatch loop shared by all trainable modules.
//!
//! A batch is cut into fixed-size chunks whose gradients are computed
//! independently (possibly on several workers) and then summed in chunk
//! order, each scaled by its share of the batch. The arithmetic is the same
//! for any worker count.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{AdamState, Gradients, ParamStore};
use crate::config::LrSchedule;
use crate::error::{Error, Result};
use crate::par::Jobs;

pub(crate) fn stream_seed(seed: u64, tag: &str, epoch: usize) -> u64 {
    // FNV-1a over the tag, then mixed with seed and epoch.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ h ^ (epoch as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub(crate) struct Loop<'a> {
    pub tag: &'a str,
    pub seed: u64,
    pub batch: usize,
    pub chunk: usize,
    pub schedule: &'a LrSchedule,
    pub jobs: &'a Jobs,
}

impl Loop<'_> {
    /// Runs epochs `start_epoch..schedule.total_epochs()` over `n` samples and
    /// returns the mean batch loss of each. `loss(store, batch, chunk)`
    /// gives the mean loss of `chunk` and its gradient; `batch` is the
    /// enclosing batch for batch-level statistics.
    pub fn fit<F>(
        &self,
        store: &mut ParamStore,
        adam: &mut AdamState,
        start_epoch: usize,
        n: usize,
        loss: F,
    ) -> Result<Vec<f64>>
    where
        F: Fn(&ParamStore, &[usize], &[usize]) -> Result<(f64, Gradients)> + Sync + Send,
    {
        let total = self.schedule.total_epochs();
        let mut curve = Vec::new();
        if n == 0 && start_epoch < total {
            return Err(Error::Pipeline(format!("{}: no training samples", self.tag)));
        }
        for epoch in start_epoch..total {
            let lr = self.schedule.lr_at(epoch);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(self.seed, self.tag, epoch)));
            let mut sum = 0.0;
            let mut batches = 0;
            for batch in order.chunks(self.batch) {
                let chunks: Vec<&[usize]> = batch.chunks(self.chunk).collect();
                let store_ref: &ParamStore = store;
                let parts = self.jobs.try_map(&chunks, |c| loss(store_ref, batch, c))?;
                let mut grads = Gradients::zeros_like(store);
                let mut batch_loss = 0.0;
                for (c, (l, g)) in chunks.iter().zip(&parts) {
                    let w = c.len() as f64 / batch.len() as f64;
                    grads.accumulate(g, w);
                    batch_loss += l * w;
                }
                if !batch_loss.is_finite() {
                    return Err(Error::NonFinite(format!("{} loss at epoch {epoch}", self.tag)));
                }
                adam.step(store, &grads, lr)?;
                sum += batch_loss;
                batches += 1;
            }
            let mean = sum / batches as f64;
            debug!("{} epoch {epoch}: lr {lr:e}, {batches} batches", self.tag);
            info!("{} epoch {}/{total}: loss {mean:.6}", self.tag, epoch + 1);
            curve.push(mean);
        }
        Ok(curve)
    }
}
