//! Per-sample embedding store.
//!
//! Each view owns an `[N×d]` matrix of unit rows. Row `i` belongs to sample
//! id `i`. Rows are blended towards fresh encoder outputs with momentum and
//! renormalized; negatives are drawn from the stored rows.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BANK_MOMENTUM: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    n: usize,
    d: usize,
    momentum: f64,
    with_replacement: bool,
    views: BTreeMap<String, Tensor>,
}

fn normalize(row: &mut [f64]) -> Result<()> {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > crate::autodiff::NORM_EPS) {
        return Err(Error::DegenerateEmbedding { row: 0, norm });
    }
    row.iter_mut().for_each(|v| *v /= norm);
    Ok(())
}

fn random_unit_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(&[n, d]);
    for i in 0..n {
        let row = t.row_mut(i);
        loop {
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            if normalize(row).is_ok() {
                break;
            }
        }
    }
    t
}

/// Bank of `n` rows of width `d` for each named view, rows drawn uniformly
/// on the unit sphere. View `i` uses the stream `seed + i`.
pub fn init_bank<S: AsRef<str>>(n: usize, d: usize, views: &[S], seed: u64) -> Result<MemoryBank> {
    if n == 0 || d == 0 {
        return Err(Error::Parameter(format!("memory bank needs N, d ≥ 1, got N={n}, d={d}")));
    }
    let views = views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            (v.as_ref().to_string(), random_unit_rows(n, d, &mut rng))
        })
        .collect();
    Ok(MemoryBank {
        n,
        d,
        momentum: DEFAULT_BANK_MOMENTUM,
        with_replacement: true,
        views,
    })
}

impl MemoryBank {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn with_momentum(mut self, momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Parameter(format!("bank momentum {momentum} outside [0, 1]")));
        }
        self.momentum = momentum;
        Ok(self)
    }

    /// Draw negatives without replacement instead.
    pub fn without_replacement(mut self) -> Self {
        self.with_replacement = false;
        self
    }

    pub fn view_names(&self) -> impl Iterator<Item = &str> {
        self.views.keys().map(String::as_str)
    }

    pub fn view(&self, name: &str) -> Result<&Tensor> {
        self.views
            .get(name)
            .ok_or_else(|| Error::GraphMismatch(format!("memory bank has no view {name:?}")))
    }

    pub fn row(&self, view: &str, id: usize) -> Result<&[f64]> {
        let m = self.view(view)?;
        if id >= self.n {
            return Err(Error::Index {
                op: "memory_bank.row",
                index: id,
                bound: self.n,
            });
        }
        Ok(m.row(id))
    }

    /// `v ← μ·v + (1−μ)·f`, then renormalize, for each `(id, f)`.
    pub fn update(&mut self, view: &str, ids: &[usize], embeds: &Tensor, momentum: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Parameter(format!("bank momentum {momentum} outside [0, 1]")));
        }
        if embeds.ndim() != 2 || embeds.shape()[0] != ids.len() || embeds.shape()[1] != self.d {
            return Err(crate::error::shape_err(
                "memory_bank.update",
                format!("embeds {:?} for {} ids of width {}", embeds.shape(), ids.len(), self.d),
            ));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in ids {
            if id >= self.n {
                return Err(Error::Index {
                    op: "memory_bank.update",
                    index: id,
                    bound: self.n,
                });
            }
            if !seen.insert(id) {
                return Err(Error::Contract(format!("sample id {id} repeated in one bank update")));
            }
        }
        let bank = self
            .views
            .get_mut(view)
            .ok_or_else(|| Error::GraphMismatch(format!("memory bank has no view {view:?}")))?;
        for (k, &id) in ids.iter().enumerate() {
            let f = embeds.row(k);
            let row = bank.row_mut(id);
            let old = row.to_vec();
            for ((r, o), x) in row.iter_mut().zip(&old).zip(f) {
                *r = momentum * o + (1.0 - momentum) * x;
            }
            if normalize(row).is_err() {
                // blend cancelled out; keep the previous row
                row.copy_from_slice(&old);
            }
        }
        Ok(())
    }

    /// `m` rows of `view`, drawn uniformly from ids other than `exclude`.
    pub fn sample_negatives<R: Rng + ?Sized>(
        &self,
        view: &str,
        m: usize,
        exclude: Option<usize>,
        rng: &mut R,
    ) -> Result<Tensor> {
        let ids = self.sample_ids(m, exclude, rng)?;
        self.view(view)?.gather_rows(&ids)
    }

    /// The ids [`MemoryBank::sample_negatives`] would gather.
    pub fn sample_ids<R: Rng + ?Sized>(&self, m: usize, exclude: Option<usize>, rng: &mut R) -> Result<Vec<usize>> {
        let pool = match exclude {
            Some(e) if e < self.n => self.n - 1,
            Some(e) => {
                return Err(Error::Index {
                    op: "memory_bank.sample_negatives",
                    index: e,
                    bound: self.n,
                })
            }
            None => self.n,
        };
        if pool == 0 || m == 0 {
            return Err(Error::Parameter(format!(
                "cannot draw {m} negatives from a pool of {pool}"
            )));
        }
        let skip = |r: usize| match exclude {
            Some(e) if r >= e => r + 1,
            _ => r,
        };
        if self.with_replacement {
            return Ok((0..m).map(|_| skip(rng.random_range(0..pool))).collect());
        }
        if m > pool {
            return Err(Error::Parameter(format!(
                "{m} negatives without replacement exceed the {pool} available rows"
            )));
        }
        Ok(rand::seq::index::sample(rng, pool, m).into_iter().map(skip).collect())
    }

    /// `[n×k×d]` negatives for a batch, excluding each anchor's own id.
    pub fn batch_negatives<R: Rng + ?Sized>(
        &self,
        view: &str,
        ids: &[usize],
        k: usize,
        rng: &mut R,
    ) -> Result<Tensor> {
        let bank = self.view(view)?;
        let mut data = Vec::with_capacity(ids.len() * k * self.d);
        for &id in ids {
            for j in self.sample_ids(k, Some(id), rng)? {
                data.extend_from_slice(bank.row(j));
            }
        }
        Tensor::new(vec![ids.len(), k, self.d], data)
    }

    /// `("bank/<view>", rows)` entries for a checkpoint.
    pub fn checkpoint_entries(&self) -> Vec<(String, Tensor)> {
        self.views
            .iter()
            .map(|(v, t)| (format!("bank/{v}"), t.clone()))
            .collect()
    }

    pub fn from_checkpoint(entries: &[(String, Tensor)], momentum: f64) -> Result<Self> {
        let mut views = BTreeMap::new();
        let mut dims = None;
        for (name, t) in entries {
            if let Some(v) = name.strip_prefix("bank/") {
                if t.ndim() != 2 {
                    return Err(Error::Format(format!("bank entry {name} is not a matrix")));
                }
                let nd = (t.shape()[0], t.shape()[1]);
                if dims.is_some_and(|d| d != nd) {
                    return Err(Error::Format("bank views disagree in shape".into()));
                }
                dims = Some(nd);
                views.insert(v.to_string(), t.clone());
            }
        }
        let (n, d) = dims.ok_or_else(|| Error::Format("checkpoint holds no bank entries".into()))?;
        MemoryBank {
            n,
            d,
            momentum: DEFAULT_BANK_MOMENTUM,
            with_replacement: true,
            views,
        }
        .with_momentum(momentum)
    }
}
