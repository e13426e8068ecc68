//! The selection model: per-image agent election probabilities and
//! collaboration adjacency from one attention block.
//!
//! Forward pass:
//!   Fea = Linear(Emb + x)                  (broadcast x over rows)
//!   A   = row-softmax(Fea Fea^T / sqrt(d_k)), diagonal masked to zero
//!   Lst = sigmoid(Linear(flatten(leaky_relu(A Fea W))))
//!
//! The adjacency is the masked attention matrix itself, so every row
//! sums to 1 over the off-diagonal and A_ii = 0, matching the
//! collaboration-graph invariant. Gradients flow through the two MSE
//! terms of the objective; the distance term is accounted but has no
//! gradient path (agent answers reach it only through discrete
//! elections).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::features::FeatureVector;
use super::targets::TrainTargets;
use super::LearnError;
use crate::seeding::rng_stream;

const LEAKY_SLOPE: f64 = 0.01;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"SWGEO1";

/// Learnable parameters. Declaration order is the checkpoint block
/// order: emb, fea_w, fea_b, w, out_w, out_b.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionModel {
    pub n: usize,
    pub d_k: usize,
    pub d_h: usize,
    pub emb: Array2<f64>,   // n x d_k
    pub fea_w: Array2<f64>, // d_k x d_k
    pub fea_b: Array1<f64>, // d_k
    pub w: Array2<f64>,     // d_k x d_h
    pub out_w: Array2<f64>, // (n * d_h) x n
    pub out_b: Array1<f64>, // n
}

/// Forward-pass outputs plus the cached intermediates backward needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub a: Array2<f64>,
    pub lst: Array1<f64>,
    e: Array2<f64>,
    fea: Array2<f64>,
    p: Array2<f64>,
    m: Array2<f64>,
    h_flat: Array1<f64>,
}

/// Parameter gradients, same shapes as the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub emb: Array2<f64>,
    pub fea_w: Array2<f64>,
    pub fea_b: Array1<f64>,
    pub w: Array2<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl SelectionModel {
    pub fn zeros(n: usize, d_k: usize, d_h: usize) -> Self {
        Self {
            n,
            d_k,
            d_h,
            emb: Array2::zeros((n, d_k)),
            fea_w: Array2::zeros((d_k, d_k)),
            fea_b: Array1::zeros(d_k),
            w: Array2::zeros((d_k, d_h)),
            out_w: Array2::zeros((n * d_h, n)),
            out_b: Array1::zeros(n),
        }
    }

    /// Small random initialization, deterministic in the seed.
    pub fn new_random(n: usize, d_k: usize, d_h: usize, seed: u64) -> Self {
        let mut rng = rng_stream(seed, "model-init", &[]);
        let mut model = Self::zeros(n, d_k, d_h);
        let mut fill = |a: &mut [f64], scale: f64| {
            for v in a {
                *v = (rng.gen::<f64>() * 2.0 - 1.0) * scale;
            }
        };
        let s_emb = 0.5;
        let s_fea = (1.0 / d_k as f64).sqrt();
        let s_w = (1.0 / d_k as f64).sqrt();
        let s_out = (1.0 / (n as f64 * d_h as f64)).sqrt();
        fill(model.emb.as_slice_mut().expect("contiguous"), s_emb);
        fill(model.fea_w.as_slice_mut().expect("contiguous"), s_fea);
        fill(model.fea_b.as_slice_mut().expect("contiguous"), 0.01);
        fill(model.w.as_slice_mut().expect("contiguous"), s_w);
        fill(model.out_w.as_slice_mut().expect("contiguous"), s_out);
        fill(model.out_b.as_slice_mut().expect("contiguous"), 0.01);
        model
    }

    pub fn param_count(&self) -> usize {
        self.n * self.d_k
            + self.d_k * self.d_k
            + self.d_k
            + self.d_k * self.d_h
            + self.n * self.d_h * self.n
            + self.n
    }

    /// All parameters flattened in declaration order (row-major blocks).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.emb.iter());
        out.extend(self.fea_w.iter());
        out.extend(self.fea_b.iter());
        out.extend(self.w.iter());
        out.extend(self.out_w.iter());
        out.extend(self.out_b.iter());
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), LearnError> {
        if flat.len() != self.param_count() {
            return Err(LearnError::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for dst in [
            self.emb.iter_mut().collect::<Vec<_>>(),
            self.fea_w.iter_mut().collect(),
            self.fea_b.iter_mut().collect(),
            self.w.iter_mut().collect(),
            self.out_w.iter_mut().collect(),
            self.out_b.iter_mut().collect(),
        ] {
            for d in dst {
                *d = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Run the forward pass for one image feature vector.
    pub fn forward(&self, x: &FeatureVector) -> Result<Forward, LearnError> {
        if x.dim() != self.d_k {
            return Err(LearnError::Shape(format!(
                "feature dim {} != model d_k {}",
                x.dim(),
                self.d_k
            )));
        }
        let n = self.n;
        // E = Emb + x broadcast over rows; Fea = E * fea_w + fea_b.
        let e = &self.emb + &x.values().view().insert_axis(Axis(0));
        let fea = e.dot(&self.fea_w) + self.fea_b.view().insert_axis(Axis(0));

        // Scaled Gram matrix with the diagonal masked before softmax.
        let scale = 1.0 / (self.d_k as f64).sqrt();
        let scores = fea.dot(&fea.t()) * scale;
        let mut a = Array2::<f64>::zeros((n, n));
        if n > 1 {
            for i in 0..n {
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    if j != i {
                        max = max.max(scores[[i, j]]);
                    }
                }
                let mut denom = 0.0;
                for j in 0..n {
                    if j != i {
                        let v = (scores[[i, j]] - max).exp();
                        a[[i, j]] = v;
                        denom += v;
                    }
                }
                for j in 0..n {
                    if j != i {
                        a[[i, j]] /= denom;
                    }
                }
            }
        }

        let p = fea.dot(&self.w);
        let m = a.dot(&p);
        let h = m.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
        let h_flat = Array1::from_iter(h.iter().copied());
        let z = h_flat.dot(&self.out_w) + &self.out_b;
        let lst = z.mapv(|v| 1.0 / (1.0 + (-v).exp()));

        for v in a.iter().chain(lst.iter()) {
            if !v.is_finite() {
                return Err(LearnError::NumericalFault(
                    "non-finite value in forward pass".into(),
                ));
            }
        }
        Ok(Forward {
            a,
            lst,
            e,
            fea,
            p,
            m,
            h_flat,
        })
    }

    /// Gradients of mse(lst_hat, lst) + mse(a_hat, A) with respect to
    /// every parameter. The distance term of the objective contributes
    /// no gradient.
    pub fn backward(&self, fwd: &Forward, targets: &TrainTargets) -> Result<Gradients, LearnError> {
        let n = self.n;
        if targets.lst_hat.len() != n {
            return Err(LearnError::Shape(format!(
                "lst target length {} != n {}",
                targets.lst_hat.len(),
                n
            )));
        }
        let off_diag = (n * n.saturating_sub(1)).max(1) as f64;

        // d(mse_lst)/d z through the sigmoid.
        let mut dz = Array1::<f64>::zeros(n);
        for i in 0..n {
            let s = fwd.lst[i];
            let dl = 2.0 * (s - targets.lst_hat[i]) / n as f64;
            dz[i] = dl * s * (1.0 - s);
        }

        let dout_b = dz.clone();
        // out_w[p][i] receives h_p * dz_i.
        let dout_w = {
            let h = fwd.h_flat.view().insert_axis(Axis(1)); // (n*d_h) x 1
            let dzr = dz.view().insert_axis(Axis(0)); // 1 x n
            h.dot(&dzr)
        };
        let dh_flat = self.out_w.dot(&dz); // (n*d_h)
        let dh = Array2::from_shape_vec((n, self.d_h), dh_flat.to_vec())
            .expect("flat buffer matches shape");

        // Through LeakyReLU.
        let mut dm = dh;
        for (dm_v, m_v) in dm.iter_mut().zip(fwd.m.iter()) {
            if *m_v <= 0.0 {
                *dm_v *= LEAKY_SLOPE;
            }
        }

        // M = A * P.
        let mut da = dm.dot(&fwd.p.t()); // n x n
        let dp = fwd.a.t().dot(&dm); // n x d_h
        let dw = fwd.fea.t().dot(&dp); // d_k x d_h
        let mut dfea = dp.dot(&self.w.t()); // n x d_k

        // Plus the direct MSE(a_hat, A) term on the off-diagonal.
        if n > 1 {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        da[[i, j]] += 2.0 * (fwd.a[[i, j]] - targets.a_hat[[i, j]]) / off_diag;
                    }
                }
            }
        }

        // Row-softmax backward with the diagonal masked out.
        let mut ds = Array2::<f64>::zeros((n, n));
        if n > 1 {
            for i in 0..n {
                let mut dot = 0.0;
                for j in 0..n {
                    if j != i {
                        dot += da[[i, j]] * fwd.a[[i, j]];
                    }
                }
                for j in 0..n {
                    if j != i {
                        ds[[i, j]] = fwd.a[[i, j]] * (da[[i, j]] - dot);
                    }
                }
            }
        }

        // S = Fea Fea^T / sqrt(d_k).
        let scale = 1.0 / (self.d_k as f64).sqrt();
        dfea = dfea + (&ds + &ds.t()).dot(&fwd.fea) * scale;

        // Fea = E * fea_w + fea_b.
        let dfea_w = fwd.e.t().dot(&dfea);
        let dfea_b = dfea.sum_axis(Axis(0));
        let demb = dfea.dot(&self.fea_w.t());

        Ok(Gradients {
            emb: demb,
            fea_w: dfea_w,
            fea_b: dfea_b,
            w: dw,
            out_w: dout_w,
            out_b: dout_b,
        })
    }

    /// Write the checkpoint: magic, little-endian u32 dims, then f64
    /// little-endian parameter blocks in declaration order.
    pub fn save(&self, path: &std::path::Path) -> Result<(), LearnError> {
        let mut bytes = Vec::with_capacity(18 + 8 * self.param_count());
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&(self.n as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.d_k as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.d_h as u32).to_le_bytes());
        for v in self.params_flat() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes)
            .map_err(|e| LearnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LearnError> {
        let fail = |msg: String| LearnError::Checkpoint(format!("{}: {msg}", path.display()));
        let bytes = std::fs::read(path).map_err(|e| fail(e.to_string()))?;
        if bytes.len() < 18 || &bytes[..6] != CHECKPOINT_MAGIC {
            return Err(fail("bad magic".into()));
        }
        let dim =
            |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let (n, d_k, d_h) = (dim(6), dim(10), dim(14));
        let mut model = Self::zeros(n, d_k, d_h);
        let expected = 18 + 8 * model.param_count();
        if bytes.len() != expected {
            return Err(fail(format!(
                "expected {expected} bytes for n={n} d_k={d_k} d_h={d_h}, got {}",
                bytes.len()
            )));
        }
        let flat: Vec<f64> = bytes[18..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        model.set_params_flat(&flat)?;
        Ok(model)
    }
}

/// The two MSE terms of the objective: (lst term, adjacency term). The
/// adjacency MSE runs over off-diagonal entries only.
pub fn mse_terms(a: &Array2<f64>, lst: &Array1<f64>, targets: &TrainTargets) -> (f64, f64) {
    let n = lst.len();
    let lst_term = lst
        .iter()
        .zip(targets.lst_hat.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n as f64;
    let mut a_term = 0.0;
    if n > 1 {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = a[[i, j]] - targets.a_hat[[i, j]];
                    a_term += d * d;
                }
            }
        }
        a_term /= (n * (n - 1)) as f64;
    }
    (lst_term, a_term)
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub d_term: f64,
    pub lst_term: f64,
    pub a_term: f64,
}

/// The full objective value: the distance sum over answering agents
/// (km scaled by 1/th so the three terms share scale) plus the two MSE
/// terms. `distances[i]` is `Some(km)` exactly when agent i answered.
pub fn loss(
    pred_lst: &Array1<f64>,
    pred_a: &Array2<f64>,
    targets: &TrainTargets,
    distances: &[Option<f64>],
    th_km: f64,
) -> LossBreakdown {
    let d_term: f64 = distances.iter().flatten().map(|d| d / th_km).sum();
    let (lst_term, a_term) = mse_terms(pred_a, pred_lst, targets);
    LossBreakdown {
        total: d_term + lst_term + a_term,
        d_term,
        lst_term,
        a_term,
    }
}

/// Central-difference gradients of the MSE objective, one parameter at
/// a time. Independent of the analytic backward path.
pub fn fd_grads(
    model: &SelectionModel,
    x: &FeatureVector,
    targets: &TrainTargets,
    h: f64,
) -> Result<Vec<f64>, LearnError> {
    let mut probe = model.clone();
    let base = model.params_flat();
    let mut grads = Vec::with_capacity(base.len());
    let mse_at = |probe: &SelectionModel| -> Result<f64, LearnError> {
        let fwd = probe.forward(x)?;
        let (l, a) = mse_terms(&fwd.a, &fwd.lst, targets);
        Ok(l + a)
    };
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        probe.set_params_flat(&plus)?;
        let up = mse_at(&probe)?;
        let mut minus = base.clone();
        minus[i] -= h;
        probe.set_params_flat(&minus)?;
        let down = mse_at(&probe)?;
        grads.push((up - down) / (2.0 * h));
    }
    Ok(grads)
}

/// Guarded relative error with an absolute floor of 1e-8 (no 0/0) that
/// also scales with the largest gradient present: central differences
/// carry ~eps*|loss|/h of roundoff, so a parameter whose true gradient
/// sits orders of magnitude below the gradient scale cannot be compared
/// at fixed relative precision. An error on any gradient of meaningful
/// magnitude still surfaces at its own scale.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-4 * scale).max(1e-8);
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Compare the analytic gradient against central finite differences
/// (h = 1e-5) for every parameter; returns the maximum relative error.
pub fn grad_check(
    model: &SelectionModel,
    x: &FeatureVector,
    targets: &TrainTargets,
) -> Result<f64, LearnError> {
    let fwd = model.forward(x)?;
    let analytic = model.backward(&fwd, targets)?;
    let flat_analytic = flatten_grads(model, &analytic);
    let fd = fd_grads(model, x, targets, 1e-5)?;
    Ok(max_rel_error(&flat_analytic, &fd))
}

/// Flatten gradients in the same declaration order as `params_flat`.
pub fn flatten_grads(model: &SelectionModel, g: &Gradients) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.param_count());
    out.extend(g.emb.iter());
    out.extend(g.fea_w.iter());
    out.extend(g.fea_b.iter());
    out.extend(g.w.iter());
    out.extend(g.out_w.iter());
    out.extend(g.out_b.iter());
    out
}
