//! Kernel SVM over precomputed Gram matrices.
//!
//! One binary soft-margin head per class (that class against the rest).
//! Each head is solved by sequential minimal optimization with
//! second-order working-set selection until the maximal KKT violation
//! drops below `tol`, then a two-parameter sigmoid is fitted to its
//! training decision values to turn margins into scores in `[0, 1]`.
//! Scores of different heads are not normalized to sum to one.
//!
//! The box bound of sample `i` is `C · w(label_i)` with the balanced
//! weights `w(c) = n / (|classes| · n_c)`.

use std::io;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::Label;
use crate::gram::GramMatrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("gram has {gram} rows but {labels} labels were given")]
    GramLabelMismatch { gram: usize, labels: usize },
    #[error("kernel row has {found} entries, model has {expected} supports")]
    RowLengthMismatch { expected: usize, found: usize },
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    /// Scale box bounds by inverse class frequency.
    pub balanced: bool,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-3,
            balanced: true,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub class: Label,
    /// `α_i y_i` for every support, in support order.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    pub iterations: usize,
}

impl Head {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.coef.iter().zip(row).map(|(a, k)| a * k).sum::<f64>() - self.rho
    }

    pub fn score(&self, decision: f64) -> f64 {
        sigmoid(decision, self.platt_a, self.platt_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub classes: Vec<Label>,
    pub support_ids: Vec<String>,
    /// Positions of the supports in the training order.
    pub support_index: Vec<usize>,
    pub heads: Vec<Head>,
    pub params: SvmParams,
    pub weights: Vec<(Label, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Calibrated score per class, in class order.
    pub scores: Vec<(Label, f64)>,
    pub decisions: Vec<(Label, f64)>,
}

impl Prediction {
    pub fn score(&self, label: Label) -> Option<f64> {
        self.scores.iter().find(|(l, _)| *l == label).map(|(_, s)| *s)
    }
}

/// `1 / (1 + exp(A f + B))`, evaluated without overflow.
fn sigmoid(f: f64, a: f64, b: f64) -> f64 {
    let z = a * f + b;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

struct Binary {
    alpha: Vec<f64>,
    rho: f64,
    gap: f64,
    iterations: usize,
}

/// Dual of the soft-margin SVM, `min ½ αᵀQα − eᵀα`, `yᵀα = 0`,
/// `0 ≤ α_i ≤ C_i`, with `Q_ij = y_i y_j K_ij`.
fn smo(k: &DMatrix<f64>, y: &[f64], cb: &[f64], tol: f64, max_iter: usize) -> Binary {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let qd: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
    let upper = |a: &[f64], t: usize| a[t] >= cb[t];
    let lower = |a: &[f64], t: usize| a[t] <= 0.0;
    let mut iterations = 0;
    let gap;
    loop {
        // first index: maximal violation in the up set
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let v = if y[t] > 0.0 {
                (!upper(&alpha, t)).then_some(-g[t])
            } else {
                (!lower(&alpha, t)).then_some(g[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..n {
                let (cand, diff, quad) = if y[t] > 0.0 {
                    if lower(&alpha, t) {
                        continue;
                    }
                    (g[t], gmax + g[t], qd[i] + qd[t] - 2.0 * y[i] * k[(i, t)])
                } else {
                    if upper(&alpha, t) {
                        continue;
                    }
                    (-g[t], gmax - g[t], qd[i] + qd[t] + 2.0 * y[i] * k[(i, t)])
                };
                if cand >= gmax2 {
                    gmax2 = cand;
                }
                if diff > 0.0 {
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < tol || iterations >= max_iter {
            gap = if i == usize::MAX { 0.0 } else { (gmax + gmax2).max(0.0) };
            break;
        }
        iterations += 1;
        let qij = y[i] * y[j] * k[(i, j)];
        let (ci, cj) = (cb[i], cb[j]);
        let (oi, oj) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (oi, oj);
        if y[i] != y[j] {
            let quad = qd[i] + qd[j] + 2.0 * qij;
            let delta = (-g[i] - g[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qij;
            let delta = (g[i] - g[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - oi, aj - oj);
        for t in 0..n {
            g[t] += y[t] * (y[i] * k[(t, i)] * di + y[j] * k[(t, j)] * dj);
        }
    }
    // bias from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * g[t];
        if upper(&alpha, t) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(&alpha, t) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    Binary {
        alpha,
        rho,
        gap,
        iterations,
    }
}

/// Maximum-likelihood sigmoid fit with regularized targets, by Newton's
/// method with backtracking.
fn platt(dec: &[f64], positive: &[bool]) -> (f64, f64) {
    let prior1 = positive.iter().filter(|&&p| p).count() as f64;
    let prior0 = positive.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&f, &ti) in dec.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

fn class_weights(labels: &[Label], classes: &[Label], balanced: bool) -> Vec<(Label, f64)> {
    let n = labels.len() as f64;
    classes
        .iter()
        .map(|&c| {
            let nc = labels.iter().filter(|&&l| l == c).count() as f64;
            (c, if balanced { n / (classes.len() as f64 * nc) } else { 1.0 })
        })
        .collect()
}

/// Trains one head per class present in `labels`.
pub fn train(gram: &DMatrix<f64>, ids: &[String], labels: &[Label], params: &SvmParams) -> Result<KernelModel, ClassifierError> {
    if gram.nrows() != labels.len() || gram.ncols() != labels.len() || ids.len() != labels.len() {
        return Err(ClassifierError::GramLabelMismatch {
            gram: gram.nrows(),
            labels: labels.len(),
        });
    }
    let classes: Vec<Label> = Label::ALL.into_iter().filter(|c| labels.contains(c)).collect();
    if classes.len() < 2 {
        return Err(ClassifierError::SingleClass);
    }
    let weights = class_weights(labels, &classes, params.balanced);
    let weight = |l: Label| weights.iter().find(|(c, _)| *c == l).map_or(1.0, |(_, w)| *w);
    let cb: Vec<f64> = labels.iter().map(|&l| params.c * weight(l)).collect();
    let solved: Vec<(Label, Binary, Vec<f64>)> = classes
        .par_iter()
        .map(|&c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let b = smo(gram, &y, &cb, params.tol, params.max_iter);
            (c, b, y)
        })
        .collect();
    let n = labels.len();
    let support_index: Vec<usize> = (0..n).filter(|&i| solved.iter().any(|(_, b, _)| b.alpha[i] > 0.0)).collect();
    let heads = solved
        .into_iter()
        .map(|(class, b, y)| {
            let dec: Vec<f64> = (0..n)
                .map(|r| (0..n).map(|s| b.alpha[s] * y[s] * gram[(r, s)]).sum::<f64>() - b.rho)
                .collect();
            let positive: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
            let (platt_a, platt_b) = platt(&dec, &positive);
            Head {
                class,
                coef: support_index.iter().map(|&s| b.alpha[s] * y[s]).collect(),
                rho: b.rho,
                platt_a,
                platt_b,
                kkt_gap: b.gap,
                iterations: b.iterations,
            }
        })
        .collect();
    Ok(KernelModel {
        classes,
        support_ids: support_index.iter().map(|&i| ids[i].clone()).collect(),
        support_index,
        heads,
        params: *params,
        weights,
    })
}

pub fn train_gram(gram: &GramMatrix, labels: &[Label], params: &SvmParams) -> Result<KernelModel, ClassifierError> {
    train(&gram.values, &gram.ids, labels, params)
}

impl KernelModel {
    /// Classifies one sample given its kernel values against the supports.
    /// Ties go to the earlier class in `Valid, Invalid, Swap` order.
    pub fn predict(&self, row: &[f64]) -> Result<Prediction, ClassifierError> {
        if row.len() != self.support_ids.len() {
            return Err(ClassifierError::RowLengthMismatch {
                expected: self.support_ids.len(),
                found: row.len(),
            });
        }
        let decisions: Vec<(Label, f64)> = self.heads.iter().map(|h| (h.class, h.decision(row))).collect();
        let scores: Vec<(Label, f64)> = self.heads.iter().zip(&decisions).map(|(h, (c, d))| (*c, h.score(*d))).collect();
        let mut label = scores[0].0;
        let mut best = scores[0].1;
        for &(c, s) in &scores[1..] {
            if s > best {
                best = s;
                label = c;
            }
        }
        Ok(Prediction { label, scores, decisions })
    }

    /// Kernel row against the supports, taken from a row over the whole
    /// training set.
    pub fn support_row(&self, training_row: &[f64]) -> Vec<f64> {
        self.support_index.iter().map(|&i| training_row[i]).collect()
    }

    pub fn write_to<W: io::Write>(&self, w: W) -> Result<(), ClassifierError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_from<R: io::Read>(r: R) -> Result<KernelModel, ClassifierError> {
        Ok(serde_json::from_reader(r)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn block(labels: &[Label]) -> DMatrix<f64> {
        DMatrix::from_fn(labels.len(), labels.len(), |i, j| f64::from(u8::from(labels[i] == labels[j])))
    }

    #[test]
    fn block_diagonal_two_classes() {
        let labels = [Label::Valid, Label::Valid, Label::Invalid, Label::Invalid, Label::Invalid];
        let g = block(&labels);
        let m = train(&g, &ids(5), &labels, &SvmParams::default()).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            let row: Vec<f64> = (0..5).map(|j| g[(i, j)]).collect();
            assert_eq!(m.predict(&m.support_row(&row)).unwrap().label, l);
        }
        for h in &m.heads {
            assert!(h.kkt_gap <= 1e-3);
        }
    }

    #[test]
    fn all_ones_gram_predicts_majority() {
        // Box bounds 2/3 (Valid) and 2 (Invalid): the dual optimum has every
        // α at its bound, both heads get ρ = 0 and every decision is 0. The
        // sigmoid fits then give Valid 0.683 against Invalid 0.317.
        let labels = [Label::Valid, Label::Valid, Label::Valid, Label::Invalid];
        let g = DMatrix::from_element(4, 4, 1.0);
        let m = train(&g, &ids(4), &labels, &SvmParams::default()).unwrap();
        let valid = &m.heads[0];
        assert!(valid.rho.abs() < 1e-12);
        for (c, w) in &m.weights {
            let want = if *c == Label::Valid { 2.0 / 3.0 } else { 2.0 };
            assert!((w - want).abs() < 1e-12);
        }
        let row = m.support_row(&[1.0; 4]);
        let p = m.predict(&row).unwrap();
        assert_eq!(p.label, Label::Valid);
        let s = p.score(Label::Valid).unwrap();
        assert!((s - (3.0 * 0.8 + 1.0 / 3.0) / 4.0).abs() < 1e-4, "{s}");
        let correct = labels.iter().filter(|&&l| l == p.label).count();
        assert_eq!(correct as f64 / 4.0, 0.75);
    }

    #[test]
    fn three_class_blocks() {
        let labels = [
            Label::Valid,
            Label::Invalid,
            Label::Swap,
            Label::Valid,
            Label::Invalid,
            Label::Swap,
        ];
        let g = block(&labels);
        let m = train(&g, &ids(6), &labels, &SvmParams::default()).unwrap();
        assert_eq!(m.classes, Label::ALL.to_vec());
        for (i, &l) in labels.iter().enumerate() {
            let row: Vec<f64> = (0..6).map(|j| g[(i, j)]).collect();
            let p = m.predict(&m.support_row(&row)).unwrap();
            assert_eq!(p.label, l);
            let h = m.heads.iter().find(|h| h.class == l).unwrap();
            assert!(h.decision(&m.support_row(&row)) > 0.0);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let labels = [Label::Valid, Label::Valid];
        let err = train(&DMatrix::identity(2, 2), &ids(2), &labels, &SvmParams::default()).unwrap_err();
        assert!(matches!(err, ClassifierError::SingleClass));
    }

    #[test]
    fn mismatched_sizes() {
        let err = train(&DMatrix::identity(3, 3), &ids(2), &[Label::Valid, Label::Invalid], &SvmParams::default()).unwrap_err();
        assert!(matches!(err, ClassifierError::GramLabelMismatch { .. }));
        let labels = [Label::Valid, Label::Invalid];
        let m = train(&DMatrix::identity(2, 2), &ids(2), &labels, &SvmParams::default()).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(ClassifierError::RowLengthMismatch { .. })));
    }

    #[test]
    fn zero_row_uses_bias_only_scores() {
        let labels = [Label::Valid, Label::Invalid, Label::Invalid];
        let g = block(&labels);
        let m = train(&g, &ids(3), &labels, &SvmParams::default()).unwrap();
        let p = m.predict(&vec![0.0; m.support_ids.len()]).unwrap();
        let best = m
            .heads
            .iter()
            .map(|h| (h.class, h.score(-h.rho)))
            .fold(None::<(Label, f64)>, |acc, (c, s)| match acc {
                Some((_, b)) if b >= s => acc,
                _ => Some((c, s)),
            })
            .unwrap();
        assert_eq!(p.label, best.0);
    }

    #[test]
    fn duplicated_sample_keeps_held_out_labels() {
        // points on two separated clusters of a line, linear kernel plus 1
        let xs = [-2.0, -1.5, -1.0, 1.0, 1.4, 2.2];
        let labels = [Label::Invalid, Label::Invalid, Label::Invalid, Label::Valid, Label::Valid, Label::Valid];
        let held = [-1.7, -0.6, 0.7, 1.9];
        let k = |a: f64, b: f64| 1.0 + a * b;
        let fit = |xs: &[f64], labels: &[Label]| {
            let g = DMatrix::from_fn(xs.len(), xs.len(), |i, j| k(xs[i], xs[j]));
            let m = train(&g, &ids(xs.len()), labels, &SvmParams::default()).unwrap();
            held.iter()
                .map(|&h| {
                    let row: Vec<f64> = xs.iter().map(|&x| k(h, x)).collect();
                    m.predict(&m.support_row(&row)).unwrap().label
                })
                .collect::<Vec<_>>()
        };
        let base = fit(&xs, &labels);
        assert_eq!(base, vec![Label::Invalid, Label::Invalid, Label::Valid, Label::Valid]);
        let mut xd = xs.to_vec();
        xd.push(xs[3]);
        let mut ld = labels.to_vec();
        ld.push(labels[3]);
        assert_eq!(fit(&xd, &ld), base);
    }

    #[test]
    fn tie_prefers_valid() {
        let head = |class| Head {
            class,
            coef: vec![],
            rho: 0.0,
            platt_a: 0.0,
            platt_b: 0.0,
            kkt_gap: 0.0,
            iterations: 0,
        };
        let m = KernelModel {
            classes: vec![Label::Valid, Label::Invalid],
            support_ids: vec![],
            support_index: vec![],
            heads: vec![head(Label::Valid), head(Label::Invalid)],
            params: SvmParams::default(),
            weights: vec![],
        };
        assert_eq!(m.predict(&[]).unwrap().label, Label::Valid);
    }

    #[test]
    fn sigmoid_fit_orders_scores() {
        let dec = [-2.0, -1.0, 1.0, 2.0];
        let (a, b) = platt(&dec, &[false, false, true, true]);
        assert!(a < 0.0);
        assert!(sigmoid(2.0, a, b) > 0.5 && sigmoid(-2.0, a, b) < 0.5);
    }

    #[test]
    fn model_file_round_trip() {
        let labels = [Label::Valid, Label::Invalid, Label::Invalid];
        let m = train(&block(&labels), &ids(3), &labels, &SvmParams::default()).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(KernelModel::read_from(buf.as_slice()).unwrap(), m);
    }
}
