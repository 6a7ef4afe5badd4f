//! Brute-force oracles and numerical checkers for the loss family.
//!
//! The naive losses here are deliberate loop-by-loop transcriptions that
//! share nothing with the `losses` module beyond primitive arithmetic: they
//! compute their own softmaxes by direct exponentiation, their own argmaxes,
//! and their own resampling, so a bug in the vectorized path cannot hide in
//! a shared helper.

use alloc::vec;
use alloc::vec::Vec;

use crate::losses::LossError;
use crate::mathf;
use crate::metrics::MetricError;
use crate::model::{FeatureMap, PredictionMap};
use crate::rng::Rng;
use crate::tensor::{LabelMap, Tensor4};

/// Default central-difference step; chosen for unit-scale inputs.
pub const DEFAULT_FD_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyError {
    NonFiniteObjective,
}

impl core::fmt::Display for VerifyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            VerifyError::NonFiniteObjective => write!(f, "objective returned a non-finite value"),
        }
    }
}

/// Component-wise central differences `(f(x+e_k*eps) - f(x-e_k*eps)) / 2eps`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], eps: f64) -> Result<Vec<f64>, VerifyError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + eps;
        let fp = f(&probe);
        probe[k] = x[k] - eps;
        let fm = f(&probe);
        probe[k] = x[k];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(VerifyError::NonFiniteObjective);
        }
        grad.push((fp - fm) / (2.0 * eps));
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Naive loss transcriptions
// ---------------------------------------------------------------------------

/// Softmax by direct exponentiation (no max subtraction); safe on the small
/// logit ranges the campaigns draw.
fn naive_softmax(logits: &[f64]) -> Vec<f64> {
    let mut e: Vec<f64> = logits.iter().map(|&z| mathf::exp(z)).collect();
    let s: f64 = e.iter().sum();
    for v in &mut e {
        *v /= s;
    }
    e
}

/// Per-pixel probabilities, confidence, and argmax label for one image,
/// computed with explicit loops.
fn naive_predict(logits: &Tensor4, image: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<usize>) {
    let (c, plane) = (logits.c, logits.h * logits.w);
    let mut probs = Vec::with_capacity(plane);
    let mut conf = Vec::with_capacity(plane);
    let mut label = Vec::with_capacity(plane);
    for p in 0..plane {
        let z: Vec<f64> = (0..c)
            .map(|ci| logits.data[(image * c + ci) * plane + p])
            .collect();
        let pr = naive_softmax(&z);
        let mut best = 0usize;
        for ci in 1..c {
            if pr[ci] > pr[best] {
                best = ci;
            }
        }
        conf.push(pr[best]);
        label.push(best);
        probs.push(pr);
    }
    (probs, conf, label)
}

/// Literal transcription of the reweighting loss: quadruple loops over
/// images, classes, member pixels, and the pixels of each upsampled block.
pub fn sbu_loss_naive(
    ps_logits: &Tensor4,
    pw_logits: &Tensor4,
    f_s: &Tensor4,
    f_w: &Tensor4,
    tau: f64,
) -> f64 {
    let (b, classes, ih, iw) = (pw_logits.b, pw_logits.c, pw_logits.h, pw_logits.w);
    let (d, fh, fw_dim) = (f_s.c, f_s.h, f_s.w);
    let (fy, fx) = (ih / fh, iw / fw_dim);
    let fplane = fh * fw_dim;
    let mut total = 0.0;
    for i in 0..b {
        let (_, conf_full, label_full) = naive_predict(pw_logits, i);
        let (ps_probs, _, _) = naive_predict(ps_logits, i);

        // Uncertainty and class maps at feature resolution, sampled top-left.
        let mut mask = vec![0u8; fplane];
        let mut class_map = vec![0usize; fplane];
        for y in 0..fh {
            for x in 0..fw_dim {
                let src = (y * fy) * iw + x * fx;
                mask[y * fw_dim + x] = u8::from(conf_full[src] < tau);
                class_map[y * fw_dim + x] = label_full[src];
            }
        }

        // Cosine similarity at every feature location.
        let mut sim = vec![0.0f64; fplane];
        for p in 0..fplane {
            let mut dot = 0.0;
            let mut ns = 0.0;
            let mut nw = 0.0;
            for c in 0..d {
                let a = f_s.data[(i * d + c) * fplane + p];
                let bb = f_w.data[(i * d + c) * fplane + p];
                dot += a * bb;
                ns += a * a;
                nw += bb * bb;
            }
            sim[p] = dot / ((mathf::sqrt(ns) + 1e-8) * (mathf::sqrt(nw) + 1e-8));
        }

        for class in 0..classes {
            // V^c: similarities of this class's uncertain pixels.
            let mut member_pixels = Vec::new();
            for p in 0..fplane {
                if mask[p] == 1 && class_map[p] == class {
                    member_pixels.push(p);
                }
            }
            if member_pixels.is_empty() {
                continue;
            }
            let mut denom = 0.0;
            for &p in &member_pixels {
                denom += mathf::exp(-sim[p]);
            }
            for &p in &member_pixels {
                let weight = mathf::exp(-sim[p]) / denom;
                let (y, x) = (p / fw_dim, p % fw_dim);
                // Each feature pixel covers an fy*fx block at image scale.
                for yy in 0..fy {
                    for xx in 0..fx {
                        let q = (y * fy + yy) * iw + (x * fx + xx);
                        let ce = -mathf::ln(ps_probs[q][label_full[q]]);
                        total += weight * ce;
                    }
                }
            }
        }
    }
    total / b as f64
}

/// Literal transcription of the prototype regulation loss.
pub fn ckr_loss_naive(f_s: &Tensor4, f_w: &Tensor4, pw_logits: &Tensor4) -> f64 {
    let (b, classes, ih, iw) = (pw_logits.b, pw_logits.c, pw_logits.h, pw_logits.w);
    let (d, fh, fw_dim) = (f_s.c, f_s.h, f_s.w);
    let (fy, fx) = (ih / fh, iw / fw_dim);
    let fplane = fh * fw_dim;
    let mut cos_total = 0.0;
    for i in 0..b {
        let (_, conf_full, label_full) = naive_predict(pw_logits, i);
        let mut class_map = vec![0usize; fplane];
        let mut conf_map = vec![0.0f64; fplane];
        for y in 0..fh {
            for x in 0..fw_dim {
                let src = (y * fy) * iw + x * fx;
                class_map[y * fw_dim + x] = label_full[src];
                conf_map[y * fw_dim + x] = conf_full[src];
            }
        }

        // Prototypes per present class.
        let mut weak_proto = vec![None::<Vec<f64>>; classes];
        let mut strong_proto = vec![None::<Vec<f64>>; classes];
        for class in 0..classes {
            let mut members = Vec::new();
            for p in 0..fplane {
                if class_map[p] == class {
                    members.push(p);
                }
            }
            if members.is_empty() {
                continue;
            }
            let mut denom = 0.0;
            for &p in &members {
                denom += mathf::exp(conf_map[p]);
            }
            let mut r = vec![0.0f64; d];
            let mut dd = vec![0.0f64; d];
            for &p in &members {
                let h = mathf::exp(conf_map[p]) / denom;
                for c in 0..d {
                    r[c] += h * f_w.data[(i * d + c) * fplane + p];
                    dd[c] += h * f_s.data[(i * d + c) * fplane + p];
                }
            }
            weak_proto[class] = Some(r);
            strong_proto[class] = Some(dd);
        }

        // Broadcast to pixels and take the per-pixel cosine.
        for p in 0..fplane {
            let class = class_map[p];
            let r = weak_proto[class].as_ref().expect("present class");
            let dd = strong_proto[class].as_ref().expect("present class");
            let mut dot = 0.0;
            let mut nu = 0.0;
            let mut nv = 0.0;
            for c in 0..d {
                dot += dd[c] * r[c];
                nu += dd[c] * dd[c];
                nv += r[c] * r[c];
            }
            cos_total += dot / ((mathf::sqrt(nu) + 1e-8) * (mathf::sqrt(nv) + 1e-8));
        }
    }
    1.0 - cos_total / (b as f64 * fplane as f64)
}

/// Direct set-counting mean IoU: per class `|pred=c AND gt=c| / |pred=c OR
/// gt=c|`, classes absent from both sides excluded from the mean.
pub fn miou_naive(
    pred: &LabelMap,
    gt: &LabelMap,
    classes: usize,
) -> Result<(Vec<Option<f64>>, f64), MetricError> {
    if pred.b != gt.b || pred.h != gt.h || pred.w != gt.w {
        return Err(MetricError::ShapeMismatch);
    }
    for &v in pred.data.iter().chain(&gt.data) {
        if v as usize >= classes {
            return Err(MetricError::ClassOutOfRange);
        }
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut sum = 0.0;
    let mut present = 0usize;
    for class in 0..classes {
        let mut inter = 0u64;
        let mut union = 0u64;
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            let in_p = p as usize == class;
            let in_g = g as usize == class;
            if in_p && in_g {
                inter += 1;
            }
            if in_p || in_g {
                union += 1;
            }
        }
        if union == 0 {
            per_class.push(None);
        } else {
            let iou = inter as f64 / union as f64;
            per_class.push(Some(iou));
            sum += iou;
            present += 1;
        }
    }
    if present == 0 {
        return Err(MetricError::NoClassPresent);
    }
    Ok((per_class, sum / present as f64))
}

// ---------------------------------------------------------------------------
// Randomized campaigns
// ---------------------------------------------------------------------------

/// Everything needed to reconstruct one random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDescriptor {
    pub case: usize,
    pub seed: u64,
    pub batch: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub feat_h: usize,
    pub feat_w: usize,
    pub stride: usize,
    pub tau: f64,
}

/// One comparison row: vectorized value against the oracle value.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub descriptor: CaseDescriptor,
    pub metric: &'static str,
    pub vectorized: f64,
    pub oracle: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub pass: bool,
}

/// Pass rule shared by the campaigns: relative error against the oracle,
/// falling back to absolute error when the oracle value is below 1e-8.
fn judge(vectorized: f64, oracle: f64, tol: f64) -> (f64, f64, bool) {
    let abs = (vectorized - oracle).abs();
    let rel = if oracle.abs() >= 1e-8 {
        abs / oracle.abs()
    } else {
        abs
    };
    (abs, rel, rel <= tol)
}

/// Random loss instance drawn from a case descriptor.
pub struct LossInstance {
    pub descriptor: CaseDescriptor,
    pub p_s: PredictionMap,
    pub p_w: PredictionMap,
    pub f_s: FeatureMap,
    pub f_w: FeatureMap,
}

/// Instance dims bounded by the acceptance campaign sizes: B <= 2, C <= 4,
/// h, w <= 8, D <= 16, stride in {1, 2}.
pub fn random_instance(campaign_seed: u64, case: usize) -> LossInstance {
    random_instance_bounded(campaign_seed, case, 2, 4, 8, 16)
}

pub fn random_instance_bounded(
    campaign_seed: u64,
    case: usize,
    max_b: usize,
    max_c: usize,
    max_hw: usize,
    max_d: usize,
) -> LossInstance {
    let seed = crate::rng::mix(campaign_seed ^ (case as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    let mut rng = Rng::new(seed);
    let batch = 1 + rng.below(max_b);
    let classes = 2 + rng.below(max_c - 1);
    let feature_dim = 1 + rng.below(max_d);
    let feat_h = 1 + rng.below(max_hw);
    let feat_w = 1 + rng.below(max_hw);
    let stride = 1 + rng.below(2);
    let tau = rng.range(0.45, 0.95);
    let (ih, iw) = (feat_h * stride, feat_w * stride);
    let descriptor = CaseDescriptor {
        case,
        seed,
        batch,
        classes,
        feature_dim,
        feat_h,
        feat_w,
        stride,
        tau,
    };
    let logit_scale = 1.5;
    let p_s = PredictionMap::from_logits(Tensor4::from_vec(
        rng.normal_vec(batch * classes * ih * iw, logit_scale),
        batch,
        classes,
        ih,
        iw,
    ));
    let p_w = PredictionMap::from_logits(Tensor4::from_vec(
        rng.normal_vec(batch * classes * ih * iw, logit_scale),
        batch,
        classes,
        ih,
        iw,
    ));
    let f_s = FeatureMap {
        values: Tensor4::from_vec(
            rng.normal_vec(batch * feature_dim * feat_h * feat_w, 1.0),
            batch,
            feature_dim,
            feat_h,
            feat_w,
        ),
        stride,
    };
    let f_w = FeatureMap {
        values: Tensor4::from_vec(
            rng.normal_vec(batch * feature_dim * feat_h * feat_w, 1.0),
            batch,
            feature_dim,
            feat_h,
            feat_w,
        ),
        stride,
    };
    LossInstance {
        descriptor,
        p_s,
        p_w,
        f_s,
        f_w,
    }
}

pub type SbuImpl<'a> = &'a dyn Fn(
    &PredictionMap,
    &PredictionMap,
    &FeatureMap,
    &FeatureMap,
    f64,
) -> Result<f64, LossError>;

pub type CkrImpl<'a> =
    &'a dyn Fn(&FeatureMap, &FeatureMap, &PredictionMap) -> Result<f64, LossError>;

/// Compare an implementation of the reweighting loss against the naive
/// transcription on `cases` seeded random instances.
pub fn sbu_oracle_campaign(seed: u64, cases: usize, tol: f64, imp: SbuImpl) -> Vec<OracleReport> {
    (0..cases)
        .map(|case| {
            let inst = random_instance(seed, case);
            let vectorized = imp(
                &inst.p_s,
                &inst.p_w,
                &inst.f_s,
                &inst.f_w,
                inst.descriptor.tau,
            )
            .expect("sbu impl failed");
            let oracle = sbu_loss_naive(
                &inst.p_s.logits,
                &inst.p_w.logits,
                &inst.f_s.values,
                &inst.f_w.values,
                inst.descriptor.tau,
            );
            let (abs_err, rel_err, pass) = judge(vectorized, oracle, tol);
            OracleReport {
                descriptor: inst.descriptor,
                metric: "sbu_loss",
                vectorized,
                oracle,
                abs_err,
                rel_err,
                pass,
            }
        })
        .collect()
}

/// Same, for the prototype regulation loss.
pub fn ckr_oracle_campaign(seed: u64, cases: usize, tol: f64, imp: CkrImpl) -> Vec<OracleReport> {
    (0..cases)
        .map(|case| {
            let inst = random_instance(seed, case);
            let vectorized = imp(&inst.f_s, &inst.f_w, &inst.p_w).expect("ckr impl failed");
            let oracle = ckr_loss_naive(&inst.f_s.values, &inst.f_w.values, &inst.p_w.logits);
            let (abs_err, rel_err, pass) = judge(vectorized, oracle, tol);
            OracleReport {
                descriptor: inst.descriptor,
                metric: "ckr_loss",
                vectorized,
                oracle,
                abs_err,
                rel_err,
                pass,
            }
        })
        .collect()
}

/// Default campaign binding the production losses.
pub fn run_oracle_campaign(seed: u64, cases: usize, tol: f64) -> Vec<OracleReport> {
    let mut reports = sbu_oracle_campaign(seed, cases, tol, &|ps, pw, fs, fw, tau| {
        crate::losses::sbu_loss(ps, pw, fs, fw, tau)
    });
    reports.extend(ckr_oracle_campaign(seed, cases, tol, &|fs, fw, pw| {
        crate::losses::ckr_loss(fs, fw, pw)
    }));
    reports
}

/// Analytic-gradient vs central-difference comparison for the three losses
/// with a gradient path: consistency and reweighting (w.r.t. strong logits)
/// and regulation (w.r.t. strong features). Runs in 64-bit with a smaller
/// step than [`DEFAULT_FD_EPS`] since round-off allows it.
pub fn run_grad_campaign(seed: u64, cases: usize, tol: f64) -> Vec<OracleReport> {
    let eps = 1e-4;
    // Error floor: components below this magnitude are judged absolutely,
    // matching the oracle rule's spirit at gradient scale.
    let floor = 1e-3;
    let mut reports = Vec::with_capacity(cases * 3);
    for case in 0..cases {
        let inst = grad_instance(seed, case);
        let tau = inst.descriptor.tau;

        // Consistency loss w.r.t. strong logits.
        let analytic = crate::losses::certainty_consistency_loss_grad(&inst.p_s, &inst.p_w, tau)
            .expect("lx grad")
            .1;
        let fd = finite_diff_grad(
            |logits| {
                let p_s = PredictionMap::from_logits(Tensor4::from_vec(
                    logits.to_vec(),
                    inst.p_s.logits.b,
                    inst.p_s.logits.c,
                    inst.p_s.logits.h,
                    inst.p_s.logits.w,
                ));
                crate::losses::certainty_consistency_loss(&p_s, &inst.p_w, tau).expect("lx value")
            },
            &inst.p_s.logits.data,
            eps,
        )
        .expect("finite lx");
        reports.push(grade_grad(
            &inst.descriptor,
            "lx_grad_ps",
            &analytic.data,
            &fd,
            tol,
            floor,
        ));

        // Reweighting loss w.r.t. strong logits.
        let analytic =
            crate::losses::sbu_loss_grad(&inst.p_s, &inst.p_w, &inst.f_s, &inst.f_w, tau)
                .expect("lsu grad")
                .1;
        let fd = finite_diff_grad(
            |logits| {
                let p_s = PredictionMap::from_logits(Tensor4::from_vec(
                    logits.to_vec(),
                    inst.p_s.logits.b,
                    inst.p_s.logits.c,
                    inst.p_s.logits.h,
                    inst.p_s.logits.w,
                ));
                crate::losses::sbu_loss(&p_s, &inst.p_w, &inst.f_s, &inst.f_w, tau)
                    .expect("lsu value")
            },
            &inst.p_s.logits.data,
            eps,
        )
        .expect("finite lsu");
        reports.push(grade_grad(
            &inst.descriptor,
            "lsu_grad_ps",
            &analytic.data,
            &fd,
            tol,
            floor,
        ));

        // Regulation loss w.r.t. strong features.
        let analytic = crate::losses::ckr_loss_grad(&inst.f_s, &inst.f_w, &inst.p_w)
            .expect("lcr grad")
            .1;
        let fd = finite_diff_grad(
            |feat| {
                let f_s = FeatureMap {
                    values: Tensor4::from_vec(
                        feat.to_vec(),
                        inst.f_s.values.b,
                        inst.f_s.values.c,
                        inst.f_s.values.h,
                        inst.f_s.values.w,
                    ),
                    stride: inst.f_s.stride,
                };
                crate::losses::ckr_loss(&f_s, &inst.f_w, &inst.p_w).expect("lcr value")
            },
            &inst.f_s.values.data,
            eps,
        )
        .expect("finite lcr");
        reports.push(grade_grad(
            &inst.descriptor,
            "lcr_grad_fs",
            &analytic.data,
            &fd,
            tol,
            floor,
        ));
    }
    reports
}

/// Small instances for gradient checking; strong prototypes are kept away
/// from zero norm so the cosine stays smooth along the probe.
fn grad_instance(seed: u64, case: usize) -> LossInstance {
    for attempt in 0..32 {
        let inst = random_instance_bounded(seed ^ (attempt as u64) << 48, case, 2, 3, 4, 6);
        let protos =
            crate::losses::class_prototypes(&inst.f_w, &inst.f_s, &inst.p_w).expect("prototypes");
        let mut ok = true;
        for table in &protos.per_image {
            for entry in table.iter().flatten() {
                let ns: f64 = entry.strong.iter().map(|v| v * v).sum::<f64>();
                let nw: f64 = entry.weak.iter().map(|v| v * v).sum::<f64>();
                if mathf::sqrt(ns) < 0.05 || mathf::sqrt(nw) < 0.05 {
                    ok = false;
                }
            }
        }
        if ok {
            return inst;
        }
    }
    random_instance_bounded(seed, case, 2, 3, 4, 6)
}

/// Worst component comparison reported in the oracle-report shape.
fn grade_grad(
    descriptor: &CaseDescriptor,
    metric: &'static str,
    analytic: &[f64],
    fd: &[f64],
    tol: f64,
    floor: f64,
) -> OracleReport {
    let mut worst = 0.0;
    let mut worst_pair = (0.0, 0.0);
    for (&a, &f) in analytic.iter().zip(fd) {
        let err = (a - f).abs() / f.abs().max(floor);
        if err >= worst {
            worst = err;
            worst_pair = (a, f);
        }
    }
    OracleReport {
        descriptor: descriptor.clone(),
        metric,
        vectorized: worst_pair.0,
        oracle: worst_pair.1,
        abs_err: (worst_pair.0 - worst_pair.1).abs(),
        rel_err: worst,
        pass: worst <= tol,
    }
}
