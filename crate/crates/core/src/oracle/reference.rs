//! A loop-level re-implementation of the teacher-forced sequence loss in
//! double-double arithmetic. It shares no code with the tape-based model,
//! and its precision lets central differences resolve gradient components
//! far below what `f64` differencing can.

use tagsum_autodiff::{relative_error, Tape};

use super::dd::Dd;
use crate::corpus::{EncodedPair, BOS, UNK};
use crate::error::Result;
use crate::model::{Mode, ModelConfig, ModelParams, Net, Param};
use crate::training::{sequence_loss, Example, TrainConfig, PROB_FLOOR};

type Arrays = Vec<Vec<Dd>>;

fn to_dd(params: &ModelParams) -> Arrays {
    Param::ALL
        .iter()
        .map(|&p| params.get(p).iter().map(|&x| Dd::from_f64(x)).collect())
        .collect()
}

/// `x · W` for a row vector `x` and row-major `W` with `cols` columns.
fn vecmat(x: &[Dd], w: &[Dd], cols: usize) -> Vec<Dd> {
    let mut out = vec![Dd::ZERO; cols];
    for (i, &xi) in x.iter().enumerate() {
        for (o, &wij) in out.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *o = *o + xi * wij;
        }
    }
    out
}

fn add(a: &[Dd], b: &[Dd]) -> Vec<Dd> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

fn softmax(x: &[Dd]) -> Vec<Dd> {
    let m = x.iter().copied().fold(x[0], Dd::max);
    let e: Vec<Dd> = x.iter().map(|&v| (v - m).exp()).collect();
    let z: Dd = e.iter().copied().sum();
    e.into_iter().map(|v| v / z).collect()
}

struct Ref<'a> {
    c: &'a ModelConfig,
    w: &'a Arrays,
}

impl Ref<'_> {
    fn p(&self, p: Param) -> &[Dd] {
        &self.w[p as usize]
    }

    fn gru(&self, gx: &[Dd], h: &[Dd], u: Param) -> Vec<Dd> {
        let hd = self.c.hidden_dim;
        let gh = vecmat(h, self.p(u), 3 * hd);
        (0..hd)
            .map(|j| {
                let z = (gx[j] + gh[j]).sigmoid();
                let r = (gx[hd + j] + gh[hd + j]).sigmoid();
                let n = (gx[2 * hd + j] + r * gh[2 * hd + j]).tanh();
                n + z * (h[j] - n)
            })
            .collect()
    }

    fn embed(&self, id: usize) -> Vec<Dd> {
        let e = self.c.embed_dim;
        self.p(Param::Embedding)[id * e..(id + 1) * e].to_vec()
    }

    fn direction(&self, ids: &[usize], w: Param, u: Param, b: Param, rev: bool) -> Vec<Vec<Dd>> {
        let hd = self.c.hidden_dim;
        let mut h = vec![Dd::ZERO; hd];
        let mut out = vec![Vec::new(); ids.len()];
        let order: Vec<usize> = if rev {
            (0..ids.len()).rev().collect()
        } else {
            (0..ids.len()).collect()
        };
        for i in order {
            let gx = add(&vecmat(&self.embed(ids[i]), self.p(w), 3 * hd), self.p(b));
            h = self.gru(&gx, &h, u);
            out[i] = h.clone();
        }
        out
    }

    fn loss(
        &self,
        pair: &EncodedPair,
        theta: Option<&[f64]>,
        cov_weight: f64,
        channel: bool,
    ) -> Dd {
        let c = self.c;
        let (v, hd, a) = (c.vocab_size, c.hidden_dim, c.attn_dim);
        let ext = v + pair.oov_list.len();
        let fwd = self.direction(
            &pair.src_ids,
            Param::EncFwdW,
            Param::EncFwdU,
            Param::EncFwdB,
            false,
        );
        let bwd = self.direction(
            &pair.src_ids,
            Param::EncBwdW,
            Param::EncBwdU,
            Param::EncBwdB,
            true,
        );
        let enc: Vec<Vec<Dd>> = fwd
            .iter()
            .zip(&bwd)
            .map(|(f, b)| [f.clone(), b.clone()].concat())
            .collect();
        let features: Vec<Vec<Dd>> = enc
            .iter()
            .map(|h| vecmat(h, self.p(Param::AttnWh), a))
            .collect();
        let len = enc.len();

        let tag = c.mode == Mode::Tag;
        let theta: Vec<Dd> = theta
            .filter(|_| tag)
            .map(|t| t.iter().map(|&x| Dd::from_f64(x)).collect())
            .unwrap_or_else(|| vec![Dd::ZERO; c.topics]);
        let q: Vec<Dd> = if tag {
            let mu = self.p(Param::Mu);
            let logits: Vec<Dd> = (0..v)
                .map(|w| (0..c.topics).map(|k| mu[w * c.topics + k] * theta[k]).sum())
                .collect();
            let mut q = softmax(&logits);
            q.resize(ext, Dd::ZERO);
            q
        } else {
            vec![Dd::ZERO; ext]
        };
        let theta_in = if tag && channel {
            theta
        } else {
            vec![Dd::ZERO; c.topics]
        };
        let open = tag && channel;

        let mut s = fwd[len - 1].clone();
        let mut cov = vec![Dd::ZERO; len];
        let mut prev = BOS;
        let (mut nll, mut cov_total) = (Dd::ZERO, Dd::ZERO);
        let steps = pair.tgt_ids.len() - 1;
        for t in 1..=steps {
            let emb = self.embed(if prev >= v { UNK } else { prev });
            let ws = vecmat(&s, self.p(Param::AttnWs), a);
            let wcov = self.p(Param::AttnWcov)[0];
            let av = self.p(Param::AttnV);
            let scores: Vec<Dd> = (0..len)
                .map(|i| {
                    (0..a)
                        .map(|j| {
                            let mut x = features[i][j] + ws[j];
                            if c.use_coverage {
                                x = x + wcov * cov[i];
                            }
                            av[j] * x.tanh()
                        })
                        .sum()
                })
                .collect();
            let alpha = softmax(&scores);
            let ctx: Vec<Dd> = (0..2 * hd)
                .map(|d| (0..len).map(|i| alpha[i] * enc[i][d]).sum())
                .collect();

            let x = [emb.clone(), ctx.clone()].concat();
            let gx = add(
                &vecmat(&x, self.p(Param::DecW), 3 * hd),
                self.p(Param::DecB),
            );
            s = self.gru(&gx, &s, Param::DecU);

            let out_in = [s.clone(), ctx.clone()].concat();
            let mut gamma = softmax(&add(
                &vecmat(&out_in, self.p(Param::OutW), v),
                self.p(Param::OutB),
            ));
            gamma.resize(ext, Dd::ZERO);
            let mut copy = vec![Dd::ZERO; ext];
            for (i, &id) in pair.src_extended_ids.iter().enumerate() {
                copy[id] = copy[id] + alpha[i];
            }

            let sw_in = [ctx, s.clone(), emb, theta_in.clone()].concat();
            let hidden: Vec<Dd> = add(
                &vecmat(&sw_in, self.p(Param::SwitchW1), c.switch_hidden),
                self.p(Param::SwitchB1),
            )
            .into_iter()
            .map(Dd::tanh)
            .collect();
            let probs = softmax(&add(
                &vecmat(&hidden, self.p(Param::SwitchW2), 3),
                self.p(Param::SwitchB2),
            ));
            let w = if open {
                probs
            } else {
                let z = probs[0] + probs[1];
                vec![probs[0] / z, probs[1] / z, Dd::ZERO]
            };

            let target = pair.tgt_extended_ids[t];
            let p = w[0] * gamma[target] + w[1] * copy[target] + w[2] * q[target];
            nll = nll - p.max(Dd::from_f64(PROB_FLOOR)).ln();
            let step_cov: Dd = alpha.iter().zip(&cov).map(|(&x, &y)| x.min(y)).sum();
            cov_total = cov_total + step_cov;
            cov = add(&cov, &alpha);
            prev = pair.tgt_ids[t];
        }
        let tt = Dd::from_f64(steps as f64);
        let mut loss = nll / tt;
        if c.use_coverage {
            loss = loss + Dd::from_f64(cov_weight) * cov_total / tt;
        }
        loss
    }
}

/// The sequence loss evaluated in double-double arithmetic.
pub fn reference_loss(params: &ModelParams, example: &Example, cfg: &TrainConfig) -> Dd {
    let w = to_dd(params);
    let r = Ref {
        c: params.config(),
        w: &w,
    };
    r.loss(
        &example.pair,
        example.theta.as_ref().map(|t| t.as_slice()),
        cfg.coverage_weight,
        !cfg.disable_topic_channel,
    )
}

#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub param: Param,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct ReferenceCheck {
    /// `|loss_f64 − loss_dd|`.
    pub forward_gap: f64,
    pub groups: Vec<GroupCheck>,
}

impl ReferenceCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Compares the tape gradient of every parameter array with central
/// differences `(f(x + h) − f(x − h)) / 2h` of the double-double loss,
/// element by element, using the same relative error as `grad_check`.
pub fn reference_gradient_check(
    params: &ModelParams,
    example: &Example,
    cfg: &TrainConfig,
    h: f64,
) -> Result<ReferenceCheck> {
    let tape = Tape::new();
    let net = Net::bind(&tape, params);
    let net = if cfg.disable_topic_channel {
        net.close_topic_channel()
    } else {
        net
    };
    let loss = sequence_loss(
        &net,
        &example.pair,
        example.theta.as_ref(),
        cfg.coverage_weight,
    )?;
    tape.backward(&loss.loss)?;

    let mut w = to_dd(params);
    let theta = example.theta.as_ref().map(|t| t.as_slice());
    let channel = !cfg.disable_topic_channel;
    let eval = |w: &Arrays| {
        Ref {
            c: params.config(),
            w,
        }
        .loss(&example.pair, theta, cfg.coverage_weight, channel)
    };
    let forward_gap = (loss.loss.item()? - eval(&w).to_f64()).abs();
    let step = Dd::from_f64(h);
    let two_h = Dd::from_f64(2.0 * h);
    let mut groups = Vec::with_capacity(Param::ALL.len());
    for p in Param::ALL {
        let analytic = tape
            .grad(net.param(p))
            .expect("bound parameter has a gradient");
        let mut worst = GroupCheck {
            param: p,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (i, &a) in analytic.iter().enumerate() {
            let base = w[p as usize][i];
            w[p as usize][i] = base + step;
            let plus = eval(&w);
            w[p as usize][i] = base - step;
            let minus = eval(&w);
            w[p as usize][i] = base;
            let numeric = ((plus - minus) / two_h).to_f64();
            let err = relative_error(a, numeric);
            if err > worst.max_rel_error || i == 0 {
                worst = GroupCheck {
                    param: p,
                    max_rel_error: err,
                    worst_index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
        groups.push(worst);
    }
    Ok(ReferenceCheck {
        forward_gap,
        groups,
    })
}
