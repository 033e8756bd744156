use tagsum_autodiff::{Tape, Tensor};

use super::{Mode, ModelConfig, ModelParams, Param};
use crate::corpus::{EncodedPair, BOS, UNK};
use crate::error::{Error, Result};
use crate::topic_model::TopicVector;

/// Model arrays bound to one tape.
pub struct Net<'t> {
    tape: &'t Tape,
    config: ModelConfig,
    w: Vec<Tensor>,
    topic_channel: bool,
}

/// Per-document quantities computed once before decoding.
pub struct Source {
    /// `L × 2H` encoder states.
    pub enc: Tensor,
    /// `L × A` precomputed `W_h h_i`.
    features: Tensor,
    s0: Tensor,
    /// `θ*` as fed to the switch net (zeros when the topic channel is off).
    theta_in: Tensor,
    /// Topic channel over the extended vocabulary (TAG only).
    q_ext: Option<Tensor>,
    ext_ids: Vec<usize>,
    ext_size: usize,
}

impl Source {
    pub fn len(&self) -> usize {
        self.ext_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ext_ids.is_empty()
    }

    /// `V + U`.
    pub fn extended_size(&self) -> usize {
        self.ext_size
    }

    pub fn topic_distribution(&self) -> Option<&Tensor> {
        self.q_ext.as_ref()
    }
}

#[derive(Clone)]
pub struct DecoderState {
    /// `1 × H`.
    pub s: Tensor,
    /// `1 × L` running sum of attention.
    pub coverage: Tensor,
    /// Extended id of the previous output.
    pub prev_token: usize,
}

pub struct Step {
    /// `1 × (V + U)`.
    pub dist: Tensor,
    /// `1 × H` new decoder state.
    pub s: Tensor,
    /// Coverage including this step's attention.
    pub coverage: Tensor,
    /// `1 × L`.
    pub alpha: Tensor,
    /// `1 × 3`: `(w_gen, w_copy, w_topic)`.
    pub switch: Tensor,
    /// `Σ_i min(α_i, coverage_i)` against the coverage before this step.
    pub coverage_loss: Tensor,
}

/// `Σ_i min(α_i, coverage_i)`.
pub fn coverage_loss(tape: &Tape, alpha: &Tensor, coverage: &Tensor) -> Result<Tensor> {
    Ok(tape.sum(&tape.minimum(alpha, coverage)?)?)
}

fn to_tensor(config: &ModelConfig, p: Param, values: &[f64]) -> Tensor {
    Tensor::new(&p.shape(config), values.to_vec()).expect("parameter shape is consistent")
}

impl<'t> Net<'t> {
    /// Every array as a gradient leaf on `tape`.
    pub fn bind(tape: &'t Tape, params: &ModelParams) -> Self {
        let c = *params.config();
        let w = Param::ALL
            .iter()
            .map(|&p| tape.leaf(to_tensor(&c, p, params.get(p))))
            .collect();
        Self::from_tensors(tape, c, w)
    }

    /// Every array as a constant; forward passes record nothing.
    pub fn constant(tape: &'t Tape, params: &ModelParams) -> Self {
        let c = *params.config();
        let w = Param::ALL
            .iter()
            .map(|&p| to_tensor(&c, p, params.get(p)))
            .collect();
        Self::from_tensors(tape, c, w)
    }

    /// Constants everywhere except `which`, which is replaced by `value`.
    pub fn with_override(
        tape: &'t Tape,
        params: &ModelParams,
        which: Param,
        value: Tensor,
    ) -> Self {
        let mut net = Self::constant(tape, params);
        net.w[which as usize] = value;
        net
    }

    pub fn from_tensors(tape: &'t Tape, config: ModelConfig, w: Vec<Tensor>) -> Self {
        assert_eq!(w.len(), Param::ALL.len());
        Self {
            tape,
            config,
            w,
            topic_channel: true,
        }
    }

    /// In TAG mode: zero the switch net's `θ*` input and force
    /// `w_topic = 0`, renormalizing the other two weights. The result is
    /// PG arithmetic with a `0 · q` term added.
    pub fn close_topic_channel(mut self) -> Self {
        self.topic_channel = false;
        self
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param(&self, p: Param) -> &Tensor {
        &self.w[p as usize]
    }

    fn gru(&self, gx: &Tensor, h: &Tensor, u: Param) -> Result<Tensor> {
        let t = self.tape;
        let hd = self.config.hidden_dim;
        let gh = t.matmul(h, self.param(u))?;
        let gate = |i: usize, src: &Tensor| t.slice(src, 1, i * hd, (i + 1) * hd);
        let z = t.sigmoid(&t.add(&gate(0, gx)?, &gate(0, &gh)?)?)?;
        let r = t.sigmoid(&t.add(&gate(1, gx)?, &gate(1, &gh)?)?)?;
        let n = t.tanh(&t.add(&gate(2, gx)?, &t.mul(&r, &gate(2, &gh)?)?)?)?;
        // (1 - z) n + z h
        Ok(t.add(&n, &t.mul(&z, &t.sub(h, &n)?)?)?)
    }

    fn run_direction(&self, xw: &Tensor, u: Param, reverse: bool) -> Result<Vec<Tensor>> {
        let t = self.tape;
        let len = xw.shape()[0];
        let mut h = Tensor::zeros(&[1, self.config.hidden_dim]);
        let mut states = vec![None; len];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..len).rev())
        } else {
            Box::new(0..len)
        };
        for i in order {
            let gx = t.slice(xw, 0, i, i + 1)?;
            h = self.gru(&gx, &h, u)?;
            states[i] = Some(h.clone());
        }
        Ok(states
            .into_iter()
            .map(|s| s.expect("every position visited"))
            .collect())
    }

    /// Bidirectional GRU over vocabulary ids; `L × 2H`.
    pub fn encode(&self, src_ids: &[usize]) -> Result<Tensor> {
        self.encode_with_state(src_ids).map(|(enc, _)| enc)
    }

    fn encode_with_state(&self, src_ids: &[usize]) -> Result<(Tensor, Tensor)> {
        if src_ids.is_empty() {
            return Err(Error::invalid("cannot encode an empty source"));
        }
        let t = self.tape;
        let emb = t.embedding(self.param(Param::Embedding), src_ids)?;
        let xw_f = t.add_row(
            &t.matmul(&emb, self.param(Param::EncFwdW))?,
            self.param(Param::EncFwdB),
        )?;
        let xw_b = t.add_row(
            &t.matmul(&emb, self.param(Param::EncBwdW))?,
            self.param(Param::EncBwdB),
        )?;
        let fwd = self.run_direction(&xw_f, Param::EncFwdU, false)?;
        let bwd = self.run_direction(&xw_b, Param::EncBwdU, true)?;
        let s0 = fwd.last().expect("non-empty").clone();
        let f_refs: Vec<&Tensor> = fwd.iter().collect();
        let b_refs: Vec<&Tensor> = bwd.iter().collect();
        let enc = t.concat(&[&t.stack(&f_refs)?, &t.stack(&b_refs)?], 1)?;
        Ok((enc, s0))
    }

    /// `α = softmax_i(vᵀ tanh(W_h h_i + W_s s [+ w_cov coverage_i]))` and
    /// `c = Σ α_i h_i`. `features` is `enc · W_h`.
    pub fn attention(
        &self,
        enc: &Tensor,
        features: &Tensor,
        s: &Tensor,
        coverage: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let t = self.tape;
        let len = enc.shape()[0];
        let mut pre = t.add_row(features, &t.matmul(s, self.param(Param::AttnWs))?)?;
        if self.config.use_coverage {
            let col = t.reshape(coverage, &[len, 1])?;
            let cov = t.matmul(&col, self.param(Param::AttnWcov))?;
            let ones = Tensor::filled(&[1, self.config.attn_dim], 1.0);
            pre = t.add(&pre, &t.matmul(&cov, &ones)?)?;
        }
        let scores = t.matmul(&t.tanh(&pre)?, self.param(Param::AttnV))?;
        let alpha = t.softmax(&t.reshape(&scores, &[1, len])?, 1)?;
        let context = t.matmul(&alpha, enc)?;
        Ok((alpha, context))
    }

    /// Softmax over three logits of a one-hidden-layer tanh net on
    /// `[c; s; prev_emb; θ]`.
    pub fn switch_net(
        &self,
        c: &Tensor,
        s: &Tensor,
        prev_emb: &Tensor,
        theta: &Tensor,
    ) -> Result<Tensor> {
        let t = self.tape;
        let input = t.concat(&[c, s, prev_emb, theta], 1)?;
        let hidden = t.tanh(&t.add(
            &t.matmul(&input, self.param(Param::SwitchW1))?,
            self.param(Param::SwitchB1),
        )?)?;
        let logits = t.add(
            &t.matmul(&hidden, self.param(Param::SwitchW2))?,
            self.param(Param::SwitchB2),
        )?;
        Ok(t.softmax(&logits, 1)?)
    }

    /// `q = softmax_v(μ_v · θ)` over the fixed vocabulary, `1 × V`.
    pub fn topic_distribution(&self, theta: &Tensor) -> Result<Tensor> {
        let t = self.tape;
        let k = self.config.topics;
        let col = t.reshape(theta, &[k, 1])?;
        let logits = t.matmul(self.param(Param::Mu), &col)?;
        Ok(t.softmax(&t.reshape(&logits, &[1, self.config.vocab_size])?, 1)?)
    }

    fn theta_tensor(&self, theta: &TopicVector) -> Result<Tensor> {
        if theta.len() != self.config.topics {
            return Err(Error::Dimension {
                what: "topic vector length",
                expected: self.config.topics,
                actual: theta.len(),
            });
        }
        Ok(Tensor::row(theta.as_slice().to_vec()))
    }

    /// Encodes the source and precomputes everything that does not change
    /// across decoder steps. `θ*` is required in TAG mode and ignored in PG.
    pub fn prepare(&self, src: &EncodedPair, theta: Option<&TopicVector>) -> Result<Source> {
        let t = self.tape;
        let v = self.config.vocab_size;
        let (enc, s0) = self.encode_with_state(&src.src_ids)?;
        let features = t.matmul(&enc, self.param(Param::AttnWh))?;
        let ext_size = v + src.oov_list.len();
        let zeros_theta = Tensor::zeros(&[1, self.config.topics]);
        let (theta_in, q_ext) = match self.config.mode {
            Mode::Pg => (zeros_theta, None),
            Mode::Tag => {
                let theta =
                    theta.ok_or_else(|| Error::invalid("TAG mode requires a topic vector"))?;
                let theta = self.theta_tensor(theta)?;
                let q = self.extend(&self.topic_distribution(&theta)?, ext_size)?;
                let theta_in = if self.topic_channel {
                    theta
                } else {
                    zeros_theta
                };
                (theta_in, Some(q))
            }
        };
        if let Some(&bad) = src.src_extended_ids.iter().find(|&&i| i >= ext_size) {
            return Err(Error::invalid(format!(
                "extended source id {bad} outside V + U = {ext_size}"
            )));
        }
        Ok(Source {
            enc,
            features,
            s0,
            theta_in,
            q_ext,
            ext_ids: src.src_extended_ids.clone(),
            ext_size,
        })
    }

    fn extend(&self, x: &Tensor, ext_size: usize) -> Result<Tensor> {
        let v = self.config.vocab_size;
        if ext_size == v {
            return Ok(x.clone());
        }
        let pad = Tensor::zeros(&[1, ext_size - v]);
        Ok(self.tape.concat(&[x, &pad], 1)?)
    }

    pub fn initial_state(&self, src: &Source) -> DecoderState {
        DecoderState {
            s: src.s0.clone(),
            coverage: Tensor::zeros(&[1, src.len()]),
            prev_token: BOS,
        }
    }

    /// One decoder step: attention from the previous state, GRU update,
    /// then the mixture of generation, copying and (TAG) topic channel.
    pub fn decode_step(&self, src: &Source, state: &DecoderState) -> Result<Step> {
        let t = self.tape;
        let v = self.config.vocab_size;
        let prev = if state.prev_token >= v {
            UNK
        } else {
            state.prev_token
        };
        let prev_emb = t.embedding(self.param(Param::Embedding), &[prev])?;

        let (alpha, c) = self.attention(&src.enc, &src.features, &state.s, &state.coverage)?;
        let x = t.concat(&[&prev_emb, &c], 1)?;
        let gx = t.add(
            &t.matmul(&x, self.param(Param::DecW))?,
            self.param(Param::DecB),
        )?;
        let s = self.gru(&gx, &state.s, Param::DecU)?;

        let out_in = t.concat(&[&s, &c], 1)?;
        let logits = t.add(
            &t.matmul(&out_in, self.param(Param::OutW))?,
            self.param(Param::OutB),
        )?;
        let gamma = self.extend(&t.softmax(&logits, 1)?, src.ext_size)?;
        let copy = t.scatter_add(&alpha, &src.ext_ids, src.ext_size)?;

        let probs = self.switch_net(&c, &s, &prev_emb, &src.theta_in)?;
        let open = self.config.mode == Mode::Tag && self.topic_channel;
        let switch = if open {
            probs
        } else {
            let pair = t.slice(&probs, 1, 0, 2)?;
            let norm = t.scale(&pair, &t.recip(&t.sum(&pair)?)?)?;
            t.concat(&[&norm, &Tensor::zeros(&[1, 1])], 1)?
        };
        let weight = |i: usize| t.slice(&switch, 1, i, i + 1);
        let mut dist = t.add(
            &t.scale(&gamma, &weight(0)?)?,
            &t.scale(&copy, &weight(1)?)?,
        )?;
        if let Some(q) = &src.q_ext {
            dist = t.add(&dist, &t.scale(q, &weight(2)?)?)?;
        }

        let cov_loss = coverage_loss(t, &alpha, &state.coverage)?;
        let coverage = t.add(&state.coverage, &alpha)?;
        Ok(Step {
            dist,
            s,
            coverage,
            alpha,
            switch,
            coverage_loss: cov_loss,
        })
    }
}

impl Step {
    /// The state for the next step, having emitted (or been fed) `token`.
    pub fn next_state(&self, token: usize) -> DecoderState {
        DecoderState {
            s: self.s.clone(),
            coverage: self.coverage.clone(),
            prev_token: token,
        }
    }
}
