//! Encoder, attention, decoder step and the generation/copy/topic mixture.
//!
//! Parameters live in [`ModelParams`] as plain arrays. A [`Net`] binds them
//! to a tape for one forward pass: as gradient leaves for training, or as
//! constants for inference (nothing is recorded then).

mod checkpoint;
mod net;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::NUM_SPECIALS;
use crate::error::{Error, Result};
use crate::topic_model::TopicModel;

pub use checkpoint::CHECKPOINT_FORMAT_VERSION;
pub use net::{coverage_loss, DecoderState, Net, Source, Step};

/// Logit given to special tokens in the topic channel.
pub const SPECIAL_MU: f64 = -1e9;
const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Generation and copying only.
    Pg,
    /// Generation, copying and the topic channel.
    Tag,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pg => "pg",
            Mode::Tag => "tag",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pg" => Ok(Mode::Pg),
            "tag" => Ok(Mode::Tag),
            _ => Err(Error::invalid(format!(
                "unknown mode `{s}` (expected pg or tag)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Fixed vocabulary size, specials included.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub topics: usize,
    pub switch_hidden: usize,
    pub mode: Mode,
    pub use_coverage: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, topics: usize, mode: Mode, use_coverage: bool) -> Self {
        Self {
            vocab_size,
            embed_dim: 64,
            hidden_dim: 64,
            attn_dim: 64,
            topics,
            switch_hidden: 64,
            mode,
            use_coverage,
        }
    }

    pub fn with_dims(mut self, embed: usize, hidden: usize, attn: usize) -> Self {
        self.embed_dim = embed;
        self.hidden_dim = hidden;
        self.attn_dim = attn;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= NUM_SPECIALS {
            return Err(Error::invalid("model vocabulary has no ordinary tokens"));
        }
        let dims = [
            self.embed_dim,
            self.hidden_dim,
            self.attn_dim,
            self.topics,
            self.switch_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid("model dimensions and K must be at least 1"));
        }
        Ok(())
    }

    /// Width of the switch-net input `[c; s; emb(prev); θ]`.
    pub fn switch_input(&self) -> usize {
        3 * self.hidden_dim + self.embed_dim + self.topics
    }
}

/// Every trainable array, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Embedding,
    EncFwdW,
    EncFwdU,
    EncFwdB,
    EncBwdW,
    EncBwdU,
    EncBwdB,
    DecW,
    DecU,
    DecB,
    AttnWh,
    AttnWs,
    AttnV,
    AttnWcov,
    OutW,
    OutB,
    SwitchW1,
    SwitchB1,
    SwitchW2,
    SwitchB2,
    Mu,
}

impl Param {
    pub const ALL: [Param; 21] = [
        Param::Embedding,
        Param::EncFwdW,
        Param::EncFwdU,
        Param::EncFwdB,
        Param::EncBwdW,
        Param::EncBwdU,
        Param::EncBwdB,
        Param::DecW,
        Param::DecU,
        Param::DecB,
        Param::AttnWh,
        Param::AttnWs,
        Param::AttnV,
        Param::AttnWcov,
        Param::OutW,
        Param::OutB,
        Param::SwitchW1,
        Param::SwitchB1,
        Param::SwitchW2,
        Param::SwitchB2,
        Param::Mu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Embedding => "embedding",
            Param::EncFwdW => "enc_fwd.w",
            Param::EncFwdU => "enc_fwd.u",
            Param::EncFwdB => "enc_fwd.b",
            Param::EncBwdW => "enc_bwd.w",
            Param::EncBwdU => "enc_bwd.u",
            Param::EncBwdB => "enc_bwd.b",
            Param::DecW => "dec.w",
            Param::DecU => "dec.u",
            Param::DecB => "dec.b",
            Param::AttnWh => "attn.w_h",
            Param::AttnWs => "attn.w_s",
            Param::AttnV => "attn.v",
            Param::AttnWcov => "attn.w_cov",
            Param::OutW => "out.w",
            Param::OutB => "out.b",
            Param::SwitchW1 => "switch.w1",
            Param::SwitchB1 => "switch.b1",
            Param::SwitchW2 => "switch.w2",
            Param::SwitchB2 => "switch.b2",
            Param::Mu => "mu",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn shape(self, c: &ModelConfig) -> [usize; 2] {
        let (v, e, h, a, k, s) = (
            c.vocab_size,
            c.embed_dim,
            c.hidden_dim,
            c.attn_dim,
            c.topics,
            c.switch_hidden,
        );
        match self {
            Param::Embedding => [v, e],
            Param::EncFwdW | Param::EncBwdW => [e, 3 * h],
            Param::EncFwdU | Param::EncBwdU | Param::DecU => [h, 3 * h],
            Param::EncFwdB | Param::EncBwdB | Param::DecB => [1, 3 * h],
            Param::DecW => [e + 2 * h, 3 * h],
            Param::AttnWh => [2 * h, a],
            Param::AttnWs => [h, a],
            Param::AttnV => [a, 1],
            Param::AttnWcov => [1, 1],
            Param::OutW => [3 * h, v],
            Param::OutB => [1, v],
            Param::SwitchW1 => [c.switch_input(), s],
            Param::SwitchB1 => [1, s],
            Param::SwitchW2 => [s, 3],
            Param::SwitchB2 => [1, 3],
            Param::Mu => [v, k],
        }
    }

    fn is_bias(self) -> bool {
        matches!(
            self,
            Param::EncFwdB
                | Param::EncBwdB
                | Param::DecB
                | Param::OutB
                | Param::SwitchB1
                | Param::SwitchB2
        )
    }
}

/// All trainable arrays, row-major, indexed by [`Param`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    arrays: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let arrays = Param::ALL
            .iter()
            .map(|p| {
                let [r, c] = p.shape(&config);
                vec![0.0; r * c]
            })
            .collect();
        Ok(Self { config, arrays })
    }

    /// Uniform `±0.1` weights, zero biases, and `μ` from
    /// [`init_mu_from_beta`] (or zeros on ordinary rows without a topic
    /// model). `μ` never consumes randomness, so the other arrays depend on
    /// the seed alone.
    pub fn init(config: ModelConfig, seed: u64, topic_model: Option<&TopicModel>) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in Param::ALL {
            if p == Param::Mu || p.is_bias() {
                continue;
            }
            for x in params.get_mut(p) {
                *x = rng.random_range(-INIT_RANGE..INIT_RANGE);
            }
        }
        let mu = match topic_model {
            Some(tm) => init_mu_from_beta(tm, config.vocab_size)?,
            None => {
                let mut mu = vec![0.0; config.vocab_size * config.topics];
                mu[..NUM_SPECIALS * config.topics].fill(SPECIAL_MU);
                mu
            }
        };
        params.set(Param::Mu, mu)?;
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, p: Param) -> &[f64] {
        &self.arrays[p as usize]
    }

    pub fn get_mut(&mut self, p: Param) -> &mut [f64] {
        &mut self.arrays[p as usize]
    }

    pub fn set(&mut self, p: Param, values: Vec<f64>) -> Result<()> {
        let [r, c] = p.shape(&self.config);
        if values.len() != r * c {
            return Err(Error::Dimension {
                what: p.name(),
                expected: r * c,
                actual: values.len(),
            });
        }
        self.arrays[p as usize] = values;
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.arrays.iter().map(Vec::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.arrays.iter().flatten().all(|x| x.is_finite())
    }

    /// Copies of the model with a different mode or coverage flag, sharing
    /// every weight.
    pub fn with_mode(&self, mode: Mode, use_coverage: bool) -> Self {
        let mut out = self.clone();
        out.config.mode = mode;
        out.config.use_coverage = use_coverage;
        out
    }
}

/// `μ_{v,k} = ln β_{k,v-4}` on ordinary rows and a large negative logit on
/// special rows.
pub fn init_mu_from_beta(topic_model: &TopicModel, vocab_size: usize) -> Result<Vec<f64>> {
    if topic_model.vocab_size() + NUM_SPECIALS != vocab_size {
        return Err(Error::Dimension {
            what: "topic model vocabulary (plus specials)",
            expected: vocab_size,
            actual: topic_model.vocab_size() + NUM_SPECIALS,
        });
    }
    let k = topic_model.topics();
    let mut mu = vec![SPECIAL_MU; vocab_size * k];
    for topic in 0..k {
        for (w, &b) in topic_model.beta_row(topic).iter().enumerate() {
            mu[(w + NUM_SPECIALS) * k + topic] = b.ln();
        }
    }
    Ok(mu)
}

#[cfg(test)]
mod tests;
