use proptest::prelude::*;
use tagsum_autodiff::{Tape, Tensor};

use super::*;
use crate::corpus::{encode_pair, DocumentPair, EncodedPair, Vocabulary, PAD};
use crate::topic_model::TopicVector;

fn vocab() -> Vocabulary {
    Vocabulary::from_words(&["a", "b", "c", "d", "e", "f"]).unwrap()
}

fn tiny(mode: Mode, cov: bool) -> ModelConfig {
    ModelConfig {
        switch_hidden: 5,
        ..ModelConfig::new(10, 2, mode, cov).with_dims(4, 3, 4)
    }
}

fn pair(article: &str, summary: &str) -> EncodedPair {
    encode_pair(&DocumentPair::from_text("t", article, summary), &vocab())
}

fn theta() -> TopicVector {
    TopicVector(vec![0.7, 0.3])
}

fn row(t: &Tensor) -> Vec<f64> {
    t.to_vec()
}

#[test]
fn encode_shape_and_zero_fixpoint() {
    let tape = Tape::new();
    let params = ModelParams::init(tiny(Mode::Pg, false), 1, None).unwrap();
    let net = Net::constant(&tape, &params);
    assert_eq!(net.encode(&[4, 5, 6]).unwrap().shape(), &[3, 6]);
    assert!(net.encode(&[]).is_err());

    let zero = ModelParams::zeros(tiny(Mode::Pg, false)).unwrap();
    let net = Net::constant(&tape, &zero);
    let enc = net.encode(&[PAD, PAD]).unwrap();
    assert!(enc.values().iter().all(|&x| x == 0.0));
    assert!(tape.is_empty());
}

#[test]
fn encode_is_order_sensitive() {
    let tape = Tape::new();
    let params = ModelParams::init(tiny(Mode::Pg, false), 2, None).unwrap();
    let net = Net::constant(&tape, &params);
    let a = net.encode(&[4, 5, 6]).unwrap();
    let b = net.encode(&[6, 5, 4]).unwrap();
    assert_ne!(a.values(), b.values());
}

#[test]
fn attention_singleton_and_symmetry() {
    let tape = Tape::new();
    let params = ModelParams::init(tiny(Mode::Pg, true), 3, None).unwrap();
    let net = Net::constant(&tape, &params);
    let h = Tensor::new(&[1, 6], vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap();
    let features = tape.matmul(&h, net.param(Param::AttnWh)).unwrap();
    let s = Tensor::row(vec![0.3, 0.1, -0.5]);
    let (alpha, c) = net
        .attention(&h, &features, &s, &Tensor::zeros(&[1, 1]))
        .unwrap();
    assert_eq!(alpha.values(), &[1.0]);
    assert_eq!(c.values(), h.values());

    let rows = Tensor::new(&[3, 6], h.values().repeat(3)).unwrap();
    let features = tape.matmul(&rows, net.param(Param::AttnWh)).unwrap();
    let (alpha, _) = net
        .attention(&rows, &features, &s, &Tensor::zeros(&[1, 3]))
        .unwrap();
    for a in alpha.values() {
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }
}

/// Direct loop evaluation of the attention scores and context.
fn attention_oracle(
    params: &ModelParams,
    enc: &[Vec<f64>],
    s: &[f64],
    cov: &[f64],
    use_cov: bool,
) -> (Vec<f64>, Vec<f64>) {
    let c = params.config();
    let (h2, a) = (2 * c.hidden_dim, c.attn_dim);
    let wh = params.get(Param::AttnWh);
    let ws = params.get(Param::AttnWs);
    let v = params.get(Param::AttnV);
    let wcov = params.get(Param::AttnWcov)[0];
    let scores: Vec<f64> = enc
        .iter()
        .enumerate()
        .map(|(i, hi)| {
            (0..a)
                .map(|j| {
                    let mut x: f64 = (0..h2).map(|d| hi[d] * wh[d * a + j]).sum();
                    x += (0..s.len()).map(|d| s[d] * ws[d * a + j]).sum::<f64>();
                    if use_cov {
                        x += wcov * cov[i];
                    }
                    v[j] * x.tanh()
                })
                .sum()
        })
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = scores.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = ex.iter().sum();
    let alpha: Vec<f64> = ex.iter().map(|e| e / z).collect();
    let ctx = (0..h2)
        .map(|d| enc.iter().zip(&alpha).map(|(hi, w)| w * hi[d]).sum())
        .collect();
    (alpha, ctx)
}

#[test]
fn attention_matches_loop_oracle() {
    for (seed, use_cov) in [(4, false), (5, true)] {
        let tape = Tape::new();
        let params = ModelParams::init(tiny(Mode::Pg, use_cov), seed, None).unwrap();
        let net = Net::constant(&tape, &params);
        let enc = net.encode(&[4, 7, 5, 9]).unwrap();
        let features = tape.matmul(&enc, net.param(Param::AttnWh)).unwrap();
        let s = Tensor::row(vec![0.2, -0.4, 0.9]);
        let cov = Tensor::row(vec![0.0, 0.5, 1.2, 0.3]);
        let (alpha, c) = net.attention(&enc, &features, &s, &cov).unwrap();
        let rows: Vec<Vec<f64>> = enc.values().chunks(6).map(<[f64]>::to_vec).collect();
        let (oa, oc) = attention_oracle(&params, &rows, s.values(), cov.values(), use_cov);
        for (x, y) in alpha.values().iter().zip(&oa) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in c.values().iter().zip(&oc) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn switch_net_examples() {
    let tape = Tape::new();
    let zero = ModelParams::zeros(tiny(Mode::Tag, false)).unwrap();
    let net = Net::constant(&tape, &zero);
    let (c, s, e, th) = (
        Tensor::row(vec![0.3; 6]),
        Tensor::row(vec![0.1; 3]),
        Tensor::row(vec![0.2; 4]),
        Tensor::row(vec![0.5; 2]),
    );
    for p in net.switch_net(&c, &s, &e, &th).unwrap().values() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let mut p = zero.clone();
    p.set(Param::SwitchB2, vec![2f64.ln(), 0.0, 0.0]).unwrap();
    let net = Net::constant(&tape, &p);
    let w = net.switch_net(&c, &s, &e, &th).unwrap();
    for (a, b) in w.values().iter().zip([0.5, 0.25, 0.25]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn topic_distribution_examples() {
    let tape = Tape::new();
    let cfg = ModelConfig {
        switch_hidden: 2,
        ..ModelConfig::new(5, 1, Mode::Tag, false).with_dims(2, 2, 2)
    };
    let params = ModelParams::init(cfg, 0, None).unwrap();
    let net = Net::constant(&tape, &params);
    let q = net.topic_distribution(&Tensor::row(vec![1.0])).unwrap();
    assert_eq!(row(&q), vec![0.0, 0.0, 0.0, 0.0, 1.0]);

    let cfg = ModelConfig::new(8, 1, Mode::Tag, false).with_dims(2, 2, 2);
    let mut params = ModelParams::init(cfg, 0, None).unwrap();
    let mu = [SPECIAL_MU; 4]
        .into_iter()
        .chain([0.3, -1.0, 2.0, 0.9])
        .collect();
    params.set(Param::Mu, mu).unwrap();
    let q = Net::constant(&tape, &params)
        .topic_distribution(&Tensor::row(vec![1.0]))
        .unwrap();
    let mut order: Vec<usize> = (4..8).collect();
    order.sort_by(|&a, &b| q.values()[b].total_cmp(&q.values()[a]));
    assert_eq!(order, vec![6, 7, 4, 5]);
}

fn beta_model() -> TopicModel {
    let beta = vec![
        0.4, 0.3, 0.1, 0.1, 0.05, 0.05, //
        0.05, 0.05, 0.1, 0.2, 0.25, 0.35,
    ];
    TopicModel::from_beta(2, 6, 0.1, 0.01, beta).unwrap()
}

#[test]
fn mu_from_beta_reproduces_beta() {
    let tm = beta_model();
    let cfg = tiny(Mode::Tag, false);
    let params = ModelParams::init(cfg, 0, Some(&tm)).unwrap();
    let tape = Tape::new();
    let net = Net::constant(&tape, &params);
    for k in 0..2 {
        let mut e = vec![0.0; 2];
        e[k] = 1.0;
        let q = net.topic_distribution(&Tensor::row(e)).unwrap();
        assert!(q.values()[..4].iter().all(|&x| x == 0.0));
        for (a, b) in q.values()[4..].iter().zip(tm.beta_row(k)) {
            assert!((a - b).abs() < 1e-12);
        }
        // exp(μ) normalized per topic
        let mu = params.get(Param::Mu);
        let col: Vec<f64> = (4..10).map(|v| mu[v * 2 + k].exp()).collect();
        let z: f64 = col.iter().sum();
        for (a, b) in col.iter().zip(tm.beta_row(k)) {
            assert!((a / z - b).abs() < 1e-12);
        }
    }
    let uniform = TopicModel::from_beta(2, 6, 0.1, 0.01, vec![1.0 / 6.0; 12]).unwrap();
    let params = ModelParams::init(cfg, 0, Some(&uniform)).unwrap();
    let q = Net::constant(&tape, &params)
        .topic_distribution(&Tensor::row(vec![0.9, 0.1]))
        .unwrap();
    for x in &q.values()[4..] {
        assert!((x - 1.0 / 6.0).abs() < 1e-12);
    }
    assert!(init_mu_from_beta(&tm, 11).is_err());
}

#[test]
fn init_does_not_depend_on_topic_model() {
    let cfg = tiny(Mode::Tag, false);
    let a = ModelParams::init(cfg, 9, Some(&beta_model())).unwrap();
    let b = ModelParams::init(cfg, 9, None).unwrap();
    for p in Param::ALL.into_iter().filter(|&p| p != Param::Mu) {
        assert_eq!(a.get(p), b.get(p), "{}", p.name());
    }
}

#[test]
fn coverage_loss_examples() {
    let tape = Tape::new();
    let a = Tensor::row(vec![0.5, 0.5]);
    let zero = coverage_loss(&tape, &a, &Tensor::zeros(&[1, 2])).unwrap();
    assert_eq!(zero.item().unwrap(), 0.0);
    assert_eq!(coverage_loss(&tape, &a, &a).unwrap().item().unwrap(), 1.0);
}

fn forced_switch(cfg: ModelConfig, seed: u64, logits: [f64; 3]) -> ModelParams {
    let mut p = ModelParams::init(cfg, seed, Some(&beta_model())).unwrap();
    p.set(Param::SwitchW2, vec![0.0; cfg.switch_hidden * 3])
        .unwrap();
    p.set(Param::SwitchB2, logits.to_vec()).unwrap();
    p
}

#[test]
fn generation_only_switch_gives_gamma() {
    let cfg = tiny(Mode::Tag, false);
    let params = forced_switch(cfg, 6, [0.0, -1e4, -1e4]);
    let tape = Tape::new();
    let net = Net::constant(&tape, &params);
    let src = pair("a b zzz", "a");
    let prep = net.prepare(&src, Some(&theta())).unwrap();
    let state = net.initial_state(&prep);
    let step = net.decode_step(&prep, &state).unwrap();
    assert_eq!(step.switch.values(), &[1.0, 0.0, 0.0]);
    // γ recomputed from the new state and context
    let c = tape.matmul(&step.alpha, &prep.enc).unwrap();
    let inp = tape.concat(&[&step.s, &c], 1).unwrap();
    let logits = tape
        .add(
            &tape.matmul(&inp, net.param(Param::OutW)).unwrap(),
            net.param(Param::OutB),
        )
        .unwrap();
    let gamma = tape.softmax(&logits, 1).unwrap();
    assert_eq!(step.dist.numel(), 11);
    for (a, b) in step.dist.values()[..10].iter().zip(gamma.values()) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(step.dist.values()[10], 0.0);
}

#[test]
fn copy_only_switch_scatters_attention() {
    // hand scatter of a fixed α over [a, b, a]
    let tape = Tape::new();
    let alpha = Tensor::row(vec![0.2, 0.5, 0.3]);
    let copy = tape.scatter_add(&alpha, &[4, 5, 4], 10).unwrap();
    assert!((copy.values()[4] - 0.5).abs() < 1e-15);
    assert!((copy.values()[5] - 0.5).abs() < 1e-15);

    // with v = 0 attention is uniform: p(a) = 2/3, p(b) = 1/3
    let cfg = tiny(Mode::Tag, false);
    let mut params = forced_switch(cfg, 7, [-1e4, 0.0, -1e4]);
    params.set(Param::AttnV, vec![0.0; 4]).unwrap();
    let net = Net::constant(&tape, &params);
    let prep = net.prepare(&pair("a b a", "b"), Some(&theta())).unwrap();
    let step = net.decode_step(&prep, &net.initial_state(&prep)).unwrap();
    let d = step.dist.values();
    assert!((d[4] - 2.0 / 3.0).abs() < 1e-15);
    assert!((d[5] - 1.0 / 3.0).abs() < 1e-15);
    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn tag_requires_theta() {
    let tape = Tape::new();
    let params = ModelParams::init(tiny(Mode::Tag, false), 1, None).unwrap();
    let net = Net::constant(&tape, &params);
    assert!(net.prepare(&pair("a b", "a"), None).is_err());
    let wrong = TopicVector(vec![1.0]);
    assert!(net.prepare(&pair("a b", "a"), Some(&wrong)).is_err());
    let pg = params.with_mode(Mode::Pg, false);
    assert!(Net::constant(&tape, &pg)
        .prepare(&pair("a b", "a"), None)
        .is_ok());
}

fn run_steps(
    net: &Net,
    src: &EncodedPair,
    th: Option<&TopicVector>,
    tokens: &[usize],
) -> Vec<Step> {
    let prep = net.prepare(src, th).unwrap();
    let mut state = net.initial_state(&prep);
    let mut out = Vec::new();
    for &tok in tokens {
        let step = net.decode_step(&prep, &state).unwrap();
        state = step.next_state(tok);
        out.push(step);
    }
    out
}

#[test]
fn closed_topic_channel_is_pg_bit_for_bit() {
    for cov in [false, true] {
        let params = ModelParams::init(tiny(Mode::Tag, cov), 11, Some(&beta_model())).unwrap();
        let tape = Tape::new();
        let src = pair("a b zzz c yyy a", "a zzz");
        let tag = Net::constant(&tape, &params).close_topic_channel();
        let pg_params = params.with_mode(Mode::Pg, cov);
        let pg = Net::constant(&tape, &pg_params);
        let a = run_steps(&tag, &src, Some(&theta()), &[4, 10, 11, 3]);
        let b = run_steps(&pg, &src, None, &[4, 10, 11, 3]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.dist.values(), y.dist.values());
            assert_eq!(x.switch.values(), y.switch.values());
        }
    }
}

#[test]
fn checkpoint_round_trip_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let params = ModelParams::init(tiny(Mode::Tag, true), 3, Some(&beta_model())).unwrap();
    let path = params.save(dir.path(), "epoch_0001").unwrap();
    assert_eq!(ModelParams::load(&path).unwrap(), params);
    let text = std::fs::read_to_string(&path).unwrap();
    for key in [
        "\"E\"",
        "\"H\"",
        "\"A\"",
        "\"K\"",
        "\"V\"",
        "\"mode\": \"tag\"",
        "\"offset\"",
    ] {
        assert!(text.contains(key), "{key}");
    }
    std::fs::write(
        &path,
        text.replace("\"format_version\": 1", "\"format_version\": 7"),
    )
    .unwrap();
    assert!(matches!(
        ModelParams::load(&path),
        Err(Error::Version { found: 7, .. })
    ));
}

#[test]
fn mode_parsing() {
    assert_eq!("TAG".parse::<Mode>().unwrap(), Mode::Tag);
    assert_eq!("pg".parse::<Mode>().unwrap(), Mode::Pg);
    assert!("x".parse::<Mode>().is_err());
    assert_eq!(Mode::Tag.to_string(), "tag");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decode_steps_are_normalized(
        seed in 0u64..10_000,
        tag in any::<bool>(),
        cov in any::<bool>(),
        src in proptest::collection::vec(0usize..9, 1..7),
        steps in 1usize..5,
    ) {
        let words = ["a", "b", "c", "d", "e", "f", "q1", "q2", "q3"];
        let article: Vec<&str> = src.iter().map(|&i| words[i]).collect();
        let mode = if tag { Mode::Tag } else { Mode::Pg };
        let params = ModelParams::init(tiny(mode, cov), seed, Some(&beta_model())).unwrap();
        let tape = Tape::new();
        let net = Net::constant(&tape, &params);
        let enc = pair(&article.join(" "), "a");
        let th = TopicVector(vec![0.25, 0.75]);
        let prep = net.prepare(&enc, Some(&th)).unwrap();
        let mut state = net.initial_state(&prep);
        for t in 1..=steps {
            let step = net.decode_step(&prep, &state).unwrap();
            let d = step.dist.values();
            prop_assert_eq!(d.len(), 10 + enc.oov_list.len());
            prop_assert!(d.iter().all(|&p| p >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let a = step.alpha.values();
            prop_assert!(a.iter().all(|&p| p >= 0.0));
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let w = step.switch.values();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if !tag {
                prop_assert_eq!(w[2], 0.0);
            }
            // copy mass equals w_copy; OOV slots carry only copy mass
            let copy = tape.scatter_add(&step.alpha, &enc.src_extended_ids, d.len()).unwrap();
            let copy_mass: f64 = copy.values().iter().map(|c| c * w[1]).sum();
            prop_assert!((copy_mass - w[1]).abs() < 1e-12);
            for (slot, (&p, &c)) in d.iter().zip(copy.values()).enumerate().skip(10) {
                prop_assert!((p - w[1] * c).abs() < 1e-15, "slot {}", slot);
            }
            let cov_sum: f64 = step.coverage.values().iter().sum();
            prop_assert!((cov_sum - t as f64).abs() < 1e-9);
            let cl = step.coverage_loss.item().unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&cl));
            state = step.next_state((seed as usize + t) % d.len());
        }
        prop_assert!(tape.is_empty());
    }
}
