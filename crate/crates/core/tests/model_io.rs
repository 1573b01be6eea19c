use ecg_report::decoders::{LstmConfig, TransformerConfig};
use ecg_report::encoder::{EncoderConfig, SignalNormalization};
use ecg_report::evalgen::{self, export_attention, read_attention_tsv};
use ecg_report::model::{DecoderConfig, ModelConfig, ReportModel};
use ecg_report::nn::{Graph, Matrix};
use ecg_report::Error;

fn encoder(k: usize) -> EncoderConfig {
    EncoderConfig {
        depth: 18,
        input_leads: 1,
        stem_kernel: 5,
        stage_kernels: [3, 3, 3, 3],
        stage_widths: [4, 4, 8, 8],
        output_positions: k,
        pretrain_classes: None,
    }
}

fn vocabulary() -> Vec<String> {
    ["sinus", "rhythm", "normal", "ecg"].map(String::from).to_vec()
}

fn lstm_model(k: usize, seed: u64) -> ReportModel {
    let config = ModelConfig {
        encoder: encoder(k),
        decoder: DecoderConfig::Lstm(LstmConfig { feature_dim: 8, embed_dim: 6, hidden_dim: 6, attention_dim: 5, vocab_size: 8, dropout: 0.0 }),
        normalization: SignalNormalization::Episode,
        signal_stats: None,
        vocabulary: vocabulary(),
    };
    ReportModel::new(config, seed).unwrap()
}

fn transformer_model(seed: u64) -> ReportModel {
    let config = ModelConfig {
        encoder: encoder(1),
        decoder: DecoderConfig::Transformer(TransformerConfig {
            feature_dim: 8,
            model_dim: 8,
            layers: 2,
            heads: 2,
            ff_dim: 16,
            vocab_size: 8,
            feature_positions: 1,
            max_tokens: 12,
            dropout: 0.0,
        }),
        normalization: SignalNormalization::None,
        signal_stats: None,
        vocabulary: vocabulary(),
    };
    ReportModel::new(config, seed).unwrap()
}

fn signal(len: usize) -> Matrix {
    Matrix::from_fn(1, len, |_, s| (s as f64 * 0.21).sin() + 0.3 * (s as f64 * 0.05).cos())
}

#[test]
fn checkpoint_round_trip_preserves_parameters_and_generation() {
    let dir = tempfile::tempdir().unwrap();
    for model in [lstm_model(4, 1), transformer_model(1)] {
        let path = dir.path().join(format!("{}.ckpt", model.config.decoder.family()));
        model.save(&path).unwrap();
        let loaded = ReportModel::load(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        for ((_, a), (_, b)) in model.store.iter().zip(loaded.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
        let x = signal(256);
        let a = evalgen::generate(&model, "e", &x, 12, 3, 5).unwrap();
        let b = evalgen::generate(&loaded, "e", &x, 12, 3, 5).unwrap();
        assert_eq!(a.tokens, b.tokens);
    }
}

#[test]
fn missing_checkpoint_is_a_checkpoint_error() {
    let err = ReportModel::load(std::path::Path::new("/nonexistent/model.ckpt")).err().unwrap();
    assert!(matches!(err, Error::Checkpoint { .. }), "{err}");
}

#[test]
fn top_k_sampling_is_reproducible_per_seed() {
    let model = lstm_model(4, 2);
    let x = signal(256);
    let runs: Vec<_> = (0..3).map(|_| evalgen::generate(&model, "e", &x, 10, 4, 11).unwrap().tokens).collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn forced_end_token_yields_empty_report() {
    for mut model in [lstm_model(4, 3), transformer_model(3)] {
        let end = model.vocabulary.end_id();
        let name = match model.config.decoder {
            DecoderConfig::Lstm(_) => "lstm.output_bias",
            DecoderConfig::Transformer(_) => "transformer.output.bias",
        };
        let id = model.store.iter().find(|(_, p)| p.name == name).map(|(id, _)| id).unwrap();
        model.store.get_mut(id).set(0, end, 1e6);
        let r = evalgen::generate(&model, "e", &signal(256), 20, 1, 0).unwrap();
        assert!(r.tokens.is_empty());
        assert_eq!(r.text(), "");
    }
}

#[test]
fn generation_respects_the_length_cap() {
    let mut model = lstm_model(4, 4);
    let id = model.store.iter().find(|(_, p)| p.name == "lstm.output_bias").map(|(id, _)| id).unwrap();
    model.store.get_mut(id).set(0, 0, 1e6);
    // Report budget 7 includes the start and end markers.
    let r = evalgen::generate(&model, "e", &signal(256), 7, 1, 0).unwrap();
    assert_eq!(r.tokens, vec!["sinus"; 5]);
}

#[test]
fn encoder_pools_to_240_positions() {
    let model = lstm_model(240, 5);
    let mut g = Graph::new(&model.store);
    let x = g.input(signal(7680));
    let f = model.encoder.forward(&mut g, x).unwrap();
    assert_eq!(g.shape(f), (8, 240));
    let r = evalgen::generate(&model, "e", &signal(7680), 6, 1, 0).unwrap();
    assert!(r.alphas.iter().all(|a| a.len() == 240 && (a.iter().sum::<f64>() - 1.0).abs() < 1e-9));
}

#[test]
fn attention_tsv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let model = lstm_model(6, 6);
    let x = signal(384);
    let r = evalgen::generate(&model, "ep1", &x, 8, 1, 0).unwrap();
    assert!(!r.tokens.is_empty());
    let export = export_attention(&model, &x, &r, dir.path(), "png").unwrap();
    let back = read_attention_tsv(&export.weights).unwrap();
    assert_eq!(back.len(), r.tokens.len());
    for ((tok, weights), (want_tok, want)) in back.iter().zip(r.tokens.iter().zip(&r.alphas)) {
        assert_eq!(tok, want_tok);
        assert_eq!(weights.len(), 6);
        for (a, b) in weights.iter().zip(want) {
            assert!((a - b).abs() < 1e-6);
        }
    }
    assert!(export.image.is_file() && export.overlay.is_file());
}

#[test]
fn attention_export_rejects_single_position_models() {
    let dir = tempfile::tempdir().unwrap();
    let model = lstm_model(1, 7);
    let x = signal(256);
    let r = evalgen::generate(&model, "e", &x, 6, 1, 0).unwrap();
    assert!(export_attention(&model, &x, &r, dir.path(), "png").is_err());
}
