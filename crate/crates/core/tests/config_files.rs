//! Every shipped run file parses, validates and resolves to a consistent model.
//! Full-scale data is not bundled, so manifests are not required to exist.

use std::path::{Path, PathBuf};

use ecg_report::config::RunConfig;
use ecg_report::datasplit::SplitMode;
use ecg_report::model::DecoderConfig;

fn shipped() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut files = vec![];
    for dir in [root.clone(), root.join("full")] {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "toml") {
                files.push(p);
            }
        }
    }
    files.sort();
    files
}

#[test]
fn shipped_configs_validate() {
    let files = shipped();
    assert!(files.len() >= 19, "found {}", files.len());
    for path in files {
        let cfg = RunConfig::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let decoder = cfg.model.decoder.resolve(&cfg.model.encoder, cfg.data.max_vocab + 4, cfg.data.max_report_len);
        match &decoder {
            DecoderConfig::Lstm(d) => assert_eq!(d.feature_dim, cfg.model.encoder.output_channels()),
            DecoderConfig::Transformer(d) => assert_eq!(d.feature_positions, cfg.model.encoder.output_positions),
        }
        assert_eq!(cfg.pretrain.is_some(), cfg.model.encoder.pretrain_classes.is_some(), "{}", path.display());
    }
}

#[test]
fn full_scale_rows_follow_the_experiment_grid() {
    for path in shipped().into_iter().filter(|p| p.parent().unwrap().ends_with("full")) {
        let cfg = RunConfig::read(&path).unwrap();
        let name = cfg.name.clone();
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), name);
        let lstm = cfg.model.decoder.family() == "lstm";
        assert_eq!(cfg.model.encoder.output_positions, if lstm { 240 } else { 1 }, "{name}");
        assert_eq!(cfg.train.decoder_lr, if lstm { 4e-4 } else { 1e-4 }, "{name}");
        assert_eq!(cfg.train.encoder_lr, 4e-4);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.evaluate.top_k, 1);
        assert_eq!(cfg.model.encoder.depth, if name.contains("resnet18") { 18 } else { 34 });
        assert_eq!(cfg.data.unify_abbreviations, name.ends_with("abbr"), "{name}");
        if name.starts_with("ptbxl") {
            assert_eq!(cfg.model.encoder.input_leads, 12);
            let mode = if name.contains("random") { SplitMode::Random } else { SplitMode::Official };
            assert_eq!(cfg.split.mode, mode);
            assert_eq!(cfg.data.translate, !name.ends_with("raw"));
            assert!(!cfg.data.deduplicate);
        } else {
            assert_eq!(cfg.model.encoder.input_leads, 1);
            assert_eq!(cfg.split.mode, SplitMode::Grouped);
            assert!(cfg.data.deduplicate);
        }
    }
}
