use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::GenerationResult;
use crate::error::{Error, Result};
use crate::model::{DecoderConfig, ReportModel};
use crate::nn::Matrix;

const TRACE_HEIGHT: u32 = 120;
const STRIP_HEIGHT: u32 = 16;

/// Files written for one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionExport {
    /// `token<TAB>alpha_0,…,alpha_{K−1}` per generated token.
    pub weights: PathBuf,
    /// `sample<TAB>signal<TAB>one column per token` with weights expanded to samples.
    pub overlay: PathBuf,
    pub image: PathBuf,
}

/// Expands `alpha` over `len` samples; sample `s` takes bin `⌊s·K/len⌋`.
pub fn upsample_attention(alpha: &[f64], len: usize) -> Vec<f64> {
    let k = alpha.len();
    (0..len).map(|s| alpha[s * k / len]).collect()
}

/// Writes the weight table, the sample-level overlay and an image whose format
/// follows `image_extension` (`png` or `bmp`). LSTM results with `K > 1` only.
pub fn export_attention(
    model: &ReportModel,
    signal: &Matrix,
    result: &GenerationResult,
    dir: &Path,
    image_extension: &str,
) -> Result<AttentionExport> {
    if !matches!(model.config.decoder, DecoderConfig::Lstm(_)) {
        return Err(Error::Unsupported("attention export needs the LSTM decoder's temporal attention".into()));
    }
    let k = model.config.encoder.output_positions;
    if k < 2 {
        return Err(Error::Unsupported("attention export needs K > 1; with K = 1 there is no temporal axis".into()));
    }
    if let Some(row) = result.alphas.iter().find(|a| a.len() != k) {
        return Err(Error::Shape(format!("attention row of length {} for K = {k}", row.len())));
    }
    if result.alphas.len() != result.tokens.len() {
        return Err(Error::Shape(format!("{} attention rows for {} tokens", result.alphas.len(), result.tokens.len())));
    }
    std::fs::create_dir_all(dir)?;
    let stem = sanitize(&result.episode_id);

    let mut weights = String::new();
    for (tok, alpha) in result.tokens.iter().zip(&result.alphas) {
        let cols: Vec<String> = alpha.iter().map(f64::to_string).collect();
        writeln!(weights, "{tok}\t{}", cols.join(",")).expect("string write");
    }
    let weights_path = dir.join(format!("{stem}.attention.tsv"));
    std::fs::write(&weights_path, weights)?;

    let len = signal.cols();
    let expanded: Vec<Vec<f64>> = result.alphas.iter().map(|a| upsample_attention(a, len)).collect();
    let mut overlay = String::from("sample\tsignal");
    for tok in &result.tokens {
        overlay.push('\t');
        overlay.push_str(tok);
    }
    overlay.push('\n');
    for s in 0..len {
        write!(overlay, "{s}\t{}", signal.get(0, s)).expect("string write");
        for e in &expanded {
            write!(overlay, "\t{}", e[s]).expect("string write");
        }
        overlay.push('\n');
    }
    let overlay_path = dir.join(format!("{stem}.overlay.tsv"));
    std::fs::write(&overlay_path, overlay)?;

    let image_path = dir.join(format!("{stem}.{image_extension}"));
    render(signal.row(0), &expanded)
        .save(&image_path)
        .map_err(|e| Error::Unsupported(format!("cannot write {}: {e}", image_path.display())))?;
    Ok(AttentionExport { weights: weights_path, overlay: overlay_path, image: image_path })
}

/// Reads a weight table written by [`export_attention`].
pub fn read_attention_tsv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let (tok, vals) = line.split_once('\t').ok_or_else(|| Error::Shape(format!("line {}: missing tab", i + 1)))?;
            let alpha = vals
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|e| Error::Shape(format!("line {}: {e}", i + 1))))
                .collect::<Result<Vec<f64>>>()?;
            Ok((tok.to_string(), alpha))
        })
        .collect()
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Lead 0 trace over the mean attention heat map, then one heat strip per token.
fn render(trace: &[f64], expanded: &[Vec<f64>]) -> RgbImage {
    let width = trace.len().max(1) as u32;
    let height = TRACE_HEIGHT + STRIP_HEIGHT * expanded.len() as u32;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let heat = |v: f64| {
        let t = v.clamp(0.0, 1.0);
        Rgb([255, (255.0 * (1.0 - t)) as u8, (255.0 * (1.0 - t)) as u8])
    };
    let normalize = |row: &[f64]| {
        let max = row.iter().cloned().fold(0.0, f64::max);
        row.iter().map(|v| if max > 0.0 { v / max } else { 0.0 }).collect::<Vec<_>>()
    };
    if !expanded.is_empty() {
        let mean: Vec<f64> = (0..trace.len()).map(|s| expanded.iter().map(|e| e[s]).sum::<f64>() / expanded.len() as f64).collect();
        for (x, v) in normalize(&mean).into_iter().enumerate() {
            for y in 0..TRACE_HEIGHT {
                img.put_pixel(x as u32, y, heat(0.6 * v));
            }
        }
    }
    let (lo, hi) = trace.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    for (x, &v) in trace.iter().enumerate() {
        let y = ((1.0 - (v - lo) / span) * (TRACE_HEIGHT - 1) as f64).round() as u32;
        img.put_pixel(x as u32, y.min(TRACE_HEIGHT - 1), Rgb([0, 0, 0]));
    }
    for (i, e) in expanded.iter().enumerate() {
        let top = TRACE_HEIGHT + STRIP_HEIGHT * i as u32;
        for (x, v) in normalize(e).into_iter().enumerate() {
            for y in top..top + STRIP_HEIGHT - 1 {
                img.put_pixel(x as u32, y, heat(v));
            }
        }
    }
    img
}
