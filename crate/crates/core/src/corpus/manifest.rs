use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::{read_signal, Corpus, EcgEpisode, SignalRef, Split};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";

const REQUIRED: [&str; 9] =
    ["episode_id", "group_id", "sampling_rate_hz", "leads", "samples", "signal_path", "rhythm_class", "recorded_at", "report"];

struct Columns {
    idx: [usize; 9],
    split: Option<usize>,
}

/// Loads a manifest. Relative signal paths resolve against the manifest's directory.
/// Signal files are not opened here; see [`read_signal`].
pub fn load_manifest(path: &Path) -> Result<Corpus> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_path(path).map_err(|e| csv_err(e, 1))?;
    let header = reader.headers().map_err(|e| csv_err(e, 1))?.clone();
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or_else(|| Error::Manifest { line: 1, message: format!("missing column {name:?}") })?;
    }
    let cols = Columns { idx, split: find("split") };

    let mut episodes = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let episode = parse_row(&record, &cols, &base).map_err(|message| Error::Manifest { line, message })?;
        if !seen.insert(episode.episode_id.clone()) {
            return Err(Error::DuplicateEpisode(episode.episode_id));
        }
        episodes.push(episode);
    }
    Corpus::new(episodes)
}

fn csv_err(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Manifest { line, message: format!("{other:?}") },
    }
}

fn parse_row(record: &csv::StringRecord, cols: &Columns, base: &Path) -> std::result::Result<EcgEpisode, String> {
    let field = |i: usize| record.get(cols.idx[i]).unwrap_or("");
    let int = |i: usize, name: &str| field(i).trim().parse::<usize>().map_err(|_| format!("{name} {:?} is not a non-negative integer", field(i)));
    let episode_id = field(0).trim().to_string();
    if episode_id.is_empty() {
        return Err("empty episode_id".into());
    }
    let sampling_rate_hz = int(2, "sampling_rate_hz")?;
    let leads = int(3, "leads")?;
    let samples = int(4, "samples")?;
    if sampling_rate_hz == 0 || leads == 0 || samples == 0 {
        return Err("sampling_rate_hz, leads and samples must be positive".into());
    }
    let signal_path = field(5).trim();
    if signal_path.is_empty() {
        return Err("empty signal_path".into());
    }
    let signal_path = PathBuf::from(signal_path);
    let signal_path = if signal_path.is_absolute() { signal_path } else { base.join(signal_path) };
    let rhythm_class = Some(field(6).trim()).filter(|s| !s.is_empty()).map(str::to_string);
    let recorded_at = match field(7).trim() {
        "" => None,
        s => Some(NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("recorded_at {s:?} is not an ISO-8601 date"))?),
    };
    let split = match cols.split.and_then(|i| record.get(i)).map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(Split::parse(s).ok_or_else(|| format!("unknown split {s:?}"))?),
    };
    Ok(EcgEpisode {
        episode_id,
        group_id: field(1).trim().to_string(),
        sampling_rate_hz: u32::try_from(sampling_rate_hz).map_err(|_| "sampling_rate_hz too large".to_string())?,
        leads,
        samples,
        signal: SignalRef::File(signal_path),
        rhythm_class,
        recorded_at,
        report: field(8).to_string(),
        split,
    })
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn plain(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        quote(s)
    } else {
        s.to_string()
    }
}

/// Writes the manifest text for `corpus`. Every episode must reference a signal file;
/// paths under `base` are written relative to it.
pub fn write_manifest(corpus: &Corpus, path: &Path) -> Result<()> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let with_split = corpus.iter().any(|e| e.split.is_some());
    let mut out = String::new();
    out.push_str("episode_id,group_id,sampling_rate_hz,leads,samples,signal_path,rhythm_class,recorded_at,");
    if with_split {
        out.push_str("split,");
    }
    out.push_str("report\n");
    for e in corpus {
        let SignalRef::File(signal) = &e.signal else {
            return Err(Error::Unsupported(format!("episode {:?} has an in-memory signal; use write_corpus", e.episode_id)));
        };
        if e.report.contains(['\n', '\r']) {
            return Err(Error::Manifest { line: 0, message: format!("report of {:?} contains a line break", e.episode_id) });
        }
        let rel = signal.strip_prefix(&base).unwrap_or(signal);
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},",
            plain(&e.episode_id),
            plain(&e.group_id),
            e.sampling_rate_hz,
            e.leads,
            e.samples,
            plain(&rel.to_string_lossy()),
            plain(e.rhythm_class.as_deref().unwrap_or("")),
            e.recorded_at.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default(),
        );
        if with_split {
            out.push_str(e.split.map_or("", Split::as_str));
            out.push(',');
        }
        out.push_str(&quote(&e.report));
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Materializes a corpus under `dir`: one `.f32` file per in-memory signal plus
/// `manifest.csv`. Returns the corpus as it reads back from disk.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<Corpus> {
    let signal_dir = dir.join("signals");
    fs::create_dir_all(&signal_dir)?;
    let mut episodes = Vec::with_capacity(corpus.len());
    for (i, e) in corpus.iter().enumerate() {
        let mut e = e.clone();
        if let SignalRef::Memory(_) = &e.signal {
            let signal = read_signal(&e)?;
            let safe: String = e.episode_id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
            let path = signal_dir.join(format!("{i:06}_{safe}.f32"));
            let mut bytes = Vec::with_capacity(signal.data().len() * 4);
            for v in signal.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::write(&path, bytes)?;
            e.signal = SignalRef::File(path);
        }
        episodes.push(e);
    }
    let on_disk = Corpus::new(episodes)?;
    let manifest = dir.join(MANIFEST_FILE);
    write_manifest(&on_disk, &manifest)?;
    load_manifest(&manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_episode;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        fs::write(&p, text).unwrap();
        p
    }

    const HEADER: &str = "episode_id,group_id,sampling_rate_hz,leads,samples,signal_path,rhythm_class,recorded_at,report\n";

    #[test]
    fn three_rows_load_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{HEADER}E3,p1,100,1,8,a.f32,SR,2020-01-02,\"sinus rhythm, normal\"\nE1,p2,100,1,8,b.f32,,,\"\"\nE2,p1,128,1,8,c.f32,AF,,\"af, \"\"rvr\"\"\"\n"
        );
        let corpus = load_manifest(&write(dir.path(), &text)).unwrap();
        let ids: Vec<_> = corpus.iter().map(|e| e.episode_id.as_str()).collect();
        assert_eq!(ids, ["E3", "E1", "E2"]);
        assert_eq!(corpus.episodes()[0].report, "sinus rhythm, normal");
        assert_eq!(corpus.episodes()[2].report, "af, \"rvr\"");
        assert_eq!(corpus.episodes()[1].rhythm_class, None);
        assert_eq!(corpus.episodes()[0].recorded_at, NaiveDate::from_ymd_opt(2020, 1, 2));
        assert_eq!(corpus.episodes()[0].signal, SignalRef::File(dir.path().join("a.f32")));
    }

    #[test]
    fn duplicate_episode_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("{HEADER}E1,p1,100,1,8,a.f32,SR,,\"x\"\nE1,p2,100,1,8,b.f32,SR,,\"y\"\n");
        let err = load_manifest(&write(dir.path(), &text)).unwrap_err();
        assert!(matches!(err, Error::DuplicateEpisode(ref id) if id == "E1"));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("{HEADER}E1,p1,100,1,8,a.f32,SR,,\"x\"\nE2,p1,abc,1,8,a.f32,SR,,\"x\"\n");
        match load_manifest(&write(dir.path(), &text)).unwrap_err() {
            Error::Manifest { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("sampling_rate_hz"));
            }
            other => panic!("unexpected {other}"),
        }
        let text = format!("{HEADER}E1,p1,100,1,8,a.f32,SR,\"x\"\n");
        assert!(matches!(load_manifest(&write(dir.path(), &text)).unwrap_err(), Error::Manifest { line: 2, .. }));
        let text = format!("{HEADER}E1,p1,100,1,8,a.f32,SR,01/02/2020,\"x\"\n");
        assert!(matches!(load_manifest(&write(dir.path(), &text)).unwrap_err(), Error::Manifest { line: 2, .. }));
    }

    #[test]
    fn missing_signal_surfaces_on_first_read() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("{HEADER}E1,p1,100,1,8,nowhere.f32,SR,,\"x\"\n");
        let corpus = load_manifest(&write(dir.path(), &text)).unwrap();
        let err = read_signal(&corpus.episodes()[0]).unwrap_err();
        assert!(matches!(err, Error::MissingSignal { .. }), "{err}");
    }

    #[test]
    fn read_signal_checks_payload_size_and_finiteness() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f32> = (0..8).map(|i| i as f32 * 0.5).collect();
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.path().join("ok.f32"), &bytes).unwrap();
        fs::write(dir.path().join("short.f32"), &bytes[..28]).unwrap();
        let mut nan = bytes.clone();
        nan[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(dir.path().join("nan.f32"), &nan).unwrap();
        let text = format!("{HEADER}A,p,100,1,8,ok.f32,,,\"\"\nB,p,100,1,8,short.f32,,,\"\"\nC,p,100,1,8,nan.f32,,,\"\"\nD,p,100,2,4,ok.f32,,,\"\"\n");
        let corpus = load_manifest(&write(dir.path(), &text)).unwrap();
        let a = read_signal(&corpus.episodes()[0]).unwrap();
        assert_eq!(a.shape(), (1, 8));
        assert_eq!(a.lead(0), values.as_slice());
        assert!(matches!(read_signal(&corpus.episodes()[1]), Err(Error::Signal { .. })));
        assert!(matches!(read_signal(&corpus.episodes()[2]), Err(Error::Signal { .. })));
        let d = read_signal(&corpus.episodes()[3]).unwrap();
        assert_eq!(d.lead(1), &values[4..]);
    }

    #[test]
    fn write_corpus_round_trips_metadata_and_split_column() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = test_episode("A,1", "g \"x\"", "sinus rhythm, \"quoted\"");
        a.split = Some(Split::Test);
        a.recorded_at = NaiveDate::from_ymd_opt(2021, 5, 6);
        let b = test_episode("B", "g", "");
        let corpus = Corpus::new(vec![a, b]).unwrap();
        let back = write_corpus(&corpus, dir.path()).unwrap();
        for (x, y) in corpus.iter().zip(&back) {
            assert_eq!(x.episode_id, y.episode_id);
            assert_eq!(x.group_id, y.group_id);
            assert_eq!(x.report, y.report);
            assert_eq!(x.split, y.split);
            assert_eq!(x.recorded_at, y.recorded_at);
            assert_eq!(read_signal(x).unwrap(), read_signal(y).unwrap());
        }
    }
}
