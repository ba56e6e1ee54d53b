//! Corpus data model: utterance records, the speaker registry, transcript
//! normalization, manifest files, and the per-utterance feature store.
//!
//! Manifest lines are tab-separated `key=value` pairs after a leading
//! utterance id:
//!
//! ```text
//! utt001\tspeaker=spk_a\tlang=mr\taudio=wav/utt001.wav\tsr=16000\tdur=2.43\ttext=some words
//! ```
//!
//! The feature store keeps one directory per utterance with fixed file names
//! (`vq.idx`, `aux.f32`, `spk.f32`, `align.ctm`, `hyp.txt`). Binary files are
//! little-endian with a 16-byte header: magic(4), version(4), rows(4), cols(4).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate utterance id {utt_id}")]
    DuplicateUttId { utt_id: String },
    #[error("unknown speaker {speaker_id} (utterance {utt_id})")]
    UnknownSpeaker { speaker_id: String, utt_id: String },
    #[error("speaker {speaker_id} registered for {registered} but utterance {utt_id} says {got}")]
    LanguageMismatch {
        speaker_id: String,
        registered: String,
        got: String,
        utt_id: String,
    },
    #[error("digit outside braces at character {position}")]
    DigitOutsideBraces { position: usize },
    #[error("unbalanced braces at character {position}")]
    UnbalancedBraces { position: usize },
    #[error("{path}: bad feature file: {reason}")]
    BadFeatureFile { path: String, reason: String },
    #[error("registry: {0}")]
    BadRegistry(String),
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One audio+transcript record. `transcript` is already normalized: no
/// digits, no braces, single ASCII spaces between words.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utt_id: String,
    pub speaker_id: String,
    pub language_id: String,
    pub audio_ref: PathBuf,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub transcript: String,
}

impl Utterance {
    /// Duration/sample-rate consistency: the stated duration must match the
    /// waveform length within one frame hop.
    pub fn duration_consistent(&self, n_samples: usize, hop_s: f64) -> bool {
        let actual = n_samples as f64 / self.sample_rate as f64;
        (self.duration_s - actual).abs() <= hop_s
    }
}

/// Registered speakers and their languages. Every speaker belongs to exactly
/// one language; a language may have any number of speakers (at least one).
#[derive(Debug, Clone, Default)]
pub struct SpeakerRegistry {
    entries: BTreeMap<String, (String, Option<String>)>,
}

impl SpeakerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        speaker_id: &str,
        language_id: &str,
        gender: Option<&str>,
    ) -> Result<(), CorpusError> {
        if self.entries.contains_key(speaker_id) {
            return Err(CorpusError::BadRegistry(format!(
                "duplicate speaker {speaker_id}"
            )));
        }
        self.entries.insert(
            speaker_id.to_string(),
            (language_id.to_string(), gender.map(str::to_string)),
        );
        Ok(())
    }

    pub fn language_of(&self, speaker_id: &str) -> Option<&str> {
        self.entries.get(speaker_id).map(|(l, _)| l.as_str())
    }

    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn speakers_of_language<'a>(&'a self, language_id: &'a str) -> Vec<&'a str> {
        self.entries
            .iter()
            .filter(|(_, (l, _))| l == language_id)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn languages(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.entries.values().map(|(l, _)| l).collect();
        set.into_iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `speakers.tsv`: one `speaker_id\tlanguage_id[\tgender]` per line.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut reg = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let spk = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| {
                CorpusError::BadRegistry(format!("line {}: missing speaker id", i + 1))
            })?;
            let lang = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| {
                CorpusError::BadRegistry(format!("line {}: missing language id", i + 1))
            })?;
            reg.insert(spk, lang, parts.next())?;
        }
        Ok(reg)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for (spk, (lang, gender)) in &self.entries {
            match gender {
                Some(g) => writeln!(out, "{spk}\t{lang}\t{g}").unwrap(),
                None => writeln!(out, "{spk}\t{lang}").unwrap(),
            }
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    /// Derive a registry from manifest records, requiring each speaker to
    /// carry one consistent language.
    pub fn from_utterances(utts: &[Utterance]) -> Result<Self, CorpusError> {
        let mut reg = Self::new();
        for u in utts {
            match reg.language_of(&u.speaker_id) {
                None => reg.insert(&u.speaker_id, &u.language_id, None)?,
                Some(l) if l == u.language_id => {}
                Some(l) => {
                    return Err(CorpusError::LanguageMismatch {
                        speaker_id: u.speaker_id.clone(),
                        registered: l.to_string(),
                        got: u.language_id.clone(),
                        utt_id: u.utt_id.clone(),
                    })
                }
            }
        }
        Ok(reg)
    }
}

/// Strip brace groups, validate, and collapse whitespace.
///
/// Every `{...}` group is replaced by its inner content (digit pronunciations
/// arrive braced in raw transcripts). All Unicode whitespace runs collapse to
/// a single ASCII space and the ends are trimmed. Any digit anywhere and any
/// stray brace is an error; positions are character offsets into the raw
/// input. Idempotent on its own output.
pub fn normalize_transcript(raw: &str) -> Result<String, CorpusError> {
    let mut out = String::with_capacity(raw.len());
    let mut depth = 0usize;
    let mut open_pos = 0usize;
    for (pos, ch) in raw.chars().enumerate() {
        match ch {
            '{' => {
                if depth > 0 {
                    return Err(CorpusError::UnbalancedBraces { position: pos });
                }
                depth = 1;
                open_pos = pos;
            }
            '}' => {
                if depth == 0 {
                    return Err(CorpusError::UnbalancedBraces { position: pos });
                }
                depth = 0;
            }
            c if c.is_ascii_digit() || c.is_numeric() => {
                return Err(CorpusError::DigitOutsideBraces { position: pos });
            }
            c => out.push(c),
        }
    }
    if depth > 0 {
        return Err(CorpusError::UnbalancedBraces { position: open_pos });
    }
    let collapsed: Vec<&str> = out.split_whitespace().collect();
    Ok(collapsed.join(" "))
}

const MANIFEST_KEYS: [&str; 6] = ["speaker", "lang", "audio", "sr", "dur", "text"];

fn parse_manifest_line(line_no: usize, line: &str) -> Result<Utterance, CorpusError> {
    let bad = |reason: &str| CorpusError::MalformedRecord {
        line: line_no,
        reason: reason.to_string(),
    };
    let mut fields = line.split('\t');
    let utt_id = fields.next().filter(|s| !s.is_empty()).ok_or_else(|| bad("empty id"))?;
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for field in fields {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| bad(&format!("field without '=': {field:?}")))?;
        if kv.insert(k, v).is_some() {
            return Err(bad(&format!("duplicate key {k}")));
        }
    }
    for key in MANIFEST_KEYS {
        if !kv.contains_key(key) {
            return Err(bad(&format!("missing key {key}")));
        }
    }
    let sr: u32 = kv["sr"]
        .parse()
        .map_err(|_| bad(&format!("bad sr {:?}", kv["sr"])))?;
    if sr == 0 {
        return Err(bad("sr must be positive"));
    }
    let dur: f64 = kv["dur"]
        .parse()
        .map_err(|_| bad(&format!("bad dur {:?}", kv["dur"])))?;
    if !(dur > 0.0) {
        return Err(bad("dur must be > 0"));
    }
    let text = kv["text"];
    if text.chars().any(|c| c.is_ascii_digit() || c.is_numeric()) {
        return Err(bad("transcript contains digits"));
    }
    if text.contains('{') || text.contains('}') {
        return Err(bad("transcript contains braces"));
    }
    Ok(Utterance {
        utt_id: utt_id.to_string(),
        speaker_id: kv["speaker"].to_string(),
        language_id: kv["lang"].to_string(),
        audio_ref: PathBuf::from(kv["audio"]),
        sample_rate: sr,
        duration_s: dur,
        transcript: text.to_string(),
    })
}

/// Parse and validate a manifest. Order is preserved. When a registry is
/// given, every speaker must be registered with a matching language.
pub fn load_manifest(
    path: &Path,
    registry: Option<&SpeakerRegistry>,
) -> Result<Vec<Utterance>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let utt = parse_manifest_line(i + 1, line)?;
        if !seen.insert(utt.utt_id.clone()) {
            return Err(CorpusError::DuplicateUttId { utt_id: utt.utt_id });
        }
        if let Some(reg) = registry {
            match reg.language_of(&utt.speaker_id) {
                None => {
                    return Err(CorpusError::UnknownSpeaker {
                        speaker_id: utt.speaker_id,
                        utt_id: utt.utt_id,
                    })
                }
                Some(l) if l != utt.language_id => {
                    return Err(CorpusError::LanguageMismatch {
                        speaker_id: utt.speaker_id.clone(),
                        registered: l.to_string(),
                        got: utt.language_id,
                        utt_id: utt.utt_id,
                    })
                }
                _ => {}
            }
        }
        out.push(utt);
    }
    Ok(out)
}

pub fn manifest_line(u: &Utterance) -> String {
    format!(
        "{}\tspeaker={}\tlang={}\taudio={}\tsr={}\tdur={}\ttext={}",
        u.utt_id,
        u.speaker_id,
        u.language_id,
        u.audio_ref.display(),
        u.sample_rate,
        u.duration_s,
        u.transcript
    )
}

pub fn save_manifest(path: &Path, utts: &[Utterance]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for u in utts {
        out.push_str(&manifest_line(u));
        out.push('\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Feature store

pub const MAGIC_VQ: &[u8; 4] = b"VQIX";
pub const MAGIC_AUX: &[u8; 4] = b"AUXF";
pub const MAGIC_SPK: &[u8; 4] = b"SPKE";
const STORE_VERSION: u32 = 1;

/// Directory-per-utterance persistence for extracted features.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    root: PathBuf,
}

impl FeatureStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn utt_dir(&self, utt_id: &str) -> PathBuf {
        self.root.join(utt_id)
    }

    pub fn file(&self, utt_id: &str, name: &str) -> PathBuf {
        self.utt_dir(utt_id).join(name)
    }

    fn write_raw(
        &self,
        utt_id: &str,
        name: &str,
        magic: &[u8; 4],
        rows: u32,
        cols: u32,
        payload: &[u8],
    ) -> Result<(), CorpusError> {
        let dir = self.utt_dir(utt_id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut out = Vec::with_capacity(16 + payload.len());
        out.extend_from_slice(magic);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        out.extend_from_slice(payload);
        let path = dir.join(name);
        fs::write(&path, out).map_err(|e| io_err(&path, e))
    }

    fn read_raw(
        &self,
        utt_id: &str,
        name: &str,
        magic: &[u8; 4],
        elem_size: usize,
    ) -> Result<(u32, u32, Vec<u8>), CorpusError> {
        let path = self.file(utt_id, name);
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let bad = |reason: &str| CorpusError::BadFeatureFile {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        if bytes.len() < 16 {
            return Err(bad("shorter than header"));
        }
        if &bytes[0..4] != magic {
            return Err(bad(&format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != STORE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let expect = 16 + rows as usize * cols as usize * elem_size;
        if bytes.len() != expect {
            return Err(bad(&format!("size {} != expected {expect}", bytes.len())));
        }
        Ok((rows, cols, bytes[16..].to_vec()))
    }

    /// `vq.idx`: T x G int32.
    pub fn write_vq(&self, utt_id: &str, indices: &[Vec<u32>]) -> Result<(), CorpusError> {
        let rows = indices.len() as u32;
        let cols = indices.first().map_or(0, Vec::len) as u32;
        let mut payload = Vec::with_capacity(indices.len() * cols as usize * 4);
        for row in indices {
            for &v in row {
                payload.extend_from_slice(&(v as i32).to_le_bytes());
            }
        }
        self.write_raw(utt_id, "vq.idx", MAGIC_VQ, rows, cols, &payload)
    }

    pub fn read_vq(&self, utt_id: &str) -> Result<Vec<Vec<u32>>, CorpusError> {
        let (rows, cols, payload) = self.read_raw(utt_id, "vq.idx", MAGIC_VQ, 4)?;
        let mut it = payload.chunks_exact(4);
        let mut out = Vec::with_capacity(rows as usize);
        for _ in 0..rows {
            let mut row = Vec::with_capacity(cols as usize);
            for _ in 0..cols {
                let v = i32::from_le_bytes(it.next().unwrap().try_into().unwrap());
                if v < 0 {
                    return Err(CorpusError::BadFeatureFile {
                        path: self.file(utt_id, "vq.idx").display().to_string(),
                        reason: format!("negative index {v}"),
                    });
                }
                row.push(v as u32);
            }
            out.push(row);
        }
        Ok(out)
    }

    /// `aux.f32`: T x 3 float32.
    pub fn write_aux(&self, utt_id: &str, rows: &[[f64; 3]]) -> Result<(), CorpusError> {
        let mut payload = Vec::with_capacity(rows.len() * 12);
        for row in rows {
            for &v in row {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        self.write_raw(utt_id, "aux.f32", MAGIC_AUX, rows.len() as u32, 3, &payload)
    }

    pub fn read_aux(&self, utt_id: &str) -> Result<Vec<[f64; 3]>, CorpusError> {
        let (rows, cols, payload) = self.read_raw(utt_id, "aux.f32", MAGIC_AUX, 4)?;
        if cols != 3 {
            return Err(CorpusError::BadFeatureFile {
                path: self.file(utt_id, "aux.f32").display().to_string(),
                reason: format!("expected 3 columns, got {cols}"),
            });
        }
        let mut it = payload.chunks_exact(4);
        let mut out = Vec::with_capacity(rows as usize);
        for _ in 0..rows {
            let mut row = [0.0f64; 3];
            for slot in &mut row {
                *slot = f32::from_le_bytes(it.next().unwrap().try_into().unwrap()) as f64;
            }
            out.push(row);
        }
        Ok(out)
    }

    /// `spk.f32`: 1 x D float32 per-utterance speaker embedding.
    pub fn write_spk(&self, utt_id: &str, embedding: &[f64]) -> Result<(), CorpusError> {
        let mut payload = Vec::with_capacity(embedding.len() * 4);
        for &v in embedding {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.write_raw(utt_id, "spk.f32", MAGIC_SPK, 1, embedding.len() as u32, &payload)
    }

    pub fn read_spk(&self, utt_id: &str) -> Result<Vec<f64>, CorpusError> {
        let (_rows, _cols, payload) = self.read_raw(utt_id, "spk.f32", MAGIC_SPK, 4)?;
        Ok(payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    pub fn write_text(&self, utt_id: &str, name: &str, text: &str) -> Result<(), CorpusError> {
        let dir = self.utt_dir(utt_id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    pub fn read_text(&self, utt_id: &str, name: &str) -> Result<String, CorpusError> {
        let path = self.file(utt_id, name);
        fs::read_to_string(&path).map_err(|e| io_err(&path, e))
    }

    /// External ASR hypothesis, one line.
    pub fn read_hyp(&self, utt_id: &str) -> Result<String, CorpusError> {
        Ok(self.read_text(utt_id, "hyp.txt")?.trim().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str) -> Utterance {
        Utterance {
            utt_id: id.to_string(),
            speaker_id: "spk_a".to_string(),
            language_id: "mr".to_string(),
            audio_ref: PathBuf::from(format!("wav/{id}.wav")),
            sample_rate: 16000,
            duration_s: 2.5,
            transcript: "some words".to_string(),
        }
    }

    #[test]
    fn empty_manifest_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        fs::write(&path, "").unwrap();
        assert!(load_manifest(&path, None).unwrap().is_empty());
    }

    #[test]
    fn manifest_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let utts = vec![utt("u1"), utt("u2")];
        save_manifest(&path, &utts).unwrap();
        let loaded = load_manifest(&path, None).unwrap();
        assert_eq!(loaded, utts);
        // byte-level: saving the loaded list reproduces the file
        let first = fs::read(&path).unwrap();
        save_manifest(&path, &loaded).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }

    #[test]
    fn missing_audio_key_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        fs::write(
            &path,
            "u1\tspeaker=a\tlang=mr\tsr=16000\tdur=1.0\ttext=hi there\n",
        )
        .unwrap();
        match load_manifest(&path, None) {
            Err(CorpusError::MalformedRecord { line: 1, reason }) => {
                assert!(reason.contains("audio"), "{reason}");
            }
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        save_manifest(&path, &[utt("u1"), utt("u1")]).unwrap();
        assert!(matches!(
            load_manifest(&path, None),
            Err(CorpusError::DuplicateUttId { .. })
        ));
    }

    #[test]
    fn unknown_speaker_rejected_against_registry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        save_manifest(&path, &[utt("u1")]).unwrap();
        let mut reg = SpeakerRegistry::new();
        reg.insert("someone_else", "mr", None).unwrap();
        assert!(matches!(
            load_manifest(&path, Some(&reg)),
            Err(CorpusError::UnknownSpeaker { .. })
        ));
    }

    #[test]
    fn normalize_strips_braces() {
        assert_eq!(
            normalize_transcript("room {one two} open").unwrap(),
            "room one two open"
        );
        assert_eq!(
            normalize_transcript("no braces here").unwrap(),
            "no braces here"
        );
        assert_eq!(normalize_transcript("a{b}c").unwrap(), "abc");
    }

    #[test]
    fn normalize_rejects_digits_and_stray_braces() {
        match normalize_transcript("call 42") {
            Err(CorpusError::DigitOutsideBraces { position }) => assert_eq!(position, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            normalize_transcript("a } b"),
            Err(CorpusError::UnbalancedBraces { position: 2 })
        ));
        assert!(matches!(
            normalize_transcript("a { b"),
            Err(CorpusError::UnbalancedBraces { position: 2 })
        ));
        assert!(matches!(
            normalize_transcript("x {a {b} c}"),
            Err(CorpusError::UnbalancedBraces { .. })
        ));
        // digits hidden inside braces still violate the no-digit contract
        assert!(matches!(
            normalize_transcript("x {4 two}"),
            Err(CorpusError::DigitOutsideBraces { .. })
        ));
    }

    #[test]
    fn normalize_collapses_whitespace_and_is_idempotent() {
        let inputs = [
            "  a\tb \u{00a0} c  ",
            "room {one  two} open",
            "plain",
            "a{b}c d",
        ];
        for raw in inputs {
            let once = normalize_transcript(raw).unwrap();
            let twice = normalize_transcript(&once).unwrap();
            assert_eq!(once, twice, "not idempotent on {raw:?}");
            assert!(!once.contains('\t'));
            assert!(!once.contains("  "));
        }
        assert_eq!(normalize_transcript("  a\tb \u{00a0} c  ").unwrap(), "a b c");
    }

    #[test]
    fn duration_consistency_window() {
        let u = utt("u1"); // dur 2.5 at 16 kHz
        assert!(u.duration_consistent(40_000, 0.01));
        assert!(u.duration_consistent(40_100, 0.01));
        assert!(!u.duration_consistent(41_000, 0.01));
    }

    #[test]
    fn store_round_trips_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let store = FeatureStore::new(dir.path());
        let vq = vec![vec![1u32, 2], vec![3, 4], vec![5, 0]];
        store.write_vq("u1", &vq).unwrap();
        assert_eq!(store.read_vq("u1").unwrap(), vq);

        let aux = vec![[100.0, -5.5, 0.9], [0.0, -11.5, 0.0]];
        store.write_aux("u1", &aux).unwrap();
        let back = store.read_aux("u1").unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in aux.iter().zip(&back) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-4);
            }
        }

        let spk = vec![0.6, 0.8];
        store.write_spk("u1", &spk).unwrap();
        let got = store.read_spk("u1").unwrap();
        assert!((got[0] - 0.6).abs() < 1e-6 && (got[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn store_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let store = FeatureStore::new(dir.path());
        store.write_vq("u1", &[vec![1, 2]]).unwrap();
        // read the vq file as if it were aux
        std::fs::copy(store.file("u1", "vq.idx"), store.file("u1", "aux.f32")).unwrap();
        assert!(matches!(
            store.read_aux("u1"),
            Err(CorpusError::BadFeatureFile { .. })
        ));
    }
}
