//! Pipeline configuration: a flat `key = value` text format with one
//! `[section]` per pipeline stage, parsed without any external dependency.
//! `#` starts a comment. Unknown keys are rejected so typos surface early.
//!
//! The `VQTTS_CONFIG` environment variable supplies the config path when the
//! CLI is not given one explicitly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("[{section}] {key}: {reason}")]
    BadValue {
        section: String,
        key: String,
        reason: String,
    },
    #[error("unknown key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathsConfig {
    pub corpus_root: PathBuf,
    pub manifest: PathBuf,
    pub registry: PathBuf,
    pub hyp_dir: PathBuf,
    pub store: PathBuf,
    pub ckpt: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub hop: usize,
    pub win: usize,
}

impl AudioConfig {
    pub fn hop_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelSectionConfig {
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentConfig {
    pub min_sil_frames: usize,
    pub em_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub budget1_s: f64,
    pub budget2_s: f64,
    pub cer_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub blocks: usize,
    pub width: usize,
    pub heads: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub threshold: f64,
    pub readout: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerConfig {
    pub groups: usize,
    pub codebook: usize,
    pub kmeans_iters: usize,
    pub proj_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmConfig {
    pub enc_blocks: usize,
    pub enc_width: usize,
    pub enc_heads: usize,
    pub dec_blocks: usize,
    pub dec_width: usize,
    pub dec_heads: usize,
    pub dur_width: usize,
    pub lambda_aux: f64,
    pub lambda_dur: f64,
    pub lr: f64,
    pub batch: usize,
    pub max_steps: usize,
    pub detach_duration: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocoderSectionConfig {
    pub embed_width: usize,
    pub aux_width: usize,
    pub fe_blocks: usize,
    pub fe_width: usize,
    pub fe_kernel: usize,
    pub rates: Vec<usize>,
    pub base_channels: usize,
    pub mode: String,
    pub lr: f64,
    pub batch: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub audio: AudioConfig,
    pub mel: MelSectionConfig,
    pub alignment: AlignmentConfig,
    pub selection: SelectionConfig,
    pub frontend: FrontendConfig,
    pub quantizer: QuantizerConfig,
    pub am: AmConfig,
    pub vocoder: VocoderSectionConfig,
    pub run: RunConfig,
    /// The raw config text, echoed into checkpoints and markers.
    pub source_text: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig {
                corpus_root: PathBuf::from("corpus"),
                manifest: PathBuf::from("corpus/manifest.tsv"),
                registry: PathBuf::from("corpus/speakers.tsv"),
                hyp_dir: PathBuf::from("corpus/hyp"),
                store: PathBuf::from("store"),
                ckpt: PathBuf::from("ckpt"),
                out: PathBuf::from("out"),
            },
            audio: AudioConfig {
                sample_rate: 16000,
                hop: 160,
                win: 400,
            },
            mel: MelSectionConfig { channels: 40 },
            alignment: AlignmentConfig {
                min_sil_frames: 3,
                em_iters: 4,
            },
            selection: SelectionConfig {
                budget1_s: 36000.0,
                budget2_s: 18000.0,
                cer_weight: 1.0,
            },
            frontend: FrontendConfig {
                blocks: 2,
                width: 128,
                heads: 2,
                epochs: 30,
                lr: 1e-3,
                batch: 16,
                threshold: 0.5,
                readout: "prev".to_string(),
            },
            quantizer: QuantizerConfig {
                groups: 2,
                codebook: 320,
                kmeans_iters: 10,
                proj_dim: 16,
            },
            am: AmConfig {
                enc_blocks: 4,
                enc_width: 256,
                enc_heads: 4,
                dec_blocks: 4,
                dec_width: 256,
                dec_heads: 4,
                dur_width: 128,
                lambda_aux: 1.0,
                lambda_dur: 1.0,
                lr: 1e-3,
                batch: 8,
                max_steps: 200,
                detach_duration: true,
            },
            vocoder: VocoderSectionConfig {
                embed_width: 64,
                aux_width: 16,
                fe_blocks: 4,
                fe_width: 128,
                fe_kernel: 5,
                rates: vec![5, 4, 4, 2],
                base_channels: 64,
                mode: "lite".to_string(),
                lr: 2e-4,
                batch: 4,
                max_steps: 300,
            },
            run: RunConfig {
                seed: 17,
                workers: 0,
            },
            source_text: String::new(),
        }
    }
}

type Raw = BTreeMap<(String, String), (String, usize)>;

fn parse_raw(text: &str) -> Result<Raw, ConfigError> {
    let mut section = String::new();
    let mut out = Raw::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                reason: "unterminated section header".to_string(),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: i + 1,
            reason: format!("expected key = value, got {line:?}"),
        })?;
        let key = (section.clone(), k.trim().to_string());
        if out.insert(key, (v.trim().to_string(), i + 1)).is_some() {
            return Err(ConfigError::Parse {
                line: i + 1,
                reason: format!("duplicate key {}", k.trim()),
            });
        }
    }
    Ok(out)
}

struct Reader {
    raw: Raw,
}

impl Reader {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.raw
            .remove(&(section.to_string(), key.to_string()))
            .map(|(v, _)| v)
    }

    fn parse<T: std::str::FromStr>(
        &mut self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                section: section.to_string(),
                key: key.to_string(),
                reason: format!("cannot parse {v:?}"),
            }),
        }
    }

    fn path(&mut self, section: &str, key: &str, default: PathBuf) -> PathBuf {
        self.take(section, key).map(PathBuf::from).unwrap_or(default)
    }

    fn leftover(&self) -> Option<(&String, &String)> {
        self.raw.keys().next().map(|(s, k)| (s, k))
    }
}

impl PipelineConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut r = Reader {
            raw: parse_raw(text)?,
        };
        let d = PipelineConfig::default();
        let cfg = PipelineConfig {
            paths: PathsConfig {
                corpus_root: r.path("paths", "corpus_root", d.paths.corpus_root),
                manifest: r.path("paths", "manifest", d.paths.manifest),
                registry: r.path("paths", "registry", d.paths.registry),
                hyp_dir: r.path("paths", "hyp_dir", d.paths.hyp_dir),
                store: r.path("paths", "store", d.paths.store),
                ckpt: r.path("paths", "ckpt", d.paths.ckpt),
                out: r.path("paths", "out", d.paths.out),
            },
            audio: AudioConfig {
                sample_rate: r.parse("audio", "sample_rate", d.audio.sample_rate)?,
                hop: r.parse("audio", "hop", d.audio.hop)?,
                win: r.parse("audio", "win", d.audio.win)?,
            },
            mel: MelSectionConfig {
                channels: r.parse("mel", "channels", d.mel.channels)?,
            },
            alignment: AlignmentConfig {
                min_sil_frames: r.parse("alignment", "min_sil_frames", d.alignment.min_sil_frames)?,
                em_iters: r.parse("alignment", "em_iters", d.alignment.em_iters)?,
            },
            selection: SelectionConfig {
                budget1_s: r.parse("selection", "budget1_s", d.selection.budget1_s)?,
                budget2_s: r.parse("selection", "budget2_s", d.selection.budget2_s)?,
                cer_weight: r.parse("selection", "cer_weight", d.selection.cer_weight)?,
            },
            frontend: FrontendConfig {
                blocks: r.parse("frontend", "blocks", d.frontend.blocks)?,
                width: r.parse("frontend", "width", d.frontend.width)?,
                heads: r.parse("frontend", "heads", d.frontend.heads)?,
                epochs: r.parse("frontend", "epochs", d.frontend.epochs)?,
                lr: r.parse("frontend", "lr", d.frontend.lr)?,
                batch: r.parse("frontend", "batch", d.frontend.batch)?,
                threshold: r.parse("frontend", "threshold", d.frontend.threshold)?,
                readout: r.parse("frontend", "readout", d.frontend.readout)?,
            },
            quantizer: QuantizerConfig {
                groups: r.parse("quantizer", "groups", d.quantizer.groups)?,
                codebook: r.parse("quantizer", "codebook", d.quantizer.codebook)?,
                kmeans_iters: r.parse("quantizer", "kmeans_iters", d.quantizer.kmeans_iters)?,
                proj_dim: r.parse("quantizer", "proj_dim", d.quantizer.proj_dim)?,
            },
            am: AmConfig {
                enc_blocks: r.parse("am", "enc_blocks", d.am.enc_blocks)?,
                enc_width: r.parse("am", "enc_width", d.am.enc_width)?,
                enc_heads: r.parse("am", "enc_heads", d.am.enc_heads)?,
                dec_blocks: r.parse("am", "dec_blocks", d.am.dec_blocks)?,
                dec_width: r.parse("am", "dec_width", d.am.dec_width)?,
                dec_heads: r.parse("am", "dec_heads", d.am.dec_heads)?,
                dur_width: r.parse("am", "dur_width", d.am.dur_width)?,
                lambda_aux: r.parse("am", "lambda_aux", d.am.lambda_aux)?,
                lambda_dur: r.parse("am", "lambda_dur", d.am.lambda_dur)?,
                lr: r.parse("am", "lr", d.am.lr)?,
                batch: r.parse("am", "batch", d.am.batch)?,
                max_steps: r.parse("am", "max_steps", d.am.max_steps)?,
                detach_duration: r.parse("am", "detach_duration", d.am.detach_duration)?,
            },
            vocoder: VocoderSectionConfig {
                embed_width: r.parse("vocoder", "embed_width", d.vocoder.embed_width)?,
                aux_width: r.parse("vocoder", "aux_width", d.vocoder.aux_width)?,
                fe_blocks: r.parse("vocoder", "fe_blocks", d.vocoder.fe_blocks)?,
                fe_width: r.parse("vocoder", "fe_width", d.vocoder.fe_width)?,
                fe_kernel: r.parse("vocoder", "fe_kernel", d.vocoder.fe_kernel)?,
                rates: match r.take("vocoder", "rates") {
                    None => d.vocoder.rates,
                    Some(v) => v
                        .split(',')
                        .map(|s| {
                            s.trim().parse().map_err(|_| ConfigError::BadValue {
                                section: "vocoder".to_string(),
                                key: "rates".to_string(),
                                reason: format!("bad rate {s:?}"),
                            })
                        })
                        .collect::<Result<_, _>>()?,
                },
                base_channels: r.parse("vocoder", "base_channels", d.vocoder.base_channels)?,
                mode: r.parse("vocoder", "mode", d.vocoder.mode)?,
                lr: r.parse("vocoder", "lr", d.vocoder.lr)?,
                batch: r.parse("vocoder", "batch", d.vocoder.batch)?,
                max_steps: r.parse("vocoder", "max_steps", d.vocoder.max_steps)?,
            },
            run: RunConfig {
                seed: r.parse("run", "seed", d.run.seed)?,
                workers: r.parse("run", "workers", d.run.workers)?,
            },
            source_text: text.to_string(),
        };
        if let Some((s, k)) = r.leftover() {
            return Err(ConfigError::UnknownKey {
                section: s.clone(),
                key: k.clone(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = Self::from_text(&text)?;
        // paths are relative to the config file's directory
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.paths.corpus_root);
        fix(&mut self.paths.manifest);
        fix(&mut self.paths.registry);
        fix(&mut self.paths.hyp_dir);
        fix(&mut self.paths.store);
        fix(&mut self.paths.ckpt);
        fix(&mut self.paths.out);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::Invalid(m));
        if self.audio.sample_rate == 0 || self.audio.hop == 0 || self.audio.win == 0 {
            return err("audio: sample_rate, hop, win must be positive".to_string());
        }
        if !(self.selection.budget2_s > 0.0) || self.selection.budget2_s > self.selection.budget1_s
        {
            return err(format!(
                "selection: budgets must satisfy 0 < budget2_s <= budget1_s, got {} and {}",
                self.selection.budget1_s, self.selection.budget2_s
            ));
        }
        let hop_product: usize = self.vocoder.rates.iter().product();
        if hop_product != self.audio.hop {
            return err(format!(
                "vocoder: upsample rates {:?} multiply to {hop_product}, audio hop is {}",
                self.vocoder.rates, self.audio.hop
            ));
        }
        if self.quantizer.codebook < 2 || self.quantizer.groups == 0 {
            return err("quantizer: need groups >= 1 and codebook >= 2".to_string());
        }
        if self.alignment.min_sil_frames == 0 {
            return err("alignment: min_sil_frames must be >= 1".to_string());
        }
        if self.frontend.readout != "prev" && self.frontend.readout != "next" {
            return err(format!(
                "frontend: readout must be prev or next, got {:?}",
                self.frontend.readout
            ));
        }
        if self.vocoder.mode != "lite" && self.vocoder.mode != "adversarial" {
            return err(format!(
                "vocoder: mode must be lite or adversarial, got {:?}",
                self.vocoder.mode
            ));
        }
        Ok(())
    }
}
