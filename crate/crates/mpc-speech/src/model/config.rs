//! Model configuration and the character vocabulary.

use std::collections::BTreeMap;

use super::ModelError;

/// Transformer encoder shape. `downsample_after` lists the block positions
/// (1-based) after which fine-tuning halves the time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub num_blocks: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub num_heads: usize,
    pub downsample_after: Vec<usize>,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |d: String| Err(ModelError::Config(d));
        if self.d_model == 0 || self.num_heads == 0 || self.num_blocks == 0 || self.d_ff == 0 {
            return bad("encoder dimensions must be positive".into());
        }
        if self.d_model % self.num_heads != 0 {
            return bad(format!(
                "d_model {} not divisible by num_heads {}",
                self.d_model, self.num_heads
            ));
        }
        let mut prev = 0;
        for &i in &self.downsample_after {
            if i == 0 || i >= self.num_blocks {
                return bad(format!(
                    "downsample position {i} out of range (need 1 <= i < {})",
                    self.num_blocks
                ));
            }
            if i <= prev {
                return bad("downsample positions must be strictly increasing".into());
            }
            prev = i;
        }
        Ok(())
    }

    /// Fine-tune output length: the time axis floor-halves at each
    /// downsample position.
    pub fn finetune_output_len(&self, t: usize) -> usize {
        let mut len = t;
        for _ in &self.downsample_after {
            len /= 2;
        }
        len
    }
}

/// Full model shape shared between pre-training and fine-tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d_mel: usize,
    /// Pre-training frame stacking factor (the eight-fold downsample).
    pub stack_factor: usize,
    pub encoder: EncoderConfig,
    pub decoder_blocks: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// The configuration the paper trains: e = 12, d = 6, d_model = 256,
    /// d_ff = 2048, 4 heads, eight-fold downsampling.
    pub fn paper() -> Self {
        ModelConfig {
            d_mel: 40,
            stack_factor: 8,
            encoder: EncoderConfig {
                num_blocks: 12,
                d_model: 256,
                d_ff: 2048,
                num_heads: 4,
                downsample_after: vec![3, 6, 9],
            },
            decoder_blocks: 6,
            dropout: 0.0,
        }
    }

    /// Desk-scale profile every experiment and acceptance property runs on.
    pub fn toy() -> Self {
        ModelConfig {
            d_mel: 40,
            stack_factor: 8,
            encoder: EncoderConfig {
                num_blocks: 2,
                d_model: 32,
                d_ff: 64,
                num_heads: 2,
                downsample_after: vec![1],
            },
            decoder_blocks: 1,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_mel == 0 || self.stack_factor == 0 || self.decoder_blocks == 0 {
            return Err(ModelError::Config("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        self.encoder.validate()
    }

    /// Encoder input width during pre-training (stacked frames).
    pub fn pretrain_input_dim(&self) -> usize {
        self.d_mel * self.stack_factor
    }

    /// Serialize the fields that a checkpoint must carry to rebuild the model.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        kv.insert("d_mel".into(), self.d_mel.to_string());
        kv.insert("stack_factor".into(), self.stack_factor.to_string());
        kv.insert("num_blocks".into(), self.encoder.num_blocks.to_string());
        kv.insert("d_model".into(), self.encoder.d_model.to_string());
        kv.insert("d_ff".into(), self.encoder.d_ff.to_string());
        kv.insert("num_heads".into(), self.encoder.num_heads.to_string());
        kv.insert(
            "downsample_after".into(),
            self.encoder
                .downsample_after
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("decoder_blocks".into(), self.decoder_blocks.to_string());
        kv.insert("dropout".into(), self.dropout.to_string());
        kv
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self, ModelError> {
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| ModelError::Config(format!("checkpoint config missing key {k}")))
        };
        let parse = |k: &str| -> Result<usize, ModelError> {
            get(k)?.parse().map_err(|_| ModelError::Config(format!("bad value for {k}")))
        };
        let downsample_after = {
            let raw = get("downsample_after")?;
            if raw.is_empty() {
                vec![]
            } else {
                raw.split(',')
                    .map(|s| s.parse().map_err(|_| ModelError::Config("bad downsample_after".into())))
                    .collect::<Result<Vec<usize>, _>>()?
            }
        };
        let cfg = ModelConfig {
            d_mel: parse("d_mel")?,
            stack_factor: parse("stack_factor")?,
            encoder: EncoderConfig {
                num_blocks: parse("num_blocks")?,
                d_model: parse("d_model")?,
                d_ff: parse("d_ff")?,
                num_heads: parse("num_heads")?,
                downsample_after,
            },
            decoder_blocks: parse("decoder_blocks")?,
            dropout: get("dropout")?
                .parse()
                .map_err(|_| ModelError::Config("bad dropout".into()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Character vocabulary with the three reserved symbols every model head
/// shares: CTC blank, decoder start, decoder end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
}

impl Vocab {
    pub const BLANK: usize = 0;
    pub const SOS: usize = 1;
    pub const EOS: usize = 2;
    const RESERVED: usize = 3;

    /// Build from a character set; characters are sorted and deduplicated.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut chars: Vec<char> = chars.into_iter().collect();
        chars.sort_unstable();
        chars.dedup();
        Vocab { chars }
    }

    pub fn from_transcripts<S: AsRef<str>>(transcripts: impl IntoIterator<Item = S>) -> Self {
        Self::from_chars(transcripts.into_iter().flat_map(|t| t.as_ref().chars().collect::<Vec<_>>()))
    }

    pub fn size(&self) -> usize {
        self.chars.len() + Self::RESERVED
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn char_to_id(&self, c: char) -> Option<usize> {
        self.chars.binary_search(&c).ok().map(|i| i + Self::RESERVED)
    }

    pub fn id_to_char(&self, id: usize) -> Option<char> {
        id.checked_sub(Self::RESERVED).and_then(|i| self.chars.get(i).copied())
    }

    /// Encode a transcript; any character outside the vocabulary is an error.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>, ModelError> {
        text.chars()
            .map(|c| self.char_to_id(c).ok_or(ModelError::OovCharacter { character: c }))
            .collect()
    }

    /// Decode character ids, skipping any reserved symbols.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&id| self.id_to_char(id)).collect()
    }

    /// Stable text form for checkpoint config blocks: comma-separated
    /// Unicode code points.
    pub fn to_codepoints(&self) -> String {
        self.chars.iter().map(|c| (*c as u32).to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn from_codepoints(s: &str) -> Result<Self, ModelError> {
        if s.is_empty() {
            return Ok(Vocab { chars: vec![] });
        }
        let chars = s
            .split(',')
            .map(|p| {
                p.parse::<u32>()
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| ModelError::Config(format!("bad vocab codepoint {p:?}")))
            })
            .collect::<Result<Vec<char>, _>>()?;
        Ok(Self::from_chars(chars))
    }
}
