use crate::config::{parse_bool, parse_value, ConfigError};
use crate::data::{Family, Player};

use super::ModelError;

/// Architecture hyperparameters. Together with `seed` they fully determine
/// every parameter shape and initial value.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub family: Family,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    /// Each decoder layer has three sub-layers: self-attention,
    /// cross-attention over the encoder output, feed-forward.
    pub n_decoder_layers: usize,
    pub ffn_dim: usize,
    /// Periodic components of each time embedding (width `k_time + 1`).
    pub k_time: usize,
    pub dropout: f64,
    pub use_decoder_mask: bool,
    /// Recurrent smoothing between the decoder and the output projection.
    pub use_smoother: bool,
    /// Express every coordinate input relative to the target player's last
    /// observed centroid and add it back to the outputs.
    pub anchor_relative: bool,
    /// Factor applied to relative coordinates on the way in and undone on
    /// the way out.
    pub relative_scale: f64,
    pub lstm_hidden: usize,
    pub enc_len_frames: usize,
    pub horizon_frames: usize,
    pub fps: f64,
    pub target_player: Player,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::for_family(Family::F4)
    }
}

impl ModelConfig {
    /// Default architecture for a family: 500 ms encoder window, 500 ms
    /// horizon at 60 fps, decoder mask on for F3 and F4.
    pub fn for_family(family: Family) -> Self {
        ModelConfig {
            family,
            d_model: 128,
            n_heads: 8,
            n_encoder_layers: 2,
            n_decoder_layers: 1,
            ffn_dim: 256,
            k_time: 15,
            dropout: 0.1,
            use_decoder_mask: family.uses_decoder_mask(),
            use_smoother: true,
            anchor_relative: true,
            relative_scale: 10.0,
            lstm_hidden: 128,
            enc_len_frames: 30,
            horizon_frames: 30,
            fps: 60.0,
            target_player: Player::One,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        for (name, v) in [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_encoder_layers", self.n_encoder_layers),
            ("n_decoder_layers", self.n_decoder_layers),
            ("ffn_dim", self.ffn_dim),
            ("k_time", self.k_time),
            ("lstm_hidden", self.lstm_hidden),
            ("enc_len_frames", self.enc_len_frames),
            ("horizon_frames", self.horizon_frames),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        if !(self.relative_scale > 0.0 && self.relative_scale.is_finite()) {
            return bad(format!("relative_scale {} must be positive", self.relative_scale));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Width of encoder rows after the time embedding is attached.
    pub fn encoder_input_dim(&self) -> usize {
        self.family.feature_dim() + self.k_time + 1
    }

    /// Width of decoder rows: a centroid plus its time embedding.
    pub fn decoder_input_dim(&self) -> usize {
        2 + self.k_time + 1
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("family", self.family.to_string()),
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("n_encoder_layers", self.n_encoder_layers.to_string()),
            ("n_decoder_layers", self.n_decoder_layers.to_string()),
            ("ffn_dim", self.ffn_dim.to_string()),
            ("k_time", self.k_time.to_string()),
            ("dropout", self.dropout.to_string()),
            ("use_decoder_mask", self.use_decoder_mask.to_string()),
            ("use_smoother", self.use_smoother.to_string()),
            ("anchor_relative", self.anchor_relative.to_string()),
            ("relative_scale", self.relative_scale.to_string()),
            ("lstm_hidden", self.lstm_hidden.to_string()),
            ("enc_len_frames", self.enc_len_frames.to_string()),
            ("horizon_frames", self.horizon_frames.to_string()),
            ("fps", self.fps.to_string()),
            ("target_player", self.target_player.number().to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Sets one field by name. Returns `Ok(false)` for keys this type does
    /// not own. Setting `family` also resets `use_decoder_mask` to the
    /// family default; a later explicit `use_decoder_mask` wins.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "family" => {
                self.family = value.parse().map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                })?;
                self.use_decoder_mask = self.family.uses_decoder_mask();
            }
            "d_model" => self.d_model = parse_value(key, value)?,
            "n_heads" => self.n_heads = parse_value(key, value)?,
            "n_encoder_layers" => self.n_encoder_layers = parse_value(key, value)?,
            "n_decoder_layers" => self.n_decoder_layers = parse_value(key, value)?,
            "ffn_dim" => self.ffn_dim = parse_value(key, value)?,
            "k_time" => self.k_time = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "use_decoder_mask" => self.use_decoder_mask = parse_bool(key, value)?,
            "use_smoother" => self.use_smoother = parse_bool(key, value)?,
            "anchor_relative" => self.anchor_relative = parse_bool(key, value)?,
            "relative_scale" => self.relative_scale = parse_value(key, value)?,
            "lstm_hidden" => self.lstm_hidden = parse_value(key, value)?,
            "enc_len_frames" => self.enc_len_frames = parse_value(key, value)?,
            "horizon_frames" => self.horizon_frames = parse_value(key, value)?,
            "fps" => self.fps = parse_value(key, value)?,
            "target_player" => {
                let n: u8 = parse_value(key, value)?;
                self.target_player = Player::from_number(n).map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                })?;
            }
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
