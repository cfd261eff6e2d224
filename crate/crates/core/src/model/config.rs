use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the refiner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinerConfig {
    /// Input window length; odd so a center frame exists.
    pub frames: usize,
    pub joints: usize,
    /// Append the per-joint visibility label as a fourth input channel.
    pub use_visibility: bool,
    pub hidden: usize,
    pub layers: usize,
    pub temporal_kernel: usize,
    pub use_nonlocal: bool,
    /// Predict an offset added to the input center frame.
    pub residual_output: bool,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            frames: 3,
            joints: 17,
            use_visibility: false,
            hidden: 64,
            layers: 3,
            temporal_kernel: 3,
            use_nonlocal: true,
            residual_output: true,
        }
    }
}

impl RefinerConfig {
    pub fn in_channels(&self) -> usize {
        if self.use_visibility {
            4
        } else {
            3
        }
    }

    pub fn center(&self) -> usize {
        self.frames / 2
    }

    pub fn nonlocal_width(&self) -> usize {
        (self.hidden / 2).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames % 2 == 0 {
            return bad(format!("frames must be odd, got {}", self.frames));
        }
        if self.joints == 0 {
            return bad("joints must be positive".into());
        }
        if self.layers == 0 {
            return bad("at least one ST-GCN layer is required".into());
        }
        if self.hidden < self.in_channels() {
            return bad(format!("hidden {} < input channels {}", self.hidden, self.in_channels()));
        }
        if self.temporal_kernel % 2 == 0 {
            return bad(format!("temporal kernel must be odd, got {}", self.temporal_kernel));
        }
        Ok(())
    }

    /// `key=value` lines echoing every field.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("frames".into(), self.frames.to_string()),
            ("joints".into(), self.joints.to_string()),
            ("use_visibility".into(), self.use_visibility.to_string()),
            ("hidden".into(), self.hidden.to_string()),
            ("layers".into(), self.layers.to_string()),
            ("temporal_kernel".into(), self.temporal_kernel.to_string()),
            ("use_nonlocal".into(), self.use_nonlocal.to_string()),
            ("residual_output".into(), self.residual_output.to_string()),
        ]
    }

    /// Apply one `key=value` setting; returns false for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
        };
        let parse_bool = |v: &str| match v {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
        };
        match key {
            "frames" => self.frames = parse_usize(value)?,
            "joints" => self.joints = parse_usize(value)?,
            "use_visibility" => self.use_visibility = parse_bool(value)?,
            "hidden" => self.hidden = parse_usize(value)?,
            "layers" => self.layers = parse_usize(value)?,
            "temporal_kernel" => self.temporal_kernel = parse_usize(value)?,
            "use_nonlocal" => self.use_nonlocal = parse_bool(value)?,
            "residual_output" => self.residual_output = parse_bool(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
